//! Network configuration: a line-based layer list and its forward pass.
//!
//! ```text
//! # example network
//! input h=16 w=16 ch=1
//! conv filters=4 size=3 stride=1 padding=1 activation=sigmoid B=1.0 seed=11
//! maxpool size=2 stride=2
//! conv filters=6 size=3 stride=1 padding=0 activation=sigmoid B=1.0 seed=12
//! ncd criterion=0.4 compressor=bzip
//! dropout rate=0.5 seed=13
//! ```
//!
//! Conv weights come from `weights=<tensor.csv>` or are seeded. When the
//! optional `input` line is present, layer shapes are validated eagerly at
//! parse time, so an integrality violation fails before any data is run.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::compress::{Codec, Compressor};
use crate::convnet::{
    dropout_mask, max_pool, mean_pool, multimap_forward, Activation, ConvError, ConvLayerSpec,
    FeatureMap,
};
use crate::select::{layer_forward, SelectError, SelectionConfig, SelectionResult};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Conv(#[from] ConvError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("tensor file: {0}")]
    Tensor(#[from] crate::matio::MatIoError),
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvLayerSpec),
    MaxPool { window: usize, stride: usize },
    MeanPool { window: usize, stride: usize },
    Dropout { rate: f64, seed: u64 },
    NcdSelect(SelectionConfig),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::MaxPool { .. } => "maxpool",
            Layer::MeanPool { .. } => "meanpool",
            Layer::Dropout { .. } => "dropout",
            Layer::NcdSelect(_) => "ncd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub declared_input: Option<(usize, usize, usize)>,
}

fn parse_fields<'a>(
    rest: &'a str,
    line: usize,
) -> Result<HashMap<&'a str, &'a str>, NetError> {
    let mut map = HashMap::new();
    for tok in rest.split_whitespace() {
        let (key, value) = tok.split_once('=').ok_or_else(|| NetError::Parse {
            line,
            msg: format!("expected key=value, got {tok:?}"),
        })?;
        map.insert(key, value);
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(
    fields: &HashMap<&str, &str>,
    key: &str,
    line: usize,
) -> Result<T, NetError> {
    let raw = fields.get(key).ok_or_else(|| NetError::Parse {
        line,
        msg: format!("missing field {key}"),
    })?;
    raw.parse().map_err(|_| NetError::Parse {
        line,
        msg: format!("bad value for {key}: {raw:?}"),
    })
}

fn field_or<T: std::str::FromStr>(
    fields: &HashMap<&str, &str>,
    key: &str,
    default: T,
    line: usize,
) -> Result<T, NetError> {
    match fields.get(key) {
        None => Ok(default),
        Some(raw) => raw.parse().map_err(|_| NetError::Parse {
            line,
            msg: format!("bad value for {key}: {raw:?}"),
        }),
    }
}

impl Network {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Network, NetError> {
        let mut layers = Vec::new();
        let mut declared_input = None;
        // channel count flows through the layers so conv specs can be built
        // with the right filter depth; conv and ncd layers collapse it to 1
        let mut ch = 1usize;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (word, rest) = stripped.split_once(char::is_whitespace).unwrap_or((stripped, ""));
            let fields = parse_fields(rest, line)?;
            match word {
                "input" => {
                    let h: usize = field(&fields, "h", line)?;
                    let w: usize = field(&fields, "w", line)?;
                    let c: usize = field_or(&fields, "ch", 1, line)?;
                    declared_input = Some((h, w, c));
                    ch = c;
                }
                "conv" => {
                    let filters: usize = field(&fields, "filters", line)?;
                    let size: usize = field(&fields, "size", line)?;
                    let stride: usize = field_or(&fields, "stride", 1, line)?;
                    let padding: usize = field_or(&fields, "padding", 0, line)?;
                    let act_name: String =
                        field_or(&fields, "activation", "sigmoid".to_string(), line)?;
                    let slope: f64 = field_or(&fields, "B", 1.0, line)?;
                    let activation = match act_name.as_str() {
                        "sigmoid" => Activation::Sigmoid { slope },
                        "none" | "linear" => Activation::Linear,
                        other => {
                            return Err(NetError::Parse {
                                line,
                                msg: format!("unknown activation {other:?}"),
                            })
                        }
                    };
                    let spec = if let Some(path) = fields.get("weights") {
                        let full = base_dir.join(path);
                        let tensor = FeatureMap::read_csv(
                            std::io::BufReader::new(fs::File::open(&full)?),
                        )?;
                        if tensor.h() != size
                            || tensor.w() != size
                            || tensor.ch() != ch
                            || tensor.k() != filters
                        {
                            return Err(NetError::Parse {
                                line,
                                msg: format!(
                                    "weights {} are {}x{}x{}x{}, layer wants {size}x{size}x{ch}x{filters}",
                                    full.display(),
                                    tensor.h(),
                                    tensor.w(),
                                    tensor.ch(),
                                    tensor.k()
                                ),
                            });
                        }
                        // tensor columns are (m, n, c) per filter
                        let mut weights = vec![0.0; size * size * ch * filters];
                        for f in 0..filters {
                            for m in 0..size {
                                for n in 0..size {
                                    for c in 0..ch {
                                        weights[((m * size + n) * ch + c) * filters + f] =
                                            tensor.get(m, n, c, f);
                                    }
                                }
                            }
                        }
                        ConvLayerSpec::new(
                            size,
                            size,
                            ch,
                            filters,
                            weights,
                            vec![0.0; filters],
                            stride,
                            padding,
                            activation,
                        )?
                    } else {
                        let seed: u64 = field_or(&fields, "seed", 0, line)?;
                        ConvLayerSpec::seeded(
                            size, size, ch, filters, stride, padding, activation, seed,
                        )?
                    };
                    layers.push(Layer::Conv(spec));
                    ch = 1;
                }
                "maxpool" | "meanpool" => {
                    let window: usize = field(&fields, "size", line)?;
                    let stride: usize = field_or(&fields, "stride", window, line)?;
                    if word == "maxpool" {
                        layers.push(Layer::MaxPool { window, stride });
                    } else {
                        layers.push(Layer::MeanPool { window, stride });
                    }
                }
                "dropout" => {
                    let rate: f64 = field(&fields, "rate", line)?;
                    if !(0.0..1.0).contains(&rate) {
                        return Err(NetError::Parse {
                            line,
                            msg: format!("dropout rate {rate} outside [0, 1)"),
                        });
                    }
                    let seed: u64 = field_or(&fields, "seed", 0, line)?;
                    layers.push(Layer::Dropout { rate, seed });
                }
                "ncd" => {
                    let criterion: f64 = field_or(&fields, "criterion", 0.4, line)?;
                    let codec_name: String =
                        field_or(&fields, "compressor", "bzip".to_string(), line)?;
                    let codec: Codec = codec_name.parse().map_err(|e| NetError::Parse {
                        line,
                        msg: e,
                    })?;
                    layers.push(Layer::NcdSelect(SelectionConfig {
                        criterion,
                        compressor: Compressor::with_codec(codec),
                    }));
                }
                other => {
                    return Err(NetError::Parse {
                        line,
                        msg: format!("unknown layer type {other:?}"),
                    })
                }
            }
        }
        let net = Network {
            layers,
            declared_input,
        };
        if let Some((h, w, ch)) = net.declared_input {
            net.validate_shapes(h, w, ch)?;
        }
        Ok(net)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Network, NetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Network::parse(&text, base)
    }

    /// Walk the declared shapes through every layer; fails eagerly on
    /// integrality or channel violations. Returns the final (h, w).
    pub fn validate_shapes(&self, h: usize, w: usize, ch: usize) -> Result<(usize, usize), NetError> {
        let (mut h, mut w, mut ch) = (h, w, ch);
        for layer in &self.layers {
            match layer {
                Layer::Conv(spec) => {
                    if spec.ch() != ch {
                        return Err(NetError::Conv(ConvError::ShapeMismatch(format!(
                            "conv expects {} channels, input has {ch}",
                            spec.ch()
                        ))));
                    }
                    let (nh, nw) = spec.output_shape(h, w)?;
                    h = nh;
                    w = nw;
                    ch = 1;
                }
                Layer::MaxPool { window, stride } | Layer::MeanPool { window, stride } => {
                    h = crate::convnet::conv_output_size(h, *window, 0, *stride)?;
                    w = crate::convnet::conv_output_size(w, *window, 0, *stride)?;
                }
                Layer::Dropout { .. } | Layer::NcdSelect(_) => {}
            }
        }
        Ok((h, w))
    }

    /// Run the forward pass, returning every layer's output (so callers can
    /// dump or tap intermediate maps) plus any selection metadata per layer.
    pub fn forward(
        &self,
        input: FeatureMap,
        training: bool,
    ) -> Result<(Vec<FeatureMap>, Vec<Option<SelectionResult>>), NetError> {
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut selections = Vec::with_capacity(self.layers.len());
        let mut current = input;
        for layer in &self.layers {
            let (next, sel) = match layer {
                Layer::Conv(spec) => (multimap_forward(&current, spec)?, None),
                Layer::MaxPool { window, stride } => (max_pool(&current, *window, *stride)?, None),
                Layer::MeanPool { window, stride } => {
                    (mean_pool(&current, *window, *stride)?, None)
                }
                Layer::Dropout { rate, seed } => {
                    let masked = dropout_mask(current.values(), *rate, *seed, training)
                        .map_err(ConvError::from)?;
                    let mut map = current.clone();
                    map.values_mut().copy_from_slice(&masked);
                    (map, None)
                }
                Layer::NcdSelect(cfg) => {
                    // selection on the incoming map's per-filter columns
                    let columns = current.columns();
                    let selection = crate::select::select_features(&columns, cfg)?;
                    let kept: Vec<Vec<f64>> = selection
                        .kept
                        .iter()
                        .map(|&i| columns[i].clone())
                        .collect();
                    let map =
                        FeatureMap::from_columns(current.h(), current.w(), current.ch(), &kept)
                            .map_err(SelectError::from)?;
                    (map, Some(selection))
                }
            };
            outputs.push(next.clone());
            selections.push(sel);
            current = next;
        }
        Ok((outputs, selections))
    }

    /// Indices (into `layers`) of the convolutional layers.
    pub fn conv_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Conv(_)))
            .map(|(i, _)| i)
            .collect()
    }
}

/// The fused convolution-plus-selection layer applied directly.
pub fn ncd_conv_layer(
    input: &FeatureMap,
    spec: &ConvLayerSpec,
    cfg: &SelectionConfig,
) -> Result<(FeatureMap, SelectionResult), SelectError> {
    layer_forward(input, spec, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample network
input h=8 w=8 ch=1
conv filters=3 size=3 stride=1 padding=1 activation=sigmoid B=1.0 seed=7
maxpool size=2 stride=2
conv filters=4 size=3 stride=1 padding=0 activation=none seed=8
ncd criterion=0.4 compressor=bzip
dropout rate=0.5 seed=9
";

    #[test]
    fn parses_and_validates() {
        let net = Network::parse(SAMPLE, Path::new(".")).unwrap();
        assert_eq!(net.layers.len(), 5);
        assert_eq!(net.declared_input, Some((8, 8, 1)));
        assert_eq!(net.conv_layer_indices(), vec![0, 2]);
        let kinds: Vec<&str> = net.layers.iter().map(Layer::kind).collect();
        assert_eq!(kinds, vec!["conv", "maxpool", "conv", "ncd", "dropout"]);
    }

    #[test]
    fn eager_shape_failure() {
        let bad = "input h=5 w=5 ch=1\nconv filters=1 size=2 stride=2 seed=1\n";
        assert!(Network::parse(bad, Path::new(".")).is_err());
    }

    #[test]
    fn unknown_layer_rejected() {
        assert!(Network::parse("fc units=10\n", Path::new(".")).is_err());
        assert!(Network::parse("conv filters=x size=3\n", Path::new(".")).is_err());
        assert!(Network::parse("dropout rate=1.5\n", Path::new(".")).is_err());
    }

    #[test]
    fn forward_runs_and_respects_training_flag() {
        let net = Network::parse(SAMPLE, Path::new(".")).unwrap();
        let input = FeatureMap::single(
            8,
            8,
            1,
            (0..64).map(|i| (i % 9) as f64 / 8.0).collect(),
        )
        .unwrap();
        let (outputs, selections) = net.forward(input.clone(), false).unwrap();
        assert_eq!(outputs.len(), 5);
        // inference dropout is the identity
        assert_eq!(outputs[4], outputs[3]);
        // selection metadata only on the ncd layer
        assert!(selections[3].is_some());
        assert!(selections[0].is_none());
        // selection cannot grow the map
        assert!(outputs[3].k() <= outputs[2].k());

        let (training_out, _) = net.forward(input, true).unwrap();
        assert_ne!(training_out[4], training_out[3]);
    }
}
