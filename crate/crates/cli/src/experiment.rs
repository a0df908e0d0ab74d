//! End-to-end experiment orchestration: ingest (or synthesize) a labeled
//! image set, preprocess and augment, run the network forward, extract
//! per-image features from a convolutional layer, select by compression
//! distance, train classifiers on the full versus the selected feature
//! set, and run the spectral pipeline on the distance matrix.
//!
//! The report is written even when a stage fails, with the failing stage
//! marked.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use ncdnet_core::classify::{
    accuracy, centroid_predict, centroid_train, hinge_predict, hinge_train, ClassifyError,
};
use ncdnet_core::compress::{Codec, Compressor};
use ncdnet_core::convnet::FeatureMap;
use ncdnet_core::dataset::{synthetic_textures, LabeledImages, SyntheticConfig};
use ncdnet_core::image::{augment, load_pgm, median_denoise, AugmentOp, GrayImage, ImageError};
use ncdnet_core::matio::write_square;
use ncdnet_core::ncd::NcdError;
use ncdnet_core::network::{Layer, NetError, Network};
use ncdnet_core::select::{select_features, SelectError, SelectionConfig, SelectionResult};
use ncdnet_core::spectral::{partition, spectral_bundle, SpectralError};

use crate::report::Report;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Ncd(#[from] NcdError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone)]
pub enum DatasetSource {
    Synthetic(SyntheticConfig),
    /// Directory with train/<class>/*.pgm and test/<class>/*.pgm.
    Dir(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLayer {
    Middle,
    Last,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub network: PathBuf,
    pub criterion: f64,
    pub codec: Codec,
    pub sigma: Option<f64>,
    pub partitions: usize,
    pub feature_layer: FeatureLayer,
    pub augment_ops: Vec<AugmentOp>,
    pub denoise_window: usize,
    pub epochs: usize,
    pub rate: f64,
    pub hinge_seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parse a key = value config file. Relative paths resolve against the
    /// config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ExpError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

        let mut fields = std::collections::HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (k, v) = stripped.split_once('=').ok_or_else(|| {
                ExpError::Config(format!("line {}: expected key = value", idx + 1))
            })?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }

        let get = |key: &str| fields.get(key).cloned();
        let parse_num = |key: &str, default: f64| -> Result<f64, ExpError> {
            match get(key) {
                None => Ok(default),
                Some(raw) => raw
                    .parse()
                    .map_err(|_| ExpError::Config(format!("bad value for {key}: {raw:?}"))),
            }
        };
        let parse_usize = |key: &str, default: usize| -> Result<usize, ExpError> {
            match get(key) {
                None => Ok(default),
                Some(raw) => raw
                    .parse()
                    .map_err(|_| ExpError::Config(format!("bad value for {key}: {raw:?}"))),
            }
        };

        let dataset = match get("dataset").as_deref() {
            None | Some("synthetic") => {
                let base_cfg = SyntheticConfig::default();
                DatasetSource::Synthetic(SyntheticConfig {
                    classes: parse_usize("classes", base_cfg.classes)?,
                    plain_per_class: parse_usize("plain_per_class", base_cfg.plain_per_class)?,
                    accent_per_class: parse_usize("accent_per_class", base_cfg.accent_per_class)?,
                    test_per_class: parse_usize("test_per_class", base_cfg.test_per_class)?,
                    size: parse_usize("image_size", base_cfg.size)?,
                    seed: parse_usize("seed", base_cfg.seed as usize)? as u64,
                    carrier_amplitude: parse_num(
                        "carrier_amplitude",
                        base_cfg.carrier_amplitude,
                    )?,
                    class_amplitude: parse_num("class_amplitude", base_cfg.class_amplitude)?,
                    phase_jitter: parse_num("phase_jitter", base_cfg.phase_jitter)?,
                    plain_noise: parse_num("plain_noise", base_cfg.plain_noise)?,
                    accent_noise: parse_num("accent_noise", base_cfg.accent_noise)?,
                })
            }
            Some(dir) => DatasetSource::Dir(base.join(dir)),
        };

        let network = base.join(
            get("network").ok_or_else(|| ExpError::Config("missing network path".into()))?,
        );
        let codec: Codec = get("compressor")
            .unwrap_or_else(|| "bzip".into())
            .parse()
            .map_err(ExpError::Config)?;
        let sigma = match get("sigma").as_deref() {
            None | Some("auto") => None,
            Some(raw) => Some(
                raw.parse()
                    .map_err(|_| ExpError::Config(format!("bad sigma {raw:?}")))?,
            ),
        };
        let feature_layer = match get("feature_layer").as_deref() {
            None | Some("middle") => FeatureLayer::Middle,
            Some("last") => FeatureLayer::Last,
            Some(other) => {
                return Err(ExpError::Config(format!(
                    "feature_layer must be middle or last, got {other:?}"
                )))
            }
        };
        let augment_ops = match get("augment").as_deref() {
            None | Some("none") | Some("") => Vec::new(),
            Some(raw) => raw
                .split(',')
                .map(|tok| tok.trim().parse::<AugmentOp>().map_err(ExpError::Config))
                .collect::<Result<_, _>>()?,
        };
        let out_dir = base.join(get("out_dir").unwrap_or_else(|| "results".into()));

        Ok(ExperimentConfig {
            dataset,
            network,
            criterion: parse_num("criterion", 0.4)?,
            codec,
            sigma,
            partitions: parse_usize("partitions", 5)?,
            feature_layer,
            augment_ops,
            denoise_window: parse_usize("denoise", 0)?,
            epochs: parse_usize("epochs", 40)?,
            rate: parse_num("rate", 0.05)?,
            hinge_seed: parse_usize("hinge_seed", 7)? as u64,
            out_dir,
        })
    }
}

fn load_labeled_dir(root: &Path) -> Result<(LabeledImages, LabeledImages), ExpError> {
    let load_split = |split: &str| -> Result<LabeledImages, ExpError> {
        let dir = root.join(split);
        let mut class_dirs: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| ExpError::Config(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        class_dirs.sort();
        if class_dirs.is_empty() {
            return Err(ExpError::Config(format!(
                "no class directories under {}",
                dir.display()
            )));
        }
        let mut items = Vec::new();
        for (label, class_dir) in class_dirs.iter().enumerate() {
            let mut files: Vec<PathBuf> = fs::read_dir(class_dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(ExpError::Config(format!(
                    "class directory {} holds no .pgm files",
                    class_dir.display()
                )));
            }
            for file in files {
                items.push((load_pgm(&file)?, label));
            }
        }
        Ok(LabeledImages {
            items,
            n_classes: class_dirs.len(),
        })
    };
    Ok((load_split("train")?, load_split("test")?))
}

fn image_to_map(img: &GrayImage) -> FeatureMap {
    FeatureMap::single(img.h(), img.w(), 1, img.to_unit_values()).expect("image dims are valid")
}

fn preprocess(set: &LabeledImages, window: usize) -> Result<LabeledImages, ExpError> {
    if window == 0 {
        return Ok(set.clone());
    }
    let items = set
        .items
        .iter()
        .map(|(img, label)| Ok((median_denoise(img, window)?, *label)))
        .collect::<Result<_, ExpError>>()?;
    Ok(LabeledImages {
        items,
        n_classes: set.n_classes,
    })
}

fn augment_set(set: &LabeledImages, ops: &[AugmentOp]) -> Result<LabeledImages, ExpError> {
    let mut items = set.items.clone();
    for op in ops {
        for (img, label) in &set.items {
            for out in augment(img, *op)? {
                items.push((out, *label));
            }
        }
    }
    Ok(LabeledImages {
        items,
        n_classes: set.n_classes,
    })
}

/// Per-image feature vector: the flattened output of the chosen conv layer.
fn extract_features(
    net: &Network,
    set: &LabeledImages,
    layer_index: usize,
) -> Result<Vec<(Vec<f64>, usize)>, ExpError> {
    let mut features = Vec::with_capacity(set.items.len());
    for (img, label) in &set.items {
        let (outputs, _) = net.forward(image_to_map(img), false)?;
        features.push((outputs[layer_index].values().to_vec(), *label));
    }
    Ok(features)
}

pub struct ExperimentOutput {
    pub report: Report,
    pub selection: Option<SelectionResult>,
}

/// Run every stage. Stage errors do not abort the function: they are
/// recorded in the report (which is always written to `out_dir`) and the
/// report's `failed_stage` marks where processing stopped. Only the final
/// report write itself can fail.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
    let mut report = Report::new();
    let mut selection_out = None;
    let outcome = run_stages(cfg, &mut report, &mut selection_out);
    if let Err((stage, err)) = &outcome {
        report.mark_failed(stage, err);
    }
    fs::create_dir_all(&cfg.out_dir)?;
    report.write(cfg.out_dir.join("report.txt"))?;
    Ok(ExperimentOutput {
        report,
        selection: selection_out,
    })
}

type StageResult = Result<(), (String, ExpError)>;

fn stage<T>(name: &str, r: Result<T, ExpError>) -> Result<T, (String, ExpError)> {
    r.map_err(|e| (name.to_string(), e))
}

fn run_stages(
    cfg: &ExperimentConfig,
    report: &mut Report,
    selection_out: &mut Option<SelectionResult>,
) -> StageResult {
    let t_total = Instant::now();

    // INGEST
    let t = Instant::now();
    let (train_raw, test_raw) = stage(
        "INGEST",
        match &cfg.dataset {
            DatasetSource::Synthetic(scfg) => Ok(synthetic_textures(scfg)),
            DatasetSource::Dir(dir) => load_labeled_dir(dir),
        },
    )?;
    let train_pre = stage("INGEST", preprocess(&train_raw, cfg.denoise_window))?;
    let test_pre = stage("INGEST", preprocess(&test_raw, cfg.denoise_window))?;
    let train = stage("INGEST", augment_set(&train_pre, &cfg.augment_ops))?;
    let (h, w) = (train.items[0].0.h(), train.items[0].0.w());
    report.put(
        "INGEST",
        "dataset",
        match &cfg.dataset {
            DatasetSource::Synthetic(s) => format!("synthetic seed={}", s.seed),
            DatasetSource::Dir(d) => d.display().to_string(),
        },
    );
    report.put("INGEST", "classes", train.n_classes);
    report.put("INGEST", "train_images", train.items.len());
    report.put("INGEST", "test_images", test_pre.items.len());
    report.put("INGEST", "image_size", format!("{h}x{w}"));
    let ops: Vec<String> = cfg.augment_ops.iter().map(|o| o.to_string()).collect();
    report.put(
        "INGEST",
        "augment_ops",
        if ops.is_empty() { "none".to_string() } else { ops.join(",") },
    );
    report.put("INGEST", "denoise_window", cfg.denoise_window);
    let ingest_ms = t.elapsed().as_secs_f64() * 1e3;

    // FORWARD
    let t = Instant::now();
    let net = stage("FORWARD", Network::load(&cfg.network).map_err(ExpError::from))?;
    if net.layers.iter().any(|l| matches!(l, Layer::NcdSelect(_))) {
        return Err((
            "FORWARD".into(),
            ExpError::Config(
                "experiment networks must not contain ncd layers: per-image feature \
                 lengths would differ (selection runs on the extracted features instead)"
                    .into(),
            ),
        ));
    }
    let conv_indices = net.conv_layer_indices();
    if conv_indices.is_empty() {
        return Err((
            "FORWARD".into(),
            ExpError::Config("experiment network has no conv layers".into()),
        ));
    }
    let layer_index = match cfg.feature_layer {
        FeatureLayer::Middle => conv_indices[conv_indices.len() / 2],
        FeatureLayer::Last => *conv_indices.last().unwrap(),
    };
    let train_features = stage("FORWARD", extract_features(&net, &train, layer_index))?;
    let test_features = stage("FORWARD", extract_features(&net, &test_pre, layer_index))?;
    report.put("FORWARD", "network", cfg.network.display());
    report.put("FORWARD", "layers", net.layers.len());
    report.put("FORWARD", "conv_layers", conv_indices.len());
    report.put("FORWARD", "feature_layer_index", layer_index);
    report.put("FORWARD", "feature_length", train_features[0].0.len());
    let forward_ms = t.elapsed().as_secs_f64() * 1e3;

    // SELECT
    let t = Instant::now();
    let columns: Vec<Vec<f64>> = train_features.iter().map(|(v, _)| v.clone()).collect();
    let sel_cfg = SelectionConfig {
        criterion: cfg.criterion,
        compressor: Compressor::with_codec(cfg.codec),
    };
    let selection = stage("SELECT", select_features(&columns, &sel_cfg).map_err(ExpError::from))?;
    report.put("SELECT", "criterion", cfg.criterion);
    report.put("SELECT", "criterion_used", format!("{:.5}", selection.criterion_used));
    report.put("SELECT", "fallback_applied", selection.fallback_applied);
    report.put("SELECT", "full_count", columns.len());
    report.put("SELECT", "selected_count", selection.kept.len());
    let select_ms = t.elapsed().as_secs_f64() * 1e3;

    stage("SELECT", write_artifacts(cfg, &selection))?;
    *selection_out = Some(selection.clone());

    // CLASSIFY
    let t = Instant::now();
    let n_classes = train.n_classes;
    let selected_features: Vec<(Vec<f64>, usize)> = selection
        .kept
        .iter()
        .map(|&i| train_features[i].clone())
        .collect();
    let test_truth: Vec<usize> = test_features.iter().map(|(_, l)| *l).collect();

    let evaluate = |model_features: &[(Vec<f64>, usize)]| -> Result<(f64, f64), ExpError> {
        let centroid = centroid_train(model_features, n_classes)?;
        let centroid_preds: Vec<usize> = test_features
            .iter()
            .map(|(v, _)| centroid_predict(&centroid, v))
            .collect();
        let hinge = hinge_train(model_features, n_classes, cfg.epochs, cfg.rate, cfg.hinge_seed)?;
        let hinge_preds: Vec<usize> = test_features
            .iter()
            .map(|(v, _)| hinge_predict(&hinge, v))
            .collect();
        Ok((
            accuracy(&centroid_preds, &test_truth),
            accuracy(&hinge_preds, &test_truth),
        ))
    };
    let (centroid_full, hinge_full) = stage("CLASSIFY", evaluate(&train_features))?;
    let (centroid_sel, hinge_sel) = stage("CLASSIFY", evaluate(&selected_features))?;
    report.put("CLASSIFY", "centroid_full_accuracy", format!("{centroid_full:.4}"));
    report.put("CLASSIFY", "centroid_selected_accuracy", format!("{centroid_sel:.4}"));
    report.put("CLASSIFY", "hinge_full_accuracy", format!("{hinge_full:.4}"));
    report.put("CLASSIFY", "hinge_selected_accuracy", format!("{hinge_sel:.4}"));
    let classify_ms = t.elapsed().as_secs_f64() * 1e3;

    // SPECTRAL
    let t = Instant::now();
    let bundle = stage(
        "SPECTRAL",
        spectral_bundle(&selection.matrix, cfg.sigma).map_err(ExpError::from),
    )?;
    let k = cfg.partitions.min(selection.matrix.n());
    let labels = stage(
        "SPECTRAL",
        partition(&bundle.embedding, k, 0).map_err(ExpError::from),
    )?;
    report.put("SPECTRAL", "sigma", format!("{:.5}", bundle.sigma));
    report.put("SPECTRAL", "partitions", k);
    let shown = bundle.eigenvalues.len().min(5);
    let eig: Vec<String> = bundle.eigenvalues[..shown]
        .iter()
        .map(|v| format!("{v:.5}"))
        .collect();
    report.put("SPECTRAL", "smallest_eigenvalues", eig.join(","));
    stage("SPECTRAL", write_embedding(cfg, &bundle.embedding, &labels))?;
    let spectral_ms = t.elapsed().as_secs_f64() * 1e3;

    // TIMING
    report.put("TIMING", "ingest_ms", format!("{ingest_ms:.1}"));
    report.put("TIMING", "forward_ms", format!("{forward_ms:.1}"));
    report.put("TIMING", "select_ms", format!("{select_ms:.1}"));
    report.put("TIMING", "classify_ms", format!("{classify_ms:.1}"));
    report.put("TIMING", "spectral_ms", format!("{spectral_ms:.1}"));
    report.put(
        "TIMING",
        "total_ms",
        format!("{:.1}", t_total.elapsed().as_secs_f64() * 1e3),
    );
    Ok(())
}

fn write_artifacts(cfg: &ExperimentConfig, selection: &SelectionResult) -> Result<(), ExpError> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut matrix_file = fs::File::create(cfg.out_dir.join("distance_matrix.csv"))?;
    write_square(&mut matrix_file, selection.matrix.n(), |i, j| {
        selection.matrix.get(i, j)
    })?;
    let kept: Vec<String> = selection.kept.iter().map(usize::to_string).collect();
    fs::write(
        cfg.out_dir.join("kept.csv"),
        format!(
            "# criterion_used={:.5} fallback_applied={}\n{}\n",
            selection.criterion_used,
            selection.fallback_applied,
            kept.join(",")
        ),
    )?;
    Ok(())
}

fn write_embedding(
    cfg: &ExperimentConfig,
    embedding: &[[f64; 2]],
    labels: &[usize],
) -> Result<(), ExpError> {
    let mut out = String::from("index,x,y,label\n");
    for (i, (p, l)) in embedding.iter().zip(labels).enumerate() {
        out.push_str(&format!("{i},{:.6},{:.6},{l}\n", p[0], p[1]));
    }
    fs::write(cfg.out_dir.join("embedding.csv"), out)?;
    Ok(())
}
