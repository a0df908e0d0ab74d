//! Minimal deterministic CNN forward path: convolution (single-image and
//! multi-map forms), separable convolution, sigmoid/softmax, dropout
//! masking, and max/mean pooling with their gradients.
//!
//! There is no training loop here; weights are loaded from file or seeded.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matio::MatIoError;

#[derive(Debug, Error)]
pub enum ConvError {
    #[error(
        "non-integer output size: ({input} - {filter} + 2*{padding}) is not divisible by {stride}"
    )]
    NonIntegerOutput {
        input: usize,
        filter: usize,
        padding: usize,
        stride: usize,
    },
    #[error("filter of size {filter} exceeds padded input {input} + 2*{padding}")]
    FilterTooLarge {
        input: usize,
        filter: usize,
        padding: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dropout rate {0} outside [0, 1)")]
    BadRate(f64),
}

/// Spatial output size of a convolution: (W - F + 2P)/S + 1, which must be
/// an exact integer.
pub fn conv_output_size(
    input: usize,
    filter: usize,
    padding: usize,
    stride: usize,
) -> Result<usize, ConvError> {
    if input == 0 || filter == 0 || stride == 0 {
        return Err(ConvError::ShapeMismatch(
            "input, filter and stride must be at least 1".into(),
        ));
    }
    if filter > input + 2 * padding {
        return Err(ConvError::FilterTooLarge {
            input,
            filter,
            padding,
        });
    }
    let span = input + 2 * padding - filter;
    if span % stride != 0 {
        return Err(ConvError::NonIntegerOutput {
            input,
            filter,
            padding,
            stride,
        });
    }
    Ok(span / stride + 1)
}

/// 4-axis feature map: height x width x channels x filters.
///
/// Values are stored filter-major, so each filter's response is a
/// contiguous column of length h*w*ch in (y, x, c) row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    h: usize,
    w: usize,
    ch: usize,
    k: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(h: usize, w: usize, ch: usize, k: usize) -> Self {
        assert!(h >= 1 && w >= 1 && ch >= 1 && k >= 1, "dimensions must be >= 1");
        FeatureMap {
            h,
            w,
            ch,
            k,
            data: vec![0.0; h * w * ch * k],
        }
    }

    /// Single-map (k = 1) tensor from values in (y, x, c) order.
    pub fn single(h: usize, w: usize, ch: usize, values: Vec<f64>) -> Result<Self, ConvError> {
        if values.len() != h * w * ch {
            return Err(ConvError::ShapeMismatch(format!(
                "expected {} values for {h}x{w}x{ch}, got {}",
                h * w * ch,
                values.len()
            )));
        }
        Ok(FeatureMap {
            h,
            w,
            ch,
            k: 1,
            data: values,
        })
    }

    /// Single-channel, single-map tensor from a dense h x w grid.
    pub fn from_grid(grid: &[Vec<f64>]) -> Result<Self, ConvError> {
        let h = grid.len();
        let w = grid.first().map_or(0, Vec::len);
        if h == 0 || w == 0 || grid.iter().any(|r| r.len() != w) {
            return Err(ConvError::ShapeMismatch("ragged or empty grid".into()));
        }
        Ok(FeatureMap {
            h,
            w,
            ch: 1,
            k: 1,
            data: grid.iter().flatten().copied().collect(),
        })
    }

    /// Reassemble a map from per-filter columns (each of length h*w*ch).
    pub fn from_columns(
        h: usize,
        w: usize,
        ch: usize,
        columns: &[Vec<f64>],
    ) -> Result<Self, ConvError> {
        if columns.is_empty() {
            return Err(ConvError::ShapeMismatch("no columns".into()));
        }
        let len = h * w * ch;
        let mut data = Vec::with_capacity(len * columns.len());
        for col in columns {
            if col.len() != len {
                return Err(ConvError::ShapeMismatch(format!(
                    "column has {} values, expected {len}",
                    col.len()
                )));
            }
            data.extend_from_slice(col);
        }
        Ok(FeatureMap {
            h,
            w,
            ch,
            k: columns.len(),
            data,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn ch(&self) -> usize {
        self.ch
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn index(&self, y: usize, x: usize, c: usize, f: usize) -> usize {
        debug_assert!(y < self.h && x < self.w && c < self.ch && f < self.k);
        ((f * self.h + y) * self.w + x) * self.ch + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize, f: usize) -> f64 {
        self.data[self.index(y, x, c, f)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, f: usize, v: f64) {
        let i = self.index(y, x, c, f);
        self.data[i] = v;
    }

    /// Filter i's flattened response: length h*w*ch in (y, x, c) order.
    pub fn column(&self, f: usize) -> &[f64] {
        let len = self.h * self.w * self.ch;
        &self.data[f * len..(f + 1) * len]
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|f| self.column(f).to_vec()).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Write as CSV: a `# h=H w=W ch=C k=K` header, then h lines of
    /// w*ch*k values in (x, c, f) order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# h={} w={} ch={} k={}", self.h, self.w, self.ch, self.k)?;
        for y in 0..self.h {
            let mut row = Vec::with_capacity(self.w * self.ch * self.k);
            for x in 0..self.w {
                for c in 0..self.ch {
                    for f in 0..self.k {
                        row.push(format!("{:.6}", self.get(y, x, c, f)));
                    }
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, MatIoError> {
        let parse = |line: usize, msg: String| MatIoError::Parse { line, msg };
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse(1, "empty tensor file".into()))
            .and_then(|(i, l)| Ok((i, l?)))?;
        let mut dims = [0usize; 4];
        let names = ["h=", "w=", "ch=", "k="];
        let toks: Vec<&str> = header
            .trim()
            .strip_prefix('#')
            .unwrap_or("")
            .split_whitespace()
            .collect();
        if toks.len() != 4 {
            return Err(parse(1, "expected '# h=H w=W ch=C k=K' header".into()));
        }
        for (slot, (tok, name)) in dims.iter_mut().zip(toks.iter().zip(names)) {
            *slot = tok
                .strip_prefix(name)
                .and_then(|v| v.parse().ok())
                .filter(|&v: &usize| v >= 1)
                .ok_or_else(|| parse(1, format!("bad dimension token {tok:?}")))?;
        }
        let [h, w, ch, k] = dims;
        let mut map = FeatureMap::zeros(h, w, ch, k);
        let mut y = 0usize;
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if y >= h {
                return Err(parse(lineno, "more rows than the declared height".into()));
            }
            let vals: Vec<f64> = trimmed
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| parse(lineno, format!("bad number {:?}", t.trim())))
                })
                .collect::<Result<_, _>>()?;
            if vals.len() != w * ch * k {
                return Err(parse(
                    lineno,
                    format!("row has {} values, expected {}", vals.len(), w * ch * k),
                ));
            }
            let mut it = vals.into_iter();
            for x in 0..w {
                for c in 0..ch {
                    for f in 0..k {
                        map.set(y, x, c, f, it.next().unwrap());
                    }
                }
            }
            y += 1;
        }
        if y != h {
            return Err(parse(0, format!("got {y} rows, expected {h}")));
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Linear,
    Sigmoid { slope: f64 },
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Linear => x,
            Activation::Sigmoid { slope } => sigmoid(x, slope),
        }
    }
}

/// 1/(1 + e^(-B*x)).
pub fn sigmoid(x: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-slope * x).exp())
}

/// Probability vector over the input entries; shift-invariant and
/// argmax-preserving.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "softmax of an empty vector");
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Training: zero each element with probability `rate` under a seeded
/// generator and scale survivors by 1/(1-rate), so inference is the
/// identity.
pub fn dropout_mask(
    v: &[f64],
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<Vec<f64>, ConvError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(ConvError::BadRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(v.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (1.0 - rate);
    Ok(v.iter()
        .map(|&x| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                x * scale
            }
        })
        .collect())
}

/// Convolution filter bank: receptive field k1 x k2 over ch channels,
/// producing k output filters, with bias, stride, padding and activation.
#[derive(Debug, Clone)]
pub struct ConvLayerSpec {
    k1: usize,
    k2: usize,
    ch: usize,
    k: usize,
    weights: Vec<f64>, // (m, n, c, f) -> ((m*k2 + n)*ch + c)*k + f
    bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
}

impl ConvLayerSpec {
    pub fn new(
        k1: usize,
        k2: usize,
        ch: usize,
        k: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        stride: usize,
        padding: usize,
        activation: Activation,
    ) -> Result<Self, ConvError> {
        if k1 == 0 || k2 == 0 || ch == 0 || k == 0 || stride == 0 {
            return Err(ConvError::ShapeMismatch(
                "filter dims, filter count and stride must be at least 1".into(),
            ));
        }
        if weights.len() != k1 * k2 * ch * k {
            return Err(ConvError::ShapeMismatch(format!(
                "expected {} weights, got {}",
                k1 * k2 * ch * k,
                weights.len()
            )));
        }
        if bias.len() != k {
            return Err(ConvError::ShapeMismatch(format!(
                "expected {k} biases, got {}",
                bias.len()
            )));
        }
        Ok(ConvLayerSpec {
            k1,
            k2,
            ch,
            k,
            weights,
            bias,
            stride,
            padding,
            activation,
        })
    }

    /// Deterministic seeded weights, uniform in +-sqrt(3 / fan_in).
    pub fn seeded(
        k1: usize,
        k2: usize,
        ch: usize,
        k: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self, ConvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = (k1 * k2 * ch) as f64;
        let bound = (3.0 / fan_in).sqrt();
        let weights = (0..k1 * k2 * ch * k)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..k).map(|_| rng.random_range(-0.1..0.1)).collect();
        ConvLayerSpec::new(k1, k2, ch, k, weights, bias, stride, padding, activation)
    }

    pub fn k1(&self) -> usize {
        self.k1
    }
    pub fn k2(&self) -> usize {
        self.k2
    }
    pub fn ch(&self) -> usize {
        self.ch
    }
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn weight(&self, m: usize, n: usize, c: usize, f: usize) -> f64 {
        self.weights[((m * self.k2 + n) * self.ch + c) * self.k + f]
    }

    pub fn bias(&self, f: usize) -> f64 {
        self.bias[f]
    }

    /// Output spatial shape for an input, or the eager integrality error.
    pub fn output_shape(&self, h: usize, w: usize) -> Result<(usize, usize), ConvError> {
        Ok((
            conv_output_size(h, self.k1, self.padding, self.stride)?,
            conv_output_size(w, self.k2, self.padding, self.stride)?,
        ))
    }

    fn check_channels(&self, ch: usize) -> Result<(), ConvError> {
        if ch != self.ch {
            return Err(ConvError::ShapeMismatch(format!(
                "input has {ch} channels, filters expect {}",
                self.ch
            )));
        }
        Ok(())
    }

    /// Raw windowed triple sum plus bias for one output position of one
    /// input map, without activation.
    fn window_sum(&self, input: &FeatureMap, map: usize, f: usize, oy: usize, ox: usize) -> f64 {
        let mut acc = self.bias[f];
        for m in 0..self.k1 {
            let py = oy * self.stride + m;
            if py < self.padding || py >= input.h() + self.padding {
                continue; // zero padding
            }
            let y = py - self.padding;
            for n in 0..self.k2 {
                let px = ox * self.stride + n;
                if px < self.padding || px >= input.w() + self.padding {
                    continue;
                }
                let x = px - self.padding;
                for c in 0..self.ch {
                    acc += self.weight(m, n, c, f) * input.get(y, x, c, map);
                }
            }
        }
        acc
    }
}

/// Convolution of a single image (k = 1 input): output cell = activation of
/// bias plus the windowed triple sum, with zero padding.
pub fn conv2d_forward(input: &FeatureMap, spec: &ConvLayerSpec) -> Result<FeatureMap, ConvError> {
    if input.k() != 1 {
        return Err(ConvError::ShapeMismatch(format!(
            "conv2d_forward expects a single map, got k={}",
            input.k()
        )));
    }
    spec.check_channels(input.ch())?;
    let (oh, ow) = spec.output_shape(input.h(), input.w())?;
    let mut out = FeatureMap::zeros(oh, ow, 1, spec.k());
    for f in 0..spec.k() {
        for oy in 0..oh {
            for ox in 0..ow {
                let v = spec.activation.apply(spec.window_sum(input, 0, f, oy, ox));
                out.set(oy, ox, 0, f, v);
            }
        }
    }
    Ok(out)
}

/// Convolution of a multi-map input: output unit (j, m) sums the activated
/// per-map convolutions f(conv(map_i, filter_j) + b_j) over all input maps
/// i. Reduces to [`conv2d_forward`] when the input has a single map.
pub fn multimap_forward(input: &FeatureMap, spec: &ConvLayerSpec) -> Result<FeatureMap, ConvError> {
    spec.check_channels(input.ch())?;
    let (oh, ow) = spec.output_shape(input.h(), input.w())?;
    let mut out = FeatureMap::zeros(oh, ow, 1, spec.k());
    for f in 0..spec.k() {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for map in 0..input.k() {
                    acc += spec
                        .activation
                        .apply(spec.window_sum(input, map, f, oy, ox));
                }
                out.set(oy, ox, 0, f, acc);
            }
        }
    }
    Ok(out)
}

/// Separable convolution: the effective kernel is the outer product of the
/// column and row filters (replicated over channels). Two 1-D passes, so
/// the cost is O(WH(K1 + K2)) rather than O(WH K1 K2).
pub fn separable_conv2d(
    input: &FeatureMap,
    col_filter: &[f64],
    row_filter: &[f64],
    stride: usize,
    padding: usize,
    bias: f64,
    activation: Activation,
) -> Result<FeatureMap, ConvError> {
    if input.k() != 1 {
        return Err(ConvError::ShapeMismatch(format!(
            "separable_conv2d expects a single map, got k={}",
            input.k()
        )));
    }
    let k1 = col_filter.len();
    let k2 = row_filter.len();
    let oh = conv_output_size(input.h(), k1, padding, stride)?;
    let ow = conv_output_size(input.w(), k2, padding, stride)?;

    let ph = input.h() + 2 * padding;
    let pw = input.w() + 2 * padding;
    // channel-collapsed, zero-padded plane
    let mut plane = vec![0.0; ph * pw];
    for y in 0..input.h() {
        for x in 0..input.w() {
            let mut s = 0.0;
            for c in 0..input.ch() {
                s += input.get(y, x, c, 0);
            }
            plane[(y + padding) * pw + (x + padding)] = s;
        }
    }
    // horizontal pass with the row filter
    let hw = pw - k2 + 1;
    let mut horiz = vec![0.0; ph * hw];
    for y in 0..ph {
        for x in 0..hw {
            let mut s = 0.0;
            for (n, &rv) in row_filter.iter().enumerate() {
                s += rv * plane[y * pw + x + n];
            }
            horiz[y * hw + x] = s;
        }
    }
    // vertical pass with the column filter, subsampled by the stride
    let mut out = FeatureMap::zeros(oh, ow, 1, 1);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut s = bias;
            for (m, &cv) in col_filter.iter().enumerate() {
                s += cv * horiz[(oy * stride + m) * hw + ox * stride];
            }
            out.set(oy, ox, 0, 0, activation.apply(s));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Mean,
}

fn pool_shape(
    input: &FeatureMap,
    window: usize,
    stride: usize,
) -> Result<(usize, usize), ConvError> {
    Ok((
        conv_output_size(input.h(), window, 0, stride)?,
        conv_output_size(input.w(), window, 0, stride)?,
    ))
}

/// Max pooling over each window of every (channel, filter) plane.
pub fn max_pool(input: &FeatureMap, window: usize, stride: usize) -> Result<FeatureMap, ConvError> {
    pool(input, PoolKind::Max, window, stride)
}

/// Mean pooling over each window of every (channel, filter) plane.
pub fn mean_pool(
    input: &FeatureMap,
    window: usize,
    stride: usize,
) -> Result<FeatureMap, ConvError> {
    pool(input, PoolKind::Mean, window, stride)
}

pub fn pool(
    input: &FeatureMap,
    kind: PoolKind,
    window: usize,
    stride: usize,
) -> Result<FeatureMap, ConvError> {
    let (oh, ow) = pool_shape(input, window, stride)?;
    let mut out = FeatureMap::zeros(oh, ow, input.ch(), input.k());
    let area = (window * window) as f64;
    for f in 0..input.k() {
        for c in 0..input.ch() {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut sum = 0.0;
                    for m in 0..window {
                        for n in 0..window {
                            let v = input.get(oy * stride + m, ox * stride + n, c, f);
                            best = best.max(v);
                            sum += v;
                        }
                    }
                    let v = match kind {
                        PoolKind::Max => best,
                        PoolKind::Mean => sum / area,
                    };
                    out.set(oy, ox, c, f, v);
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of the pooling output sum with respect to each input cell.
///
/// Mean pooling spreads 1/m (m = window area) over every cell of each
/// window; max pooling puts 1 on the window's argmax, with ties broken to
/// the first cell in row-major order. Overlapping windows accumulate.
pub fn pool_gradient(
    input: &FeatureMap,
    kind: PoolKind,
    window: usize,
    stride: usize,
) -> Result<FeatureMap, ConvError> {
    let (oh, ow) = pool_shape(input, window, stride)?;
    let mut grad = FeatureMap::zeros(input.h(), input.w(), input.ch(), input.k());
    let share = 1.0 / (window * window) as f64;
    for f in 0..input.k() {
        for c in 0..input.ch() {
            for oy in 0..oh {
                for ox in 0..ow {
                    match kind {
                        PoolKind::Mean => {
                            for m in 0..window {
                                for n in 0..window {
                                    let (y, x) = (oy * stride + m, ox * stride + n);
                                    grad.set(y, x, c, f, grad.get(y, x, c, f) + share);
                                }
                            }
                        }
                        PoolKind::Max => {
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = (0, 0);
                            for m in 0..window {
                                for n in 0..window {
                                    let (y, x) = (oy * stride + m, ox * stride + n);
                                    let v = input.get(y, x, c, f);
                                    if v > best {
                                        best = v;
                                        arg = (y, x);
                                    }
                                }
                            }
                            grad.set(arg.0, arg.1, c, f, grad.get(arg.0, arg.1, c, f) + 1.0);
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}
