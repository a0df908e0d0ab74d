//! Complexity-scaling measurement: wall-clock the pairwise distance matrix
//! over growing item counts and the convolution forward pass over growing
//! spatial sizes, then fit power laws on the log-log points.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use ncdnet_core::compress::Compressor;
use ncdnet_core::convnet::{conv2d_forward, Activation, ConvLayerSpec, FeatureMap};
use ncdnet_core::ncd::distance_matrix;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least 3 sizes to fit a power law, got {0}")]
    TooFewSizes(usize),
    #[error("bench run failed: {0}")]
    Run(String),
}

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub exponent: f64,
    pub scale: f64,
    pub r2: f64,
}

/// Least-squares fit of t = scale * x^exponent on log-log axes.
pub fn fit_power_law(points: &[(f64, f64)]) -> FitResult {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let exponent = sxy / sxx;
    let intercept = mean_y - exponent * mean_x;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| {
            let pred = intercept + exponent * p.0;
            (p.1 - pred) * (p.1 - pred)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    FitResult {
        exponent,
        scale: intercept.exp(),
        r2,
    }
}

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    /// Item counts for the distance-matrix measurement.
    pub matrix_sizes: Vec<usize>,
    /// Spatial sizes (W = H) for the convolution measurement.
    pub conv_sizes: Vec<usize>,
    pub item_len: usize,
    pub compressor: Compressor,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            matrix_sizes: vec![16, 32, 64, 128],
            conv_sizes: vec![32, 64, 128],
            item_len: 256,
            compressor: Compressor::default(),
            seed: 9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub matrix_points: Vec<(usize, f64)>, // (n, seconds)
    pub matrix_fit: FitResult,
    pub conv_points: Vec<(usize, f64)>,
    pub conv_fit: FitResult,
}

impl ScalingReport {
    pub fn render(&self) -> String {
        let mut out = String::from("[TIMING] distance_matrix\n");
        for &(n, secs) in &self.matrix_points {
            out.push_str(&format!("n={n} ms={:.2}\n", secs * 1e3));
        }
        out.push_str(&format!(
            "fit: exponent={:.3} r2={:.4}\n\n[TIMING] conv2d_forward\n",
            self.matrix_fit.exponent, self.matrix_fit.r2
        ));
        for &(w, secs) in &self.conv_points {
            out.push_str(&format!("w={w} ms={:.2}\n", secs * 1e3));
        }
        out.push_str(&format!(
            "fit: exponent={:.3} r2={:.4}\n",
            self.conv_fit.exponent, self.conv_fit.r2
        ));
        out
    }
}

fn time_once<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let t = Instant::now();
    let out = f();
    (t.elapsed().as_secs_f64(), out)
}

/// Repeat short measurements until at least ~20 ms accumulate, and take
/// the mean; long runs are measured once.
fn time_stable(mut f: impl FnMut()) -> f64 {
    let (first, _) = time_once(&mut f);
    if first >= 0.02 {
        return first;
    }
    let reps = (0.02 / first.max(1e-7)).ceil().min(200.0) as usize;
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    t.elapsed().as_secs_f64() / reps as f64
}

pub fn scaling_report(cfg: &ScalingConfig) -> Result<ScalingReport, BenchError> {
    if cfg.matrix_sizes.len() < 3 {
        return Err(BenchError::TooFewSizes(cfg.matrix_sizes.len()));
    }
    if cfg.conv_sizes.len() < 3 {
        return Err(BenchError::TooFewSizes(cfg.conv_sizes.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // distance matrix over N items of fixed length
    let max_n = *cfg.matrix_sizes.iter().max().unwrap();
    let items: Vec<Vec<u8>> = (0..max_n)
        .map(|_| (0..cfg.item_len).map(|_| rng.random()).collect())
        .collect();
    let mut matrix_points = Vec::new();
    for &n in &cfg.matrix_sizes {
        let subset = &items[..n];
        let secs = time_stable(|| {
            distance_matrix(subset, &cfg.compressor).expect("bench items are valid");
        });
        matrix_points.push((n, secs));
    }

    // convolution over W x W inputs with a fixed 3x3 filter bank
    let spec = ConvLayerSpec::seeded(3, 3, 1, 4, 1, 1, Activation::Sigmoid { slope: 1.0 }, 42)
        .map_err(|e| BenchError::Run(e.to_string()))?;
    let mut conv_points = Vec::new();
    for &w in &cfg.conv_sizes {
        let values: Vec<f64> = (0..w * w).map(|_| rng.random_range(0.0..1.0)).collect();
        let input = FeatureMap::single(w, w, 1, values).map_err(|e| BenchError::Run(e.to_string()))?;
        let secs = time_stable(|| {
            conv2d_forward(&input, &spec).expect("bench shapes are valid");
        });
        conv_points.push((w, secs));
    }

    let to_f = |pts: &[(usize, f64)]| -> Vec<(f64, f64)> {
        pts.iter().map(|&(x, y)| (x as f64, y)).collect()
    };
    Ok(ScalingReport {
        matrix_fit: fit_power_law(&to_f(&matrix_points)),
        matrix_points,
        conv_fit: fit_power_law(&to_f(&conv_points)),
        conv_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_fit_recovers_exponent() {
        let pts: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|&x| (x, 3.5 * x * x))
            .collect();
        let fit = fit_power_law(&pts);
        assert!((fit.exponent - 2.0).abs() < 1e-9);
        assert!((fit.scale - 3.5).abs() < 1e-9);
        assert!(fit.r2 > 0.999999);
    }

    #[test]
    fn power_law_fit_with_noise() {
        let pts = vec![(16.0, 10.2), (32.0, 41.1), (64.0, 159.0), (128.0, 650.0)];
        let fit = fit_power_law(&pts);
        assert!((fit.exponent - 2.0).abs() < 0.1);
        assert!(fit.r2 > 0.99);
    }

    #[test]
    fn too_few_sizes_rejected() {
        let cfg = ScalingConfig {
            matrix_sizes: vec![16],
            ..ScalingConfig::default()
        };
        assert!(matches!(
            scaling_report(&cfg),
            Err(BenchError::TooFewSizes(1))
        ));
        let cfg = ScalingConfig {
            conv_sizes: vec![32, 64],
            ..ScalingConfig::default()
        };
        assert!(matches!(
            scaling_report(&cfg),
            Err(BenchError::TooFewSizes(2))
        ));
    }
}
