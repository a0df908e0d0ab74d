//! Seeded synthetic texture dataset: five classes of periodic textures at
//! five frequencies, riding on a carrier pattern shared by every image.
//!
//! Each class contributes "plain" images (carrier + class wave + mild
//! noise) and a few "accent" images with strong extra noise. The shared
//! carrier keeps pairwise compression distances between plain images low,
//! while the accents stay mutually dissimilar; that gives the selection
//! layer a real gradient to work with instead of a flat distance matrix.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::image::GrayImage;

#[derive(Debug, Clone)]
pub struct LabeledImages {
    pub items: Vec<(GrayImage, usize)>,
    pub n_classes: usize,
}

impl LabeledImages {
    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, l)| *l).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub classes: usize,
    /// Plain training images per class.
    pub plain_per_class: usize,
    /// Accent (high-noise) training images per class.
    pub accent_per_class: usize,
    pub test_per_class: usize,
    /// Square image side.
    pub size: usize,
    pub seed: u64,
    pub carrier_amplitude: f64,
    pub class_amplitude: f64,
    /// Per-image wobble around the class wave's base phase, in radians.
    /// Kept small so class centroids stay separated in feature space.
    pub phase_jitter: f64,
    pub plain_noise: f64,
    pub accent_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 5,
            plain_per_class: 6,
            accent_per_class: 3,
            test_per_class: 6,
            size: 16,
            seed: 1,
            carrier_amplitude: 70.0,
            class_amplitude: 26.0,
            phase_jitter: 0.3,
            plain_noise: 2.0,
            accent_noise: 55.0,
        }
    }
}

fn texture(
    cfg: &SyntheticConfig,
    class: usize,
    carrier_phase: f64,
    image_phase: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let size = cfg.size;
    let tau = std::f64::consts::TAU;
    // class frequency in cycles per image: 2, 3, 4, 5, 6, ...
    let freq = (class + 2) as f64;
    // slightly different wave direction per class
    let angle = 0.35 + 0.55 * class as f64;
    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let carrier = (tau * (xf + 0.7 * yf) / 5.1 + carrier_phase).sin();
            let wave = (tau * freq * (xf * dir_x + yf * dir_y) / size as f64 + image_phase).sin();
            let jitter = rng.random_range(-noise..=noise);
            let value =
                128.0 + cfg.carrier_amplitude * carrier + cfg.class_amplitude * wave + jitter;
            pixels.push(value.clamp(0.0, 255.0).round() as u8);
        }
    }
    GrayImage::new(size, size, pixels).expect("nonzero size")
}

/// Generate (train, test) labeled sets. Deterministic per seed.
pub fn synthetic_textures(cfg: &SyntheticConfig) -> (LabeledImages, LabeledImages) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let carrier_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let class_phases: Vec<f64> = (0..cfg.classes)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..cfg.classes {
        let mut phase = |rng: &mut ChaCha8Rng| {
            class_phases[class] + rng.random_range(-cfg.phase_jitter..=cfg.phase_jitter)
        };
        for _ in 0..cfg.plain_per_class {
            let p = phase(&mut rng);
            train.push((
                texture(cfg, class, carrier_phase, p, cfg.plain_noise, &mut rng),
                class,
            ));
        }
        for _ in 0..cfg.accent_per_class {
            let p = phase(&mut rng);
            train.push((
                texture(cfg, class, carrier_phase, p, cfg.accent_noise, &mut rng),
                class,
            ));
        }
        for _ in 0..cfg.test_per_class {
            let p = phase(&mut rng);
            test.push((
                texture(cfg, class, carrier_phase, p, cfg.plain_noise, &mut rng),
                class,
            ));
        }
    }
    (
        LabeledImages {
            items: train,
            n_classes: cfg.classes,
        },
        LabeledImages {
            items: test,
            n_classes: cfg.classes,
        },
    )
}
