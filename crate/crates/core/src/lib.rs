//! Compression-based similarity for convolutional feature maps.
//!
//! The pieces, bottom to top:
//!
//! - [`compress`]: deterministic codecs exposing compressed length C(x),
//!   plus feature-vector quantization.
//! - [`ncd`]: the normalized compression distance, pairwise distance
//!   matrices, and their CSV format.
//! - [`convnet`]: a minimal deterministic CNN forward path (convolution,
//!   separable convolution, pooling with gradients, dropout, activations).
//! - [`select`]: the compression-distance feature-selection layer that
//!   replaces pooling: keep only feature vectors participating in pairs
//!   above a dissimilarity criterion, with a mean-distance fallback.
//! - [`spectral`]: distance matrix -> affinity -> Laplacian ->
//!   eigendecomposition -> 2-D embedding -> partition.
//! - [`image`], [`classify`], [`dataset`]: PGM images and augmentation,
//!   lightweight classifiers, and a synthetic texture dataset for
//!   end-to-end experiments.

pub mod classify;
pub mod compress;
pub mod convnet;
pub mod dataset;
pub mod image;
pub mod matio;
pub mod ncd;
pub mod network;
pub mod select;
pub mod spectral;
