//! Grayscale images: PGM decode/encode (P2 ASCII and P5 binary), color
//! conversion, median denoising, and the augmentation suite (complement,
//! rotations, translation, partitioning).

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad format: {0}")]
    BadFormat(String),
    #[error("io failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("median window must be odd and at least 3, got {0}")]
    BadWindow(usize),
    #[error("bad augmentation parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    h: usize,
    w: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(h: usize, w: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if h == 0 || w == 0 {
            return Err(ImageError::ShapeMismatch("empty image".into()));
        }
        if pixels.len() != h * w {
            return Err(ImageError::ShapeMismatch(format!(
                "{h}x{w} image needs {} pixels, got {}",
                h * w,
                pixels.len()
            )));
        }
        Ok(GrayImage { h, w, pixels })
    }

    pub fn filled(h: usize, w: usize, value: u8) -> Self {
        GrayImage::new(h, w, vec![value; h * w]).expect("nonzero dims")
    }

    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.pixels[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.pixels[y * self.w + x] = v;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Pixels as activations in [0, 1], (y, x) row-major.
    pub fn to_unit_values(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect()
    }
}

fn is_pnm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Pull the next whitespace-separated token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && is_pnm_space(bytes[*pos]) {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !is_pnm_space(bytes[*pos]) {
        *pos += 1;
    }
    Some(bytes[start..*pos].to_vec())
}

fn parse_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize, ImageError> {
    let tok = next_token(bytes, pos)
        .ok_or_else(|| ImageError::BadFormat(format!("missing {what}")))?;
    std::str::from_utf8(&tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| ImageError::BadFormat(format!("bad {what}")))
}

fn rescale(sample: usize, maxval: usize) -> u8 {
    ((sample * 255) as f64 / maxval as f64).round() as u8
}

/// Decode a PGM image (P2 or P5). Samples are rescaled to a 255 maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)
        .ok_or_else(|| ImageError::BadFormat("empty file".into()))?;
    let binary = match magic.as_slice() {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(ImageError::BadFormat(format!(
                "not a PGM file (magic {:?})",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let w = parse_header_number(bytes, &mut pos, "width")?;
    let h = parse_header_number(bytes, &mut pos, "height")?;
    let maxval = parse_header_number(bytes, &mut pos, "maxval")?;
    if w == 0 || h == 0 {
        return Err(ImageError::BadFormat("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::BadFormat(format!("maxval {maxval} out of range")));
    }

    let mut pixels = Vec::with_capacity(h * w);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !is_pnm_space(bytes[pos]) {
            return Err(ImageError::BadFormat("missing raster separator".into()));
        }
        pos += 1;
        let wide = maxval > 255;
        let needed = h * w * if wide { 2 } else { 1 };
        let raster = bytes
            .get(pos..pos + needed)
            .ok_or_else(|| ImageError::BadFormat("truncated pixel data".into()))?;
        if wide {
            for pair in raster.chunks_exact(2) {
                let sample = usize::from(pair[0]) << 8 | usize::from(pair[1]);
                if sample > maxval {
                    return Err(ImageError::BadFormat("sample exceeds maxval".into()));
                }
                pixels.push(rescale(sample, maxval));
            }
        } else {
            for &b in raster {
                let sample = usize::from(b);
                if sample > maxval {
                    return Err(ImageError::BadFormat("sample exceeds maxval".into()));
                }
                pixels.push(rescale(sample, maxval));
            }
        }
    } else {
        for _ in 0..h * w {
            let sample = parse_header_number(bytes, &mut pos, "pixel")?;
            if sample > maxval {
                return Err(ImageError::BadFormat("sample exceeds maxval".into()));
            }
            pixels.push(rescale(sample, maxval));
        }
    }
    GrayImage::new(h, w, pixels)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    parse_pgm(&fs::read(path)?)
}

/// Encode as PGM: binary P5 or ASCII P2.
pub fn encode_pgm(img: &GrayImage, binary: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.h * img.w + 32);
    if binary {
        out.extend_from_slice(format!("P5\n{} {}\n255\n", img.w, img.h).as_bytes());
        out.extend_from_slice(&img.pixels);
    } else {
        out.extend_from_slice(format!("P2\n{} {}\n255\n", img.w, img.h).as_bytes());
        for row in img.pixels.chunks(img.w) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage, binary: bool) -> Result<(), ImageError> {
    fs::write(path, encode_pgm(img, binary))?;
    Ok(())
}

/// Luma conversion: round(0.299 r + 0.587 g + 0.114 b) per pixel.
pub fn to_grayscale(
    r: &GrayImage,
    g: &GrayImage,
    b: &GrayImage,
) -> Result<GrayImage, ImageError> {
    if r.h != g.h || r.w != g.w || r.h != b.h || r.w != b.w {
        return Err(ImageError::ShapeMismatch(
            "color channels have different dimensions".into(),
        ));
    }
    let pixels = r
        .pixels
        .iter()
        .zip(&g.pixels)
        .zip(&b.pixels)
        .map(|((&r, &g), &b)| {
            (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)).round() as u8
        })
        .collect();
    GrayImage::new(r.h, r.w, pixels)
}

/// Median filter with clamped (replicated) borders. The window must be odd
/// and at least 3.
pub fn median_denoise(img: &GrayImage, window: usize) -> Result<GrayImage, ImageError> {
    if window < 3 || window % 2 == 0 {
        return Err(ImageError::BadWindow(window));
    }
    let r = (window / 2) as isize;
    let (h, w) = (img.h as isize, img.w as isize);
    let mut out = GrayImage::filled(img.h, img.w, 0);
    let mut buf = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            buf.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    buf.push(img.get(sy, sx));
                }
            }
            buf.sort_unstable();
            out.set(y as usize, x as usize, buf[buf.len() / 2]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    Complement,
    Rot90,
    Rot180,
    Rot270,
    Translate { dx: isize, dy: isize },
    Partition { rows: usize, cols: usize },
}

impl FromStr for AugmentOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or("");
        let args: Vec<&str> = parts.collect();
        let two = |what: &str| -> Result<(isize, isize), String> {
            if args.len() != 2 {
                return Err(format!("{head} takes two {what} arguments"));
            }
            let a = args[0].parse().map_err(|_| format!("bad {what} {:?}", args[0]))?;
            let b = args[1].parse().map_err(|_| format!("bad {what} {:?}", args[1]))?;
            Ok((a, b))
        };
        match head {
            "complement" => Ok(AugmentOp::Complement),
            "rot90" => Ok(AugmentOp::Rot90),
            "rot180" => Ok(AugmentOp::Rot180),
            "rot270" => Ok(AugmentOp::Rot270),
            "translate" => {
                let (dx, dy) = two("offset")?;
                Ok(AugmentOp::Translate { dx, dy })
            }
            "partition" => {
                let (r, c) = two("grid")?;
                if r < 1 || c < 1 {
                    return Err("partition grid must be positive".into());
                }
                Ok(AugmentOp::Partition {
                    rows: r as usize,
                    cols: c as usize,
                })
            }
            other => Err(format!("unknown augmentation {other:?}")),
        }
    }
}

impl fmt::Display for AugmentOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentOp::Complement => write!(f, "complement"),
            AugmentOp::Rot90 => write!(f, "rot90"),
            AugmentOp::Rot180 => write!(f, "rot180"),
            AugmentOp::Rot270 => write!(f, "rot270"),
            AugmentOp::Translate { dx, dy } => write!(f, "translate:{dx}:{dy}"),
            AugmentOp::Partition { rows, cols } => write!(f, "partition:{rows}:{cols}"),
        }
    }
}

fn rot90(img: &GrayImage) -> GrayImage {
    // clockwise: (y, x) <- (h-1-x, y)
    let mut out = GrayImage::filled(img.w, img.h, 0);
    for y in 0..img.w {
        for x in 0..img.h {
            out.set(y, x, img.get(img.h - 1 - x, y));
        }
    }
    out
}

/// Apply one augmentation. Every op except partitioning yields a single
/// image; partition yields its rows x cols tiles in row-major order.
pub fn augment(img: &GrayImage, op: AugmentOp) -> Result<Vec<GrayImage>, ImageError> {
    match op {
        AugmentOp::Complement => {
            let pixels = img.pixels.iter().map(|&p| 255 - p).collect();
            Ok(vec![GrayImage::new(img.h, img.w, pixels)?])
        }
        AugmentOp::Rot90 => Ok(vec![rot90(img)]),
        AugmentOp::Rot180 => Ok(vec![rot90(&rot90(img))]),
        AugmentOp::Rot270 => Ok(vec![rot90(&rot90(&rot90(img)))]),
        AugmentOp::Translate { dx, dy } => {
            if dx.unsigned_abs() >= img.w || dy.unsigned_abs() >= img.h {
                return Err(ImageError::BadParams(format!(
                    "translate offsets ({dx}, {dy}) must be smaller than {}x{}",
                    img.w, img.h
                )));
            }
            let mut out = GrayImage::filled(img.h, img.w, 0);
            for y in 0..img.h as isize {
                for x in 0..img.w as isize {
                    let sy = y - dy;
                    let sx = x - dx;
                    if sy >= 0 && sy < img.h as isize && sx >= 0 && sx < img.w as isize {
                        out.set(y as usize, x as usize, img.get(sy as usize, sx as usize));
                    }
                }
            }
            Ok(vec![out])
        }
        AugmentOp::Partition { rows, cols } => {
            if rows == 0 || cols == 0 || img.h % rows != 0 || img.w % cols != 0 {
                return Err(ImageError::BadParams(format!(
                    "partition grid {rows}x{cols} does not divide {}x{}",
                    img.h, img.w
                )));
            }
            let th = img.h / rows;
            let tw = img.w / cols;
            let mut tiles = Vec::with_capacity(rows * cols);
            for ty in 0..rows {
                for tx in 0..cols {
                    let mut tile = GrayImage::filled(th, tw, 0);
                    for y in 0..th {
                        for x in 0..tw {
                            tile.set(y, x, img.get(ty * th + y, tx * tw + x));
                        }
                    }
                    tiles.push(tile);
                }
            }
            Ok(tiles)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GrayImage {
        GrayImage::new(2, 2, vec![0, 128, 255, 64]).unwrap()
    }

    #[test]
    fn parse_p2() {
        let img = parse_pgm(b"P2\n2 2\n255\n0 128\n255 64\n").unwrap();
        assert_eq!(img, sample());
    }

    #[test]
    fn parse_p5_matches_p2() {
        let p5 = parse_pgm(b"P5\n2 2\n255\n\x00\x80\xff\x40").unwrap();
        assert_eq!(p5, sample());
    }

    #[test]
    fn parse_handles_comments_and_maxval() {
        let img = parse_pgm(b"P2 # comment\n# another\n2 1 100\n0 50\n").unwrap();
        assert_eq!(img.pixels(), &[0, 128]); // 50/100 -> 128
    }

    #[test]
    fn parse_16bit_p5() {
        // maxval 65535: two-byte big-endian samples
        let img = parse_pgm(b"P5\n1 1\n65535\n\x80\x00").unwrap();
        assert_eq!(img.get(0, 0), 128);
    }

    #[test]
    fn truncated_pixels_rejected() {
        assert!(matches!(
            parse_pgm(b"P5\n2 2\n255\n\x00\x80"),
            Err(ImageError::BadFormat(_))
        ));
        assert!(parse_pgm(b"P2\n2 2\n255\n0 1 2\n").is_err());
        assert!(parse_pgm(b"P3\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"").is_err());
    }

    #[test]
    fn encode_roundtrips_both_ways() {
        let img = sample();
        assert_eq!(parse_pgm(&encode_pgm(&img, true)).unwrap(), img);
        assert_eq!(parse_pgm(&encode_pgm(&img, false)).unwrap(), img);
    }

    #[test]
    fn grayscale_luma() {
        let one = |v| GrayImage::new(1, 1, vec![v]).unwrap();
        assert_eq!(to_grayscale(&one(77), &one(77), &one(77)).unwrap().get(0, 0), 77);
        assert_eq!(
            to_grayscale(&one(255), &one(255), &one(255)).unwrap().get(0, 0),
            255
        );
        assert_eq!(to_grayscale(&one(255), &one(0), &one(0)).unwrap().get(0, 0), 76);
        let wide = GrayImage::filled(1, 2, 0);
        assert!(to_grayscale(&one(0), &one(0), &wide).is_err());
    }

    #[test]
    fn median_removes_salt() {
        let mut img = GrayImage::filled(5, 5, 0);
        img.set(2, 2, 255);
        let clean = median_denoise(&img, 3).unwrap();
        assert!(clean.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn median_keeps_constant() {
        let img = GrayImage::filled(4, 6, 99);
        assert_eq!(median_denoise(&img, 3).unwrap(), img);
    }

    #[test]
    fn median_window_validation() {
        let img = GrayImage::filled(3, 3, 0);
        assert!(matches!(median_denoise(&img, 2), Err(ImageError::BadWindow(2))));
        assert!(median_denoise(&img, 1).is_err());
    }

    #[test]
    fn median_pinned_small_case() {
        // brute-force check of one asymmetric input
        let img = GrayImage::new(3, 3, vec![10, 200, 10, 10, 10, 10, 90, 10, 10]).unwrap();
        let out = median_denoise(&img, 3).unwrap();
        // center window: {10,200,10,10,10,10,90,10,10} sorted -> median 10
        assert_eq!(out.get(1, 1), 10);
        // corner (0,0) clamps to {10,10,200,10,10,200,10,10,10} -> 10
        assert_eq!(out.get(0, 0), 10);
    }

    #[test]
    fn complement_is_involution() {
        let img = sample();
        let once = augment(&img, AugmentOp::Complement).unwrap().remove(0);
        assert_eq!(once.get(0, 0), 255);
        let twice = augment(&once, AugmentOp::Complement).unwrap().remove(0);
        assert_eq!(twice, img);
    }

    #[test]
    fn rotations_compose() {
        let img = GrayImage::new(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let mut four = img.clone();
        for _ in 0..4 {
            four = augment(&four, AugmentOp::Rot90).unwrap().remove(0);
        }
        assert_eq!(four, img);
        let r180 = augment(&img, AugmentOp::Rot180).unwrap().remove(0);
        let twice = augment(
            &augment(&img, AugmentOp::Rot90).unwrap().remove(0),
            AugmentOp::Rot90,
        )
        .unwrap()
        .remove(0);
        assert_eq!(r180, twice);
    }

    #[test]
    fn translate_shifts_with_zero_fill() {
        let img = sample();
        let out = augment(&img, AugmentOp::Translate { dx: 1, dy: 0 })
            .unwrap()
            .remove(0);
        assert_eq!(out.pixels(), &[0, 0, 0, 255]);
        assert!(augment(&img, AugmentOp::Translate { dx: 2, dy: 0 }).is_err());
    }

    #[test]
    fn partition_tiles_cover_disjointly() {
        let img = GrayImage::new(4, 4, (0..16).collect()).unwrap();
        let tiles = augment(&img, AugmentOp::Partition { rows: 2, cols: 2 }).unwrap();
        assert_eq!(tiles.len(), 4);
        for t in &tiles {
            assert_eq!((t.h(), t.w()), (2, 2));
        }
        // reassemble
        let mut back = GrayImage::filled(4, 4, 0);
        for (idx, tile) in tiles.iter().enumerate() {
            let (ty, tx) = (idx / 2, idx % 2);
            for y in 0..2 {
                for x in 0..2 {
                    back.set(ty * 2 + y, tx * 2 + x, tile.get(y, x));
                }
            }
        }
        assert_eq!(back, img);
        assert!(augment(&img, AugmentOp::Partition { rows: 3, cols: 2 }).is_err());
    }

    #[test]
    fn ops_parse_from_strings() {
        assert_eq!("complement".parse::<AugmentOp>().unwrap(), AugmentOp::Complement);
        assert_eq!(
            "translate:2:-1".parse::<AugmentOp>().unwrap(),
            AugmentOp::Translate { dx: 2, dy: -1 }
        );
        assert_eq!(
            "partition:2:2".parse::<AugmentOp>().unwrap(),
            AugmentOp::Partition { rows: 2, cols: 2 }
        );
        assert!("rot45".parse::<AugmentOp>().is_err());
        assert!("translate:1".parse::<AugmentOp>().is_err());
    }
}
