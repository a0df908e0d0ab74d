//! Deterministic lossless compressors exposing the compressed-length
//! primitive C(x) that the normalized compression distance is built on,
//! plus quantization of real-valued feature vectors to byte arrays.
//!
//! The default codec is a block-sorting chain (BWT + move-to-front +
//! zero-run-length + adaptive range coding). A deflate codec and a plain
//! run-length codec are available for comparison runs; all three are pure
//! functions of their input bytes.

mod block;
mod rc;

use std::io::{Read, Write};

use thiserror::Error;

/// Classic block-sorting window. Inputs beyond the window are rejected
/// rather than windowed: windowing breaks the joint-compression estimate
/// the NCD relies on.
pub const DEFAULT_BLOCK_CAPACITY: usize = 900_000;

const VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompressError {
    #[error("input of {len} bytes exceeds the {capacity}-byte block capacity")]
    InputTooLarge { len: usize, capacity: usize },
    #[error("corrupt stream: {0}")]
    CorruptStream(&'static str),
}

/// Which compression chain backs C(x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Codec {
    /// BWT + MTF + zero-RLE + adaptive range coder.
    #[default]
    BlockSorting,
    /// DEFLATE (LZ77 + Huffman).
    Deflate,
    /// Byte-level run-length coding.
    RunLength,
}

impl Codec {
    fn tag(self) -> u8 {
        match self {
            Codec::BlockSorting => b'B',
            Codec::Deflate => b'D',
            Codec::RunLength => b'R',
        }
    }
}

impl std::str::FromStr for Codec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bzip" | "block" | "block-sorting" => Ok(Codec::BlockSorting),
            "deflate" => Ok(Codec::Deflate),
            "rle" => Ok(Codec::RunLength),
            other => Err(format!(
                "unknown compressor {other:?} (expected bzip, deflate or rle)"
            )),
        }
    }
}

/// A codec choice plus its block capacity. Identical input always yields
/// identical output bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compressor {
    codec: Codec,
    block_capacity: usize,
}

impl Default for Compressor {
    fn default() -> Self {
        Compressor::new(Codec::BlockSorting, DEFAULT_BLOCK_CAPACITY)
    }
}

impl Compressor {
    pub fn new(codec: Codec, block_capacity: usize) -> Self {
        Compressor {
            codec,
            block_capacity,
        }
    }

    pub fn with_codec(codec: Codec) -> Self {
        Compressor::new(codec, DEFAULT_BLOCK_CAPACITY)
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn block_capacity(&self) -> usize {
        self.block_capacity
    }

    fn check_capacity(&self, len: usize) -> Result<(), CompressError> {
        if len > self.block_capacity {
            Err(CompressError::InputTooLarge {
                len,
                capacity: self.block_capacity,
            })
        } else {
            Ok(())
        }
    }

    /// Compress `data` into a self-describing stream. Deterministic.
    pub fn compress(&self, data: &[u8]) -> Result<Vec<u8>, CompressError> {
        self.check_capacity(data.len())?;
        let mut out = Vec::with_capacity(16 + data.len() / 2);
        out.extend_from_slice(&[b'N', b'C', self.codec.tag(), VERSION]);
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        if data.is_empty() {
            return Ok(out);
        }
        match self.codec {
            Codec::BlockSorting => {
                let (bwt, ptr) = block::bwt_forward(data);
                let zrle = block::zrle_encode(&block::mtf_encode(&bwt));
                out.extend_from_slice(&ptr.to_le_bytes());
                out.extend_from_slice(&(zrle.len() as u32).to_le_bytes());
                let mut enc = rc::BitEncoder::new();
                let mut model = rc::ByteModel::new();
                let mut ctx = 0u8;
                for &b in &zrle {
                    model.encode(&mut enc, ctx, b);
                    ctx = b;
                }
                out.extend_from_slice(&enc.finish());
            }
            Codec::Deflate => {
                let mut enc =
                    flate2::write::DeflateEncoder::new(&mut out, flate2::Compression::new(6));
                enc.write_all(data).expect("in-memory deflate cannot fail");
                enc.finish().expect("in-memory deflate cannot fail");
            }
            Codec::RunLength => {
                let mut i = 0usize;
                while i < data.len() {
                    let b = data[i];
                    let mut run = 1usize;
                    while run < 255 && i + run < data.len() && data[i + run] == b {
                        run += 1;
                    }
                    out.push(run as u8);
                    out.push(b);
                    i += run;
                }
            }
        }
        Ok(out)
    }

    /// Exact inverse of [`compress`](Self::compress) for the same codec.
    pub fn decompress(&self, stream: &[u8]) -> Result<Vec<u8>, CompressError> {
        if stream.len() < 8 {
            return Err(CompressError::CorruptStream("truncated header"));
        }
        if stream[0] != b'N' || stream[1] != b'C' {
            return Err(CompressError::CorruptStream("bad magic"));
        }
        if stream[2] != self.codec.tag() {
            return Err(CompressError::CorruptStream("codec mismatch"));
        }
        if stream[3] != VERSION {
            return Err(CompressError::CorruptStream("unsupported version"));
        }
        let len = u32::from_le_bytes(stream[4..8].try_into().unwrap()) as usize;
        self.check_capacity(len)?;
        let payload = &stream[8..];
        if len == 0 {
            return if payload.is_empty() {
                Ok(Vec::new())
            } else {
                Err(CompressError::CorruptStream("trailing bytes"))
            };
        }
        match self.codec {
            Codec::BlockSorting => {
                if payload.len() < 8 {
                    return Err(CompressError::CorruptStream("truncated block payload"));
                }
                let ptr = u32::from_le_bytes(payload[0..4].try_into().unwrap());
                let zrle_len = u32::from_le_bytes(payload[4..8].try_into().unwrap()) as usize;
                let mut dec = rc::BitDecoder::new(&payload[8..]);
                let mut model = rc::ByteModel::new();
                let mut ctx = 0u8;
                let mut zrle = Vec::with_capacity(zrle_len);
                for _ in 0..zrle_len {
                    let b = model.decode(&mut dec, ctx);
                    zrle.push(b);
                    ctx = b;
                }
                let mtf = block::zrle_decode(&zrle, len)
                    .ok_or(CompressError::CorruptStream("bad run-length data"))?;
                let bwt = block::mtf_decode(&mtf);
                block::bwt_inverse(&bwt, ptr)
                    .ok_or(CompressError::CorruptStream("bad transform pointer"))
            }
            Codec::Deflate => {
                let mut out = Vec::with_capacity(len);
                let mut dec = flate2::read::DeflateDecoder::new(payload);
                dec.read_to_end(&mut out)
                    .map_err(|_| CompressError::CorruptStream("bad deflate data"))?;
                if out.len() != len {
                    return Err(CompressError::CorruptStream("length mismatch"));
                }
                Ok(out)
            }
            Codec::RunLength => {
                if payload.len() % 2 != 0 {
                    return Err(CompressError::CorruptStream("odd run-length payload"));
                }
                let mut out = Vec::with_capacity(len);
                for pair in payload.chunks_exact(2) {
                    let run = pair[0] as usize;
                    if run == 0 || out.len() + run > len {
                        return Err(CompressError::CorruptStream("bad run length"));
                    }
                    out.resize(out.len() + run, pair[1]);
                }
                if out.len() != len {
                    return Err(CompressError::CorruptStream("length mismatch"));
                }
                Ok(out)
            }
        }
    }

    /// C(x): the length in bytes of the compressed form of `data`.
    pub fn compressed_len(&self, data: &[u8]) -> Result<usize, CompressError> {
        Ok(self.compress(data)?.len())
    }

    /// Concatenate two inputs, enforcing the block capacity on the result.
    pub fn concat(&self, x: &[u8], y: &[u8]) -> Result<Vec<u8>, CompressError> {
        self.check_capacity(x.len() + y.len())?;
        let mut out = Vec::with_capacity(x.len() + y.len());
        out.extend_from_slice(x);
        out.extend_from_slice(y);
        Ok(out)
    }
}

/// Quantize activations to bytes: `round(255 * clamp(e, 0, 1))`, rounding
/// half up. Output length equals the vector length.
pub fn quantize_features(v: &[f64]) -> Vec<u8> {
    v.iter()
        .map(|&e| (255.0 * e.clamp(0.0, 1.0)).round() as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_bytes(seed: u64, len: usize) -> Vec<u8> {
        // splitmix64 stream; good enough for test data
        let mut state = seed;
        (0..len)
            .map(|_| {
                state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
                (z ^ (z >> 31)) as u8
            })
            .collect()
    }

    fn all_codecs() -> [Compressor; 3] {
        [
            Compressor::with_codec(Codec::BlockSorting),
            Compressor::with_codec(Codec::Deflate),
            Compressor::with_codec(Codec::RunLength),
        ]
    }

    #[test]
    fn roundtrip_basic() {
        for comp in all_codecs() {
            for data in [&b""[..], &b"abcabcabc"[..], &b"a"[..], &[0u8; 300][..]] {
                let stream = comp.compress(data).unwrap();
                assert_eq!(comp.decompress(&stream).unwrap(), data);
            }
        }
    }

    #[test]
    fn roundtrip_random_4096() {
        let data = seeded_bytes(42, 4096);
        for comp in all_codecs() {
            let stream = comp.compress(&data).unwrap();
            assert_eq!(comp.decompress(&stream).unwrap(), data);
        }
    }

    #[test]
    fn compress_is_deterministic() {
        let data = seeded_bytes(7, 2000);
        for comp in all_codecs() {
            assert_eq!(comp.compress(&data).unwrap(), comp.compress(&data).unwrap());
        }
    }

    #[test]
    fn empty_input_is_header_only() {
        // The 8-byte header (magic, codec, version, length) is the codec's
        // fixed cost; pinned as a regression value.
        for comp in all_codecs() {
            assert_eq!(comp.compressed_len(b"").unwrap(), 8);
        }
    }

    #[test]
    fn repeated_bytes_compress_hard() {
        let comp = Compressor::default();
        let data = vec![0x41u8; 1000];
        let len = comp.compressed_len(&data).unwrap();
        assert!(len < 100, "got {len}");
    }

    #[test]
    fn repeats_beat_random() {
        let comp = Compressor::default();
        let repeats = vec![0x41u8; 1000];
        let random = seeded_bytes(3, 1000);
        assert!(
            comp.compressed_len(&repeats).unwrap() < comp.compressed_len(&random).unwrap()
        );
    }

    #[test]
    fn doubled_input_is_cheaper_than_twice() {
        let comp = Compressor::default();
        let x = seeded_bytes(11, 4096);
        let xx = comp.concat(&x, &x).unwrap();
        let cx = comp.compressed_len(&x).unwrap();
        let cxx = comp.compressed_len(&xx).unwrap();
        assert!(cxx < 2 * cx, "C(xx)={cxx} vs 2*C(x)={}", 2 * cx);
    }

    #[test]
    fn effectiveness_on_repeat_corpus() {
        let comp = Compressor::default();
        for i in 0..100u8 {
            let data = vec![i; 4096];
            let len = comp.compressed_len(&data).unwrap();
            assert!(
                (len as f64) < 0.05 * 4096.0,
                "byte {i}: {len} not < 5% of input"
            );
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let comp = Compressor::new(Codec::BlockSorting, 16);
        let err = comp.compress(&[0u8; 17]).unwrap_err();
        assert!(matches!(err, CompressError::InputTooLarge { len: 17, .. }));
        assert!(comp.concat(&[0u8; 10], &[0u8; 7]).is_err());
        assert_eq!(comp.concat(&[1, 2], &[3, 4]).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn concat_identity_and_length() {
        let comp = Compressor::default();
        let x = b"ab".to_vec();
        assert_eq!(comp.concat(&x, b"").unwrap(), x);
        assert_eq!(comp.concat(b"ab", b"cd").unwrap(), b"abcd");
        let y = seeded_bytes(1, 100);
        assert_eq!(comp.concat(&x, &y).unwrap().len(), x.len() + y.len());
    }

    #[test]
    fn corrupt_streams_are_rejected() {
        let comp = Compressor::default();
        let mut stream = comp.compress(b"hello hello hello").unwrap();
        assert!(matches!(
            comp.decompress(&stream[..4]),
            Err(CompressError::CorruptStream(_))
        ));
        stream[0] = b'X';
        assert!(matches!(
            comp.decompress(&stream),
            Err(CompressError::CorruptStream(_))
        ));
        // stream from a different codec
        let deflate = Compressor::with_codec(Codec::Deflate);
        let other = deflate.compress(b"hello").unwrap();
        assert!(comp.decompress(&other).is_err());
    }

    #[test]
    fn quantize_rounds_half_up_and_clamps() {
        assert_eq!(quantize_features(&[0.0, 1.0, 0.5]), vec![0, 255, 128]);
        assert_eq!(quantize_features(&[1.2, -0.3]), vec![255, 0]);
        assert_eq!(quantize_features(&vec![0.0; 17]), vec![0u8; 17]);
        assert_eq!(quantize_features(&[]).len(), 0);
    }
}
