//! Adaptive binary range coder (LZMA-style carry-less variant).
//!
//! Probabilities are 11-bit (0..2048) and adapt with shift-5 updates, so the
//! coder is fully deterministic: the same input always produces the same
//! output bytes.

const PROB_BITS: u32 = 11;
const PROB_ONE: u16 = 1 << PROB_BITS;
const PROB_INIT: u16 = PROB_ONE / 2;
const ADAPT_SHIFT: u16 = 5;
const TOP: u32 = 1 << 24;

pub(crate) struct BitEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl BitEncoder {
    pub fn new() -> Self {
        BitEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, prob: &mut u16, bit: u8) {
        let bound = (self.range >> PROB_BITS) * u32::from(*prob);
        if bit == 0 {
            self.range = bound;
            *prob += (PROB_ONE - *prob) >> ADAPT_SHIFT;
        } else {
            self.low += u64::from(bound);
            self.range -= bound;
            *prob -= *prob >> ADAPT_SHIFT;
        }
        while self.range < TOP {
            self.shift_low();
            self.range <<= 8;
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low << 8) & 0xFFFF_FFFF;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub(crate) struct BitDecoder<'a> {
    range: u32,
    code: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> BitDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut dec = BitDecoder {
            range: u32::MAX,
            code: 0,
            input,
            pos: 0,
        };
        // The encoder's first emitted byte is its initial zero cache.
        dec.next_byte();
        for _ in 0..4 {
            let byte = dec.next_byte();
            dec.code = (dec.code << 8) | u32::from(byte);
        }
        dec
    }

    fn next_byte(&mut self) -> u8 {
        // Exhausted input decodes as zeros; stream integrity is validated by
        // the length and pointer checks in the surrounding codec.
        let byte = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        byte
    }

    pub fn decode(&mut self, prob: &mut u16) -> u8 {
        let bound = (self.range >> PROB_BITS) * u32::from(*prob);
        let bit;
        if self.code < bound {
            self.range = bound;
            *prob += (PROB_ONE - *prob) >> ADAPT_SHIFT;
            bit = 0;
        } else {
            self.code -= bound;
            self.range -= bound;
            *prob -= *prob >> ADAPT_SHIFT;
            bit = 1;
        }
        while self.range < TOP {
            self.range <<= 8;
            let byte = self.next_byte();
            self.code = (self.code << 8) | u32::from(byte);
        }
        bit
    }
}

const CTX_CLASSES: usize = 9;

/// Bucket the previous byte by magnitude. Exact-value contexts adapt too
/// slowly on run-structured data (post-MTF streams), where the load-bearing
/// statistic is "a zero follows any code"; coarse classes pool it.
fn ctx_class(byte: u8) -> usize {
    match byte {
        0 => 0,
        1 => 1,
        2 => 2,
        3..=7 => 3,
        8..=15 => 4,
        16..=31 => 5,
        32..=63 => 6,
        64..=127 => 7,
        _ => 8,
    }
}

/// Order-1 byte model: a bit tree of 255 nodes per previous-byte class.
pub(crate) struct ByteModel {
    probs: Vec<u16>,
}

impl ByteModel {
    pub fn new() -> Self {
        ByteModel {
            probs: vec![PROB_INIT; CTX_CLASSES * 256],
        }
    }

    pub fn encode(&mut self, enc: &mut BitEncoder, prev: u8, byte: u8) {
        let base = ctx_class(prev) << 8;
        let mut node = 1usize;
        for i in (0..8).rev() {
            let bit = (byte >> i) & 1;
            enc.encode(&mut self.probs[base + node], bit);
            node = (node << 1) | usize::from(bit);
        }
    }

    pub fn decode(&mut self, dec: &mut BitDecoder<'_>, prev: u8) -> u8 {
        let base = ctx_class(prev) << 8;
        let mut node = 1usize;
        for _ in 0..8 {
            let bit = dec.decode(&mut self.probs[base + node]);
            node = (node << 1) | usize::from(bit);
        }
        (node & 0xFF) as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(data: &[u8]) -> Vec<u8> {
        let mut enc = BitEncoder::new();
        let mut model = ByteModel::new();
        let mut ctx = 0u8;
        for &b in data {
            model.encode(&mut enc, ctx, b);
            ctx = b;
        }
        let coded = enc.finish();
        let mut dec = BitDecoder::new(&coded);
        let mut model = ByteModel::new();
        let mut ctx = 0u8;
        let mut out = Vec::with_capacity(data.len());
        for _ in 0..data.len() {
            let b = model.decode(&mut dec, ctx);
            out.push(b);
            ctx = b;
        }
        out
    }

    #[test]
    fn roundtrip_simple() {
        for data in [
            &b""[..],
            &b"a"[..],
            &b"abcabcabc"[..],
            &b"\x00\x00\x00\x00"[..],
            &b"\xff\xfe\xfd"[..],
        ] {
            assert_eq!(roundtrip(data), data);
        }
    }

    #[test]
    fn roundtrip_all_byte_values() {
        let data: Vec<u8> = (0..=255u8).cycle().take(2048).collect();
        assert_eq!(roundtrip(&data), data);
    }

    #[test]
    fn skewed_input_compresses() {
        let data = vec![0u8; 4096];
        let mut enc = BitEncoder::new();
        let mut model = ByteModel::new();
        for &b in &data {
            model.encode(&mut enc, 0, b);
        }
        let coded = enc.finish();
        assert!(coded.len() < 200, "coded {} bytes", coded.len());
    }
}
