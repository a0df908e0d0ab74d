//! Block-sorting transform chain: Burrows-Wheeler transform (suffix-array
//! based, virtual end marker), move-to-front, and zero-run-length coding.
//!
//! The BWT here sorts the suffixes of `data` plus a virtual sentinel that is
//! smaller than every byte. The sentinel's row index is carried alongside the
//! transformed bytes so the inverse is exact.

/// Suffix array of `data` followed by a virtual sentinel smaller than every
/// byte. The returned array has `data.len() + 1` entries and always starts
/// with the sentinel suffix.
fn suffix_array(data: &[u8]) -> Vec<u32> {
    let n = data.len();
    let total = n + 1;
    let mut sa: Vec<u32> = (0..total as u32).collect();
    let mut rank: Vec<i64> = (0..total)
        .map(|i| if i < n { i64::from(data[i]) } else { -1 })
        .collect();
    let mut next_rank: Vec<i64> = vec![0; total];

    let mut k = 1usize;
    loop {
        let key = |i: usize| -> (i64, i64) {
            let second = if i + k < total { rank[i + k] } else { -2 };
            (rank[i], second)
        };
        sa.sort_unstable_by_key(|&i| key(i as usize));

        next_rank[sa[0] as usize] = 0;
        for j in 1..total {
            let prev = sa[j - 1] as usize;
            let cur = sa[j] as usize;
            next_rank[cur] = next_rank[prev] + i64::from(key(prev) != key(cur));
        }
        rank.copy_from_slice(&next_rank);
        if rank[sa[total - 1] as usize] as usize == total - 1 {
            break;
        }
        k <<= 1;
    }
    sa
}

/// Forward BWT. Returns the transformed bytes (same length as the input) and
/// the row index the sentinel occupied in the sorted rotation matrix.
pub(crate) fn bwt_forward(data: &[u8]) -> (Vec<u8>, u32) {
    let sa = suffix_array(data);
    let mut out = Vec::with_capacity(data.len());
    let mut ptr = 0u32;
    for (row, &start) in sa.iter().enumerate() {
        if start == 0 {
            ptr = row as u32;
        } else {
            out.push(data[start as usize - 1]);
        }
    }
    (out, ptr)
}

/// Inverse BWT. `ptr` is the sentinel row produced by [`bwt_forward`].
pub(crate) fn bwt_inverse(bwt: &[u8], ptr: u32) -> Option<Vec<u8>> {
    let n = bwt.len();
    let total = n + 1;
    let ptr = ptr as usize;
    if ptr >= total {
        return None;
    }
    if n == 0 {
        return Some(Vec::new());
    }

    let mut counts = [0usize; 256];
    for &b in bwt {
        counts[b as usize] += 1;
    }
    // First column starts with the sentinel, then all bytes in sorted order.
    let mut start = [0usize; 256];
    let mut sum = 1usize;
    for c in 0..256 {
        start[c] = sum;
        sum += counts[c];
    }

    // lf[row] = row of the rotation that starts one position earlier.
    let mut lf = vec![0u32; total];
    let mut occ = [0usize; 256];
    for row in 0..total {
        if row == ptr {
            lf[row] = 0; // the sentinel sorts first
        } else {
            let pos = if row > ptr { row - 1 } else { row };
            let c = bwt[pos] as usize;
            lf[row] = (start[c] + occ[c]) as u32;
            occ[c] += 1;
        }
    }

    // Walk the cycle backwards from the row that starts at offset zero.
    let mut out = vec![0u8; n];
    let mut row = 0usize;
    for slot in (0..n).rev() {
        if row == ptr {
            return None; // premature sentinel: corrupt stream
        }
        let pos = if row > ptr { row - 1 } else { row };
        out[slot] = bwt[pos];
        row = lf[row] as usize;
    }
    if row != ptr {
        return None; // cycle did not close: corrupt stream
    }
    Some(out)
}

pub(crate) fn mtf_encode(data: &[u8]) -> Vec<u8> {
    let mut table: [u8; 256] = core::array::from_fn(|i| i as u8);
    let mut out = Vec::with_capacity(data.len());
    for &b in data {
        let idx = table.iter().position(|&x| x == b).unwrap();
        out.push(idx as u8);
        table.copy_within(0..idx, 1);
        table[0] = b;
    }
    out
}

pub(crate) fn mtf_decode(data: &[u8]) -> Vec<u8> {
    let mut table: [u8; 256] = core::array::from_fn(|i| i as u8);
    let mut out = Vec::with_capacity(data.len());
    for &idx in data {
        let idx = idx as usize;
        let b = table[idx];
        out.push(b);
        table.copy_within(0..idx, 1);
        table[0] = b;
    }
    out
}

fn push_varint(out: &mut Vec<u8>, mut value: u64) {
    loop {
        let byte = (value & 0x7F) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(data: &[u8], pos: &mut usize) -> Option<u64> {
    let mut value = 0u64;
    let mut shift = 0u32;
    loop {
        let byte = *data.get(*pos)?;
        *pos += 1;
        if shift >= 63 {
            return None;
        }
        value |= u64::from(byte & 0x7F) << shift;
        if byte & 0x80 == 0 {
            return Some(value);
        }
        shift += 7;
    }
}

/// Zero runs become `0x00` followed by a varint run length; other bytes pass
/// through unchanged.
pub(crate) fn zrle_encode(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + 8);
    let mut i = 0usize;
    while i < data.len() {
        if data[i] == 0 {
            let mut run = 1usize;
            while i + run < data.len() && data[i + run] == 0 {
                run += 1;
            }
            out.push(0);
            push_varint(&mut out, run as u64);
            i += run;
        } else {
            out.push(data[i]);
            i += 1;
        }
    }
    out
}

/// Inverse of [`zrle_encode`]. `expected_len` bounds the output so corrupt
/// run lengths cannot balloon.
pub(crate) fn zrle_decode(data: &[u8], expected_len: usize) -> Option<Vec<u8>> {
    let mut out = Vec::with_capacity(expected_len);
    let mut pos = 0usize;
    while pos < data.len() {
        let b = data[pos];
        pos += 1;
        if b == 0 {
            let run = read_varint(data, &mut pos)?;
            if run == 0 || out.len() + run as usize > expected_len {
                return None;
            }
            out.resize(out.len() + run as usize, 0);
        } else {
            if out.len() >= expected_len {
                return None;
            }
            out.push(b);
        }
    }
    if out.len() == expected_len {
        Some(out)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bwt_roundtrip_classics() {
        for data in [
            &b""[..],
            &b"a"[..],
            &b"banana"[..],
            &b"mississippi"[..],
            &b"aaaaaaaa"[..],
            &b"abababab"[..],
            &b"the quick brown fox jumps over the lazy dog"[..],
        ] {
            let (bwt, ptr) = bwt_forward(data);
            assert_eq!(bwt.len(), data.len());
            let back = bwt_inverse(&bwt, ptr).unwrap();
            assert_eq!(back, data, "failed on {:?}", data);
        }
    }

    #[test]
    fn bwt_groups_repeats() {
        let (bwt, _) = bwt_forward(b"abababababababab");
        let runs = 1 + bwt.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(runs <= 4, "bwt output {:?}", bwt);
    }

    #[test]
    fn bwt_inverse_rejects_bad_ptr() {
        let (bwt, _) = bwt_forward(b"banana");
        assert!(bwt_inverse(&bwt, 99).is_none());
    }

    #[test]
    fn mtf_roundtrip() {
        let data = b"bananabread and more bananabread";
        assert_eq!(mtf_decode(&mtf_encode(data)), data);
    }

    #[test]
    fn mtf_front_loads_repeats() {
        let coded = mtf_encode(b"aaaaaa");
        assert_eq!(&coded[1..], &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn zrle_roundtrip() {
        let data = [5u8, 0, 0, 0, 0, 7, 0, 1, 2, 0, 0];
        let coded = zrle_encode(&data);
        assert_eq!(zrle_decode(&coded, data.len()).unwrap(), data);
        assert!(coded.len() < data.len());
    }

    #[test]
    fn zrle_rejects_overrun() {
        let coded = zrle_encode(&[0u8; 100]);
        assert!(zrle_decode(&coded, 50).is_none());
    }

    #[test]
    fn varint_roundtrip() {
        for v in [0u64, 1, 127, 128, 300, 1 << 20, u32::MAX as u64] {
            let mut buf = Vec::new();
            push_varint(&mut buf, v);
            let mut pos = 0;
            assert_eq!(read_varint(&buf, &mut pos), Some(v));
            assert_eq!(pos, buf.len());
        }
    }
}
