//! Middlebury `.flo`: `f32` magic 202021.25 (bytes "PIEH"), `i32` width,
//! `i32` height, then interleaved `(u, v)` `f32` pairs in row-major order,
//! all little-endian. Components of magnitude 1e9 or more (or NaN) mark
//! unknown flow.

use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

const MAGIC: f32 = 202021.25;
const UNKNOWN: f32 = 1e10;
const UNKNOWN_THRESH: f32 = 1e9;

pub fn encode_flo(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * f.u().len());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&(f.width() as i32).to_le_bytes());
    out.extend_from_slice(&(f.height() as i32).to_le_bytes());
    for i in 0..f.u().len() {
        let (u, v) = if f.is_valid(i) {
            (f.u()[i], f.v()[i])
        } else {
            (UNKNOWN, UNKNOWN)
        };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let word = |i: usize| -> [u8; 4] { bytes[4 * i..4 * i + 4].try_into().unwrap() };
    if bytes.len() < 12 {
        return Err(Error::Format(format!(".flo header truncated ({} bytes)", bytes.len())));
    }
    let magic = f32::from_le_bytes(word(0));
    if magic != MAGIC {
        return Err(Error::Format(format!("bad .flo magic {magic}")));
    }
    let w = i32::from_le_bytes(word(1));
    let h = i32::from_le_bytes(word(2));
    if w <= 0 || h <= 0 || (w as u64) * (h as u64) > (1 << 28) {
        return Err(Error::Format(format!("implausible .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let n = w * h;
    if bytes.len() != 12 + 8 * n {
        return Err(Error::Format(format!(
            ".flo payload has {} bytes, expected {}",
            bytes.len() - 12,
            8 * n
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut valid = vec![true; n];
    let mut any_invalid = false;
    for i in 0..n {
        let a = f32::from_le_bytes(word(3 + 2 * i));
        let b = f32::from_le_bytes(word(4 + 2 * i));
        let unknown = |x: f32| !(x.abs() < UNKNOWN_THRESH);
        if unknown(a) || unknown(b) {
            valid[i] = false;
            any_invalid = true;
        }
        u.push(a);
        v.push(b);
    }
    FlowField::with_valid(w, h, u, v, any_invalid.then_some(valid)).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_flo(f: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(f)).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_pixel_reference_bytes() {
        let f = FlowField::new(1, 1, vec![1.5], vec![-2.0]).unwrap();
        let bytes = encode_flo(&f);
        assert_eq!(bytes.len(), 20);
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "5049454801000000010000000000c03f000000c0");
        assert_eq!(&bytes[..4], b"PIEH");
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = encode_flo(&FlowField::constant(2, 2, 1.0, 0.0));
        assert!(decode_flo(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_flo(&bytes[..8]).is_err());
        bytes[..4].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_flo(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_flow_becomes_invalid() {
        let f = FlowField::with_valid(2, 1, vec![1.0, 0.0], vec![2.0, 0.0], Some(vec![true, false])).unwrap();
        let back = decode_flo(&encode_flo(&f)).unwrap();
        assert_eq!(back.valid(), Some(&[true, false][..]));
        assert_eq!(back.get(0, 0), (1.0, 2.0));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            w in 1usize..7, h in 1usize..7,
            vals in proptest::collection::vec(-1e6f32..1e6, 72),
        ) {
            let n = w * h;
            let f = FlowField::new(w, h, vals[..n].to_vec(), vals[n..2 * n].to_vec()).unwrap();
            let g = decode_flo(&encode_flo(&f)).unwrap();
            prop_assert_eq!(f.u().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            g.u().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(f.v().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            g.v().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!((g.width(), g.height()), (w, h));
        }
    }
}
