//! `FLD1` field files.
//!
//! Layout: magic `FLD1`, then height, width and channels as little-endian
//! `u32`, then `height * width * channels` little-endian `f64` values in
//! row-major, channel-minor order. No padding, no checksum.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Field, Shape};

pub const FIELD_MAGIC: [u8; 4] = *b"FLD1";
const HEADER_LEN: usize = 16;

pub fn encode_field(f: &Field) -> Vec<u8> {
    let s = f.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * s.len());
    out.extend_from_slice(&FIELD_MAGIC);
    for dim in [s.height, s.width, s.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Header(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if bytes[..4] != FIELD_MAGIC {
        return Err(Error::Header(format!("bad magic {:02x?}", &bytes[..4])));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2)).map_err(|e| Error::Header(e.to_string()))?;
    let expected = shape.len() * 8;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::Header(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field::from_vec(shape, data)
}

/// Writes `f` to `path`, creating missing parent directories.
pub fn save_field(f: &Field, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_field(f))?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    decode_field(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_field;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn header_bytes_are_exact() {
        let f = Field::constant(Shape::new(2, 3, 1).unwrap(), 1.5);
        let b = encode_field(&f);
        assert_eq!(&b[..16], &[0x46, 0x4C, 0x44, 0x31, 2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(b.len(), 16 + 6 * 8);
        assert_eq!(&b[16..24], &1.5f64.to_le_bytes());
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fld");
        let f = gaussian_field(&mut Rng::new(1), Shape::new(17, 9, 2).unwrap(), 3.0).unwrap();
        save_field(&f, &path).unwrap();
        let g = load_field(&path).unwrap();
        assert!(f.data().iter().zip(g.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(f.shape(), g.shape());
    }

    #[test]
    fn large_field_round_trip() {
        let f = gaussian_field(&mut Rng::new(2), Shape::new(1024, 1024, 2).unwrap(), 1.0).unwrap();
        assert_eq!(decode_field(&encode_field(&f)).unwrap(), f);
    }

    #[test]
    fn distinct_errors() {
        let f = Field::constant(Shape::new(4, 4, 1).unwrap(), 1.0);
        let mut bytes = encode_field(&f);
        bytes[0] = b'X';
        assert!(matches!(decode_field(&bytes), Err(Error::Header(_))));

        let bytes = encode_field(&f);
        assert!(matches!(
            decode_field(&bytes[..bytes.len() - 8]),
            Err(Error::Truncated { expected: 128, found: 120 })
        ));
        assert!(matches!(decode_field(&bytes[..10]), Err(Error::Header(_))));
        assert!(matches!(load_field("/nonexistent/dir/x.fld"), Err(Error::Io(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_bit_exact(h in 1usize..12, w in 1usize..12, c in 1usize..=2, seed in any::<u64>()) {
            let shape = Shape::new(h, w, c).unwrap();
            let f = gaussian_field(&mut Rng::new(seed), shape, 1e3).unwrap();
            let g = decode_field(&encode_field(&f)).unwrap();
            prop_assert!(f.data().iter().zip(g.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
