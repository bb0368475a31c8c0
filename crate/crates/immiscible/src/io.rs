//! IMDT binary tensor container, used for dataset and checkpoint persistence.
//!
//! Layout: magic `0x49 0x4D 0x44 0x54` ("IMDT"), `u8` version = 1, `u32`
//! little-endian ndim, ndim × `u32` little-endian dims, then the raw
//! little-endian `f64` payload in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMDT_MAGIC: [u8; 4] = [0x49, 0x4D, 0x44, 0x54];
pub const IMDT_VERSION: u8 = 1;

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&IMDT_MAGIC)?;
    w.write_all(&[IMDT_VERSION])?;
    let ndim = tensor.shape().len() as u32;
    w.write_all(&ndim.to_le_bytes())?;
    for &dim in tensor.shape() {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for &v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != IMDT_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:02x?}, expected IMDT",
            path.display()
        )));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != IMDT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported IMDT version {}",
            path.display(),
            version[0]
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let ndim = u32::from_le_bytes(buf4) as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format(format!(
            "{}: implausible ndim {ndim}",
            path.display()
        )));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        r.read_exact(&mut buf4)?;
        shape.push(u32::from_le_bytes(buf4) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut buf8 = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut buf8)?;
        data.push(f64::from_le_bytes(buf8));
    }
    // Reject trailing garbage so truncated/concatenated files are caught.
    if r.read(&mut buf8)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after payload",
            path.display()
        )));
    }
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_sample, RngState};
    use proptest::prelude::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.imdt");
        let mut rng = RngState::new(1);
        let t = gaussian_sample(&mut rng, &[7, 3, 2]).unwrap();
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn header_bytes_are_as_documented() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.imdt");
        let t = Tensor::from_vec(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        write_tensor(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"IMDT");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &2u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 17 + 6 * 8);
        assert_eq!(&bytes[17..25], &0.0f64.to_le_bytes());
    }

    #[test]
    fn bad_magic_and_truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.imdt");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Format(_))));

        let good = dir.path().join("good.imdt");
        let t = Tensor::from_vec(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_tensor(&good, &t).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_tensor(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn roundtrip_arbitrary_small(
            rows in 1usize..5, cols in 1usize..5,
            seed in 0u64..1000,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.imdt");
            let mut rng = RngState::new(seed);
            let t = gaussian_sample(&mut rng, &[rows, cols]).unwrap();
            write_tensor(&path, &t).unwrap();
            prop_assert_eq!(read_tensor(&path).unwrap(), t);
        }
    }
}
