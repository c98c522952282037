//! Named-tensor binary file format.
//!
//! Layout: 4-byte magic, u32 version, u32 tensor count, then per tensor:
//! u32 name length, UTF-8 name, u32 rank, u32 dims, f32 little-endian
//! payload in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use super::{MathError, Result, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"KGT1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_tensors(path: &Path, tensors: &[(&str, &Tensor)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(MathError::Checkpoint(format!(
            "bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(MathError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| MathError::Checkpoint(format!("non-UTF-8 name: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r)? as usize);
        }
        // Rank 1 is read back as a single row; rank > 2 is unsupported.
        let (rows, cols) = match dims.as_slice() {
            [n] => (1usize, *n),
            [r, c] => (*r, *c),
            other => {
                return Err(MathError::Checkpoint(format!(
                    "unsupported rank {} for {:?}",
                    other.len(),
                    name
                )))
            }
        };
        let n = rows * cols;
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(rows, cols, data)));
    }
    Ok(out)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_names_shapes_values() {
        let dir = std::env::temp_dir().join(format!("kgt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.bin");
        let a = Tensor::from_rows(&[vec![1.0, -2.5], vec![3.25, 4.0]]);
        let b = Tensor::scalar(0.125);
        save_tensors(&path, &[("layer.w", &a), ("tau", &b)]).unwrap();
        let loaded = load_tensors(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "layer.w");
        assert_eq!(loaded[0].1, a);
        assert_eq!(loaded[1].0, "tau");
        assert_eq!(loaded[1].1, b);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join(format!("kgt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.bin");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(
            load_tensors(&path),
            Err(MathError::Checkpoint(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
