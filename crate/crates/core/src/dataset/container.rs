//! Binary dataset container.
//!
//! Layout, little-endian throughout: `b"PPDS"`, `u32` version, `u32` height,
//! width and channels, `u32` class count followed by each class name as a
//! `u32` byte length plus UTF-8 bytes, then the train and the test split.
//! A split is a `u64` image count, one `u32` label per image and the raw
//! image bytes in HWC order.

use std::io::Write;
use std::path::Path;

use super::{DatasetError, ImageDataset, Split};

const MAGIC: &[u8; 4] = b"PPDS";
const VERSION: u32 = 1;

pub fn write_container(ds: &ImageDataset, path: &Path) -> Result<(), DatasetError> {
    let mut out = Vec::with_capacity(64 + ds.train().images.len() + ds.test().images.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in ds.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(ds.num_classes() as u32).to_le_bytes());
    for name in ds.class_names() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for split in [ds.train(), ds.test()] {
        out.extend_from_slice(&(split.len() as u64).to_le_bytes());
        for &l in &split.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.extend_from_slice(&split.images);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> DatasetError {
        DatasetError::Format {
            kind: "container",
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "need {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn parse_container(bytes: &[u8]) -> Result<ImageDataset, DatasetError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        c.pos = 0;
        return Err(c.err("bad magic, expected PPDS"));
    }
    let version = c.u32()?;
    if version != VERSION {
        c.pos -= 4;
        return Err(c.err(format!("unsupported version {version}")));
    }
    let dims = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let image_len = dims.iter().product::<usize>();
    let classes = c.u32()? as usize;
    let mut names = Vec::with_capacity(classes.min(1 << 16));
    for _ in 0..classes {
        let len = c.u32()? as usize;
        let start = c.pos;
        let raw = c.take(len)?;
        let name = std::str::from_utf8(raw).map_err(|_| DatasetError::Format {
            kind: "container",
            offset: start,
            message: "class name is not UTF-8".into(),
        })?;
        names.push(name.to_string());
    }
    let mut splits = Vec::with_capacity(2);
    for _ in 0..2 {
        let count = c.u64()? as usize;
        let label_bytes = c.take(count.checked_mul(4).ok_or_else(|| c.err("count overflow"))?)?;
        let labels = label_bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let images = c
            .take(count.checked_mul(image_len).ok_or_else(|| c.err("size overflow"))?)?
            .to_vec();
        splits.push(Split { images, labels });
    }
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes after test split"));
    }
    let test = splits.pop().expect("two splits");
    let train = splits.pop().expect("two splits");
    ImageDataset::new(dims, train, test, names)
}

pub fn read_container(path: &Path) -> Result<ImageDataset, DatasetError> {
    parse_container(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::balanced;

    #[test]
    fn round_trip() {
        let ds = balanced(3, 2, [4, 5, 3]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        write_container(&ds, &path).unwrap();
        assert_eq!(read_container(&path).unwrap(), ds);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let ds = balanced(2, 1, [2, 2, 1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        write_container(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(
                parse_container(&bytes[..cut]),
                Err(DatasetError::Format { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            parse_container(&bad),
            Err(DatasetError::Format { offset: 0, .. })
        ));
    }
}
