//! IDX files as used by the MNIST family: a big-endian magic
//! `0x00 0x00 <type> <ndim>`, `ndim` big-endian `u32` sizes, then raw bytes.

use std::path::{Path, PathBuf};

use super::{DatasetError, ImageDataset, Split};

const UBYTE: u8 = 0x08;

fn format_err(offset: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Format {
        kind: "IDX",
        offset,
        message: message.into(),
    }
}

fn parse(bytes: &[u8], expected_dims: u8) -> Result<(Vec<usize>, &[u8]), DatasetError> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "file shorter than the 4-byte magic"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(0, "magic must start with two zero bytes"));
    }
    if bytes[2] != UBYTE {
        return Err(format_err(2, format!("unsupported element type 0x{:02x}", bytes[2])));
    }
    if bytes[3] != expected_dims {
        return Err(format_err(
            3,
            format!("expected {expected_dims} dimensions, found {}", bytes[3]),
        ));
    }
    let header = 4 + 4 * expected_dims as usize;
    if bytes.len() < header {
        return Err(format_err(bytes.len(), "truncated dimension header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let body_len: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() < body_len {
        return Err(format_err(
            bytes.len(),
            format!("expected {body_len} data bytes, found {}", body.len()),
        ));
    }
    if body.len() > body_len {
        return Err(format_err(header + body_len, "trailing bytes after data"));
    }
    Ok((dims, body))
}

/// Images decoded from an `idx3-ubyte` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

pub fn read_idx_images(bytes: &[u8]) -> Result<IdxImages, DatasetError> {
    let (dims, body) = parse(bytes, 3)?;
    Ok(IdxImages {
        count: dims[0],
        height: dims[1],
        width: dims[2],
        pixels: body.to_vec(),
    })
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u32>, DatasetError> {
    let (_, body) = parse(bytes, 1)?;
    Ok(body.iter().map(|&b| b as u32).collect())
}

fn read_split(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<u32>), DatasetError> {
    let imgs = read_idx_images(&std::fs::read(images)?)?;
    let labs = read_idx_labels(&std::fs::read(labels)?)?;
    if imgs.count != labs.len() {
        return Err(DatasetError::Input(format!(
            "{} holds {} images but {} has {} labels",
            images.display(),
            imgs.count,
            labels.display(),
            labs.len()
        )));
    }
    Ok((imgs, labs))
}

/// Build a grayscale dataset from the four IDX files of a standard split.
/// Class names are the decimal label values.
pub fn load_idx_files(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
) -> Result<ImageDataset, DatasetError> {
    let (tr, tr_l) = read_split(train_images, train_labels)?;
    let (te, te_l) = read_split(test_images, test_labels)?;
    if (tr.height, tr.width) != (te.height, te.width) && te.count > 0 {
        return Err(DatasetError::Input(format!(
            "train images are {}x{} but test images are {}x{}",
            tr.height, tr.width, te.height, te.width
        )));
    }
    let classes = tr_l.iter().chain(&te_l).copied().max().map_or(0, |m| m as usize + 1);
    ImageDataset::new(
        [tr.height, tr.width, 1],
        Split {
            images: tr.pixels,
            labels: tr_l,
        },
        Split {
            images: te.pixels,
            labels: te_l,
        },
        (0..classes).map(|c| c.to_string()).collect(),
    )
}

fn find(dir: &Path, candidates: &[&str]) -> Result<PathBuf, DatasetError> {
    candidates
        .iter()
        .map(|c| dir.join(c))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            DatasetError::Input(format!(
                "none of {candidates:?} found in {}",
                dir.display()
            ))
        })
}

/// Load a directory holding the usual uncompressed MNIST-style file names
/// (`train-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`, ...).
pub fn load_idx(dir: &Path) -> Result<ImageDataset, DatasetError> {
    load_idx_files(
        &find(dir, &["train-images-idx3-ubyte", "train-images.idx3-ubyte"])?,
        &find(dir, &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?,
        &find(dir, &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"])?,
        &find(dir, &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"])?,
    )
}

#[cfg(test)]
pub(crate) fn encode_images(count: usize, h: usize, w: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, UBYTE, 3];
    for d in [count, h, w] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
pub(crate) fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, UBYTE, 1];
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_two_mnist_sized_images() {
        let bytes = encode_images(2, 28, 28, &[7u8; 2 * 28 * 28]);
        assert_eq!(&bytes[..4], &[0x00, 0x00, 0x08, 0x03]);
        let imgs = read_idx_images(&bytes).unwrap();
        assert_eq!((imgs.count, imgs.height, imgs.width), (2, 28, 28));
        assert_eq!(imgs.pixels.len(), 2 * 784);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = encode_images(2, 28, 28, &[7u8; 2 * 28 * 28]);
        let err = read_idx_images(&bytes[..100]).unwrap_err();
        match err {
            DatasetError::Format { offset, .. } => assert_eq!(offset, 100),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_idx_images(&bytes[..10]).is_err());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = encode_labels(&[1, 2]);
        bytes[3] = 3;
        assert!(matches!(
            read_idx_labels(&bytes),
            Err(DatasetError::Format { offset: 3, .. })
        ));
    }

    #[test]
    fn loads_directory() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, bytes: Vec<u8>| std::fs::write(dir.path().join(name), bytes).unwrap();
        write("train-images-idx3-ubyte", encode_images(3, 4, 4, &[1u8; 48]));
        write("train-labels-idx1-ubyte", encode_labels(&[0, 2, 1]));
        write("t10k-images-idx3-ubyte", encode_images(1, 4, 4, &[2u8; 16]));
        write("t10k-labels-idx1-ubyte", encode_labels(&[2]));
        let ds = load_idx(dir.path()).unwrap();
        assert_eq!(ds.dims(), [4, 4, 1]);
        assert_eq!(ds.train().len(), 3);
        assert_eq!(ds.test().len(), 1);
        assert_eq!(ds.class_names(), &["0", "1", "2"]);
    }
}
