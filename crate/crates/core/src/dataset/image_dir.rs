//! Class-per-directory image trees.
//!
//! Either `root/train/<class>/*` plus `root/test/<class>/*`, or a flat
//! `root/<class>/*` that becomes the train split with an empty test split.
//! Images are read in lexicographic file-name order.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use image::DynamicImage;

use super::{DatasetError, ImageDataset, Split};

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() == want_dirs {
            let hidden = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'));
            if !hidden {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

struct Loaded {
    images: Vec<DynamicImage>,
    labels: Vec<u32>,
}

fn load_tree(dir: &Path, classes: &[String]) -> Result<Loaded, DatasetError> {
    let mut loaded = Loaded {
        images: Vec::new(),
        labels: Vec::new(),
    };
    for class_dir in sorted_entries(dir, true)? {
        let name = dir_name(&class_dir);
        let label = classes.iter().position(|c| *c == name).expect("class collected") as u32;
        for file in sorted_entries(&class_dir, false)? {
            let img = image::open(&file).map_err(|e| DatasetError::Decode {
                path: file.display().to_string(),
                message: e.to_string(),
            })?;
            loaded.images.push(img);
            loaded.labels.push(label);
        }
    }
    Ok(loaded)
}

fn class_names(dirs: &[&Path]) -> Result<Vec<String>, DatasetError> {
    let mut names = BTreeSet::new();
    for dir in dirs {
        for d in sorted_entries(dir, true)? {
            names.insert(dir_name(&d));
        }
    }
    Ok(names.into_iter().collect())
}

pub fn load_image_dir(root: &Path) -> Result<ImageDataset, DatasetError> {
    let train_dir = root.join("train");
    let test_dir = root.join("test");
    let (train, test, classes) = if train_dir.is_dir() {
        let mut dirs = vec![train_dir.as_path()];
        if test_dir.is_dir() {
            dirs.push(&test_dir);
        }
        let classes = class_names(&dirs)?;
        let train = load_tree(&train_dir, &classes)?;
        let test = if test_dir.is_dir() {
            load_tree(&test_dir, &classes)?
        } else {
            Loaded {
                images: Vec::new(),
                labels: Vec::new(),
            }
        };
        (train, test, classes)
    } else {
        let classes = class_names(&[root])?;
        let train = load_tree(root, &classes)?;
        let test = Loaded {
            images: Vec::new(),
            labels: Vec::new(),
        };
        (train, test, classes)
    };
    let Some(first) = train.images.first() else {
        return Err(DatasetError::Input(format!(
            "no training images found under {}",
            root.display()
        )));
    };
    let (w, h) = (first.width() as usize, first.height() as usize);
    let gray = train
        .images
        .iter()
        .chain(&test.images)
        .all(|i| i.color().channel_count() <= 2);
    let channels = if gray { 1 } else { 3 };
    let to_split = |loaded: Loaded| -> Result<Split, DatasetError> {
        let mut images = Vec::with_capacity(loaded.images.len() * h * w * channels);
        for img in &loaded.images {
            if (img.width() as usize, img.height() as usize) != (w, h) {
                return Err(DatasetError::Input(format!(
                    "images must share one size; found {}x{} and {}x{}",
                    w,
                    h,
                    img.width(),
                    img.height()
                )));
            }
            if gray {
                images.extend_from_slice(img.to_luma8().as_raw());
            } else {
                images.extend_from_slice(img.to_rgb8().as_raw());
            }
        }
        Ok(Split {
            images,
            labels: loaded.labels,
        })
    };
    ImageDataset::new([h, w, channels], to_split(train)?, to_split(test)?, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, RgbImage};

    #[test]
    fn loads_split_tree_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        for (split, class, file, value) in [
            ("train", "cat", "b.png", 20u8),
            ("train", "cat", "a.png", 10),
            ("train", "ant", "x.png", 30),
            ("test", "cat", "t.png", 40),
        ] {
            let d = dir.path().join(split).join(class);
            std::fs::create_dir_all(&d).unwrap();
            RgbImage::from_pixel(3, 2, image::Rgb([value, value, value]))
                .save(d.join(file))
                .unwrap();
        }
        let ds = load_image_dir(dir.path()).unwrap();
        assert_eq!(ds.dims(), [2, 3, 3]);
        assert_eq!(ds.class_names(), &["ant", "cat"]);
        assert_eq!(ds.train().labels, vec![0, 1, 1]);
        assert_eq!(ds.image(super::super::SplitKind::Train, 1)[0], 10);
        assert_eq!(ds.test().labels, vec![1]);
    }

    #[test]
    fn flat_grayscale_tree() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["0", "1"] {
            let d = dir.path().join(class);
            std::fs::create_dir_all(&d).unwrap();
            GrayImage::from_pixel(4, 4, image::Luma([9])).save(d.join("i.png")).unwrap();
        }
        let ds = load_image_dir(dir.path()).unwrap();
        assert_eq!(ds.dims(), [4, 4, 1]);
        assert!(ds.test().is_empty());
    }

    #[test]
    fn undecodable_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("a");
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join("bad.png"), b"not an image").unwrap();
        let err = load_image_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("bad.png"));
    }
}
