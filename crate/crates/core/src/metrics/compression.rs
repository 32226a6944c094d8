use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::dataset::{ImageDataset, SplitKind};

pub const JPEG_QUALITY: u8 = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec {
    /// Baseline JPEG at [`JPEG_QUALITY`].
    Lossy,
    /// PNG with default settings.
    Lossless,
}

impl Codec {
    fn name(self) -> &'static str {
        match self {
            Codec::Lossy => "JPEG",
            Codec::Lossless => "PNG",
        }
    }
}

fn encode(image: &[u8], [h, w, c]: [usize; 3], codec: Codec) -> Result<usize, MetricsError> {
    let color = match c {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        other => {
            return Err(MetricsError::Input(format!(
                "cannot encode images with {other} channels"
            )))
        }
    };
    let err = |e: image::ImageError| MetricsError::Codec {
        codec: codec.name(),
        message: e.to_string(),
    };
    let mut buf = Vec::new();
    match codec {
        Codec::Lossy => JpegEncoder::new_with_quality(&mut buf, JPEG_QUALITY)
            .write_image(image, w as u32, h as u32, color)
            .map_err(err)?,
        Codec::Lossless => PngEncoder::new(&mut buf)
            .write_image(image, w as u32, h as u32, color)
            .map_err(err)?,
    }
    Ok(buf.len())
}

/// Raw size `H·W·C` over encoded size.
pub fn compression_ratio(image: &[u8], dims: [usize; 3], codec: Codec) -> Result<f64, MetricsError> {
    if image.len() != dims.iter().product::<usize>() || image.is_empty() {
        return Err(MetricsError::Input(format!(
            "image of {} bytes does not match dimensions {dims:?}",
            image.len()
        )));
    }
    Ok(image.len() as f64 / encode(image, dims, codec)? as f64)
}

/// Per-image compression averaged over the train split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionSummary {
    /// Mean of raw over compressed size.
    pub ratio: f64,
    /// Mean of compressed over raw size.
    pub inverse_ratio: f64,
    /// `1 - inverse_ratio`.
    pub savings: f64,
}

pub fn dataset_compression(ds: &ImageDataset, codec: Codec) -> Result<CompressionSummary, MetricsError> {
    let n = ds.train().len();
    if n == 0 {
        return Err(MetricsError::Input("compression of an empty split".into()));
    }
    let (mut ratio, mut inverse) = (0.0, 0.0);
    for i in 0..n {
        let r = compression_ratio(ds.image(SplitKind::Train, i), ds.dims(), codec)?;
        ratio += r;
        inverse += 1.0 / r;
    }
    let inverse_ratio = inverse / n as f64;
    Ok(CompressionSummary {
        ratio: ratio / n as f64,
        inverse_ratio,
        savings: 1.0 - inverse_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_beats_noise() {
        let constant = vec![128u8; 32 * 32 * 3];
        let c = compression_ratio(&constant, [32, 32, 3], Codec::Lossless).unwrap();
        assert!(c > 5.0, "ratio {c}");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let noise: Vec<u8> = (0..3072).map(|_| rng.random()).collect();
        let n = compression_ratio(&noise, [32, 32, 3], Codec::Lossless).unwrap();
        assert!(n < c);
        let j = compression_ratio(&constant, [32, 32, 3], Codec::Lossy).unwrap();
        assert!(j > 1.0);
    }

    #[test]
    fn grayscale_encodes() {
        let img = vec![3u8; 28 * 28];
        assert!(compression_ratio(&img, [28, 28, 1], Codec::Lossy).unwrap() > 1.0);
        assert!(compression_ratio(&img, [28, 28, 2], Codec::Lossy).is_err());
    }
}
