use super::MetricsError;
use crate::dataset::{ImageDataset, SplitKind};

/// Histogram entropy in bits of each channel of an interleaved 8-bit
/// image, averaged over channels and divided by 8.
pub fn shannon_entropy(image: &[u8], channels: usize) -> Result<f64, MetricsError> {
    if image.is_empty() || channels == 0 || image.len() % channels != 0 {
        return Err(MetricsError::Input(format!(
            "entropy needs a non-empty image of whole pixels ({} bytes, {channels} channels)",
            image.len()
        )));
    }
    let pixels = (image.len() / channels) as f64;
    let mut total = 0.0;
    for ch in 0..channels {
        let mut hist = [0u32; 256];
        for &v in image.iter().skip(ch).step_by(channels) {
            hist[v as usize] += 1;
        }
        let h: f64 = hist
            .iter()
            .filter(|&&n| n > 0)
            .map(|&n| {
                let p = n as f64 / pixels;
                -p * p.log2()
            })
            .sum();
        total += h;
    }
    Ok(total / channels as f64 / 8.0)
}

/// Mean per-image entropy over the train split.
pub fn dataset_entropy(ds: &ImageDataset) -> Result<f64, MetricsError> {
    let n = ds.train().len();
    if n == 0 {
        return Err(MetricsError::Input("entropy of an empty split".into()));
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += shannon_entropy(ds.image(SplitKind::Train, i), ds.channels())?;
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(shannon_entropy(&[7; 64], 1).unwrap(), 0.0);
        let uniform: Vec<u8> = (0..=255).collect();
        assert!((shannon_entropy(&uniform, 1).unwrap() - 1.0).abs() < 1e-12);
        let two: Vec<u8> = (0..64).map(|i| if i % 2 == 0 { 0 } else { 200 }).collect();
        assert!((shannon_entropy(&two, 1).unwrap() - 0.125).abs() < 1e-12);
        assert!(shannon_entropy(&[], 1).is_err());
    }

    #[test]
    fn channels_are_averaged() {
        // Channel 0 constant, channel 1 two-valued, channel 2 constant.
        let img: Vec<u8> = (0..8).flat_map(|i| [5, (i % 2) as u8, 9]).collect();
        let e = shannon_entropy(&img, 3).unwrap();
        assert!((e - 1.0 / 3.0 / 8.0).abs() < 1e-12);
    }
}
