use super::{ModelParams, NnError, Tensor};

/// Model-ready images `(N, H, W, C)` in `[0, 1]` with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Samples {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self, NnError> {
        let n = images.shape().first().copied().unwrap_or(0);
        if images.shape().len() != 4 || n != labels.len() {
            return Err(NnError::Shape(format!(
                "{} labels for images of shape {:?}",
                labels.len(),
                images.shape()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        Samples {
            images: self.images.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

impl ModelParams {
    /// Arg-max class of every sample.
    pub fn classify(&self, samples: &Samples) -> Result<Vec<usize>, NnError> {
        let probs = self.predict(&samples.images)?;
        Ok((0..samples.len()).map(|i| argmax(probs.item(i))).collect())
    }

    /// Probability assigned to each sample's true label.
    pub fn true_class_confidence(&self, samples: &Samples) -> Result<Vec<f64>, NnError> {
        let probs = self.predict(&samples.images)?;
        Ok(samples
            .labels
            .iter()
            .enumerate()
            .map(|(i, &y)| probs.item(i)[y])
            .collect())
    }

    pub fn accuracy(&self, samples: &Samples) -> Result<f64, NnError> {
        if samples.is_empty() {
            return Err(NnError::Input("accuracy of an empty set".into()));
        }
        let pred = self.classify(samples)?;
        let correct = pred.iter().zip(&samples.labels).filter(|(p, y)| p == y).count();
        Ok(correct as f64 / samples.len() as f64)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
