use super::{ModelParams, NnError};

/// Central difference `(f(θ + h·e_i) − f(θ − h·e_i)) / 2h` of an arbitrary
/// scalar function.
pub fn central_difference<F>(f: F, theta: &[f64], index: usize, h: f64) -> Result<f64, NnError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(NnError::Input(format!("step size must be positive, got {h}")));
    }
    if index >= theta.len() {
        return Err(NnError::Input(format!(
            "coordinate {index} out of range for {} parameters",
            theta.len()
        )));
    }
    let mut point = theta.to_vec();
    point[index] = theta[index] + h;
    let plus = f(&point);
    point[index] = theta[index] - h;
    let minus = f(&point);
    Ok((plus - minus) / (2.0 * h))
}

/// Finite-difference derivative of one example's cross-entropy loss with
/// respect to the flat parameter coordinate `param_index`.
pub fn finite_difference_gradient(
    params: &ModelParams,
    image: &[f64],
    label: usize,
    param_index: usize,
    h: f64,
) -> Result<f64, NnError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(NnError::Input(format!("step size must be positive, got {h}")));
    }
    let base = params.params().get(param_index).ok_or_else(|| {
        NnError::Input(format!(
            "coordinate {param_index} out of range for {} parameters",
            params.num_params()
        ))
    })?;
    let mut probe = params.clone();
    probe.params_mut().set(param_index, base + h);
    let plus = probe.example_loss(image, label)?;
    probe.params_mut().set(param_index, base - h);
    let minus = probe.example_loss(image, label)?;
    Ok((plus - minus) / (2.0 * h))
}
