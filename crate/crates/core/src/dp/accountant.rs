//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Integer orders use the exact binomial expansion of
//! `A_λ = E_{z∼N(0,σ²)} [((1−q) + q·exp((2z−1)/2σ²))^λ]`; fractional orders
//! use the two-sided erfc series. Both are evaluated in log space.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::DpError;

/// Default RDP orders: `1.25, 1.5, …, 63` followed by the integers `64..=256`.
pub fn default_orders() -> Vec<f64> {
    let mut orders: Vec<f64> = (0..=247).map(|k| 1.25 + 0.25 * k as f64).collect();
    orders.extend((64..=256).map(f64::from));
    orders
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(exp(a) − exp(b))`, assuming `a ≥ b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    let d = a - b;
    if d > 700.0 {
        return a;
    }
    d.exp_m1().ln() + b
}

fn log_erfc(x: f64) -> f64 {
    if x < 25.0 {
        erfc(x).ln()
    } else {
        let r = 1.0 / (x * x);
        -x * x - x.ln() - 0.5 * std::f64::consts::PI.ln()
            + (1.0 - 0.5 * r + 0.75 * r * r - 1.875 * r * r * r).ln()
    }
}

fn log_a_integer(q: f64, sigma: f64, order: u64) -> f64 {
    let a = order as f64;
    let ln_fact_a = ln_gamma(a + 1.0);
    let mut log_a = f64::NEG_INFINITY;
    for i in 0..=order {
        let i = i as f64;
        let log_coef = ln_fact_a - ln_gamma(i + 1.0) - ln_gamma(a - i + 1.0);
        let term = log_coef
            + i * q.ln()
            + (a - i) * (-q).ln_1p()
            + (i * i - i) / (2.0 * sigma * sigma);
        log_a = log_add(log_a, term);
    }
    log_a
}

const MAX_SERIES_TERMS: usize = 2_000_000;

fn log_a_fractional(q: f64, sigma: f64, order: f64) -> f64 {
    let mut log_a0 = f64::NEG_INFINITY;
    let mut log_a1 = f64::NEG_INFINITY;
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let s2 = std::f64::consts::SQRT_2 * sigma;
    // Generalized binomial coefficient C(order, i), tracked as sign + log|·|.
    let mut log_coef = 0.0f64;
    let mut positive = true;
    for i in 0..MAX_SERIES_TERMS {
        let fi = i as f64;
        if i > 0 {
            let ratio = (order - fi + 1.0) / fi;
            if ratio == 0.0 {
                break;
            }
            if ratio < 0.0 {
                positive = !positive;
            }
            log_coef += ratio.abs().ln();
        }
        let j = order - fi;
        let log_t0 = log_coef + fi * q.ln() + j * (-q).ln_1p();
        let log_t1 = log_coef + j * q.ln() + fi * (-q).ln_1p();
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / s2);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / s2);
        let log_s0 = log_t0 + (fi * fi - fi) / (2.0 * sigma * sigma) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
        if positive {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        if log_s0.max(log_s1) < -30.0 {
            break;
        }
    }
    log_add(log_a0, log_a1)
}

/// Single-step RDP of the subsampled Gaussian mechanism at `order`.
pub fn rdp_single_step(q: f64, sigma: f64, order: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if q == 1.0 {
        return order / (2.0 * sigma * sigma);
    }
    if sigma.is_infinite() {
        return 0.0;
    }
    let log_a = if order.fract() == 0.0 {
        log_a_integer(q, sigma, order as u64)
    } else {
        log_a_fractional(q, sigma, order)
    };
    (log_a / (order - 1.0)).max(0.0)
}

fn check_orders(orders: &[f64]) -> Result<(), DpError> {
    if orders.is_empty() {
        return Err(DpError::Input("no RDP orders given".into()));
    }
    if let Some(o) = orders.iter().find(|&&o| !(o > 1.0) || !o.is_finite()) {
        return Err(DpError::Input(format!("RDP order {o} must exceed 1")));
    }
    Ok(())
}

/// RDP of `steps` compositions of the subsampled Gaussian, one value per order.
pub fn compute_rdp(q: f64, sigma: f64, steps: u64, orders: &[f64]) -> Result<Vec<f64>, DpError> {
    check_orders(orders)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(DpError::Input(format!("sampling rate {q} outside (0, 1]")));
    }
    if steps == 0 {
        return Err(DpError::Input("steps must be >= 1".into()));
    }
    if sigma == 0.0 {
        return Err(DpError::InfiniteBudget);
    }
    if !(sigma > 0.0) {
        return Err(DpError::Input(format!("noise multiplier {sigma} must be > 0")));
    }
    Ok(orders
        .iter()
        .map(|&o| steps as f64 * rdp_single_step(q, sigma, o))
        .collect())
}

/// How RDP guarantees are translated into `(ε, δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conversion {
    /// `ε = rdp + log1p(−1/λ) − log(δ·λ)/(λ−1)`, with the KL shortcut
    /// `ε = 0` when `δ² + expm1(−rdp) ≥ 0`.
    #[default]
    Improved,
    /// `ε = rdp + log(1/δ)/(λ−1)`.
    Classic,
}

/// Convert per-order RDP to `(ε, best_order)` with the default conversion.
pub fn rdp_to_eps(rdp: &[f64], orders: &[f64], delta: f64) -> Result<(f64, f64), DpError> {
    rdp_to_eps_with(Conversion::Improved, rdp, orders, delta)
}

pub fn rdp_to_eps_with(
    conversion: Conversion,
    rdp: &[f64],
    orders: &[f64],
    delta: f64,
) -> Result<(f64, f64), DpError> {
    check_orders(orders)?;
    if rdp.len() != orders.len() {
        return Err(DpError::Input(format!(
            "{} RDP values for {} orders",
            rdp.len(),
            orders.len()
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::Input(format!("delta {delta} outside (0, 1)")));
    }
    let mut best = (f64::INFINITY, orders[0]);
    for (&order, &r) in orders.iter().zip(rdp) {
        if r < 0.0 || r.is_nan() {
            return Err(DpError::Numeric(format!("negative RDP {r} at order {order}")));
        }
        let eps = match conversion {
            Conversion::Classic => r + (1.0 / delta).ln() / (order - 1.0),
            Conversion::Improved => {
                if delta * delta + (-r).exp_m1() >= 0.0 {
                    0.0
                } else if order > 1.01 {
                    r + (-1.0 / order).ln_1p() - (delta * order).ln() / (order - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        };
        if eps < best.0 {
            best = (eps, order);
        }
    }
    Ok((best.0.max(0.0), best.1))
}

/// Running RDP totals over a fixed order grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantState {
    pub orders: Vec<f64>,
    pub rdp: Vec<f64>,
}

impl AccountantState {
    pub fn new(orders: Vec<f64>) -> Result<Self, DpError> {
        check_orders(&orders)?;
        let rdp = vec![0.0; orders.len()];
        Ok(Self { orders, rdp })
    }

    pub fn compose(&mut self, q: f64, sigma: f64, steps: u64) -> Result<(), DpError> {
        let step = compute_rdp(q, sigma, steps, &self.orders)?;
        for (acc, s) in self.rdp.iter_mut().zip(step) {
            *acc += s;
        }
        Ok(())
    }

    pub fn epsilon(&self, delta: f64) -> Result<(f64, f64), DpError> {
        rdp_to_eps(&self.rdp, &self.orders, delta)
    }
}

impl Default for AccountantState {
    fn default() -> Self {
        Self::new(default_orders()).expect("default orders are valid")
    }
}

/// ε spent by `steps` subsampled-Gaussian steps, over the default orders.
pub fn epsilon_for(q: f64, sigma: f64, steps: u64, delta: f64) -> Result<f64, DpError> {
    let orders = default_orders();
    let rdp = compute_rdp(q, sigma, steps, &orders)?;
    Ok(rdp_to_eps(&rdp, &orders, delta)?.0)
}

pub const SIGMA_SEARCH_BOUNDS: (f64, f64) = (1e-3, 1e3);
const SIGMA_TOLERANCE: f64 = 1e-4;

/// Smallest noise multiplier (to relative precision 1e-4) whose ε at
/// `delta` does not exceed `target_eps`.
pub fn calibrate_sigma(target_eps: f64, delta: f64, q: f64, steps: u64) -> Result<f64, DpError> {
    if !(target_eps > 0.0) || !target_eps.is_finite() {
        return Err(DpError::Input(format!(
            "target epsilon must be finite and > 0, got {target_eps}"
        )));
    }
    let orders = default_orders();
    let eps_at = |sigma: f64| -> Result<f64, DpError> {
        let rdp = compute_rdp(q, sigma, steps, &orders)?;
        Ok(rdp_to_eps(&rdp, &orders, delta)?.0)
    };
    let (mut lo, mut hi) = SIGMA_SEARCH_BOUNDS;
    if eps_at(hi)? > target_eps {
        return Err(DpError::Calibration(format!(
            "epsilon {target_eps} unattainable even with sigma = {hi}"
        )));
    }
    if eps_at(lo)? <= target_eps {
        return Err(DpError::Calibration(format!(
            "epsilon {target_eps} already met at the smallest sigma {lo}"
        )));
    }
    while hi / lo - 1.0 > SIGMA_TOLERANCE {
        let mid = (lo * hi).sqrt();
        if eps_at(mid)? <= target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_batch_closed_form() {
        assert_eq!(compute_rdp(1.0, 1.0, 1, &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(compute_rdp(1.0, 2.0, 10, &[4.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn zero_noise_is_an_infinite_budget() {
        assert!(matches!(
            compute_rdp(0.1, 0.0, 1, &[2.0]),
            Err(DpError::InfiniteBudget)
        ));
    }

    #[test]
    fn classic_conversion_plug_in() {
        let delta = (-1.0f64).exp();
        let (eps, order) = rdp_to_eps_with(Conversion::Classic, &[1.0], &[2.0], delta).unwrap();
        assert!((eps - 2.0).abs() < 1e-12);
        assert_eq!(order, 2.0);
    }

    #[test]
    fn empty_orders_rejected() {
        assert!(rdp_to_eps(&[], &[], 1e-5).is_err());
    }

    #[test]
    fn larger_delta_never_increases_epsilon() {
        let orders = default_orders();
        let rdp = compute_rdp(0.01, 1.1, 1000, &orders).unwrap();
        for conv in [Conversion::Classic, Conversion::Improved] {
            let mut last = f64::INFINITY;
            for delta in [1e-9, 1e-7, 1e-5, 1e-3, 1e-1] {
                let (eps, _) = rdp_to_eps_with(conv, &rdp, &orders, delta).unwrap();
                assert!(eps <= last);
                last = eps;
            }
        }
    }

    #[test]
    fn integer_and_fractional_paths_agree_near_integers() {
        // The fractional series is continuous in the order.
        for &(q, sigma) in &[(0.01, 1.5), (0.1, 0.8)] {
            let int = rdp_single_step(q, sigma, 8.0);
            let frac = rdp_single_step(q, sigma, 8.0 + 1e-9);
            assert!((int - frac).abs() <= 1e-6 * int.max(1e-12), "{int} vs {frac}");
        }
    }

    #[test]
    fn default_orders_grid() {
        let o = default_orders();
        assert_eq!(o[0], 1.25);
        assert!(o.contains(&63.0) && o.contains(&64.0) && o.contains(&256.0));
        assert!(o.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn calibration_rejects_nonpositive_target() {
        assert!(calibrate_sigma(0.0, 1e-5, 0.01, 100).is_err());
    }
}
