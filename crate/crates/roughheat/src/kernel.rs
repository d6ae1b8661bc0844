//! The convolution family ψ_T, ψ̂_T(k) = exp(−T(k₁⁴ + k₂²)), and the mollifiers ψ′_ε.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Result};
use crate::fft::{self, Spectrum};
use crate::grid::Field;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub t: f64,
}

impl KernelSpec {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return param(format!("kernel scale T = {t} must be positive"));
        }
        Ok(KernelSpec { t })
    }

    pub fn multiplier(&self, k1: f64, k2: f64) -> f64 {
        psi_hat(k1, k2, self.t)
    }
}

#[inline]
pub fn psi_hat(k1: f64, k2: f64, t: f64) -> f64 {
    let k1sq = k1 * k1;
    (-t * (k1sq * k1sq + k2 * k2)).exp()
}

/// The scales 1, 1/2, …, 2^{−j_max}.
pub fn dyadic_ladder(j_max: u32) -> Vec<f64> {
    (0..=j_max).map(|j| 0.5f64.powi(j as i32)).collect()
}

/// Ladder reaching down to the grid scale: T_min^{1/4} ≈ Δx₁.
pub fn grid_ladder(n1: usize) -> Vec<f64> {
    let j = (4 * n1.trailing_zeros()).max(8);
    dyadic_ladder(j)
}

pub fn convolve_spectrum(sp: &Spectrum, t: f64) -> Field {
    sp.apply_real(|w| psi_hat(w.k1, w.k2, t)).inverse()
}

/// f_T = ψ_T ∗ f on a periodic grid.
pub fn convolve(f: &Field, t: f64) -> Result<Field> {
    if !f.grid.is_periodic2() {
        return domain("convolution needs a periodic grid (torus or two-sided)");
    }
    Ok(convolve_spectrum(&fft::forward_2d(f)?, t))
}

/// f_T for every scale in `ts`, sharing one forward transform.
pub fn convolve_ladder(f: &Field, ts: &[f64]) -> Result<Vec<Field>> {
    if !f.grid.is_periodic2() {
        return domain("convolution needs a periodic grid (torus or two-sided)");
    }
    let sp = fft::forward_2d(f)?;
    Ok(ts.iter().map(|&t| convolve_spectrum(&sp, t)).collect())
}

/// [x₁,(·)_T]h = x₁h_T − (x₁h)_T, i.e. convolution with z₁ψ_T(z).
pub fn x1_commutator(h: &Field, t: f64) -> Result<Field> {
    if !h.grid.is_periodic2() {
        return domain("convolution needs a periodic grid (torus or two-sided)");
    }
    let sp = fft::forward_2d(h)?;
    Ok(sp
        .apply(|w| {
            let m = psi_hat(w.k1, w.k2, t) * (-4.0 * t * w.k1 * w.k1 * w.k1);
            if w.nyq1 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, m)
            }
        })
        .inverse())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MollifierBase {
    /// ψ′₁ = ψ₁.
    Psi,
    /// Product Gaussian with standard deviation `width` in x₁ and `width²` in x₂.
    Gaussian { width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub base: MollifierBase,
}

impl MollifierSpec {
    pub fn new(epsilon: f64, base: MollifierBase) -> Result<Self> {
        if !(epsilon > 0.0) {
            return param(format!("mollifier scale ε = {epsilon} must be positive"));
        }
        if let MollifierBase::Gaussian { width } = base {
            if !(width > 0.0) {
                return param("gaussian mollifier width must be positive");
            }
        }
        Ok(MollifierSpec { epsilon, base })
    }

    /// ψ̂′_ε(k) = ψ̂′₁(ε^{1/4}k₁, ε^{1/2}k₂).
    pub fn multiplier(&self, k1: f64, k2: f64) -> f64 {
        let e = self.epsilon;
        match self.base {
            MollifierBase::Psi => psi_hat(k1, k2, e),
            MollifierBase::Gaussian { width } => {
                let a = width * width * e.sqrt() * k1 * k1;
                let b = width.powi(4) * e * k2 * k2;
                (-(a + b) / 2.0).exp()
            }
        }
    }
}

pub fn mollify(f: &Field, spec: &MollifierSpec) -> Result<Field> {
    if !f.grid.is_periodic2() {
        return domain("mollification needs a periodic grid");
    }
    Ok(fft::forward_2d(f)?.apply_real(|w| spec.multiplier(w.k1, w.k2)).inverse())
}

/// Samples of the 1-d inverse transform of (ik)^order·exp(−T|k|^p) on the periodic
/// grid x_n = freq_index(n)·h of length `n` and period `len`.
fn profile_1d(n: usize, len: f64, t: f64, p: i32, order: u32) -> Vec<f64> {
    let coeffs: Vec<Complex64> = (0..n)
        .map(|i| {
            let k = 2.0 * PI * fft::freq_index(i, n) as f64 / len;
            fft::ik_pow(k, i == n / 2, order) * (-t * k.abs().powi(p)).exp()
        })
        .collect();
    fft::inverse_1d(&coeffs).into_iter().map(|v| v / len).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub value: f64,
    /// Contribution of the outer band max(|x₁|,|x₂|) > 7/8 of the box, an estimate
    /// of the mass lost by truncation.
    pub truncation: f64,
}

pub const MOMENT_GRID: usize = 4096;
pub const MOMENT_HALF_WIDTH: f64 = 8.0;

/// ∫ d^α(x,0)|∂₁^i∂₂^j ψ_T(x)|dx by quadrature on a 4096² grid over [−8,8]².
/// ψ_T factorizes into an x₁ profile (quartic symbol) and an x₂ heat kernel,
/// so both factors come from 1-d inverse FFTs.
pub fn moment_integral(alpha: f64, i: u32, j: u32, t: f64) -> Result<MomentReport> {
    moment_integral_on(alpha, i, j, t, MOMENT_GRID, MOMENT_HALF_WIDTH)
}

pub fn moment_integral_on(
    alpha: f64,
    i: u32,
    j: u32,
    t: f64,
    n: usize,
    half_width: f64,
) -> Result<MomentReport> {
    if alpha < 0.0 || !(t > 0.0) {
        return param("moment_integral needs α ≥ 0 and T > 0");
    }
    let len = 2.0 * half_width;
    let h = len / n as f64;
    let a = profile_1d(n, len, t, 4, i);
    let b = profile_1d(n, len, t, 2, j);
    let keep = |v: &[f64]| -> Vec<(f64, f64)> {
        let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        v.iter()
            .enumerate()
            .filter(|(_, x)| x.abs() > 1e-18 * m)
            .map(|(k, x)| ((fft::freq_index(k, n) as f64 * h).abs(), x.abs()))
            .collect()
    };
    let a = keep(&a);
    let b = keep(&b);
    let band = 0.875 * half_width;
    let mut total = 0.0;
    let mut tail = 0.0;
    if alpha == 0.0 {
        for &(x1, va) in &a {
            for &(x2, vb) in &b {
                let c = va * vb;
                total += c;
                if x1 > band || x2 > band {
                    tail += c;
                }
            }
        }
    } else {
        let roots: Vec<f64> = b.iter().map(|&(x2, _)| x2.sqrt()).collect();
        for &(x1, va) in &a {
            for (&(x2, vb), &r) in b.iter().zip(&roots) {
                let c = (x1 + r).powf(alpha) * va * vb;
                total += c;
                if x1 > band || x2 > band {
                    tail += c;
                }
            }
        }
    }
    Ok(MomentReport { value: total * h * h, truncation: tail * h * h })
}

/// Minimum of ψ₁ relative to ψ₁(0), sampled on the moment grid.
pub fn psi1_relative_min() -> f64 {
    let n = MOMENT_GRID;
    let a = profile_1d(n, 2.0 * MOMENT_HALF_WIDTH, 1.0, 4, 0);
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    min / a[0]
}

/// ‖ψ₁‖_{L¹} by quadrature.
pub fn psi1_l1() -> f64 {
    moment_integral(0.0, 0, 0, 1.0).map(|r| r.value).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn multiplier_values() {
        assert_eq!(psi_hat(0.0, 0.0, 3.7), 1.0);
        let expect = (-(2.0 * PI).powi(4)).exp();
        assert!((psi_hat(2.0 * PI, 0.0, 1.0) - expect).abs() <= 1e-15 * expect.max(1e-300));
        let (k1, k2, t) = (3.0, 5.0, 0.01);
        let lhs = psi_hat(k1, k2, t);
        let rhs = psi_hat(t.powf(0.25) * k1, t.sqrt() * k2, 1.0);
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn convolve_single_mode_and_constants() {
        let g = GridSpec::torus(32, 32).unwrap();
        let c = Field::constant(g, 2.5);
        assert!(convolve(&c, 0.3).unwrap().sup_diff(&c).unwrap() < 1e-13);
        let t = 1e-3;
        let f = Field::from_fn(g, |x1, _| (2.0 * PI * x1).cos());
        let e = f.scale((-t * (2.0 * PI).powi(4)).exp());
        assert!(convolve(&f, t).unwrap().sup_diff(&e).unwrap() < 1e-13);
    }

    #[test]
    fn mollifier_cases() {
        let g = GridSpec::torus(32, 32).unwrap();
        let f = Field::from_fn(g, |x1, x2| (2.0 * PI * x1).sin() + (4.0 * PI * x2).cos());
        let m = MollifierSpec::new(1e-3, MollifierBase::Psi).unwrap();
        let a = mollify(&f, &m).unwrap();
        let b = convolve(&f, 1e-3).unwrap();
        assert!(a.sup_diff(&b).unwrap() < 1e-14);
        let gm = MollifierSpec::new(1.0, MollifierBase::Gaussian { width: 0.05 }).unwrap();
        let c = Field::constant(g, -1.5);
        assert!(mollify(&c, &gm).unwrap().sup_diff(&c).unwrap() < 1e-13);
        assert!(mollify(&Field::zeros(g), &gm).unwrap().max_abs() == 0.0);
        let mode = Field::from_fn(g, |x1, _| (2.0 * PI * x1).cos());
        let damped = mollify(&mode, &gm).unwrap();
        let factor = gm.multiplier(2.0 * PI, 0.0);
        assert!(damped.sup_diff(&mode.scale(factor)).unwrap() < 1e-13);
    }

    #[test]
    fn x1_commutator_matches_definition() {
        let g = GridSpec::torus(64, 16).unwrap();
        let h = Field::from_fn(g, |x1, _| (2.0 * PI * x1).cos());
        let t = 1e-3;
        let c = x1_commutator(&h, t).unwrap();
        // z₁ψ_T ∗ cos(2πx₁) = Re[e^{ikx}·FT(z₁ψ_T)(k)] with FT(z₁ψ_T) = −4iTk³ψ̂_T(k).
        let k = 2.0 * PI;
        let amp = 4.0 * t * k.powi(3) * psi_hat(k, 0.0, t);
        let e = Field::from_fn(g, |x1, _| amp * (2.0 * PI * x1).sin());
        assert!(c.sup_diff(&e).unwrap() < 1e-12);
    }

    #[test]
    fn small_moment_grid_sanity() {
        let r = moment_integral_on(0.0, 0, 0, 1.0, 512, 8.0).unwrap();
        assert!(r.value >= 1.0 - 1e-6, "{}", r.value);
        let a = moment_integral_on(1.0, 0, 0, 16.0 * 0.01, 1024, 8.0).unwrap().value;
        let b = moment_integral_on(1.0, 0, 0, 0.01, 1024, 8.0).unwrap().value;
        assert!((a / b - 2.0).abs() < 0.02, "ratio {}", a / b);
    }
}
