//! Stationary Gaussian forcings on the space-time torus with spectral density
//! Ĉ(k) = amplitude·(1+|k₁|)^{−λ₁}(√(1+|k₂|))^{−λ₂}, k = 2πm.
//!
//! Each retained mode m in the half-space {m₂ > 0} ∪ {m₂ = 0, m₁ > 0} draws its
//! coefficient from its own ChaCha stream, so changing the cutoff never moves
//! the draws of other modes. The conjugate mode is filled by symmetry.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::fft::{self, Spectrum};
use crate::grid::{DomainKind, Field, GridSpec};
use crate::kernel::{self, MollifierSpec};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha_prime: f64,
    pub amplitude: f64,
    /// Largest retained |m₁|.
    pub cutoff: usize,
    /// Largest retained |m₂|.
    pub cutoff2: usize,
}

impl CovarianceSpec {
    pub fn new(lambda1: f64, lambda2: f64, alpha_prime: f64, amplitude: f64, cutoff: usize) -> Result<Self> {
        let s = CovarianceSpec { lambda1, lambda2, alpha_prime, amplitude, cutoff, cutoff2: cutoff };
        s.validate()?;
        Ok(s)
    }

    /// Separate cutoffs in x₁ and x₂; parabolic scaling wants cutoff2 ≈ cutoff².
    pub fn with_cutoffs(&self, cutoff: usize, cutoff2: usize) -> Self {
        CovarianceSpec { cutoff, cutoff2, ..*self }
    }

    /// White in x₂: λ₂ = 0, λ₁ = 2α′ − 1.
    pub fn white_in_time(alpha_prime: f64, amplitude: f64, cutoff: usize) -> Result<Self> {
        Self::new(2.0 * alpha_prime - 1.0, 0.0, alpha_prime, amplitude, cutoff)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_prime > 0.25 && self.alpha_prime < 1.0) {
            return param(format!("α′ = {} must lie in (1/4, 1)", self.alpha_prime));
        }
        if (self.lambda1 + self.lambda2 - (2.0 * self.alpha_prime - 1.0)).abs() > 1e-12 {
            return param("λ₁ + λ₂ must equal 2α′ − 1");
        }
        if !(self.lambda1 < 1.0 && self.lambda2 < 2.0) {
            return param("need λ₁ < 1 and λ₂/2 < 1");
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return param("amplitude must be positive");
        }
        Ok(())
    }

    /// Ĉ at integer mode (m₁, m₂); zero beyond the cutoff.
    pub fn c_hat(&self, m1: i64, m2: i64) -> f64 {
        if m1.unsigned_abs() as usize > self.cutoff || m2.unsigned_abs() as usize > self.cutoff2 {
            return 0.0;
        }
        let k1 = 2.0 * PI * m1.abs() as f64;
        let k2 = 2.0 * PI * m2.abs() as f64;
        self.amplitude * (1.0 + k1).powf(-self.lambda1) * (1.0 + k2).sqrt().powf(-self.lambda2)
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        CovarianceSpec { amplitude, ..*self }
    }

    /// Retained modes (m₁, m₂) in the canonical half-space, zero mode first.
    pub fn modes(&self) -> Vec<(i64, i64)> {
        let (c, c2) = (self.cutoff as i64, self.cutoff2 as i64);
        let mut out = vec![(0, 0)];
        for m2 in 0..=c2 {
            for m1 in -c..=c {
                if m2 > 0 || m1 > 0 {
                    out.push((m1, m2));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ForcingSample {
    pub field: Field,
    pub seed: u64,
    pub spec: CovarianceSpec,
}

impl ForcingSample {
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({ "seed": self.seed, "spec": self.spec, "grid": self.field.grid })
    }
}

fn zigzag(m: i64) -> u64 {
    ((m << 1) ^ (m >> 63)) as u64
}

/// Stream id of mode (m₁, m₂).
pub fn mode_stream(m1: i64, m2: i64) -> u64 {
    (zigzag(m1) << 32) | zigzag(m2)
}

/// The coefficient f̂(m) of a sample; `m` must lie in the canonical half-space or be 0.
pub fn mode_coefficient(spec: &CovarianceSpec, seed: u64, m1: i64, m2: i64) -> Complex64 {
    let c = spec.c_hat(m1, m2);
    let mut r = rng::stream(seed, mode_stream(m1, m2));
    let (z1, z2) = rng::normal_pair(&mut r);
    if m1 == 0 && m2 == 0 {
        Complex64::new(c.sqrt() * z1, 0.0)
    } else {
        Complex64::new(z1, z2) * (c / 2.0).sqrt()
    }
}

fn check_grid(spec: &CovarianceSpec, grid: &GridSpec) -> Result<()> {
    spec.validate()?;
    if grid.kind != DomainKind::Torus {
        return param("forcings are sampled on the torus");
    }
    if 2 * spec.cutoff >= grid.n1 || 2 * spec.cutoff2 >= grid.n2 {
        return param(format!(
            "cutoffs ({}, {}) must stay below the Nyquist indices of a {}×{} grid",
            spec.cutoff, spec.cutoff2, grid.n1, grid.n2
        ));
    }
    Ok(())
}

/// Hermitian spectrum of a sample.
pub fn sample_spectrum(spec: &CovarianceSpec, grid: GridSpec, seed: u64) -> Result<Spectrum> {
    check_grid(spec, &grid)?;
    let mut sp = Spectrum::zeros(grid, true);
    let n1 = grid.n1;
    for (m1, m2) in spec.modes() {
        let z = mode_coefficient(spec, seed, m1, m2);
        sp.data[fft::fft_index(m2, grid.n2) * n1 + fft::fft_index(m1, n1)] = z;
        if (m1, m2) != (0, 0) {
            sp.data[fft::fft_index(-m2, grid.n2) * n1 + fft::fft_index(-m1, n1)] = z.conj();
        }
    }
    Ok(sp)
}

pub fn sample_forcing(spec: &CovarianceSpec, grid: GridSpec, seed: u64) -> Result<ForcingSample> {
    let field = sample_spectrum(spec, grid, seed)?.inverse();
    Ok(ForcingSample { field, seed, spec: *spec })
}

pub fn mollified_forcing(f: &ForcingSample, spec: &MollifierSpec) -> Result<Field> {
    kernel::mollify(&f.field, spec)
}

/// E f(x)f(x+lag) = Σ Ĉ(m) cos(2πm·lag).
pub fn covariance(spec: &CovarianceSpec, lag: (f64, f64)) -> f64 {
    let (c, c2) = (spec.cutoff as i64, spec.cutoff2 as i64);
    let mut s = 0.0;
    for m2 in -c2..=c2 {
        for m1 in -c..=c {
            s += spec.c_hat(m1, m2) * (2.0 * PI * (m1 as f64 * lag.0 + m2 as f64 * lag.1)).cos();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::MollifierBase;

    fn spec() -> CovarianceSpec {
        CovarianceSpec::white_in_time(0.9, 1.0, 3).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(CovarianceSpec::new(0.5, 0.5, 0.9, 1.0, 3).is_err());
        assert!(CovarianceSpec::new(0.8, 0.0, 0.9, 1.0, 3).is_ok());
        assert!(CovarianceSpec::new(1.2, -0.4, 0.9, 1.0, 3).is_err());
        assert!(CovarianceSpec::new(0.8, 0.0, 0.9, 0.0, 3).is_err());
        let g = GridSpec::torus(8, 8).unwrap();
        assert!(sample_forcing(&CovarianceSpec::white_in_time(0.9, 1.0, 4).unwrap(), g, 0).is_err());
    }

    #[test]
    fn reproducible_and_real() {
        let g = GridSpec::torus(32, 32).unwrap();
        let s = CovarianceSpec::white_in_time(0.9, 1.0, 10).unwrap();
        let a = sample_forcing(&s, g, 11).unwrap();
        let b = sample_forcing(&s, g, 11).unwrap();
        assert_eq!(a.field.values, b.field.values);
        let c = sample_forcing(&s, g, 12).unwrap();
        assert_ne!(a.field.values, c.field.values);
        let sp = fft::forward_2d(&a.field).unwrap();
        let direct = sample_spectrum(&s, g, 11).unwrap();
        for (x, y) in sp.data.iter().zip(&direct.data) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn cutoff_does_not_shift_other_modes() {
        let small = CovarianceSpec::white_in_time(0.9, 1.0, 3).unwrap();
        let large = CovarianceSpec::white_in_time(0.9, 1.0, 7).unwrap();
        for (m1, m2) in small.modes() {
            assert_eq!(mode_coefficient(&small, 5, m1, m2), mode_coefficient(&large, 5, m1, m2));
        }
    }

    #[test]
    fn monte_carlo_mean_and_variance() {
        let s = spec();
        let probes = [(0, 0), (1, 0), (2, 1), (-3, 2), (0, 3)];
        let n = 10_000;
        for &(m1, m2) in &probes {
            let c = s.c_hat(m1, m2);
            let (mut sum, mut sum2) = (Complex64::new(0.0, 0.0), 0.0);
            for seed in 0..n {
                let z = mode_coefficient(&s, seed, m1, m2);
                sum += z;
                sum2 += z.norm_sqr();
            }
            let mean = sum / n as f64;
            let var = sum2 / n as f64;
            let se = (c / n as f64).sqrt();
            assert!(mean.norm() < 3.0 * se * 2f64.sqrt(), "mode {m1},{m2} mean {mean}");
            assert!((var / c - 1.0).abs() < 0.05, "mode {m1},{m2} variance ratio {}", var / c);
        }
    }

    #[test]
    fn stationarity_proxy() {
        let g = GridSpec::torus(8, 8).unwrap();
        let s = spec();
        let lag = (2usize, 1usize);
        let n = 10_000;
        let bases = [(0usize, 0usize), (3, 5)];
        let mut est = [0.0; 2];
        let mut sq = [0.0; 2];
        for seed in 0..n {
            let f = sample_forcing(&s, g, seed).unwrap().field;
            for (b, &(i, j)) in bases.iter().enumerate() {
                let p = f.at(i, j) * f.at((i + lag.0) % 8, (j + lag.1) % 8);
                est[b] += p;
                sq[b] += p * p;
            }
        }
        let exact = covariance(&s, (lag.0 as f64 / 8.0, lag.1 as f64 / 8.0));
        for b in 0..2 {
            let m = est[b] / n as f64;
            let se = ((sq[b] / n as f64 - m * m) / n as f64).sqrt();
            assert!((m - exact).abs() < 4.0 * se, "base {b}: {m} vs {exact} (se {se})");
        }
    }

    #[test]
    fn mollified_forcing_cases() {
        let g = GridSpec::torus(16, 16).unwrap();
        let s = CovarianceSpec::white_in_time(0.9, 1.0, 5).unwrap();
        let f = sample_forcing(&s, g, 2).unwrap();
        let tiny = MollifierSpec::new(1e-16, MollifierBase::Psi).unwrap();
        assert!(mollified_forcing(&f, &tiny).unwrap().sup_diff(&f.field).unwrap() < 1e-9);
        let one = MollifierSpec::new(1.0, MollifierBase::Gaussian { width: 0.1 }).unwrap();
        let mode = ForcingSample { field: Field::from_fn(g, |x1, _| (2.0 * PI * x1).cos()), seed: 0, spec: s };
        let m = mollified_forcing(&mode, &one).unwrap();
        let damp = one.multiplier(2.0 * PI, 0.0);
        assert!(m.sup_diff(&mode.field.scale(damp)).unwrap() < 1e-14);
        let centred = ForcingSample { field: f.field.sub(&Field::constant(g, f.field.mean())).unwrap(), ..f };
        assert!(mollified_forcing(&centred, &one).unwrap().mean().abs() < 1e-14);
    }
}
