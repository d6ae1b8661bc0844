//! FFT plumbing. Forward transforms return Fourier-series coefficients
//! (f = Σ f̂ e^{ik·x}), so a constant field has f̂(0) equal to the constant.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Result};
use crate::grid::{Field, GridSpec};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Signed integer frequency of FFT index `i` for length `n`; the Nyquist index maps to −n/2.
#[inline]
pub fn freq_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[inline]
pub fn fft_index(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Wave numbers and Nyquist flags for one spectral coefficient.
#[derive(Clone, Copy, Debug)]
pub struct Wave {
    pub k1: f64,
    pub k2: f64,
    pub nyq1: bool,
    pub nyq2: bool,
}

/// Spectrum of a field. `two_d` spectra are transformed in both directions;
/// otherwise only along x₁ (row by row) and the second coordinate is x₂.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub grid: GridSpec,
    pub data: Vec<Complex64>,
    pub two_d: bool,
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

pub fn forward_x1(f: &Field) -> Spectrum {
    let n1 = f.grid.n1;
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(n1, false).process(&mut data);
    let s = 1.0 / n1 as f64;
    data.iter_mut().for_each(|c| *c *= s);
    Spectrum { grid: f.grid, data, two_d: false }
}

pub fn forward_2d(f: &Field) -> Result<Spectrum> {
    if !f.grid.is_periodic2() {
        return domain("two-dimensional transform of a non-periodic field");
    }
    let mut sp = forward_x1(f);
    let rows = f.grid.rows();
    let n1 = f.grid.n1;
    let mut t = transpose(&sp.data, rows, n1);
    plan(rows, false).process(&mut t);
    let s = 1.0 / rows as f64;
    t.iter_mut().for_each(|c| *c *= s);
    sp.data = transpose(&t, n1, rows);
    sp.two_d = true;
    Ok(sp)
}

impl Spectrum {
    pub fn zeros(grid: GridSpec, two_d: bool) -> Self {
        Spectrum { grid, data: vec![Complex64::new(0.0, 0.0); grid.len()], two_d }
    }

    #[inline]
    pub fn wave(&self, i: usize, j: usize) -> Wave {
        let n1 = self.grid.n1;
        let m1 = freq_index(i, n1);
        let k1 = 2.0 * PI * m1 as f64;
        let nyq1 = n1 % 2 == 0 && i == n1 / 2;
        if self.two_d {
            let rows = self.grid.rows();
            let m2 = freq_index(j, rows);
            let p = self.grid.period2().unwrap_or(1.0);
            Wave { k1, k2: 2.0 * PI * m2 as f64 / p, nyq1, nyq2: j == rows / 2 }
        } else {
            Wave { k1, k2: self.grid.x2(j), nyq1, nyq2: false }
        }
    }

    /// Multiply each coefficient by `mult(wave)`.
    pub fn apply(&self, mult: impl Fn(Wave) -> Complex64) -> Spectrum {
        let n1 = self.grid.n1;
        let mut data = self.data.clone();
        for j in 0..self.grid.rows() {
            for i in 0..n1 {
                data[j * n1 + i] *= mult(self.wave(i, j));
            }
        }
        Spectrum { grid: self.grid, data, two_d: self.two_d }
    }

    pub fn apply_real(&self, mult: impl Fn(Wave) -> f64) -> Spectrum {
        self.apply(|w| Complex64::new(mult(w), 0.0))
    }

    pub fn inverse(&self) -> Field {
        let n1 = self.grid.n1;
        let rows = self.grid.rows();
        let mut data = self.data.clone();
        if self.two_d {
            let mut t = transpose(&data, rows, n1);
            plan(rows, true).process(&mut t);
            data = transpose(&t, n1, rows);
        }
        plan(n1, true).process(&mut data);
        Field { grid: self.grid, values: data.iter().map(|c| c.re).collect() }
    }
}

/// (ik)^order with the Nyquist coefficient removed for odd orders.
#[inline]
pub fn ik_pow(k: f64, nyq: bool, order: u32) -> Complex64 {
    if order == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if nyq && order % 2 == 1 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, k).powu(order)
}

pub fn derivative_x1(f: &Field, order: u32) -> Field {
    if order == 0 {
        return f.clone();
    }
    forward_x1(f).apply(|w| ik_pow(w.k1, w.nyq1, order)).inverse()
}

pub fn derivative_x2(f: &Field, order: u32) -> Result<Field> {
    if order == 0 {
        return Ok(f.clone());
    }
    Ok(forward_2d(f)?.apply(|w| ik_pow(w.k2, w.nyq2, order)).inverse())
}

/// Fourier-series coefficients of a periodic 1-d array.
pub fn forward_1d(v: &[f64]) -> Vec<Complex64> {
    let n = v.len();
    let mut data: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan(n, false).process(&mut data);
    data.iter_mut().for_each(|c| *c /= n as f64);
    data
}

pub fn inverse_1d(c: &[Complex64]) -> Vec<f64> {
    let mut data = c.to_vec();
    plan(c.len(), true).process(&mut data);
    data.iter().map(|z| z.re).collect()
}

/// Spectral x₁-derivative of a periodic 1-d array.
pub fn derivative_1d(v: &[f64], order: u32) -> Vec<f64> {
    let n = v.len();
    let mut c = forward_1d(v);
    for (i, z) in c.iter_mut().enumerate() {
        let k = 2.0 * PI * freq_index(i, n) as f64;
        *z *= ik_pow(k, i == n / 2, order);
    }
    inverse_1d(&c)
}
