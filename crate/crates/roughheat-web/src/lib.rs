//! Browser bindings for three small operations: sampling a forcing, smoothing it with
//! ψ_T, and the decay of a heat layer started from rough boundary data.
//!
//! The plain functions are usable (and tested) natively; the `wasm_bindgen` wrappers
//! only convert errors.

use roughheat::fit::loglog_slope;
use roughheat::kernel;
use roughheat::noise::{sample_forcing, CovarianceSpec};
use roughheat::refsol::{heat_layer_rows, BoundaryData};
use roughheat::{Field, GridSpec, Result};
use wasm_bindgen::prelude::*;

/// An n×n forcing sample (x₁ fastest) with cutoff n/2 − 1.
pub fn forcing(n: usize, alpha_prime: f64, amplitude: f64, seed: u32) -> Result<Vec<f64>> {
    let spec = CovarianceSpec::white_in_time(alpha_prime, amplitude, n / 2 - 1)?;
    Ok(sample_forcing(&spec, GridSpec::torus(n, n)?, seed as u64)?.field.values)
}

/// f_T = ψ_T ∗ f for an n×n periodic field.
pub fn smoothed(values: &[f64], n: usize, t: f64) -> Result<Vec<f64>> {
    let f = Field::from_values(GridSpec::torus(n, n)?, values.to_vec())?;
    Ok(kernel::convolve(&f, t)?.values)
}

/// sup_{x₁}|∂₁ᵏ𝖵(·,x₂)| on a geometric x₂ grid, for data |sin πx₁|^α.
/// Returns [slope, x₂₀, s₀, x₂₁, s₁, …].
pub fn layer_decay(n1: usize, alpha: f64, a0: f64, order: u32, x2_min: f64, x2_max: f64, points: usize) -> Result<Vec<f64>> {
    let data: Vec<f64> = (0..n1).map(|i| (std::f64::consts::PI * i as f64 / n1 as f64).sin().abs().powf(alpha)).collect();
    let r = x2_max / x2_min;
    let xs: Vec<f64> = (0..points).map(|i| x2_min * r.powf(i as f64 / (points.max(2) - 1) as f64)).collect();
    let rows = heat_layer_rows(&BoundaryData::fixed(data), a0, &xs, true, 0, order)?;
    let sups: Vec<f64> = rows.iter().map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    let mut out = vec![loglog_slope(&xs, &sups)];
    for (x, s) in xs.iter().zip(&sups) {
        out.push(*x);
        out.push(*s);
    }
    Ok(out)
}

fn js(e: roughheat::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = sampleForcing)]
pub fn sample_forcing_js(n: usize, alpha_prime: f64, amplitude: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    forcing(n, alpha_prime, amplitude, seed).map_err(js)
}

#[wasm_bindgen(js_name = smooth)]
pub fn smooth_js(values: &[f64], n: usize, t: f64) -> std::result::Result<Vec<f64>, JsError> {
    smoothed(values, n, t).map_err(js)
}

#[wasm_bindgen(js_name = layerDecay)]
pub fn layer_decay_js(
    n1: usize,
    alpha: f64,
    a0: f64,
    order: u32,
    x2_min: f64,
    x2_max: f64,
    points: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    layer_decay(n1, alpha, a0, order, x2_min, x2_max, points).map_err(js)
}
