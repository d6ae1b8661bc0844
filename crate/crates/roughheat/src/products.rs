//! Singular products ⋄: renormalized offline products v⋄∂₁²v with their exact
//! counterterm, Leibniz products of heat layers against rough fields, classical
//! products against singular heat-layer derivatives, their sums, and the
//! finite-scale reconstruction of U⋄h and F⋄∂₁²U from a model.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Result};
use crate::fft;
use crate::grid::Field;
use crate::kernel::{self, MollifierSpec};
use crate::noise::{CovarianceSpec, ForcingSample};
use crate::norms::{sup_norm, ModellingReport};
use crate::par;
use crate::refsol::{self, ParamFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    Renormalized,
    Leibniz,
    Classical,
    Combined,
    Reconstructed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// (𝖵̃ + v)(a₀)⋄∂₁²v(a₀′) = 𝖵̃⋄∂₁²v + v⋄∂₁²v.
    VPlusVOnV,
    /// (𝖵̃ + v)(a₀)⋄∂₁²(𝖵̃ + v)(a₀′) = (𝖵̃ + v)⋄∂₁²v + (𝖵̃ + v)∂₁²𝖵̃.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterterm {
    pub a0: f64,
    pub a0p: f64,
    pub value: f64,
}

/// Metadata of a product field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductHandle {
    pub kind: ProductKind,
    pub inputs: Vec<String>,
    pub epsilon: Option<f64>,
    pub counterterm: Vec<Counterterm>,
    /// (a₀, a₀′) of the two factors, when the product belongs to a parameter family.
    pub params: Option<(f64, f64)>,
    /// Measured singular weight C(G) of a classical product.
    pub weight: Option<f64>,
    pub mode: Option<CombineMode>,
    pub parts: Vec<ProductHandle>,
}

impl ProductHandle {
    pub fn new(kind: ProductKind, inputs: &[&str]) -> Self {
        ProductHandle {
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            epsilon: None,
            counterterm: Vec::new(),
            params: None,
            weight: None,
            mode: None,
            parts: Vec::new(),
        }
    }

    pub fn with_params(mut self, a0: f64, a0p: f64) -> Self {
        self.params = Some((a0, a0p));
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("product handle serializes")
    }
}

/// Σ Ĉ(k)·m(k)²·(−k₁²)·Re[1/((ik₂ + a₀k₁² + 1)(−ik₂ + a₀′k₁² + 1))] over the listed modes.
pub(crate) fn counterterm_sum(modes: impl Iterator<Item = (f64, f64, f64)>, a0: f64, a0p: f64) -> f64 {
    let mut s = 0.0;
    for (k1, k2, weight) in modes {
        if weight == 0.0 {
            continue;
        }
        let l = Complex64::new(a0 * k1 * k1 + 1.0, k2);
        let lp = Complex64::new(a0p * k1 * k1 + 1.0, -k2);
        s += weight * (-k1 * k1) * (1.0 / (l * lp)).re;
    }
    s
}

/// g₂ = E[v_ε(x,a₀)∂₁²v_ε(x,a₀′)] for a stationary forcing with spectral density Ĉ;
/// `None` means no mollification beyond the spectral cutoff.
pub fn renorm_constant(spec: &CovarianceSpec, moll: Option<&MollifierSpec>, a0: f64, a0p: f64) -> f64 {
    renorm_constant_weighted(spec, |k1, k2| moll.map_or(1.0, |s| s.multiplier(k1, k2).powi(2)), a0, a0p)
}

/// g₂ with an arbitrary real multiplier `weight(k₁,k₂)` in place of m_ε², e.g. ψ̂_τ when
/// only the first factor is regularized by (·)_τ.
pub fn renorm_constant_weighted(spec: &CovarianceSpec, weight: impl Fn(f64, f64) -> f64, a0: f64, a0p: f64) -> f64 {
    let (c, c2) = (spec.cutoff as i64, spec.cutoff2 as i64);
    let modes = (-c2..=c2).flat_map(move |m2| (-c..=c).map(move |m1| (m1, m2))).map(|(m1, m2)| {
        let (k1, k2) = (2.0 * PI * m1 as f64, 2.0 * PI * m2 as f64);
        (k1, k2, spec.c_hat(m1, m2) * weight(k1, k2))
    });
    counterterm_sum(modes, a0, a0p)
}

/// v_ε(·,a₀) and ∂₁²v_ε(·,a₀′) for a forcing sample.
pub fn mollified_pair(f: &ForcingSample, moll: Option<&MollifierSpec>, a0: f64, a0p: f64) -> Result<(Field, Field)> {
    let mut sp = fft::forward_2d(&f.field)?;
    if let Some(m) = moll {
        sp = sp.apply_real(|w| m.multiplier(w.k1, w.k2));
    }
    let v = refsol::periodic_from_spectrum(&sp, a0, 0, 0, true)?;
    let d2 = refsol::periodic_from_spectrum(&sp, a0p, 0, 2, true)?;
    Ok((v, d2))
}

/// v_ε(·,a₀)·∂₁²v_ε(·,a₀′) without counterterm.
pub fn unrenormalized_product(f: &ForcingSample, moll: Option<&MollifierSpec>, a0: f64, a0p: f64) -> Result<Field> {
    let (v, d2) = mollified_pair(f, moll, a0, a0p)?;
    v.mul(&d2)
}

/// v_ε(·,a₀)·∂₁²v_ε(·,a₀′) − g₂(ε,a₀,a₀′).
pub fn renormalized_product(
    f: &ForcingSample,
    moll: Option<&MollifierSpec>,
    a0: f64,
    a0p: f64,
) -> Result<(ProductHandle, Field)> {
    let g2 = renorm_constant(&f.spec, moll, a0, a0p);
    let p = unrenormalized_product(f, moll, a0, a0p)?.map(|x| x - g2);
    let mut h = ProductHandle::new(ProductKind::Renormalized, &["v", "d1^2 v"]).with_params(a0, a0p);
    h.epsilon = Some(moll.map_or(0.0, |m| m.epsilon));
    h.counterterm.push(Counterterm { a0, a0p, value: g2 });
    Ok((h, p))
}

fn same_grid(fields: &[&Field]) -> Result<()> {
    let g = fields[0].grid;
    if fields.iter().any(|f| !f.grid.same_shape(&g) || f.grid.kind != g.kind) {
        return domain("product factors live on different grids");
    }
    Ok(())
}

/// G⋄∂₁²F := ∂₁²(FG) − 2∂₁(F∂₁G) + F∂₁²G, with `g = [G, ∂₁G, ∂₁²G]`.
pub fn leibniz_product(g: &[Field], f: &Field) -> Result<Field> {
    if g.len() < 3 {
        return param("Leibniz product needs G, ∂₁G and ∂₁²G");
    }
    same_grid(&[&g[0], &g[1], &g[2], f])?;
    let outer = fft::derivative_x1(&f.mul(&g[0])?, 2);
    let middle = fft::derivative_x1(&f.mul(&g[1])?, 1);
    let inner = f.mul(&g[2])?;
    let mut out = outer;
    out.axpy(-2.0, &middle)?;
    out.axpy(1.0, &inner)?;
    Ok(out)
}

/// C(G) = max |∂₁²G(x)| / (|x₂|^{(α−2)/2} + |x₂|^{(2α−2)/2}); the row x₂ = 0 is read at Δx₂/2.
pub fn singular_weight(g_d2: &Field, alpha: f64) -> f64 {
    let grid = g_d2.grid;
    let mut c = 0.0f64;
    for j in 0..grid.rows() {
        let mut h = grid.x2(j).abs();
        if h < 0.25 * grid.dx2() {
            h = 0.5 * grid.dx2();
        }
        let w = h.powf((alpha - 2.0) / 2.0) + h.powf((2.0 * alpha - 2.0) / 2.0);
        let m = g_d2.row(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        c = c.max(m / w);
    }
    c
}

/// F ⋄ ∂₁²G := F∂₁²G for G with a measured singular weight not above `cap`.
pub fn classical_singular_product(f: &Field, g_d2: &Field, alpha: f64, cap: f64) -> Result<(ProductHandle, Field)> {
    same_grid(&[f, g_d2])?;
    let c = singular_weight(g_d2, alpha);
    if !(c <= cap) {
        return param(format!("singular weight {c:.3e} exceeds the cap {cap:.3e}"));
    }
    let mut h = ProductHandle::new(ProductKind::Classical, &["F", "d1^2 G"]);
    h.weight = Some(c);
    Ok((h, f.mul(g_d2)?))
}

/// Field sum of the two sub-products of a combined product.
pub fn combined_product(parts: &[(ProductHandle, Field)], mode: CombineMode) -> Result<(ProductHandle, Field)> {
    if parts.len() != 2 {
        return param("a combined product has exactly two parts");
    }
    let kinds = (parts[0].0.kind, parts[1].0.kind);
    let ok = match mode {
        CombineMode::VPlusVOnV => kinds == (ProductKind::Leibniz, ProductKind::Renormalized),
        CombineMode::Full => kinds == (ProductKind::Combined, ProductKind::Classical),
    };
    if !ok {
        return param(format!("parts {kinds:?} do not match the {mode:?} combination"));
    }
    same_grid(&[&parts[0].1, &parts[1].1])?;
    if let (Some(p), Some(q)) = (parts[0].0.params, parts[1].0.params) {
        if (p.0 - q.0).abs() > 1e-12 || (p.1 - q.1).abs() > 1e-12 {
            return param("combined parts carry different parameters");
        }
    }
    let mut h = ProductHandle::new(ProductKind::Combined, &["V~ + v", "d1^2"]);
    h.mode = Some(mode);
    h.params = parts[0].0.params.or(parts[1].0.params);
    h.epsilon = parts.iter().find_map(|p| p.0.epsilon);
    h.parts = parts.iter().map(|p| p.0.clone()).collect();
    Ok((h, parts[0].1.add(&parts[1].1)?))
}

/// Entries of a family convolved at scale T (derivatives dropped).
pub fn convolve_family(fam: &ParamFamily, t: f64) -> Result<ParamFamily> {
    let entries = par::map_range(fam.entries.len(), |i| kernel::convolve(&fam.entries[i], t))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamFamily { label: format!("({})_T", fam.label), params: fam.params.clone(), entries, derivs: Vec::new() })
}

/// a·h_T − (a·h)_T on every node of an h-family, the commutator of a classical product.
pub fn classical_commutator_family(a: &Field, h: &ParamFamily, t: f64) -> Result<ParamFamily> {
    let entries = par::map_range(h.entries.len(), |i| -> Result<Field> {
        let ht = kernel::convolve(&h.entries[i], t)?;
        let aht = kernel::convolve(&a.mul(&h.entries[i])?, t)?;
        a.mul(&ht)?.sub(&aht)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ParamFamily { label: format!("[a,(.)_T] {}", h.label), params: h.params.clone(), entries, derivs: Vec::new() })
}

/// Σ_i σ_i(x)[w_i(x,a_i(x))h_T(x) − (w_i(a₀′)⋄h)_T(x)|_{a₀′=a_i(x)}] + ν(x)[x₁,(·)_T]h(x):
/// the model's prediction of [U,(·)_T]⋄h. `products[i]` is the family a₀′ ↦ w_i(·,a₀′)⋄h.
pub fn model_commutator(
    model: &ModellingReport,
    families: &[&ParamFamily],
    h: &Field,
    products: &[&ParamFamily],
    t: f64,
) -> Result<Field> {
    if families.len() != model.a.len() || products.len() != families.len() {
        return param("one family and one product family per model term");
    }
    let ht = kernel::convolve(h, t)?;
    let mut out = kernel::x1_commutator(h, t)?.mul(&model.nu)?;
    for (i, fam) in families.iter().enumerate() {
        let w = fam.evaluate_at(&model.a[i], 0)?;
        let pt = convolve_family(products[i], t)?.evaluate_at(&model.a[i], 0)?;
        let c = w.mul(&ht)?.sub(&pt)?;
        out.axpy(1.0, &c.mul(&model.sigma[i])?)?;
    }
    Ok(out)
}

/// A product assembled on a ladder of scales.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub handle: ProductHandle,
    /// The surrogate (U⋄h)_T at `t_eval`.
    pub field: Field,
    pub t_eval: f64,
    /// Scales in decreasing order.
    pub ladder: Vec<f64>,
    /// ‖R_{T_j} − (R_{T_{j+1}})_{T_j−T_{j+1}}‖ for consecutive scales.
    pub increments: Vec<f64>,
    /// Largest successive increment ratio over the second half of the ladder.
    pub max_ratio: f64,
}

impl Reconstruction {
    /// The increments decay geometrically with ratio below 0.95.
    pub fn is_geometric(&self) -> bool {
        self.max_ratio < 0.95
    }
}

fn ladder_reconstruction(
    mut ladder: Vec<f64>,
    t_eval: f64,
    handle: ProductHandle,
    surrogate: impl Fn(f64) -> Result<Field> + Sync,
) -> Result<Reconstruction> {
    ladder.sort_by(|a, b| b.total_cmp(a));
    ladder.dedup();
    let k = ladder
        .iter()
        .position(|&t| (t - t_eval).abs() <= 1e-12 * t_eval)
        .ok_or_else(|| crate::Error::Parameter(format!("T_eval = {t_eval} is not on the ladder")))?;
    let fields = par::map_range(ladder.len(), |j| surrogate(ladder[j])).into_iter().collect::<Result<Vec<_>>>()?;
    let mut increments = Vec::with_capacity(ladder.len().saturating_sub(1));
    for j in 0..ladder.len().saturating_sub(1) {
        let back = kernel::convolve(&fields[j + 1], ladder[j] - ladder[j + 1])?;
        increments.push(sup_norm(&fields[j].sub(&back)?).value);
    }
    let tail = increments.len() / 2;
    let max_ratio = increments[tail..]
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .fold(0.0f64, f64::max);
    Ok(Reconstruction { handle, field: fields[k].clone(), t_eval, ladder, increments, max_ratio })
}

/// (U⋄h)_T ≈ U·h_T − σ_i E_diag[w_i,(·)_T]⋄h − ν[x₁,(·)_T]h at every ladder scale,
/// reported at `t_eval` with the Cauchy increments of the ladder.
#[allow(non_snake_case)]
pub fn reconstruct_U_product(
    u: &Field,
    model: &ModellingReport,
    families: &[&ParamFamily],
    h: &Field,
    products: &[&ParamFamily],
    ladder: &[f64],
    t_eval: f64,
) -> Result<Reconstruction> {
    same_grid(&[u, h, &model.nu])?;
    let mut handle = ProductHandle::new(ProductKind::Reconstructed, &["U", "h"]);
    handle.inputs.extend(model.references.iter().cloned());
    ladder_reconstruction(ladder.to_vec(), t_eval, handle, |t| {
        let uh = u.mul(&kernel::convolve(h, t)?)?;
        uh.sub(&model_commutator(model, families, h, products, t)?)
    })
}

/// (F⋄∂₁²U)_T ≈ F(∂₁²U)_T − σ_i E[F,(·)_T]⋄∂₁²V_i for U modelled after the V_i.
/// `d2v[i]` is the family ∂₁²V_i and `products[i]` the family F⋄∂₁²V_i, both in a₀.
#[allow(non_snake_case)]
pub fn reconstruct_F_d2U(
    f: &Field,
    u: &Field,
    model: &ModellingReport,
    d2v: &[&ParamFamily],
    products: &[&ParamFamily],
    ladder: &[f64],
    t_eval: f64,
) -> Result<Reconstruction> {
    same_grid(&[f, u])?;
    if d2v.len() != model.a.len() || products.len() != d2v.len() {
        return param("one family and one product family per model term");
    }
    let d2u = fft::derivative_x1(u, 2);
    let mut handle = ProductHandle::new(ProductKind::Reconstructed, &["F", "d1^2 U"]);
    handle.inputs.extend(model.references.iter().cloned());
    ladder_reconstruction(ladder.to_vec(), t_eval, handle, |t| {
        let mut out = f.mul(&kernel::convolve(&d2u, t)?)?;
        for i in 0..d2v.len() {
            let c = product_commutator_family(f, d2v[i], products[i], t)?.evaluate_at(&model.a[i], 0)?;
            out.axpy(-1.0, &c.mul(&model.sigma[i])?)?;
        }
        Ok(out)
    })
}

/// F·h_T(a₀) − (F⋄h(a₀))_T on every node, given the family F⋄h.
pub fn product_commutator_family(f: &Field, h: &ParamFamily, products: &ParamFamily, t: f64) -> Result<ParamFamily> {
    if h.entries.len() != products.entries.len() {
        return param("product family and h family must share the parameter grid");
    }
    let entries = par::map_range(h.entries.len(), |i| -> Result<Field> {
        let ht = kernel::convolve(&h.entries[i], t)?;
        f.mul(&ht)?.sub(&kernel::convolve(&products.entries[i], t)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ParamFamily { label: format!("[F,(.)_T] {}", h.label), params: h.params.clone(), entries, derivs: Vec::new() })
}

/// w(·,a₀′)⋄h(·,a₀) on every node pair of a parameter grid; `rows[i]` is the
/// family in a₀′ at the i-th a₀ node.
#[derive(Clone, Debug)]
pub struct PairTable {
    pub handle: ProductHandle,
    pub rows: Vec<ParamFamily>,
}

/// Reference products (v + 𝖵̃)(·,a₀′)⋄∂₁²v(·,a₀) on every node pair: renormalized
/// v⋄∂₁²v (spectral cutoff as the only regularization) plus the Leibniz 𝖵̃⋄∂₁²v.
/// `layer` holds the families 𝖵̃, ∂₁𝖵̃, ∂₁²𝖵̃ on the same periodic grid as `v`; pass
/// `None` for the purely periodic model.
pub fn offline_pair_table(
    v: &ParamFamily,
    d2v: &ParamFamily,
    layer: Option<[&ParamFamily; 3]>,
    spec: &CovarianceSpec,
) -> Result<PairTable> {
    offline_pair_table_with(v, v, d2v, layer, |a0p, a0| renorm_constant(spec, None, a0p, a0))
}

/// [`offline_pair_table`] with a separate first factor `first(a₀′)` (for instance a
/// regularized v_τ) and a caller-supplied counterterm `c(a₀′, a₀)`. `second` is v(a₀),
/// the function whose ∂₁² is taken.
pub fn offline_pair_table_with(
    first: &ParamFamily,
    second: &ParamFamily,
    d2v: &ParamFamily,
    layer: Option<[&ParamFamily; 3]>,
    counterterm: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<PairTable> {
    let p = &first.params;
    let n = p.len();
    if second.entries.len() != n || d2v.entries.len() != n {
        return param("pair table families must share the parameter grid");
    }
    let cells = par::map_range(n * n, |c| -> Result<Field> {
        let (i, ip) = (c / n, c % n);
        let g2 = counterterm(p.values[ip], p.values[i]);
        let mut out = first.entries[ip].mul(&d2v.entries[i])?.map(|x| x - g2);
        if let Some(l) = layer {
            let g = [l[0].entries[ip].clone(), l[1].entries[ip].clone(), l[2].entries[ip].clone()];
            out.axpy(1.0, &leibniz_product(&g, &second.entries[i])?)?;
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut cells = cells.into_iter();
    let rows = (0..n)
        .map(|i| ParamFamily {
            label: format!("W ⋄ d1^2 v(a0 = {:.4})", p.values[i]),
            params: p.clone(),
            entries: cells.by_ref().take(n).collect(),
            derivs: Vec::new(),
        })
        .collect();
    let mut handle = if layer.is_some() {
        let mut h = ProductHandle::new(ProductKind::Combined, &["V~ + v", "d1^2 v"]);
        h.mode = Some(CombineMode::VPlusVOnV);
        h
    } else {
        ProductHandle::new(ProductKind::Renormalized, &["v", "d1^2 v"])
    };
    handle.epsilon = Some(0.0);
    handle.counterterm = (0..n)
        .flat_map(|i| (0..n).map(move |ip| (i, ip)))
        .map(|(i, ip)| Counterterm {
            a0: p.values[ip],
            a0p: p.values[i],
            value: counterterm(p.values[ip], p.values[i]),
        })
        .collect();
    Ok(PairTable { handle, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{even_reflection, GridSpec};
    use crate::kernel::MollifierBase;
    use crate::noise::{sample_forcing, sample_spectrum};
    use crate::norms::{commutator_norm, modelling_constant, ModelTerm, NormConfig};
    use crate::refsol::{BoundaryData, ParamGrid};

    fn spec(cutoff: usize) -> CovarianceSpec {
        CovarianceSpec::white_in_time(0.9, 1.0, cutoff).unwrap()
    }

    #[test]
    fn single_pair_counterterm_by_hand() {
        let (k1, k2, c) = (2.0 * PI, 4.0 * PI, 0.7);
        let (a, b) = (0.4, 0.9);
        let s = counterterm_sum([(k1, k2, c), (-k1, -k2, c)].into_iter(), a, b);
        let (la, lb) = (a * k1 * k1 + 1.0, b * k1 * k1 + 1.0);
        let hand = -2.0 * c * k1 * k1 * (la * lb + k2 * k2) / ((la * la + k2 * k2) * (lb * lb + k2 * k2));
        assert!((s - hand).abs() < 1e-15 * hand.abs());
    }

    #[test]
    fn counterterm_is_symmetric_and_negative() {
        let s = spec(6);
        let m = MollifierSpec::new(1.0 / 16.0, MollifierBase::Gaussian { width: 0.2 }).unwrap();
        for &(a, b) in &[(0.3, 0.8), (0.5, 0.55), (1.0, 0.25)] {
            let x = renorm_constant(&s, Some(&m), a, b);
            let y = renorm_constant(&s, Some(&m), b, a);
            assert!((x - y).abs() <= 1e-13 * x.abs());
            assert!(x < 0.0);
        }
    }

    #[test]
    fn counterterm_matches_monte_carlo() {
        let s = spec(5);
        let g = GridSpec::torus(16, 16).unwrap();
        let m = MollifierSpec::new(1.0 / 16.0, MollifierBase::Gaussian { width: 0.2 }).unwrap();
        let (a0, a0p) = (0.4, 0.7);
        let exact = renorm_constant(&s, Some(&m), a0, a0p);
        let n = 10_000u64;
        let samples: Vec<f64> = par::map_range(n as usize, |seed| {
            let sp = sample_spectrum(&s, g, seed as u64).unwrap().apply_real(|w| m.multiplier(w.k1, w.k2));
            let v = refsol::periodic_from_spectrum(&sp, a0, 0, 0, true).unwrap();
            let d2 = refsol::periodic_from_spectrum(&sp, a0p, 0, 2, true).unwrap();
            v.at(3, 5) * d2.at(3, 5)
        });
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "MC {mean} vs {exact} (se {se})");
    }

    #[test]
    fn renormalized_product_basics() {
        let g = GridSpec::torus(32, 32).unwrap();
        let s = spec(10);
        let zero = ForcingSample { field: Field::zeros(g), seed: 0, spec: s };
        let (h, p) = renormalized_product(&zero, None, 0.5, 0.5).unwrap();
        let g2 = renorm_constant(&s, None, 0.5, 0.5);
        assert!(p.sup_diff(&Field::constant(g, -g2)).unwrap() < 1e-15);
        assert_eq!(h.kind, ProductKind::Renormalized);
        assert_eq!(h.counterterm.len(), 1);
        assert!(h.epsilon.is_some());
        let j = h.to_json();
        assert_eq!(j["kind"], "renormalized");
        assert!(j["counterterm"][0]["value"].is_number());
    }

    #[test]
    fn renormalized_mean_is_centered() {
        let g = GridSpec::torus(16, 16).unwrap();
        let s = spec(5);
        let means: Vec<f64> = par::map_range(400, |seed| {
            let f = sample_forcing(&s, g, seed as u64).unwrap();
            renormalized_product(&f, None, 0.6, 0.6).unwrap().1.mean()
        });
        let n = means.len() as f64;
        let m = means.iter().sum::<f64>() / n;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(m.abs() < 3.0 * sd / n.sqrt(), "mean {m}, sd {sd}");
    }

    #[test]
    fn leibniz_examples() {
        let g = GridSpec::half_plane(32, 16, 0.5).unwrap();
        let gg = |x1: f64, x2: f64| (2.0 * PI * x1).sin() * (-x2).exp();
        let layer = [
            Field::from_fn(g, gg),
            Field::from_fn(g, |x1, x2| 2.0 * PI * (2.0 * PI * x1).cos() * (-x2).exp()),
            Field::from_fn(g, |x1, x2| -4.0 * PI * PI * gg(x1, x2)),
        ];
        let c = Field::constant(g, 3.0);
        assert!(leibniz_product(&layer, &c).unwrap().max_abs() < 1e-10);
        let f = Field::from_fn(g, |x1, x2| (4.0 * PI * x1).cos() * (1.0 + x2));
        let d2f = Field::from_fn(g, |x1, x2| -16.0 * PI * PI * (4.0 * PI * x1).cos() * (1.0 + x2));
        let p = leibniz_product(&layer, &f).unwrap();
        assert!(p.sup_diff(&layer[0].mul(&d2f).unwrap()).unwrap() < 1e-8);
        let p2 = leibniz_product(&layer, &f.scale(2.0).add(&c).unwrap()).unwrap();
        assert!(p2.sup_diff(&p.scale(2.0)).unwrap() < 1e-9);
        assert!(leibniz_product(&layer[..2], &f).is_err());
    }

    #[test]
    fn classical_examples() {
        let h = GridSpec::half_plane(64, 32, 0.5).unwrap();
        let data = BoundaryData::fixed(refsol::lacunary_data(64, 0.75, 1.0, 2));
        let d2 = refsol::heat_layer_general_with(&data, 0.5, h, true, 0, 2, true).unwrap();
        let (hd, p) = classical_singular_product(&Field::zeros(h), &d2, 0.75, 1e3).unwrap();
        assert_eq!(p.max_abs(), 0.0);
        assert!(hd.weight.unwrap() > 0.0);
        let (_, p) = classical_singular_product(&Field::constant(h, 1.0), &d2, 0.75, 1e3).unwrap();
        assert_eq!(p.values, d2.values);
        assert!(classical_singular_product(&Field::constant(h, 1.0), &d2, 0.75, 1e-6).is_err());
    }

    #[test]
    fn combined_examples() {
        let g = GridSpec::torus(32, 32).unwrap();
        let f = sample_forcing(&spec(10), g, 1).unwrap();
        let (hr, pr) = renormalized_product(&f, None, 0.5, 0.6).unwrap();
        let hl = ProductHandle::new(ProductKind::Leibniz, &["V~", "v"]).with_params(0.5, 0.6);
        let (h, p) = combined_product(&[(hl.clone(), Field::zeros(g)), (hr.clone(), pr.clone())], CombineMode::VPlusVOnV).unwrap();
        assert_eq!(p.values, pr.values);
        assert_eq!(h.parts.len(), 2);
        assert!(combined_product(&[(hr.clone(), pr.clone()), (hl.clone(), pr.clone())], CombineMode::VPlusVOnV).is_err());
        let bad = hl.clone().with_params(0.5, 0.7);
        assert!(combined_product(&[(bad, pr.clone()), (hr, pr)], CombineMode::VPlusVOnV).is_err());
    }

    #[test]
    fn combined_commutator_is_subadditive() {
        let g = GridSpec::torus(32, 32).unwrap();
        let f = sample_forcing(&spec(10), g, 4).unwrap();
        let (v, d2) = mollified_pair(&f, None, 0.5, 0.6).unwrap();
        let (hr, pr) = renormalized_product(&f, None, 0.5, 0.6).unwrap();
        let h = GridSpec::half_plane(32, 16, 0.5).unwrap();
        let data = BoundaryData::fixed(refsol::lacunary_data(32, 0.75, 0.1, 1));
        let layer: Vec<Field> = (0..3)
            .map(|m| even_reflection(&refsol::heat_layer_general_with(&data, 0.5, h, true, 0, m, true).unwrap()).unwrap())
            .map(|r| crate::grid::periodic_resample(&r, g).unwrap())
            .collect();
        assert!(layer[0].max_abs() > 0.0);
        let pl = leibniz_product(&layer, &v).unwrap();
        let hl = ProductHandle::new(ProductKind::Leibniz, &["V~", "v"]).with_params(0.5, 0.6);
        let (_, p) = combined_product(&[(hl, pl.clone()), (hr, pr.clone())], CombineMode::VPlusVOnV).unwrap();
        let cfg = NormConfig::for_grid(0.75, &g).unwrap();
        let sum = commutator_norm(&v.add(&layer[0]).unwrap(), &d2, &p, &cfg).unwrap().value;
        let a = commutator_norm(&v, &d2, &pr, &cfg).unwrap().value;
        let b = commutator_norm(&layer[0], &d2, &pl, &cfg).unwrap().value;
        assert!(sum <= a + b + 1e-9, "{sum} > {a} + {b}");
    }

    fn periodic_family(g: GridSpec, f: &Field, x1_order: u32) -> ParamFamily {
        refsol::periodic_v_family(f, &ParamGrid::default(), x1_order, 0).unwrap()
            .map_fields("v", |x| Ok(Field { grid: g, values: x.values.clone() }))
            .unwrap()
    }

    #[test]
    fn reconstruction_smooth_case_matches_classical_product() {
        let g = GridSpec::torus(64, 64).unwrap();
        let u = Field::from_fn(g, |x1, x2| (2.0 * PI * x1).sin() * (2.0 * PI * x2).cos());
        let h = Field::from_fn(g, |x1, x2| (4.0 * PI * x1).cos() + (2.0 * PI * (x1 + x2)).sin());
        let fam = periodic_family(g, &Field::zeros(g), 0);
        let model = ModellingReport {
            m: 0.0,
            nu: fft::derivative_x1(&u, 1),
            witness: crate::norms::Witness::None,
            method: crate::norms::Method::Exhaustive,
            alpha: 0.75,
            references: vec!["v".into()],
            sigma: vec![Field::zeros(g)],
            a: vec![Field::constant(g, 0.5)],
        };
        let zero = fam.clone();
        let ladder = kernel::dyadic_ladder(24);
        let t = *ladder.last().unwrap();
        let r = reconstruct_U_product(&u, &model, &[&fam], &h, &[&zero], &ladder, t).unwrap();
        let exact = u.mul(&h).unwrap();
        let err = r.field.sup_diff(&exact).unwrap();
        let coarse = reconstruct_U_product(&u, &model, &[&fam], &h, &[&zero], &ladder, ladder[20]).unwrap();
        let err_coarse = coarse.field.sup_diff(&exact).unwrap();
        // the surrogate error is O(T) for smooth data: 16× smaller T, ~16× smaller error
        assert!(err < 5e-3 && err < 0.1 * err_coarse, "{err} vs {err_coarse}");
        assert!(r.increments[23] < 0.1 * r.increments[19]);
    }

    #[test]
    fn reconstruction_exact_model_reproduces_base_product() {
        let g = GridSpec::torus(32, 32).unwrap();
        let f = sample_forcing(&spec(10), g, 5).unwrap();
        let params = ParamGrid::default();
        let v = refsol::periodic_v_family(&f.field, &params, 0, 0).unwrap();
        let d2v = refsol::periodic_v_family(&f.field, &params, 2, 0).unwrap();
        let table = offline_pair_table(&v, &d2v, None, &f.spec).unwrap();
        let i0 = 5;
        let a0 = params.values[i0];
        let sigma = 0.7;
        let u = v.entries[i0].scale(sigma);
        let model = ModellingReport {
            m: 0.0,
            nu: Field::zeros(g),
            witness: crate::norms::Witness::None,
            method: crate::norms::Method::Exhaustive,
            alpha: 0.75,
            references: vec!["v".into()],
            sigma: vec![Field::constant(g, sigma)],
            a: vec![Field::constant(g, a0)],
        };
        let h = &d2v.entries[3];
        let ladder = kernel::grid_ladder(32);
        let t = ladder[10];
        let r = reconstruct_U_product(&u, &model, &[&v], h, &[&table.rows[3]], &ladder, t).unwrap();
        let exact = kernel::convolve(&table.rows[3].entries[i0].scale(sigma), t).unwrap();
        assert!(r.field.sup_diff(&exact).unwrap() < 1e-10 * (1.0 + exact.max_abs()));
        assert!(r.increments.iter().all(|&d| d < 1e-9 * (1.0 + exact.max_abs())));
    }

    #[test]
    fn reconstruction_with_fitted_model() {
        let g = GridSpec::torus(32, 32).unwrap();
        let f = sample_forcing(&spec(10), g, 6).unwrap();
        let params = ParamGrid::default();
        let v = refsol::periodic_v_family(&f.field, &params, 0, 0).unwrap();
        let d2v = refsol::periodic_v_family(&f.field, &params, 2, 0).unwrap();
        let a = Field::from_fn(g, |x1, x2| 0.6 + 0.05 * (2.0 * PI * x1).cos() * (2.0 * PI * x2).sin());
        let u = v.evaluate_at(&a, 0).unwrap();
        let cfg = NormConfig::for_grid(0.75, &g).unwrap();
        let one = Field::constant(g, 1.0);
        let model = modelling_constant(&u, &[ModelTerm { family: &v, a: &a, sigma: &one }], &cfg).unwrap();
        let table = offline_pair_table(&v, &d2v, None, &f.spec).unwrap();
        let ladder = kernel::grid_ladder(32);
        let t = *ladder.last().unwrap();
        let r = reconstruct_U_product(&u, &model, &[&v], &d2v.entries[6], &[&table.rows[6]], &ladder, t).unwrap();
        assert_eq!(r.increments.len(), ladder.len() - 1);
        assert!(r.field.values.iter().all(|x| x.is_finite()));
        let j = r.handle.to_json();
        assert_eq!(j["kind"], "reconstructed");
    }

    #[test]
    fn reconstruct_f_d2u_cases() {
        let g = GridSpec::torus(64, 64).unwrap();
        let u = Field::from_fn(g, |x1, x2| (2.0 * PI * x1).sin() * (2.0 * PI * x2).cos());
        let fam = periodic_family(g, &Field::zeros(g), 2);
        let model = ModellingReport {
            m: 0.0,
            nu: fft::derivative_x1(&u, 1),
            witness: crate::norms::Witness::None,
            method: crate::norms::Method::Exhaustive,
            alpha: 0.75,
            references: vec!["v".into()],
            sigma: vec![Field::zeros(g)],
            a: vec![Field::constant(g, 0.5)],
        };
        let f = Field::from_fn(g, |x1, _| 0.6 + 0.1 * (2.0 * PI * x1).cos());
        let ladder = kernel::dyadic_ladder(24);
        let t = *ladder.last().unwrap();
        let r = reconstruct_F_d2U(&f, &u, &model, &[&fam], &[&fam], &ladder, t).unwrap();
        let exact = f.mul(&fft::derivative_x1(&u, 2)).unwrap();
        assert!(r.field.sup_diff(&exact).unwrap() < 1e-3 * exact.max_abs());
        // constant F: the result commutes with convolution
        let c = Field::constant(g, 0.7);
        let r = reconstruct_F_d2U(&c, &u, &model, &[&fam], &[&fam], &ladder, ladder[6]).unwrap();
        let d2u = fft::derivative_x1(&u, 2).scale(0.7);
        assert!(r.field.sup_diff(&kernel::convolve(&d2u, ladder[6]).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn pair_table_layout() {
        let g = GridSpec::torus(16, 16).unwrap();
        let f = sample_forcing(&spec(5), g, 2).unwrap();
        let params = ParamGrid::uniform(0.25, 5).unwrap();
        let v = refsol::periodic_v_family(&f.field, &params, 0, 0).unwrap();
        let d2v = refsol::periodic_v_family(&f.field, &params, 2, 0).unwrap();
        let t = offline_pair_table(&v, &d2v, None, &f.spec).unwrap();
        let (i, ip) = (1, 3);
        let (_, p) = renormalized_product(&f, None, params.values[ip], params.values[i]).unwrap();
        assert!(t.rows[i].entries[ip].sup_diff(&p).unwrap() < 1e-12);
        assert_eq!(t.handle.counterterm.len(), 25);
    }
}
