//! Constant-coefficient reference solutions and their a₀-derivatives.
//!
//! * periodic: (∂₂ − a₀∂₁² + 1)v = f, v̂ = f̂/(ik₂ + a₀k₁² + 1)
//! * heat layer: (∂₂ − a₀∂₁² + 1)𝖵 = 0 on the half-plane with 𝖵 = g on x₂ = 0,
//!   applied row by row as ĝ(k₁)·exp(−(a₀k₁² + 1)x₂)
//! * coefficient layer ā: the same with a₀ = 1 and no massive term

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{domain, param, Result};
use crate::fft::{self, Spectrum};
use crate::grid::{DomainKind, Field, GridSpec};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    pub lambda: f64,
    pub values: Vec<f64>,
    pub spacing: f64,
}

/// Four-point cubic interpolation stencil: node indices and weights.
pub type Stencil = [(usize, f64); 4];

impl ParamGrid {
    /// `n` equispaced points on [λ, 1].
    pub fn uniform(lambda: f64, n: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) || n < 4 {
            return param("parameter grid needs λ ∈ (0,1) and at least 4 points");
        }
        let spacing = (1.0 - lambda) / (n - 1) as f64;
        let values = (0..n).map(|i| lambda + i as f64 * spacing).collect();
        Ok(ParamGrid { lambda, values, spacing })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lambda - 1e-12 && a <= 1.0 + 1e-12
    }

    /// Cubic Lagrange weights at `a`, using the four nearest nodes.
    pub fn stencil(&self, a: f64) -> Result<Stencil> {
        if !self.contains(a) || !a.is_finite() {
            return param(format!("parameter {a} outside [{}, 1]", self.lambda));
        }
        let n = self.len();
        let s = (a - self.lambda) / self.spacing;
        let b = (s.floor() as i64 - 1).clamp(0, n as i64 - 4) as usize;
        let t = s - b as f64;
        let w = [
            -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
            t * (t - 2.0) * (t - 3.0) / 2.0,
            -t * (t - 1.0) * (t - 3.0) / 2.0,
            t * (t - 1.0) * (t - 2.0) / 6.0,
        ];
        Ok([(b, w[0]), (b + 1, w[1]), (b + 2, w[2]), (b + 3, w[3])])
    }
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid::uniform(0.25, 17).expect("default parameter grid")
    }
}

/// Fields indexed by a₀ on a [`ParamGrid`], optionally with analytic a₀-derivatives.
#[derive(Clone, Debug)]
pub struct ParamFamily {
    pub label: String,
    pub params: ParamGrid,
    pub entries: Vec<Field>,
    /// `derivs[n-1][i]` is ∂ⁿ_{a₀} of the entry at node i.
    pub derivs: Vec<Vec<Field>>,
}

impl ParamFamily {
    pub fn grid(&self) -> GridSpec {
        self.entries[0].grid
    }

    pub fn max_order(&self) -> usize {
        self.derivs.len()
    }

    fn layer(&self, order: usize) -> Result<&[Field]> {
        if order == 0 {
            Ok(&self.entries)
        } else {
            self.derivs
                .get(order - 1)
                .map(|v| v.as_slice())
                .ok_or_else(|| crate::Error::Parameter(format!("{}: no order-{order} derivative", self.label)))
        }
    }

    /// Value of the order-`order` a₀-derivative at flat index `p`, interpolated with `st`.
    #[inline]
    pub fn eval_flat(&self, order: usize, st: &Stencil, p: usize) -> f64 {
        let layer = if order == 0 { &self.entries } else { &self.derivs[order - 1] };
        st.iter().map(|&(i, w)| w * layer[i].values[p]).sum()
    }

    /// The interpolated field at a fixed parameter value.
    pub fn field_at(&self, a: f64, order: usize) -> Result<Field> {
        let layer = self.layer(order)?;
        let st = self.params.stencil(a)?;
        let mut out = Field::zeros(self.grid());
        for &(i, w) in &st {
            out.axpy(w, &layer[i])?;
        }
        Ok(out)
    }

    /// x ↦ w(x, a(x)), the diagonal evaluation E at a parameter field.
    pub fn evaluate_at(&self, a: &Field, order: usize) -> Result<Field> {
        if !a.grid.same_shape(&self.grid()) {
            return domain(format!("{}: parameter field on a different grid", self.label));
        }
        self.layer(order)?;
        let mut out = Field::zeros(self.grid());
        for (p, &av) in a.values.iter().enumerate() {
            let st = self.params.stencil(av)?;
            out.values[p] = self.eval_flat(order, &st, p);
        }
        Ok(out)
    }

    /// Apply a map to every entry and derivative.
    pub fn map_fields(&self, label: &str, f: impl Fn(&Field) -> Result<Field>) -> Result<ParamFamily> {
        let entries = self.entries.iter().map(&f).collect::<Result<Vec<_>>>()?;
        let derivs = self
            .derivs
            .iter()
            .map(|l| l.iter().map(&f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamFamily { label: label.to_string(), params: self.params.clone(), entries, derivs })
    }
}

/// Boundary data on x₂ = 0 at one value of a₀, with optional a₀-derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub values: Vec<f64>,
    /// `param_derivs[r-1]` is ∂ʳ_{a₀} of the data.
    pub param_derivs: Vec<Vec<f64>>,
}

impl BoundaryData {
    pub fn fixed(values: Vec<f64>) -> Self {
        BoundaryData { values, param_derivs: Vec::new() }
    }

    pub fn from_fn(n1: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::fixed((0..n1).map(|i| f(i as f64 / n1 as f64)).collect())
    }
}

fn check_a0(a0: f64) -> Result<()> {
    if !(a0 > 0.0 && a0 <= 1.0 + 1e-12) {
        return param(format!("a₀ = {a0} must lie in (0, 1]"));
    }
    Ok(())
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: u32, r: u32) -> f64 {
    factorial(n) / (factorial(r) * factorial(n - r))
}

/// ∂ⁿ_{a₀}∂₁ᵐ v(·,a₀) from a precomputed 2-d spectrum of f.
pub fn periodic_from_spectrum(sp: &Spectrum, a0: f64, a_order: u32, x1_order: u32, massive: bool) -> Result<Field> {
    check_a0(a0)?;
    let mass = if massive { 1.0 } else { 0.0 };
    if !massive && sp.data[0].norm() > 1e-12 * sp.data.iter().fold(1e-300f64, |m, c| m.max(c.norm())) {
        return param("massless periodic solve needs a mean-free right-hand side");
    }
    let n = a_order;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let c = factorial(n) * sign;
    Ok(sp
        .apply(|w| {
            let l = Complex64::new(a0 * w.k1 * w.k1 + mass, w.k2);
            if l.norm() == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let k2n = (w.k1 * w.k1).powi(n as i32);
            fft::ik_pow(w.k1, w.nyq1, x1_order) * (c * k2n) / l.powu(n + 1)
        })
        .inverse())
}

/// v(·,a₀) solving (∂₂ − a₀∂₁² + 1)v = f on a periodic grid.
pub fn solve_periodic_v(f: &Field, a0: f64, massive: bool) -> Result<Field> {
    periodic_v_derivative(f, a0, 0, massive)
}

/// ∂ⁿ_{a₀}v(·,a₀): mode-wise (−k₁²)ⁿ n! f̂/(ik₂ + a₀k₁² + 1)^{n+1}.
pub fn periodic_v_derivative(f: &Field, a0: f64, order: u32, massive: bool) -> Result<Field> {
    if !f.grid.is_periodic2() {
        return domain("periodic solve needs a periodic grid");
    }
    periodic_from_spectrum(&fft::forward_2d(f)?, a0, order, 0, massive)
}

/// Family x ↦ ∂₁ᵐ v(x, a₀) over the parameter grid, with a₀-derivatives up to `max_order`.
pub fn periodic_v_family(f: &Field, params: &ParamGrid, x1_order: u32, max_order: u32) -> Result<ParamFamily> {
    if !f.grid.is_periodic2() {
        return domain("periodic solve needs a periodic grid");
    }
    let sp = fft::forward_2d(f)?;
    let build = |n: u32| -> Result<Vec<Field>> {
        par::map_range(params.len(), |i| periodic_from_spectrum(&sp, params.values[i], n, x1_order, true))
            .into_iter()
            .collect()
    };
    let entries = build(0)?;
    let derivs = (1..=max_order).map(build).collect::<Result<Vec<_>>>()?;
    Ok(ParamFamily { label: format!("d1^{x1_order} v"), params: params.clone(), entries, derivs })
}

/// Rows ∂ⁿ_{a₀}∂₁ᵐ𝖵(·, x₂, a₀, g) for each x₂ in `x2s`.
pub fn heat_layer_rows(
    g: &BoundaryData,
    a0: f64,
    x2s: &[f64],
    massive: bool,
    a_order: u32,
    x1_order: u32,
) -> Result<Vec<Vec<f64>>> {
    check_a0(a0)?;
    let n1 = g.values.len();
    if (a_order as usize) > 0 && g.param_derivs.len() < a_order as usize && !g.param_derivs.is_empty() {
        return param("missing a₀-derivatives of parameter-dependent boundary data");
    }
    let mut spectra = vec![fft::forward_1d(&g.values)];
    for d in &g.param_derivs {
        if d.len() != n1 {
            return param("boundary derivative length mismatch");
        }
        spectra.push(fft::forward_1d(d));
    }
    let mass = if massive { 1.0 } else { 0.0 };
    let mut out = Vec::with_capacity(x2s.len());
    for &x2 in x2s {
        if x2 < 0.0 {
            return param("heat layer rows need x₂ ≥ 0");
        }
        let mut row = vec![Complex64::new(0.0, 0.0); n1];
        for (i, z) in row.iter_mut().enumerate() {
            let k = 2.0 * PI * fft::freq_index(i, n1) as f64;
            let e = (-(a0 * k * k + mass) * x2).exp();
            let q = -k * k * x2;
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..=a_order.min(spectra.len() as u32 - 1) {
                acc += spectra[r as usize][i] * (binomial(a_order, r) * q.powi((a_order - r) as i32) * e);
            }
            *z = acc * fft::ik_pow(k, i == n1 / 2, x1_order);
        }
        out.push(fft::inverse_1d(&row));
    }
    Ok(out)
}

fn require_half_grid(grid: &GridSpec) -> Result<()> {
    if grid.kind != DomainKind::HalfPlane {
        return domain("heat layers live on a half-plane grid");
    }
    Ok(())
}

/// ∂ⁿ_{a₀}∂₁ᵐ𝖵(·,a₀,g) on the rows of a half-plane grid.
pub fn heat_layer_general(
    g: &BoundaryData,
    a0: f64,
    grid: GridSpec,
    massive: bool,
    a_order: u32,
    x1_order: u32,
) -> Result<Field> {
    heat_layer_general_with(g, a0, grid, massive, a_order, x1_order, false)
}

/// Row heights of a half-plane grid. With `regularize`, the boundary row of an
/// x₁-differentiated layer is read at x₂ = Δx₂/2.
pub fn layer_heights(grid: &GridSpec, x1_order: u32, regularize: bool) -> Vec<f64> {
    let mut x2s: Vec<f64> = (0..grid.rows()).map(|j| grid.x2(j)).collect();
    if regularize && x1_order > 0 {
        x2s[0] = 0.5 * grid.dx2();
    }
    x2s
}

/// [`heat_layer_general`] with the optional regularized boundary row.
pub fn heat_layer_general_with(
    g: &BoundaryData,
    a0: f64,
    grid: GridSpec,
    massive: bool,
    a_order: u32,
    x1_order: u32,
    regularize: bool,
) -> Result<Field> {
    require_half_grid(&grid)?;
    if g.values.len() != grid.n1 {
        return param("boundary data length must equal n1");
    }
    let x2s = layer_heights(&grid, x1_order, regularize);
    let rows = heat_layer_rows(g, a0, &x2s, massive, a_order, x1_order)?;
    Ok(Field { grid, values: rows.concat() })
}

/// 𝖵(·,a₀,g).
#[allow(non_snake_case)]
pub fn heat_layer_V(g: &[f64], a0: f64, grid: GridSpec, massive: bool) -> Result<Field> {
    heat_layer_general(&BoundaryData::fixed(g.to_vec()), a0, grid, massive, 0, 0)
}

/// ∂ⁿ_{a₀}𝖵(·,a₀,g); for parameter-dependent data the supplied ∂ʳ_{a₀}g enter by the product rule.
pub fn heat_layer_derivatives(g: &BoundaryData, a0: f64, order: u32, grid: GridSpec) -> Result<Field> {
    if order > 3 {
        return param("heat layer derivatives are provided up to order 3");
    }
    heat_layer_general(g, a0, grid, true, order, 0)
}

/// Family x ↦ ∂₁ᵐ𝖵(x, a₀, g(a₀)) over the parameter grid with a₀-derivatives up to `max_order`.
pub fn heat_layer_family(
    data: &(dyn Fn(f64) -> Result<BoundaryData> + Sync),
    params: &ParamGrid,
    grid: GridSpec,
    x1_order: u32,
    max_order: u32,
    regularize: bool,
) -> Result<ParamFamily> {
    require_half_grid(&grid)?;
    let per_node: Vec<Result<Vec<Field>>> = par::map_range(params.len(), |i| {
        let a0 = params.values[i];
        let g = data(a0)?;
        (0..=max_order)
            .map(|n| heat_layer_general_with(&g, a0, grid, true, n, x1_order, regularize))
            .collect()
    });
    let per_node = per_node.into_iter().collect::<Result<Vec<_>>>()?;
    let mut layers: Vec<Vec<Field>> = vec![Vec::new(); max_order as usize + 1];
    for fields in per_node {
        for (n, f) in fields.into_iter().enumerate() {
            layers[n].push(f);
        }
    }
    let entries = layers.remove(0);
    Ok(ParamFamily { label: format!("d1^{x1_order} V"), params: params.clone(), entries, derivs: layers })
}

/// Lacunary Fourier series Σ_k 2^{−αk} cos(2π2ᵏx + φ_k) over the octaves below n1/2,
/// scaled to sup norm `amplitude`; a boundary datum of exact Hölder class α.
pub fn lacunary_data(n1: usize, alpha: f64, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut r = crate::rng::stream(seed, 0x1ac);
    let mut octaves = Vec::new();
    let mut k = 1usize;
    while 2 * k < n1 {
        octaves.push((k as f64, (k as f64).powf(-alpha), 2.0 * PI * crate::rng::uniform(&mut r)));
        k *= 2;
    }
    let mut v: Vec<f64> = (0..n1)
        .map(|i| {
            let x = i as f64 / n1 as f64;
            octaves.iter().map(|&(k, c, ph)| c * (2.0 * PI * k * x + ph).cos()).sum()
        })
        .collect();
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x *= amplitude / m);
    }
    v
}

/// ā solving (∂₂ − ∂₁²)ā = 0 with ā = a on the boundary.
pub fn coefficient_layer(a_boundary: &[f64], grid: GridSpec) -> Result<Field> {
    heat_layer_V(a_boundary, 1.0, grid, false)
}

/// ν^∫(y) = e^{−y₂}∫G(a_tr(y), y₁−s, y₂)ν_∂(s)ds by direct periodic quadrature.
/// The sampled Gaussian is normalized to unit discrete mass.
pub fn nu_int(nu_boundary: &[f64], a_tr: &Field, grid: GridSpec) -> Result<Field> {
    require_half_grid(&grid)?;
    if !a_tr.grid.same_shape(&grid) || nu_boundary.len() != grid.n1 {
        return domain("nu_int inputs must share the half-plane grid");
    }
    let n1 = grid.n1;
    let rows: Vec<Result<Vec<f64>>> = par::map_range(grid.rows(), |j| {
        let y2 = grid.x2(j);
        let mut row = vec![0.0; n1];
        for (i, out) in row.iter_mut().enumerate() {
            let a = a_tr.at(i, j);
            if !(a > 0.0) {
                return param("a_tr must be positive");
            }
            if y2 == 0.0 {
                *out = nu_boundary[i];
                continue;
            }
            let var4 = 4.0 * y2 * a;
            let images = ((var4.sqrt() * 6.0).ceil() as i64).max(1);
            let mut num = 0.0;
            let mut den = 0.0;
            for (s, &nv) in nu_boundary.iter().enumerate() {
                let base = (i as f64 - s as f64) / n1 as f64;
                let mut w = 0.0;
                for p in -images..=images {
                    let d = base + p as f64;
                    w += (-d * d / var4).exp();
                }
                num += w * nv;
                den += w;
            }
            *out = (-y2).exp() * if den > 0.0 { num / den } else { nu_boundary[i] };
        }
        Ok(row)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Field { grid, values: rows.concat() })
}
