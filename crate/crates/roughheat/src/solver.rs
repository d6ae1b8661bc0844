//! The linear solve for u, the boundary-layer ansatz q, its correction w, their
//! assembly U = u + q + w, and the quasilinear fixed point.
//!
//! Objects on ℝ² live on a two-sided carrier grid (x₂ ∈ [−t_max, t_max), periodic
//! with period 2 t_max); a torus input with n2 rows is read as the carrier with
//! t_max = 1/2. Half-plane objects live on the matching half-plane grid, whose rows
//! coincide with the carrier rows x₂ ≥ 0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};
use crate::fft::{self, ik_pow, Spectrum};
use crate::grid::{
    even_reflection, periodic_resample, restrict_to_half_plane, trivial_extension, DomainKind, Field, GridSpec,
};
use crate::kernel::{self, grid_ladder, psi_hat};
use crate::noise::ForcingSample;
use crate::norms::{
    holder_norm, modelling_constant, modelling_constant_with_nu, neg_norm_conv, ModelTerm, ModellingReport,
    NormConfig,
};
use crate::par;
use crate::products::{
    classical_commutator_family, offline_pair_table_with, product_commutator_family, reconstruct_U_product,
    renorm_constant_weighted,
};
use crate::refsol::{
    coefficient_layer, heat_layer_family, heat_layer_general_with, periodic_v_family, BoundaryData, ParamFamily,
    ParamGrid,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrozenA0 {
    Mean,
    Midpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveConfig {
    /// Regularization scale τ of the periodic problem; a dyadic scale.
    pub tau: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub frozen_a0: FrozenA0,
    pub alpha: f64,
    /// Cap on the measured [a]_α; `f64::INFINITY` disables the check.
    pub a_cap: f64,
}

impl LinearSolveConfig {
    /// Defaults for an n1-point grid: τ = (Δx₁)⁴.
    pub fn for_grid(n1: usize) -> Self {
        LinearSolveConfig {
            tau: *grid_ladder(n1).last().expect("nonempty ladder"),
            picard_tol: 1e-12,
            picard_max: 200,
            frozen_a0: FrozenA0::Mean,
            alpha: 0.75,
            a_cap: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) || self.tau.log2().fract() != 0.0 {
            return param(format!("τ = {} must be a dyadic scale in (0,1]", self.tau));
        }
        if !(self.picard_tol > 0.0) || self.picard_max == 0 {
            return param("Picard tolerance and iteration cap must be positive");
        }
        if !(self.alpha > 2.0 / 3.0 && self.alpha < 1.0) {
            return param(format!("α = {} must lie in (2/3, 1)", self.alpha));
        }
        Ok(())
    }
}

/// The two-sided carrier and the half-plane grid belonging to a periodic grid.
pub fn carrier_grids(p: &GridSpec) -> Result<(GridSpec, GridSpec)> {
    match p.kind {
        DomainKind::Torus => {
            let h = GridSpec::half_plane(p.n1, p.n2 / 2, 0.5)?;
            Ok((h.as_two_sided(), h))
        }
        DomainKind::TwoSided => Ok((*p, p.as_half_plane())),
        DomainKind::HalfPlane => domain("expected a periodic grid"),
    }
}

/// A periodic field moved onto its carrier grid.
pub fn to_carrier(f: &Field) -> Result<Field> {
    let (c, _) = carrier_grids(&f.grid)?;
    if f.grid == c {
        Ok(f.clone())
    } else {
        periodic_resample(f, c)
    }
}

fn frozen_constant(a: &Field, choice: FrozenA0, lambda: f64) -> f64 {
    let c = match choice {
        FrozenA0::Mean => a.mean(),
        FrozenA0::Midpoint => 0.5 * (a.min() + a.max()),
    };
    c.clamp(lambda, 1.0)
}

fn check_range(a: &Field, params: &ParamGrid, what: &str) -> Result<()> {
    if !(params.contains(a.min()) && params.contains(a.max())) {
        return param(format!("{what} takes values in [{}, {}], outside [{}, 1]", a.min(), a.max(), params.lambda));
    }
    Ok(())
}

/// ‖g‖ + [g]_α for periodic data on the unit circle, over all sample pairs.
pub fn holder_norm_1d(g: &[f64], alpha: f64) -> f64 {
    let n = g.len();
    let sup = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut semi = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = (j - i).min(n - (j - i)) as f64 / n as f64;
            semi = semi.max((g[j] - g[i]).abs() / d.powf(alpha));
        }
    }
    sup + semi
}

/// How the family a⋄∂₁²v(·,a₀) entering the periodic problem is supplied.
#[derive(Clone, Debug)]
pub enum CoefficientProducts {
    /// a⋄∂₁²v = a·∂₁²v, adequate for smooth a.
    Classical,
    /// The family a₀ ↦ a⋄∂₁²v(·,a₀) on the parameter grid.
    Family(ParamFamily),
    /// The family a₀ ↦ (a⋄∂₁²v(·,a₀))_τ at the solver's τ.
    Regularized { family: ParamFamily, tau: f64 },
}

impl CoefficientProducts {
    fn on_grid(&self, g: GridSpec) -> Result<CoefficientProducts> {
        let move_fam = |fam: &ParamFamily| -> Result<ParamFamily> {
            if fam.grid() == g {
                Ok(fam.clone())
            } else {
                fam.map_fields(&fam.label, |f| periodic_resample(f, g))
            }
        };
        Ok(match self {
            CoefficientProducts::Classical => CoefficientProducts::Classical,
            CoefficientProducts::Family(f) => CoefficientProducts::Family(move_fam(f)?),
            CoefficientProducts::Regularized { family, tau } => {
                CoefficientProducts::Regularized { family: move_fam(family)?, tau: *tau }
            }
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub a0_star: f64,
    pub iterations: usize,
    /// ‖u_{k+1} − u_k‖ per iteration.
    pub residuals: Vec<f64>,
    /// Largest successive residual ratio above round-off.
    pub ratio: f64,
    /// ‖a − a₀*‖/a₀*, the a priori contraction bound.
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct PeriodicSolution {
    pub u: Field,
    /// Modelling of u after v_τ according to a.
    pub model: ModellingReport,
    pub picard: PicardReport,
    /// v_τ(·,a₀) with a₀-derivatives up to order 2.
    pub v: ParamFamily,
    /// f_τ.
    pub forcing: Field,
}

fn picard_ratio(res: &[f64], scale: f64) -> f64 {
    let floor = 1e-13 * scale.max(1e-300);
    res.windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .fold(0.0f64, f64::max)
}

/// u solving (∂₂ − a∂₁² + 1)u = f_τ − E[a,(·)_τ]⋄∂₁²v by Picard iteration around
/// the frozen operator L = ∂₂ − a₀*∂₁² + 1, inverted mode by mode.
pub fn solve_linear_periodic_u(
    f: &Field,
    a: &Field,
    products: &CoefficientProducts,
    cfg: &LinearSolveConfig,
) -> Result<PeriodicSolution> {
    cfg.validate()?;
    if !f.grid.is_periodic2() || f.grid != a.grid {
        return domain("f and a must share one periodic grid");
    }
    let params = ParamGrid::default();
    check_range(a, &params, "a")?;
    let ncfg = NormConfig::for_grid(cfg.alpha, &f.grid)?;
    if cfg.a_cap.is_finite() {
        let h = crate::norms::holder_seminorm(a, cfg.alpha, &ncfg)?.value;
        if h > cfg.a_cap {
            return param(format!("[a]_α = {h:.3e} exceeds the smallness cap {}", cfg.a_cap));
        }
    }
    let tau = cfg.tau;
    let f_tau = kernel::convolve(f, tau)?;
    let d2v = periodic_v_family(f, &params, 2, 0)?;
    let comm = match products {
        CoefficientProducts::Classical => classical_commutator_family(a, &d2v, tau)?,
        CoefficientProducts::Family(p) => product_commutator_family(a, &d2v, p, tau)?,
        CoefficientProducts::Regularized { family, tau: t } => {
            if (t - tau).abs() > 1e-12 * tau {
                return param("regularized products were built at a different τ");
            }
            let entries = par::map_range(d2v.entries.len(), |i| -> Result<Field> {
                a.mul(&kernel::convolve(&d2v.entries[i], tau)?)?.sub(&family.entries[i])
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            ParamFamily { label: "[a,(.)_tau] d1^2 v".into(), params: params.clone(), entries, derivs: Vec::new() }
        }
    };
    let rhs = f_tau.sub(&comm.evaluate_at(a, 0)?)?;

    let a0s = frozen_constant(a, cfg.frozen_a0, params.lambda);
    let da = a.map(|x| x - a0s);
    let bound = da.max_abs() / a0s;
    // ∂₂ drops the Nyquist row like every odd derivative, so L is real and exact.
    let inv = |sp: &Spectrum| {
        sp.apply(|w| 1.0 / (Complex64::new(a0s * w.k1 * w.k1 + 1.0, 0.0) + ik_pow(w.k2, w.nyq2, 1))).inverse()
    };
    let rhs_sp = fft::forward_2d(&rhs)?;
    let mut u = inv(&rhs_sp);
    let mut residuals = Vec::new();
    for _ in 0..cfg.picard_max {
        let extra = da.mul(&fft::derivative_x1(&u, 2))?;
        let next = inv(&fft::forward_2d(&rhs.add(&extra)?)?);
        let r = next.sup_diff(&u)?;
        u = next;
        residuals.push(r);
        if r <= cfg.picard_tol * u.max_abs().max(1.0) {
            break;
        }
        let k = residuals.len();
        if k >= 3 && residuals[k - 1] >= residuals[k - 2] {
            return Err(Error::Contraction(format!(
                "Picard residual ratio {:.3} ≥ 1 at iteration {k} (‖a − a₀*‖/a₀* = {bound:.3})",
                residuals[k - 1] / residuals[k - 2]
            )));
        }
    }
    let scale = u.max_abs();
    let picard = PicardReport {
        a0_star: a0s,
        iterations: residuals.len(),
        ratio: picard_ratio(&residuals, scale),
        residuals,
        bound,
    };
    let v = periodic_v_family(&f_tau, &params, 0, 2)?;
    let ones = Field::constant(f.grid, 1.0);
    let model = modelling_constant(&u, &[ModelTerm { family: &v, a, sigma: &ones }], &ncfg)?;
    Ok(PeriodicSolution { u, model, picard, v, forcing: f_tau })
}

/// The coefficient layer ā with ∂₁ā, ∂₁²ā and the families ∂₁ᵐ𝖵′ (a₀-derivatives
/// up to 2 − m) for boundary data U_int − u(·,0).
pub struct BoundaryLayer {
    pub abar: Field,
    pub d1_abar: Field,
    pub d2_abar: Field,
    /// ∂₁ᵐ𝖵′ for m = 0, 1, 2.
    pub layer: [ParamFamily; 3],
    pub data: Vec<f64>,
}

fn row_at_zero(u: &Field) -> &[f64] {
    u.row(u.grid.zero_row())
}

pub fn boundary_layer(u_int: &[f64], u: &Field, a_boundary: &[f64], grid: GridSpec) -> Result<BoundaryLayer> {
    if grid.kind != DomainKind::HalfPlane {
        return domain("the boundary layer lives on a half-plane grid");
    }
    let n1 = grid.n1;
    if u_int.len() != n1 || a_boundary.len() != n1 || u.grid.n1 != n1 {
        return param("boundary data, u and the grid must share n1");
    }
    let params = ParamGrid::default();
    let u0 = row_at_zero(u);
    let data: Vec<f64> = u_int.iter().zip(u0).map(|(a, b)| a - b).collect();
    let (lo, hi) = a_boundary.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let (abar, d1_abar, d2_abar) = if lo == hi {
        (Field::constant(grid, lo), Field::zeros(grid), Field::zeros(grid))
    } else {
        let b = BoundaryData::fixed(a_boundary.to_vec());
        (
            coefficient_layer(a_boundary, grid)?,
            heat_layer_general_with(&b, 1.0, grid, false, 0, 1, true)?,
            heat_layer_general_with(&b, 1.0, grid, false, 0, 2, true)?,
        )
    };
    check_range(&abar, &params, "ā")?;
    let g = BoundaryData::fixed(data.clone());
    let src = |_: f64| Ok(g.clone());
    let layer = [
        heat_layer_family(&src, &params, grid, 0, 2, true)?,
        heat_layer_family(&src, &params, grid, 1, 1, true)?,
        heat_layer_family(&src, &params, grid, 2, 0, true)?,
    ];
    Ok(BoundaryLayer { abar, d1_abar, d2_abar, layer, data })
}

/// q = 𝖵′(·, ā) with 𝖵′ = 𝖵(·, ·, U_int − u(·,0)) and ā the coefficient layer.
pub fn boundary_ansatz_q(u_int: &[f64], u: &Field, a_boundary: &[f64], grid: GridSpec) -> Result<Field> {
    let bl = boundary_layer(u_int, u, a_boundary, grid)?;
    bl.layer[0].evaluate_at(&bl.abar, 0)
}

/// The forcing (∂₂ − a∂₁² + 1)q on the half-plane and its trivial extension.
#[derive(Clone, Debug)]
pub struct BoundaryForcing {
    pub half: Field,
    pub extended: Field,
}

fn forcing_from_layer(bl: &BoundaryLayer, a: &Field) -> Result<BoundaryForcing> {
    let grid = bl.abar.grid;
    if !a.grid.same_shape(&grid) {
        return domain("a must live on the half-plane grid of the layer");
    }
    let ab = &bl.abar;
    let d2v = bl.layer[2].evaluate_at(ab, 0)?;
    let da = bl.layer[0].evaluate_at(ab, 1)?;
    let d1da = bl.layer[1].evaluate_at(ab, 1)?;
    let dda = bl.layer[0].evaluate_at(ab, 2)?;
    let mut half = Field::zeros(grid);
    for p in 0..grid.len() {
        let (av, abv) = (a.values[p], ab.values[p]);
        let (a1, a2) = (bl.d1_abar.values[p], bl.d2_abar.values[p]);
        half.values[p] = (abv - av) * d2v.values[p] + da.values[p] * (1.0 - av) * a2
            - 2.0 * av * d1da.values[p] * a1
            - av * dda.values[p] * a1 * a1;
    }
    let extended = trivial_extension(&half)?;
    Ok(BoundaryForcing { half, extended })
}

/// (ā−a)∂₁²𝖵′ + ∂_{a₀}𝖵′(1−a)∂₁²ā − 2a∂₁∂_{a₀}𝖵′∂₁ā − a∂²_{a₀}𝖵′(∂₁ā)², all
/// evaluated at a₀ = ā(x). The row x₂ = 0 of x₁-differentiated layers is read at Δx₂/2.
pub fn w_forcing_g(
    u_int: &[f64],
    u: &Field,
    a_boundary: &[f64],
    a: &Field,
    grid: GridSpec,
) -> Result<BoundaryForcing> {
    forcing_from_layer(&boundary_layer(u_int, u, a_boundary, grid)?, a)
}

#[derive(Clone, Debug)]
pub struct CorrectionSolution {
    pub w: Field,
    /// Number of step halvings needed for a stable run.
    pub halvings: u32,
    pub a0_star: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// One pass over the rows with `sub` backward-Euler substeps per row. Each substep
/// solves (1 + δ(1 − a∂₁²))w⁺ = w − δg by iterating around a₀*; `None` if an inner
/// iteration stops contracting.
fn step_w(g: &Field, a: &Field, a0s: f64, sub: usize, tol: f64, max_iter: usize) -> Option<Field> {
    let grid = g.grid;
    let n1 = grid.n1;
    let dt = grid.dx2() / sub as f64;
    let ks: Vec<f64> = (0..n1).map(|i| 2.0 * std::f64::consts::PI * fft::freq_index(i, n1) as f64).collect();
    let denom: Vec<f64> = ks.iter().map(|k| 1.0 + dt * (a0s * k * k + 1.0)).collect();
    let mut values = vec![0.0; grid.len()];
    let mut cur = vec![0.0; n1];
    for j in 1..grid.rows() {
        let arow = a.row(j);
        let grow = g.row(j);
        for _ in 0..sub {
            let base: Vec<f64> = (0..n1).map(|i| cur[i] - dt * grow[i]).collect();
            let mut next = cur.clone();
            let mut last = f64::INFINITY;
            let mut done = false;
            for _ in 0..max_iter {
                let d2 = fft::derivative_1d(&next, 2);
                let rhs: Vec<f64> = (0..n1).map(|i| base[i] + dt * (arow[i] - a0s) * d2[i]).collect();
                let sp: Vec<Complex64> = fft::forward_1d(&rhs).iter().zip(&denom).map(|(c, d)| c / d).collect();
                let cand = fft::inverse_1d(&sp);
                let r = cand.iter().zip(&next).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                next = cand;
                if !r.is_finite() || (r >= last && r > tol) {
                    return None;
                }
                if r <= tol * sup(&next).max(1e-300) {
                    done = true;
                    break;
                }
                last = r;
            }
            if !done {
                return None;
            }
            cur = next;
        }
        values[j * n1..(j + 1) * n1].copy_from_slice(&cur);
    }
    Some(Field { grid, values })
}

/// w with (∂₂ − a∂₁² + 1)w = −g on the half-plane and w(·,0) = 0, by backward Euler
/// in x₂ with a and g taken at the new row. The implicit variable-coefficient step is
/// solved by Picard iteration around a₀*, so the result does not depend on the splitting.
/// A run whose inner iteration fails is retried with the step halved, up to four times.
pub fn solve_correction_w(g: &Field, a: &Field, cfg: &LinearSolveConfig) -> Result<CorrectionSolution> {
    if g.grid.kind != DomainKind::HalfPlane || !a.grid.same_shape(&g.grid) {
        return domain("the correction is computed on one half-plane grid");
    }
    let params = ParamGrid::default();
    check_range(a, &params, "a")?;
    let a0s = frozen_constant(a, cfg.frozen_a0, params.lambda);
    for h in 0..=4u32 {
        if let Some(w) = step_w(g, a, a0s, 1 << h, cfg.picard_tol, cfg.picard_max) {
            return Ok(CorrectionSolution { w, halvings: h, a0_star: a0s });
        }
    }
    Err(Error::Contraction("implicit w steps fail to converge after four step halvings".into()))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResidualRow {
    pub t: f64,
    /// ‖(∂₂ − a∂₁² + 1)u_T − f_T‖.
    pub raw: f64,
    /// raw·(T^{1/4})^{2−α}.
    pub weighted: f64,
}

/// ‖(∂₂ − a∂₁² + 1)u_T − f_T‖ along a ladder.
pub fn equation_residual(u: &Field, f: &Field, a: &Field, ladder: &[f64], alpha: f64) -> Result<Vec<ResidualRow>> {
    let su = fft::forward_2d(u)?;
    let sf = fft::forward_2d(f)?;
    let rows = par::map_range(ladder.len(), |k| -> Result<ResidualRow> {
        let t = ladder[k];
        let d2 = su.apply(|w| Complex64::new(psi_hat(w.k1, w.k2, t) * w.k1 * w.k1, 0.0)).inverse();
        let rest = su.apply(|w| (Complex64::new(1.0, 0.0) + ik_pow(w.k2, w.nyq2, 1)) * psi_hat(w.k1, w.k2, t)).inverse();
        let ft = kernel::convolve_spectrum(&sf, t);
        let mut r = 0.0f64;
        for p in 0..u.grid.len() {
            let v = rest.values[p] + a.values[p] * d2.values[p] - ft.values[p];
            r = r.max(v.abs());
        }
        Ok(ResidualRow { t, raw: r, weighted: r * t.powf(0.25 * (2.0 - alpha)) })
    });
    rows.into_iter().collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BundleReports {
    pub alpha: f64,
    pub m_u: f64,
    pub m_q: f64,
    /// [w]_{2α}, the modelling constant of w after no reference.
    pub w_2alpha: f64,
    pub u_alpha: f64,
    pub q_alpha: f64,
    pub w_alpha: f64,
    pub n0: f64,
    pub n0_int: f64,
    pub residual: Vec<ResidualRow>,
    pub residual_bound: f64,
    /// sup_T (T^{1/4})^{2−2α}‖(∂₂ − a∂₁² + 1)u_T − f_T‖.
    pub safonov_k: f64,
    pub identity_error: f64,
    pub w_boundary: f64,
    pub w_halvings: u32,
}

impl BundleReports {
    /// (M_u + M_q + [w]_{2α})/(N₀ + N₀^int).
    pub fn modelling_ratio(&self) -> f64 {
        (self.m_u + self.m_q + self.w_2alpha) / (self.n0 + self.n0_int)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub d_metric: f64,
    pub residual: f64,
    pub m_u: f64,
    pub m_q: f64,
    pub w_2alpha: f64,
}

#[derive(Clone, Debug)]
pub struct SolutionBundle {
    /// u on the carrier grid.
    pub u: Field,
    pub q: Field,
    pub w: Field,
    /// U = u + q + w on the half-plane.
    pub total: Field,
    /// The coefficient on the carrier grid.
    pub a: Field,
    pub forcing: Field,
    pub u_int: Vec<f64>,
    pub v: ParamFamily,
    pub model_u: ModellingReport,
    pub reports: BundleReports,
    pub picard: PicardReport,
    pub history: Vec<IterationRecord>,
}

/// 𝖵̃(·,a₀) with data U_int − v(·,0,a₀), x₁-derivative `m`, even-reflected onto the carrier.
pub fn reference_layer(u_int: &[f64], v: &ParamFamily, half: GridSpec, m: u32) -> Result<ParamFamily> {
    let zero = v.grid().zero_row();
    let params = v.params.clone();
    let src = |a0: f64| -> Result<BoundaryData> {
        let i = params
            .values
            .iter()
            .position(|&p| p == a0)
            .ok_or_else(|| Error::Parameter(format!("a₀ = {a0} not a grid node")))?;
        let row = v.entries[i].row(zero);
        Ok(BoundaryData::fixed(u_int.iter().zip(row).map(|(a, b)| a - b).collect()))
    };
    let fam = heat_layer_family(&src, &params, half, m, 0, true)?;
    fam.map_fields(&format!("d1^{m} V~"), even_reflection)
}

/// U = u + q + w for the linear problem with coefficient a, forcing f and initial
/// value U_int. `f` and `a` share a periodic grid.
pub fn assemble_linear(
    f: &Field,
    u_int: &[f64],
    a: &Field,
    products: &CoefficientProducts,
    cfg: &LinearSolveConfig,
) -> Result<SolutionBundle> {
    if f.grid != a.grid {
        return domain("f and a must share one periodic grid");
    }
    let (cg, hg) = carrier_grids(&f.grid)?;
    let fc = to_carrier(f)?;
    let ac = to_carrier(a)?;
    let products = products.on_grid(cg)?;
    let sol = solve_linear_periodic_u(&fc, &ac, &products, cfg)?;
    let a_half = restrict_to_half_plane(&ac)?;
    let bl = boundary_layer(u_int, &sol.u, a_half.row(0), hg)?;
    let q = bl.layer[0].evaluate_at(&bl.abar, 0)?;
    let g = forcing_from_layer(&bl, &a_half)?;
    let corr = solve_correction_w(&g.half, &a_half, cfg)?;
    let u_half = restrict_to_half_plane(&sol.u)?;
    let total = u_half.add(&q)?.add(&corr.w)?;
    let identity_error = total.sub(&u_half)?.sub(&q)?.sub(&corr.w)?.max_abs();

    let ncfg = NormConfig::for_grid(cfg.alpha, &cg)?;
    let alpha = cfg.alpha;
    let ones = Field::constant(cg, 1.0);
    let qt = even_reflection(&q)?;
    let vt = reference_layer(u_int, &sol.v, hg, 0)?;
    let m_q = modelling_constant(&qt, &[ModelTerm { family: &vt, a: &ac, sigma: &ones }], &ncfg)?.m;
    let we = trivial_extension(&corr.w)?;
    let w_2alpha = modelling_constant(&we, &[], &ncfg)?.m;
    let residual = equation_residual(&sol.u, &sol.forcing, &ac, &ncfg.ladder, alpha)?;
    let residual_bound = residual.iter().fold(0.0f64, |m, r| m.max(r.weighted));
    let safonov_k = residual.iter().fold(0.0f64, |m, r| m.max(r.raw * r.t.powf(0.25 * (2.0 - 2.0 * alpha))));
    let reports = BundleReports {
        alpha,
        m_u: sol.model.m,
        m_q,
        w_2alpha,
        u_alpha: holder_norm(&sol.u, alpha, &ncfg)?.value,
        q_alpha: holder_norm(&qt, alpha, &ncfg)?.value,
        w_alpha: holder_norm(&we, alpha, &ncfg)?.value,
        n0: neg_norm_conv(&fc, 2.0 - alpha, &ncfg)?.value,
        n0_int: holder_norm_1d(u_int, alpha),
        residual,
        residual_bound,
        safonov_k,
        identity_error,
        w_boundary: corr.w.row(0).iter().fold(0.0f64, |m, v| m.max(v.abs())),
        w_halvings: corr.halvings,
    };
    Ok(SolutionBundle {
        u: sol.u,
        q,
        w: corr.w,
        total,
        a: ac,
        forcing: fc,
        u_int: u_int.to_vec(),
        v: sol.v,
        model_u: sol.model,
        reports,
        picard: sol.picard,
        history: Vec::new(),
    })
}

/// a(u) = base + amplitude·sin(frequency·u).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMap {
    pub base: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl CoefficientMap {
    pub fn constant(c: f64) -> Self {
        CoefficientMap { base: c, amplitude: 0.0, frequency: 1.0 }
    }

    pub fn value(&self, u: f64) -> f64 {
        self.base + self.amplitude * (self.frequency * u).sin()
    }

    /// k-th derivative, k ≤ 3.
    pub fn derivative(&self, k: u32, u: f64) -> f64 {
        let (s, c) = (self.frequency * u).sin_cos();
        let w = self.amplitude * self.frequency.powi(k as i32);
        match k % 4 {
            0 => w * s,
            1 => w * c,
            2 => -w * s,
            _ => -w * c,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.amplitude == 0.0
    }

    pub fn validate(&self, lambda: f64) -> Result<()> {
        let (lo, hi) = (self.base - self.amplitude.abs(), self.base + self.amplitude.abs());
        if lo < lambda || hi > 1.0 {
            return param(format!("a maps into [{lo}, {hi}], outside [{lambda}, 1]"));
        }
        if (1..=3).any(|k| self.amplitude.abs() * self.frequency.abs().powi(k) > 1.0) {
            return param("the first three derivatives of a must be bounded by 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasilinearConfig {
    pub linear: LinearSolveConfig,
    pub tol: f64,
    pub max_iter: usize,
    /// Number of ladder scales (ending at τ) used to reconstruct a⋄∂₁²v.
    pub ladder_len: usize,
}

impl QuasilinearConfig {
    pub fn for_grid(n1: usize) -> Self {
        QuasilinearConfig { linear: LinearSolveConfig::for_grid(n1), tol: 1e-10, max_iter: 30, ladder_len: 9 }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub bundle: SolutionBundle,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// Successive ratios d_{k+1}/d_k.
    pub ratios: Vec<f64>,
}

impl FixedPointResult {
    /// Largest successive ratio of the d-metric while it is above `floor`.
    pub fn contraction_ratio(&self, floor: f64) -> f64 {
        self.history
            .windows(2)
            .filter(|w| w[0].d_metric > floor && w[1].d_metric > floor)
            .map(|w| w[1].d_metric / w[0].d_metric)
            .fold(0.0f64, f64::max)
    }
}

/// Distance between iterates: M_{Δu} + [Δw]_{2α} + ‖Δu‖_α + ‖Δw‖_α + (N₀ + N₀^int)‖Δa‖_α,
/// with M_{Δu} the modelling of u₁ − u₀ after (v, v) according to (a₁, a₀) and (1, −1).
pub fn d_metric(b1: &SolutionBundle, b0: &SolutionBundle, ncfg: &NormConfig) -> Result<f64> {
    let alpha = ncfg.alpha;
    let du = b1.u.sub(&b0.u)?;
    let one = Field::constant(du.grid, 1.0);
    let minus = Field::constant(du.grid, -1.0);
    let terms = [
        ModelTerm { family: &b1.v, a: &b1.a, sigma: &one },
        ModelTerm { family: &b0.v, a: &b0.a, sigma: &minus },
    ];
    let m = modelling_constant(&du, &terms, ncfg)?.m;
    let dwe = trivial_extension(&b1.w.sub(&b0.w)?)?;
    let w2 = modelling_constant(&dwe, &[], ncfg)?.m;
    let n = b1.reports.n0 + b1.reports.n0_int;
    Ok(m + w2
        + holder_norm(&du, alpha, ncfg)?.value
        + holder_norm(&dwe, alpha, ncfg)?.value
        + n * holder_norm(&b1.a.sub(&b0.a)?, alpha, ncfg)?.value)
}

/// Fixed point of (u*, w*, a*) ↦ (q*, a := a(u* + w* + q̃*), {a⋄∂₁²v}) ↦ (u, w, a).
///
/// The products a⋄∂₁²v(·,a₀) are reconstructed at scale τ from the modelling of a after
/// v_τ + 𝖵̃ according to a*, with σ = a′(U*) and ν = a′(U*)ν_U; the reference products
/// (v_τ + 𝖵̃)(a₀′)⋄∂₁²v(a₀) come from the renormalized pair table. On x₂ < 0 the
/// coefficient uses the even reflection of w*, which keeps a continuous across the
/// periodic seam x₂ = ±t_max.
pub fn quasilinear_fixed_point(
    f: &ForcingSample,
    u_int: &[f64],
    a_fn: &CoefficientMap,
    cfg: &QuasilinearConfig,
) -> Result<FixedPointResult> {
    let lin = &cfg.linear;
    lin.validate()?;
    let params = ParamGrid::default();
    a_fn.validate(params.lambda)?;
    let (cg, hg) = carrier_grids(&f.field.grid)?;
    if u_int.len() != cg.n1 {
        return param("U_int length must equal n1");
    }
    let fc = to_carrier(&f.field)?;
    let ncfg = NormConfig::for_grid(lin.alpha, &cg)?;
    let tau = lin.tau;
    let ladder: Vec<f64> = {
        let all: Vec<f64> = grid_ladder(cg.n1).into_iter().filter(|&t| t >= tau * (1.0 - 1e-12)).collect();
        if (all.last().copied().unwrap_or(0.0) - tau).abs() > 1e-12 * tau {
            return param("τ must lie on the grid ladder");
        }
        all[all.len().saturating_sub(cfg.ladder_len.max(2))..].to_vec()
    };
    let a_b: Vec<f64> = u_int.iter().map(|&x| a_fn.value(x)).collect();
    let ones = Field::constant(cg, 1.0);

    let table = if a_fn.is_constant() {
        None
    } else {
        let f_tau = kernel::convolve(&fc, tau)?;
        let v_tau = periodic_v_family(&f_tau, &params, 0, 0)?;
        let v = periodic_v_family(&fc, &params, 0, 0)?;
        let d2v = periodic_v_family(&fc, &params, 2, 0)?;
        let l: Vec<ParamFamily> = (0..3).map(|m| reference_layer(u_int, &v_tau, hg, m)).collect::<Result<_>>()?;
        let mut w_fam = v_tau.clone();
        for (e, le) in w_fam.entries.iter_mut().zip(&l[0].entries) {
            *e = e.add(le)?;
        }
        w_fam.label = "v_tau + V~".into();
        let spec = f.spec;
        let pairs = offline_pair_table_with(&v_tau, &v, &d2v, Some([&l[0], &l[1], &l[2]]), |a0p, a0| {
            renorm_constant_weighted(&spec, |k1, k2| psi_hat(k1, k2, tau), a0p, a0)
        })?;
        Some((w_fam, d2v, pairs))
    };

    let mut u_star = Field::zeros(cg);
    let mut w_star = Field::zeros(hg);
    let q0 = boundary_ansatz_q(u_int, &u_star, &a_b, hg)?;
    let mut a_star = even_reflection(&q0)?.map(|x| a_fn.value(x));
    let mut prev: Option<SolutionBundle> = None;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut stalls = 0;
    for it in 1..=cfg.max_iter {
        let q_star = boundary_ansatz_q(u_int, &u_star, &a_b, hg)?;
        let big = u_star.add(&even_reflection(&q_star)?)?.add(&even_reflection(&w_star)?)?;
        let a = big.map(|x| a_fn.value(x));
        let products = match &table {
            None => CoefficientProducts::Classical,
            Some((w_fam, d2v, pairs)) => {
                let sigma = big.map(|x| a_fn.derivative(1, x));
                let model_u = modelling_constant(&big, &[ModelTerm { family: w_fam, a: &a_star, sigma: &ones }], &ncfg)?;
                let nu_a = sigma.mul(&model_u.nu)?;
                let model_a = modelling_constant_with_nu(
                    &a,
                    &[ModelTerm { family: w_fam, a: &a_star, sigma: &sigma }],
                    &nu_a,
                    &ncfg,
                )?;
                let entries = (0..params.len())
                    .map(|i| {
                        reconstruct_U_product(&a, &model_a, &[w_fam], &d2v.entries[i], &[&pairs.rows[i]], &ladder, tau)
                            .map(|r| r.field)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let family =
                    ParamFamily { label: "a <> d1^2 v".into(), params: params.clone(), entries, derivs: Vec::new() };
                CoefficientProducts::Regularized { family, tau }
            }
        };
        let bundle = assemble_linear(&fc, u_int, &a, &products, lin)?;
        let d = match &prev {
            Some(p) => d_metric(&bundle, p, &ncfg)?,
            None => f64::INFINITY,
        };
        let r = &bundle.reports;
        history.push(IterationRecord {
            iter: it,
            d_metric: d,
            residual: r.residual_bound,
            m_u: r.m_u,
            m_q: r.m_q,
            w_2alpha: r.w_2alpha,
        });
        let k = history.len();
        if k >= 3 && history[k - 1].d_metric >= history[k - 2].d_metric {
            stalls += 1;
        } else {
            stalls = 0;
        }
        u_star = bundle.u.clone();
        w_star = bundle.w.clone();
        a_star = a;
        let converged = d < cfg.tol;
        prev = Some(bundle);
        if converged {
            break;
        }
        if stalls >= 3 {
            return Err(Error::Contraction(format!(
                "d-metric non-decreasing for 3 consecutive iterations (last d = {d:.3e} at iteration {it})"
            )));
        }
    }
    let mut bundle = prev.expect("at least one iteration");
    let converged = history.last().is_some_and(|h| h.d_metric < cfg.tol);
    bundle.history = history.clone();
    let ratios = history
        .windows(2)
        .filter(|w| w[0].d_metric.is_finite())
        .map(|w| w[1].d_metric / w[0].d_metric)
        .collect();
    Ok(FixedPointResult { bundle, history, converged, ratios })
}

/// Sizes δN₀ = ‖f₁ − f₀‖_{α−2} and δN₀^int = ‖U_int,1 − U_int,0‖_α of a perturbation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Perturbation {
    pub delta_n0: f64,
    pub delta_n0_int: f64,
}

impl Perturbation {
    pub fn measure(b0: &SolutionBundle, b1: &SolutionBundle) -> Result<Self> {
        let ncfg = NormConfig::for_grid(b0.reports.alpha, &b0.forcing.grid)?;
        let df = b1.forcing.sub(&b0.forcing)?;
        let dg: Vec<f64> = b1.u_int.iter().zip(&b0.u_int).map(|(a, b)| a - b).collect();
        Ok(Perturbation {
            delta_n0: neg_norm_conv(&df, 2.0 - b0.reports.alpha, &ncfg)?.value,
            delta_n0_int: holder_norm_1d(&dg, b0.reports.alpha),
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityReport {
    pub du_alpha: f64,
    pub dq_alpha: f64,
    pub dw_alpha: f64,
    /// Modelling of u₁ − u₀ after (v₁, v₀) according to (a₁, a₀) and (1, −1).
    pub dm_u: f64,
    pub dw_2alpha: f64,
    pub total: f64,
    pub delta_n0: f64,
    pub delta_n0_int: f64,
    /// total/(δN₀ + δN₀^int).
    pub ratio: f64,
}

pub fn stability_experiment(b0: &SolutionBundle, b1: &SolutionBundle, pert: &Perturbation) -> Result<StabilityReport> {
    let alpha = b0.reports.alpha;
    let ncfg = NormConfig::for_grid(alpha, &b0.u.grid)?;
    let du = b1.u.sub(&b0.u)?;
    let dq = even_reflection(&b1.q.sub(&b0.q)?)?;
    let dwe = trivial_extension(&b1.w.sub(&b0.w)?)?;
    let one = Field::constant(du.grid, 1.0);
    let minus = Field::constant(du.grid, -1.0);
    let terms = [
        ModelTerm { family: &b1.v, a: &b1.a, sigma: &one },
        ModelTerm { family: &b0.v, a: &b0.a, sigma: &minus },
    ];
    let dm_u = modelling_constant(&du, &terms, &ncfg)?.m;
    let dw_2alpha = modelling_constant(&dwe, &[], &ncfg)?.m;
    let du_alpha = holder_norm(&du, alpha, &ncfg)?.value;
    let dq_alpha = holder_norm(&dq, alpha, &ncfg)?.value;
    let dw_alpha = holder_norm(&dwe, alpha, &ncfg)?.value;
    let total = du_alpha + dq_alpha + dw_alpha;
    let denom = pert.delta_n0 + pert.delta_n0_int;
    Ok(StabilityReport {
        du_alpha,
        dq_alpha,
        dw_alpha,
        dm_u,
        dw_2alpha,
        total,
        delta_n0: pert.delta_n0,
        delta_n0_int: pert.delta_n0_int,
        ratio: if denom > 0.0 { total / denom } else { 0.0 },
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SafonovReport {
    pub m: f64,
    pub u_alpha: f64,
    /// sup_T (T^{1/4})^{2−2α}‖(∂₂ − a∂₁² + 1)u_T − f_T‖.
    pub k: f64,
    /// ‖f‖_{α−2}.
    pub n: f64,
    pub sigma_alpha: f64,
    /// (M + ‖u‖_α)/(K + ‖σ‖_α N).
    pub ratio: f64,
}

/// The Schauder-type ratio (M + ‖u‖_α)/(K + ‖σ‖_α N) for u modelled after v (σ = 1),
/// where v solves the constant-coefficient problem with forcing f.
pub fn safonov_ratio(u: &Field, f: &Field, a: &Field, m: f64, alpha: f64) -> Result<SafonovReport> {
    let ncfg = NormConfig::for_grid(alpha, &u.grid)?;
    let res = equation_residual(u, f, a, &ncfg.ladder, alpha)?;
    let k = res.iter().fold(0.0f64, |acc, r| acc.max(r.raw * r.t.powf(0.25 * (2.0 - 2.0 * alpha))));
    let n = neg_norm_conv(f, 2.0 - alpha, &ncfg)?.value;
    let u_alpha = holder_norm(u, alpha, &ncfg)?.value;
    let sigma_alpha = 1.0;
    let denom = k + sigma_alpha * n;
    Ok(SafonovReport { m, u_alpha, k, n, sigma_alpha, ratio: if denom > 0.0 { (m + u_alpha) / denom } else { 0.0 } })
}

impl SolutionBundle {
    pub fn safonov(&self) -> Result<SafonovReport> {
        safonov_ratio(&self.u, &self.forcing, &self.a, self.reports.m_u, self.reports.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_forcing, CovarianceSpec};
    use crate::refsol::{heat_layer_general, lacunary_data, solve_periodic_v};
    use std::f64::consts::PI;

    fn forcing(n: usize, amp: f64, seed: u64) -> ForcingSample {
        let spec = CovarianceSpec::white_in_time(0.75, amp, n / 2 - 1).unwrap();
        sample_forcing(&spec, GridSpec::torus(n, n).unwrap(), seed).unwrap()
    }

    #[test]
    fn carrier_matches_torus_spacing() {
        let t = GridSpec::torus(16, 32).unwrap();
        let (c, h) = carrier_grids(&t).unwrap();
        assert_eq!(c.rows(), 32);
        assert_eq!(h.rows(), 17);
        assert!((c.dx2() - t.dx2()).abs() < 1e-15);
        assert_eq!(c.x2(c.zero_row()), 0.0);
    }

    #[test]
    fn constant_coefficient_reproduces_frozen_solution() {
        let n = 32;
        let f = forcing(n, 1e-2, 4);
        let a0 = 0.625;
        let a = Field::constant(f.field.grid, a0);
        let u_int = lacunary_data(n, 0.75, 1e-2, 2);
        let cfg = LinearSolveConfig::for_grid(n);
        let b = assemble_linear(&f.field, &u_int, &a, &CoefficientProducts::Classical, &cfg).unwrap();

        let (c, h) = carrier_grids(&f.field.grid).unwrap();
        let fc = periodic_resample(&f.field, c).unwrap();
        let v = solve_periodic_v(&kernel::convolve(&fc, cfg.tau).unwrap(), a0, true).unwrap();
        let v0 = v.row(c.zero_row()).to_vec();
        let data: Vec<f64> = u_int.iter().zip(&v0).map(|(x, y)| x - y).collect();
        let layer = heat_layer_general(&BoundaryData::fixed(data), a0, h, true, 0, 0).unwrap();
        let oracle = restrict_to_half_plane(&v).unwrap().add(&layer).unwrap();
        let d = b.total.sup_diff(&oracle).unwrap(); assert!(d < 1e-8, "diff {d}");
        assert!(b.w.values.iter().all(|&x| x == 0.0));
        assert!(b.reports.identity_error < 1e-12);
    }

    #[test]
    fn forcing_g_vanishes_for_constant_coefficient() {
        let h = GridSpec::half_plane(32, 16, 0.5).unwrap();
        let u = Field::zeros(h.as_two_sided());
        let u_int = lacunary_data(32, 0.75, 0.1, 1);
        let g = w_forcing_g(&u_int, &u, &[0.7; 32], &Field::constant(h, 0.7), h).unwrap();
        assert!(g.half.values.iter().all(|&x| x == 0.0));
        assert!(g.extended.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_solver_is_additive() {
        let n = 32;
        let f1 = forcing(n, 1e-2, 1).field;
        let f2 = forcing(n, 1e-2, 2).field;
        let a = Field::from_fn(f1.grid, |x1, x2| 0.6 + 0.004 * (2.0 * PI * x1).sin() * (2.0 * PI * x2).cos());
        let cfg = LinearSolveConfig::for_grid(n);
        let p = CoefficientProducts::Classical;
        let u1 = solve_linear_periodic_u(&f1, &a, &p, &cfg).unwrap().u;
        let u2 = solve_linear_periodic_u(&f2, &a, &p, &cfg).unwrap().u;
        let u12 = solve_linear_periodic_u(&f1.add(&f2).unwrap(), &a, &p, &cfg).unwrap().u;
        assert!(u12.sup_diff(&u1.add(&u2).unwrap()).unwrap() < 1e-11);
    }

    #[test]
    fn splitting_does_not_change_the_solution() {
        let n = 32;
        let f = forcing(n, 1e-2, 3).field;
        let a = Field::from_fn(f.grid, |x1, _| 0.6 + 0.05 * (2.0 * PI * x1).sin().max(0.0));
        let mut cfg = LinearSolveConfig::for_grid(n);
        cfg.a_cap = f64::INFINITY;
        let u_int = lacunary_data(n, 0.75, 1e-2, 3);
        let b0 = assemble_linear(&f, &u_int, &a, &CoefficientProducts::Classical, &cfg).unwrap();
        cfg.frozen_a0 = FrozenA0::Midpoint;
        let b1 = assemble_linear(&f, &u_int, &a, &CoefficientProducts::Classical, &cfg).unwrap();
        assert_ne!(b0.picard.a0_star, b1.picard.a0_star);
        assert!(b0.total.sup_diff(&b1.total).unwrap() < 1e-12);
    }

    #[test]
    fn picard_contracts_for_small_holder_coefficient() {
        let n = 32;
        let f = forcing(n, 1e-2, 5).field;
        let a = Field::from_fn(f.grid, |x1, x2| 0.6 + 0.004 * (2.0 * PI * x1).sin() * (2.0 * PI * x2).cos());
        let cfg = LinearSolveConfig::for_grid(n);
        let s = solve_linear_periodic_u(&f, &a, &CoefficientProducts::Classical, &cfg).unwrap();
        assert!(s.picard.ratio < 0.5);
        assert!(s.picard.iterations < cfg.picard_max);
    }

    #[test]
    fn rejects_bad_configuration() {
        let n = 16;
        let f = forcing(n, 1e-2, 1).field;
        let mut cfg = LinearSolveConfig::for_grid(n);
        cfg.tau = 0.3;
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
        let cfg = LinearSolveConfig::for_grid(n);
        let rough = Field::from_fn(f.grid, |x1, _| 0.6 + 0.3 * (2.0 * PI * 4.0 * x1).sin());
        assert!(solve_linear_periodic_u(&f, &rough, &CoefficientProducts::Classical, &cfg).is_err());
        let low = Field::constant(f.grid, 0.1);
        assert!(solve_linear_periodic_u(&f, &low, &CoefficientProducts::Classical, &cfg).is_err());
    }

    #[test]
    fn correction_starts_at_zero() {
        let h = GridSpec::half_plane(32, 16, 0.25).unwrap();
        let g = Field::from_fn(h, |x1, x2| (2.0 * PI * x1).cos() * (1.0 + x2));
        let a = Field::constant(h, 0.5);
        let w = solve_correction_w(&g, &a, &LinearSolveConfig::for_grid(32)).unwrap();
        assert!(w.w.row(0).iter().all(|&x| x == 0.0));
        assert_eq!(w.halvings, 0);
        let e = trivial_extension(&w.w).unwrap();
        assert!(e.values[..e.grid.n2 * 32].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn coefficient_map_derivatives() {
        let m = CoefficientMap { base: 0.6, amplitude: 0.25, frequency: 1.3 };
        let h = 1e-5;
        for &u in &[-1.0, 0.0, 0.4, 2.0] {
            for k in 1..=3 {
                let fd = (m.derivative(k - 1, u + h) - m.derivative(k - 1, u - h)) / (2.0 * h);
                assert!((fd - m.derivative(k, u)).abs() < 1e-8);
            }
            assert!((m.derivative(0, u) - (m.value(u) - m.base)).abs() < 1e-15);
        }
        assert!(m.validate(0.25).is_ok());
        assert!(CoefficientMap { base: 0.9, amplitude: 0.2, frequency: 1.0 }.validate(0.25).is_err());
        assert!(CoefficientMap { base: 0.6, amplitude: 0.2, frequency: 2.0 }.validate(0.25).is_err());
    }

    #[test]
    fn holder_1d_of_constant_and_sine() {
        assert_eq!(holder_norm_1d(&[0.3; 8], 0.75), 0.3);
        let s: Vec<f64> = (0..64).map(|i| (2.0 * PI * i as f64 / 64.0).sin()).collect();
        let v = holder_norm_1d(&s, 0.75);
        assert!(v > 1.0 && v < 1.0 + 2.0 * PI);
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let n = 16;
        let mut f = forcing(n, 1e-2, 1);
        f.field = Field::zeros(f.field.grid);
        let cfg = QuasilinearConfig::for_grid(n);
        let r = quasilinear_fixed_point(&f, &[0.0; 16], &CoefficientMap::constant(0.6), &cfg).unwrap();
        assert!(r.bundle.total.max_abs() == 0.0);
        assert!(r.converged);
    }

    #[test]
    fn constant_map_converges_to_frozen_solution() {
        let n = 16;
        let f = forcing(n, 1e-2, 2);
        let u_int = lacunary_data(n, 0.75, 1e-2, 2);
        let cfg = QuasilinearConfig::for_grid(n);
        let r = quasilinear_fixed_point(&f, &u_int, &CoefficientMap::constant(0.6), &cfg).unwrap();
        assert!(r.converged);
        assert!(r.history.len() <= 2);
        let a = Field::constant(f.field.grid, 0.6);
        let b = assemble_linear(&f.field, &u_int, &a, &CoefficientProducts::Classical, &cfg.linear).unwrap();
        assert!(r.bundle.total.sup_diff(&b.total).unwrap() < 1e-14);
    }

    #[test]
    fn quasilinear_iteration_is_deterministic_and_contracts() {
        let n = 16;
        let f = forcing(n, 1e-2, 3);
        let u_int = lacunary_data(n, 0.75, 1e-2, 3);
        let mut cfg = QuasilinearConfig::for_grid(n);
        cfg.linear.a_cap = f64::INFINITY;
        let map = CoefficientMap { base: 0.6, amplitude: 0.25, frequency: 1.0 };
        let r0 = quasilinear_fixed_point(&f, &u_int, &map, &cfg).unwrap();
        let r1 = quasilinear_fixed_point(&f, &u_int, &map, &cfg).unwrap();
        assert!(r0.converged);
        assert!(r0.contraction_ratio(1e-13) < 0.5);
        let bits = |r: &FixedPointResult| r.history.iter().map(|h| h.d_metric.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&r0), bits(&r1));
    }

    #[test]
    fn identical_bundles_are_stable() {
        let n = 16;
        let f = forcing(n, 1e-2, 4);
        let u_int = lacunary_data(n, 0.75, 1e-2, 4);
        let a = Field::constant(f.field.grid, 0.6);
        let cfg = LinearSolveConfig::for_grid(n);
        let b = assemble_linear(&f.field, &u_int, &a, &CoefficientProducts::Classical, &cfg).unwrap();
        let p = Perturbation::measure(&b, &b).unwrap();
        let s = stability_experiment(&b, &b, &p).unwrap();
        assert_eq!(s.total, 0.0);
        assert_eq!(s.ratio, 0.0);
    }
}
