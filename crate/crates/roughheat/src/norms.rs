//! Parabolic Hölder norms, the ladder negative norm, the triplet-norm oracle,
//! modelling constants and commutator norms.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{domain, param, Result};
use crate::fft;
use crate::grid::{DomainKind, Field, GridSpec};
use crate::kernel;
use crate::par;
use crate::refsol::{ParamFamily, Stencil};
use crate::rng;

const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub alpha: f64,
    pub ladder: Vec<f64>,
    pub pair_budget: usize,
    pub seed: u64,
}

impl NormConfig {
    pub fn new(alpha: f64, ladder: Vec<f64>, pair_budget: usize, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return param(format!("α = {alpha} must lie in (0,1)"));
        }
        if ladder.len() < 9 || ladder.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return param("the scale ladder needs at least 9 scales in (0,1]");
        }
        if pair_budget == 0 {
            return param("pair budget must be positive");
        }
        Ok(NormConfig { alpha, ladder, pair_budget, seed })
    }

    /// Defaults for a grid: ladder down to the grid scale, 2·10⁵ sampled pairs, seed 0.
    pub fn for_grid(alpha: f64, grid: &GridSpec) -> Result<Self> {
        Self::new(alpha, kernel::grid_ladder(grid.n1), 200_000, 0)
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        NormConfig { alpha, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    Sampled,
    Ladder,
    Composite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    None,
    /// Grid nodes (i, j) of the maximizing pair.
    Pair { x: (usize, usize), y: (usize, usize) },
    Scale { t: f64, point: (usize, usize) },
    Point { point: (usize, usize) },
    Parts { parts: Vec<NormReport> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    pub witness: Witness,
    pub method: Method,
    pub alpha: f64,
    pub ladder: Vec<f64>,
    #[serde(default)]
    pub component: String,
}

impl NormReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("norm report serializes")
    }

    fn composite(value: f64, alpha: f64, parts: Vec<NormReport>, component: &str) -> Self {
        NormReport {
            value,
            witness: Witness::Parts { parts },
            method: Method::Composite,
            alpha,
            ladder: Vec::new(),
            component: component.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    value: f64,
    x: usize,
    y: usize,
}

impl Hit {
    const NONE: Hit = Hit { value: 0.0, x: usize::MAX, y: usize::MAX };

    fn beats(&self, o: &Hit) -> bool {
        self.value > o.value || (self.value == o.value && (self.x, self.y) < (o.x, o.y))
    }

    fn best(a: Hit, b: Hit) -> Hit {
        if b.beats(&a) {
            b
        } else {
            a
        }
    }
}

fn node(grid: &GridSpec, p: usize) -> (usize, usize) {
    (p % grid.n1, p / grid.n1)
}

fn flat(grid: &GridSpec, i: usize, j: usize) -> usize {
    j * grid.n1 + i
}

fn exhaustive_ok(grid: &GridSpec) -> bool {
    grid.n1 <= 64 && grid.rows() <= 65
}

/// Move (i, j) by (o1, o2) rows/columns; x₁ wraps, x₂ wraps on the torus and is
/// reflected (then clamped) elsewhere.
fn shifted(grid: &GridSpec, i: usize, j: usize, o1: i64, o2: i64, reflect: bool) -> Option<(usize, usize)> {
    let n1 = grid.n1 as i64;
    let rows = grid.rows() as i64;
    let i2 = (i as i64 + o1).rem_euclid(n1) as usize;
    let mut j2 = j as i64 + o2;
    if grid.kind == DomainKind::Torus {
        j2 = j2.rem_euclid(rows);
    } else if !(0..rows).contains(&j2) {
        if !reflect {
            return None;
        }
        j2 = j as i64 - o2;
        j2 = j2.clamp(0, rows - 1);
    }
    Some((i2, j2 as usize))
}

/// Sup of `q(x, y, d(x,y))` over pairs, exhaustive on small grids and sampled otherwise.
fn pair_sup(
    grid: &GridSpec,
    cfg: &NormConfig,
    max_dist: Option<f64>,
    symmetric: bool,
    q: impl Fn(usize, usize, f64) -> f64 + Sync + Send,
) -> (Hit, Method) {
    let n = grid.len();
    let within = |d: f64| max_dist.map_or(true, |m| d <= m);
    if exhaustive_ok(grid) {
        let hits = par::map_range(n, |x| {
            let mut best = Hit::NONE;
            let start = if symmetric { x + 1 } else { 0 };
            for y in start..n {
                if y == x {
                    continue;
                }
                let d = grid.node_distance(node(grid, x), node(grid, y));
                if !within(d) {
                    continue;
                }
                let h = Hit { value: q(x, y, d), x, y };
                if h.beats(&best) {
                    best = h;
                }
            }
            best
        });
        return (hits.into_iter().fold(Hit::NONE, Hit::best), Method::Exhaustive);
    }
    let levels = grid.n1.trailing_zeros() as usize;
    let chunks = cfg.pair_budget.div_ceil(CHUNK);
    let hits = par::map_range(chunks, |c| {
        let mut r = rng::stream(cfg.seed, c as u64);
        let count = CHUNK.min(cfg.pair_budget - c * CHUNK);
        let mut best = Hit::NONE;
        for _ in 0..count {
            let x = rng::below(&mut r, n);
            let (i, j) = node(grid, x);
            let s = rng::below(&mut r, levels + 2);
            let y = if s > levels {
                rng::below(&mut r, n)
            } else {
                let span1 = 1i64 << s;
                let span2 = (((span1 as f64 * grid.dx1()).powi(2) / grid.dx2()).ceil() as i64).max(1);
                let o1 = rng::below(&mut r, (2 * span1 + 1) as usize) as i64 - span1;
                let o2 = rng::below(&mut r, (2 * span2 + 1) as usize) as i64 - span2;
                if o1 == 0 && o2 == 0 {
                    continue;
                }
                match shifted(grid, i, j, o1, o2, true) {
                    Some((a, b)) => flat(grid, a, b),
                    None => continue,
                }
            };
            if y == x {
                continue;
            }
            let (x, y) = if symmetric && y < x { (y, x) } else { (x, y) };
            let d = grid.node_distance(node(grid, x), node(grid, y));
            if !within(d) {
                continue;
            }
            let h = Hit { value: q(x, y, d), x, y };
            if h.beats(&best) {
                best = h;
            }
        }
        best
    });
    (hits.into_iter().fold(Hit::NONE, Hit::best), Method::Sampled)
}

fn pair_report(grid: &GridSpec, hit: Hit, method: Method, alpha: f64, component: &str) -> NormReport {
    let witness = if hit.x == usize::MAX {
        Witness::None
    } else {
        Witness::Pair { x: node(grid, hit.x), y: node(grid, hit.y) }
    };
    NormReport { value: hit.value, witness, method, alpha, ladder: Vec::new(), component: component.to_string() }
}

/// |f(y) − f(x)|/d^α(x,y) at two grid nodes.
pub fn pair_quotient(f: &Field, alpha: f64, x: (usize, usize), y: (usize, usize)) -> f64 {
    let d = f.grid.node_distance(x, y);
    (f.at(y.0, y.1) - f.at(x.0, x.1)).abs() / d.powf(alpha)
}

fn base_seminorm(f: &Field, alpha: f64, cfg: &NormConfig, max_dist: Option<f64>, component: &str) -> NormReport {
    let v = &f.values;
    let (hit, method) = pair_sup(&f.grid, cfg, max_dist, true, |x, y, d| (v[y] - v[x]).abs() / d.powf(alpha));
    pair_report(&f.grid, hit, method, alpha, component)
}

/// [f]_β for β ∈ (0,1) ∪ (1,2) ∪ (2,3).
pub fn holder_seminorm(f: &Field, alpha: f64, cfg: &NormConfig) -> Result<NormReport> {
    if alpha > 0.0 && alpha < 1.0 {
        return Ok(base_seminorm(f, alpha, cfg, None, "f"));
    }
    if alpha > 1.0 && alpha < 2.0 {
        let inner = holder_seminorm(&fft::derivative_x1(f, 1), alpha - 1.0, cfg)?;
        return Ok(NormReport::composite(inner.value, alpha, vec![NormReport { component: "d1 f".into(), ..inner }], "f"));
    }
    if alpha > 2.0 && alpha < 3.0 {
        let d2 = fft::derivative_x2(f, 1)?;
        let a = holder_seminorm(&fft::derivative_x1(f, 2), alpha - 2.0, cfg)?;
        let b = holder_seminorm(&d2, alpha - 2.0, cfg)?;
        let parts = vec![NormReport { component: "d1^2 f".into(), ..a }, NormReport { component: "d2 f".into(), ..b }];
        let value = parts[0].value + parts[1].value;
        return Ok(NormReport::composite(value, alpha, parts, "f"));
    }
    param(format!("Hölder exponent {alpha} not in (0,1)∪(1,2)∪(2,3)"))
}

/// Hölder seminorm restricted to pairs with d(x,y) ≤ 1.
pub fn local_holder_seminorm(f: &Field, alpha: f64, cfg: &NormConfig) -> Result<NormReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return param("local seminorm needs α ∈ (0,1)");
    }
    Ok(base_seminorm(f, alpha, cfg, Some(1.0), "f local"))
}

pub fn sup_norm(f: &Field) -> NormReport {
    let mut best = (0.0, 0usize);
    for (p, v) in f.values.iter().enumerate() {
        if v.abs() > best.0 {
            best = (v.abs(), p);
        }
    }
    NormReport {
        value: best.0,
        witness: Witness::Point { point: node(&f.grid, best.1) },
        method: Method::Exhaustive,
        alpha: 0.0,
        ladder: Vec::new(),
        component: "sup".into(),
    }
}

/// ‖f‖_α = ‖f‖ + [f]_α.
pub fn holder_norm(f: &Field, alpha: f64, cfg: &NormConfig) -> Result<NormReport> {
    let s = sup_norm(f);
    let h = holder_seminorm(f, alpha, cfg)?;
    Ok(NormReport::composite(s.value + h.value, alpha, vec![s, h], "f"))
}

fn require_periodic(f: &Field) -> Result<()> {
    if !f.grid.is_periodic2() {
        return domain("operation needs a periodic grid (torus or two-sided)");
    }
    Ok(())
}

/// (T^{1/4})^β |f_T(point)|, the quantity maximized by [`neg_norm_conv`].
pub fn scale_value(f: &Field, beta: f64, t: f64, point: (usize, usize)) -> Result<f64> {
    let ft = kernel::convolve(f, t)?;
    Ok(t.powf(0.25 * beta) * ft.at(point.0, point.1).abs())
}

/// max over the ladder of (T^{1/4})^β ‖f_T‖.
pub fn neg_norm_conv(f: &Field, beta: f64, cfg: &NormConfig) -> Result<NormReport> {
    require_periodic(f)?;
    if !(beta > 0.0) {
        return param("negative norm exponent β must be positive");
    }
    if cfg.ladder.is_empty() {
        return param("empty ladder");
    }
    let sp = fft::forward_2d(f)?;
    let per_scale = par::map_range(cfg.ladder.len(), |k| {
        let t = cfg.ladder[k];
        let s = sup_norm(&kernel::convolve_spectrum(&sp, t));
        (t.powf(0.25 * beta) * s.value, s.witness)
    });
    let mut best = 0;
    for k in 1..per_scale.len() {
        if per_scale[k].0 > per_scale[best].0 {
            best = k;
        }
    }
    let point = match per_scale[best].1 {
        Witness::Point { point } => point,
        _ => (0, 0),
    };
    Ok(NormReport {
        value: per_scale[best].0,
        witness: Witness::Scale { t: cfg.ladder[best], point },
        method: Method::Ladder,
        alpha: beta,
        ladder: cfg.ladder.clone(),
        component: "f".into(),
    })
}

/// The fields u, ∂₁²u, ∂₂u with 𝒜u = f, 𝒜 = ∂₁⁴ − ∂₂² + 1.
pub fn triplet_solution(f: &Field) -> Result<[Field; 3]> {
    require_periodic(f)?;
    let sp = fft::forward_2d(f)?;
    let inv = |w: fft::Wave| 1.0 / (w.k1.powi(4) + w.k2 * w.k2 + 1.0);
    let u = sp.apply_real(inv).inverse();
    let d11 = sp.apply(|w| fft::ik_pow(w.k1, w.nyq1, 2) * inv(w)).inverse();
    let d2 = sp.apply(|w| fft::ik_pow(w.k2, w.nyq2, 1) * inv(w)).inverse();
    Ok([u, d11, d2])
}

/// [∂₁²u]_α + [∂₂u]_α + [u]_α + ‖u‖ for 𝒜u = f.
pub fn neg_norm_triplet(f: &Field, alpha: f64, cfg: &NormConfig) -> Result<NormReport> {
    let [u, d11, d2] = triplet_solution(f)?;
    let mut parts = vec![
        NormReport { component: "d1^2 u".into(), ..holder_seminorm(&d11, alpha, cfg)? },
        NormReport { component: "d2 u".into(), ..holder_seminorm(&d2, alpha, cfg)? },
        NormReport { component: "u".into(), ..holder_seminorm(&u, alpha, cfg)? },
    ];
    parts.push(NormReport { component: "sup u".into(), ..sup_norm(&u) });
    let value = parts.iter().map(|p| p.value).sum();
    Ok(NormReport::composite(value, alpha, parts, "f"))
}

/// One term σ(x)·w(·, a(x)) of a model.
#[derive(Clone, Copy)]
pub struct ModelTerm<'a> {
    pub family: &'a ParamFamily,
    pub a: &'a Field,
    pub sigma: &'a Field,
}

#[derive(Clone, Debug)]
pub struct ModellingReport {
    pub m: f64,
    pub nu: Field,
    pub witness: Witness,
    pub method: Method,
    pub alpha: f64,
    pub references: Vec<String>,
    pub sigma: Vec<Field>,
    pub a: Vec<Field>,
}

impl ModellingReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "M": self.m,
            "witness": self.witness,
            "method": self.method,
            "alpha": self.alpha,
            "references": self.references,
        })
    }
}

/// Offsets (o1, o2) in grid units used for every base point.
fn model_offsets(grid: &GridSpec, cfg: &NormConfig) -> Option<Vec<(i64, i64)>> {
    let n = grid.len();
    if n <= 1024 {
        return None;
    }
    let k = (cfg.pair_budget / n).clamp(24, 128);
    let mut r = rng::stream(cfg.seed, u64::MAX);
    let mut out = vec![(1, 0), (-1, 0), (0, 1), (0, -1)];
    let top = (grid.n1 as f64 / 2.0).log2();
    let mut guard = 0;
    while out.len() < k && guard < 100 * k {
        guard += 1;
        let span1 = 2f64.powf(rng::uniform(&mut r) * top);
        let span2 = ((span1 * grid.dx1()).powi(2) / grid.dx2()).max(1.0);
        let o1 = ((2.0 * rng::uniform(&mut r) - 1.0) * span1).round() as i64;
        let o2 = ((2.0 * rng::uniform(&mut r) - 1.0) * span2).round() as i64;
        if (o1, o2) != (0, 0) && !out.contains(&(o1, o2)) {
            out.push((o1, o2));
        }
    }
    Some(out)
}

struct ModelSetup<'a> {
    grid: GridSpec,
    u: &'a Field,
    terms: &'a [ModelTerm<'a>],
    stencils: Vec<Vec<Stencil>>,
    offsets: Option<Vec<(i64, i64)>>,
    alpha2: f64,
}

impl<'a> ModelSetup<'a> {
    fn new(u: &'a Field, terms: &'a [ModelTerm<'a>], cfg: &NormConfig) -> Result<Self> {
        let grid = u.grid;
        let mut stencils = Vec::with_capacity(terms.len());
        for t in terms {
            if !t.family.grid().same_shape(&grid) || !t.a.grid.same_shape(&grid) || !t.sigma.grid.same_shape(&grid) {
                return domain(format!("model term {} lives on a different grid", t.family.label));
            }
            let st = t.a.values.iter().map(|&a| t.family.params.stencil(a)).collect::<Result<Vec<_>>>()?;
            stencils.push(st);
        }
        Ok(ModelSetup { grid, u, terms, stencils, offsets: model_offsets(&grid, cfg), alpha2: 2.0 * cfg.alpha })
    }

    /// (c_y, e_y, d_y^{2α}, y) for every partner y of base point x.
    fn residuals(&self, x: usize) -> Vec<(f64, f64, f64, usize)> {
        let g = &self.grid;
        let (i, j) = node(g, x);
        let partners: Vec<usize> = match &self.offsets {
            None => (0..g.len()).filter(|&y| y != x).collect(),
            Some(offs) => offs
                .iter()
                .filter_map(|&(o1, o2)| shifted(g, i, j, o1, o2, false).map(|(a, b)| flat(g, a, b)))
                .filter(|&y| y != x)
                .collect(),
        };
        let wx: Vec<f64> = (0..self.terms.len())
            .map(|t| self.terms[t].family.eval_flat(0, &self.stencils[t][x], x))
            .collect();
        partners
            .into_iter()
            .map(|y| {
                let mut c = self.u.values[y] - self.u.values[x];
                for (t, term) in self.terms.iter().enumerate() {
                    let wy = term.family.eval_flat(0, &self.stencils[t][x], y);
                    c -= term.sigma.values[x] * (wy - wx[t]);
                }
                let (k, l) = node(g, y);
                let e = g.offset1(i, k);
                let d = g.node_distance((i, j), (k, l));
                (c, e, d.powf(self.alpha2), y)
            })
            .collect()
    }
}

fn phi(res: &[(f64, f64, f64, usize)], nu: f64) -> (f64, usize) {
    let mut best = (0.0, usize::MAX);
    for &(c, e, w, y) in res {
        let v = (c - nu * e).abs() / w;
        if v > best.0 || (v == best.0 && y < best.1) {
            best = (v, y);
        }
    }
    best
}

/// Minimizer of the convex piecewise-linear ν ↦ max_y |c_y − νe_y|/w_y.
fn fit_nu(res: &[(f64, f64, f64, usize)]) -> f64 {
    let ratios = res.iter().filter(|r| r.1 != 0.0).map(|r| r.0 / r.1);
    let (mut lo, mut hi) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return 0.0;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (phi(res, a).0, phi(res, b).0);
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = phi(res, a).0;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = phi(res, b).0;
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi, a, b].into_iter().min_by(|p, q| phi(res, *p).0.total_cmp(&phi(res, *q).0)).unwrap()
}

fn modelling_report(
    setup: &ModelSetup,
    per_point: Vec<(f64, usize, f64)>,
    nu: Vec<f64>,
    cfg: &NormConfig,
) -> ModellingReport {
    let g = setup.grid;
    let mut best = Hit::NONE;
    for (x, &(v, y, _)) in per_point.iter().enumerate() {
        let h = Hit { value: v, x, y };
        if y != usize::MAX && h.beats(&best) {
            best = h;
        }
    }
    let witness = if best.x == usize::MAX {
        Witness::None
    } else {
        Witness::Pair { x: node(&g, best.x), y: node(&g, best.y) }
    };
    ModellingReport {
        m: best.value.max(0.0),
        nu: Field { grid: g, values: nu },
        witness,
        method: if setup.offsets.is_none() { Method::Exhaustive } else { Method::Sampled },
        alpha: cfg.alpha,
        references: setup.terms.iter().map(|t| t.family.label.clone()).collect(),
        sigma: setup.terms.iter().map(|t| t.sigma.clone()).collect(),
        a: setup.terms.iter().map(|t| t.a.clone()).collect(),
    }
}

/// Modelling constant M of U after the given terms, with ν fitted per base point
/// as the minimax minimizer of the 2α-weighted residuals.
pub fn modelling_constant(u: &Field, terms: &[ModelTerm], cfg: &NormConfig) -> Result<ModellingReport> {
    let setup = ModelSetup::new(u, terms, cfg)?;
    let per_point = par::map_range(u.grid.len(), |x| {
        let res = setup.residuals(x);
        let nu = fit_nu(&res);
        let (v, y) = phi(&res, nu);
        (v, y, nu)
    });
    let nu = per_point.iter().map(|p| p.2).collect();
    Ok(modelling_report(&setup, per_point, nu, cfg))
}

/// Modelling constant with a prescribed ν.
pub fn modelling_constant_with_nu(u: &Field, terms: &[ModelTerm], nu: &Field, cfg: &NormConfig) -> Result<ModellingReport> {
    if !nu.grid.same_shape(&u.grid) {
        return domain("ν lives on a different grid");
    }
    let setup = ModelSetup::new(u, terms, cfg)?;
    let per_point = par::map_range(u.grid.len(), |x| {
        let (v, y) = phi(&setup.residuals(x), nu.values[x]);
        (v, y, nu.values[x])
    });
    Ok(modelling_report(&setup, per_point, nu.values.clone(), cfg))
}

/// max over the ladder of (T^{1/4})^{2−2α}‖F·h_T − P_T‖ where P stands for F⋄h.
pub fn commutator_norm(f: &Field, h: &Field, product: &Field, cfg: &NormConfig) -> Result<NormReport> {
    commutator_core(&[(f.clone(), h.clone(), product.clone())], &[(vec![1.0], "0".to_string())], cfg)
}

/// Points (a₀, a₀′) at which [`commutator_norm_family`] evaluates parameter difference quotients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStencil {
    pub centers: Vec<(f64, f64)>,
    pub step: f64,
    /// Highest difference-quotient order (0, 1 or 2).
    pub order: u32,
}

type Triple = (Field, Field, Field);

fn commutator_core(triples: &[Triple], quotients: &[(Vec<f64>, String)], cfg: &NormConfig) -> Result<NormReport> {
    if cfg.ladder.is_empty() {
        return param("empty ladder");
    }
    let grid = triples[0].0.grid;
    for (f, h, p) in triples {
        require_periodic(f)?;
        if !(f.grid.same_shape(&grid) && h.grid.same_shape(&grid) && p.grid.same_shape(&grid)) {
            return domain("commutator inputs must share one grid");
        }
    }
    let hs: Vec<fft::Spectrum> = triples.iter().map(|t| fft::forward_2d(&t.1)).collect::<Result<_>>()?;
    let mut ps = Vec::new();
    for (w, _) in quotients {
        let mut comb = Field::zeros(grid);
        for (k, &c) in w.iter().enumerate() {
            if c != 0.0 {
                comb.axpy(c, &triples[k].2)?;
            }
        }
        ps.push(fft::forward_2d(&comb)?);
    }
    let beta = 2.0 - 2.0 * cfg.alpha;
    let per_scale = par::map_range(cfg.ladder.len(), |s| {
        let t = cfg.ladder[s];
        let hts: Vec<Field> = hs.iter().map(|sp| kernel::convolve_spectrum(sp, t)).collect();
        let mut best = (0.0, (0, 0), 0usize);
        for (q, (w, _)) in quotients.iter().enumerate() {
            let mut c = kernel::convolve_spectrum(&ps[q], t).scale(-1.0);
            for (k, &wk) in w.iter().enumerate() {
                if wk != 0.0 {
                    for (p, v) in c.values.iter_mut().enumerate() {
                        *v += wk * triples[k].0.values[p] * hts[k].values[p];
                    }
                }
            }
            let s = sup_norm(&c);
            let v = t.powf(0.25 * beta) * s.value;
            if v > best.0 {
                let point = match s.witness {
                    Witness::Point { point } => point,
                    _ => (0, 0),
                };
                best = (v, point, q);
            }
        }
        best
    });
    let mut k = 0;
    for s in 1..per_scale.len() {
        if per_scale[s].0 > per_scale[k].0 {
            k = s;
        }
    }
    Ok(NormReport {
        value: per_scale[k].0,
        witness: Witness::Scale { t: cfg.ladder[k], point: per_scale[k].1 },
        method: Method::Ladder,
        alpha: cfg.alpha,
        ladder: cfg.ladder.clone(),
        component: quotients[per_scale[k].2].1.clone(),
    })
}

/// Commutator norm of a parameter family, including central difference quotients
/// in a₀ and a₀′ up to `stencil.order`. `eval(a₀, a₀′)` returns (F, h, F⋄h).
pub fn commutator_norm_family(
    eval: &(dyn Fn(f64, f64) -> Result<Triple> + Sync),
    stencil: &ParamStencil,
    cfg: &NormConfig,
) -> Result<NormReport> {
    if stencil.order > 2 {
        return param("difference quotients are provided up to order 2");
    }
    let s = stencil.step;
    // 3×3 stencil, index 3(i+1) + (j+1) for offsets (i s, j s)
    let idx = |i: i64, j: i64| (3 * (i + 1) + (j + 1)) as usize;
    let mut quot: Vec<(Vec<f64>, String)> = Vec::new();
    let mut add = |terms: &[(i64, i64, f64)], name: &str| {
        let mut w = vec![0.0; 9];
        for &(i, j, c) in terms {
            w[idx(i, j)] += c;
        }
        quot.push((w, name.to_string()));
    };
    add(&[(0, 0, 1.0)], "0");
    if stencil.order >= 1 {
        add(&[(1, 0, 0.5 / s), (-1, 0, -0.5 / s)], "d_a0");
        add(&[(0, 1, 0.5 / s), (0, -1, -0.5 / s)], "d_a0p");
    }
    if stencil.order >= 2 {
        let s2 = s * s;
        add(&[(1, 0, 1.0 / s2), (0, 0, -2.0 / s2), (-1, 0, 1.0 / s2)], "d_a0^2");
        add(&[(0, 1, 1.0 / s2), (0, 0, -2.0 / s2), (0, -1, 1.0 / s2)], "d_a0p^2");
        let m = 0.25 / s2;
        add(&[(1, 1, m), (1, -1, -m), (-1, 1, -m), (-1, -1, m)], "d_a0 d_a0p");
    }
    let mut best: Option<NormReport> = None;
    for &(a0, a0p) in &stencil.centers {
        let triples = if stencil.order == 0 {
            vec![eval(a0, a0p)?]
        } else {
            let mut v = Vec::with_capacity(9);
            for i in -1..=1i64 {
                for j in -1..=1i64 {
                    v.push(eval(a0 + i as f64 * s, a0p + j as f64 * s)?);
                }
            }
            v
        };
        let quot = if stencil.order == 0 { vec![(vec![1.0], "0".to_string())] } else { quot.clone() };
        let mut r = commutator_core(&triples, &quot, cfg)?;
        r.component = format!("{} at ({a0}, {a0p})", r.component);
        if best.as_ref().map_or(true, |b| r.value > b.value) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| crate::Error::Parameter("no stencil centers".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub l: f64,
    pub t: f64,
    pub sup: f64,
    /// sup / (L^{−δ}(T^{1/4})^{2α−2+2δ})
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
    pub alpha: f64,
    pub delta: f64,
    /// log-log slope of the sup against L at the smallest ladder scale.
    pub l_exponent: f64,
    /// log-log slope of the sup against T^{1/4} at the smallest L.
    pub t_exponent: f64,
    pub max_ratio: f64,
}

/// Decay of ‖f_T‖ over {x₂ ≤ −L} for f vanishing on x₂ < 0. The sup is taken over
/// the window x₂ ∈ [−t_max/2, −L] so periodic images in x₂ stay far away.
pub fn tail_decay_report(f: &Field, alpha: f64, delta: f64, l_ladder: &[f64], t_ladder: &[f64]) -> Result<TailReport> {
    if f.grid.kind != DomainKind::TwoSided {
        return domain("tail decay needs a two-sided field");
    }
    let g = f.grid;
    if l_ladder.iter().any(|&l| !(l > 0.0 && l <= g.t_max / 2.0)) || t_ladder.is_empty() {
        return param("tail ladder must lie in (0, t_max/2]");
    }
    let fts = kernel::convolve_ladder(f, t_ladder)?;
    let mut rows = Vec::new();
    for (ft, &t) in fts.iter().zip(t_ladder) {
        for &l in l_ladder {
            let mut sup = 0.0f64;
            for j in 0..g.rows() {
                let x2 = g.x2(j);
                if x2 >= -g.t_max / 2.0 && x2 <= -l {
                    sup = ft.row(j).iter().fold(sup, |m, v| m.max(v.abs()));
                }
            }
            let bound = l.powf(-delta) * t.powf(0.25 * (2.0 * alpha - 2.0 + 2.0 * delta));
            rows.push(TailRow { l, t, sup, ratio: sup / bound });
        }
    }
    let slope = |pts: Vec<(f64, f64)>| {
        let pts: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.1 > 0.0).collect();
        if pts.len() < 2 {
            return 0.0;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        crate::fit::loglog_slope(&x, &y)
    };
    let t_min = t_ladder.iter().cloned().fold(f64::INFINITY, f64::min);
    let l_min = l_ladder.iter().cloned().fold(f64::INFINITY, f64::min);
    let l_exponent = slope(rows.iter().filter(|r| r.t == t_min).map(|r| (r.l, r.sup)).collect());
    let t_exponent = slope(rows.iter().filter(|r| r.l == l_min).map(|r| (r.t.powf(0.25), r.sup)).collect());
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(TailReport { rows, alpha, delta, l_exponent, t_exponent, max_ratio })
}
