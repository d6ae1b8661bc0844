//! The named experiment suites shared by the command-line driver and the acceptance tests.
//!
//! Each suite takes a flat parameter struct (every field has a default, so an empty
//! config runs the acceptance setup) and returns its tables together with a list of
//! pass/fail checks. Tables never contain timings, so equal inputs give equal bytes.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::grid::{even_reflection, periodic_resample, restrict_to_half_plane, Field, GridSpec};
use crate::io::Table;
use crate::kernel::{self, moment_integral, psi_hat, MollifierBase, MollifierSpec};
use crate::noise::{sample_forcing, sample_spectrum, CovarianceSpec, ForcingSample};
use crate::norms::{
    commutator_norm_family, holder_seminorm, neg_norm_conv, neg_norm_triplet, NormConfig, ParamStencil,
};
use crate::products::{leibniz_product, mollified_pair, renorm_constant, renormalized_product, unrenormalized_product};
use crate::refsol::{
    heat_layer_general, heat_layer_general_with, heat_layer_rows, lacunary_data, periodic_from_spectrum,
    solve_periodic_v, BoundaryData,
};
use crate::solver::{
    assemble_linear, carrier_grids, holder_norm_1d, quasilinear_fixed_point, solve_correction_w,
    stability_experiment, w_forcing_g, CoefficientMap, CoefficientProducts, FrozenA0, LinearSolveConfig,
    Perturbation, QuasilinearConfig,
};
use crate::{par, Result as R};

pub const NAMES: [&str; 8] = [
    "kernel_scaling",
    "norm_equivalence",
    "heat_decay",
    "renorm_convergence",
    "commutator_uniformity",
    "linear_assemble",
    "quasilinear_contraction",
    "stability",
];

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    /// The parameters actually used, defaults filled in.
    pub params: Value,
    pub seeds: Vec<u64>,
    pub tables: Vec<(String, Table)>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per criterion.
    pub timings: Vec<(u8, f64)>,
}

impl Outcome {
    fn new(name: &str, params: &impl Serialize, seeds: &[u64]) -> Self {
        Outcome {
            name: name.into(),
            params: serde_json::to_value(params).unwrap_or(Value::Null),
            seeds: seeds.to_vec(),
            tables: Vec::new(),
            checks: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn check(&mut self, criterion: u8, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { criterion, name: name.into(), passed, detail });
    }

    fn table(&mut self, name: &str, t: Table) {
        self.tables.push((name.into(), t));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "experiment": self.name,
            "passed": self.passed(),
            "checks": self.checks,
            "timings": self.timings.iter().map(|(c, t)| json!({"criterion": c, "seconds": t})).collect::<Vec<_>>(),
        })
    }
}

/// Runs experiment `name` with parameters from a flat JSON object. `seeds` overrides the
/// seed list of the parameters.
pub fn run(name: &str, params: Value, seeds: Option<Vec<u64>>) -> Result<Outcome> {
    fn parse<P: for<'de> Deserialize<'de>>(v: Value) -> Result<P> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }
    fn seeded<P: Seeded>(mut p: P, seeds: Option<Vec<u64>>) -> Result<P> {
        if let Some(s) = seeds {
            *p.seeds_mut() = s;
        }
        if p.seeds_mut().is_empty() {
            return Err(Error::Config("the seed list is empty".into()));
        }
        Ok(p)
    }
    let params = if params.is_null() { json!({}) } else { params };
    match name {
        "kernel_scaling" => kernel_scaling(&seeded(parse(params)?, seeds)?),
        "norm_equivalence" => norm_equivalence(&seeded(parse(params)?, seeds)?),
        "heat_decay" => heat_decay(&seeded(parse(params)?, seeds)?),
        "renorm_convergence" => renorm_convergence(&seeded(parse(params)?, seeds)?),
        "commutator_uniformity" => commutator_uniformity(&seeded(parse(params)?, seeds)?),
        "linear_assemble" => linear_assemble(&seeded(parse(params)?, seeds)?),
        "quasilinear_contraction" => quasilinear_contraction(&seeded(parse(params)?, seeds)?),
        "stability" => stability(&seeded(parse(params)?, seeds)?),
        _ => Err(Error::Config(format!("unknown experiment '{name}'; expected one of {}", NAMES.join(", ")))),
    }
}

trait Seeded {
    fn seeds_mut(&mut self) -> &mut Vec<u64>;
}

macro_rules! seeded {
    ($($t:ty),*) => {
        $(impl Seeded for $t {
            fn seeds_mut(&mut self) -> &mut Vec<u64> {
                &mut self.seeds
            }
        })*
    };
}

seeded!(
    KernelScaling,
    NormEquivalence,
    HeatDecay,
    RenormConvergence,
    CommutatorUniformity,
    LinearAssemble,
    QuasilinearContraction,
    Stability
);

fn fmt_list(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", s.join(", "))
}

fn sup(row: &[f64]) -> f64 {
    row.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn spread(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
    mx / mn
}

/// amplitude·|sin π(x − shift)|^α on n points: a periodic profile of exact class C^α.
pub fn cusp_profile(n: usize, alpha: f64, amplitude: f64, shift: f64) -> Vec<f64> {
    (0..n).map(|i| amplitude * (PI * (i as f64 / n as f64 - shift)).sin().abs().powf(alpha)).collect()
}

/// Fitted Hölder class of periodic 1-d data: slope of log osc(h) against log h, where
/// osc(h) = max_x |g(x+h) − g(x)| over dyadic lags h = 1/n … 2^{levels−1}/n.
pub fn holder_class(g: &[f64], levels: u32) -> (Vec<(f64, f64)>, f64) {
    let n = g.len();
    let rows: Vec<(f64, f64)> = (0..levels)
        .map(|l| {
            let s = 1usize << l;
            let osc = (0..n).map(|i| (g[(i + s) % n] - g[i]).abs()).fold(0.0f64, f64::max);
            (s as f64 / n as f64, osc)
        })
        .collect();
    let (h, o): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    (rows, loglog_slope(&h, &o))
}

// ---------------------------------------------------------------- kernel_scaling

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelScaling {
    pub alphas: Vec<f64>,
    pub orders: Vec<(u32, u32)>,
    /// T runs over 2^{t_log2_min}, 2^{t_log2_min+t_log2_step}, … ≤ 2^{t_log2_max}.
    pub t_log2_min: i32,
    pub t_log2_max: i32,
    pub t_log2_step: usize,
    pub slope_tol: f64,
    /// Grid of the random field used for the semigroup identity.
    pub n: usize,
    pub semigroup_pairs: Vec<(f64, f64)>,
    pub semigroup_tol: f64,
    pub seeds: Vec<u64>,
}

impl Default for KernelScaling {
    fn default() -> Self {
        KernelScaling {
            alphas: vec![0.0, 0.75],
            orders: vec![(0, 0), (1, 0), (2, 0), (0, 1)],
            t_log2_min: -10,
            t_log2_max: -2,
            t_log2_step: 2,
            slope_tol: 0.05,
            n: 64,
            semigroup_pairs: vec![(1.0 / 256.0, 1.0 / 1024.0), (1.0 / 64.0, 1.0 / 64.0), (1.0 / 16.0, 1e-3)],
            semigroup_tol: 1e-10,
            seeds: vec![1],
        }
    }
}

pub fn kernel_scaling(p: &KernelScaling) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::new("kernel_scaling", p, &p.seeds);
    let ts: Vec<f64> = (p.t_log2_min..=p.t_log2_max).step_by(p.t_log2_step.max(1)).map(|j| 2f64.powi(j)).collect();
    if ts.len() < 2 {
        return Err(Error::Config("kernel_scaling needs at least two T values".into()));
    }
    let x: Vec<f64> = ts.iter().map(|t| t.powf(0.25)).collect();

    let mut moments = Table::new(&["alpha", "i", "j", "T", "moment", "truncation", "fitted_slope", "expected_slope"]);
    let mut worst: f64 = 0.0;
    let mut slopes = Vec::new();
    for &alpha in &p.alphas {
        for &(i, j) in &p.orders {
            let reps = par::map_range(ts.len(), |k| moment_integral(alpha, i, j, ts[k]));
            let reps: Vec<_> = reps.into_iter().collect::<R<_>>()?;
            let m: Vec<f64> = reps.iter().map(|r| r.value).collect();
            let slope = loglog_slope(&x, &m);
            let expected = alpha - i as f64 - 2.0 * j as f64;
            worst = worst.max((slope - expected).abs());
            slopes.push(format!("({alpha},{i},{j}) {slope:.4}/{expected}"));
            for (k, r) in reps.iter().enumerate() {
                moments.push(vec![
                    alpha.into(),
                    (i as usize).into(),
                    (j as usize).into(),
                    ts[k].into(),
                    r.value.into(),
                    r.truncation.into(),
                    slope.into(),
                    expected.into(),
                ]);
            }
        }
    }
    out.table("moments", moments);
    out.check(
        1,
        "moment slopes",
        worst <= p.slope_tol,
        format!("max |slope − (α − i − 2j)| = {worst:.4} (tol {}); {}", p.slope_tol, slopes.join("; ")),
    );

    let mut semi = Table::new(&["seed", "T", "S", "relative_error"]);
    let mut worst_rel: f64 = 0.0;
    let g = GridSpec::torus(p.n, p.n)?;
    let spec = CovarianceSpec::white_in_time(0.75, 1.0, p.n / 2 - 1)?;
    for &seed in &p.seeds {
        let f = sample_forcing(&spec, g, seed)?.field;
        for &(t, s) in &p.semigroup_pairs {
            let two = kernel::convolve(&kernel::convolve(&f, t)?, s)?;
            let one = kernel::convolve(&f, t + s)?;
            let rel = two.sup_diff(&one)? / one.max_abs();
            worst_rel = worst_rel.max(rel);
            semi.push(vec![seed.into(), t.into(), s.into(), rel.into()]);
        }
    }
    out.table("semigroup", semi);
    out.check(
        1,
        "semigroup identity",
        worst_rel <= p.semigroup_tol,
        format!("max relative error {worst_rel:.2e} (tol {:.0e})", p.semigroup_tol),
    );
    let unit = ts.iter().chain(&[1.0, 1e-12, 1e3]).all(|&t| psi_hat(0.0, 0.0, t) == 1.0);
    out.check(1, "unit mass", unit, "ψ̂_T(0) = 1 exactly for every probed T".into());
    out.timings.push((1, start.elapsed().as_secs_f64()));
    Ok(out)
}

// ---------------------------------------------------------------- norm_equivalence

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormEquivalence {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub amplitude: f64,
    pub sizes: Vec<usize>,
    pub max_band: f64,
    pub pair_budget: usize,
    pub seeds: Vec<u64>,
}

impl Default for NormEquivalence {
    fn default() -> Self {
        NormEquivalence {
            alpha: 0.75,
            alpha_prime: 0.75,
            amplitude: 1.0,
            sizes: vec![128, 256],
            max_band: 50.0,
            pair_budget: 200_000,
            seeds: (1..=20).collect(),
        }
    }
}

pub fn norm_equivalence(p: &NormEquivalence) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::new("norm_equivalence", p, &p.seeds);
    let mut t = Table::new(&["n", "seed", "triplet", "conv", "ratio"]);
    let mut bands = Vec::new();
    for &n in &p.sizes {
        let g = GridSpec::torus(n, n)?;
        let spec = CovarianceSpec::white_in_time(p.alpha_prime, p.amplitude, n / 2 - 1)?;
        let cfg = NormConfig::new(p.alpha, kernel::grid_ladder(n), p.pair_budget, 0)?;
        let mut ratios = Vec::new();
        for &seed in &p.seeds {
            let f = sample_forcing(&spec, g, seed)?.field;
            let a = neg_norm_triplet(&f, p.alpha, &cfg)?.value;
            let b = neg_norm_conv(&f, 2.0 - p.alpha, &cfg)?.value;
            ratios.push(a / b);
            t.push(vec![n.into(), seed.into(), a.into(), b.into(), (a / b).into()]);
        }
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        out.check(
            2,
            &format!("band width at {n}²"),
            hi / lo <= p.max_band,
            format!("ratios in [{lo:.3}, {hi:.3}], width {:.2} (max {})", hi / lo, p.max_band),
        );
        bands.push((n, lo, hi));
    }
    out.table("ratios", t);
    if bands.len() > 1 {
        let lo = bands.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
        let hi = bands.iter().map(|b| b.2).fold(f64::INFINITY, f64::min);
        let desc: Vec<String> = bands.iter().map(|(n, a, b)| format!("{n}²: [{a:.3}, {b:.3}]")).collect();
        out.check(2, "bands overlap across grids", lo <= hi, desc.join(", "));
    }
    out.timings.push((2, start.elapsed().as_secs_f64()));
    Ok(out)
}

// ---------------------------------------------------------------- heat_decay

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatDecay {
    pub alpha: f64,
    pub n1: usize,
    pub a0: f64,
    pub massive: bool,
    pub x2_min: f64,
    pub x2_max: f64,
    pub points: usize,
    pub orders: Vec<u32>,
    pub exponent_tol: f64,
    /// Dyadic lags used to measure the class of the data.
    pub class_levels: u32,
    pub class_tol: f64,
    pub seeds: Vec<u64>,
}

impl Default for HeatDecay {
    fn default() -> Self {
        HeatDecay {
            alpha: 0.75,
            n1: 2048,
            a0: 1.0 / 64.0,
            massive: true,
            x2_min: 1e-3,
            x2_max: 1e-1,
            points: 21,
            orders: vec![1, 2],
            exponent_tol: 0.1,
            class_levels: 6,
            class_tol: 0.05,
            seeds: vec![1],
        }
    }
}

pub fn heat_decay(p: &HeatDecay) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::new("heat_decay", p, &p.seeds);
    if p.points < 2 || !(p.x2_min > 0.0 && p.x2_max > p.x2_min) {
        return Err(Error::Config("heat_decay needs 0 < x2_min < x2_max and at least two points".into()));
    }
    let data = cusp_profile(p.n1, p.alpha, 1.0, 0.0);
    let (osc, class) = holder_class(&data, p.class_levels);
    let mut ct = Table::new(&["h", "oscillation"]);
    for (h, o) in &osc {
        ct.push(vec![(*h).into(), (*o).into()]);
    }
    out.table("data_class", ct);
    out.check(
        3,
        "data class",
        (class - p.alpha).abs() <= p.class_tol,
        format!("measured class {class:.4} (target {} ± {})", p.alpha, p.class_tol),
    );

    let ratio = p.x2_max / p.x2_min;
    let xs: Vec<f64> = (0..p.points).map(|i| p.x2_min * ratio.powf(i as f64 / (p.points - 1) as f64)).collect();
    let g = BoundaryData::fixed(data);
    let mut t = Table::new(&["k", "x2", "sup_d1k_V", "fitted_slope", "expected_slope"]);
    for &k in &p.orders {
        let rows = heat_layer_rows(&g, p.a0, &xs, p.massive, 0, k)?;
        let ys: Vec<f64> = rows.iter().map(|r| sup(r)).collect();
        let slope = loglog_slope(&xs, &ys);
        let expected = (p.alpha - k as f64) / 2.0;
        for (x, y) in xs.iter().zip(&ys) {
            t.push(vec![(k as usize).into(), (*x).into(), (*y).into(), slope.into(), expected.into()]);
        }
        out.check(
            3,
            &format!("decay exponent k = {k}"),
            (slope - expected).abs() <= p.exponent_tol,
            format!("fitted {slope:.4}, expected {expected:.4} ± {}", p.exponent_tol),
        );
    }
    out.table("decay", t);
    out.timings.push((3, start.elapsed().as_secs_f64()));
    Ok(out)
}

// ---------------------------------------------------------------- renorm_convergence

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormConvergence {
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub amplitude: f64,
    pub cutoff: usize,
    pub cutoff2: usize,
    pub mollifier_width: f64,
    pub eps_log2_min: i32,
    pub eps_log2_max: i32,
    pub a0: f64,
    pub a0_prime: f64,
    /// Smallest scale of the norm ladder 1, 1/2, 1/4, ….
    pub t_floor: f64,
    pub pair_budget: usize,
    pub max_ratio: f64,
    pub mc_n: usize,
    pub mc_cutoff: usize,
    pub mc_eps: f64,
    pub mc_width: f64,
    pub mc_samples: usize,
    pub mc_point: (usize, usize),
    pub mc_a0: f64,
    pub mc_a0_prime: f64,
    pub mc_sigmas: f64,
    pub seeds: Vec<u64>,
}

impl Default for RenormConvergence {
    fn default() -> Self {
        RenormConvergence {
            n1: 64,
            n2: 2048,
            alpha: 0.75,
            alpha_prime: 0.7,
            amplitude: 1.0,
            cutoff: 31,
            cutoff2: 1000,
            mollifier_width: 0.1,
            eps_log2_min: 4,
            eps_log2_max: 9,
            a0: 0.5,
            a0_prime: 0.5,
            t_floor: 1e-6,
            pair_budget: 1000,
            max_ratio: 0.95,
            mc_n: 16,
            mc_cutoff: 5,
            mc_eps: 1.0 / 16.0,
            mc_width: 0.2,
            mc_samples: 10_000,
            mc_point: (3, 5),
            mc_a0: 0.4,
            mc_a0_prime: 0.7,
            mc_sigmas: 3.0,
            seeds: vec![1],
        }
    }
}

fn dyadic_down_to(floor: f64) -> Vec<f64> {
    (0..).map(|j| 2f64.powi(-j)).take_while(|&t| t >= floor).collect()
}

impl RenormConvergence {
    fn forcing(&self, seed: u64) -> Result<ForcingSample> {
        let g = GridSpec::torus(self.n1, self.n2)?;
        let spec = CovarianceSpec::white_in_time(self.alpha_prime, self.amplitude, self.cutoff)?
            .with_cutoffs(self.cutoff, self.cutoff2);
        sample_forcing(&spec, g, seed)
    }

    fn mollifiers(&self) -> Result<Vec<MollifierSpec>> {
        (self.eps_log2_min..=self.eps_log2_max)
            .map(|k| MollifierSpec::new(2f64.powi(-k), MollifierBase::Gaussian { width: self.mollifier_width }))
            .collect()
    }

    fn norm_config(&self) -> Result<NormConfig> {
        NormConfig::new(self.alpha, dyadic_down_to(self.t_floor), self.pair_budget, 0)
    }
}

pub fn renorm_convergence(p: &RenormConvergence) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::new("renorm_convergence", p, &p.seeds);

    let spec = CovarianceSpec::white_in_time(p.alpha_prime, 1.0, p.mc_cutoff)?;
    let mg = GridSpec::torus(p.mc_n, p.mc_n)?;
    let m = MollifierSpec::new(p.mc_eps, MollifierBase::Gaussian { width: p.mc_width })?;
    let exact = renorm_constant(&spec, Some(&m), p.mc_a0, p.mc_a0_prime);
    let mut mc = Table::new(&["seed", "samples", "monte_carlo", "standard_error", "fourier_formula"]);
    for &seed in &p.seeds {
        let base = seed << 24;
        let samples = par::map_range(p.mc_samples, |k| -> R<f64> {
            let sp = sample_spectrum(&spec, mg, base + k as u64)?.apply_real(|w| m.multiplier(w.k1, w.k2));
            let v = periodic_from_spectrum(&sp, p.mc_a0, 0, 0, true)?;
            let d2 = periodic_from_spectrum(&sp, p.mc_a0_prime, 0, 2, true)?;
            Ok(v.at(p.mc_point.0, p.mc_point.1) * d2.at(p.mc_point.0, p.mc_point.1))
        });
        let samples: Vec<f64> = samples.into_iter().collect::<R<_>>()?;
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        mc.push(vec![seed.into(), p.mc_samples.into(), mean.into(), se.into(), exact.into()]);
        out.check(
            4,
            "counterterm vs Monte Carlo",
            (mean - exact).abs() <= p.mc_sigmas * se,
            format!("seed {seed}: MC {mean:.5e} ± {se:.2e}, formula {exact:.5e}"),
        );
    }
    out.table("counterterm", mc);

    let cfg = p.norm_config()?;
    let beta = 2.0 - p.alpha_prime;
    let molls = p.mollifiers()?;
    let mut inc = Table::new(&["seed", "product", "eps_coarse", "eps_fine", "increment", "ratio"]);
    for &seed in &p.seeds {
        let f = p.forcing(seed)?;
        for renormalized in [true, false] {
            let prods: Vec<Field> = molls
                .iter()
                .map(|m| {
                    if renormalized {
                        renormalized_product(&f, Some(m), p.a0, p.a0_prime).map(|x| x.1)
                    } else {
                        unrenormalized_product(&f, Some(m), p.a0, p.a0_prime)
                    }
                })
                .collect::<R<_>>()?;
            let incs: Vec<f64> = prods
                .windows(2)
                .map(|w| neg_norm_conv(&w[1].sub(&w[0])?, beta, &cfg).map(|r| r.value))
                .collect::<R<_>>()?;
            let ratios: Vec<f64> = incs.windows(2).map(|w| w[1] / w[0]).collect();
            let label = if renormalized { "renormalized" } else { "unrenormalized" };
            for (k, v) in incs.iter().enumerate() {
                let r = if k == 0 { f64::NAN } else { ratios[k - 1] };
                inc.push(vec![
                    seed.into(),
                    label.into(),
                    molls[k].epsilon.into(),
                    molls[k + 1].epsilon.into(),
                    (*v).into(),
                    r.into(),
                ]);
            }
            if renormalized {
                let worst = ratios.iter().copied().fold(0.0, f64::max);
                out.check(
                    4,
                    "renormalized increments contract",
                    !ratios.is_empty() && worst < p.max_ratio,
                    format!("seed {seed}: ratios {} (max {})", fmt_list(&ratios), p.max_ratio),
                );
            } else {
                let rising = incs.windows(2).all(|w| w[1] >= w[0]);
                out.check(
                    4,
                    "unrenormalized increments do not decay",
                    rising,
                    format!("seed {seed}: ratios {}", fmt_list(&ratios)),
                );
            }
        }
    }
    out.table("increments", inc);
    out.timings.push((4, start.elapsed().as_secs_f64()));
    Ok(out)
}

// ---------------------------------------------------------------- commutator_uniformity

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommutatorUniformity {
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub amplitude: f64,
    pub cutoff: usize,
    pub cutoff2: usize,
    pub mollifier_width: f64,
    pub eps_log2_min: i32,
    pub eps_log2_max: i32,
    pub t_floor: f64,
    pub pair_budget: usize,
    pub centers: Vec<(f64, f64)>,
    pub step: f64,
    pub order: u32,
    pub max_spread: f64,
    /// Periodic grid sizes of the refinement sweep for the classical commutators.
    pub sizes: Vec<usize>,
    pub classical_alpha_prime: f64,
    pub classical_cutoff: usize,
    pub u_int_amplitude: f64,
    pub max_drift: f64,
    pub seeds: Vec<u64>,
}

impl Default for CommutatorUniformity {
    fn default() -> Self {
        let r = RenormConvergence::default();
        CommutatorUniformity {
            n1: r.n1,
            n2: r.n2,
            alpha: r.alpha,
            alpha_prime: r.alpha_prime,
            amplitude: r.amplitude,
            cutoff: r.cutoff,
            cutoff2: r.cutoff2,
            mollifier_width: r.mollifier_width,
            eps_log2_min: r.eps_log2_min,
            eps_log2_max: r.eps_log2_max,
            t_floor: r.t_floor,
            pair_budget: r.pair_budget,
            centers: vec![(0.5, 0.5), (0.4, 0.7)],
            step: 1.0 / 16.0,
            order: 2,
            max_spread: 2.0,
            sizes: vec![64, 128, 256],
            classical_alpha_prime: 0.75,
            classical_cutoff: 15,
            u_int_amplitude: 0.1,
            max_drift: 2.0,
            seeds: vec![1],
        }
    }
}

struct ClassicalConstants {
    n0: f64,
    n0_int: f64,
    f_alpha: f64,
    c1: f64,
    c2: f64,
}

/// The two classical-product commutators at one resolution:
/// C₁ = ‖[F, (·)_T]∂₁²𝖵̃‖/((N₀^int + N₀)[F]_α) for the smooth-in-time, rough-in-space
/// F = |sin π(x₁ − 0.3)|^α cos 2πx₂, and
/// C₂ = ‖[𝖵̃ + v, (·)_T]∂₁²v‖/((N₀^int + N₀)N₀) with (𝖵̃ + v)⋄∂₁²v = v⋄∂₁²v + 𝖵̃⋄∂₁²v,
/// the first renormalized and the second by the Leibniz rule.
fn classical_constants(p: &CommutatorUniformity, n: usize, seed: u64) -> Result<ClassicalConstants> {
    let alpha = p.alpha;
    let tg = GridSpec::torus(n, n)?;
    let spec = CovarianceSpec::white_in_time(p.classical_alpha_prime, p.amplitude, p.classical_cutoff)?;
    let (c, h) = carrier_grids(&tg)?;
    let f0 = sample_forcing(&spec, tg, seed)?;
    let fc = periodic_resample(&f0.field, c)?;
    let fs = ForcingSample { field: fc.clone(), seed, spec };
    let u_int = cusp_profile(n, alpha, p.u_int_amplitude, 0.0);
    let ff = Field::from_fn(c, |x1, x2| (PI * (x1 - 0.3)).sin().abs().powf(alpha) * (2.0 * PI * x2).cos());
    let cfg = NormConfig::for_grid(alpha, &c)?;
    let n0 = neg_norm_conv(&fc, 2.0 - alpha, &cfg)?.value;
    let n0_int = holder_norm_1d(&u_int, alpha);
    let f_alpha = holder_seminorm(&ff, alpha, &cfg)?.value;
    let layer = |a0: f64| -> R<[Field; 3]> {
        let v = solve_periodic_v(&fc, a0, true)?;
        let row = v.row(c.zero_row());
        let d = BoundaryData::fixed(u_int.iter().zip(row).map(|(a, b)| a - b).collect());
        let l = |m| even_reflection(&heat_layer_general_with(&d, a0, h, true, 0, m, true)?);
        Ok([l(0)?, l(1)?, l(2)?])
    };
    let st = ParamStencil { centers: p.centers.clone(), step: p.step, order: p.order };
    let e1 = |a0: f64, _a0p: f64| {
        let l = layer(a0)?;
        let prod = ff.mul(&l[2])?;
        Ok((ff.clone(), l[2].clone(), prod))
    };
    let r1 = commutator_norm_family(&e1, &st, &cfg)?;
    let e2 = |a0: f64, a0p: f64| {
        let l = layer(a0)?;
        let (v, d2) = mollified_pair(&fs, None, a0, a0p)?;
        let vp = solve_periodic_v(&fc, a0p, true)?;
        let (_, prod) = renormalized_product(&fs, None, a0, a0p)?;
        let prod = prod.add(&leibniz_product(&l, &vp)?)?;
        Ok((l[0].add(&v)?, d2, prod))
    };
    let r2 = commutator_norm_family(&e2, &st, &cfg)?;
    Ok(ClassicalConstants {
        n0,
        n0_int,
        f_alpha,
        c1: r1.value / ((n0_int + n0) * f_alpha),
        c2: r2.value / ((n0_int + n0) * n0),
    })
}

pub fn commutator_uniformity(p: &CommutatorUniformity) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::new("commutator_uniformity", p, &p.seeds);
    let r = RenormConvergence {
        n1: p.n1,
        n2: p.n2,
        alpha: p.alpha,
        alpha_prime: p.alpha_prime,
        amplitude: p.amplitude,
        cutoff: p.cutoff,
        cutoff2: p.cutoff2,
        mollifier_width: p.mollifier_width,
        eps_log2_min: p.eps_log2_min,
        eps_log2_max: p.eps_log2_max,
        t_floor: p.t_floor,
        pair_budget: p.pair_budget,
        ..RenormConvergence::default()
    };
    let cfg = r.norm_config()?;
    let molls = r.mollifiers()?;
    let st = ParamStencil { centers: p.centers.clone(), step: p.step, order: p.order };
    let mut rt = Table::new(&["seed", "eps", "commutator_norm", "component"]);
    let mut ct = Table::new(&["seed", "n", "n0", "n0_int", "f_alpha", "c1", "c2"]);
    for &seed in &p.seeds {
        let f = r.forcing(seed)?;
        let mut vals = Vec::new();
        for m in &molls {
            let eval = |a0: f64, a0p: f64| {
                let (v, d2) = mollified_pair(&f, Some(m), a0, a0p)?;
                let (_, prod) = renormalized_product(&f, Some(m), a0, a0p)?;
                Ok((v, d2, prod))
            };
            let rep = commutator_norm_family(&eval, &st, &cfg)?;
            rt.push(vec![seed.into(), m.epsilon.into(), rep.value.into(), rep.component.clone().into()]);
            vals.push(rep.value);
        }
        let s = spread(&vals);
        out.check(
            5,
            "renormalized commutator uniform in ε",
            s < p.max_spread,
            format!("seed {seed}: values {}, spread {s:.3} (max {})", fmt_list(&vals), p.max_spread),
        );
    }
    out.timings.push((5, start.elapsed().as_secs_f64()));
    for &seed in &p.seeds {
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        for &n in &p.sizes {
            let k = classical_constants(p, n, seed)?;
            ct.push(vec![seed.into(), n.into(), k.n0.into(), k.n0_int.into(), k.f_alpha.into(), k.c1.into(), k.c2.into()]);
            c1.push(k.c1);
            c2.push(k.c2);
        }
        for (name, v) in [("classical commutator C1 refinement-stable", &c1), ("classical commutator C2 refinement-stable", &c2)] {
            let s = spread(v);
            out.check(
                5,
                name,
                v.iter().all(|x| x.is_finite()) && s < p.max_drift,
                format!("seed {seed}: constants {} over n = {:?}, spread {s:.3} (max {})", fmt_list(v), p.sizes, p.max_drift),
            );
        }
    }
    out.table("renormalized", rt);
    out.table("classical", ct);
    if let Some(t) = out.timings.last_mut() {
        t.1 = start.elapsed().as_secs_f64();
    }
    Ok(out)
}

// ---------------------------------------------------------------- linear_assemble

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearAssemble {
    pub n: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub amplitude: f64,
    pub u_int_amplitude: f64,
    pub a_base: f64,
    /// Target [a]_α of the rough coefficient.
    pub a_holder: f64,
    pub frozen_a0: f64,
    pub oracle_tol: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub max_picard_ratio: f64,
    /// Allowed growth of the weighted residual from the coarse to the fine half of the ladder.
    pub residual_growth: f64,
    pub max_spread: f64,
    pub boundary_n1: usize,
    pub boundary_n2: usize,
    pub boundary_t_max: f64,
    pub boundary_a_base: f64,
    pub boundary_a_amplitude: f64,
    pub boundary_u_int_amplitude: f64,
    pub g_exponent_tol: f64,
    pub w_exponent_margin: f64,
    pub seeds: Vec<u64>,
}

impl Default for LinearAssemble {
    fn default() -> Self {
        LinearAssemble {
            n: 64,
            alpha: 0.75,
            alpha_prime: 0.75,
            amplitude: 1e-2,
            u_int_amplitude: 1e-2,
            a_base: 0.6,
            a_holder: 0.05,
            frozen_a0: 0.625,
            oracle_tol: 1e-8,
            picard_tol: 1e-12,
            picard_max: 200,
            max_picard_ratio: 0.5,
            residual_growth: 2.0,
            max_spread: 3.0,
            boundary_n1: 4096,
            boundary_n2: 512,
            boundary_t_max: 2e-3,
            boundary_a_base: 0.5,
            boundary_a_amplitude: 0.3,
            boundary_u_int_amplitude: 0.05,
            g_exponent_tol: 0.1,
            w_exponent_margin: 0.1,
            seeds: (1..=10).collect(),
        }
    }
}

impl LinearAssemble {
    fn solve_config(&self) -> LinearSolveConfig {
        let mut cfg = LinearSolveConfig::for_grid(self.n);
        cfg.alpha = self.alpha;
        cfg.picard_tol = self.picard_tol;
        cfg.picard_max = self.picard_max;
        cfg
    }
}

pub fn linear_assemble(p: &LinearAssemble) -> Result<Outcome> {
    let mut out = Outcome::new("linear_assemble", p, &p.seeds);
    let start = Instant::now();
    linear_ensemble(p, &mut out)?;
    out.timings.push((6, start.elapsed().as_secs_f64()));
    let start = Instant::now();
    boundary_correction(p, &mut out)?;
    out.timings.push((9, start.elapsed().as_secs_f64()));
    Ok(out)
}

fn linear_ensemble(p: &LinearAssemble, out: &mut Outcome) -> Result<()> {
    let n = p.n;
    let g = GridSpec::torus(n, n)?;
    let spec = CovarianceSpec::white_in_time(p.alpha_prime, p.amplitude, n / 2 - 1)?;
    let cfg = p.solve_config();
    let products = CoefficientProducts::Classical;

    // frozen coefficients: U = v + 𝖵′ and w ≡ 0
    let mut oracle = Table::new(&["seed", "oracle_error", "w_max", "identity_error"]);
    let (c, h) = carrier_grids(&g)?;
    for &seed in p.seeds.iter().take(1) {
        let f = sample_forcing(&spec, g, seed)?.field;
        let u_int = lacunary_data(n, p.alpha, p.u_int_amplitude, seed);
        let a = Field::constant(g, p.frozen_a0);
        let b = assemble_linear(&f, &u_int, &a, &products, &cfg)?;
        let fc = periodic_resample(&f, c)?;
        let v = solve_periodic_v(&kernel::convolve(&fc, cfg.tau)?, p.frozen_a0, true)?;
        let data: Vec<f64> = u_int.iter().zip(v.row(c.zero_row())).map(|(x, y)| x - y).collect();
        let layer = heat_layer_general(&BoundaryData::fixed(data), p.frozen_a0, h, true, 0, 0)?;
        let err = b.total.sup_diff(&restrict_to_half_plane(&v)?.add(&layer)?)?;
        let w_max = b.w.max_abs();
        oracle.push(vec![seed.into(), err.into(), w_max.into(), b.reports.identity_error.into()]);
        out.check(
            6,
            "frozen-coefficient oracle",
            err <= p.oracle_tol && w_max == 0.0,
            format!("a ≡ {}: |U − (v + V′)| = {err:.2e} (tol {:.0e}), max |w| = {w_max:e}", p.frozen_a0, p.oracle_tol),
        );
    }
    out.table("frozen_oracle", oracle);

    // rough coefficient with [a]_α ≈ a_holder
    let shape = Field::from_fn(g, |x1, x2| (PI * (x1 - 0.2)).sin().abs().powf(p.alpha) * (2.0 * PI * x2).cos());
    let ncfg = NormConfig::for_grid(p.alpha, &g)?;
    let amp = p.a_holder / holder_seminorm(&shape, p.alpha, &ncfg)?.value;
    let a = shape.map(|s| p.a_base + amp * s);
    let a_measured = holder_seminorm(&a, p.alpha, &ncfg)?.value;

    let mut ens = Table::new(&[
        "seed",
        "a_holder",
        "picard_iterations",
        "picard_ratio",
        "m_u",
        "m_q",
        "w_2alpha",
        "n0",
        "n0_int",
        "modelling_ratio",
        "residual_coarse",
        "residual_fine",
        "safonov_ratio",
        "identity_error",
    ]);
    let mut res = Table::new(&["seed", "T", "raw", "weighted"]);
    let mut pic = Table::new(&["seed", "iter", "residual"]);
    let mut ratios = Vec::new();
    let (mut worst_picard, mut worst_growth, mut worst_id) = (0.0f64, 0.0f64, 0.0f64);
    for &seed in &p.seeds {
        let f = sample_forcing(&spec, g, seed)?.field;
        let u_int = lacunary_data(n, p.alpha, p.u_int_amplitude, seed);
        let b = assemble_linear(&f, &u_int, &a, &products, &cfg)?;
        let r = &b.reports;
        let half = r.residual.len() / 2;
        let coarse = r.residual[..half].iter().fold(0.0f64, |m, x| m.max(x.weighted));
        let fine = r.residual[half..].iter().fold(0.0f64, |m, x| m.max(x.weighted));
        let saf = b.safonov()?.ratio;
        ens.push(vec![
            seed.into(),
            a_measured.into(),
            b.picard.iterations.into(),
            b.picard.ratio.into(),
            r.m_u.into(),
            r.m_q.into(),
            r.w_2alpha.into(),
            r.n0.into(),
            r.n0_int.into(),
            r.modelling_ratio().into(),
            coarse.into(),
            fine.into(),
            saf.into(),
            r.identity_error.into(),
        ]);
        for row in &r.residual {
            res.push(vec![seed.into(), row.t.into(), row.raw.into(), row.weighted.into()]);
        }
        for (k, x) in b.picard.residuals.iter().enumerate() {
            pic.push(vec![seed.into(), (k + 1).into(), (*x).into()]);
        }
        ratios.push(r.modelling_ratio());
        worst_picard = worst_picard.max(b.picard.ratio);
        worst_growth = worst_growth.max(if coarse > 0.0 { fine / coarse } else { f64::INFINITY });
        worst_id = worst_id.max(r.identity_error);
    }
    out.table("ensemble", ens);
    out.table("residual", res);
    out.table("picard", pic);
    out.check(
        6,
        "Picard contraction",
        worst_picard < p.max_picard_ratio,
        format!("[a]_α = {a_measured:.4}: max measured ratio {worst_picard:.4} (max {})", p.max_picard_ratio),
    );
    out.check(
        6,
        "weighted residual bounded along the ladder",
        worst_growth <= p.residual_growth,
        format!("max(fine half)/max(coarse half) ≤ {worst_growth:.3} (max {})", p.residual_growth),
    );
    let s = spread(&ratios);
    out.check(
        6,
        "modelling ratio stable across seeds",
        s <= p.max_spread && worst_id <= 1e-12,
        format!("ratios {}, spread {s:.3} (max {}), identity error ≤ {worst_id:.1e}", fmt_list(&ratios), p.max_spread),
    );
    Ok(())
}

fn boundary_correction(p: &LinearAssemble, out: &mut Outcome) -> Result<()> {
    let alpha = p.alpha;
    let n1 = p.boundary_n1;
    let h = GridSpec::half_plane(n1, p.boundary_n2, p.boundary_t_max)?;
    let cusp = cusp_profile(n1, alpha, 1.0, 0.0);
    let u_int: Vec<f64> = cusp.iter().map(|x| p.boundary_u_int_amplitude * x).collect();
    let u = Field::zeros(h.as_two_sided());

    let flat = vec![p.boundary_a_base; n1];
    let g0 = w_forcing_g(&u_int, &u, &flat, &Field::constant(h, p.boundary_a_base), h)?;
    let g0_max = g0.extended.max_abs();
    out.check(9, "g vanishes for constant a", g0_max == 0.0, format!("max |g| = {g0_max:e}"));

    let a_b: Vec<f64> = cusp.iter().map(|x| p.boundary_a_base + p.boundary_a_amplitude * x).collect();
    let a = Field::from_fn(h, |x1, _| a_b[(x1 * n1 as f64).round() as usize % n1]);
    let g = w_forcing_g(&u_int, &u, &a_b, &a, h)?;
    let mut cfg = LinearSolveConfig::for_grid(n1);
    cfg.alpha = alpha;
    let w = solve_correction_w(&g.half, &a, &cfg)?;

    let (lo, hi) = (p.boundary_t_max / 200.0, p.boundary_t_max / 2.0);
    let mut t = Table::new(&["x2", "sup_g", "sup_w"]);
    let (mut gx, mut gy, mut wx, mut wy) = (vec![], vec![], vec![], vec![]);
    for j in 0..h.rows() {
        let x2 = h.x2(j);
        let (sg, sw) = (sup(g.half.row(j)), sup(w.w.row(j)));
        t.push(vec![x2.into(), sg.into(), sw.into()]);
        if j > 0 && x2 >= lo && x2 <= hi {
            gx.push(x2);
            gy.push(sg);
        }
        if j > 0 && x2 <= hi {
            wx.push(x2);
            wy.push(sw);
        }
    }
    out.table("boundary_profile", t);
    let gs = loglog_slope(&gx, &gy);
    let expected = (2.0 * alpha - 2.0) / 2.0;
    out.check(
        9,
        "g decay exponent",
        (gs - expected).abs() <= p.g_exponent_tol,
        format!("fitted {gs:.4} on x₂ ∈ [{lo:.1e}, {hi:.1e}], expected {expected} ± {}", p.g_exponent_tol),
    );
    let w0 = sup(w.w.row(0));
    out.check(9, "w vanishes on the boundary", w0 == 0.0, format!("max |w(·,0)| = {w0:e}"));
    let ws = loglog_slope(&wx, &wy);
    out.check(
        9,
        "w near-boundary exponent",
        ws >= alpha - p.w_exponent_margin,
        format!("fitted {ws:.4} on x₂ ≤ {hi:.1e}, need ≥ {} ({} step halvings)", alpha - p.w_exponent_margin, w.halvings),
    );
    Ok(())
}

// ---------------------------------------------------------------- quasilinear_contraction

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasilinearContraction {
    pub n: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    /// Forcing amplitudes; each one also scales U_int.
    pub amplitudes: Vec<f64>,
    pub a_base: f64,
    pub a_amplitude: f64,
    pub a_frequency: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub picard_tol: f64,
    pub ratio_floor: f64,
    pub max_ratio: f64,
    pub splitting_factor: f64,
    pub seeds: Vec<u64>,
}

impl Default for QuasilinearContraction {
    fn default() -> Self {
        QuasilinearContraction {
            n: 32,
            alpha: 0.75,
            alpha_prime: 0.75,
            amplitudes: vec![1e-2, 5e-3, 2.5e-3],
            a_base: 0.6,
            a_amplitude: 0.25,
            a_frequency: 1.0,
            tol: 1e-10,
            max_iter: 30,
            picard_tol: 1e-12,
            ratio_floor: 1e-13,
            max_ratio: 0.5,
            splitting_factor: 10.0,
            seeds: vec![1],
        }
    }
}

fn quasilinear_config(n: usize, alpha: f64, tol: f64, max_iter: usize, picard_tol: f64) -> QuasilinearConfig {
    let mut cfg = QuasilinearConfig::for_grid(n);
    cfg.linear.alpha = alpha;
    cfg.linear.picard_tol = picard_tol;
    cfg.linear.a_cap = f64::INFINITY;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg
}

fn quasilinear_data(n: usize, alpha: f64, alpha_prime: f64, amplitude: f64, seed: u64) -> Result<(ForcingSample, Vec<f64>)> {
    let spec = CovarianceSpec::white_in_time(alpha_prime, amplitude, n / 2 - 1)?;
    let f = sample_forcing(&spec, GridSpec::torus(n, n)?, seed)?;
    Ok((f, lacunary_data(n, alpha, amplitude, seed)))
}

pub fn quasilinear_contraction(p: &QuasilinearContraction) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::new("quasilinear_contraction", p, &p.seeds);
    if p.amplitudes.is_empty() {
        return Err(Error::Config("quasilinear_contraction needs at least one amplitude".into()));
    }
    let map = CoefficientMap { base: p.a_base, amplitude: p.a_amplitude, frequency: p.a_frequency };
    let cfg = quasilinear_config(p.n, p.alpha, p.tol, p.max_iter, p.picard_tol);
    let mut hist = Table::new(&["seed", "amplitude", "iter", "d_metric", "residual", "M_u", "M_q", "w_2alpha"]);
    let mut summ = Table::new(&["seed", "amplitude", "iterations", "converged", "contraction_ratio"]);
    for &seed in &p.seeds {
        let mut ratios = Vec::new();
        for (k, &amp) in p.amplitudes.iter().enumerate() {
            let (f, u_int) = quasilinear_data(p.n, p.alpha, p.alpha_prime, amp, seed)?;
            let r = quasilinear_fixed_point(&f, &u_int, &map, &cfg)?;
            for h in &r.history {
                hist.push(vec![
                    seed.into(),
                    amp.into(),
                    h.iter.into(),
                    h.d_metric.into(),
                    h.residual.into(),
                    h.m_u.into(),
                    h.m_q.into(),
                    h.w_2alpha.into(),
                ]);
            }
            let ratio = r.contraction_ratio(p.ratio_floor);
            summ.push(vec![seed.into(), amp.into(), r.history.len().into(), r.converged.into(), ratio.into()]);
            ratios.push(ratio);
            if k == 0 {
                out.check(
                    7,
                    "geometric contraction",
                    r.converged && ratio < p.max_ratio,
                    format!(
                        "seed {seed}, amplitude {amp:e}: {} iterations, ratio {ratio:.4} (max {})",
                        r.history.len(),
                        p.max_ratio
                    ),
                );
                let mut c2 = cfg.clone();
                c2.linear.frozen_a0 = match cfg.linear.frozen_a0 {
                    FrozenA0::Mean => FrozenA0::Midpoint,
                    FrozenA0::Midpoint => FrozenA0::Mean,
                };
                let r2 = quasilinear_fixed_point(&f, &u_int, &map, &c2)?;
                let d = r.bundle.total.sup_diff(&r2.bundle.total)?;
                let bound = p.splitting_factor * p.picard_tol;
                out.check(
                    7,
                    "independent of the Picard splitting",
                    d <= bound,
                    format!("seed {seed}: |U_mean − U_midpoint| = {d:.2e} (max {bound:.0e})"),
                );
            }
        }
        let monotone = ratios.windows(2).all(|w| w[1] < w[0]);
        out.check(
            7,
            "ratio decreases with the amplitude",
            monotone,
            format!("seed {seed}: ratios {} for amplitudes {:?}", fmt_list(&ratios), p.amplitudes),
        );
    }
    out.table("history", hist);
    out.table("contraction", summ);
    out.timings.push((7, start.elapsed().as_secs_f64()));
    Ok(out)
}

// ---------------------------------------------------------------- stability

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stability {
    pub n: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub amplitude: f64,
    /// Perturbation sizes relative to the base data.
    pub scales: Vec<f64>,
    pub a_base: f64,
    pub a_amplitude: f64,
    pub a_frequency: f64,
    pub frozen_a0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub picard_tol: f64,
    pub slope_tol: f64,
    /// The perturbation directions use seed + seed_offset.
    pub seed_offset: u64,
    pub seeds: Vec<u64>,
}

impl Default for Stability {
    fn default() -> Self {
        Stability {
            n: 32,
            alpha: 0.75,
            alpha_prime: 0.75,
            amplitude: 1e-2,
            scales: vec![0.2, 0.1, 0.05],
            a_base: 0.6,
            a_amplitude: 0.25,
            a_frequency: 1.0,
            frozen_a0: 0.625,
            tol: 1e-10,
            max_iter: 30,
            picard_tol: 1e-12,
            slope_tol: 0.25,
            seed_offset: 1000,
            seeds: vec![1],
        }
    }
}

pub fn stability(p: &Stability) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::new("stability", p, &p.seeds);
    if p.scales.len() < 2 {
        return Err(Error::Config("stability needs at least two perturbation scales".into()));
    }
    let cfg = quasilinear_config(p.n, p.alpha, p.tol, p.max_iter, p.picard_tol);
    let maps = [
        ("quasilinear", CoefficientMap { base: p.a_base, amplitude: p.a_amplitude, frequency: p.a_frequency }),
        ("frozen", CoefficientMap::constant(p.frozen_a0)),
    ];
    let mut t = Table::new(&[
        "seed", "path", "scale", "delta_n0", "delta_n0_int", "du_alpha", "dq_alpha", "dw_alpha", "dm_u", "dw_2alpha",
        "total", "ratio",
    ]);
    for &seed in &p.seeds {
        let (f0, u0) = quasilinear_data(p.n, p.alpha, p.alpha_prime, p.amplitude, seed)?;
        let (df, du) = quasilinear_data(p.n, p.alpha, p.alpha_prime, p.amplitude, seed + p.seed_offset)?;
        for (path, map) in &maps {
            let b0 = quasilinear_fixed_point(&f0, &u0, map, &cfg)?.bundle;
            let mut totals = Vec::new();
            let mut deltas = Vec::new();
            for &s in &p.scales {
                let mut f1 = f0.clone();
                f1.field.axpy(s, &df.field)?;
                let u1: Vec<f64> = u0.iter().zip(&du).map(|(a, b)| a + s * b).collect();
                let b1 = quasilinear_fixed_point(&f1, &u1, map, &cfg)?.bundle;
                let pert = Perturbation::measure(&b0, &b1)?;
                let r = stability_experiment(&b0, &b1, &pert)?;
                t.push(vec![
                    seed.into(),
                    (*path).into(),
                    s.into(),
                    r.delta_n0.into(),
                    r.delta_n0_int.into(),
                    r.du_alpha.into(),
                    r.dq_alpha.into(),
                    r.dw_alpha.into(),
                    r.dm_u.into(),
                    r.dw_2alpha.into(),
                    r.total.into(),
                    r.ratio.into(),
                ]);
                totals.push(r.total);
                deltas.push(r.delta_n0 + r.delta_n0_int);
            }
            let slope = loglog_slope(&p.scales, &totals);
            let dslope = loglog_slope(&deltas, &totals);
            out.check(
                8,
                &format!("linear response ({path})"),
                (slope - 1.0).abs() <= p.slope_tol,
                format!(
                    "seed {seed}: slope {slope:.4} against the scale, {dslope:.4} against δN₀ + δN₀^int (target 1 ± {})",
                    p.slope_tol
                ),
            );
        }
    }
    out.table("stability", t);
    out.timings.push((8, start.elapsed().as_secs_f64()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_is_a_config_error() {
        assert!(matches!(run("nope", json!({}), None), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = run("heat_decay", json!({"n1": 256, "bogus": 1}), None);
        assert!(matches!(e, Err(Error::Config(_))));
        let e = run("heat_decay", json!({}), Some(vec![]));
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn defaults_round_trip() {
        let p = LinearAssemble::default();
        let v = serde_json::to_value(&p).unwrap();
        let q: LinearAssemble = serde_json::from_value(v).unwrap();
        assert_eq!(q.seeds, p.seeds);
        assert_eq!(q.boundary_n1, p.boundary_n1);
    }

    #[test]
    fn holder_class_of_cusp() {
        let (_, c) = holder_class(&cusp_profile(4096, 0.6, 1.0, 0.0), 6);
        assert!((c - 0.6).abs() < 0.03, "{c}");
        let smooth: Vec<f64> = (0..4096).map(|i| (2.0 * PI * i as f64 / 4096.0).sin()).collect();
        assert!((holder_class(&smooth, 6).1 - 1.0).abs() < 0.01);
    }

    #[test]
    fn small_heat_decay_run_is_deterministic() {
        let v = json!({"n1": 512, "points": 6});
        let a = run("heat_decay", v.clone(), None).unwrap();
        let b = run("heat_decay", v, None).unwrap();
        for ((_, x), (_, y)) in a.tables.iter().zip(&b.tables) {
            assert_eq!(x.to_csv(), y.to_csv());
        }
        assert_eq!(a.checks.len(), 3);
    }
}
