//! Ensembles of on-site disorder, averaged observables, the critical
//! disorder strength and the Born-level renormalization of Model I.
//!
//! Realization `k` of a sweep is seeded with
//! `splitmix64(splitmix64(seed) ^ k)` at every
//! disorder strength, so the curves over `W` use common random numbers and
//! a sweep is bit-reproducible regardless of thread scheduling.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{freq_correlations_direct, lro_parameter};
use crate::green::{r_of, singular_values_at, GreenFunction};
use crate::linalg::{c, CMat, C64};
use crate::models::{
    apply_disorder, build_model_i, dynamical_matrix, CouplingSet, DisorderRealization, ModelIParams,
    stability_scaling,
};
use crate::{Error, Result};

/// A realization counts as unstable unless every eigenvalue has
/// `Im λ < −STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-10;

/// Share of unstable realizations above which a sweep carries a warning.
pub const UNSTABLE_WARN_FRACTION: f64 = 0.1;

/// Stafford's variant 13 of the splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The base seed is mixed before the index is folded in; with a bare
/// `seed ^ k`, nearby seeds would share most of their realizations.
pub fn realization_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `Λ` of the normalized frequency-resolved `N̄(ω)`.
    LambdaN { omega: f64 },
    /// `r = (s₁ − s₀)/(s₁ + s₀)` at `ω`.
    R { omega: f64 },
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::LambdaN { omega } => format!("lambda_N(omega={omega})"),
            Observable::R { omega } => format!("r(omega={omega})"),
        }
    }

    /// Value on one coupling set, `None` if its dynamics is unstable.
    pub fn evaluate(&self, cs: &CouplingSet) -> Result<Option<f64>> {
        self.evaluate_with(cs, None)
    }

    /// As [`Observable::evaluate`] with an explicit stability scaling, which
    /// for a disordered chain has to come from its clean parent.
    pub fn evaluate_with(&self, cs: &CouplingSet, scaling: Option<f64>) -> Result<Option<f64>> {
        let mut h = dynamical_matrix(cs);
        h.scaling = scaling;
        if !(h.max_imag_eigenvalue()? < -STABILITY_MARGIN) {
            return Ok(None);
        }
        let v = match *self {
            Observable::LambdaN { omega } => lro_parameter(&freq_correlations_direct(&h, omega).n_bar),
            Observable::R { omega } => r_of(&singular_values_at(&h, omega)?)?,
        };
        Ok(Some(v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSweepResult {
    pub w_grid: Vec<f64>,
    pub means: Vec<f64>,
    /// Sample standard deviation over `√n` of the stable realizations.
    pub stderrs: Vec<f64>,
    pub n_unstable: Vec<usize>,
    pub n_r: usize,
    pub seed: u64,
    pub observable_name: String,
    pub warnings: Vec<String>,
}

/// Mean and standard error, computed relative to the first sample so that
/// identical samples give their common value and exactly zero spread.
fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let x0 = x[0];
    let d: Vec<f64> = x.iter().map(|v| v - x0).collect();
    let md = d.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (x0 + md, 0.0);
    }
    let var = d.iter().map(|v| (v - md) * (v - md)).sum::<f64>() / (n - 1) as f64;
    (x0 + md, (var / n as f64).sqrt())
}

pub fn disorder_sweep(
    base: &CouplingSet,
    w_grid: &[f64],
    n_r: usize,
    seed: u64,
    observable: Observable,
) -> Result<DisorderSweepResult> {
    if n_r == 0 || w_grid.is_empty() {
        return Err(Error::InvalidParams("sweep needs n_r >= 1 and a non-empty W grid".into()));
    }
    if observable.evaluate(base)?.is_none() {
        return Err(Error::Unstable {
            max_im: dynamical_matrix(base).max_imag_eigenvalue()?,
        });
    }
    let theta = stability_scaling(base);
    let mut means = Vec::with_capacity(w_grid.len());
    let mut stderrs = Vec::with_capacity(w_grid.len());
    let mut n_unstable = Vec::with_capacity(w_grid.len());
    let mut warnings = Vec::new();
    for &w in w_grid {
        let vals: Vec<Option<f64>> = (0..n_r as u64)
            .into_par_iter()
            .map(|k| {
                let real = DisorderRealization::generate(base.n, w, realization_seed(seed, k));
                observable.evaluate_with(&apply_disorder(base, &real)?, Some(theta))
            })
            .collect::<Result<_>>()?;
        let ok: Vec<f64> = vals.iter().flatten().copied().collect();
        let bad = n_r - ok.len();
        if bad as f64 > UNSTABLE_WARN_FRACTION * n_r as f64 {
            warnings.push(format!("W = {w}: {bad} of {n_r} realizations unstable"));
        }
        let (m, e) = mean_stderr(&ok);
        means.push(m);
        stderrs.push(e);
        n_unstable.push(bad);
    }
    Ok(DisorderSweepResult {
        w_grid: w_grid.to_vec(),
        means,
        stderrs,
        n_unstable,
        n_r,
        seed,
        observable_name: observable.name(),
        warnings,
    })
}

/// Centered moving average, the window shrinking symmetrically at the ends.
pub fn moving_average(y: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    (0..y.len())
        .map(|i| {
            let h = half.min(i).min(y.len() - 1 - i);
            let s = &y[i - h..=i + h];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// Central differences on a possibly non-uniform grid, one-sided at the ends.
pub fn slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (y[b] - y[a]) / (x[b] - x[a])
        })
        .collect()
}

/// `W` of steepest descent or ascent of the smoothed mean curve, refined
/// between grid points by a parabola through `|slope|`.
pub fn critical_disorder(sweep: &DisorderSweepResult, smooth_window: usize) -> Result<f64> {
    critical_point(&sweep.w_grid, &sweep.means, &sweep.stderrs, smooth_window)
}

pub fn critical_point(x: &[f64], y: &[f64], noise: &[f64], smooth_window: usize) -> Result<f64> {
    let n = x.len();
    if n < 7 || y.len() != n {
        return Err(Error::InvalidParams(format!("critical point needs >= 7 grid points, got {n}")));
    }
    let ys = moving_average(y, smooth_window);
    let sl: Vec<f64> = slopes(x, &ys).iter().map(|s| s.abs()).collect();
    let (i, &best) = sl
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let span = x[n - 1] - x[0];
    let floor = 4.0 * noise.iter().copied().fold(0.0, f64::max) + 1e-12 * ys.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(best * span > floor) {
        return Err(Error::Numerical("curve is flat within its noise".into()));
    }
    if i == 0 || i == n - 1 {
        return Ok(x[i]);
    }
    let (a, b, cc) = (sl[i - 1], sl[i], sl[i + 1]);
    let den = a - 2.0 * b + cc;
    let off = if den < 0.0 { (0.5 * (a - cc) / den).clamp(-0.5, 0.5) } else { 0.0 };
    let step = if off < 0.0 { x[i] - x[i - 1] } else { x[i + 1] - x[i] };
    Ok(x[i] + off * step)
}

/// `W → W/√Δ_sg`.
pub fn rescale(w_grid: &[f64], delta_sg: f64) -> Vec<f64> {
    let s = delta_sg.sqrt();
    w_grid.iter().map(|w| w / s).collect()
}

fn interp(x: &[f64], y: &[f64], t: f64) -> f64 {
    let k = x.partition_point(|&v| v < t).clamp(1, x.len() - 1);
    let (x0, x1) = (x[k - 1], x[k]);
    y[k - 1] + (y[k] - y[k - 1]) * (t - x0) / (x1 - x0)
}

/// Largest pairwise sup-distance between curves after linear interpolation
/// onto `samples` points of their common range.
pub fn collapse_distance(curves: &[(Vec<f64>, Vec<f64>)], samples: usize) -> f64 {
    let lo = curves.iter().map(|c| c.0[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = curves.iter().map(|c| *c.0.last().unwrap()).fold(f64::INFINITY, f64::min);
    let ts: Vec<f64> = (0..samples).map(|i| lo + (hi - lo) * i as f64 / (samples - 1).max(1) as f64).collect();
    let mut d = 0.0f64;
    for a in 0..curves.len() {
        for b in a + 1..curves.len() {
            for &t in &ts {
                let (ca, cb) = (&curves[a], &curves[b]);
                d = d.max((interp(&ca.0, &ca.1, t) - interp(&cb.0, &cb.1, t)).abs());
            }
        }
    }
    d
}

/// `W²` times the block matrix of on-site Green's function diagonals,
/// `[[diag G, −diag Ḡ], [−diag Ḡ', diag G']]`.
pub fn born_self_energy(g0: &GreenFunction, w: f64) -> CMat {
    let n = g0.n();
    let w2 = w * w;
    let g = &g0.g_full;
    Mat::from_fn(2 * n, 2 * n, |i, j| {
        if i % n != j % n {
            return c(0.0, 0.0);
        }
        let sign = if (i < n) == (j < n) { 1.0 } else { -1.0 };
        g[(i, j)] * (sign * w2)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub delta_eff: f64,
    pub gamma_eff: f64,
    pub g_s_eff: C64,
}

/// Bulk homogeneity required of `G_ii` before it is used for all sites.
pub const HOMOGENEITY_TOL: f64 = 1e-3;

/// `Δ + W² Re G_ii`, `γ − 2W² Im G_ii`, `g_s − W² Ḡ_ii` with `i = ⌊N/2⌋`.
pub fn effective_parameters(g0: &GreenFunction, base: &ModelIParams, w: f64) -> Result<EffectiveParams> {
    if !base.is_symmetric() {
        return Err(Error::InvalidParams("effective parameters need the symmetric Model I point".into()));
    }
    let n = g0.n();
    if n != base.n_sites {
        return Err(Error::InvalidParams(format!("Green's function has {n} sites, parameters {}", base.n_sites)));
    }
    let (g, gb) = (g0.g(), g0.g_bar());
    let mid = n / 2;
    let spread = (n / 4..=3 * n / 4).map(|i| (g[(i, i)] - g[(mid, mid)]).norm()).fold(0.0, f64::max);
    if spread > HOMOGENEITY_TOL {
        return Err(Error::Numerical(format!("G_ii varies by {spread:.2e} across the bulk")));
    }
    let w2 = w * w;
    let gii = g[(mid, mid)];
    Ok(EffectiveParams {
        delta_eff: base.delta + w2 * gii.re,
        gamma_eff: base.gamma - 2.0 * w2 * gii.im,
        g_s_eff: c(base.g_s, 0.0) - gb[(mid, mid)] * w2,
    })
}

/// Clean Model I chain with the renormalized on-site terms; `g_s_eff` may
/// be complex.
pub fn effective_coupling_set(base: &ModelIParams, eff: &EffectiveParams) -> Result<CouplingSet> {
    let p = ModelIParams {
        delta: eff.delta_eff,
        gamma: eff.gamma_eff,
        ..base.clone()
    };
    let mut cs = build_model_i(&p)?;
    for i in 0..cs.n {
        cs.k_mat[(i, i)] = eff.g_s_eff;
    }
    Ok(cs)
}

/// Singular gap of the clean chain, `s[n_edge] − s[n_edge−1]` (or `s[0]`).
pub fn clean_singular_gap(cs: &CouplingSet, omega: f64, n_edge: usize) -> Result<f64> {
    let s = singular_values_at(&dynamical_matrix(cs), omega)?;
    Ok(crate::green::gap_of(&s, n_edge))
}

/// `‖𝕎‖₂ = max_j |w_j|` for the on-site disorder matrix `diag(w, −w)`.
pub fn disorder_norm(real: &DisorderRealization) -> f64 {
    real.deltas.iter().fold(0.0, |m, d| m.max(d.abs()))
}
