//! Bloch winding numbers and the winding-number array over frequency.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::green::SvdTriple;
use crate::linalg::{self, C64};
use crate::models::{BlochGenerator, CouplingSet, DynamicalMatrix};
use crate::{Error, Result};

pub const DET_ZERO: f64 = 1e-12;
const MAX_DEPTH: usize = 40;

/// Default grid: 601 points over `[−4, 4]`, closings refined to `1e-4`.
pub const DEFAULT_OMEGA_MAX: f64 = 4.0;
pub const DEFAULT_N_OMEGA: usize = 601;
pub const DEFAULT_REFINE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindingArray {
    pub closings: Vec<f64>,
    pub nus: Vec<i64>,
    pub stable: bool,
    #[serde(skip)]
    pub diagnostics: ScanDiagnostics,
}

/// Side information from a scan; not part of the invariant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanDiagnostics {
    /// `min_k s_min(ω − ℍ(k))` at each refined closing.
    pub closing_gaps: Vec<f64>,
    /// Gap minima close to zero that do not change `ν`.
    pub touch_points: Vec<f64>,
    /// Set when two closings fall within `2·refine_tol` of each other, i.e.
    /// an interval of distinct `ν` collapsed below resolution.
    pub critical: bool,
}

impl WindingArray {
    pub fn reflection_residual(&self) -> f64 {
        let n = self.closings.len();
        (0..n)
            .map(|i| (self.closings[i] + self.closings[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_reflection_symmetric(&self, tol: f64) -> bool {
        let rev: Vec<i64> = self.nus.iter().rev().copied().collect();
        rev == self.nus && self.reflection_residual() <= tol
    }
}

fn det_shifted(gen: &BlochGenerator, omega: f64, k: f64) -> C64 {
    let a = linalg::shifted(&gen.at(k), omega);
    if a.nrows() == 2 {
        a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
    } else {
        linalg::determinant(&a)
    }
}

/// `ν(ω)`: total phase of `det(ω − ℍ(k))` accumulated over `k ∈ [−π, π)`,
/// over `2π`, from principal-branch increments between neighbouring
/// k-points. Any step turning by `π/2` or more is halved recursively (a
/// local doubling of `n_k`); the result must then sit within `1e-6` of an
/// integer.
pub fn winding_number(c: &CouplingSet, omega: f64, n_k: usize) -> Result<i64> {
    winding_with(&BlochGenerator::new(c)?, omega, n_k)
}

pub fn winding_with(gen: &BlochGenerator, omega: f64, n_k: usize) -> Result<i64> {
    if n_k < 64 {
        return Err(Error::InvalidParams(format!("n_k = {n_k} < 64")));
    }
    let det_at = |k: f64| -> Result<C64> {
        let d = det_shifted(gen, omega, k);
        if d.norm() < DET_ZERO {
            Err(Error::GapClosing {
                omega,
                k,
                det_abs: d.norm(),
            })
        } else {
            Ok(d)
        }
    };
    let h = 2.0 * PI / n_k as f64;
    let d0 = det_at(-PI)?;
    let mut total = 0.0;
    let mut prev = d0;
    for m in 1..=n_k {
        let (ka, kb) = (-PI + (m - 1) as f64 * h, -PI + m as f64 * h);
        let d = if m == n_k { d0 } else { det_at(kb)? };
        total += phase_step(&det_at, ka, prev, kb, d, 0)?;
        prev = d;
    }
    let w = total / (2.0 * PI);
    if (w - w.round()).abs() < 1e-6 {
        Ok(w.round() as i64)
    } else {
        Err(Error::Numerical(format!("winding at omega = {omega} is not an integer ({w})")))
    }
}

fn phase_step(
    det_at: &impl Fn(f64) -> Result<C64>,
    ka: f64,
    da: C64,
    kb: f64,
    db: C64,
    depth: usize,
) -> Result<f64> {
    let step = (db / da).arg();
    if step.abs() < PI / 2.0 {
        return Ok(step);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numerical(format!("phase of det not resolved near k = {ka}")));
    }
    let km = 0.5 * (ka + kb);
    let dm = det_at(km)?;
    Ok(phase_step(det_at, ka, da, km, dm, depth + 1)? + phase_step(det_at, km, dm, kb, db, depth + 1)?)
}

/// `min_k s_min(ω − ℍ(k))` on a uniform k-grid.
pub fn min_gap_over_k(gen: &BlochGenerator, omega: f64, n_k: usize) -> f64 {
    (0..n_k)
        .map(|m| {
            let k = -PI + 2.0 * PI * m as f64 / n_k as f64;
            let a = linalg::shifted(&gen.at(k), omega);
            if a.nrows() == 2 {
                smallest_singular_value_2x2(&a)
            } else {
                linalg::singular_values_ascending(&a).map(|s| s[0]).unwrap_or(0.0)
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn smallest_singular_value_2x2(a: &crate::CMat) -> f64 {
    let f2: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].norm_sqr()).sum();
    let det = (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).norm();
    let smax = (0.5 * (f2 + (f2 * f2 - 4.0 * det * det).max(0.0).sqrt())).sqrt();
    if smax == 0.0 {
        0.0
    } else {
        det / smax
    }
}

pub fn winding_array(c: &CouplingSet, omega_max: f64, n_omega: usize, refine_tol: f64) -> Result<WindingArray> {
    if n_omega < 2 || !(omega_max > 0.0) || !(refine_tol > 0.0) {
        return Err(Error::InvalidParams("winding_array needs n_omega >= 2, omega_max > 0, refine_tol > 0".into()));
    }
    let gen = BlochGenerator::new(c)?;
    let omegas: Vec<f64> = (0..n_omega)
        .map(|i| -omega_max + 2.0 * omega_max * i as f64 / (n_omega - 1) as f64)
        .collect();
    let nus: Vec<Option<i64>> = omegas.par_iter().map(|&w| nu_or_closing(&gen, w)).collect::<Result<_>>()?;
    if nus[0] != Some(0) || nus[n_omega - 1] != Some(0) {
        return Err(Error::Numerical(format!(
            "nu(+-{omega_max}) = ({:?}, {:?}), expected 0 at the window edges",
            nus[0],
            nus[n_omega - 1]
        )));
    }

    let mut closings = Vec::new();
    let mut values = vec![0i64];
    let (mut lo, mut nu_lo) = (omegas[0], 0i64);
    for (w, nu) in omegas.iter().zip(&nus).skip(1) {
        let Some(nu) = *nu else { continue };
        if nu != nu_lo {
            for (wc, nu_after) in bisect(&gen, lo, nu_lo, *w, nu, refine_tol, 0)? {
                closings.push(wc);
                values.push(nu_after);
            }
        }
        lo = *w;
        nu_lo = nu;
    }

    let closing_gaps = closings.iter().map(|&w| min_gap_over_k(&gen, w, 512)).collect();
    let critical = closings.windows(2).any(|p| p[1] - p[0] < 2.0 * refine_tol);
    let touch_points = touch_points(&gen, &omegas, &closings, refine_tol);
    Ok(WindingArray {
        stable: values.len() % 2 == 1,
        closings,
        nus: values,
        diagnostics: ScanDiagnostics {
            closing_gaps,
            touch_points,
            critical,
        },
    })
}

fn nu_or_closing(gen: &BlochGenerator, omega: f64) -> Result<Option<i64>> {
    match winding_with(gen, omega, 64) {
        Ok(n) => Ok(Some(n)),
        // an unconverged k-sum only happens right next to a closing
        Err(Error::GapClosing { .. }) | Err(Error::Numerical(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Closings inside `[lo, hi]` given `ν(lo) ≠ ν(hi)`, each with the value of
/// `ν` just above it.
fn bisect(
    gen: &BlochGenerator,
    lo: f64,
    nu_lo: i64,
    hi: f64,
    nu_hi: i64,
    tol: f64,
    depth: usize,
) -> Result<Vec<(f64, i64)>> {
    if hi - lo <= tol || depth > 60 {
        return Ok(vec![(0.5 * (lo + hi), nu_hi)]);
    }
    let mut mid = 0.5 * (lo + hi);
    let mut nu_mid = nu_or_closing(gen, mid)?;
    // landing exactly on a closing: nudge off it
    let mut nudge = 0.25 * tol;
    while nu_mid.is_none() && nudge < 0.5 * (hi - lo) {
        mid = 0.5 * (lo + hi) + nudge;
        nu_mid = nu_or_closing(gen, mid)?;
        nudge *= 2.0;
    }
    let Some(nu_mid) = nu_mid else {
        return Ok(vec![(0.5 * (lo + hi), nu_hi)]);
    };
    if nu_mid == nu_lo {
        bisect(gen, mid, nu_mid, hi, nu_hi, tol, depth + 1)
    } else if nu_mid == nu_hi {
        bisect(gen, lo, nu_lo, mid, nu_mid, tol, depth + 1)
    } else {
        let mut a = bisect(gen, lo, nu_lo, mid, nu_mid, tol, depth + 1)?;
        a.extend(bisect(gen, mid, nu_mid, hi, nu_hi, tol, depth + 1)?);
        Ok(a)
    }
}

/// Local minima of the k-minimized gap that dip to (numerically) zero
/// without a change of `ν`.
fn touch_points(gen: &BlochGenerator, omegas: &[f64], closings: &[f64], tol: f64) -> Vec<f64> {
    let g: Vec<f64> = omegas.par_iter().map(|&w| min_gap_over_k(gen, w, 128)).collect();
    let step = omegas[1] - omegas[0];
    let mut out = Vec::new();
    for i in 1..g.len() - 1 {
        if !(g[i] < g[i - 1] && g[i] <= g[i + 1]) || g[i] > 4.0 * step {
            continue;
        }
        if closings.iter().any(|&c| (c - omegas[i]).abs() < 2.0 * step) {
            continue;
        }
        // golden-section refinement of the minimum on the bracket
        let (mut a, mut b) = (omegas[i - 1], omegas[i + 1]);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        while b - a > tol {
            let x1 = b - r * (b - a);
            let x2 = a + r * (b - a);
            if min_gap_over_k(gen, x1, 512) < min_gap_over_k(gen, x2, 512) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let w = 0.5 * (a + b);
        if min_gap_over_k(gen, w, 2048) < 1e-3 {
            out.push(w);
        }
    }
    out
}

/// Same dimension and componentwise-equal winding numbers.
pub fn topologically_equivalent(a: &WindingArray, b: &WindingArray) -> bool {
    a.nus == b.nus
}

/// `‖ℍ₂ − ℍ₁‖₂`. By Weyl's inequality no singular value of `ω − ℍ` moves
/// by more than this under the deformation.
pub fn deformation_gap_bound(h1: &DynamicalMatrix, h2: &DynamicalMatrix, _omega: f64) -> Result<f64> {
    if h1.h.nrows() != h2.h.nrows() {
        return Err(Error::InvalidParams("dynamical matrices of different sizes".into()));
    }
    linalg::spectral_norm(&(&h2.h - &h1.h))
}

/// Singular values below `s[ν]/10`.
pub fn count_edge_modes_obc(t: &SvdTriple, nu_abs: usize) -> usize {
    count_edge_modes(&t.s, nu_abs)
}

pub fn count_edge_modes(s: &[f64], nu_abs: usize) -> usize {
    if nu_abs == 0 || nu_abs >= s.len() {
        return 0;
    }
    let thr = s[nu_abs] / 10.0;
    s.iter().filter(|&&x| x < thr).count()
}
