//! SVD of `ω − ℍ`, Green's function, amplification matrix and the scalar
//! spectral diagnostics built on them.

use faer::Mat;

use crate::linalg::{self, c, CMat, C64, I};
use crate::models::{CouplingSet, DynamicalMatrix};
use crate::{Error, Result};

/// Below this an SVD-based inverse is refused as a resonance.
pub const SINGULAR_THRESHOLD: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub omega: f64,
    pub u: CMat,
    /// Ascending.
    pub s: Vec<f64>,
    pub v: CMat,
}

impl SvdTriple {
    pub fn n(&self) -> usize {
        self.s.len() / 2
    }

    /// Particle rows of `𝕍`, written `𝚅`.
    pub fn v_particle(&self) -> CMat {
        let n = self.n();
        linalg::block(&self.v, 0, 0, n, 2 * n)
    }

    /// Hole rows of `𝕍` (`𝚅̄`).
    pub fn v_hole(&self) -> CMat {
        let n = self.n();
        linalg::block(&self.v, n, 0, n, 2 * n)
    }

    pub fn s_diag(&self) -> CMat {
        let m = self.s.len();
        Mat::from_fn(m, m, |i, j| if i == j { c(self.s[i], 0.0) } else { c(0.0, 0.0) })
    }

    pub fn reconstruction_residual(&self, h: &DynamicalMatrix) -> f64 {
        let a = linalg::shifted(&h.h, self.omega);
        let r = &self.u * self.s_diag() * self.v.adjoint();
        linalg::rel_frob_diff(&r, &a)
    }

    pub fn unitarity_residual(&self) -> f64 {
        let id = linalg::identity(self.s.len());
        let ru = linalg::frob(&(self.u.adjoint() * &self.u - &id));
        let rv = linalg::frob(&(self.v.adjoint() * &self.v - &id));
        ru.max(rv)
    }
}

/// Full SVD of `ω𝟙 − ℍ`, singular values ascending. Each right singular
/// vector is rotated so its first component above `1e-10` of the column
/// maximum is real positive; the left vector gets the same phase.
///
/// When `ℍ` splits into `𝒴` sectors each sector is decomposed on its own,
/// and singular values far below the sector norm are recomputed from the
/// substitution inverse (see [`sector_svd`]).
pub fn svd_at(h: &DynamicalMatrix, omega: f64) -> Result<SvdTriple> {
    let (mut u, s, mut v) = match h.y_sectors() {
        Some((hp, hm)) => {
            let p = sector_svd(&linalg::shifted(&hp, omega))?;
            let m = sector_svd(&linalg::shifted(&hm, omega))?;
            merge_sectors(p, m)
        }
        None => linalg::svd_ascending(&linalg::shifted(&h.h, omega))?,
    };
    let m = s.len();
    for j in 0..m {
        let cmax = (0..m).map(|i| v[(i, j)].norm()).fold(0.0, f64::max);
        if let Some(i) = (0..m).find(|&i| v[(i, j)].norm() > 1e-10 * cmax) {
            let z = v[(i, j)];
            let ph = z.conj() / z.norm();
            for r in 0..m {
                v[(r, j)] *= ph;
                u[(r, j)] *= ph;
            }
        }
    }
    Ok(SvdTriple { omega, u, s, v })
}

pub fn singular_values_at(h: &DynamicalMatrix, omega: f64) -> Result<Vec<f64>> {
    match h.y_sectors() {
        Some((hp, hm)) => {
            let mut s = sector_singular_values(&linalg::shifted(&hp, omega))?;
            s.extend(sector_singular_values(&linalg::shifted(&hm, omega))?);
            s.sort_by(f64::total_cmp);
            Ok(s)
        }
        None => linalg::singular_values_ascending(&linalg::shifted(&h.h, omega)),
    }
}

// singular values below this fraction of the largest are taken from the inverse
const REFINE_BELOW: f64 = 1e-3;

fn trusted(dense: f64, smax: f64, sg: f64, sg_max: f64, m: usize) -> bool {
    dense < REFINE_BELOW * smax && 1.0 / sg < REFINE_BELOW * smax && sg > 1e3 * m as f64 * f64::EPSILON * sg_max
}

fn triangular_kind(a: &CMat) -> Option<bool> {
    if linalg::is_lower_triangular(a) {
        Some(true)
    } else if linalg::is_upper_triangular(a) {
        Some(false)
    } else {
        None
    }
}

/// Dense SVD of one sector. A dense factorization resolves singular values
/// only to about `ε‖a‖` in absolute terms; for a triangular sector the
/// smallest ones are replaced by reciprocals of the largest singular values
/// of the substitution inverse, whose vectors swap roles. A reciprocal is
/// only trusted where the dense value is small too and the inverse's own
/// singular value clears its noise floor `ε σ_max(inv)`; otherwise the
/// inverse's second value, swamped by roundoff, would come back as a
/// spurious `s₀/ε`.
pub fn sector_svd(a: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let (mut u, mut s, mut v) = linalg::svd_ascending(a)?;
    let m = s.len();
    let smax = s[m - 1];
    let Some(lower) = triangular_kind(a) else {
        return Ok((u, s, v));
    };
    if !(s[0] < REFINE_BELOW * smax) {
        return Ok((u, s, v));
    }
    let (x, sg, y) = linalg::svd_ascending(&linalg::triangular_inverse(a, lower))?;
    for k in 0..m {
        let src = m - 1 - k;
        if !trusted(s[k], smax, sg[src], sg[m - 1], m) {
            break;
        }
        s[k] = 1.0 / sg[src];
        for r in 0..m {
            u[(r, k)] = y[(r, src)];
            v[(r, k)] = x[(r, src)];
        }
    }
    Ok((u, s, v))
}

fn sector_singular_values(a: &CMat) -> Result<Vec<f64>> {
    let mut s = linalg::singular_values_ascending(a)?;
    let m = s.len();
    let smax = s[m - 1];
    if let (Some(lower), true) = (triangular_kind(a), s[0] < REFINE_BELOW * smax) {
        let sg = linalg::singular_values_ascending(&linalg::triangular_inverse(a, lower))?;
        for k in 0..m {
            if !trusted(s[k], smax, sg[m - 1 - k], sg[m - 1], m) {
                break;
            }
            s[k] = 1.0 / sg[m - 1 - k];
        }
    }
    Ok(s)
}

type Triple = (CMat, Vec<f64>, CMat);

/// Lifts sector vectors by `W` (`(x, ix)/√2` and `(x, −ix)/√2`) and merges
/// both sectors in ascending order.
fn merge_sectors(p: Triple, m: Triple) -> Triple {
    let n = p.1.len();
    let mut order: Vec<(f64, bool, usize)> = p.1.iter().enumerate().map(|(k, &x)| (x, true, k)).collect();
    order.extend(m.1.iter().enumerate().map(|(k, &x)| (x, false, k)));
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let lift = |sec: &CMat, plus: bool, k: usize, row: usize| {
        let z = sec[(row % n, k)] * r;
        match (row < n, plus) {
            (true, _) => z,
            (false, true) => I * z,
            (false, false) => -I * z,
        }
    };
    let u = Mat::from_fn(2 * n, 2 * n, |i, j| {
        let (_, plus, k) = order[j];
        lift(if plus { &p.0 } else { &m.0 }, plus, k, i)
    });
    let v = Mat::from_fn(2 * n, 2 * n, |i, j| {
        let (_, plus, k) = order[j];
        lift(if plus { &p.2 } else { &m.2 }, plus, k, i)
    });
    (u, order.iter().map(|o| o.0).collect(), v)
}

#[derive(Clone, Debug)]
pub struct GreenFunction {
    pub omega: f64,
    pub g_full: CMat,
}

impl GreenFunction {
    pub fn n(&self) -> usize {
        self.g_full.nrows() / 2
    }

    fn quad(&self, r: usize, c: usize) -> CMat {
        let n = self.n();
        linalg::block(&self.g_full, r * n, c * n, n, n)
    }

    /// Particle-particle block `G`.
    pub fn g(&self) -> CMat {
        self.quad(0, 0)
    }

    /// Particle-hole block `Ḡ`.
    pub fn g_bar(&self) -> CMat {
        self.quad(0, 1)
    }

    /// Hole-particle block `Ḡ'`.
    pub fn g_bar_prime(&self) -> CMat {
        self.quad(1, 0)
    }

    /// Hole-hole block `G'`.
    pub fn g_prime(&self) -> CMat {
        self.quad(1, 1)
    }

    /// `‖(ω − ℍ) 𝔾 − 𝟙‖_F`.
    pub fn residual(&self, h: &DynamicalMatrix) -> f64 {
        let a = linalg::shifted(&h.h, self.omega);
        linalg::frob(&(a * &self.g_full - linalg::identity(self.g_full.nrows())))
    }
}

/// `𝔾 = 𝕍 𝕊⁻¹ 𝕌†`.
pub fn green_function(t: &SvdTriple) -> Result<GreenFunction> {
    let s0 = t.s[0];
    if s0 < SINGULAR_THRESHOLD {
        return Err(Error::Singular {
            omega: t.omega,
            s_min: s0,
        });
    }
    let m = t.s.len();
    let vs = Mat::from_fn(m, m, |i, j| t.v[(i, j)] / t.s[j]);
    Ok(GreenFunction {
        omega: t.omega,
        g_full: vs * t.u.adjoint(),
    })
}

/// Green's function by direct solve rather than SVD.
///
/// When `ℍ` splits into the two `𝒴` sectors the sectors are inverted
/// separately, by substitution if they are triangular (the symmetric Model I
/// case). That route stays accurate even where `s[0]` is below machine
/// epsilon relative to `‖ℍ‖`, which no dense factorization of the full
/// matrix manages.
pub fn resolvent(h: &DynamicalMatrix, omega: f64) -> GreenFunction {
    let g_full = match h.y_sectors() {
        Some((hp, hm)) => {
            let gp = sector_inverse(&linalg::shifted(&hp, omega));
            let gm = sector_inverse(&linalg::shifted(&hm, omega));
            assemble_from_sectors(&gp, &gm)
        }
        None => linalg::inverse(&linalg::shifted(&h.h, omega)),
    };
    GreenFunction { omega, g_full }
}

fn sector_inverse(a: &CMat) -> CMat {
    if linalg::is_lower_triangular(a) {
        linalg::triangular_inverse(a, true)
    } else if linalg::is_upper_triangular(a) {
        linalg::triangular_inverse(a, false)
    } else {
        linalg::inverse(a)
    }
}

/// `W diag(G₊, G₋) W†` with `W = (1/√2)[[𝟙, 𝟙], [i𝟙, −i𝟙]]`.
fn assemble_from_sectors(gp: &CMat, gm: &CMat) -> CMat {
    let n = gp.nrows();
    Mat::from_fn(2 * n, 2 * n, |i, j| {
        let (a, b) = (i % n, j % n);
        let (p, m) = (gp[(a, b)], gm[(a, b)]);
        match (i < n, j < n) {
            (true, true) | (false, false) => (p + m) * 0.5,
            (true, false) => -I * (p - m) * 0.5,
            (false, true) => I * (p - m) * 0.5,
        }
    })
}

/// `Σ = 𝕊⁻¹ 𝕌ᵀ (P ⊕ Γ) 𝕌* 𝕊⁻¹`.
pub fn amplification_matrix(t: &SvdTriple, cs: &CouplingSet) -> Result<CMat> {
    if t.s[0] <= 0.0 {
        return Err(Error::Singular {
            omega: t.omega,
            s_min: t.s[0],
        });
    }
    let d = cs.noise_matrix();
    let core = linalg::transpose(&t.u) * d * linalg::conj(&t.u);
    let m = t.s.len();
    let mut sig = Mat::from_fn(m, m, |i, j| core[(i, j)] / (t.s[i] * t.s[j]));
    // exact Hermitian symmetrization; the product above is Hermitian up to
    // rounding only
    for i in 0..m {
        sig[(i, i)] = c(sig[(i, i)].re, 0.0);
        for j in 0..i {
            let z = (sig[(i, j)] + sig[(j, i)].conj()) * 0.5;
            sig[(i, j)] = z;
            sig[(j, i)] = z.conj();
        }
    }
    Ok(sig)
}

/// `[[0, ω − ℍ], [(ω − ℍ)†, 0]]`.
pub fn hermitize(h: &DynamicalMatrix, omega: f64) -> CMat {
    let a = linalg::shifted(&h.h, omega);
    let m = a.nrows();
    Mat::from_fn(2 * m, 2 * m, |i, j| match (i < m, j < m) {
        (true, false) => a[(i, j - m)],
        (false, true) => a[(j, i - m)].conj(),
        _ => C64::new(0.0, 0.0),
    })
}

/// `s[n_edge] − s[n_edge − 1]`, or `s[0]` when there are no edge modes.
pub fn singular_gap(t: &SvdTriple, n_edge: usize) -> f64 {
    gap_of(&t.s, n_edge)
}

pub fn gap_of(s: &[f64], n_edge: usize) -> f64 {
    if n_edge == 0 {
        s[0]
    } else {
        s[n_edge] - s[n_edge - 1]
    }
}

/// Both gap conventions for `|ν| ≥ 2`: `(s[1] − s[0], s[|ν|] − s[|ν|−1])`.
pub fn singular_gaps(t: &SvdTriple, nu_abs: usize) -> (f64, f64) {
    (t.s[1] - t.s[0], gap_of(&t.s, nu_abs))
}

pub fn r_parameter(t: &SvdTriple) -> Result<f64> {
    r_of(&t.s)
}

pub fn r_of(s: &[f64]) -> Result<f64> {
    let den = s[0] + s[1];
    if den <= 0.0 {
        return Err(Error::Numerical("r-parameter of an all-zero spectrum".into()));
    }
    Ok((s[1] - s[0]) / den)
}
