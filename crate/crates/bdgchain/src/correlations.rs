//! Frequency-resolved and equal-time two-point correlations, their
//! normalized forms, the LRO parameter and spatial-decay fits.
//!
//! With `𝔾 = (ω − ℍ)⁻¹` and noise `D = P ⊕ Γ`, `𝔾*(ω) D 𝔾ᵀ(ω)` has
//! `N(ω)` as its particle-particle block and `M(ω)` as its particle-hole
//! block; integrating over `ω/2π` gives `𝒞` with blocks `𝒩`, `ℳ`.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::green::{amplification_matrix, resolvent, SvdTriple};
use crate::linalg::{self, c, CMat, C64};
use crate::models::{dynamical_matrix, CouplingSet, DynamicalMatrix};
use crate::quadrature::{integrate_line, QuadratureReport, QuadratureSpec};
use crate::{Error, Result};

/// Sites with `N_ii` below this are dropped from the normalized matrices.
pub const NORMALIZATION_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct FreqCorrelations {
    pub omega: f64,
    pub n_mat: CMat,
    pub m_mat: CMat,
    pub n_bar: CMat,
    pub m_bar: CMat,
    /// Sites excluded from normalization (rows and columns set to zero).
    pub excluded: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct EqualTimeCorrelations {
    pub n_mat: CMat,
    pub m_mat: CMat,
    pub n_bar: CMat,
    pub m_bar: CMat,
    pub excluded: Vec<usize>,
    /// The full `2N × 2N` integral.
    pub c_full: CMat,
    pub report: QuadratureReport,
}

/// `N̄_ij = N_ij/√(N_ii N_jj)`, same denominator for `M̄`.
pub fn normalize(n_mat: &CMat, m_mat: &CMat) -> (CMat, CMat, Vec<usize>) {
    let n = n_mat.nrows();
    let d: Vec<f64> = (0..n).map(|i| n_mat[(i, i)].re).collect();
    let excluded: Vec<usize> = (0..n).filter(|&i| !(d[i] >= NORMALIZATION_FLOOR)).collect();
    let ok = |i: usize| d[i] >= NORMALIZATION_FLOOR;
    let zero = C64::new(0.0, 0.0);
    let nb = Mat::from_fn(n, n, |i, j| {
        if !ok(i) || !ok(j) {
            zero
        } else if i == j {
            c(1.0, 0.0)
        } else {
            n_mat[(i, j)] / (d[i] * d[j]).sqrt()
        }
    });
    let mb = Mat::from_fn(n, n, |i, j| if ok(i) && ok(j) { m_mat[(i, j)] / (d[i] * d[j]).sqrt() } else { zero });
    (nb, mb, excluded)
}

fn from_blocks(omega: f64, c_full: &CMat) -> FreqCorrelations {
    let n = c_full.nrows() / 2;
    let n_mat = linalg::block(c_full, 0, 0, n, n);
    let m_mat = linalg::block(c_full, 0, n, n, n);
    let (n_bar, m_bar, excluded) = normalize(&n_mat, &m_mat);
    FreqCorrelations {
        omega,
        n_mat,
        m_mat,
        n_bar,
        m_bar,
        excluded,
    }
}

/// `N = 𝚅* Σ 𝚅ᵀ`, `M = 𝚅* Σ 𝚅̄ᵀ` from a full SVD.
pub fn freq_correlations(t: &SvdTriple, cs: &CouplingSet) -> Result<FreqCorrelations> {
    let sig = amplification_matrix(t, cs)?;
    let (vp, vh) = (t.v_particle(), t.v_hole());
    let left = linalg::conj(&vp) * &sig;
    let n_mat = &left * vp.transpose();
    let m_mat = &left * vh.transpose();
    let (n_bar, m_bar, excluded) = normalize(&n_mat, &m_mat);
    Ok(FreqCorrelations {
        omega: t.omega,
        n_mat,
        m_mat,
        n_bar,
        m_bar,
        excluded,
    })
}

/// `𝔾* D 𝔾ᵀ` at one frequency, with `𝔾` from [`resolvent`].
pub fn spectral_density(h: &DynamicalMatrix, omega: f64) -> CMat {
    let g = resolvent(h, omega).g_full;
    let d = h.source.noise_matrix();
    linalg::conj(&g) * d * g.transpose()
}

/// Same quantities as [`freq_correlations`] without an SVD.
pub fn freq_correlations_direct(h: &DynamicalMatrix, omega: f64) -> FreqCorrelations {
    from_blocks(omega, &spectral_density(h, omega))
}

#[derive(Clone, Debug)]
pub struct Rank1 {
    pub corr: FreqCorrelations,
    /// `s[0]/s[1]`; above 0.1 the approximation is not meaningful.
    pub ratio: f64,
    pub warning: Option<String>,
}

/// `N_jl ≈ 𝚅*_{j0} Σ_00 𝚅_{l0}` and the analogous `M`.
pub fn rank1_approximation(t: &SvdTriple, cs: &CouplingSet) -> Result<Rank1> {
    let sig = amplification_matrix(t, cs)?;
    let n = t.n();
    let s00 = sig[(0, 0)];
    let n_mat = Mat::from_fn(n, n, |j, l| t.v[(j, 0)].conj() * s00 * t.v[(l, 0)]);
    let m_mat = Mat::from_fn(n, n, |j, l| t.v[(j, 0)].conj() * s00 * t.v[(n + l, 0)]);
    let ratio = t.s[0] / t.s[1];
    let warning = (ratio > 0.1).then(|| format!("s[0]/s[1] = {ratio:.3}: no isolated zero singular value"));
    let (n_bar, m_bar, excluded) = normalize(&n_mat, &m_mat);
    Ok(Rank1 {
        corr: FreqCorrelations {
            omega: t.omega,
            n_mat,
            m_mat,
            n_bar,
            m_bar,
            excluded,
        },
        ratio,
        warning,
    })
}

/// `𝒞 = ∫ dω/2π 𝔾* (P ⊕ Γ) 𝔾ᵀ`.
pub fn equal_time(cs: &CouplingSet, quad: &QuadratureSpec) -> Result<EqualTimeCorrelations> {
    let h = dynamical_matrix(cs);
    h.require_stable()?;
    let n = cs.n;
    let f = |w: f64| spectral_density(&h, w);
    let omega_c = match quad.omega_c {
        Some(w) => w,
        None => {
            let ev = linalg::eigenvalues(&h.h)?;
            let rho = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
            cutoff(&f, 4.0 * rho, quad.tail_tol)
        }
    };
    let n_norm = |m: &CMat| linalg::frob(&linalg::block(m, 0, 0, n, n));
    let (total, report) = integrate_line(&f, quad, omega_c, n_norm)?;
    let c_full = linalg::scale(&total, c(1.0 / (2.0 * std::f64::consts::PI), 0.0));
    let n_mat = linalg::block(&c_full, 0, 0, n, n);
    let m_mat = linalg::block(&c_full, 0, n, n, n);
    let (n_bar, m_bar, excluded) = normalize(&n_mat, &m_mat);
    Ok(EqualTimeCorrelations {
        n_mat,
        m_mat,
        n_bar,
        m_bar,
        excluded,
        c_full,
        report,
    })
}

/// Smallest `Ω_c = 2^k Ω₀` at which the integrand trace has fallen below
/// `tail_tol` of its peak on `[−Ω₀, Ω₀]`.
fn cutoff<F: Fn(f64) -> CMat + Sync>(f: &F, omega0: f64, tail_tol: f64) -> f64 {
    let tr = |m: &CMat| (0..m.nrows()).map(|i| m[(i, i)].re).sum::<f64>().abs();
    let probes: Vec<f64> = (0..=128).map(|i| -omega0 + 2.0 * omega0 * i as f64 / 128.0).collect();
    let peak = probes.par_iter().map(|&w| tr(&f(w))).reduce(|| 0.0, f64::max);
    let mut wc = omega0;
    for _ in 0..40 {
        if tr(&f(wc)).max(tr(&f(-wc))) <= tail_tol * peak {
            break;
        }
        wc *= 2.0;
    }
    wc
}

impl EqualTimeCorrelations {
    /// Smallest eigenvalue of the Hermitian part of `𝒞`.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        linalg::min_hermitian_part_eig(&self.c_full)
    }
}

/// `Λ = Σ_ij |X_ij| / N²`.
pub fn lro_parameter(corr: &CMat) -> f64 {
    let n = corr.nrows();
    let mut s = 0.0;
    for j in 0..corr.ncols() {
        for i in 0..n {
            s += corr[(i, j)].norm();
        }
    }
    s / (n * corr.ncols()) as f64
}

/// Second finite differences of a uniformly sampled curve; one-sided
/// second-order stencils at the two ends.
pub fn lro_curvature(values: &[f64], dx: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 5 {
        return Err(Error::InvalidParams(format!("curvature needs >= 5 points, got {n}")));
    }
    let h2 = dx * dx;
    let f = values;
    let mut out = vec![0.0; n];
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    Exponential,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `log p ≈ a − d/ξ`.
    pub xi: f64,
    pub a_exp: f64,
    pub residual_exp: f64,
    /// `log p ≈ a − d²/(2σ²)`.
    pub sigma2: f64,
    pub a_gauss: f64,
    pub residual_gauss: f64,
    pub best: DecayModel,
    pub points: usize,
}

/// Least-squares fits of `log profile[j]` against `d = |j − center|` for
/// `2 ≤ d ≤ len/2`, on both sides of the center.
pub fn classify_decay(profile: &[f64], center: usize) -> Result<DecayFit> {
    let len = profile.len();
    let dmax = len / 2;
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .filter_map(|(j, &p)| {
            let d = j.abs_diff(center);
            (d >= 2 && d <= dmax && p > 0.0 && p.is_finite()).then(|| (d as f64, p.ln()))
        })
        .collect();
    if pts.len() < 4 {
        return Err(Error::InvalidParams(format!("{} usable points, need 4", pts.len())));
    }
    let (a1, b1, r1) = line_fit(pts.iter().map(|&(d, y)| (d, y)));
    let (a2, b2, r2) = line_fit(pts.iter().map(|&(d, y)| (d * d, y)));
    let xi = if b1 < 0.0 { -1.0 / b1 } else { f64::INFINITY };
    let sigma2 = if b2 < 0.0 { -0.5 / b2 } else { f64::INFINITY };
    Ok(DecayFit {
        xi,
        a_exp: a1,
        residual_exp: r1,
        sigma2,
        a_gauss: a2,
        residual_gauss: r2,
        best: if r1 <= r2 { DecayModel::Exponential } else { DecayModel::Gaussian },
        points: pts.len(),
    })
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b, Σ residual²)`.
fn line_fit(it: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64, f64) {
    let n = it.clone().count() as f64;
    let (sx, sy) = it.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = it
        .clone()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (x - mx), b + (x - mx) * (y - my)));
    let b = sxy / sxx;
    let a = my - b * mx;
    let r = it.map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (a, b, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::svd_at;
    use crate::models::{build_model_i, ModelIParams};
    use proptest::prelude::*;

    fn sym(n: usize, gamma: f64) -> CouplingSet {
        build_model_i(&ModelIParams::symmetric(n, gamma)).unwrap()
    }

    fn vacuum(n: usize) -> CouplingSet {
        let p = ModelIParams {
            n_sites: n,
            j: 1.0,
            g_s: 0.0,
            g_c: 0.0,
            delta: 0.3,
            phi: 0.4,
            gamma: 2.0,
        };
        build_model_i(&p).unwrap()
    }

    #[test]
    fn vacuum_has_no_excitations() {
        let cs = vacuum(5);
        let h = dynamical_matrix(&cs);
        let f = freq_correlations(&svd_at(&h, 0.4).unwrap(), &cs).unwrap();
        assert!(linalg::frob(&f.n_mat) < 1e-14);
        assert_eq!(f.excluded.len(), 5);
        let et = equal_time(&cs, &QuadratureSpec::default()).unwrap();
        assert!(linalg::frob(&et.n_mat) < 1e-12);
        assert!(linalg::frob(&et.m_mat) < 1e-12);
    }

    #[test]
    fn svd_and_direct_routes_agree() {
        let cs = sym(20, 5.0);
        let h = dynamical_matrix(&cs);
        let a = freq_correlations(&svd_at(&h, 0.35).unwrap(), &cs).unwrap();
        let b = freq_correlations_direct(&h, 0.35);
        assert!(linalg::rel_frob_diff(&a.n_mat, &b.n_mat) < 1e-9);
        assert!(linalg::rel_frob_diff(&a.m_mat, &b.m_mat) < 1e-9);
    }

    #[test]
    fn freq_invariants() {
        let cs = sym(30, 4.5);
        let h = dynamical_matrix(&cs);
        let f = freq_correlations(&svd_at(&h, 0.6).unwrap(), &cs).unwrap();
        assert!(linalg::hermiticity_residual(&f.n_mat) < 1e-10 * linalg::frob(&f.n_mat));
        assert!(linalg::hermitian_eigenvalues(&f.n_mat).unwrap()[0] > -1e-10 * linalg::frob(&f.n_mat));
        for i in 0..30 {
            assert_eq!(f.n_bar[(i, i)], c(1.0, 0.0));
            for j in 0..30 {
                assert!(f.n_bar[(i, j)].norm() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn plateau_and_anomalous_weight_in_the_bulk() {
        let cs = sym(100, 5.0);
        let h = dynamical_matrix(&cs);
        let f = freq_correlations(&svd_at(&h, 0.0).unwrap(), &cs).unwrap();
        // away from the far edge the plateau is flat and |M̄| = |N̄|
        for j in 2..100 {
            assert!(f.n_bar[(10, j)].norm() > 0.9, "j = {j}");
        }
        for j in 10..100 {
            assert!((f.m_bar[(10, j)].norm() - f.n_bar[(10, j)].norm()).abs() < 0.02, "j = {j}");
        }
        // the two sites at the far edge see the bulk, not only the edge mode
        assert!(f.n_bar[(10, 0)].norm() < 0.75);
    }

    #[test]
    fn rank1_in_both_phases() {
        let cs = sym(100, 5.0);
        let h = dynamical_matrix(&cs);
        let t = svd_at(&h, 0.0).unwrap();
        let full = freq_correlations(&t, &cs).unwrap();
        let r = rank1_approximation(&t, &cs).unwrap();
        assert!(linalg::rel_frob_diff(&r.corr.n_mat, &full.n_mat) < 0.05);
        assert!(r.warning.is_none());

        let cs8 = sym(100, 8.0);
        let h8 = dynamical_matrix(&cs8);
        let t8 = svd_at(&h8, 0.0).unwrap();
        let full8 = freq_correlations(&t8, &cs8).unwrap();
        let r8 = rank1_approximation(&t8, &cs8).unwrap();
        assert!(linalg::rel_frob_diff(&r8.corr.n_mat, &full8.n_mat) > 0.5);
        assert!(r8.warning.is_some());
    }

    #[test]
    fn rank1_is_the_leading_term_of_sigma() {
        let cs = sym(10, 5.0);
        let t = svd_at(&dynamical_matrix(&cs), 0.2).unwrap();
        let sig = amplification_matrix(&t, &cs).unwrap();
        let mut s1 = linalg::zeros(20, 20);
        s1[(0, 0)] = sig[(0, 0)];
        let vp = t.v_particle();
        let n_direct = linalg::conj(&vp) * &s1 * vp.transpose();
        let r = rank1_approximation(&t, &cs).unwrap();
        assert!(linalg::rel_frob_diff(&r.corr.n_mat, &n_direct) < 1e-12);
    }

    #[test]
    fn lro_parameter_limits() {
        let id = linalg::identity(7);
        assert!((lro_parameter(&id) - 1.0 / 7.0).abs() < 1e-15);
        let ones = Mat::from_fn(6, 6, |i, j| C64::from_polar(1.0, 0.3 * (i as f64 - j as f64)));
        assert!((lro_parameter(&ones) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn curvature_of_polynomials() {
        let x: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let q: Vec<f64> = x.iter().map(|x| x * x).collect();
        let l: Vec<f64> = x.iter().map(|x| 3.0 * x - 1.0).collect();
        for v in lro_curvature(&q, 0.2).unwrap() {
            assert!((v - 2.0).abs() < 1e-8);
        }
        for v in lro_curvature(&l, 0.2).unwrap() {
            assert!(v.abs() < 1e-8);
        }
        assert!(lro_curvature(&q[..4], 0.2).is_err());
    }

    #[test]
    fn decay_models_on_synthetic_profiles() {
        let e: Vec<f64> = (0..60).map(|d| (-(d as f64) / 3.0).exp()).collect();
        let fe = classify_decay(&e, 0).unwrap();
        assert_eq!(fe.best, DecayModel::Exponential);
        assert!((fe.xi - 3.0).abs() < 1e-6);
        let g: Vec<f64> = (0..40).map(|d| (-(d * d) as f64 / 20.0).exp()).collect();
        let fg = classify_decay(&g, 0).unwrap();
        assert_eq!(fg.best, DecayModel::Gaussian);
        assert!((fg.sigma2 - 10.0).abs() < 1e-6);
        assert!(classify_decay(&[1.0, 0.5, 0.2, 0.1, 0.05], 0).is_err());
    }

    #[test]
    fn lro_window_at_gamma5() {
        let cs = sym(80, 5.0);
        let h = dynamical_matrix(&cs);
        let lam = |w: f64| lro_parameter(&freq_correlations_direct(&h, w).n_bar);
        for &w in &[0.0, 0.5, 1.0, 1.2] {
            assert!(lam(w) > 0.8, "inside {w}: {}", lam(w));
        }
        for &w in &[1.8, 2.0, 3.0] {
            assert!(lam(w) < 0.3, "outside {w}: {}", lam(w));
        }
    }

    #[test]
    fn curvature_peaks_at_the_critical_frequency() {
        let cs = sym(80, 5.0);
        let h = dynamical_matrix(&cs);
        let dx = 0.02;
        let ws: Vec<f64> = (0..76).map(|i| 0.8 + dx * i as f64).collect();
        let lam: Vec<f64> = ws.iter().map(|&w| lro_parameter(&freq_correlations_direct(&h, w).n_bar)).collect();
        let curv = lro_curvature(&lam, dx).unwrap();
        let (imax, _) = curv[1..curv.len() - 1]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let w_star = ws[imax + 1];
        assert!((w_star - 7f64.sqrt() / 2.0).abs() < 0.1, "{w_star}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn normalized_entries_are_bounded(n in 3usize..12, gamma in 2.5f64..9.0, omega in -2.0f64..2.0) {
            let cs = sym(n, gamma);
            let f = freq_correlations_direct(&dynamical_matrix(&cs), omega);
            for i in 0..n {
                prop_assert!((f.n_bar[(i, i)] - c(1.0, 0.0)).norm() == 0.0);
                for j in 0..n {
                    prop_assert!(f.n_bar[(i, j)].norm() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
