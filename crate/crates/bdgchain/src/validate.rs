//! Self-checks of the numerical pipeline: an independent steady-state
//! solve of the second-moment equations and a suite of symmetry, duality
//! and perturbation invariants with measured residuals.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytics::{edge_solution, zero_singular_value};
use crate::correlations::{equal_time, freq_correlations, rank1_approximation};
use crate::green::{
    amplification_matrix, green_function, hermitize, resolvent, singular_values_at, svd_at, SINGULAR_THRESHOLD,
};
use crate::linalg::{self, c, CMat, C64, I};
use crate::models::{
    adiabatic_eliminate, build_model_i, build_model_ii_full, dynamical_matrix, CouplingSet, DynamicalMatrix, ModelIIParams,
    ModelIParams,
};
use crate::quadrature::QuadratureSpec;
use crate::{Error, Result};

/// Largest chain the dense `4N² × 4N²` moment solve accepts.
pub const MOMENT_MAX_SITES: usize = 12;

/// Right-hand sides of `d𝒩/dt`, `dℳ/dt` for `𝒩_ij = ⟨a_i† a_j⟩`,
/// `ℳ_ij = ⟨a_i† a_j†⟩`, written directly from `J, K, Γ, P`.
fn moment_rhs(cs: &CouplingSet, nm: &CMat, mm: &CMat, with_source: bool) -> (CMat, CMat) {
    let n = cs.n;
    let (j, k) = (&cs.j_mat, &cs.k_mat);
    let a = |i: usize, l: usize| 0.5 * (cs.p_mat[(i, l)] - cs.gamma_mat[(i, l)]);
    let src = if with_source { 1.0 } else { 0.0 };
    let dn = Mat::from_fn(n, n, |p, q| {
        let mut s = c(src * cs.p_mat[(p, q)], 0.0);
        for l in 0..n {
            s += I * j[(p, l)].conj() * nm[(l, q)] + I * k[(p, l)].conj() * mm[(l, q)].conj() + nm[(l, q)] * a(p, l);
            s += -I * j[(q, l)] * nm[(p, l)] - I * k[(q, l)] * mm[(p, l)] + nm[(p, l)] * a(q, l);
        }
        s
    });
    let dm = Mat::from_fn(n, n, |p, q| {
        let mut s = I * k[(p, q)].conj() * src;
        for l in 0..n {
            s += I * j[(p, l)].conj() * mm[(l, q)] + I * k[(p, l)].conj() * nm[(q, l)] + mm[(l, q)] * a(p, l);
            s += I * j[(q, l)].conj() * mm[(p, l)] + I * k[(q, l)].conj() * nm[(p, l)] + mm[(p, l)] * a(q, l);
        }
        s
    });
    (dn, dm)
}

fn unpack(x: &[f64], n: usize) -> (CMat, CMat) {
    let nn = n * n;
    let nm = Mat::from_fn(n, n, |p, q| c(x[p * n + q], x[nn + p * n + q]));
    let mm = Mat::from_fn(n, n, |p, q| c(x[2 * nn + p * n + q], x[3 * nn + p * n + q]));
    (nm, mm)
}

fn pack(nm: &CMat, mm: &CMat, out: &mut [f64]) {
    let n = nm.nrows();
    let nn = n * n;
    for p in 0..n {
        for q in 0..n {
            out[p * n + q] = nm[(p, q)].re;
            out[nn + p * n + q] = nm[(p, q)].im;
            out[2 * nn + p * n + q] = mm[(p, q)].re;
            out[3 * nn + p * n + q] = mm[(p, q)].im;
        }
    }
}

/// Steady state of the moment equations as one real linear system; the
/// equations are only real-linear because `ℳ*` appears in `d𝒩/dt`.
pub fn moment_steady_state(cs: &CouplingSet) -> Result<(CMat, CMat)> {
    let n = cs.n;
    if n > MOMENT_MAX_SITES {
        return Err(Error::InvalidParams(format!(
            "moment solve is dense in 4N^2 unknowns; N = {n} exceeds {MOMENT_MAX_SITES}"
        )));
    }
    let dim = 4 * n * n;
    let zero = linalg::zeros(n, n);
    let mut b = vec![0.0; dim];
    let (bn, bm) = moment_rhs(cs, &zero, &zero, true);
    pack(&bn, &bm, &mut b);
    let mut a = Mat::<f64>::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for k in 0..dim {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[k] = 1.0;
        let (nm, mm) = unpack(&e, n);
        let (dn, dm) = moment_rhs(cs, &nm, &mm, false);
        pack(&dn, &dm, &mut col);
        for r in 0..dim {
            a[(r, k)] = col[r];
        }
    }
    let rhs = Mat::from_fn(dim, 1, |r, _| -b[r]);
    let x = a.partial_piv_lu().solve(&rhs);
    let resid = (&a * &x - &rhs).norm_l2() / rhs.norm_l2().max(1e-300);
    if !resid.is_finite() || resid > 1e-8 {
        return Err(Error::Numerical(format!("moment system residual {resid:.2e}")));
    }
    let xs: Vec<f64> = (0..dim).map(|r| x[(r, 0)]).collect();
    Ok(unpack(&xs, n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }

    fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value > threshold,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub n_sites: usize,
    pub seed: u64,
    pub weyl_trials: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n_sites: 40,
            seed: 1,
            weyl_trials: 1000,
        }
    }
}

fn generic_model_i(n: usize) -> ModelIParams {
    ModelIParams {
        n_sites: n,
        j: 1.0,
        g_s: 0.4,
        g_c: 0.7,
        delta: 0.2,
        phi: 0.3,
        gamma: 4.5,
    }
}

fn suite_models(n: usize) -> Result<Vec<(&'static str, DynamicalMatrix)>> {
    let cells = (n / 2).max(3);
    Ok(vec![
        ("model I symmetric", dynamical_matrix(&build_model_i(&ModelIParams::symmetric(n, 5.0))?)),
        ("model I generic", dynamical_matrix(&build_model_i(&generic_model_i(n))?)),
        (
            "model II effective",
            dynamical_matrix(&adiabatic_eliminate(&ModelIIParams::reference(n, 3.0, 3.0, 30.0))?),
        ),
        ("model II full", dynamical_matrix(&build_model_ii_full(&ModelIIParams::reference(cells, 3.0, 3.0, 30.0))?)),
    ])
}

const OMEGAS: [f64; 4] = [0.1, 0.37, 0.8, 1.5];
const GREEN_OMEGAS: [f64; 5] = [0.1, 0.7, 1.5, 2.5, 4.0];
const MAX_CONDITION: f64 = 1e6;

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// `‖𝒩_quad − 𝒩_moment‖_F/‖𝒩_moment‖_F` and the same for `ℳ`.
pub fn moment_oracle_errors(cs: &CouplingSet, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    let (nm, mm) = moment_steady_state(cs)?;
    let et = equal_time(cs, quad)?;
    let rel = |a: &CMat, b: &CMat| linalg::frob(&(a - b)) / linalg::frob(b).max(1e-300);
    let en = rel(&et.n_mat, &nm);
    let em = if linalg::frob(&mm) == 0.0 { linalg::frob(&et.m_mat) } else { rel(&et.m_mat, &mm) };
    Ok((en, em))
}

/// Invariants at the configured size, each with its measured residual.
pub fn run_suite(cfg: &SuiteConfig) -> Result<ValidationReport> {
    let t0 = Instant::now();
    let n = cfg.n_sites;
    if !(4..=60).contains(&n) {
        return Err(Error::InvalidParams(format!("validation size must be in 4..=60, got {n}")));
    }
    let models = suite_models(n)?;
    let mut checks = Vec::new();

    checks.push(Check::below("PHS residual", max_of(models.iter().map(|(_, h)| h.phs_residual())), 1e-12));

    let mut sym = 0.0f64;
    let mut dual = 0.0f64;
    for (_, h) in &models {
        for &w in &OMEGAS {
            let a = singular_values_at(h, w)?;
            let b = singular_values_at(h, -w)?;
            sym = sym.max(max_of(a.iter().zip(&b).map(|(x, y)| (x - y).abs())));
        }
        let w = OMEGAS[1];
        let s = singular_values_at(h, w)?;
        let e = linalg::hermitian_eigenvalues(&hermitize(h, w))?;
        let m = s.len();
        // eigenvalues ascending: −s_max … −s_0, s_0 … s_max
        let d = (0..m).map(|i| (e[m + i] - s[i]).abs().max((e[m - 1 - i] + s[i]).abs()));
        dual = dual.max(max_of(d));
    }
    checks.push(Check::below("S(w) = S(-w)", sym, 1e-10));
    checks.push(Check::below("hermitization duality", dual, 1e-10));

    // The absolute residual of any backward-stable inverse is of order
    // ε‖ℍ‖/s₀, so it is checked where the condition number allows 1e-8; the
    // scale-free residual ‖(ω−ℍ)𝔾 − 𝟙‖·s₀/s_max is checked everywhere.
    let mut gres = 0.0f64;
    let mut grel = 0.0f64;
    let mut well_conditioned = 0;
    let mut sig_psd = f64::INFINITY;
    let mut n_psd = f64::INFINITY;
    for (_, h) in &models {
        for &w in &GREEN_OMEGAS {
            let t = svd_at(h, w)?;
            let smax = *t.s.last().unwrap();
            grel = grel.max(resolvent(h, w).residual(h) * t.s[0] / smax);
            if smax / t.s[0] <= MAX_CONDITION {
                gres = gres.max(green_function(&t)?.residual(h));
                well_conditioned += 1;
            }
            if t.s[0] < SINGULAR_THRESHOLD {
                continue;
            }
            let sig = amplification_matrix(&t, &h.source)?;
            let es = linalg::hermitian_eigenvalues(&sig)?;
            sig_psd = sig_psd.min(es[0] / es.last().unwrap().abs().max(1e-300));
            let f = freq_correlations(&t, &h.source)?;
            let en = linalg::hermitian_eigenvalues(&f.n_mat)?;
            n_psd = n_psd.min(en[0] / en.last().unwrap().abs().max(1e-300));
        }
    }
    if well_conditioned == 0 {
        return Err(Error::Numerical("no well-conditioned frequency for the Green residual".into()));
    }
    checks.push(Check::below("Green residual (cond <= 1e6)", gres, 1e-8));
    checks.push(Check::below("Green residual, relative", grel, 1e-12));
    checks.push(Check::above("Sigma PSD (min/max eigenvalue)", sig_psd, -1e-10));
    checks.push(Check::above("N(w) PSD (min/max eigenvalue)", n_psd, -1e-10));

    let h = &models[0].1;
    let t = svd_at(h, 0.0)?;
    let full = freq_correlations(&t, &h.source)?;
    let r1 = rank1_approximation(&t, &h.source)?;
    checks.push(Check::below("rank-1 error (gamma = 5, w = 0)", linalg::rel_frob_diff(&r1.corr.n_mat, &full.n_mat), 0.05));

    checks.push(Check::below("Weyl violations", weyl_violations(h, cfg.weyl_trials, cfg.seed)? as f64, 0.5));

    // fixed size: the closed form is first order in e^{−λN}
    let na = 20;
    let z = zero_singular_value(0.3, 5.0, na)?;
    let hs = dynamical_matrix(&build_model_i(&ModelIParams::symmetric(na, 5.0))?);
    let ts = svd_at(&hs, 0.3)?;
    checks.push(Check::below("s0 closed form (gamma = 5, w = 0.3)", (ts.s[0] - z.finite).abs() / ts.s[0], 1e-2));
    let ev = edge_solution(0.3, 5.0, na)?.v_vector();
    let ov: C64 = (0..2 * na).map(|i| ts.v[(i, 0)].conj() * ev[i]).sum();
    checks.push(Check::above("edge vector overlap", ov.norm(), 0.999));

    let quad = QuadratureSpec {
        rel_tol: 1e-10,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for cs in [
        build_model_i(&generic_model_i(4))?,
        adiabatic_eliminate(&ModelIIParams::reference(4, 3.0, 3.0, 30.0))?,
    ] {
        let (en, em) = moment_oracle_errors(&cs, &quad)?;
        worst = worst.max(en).max(em);
    }
    checks.push(Check::below("moment equations vs quadrature (N = 4)", worst, 1e-6));

    Ok(ValidationReport {
        checks,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Random complex perturbations `E` with `‖E‖₂` of order 0.1; counts trials
/// where some singular value of `ω − ℍ − E` moved by more than `‖E‖₂`.
pub fn weyl_violations(h: &DynamicalMatrix, trials: usize, seed: u64) -> Result<usize> {
    let m = h.h.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    let scale = 0.05 / (m as f64).sqrt();
    for t in 0..trials {
        let omega = -1.5 + 3.0 * (t as f64 + 0.5) / trials as f64;
        let e = Mat::from_fn(m, m, |_, _| {
            let (x, y): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            c(scale * x, scale * y)
        });
        let a = linalg::shifted(&h.h, omega);
        let s0 = linalg::singular_values_ascending(&a)?;
        let s1 = linalg::singular_values_ascending(&(&a - &e))?;
        let bound = linalg::spectral_norm(&e)?;
        let shift = max_of(s0.iter().zip(&s1).map(|(x, y)| (x - y).abs()));
        if shift > bound * (1.0 + 1e-12) + 1e-14 {
            bad += 1;
        }
    }
    Ok(bad)
}


#[cfg(test)]
mod suite_tests {
    use super::*;

    #[test]
    fn suite_passes_at_moderate_size() {
        let rep = run_suite(&SuiteConfig {
            n_sites: 20,
            seed: 7,
            weyl_trials: 100,
        })
        .unwrap();
        for c in &rep.checks {
            println!("{:45} {:.3e} (threshold {:.1e}) {}", c.name, c.value, c.threshold, c.passed);
        }
        assert!(rep.all_passed());
    }

    #[test]
    fn size_outside_range_is_rejected() {
        assert!(run_suite(&SuiteConfig {
            n_sites: 61,
            ..Default::default()
        })
        .is_err());
    }
}
