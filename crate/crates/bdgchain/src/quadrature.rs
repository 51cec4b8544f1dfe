//! Adaptive composite Gauss–Legendre integration of matrix-valued functions
//! over the whole real line.
//!
//! `[−Ω_c, Ω_c]` is split into panels that are bisected where the estimated
//! error is largest. The two tails `|ω| > Ω_c` are not dropped: they are
//! mapped to `t ∈ (0, 1]` by `ω = ±Ω_c/t`, on which an integrand decaying
//! like `1/ω²` is bounded, and refined like any other panel.

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub tail_tol: f64,
    /// Fixed cutoff; chosen from the integrand when absent.
    pub omega_c: Option<f64>,
    pub nodes_per_panel: usize,
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            tail_tol: 1e-8,
            omega_c: None,
            nodes_per_panel: 32,
            initial_panels: 16,
            max_panels: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    pub omega_c: f64,
    pub panels: usize,
    pub evaluations: usize,
    /// Frobenius norm of the change produced by the last round of panel
    /// halving, summed over panels.
    pub estimated_error: f64,
}

#[derive(Clone, Copy, Debug)]
enum Domain {
    /// `ω ∈ [a, b]`.
    Line(f64, f64),
    /// `ω = sign·Ω_c/t`, `t ∈ [a, b] ⊂ (0, 1]`.
    Tail { sign: f64, a: f64, b: f64 },
}

impl Domain {
    fn halves(self) -> (Domain, Domain) {
        match self {
            Domain::Line(a, b) => {
                let m = 0.5 * (a + b);
                (Domain::Line(a, m), Domain::Line(m, b))
            }
            Domain::Tail { sign, a, b } => {
                let m = 0.5 * (a + b);
                (Domain::Tail { sign, a, b: m }, Domain::Tail { sign, a: m, b })
            }
        }
    }
}

struct Leaf {
    domain: Domain,
    value: CMat,
    halves: (CMat, CMat),
    err: f64,
}

pub struct Integrator {
    rule: Vec<(f64, f64)>,
    omega_c: f64,
}

impl Integrator {
    pub fn new(nodes: usize, omega_c: f64) -> Result<Self> {
        let gl = GaussLegendre::new(nodes).map_err(|e| Error::InvalidParams(format!("Gauss-Legendre rule: {e}")))?;
        Ok(Self {
            rule: gl.as_node_weight_pairs().to_vec(),
            omega_c,
        })
    }

    fn panel<F>(&self, f: &F, d: Domain) -> CMat
    where
        F: Fn(f64) -> CMat + Sync,
    {
        let mut acc: Option<CMat> = None;
        for &(x, w) in &self.rule {
            let (omega, jac) = match d {
                Domain::Line(a, b) => (0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a)),
                Domain::Tail { sign, a, b } => {
                    let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                    (sign * self.omega_c / t, 0.5 * (b - a) * self.omega_c / (t * t))
                }
            };
            let v = linalg::scale(&f(omega), linalg::c(w * jac, 0.0));
            acc = Some(match acc {
                None => v,
                Some(a) => a + v,
            });
        }
        acc.expect("rule has nodes")
    }

    fn leaf<F>(&self, f: &F, d: Domain, coarse: CMat) -> Leaf
    where
        F: Fn(f64) -> CMat + Sync,
    {
        let (l, r) = d.halves();
        let (vl, vr) = (self.panel(f, l), self.panel(f, r));
        let value = &vl + &vr;
        let err = linalg::frob(&(&value - &coarse));
        Leaf {
            domain: d,
            value,
            halves: (vl, vr),
            err,
        }
    }
}

/// `∫_{−∞}^{∞} f(ω) dω`, refined until the summed panel error is below
/// `rel_tol · ‖norm_of(result)‖`.
pub fn integrate_line<F, G>(f: &F, spec: &QuadratureSpec, omega_c: f64, norm_of: G) -> Result<(CMat, QuadratureReport)>
where
    F: Fn(f64) -> CMat + Sync,
    G: Fn(&CMat) -> f64,
{
    if !(omega_c > 0.0) || spec.initial_panels == 0 {
        return Err(Error::InvalidParams("quadrature needs omega_c > 0 and at least one panel".into()));
    }
    let q = Integrator::new(spec.nodes_per_panel, omega_c)?;
    let np = spec.initial_panels;
    let mut domains: Vec<Domain> = (0..np)
        .map(|i| {
            let a = -omega_c + 2.0 * omega_c * i as f64 / np as f64;
            let b = -omega_c + 2.0 * omega_c * (i + 1) as f64 / np as f64;
            Domain::Line(a, b)
        })
        .collect();
    domains.push(Domain::Tail {
        sign: -1.0,
        a: 0.0,
        b: 1.0,
    });
    domains.push(Domain::Tail {
        sign: 1.0,
        a: 0.0,
        b: 1.0,
    });
    let mut leaves: Vec<Leaf> = domains
        .par_iter()
        .map(|&d| {
            let coarse = q.panel(f, d);
            q.leaf(f, d, coarse)
        })
        .collect();
    let per_panel = spec.nodes_per_panel;
    let mut evaluations = leaves.len() * 3 * per_panel;

    loop {
        let total = sum(&leaves);
        let err: f64 = leaves.iter().map(|l| l.err).sum();
        let scale = norm_of(&total);
        if err <= spec.rel_tol * scale || scale == 0.0 {
            let report = QuadratureReport {
                omega_c,
                panels: leaves.len(),
                evaluations,
                estimated_error: err,
            };
            return Ok((total, report));
        }
        if leaves.len() >= spec.max_panels {
            return Err(Error::Quadrature(format!(
                "{} panels, error {err:.3e} vs target {:.3e}",
                leaves.len(),
                spec.rel_tol * scale
            )));
        }
        // split the worst leaves carrying half of the total error
        let mut order: Vec<usize> = (0..leaves.len()).collect();
        order.sort_by(|&a, &b| leaves[b].err.total_cmp(&leaves[a].err));
        let mut picked = Vec::new();
        let mut acc = 0.0;
        for &i in &order {
            picked.push(i);
            acc += leaves[i].err;
            if acc >= 0.5 * err || leaves.len() + picked.len() >= spec.max_panels {
                break;
            }
        }
        picked.sort_unstable();
        let mut parents = Vec::with_capacity(picked.len());
        for &i in picked.iter().rev() {
            parents.push(leaves.swap_remove(i));
        }
        parents.reverse();
        let children: Vec<Leaf> = parents
            .into_par_iter()
            .flat_map_iter(|p| {
                let (dl, dr) = p.domain.halves();
                let (cl, cr) = p.halves;
                [q.leaf(f, dl, cl), q.leaf(f, dr, cr)]
            })
            .collect();
        evaluations += children.len() * 2 * per_panel;
        leaves.extend(children);
        leaves.sort_by(|a, b| {
            let (ka, kb) = (key(a.domain), key(b.domain));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
    }
}

// deterministic summation order, independent of refinement history
fn key(d: Domain) -> (u8, f64) {
    match d {
        Domain::Tail { sign, a, .. } if sign < 0.0 => (0, a),
        Domain::Line(a, _) => (1, a),
        Domain::Tail { a, .. } => (2, -a),
    }
}

fn sum(leaves: &[Leaf]) -> CMat {
    let mut it = leaves.iter();
    let mut acc = it.next().expect("at least one panel").value.clone();
    for l in it {
        acc += &l.value;
    }
    acc
}
