//! Closed forms for the symmetric Model I chain (`J = g_s = g_c = g = 1`,
//! `φ = π/2`, `Δ = 0`): edge singular vectors, the zero singular value,
//! the phase diagram and the equal-time Gaussian profile.
//!
//! In the `𝒴`-sector basis `ω − ℍ` splits into two bidiagonal blocks. The
//! `+` block has a right near-null vector growing as `β₊ˡ` with
//! `β₊⁻¹ = (γ−2)/4 − iω/2`; the `−` block one growing as `r₋ˡ` with
//! `r₋ = −(γ+2)/4 + iω/2`. Writing either ratio as `e^{λ + ik̃}`, the
//! vector is localized at the right end when `λ > 0` and at the left end
//! when `λ < 0`.

use serde::{Deserialize, Serialize};

use crate::linalg::{c, C64, I};
use crate::models::ModelIParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Right edge, present for `2 < γ < 6` near `ω = 0`.
    Plus,
    /// Left edge, present only for `γ < 2`.
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRegion {
    BothEdges,
    SingleEdgeTopological,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSolution {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub k_plus: f64,
    pub k_minus: f64,
    /// `A` of the selected channel; includes the `1/√2` of the Nambu split.
    pub amplitude_a: f64,
    pub phi_u: f64,
    pub n: usize,
    pub omega: f64,
    pub gamma: f64,
    pub channel: Channel,
}

fn ellipse(gamma_shift: f64, omega: f64) -> f64 {
    (gamma_shift * gamma_shift + 4.0 * omega * omega) / 16.0
}

/// `λ⁺ = −½ ln[((γ−2)² + 4ω²)/16]`.
pub fn lambda_plus(omega: f64, gamma: f64) -> f64 {
    -0.5 * ellipse(gamma - 2.0, omega).ln()
}

/// `λ⁻ = +½ ln[((γ+2)² + 4ω²)/16]`.
pub fn lambda_minus(omega: f64, gamma: f64) -> f64 {
    0.5 * ellipse(gamma + 2.0, omega).ln()
}

/// `k̃⁺ = arctan(2ω/(γ−2))`, taken as `arg β₊`.
pub fn k_plus(omega: f64, gamma: f64) -> f64 {
    (2.0 * omega).atan2(gamma - 2.0)
}

/// `arg r₋`, equal to `π − arctan(2ω/(γ+2))` for `ω ≥ 0`.
pub fn k_minus(omega: f64, gamma: f64) -> f64 {
    (0.5 * omega).atan2(-(gamma + 2.0) / 4.0)
}

/// `A = (1/√2) √((e^{2λ}−1)/(e^{2λN}−1))`; real for either sign of `λ`.
pub fn amplitude(lambda: f64, n: usize) -> f64 {
    let num = (2.0 * lambda).exp_m1();
    let den = (2.0 * lambda * n as f64).exp_m1();
    (0.5 * num / den).sqrt()
}

pub fn phase_region(omega: f64, gamma: f64) -> PhaseRegion {
    let plus = ellipse(gamma - 2.0, omega) <= 1.0;
    let minus = ellipse(gamma + 2.0, omega) <= 1.0;
    match (plus, minus) {
        (true, true) => PhaseRegion::BothEdges,
        (true, false) => PhaseRegion::SingleEdgeTopological,
        _ => PhaseRegion::None,
    }
}

/// The `+` channel solution; the edge vector has to be normalizable.
pub fn edge_solution(omega: f64, gamma: f64, n: usize) -> Result<EdgeSolution> {
    edge_solution_channel(omega, gamma, n, Channel::Plus)
}

pub fn edge_solution_channel(omega: f64, gamma: f64, n: usize, channel: Channel) -> Result<EdgeSolution> {
    if n < 2 || !omega.is_finite() || !gamma.is_finite() {
        return Err(Error::InvalidParams(format!("edge solution needs n >= 2, got n = {n}")));
    }
    let (lp, lm) = (lambda_plus(omega, gamma), lambda_minus(omega, gamma));
    let (lambda, ok, shift) = match channel {
        Channel::Plus => (lp, lp > 0.0, gamma - 2.0),
        Channel::Minus => (lm, lm < 0.0, gamma + 2.0),
    };
    if !ok {
        return Err(Error::Domain(format!(
            "no normalizable {channel:?} edge vector at omega = {omega}, gamma = {gamma}"
        )));
    }
    Ok(EdgeSolution {
        lambda_plus: lp,
        lambda_minus: lm,
        k_plus: k_plus(omega, gamma),
        k_minus: k_minus(omega, gamma),
        amplitude_a: amplitude(lambda, n),
        // arg of the boundary residual ω + i·shift/2, so that 𝚄†(ω−ℍ)𝚅 = +S₀
        phi_u: (0.5 * shift).atan2(omega),
        n,
        omega,
        gamma,
        channel,
    })
}

impl EdgeSolution {
    pub fn lambda(&self) -> f64 {
        match self.channel {
            Channel::Plus => self.lambda_plus,
            Channel::Minus => self.lambda_minus,
        }
    }

    pub fn k(&self) -> f64 {
        match self.channel {
            Channel::Plus => self.k_plus,
            Channel::Minus => self.k_minus,
        }
    }

    // hole component: +i for the + sector, −i for the − sector
    fn hole_factor(&self) -> C64 {
        match self.channel {
            Channel::Plus => I,
            Channel::Minus => -I,
        }
    }

    /// Particle half `𝚅_l = A e^{(ik̃+λ)l}`.
    pub fn v_particle(&self) -> Vec<C64> {
        let (a, lam, k) = (self.amplitude_a, self.lambda(), self.k());
        (0..self.n).map(|l| C64::from_polar(a * (lam * l as f64).exp(), k * l as f64)).collect()
    }

    /// Particle half `𝚄_l = e^{iφ_U} A e^{ik̃l} e^{λ(N−1−l)}`.
    pub fn u_particle(&self) -> Vec<C64> {
        let (a, lam, k) = (self.amplitude_a, self.lambda(), self.k());
        let top = (self.n - 1) as f64;
        (0..self.n)
            .map(|l| C64::from_polar(a * (lam * (top - l as f64)).exp(), self.phi_u + k * l as f64))
            .collect()
    }

    fn nambu(&self, p: Vec<C64>) -> Vec<C64> {
        let h = self.hole_factor();
        let hole: Vec<C64> = p.iter().map(|&z| h * z).collect();
        p.into_iter().chain(hole).collect()
    }

    /// Unit-norm `2N` vector `(𝚅, ±i𝚅)`.
    pub fn v_vector(&self) -> Vec<C64> {
        self.nambu(self.v_particle())
    }

    pub fn u_vector(&self) -> Vec<C64> {
        self.nambu(self.u_particle())
    }

    /// `2A² e^{λ(N−1)} |ω + i·shift/2|`, the projection `𝚄†(ω−ℍ)𝚅`.
    pub fn s0(&self) -> f64 {
        let shift = match self.channel {
            Channel::Plus => self.gamma - 2.0,
            Channel::Minus => self.gamma + 2.0,
        };
        let a = self.amplitude_a;
        2.0 * a * a * (self.lambda() * (self.n - 1) as f64).exp() * c(self.omega, 0.5 * shift).norm()
    }

    /// `N → ∞` limit `2(1 − e^{−2|λ|}) e^{−|λ|N}`.
    pub fn s0_asymptotic(&self) -> f64 {
        let lam = self.lambda().abs();
        2.0 * (-(2.0 * lam)).exp_m1().abs() * (-lam * self.n as f64).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSingularValue {
    pub finite: f64,
    pub asymptotic: f64,
}

/// Magnitude of `2e^{−λ}((1−e^{2λ})/(1−e^{2λN}))e^{λ(N−1)}` and its
/// large-`N` form, for the right-edge channel.
pub fn zero_singular_value(omega: f64, gamma: f64, n: usize) -> Result<ZeroSingularValue> {
    let e = edge_solution(omega, gamma, n)?;
    let lam = e.lambda();
    let nf = n as f64;
    let ratio = (2.0 * lam).exp_m1() / (2.0 * lam * nf).exp_m1();
    let finite = (2.0 * (-lam).exp() * ratio * (lam * (nf - 1.0)).exp()).abs();
    Ok(ZeroSingularValue {
        finite,
        asymptotic: e.s0_asymptotic(),
    })
}

/// `√(2√(lj)/(l+j)) e^{−(l−j)²/(2(l+j))}`, for `l, j ≥ 1`.
pub fn gaussian_prediction(l: usize, j: usize) -> f64 {
    if l == j {
        return 1.0;
    }
    let (lf, jf) = (l as f64, j as f64);
    let s = lf + jf;
    (2.0 * (lf * jf).sqrt() / s).sqrt() * (-(lf - jf) * (lf - jf) / (2.0 * s)).exp()
}

/// Companion anomalous correlation `ℳ̄ = i𝒩̄`.
pub fn gaussian_prediction_m(l: usize, j: usize) -> C64 {
    I * gaussian_prediction(l, j)
}

/// `(k̃⁺ ≈ 2ω/(γ−2), λ⁺ ≈ λ₀ − 2ω²/(γ−2)²)` with `λ₀ = ln(4/(γ−2))`.
pub fn linearized_dispersion(omega: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 2.0) {
        return Err(Error::Domain(format!("linearization needs gamma > 2, got {gamma}")));
    }
    let d = gamma - 2.0;
    Ok((2.0 * omega / d, (4.0 / d).ln() - 2.0 * omega * omega / (d * d)))
}

/// Roots of `i(J±g_c)β² + (ω + iγ/2 ± ig_s)β − i(J∓g_c) = 0` for a general
/// homogeneous Model I chain; one root when the leading coefficient vanishes.
pub fn characteristic_roots(omega: f64, p: &ModelIParams, channel: Channel) -> Vec<C64> {
    let s = match channel {
        Channel::Plus => 1.0,
        Channel::Minus => -1.0,
    };
    let a = I * (p.j + s * p.g_c);
    let b = c(omega, 0.5 * p.gamma + s * p.g_s);
    let cc = -I * (p.j - s * p.g_c);
    if a.norm() <= 1e-14 * (b.norm() + cc.norm()) {
        return if b.norm() == 0.0 { vec![] } else { vec![-cc / b] };
    }
    let disc = (b * b - 4.0 * a * cc).sqrt();
    // pick the sign that avoids cancellation, then Vieta for the other root
    let q = if (b.conj() * disc).re >= 0.0 { -0.5 * (b + disc) } else { -0.5 * (b - disc) };
    if q.norm() == 0.0 {
        return vec![c(0.0, 0.0), c(0.0, 0.0)];
    }
    vec![q / a, cc / q]
}
