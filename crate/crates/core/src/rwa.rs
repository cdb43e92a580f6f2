//! Rotating-wave ladder of the ideal Hamiltonian.
//!
//! Normal ordering the cosine and discarding every term that does not
//! conserve photon number leaves `ħω₀ a†a + Σ_{n≥2} J_n a†ⁿaⁿ`, which is
//! diagonal in the Fock basis. All values are ordinary frequencies in GHz;
//! an energy `J_n` quoted in GHz is `J_n / h`, and a shift `δ_n` in GHz is
//! `δ_n / 2π` of the angular shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::ln_factorials;
use crate::models::EffectiveParams;

/// ω₀ together with J_1..J_{n_max}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderCoefficients {
    /// Renormalized frequency ω₀ = Ω + J₁.
    pub omega0: f64,
    /// `j[i]` is J_{i+1}.
    j: Vec<f64>,
}

impl LadderCoefficients {
    pub fn new(omega0: f64, j: Vec<f64>) -> Result<Self> {
        if j.is_empty() {
            return Err(Error::InvalidParams("ladder needs at least J_1".into()));
        }
        if !omega0.is_finite() || j.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("ladder coefficients must be finite".into()));
        }
        Ok(Self { omega0, j })
    }

    pub fn n_max(&self) -> usize {
        self.j.len()
    }

    /// J_n for 1 ≤ n ≤ n_max.
    pub fn j(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.j.get(i).copied())
    }

    /// J_1..J_{n_max}.
    pub fn interactions(&self) -> &[f64] {
        &self.j
    }
}

/// δ_1..δ_m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftVector {
    pub delta: Vec<f64>,
}

/// J_n = −𝓔_J e^{−η²/2} (−1)ⁿ (ηⁿ/n!)², evaluated in log space.
///
/// `n = 0` gives the constant −𝓔_J e^{−η²/2}.
pub fn interaction_energy(n: usize, cal_e_j: f64, eta: f64) -> f64 {
    if cal_e_j == 0.0 {
        return 0.0;
    }
    if eta == 0.0 {
        return if n == 0 { -cal_e_j } else { 0.0 };
    }
    let lnf = ln_factorials(n)[n];
    let mag = (-0.5 * eta * eta + 2.0 * (n as f64 * eta.abs().ln() - lnf)).exp();
    let sign = if n.is_multiple_of(2) { -1.0 } else { 1.0 };
    sign * cal_e_j * mag
}

/// ω₀ and J_1..J_{n_max}. Meaningful for ħΩ ≫ 𝓔_J.
pub fn ladder(n_max: usize, omega: f64, cal_e_j: f64, eta: f64) -> Result<LadderCoefficients> {
    if n_max < 1 {
        return Err(Error::InvalidParams("n_max must be >= 1".into()));
    }
    let j: Vec<f64> = (1..=n_max).map(|n| interaction_energy(n, cal_e_j, eta)).collect();
    LadderCoefficients::new(omega + j[0], j)
}

/// n!/(n−k)! as a float.
fn falling(n: usize, k: usize) -> f64 {
    ((n - k + 1)..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// E_n = nħω₀ + Σ_{k=2}^n n!/(n−k)! J_k.
pub fn eigenenergy(n: usize, lad: &LadderCoefficients) -> Result<f64> {
    if n > lad.n_max() {
        return Err(Error::OutOfRange(format!("level {n} beyond ladder n_max {}", lad.n_max())));
    }
    let mut e = n as f64 * lad.omega0;
    for k in 2..=n {
        e += falling(n, k) * lad.j[k - 1];
    }
    Ok(e)
}

/// Coefficient of J_k in δ_n: k · n!/(n+1−k)!.
fn shift_coefficient(n: usize, k: usize) -> f64 {
    k as f64 * falling(n, k - 1)
}

/// δ_n = Σ_{k=2}^{n+1} k n!/(n+1−k)! J_k for n = 1..m.
pub fn shifts_from_j(lad: &LadderCoefficients, m: usize) -> Result<ShiftVector> {
    if m + 1 > lad.n_max() {
        return Err(Error::OutOfRange(format!("need J up to {} but ladder stops at {}", m + 1, lad.n_max())));
    }
    let delta = (1..=m).map(|n| (2..=n + 1).map(|k| shift_coefficient(n, k) * lad.j[k - 1]).sum()).collect();
    Ok(ShiftVector { delta })
}

/// Inverts the shift relation by forward substitution. Returns J_2..J_{m+1}.
///
/// J_1 cannot be recovered: it only moves ω₀ relative to the bare Ω.
pub fn j_from_shifts(delta: &ShiftVector) -> Result<Vec<f64>> {
    let m = delta.delta.len();
    if m < 1 {
        return Err(Error::InvalidParams("need at least one shift".into()));
    }
    // j[i] holds J_{i+2}
    let mut j = Vec::with_capacity(m);
    for n in 1..=m {
        let mut rest = delta.delta[n - 1];
        for k in 2..=n {
            rest -= shift_coefficient(n, k) * j[k - 2];
        }
        j.push(rest / shift_coefficient(n, n + 1));
    }
    Ok(j)
}

/// Laguerre polynomial L_n(x) by the three-term recurrence.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// ⟨n|cos(c(a + a†))|n⟩ = e^{−c²/2} L_n(c²).
pub fn cosine_diagonal(n: usize, c: f64) -> f64 {
    (-0.5 * c * c).exp() * laguerre(n, c * c)
}

/// RWA energies E_0..E_{n_max} of the effective circuit Hamiltonian at flux φ_ext.
///
/// Under the RWA each cosine keeps only its Fock diagonal. For
/// cos(c x̂ − o) = cos o · cos(c x̂) + sin o · sin(c x̂) the sine diagonal
/// vanishes (sin(c x̂) only connects levels of opposite parity), so
/// E_n = nΩ + 𝓔_J cos(2φ_ext) e^{−η²/2} L_n(η²) − δE_J cos(φ_ext) e^{−η²/8} L_n(η²/4).
pub fn circuit_rwa_levels(p: &EffectiveParams, phi_ext: f64, n_max: usize) -> Vec<f64> {
    let two = p.cal_e_j * (2.0 * phi_ext).cos();
    let one = p.d_e_j * phi_ext.cos();
    (0..=n_max)
        .map(|n| n as f64 * p.omega + two * cosine_diagonal(n, p.eta) - one * cosine_diagonal(n, 0.5 * p.eta))
        .collect()
}

/// Adjacent transitions and shifts of an energy list (same layout as a spectrum row).
pub fn transitions_of(levels: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = levels.windows(2).map(|p| p[1] - p[0]).collect();
    let d = w.iter().map(|x| x - w.first().copied().unwrap_or(0.0)).collect();
    (w, d)
}
