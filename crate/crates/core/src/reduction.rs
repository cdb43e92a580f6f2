//! Born-Oppenheimer reduction of the three-mode circuit to the effective one-mode model.
//!
//! The stiff θ and ζ modes are frozen at their classical equilibria and the
//! resulting potential for φ is kept to lowest order in λ = E_J/ε_L and ε.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{EffectiveParams, PhysicalParams};

/// Superconducting resistance quantum in ohms, as rounded in the literature.
pub const R_Q_OHMS: f64 = 6400.0;

/// Above this E_J/ε_L the lowest-order reduction is flagged.
pub const LAMBDA_WARN: f64 = 0.7;

/// Capacitive loading z = E_C / (2ε_C(1 − ε²)). Diverges as ε_C → 0.
pub fn capacitive_load(p: &PhysicalParams) -> f64 {
    p.e_c / (2.0 * p.eps_c * (1.0 - p.eps * p.eps))
}

/// Basis change to weakly coupled phases and the transformed quadratic forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTransform {
    /// Old phases (φ_Σ, φ_Δ, ϑ) = Λ · new phases (φ, θ, ζ).
    pub lambda: [[f64; 3]; 3],
    /// Λ⁻¹ 𝔼_C Λ⁻ᵀ.
    pub charging: [[f64; 3]; 3],
    /// Λᵀ 𝔼_L Λ.
    pub inductive: [[f64; 3]; 3],
    /// Coefficients of N_φ², N_θ², N_ζ²: the diagonal of 4 Λ⁻¹ 𝔼_C Λ⁻ᵀ.
    pub kinetic: [f64; 3],
    /// Largest off-diagonal entry of Λᵀ 𝔼_L Λ.
    pub inductive_residual: f64,
    /// Largest off-diagonal entry of 4 Λ⁻¹ 𝔼_C Λ⁻ᵀ.
    pub charging_residual: f64,
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

fn max_off_diagonal(m: &Matrix3<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

/// Λ to first order in ε, exactly as printed for the circuit.
pub fn lambda_matrix(p: &PhysicalParams) -> Matrix3<f64> {
    let z = capacitive_load(p);
    let e = p.eps;
    Matrix3::new(1.0, (z - 1.0) * e, -z, 0.0, 1.0, z * (1.0 + z) * e, 1.0, -e, 1.0)
}

/// Applies Λ to the charging and inductive matrices of the linear circuit.
///
/// With Λ truncated at O(ε), the off-diagonal residuals are O(ε²) times the
/// dominant scales; they are reported, not corrected.
pub fn mode_transform(p: &PhysicalParams) -> Result<ModeTransform> {
    p.validate()?;
    let z = capacitive_load(p);
    let e = p.eps;
    let e_c = Matrix3::new(z, -e * z, 0.0, -e * z, z, 0.0, 0.0, 0.0, 1.0) * p.eps_c;
    let e_l = Matrix3::new(1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0) * (2.0 * p.eps_l);
    let lam = lambda_matrix(p);
    let inv = lam.try_inverse().ok_or_else(|| Error::NumericalFailure("mode transformation is singular".into()))?;
    let charging = inv * e_c * inv.transpose();
    let inductive = lam.transpose() * e_l * lam;
    let kin = charging * 4.0;
    Ok(ModeTransform {
        lambda: to_rows(&lam),
        charging: to_rows(&charging),
        inductive: to_rows(&inductive),
        kinetic: [kin[(0, 0)], kin[(1, 1)], kin[(2, 2)]],
        inductive_residual: max_off_diagonal(&inductive),
        charging_residual: max_off_diagonal(&kin),
    })
}

/// Lowest-order equilibria (θ₀, ζ₀) of the stiff modes at classical phase φ.
pub fn equilibrium_positions(p: &PhysicalParams, phi: f64) -> (f64, f64) {
    let (a, b) = equilibrium_coefficients(p);
    (a * phi.cos(), b * phi.sin())
}

/// Prefactors of cos φ in θ₀ and of sin φ in ζ₀.
pub fn equilibrium_coefficients(p: &PhysicalParams) -> (f64, f64) {
    let z = capacitive_load(p);
    let lam = p.e_j / p.eps_l;
    let half = 0.5 * p.theta_ext;
    (-lam * half.sin(), lam * z / (1.0 + z).powi(2) * half.cos())
}

/// Result of the reduction, with the intermediate quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub z: f64,
    pub lambda: [[f64; 3]; 3],
    /// λ = E_J/ε_L.
    pub lambda_small: f64,
    /// θ₀ = theta0_coeff · cos φ.
    pub theta0_coeff: f64,
    /// ζ₀ = zeta0_coeff · sin φ.
    pub zeta0_coeff: f64,
    /// Charging energy of the φ mode, ε_C/(1 + z⁻¹).
    pub e_c_eff: f64,
    pub effective: EffectiveParams,
    pub warnings: Vec<String>,
}

/// Effective one-mode parameters at the flux θ_ext carried by `p`.
pub fn effective_parameters(p: &PhysicalParams) -> Result<ReductionReport> {
    p.validate()?;
    let z = capacitive_load(p);
    let e_c_eff = p.eps_c / (1.0 + 1.0 / z);
    let omega = (8.0 * e_c_eff * p.e_l).sqrt();
    let eta = 2.0 * (2.0 * e_c_eff / p.e_l).powf(0.25);
    let half = 0.5 * p.theta_ext;
    let load = z / (1.0 + z);
    let cal_e_j = p.e_j * p.e_j / (2.0 * p.eps_l) * (half.sin().powi(2) - load * load * half.cos().powi(2));
    let d_e_j = 2.0 * p.eps * p.e_j;

    let lambda_small = p.e_j / p.eps_l;
    let mut warnings = Vec::new();
    if lambda_small > LAMBDA_WARN {
        warnings
            .push(format!("E_J/eps_L = {lambda_small:.4} exceeds {LAMBDA_WARN}; lowest-order reduction is unreliable"));
    }
    if p.e_l >= p.eps_c {
        warnings.push(format!("E_L = {} is not small against eps_C = {}", p.e_l, p.eps_c));
    }
    if cal_e_j < 0.0 {
        warnings.push(format!("two-pair tunneling energy is negative ({cal_e_j:.6}) at this theta_ext"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let (theta0_coeff, zeta0_coeff) = equilibrium_coefficients(p);
    Ok(ReductionReport {
        z,
        lambda: to_rows(&lambda_matrix(p)),
        lambda_small,
        theta0_coeff,
        zeta0_coeff,
        e_c_eff,
        effective: EffectiveParams { omega, cal_e_j, d_e_j, eta },
        warnings,
    })
}

/// η = √(πZ/R_Q), doubled for two-Cooper-pair tunneling.
pub fn eta_from_impedance(z_ohms: f64, paired: bool) -> Result<f64> {
    if !(z_ohms > 0.0) || !z_ohms.is_finite() {
        return Err(Error::InvalidParams(format!("impedance must be positive, got {z_ohms}")));
    }
    let eta = (std::f64::consts::PI * z_ohms / R_Q_OHMS).sqrt();
    Ok(if paired { 2.0 * eta } else { eta })
}
