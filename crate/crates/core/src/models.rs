//! Hamiltonians of the oscillator and its circuit implementation.
//!
//! All energies are in GHz (E/h). The one-mode models live on a single Fock
//! ladder; the three-mode circuit model lives on the product basis of the
//! harmonic modes defined by its quadratic part.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    cos_sin_quadrature, cosine_of_quadratures, product_dim, quadrature_real, FockDim, HermitianOperator,
};
use crate::reduction::capacitive_load;

/// Circuit parameters of the KITE shunted by a superinductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Mean small-junction Josephson energy.
    pub e_j: f64,
    /// Mean small-junction charging energy.
    pub e_c: f64,
    /// Shunt inductive energy.
    pub e_l: f64,
    /// Inductive energy of each KITE arm's series array.
    pub eps_l: f64,
    /// Shunt charging energy.
    pub eps_c: f64,
    /// Junction asymmetry: E_J± = (1 ± ε) E_J, E_C± = E_C / (1 ± ε).
    pub eps: f64,
    #[serde(default = "default_theta")]
    pub theta_ext: f64,
    #[serde(default)]
    pub phi_ext: f64,
}

fn default_theta() -> f64 {
    PI
}

impl PhysicalParams {
    /// Fitted device parameters (first row of the parameter table), biased at θ_ext = π, φ_ext = 0.
    pub fn device() -> Self {
        Self { e_j: 3.92, e_c: 6.23, e_l: 0.53, eps_l: 6.73, eps_c: 5.65, eps: 0.032, theta_ext: PI, phi_ext: 0.0 }
    }

    pub fn with_flux(mut self, theta_ext: f64, phi_ext: f64) -> Self {
        self.theta_ext = theta_ext;
        self.phi_ext = phi_ext;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let energies =
            [("e_j", self.e_j), ("e_c", self.e_c), ("e_l", self.e_l), ("eps_l", self.eps_l), ("eps_c", self.eps_c)];
        for (name, v) in energies {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eps.abs() < 1.0) {
            return Err(Error::InvalidParams(format!("asymmetry |eps| must be < 1, got {}", self.eps)));
        }
        if !self.theta_ext.is_finite() || !self.phi_ext.is_finite() {
            return Err(Error::InvalidParams("external fluxes must be finite".into()));
        }
        Ok(())
    }
}

/// Parameters of the effective one-mode Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    /// Bare oscillator frequency Ω/2π.
    pub omega: f64,
    /// Two-Cooper-pair tunneling energy 𝓔_J.
    pub cal_e_j: f64,
    /// Residual single-Cooper-pair tunneling δE_J.
    pub d_e_j: f64,
    /// Zero-point fluctuation of the doubled phase, φ̂ = η(a + a†).
    pub eta: f64,
}

impl EffectiveParams {
    /// One-mode fit of the device (second row of the parameter table).
    pub fn device() -> Self {
        Self { omega: 2.86, cal_e_j: 0.79, d_e_j: 0.27, eta: 3.40 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::InvalidParams(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParams(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.cal_e_j >= 0.0) {
            return Err(Error::InvalidParams(format!("cal_e_j must be >= 0, got {}", self.cal_e_j)));
        }
        if !self.d_e_j.is_finite() {
            return Err(Error::InvalidParams("d_e_j must be finite".into()));
        }
        Ok(())
    }
}

/// One KITE arm: a junction in series with a linear inductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleArmParams {
    pub e_j: f64,
    pub eps_l: f64,
}

impl SingleArmParams {
    /// ν = E_J / ε_L.
    pub fn nu(&self) -> f64 {
        self.e_j / self.eps_l
    }
}

fn warn_if_small(dim: FockDim, zpf: f64) {
    if (dim.get() as f64) < zpf * zpf + 6.0 * zpf + 10.0 {
        log::warn!("Fock dimension {} is small for displacement amplitude {zpf}", dim.get());
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be finite")))
    }
}

/// ħΩ a†a − 𝓔_J cos(η(a + a†) − φ_ext).
pub fn build_ideal(omega: f64, cal_e_j: f64, eta: f64, phi_ext: f64, dim: FockDim) -> Result<HermitianOperator> {
    for (name, v) in [("omega", omega), ("cal_e_j", cal_e_j), ("eta", eta), ("phi_ext", phi_ext)] {
        check_finite(name, v)?;
    }
    warn_if_small(dim, eta);
    let n = dim.get();
    let mut h = cosine_real(eta, phi_ext, n) * (-cal_e_j);
    for k in 0..n {
        h[(k, k)] += omega * k as f64;
    }
    HermitianOperator::from_real(h, vec![n])
}

/// ħΩ a†a + 𝓔_J cos[2(φ̂ − φ_ext)] − δE_J cos(φ̂ − φ_ext) with φ̂ = (η/2)(a + a†).
pub fn build_circuit_one_mode(p: &EffectiveParams, phi_ext: f64, dim: FockDim) -> Result<HermitianOperator> {
    check_finite("phi_ext", phi_ext)?;
    for v in [p.omega, p.cal_e_j, p.d_e_j, p.eta] {
        check_finite("effective parameter", v)?;
    }
    warn_if_small(dim, p.eta);
    let n = dim.get();
    let mut h = cosine_real(p.eta, 2.0 * phi_ext, n) * p.cal_e_j;
    h -= cosine_real(0.5 * p.eta, phi_ext, n) * p.d_e_j;
    for k in 0..n {
        h[(k, k)] += p.omega * k as f64;
    }
    HermitianOperator::from_real(h, vec![n])
}

/// cos(c x̂ − offset) on one mode.
fn cosine_real(c: f64, offset: f64, n: usize) -> DMatrix<f64> {
    let (cos, sin) = cos_sin_quadrature(c, n);
    cos * offset.cos() + sin * offset.sin()
}

/// Harmonic mode of a quadratic form `K N² + V q²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicMode {
    /// Coefficient K of N².
    pub kinetic: f64,
    /// Coefficient V of q².
    pub potential: f64,
}

impl HarmonicMode {
    /// ω = 2√(KV).
    pub fn frequency(&self) -> f64 {
        2.0 * (self.kinetic * self.potential).sqrt()
    }

    /// q = zpf · (a + a†), zpf = (K / 4V)^{1/4}.
    pub fn zero_point(&self) -> f64 {
        (self.kinetic / (4.0 * self.potential)).powf(0.25)
    }
}

/// Quadratic structure and Josephson couplings of the three-mode circuit Hamiltonian.
///
/// Variables (φ, θ, ζ) are the transformed phases; φ is shifted so the flux
/// appears only in cosine offsets, leaving the shunt term ½E_L(φ + ζ − εθ)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeModeStructure {
    pub z: f64,
    pub modes: [HarmonicMode; 3],
}

impl ThreeModeStructure {
    pub fn new(p: &PhysicalParams) -> Result<Self> {
        p.validate()?;
        let z = capacitive_load(p);
        let e = p.eps;
        let modes = [
            HarmonicMode { kinetic: 4.0 * p.eps_c / (1.0 + 1.0 / z), potential: 0.5 * p.e_l },
            HarmonicMode { kinetic: 2.0 * p.e_c, potential: p.eps_l + 0.5 * p.e_l * e * e },
            HarmonicMode { kinetic: 4.0 * p.eps_c / (1.0 + z), potential: p.eps_l * (1.0 + z).powi(2) + 0.5 * p.e_l },
        ];
        for (m, name) in modes.iter().zip(["phi", "theta", "zeta"]) {
            let w = m.frequency();
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidParams(format!("non-positive {name} mode frequency {w}")));
            }
        }
        Ok(Self { z, modes })
    }

    pub fn frequencies(&self) -> [f64; 3] {
        [self.modes[0].frequency(), self.modes[1].frequency(), self.modes[2].frequency()]
    }
}

/// One cosine term `weight · cos(c·(φ, θ, ζ) − offset)` with phase-unit coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CosineTerm {
    weight: f64,
    coeffs: [f64; 3],
    offset: f64,
}

/// The two Josephson products rewritten as four cosines of linear phase combinations.
fn josephson_terms(p: &PhysicalParams, z: f64) -> [CosineTerm; 4] {
    let e = p.eps;
    let s = p.phi_ext + 0.5 * p.theta_ext;
    let h = 0.5 * p.theta_ext;
    // −2E_J cos P cos Q, P = φ − s − zζ + (z−1)εθ, Q = θ + z(1+z)εζ + θ_ext/2
    // 2εE_J sin A sin B, A = φ − s − zζ, B = θ + θ_ext/2
    [
        CosineTerm { weight: -p.e_j, coeffs: [1.0, (z - 1.0) * e + 1.0, -z + z * (1.0 + z) * e], offset: s - h },
        CosineTerm { weight: -p.e_j, coeffs: [1.0, (z - 1.0) * e - 1.0, -z - z * (1.0 + z) * e], offset: s + h },
        CosineTerm { weight: e * p.e_j, coeffs: [1.0, -1.0, -z], offset: s + h },
        CosineTerm { weight: -e * p.e_j, coeffs: [1.0, 1.0, -z], offset: s - h },
    ]
}

/// Dense three-mode Hamiltonian, every term assembled on the full product basis.
pub fn build_three_mode(p: &PhysicalParams, dims: [FockDim; 3]) -> Result<HermitianOperator> {
    let total = product_dim(&dims)?;
    let st = ThreeModeStructure::new(p)?;
    let n = dims.map(|d| d.get());
    let zpf = st.modes.map(|m| m.zero_point());
    let eye = |k: usize| DMatrix::<f64>::identity(n[k], n[k]);
    let num = |k: usize| DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_fn(n[k], |i, _| i as f64));
    let x = |k: usize| quadrature_real(n[k]) * zpf[k];
    let k3 = |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>| a.kronecker(&b.kronecker(c));

    let w = st.frequencies();
    let mut h = k3(&num(0), &eye(1), &eye(2)) * w[0]
        + k3(&eye(0), &num(1), &eye(2)) * w[1]
        + k3(&eye(0), &eye(1), &num(2)) * w[2];
    h += k3(&x(0), &eye(1), &x(2)) * p.e_l;
    h -= k3(&x(0), &x(1), &eye(2)) * (p.eps * p.e_l);
    h -= k3(&eye(0), &x(1), &x(2)) * (p.eps * p.e_l);

    for term in josephson_terms(p, st.z) {
        let coeffs: Vec<f64> = (0..3).map(|k| term.coeffs[k] * zpf[k]).collect();
        let c = cosine_of_quadratures(&coeffs, term.offset, &dims)?;
        h += c.real_part() * term.weight;
    }
    debug_assert_eq!(h.nrows(), total);
    HermitianOperator::from_real(h, n.to_vec())
}

/// Real symmetric operator given only through its action on vectors.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal entries, used for preconditioning.
    fn diagonal(&self) -> Vec<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = DMatrixView::from_slice(x, x.len(), 1);
        let mut yv = DMatrixViewMut::from_slice(y, x.len(), 1);
        yv.gemm(1.0, self, &xv, 0.0);
    }
    fn diagonal(&self) -> Vec<f64> {
        self.diagonal().iter().copied().collect()
    }
}

/// Three-mode Hamiltonian in factored form
/// `H = D + C_φ ⊗ M_c + S_φ ⊗ M_s + X_φ ⊗ K_x + I_φ ⊗ K_0`,
/// where `C_φ, S_φ = cos, sin(φ − s)` act on the φ mode and the `M`, `K`
/// blocks act on the (θ, ζ) product space. Exactly equal to [`build_three_mode`].
#[derive(Debug, Clone)]
pub struct ThreeModeHamiltonian {
    dims: [usize; 3],
    structure: ThreeModeStructure,
    cos_phi: DMatrix<f64>,
    sin_phi: DMatrix<f64>,
    x_phi: DMatrix<f64>,
    m_cos: DMatrix<f64>,
    m_sin: DMatrix<f64>,
    k_x: DMatrix<f64>,
    k_0: DMatrix<f64>,
    phi_energies: Vec<f64>,
}

/// Maximum product dimension for the factored three-mode operator.
pub const MAX_THREE_MODE_DIM: usize = 200_000;

impl ThreeModeHamiltonian {
    pub fn new(p: &PhysicalParams, dims: [FockDim; 3]) -> Result<Self> {
        let n = dims.map(|d| d.get());
        let total = n.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
        if total > MAX_THREE_MODE_DIM {
            return Err(Error::ResourceLimit(format!(
                "three-mode product dimension {total} exceeds {MAX_THREE_MODE_DIM}"
            )));
        }
        let st = ThreeModeStructure::new(p)?;
        let zpf = st.modes.map(|m| m.zero_point());
        let w = st.frequencies();
        let nb = n[1] * n[2];

        let s = p.phi_ext + 0.5 * p.theta_ext;
        let (c0, s0) = cos_sin_quadrature(zpf[0], n[0]);
        // cos(φ − s), sin(φ − s)
        let cos_phi = &c0 * s.cos() + &s0 * s.sin();
        let sin_phi = &s0 * s.cos() - &c0 * s.sin();

        // (θ, ζ) factors: e^{i(aθ + bζ + c)} split into real and imaginary parts.
        let pair = |a: f64, b: f64, c: f64| -> (DMatrix<f64>, DMatrix<f64>) {
            let (ca, sa) = cos_sin_quadrature(a * zpf[1], n[1]);
            let (cb, sb) = cos_sin_quadrature(b * zpf[2], n[2]);
            let re = ca.kronecker(&cb) - sa.kronecker(&sb);
            let im = sa.kronecker(&cb) + ca.kronecker(&sb);
            (&re * c.cos() - &im * c.sin(), &im * c.cos() + &re * c.sin())
        };

        let z = st.z;
        let e = p.eps;
        let half = 0.5 * p.theta_ext;
        // u = (z−1)εθ − zζ, v = θ + z(1+z)εζ + θ_ext/2, w = −zζ, v' = θ + θ_ext/2
        let (cos_upv, sin_upv) = pair((z - 1.0) * e + 1.0, -z + z * (1.0 + z) * e, half);
        let (cos_umv, sin_umv) = pair((z - 1.0) * e - 1.0, -z - z * (1.0 + z) * e, -half);
        let (cos_wpv, sin_wpv) = pair(1.0, -z, half);
        let (cos_wmv, sin_wmv) = pair(-1.0, -z, -half);

        let m_cos = (&cos_upv + &cos_umv) * (-p.e_j) + (&cos_wmv - &cos_wpv) * (e * p.e_j);
        let m_sin = (&sin_upv + &sin_umv) * p.e_j + (&sin_wpv - &sin_wmv) * (e * p.e_j);

        let eye_t = DMatrix::<f64>::identity(n[1], n[1]);
        let eye_z = DMatrix::<f64>::identity(n[2], n[2]);
        let xt = quadrature_real(n[1]) * zpf[1];
        let xz = quadrature_real(n[2]) * zpf[2];
        let k_x = (eye_t.kronecker(&xz) - xt.kronecker(&eye_z) * e) * (p.e_l * zpf[0]);
        let mut k_0 = xt.kronecker(&xz) * (-e * p.e_l);
        for it in 0..n[1] {
            for iz in 0..n[2] {
                let j = it * n[2] + iz;
                k_0[(j, j)] += w[1] * it as f64 + w[2] * iz as f64;
            }
        }
        debug_assert_eq!(k_0.nrows(), nb);

        Ok(Self {
            dims: n,
            structure: st,
            cos_phi,
            sin_phi,
            x_phi: quadrature_real(n[0]),
            m_cos,
            m_sin,
            k_x,
            k_0,
            phi_energies: (0..n[0]).map(|i| w[0] * i as f64).collect(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn structure(&self) -> &ThreeModeStructure {
        &self.structure
    }

    /// Materializes the dense matrix (same basis ordering as [`build_three_mode`]).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n0 = self.dims[0];
        let mut h = self.cos_phi.kronecker(&self.m_cos)
            + self.sin_phi.kronecker(&self.m_sin)
            + self.x_phi.kronecker(&self.k_x)
            + DMatrix::<f64>::identity(n0, n0).kronecker(&self.k_0);
        let nb = self.k_0.nrows();
        for i in 0..n0 {
            for j in 0..nb {
                h[(i * nb + j, i * nb + j)] += self.phi_energies[i];
            }
        }
        h
    }
}

impl SymmetricOperator for ThreeModeHamiltonian {
    fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n0 = self.dims[0];
        let nb = self.k_0.nrows();
        // Column-major view: column i holds the (θ, ζ) block of φ-level i, i.e. Vᵀ.
        let vt = DMatrixView::from_slice(x, nb, n0);
        let mut out = DMatrixViewMut::from_slice(y, nb, n0);
        // (A ⊗ M) v  ↔  M · Vᵀ · Aᵀ, and all factors are symmetric.
        let t_cos = vt * &self.cos_phi;
        let t_sin = vt * &self.sin_phi;
        let t_x = vt * &self.x_phi;
        out.gemm(1.0, &self.m_cos, &t_cos, 0.0);
        out.gemm(1.0, &self.m_sin, &t_sin, 1.0);
        out.gemm(1.0, &self.k_x, &t_x, 1.0);
        out.gemm(1.0, &self.k_0, &vt, 1.0);
        for i in 0..n0 {
            let e = self.phi_energies[i];
            if e != 0.0 {
                let mut col = out.column_mut(i);
                col.axpy(e, &vt.column(i), 1.0);
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let n0 = self.dims[0];
        let nb = self.k_0.nrows();
        let mut d = Vec::with_capacity(n0 * nb);
        for i in 0..n0 {
            for j in 0..nb {
                d.push(
                    self.phi_energies[i]
                        + self.cos_phi[(i, i)] * self.m_cos[(j, j)]
                        + self.sin_phi[(i, i)] * self.m_sin[(j, j)]
                        + self.x_phi[(i, i)] * self.k_x[(j, j)]
                        + self.k_0[(j, j)],
                );
            }
        }
        d
    }
}

/// Maximum iterations for each stage of the Kirchhoff root finder.
const ROOT_ITER_CAP: usize = 200;

/// Junction phase φ_J solving φ_J = φ − ν sin φ_J.
pub fn junction_phase(phi: f64, p: &SingleArmParams) -> Result<f64> {
    let nu = p.nu();
    if !(p.eps_l > 0.0) || !(nu.abs() < 1.0) || !phi.is_finite() {
        return Err(Error::InvalidParams(format!("single-arm root requires eps_l > 0 and |nu| < 1, got nu = {nu}")));
    }
    let tol = 1e-12;
    let mut pj = phi;
    for _ in 0..ROOT_ITER_CAP {
        let next = phi - nu * pj.sin();
        if (next - pj).abs() <= tol {
            return Ok(next);
        }
        pj = next;
    }
    // Slow contraction near |ν| → 1: Newton, kept inside the bracket [φ − |ν|, φ + |ν|].
    let (lo, hi) = (phi - nu.abs(), phi + nu.abs());
    for _ in 0..ROOT_ITER_CAP {
        let g = pj - phi + nu * pj.sin();
        let dg = 1.0 + nu * pj.cos();
        let mut next = pj - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (pj + if g > 0.0 { lo } else { hi });
        }
        if (next - pj).abs() <= tol {
            return Ok(next);
        }
        pj = next;
    }
    Err(Error::NumericalFailure(format!("Kirchhoff root did not converge at phi = {phi}, nu = {nu}")))
}

/// Exact potential ε_L[½(φ − φ_J)² − ν cos φ_J] of one arm.
pub fn single_arm_potential_exact(phi: f64, p: &SingleArmParams) -> Result<f64> {
    let pj = junction_phase(phi, p)?;
    let nu = p.nu();
    Ok(p.eps_l * (0.5 * (phi - pj).powi(2) - nu * pj.cos()))
}

/// Second-order harmonic expansion −E_J cos φ + (E_J²/4ε_L)(cos 2φ − 1).
///
/// The constant −E_J²/4ε_L is kept so the series agrees with the exact potential
/// up to O(ν³)ε_L.
pub fn single_arm_potential_series(phi: f64, p: &SingleArmParams) -> f64 {
    let second = p.e_j * p.e_j / (4.0 * p.eps_l);
    -p.e_j * phi.cos() + second * (2.0 * phi).cos() - second
}

/// Series potential of both arms, U⁺(φ) + U⁻(φ + π), with E_J± = (1 ± ε)E_J.
pub fn kite_potential_series(phi: f64, e_j: f64, eps_l: f64, eps: f64) -> f64 {
    let plus = SingleArmParams { e_j: (1.0 + eps) * e_j, eps_l };
    let minus = SingleArmParams { e_j: (1.0 - eps) * e_j, eps_l };
    single_arm_potential_series(phi, &plus) + single_arm_potential_series(phi + PI, &minus)
}
