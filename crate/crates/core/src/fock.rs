//! Truncated Fock-space operators.
//!
//! Every operator here is the exact infinite-dimensional matrix restricted to
//! the first `dim` number states; nothing is re-unitarized after truncation.
//! Displacement matrix elements come from the generalized-Laguerre closed form
//! evaluated with a normalized three-term recurrence, so no factorial ratio is
//! ever formed explicitly.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Largest product dimension accepted for dense operators.
pub const MAX_DENSE_DIM: usize = 4096;

/// Relative Frobenius tolerance for the Hermiticity invariant.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Basis size of one bosonic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockDim(usize);

impl FockDim {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(format!("Fock dimension must be >= 2, got {dim}")));
        }
        Ok(Self(dim))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for FockDim {
    type Error = Error;
    fn try_from(dim: usize) -> Result<Self> {
        Self::new(dim)
    }
}

impl From<FockDim> for usize {
    fn from(d: FockDim) -> usize {
        d.0
    }
}

/// Product dimension of a tensor basis, rejecting anything above [`MAX_DENSE_DIM`].
pub fn product_dim(dims: &[FockDim]) -> Result<usize> {
    let mut total: usize = 1;
    for d in dims {
        total = total.checked_mul(d.get()).filter(|&t| t <= MAX_DENSE_DIM).ok_or_else(|| {
            Error::ResourceLimit(format!(
                "dense product dimension exceeds {MAX_DENSE_DIM} for modes {:?}",
                dims.iter().map(|d| d.get()).collect::<Vec<_>>()
            ))
        })?;
    }
    Ok(total)
}

/// Dense Hermitian matrix on a (product) Fock basis. Entries are in GHz (energy / h).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
    mode_dims: Vec<usize>,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>, mode_dims: Vec<usize>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::ShapeMismatch(format!("operator is {}x{}", n, matrix.ncols())));
        }
        let prod: usize = mode_dims.iter().product();
        if prod != n {
            return Err(Error::DimensionMismatch { expected: prod, got: n });
        }
        let defect = hermiticity_defect(&matrix);
        if !(defect <= HERMITIAN_TOL) {
            return Err(Error::InvalidParams(format!("matrix is not Hermitian (defect {defect:e})")));
        }
        Ok(Self { matrix, mode_dims })
    }

    pub fn from_real(matrix: DMatrix<f64>, mode_dims: Vec<usize>) -> Result<Self> {
        Self::new(matrix.map(|x| C64::new(x, 0.0)), mode_dims)
    }

    pub fn identity(mode_dims: Vec<usize>) -> Self {
        let n = mode_dims.iter().product();
        Self { matrix: DMatrix::identity(n, n), mode_dims }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    /// True when every imaginary part is negligible against the largest entry.
    pub fn is_real(&self) -> bool {
        let scale = self.matrix.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let imag = self.matrix.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
        imag <= 1e-14 * scale.max(f64::MIN_POSITIVE)
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.re)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { matrix: &self.matrix * C64::new(s, 0.0), mode_dims: self.mode_dims.clone() }
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.mode_dims != other.mode_dims {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(Self { matrix: &self.matrix + &other.matrix, mode_dims: self.mode_dims.clone() })
    }

    pub fn apply(&self, state: &QuantumState) -> Result<DVector<C64>> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.dim() });
        }
        Ok(&self.matrix * state.amplitudes())
    }

    /// ⟨ψ|H|ψ⟩ (real by Hermiticity).
    pub fn expectation(&self, state: &QuantumState) -> Result<f64> {
        let hv = self.apply(state)?;
        Ok(state.amplitudes().dotc(&hv).re)
    }

    /// Frobenius norm of the matrix.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// ‖M − M†‖_F / ‖M‖_F (zero for the zero matrix).
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

/// Pure state over a (product) Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<C64>,
}

impl QuantumState {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidParams(format!("state norm {norm} is not 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales to unit norm; fails on the zero vector.
    pub fn normalized(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParams("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self { amplitudes: amplitudes / C64::new(norm, 0.0) })
    }

    pub fn fock(n: usize, dim: FockDim) -> Result<Self> {
        if n >= dim.get() {
            return Err(Error::OutOfRange(format!("Fock state {n} outside dimension {}", dim.get())));
        }
        let mut v = DVector::zeros(dim.get());
        v[n] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn vacuum(dim: FockDim) -> Self {
        Self::fock(0, dim).expect("dim >= 2")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// ⟨self|other⟩.
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// ⟨a†a⟩ for a single-mode state.
    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes.iter().enumerate().map(|(n, c)| n as f64 * c.norm_sqr()).sum()
    }
}

/// ln(k!) for k = 0..=n by cumulative summation.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Annihilation operator: entries (m, m+1) = √(m+1).
pub fn annihilation(dim: FockDim) -> DMatrix<C64> {
    let n = dim.get();
    DMatrix::from_fn(n, n, |r, c| if c == r + 1 { C64::new((c as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) })
}

/// a†a.
pub fn number_operator(dim: FockDim) -> HermitianOperator {
    let n = dim.get();
    let m = DMatrix::from_fn(n, n, |r, c| if r == c { C64::new(r as f64, 0.0) } else { C64::new(0.0, 0.0) });
    HermitianOperator { matrix: m, mode_dims: vec![n] }
}

/// x̂ = a + a† as a real symmetric matrix.
pub fn quadrature_real(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |r, c| {
        if c == r + 1 {
            (c as f64).sqrt()
        } else if r == c + 1 {
            (r as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// Magnitudes of ⟨n+k|D(β)|n⟩ with the phase of β stripped, for |β| = `r`.
///
/// Returns a `dim x dim` table `h[(n + k, n)] = √(n!/(n+k)!) r^k e^{-r²/2} L_n^{(k)}(r²)`;
/// only the lower triangle is filled.
fn displacement_magnitudes(r: f64, dim: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(dim, dim);
    if r == 0.0 {
        for n in 0..dim {
            h[(n, n)] = 1.0;
        }
        return h;
    }
    let x = r * r;
    let lnr = r.ln();
    let lnf = ln_factorials(dim);
    for k in 0..dim {
        let len = dim - k;
        let h0 = (-0.5 * x + k as f64 * lnr - 0.5 * lnf[k]).exp();
        h[(k, 0)] = h0;
        if len == 1 {
            continue;
        }
        let kf = k as f64;
        let h1 = h0 * (1.0 + kf - x) / (1.0 + kf).sqrt();
        h[(k + 1, 1)] = h1;
        let (mut prev, mut cur) = (h0, h1);
        for n in 1..len - 1 {
            let nf = n as f64;
            let next = ((2.0 * nf + 1.0 + kf - x) * cur - (nf * (nf + kf)).sqrt() * prev)
                / ((nf + 1.0) * (nf + 1.0 + kf)).sqrt();
            h[(n + 1 + k, n + 1)] = next;
            prev = cur;
            cur = next;
        }
    }
    h
}

/// Displacement operator D(β) = exp(β a† − β* a) restricted to `dim` levels.
pub fn displacement(beta: C64, dim: FockDim) -> DMatrix<C64> {
    let n = dim.get();
    let r = beta.norm();
    let h = displacement_magnitudes(r, n);
    let theta = if r > 0.0 { beta.arg() } else { 0.0 };
    let mut d = DMatrix::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        // m >= n: β^k ; m < n: (−β*)^k
        let below = C64::from_polar(1.0, kf * theta);
        let above = C64::from_polar(1.0, kf * (std::f64::consts::PI - theta));
        for col in 0..n - k {
            let v = h[(col + k, col)];
            d[(col + k, col)] = below * v;
            if k > 0 {
                d[(col, col + k)] = above * v;
            }
        }
    }
    d
}

/// cos(c x̂) and sin(c x̂) for x̂ = a + a†, both real symmetric.
///
/// D(ic) = exp(ic x̂) is complex symmetric, so cos is its real part and sin its
/// imaginary part entry by entry.
pub fn cos_sin_quadrature(c: f64, dim: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = displacement_magnitudes(c.abs(), dim);
    let sign = if c < 0.0 { -1.0 } else { 1.0 };
    let mut cos = DMatrix::zeros(dim, dim);
    let mut sin = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        // i^k split into real / imaginary parts; sin is odd in c.
        let (re, im) = match k % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, sign),
            2 => (-1.0, 0.0),
            _ => (0.0, -sign),
        };
        for col in 0..dim - k {
            let v = h[(col + k, col)];
            cos[(col + k, col)] = re * v;
            cos[(col, col + k)] = re * v;
            sin[(col + k, col)] = im * v;
            sin[(col, col + k)] = im * v;
        }
    }
    (cos, sin)
}

/// Real and imaginary parts of e^{−i·offset} ⊗_k D_k(i c_k).
fn shifted_exponential(coeffs: &[f64], offset: f64, dims: &[FockDim]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if coeffs.len() != dims.len() {
        return Err(Error::ShapeMismatch(format!("{} coefficients for {} modes", coeffs.len(), dims.len())));
    }
    product_dim(dims)?;
    let mut re = DMatrix::from_element(1, 1, offset.cos());
    let mut im = DMatrix::from_element(1, 1, -offset.sin());
    for (&c, d) in coeffs.iter().zip(dims) {
        let (cm, sm) = cos_sin_quadrature(c, d.get());
        let new_re = re.kronecker(&cm) - im.kronecker(&sm);
        let new_im = re.kronecker(&sm) + im.kronecker(&cm);
        re = new_re;
        im = new_im;
    }
    Ok((re, im))
}

/// cos(Σ_k c_k (a_k + a_k†) − offset) on the tensor-product basis.
pub fn cosine_of_quadratures(coeffs: &[f64], offset: f64, dims: &[FockDim]) -> Result<HermitianOperator> {
    let (re, _) = shifted_exponential(coeffs, offset, dims)?;
    let mode_dims = dims.iter().map(|d| d.get()).collect();
    Ok(HermitianOperator { matrix: re.map(|x| C64::new(x, 0.0)), mode_dims })
}

/// sin(Σ_k c_k (a_k + a_k†) − offset) on the tensor-product basis.
pub fn sine_of_quadratures(coeffs: &[f64], offset: f64, dims: &[FockDim]) -> Result<HermitianOperator> {
    let (_, im) = shifted_exponential(coeffs, offset, dims)?;
    let mode_dims = dims.iter().map(|d| d.get()).collect();
    Ok(HermitianOperator { matrix: im.map(|x| C64::new(x, 0.0)), mode_dims })
}

/// Leading block size on which truncated products of displacements by up to
/// |β| still match their infinite-basis values to about 1e-8.
///
/// Row m of D(β) spreads over roughly 2|β|√m neighbouring columns, so the
/// margin grows with √dim rather than with |β|² alone.
pub fn converged_block(beta_abs: f64, dim: FockDim) -> usize {
    let n = dim.get() as f64;
    (n - (2.0 * beta_abs * n.sqrt()).ceil() - 14.0).max(0.0) as usize
}

/// Whether `dim` is comfortably larger than the support of |α⟩.
pub fn coherent_truncation_ok(alpha: C64, dim: FockDim) -> bool {
    let r = alpha.norm();
    dim.get() as f64 >= r * r + 6.0 * r + 10.0
}

/// Coherent state |α⟩, renormalized after truncation.
pub fn coherent_state(alpha: C64, dim: FockDim) -> QuantumState {
    if !coherent_truncation_ok(alpha, dim) {
        log::warn!("coherent state |α|={} truncated at dim {}", alpha.norm(), dim.get());
    }
    let n = dim.get();
    let r = alpha.norm();
    let lnf = ln_factorials(n);
    let phase = if r > 0.0 { alpha.arg() } else { 0.0 };
    let amps = DVector::from_fn(n, |k, _| {
        if r == 0.0 {
            return if k == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        }
        let mag = (-0.5 * r * r + k as f64 * r.ln() - 0.5 * lnf[k]).exp();
        C64::from_polar(mag, k as f64 * phase)
    });
    QuantumState::normalized(amps).expect("coherent amplitudes are nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    #[test]
    fn fock_dim_rejects_small() {
        assert!(matches!(FockDim::new(1), Err(Error::InvalidDimension(_))));
        assert!(matches!(FockDim::new(0), Err(Error::InvalidDimension(_))));
        assert_eq!(FockDim::new(2).unwrap().get(), 2);
    }

    #[test]
    fn annihilation_two_level() {
        let a = annihilation(dim(2));
        assert_eq!(a[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(a[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(a[(1, 0)], C64::new(0.0, 0.0));
        assert_eq!(a[(1, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn annihilation_kills_vacuum_and_counts() {
        let d = dim(12);
        let a = annihilation(d);
        let vac = QuantumState::vacuum(d);
        assert!((&a * vac.amplitudes()).norm() == 0.0);
        let num = a.adjoint() * &a;
        for n in 0..12 {
            assert!((num[(n, n)].re - n as f64).abs() < 1e-14);
        }
        assert!((number_operator(d).matrix() - &num).norm() < 1e-14);
    }

    #[test]
    fn displacement_zero_is_identity() {
        let d = displacement(C64::new(0.0, 0.0), dim(10));
        assert_eq!(d, DMatrix::identity(10, 10));
    }

    #[test]
    fn displacement_vacuum_overlap() {
        let beta = C64::new(0.7, -1.1);
        let d = displacement(beta, dim(30));
        let expect = (-beta.norm_sqr() / 2.0).exp();
        assert!((d[(0, 0)] - C64::new(expect, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn displacement_diagonal_zero_of_laguerre() {
        // L_1(1) = 0
        let d = displacement(C64::new(0.0, 1.0), dim(20));
        assert!(d[(1, 1)].norm() < 1e-15);
    }

    #[test]
    fn displacement_first_column_is_coherent_state() {
        let beta = C64::new(1.3, 0.4);
        let d = displacement(beta, dim(40));
        let coh = coherent_state(beta, dim(40));
        for n in 0..40 {
            assert!((d[(n, 0)] - coh.amplitudes()[n]).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn displacement_is_unitary_on_converged_block() {
        for &(re, im) in &[(0.3, 0.0), (1.5, -2.0), (0.0, 3.4), (-2.8, 2.8)] {
            let beta = C64::new(re, im);
            let n = 160;
            let d = displacement(beta, dim(n));
            let dm = displacement(-beta, dim(n));
            let prod = &d * &dm;
            let keep = converged_block(beta.norm(), dim(n));
            assert!(keep > n / 4);
            for r in 0..keep {
                for c in 0..keep {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((prod[(r, c)] - C64::new(want, 0.0)).norm() < 1e-8, "beta={beta} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn displacement_no_overflow_at_large_dim() {
        let d = displacement(C64::new(0.0, 3.4), dim(1024));
        assert!(d.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn cosine_constant_argument() {
        let d = [dim(6)];
        let op = cosine_of_quadratures(&[0.0], 0.9, &d).unwrap();
        let want = DMatrix::<f64>::identity(6, 6) * 0.9_f64.cos();
        assert!((op.real_part() - want).norm() < 1e-15);
    }

    #[test]
    fn cosine_squared_plus_sine_squared() {
        let d = [dim(200)];
        let c = cosine_of_quadratures(&[1.7], 0.3, &d).unwrap().real_part();
        let s = sine_of_quadratures(&[1.7], 0.3, &d).unwrap().real_part();
        let sum = &c * &c + &s * &s;
        let keep = converged_block(1.7, d[0]).min(150);
        for r in 0..keep {
            for col in 0..keep {
                let want = if r == col { 1.0 } else { 0.0 };
                assert!((sum[(r, col)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cosine_product_dimension_limit() {
        let d = [dim(100), dim(100)];
        assert!(matches!(cosine_of_quadratures(&[1.0, 1.0], 0.0, &d), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn two_mode_cosine_matches_product_to_sum() {
        // cos(a + b) = cos a cos b − sin a sin b
        let d = [dim(12), dim(9)];
        let op = cosine_of_quadratures(&[0.8, -1.2], 0.0, &d).unwrap().real_part();
        let (ca, sa) = cos_sin_quadrature(0.8, 12);
        let (cb, sb) = cos_sin_quadrature(-1.2, 9);
        let want = ca.kronecker(&cb) - sa.kronecker(&sb);
        assert!((op - want).norm() < 1e-13);
    }

    #[test]
    fn coherent_vacuum_and_number() {
        let vac = coherent_state(C64::new(0.0, 0.0), dim(8));
        assert_eq!(vac, QuantumState::vacuum(dim(8)));
        let coh = coherent_state(C64::new(1.7, 0.0), dim(60));
        let brute: f64 = coh.amplitudes().iter().enumerate().map(|(n, c)| n as f64 * c.norm_sqr()).sum();
        assert!((brute - 2.89).abs() < 1e-6);
        assert!((coh.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_is_annihilation_eigenstate() {
        let alpha = C64::new(1.2, -0.9);
        let d = dim(60);
        let coh = coherent_state(alpha, d);
        let av = annihilation(d) * coh.amplitudes();
        let want = coh.amplitudes() * alpha;
        assert!((av - want).norm() < 1e-10);
    }

    #[test]
    fn truncation_warning_rule() {
        assert!(!coherent_truncation_ok(C64::new(3.0, 0.0), dim(30)));
        assert!(coherent_truncation_ok(C64::new(3.0, 0.0), dim(37)));
    }

    #[test]
    fn hermitian_operator_rejects_non_hermitian() {
        let a = annihilation(dim(4));
        assert!(HermitianOperator::new(a, vec![4]).is_err());
        let x = quadrature_real(4);
        assert!(HermitianOperator::from_real(x, vec![4]).is_ok());
    }
}
