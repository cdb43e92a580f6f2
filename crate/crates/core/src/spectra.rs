//! Diagonalization, transitions, flux sweeps and basis convergence.
//!
//! One-mode models are solved densely. The three-mode model is solved with a
//! block Davidson iteration on its factored operator, which never forms the
//! product-space matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockDim, HermitianOperator, C64};
use crate::models::{
    build_circuit_one_mode, build_ideal, EffectiveParams, PhysicalParams, SymmetricOperator, ThreeModeHamiltonian,
};

/// Gaps below this (GHz) mark a row as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-9;

/// Largest one-mode basis tried by [`converge_dim`].
pub const ONE_MODE_CAP: usize = 1024;

/// Largest three-mode product basis tried by [`converge_dim`].
pub const THREE_MODE_CAP: usize = 200_000;

fn sorted_pairs(values: Vec<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure("eigensolver produced non-finite values".into()))
    }
}

/// All eigenvalues of `h`, ascending.
pub fn eigenvalues(h: &HermitianOperator) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = if h.is_real() {
        h.real_part().symmetric_eigenvalues().iter().copied().collect()
    } else {
        h.matrix().clone().symmetric_eigenvalues().iter().copied().collect()
    };
    check_finite(&v)?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Ascending eigenvalues of a real symmetric matrix.
pub fn real_eigenvalues(h: DMatrix<f64>) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    check_finite(&v)?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Lowest eigenpairs; `vectors` holds one normalized eigenvector per column.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

/// The `k` lowest eigenpairs of `h`, ascending, with orthonormal eigenvectors.
pub fn eigensolve(h: &HermitianOperator, k: usize) -> Result<EigenPairs> {
    let n = h.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    let (values, vectors) = if h.is_real() {
        let e = SymmetricEigen::new(h.real_part());
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let e = SymmetricEigen::new(h.matrix().clone());
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors)
    };
    check_finite(&values)?;
    let order = sorted_pairs(values.clone());
    let picked = &order[..k];
    Ok(EigenPairs {
        values: picked.iter().map(|&i| values[i]).collect(),
        vectors: DMatrix::from_fn(n, k, |r, c| vectors[(r, picked[c])]),
    })
}

/// Settings of the block Davidson solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeOptions {
    /// Residual norm ‖Hx − θx‖ (GHz) at which a Ritz pair is accepted.
    pub tol: f64,
    pub max_iter: usize,
    /// Subspace size that triggers a thick restart.
    pub max_basis: usize,
    /// Block vectors beyond the requested count.
    pub extra: usize,
    /// Use the diagonal (Davidson) preconditioner instead of plain residuals.
    pub precondition: bool,
    /// Operators at or below this size are materialized and solved densely.
    pub dense_below: usize,
    pub seed: u64,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 2000, max_basis: 96, extra: 4, precondition: true, dense_below: 300, seed: 7 }
    }
}

/// Lowest eigenpairs of a real symmetric operator; vectors are columns.
#[derive(Debug, Clone)]
pub struct RealPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Largest final residual norm.
    pub residual: f64,
    pub iterations: usize,
}

fn materialize<O: SymmetricOperator + ?Sized>(op: &O) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    (&m + m.transpose()) * 0.5
}

/// Orthogonalizes `t` against the first `m` columns of `v` (two passes) and normalizes it.
fn orthonormalize_against(v: &DMatrix<f64>, m: usize, t: &mut DVector<f64>) -> bool {
    let before = t.norm();
    if before == 0.0 || !before.is_finite() {
        return false;
    }
    for _ in 0..2 {
        if m > 0 {
            let basis = v.columns(0, m);
            let c = basis.tr_mul(t);
            t.gemv(-1.0, &basis, &c, 1.0);
        }
    }
    let after = t.norm();
    if after <= 1e-10 * before {
        return false;
    }
    *t /= after;
    true
}

/// The `k` lowest eigenpairs of `op` by block Davidson with thick restarts.
pub fn lowest_eigenpairs_iterative<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    opts: &IterativeOptions,
) -> Result<RealPairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    if n <= opts.dense_below.max(k + opts.extra) || n <= 3 * (k + opts.extra) {
        let e = SymmetricEigen::new(materialize(op));
        let values: Vec<f64> = e.eigenvalues.iter().copied().collect();
        check_finite(&values)?;
        let order = sorted_pairs(values.clone());
        return Ok(RealPairs {
            values: order[..k].iter().map(|&i| values[i]).collect(),
            vectors: DMatrix::from_fn(n, k, |r, c| e.eigenvectors[(r, order[c])]),
            residual: 0.0,
            iterations: 0,
        });
    }

    let block = k + opts.extra;
    let max_basis = opts.max_basis.max(3 * block).min(n);
    let diag = op.diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut v = DMatrix::<f64>::zeros(n, max_basis);
    let mut w = DMatrix::<f64>::zeros(n, max_basis);
    let mut m = 0;

    for &i in sorted_pairs(diag.clone()).iter().take(block) {
        let mut t = DVector::from_fn(n, |_, _| {
            0.05 * Distribution::<f64>::sample(&StandardNormal, &mut rng) / (n as f64).sqrt()
        });
        t[i] += 1.0;
        if orthonormalize_against(&v, m, &mut t) {
            v.set_column(m, &t);
            m += 1;
        }
    }

    // columns of v whose images are not yet in w
    let mut fresh = m;
    let mut xbuf = vec![0.0; n];
    let mut ybuf = vec![0.0; n];
    for iter in 1..=opts.max_iter {
        for j in (m - fresh)..m {
            xbuf.copy_from_slice(v.column(j).as_slice());
            op.apply(&xbuf, &mut ybuf);
            w.column_mut(j).copy_from_slice(&ybuf);
        }

        let vb = v.columns(0, m);
        let wb = w.columns(0, m);
        let t = vb.tr_mul(&wb);
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let order = sorted_pairs(eig.eigenvalues.iter().copied().collect());
        let nb = block.min(m);
        let y = DMatrix::from_fn(m, nb, |r, c| eig.eigenvectors[(r, order[c])]);
        let theta: Vec<f64> = order[..nb].iter().map(|&i| eig.eigenvalues[i]).collect();
        let x = vb * &y;
        let hx = wb * &y;

        let mut residuals = Vec::with_capacity(nb);
        let mut worst = 0.0_f64;
        for (c, &th) in theta.iter().enumerate() {
            let r = hx.column(c) - x.column(c) * th;
            let rn = r.norm();
            if c < k {
                worst = worst.max(rn);
            }
            residuals.push((r, rn));
        }
        check_finite(&theta)?;
        if worst <= opts.tol && nb >= k {
            return Ok(RealPairs {
                values: theta[..k].to_vec(),
                vectors: x.columns(0, k).into_owned(),
                residual: worst,
                iterations: iter,
            });
        }

        let pending: Vec<usize> = (0..nb).filter(|&c| residuals[c].1 > opts.tol).collect();
        if m + pending.len() > max_basis {
            // thick restart on the leading Ritz vectors
            let keep = (2 * block).min(m).min(max_basis - pending.len());
            let yk = DMatrix::from_fn(m, keep, |r, c| eig.eigenvectors[(r, order[c])]);
            let nv = vb * &yk;
            let nw = wb * &yk;
            v.columns_mut(0, keep).copy_from(&nv);
            w.columns_mut(0, keep).copy_from(&nw);
            m = keep;
        }

        let mut added = 0;
        for &c in &pending {
            let (r, _) = &residuals[c];
            let mut t = if opts.precondition {
                DVector::from_fn(n, |i, _| {
                    let d = diag[i] - theta[c];
                    let d = if d.abs() < 1e-3 { 1e-3_f64.copysign(d) } else { d };
                    r[i] / d
                })
            } else {
                r.clone()
            };
            if m < max_basis && orthonormalize_against(&v, m, &mut t) {
                v.set_column(m, &t);
                m += 1;
                added += 1;
            }
        }
        if added == 0 {
            let mut t = DVector::from_fn(n, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
            if m < max_basis && orthonormalize_against(&v, m, &mut t) {
                v.set_column(m, &t);
                m += 1;
                added = 1;
            }
        }
        if added == 0 {
            return Err(Error::NumericalFailure(format!("Davidson iteration stagnated at residual {worst:e}")));
        }
        fresh = added;
    }
    Err(Error::NumericalFailure(format!("Davidson iteration did not converge in {} steps", opts.max_iter)))
}

/// The `k` lowest eigenvalues of `op`, ascending.
pub fn lowest_eigenvalues_iterative<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    opts: &IterativeOptions,
) -> Result<Vec<f64>> {
    lowest_eigenpairs_iterative(op, k, opts).map(|p| p.values)
}

/// Adjacent transitions ω_n = E_{n+1} − E_n and shifts δ_n = ω_n − ω_0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
}

pub fn transitions(eigenvalues: &[f64]) -> Result<Transitions> {
    if eigenvalues.len() < 2 {
        return Err(Error::TooFewLevels { needed: 2, got: eigenvalues.len() });
    }
    let omega: Vec<f64> = eigenvalues.windows(2).map(|p| p[1] - p[0]).collect();
    let delta = omega.iter().map(|w| w - omega[0]).collect();
    Ok(Transitions { omega, delta })
}

/// A point (θ_ext, φ_ext) of the flux plane, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxPoint {
    pub theta_ext: f64,
    pub phi_ext: f64,
}

impl FluxPoint {
    pub fn new(theta_ext: f64, phi_ext: f64) -> Self {
        Self { theta_ext, phi_ext }
    }
}

/// Edges of the flux primitive cell joining the four sweet spots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaquetteEdge {
    ThetaZero,
    ThetaPi,
    PhiZero,
    PhiPi,
}

impl PlaquetteEdge {
    /// `points` evenly spaced fluxes with the free flux running over [0, π].
    pub fn path(self, points: usize) -> Vec<FluxPoint> {
        let pi = std::f64::consts::PI;
        let step = |i: usize| if points > 1 { pi * i as f64 / (points - 1) as f64 } else { 0.0 };
        (0..points)
            .map(|i| match self {
                Self::ThetaZero => FluxPoint::new(0.0, step(i)),
                Self::ThetaPi => FluxPoint::new(pi, step(i)),
                Self::PhiZero => FluxPoint::new(step(i), 0.0),
                Self::PhiPi => FluxPoint::new(step(i), pi),
            })
            .collect()
    }
}

/// A Hamiltonian family together with its truncation.
///
/// `Ideal` and `CircuitOneMode` read only φ_ext of a flux point; the circuit
/// one-mode model is defined on the θ_ext = π line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelSpec {
    Ideal { omega: f64, cal_e_j: f64, eta: f64, dim: usize },
    CircuitOneMode { params: EffectiveParams, dim: usize },
    ThreeMode { params: PhysicalParams, dims: [usize; 3] },
}

impl ModelSpec {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Self::Ideal { dim, .. } | Self::CircuitOneMode { dim, .. } => vec![*dim],
            Self::ThreeMode { dims, .. } => dims.to_vec(),
        }
    }

    pub fn with_dims(&self, new: &[usize]) -> Result<Self> {
        let mut s = self.clone();
        match &mut s {
            Self::Ideal { dim, .. } | Self::CircuitOneMode { dim, .. } => {
                let [d] = new else {
                    return Err(Error::DimensionMismatch { expected: 1, got: new.len() });
                };
                *dim = *d;
            }
            Self::ThreeMode { dims, .. } => {
                let [a, b, c] = new else {
                    return Err(Error::DimensionMismatch { expected: 3, got: new.len() });
                };
                *dims = [*a, *b, *c];
            }
        }
        Ok(s)
    }

    /// Dense one-mode matrix at φ_ext; three-mode models are not materialized here.
    pub fn one_mode_operator(&self, phi_ext: f64) -> Result<HermitianOperator> {
        match self {
            Self::Ideal { omega, cal_e_j, eta, dim } => {
                build_ideal(*omega, *cal_e_j, *eta, phi_ext, FockDim::new(*dim)?)
            }
            Self::CircuitOneMode { params, dim } => build_circuit_one_mode(params, phi_ext, FockDim::new(*dim)?),
            Self::ThreeMode { .. } => Err(Error::InvalidParams("three-mode model has no one-mode operator".into())),
        }
    }

    /// The `k` lowest eigenvalues at `flux`, ascending.
    pub fn levels(&self, flux: FluxPoint, k: usize, opts: &IterativeOptions) -> Result<Vec<f64>> {
        match self {
            Self::ThreeMode { params, dims } => {
                let d = [FockDim::new(dims[0])?, FockDim::new(dims[1])?, FockDim::new(dims[2])?];
                let h = ThreeModeHamiltonian::new(&params.with_flux(flux.theta_ext, flux.phi_ext), d)?;
                lowest_eigenvalues_iterative(&h, k, opts)
            }
            _ => {
                let h = self.one_mode_operator(flux.phi_ext)?;
                if k > h.dim() {
                    return Err(Error::TooFewLevels { needed: k, got: h.dim() });
                }
                let mut e = real_eigenvalues(h.real_part())?;
                e.truncate(k);
                Ok(e)
            }
        }
    }
}

/// One flux point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub flux: FluxPoint,
    pub energies: Vec<f64>,
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
    pub degenerate: bool,
    /// Set when this row failed; the other fields are then empty.
    pub error: Option<String>,
}

/// Flux-indexed spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub rows: Vec<SpectrumRow>,
    pub dims: Vec<usize>,
}

impl SpectrumTable {
    pub fn failed_rows(&self) -> impl Iterator<Item = &SpectrumRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }
}

fn row_at(spec: &ModelSpec, flux: FluxPoint, k: usize, opts: &IterativeOptions) -> SpectrumRow {
    let result = spec.levels(flux, k, opts).and_then(|e| transitions(&e).map(|t| (e, t)));
    match result {
        Ok((energies, t)) => SpectrumRow {
            flux,
            degenerate: t.omega.iter().any(|g| g.abs() < DEGENERACY_GAP),
            energies,
            omega: t.omega,
            delta: t.delta,
            error: None,
        },
        Err(e) => SpectrumRow {
            flux,
            energies: vec![],
            omega: vec![],
            delta: vec![],
            degenerate: false,
            error: Some(e.to_string()),
        },
    }
}

/// Spectra (k lowest levels) at each flux point, evaluated in parallel.
pub fn flux_sweep(spec: &ModelSpec, fluxes: &[FluxPoint], k: usize) -> SpectrumTable {
    flux_sweep_with(spec, fluxes, k, &IterativeOptions::default())
}

pub fn flux_sweep_with(spec: &ModelSpec, fluxes: &[FluxPoint], k: usize, opts: &IterativeOptions) -> SpectrumTable {
    let rows = fluxes.par_iter().map(|&f| row_at(spec, f, k, opts)).collect();
    SpectrumTable { rows, dims: spec.dims() }
}

/// Outcome of [`converge_dim`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Basis sizes whose doubling moves every tracked transition by less than `tol`.
    pub dims: Vec<usize>,
    /// Largest transition change seen in the final comparison, per mode.
    pub deltas: Vec<f64>,
    /// Every basis size evaluated, in order.
    pub history: Vec<Vec<usize>>,
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Doubles truncations until the `k` lowest transitions at `flux` move less than `tol` GHz.
///
/// Starts from the sizes in `spec`. For the three-mode model each mode is
/// doubled on its own so that stiff modes stay small.
pub fn converge_dim(spec: &ModelSpec, flux: FluxPoint, k: usize, tol: f64) -> Result<Convergence> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let opts = IterativeOptions { tol: (tol * 1e-3).min(1e-8), ..IterativeOptions::default() };
    let omega_at = |dims: &[usize]| -> Result<Vec<f64>> {
        let e = spec.with_dims(dims)?.levels(flux, k + 1, &opts)?;
        Ok(transitions(&e)?.omega)
    };
    let mut dims = spec.dims();
    let mut history = vec![dims.clone()];
    let mut base = omega_at(&dims)?;
    let cap_hit = |d: &[usize]| -> bool {
        if d.len() == 1 {
            d[0] > ONE_MODE_CAP
        } else {
            d.iter().product::<usize>() > THREE_MODE_CAP
        }
    };
    loop {
        let mut deltas = vec![0.0; dims.len()];
        let mut moved = false;
        for m in 0..dims.len() {
            let mut trial = dims.clone();
            trial[m] *= 2;
            if cap_hit(&trial) {
                return Err(Error::ResourceLimit(format!("basis {trial:?} exceeds the convergence cap")));
            }
            let w = omega_at(&trial)?;
            history.push(trial.clone());
            deltas[m] = max_change(&base, &w);
            if deltas[m] >= tol {
                dims = trial;
                base = w;
                moved = true;
            }
        }
        if !moved {
            return Ok(Convergence { dims, deltas, history });
        }
    }
}
