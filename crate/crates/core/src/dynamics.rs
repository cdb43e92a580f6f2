//! Unitary evolution and Wigner functions.
//!
//! Time is in ns and energies in GHz, so a level E picks up the phase
//! e^{−2πiEt}. Phase-space coordinates are the quadratures
//! x = (a + a†)/√2 and p = (a − a†)/(i√2).

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{displacement, FockDim, HermitianOperator, QuantumState, C64};
use crate::spectra::eigensolve;

/// Largest grid-points × displaced-basis² product accepted by [`wigner`].
pub const MAX_WIGNER_WORK: f64 = 2e10;

/// Coherent amplitude whose mirror image |−α⟩ sits one cosine displacement away.
pub fn alpha_for_eta(eta: f64) -> f64 {
    0.5 * eta
}

/// Eigendecomposition of a Hamiltonian, reused across times.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl Propagator {
    pub fn new(h: &HermitianOperator) -> Result<Self> {
        let p = eigensolve(h, h.dim())?;
        Ok(Self { energies: p.values, vectors: p.vectors })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    fn check(&self, state: &QuantumState) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.dim() });
        }
        Ok(())
    }

    /// ψ(t) = Σ_k e^{−2πi E_k t} ⟨k|ψ₀⟩ |k⟩.
    pub fn evolve(&self, state: &QuantumState, t: f64) -> Result<QuantumState> {
        self.check(state)?;
        let mut c = self.vectors.ad_mul(state.amplitudes());
        for (ck, e) in c.iter_mut().zip(&self.energies) {
            *ck *= C64::from_polar(1.0, -2.0 * PI * e * t);
        }
        // renormalize only against round-off; the map itself is unitary
        QuantumState::normalized(&self.vectors * c)
    }

    /// ⟨ψ|H|ψ⟩ from the spectral decomposition.
    pub fn energy(&self, state: &QuantumState) -> Result<f64> {
        self.check(state)?;
        let c = self.vectors.ad_mul(state.amplitudes());
        Ok(c.iter().zip(&self.energies).map(|(ck, e)| ck.norm_sqr() * e).sum())
    }
}

/// Evolves `state` under `h` for `t` ns.
pub fn evolve(state: &QuantumState, h: &HermitianOperator, t: f64) -> Result<QuantumState> {
    if state.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: state.dim() });
    }
    Propagator::new(h)?.evolve(state, t)
}

/// Undoes a free rotation at `freq` GHz: amplitudes pick up e^{+2πi·freq·n·t}.
pub fn to_rotating_frame(state: &QuantumState, freq: f64, t: f64) -> QuantumState {
    let a = DVector::from_fn(state.dim(), |n, _| {
        state.amplitudes()[n] * C64::from_polar(1.0, 2.0 * PI * freq * n as f64 * t)
    });
    QuantumState::normalized(a).expect("phase rotation preserves the norm")
}

/// Rectangular sampling of the (x, p) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self { x_min: -half_width, x_max: half_width, nx: n, p_min: -half_width, p_max: half_width, np: n }
    }

    /// Square grid wide enough for a coherent state of amplitude |α|.
    pub fn for_amplitude(alpha: f64, n: usize) -> Self {
        Self::square(alpha.abs() * SQRT_2 + 4.0, n)
    }

    fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (min + max)];
        }
        (0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.nx >= 1
            && self.np >= 1
            && [self.x_min, self.x_max, self.p_min, self.p_max].iter().all(|v| v.is_finite())
            && self.x_max >= self.x_min
            && self.p_max >= self.p_min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid Wigner grid {self:?}")))
        }
    }
}

/// Sampled Wigner function normalized so that ∫∫ W dx dp = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Row-major over x: `w[ix * p.len() + ip]`.
    pub w: Vec<f64>,
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
            let right = if i + 1 < n { axis[i + 1] - axis[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

impl WignerGrid {
    pub fn at(&self, ix: usize, ip: usize) -> f64 {
        self.w[ix * self.p.len() + ip]
    }

    /// Trapezoidal ∫∫ W dx dp.
    pub fn integral(&self) -> f64 {
        let wx = trapezoid_weights(&self.x);
        self.marginal_x().iter().zip(&wx).map(|(m, w)| m * w).sum()
    }

    /// ∫ W dp at each x sample.
    pub fn marginal_x(&self) -> Vec<f64> {
        let wp = trapezoid_weights(&self.p);
        let np = self.p.len();
        (0..self.x.len()).map(|ix| (0..np).map(|ip| self.at(ix, ip) * wp[ip]).sum()).collect()
    }

    /// Grid point with the largest W.
    pub fn argmax(&self) -> (f64, f64) {
        let i = (0..self.w.len()).max_by(|&a, &b| self.w[a].total_cmp(&self.w[b])).unwrap_or(0);
        let np = self.p.len();
        (self.x[i / np], self.p[i % np])
    }

    pub fn min(&self) -> f64 {
        self.w.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// W(x, p) = (1/π) ⟨D(β) Π D(β)†⟩ with β = (x + ip)/√2 and Π the photon-number parity.
///
/// Each displaced state is formed in a basis padded beyond the state's own
/// truncation so that the parity sum is not cut off.
pub fn wigner(state: &QuantumState, grid: &GridSpec) -> Result<WignerGrid> {
    grid.validate()?;
    let x = GridSpec::axis(grid.x_min, grid.x_max, grid.nx);
    let p = GridSpec::axis(grid.p_min, grid.p_max, grid.np);
    let reach = x.iter().map(|v| v * v).fold(0.0, f64::max) + p.iter().map(|v| v * v).fold(0.0, f64::max);
    let b_max = (0.5 * reach).sqrt();
    let n = state.dim();
    let pad = (b_max * b_max + 8.0 * b_max + 20.0).ceil() as usize;
    let big = n + pad;
    let work = (x.len() * p.len()) as f64 * (big * big) as f64;
    if work > MAX_WIGNER_WORK {
        return Err(Error::ResourceLimit(format!("Wigner grid work {work:e} exceeds {MAX_WIGNER_WORK:e}")));
    }
    let dim = FockDim::new(big)?;
    let psi = state.amplitudes();
    let points: Vec<(f64, f64)> = x.iter().flat_map(|&xi| p.iter().map(move |&pi| (xi, pi))).collect();
    let w = points
        .par_iter()
        .map(|&(xi, pi)| {
            let beta = C64::new(xi, pi) / SQRT_2;
            let d = displacement(-beta, dim);
            let shifted = d.columns(0, n) * psi;
            let parity: f64 =
                shifted.iter().enumerate().map(|(k, c)| if k % 2 == 0 { c.norm_sqr() } else { -c.norm_sqr() }).sum();
            parity / PI
        })
        .collect();
    Ok(WignerGrid { x, p, w })
}

/// |ψ(x)|² in the x quadrature, via normalized Hermite functions.
pub fn position_density(state: &QuantumState, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    let mut amp = C64::new(0.0, 0.0);
    for (k, c) in state.amplitudes().iter().enumerate() {
        amp += c * cur;
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    amp.norm_sqr()
}

/// Settings of [`snapshot_series`].
#[derive(Debug, Clone)]
pub struct SnapshotOptions {
    /// Grid for Wigner snapshots, or `None` for diagnostics only.
    pub grid: Option<GridSpec>,
    /// State whose overlap with ψ(t) is traced, typically |−α⟩.
    pub target: QuantumState,
    /// Frame rotation (GHz) applied before the overlap and the Wigner function.
    pub frame_ghz: f64,
}

/// One time slice of an evolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub norm: f64,
    /// ⟨H⟩ in the lab frame.
    pub energy: f64,
    /// |⟨target|ψ(t)⟩|² in the chosen frame.
    pub overlap: f64,
    pub wigner: Option<WignerGrid>,
}

/// Evolves `state0` under `h` and records a snapshot at each time.
///
/// The overlap with the target is a transfer diagnostic defined by this
/// crate, not a quantity with a standard name.
pub fn snapshot_series(
    state0: &QuantumState,
    h: &HermitianOperator,
    times: &[f64],
    opts: &SnapshotOptions,
) -> Result<Vec<Snapshot>> {
    if opts.target.dim() != state0.dim() {
        return Err(Error::DimensionMismatch { expected: state0.dim(), got: opts.target.dim() });
    }
    let prop = Propagator::new(h)?;
    prop.check(state0)?;
    times
        .par_iter()
        .map(|&t| {
            let lab = prop.evolve(state0, t)?;
            let energy = prop.energy(&lab)?;
            let rot = to_rotating_frame(&lab, opts.frame_ghz, t);
            let overlap = opts.target.overlap(&rot)?.norm_sqr();
            let wigner = opts.grid.as_ref().map(|g| wigner(&rot, g)).transpose()?;
            Ok(Snapshot { t, norm: lab.norm(), energy, overlap, wigner })
        })
        .collect()
}
