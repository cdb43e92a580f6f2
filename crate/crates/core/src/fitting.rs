//! Spectroscopy datasets and nonlinear least-squares parameter extraction.
//!
//! A dataset row `(θ_ext, φ_ext, n, f)` records the adjacent transition
//! ω_n = E_{n+1} − E_n observed at frequency f. Fits minimize
//! Σ w_i (f_i − ω_{n_i})² with w_i = 1/σ_i² when uncertainties are given and
//! w_i = 1 otherwise.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{EffectiveParams, PhysicalParams};
use crate::spectra::{FluxPoint, IterativeOptions, ModelSpec};

/// One observed transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub theta_ext: f64,
    pub phi_ext: f64,
    pub level: usize,
    pub freq: f64,
    pub sigma: Option<f64>,
}

impl DataRow {
    pub fn flux(&self) -> FluxPoint {
        FluxPoint::new(self.theta_ext, self.phi_ext)
    }

    pub fn weight(&self) -> f64 {
        self.sigma.map_or(1.0, |s| 1.0 / (s * s))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyDataset {
    pub rows: Vec<DataRow>,
}

impl SpectroscopyDataset {
    pub fn new(rows: Vec<DataRow>) -> Result<Self> {
        let d = Self { rows };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if !(r.freq > 0.0) || !r.freq.is_finite() {
                return Err(Error::InvalidParams(format!("row {i}: frequency must be positive, got {}", r.freq)));
            }
            if !r.theta_ext.is_finite() || !r.phi_ext.is_finite() {
                return Err(Error::InvalidParams(format!("row {i}: fluxes must be finite")));
            }
            if let Some(s) = r.sigma {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::InvalidParams(format!("row {i}: uncertainty must be positive, got {s}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of distinct (flux, level) combinations.
    pub fn distinct_rows(&self) -> usize {
        let mut keys: Vec<(u64, u64, usize)> =
            self.rows.iter().map(|r| (r.theta_ext.to_bits(), r.phi_ext.to_bits(), r.level)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }
}

/// Model transitions at each row, sharing one diagonalization per distinct flux.
pub fn model_frequencies(spec: &ModelSpec, rows: &[DataRow], opts: &IterativeOptions) -> Result<Vec<f64>> {
    let mut groups: BTreeMap<(u64, u64), (FluxPoint, usize)> = BTreeMap::new();
    for r in rows {
        let e = groups.entry((r.theta_ext.to_bits(), r.phi_ext.to_bits())).or_insert((r.flux(), 0));
        e.1 = e.1.max(r.level + 2);
    }
    let keys: Vec<((u64, u64), (FluxPoint, usize))> = groups.into_iter().collect();
    let levels: Vec<Result<Vec<f64>>> = keys.par_iter().map(|(_, (f, k))| spec.levels(*f, *k, opts)).collect();
    let mut table = BTreeMap::new();
    for ((key, _), e) in keys.into_iter().zip(levels) {
        table.insert(key, e?);
    }
    Ok(rows
        .iter()
        .map(|r| {
            let e = &table[&(r.theta_ext.to_bits(), r.phi_ext.to_bits())];
            e[r.level + 1] - e[r.level]
        })
        .collect())
}

/// Model transitions plus independent N(0, σ²) noise, reproducible from `seed`.
pub fn synthesize(
    spec: &ModelSpec,
    fluxes: &[FluxPoint],
    levels: &[usize],
    sigma: f64,
    seed: u64,
) -> Result<SpectroscopyDataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParams(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let rows: Vec<DataRow> = fluxes
        .iter()
        .flat_map(|f| {
            levels.iter().map(move |&level| DataRow {
                theta_ext: f.theta_ext,
                phi_ext: f.phi_ext,
                level,
                freq: 0.0,
                sigma: None,
            })
        })
        .collect();
    if rows.is_empty() {
        return Ok(SpectroscopyDataset::default());
    }
    let exact = model_frequencies(spec, &rows, &IterativeOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let rows = rows
        .into_iter()
        .zip(exact)
        .map(|(r, f)| DataRow { freq: f + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 }, ..r })
        .collect();
    SpectroscopyDataset::new(rows)
}

/// Optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LevenbergMarquardt,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: Method,
    pub max_iter: usize,
    /// Relative cost reduction below which an accepted step ends the fit.
    pub ftol: f64,
    /// Step size (transformed coordinates) below which the fit ends.
    pub xtol: f64,
    /// Relative central-difference step.
    pub jacobian_step: f64,
    pub eigen: IterativeOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: Method::LevenbergMarquardt,
            max_iter: 200,
            ftol: 1e-12,
            xtol: 1e-12,
            jacobian_step: 1e-4,
            eigen: IterativeOptions::default(),
        }
    }
}

/// Fitted parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum FittedParams {
    CircuitOneMode(EffectiveParams),
    ThreeMode(PhysicalParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FittedParams,
    /// observed − model, GHz, in dataset order.
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
    /// √(Σ w r² / Σ w).
    pub weighted_rms: f64,
    pub iterations: usize,
    pub final_step_norm: f64,
    /// Objective ½Σ w r² after every accepted step, starting from the initial point.
    pub cost_history: Vec<f64>,
    pub method: Method,
    pub dims: Vec<usize>,
}

/// Per-row comparison of data and fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub theta_ext: f64,
    pub phi_ext: f64,
    pub level: usize,
    pub observed: f64,
    pub model: f64,
    pub residual: f64,
    pub weight: f64,
}

pub fn weighted_rms(residuals: &[f64], weights: &[f64]) -> f64 {
    let sw: f64 = weights.iter().sum();
    if sw == 0.0 {
        return 0.0;
    }
    (residuals.iter().zip(weights).map(|(r, w)| w * r * r).sum::<f64>() / sw).sqrt()
}

pub fn residual_report(fit: &FitResult, data: &SpectroscopyDataset) -> Result<Vec<ResidualRow>> {
    if fit.residuals.len() != data.len() || fit.weights.len() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "fit has {} residuals but the dataset has {} rows",
            fit.residuals.len(),
            data.len()
        )));
    }
    Ok(data
        .rows
        .iter()
        .zip(fit.residuals.iter().zip(&fit.weights))
        .map(|(r, (&res, &w))| ResidualRow {
            theta_ext: r.theta_ext,
            phi_ext: r.phi_ext,
            level: r.level,
            observed: r.freq,
            model: r.freq - res,
            residual: res,
            weight: w,
        })
        .collect())
}

/// How one parameter is represented inside the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    /// x = ln(value); keeps positive quantities positive.
    Log,
    Raw,
}

impl Coord {
    fn to_x(self, v: f64) -> f64 {
        match self {
            Self::Log => v.ln(),
            Self::Raw => v,
        }
    }
    fn to_value(self, x: f64) -> f64 {
        match self {
            Self::Log => x.exp(),
            Self::Raw => x,
        }
    }
    fn step(self, x: f64, rel: f64) -> f64 {
        match self {
            Self::Log => rel,
            Self::Raw => rel * x.abs().max(1e-2),
        }
    }
}

/// Least-squares problem in the free coordinates.
struct Problem<'a> {
    data: &'a SpectroscopyDataset,
    sqrt_w: Vec<f64>,
    full: Vec<f64>,
    coords: Vec<Coord>,
    free: Vec<usize>,
    build: &'a (dyn Fn(&[f64]) -> Result<ModelSpec> + Sync),
    eigen: IterativeOptions,
}

impl Problem<'_> {
    fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.full.clone();
        for (&i, &xi) in self.free.iter().zip(x) {
            v[i] = self.coords[i].to_value(xi);
        }
        v
    }

    fn x0(&self) -> Vec<f64> {
        self.free.iter().map(|&i| self.coords[i].to_x(self.full[i])).collect()
    }

    /// Unweighted observed − model.
    fn raw_residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let spec = (self.build)(&self.values(x))?;
        let model = model_frequencies(&spec, &self.data.rows, &self.eigen)?;
        Ok(self.data.rows.iter().zip(model).map(|(r, m)| r.freq - m).collect())
    }

    fn residuals(&self, x: &[f64]) -> Option<DVector<f64>> {
        let r = self.raw_residuals(x).ok()?;
        let v = DVector::from_iterator(r.len(), r.iter().zip(&self.sqrt_w).map(|(r, s)| r * s));
        v.iter().all(|e| e.is_finite()).then_some(v)
    }

    fn jacobian(&self, x: &[f64], rel: f64) -> Result<DMatrix<f64>> {
        let cols: Vec<Result<DVector<f64>>> = (0..x.len())
            .into_par_iter()
            .map(|j| {
                let h = self.coords[self.free[j]].step(x[j], rel);
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                match (self.residuals(&xp), self.residuals(&xm)) {
                    (Some(a), Some(b)) => Ok((a - b) / (2.0 * h)),
                    _ => Err(Error::NumericalFailure(format!(
                        "forward model failed while differentiating parameter {j}"
                    ))),
                }
            })
            .collect();
        let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

struct Outcome {
    x: Vec<f64>,
    iterations: usize,
    step: f64,
    history: Vec<f64>,
}

fn check_rank(j: &DMatrix<f64>) -> Result<()> {
    // scale columns so the test is insensitive to parameter units
    let mut s = j.clone();
    for mut c in s.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    let sv = s.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= 1e-9 * max {
        return Err(Error::UnderDetermined(format!("Jacobian is rank deficient (singular values {min:e} / {max:e})")));
    }
    Ok(())
}

fn levenberg_marquardt(p: &Problem, opts: &FitOptions) -> Result<Outcome> {
    let mut x = p.x0();
    let mut r =
        p.residuals(&x).ok_or_else(|| Error::NumericalFailure("forward model failed at the initial point".into()))?;
    let mut c = cost(&r);
    let mut history = vec![c];
    let mut j = p.jacobian(&x, opts.jacobian_step)?;
    check_rank(&j)?;
    let mut a = j.tr_mul(&j);
    let mut g = j.tr_mul(&r);
    let mut mu = 1e-3 * a.diagonal().max();
    let mut nu = 2.0;

    for iter in 1..=opts.max_iter {
        let mut damped = a.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += mu * a[(i, i)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let delta = chol.solve(&(-&g));
        let last_step = delta.norm();
        let xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        let trial = p.residuals(&xn);
        let predicted = -(delta.dot(&g) + 0.5 * delta.dot(&(&a * &delta)));
        match trial {
            Some(rn) if cost(&rn) < c => {
                let cn = cost(&rn);
                let rho = if predicted > 0.0 { (c - cn) / predicted } else { 1.0 };
                let reduction = (c - cn) / c.max(f64::MIN_POSITIVE);
                x = xn;
                r = rn;
                c = cn;
                history.push(c);
                mu *= (1.0_f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                if reduction < opts.ftol || last_step < opts.xtol * (1.0 + norm(&x)) || c == 0.0 {
                    return Ok(Outcome { x, iterations: iter, step: last_step, history });
                }
                j = p.jacobian(&x, opts.jacobian_step)?;
                a = j.tr_mul(&j);
                g = j.tr_mul(&r);
            }
            _ => {
                if last_step < opts.xtol * (1.0 + norm(&x)) {
                    return Ok(Outcome { x, iterations: iter, step: last_step, history });
                }
                mu *= nu;
                nu *= 2.0;
            }
        }
    }
    Err(Error::NumericalFailure(format!(
        "Levenberg-Marquardt did not converge in {} iterations (cost {c:e})",
        opts.max_iter
    )))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn nelder_mead(p: &Problem, opts: &FitOptions) -> Result<Outcome> {
    let f = |x: &[f64]| p.residuals(x).map_or(f64::INFINITY, |r| cost(&r));
    let x0 = p.x0();
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
    for i in 0..n {
        let mut v = x0.clone();
        v[i] += match p.coords[p.free[i]] {
            Coord::Log => 0.05,
            Coord::Raw => 0.05 * x0[i].abs().max(0.2),
        };
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.par_iter().map(|v| f(v)).collect();
    if !vals[0].is_finite() {
        return Err(Error::NumericalFailure("forward model failed at the initial point".into()));
    }
    let mut history = vec![vals[0]];
    let max_iter = opts.max_iter * 50;
    for iter in 1..=max_iter {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if *history.last().unwrap() > vals[0] {
            history.push(vals[0]);
        }
        let spread = (vals[n] - vals[0]).abs();
        let size = simplex[1..]
            .iter()
            .map(|v| norm(&v.iter().zip(&simplex[0]).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        if spread <= opts.ftol * vals[0].abs() + 1e-300 || size < opts.xtol {
            return Ok(Outcome { x: simplex[0].clone(), iterations: iter, step: size, history });
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        v[k] = best[k] + 0.5 * (v[k] - best[k]);
                    }
                }
                let new: Vec<f64> = simplex[1..].par_iter().map(|v| f(v)).collect();
                vals[1..].copy_from_slice(&new);
            }
        }
    }
    Err(Error::NumericalFailure(format!("Nelder-Mead did not converge in {max_iter} iterations")))
}

fn run_fit(
    data: &SpectroscopyDataset,
    full: Vec<f64>,
    coords: Vec<Coord>,
    mask: &[bool],
    build: &(dyn Fn(&[f64]) -> Result<ModelSpec> + Sync),
    opts: &FitOptions,
) -> Result<(Vec<f64>, FitResult)> {
    data.validate()?;
    if mask.len() != full.len() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries, model has {} parameters",
            mask.len(),
            full.len()
        )));
    }
    let free: Vec<usize> = (0..full.len()).filter(|&i| mask[i]).collect();
    if free.is_empty() {
        return Err(Error::InvalidParams("mask leaves no free parameters".into()));
    }
    let distinct = data.distinct_rows();
    if distinct < free.len() {
        return Err(Error::UnderDetermined(format!(
            "{distinct} distinct (flux, level) rows for {} free parameters",
            free.len()
        )));
    }
    let sqrt_w = data.rows.iter().map(|r| r.weight().sqrt()).collect();
    let problem = Problem { data, sqrt_w, full, coords, free, build, eigen: opts.eigen };
    let out = match opts.method {
        Method::LevenbergMarquardt => levenberg_marquardt(&problem, opts)?,
        Method::NelderMead => nelder_mead(&problem, opts)?,
    };
    let values = problem.values(&out.x);
    let spec = build(&values)?;
    let residuals = problem.raw_residuals(&out.x)?;
    let weights: Vec<f64> = data.rows.iter().map(DataRow::weight).collect();
    let rms = weighted_rms(&residuals, &weights);
    let placeholder = FittedParams::CircuitOneMode(EffectiveParams { omega: 0.0, cal_e_j: 0.0, d_e_j: 0.0, eta: 0.0 });
    Ok((
        values,
        FitResult {
            params: placeholder,
            residuals,
            weights,
            weighted_rms: rms,
            iterations: out.iterations,
            final_step_norm: out.step,
            cost_history: out.history,
            method: opts.method,
            dims: spec.dims(),
        },
    ))
}

fn coord_for(v: f64) -> Coord {
    if v > 0.0 {
        Coord::Log
    } else {
        Coord::Raw
    }
}

/// Fits (Ω, 𝓔_J, δE_J, η) of the circuit one-mode model to θ_ext = π data.
///
/// `mask[i]` frees parameter i in that order. Positive parameters are
/// optimized in log space; a parameter starting at or below zero stays linear.
pub fn fit_one_mode(
    data: &SpectroscopyDataset,
    init: &EffectiveParams,
    mask: &[bool; 4],
    dim: usize,
    opts: &FitOptions,
) -> Result<FitResult> {
    init.validate()?;
    for (i, r) in data.rows.iter().enumerate() {
        let off = (r.theta_ext - std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI);
        if off.min(2.0 * std::f64::consts::PI - off) > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "row {i}: one-mode fits need theta_ext = pi, got {}",
                r.theta_ext
            )));
        }
    }
    let full = vec![init.omega, init.cal_e_j, init.d_e_j, init.eta];
    let coords = full.iter().map(|&v| coord_for(v)).collect();
    let build = move |v: &[f64]| -> Result<ModelSpec> {
        let params = EffectiveParams { omega: v[0], cal_e_j: v[1], d_e_j: v[2], eta: v[3] };
        params.validate()?;
        Ok(ModelSpec::CircuitOneMode { params, dim })
    };
    let (v, mut fit) = run_fit(data, full, coords, mask, &build, opts)?;
    fit.params = FittedParams::CircuitOneMode(EffectiveParams { omega: v[0], cal_e_j: v[1], d_e_j: v[2], eta: v[3] });
    Ok(fit)
}

/// Fits (E_J, E_C, E_L, ε_L, ε_C, ε) of the three-mode model; fluxes are fixed per row.
///
/// Each objective evaluation diagonalizes the three-mode operator once per
/// distinct flux, and a Levenberg-Marquardt iteration needs 2·(free) + 1
/// evaluations for the Jacobian and trial step.
pub fn fit_three_mode(
    data: &SpectroscopyDataset,
    init: &PhysicalParams,
    mask: &[bool; 6],
    dims: [usize; 3],
    opts: &FitOptions,
) -> Result<FitResult> {
    init.validate()?;
    let full = vec![init.e_j, init.e_c, init.e_l, init.eps_l, init.eps_c, init.eps];
    let mut coords: Vec<Coord> = full.iter().map(|&v| coord_for(v)).collect();
    coords[5] = Coord::Raw;
    let base = *init;
    let build = move |v: &[f64]| -> Result<ModelSpec> {
        let params = PhysicalParams { e_j: v[0], e_c: v[1], e_l: v[2], eps_l: v[3], eps_c: v[4], eps: v[5], ..base };
        params.validate()?;
        Ok(ModelSpec::ThreeMode { params, dims })
    };
    let (v, mut fit) = run_fit(data, full, coords, mask, &build, opts)?;
    fit.params = FittedParams::ThreeMode(PhysicalParams {
        e_j: v[0],
        e_c: v[1],
        e_l: v[2],
        eps_l: v[3],
        eps_c: v[4],
        eps: v[5],
        ..base
    });
    Ok(fit)
}
