//! The six subcommands.

use std::path::Path;

use kite_core::dynamics::{alpha_for_eta, snapshot_series, GridSpec, SnapshotOptions};
use kite_core::fitting::{fit_one_mode, fit_three_mode, residual_report, DataRow, FitOptions, SpectroscopyDataset};
use kite_core::fock::{coherent_state, coherent_truncation_ok, FockDim, C64};
use kite_core::reduction::{effective_parameters, mode_transform};
use kite_core::rwa::{j_from_shifts, ladder, shifts_from_j, ShiftVector};
use kite_core::spectra::{converge_dim, eigenvalues, flux_sweep_with, FluxPoint, IterativeOptions, ModelSpec};
use kite_core::EffectiveParams;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::output::{num, OutputDir};

/// Process-level settings shared by every command.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunContext {
    pub seed: Option<u64>,
    pub threads: usize,
}

impl RunContext {
    fn eigen(&self, base: IterativeOptions) -> IterativeOptions {
        IterativeOptions { seed: self.seed.unwrap_or(base.seed), ..base }
    }
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    context: RunContext,
    config: &'a C,
    result: Value,
}

fn sidecar<C: Serialize>(out: &OutputDir, command: &str, ctx: &RunContext, config: &C, result: Value) -> CliResult<()> {
    let s = Sidecar { command, version: env!("CARGO_PKG_VERSION"), context: *ctx, config, result };
    out.write_json(&format!("{command}.json"), &s).map(|_| ())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Checks parameters and truncations before anything runs or is written.
fn validate_model(model: &ModelSpec) -> CliResult<()> {
    match model {
        ModelSpec::Ideal { omega, cal_e_j, eta, dim } => {
            EffectiveParams { omega: *omega, cal_e_j: *cal_e_j, d_e_j: 0.0, eta: *eta }.validate()?;
            FockDim::new(*dim)?;
        }
        ModelSpec::CircuitOneMode { params, dim } => {
            params.validate()?;
            FockDim::new(*dim)?;
        }
        ModelSpec::ThreeMode { params, dims } => {
            params.validate()?;
            for d in dims {
                FockDim::new(*d)?;
            }
        }
    }
    Ok(())
}

pub fn spectrum(cfg: &SpectrumConfig, ctx: &RunContext, out: &Path) -> CliResult<()> {
    validate_model(&cfg.model)?;
    let points = cfg.flux.points()?;
    if cfg.transitions < 1 {
        return Err(CliError::Config("transitions must be at least 1".into()));
    }
    let eigen = ctx.eigen(cfg.eigen);
    let mut model = cfg.model.clone();
    let mut convergence = None;
    if let Some(c) = &cfg.converge {
        let at = c.at.map(|a| FluxPoint::new(a[0], a[1])).unwrap_or(points[0]);
        let found = converge_dim(&model, at, cfg.transitions, c.tol)?;
        model = model.with_dims(&found.dims)?;
        convergence = Some(found);
    }
    let table = flux_sweep_with(&model, &points, cfg.transitions + 1, &eigen);
    let out = OutputDir::create(out)?;
    let rows = table.rows.iter().flat_map(|r| {
        (0..cfg.transitions).map(move |n| {
            let (w, d) = match (r.omega.get(n), r.delta.get(n)) {
                (Some(w), Some(d)) => (num(*w), num(*d)),
                _ => ("nan".into(), "nan".into()),
            };
            vec![num(r.flux.theta_ext), num(r.flux.phi_ext), n.to_string(), w, d]
        })
    });
    out.write_csv("spectrum.csv", &["theta_ext", "phi_ext", "level", "omega_ghz", "delta_ghz"], rows)?;
    let failed: Vec<Value> = table
        .failed_rows()
        .map(|r| json!({ "theta_ext": r.flux.theta_ext, "phi_ext": r.flux.phi_ext, "error": r.error }))
        .collect();
    let degenerate: Vec<[f64; 2]> =
        table.rows.iter().filter(|r| r.degenerate).map(|r| [r.flux.theta_ext, r.flux.phi_ext]).collect();
    let resolved = SpectrumConfig { eigen, ..cfg.clone() };
    let result = json!({
        "dims": table.dims,
        "convergence": convergence,
        "failed_rows": failed,
        "degenerate_rows": degenerate,
    });
    sidecar(&out, "spectrum", ctx, &resolved, result)?;
    if !failed.is_empty() {
        return Err(CliError::Numerical(format!(
            "{} of {} flux points failed; see spectrum.json",
            failed.len(),
            points.len()
        )));
    }
    Ok(())
}

type Rows = Vec<(usize, f64)>;

pub fn ladder_cmd(cfg: &LadderConfig, ctx: &RunContext, out: &Path) -> CliResult<()> {
    let (j_rows, d_rows, result): (Rows, Rows, Value) = match cfg {
        LadderConfig::Analytic { omega, cal_e_j, eta, n_max } => {
            if !cal_e_j.is_finite() || !eta.is_finite() || omega.is_some_and(|w| !w.is_finite()) {
                return Err(CliError::Config("ladder parameters must be finite".into()));
            }
            if *n_max < 2 {
                return Err(CliError::Config("n_max must be at least 2".into()));
            }
            let lad = ladder(*n_max, omega.unwrap_or(0.0), *cal_e_j, *eta)?;
            let shifts = shifts_from_j(&lad, n_max - 1)?;
            let j: Vec<(usize, f64)> = lad.interactions().iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
            let d: Vec<(usize, f64)> = shifts.delta.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
            let omega0 = omega.map(|_| lad.omega0);
            (j, d, json!({ "mode": "analytic", "omega0_ghz": omega0 }))
        }
        LadderConfig::Inversion { delta } => {
            if delta.is_empty() || delta.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("delta must be a non-empty list of finite shifts".into()));
            }
            let j = j_from_shifts(&ShiftVector { delta: delta.clone() })?;
            let j: Vec<(usize, f64)> = j.into_iter().enumerate().map(|(i, v)| (i + 2, v)).collect();
            let d: Vec<(usize, f64)> = delta.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
            (j, d, json!({ "mode": "inversion" }))
        }
    };
    let out = OutputDir::create(out)?;
    out.write_csv("j.csv", &["n", "J_ghz"], j_rows.iter().map(|(n, v)| vec![n.to_string(), num(*v)]))?;
    out.write_csv("delta.csv", &["n", "delta_ghz"], d_rows.iter().map(|(n, v)| vec![n.to_string(), num(*v)]))?;
    sidecar(&out, "ladder", ctx, cfg, result)
}

pub fn reduce(cfg: &ReduceConfig, ctx: &RunContext, out: &Path) -> CliResult<()> {
    let report = effective_parameters(&cfg.params)?;
    let transform = mode_transform(&cfg.params)?;
    let out = OutputDir::create(out)?;
    sidecar(&out, "reduce", ctx, cfg, json!({ "report": report, "transform": transform }))
}

fn complex(a: Amplitude) -> C64 {
    let [re, im] = a.parts();
    C64::new(re, im)
}

pub fn evolve(cfg: &EvolveConfig, ctx: &RunContext, out: &Path) -> CliResult<()> {
    validate_model(&cfg.model)?;
    let (eta, omega) = cfg.eta_and_omega()?;
    if !cfg.phi_ext.is_finite() {
        return Err(CliError::Config("phi_ext must be finite".into()));
    }
    let alpha = cfg.alpha.unwrap_or(Amplitude::Real(alpha_for_eta(eta)));
    let a = complex(alpha);
    let target = cfg.target.unwrap_or(Amplitude::Complex([-a.re, -a.im]));
    let times = match &cfg.times {
        Some(t) => t.clone(),
        None => {
            let n = cfg.snapshots.max(1);
            (0..n).map(|i| if n > 1 { i as f64 / ((n - 1) as f64 * omega) } else { 0.0 }).collect()
        }
    };
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Config("times must be a non-empty list of finite values".into()));
    }
    let grid = cfg.grid.unwrap_or_else(|| GridSpec::for_amplitude(a.norm(), cfg.grid_points));
    let h = cfg.model.one_mode_operator(cfg.phi_ext)?;
    let dim = FockDim::new(h.dim())?;
    if !coherent_truncation_ok(a, dim) {
        eprintln!("warning: basis of {} states is small for |alpha| = {:.3}", h.dim(), a.norm());
    }
    let frame = match cfg.frame_ghz {
        Some(f) => f,
        None => {
            let e = eigenvalues(&h)?;
            e[1] - e[0]
        }
    };
    let opts = SnapshotOptions { grid: Some(grid), target: coherent_state(complex(target), dim), frame_ghz: frame };
    let snaps = snapshot_series(&coherent_state(a, dim), &h, &times, &opts)?;
    let out = OutputDir::create(out)?;
    let mut files = Vec::new();
    for (i, s) in snaps.iter().enumerate() {
        let Some(w) = &s.wigner else { continue };
        let rows =
            w.x.iter().enumerate().flat_map(|(ix, x)| {
                w.p.iter().enumerate().map(move |(ip, p)| vec![num(*x), num(*p), num(w.at(ix, ip))])
            });
        let name = format!("wigner_{i:03}.csv");
        out.write_csv(&name, &["x", "p", "w"], rows)?;
        files.push(json!({ "file": name, "t_ns": s.t, "integral": w.integral() }));
    }
    let rows = snaps
        .iter()
        .enumerate()
        .map(|(i, s)| vec![i.to_string(), num(s.t), num(s.norm), num(s.energy), num(s.overlap)]);
    out.write_csv("overlap.csv", &["index", "t_ns", "norm", "energy_ghz", "overlap"], rows)?;
    let resolved = EvolveConfig {
        alpha: Some(alpha),
        target: Some(target),
        times: Some(times),
        frame_ghz: Some(frame),
        grid: Some(grid),
        ..cfg.clone()
    };
    sidecar(
        &out,
        "evolve",
        ctx,
        &resolved,
        json!({ "snapshots": files, "overlap_metric": "|<target|psi(t)>|^2 in the frame rotating at frame_ghz" }),
    )
}

const REQUIRED: [&str; 4] = ["theta_ext", "phi_ext", "level", "freq_ghz"];

/// Reads `theta_ext,phi_ext,level,freq_ghz[,sigma_ghz]`, columns in any order.
pub fn read_dataset(path: &Path) -> CliResult<SpectroscopyDataset> {
    let err = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| err(e.to_string()))?;
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| err(format!("dataset is missing required column '{name}'")))?;
    }
    let sigma = col("sigma_ghz");
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |i: usize, name: &str| -> CliResult<&str> {
            rec.get(i).ok_or_else(|| err(format!("row {}: missing value for '{name}'", line + 1)))
        };
        let float = |i: usize, name: &str| -> CliResult<f64> {
            let s = field(i, name)?;
            s.parse::<f64>().map_err(|_| err(format!("row {}: '{s}' is not a number in column '{name}'", line + 1)))
        };
        let level_text = field(idx[2], "level")?;
        let level = level_text
            .parse::<usize>()
            .map_err(|_| err(format!("row {}: level '{level_text}' is not a non-negative integer", line + 1)))?;
        let sigma = match sigma.map(|i| field(i, "sigma_ghz")).transpose()? {
            Some("") | None => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| err(format!("row {}: '{s}' is not a number in column 'sigma_ghz'", line + 1)))?,
            ),
        };
        rows.push(DataRow {
            theta_ext: float(idx[0], "theta_ext")?,
            phi_ext: float(idx[1], "phi_ext")?,
            level,
            freq: float(idx[3], "freq_ghz")?,
            sigma,
        });
    }
    SpectroscopyDataset::new(rows).map_err(|e| err(e.to_string()))
}

pub fn fit(
    cfg: &FitConfig,
    config_path: &Path,
    extra_frozen: &[String],
    ctx: &RunContext,
    out: &Path,
) -> CliResult<()> {
    let mut cfg = cfg.clone();
    for f in extra_frozen {
        if !cfg.freeze.contains(f) {
            cfg.freeze.push(f.clone());
        }
    }
    let mask = cfg.mask()?;
    let data_path = if cfg.data.is_absolute() {
        cfg.data.clone()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(&cfg.data)
    };
    let data = read_dataset(&data_path)?;
    let opts = FitOptions {
        method: cfg.method,
        max_iter: cfg.max_iter,
        eigen: ctx.eigen(IterativeOptions::default()),
        ..FitOptions::default()
    };
    let result = match &cfg.model {
        FitModel::CircuitOneMode { init, dim } => {
            init.validate()?;
            FockDim::new(*dim)?;
            let m: [bool; 4] = mask.clone().try_into().expect("four one-mode parameters");
            fit_one_mode(&data, init, &m, *dim, &opts)?
        }
        FitModel::ThreeMode { init, dims } => {
            init.validate()?;
            for d in dims {
                FockDim::new(*d)?;
            }
            let m: [bool; 6] = mask.clone().try_into().expect("six three-mode parameters");
            fit_three_mode(&data, init, &m, *dims, &opts)?
        }
    };
    let report = residual_report(&result, &data)?;
    let out = OutputDir::create(out)?;
    let rows = report.iter().map(|r| {
        vec![
            num(r.theta_ext),
            num(r.phi_ext),
            r.level.to_string(),
            num(r.observed),
            num(r.model),
            num(r.residual),
            num(r.weight),
        ]
    });
    out.write_csv(
        "residuals.csv",
        &["theta_ext", "phi_ext", "level", "observed_ghz", "model_ghz", "residual_ghz", "weight"],
        rows,
    )?;
    let free: Vec<&str> = cfg.model.names().iter().zip(&mask).filter(|(_, m)| **m).map(|(n, _)| *n).collect();
    sidecar(&out, "fit", ctx, &cfg, json!({ "free": free, "rows": data.len(), "fit": to_value(&result) }))
}

pub fn converge(cfg: &ConvergeConfig, ctx: &RunContext, out: &Path) -> CliResult<()> {
    validate_model(&cfg.model)?;
    if !cfg.flux.iter().all(|v| v.is_finite()) {
        return Err(CliError::Config("flux must be finite".into()));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(CliError::Config(format!("tol must be positive, got {}", cfg.tol)));
    }
    let c = converge_dim(&cfg.model, FluxPoint::new(cfg.flux[0], cfg.flux[1]), cfg.transitions, cfg.tol)?;
    let out = OutputDir::create(out)?;
    sidecar(&out, "converge", ctx, cfg, to_value(&c))
}
