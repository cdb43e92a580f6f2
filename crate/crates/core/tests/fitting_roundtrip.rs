use kite_core::fitting::*;
use kite_core::spectra::*;
use kite_core::{EffectiveParams, Error, PhysicalParams};
use std::f64::consts::PI;
use std::time::Instant;

const SMALL: [usize; 3] = [30, 6, 6];

fn plaquette(per_edge: usize) -> Vec<FluxPoint> {
    [PlaquetteEdge::ThetaPi, PlaquetteEdge::ThetaZero, PlaquetteEdge::PhiPi, PlaquetteEdge::PhiZero]
        .into_iter()
        .flat_map(|e| e.path(per_edge))
        .collect()
}

fn perturbed(p: &PhysicalParams) -> PhysicalParams {
    PhysicalParams {
        e_j: p.e_j * 1.1,
        e_c: p.e_c * 0.9,
        e_l: p.e_l * 1.1,
        eps_l: p.eps_l * 0.9,
        eps_c: p.eps_c * 1.1,
        eps: p.eps * 0.9,
        ..*p
    }
}

fn values(p: &PhysicalParams) -> [f64; 6] {
    [p.e_j, p.e_c, p.e_l, p.eps_l, p.eps_c, p.eps]
}

#[test]
fn freezing_asymmetry_costs_residual() {
    let truth = PhysicalParams::device();
    let spec = ModelSpec::ThreeMode { params: truth, dims: SMALL };
    let data = synthesize(&spec, &plaquette(4), &[0, 1], 0.0, 5).unwrap();
    let init = PhysicalParams { eps: 0.0, ..perturbed(&truth) };
    let opts = FitOptions { max_iter: 40, ..FitOptions::default() };
    let start = Instant::now();
    let frozen = fit_three_mode(&data, &init, &[true, true, true, true, true, false], SMALL, &opts).unwrap();
    let FittedParams::ThreeMode(p) = frozen.params else { panic!() };
    assert_eq!(p.eps, 0.0);
    let full = fit_three_mode(&data, &PhysicalParams { eps: 0.01, ..init }, &[true; 6], SMALL, &opts).unwrap();
    println!(
        "frozen eps rms {:.3e}, full rms {:.3e}, {:.1} s",
        frozen.weighted_rms,
        full.weighted_rms,
        start.elapsed().as_secs_f64()
    );
    assert!(frozen.cost_history.last() < frozen.cost_history.first());
    assert!(full.weighted_rms < 1e-6);
    assert!(frozen.weighted_rms > 10.0 * full.weighted_rms);
    let FittedParams::ThreeMode(q) = full.params else { panic!() };
    for (got, want) in values(&q).into_iter().zip(values(&truth)) {
        assert!(((got - want) / want).abs() < 1e-3, "{got} vs {want}");
    }
}

#[test]
fn single_flux_three_mode_data_is_under_determined() {
    let truth = PhysicalParams::device();
    let spec = ModelSpec::ThreeMode { params: truth, dims: SMALL };
    let same = vec![FluxPoint::new(PI, 0.4); 8];
    let data = synthesize(&spec, &same, &[0, 1], 0.0, 1).unwrap();
    let r = fit_three_mode(&data, &truth, &[true; 6], SMALL, &FitOptions::default());
    assert!(matches!(r, Err(Error::UnderDetermined(_))), "{r:?}");
}

#[test]
fn one_mode_fit_with_noise() {
    let truth = EffectiveParams::device();
    let spec = ModelSpec::CircuitOneMode { params: truth, dim: 150 };
    let line: Vec<FluxPoint> = PlaquetteEdge::ThetaPi.path(25);
    let data = synthesize(&spec, &line, &[0, 1, 2, 3], 0.003, 2024).unwrap();
    let init = EffectiveParams {
        omega: truth.omega * 0.9,
        cal_e_j: truth.cal_e_j * 1.1,
        d_e_j: truth.d_e_j * 0.9,
        eta: truth.eta * 1.1,
    };
    let fit = fit_one_mode(&data, &init, &[true; 4], 150, &FitOptions::default()).unwrap();
    let FittedParams::CircuitOneMode(p) = fit.params else { panic!() };
    for (got, want) in [(p.omega, truth.omega), (p.cal_e_j, truth.cal_e_j), (p.d_e_j, truth.d_e_j), (p.eta, truth.eta)]
    {
        assert!(((got - want) / want).abs() < 0.01, "{got} vs {want}");
    }
    // the residual spread should match the injected noise
    assert!((fit.weighted_rms / 0.003 - 1.0).abs() < 0.25, "{}", fit.weighted_rms);
    let report = residual_report(&fit, &data).unwrap();
    assert_eq!(report.len(), data.len());
    assert!(report.iter().all(|r| r.weight == 1.0));
}

#[test]
fn uncertainties_weight_the_objective() {
    let truth = EffectiveParams::device();
    let spec = ModelSpec::CircuitOneMode { params: truth, dim: 120 };
    let mut data = synthesize(&spec, &PlaquetteEdge::ThetaPi.path(7), &[0, 1], 0.0, 1).unwrap();
    for (i, r) in data.rows.iter_mut().enumerate() {
        r.sigma = Some(if i % 2 == 0 { 0.001 } else { 0.01 });
    }
    let fit = fit_one_mode(&data, &truth, &[false, true, false, false], 120, &FitOptions::default()).unwrap();
    assert!((fit.weights[0] / fit.weights[1] - 100.0).abs() < 1e-9);
    let sw: f64 = fit.weights.iter().sum();
    let want = (fit.residuals.iter().zip(&fit.weights).map(|(r, w)| w * r * r).sum::<f64>() / sw).sqrt();
    assert!((fit.weighted_rms - want).abs() <= 1e-15 + 1e-12 * want);
}
