use std::f64::consts::TAU;

use biphoton::cavity::{averaged_interferogram, effective_visibility, WaveguideConfig};
use biphoton::dispersion::DispersionModel;
use biphoton::fitting::{fit_hom_interferogram, initial_guess};
use biphoton::hom::{HomQuadrature, Interferogram};
use biphoton::phasematch::{envelope_width, solve_central_frequencies, spectral_separation_mu, PumpConfig};
use biphoton::spectrum::{build_joint_spectrum, extract_population_p, GridSpec};
use biphoton::tomography::build_density_matrix;

const PS: f64 = 1e-12;

fn delays(half_ps: f64, step_ps: f64) -> Vec<f64> {
    let n = (2.0 * half_ps / step_ps).round() as usize;
    (0..=n).map(|k| (-half_ps + step_ps * k as f64) * PS).collect()
}

#[test]
fn simulated_interferogram_fits_back_to_the_source_parameters() {
    let pump = PumpConfig::paper_device();
    let model = DispersionModel::paper_device();
    let js = build_joint_spectrum(&pump, &model, &GridSpec::default()).unwrap();
    let taus = delays(30.0, 0.05);
    let values = HomQuadrature::new(&js).interferogram(&taus).unwrap();
    let data = Interferogram::probability(taus, values).unwrap();
    let fit = fit_hom_interferogram(&data, &initial_guess(&data).unwrap(), &Default::default()).unwrap();

    let mu = spectral_separation_mu(&pump, &model);
    let dt = envelope_width(&pump, &model);
    assert!((fit.params.visibility - 1.0).abs() < 1e-6, "{}", fit.params.visibility);
    assert!((fit.params.mu / mu.abs() - 1.0).abs() < 1e-6);
    assert!((fit.params.delta_tau / dt - 1.0).abs() < 1e-6);

    // beat frequency equals the separation of the two interactions' signals
    let pt = solve_central_frequencies(&pump, &model).unwrap();
    let beat = (pt.omega_s_hv - pt.omega_s_vh).abs();
    assert!((beat / fit.params.mu - 1.0).abs() < 0.05, "{beat} vs {}", fit.params.mu);
    assert!((TAU / fit.params.mu / PS - 1.354).abs() < 1e-3);

    // a balanced source with the fitted visibility is maximally entangled
    let p = extract_population_p(&js.jsi_grid(), js.center()).unwrap();
    let rho = build_density_matrix(p, fit.params.visibility.min(2.0 * (p * (1.0 - p)).sqrt()), 0.0).unwrap();
    assert!((rho.concurrence() - 1.0).abs() < 1e-5);
    assert!(rho.self_check() < 1e-12);
}

#[test]
fn facet_reflections_lower_the_fitted_visibility() {
    let pump = PumpConfig::paper_device();
    let model = DispersionModel::paper_device();
    let js = build_joint_spectrum(&pump, &model, &GridSpec { points: 768, n_sigma: 5.0 }).unwrap();
    let out = delays(15.0, 0.25);
    let v: Vec<f64> = [0.0, 0.03, 0.1]
        .iter()
        .map(|&r| {
            let wg = WaveguideConfig::paper_device().with_reflectivity(r).unwrap();
            effective_visibility(&averaged_interferogram(&js, &wg, &pump, &out).unwrap()).unwrap()
        })
        .collect();
    assert!(v[0] > 0.999, "{v:?}");
    assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
    let tomo = build_density_matrix(0.5, v[2], 0.0).unwrap();
    assert!(tomo.fidelity_to_ideal() < build_density_matrix(0.5, v[0], 0.0).unwrap().fidelity_to_ideal());
}
