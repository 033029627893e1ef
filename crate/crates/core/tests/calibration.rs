//! Self-consistency of the synthetic ensemble against its generating curve.

use std::sync::Arc;

use casimir_core::corrections::SphereGeometry;
use casimir_core::lifshitz::{pressure_curve, PressureCurve, ReflectionKind, ReflectionModel, ThermalState};
use casimir_core::metrology::{
    compare_model, experimental_errors, generate_synthetic_ensemble, ComparisonSetup, Confidence, Distribution, ErrorBudget, ErrorComponent,
    ExclusionSettings, Magnitude, SynthesisSpec,
};
use casimir_core::optics::{Drude, DrudeParameters, PermittivityFn};

fn impedance_curve() -> PressureCurve {
    let eps: PermittivityFn = Arc::new(Drude(DrudeParameters::GOLD));
    let m = ReflectionModel::new(ReflectionKind::Impedance, eps, DrudeParameters::GOLD.omega_p).unwrap();
    let zs: Vec<f64> = (0..=122).map(|i| 150e-9 + i as f64 * 5e-9).collect();
    pressure_curve(&m, &zs, &ThermalState::room(), |_| 0.0).unwrap()
}

fn budget() -> ErrorBudget {
    let c = |l: &str, d, m| ErrorComponent::new(l, d, m).unwrap();
    ErrorBudget::new(vec![
        c("random_relative", Distribution::Normal, Magnitude::Relative(0.006)),
        c("random_absolute", Distribution::Normal, Magnitude::Absolute(1e-5)),
        c("radius", Distribution::Uniform, Magnitude::Relative(1.345e-3)),
        c("resonance_frequency", Distribution::Uniform, Magnitude::Absolute(2e-5)),
    ])
}

#[test]
fn mean_outside_fraction_matches_confidence() {
    let curve = impedance_curve();
    let noise = budget();
    let setup = ComparisonSetup {
        sphere: SphereGeometry::MEASURED,
        dz: 0.6e-9,
        optical_rel: 0.005,
        systematics: noise.clone(),
        confidence: Confidence::P95,
        settings: ExclusionSettings::default(),
    };
    let fractions: Vec<f64> = (0..100u64)
        .map(|seed| {
            let e = generate_synthetic_ensemble(&curve, &noise, &SynthesisSpec::default(), seed).unwrap();
            let errors = experimental_errors(&e, &setup).unwrap();
            compare_model(&e, &errors, &curve, &setup).unwrap().verdict.fraction_outside
        })
        .collect();
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!((0.035..=0.065).contains(&mean), "mean outside fraction {mean}");
}

#[test]
fn zero_noise_lies_on_the_curve() {
    let curve = impedance_curve();
    let e = generate_synthetic_ensemble(&curve, &ErrorBudget::default(), &SynthesisSpec::default(), 3).unwrap();
    for &(z, p) in e.sets.iter().flatten() {
        assert_eq!(p, curve.pressure_at(z).unwrap());
    }
}
