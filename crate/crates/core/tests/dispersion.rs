use casimir_core::optics::{
    load_optical_table, log_grid, permittivity_imag_axis, DrudeParameters, FrequencyUnit, OpticalDataset, Permittivity, Tabulated,
};

const AU_TABLE: &str = include_str!("../data/au_drude_synthetic.txt");

fn drude_closed_form(d: DrudeParameters, xi: f64) -> f64 {
    1.0 + d.omega_p * d.omega_p / (xi * (xi + d.gamma))
}

#[test]
fn shipped_table_matches_drude_closed_form() {
    let ds = load_optical_table(AU_TABLE, None).unwrap();
    assert_eq!(ds.points().len(), 401);
    let d = DrudeParameters::GOLD;
    let eps = Tabulated::new(ds, d);
    let mut worst: f64 = 0.0;
    for xi in log_grid(1e13, 1e17, 41) {
        let v = eps.epsilon(xi).unwrap();
        let r = (v / drude_closed_form(d, xi) - 1.0).abs();
        worst = worst.max(r);
    }
    assert!(worst < 5e-3, "worst relative deviation {worst:e}");
}

#[test]
fn unit_override_rescales_frequencies() {
    let ds = load_optical_table(AU_TABLE, None).unwrap();
    let as_rad = load_optical_table(AU_TABLE, Some(FrequencyUnit::RadPerSecond)).unwrap();
    let r = as_rad.omega_min() / ds.omega_min();
    assert!((r * 1.519267e15 - 1.0).abs() < 1e-9);
}

#[test]
fn dense_synthetic_tables_converge() {
    let d = DrudeParameters::new(9.0e15, 3.5e13).unwrap();
    let coarse = OpticalDataset::drude_synthetic(d, &log_grid(1e12, 1e18, 120)).unwrap();
    let fine = OpticalDataset::drude_synthetic(d, &log_grid(1e12, 1e18, 960)).unwrap();
    for xi in [1e13, 3e14, 1e16, 1e17] {
        let exact = drude_closed_form(d, xi);
        let ec = (permittivity_imag_axis(&coarse, d, xi).unwrap() / exact - 1.0).abs();
        let ef = (permittivity_imag_axis(&fine, d, xi).unwrap() / exact - 1.0).abs();
        assert!(ef <= ec + 1e-6, "xi {xi:e}: fine {ef:e} coarse {ec:e}");
        assert!(ef < 1e-3, "xi {xi:e}: {ef:e}");
    }
}

#[test]
fn malformed_table_reports_line() {
    let raw = "# Au\n#unit: eV\n1.0 2.0 3.0\n2.0 x 3.0\n";
    let err = load_optical_table(raw, None).unwrap_err().to_string();
    assert!(err.contains("line 4"), "{err}");
}
