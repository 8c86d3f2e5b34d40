use approx::assert_relative_eq;

use wgm::conversion::*;
use wgm::units::Frequency;

#[test]
fn manley_rowe_photon_efficiency() {
    let eta = manley_rowe_photon_eff(0.005, Frequency::from_wavelength(1560e-9), Frequency::from_ghz(101.12));
    assert_relative_eq!(eta, 2.6e-6, max_relative = 0.05);
}

#[test]
fn sideband_ratio_peaks_at_one_half() {
    let xi = 3.0;
    let p_peak = 1.0 / (2.0 * xi * xi);
    assert_relative_eq!(sideband_ratio(xi, p_peak, false), 0.5, max_relative = 1e-14);
    for k in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
        assert!(sideband_ratio(xi, k * p_peak, false) < 0.5);
    }
}

#[test]
fn small_signal_slope() {
    let xi = 3.0;
    let p_m = 1e-4 / (2.0 * xi * xi);
    let slope = sideband_ratio(xi, p_m, false) / p_m;
    assert_relative_eq!(slope, 4.0 * xi * xi, max_relative = 0.01);
}

#[test]
fn budget_chain_is_consistent() {
    let overlap = OverlapResult {
        overlap: num_complex::Complex64::new(0.5, 0.0),
        v: 1e-12,
        v_c: 1e-9,
        effective_field: 0.5,
    };
    let inputs = ChainInputs {
        conversion_type: wgm::phasematch::ConversionType::TypeI,
        r_pm_per_v: 30.8,
        n_a: 2.138,
        n_b: 2.138,
        n_c: 5.15,
        omega_0: Frequency::from_rad_per_s(1.2e15),
        q: 1e8,
        q_m: 100.0,
        p0: 0.05,
        p_m: 1e-9,
    };
    let wc = Frequency::from_ghz(100.0);
    let b = efficiency_chain(&inputs, wc, overlap).unwrap();
    assert_relative_eq!(b.eta_photon, b.p0 / b.p0_unity, max_relative = 1e-12);
    let half = efficiency_chain(&inputs, wc, OverlapResult { overlap: overlap.overlap * 0.5, effective_field: 0.25, ..overlap }).unwrap();
    assert_relative_eq!(half.g, 0.5 * b.g, max_relative = 1e-12);
    assert_relative_eq!(half.p0_unity, 4.0 * b.p0_unity, max_relative = 1e-12);
    assert!(b.report_csv().starts_with("quantity, value, unit\n"));
}
