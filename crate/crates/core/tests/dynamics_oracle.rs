use num_complex::Complex64;
use wgm::conversion::{photon_efficiency, xi_factor};
use wgm::dynamics::*;
use wgm::units::Frequency;

fn lossless_run(tol: f64) -> (f64, f64, usize) {
    let s = ModeAmplitudes::lossless(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.05, 0.02),
        Complex64::new(0.01, -0.03),
        Complex64::new(0.3, 0.1),
    );
    let k = Coupling::both(1.0);
    let periods = 1e4;
    let ts = simulate(&s, &k, periods * 2.0 * std::f64::consts::PI, &SimulateOptions { tolerance: tol, samples: 1000, initial_step: 0.0 }).unwrap();
    let (n0, m0) = (s.optical_photons(), s.manley_rowe());
    let mut dn: f64 = 0.0;
    let mut dm: f64 = 0.0;
    for st in &ts.states {
        dn = dn.max((st.optical_photons() - n0).abs() / n0);
        dm = dm.max((st.manley_rowe() - m0).abs() / m0);
    }
    (dn, dm, ts.steps)
}

#[test]
fn lossless_invariants_conserved() {
    let t = std::time::Instant::now();
    let (dn, dm, steps) = lossless_run(1e-13);
    eprintln!("pump-photon drift {dn:.2e}, Manley-Rowe drift {dm:.2e}, {steps} steps, {:.1}s", t.elapsed().as_secs_f64());
    assert!(dn < 1e-9 && dm < 1e-9);
}

#[test]
fn driven_steady_state_matches_small_signal() {
    let w0 = Frequency::from_rad_per_s(1.2e15);
    let wc = Frequency::from_ghz(100.0);
    let (g, q, q_m, p0) = (150.0, 1e8, 100.0, 0.05);
    let xi = xi_factor(g, q, q_m, w0, wc);
    let p_m = 1e-5 / (2.0 * xi * xi);
    let r = smallsignal_efficiency(g, q, q_m, w0, wc, p0, p_m).unwrap();
    let expect = photon_efficiency(xi, p0, w0, wc);
    eprintln!("dynamics {:.6e} vs formula {expect:.6e}", r.anti_stokes);
    assert!((r.anti_stokes / expect - 1.0).abs() < 0.01);
    assert!(relative_derivative(&r.state, &Coupling::both(g)) < 1e-10);

    let r2 = smallsignal_efficiency(2.0 * g, q, q_m, w0, wc, p0, p_m / 4.0).unwrap();
    assert!((r2.anti_stokes / r.anti_stokes - 4.0).abs() < 0.04);
    let r3 = smallsignal_efficiency(g, q, q_m, w0, wc, p0, p_m / 10.0).unwrap();
    assert!((r3.anti_stokes / r.anti_stokes - 1.0).abs() < 1e-3);
}
