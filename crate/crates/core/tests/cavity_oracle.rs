use std::time::Instant;

use wgm::eigen::EigenOptions;
use wgm::emsolver::solve_modes;
use wgm::fem::{assemble_with, RegionIndices};
use wgm::mesh::generate_window_mesh;
use wgm::units::{Frequency, C0};

const A: f64 = 10e-3;
const D: f64 = 10e-3;

fn tm010() -> f64 {
    2.404_825_557_695_773 * C0 / (2.0 * std::f64::consts::PI * A)
}

fn te111() -> f64 {
    let k = ((1.841_183_781_340_659 / A).powi(2) + (std::f64::consts::PI / D).powi(2)).sqrt();
    k * C0 / (2.0 * std::f64::consts::PI)
}

fn nearest(edge: f64, m: u32, exact_hz: f64) -> (f64, f64) {
    let mesh = generate_window_mesh(A, D / 2.0, edge).unwrap();
    let t0 = Instant::now();
    let ops = assemble_with(&mesh, &RegionIndices::vacuum(), m, 4.0).unwrap();
    let modes = solve_modes(&ops, Frequency::from_rad_per_s(2.0 * std::f64::consts::PI * exact_hz), 4, &EigenOptions::default()).unwrap();
    let best = modes
        .iter()
        .filter(|s| s.penalty_fraction < 0.05)
        .min_by(|a, b| (a.omega_c.hz() - exact_hz).abs().total_cmp(&(b.omega_c.hz() - exact_hz).abs()))
        .unwrap();
    ((best.omega_c.hz() - exact_hz) / exact_hz, t0.elapsed().as_secs_f64())
}

fn check(m: u32, exact: f64) {
    let lambda = C0 / exact;
    let (e1, t1) = nearest(lambda / 15.0, m, exact);
    let (e2, t2) = nearest(lambda / 30.0, m, exact);
    assert!(e1.abs() < 5e-3, "m = {m}: error {e1:e} at lambda/15");
    assert!(e1.abs() >= 3.0 * e2.abs(), "m = {m}: error {e1:e} -> {e2:e} on halving the edge");
    assert!(t1 < 60.0 && t2 < 60.0, "m = {m}: solves took {t1:.1} s and {t2:.1} s");
}

#[test]
fn tm010_converges() {
    check(0, tm010());
}

#[test]
fn te111_converges() {
    check(1, te111());
}
