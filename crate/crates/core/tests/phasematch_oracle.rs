use std::f64::consts::PI;

use wgm::materials::{lithium_niobate, lithium_tantalate};
use wgm::phasematch::*;
use wgm::units::Frequency;

const R: f64 = 2.9e-3;
const H: f64 = 292e-6;

fn pump() -> Frequency {
    Frequency::from_rad_per_s(1.2e15)
}

fn type_ii(n_a: f64, n_b: f64, coeff: f64, branch: Branch) -> LineParams {
    LineParams {
        r: R,
        n_a,
        n_b,
        omega_a: pump(),
        branch,
        conversion_type: ConversionType::TypeII,
        height: H,
        bias_coefficient_pm_per_v: coeff,
    }
}

#[test]
fn type_i_line_near_100_ghz_at_13() {
    let p = LineParams::type_i(R, 2.138, pump());
    let f = phasematch_line(13, &p, 0.0) / (2.0 * PI) * 1e-9;
    assert!((f - 100.1).abs() <= 0.5, "{f}");
}

#[test]
fn lithium_niobate_offset_is_terahertz() {
    let ln = lithium_niobate();
    for (n_a, n_b) in [(ln.n_opt_e, ln.n_opt_o), (ln.n_opt_o, ln.n_opt_e)] {
        let p = type_ii(n_a, n_b, ln.bias_tuning_coefficient(), Branch::AntiStokes);
        let thz = p.birefringence_offset().abs() / (2.0 * PI) * 1e-12;
        assert!((thz - 6.6).abs() < 0.05 * 6.6, "{thz}");
    }
}

#[test]
fn lithium_tantalate_offset_and_bias_slope() {
    let lt = lithium_tantalate();
    let p = type_ii(lt.n_opt_e, lt.n_opt_o, lt.bias_tuning_coefficient(), Branch::AntiStokes);
    let ghz = p.birefringence_offset() / (2.0 * PI) * 1e-9;
    assert!((ghz + 366.0).abs() < 2.0, "{ghz}");
    let mhz_per_v = p.bias_sensitivity() / (2.0 * PI) * 1e-6;
    assert!((mhz_per_v + 32.0).abs() < 1.0, "{mhz_per_v}");
}

/// With the offset beyond bias reach, no dispersion value in a physical
/// range can be matched on either branch.
#[test]
fn lithium_niobate_type_ii_has_no_match() {
    let ln = lithium_niobate();
    let table: Vec<(u32, Frequency)> = (5..=60).map(|l| (l, Frequency::from_ghz(7.7 * l as f64))).collect();
    let search = MatchSearch { tolerance: 2.0 * PI * 1e9, max_bias_volts: 300.0 };
    for branch in [Branch::AntiStokes, Branch::Stokes] {
        for (n_a, n_b) in [(ln.n_opt_e, ln.n_opt_o), (ln.n_opt_o, ln.n_opt_e)] {
            let p = type_ii(n_a, n_b, ln.bias_tuning_coefficient(), branch);
            assert!(find_matches(&table, &p, &search).is_empty());
        }
    }
}

#[test]
fn bias_solution_closes_the_gap() {
    let lt = lithium_tantalate();
    let p = type_ii(lt.n_opt_e, lt.n_opt_o, lt.bias_tuning_coefficient(), Branch::AntiStokes);
    let target = Frequency::from_ghz(232.0);
    let u = bias_for_match(77, target, &p).unwrap();
    let w = phasematch_line(77, &p, u);
    assert!((w - target.rad_per_s()).abs() < 1e-6 * target.rad_per_s());
}
