//! Energy and angular-momentum matching between optical and microwave WGMs.

use std::fmt;

use thiserror::Error;

use crate::units::{Frequency, C0};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseMatchError {
    #[error("bias tuning is degenerate: r33 − r31 = 0")]
    DegenerateTuning,
    #[error("invalid phase-matching input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpticalPolarization {
    Ordinary,
    Extraordinary,
}

/// Upper sign (ω_b = ω_a + ω_c) is anti-Stokes, lower sign is Stokes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    AntiStokes,
    Stokes,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::AntiStokes => 1.0,
            Branch::Stokes => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::AntiStokes => "anti-Stokes",
            Branch::Stokes => "Stokes",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConversionType {
    /// Pump, signal and microwave all polarized along the optic axis.
    TypeI,
    /// Signal polarization orthogonal to the pump.
    TypeII,
}

impl ConversionType {
    pub fn name(self) -> &'static str {
        match self {
            ConversionType::TypeI => "I",
            ConversionType::TypeII => "II",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalModeSpec {
    pub l_a: u64,
    pub polarization: OpticalPolarization,
    pub omega_a: Frequency,
    pub n: f64,
}

impl OpticalModeSpec {
    /// The mode of the main family nearest `target` for a resonator of radius `r`.
    pub fn nearest(target: Frequency, r: f64, n: f64, polarization: OpticalPolarization) -> Self {
        let l_a = (target.rad_per_s() * r * n / C0).round().max(1.0) as u64;
        OpticalModeSpec { l_a, polarization, omega_a: optical_eigenfrequency(l_a, r, n), n }
    }
}

/// ω = c·L/(R·n) for the main optical WGM family.
pub fn optical_eigenfrequency(l_a: u64, r: f64, n: f64) -> Frequency {
    Frequency::from_rad_per_s(C0 * l_a as f64 / (r * n))
}

/// Optical free spectral range c/(R·n), rad/s.
pub fn optical_fsr(r: f64, n: f64) -> f64 {
    C0 / (r * n)
}

/// Parameters of the phase-matching line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    /// Resonator radius, m.
    pub r: f64,
    /// Pump index.
    pub n_a: f64,
    /// Signal index.
    pub n_b: f64,
    /// Pump frequency.
    pub omega_a: Frequency,
    pub branch: Branch,
    pub conversion_type: ConversionType,
    /// Ring height along the bias field, m.
    pub height: f64,
    /// r33 − r31, pm/V.
    pub bias_coefficient_pm_per_v: f64,
}

impl LineParams {
    /// Type-I parameters: n_a = n_b = `n`, no bias.
    pub fn type_i(r: f64, n: f64, omega_a: Frequency) -> Self {
        LineParams {
            r,
            n_a: n,
            n_b: n,
            omega_a,
            branch: Branch::AntiStokes,
            conversion_type: ConversionType::TypeI,
            height: 1.0,
            bias_coefficient_pm_per_v: 0.0,
        }
    }

    /// dω_line/dU in rad/s per volt: −ω_a·n_b²·(r33 − r31)/(2h).
    pub fn bias_sensitivity(&self) -> f64 {
        -self.omega_a.rad_per_s() * self.n_b * self.n_b * self.bias_coefficient_pm_per_v * 1e-12 / (2.0 * self.height)
    }

    /// ±ω_a(n_a − n_b)/n_b, rad/s.
    pub fn birefringence_offset(&self) -> f64 {
        self.branch.sign() * self.omega_a.rad_per_s() * (self.n_a - self.n_b) / self.n_b
    }
}

/// Microwave frequency (rad/s) on the matching line at `l_c` and bias `u`
/// volts. The bias term applies to Type-II only. May be negative.
pub fn phasematch_line(l_c: u32, params: &LineParams, u: f64) -> f64 {
    let mut w = optical_fsr(params.r, params.n_b) * l_c as f64 + params.birefringence_offset();
    if params.conversion_type == ConversionType::TypeII {
        w += params.bias_sensitivity() * u;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatchSolution {
    pub l_c: u32,
    pub omega_line: f64,
    pub omega_disp: Frequency,
    /// ω_line − ω_disp, rad/s.
    pub detuning: f64,
    pub branch: Branch,
    pub conversion_type: ConversionType,
    pub bias_voltage: f64,
}

/// Bias voltage that puts the line exactly on `omega_disp` at `l_c`.
pub fn bias_for_match(l_c: u32, omega_disp: Frequency, params: &LineParams) -> Result<f64, PhaseMatchError> {
    let s = params.bias_sensitivity();
    if s == 0.0 {
        return Err(PhaseMatchError::DegenerateTuning);
    }
    let mut unbiased = *params;
    unbiased.conversion_type = ConversionType::TypeI;
    let gap = omega_disp.rad_per_s() - phasematch_line(l_c, &unbiased, 0.0);
    Ok(gap / s)
}

/// Search settings for [`find_matches`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchSearch {
    /// Allowed |detuning| at zero bias, rad/s.
    pub tolerance: f64,
    /// For Type-II, the largest |U| accepted when solving for the bias.
    pub max_bias_volts: f64,
}

/// min(ω_c/Q_M, ω₀/Q): the narrower of the two linewidths.
pub fn default_tolerance(omega_c: Frequency, q_m: f64, omega_0: Frequency, q: f64) -> f64 {
    (omega_c.rad_per_s() / q_m).min(omega_0.rad_per_s() / q)
}

/// Integer L_c where the table meets the line. Type-I compares at zero bias
/// within the tolerance; Type-II solves for the bias and accepts |U| within
/// the cap. Results are sorted by |detuning| (Type-I) or |U| (Type-II).
pub fn find_matches(table: &[(u32, Frequency)], params: &LineParams, search: &MatchSearch) -> Vec<PhaseMatchSolution> {
    let mut out = Vec::new();
    for &(l_c, omega_disp) in table {
        let line0 = phasematch_line(l_c, params, 0.0);
        let detuning = line0 - omega_disp.rad_per_s();
        let sol = |u: f64, omega_line: f64, detuning: f64| PhaseMatchSolution {
            l_c,
            omega_line,
            omega_disp,
            detuning,
            branch: params.branch,
            conversion_type: params.conversion_type,
            bias_voltage: u,
        };
        match params.conversion_type {
            ConversionType::TypeI => {
                if detuning.abs() <= search.tolerance {
                    out.push(sol(0.0, line0, detuning));
                }
            }
            ConversionType::TypeII => {
                if detuning.abs() <= search.tolerance {
                    out.push(sol(0.0, line0, detuning));
                } else if let Ok(u) = bias_for_match(l_c, omega_disp, params) {
                    if u.abs() <= search.max_bias_volts {
                        let w = phasematch_line(l_c, params, u);
                        out.push(sol(u, w, w - omega_disp.rad_per_s()));
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| {
        let ka = a.detuning.abs() + a.bias_voltage.abs();
        let kb = b.detuning.abs() + b.bias_voltage.abs();
        ka.total_cmp(&kb).then(a.l_c.cmp(&b.l_c))
    });
    out
}

/// Integer L_c nearest to each crossing of the unbiased line with the
/// dispersion curve (sign change of line − dispersion between consecutive
/// table rows), whether or not it lies within a linewidth.
pub fn nearest_crossings(table: &[(u32, Frequency)], params: &LineParams) -> Vec<PhaseMatchSolution> {
    let mut rows: Vec<(u32, Frequency)> = table.to_vec();
    rows.sort_by_key(|r| r.0);
    let unbiased = LineParams { conversion_type: ConversionType::TypeI, ..*params };
    let point = |&(l_c, w): &(u32, Frequency)| {
        let line = phasematch_line(l_c, &unbiased, 0.0);
        PhaseMatchSolution {
            l_c,
            omega_line: line,
            omega_disp: w,
            detuning: line - w.rad_per_s(),
            branch: params.branch,
            conversion_type: params.conversion_type,
            bias_voltage: 0.0,
        }
    };
    let mut out: Vec<PhaseMatchSolution> = Vec::new();
    for pair in rows.windows(2) {
        if pair[1].0 != pair[0].0 + 1 {
            continue;
        }
        let (a, b) = (point(&pair[0]), point(&pair[1]));
        if a.detuning == 0.0 || a.detuning.signum() != b.detuning.signum() {
            let best = if a.detuning.abs() <= b.detuning.abs() { a } else { b };
            if out.last().map(|m| m.l_c) != Some(best.l_c) {
                out.push(best);
            }
        }
    }
    out
}

/// Both conservation laws of the branch hold (frequencies to 1e-12 relative).
pub fn selection_rule_check(
    l_a: u64,
    l_b: u64,
    l_c: u32,
    omega_a: Frequency,
    omega_b: Frequency,
    omega_c: Frequency,
    branch: Branch,
) -> bool {
    let (la, lb, lc) = (l_a as i128, l_b as i128, l_c as i128);
    let momentum = match branch {
        Branch::AntiStokes => lb == la + lc,
        Branch::Stokes => lb == la - lc,
    };
    let expected = omega_a.rad_per_s() + branch.sign() * omega_c.rad_per_s();
    let energy = (omega_b.rad_per_s() - expected).abs() <= 1e-12 * omega_a.rad_per_s().max(omega_b.rad_per_s());
    momentum && energy
}

/// Match report with header `L_c, f_line_GHz, f_disp_GHz, detuning_MHz, branch, type, bias_V`.
pub fn matches_csv(matches: &[PhaseMatchSolution]) -> String {
    let mut out = String::from("L_c, f_line_GHz, f_disp_GHz, detuning_MHz, branch, type, bias_V\n");
    let two_pi = 2.0 * std::f64::consts::PI;
    for m in matches {
        out.push_str(&format!(
            "{}, {:.6}, {:.6}, {:.3}, {}, {}, {:.3}\n",
            m.l_c,
            m.omega_line / two_pi * 1e-9,
            m.omega_disp.ghz(),
            m.detuning / two_pi * 1e-6,
            m.branch,
            m.conversion_type.name(),
            m.bias_voltage
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const R: f64 = 2.9e-3;

    fn w0() -> Frequency {
        Frequency::from_rad_per_s(1.2e15)
    }

    #[test]
    fn type_i_line_at_thirteen() {
        let p = LineParams::type_i(R, 2.138, w0());
        let f = phasematch_line(13, &p, 0.0) / (2.0 * std::f64::consts::PI) * 1e-9;
        assert!((f - 100.1).abs() < 0.5, "{f}");
        assert!((optical_fsr(R, 2.138) / (2.0 * std::f64::consts::PI) * 1e-9 - 7.70).abs() < 0.01);
    }

    #[test]
    fn optical_mode_within_one_fsr() {
        let m = OpticalModeSpec::nearest(w0(), R, 2.138, OpticalPolarization::Extraordinary);
        assert!((m.omega_a.rad_per_s() - 1.2e15).abs() <= optical_fsr(R, 2.138));
        let doubled = optical_eigenfrequency(m.l_a, 2.0 * R, 2.138);
        assert!((doubled.rad_per_s() * 2.0 / m.omega_a.rad_per_s() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bias_sensitivity_magnitude() {
        let p = LineParams {
            n_a: 2.124,
            n_b: 2.12,
            branch: Branch::Stokes,
            conversion_type: ConversionType::TypeII,
            height: 292e-6,
            bias_coefficient_pm_per_v: 22.0,
            ..LineParams::type_i(R, 2.12, w0())
        };
        let mhz = p.bias_sensitivity() / (2.0 * std::f64::consts::PI) * 1e-6;
        assert!((mhz + 32.4).abs() < 0.5, "{mhz}");
        // 1 GHz of detuning needs about 31 V.
        let disp = Frequency::from_rad_per_s(phasematch_line(77, &p, 0.0) + 2.0 * std::f64::consts::PI * 1e9);
        let u = bias_for_match(77, disp, &p).unwrap();
        assert!((u.abs() - 31.0).abs() < 1.0, "{u}");
        let zero = Frequency::from_rad_per_s(phasematch_line(77, &p, 0.0));
        assert_eq!(bias_for_match(77, zero, &p).unwrap(), 0.0);
        let flat = LineParams { bias_coefficient_pm_per_v: 0.0, ..p };
        assert_eq!(bias_for_match(77, zero, &flat), Err(PhaseMatchError::DegenerateTuning));
    }

    #[test]
    fn type_i_branches_coincide() {
        let a = LineParams::type_i(R, 2.138, w0());
        let s = LineParams { branch: Branch::Stokes, ..a };
        for l in 1..50 {
            assert_eq!(phasematch_line(l, &a, 0.0) - phasematch_line(l, &s, 0.0), 0.0);
        }
    }

    #[test]
    fn matches_on_identity_table_and_zero_tolerance() {
        let p = LineParams::type_i(R, 2.138, w0());
        let table: Vec<(u32, Frequency)> =
            (5..20).map(|l| (l, Frequency::from_rad_per_s(phasematch_line(l, &p, 0.0)))).collect();
        let all = find_matches(&table, &p, &MatchSearch { tolerance: 1.0, max_bias_volts: 0.0 });
        assert_eq!(all.len(), table.len());
        let shifted: Vec<(u32, Frequency)> =
            table.iter().map(|&(l, w)| (l, Frequency::from_rad_per_s(w.rad_per_s() * 1.001))).collect();
        assert!(find_matches(&shifted, &p, &MatchSearch { tolerance: 0.0, max_bias_volts: 0.0 }).is_empty());
    }

    #[test]
    fn selection_rules() {
        let wa = optical_eigenfrequency(24803, R, 2.138);
        let wc = Frequency::from_ghz(100.0);
        let up = Frequency::from_rad_per_s(wa.rad_per_s() + wc.rad_per_s());
        let down = Frequency::from_rad_per_s(wa.rad_per_s() - wc.rad_per_s());
        assert!(selection_rule_check(24803, 24816, 13, wa, up, wc, Branch::AntiStokes));
        assert!(!selection_rule_check(24803, 24816, 13, wa, down, wc, Branch::AntiStokes));
        assert!(selection_rule_check(24803, 24790, 13, wa, down, wc, Branch::Stokes));
    }

    #[test]
    fn crossing_picks_nearest_integer() {
        let p = LineParams::type_i(R, 2.138, w0());
        // A flatter curve through the line between L = 13 and 14, closer to 13.
        let table: Vec<(u32, Frequency)> = (10..18)
            .map(|l| {
                let at13 = phasematch_line(13, &p, 0.0) + 2.0 * std::f64::consts::PI * 0.5e9;
                (l, Frequency::from_rad_per_s(at13 + 2.0 * std::f64::consts::PI * 4e9 * (l as f64 - 13.0)))
            })
            .collect();
        let c = nearest_crossings(&table, &p);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].l_c, 13);
        assert!(c[0].detuning < 0.0);
        let far: Vec<(u32, Frequency)> = table.iter().map(|&(l, _)| (l, Frequency::from_thz(10.0))).collect();
        assert!(nearest_crossings(&far, &p).is_empty());
    }

    proptest! {
        #[test]
        fn line_slope_is_the_fsr(l in 1u32..500, u in -500.0f64..500.0, stokes in any::<bool>()) {
            let p = LineParams {
                n_a: 2.211,
                n_b: 2.138,
                branch: if stokes { Branch::Stokes } else { Branch::AntiStokes },
                conversion_type: ConversionType::TypeII,
                height: 292e-6,
                bias_coefficient_pm_per_v: 20.4,
                ..LineParams::type_i(R, 2.138, w0())
            };
            let d = phasematch_line(l + 1, &p, u) - phasematch_line(l, &p, u);
            prop_assert!((d / optical_fsr(R, 2.138) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn bias_round_trip(l in 1u32..300, offset_ghz in -20.0f64..20.0) {
            let p = LineParams {
                n_a: 2.124063,
                n_b: 2.12,
                branch: Branch::Stokes,
                conversion_type: ConversionType::TypeII,
                height: 292e-6,
                bias_coefficient_pm_per_v: 22.0,
                ..LineParams::type_i(R, 2.12, w0())
            };
            let target = phasematch_line(l, &p, 0.0).abs() + 2.0 * std::f64::consts::PI * 1e9 * (50.0 + offset_ghz);
            let disp = Frequency::from_rad_per_s(target);
            let u = bias_for_match(l, disp, &p).unwrap();
            let w = phasematch_line(l, &p, u);
            prop_assert!(((w - target) / target).abs() < 1e-9);
        }

        #[test]
        fn tolerance_monotone(t1 in 0.0f64..1e11, extra in 0.0f64..1e11) {
            let p = LineParams::type_i(R, 2.138, w0());
            let table: Vec<(u32, Frequency)> = (5..30).map(|l| (l, Frequency::from_ghz(60.0 + 3.0 * l as f64))).collect();
            let a = find_matches(&table, &p, &MatchSearch { tolerance: t1, max_bias_volts: 0.0 });
            let b = find_matches(&table, &p, &MatchSearch { tolerance: t1 + extra, max_bias_volts: 0.0 });
            for m in &a {
                prop_assert!(b.iter().any(|x| x.l_c == m.l_c));
            }
        }
    }
}
