//! Electro-optic coupling rate and up-conversion efficiency estimates.

use num_complex::Complex64;
use thiserror::Error;

use crate::emsolver::{field_probe, MicrowaveModeSolution};
use crate::fem::FemError;
use crate::materials::{eo_coefficient_convert, MaterialRecord};
use crate::phasematch::ConversionType;
use crate::units::{Frequency, HBAR, HBAR_CGS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConversionError {
    #[error("coupling is zero; no pump power reaches the requested efficiency")]
    DegenerateCoupling,
    #[error("invalid conversion input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Microwave field component sampled at the optical mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldComponent {
    Radial,
    Azimuthal,
    Axial,
    Magnitude,
}

impl FieldComponent {
    /// E_z for Type-I, E_r for Type-II.
    pub fn for_type(t: ConversionType) -> Self {
        match t {
            ConversionType::TypeI => FieldComponent::Axial,
            ConversionType::TypeII => FieldComponent::Radial,
        }
    }

    pub fn of(self, e: &[Complex64; 3]) -> f64 {
        match self {
            FieldComponent::Radial => e[0].norm(),
            FieldComponent::Azimuthal => e[1].norm(),
            FieldComponent::Axial => e[2].norm(),
            FieldComponent::Magnitude => e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
        }
    }
}

/// Where the optical whispering-gallery mode sits in the cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalLocus {
    pub r: f64,
    pub z: f64,
    /// Optical mode field radius (1/e² of intensity).
    pub mode_radius: f64,
    /// Average the microwave field over the optical spot instead of sampling
    /// its centre.
    pub average: bool,
}

impl OpticalLocus {
    pub const DEFAULT_DEPTH: f64 = 30e-6;
    pub const DEFAULT_MODE_RADIUS: f64 = 5e-6;

    /// Equatorial point `depth` inside the rim at radius `r_outer`.
    pub fn near_rim(r_outer: f64, depth: f64) -> Self {
        OpticalLocus { r: r_outer - depth, z: 0.0, mode_radius: Self::DEFAULT_MODE_RADIUS, average: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapResult {
    /// (1/V)∫Ψ_a*Ψ_b Ψ_c dV with unit-max Ψ_c; equals the effective field
    /// when Ψ_c is constant across the optical mode.
    pub overlap: Complex64,
    /// Optical mode volume of a Gaussian ring of the locus radius; it cancels
    /// out of g under the constant-field approximation.
    pub v: f64,
    pub v_c: f64,
    pub effective_field: f64,
}

/// Samples the microwave field at the optical locus and pairs it with the
/// microwave mode volume.
pub fn overlap_factor(
    solution: &MicrowaveModeSolution,
    locus: &OpticalLocus,
    component: FieldComponent,
) -> Result<OverlapResult, ConversionError> {
    if !(locus.mode_radius > 0.0 && locus.r > 0.0) {
        return Err(ConversionError::InvalidInput("optical locus needs positive radius and spot size".into()));
    }
    let w = locus.mode_radius;
    let v = 2.0 * std::f64::consts::PI * locus.r * std::f64::consts::PI * w * w / 2.0;
    let effective_field = if locus.average {
        // Gaussian-weighted average over a 5x5 patch.
        let mut acc = 0.0;
        let mut norm = 0.0;
        for i in -2..=2 {
            for j in -2..=2 {
                let (dr, dz) = (0.5 * w * i as f64, 0.5 * w * j as f64);
                let weight = (-2.0 * (dr * dr + dz * dz) / (w * w)).exp();
                let e = field_probe(solution, locus.r + dr, locus.z + dz)?;
                acc += weight * component.of(&e);
                norm += weight;
            }
        }
        acc / norm
    } else {
        component.of(&field_probe(solution, locus.r, locus.z)?)
    };
    Ok(OverlapResult {
        overlap: Complex64::new(effective_field, 0.0),
        v,
        v_c: solution.mode_volume,
        effective_field,
    })
}

/// Electro-optic coupling rate in rad/s. `n_a`, `n_b` are the optical pump
/// and signal indices, `n_c` the microwave index; `r_pm_per_v` the relevant
/// Pockels coefficient. Evaluated in Gaussian units.
pub fn coupling_g(
    r_pm_per_v: f64,
    n_a: f64,
    n_b: f64,
    n_c: f64,
    omega_0: Frequency,
    omega_c: Frequency,
    overlap: &OverlapResult,
) -> Result<f64, ConversionError> {
    if !(overlap.v_c > 0.0) || !(n_c > 0.0) {
        return Err(ConversionError::InvalidInput("mode volume and microwave index must be positive".into()));
    }
    let r_esu = eo_coefficient_convert(r_pm_per_v);
    let v_c_cm3 = overlap.v_c * 1e6;
    let field_per_photon = (std::f64::consts::PI * HBAR_CGS * omega_c.rad_per_s() / (2.0 * v_c_cm3)).sqrt();
    Ok(omega_0.rad_per_s() * r_esu * n_a * n_b / n_c * field_per_photon * overlap.overlap.norm())
}

/// The Pockels coefficient used by each conversion type: r33 for Type-I,
/// r42 (= r51) for Type-II.
pub fn eo_coefficient_for(material: &MaterialRecord, t: ConversionType) -> f64 {
    match t {
        ConversionType::TypeI => material.r33,
        ConversionType::TypeII => material.r42,
    }
}

/// ξ = (4gQ/ω₀)·√(Q_M/(ħω_c²)), in W^(-1/2).
pub fn xi_factor(g: f64, q: f64, q_m: f64, omega_0: Frequency, omega_c: Frequency) -> f64 {
    let wc = omega_c.rad_per_s();
    4.0 * g * q / omega_0.rad_per_s() * (q_m / (HBAR * wc * wc)).sqrt()
}

/// P_±/P₀ = (2ξ√P_M / (1 + 2ξ²P_M))² = 2s/(1 + s)² with s = 2ξ²P_M. With
/// `type_ii_denominator` the saturation term carries an extra factor 2
/// (1 + ξ²P_M).
pub fn sideband_ratio(xi: f64, p_m: f64, type_ii_denominator: bool) -> f64 {
    let s = 2.0 * xi * xi * p_m.max(0.0);
    let denom = if type_ii_denominator { 1.0 + 0.5 * s } else { 1.0 + s };
    2.0 * s / (denom * denom)
}

/// Small-signal photon-number efficiency 4ξ²P₀·ω_c/ω₀.
pub fn photon_efficiency(xi: f64, p0: f64, omega_0: Frequency, omega_c: Frequency) -> f64 {
    4.0 * xi * xi * p0 * omega_c.rad_per_s() / omega_0.rad_per_s()
}

/// Photon-number efficiency from a sideband/microwave power ratio.
pub fn manley_rowe_photon_eff(power_eff: f64, omega_pump: Frequency, omega_c: Frequency) -> f64 {
    power_eff * omega_c.rad_per_s() / omega_pump.rad_per_s()
}

/// Pump power (W) giving photon efficiency `target_eta`.
pub fn required_pump(xi: f64, omega_0: Frequency, omega_c: Frequency, target_eta: f64) -> Result<f64, ConversionError> {
    if xi == 0.0 {
        return Err(ConversionError::DegenerateCoupling);
    }
    if !(target_eta > 0.0 && target_eta <= 1.0) {
        return Err(ConversionError::InvalidInput(format!("target efficiency {target_eta} outside (0, 1]")));
    }
    Ok(target_eta * omega_0.rad_per_s() / (4.0 * xi * xi * omega_c.rad_per_s()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionBudget {
    pub conversion_type: ConversionType,
    pub overlap: OverlapResult,
    pub omega_0: Frequency,
    pub omega_c: Frequency,
    pub g: f64,
    pub xi: f64,
    pub q: f64,
    pub q_m: f64,
    pub p0: f64,
    pub p_m: f64,
    pub eta_photon: f64,
    /// Pump power for unit photon efficiency.
    pub p0_unity: f64,
}

impl ConversionBudget {
    /// Efficiencies above 1 lie outside the small-signal model.
    pub fn beyond_model(&self) -> bool {
        self.eta_photon > 1.0
    }

    /// `quantity, value, unit` rows of every intermediate.
    pub fn report_csv(&self) -> String {
        let two_pi = 2.0 * std::f64::consts::PI;
        let rows: Vec<(&str, String, &str)> = vec![
            ("type", self.conversion_type.name().to_string(), ""),
            ("f_pump", format!("{:.6e}", self.omega_0.hz()), "Hz"),
            ("f_c", format!("{:.6e}", self.omega_c.hz()), "Hz"),
            ("effective_field", format!("{:.6e}", self.overlap.effective_field), ""),
            ("overlap", format!("{:.6e}", self.overlap.overlap.norm()), ""),
            ("V_c", format!("{:.6e}", self.overlap.v_c), "m^3"),
            ("g", format!("{:.6e}", self.g), "rad/s"),
            ("g_over_2pi", format!("{:.6e}", self.g / two_pi), "Hz"),
            ("Q", format!("{:.6e}", self.q), ""),
            ("Q_M", format!("{:.6e}", self.q_m), ""),
            ("xi", format!("{:.6e}", self.xi), "W^-1/2"),
            ("P0", format!("{:.6e}", self.p0), "W"),
            ("P_M", format!("{:.6e}", self.p_m), "W"),
            ("eta_photon", format!("{:.6e}", self.eta_photon), ""),
            ("P0_unity", format!("{:.6e}", self.p0_unity), "W"),
            ("beyond_small_signal", self.beyond_model().to_string(), ""),
        ];
        let mut out = String::from("quantity, value, unit\n");
        for (k, v, u) in rows {
            out.push_str(&format!("{k}, {v}, {u}\n"));
        }
        out
    }
}

/// Inputs of the efficiency chain besides the microwave mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainInputs {
    pub conversion_type: ConversionType,
    pub r_pm_per_v: f64,
    pub n_a: f64,
    pub n_b: f64,
    pub n_c: f64,
    pub omega_0: Frequency,
    pub q: f64,
    pub q_m: f64,
    pub p0: f64,
    pub p_m: f64,
}

/// overlap → g → ξ → η and the unity-efficiency pump power.
pub fn efficiency_chain(inputs: &ChainInputs, omega_c: Frequency, overlap: OverlapResult) -> Result<ConversionBudget, ConversionError> {
    let g = coupling_g(inputs.r_pm_per_v, inputs.n_a, inputs.n_b, inputs.n_c, inputs.omega_0, omega_c, &overlap)?;
    let xi = xi_factor(g, inputs.q, inputs.q_m, inputs.omega_0, omega_c);
    let eta = photon_efficiency(xi, inputs.p0, inputs.omega_0, omega_c);
    let p0_unity = required_pump(xi, inputs.omega_0, omega_c, 1.0)?;
    Ok(ConversionBudget {
        conversion_type: inputs.conversion_type,
        overlap,
        omega_0: inputs.omega_0,
        omega_c,
        g,
        xi,
        q: inputs.q,
        q_m: inputs.q_m,
        p0: inputs.p0,
        p_m: inputs.p_m,
        eta_photon: eta,
        p0_unity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w0() -> Frequency {
        Frequency::from_rad_per_s(1.2e15)
    }

    fn unit_overlap(v_c: f64) -> OverlapResult {
        OverlapResult { overlap: Complex64::new(1.0, 0.0), v: 1e-12, v_c, effective_field: 1.0 }
    }

    #[test]
    fn manley_rowe_reference() {
        let eta = manley_rowe_photon_eff(0.005, Frequency::from_wavelength(1560e-9), Frequency::from_ghz(101.12));
        assert!((eta / 2.6e-6 - 1.0).abs() < 0.05, "{eta}");
        assert_eq!(manley_rowe_photon_eff(0.0, w0(), w0()), 0.0);
        assert_eq!(manley_rowe_photon_eff(0.3, w0(), w0()), 0.3);
    }

    #[test]
    fn sideband_saturation() {
        let xi = 7.0;
        let p_m = 0.5 / (xi * xi);
        assert!((sideband_ratio(xi, p_m, false) - 0.5).abs() < 1e-15);
        let p_small = 0.5e-4 / (xi * xi);
        let r = sideband_ratio(xi, p_small, false);
        assert!((r / (4.0 * xi * xi * p_small) - 1.0).abs() < 0.01);
        assert_eq!(sideband_ratio(xi, 0.0, false), 0.0);
    }

    #[test]
    fn xi_scaling() {
        let a = xi_factor(100.0, 1e8, 100.0, w0(), Frequency::from_ghz(100.0));
        assert!((xi_factor(100.0, 2e8, 100.0, w0(), Frequency::from_ghz(100.0)) / a - 2.0).abs() < 1e-12);
        assert!((xi_factor(100.0, 1e8, 200.0, w0(), Frequency::from_ghz(100.0)) / a - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(xi_factor(0.0, 1e8, 100.0, w0(), Frequency::from_ghz(100.0)), 0.0);
    }

    #[test]
    fn g_proportionality() {
        let wc = Frequency::from_ghz(100.0);
        let o = unit_overlap(1e-9);
        let g1 = coupling_g(29.0, 2.137, 2.137, 5.15, w0(), wc, &o).unwrap();
        let g2 = coupling_g(58.0, 2.137, 2.137, 5.15, w0(), wc, &o).unwrap();
        assert!((g2 / g1 - 2.0).abs() < 1e-12);
        let half = OverlapResult { overlap: Complex64::new(0.5, 0.0), ..o };
        assert!((coupling_g(29.0, 2.137, 2.137, 5.15, w0(), wc, &half).unwrap() / g1 - 0.5).abs() < 1e-12);
        let zero = OverlapResult { overlap: Complex64::new(0.0, 0.0), ..o };
        assert_eq!(coupling_g(29.0, 2.137, 2.137, 5.15, w0(), wc, &zero).unwrap(), 0.0);
    }

    #[test]
    fn g_hand_evaluation() {
        // Gaussian units by hand: r = 8.69e-7 esu, V_c = 1 cm³.
        let wc = Frequency::from_ghz(100.0);
        let g = coupling_g(29.0, 2.0, 2.0, 4.0, w0(), wc, &unit_overlap(1e-6)).unwrap();
        let e1 = (std::f64::consts::PI * 1.054_571_817e-27 * wc.rad_per_s() / 2.0).sqrt();
        let expect = 1.2e15 * eo_coefficient_convert(29.0) * 1.0 * e1;
        assert!((g / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn required_pump_inverse_and_errors() {
        let wc = Frequency::from_ghz(100.0);
        let p1 = required_pump(300.0, w0(), wc, 1.0).unwrap();
        let p_half = required_pump(300.0, w0(), wc, 0.5).unwrap();
        assert!((p_half / p1 - 0.5).abs() < 1e-15);
        assert_eq!(required_pump(0.0, w0(), wc, 1.0), Err(ConversionError::DegenerateCoupling));
        assert_eq!(photon_efficiency(300.0, 0.0, w0(), wc), 0.0);
    }

    proptest! {
        #[test]
        fn sideband_bounded(xi in 1e-3f64..1e3, p in 0.0f64..10.0) {
            prop_assert!(sideband_ratio(xi, p, false) <= 0.5 + 1e-15);
        }

        #[test]
        fn pump_round_trip(xi in 1e-2f64..1e4, eta in 1e-6f64..1.0) {
            let wc = Frequency::from_ghz(100.0);
            let p = required_pump(xi, w0(), wc, eta).unwrap();
            prop_assert!((photon_efficiency(xi, p, w0(), wc) / eta - 1.0).abs() < 1e-12);
        }

        #[test]
        fn efficiency_linear_in_pump(xi in 1e-2f64..1e4, p in 1e-6f64..1.0) {
            let wc = Frequency::from_ghz(100.0);
            let k1 = photon_efficiency(xi, p, w0(), wc) / p;
            let k2 = photon_efficiency(xi, 2.0 * p, w0(), wc) / (2.0 * p);
            prop_assert!((k1 / k2 - 1.0).abs() < 1e-14);
        }
    }
}
