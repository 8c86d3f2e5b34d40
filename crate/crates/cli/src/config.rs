//! Run configuration: one TOML file, flat sections, units in field names.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use wgm::emsolver::{ring_indices, Polarization, RingSolveOptions};
use wgm::fem::RegionIndices;
use wgm::geometry::{design_rim, RingGeometry};
use wgm::materials::{resolve_material, MaterialRecord};
use wgm::phasematch::{Branch, ConversionType};
use wgm::units::Frequency;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub r_outer_mm: f64,
    pub r_inner_mm: f64,
    pub height_um: f64,
    pub post_radius_mm: f64,
    /// "designed" (from the prism), "cylindrical", or a number in µm.
    pub rim: RimSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RimSpec {
    Radius(f64),
    Named(String),
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            r_outer_mm: 2.9,
            r_inner_mm: 2.48,
            height_um: 292.0,
            post_radius_mm: 2.48,
            rim: RimSpec::Named("designed".into()),
        }
    }
}

/// Built-in name, path to a material file, or an inline record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialSpec {
    Name(String),
    Inline(InlineMaterial),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineMaterial {
    pub name: String,
    pub n_opt_o: f64,
    pub n_opt_e: f64,
    pub n_mw_o: f64,
    pub n_mw_e: f64,
    #[serde(default)]
    pub r33_pm_per_v: f64,
    #[serde(default)]
    pub r31_pm_per_v: f64,
    #[serde(default)]
    pub r42_pm_per_v: f64,
}

impl MaterialSpec {
    fn name(&self) -> &str {
        match self {
            MaterialSpec::Name(n) => n,
            MaterialSpec::Inline(m) => &m.name,
        }
    }

    pub fn record(&self, field: &str) -> Result<MaterialRecord> {
        let rec = match self {
            MaterialSpec::Name(n) => resolve_material(n),
            MaterialSpec::Inline(m) => {
                let rec = MaterialRecord {
                    name: m.name.clone(),
                    n_opt_o: m.n_opt_o,
                    n_opt_e: m.n_opt_e,
                    n_mw_o: m.n_mw_o,
                    n_mw_e: m.n_mw_e,
                    r33: m.r33_pm_per_v,
                    r31: m.r31_pm_per_v,
                    r42: m.r42_pm_per_v,
                    notes: String::new(),
                };
                rec.validate().map(|_| rec)
            }
        };
        rec.with_context(|| format!("{field} = {:?}", self.name()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialsSection {
    pub ring: MaterialSpec,
    pub post: MaterialSpec,
    pub prism: MaterialSpec,
}

impl Default for MaterialsSection {
    fn default() -> Self {
        MaterialsSection {
            ring: MaterialSpec::Name("lithium-niobate".into()),
            post: MaterialSpec::Name("fused-silica".into()),
            prism: MaterialSpec::Name("diamond".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub edge_um: f64,
    pub window_wavelengths: f64,
    pub rim_segments: usize,
    pub eigen_tolerance: f64,
    pub modes_per_shift: usize,
    pub l_min: u32,
    pub l_max: u32,
    /// "any", "axial" (ring index n_mw_e) or "radial" (n_mw_o).
    pub polarization: String,
    pub penalty: f64,
    /// Shift for single-mode solves; 0 uses the effective-index estimate.
    pub target_ghz: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            edge_um: 50.0,
            window_wavelengths: 1.5,
            rim_segments: 24,
            eigen_tolerance: 1e-8,
            modes_per_shift: 8,
            l_min: 8,
            l_max: 18,
            polarization: "any".into(),
            penalty: 1.0,
            target_ghz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhasematchSection {
    /// "I" or "II".
    pub conversion_type: String,
    /// "anti-stokes" or "stokes".
    pub branch: String,
    /// Optical polarization of the pump and the sideband: "o" or "e".
    pub pump_polarization: String,
    pub signal_polarization: String,
    pub pump_omega_rad_per_s: f64,
    pub q_optical: f64,
    pub q_microwave: f64,
    pub max_bias_v: f64,
    /// Match tolerance; 0 uses the narrower of the two linewidths.
    pub tolerance_mhz: f64,
}

impl Default for PhasematchSection {
    fn default() -> Self {
        PhasematchSection {
            conversion_type: "I".into(),
            branch: "anti-stokes".into(),
            pump_polarization: "e".into(),
            signal_polarization: "e".into(),
            pump_omega_rad_per_s: 1.2e15,
            q_optical: 1e8,
            q_microwave: 100.0,
            max_bias_v: 300.0,
            tolerance_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConversionSection {
    pub l_c: u32,
    pub q: f64,
    pub q_m: f64,
    pub p0_mw: f64,
    pub p_m_w: f64,
    pub locus_depth_um: f64,
    pub optical_spot_um: f64,
    /// "auto" (E_z for Type-I, E_r for Type-II), "radial", "azimuthal",
    /// "axial" or "magnitude".
    pub component: String,
}

impl Default for ConversionSection {
    fn default() -> Self {
        ConversionSection {
            l_c: 13,
            q: 1e8,
            q_m: 100.0,
            p0_mw: 50.0,
            p_m_w: 1e-9,
            locus_depth_um: 30.0,
            optical_spot_um: 5.0,
            component: "auto".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    /// Coupling periods 2π/(g·|a₀|) of the lossless run.
    pub duration_periods: f64,
    pub tolerance: f64,
    pub samples: usize,
    /// Coupling rate for the small-signal check (rad/s).
    pub g_rad_per_s: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection { duration_periods: 1e4, tolerance: 1e-13, samples: 1000, g_rad_per_s: 150.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub prominence: f64,
    pub coarse_edge_um: f64,
    pub refine_edge_um: f64,
    pub r_in_tolerance_um: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { prominence: 0.1, coarse_edge_um: 50.0, refine_edge_um: 35.0, r_in_tolerance_um: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), svg: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub materials: MaterialsSection,
    pub solver: SolverSection,
    pub phasematch: PhasematchSection,
    pub conversion: ConversionSection,
    pub dynamics: DynamicsSection,
    pub spectrum: SpectrumSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        for (name, v) in [
            ("geometry.r_outer_mm", g.r_outer_mm),
            ("geometry.r_inner_mm", g.r_inner_mm),
            ("geometry.height_um", g.height_um),
            ("geometry.post_radius_mm", g.post_radius_mm),
            ("solver.edge_um", self.solver.edge_um),
            ("solver.window_wavelengths", self.solver.window_wavelengths),
            ("solver.eigen_tolerance", self.solver.eigen_tolerance),
            ("solver.penalty", self.solver.penalty),
            ("phasematch.pump_omega_rad_per_s", self.phasematch.pump_omega_rad_per_s),
            ("phasematch.q_optical", self.phasematch.q_optical),
            ("phasematch.q_microwave", self.phasematch.q_microwave),
            ("conversion.q", self.conversion.q),
            ("conversion.q_m", self.conversion.q_m),
            ("conversion.p0_mw", self.conversion.p0_mw),
            ("conversion.p_m_w", self.conversion.p_m_w),
            ("conversion.locus_depth_um", self.conversion.locus_depth_um),
            ("conversion.optical_spot_um", self.conversion.optical_spot_um),
            ("dynamics.duration_periods", self.dynamics.duration_periods),
            ("dynamics.tolerance", self.dynamics.tolerance),
            ("spectrum.coarse_edge_um", self.spectrum.coarse_edge_um),
            ("spectrum.refine_edge_um", self.spectrum.refine_edge_um),
            ("spectrum.r_in_tolerance_um", self.spectrum.r_in_tolerance_um),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive and finite, got {v}");
            }
        }
        if let RimSpec::Radius(r) = g.rim {
            if !(r > 0.0) {
                bail!("geometry.rim must be positive, got {r}");
            }
        }
        if let RimSpec::Named(n) = &g.rim {
            if n != "designed" && n != "cylindrical" {
                bail!("geometry.rim must be \"designed\", \"cylindrical\" or a radius in um, got {n:?}");
            }
        }
        if self.solver.l_min == 0 || self.solver.l_min > self.solver.l_max {
            bail!("solver.l_min..l_max must be a non-empty range of positive integers");
        }
        if self.conversion.l_c == 0 {
            bail!("conversion.l_c must be positive");
        }
        if !(self.phasematch.max_bias_v >= 0.0) || !(self.phasematch.tolerance_mhz >= 0.0) {
            bail!("phasematch.max_bias_v and tolerance_mhz must be non-negative");
        }
        if !(self.spectrum.prominence > 0.0 && self.spectrum.prominence < 1.0) {
            bail!("spectrum.prominence must lie in (0, 1)");
        }
        self.polarization()?;
        self.conversion_type()?;
        self.branch()?;
        self.component()?;
        for (name, v) in [
            ("phasematch.pump_polarization", &self.phasematch.pump_polarization),
            ("phasematch.signal_polarization", &self.phasematch.signal_polarization),
        ] {
            if v != "o" && v != "e" {
                bail!("{name} must be \"o\" or \"e\", got {v:?}");
            }
        }
        if !(self.solver.target_ghz >= 0.0 && self.solver.target_ghz.is_finite()) {
            bail!("solver.target_ghz must be non-negative");
        }
        Ok(())
    }

    pub fn polarization(&self) -> Result<Polarization> {
        Ok(match self.solver.polarization.as_str() {
            "any" => Polarization::Any,
            "axial" => Polarization::Axial,
            "radial" => Polarization::Radial,
            other => bail!("solver.polarization must be any, axial or radial, got {other:?}"),
        })
    }

    pub fn conversion_type(&self) -> Result<ConversionType> {
        Ok(match self.phasematch.conversion_type.as_str() {
            "I" | "1" => ConversionType::TypeI,
            "II" | "2" => ConversionType::TypeII,
            other => bail!("phasematch.conversion_type must be I or II, got {other:?}"),
        })
    }

    pub fn branch(&self) -> Result<Branch> {
        Ok(match self.phasematch.branch.as_str() {
            "anti-stokes" => Branch::AntiStokes,
            "stokes" => Branch::Stokes,
            other => bail!("phasematch.branch must be anti-stokes or stokes, got {other:?}"),
        })
    }

    pub fn component(&self) -> Result<Option<wgm::conversion::FieldComponent>> {
        use wgm::conversion::FieldComponent as F;
        Ok(match self.conversion.component.as_str() {
            "auto" => None,
            "radial" => Some(F::Radial),
            "azimuthal" => Some(F::Azimuthal),
            "axial" => Some(F::Axial),
            "magnitude" => Some(F::Magnitude),
            other => bail!("conversion.component {other:?} not recognised"),
        })
    }

    pub fn ring_material(&self) -> Result<MaterialRecord> {
        self.materials.ring.record("materials.ring")
    }

    pub fn post_material(&self) -> Result<MaterialRecord> {
        self.materials.post.record("materials.post")
    }

    pub fn prism_material(&self) -> Result<MaterialRecord> {
        self.materials.prism.record("materials.prism")
    }

    /// Geometry with the rim resolved.
    pub fn geometry(&self) -> Result<RingGeometry> {
        let g = &self.geometry;
        let mut geom = RingGeometry {
            r_outer: g.r_outer_mm * 1e-3,
            r_inner: g.r_inner_mm * 1e-3,
            height: g.height_um * 1e-6,
            rim_radius: f64::INFINITY,
            post_outer_radius: g.post_radius_mm * 1e-3,
            ring_material: self.materials.ring.name().to_string(),
            post_material: self.materials.post.name().to_string(),
        };
        match &g.rim {
            RimSpec::Radius(r) => geom.rim_radius = r * 1e-6,
            RimSpec::Named(n) if n == "cylindrical" => {}
            RimSpec::Named(_) => {
                geom = design_rim(&geom, &self.ring_material()?, &self.prism_material()?)?;
            }
        }
        geom.validate()?;
        Ok(geom)
    }

    /// Copy with every derived default written out.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mut out = self.clone();
        let g = self.geometry()?;
        if g.rim_radius.is_finite() {
            out.geometry.rim = RimSpec::Radius((g.rim_radius * 1e6 * 1e3).round() / 1e3);
        } else {
            out.geometry.rim = RimSpec::Named("cylindrical".into());
        }
        if out.phasematch.tolerance_mhz == 0.0 {
            out.phasematch.tolerance_mhz = self.default_tolerance_mhz();
        }
        Ok(out)
    }

    pub fn default_tolerance_mhz(&self) -> f64 {
        // Microwave linewidth at 100 GHz against the optical one.
        let p = &self.phasematch;
        let w0 = Frequency::from_rad_per_s(p.pump_omega_rad_per_s);
        let wc = Frequency::from_ghz(100.0);
        wgm::phasematch::default_tolerance(wc, p.q_microwave, w0, p.q_optical) / (2.0 * std::f64::consts::PI) * 1e-6
    }

    pub fn ring_solve_options(&self) -> Result<RingSolveOptions> {
        let mut o = RingSolveOptions {
            edge_length: self.solver.edge_um * 1e-6,
            rim_segments: self.solver.rim_segments,
            window_wavelengths: self.solver.window_wavelengths,
            polarization: self.polarization()?,
            count: self.solver.modes_per_shift,
            ..RingSolveOptions::default()
        };
        o.solve.eigen.tolerance = self.solver.eigen_tolerance;
        o.solve.penalty = self.solver.penalty;
        Ok(o)
    }

    pub fn region_indices(&self) -> Result<RegionIndices> {
        Ok(ring_indices(&self.ring_material()?, &self.post_material()?, self.polarization()?))
    }

    pub fn target(&self) -> Option<Frequency> {
        (self.solver.target_ghz > 0.0).then(|| Frequency::from_ghz(self.solver.target_ghz))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn field_precise_errors() {
        let e = RunConfig::parse("[conversion]\nq_m = 0\n").unwrap_err();
        assert!(format!("{e:#}").contains("conversion.q_m"), "{e:#}");
        let e = RunConfig::parse("[geometry]\nr_outer = 3\n").unwrap_err();
        assert!(format!("{e:#}").contains("r_outer"), "{e:#}");
        let e = RunConfig::parse("[solver]\nl_min = 5\nl_max = 4\n").unwrap_err();
        assert!(format!("{e:#}").contains("l_min"));
    }

    #[test]
    fn designed_rim_resolves() {
        let r = RunConfig::default().resolved().unwrap();
        match r.geometry.rim {
            RimSpec::Radius(v) => assert!((v - 568.0).abs() < 1.0, "{v}"),
            other => panic!("{other:?}"),
        }
        let cyl = RunConfig::parse("[geometry]\nrim = \"cylindrical\"\n").unwrap();
        assert!(cyl.geometry().unwrap().rim_radius.is_infinite());
    }
}
