//! Crystal and coupling-medium database.
//!
//! Built-in records are compiled in; additional records can be read from a
//! `key = value [unit]` text file.

use std::path::Path;

use thiserror::Error;

use crate::units::C0;

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("unknown material `{0}`")]
    UnknownMaterial(String),
    #[error("material file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid material record `{name}`: {msg}")]
    Invalid { name: String, msg: String },
    #[error("reading material file: {0}")]
    Io(String),
}

/// Optical and microwave indices plus Pockels coefficients for one medium.
///
/// Optical indices are at 1.55 µm, microwave indices are single sub-THz values
/// per polarization (no dispersion). Electro-optic coefficients are in pm/V.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRecord {
    pub name: String,
    pub n_opt_o: f64,
    pub n_opt_e: f64,
    pub n_mw_o: f64,
    pub n_mw_e: f64,
    pub r33: f64,
    pub r31: f64,
    pub r42: f64,
    pub notes: String,
}

impl MaterialRecord {
    pub fn validate(&self) -> Result<(), MaterialError> {
        let invalid = |msg: String| MaterialError::Invalid { name: self.name.clone(), msg };
        for (field, n) in [
            ("n_opt_o", self.n_opt_o),
            ("n_opt_e", self.n_opt_e),
            ("n_mw_o", self.n_mw_o),
            ("n_mw_e", self.n_mw_e),
        ] {
            if !(n.is_finite() && n > 1.0) {
                return Err(invalid(format!("{field} = {n} must exceed 1")));
            }
        }
        for (field, r) in [("r33", self.r33), ("r31", self.r31), ("r42", self.r42)] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid(format!("{field} = {r} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Optical birefringence n_o − n_e.
    pub fn birefringence(&self) -> f64 {
        self.n_opt_o - self.n_opt_e
    }

    /// r33 − r31 in pm/V, the combination that sets DC-bias tuning of the
    /// ordinary/extraordinary offset.
    pub fn bias_tuning_coefficient(&self) -> f64 {
        self.r33 - self.r31
    }
}

/// Identifiers of the compiled-in records.
pub const BUILTIN_NAMES: [&str; 4] = ["lithium-niobate", "lithium-tantalate", "fused-silica", "diamond"];

pub fn lithium_niobate() -> MaterialRecord {
    MaterialRecord {
        name: "lithium-niobate".into(),
        n_opt_o: 2.211,
        n_opt_e: 2.138,
        n_mw_o: 6.72,
        n_mw_e: 5.15,
        r33: 29.0,
        r31: 8.6,
        r42: 28.0,
        notes: "congruent LiNbO3; transparency 0.35-5 um; n_opt_o, r31, r42 are handbook values".into(),
    }
}

pub fn lithium_tantalate() -> MaterialRecord {
    // The ordinary index is placed so that ω0·(n_o − n_e)/n_e at ω0 = 1.2e15 s⁻¹
    // equals 2π·0.366 THz, the quoted stoichiometric offset.
    MaterialRecord {
        name: "lithium-tantalate".into(),
        n_opt_o: 2.124_063,
        n_opt_e: 2.12,
        n_mw_o: 6.5,
        n_mw_e: 6.5,
        r33: 30.5,
        r31: 8.5,
        r42: 20.0,
        notes: "stoichiometric LiTaO3; single optical index 2.12 quoted, polarization unspecified; \
                n_opt_o encodes the 0.366 THz ordinary/extraordinary offset"
            .into(),
    }
}

pub fn fused_silica() -> MaterialRecord {
    MaterialRecord {
        name: "fused-silica".into(),
        n_opt_o: 1.444,
        n_opt_e: 1.444,
        n_mw_o: 1.9,
        n_mw_e: 1.9,
        r33: 0.0,
        r31: 0.0,
        r42: 0.0,
        notes: "isotropic; microwave index at 100 GHz".into(),
    }
}

pub fn diamond() -> MaterialRecord {
    MaterialRecord {
        name: "diamond".into(),
        n_opt_o: 2.384,
        n_opt_e: 2.384,
        n_mw_o: 2.38,
        n_mw_e: 2.38,
        r33: 0.0,
        r31: 0.0,
        r42: 0.0,
        notes: "coupling prism; isotropic".into(),
    }
}

/// Returns a built-in record. Unknown names are an error.
pub fn material_lookup(name: &str) -> Result<MaterialRecord, MaterialError> {
    match name {
        "lithium-niobate" => Ok(lithium_niobate()),
        "lithium-tantalate" => Ok(lithium_tantalate()),
        "fused-silica" => Ok(fused_silica()),
        "diamond" => Ok(diamond()),
        other => Err(MaterialError::UnknownMaterial(other.to_string())),
    }
}

/// Resolves `name` as a built-in identifier, or failing that as a path to a
/// record file.
pub fn resolve_material(name: &str) -> Result<MaterialRecord, MaterialError> {
    match material_lookup(name) {
        Ok(m) => Ok(m),
        Err(MaterialError::UnknownMaterial(_)) if Path::new(name).is_file() => load_material_file(name),
        Err(e) => Err(e),
    }
}

/// SI m/V per Gaussian cm/statvolt: 100 cm/m times c/10⁶ V per statvolt.
const ESU_PER_M_PER_V: f64 = C0 * 1e-4;

/// Converts an electro-optic coefficient from pm/V to esu (cm/statvolt).
pub fn eo_coefficient_convert(r_pm_per_v: f64) -> f64 {
    r_pm_per_v * 1e-12 * ESU_PER_M_PER_V
}

/// Inverse of [`eo_coefficient_convert`].
pub fn eo_coefficient_to_pm_per_v(r_esu: f64) -> f64 {
    r_esu / ESU_PER_M_PER_V * 1e12
}

pub fn load_material_file(path: impl AsRef<Path>) -> Result<MaterialRecord, MaterialError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| MaterialError::Io(e.to_string()))?;
    parse_material(&text)
}

/// Parses a record from `key = value [unit]` lines. `#` starts a comment.
/// Electro-optic fields accept `pm/V` (default), `m/V` or `esu`.
pub fn parse_material(text: &str) -> Result<MaterialRecord, MaterialError> {
    let mut rec = MaterialRecord {
        name: String::new(),
        n_opt_o: f64::NAN,
        n_opt_e: f64::NAN,
        n_mw_o: f64::NAN,
        n_mw_e: f64::NAN,
        r33: 0.0,
        r31: 0.0,
        r42: 0.0,
        notes: String::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| MaterialError::Parse { line: line_no, msg: msg.to_string() };
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "name" => rec.name = value.to_string(),
            "notes" => rec.notes = value.to_string(),
            "n_opt_o" | "n_opt_e" | "n_mw_o" | "n_mw_e" => {
                let n: f64 = value.parse().map_err(|_| err("index must be a plain number"))?;
                match key {
                    "n_opt_o" => rec.n_opt_o = n,
                    "n_opt_e" => rec.n_opt_e = n,
                    "n_mw_o" => rec.n_mw_o = n,
                    _ => rec.n_mw_e = n,
                }
            }
            "r33" | "r31" | "r42" => {
                let mut parts = value.split_whitespace();
                let number: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err("electro-optic coefficient must be a number"))?;
                let pm = match parts.next().unwrap_or("pm/V") {
                    "pm/V" => number,
                    "m/V" => number * 1e12,
                    "esu" => eo_coefficient_to_pm_per_v(number),
                    other => return Err(err(&format!("unknown unit `{other}`"))),
                };
                match key {
                    "r33" => rec.r33 = pm,
                    "r31" => rec.r31 = pm,
                    _ => rec.r42 = pm,
                }
            }
            other => return Err(err(&format!("unknown field `{other}`"))),
        }
    }
    if rec.name.is_empty() {
        return Err(MaterialError::Parse { line: 0, msg: "missing `name`".into() });
    }
    // An isotropic file may give only the ordinary indices.
    if rec.n_opt_e.is_nan() {
        rec.n_opt_e = rec.n_opt_o;
    }
    if rec.n_mw_e.is_nan() {
        rec.n_mw_e = rec.n_mw_o;
    }
    rec.validate()?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lithium_niobate_values() {
        let ln = material_lookup("lithium-niobate").unwrap();
        assert_eq!(ln.n_opt_e, 2.138);
        assert_eq!(ln.n_mw_e, 5.15);
        assert_eq!(ln.n_mw_o, 6.72);
        assert_eq!(ln.r33, 29.0);
    }

    #[test]
    fn other_builtins() {
        assert_eq!(material_lookup("fused-silica").unwrap().n_mw_o, 1.9);
        assert_eq!(material_lookup("diamond").unwrap().n_opt_o, 2.384);
        let lt = material_lookup("lithium-tantalate").unwrap();
        assert_eq!(lt.n_mw_o, 6.5);
        assert_eq!(lt.n_mw_e, 6.5);
        assert_eq!(lt.r42, 20.0);
        assert!((lt.bias_tuning_coefficient() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_material() {
        assert_eq!(
            material_lookup("unobtainium"),
            Err(MaterialError::UnknownMaterial("unobtainium".into()))
        );
    }

    #[test]
    fn builtins_are_valid_and_stable() {
        for name in BUILTIN_NAMES {
            let a = material_lookup(name).unwrap();
            a.validate().unwrap();
            assert_eq!(a, material_lookup(name).unwrap());
        }
    }

    #[test]
    fn esu_conversion_matches_quoted_pairs() {
        assert!((eo_coefficient_convert(29.0) / 8.7e-7 - 1.0).abs() < 0.01);
        assert!((eo_coefficient_convert(20.0) / 6e-7 - 1.0).abs() < 0.01);
        assert_eq!(eo_coefficient_convert(0.0), 0.0);
    }

    #[test]
    fn parse_record_file() {
        let text = "# custom crystal\nname = test-crystal\nn_opt_o = 2.2\nn_opt_e = 2.1\n\
                    n_mw_o = 5.0\nn_mw_e = 4.0\nr33 = 3e-11 m/V\nr42 = 6e-7 esu\n";
        let rec = parse_material(text).unwrap();
        assert_eq!(rec.name, "test-crystal");
        assert!((rec.r33 - 30.0).abs() < 1e-9);
        assert!((rec.r42 - 20.01).abs() < 0.05);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "name = x\nn_opt_o = 2.2\nbogus = 1\n";
        assert!(matches!(parse_material(text), Err(MaterialError::Parse { line: 3, .. })));
        let text = "name = x\nn_opt_o = 0.5\nn_mw_o = 2\n";
        assert!(matches!(parse_material(text), Err(MaterialError::Invalid { .. })));
    }

    proptest! {
        #[test]
        fn esu_round_trip(r in 0.0f64..1e3) {
            let back = eo_coefficient_to_pm_per_v(eo_coefficient_convert(r));
            prop_assert!((back - r).abs() <= 1e-12 * r.max(1e-300));
        }
    }
}
