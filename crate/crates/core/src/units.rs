//! Physical constants and the angular-frequency newtype.
//!
//! Everything inside the crate is SI. Frequencies are carried as angular
//! frequency in rad/s; user-facing I/O is in cyclic GHz.

use std::f64::consts::PI;
use std::fmt;

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Reduced Planck constant in Gaussian units, erg·s.
pub const HBAR_CGS: f64 = 1.054_571_817e-27;

/// Angular frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Frequency(f64);

impl Frequency {
    pub const ZERO: Frequency = Frequency(0.0);

    /// Panics on negative or non-finite input; use [`Frequency::try_from_rad_per_s`]
    /// for untrusted values.
    pub fn from_rad_per_s(omega: f64) -> Self {
        Self::try_from_rad_per_s(omega).expect("frequency must be finite and non-negative")
    }

    pub fn try_from_rad_per_s(omega: f64) -> Option<Self> {
        (omega.is_finite() && omega >= 0.0).then_some(Frequency(omega))
    }

    pub fn from_ghz(f_ghz: f64) -> Self {
        Self::from_rad_per_s(2.0 * PI * f_ghz * 1e9)
    }

    pub fn from_thz(f_thz: f64) -> Self {
        Self::from_rad_per_s(2.0 * PI * f_thz * 1e12)
    }

    /// Angular frequency of light with the given vacuum wavelength.
    pub fn from_wavelength(lambda_m: f64) -> Self {
        Self::from_rad_per_s(2.0 * PI * C0 / lambda_m)
    }

    #[inline]
    pub fn rad_per_s(self) -> f64 {
        self.0
    }

    pub fn hz(self) -> f64 {
        self.0 / (2.0 * PI)
    }

    pub fn ghz(self) -> f64 {
        self.hz() * 1e-9
    }

    pub fn thz(self) -> f64 {
        self.hz() * 1e-12
    }

    /// Vacuum wavenumber ω/c in 1/m.
    pub fn wavenumber(self) -> f64 {
        self.0 / C0
    }

    /// Vacuum wavelength in m.
    pub fn wavelength(self) -> f64 {
        2.0 * PI * C0 / self.0
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} GHz", self.ghz())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ghz_accessors() {
        let f = Frequency::from_ghz(100.0);
        assert!((f.rad_per_s() - 2.0 * PI * 1e11).abs() < 1e-3);
        assert!((f.thz() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative() {
        assert!(Frequency::try_from_rad_per_s(-1.0).is_none());
        assert!(Frequency::try_from_rad_per_s(f64::NAN).is_none());
    }

    proptest! {
        #[test]
        fn ghz_round_trip(f in 1e-6f64..1e6) {
            let back = Frequency::from_ghz(f).ghz();
            prop_assert!(((back - f) / f).abs() < 4.0 * f64::EPSILON);
        }
    }
}
