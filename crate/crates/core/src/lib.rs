//! Design and analysis toolkit for all-resonant microwave-to-optical
//! up-converters built on whispering-gallery ring resonators.

pub mod emsolver;
pub mod export;
pub mod fem;
pub mod conversion;
pub mod dynamics;
pub mod eigen;
pub mod geometry;
pub mod materials;
pub mod mesh;
pub mod phasematch;
pub mod spectra;
pub mod units;
