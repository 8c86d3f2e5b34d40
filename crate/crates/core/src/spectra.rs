//! Measured microwave transmission spectra: dip detection, Lorentzian fits,
//! mode labeling and inner-radius inference.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::sync::Mutex;

use argmin::core::{CostFunction, Executor};
use argmin::solver::brent::BrentOpt;
use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, OMatrix, Vector3, U3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::emsolver::{dispersion_scan, RingSolveOptions, SolverError};
use crate::fem::RegionIndices;
use crate::geometry::RingGeometry;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("frequency column not strictly increasing at line {line}")]
    MonotonicityError { line: u64 },
    #[error("Lorentzian fit diverged: {0}")]
    FitDiverged(String),
    #[error("dip at {f0_ghz:.4} GHz lies between L_c = {a} and L_c = {b} within its linewidth")]
    AmbiguousLabel { f0_ghz: f64, a: u32, b: u32 },
    #[error("geometry search failed: {0}")]
    SearchFailure(String),
    #[error("invalid spectrum: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumMetadata {
    pub label: String,
    /// Outer radius of the measured ring (m).
    pub r_outer: Option<f64>,
    /// Some transmission sample exceeds 1 (noise above the baseline).
    pub above_unity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Strictly increasing, GHz.
    pub frequency: Vec<f64>,
    /// Linear power transmission.
    pub transmission: Vec<f64>,
    pub metadata: SpectrumMetadata,
}

pub const MIN_SAMPLES: usize = 16;

impl Spectrum {
    pub fn new(frequency: Vec<f64>, transmission: Vec<f64>, mut metadata: SpectrumMetadata) -> Result<Self, SpectraError> {
        if frequency.len() != transmission.len() {
            return Err(SpectraError::InvalidInput("frequency and transmission lengths differ".into()));
        }
        if frequency.len() < MIN_SAMPLES {
            return Err(SpectraError::InvalidInput(format!("{} samples, need at least {MIN_SAMPLES}", frequency.len())));
        }
        if let Some(i) = frequency.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(SpectraError::MonotonicityError { line: i as u64 + 2 });
        }
        metadata.above_unity = transmission.iter().any(|&t| t > 1.0);
        Ok(Spectrum { frequency, transmission, metadata })
    }

    pub fn len(&self) -> usize {
        self.frequency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency.is_empty()
    }
}

/// Parses `f_GHz, T` CSV text. `#` lines are comments; `# label: ...` and
/// `# r_outer_m: ...` fill the metadata.
pub fn parse_spectrum(text: &str) -> Result<Spectrum, SpectraError> {
    let mut meta = SpectrumMetadata::default();
    for line in text.lines() {
        if let Some(c) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = c.split_once(':') {
                match k.trim() {
                    "label" => meta.label = v.trim().to_string(),
                    "r_outer_m" => meta.r_outer = v.trim().parse().ok(),
                    _ => {}
                }
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| SpectraError::ParseError { line: 1, message: e.to_string() })?
        .clone();
    if headers.len() < 2 || &headers[0] != "f_GHz" || &headers[1] != "T" {
        return Err(SpectraError::ParseError { line: 1, message: format!("expected header `f_GHz, T`, found {headers:?}") });
    }
    let mut f = Vec::new();
    let mut t = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SpectraError::ParseError {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize, name: &str| -> Result<f64, SpectraError> {
            rec.get(i)
                .ok_or_else(|| SpectraError::ParseError { line, message: format!("missing {name}") })?
                .parse::<f64>()
                .map_err(|e| SpectraError::ParseError { line, message: format!("{name}: {e}") })
        };
        f.push(num(0, "f_GHz")?);
        t.push(num(1, "T")?);
        lines.push(line);
    }
    if let Some(i) = f.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SpectraError::MonotonicityError { line: lines[i + 1] });
    }
    Spectrum::new(f, t, meta)
}

pub fn load_spectrum(path: impl AsRef<Path>) -> Result<Spectrum, SpectraError> {
    let mut s = String::new();
    std::fs::File::open(path)?.read_to_string(&mut s)?;
    parse_spectrum(&s)
}

pub fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::new();
    if !s.metadata.label.is_empty() {
        out.push_str(&format!("# label: {}\n", s.metadata.label));
    }
    if let Some(r) = s.metadata.r_outer {
        out.push_str(&format!("# r_outer_m: {r:e}\n"));
    }
    out.push_str("f_GHz, T\n");
    for (f, t) in s.frequency.iter().zip(&s.transmission) {
        out.push_str(&format!("{f:.9}, {t:.9}\n"));
    }
    out
}

/// A candidate dip and the sample range to fit it on.
#[derive(Debug, Clone, PartialEq)]
pub struct DipWindow {
    pub lo: usize,
    /// Exclusive.
    pub hi: usize,
    pub min_index: usize,
    pub prominence: f64,
    /// Full width at half prominence (GHz).
    pub linewidth: f64,
    /// Two dips closer than a linewidth were folded into this window.
    pub merged: bool,
}

/// Robust white-noise σ of the transmission from the median absolute
/// deviation of first differences.
pub fn noise_sigma(t: &[f64]) -> f64 {
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return 0.0;
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let m = median(&mut d);
    let mut dev: Vec<f64> = d.iter().map(|x| (x - m).abs()).collect();
    1.4826 * median(&mut dev) / std::f64::consts::SQRT_2
}

/// Noise excursions below this many σ are not reported as dips.
pub const NOISE_FLOOR_SIGMAS: f64 = 8.0;

/// Local minima of the transmission whose prominence exceeds both
/// `threshold` and the noise floor, each with a window of ±3 estimated
/// linewidths.
pub fn find_dips(s: &Spectrum, threshold: f64) -> Result<Vec<DipWindow>, SpectraError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SpectraError::InvalidInput(format!("prominence {threshold} outside (0, 1)")));
    }
    let t = &s.transmission;
    let f = &s.frequency;
    let n = t.len();
    let threshold = threshold.max(NOISE_FLOOR_SIGMAS * noise_sigma(t));
    let mut dips: Vec<DipWindow> = Vec::new();
    let mut i = 0;
    while i < n {
        // Plateau-aware local minimum.
        let mut j = i;
        while j + 1 < n && t[j + 1] == t[i] {
            j += 1;
        }
        let left_higher = i == 0 || t[i - 1] > t[i];
        let right_higher = j + 1 == n || t[j + 1] > t[i];
        let interior = i > 0 && j + 1 < n;
        if left_higher && right_higher && interior {
            let m = (i + j) / 2;
            let mut left_max = t[m];
            let mut k = m;
            while k > 0 && t[k - 1] >= t[m] {
                k -= 1;
                left_max = left_max.max(t[k]);
            }
            let mut right_max = t[m];
            let mut k = m;
            while k + 1 < n && t[k + 1] >= t[m] {
                k += 1;
                right_max = right_max.max(t[k]);
            }
            let prominence = left_max.min(right_max) - t[m];
            if prominence > threshold {
                let half = t[m] + 0.5 * prominence;
                let mut a = m;
                while a > 0 && t[a] < half {
                    a -= 1;
                }
                let mut b = m;
                while b + 1 < n && t[b] < half {
                    b += 1;
                }
                let linewidth = (f[b] - f[a]).max(f[(m + 1).min(n - 1)] - f[m.saturating_sub(1)]);
                let lo = f.partition_point(|&x| x < f[m] - 3.0 * linewidth);
                let hi = f.partition_point(|&x| x <= f[m] + 3.0 * linewidth);
                dips.push(DipWindow { lo, hi, min_index: m, prominence, linewidth, merged: false });
            }
        }
        i = j + 1;
    }
    let mut merged: Vec<DipWindow> = Vec::new();
    for d in dips {
        if let Some(last) = merged.last_mut() {
            if f[d.min_index] - f[last.min_index] < last.linewidth.max(d.linewidth) {
                let keep_new = t[d.min_index] < t[last.min_index];
                let (lo, hi) = (last.lo.min(d.lo), last.hi.max(d.hi));
                if keep_new {
                    *last = d;
                }
                last.lo = lo;
                last.hi = hi;
                last.merged = true;
                continue;
            }
        }
        merged.push(d);
    }
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipFit {
    pub f0: f64,
    pub q: f64,
    pub contrast: f64,
    pub linewidth: f64,
    pub rmse: f64,
    /// One-sigma uncertainties from the fit covariance.
    pub f0_sigma: f64,
    pub q_sigma: f64,
    pub contrast_sigma: f64,
}

/// T(f) = 1 − C / (1 + (2(f − f0)/δf)²).
pub fn lorentzian_dip(f: f64, f0: f64, linewidth: f64, contrast: f64) -> f64 {
    let u = 2.0 * (f - f0) / linewidth;
    1.0 - contrast / (1.0 + u * u)
}

struct DipProblem<'a> {
    f: &'a [f64],
    t: &'a [f64],
    p: Vector3<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U3> for DipProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U3>;
    type ParameterStorage = Owned<f64, U3>;

    fn set_params(&mut self, x: &Vector3<f64>) {
        self.p = *x;
    }

    fn params(&self) -> Vector3<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (f0, w, c) = (self.p[0], self.p[1], self.p[2]);
        Some(DVector::from_iterator(
            self.f.len(),
            self.f.iter().zip(self.t).map(|(&f, &t)| lorentzian_dip(f, f0, w, c) - t),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U3>> {
        let (f0, w, c) = (self.p[0], self.p[1], self.p[2]);
        let mut j = OMatrix::<f64, Dyn, U3>::zeros(self.f.len());
        for (i, &f) in self.f.iter().enumerate() {
            let u = 2.0 * (f - f0) / w;
            let d = 1.0 + u * u;
            let dt_du = c * 2.0 * u / (d * d);
            j[(i, 0)] = dt_du * (-2.0 / w);
            j[(i, 1)] = dt_du * (-u / w);
            j[(i, 2)] = -1.0 / d;
        }
        Some(j)
    }
}

/// Least-squares Lorentzian fit of one dip window.
pub fn fit_lorentzian(s: &Spectrum, window: &DipWindow) -> Result<DipFit, SpectraError> {
    let f = &s.frequency[window.lo..window.hi];
    let t = &s.transmission[window.lo..window.hi];
    if f.len() < 8 {
        return Err(SpectraError::FitDiverged(format!("window has {} samples, need 8", f.len())));
    }
    if f[f.len() - 1] - f[0] < 2.0 * window.linewidth {
        return Err(SpectraError::FitDiverged("window spans less than two linewidths".into()));
    }
    let m = window.min_index.clamp(window.lo, window.hi - 1);
    let start = Vector3::new(s.frequency[m], window.linewidth, (1.0 - s.transmission[m]).clamp(1e-3, 1.0));
    let problem = DipProblem { f, t, p: start };
    let (fitted, report) = LevenbergMarquardt::new()
        .with_ftol(1e-15)
        .with_xtol(1e-15)
        .with_gtol(1e-15)
        .with_patience(200)
        .minimize(problem);
    let (f0, w, c) = (fitted.p[0], fitted.p[1].abs(), fitted.p[2]);
    let usable = match report.termination {
        levenberg_marquardt::TerminationReason::User(_)
        | levenberg_marquardt::TerminationReason::Numerical(_)
        | levenberg_marquardt::TerminationReason::WrongDimensions(_) => false,
        _ => true,
    };
    if !usable || !f0.is_finite() || !w.is_finite() || !c.is_finite() {
        return Err(SpectraError::FitDiverged(format!("{:?}", report.termination)));
    }
    if !(c > 0.0) || c > 1.0 + 1e-9 {
        return Err(SpectraError::FitDiverged(format!("contrast {c:.4} outside (0, 1]")));
    }
    if f0 < s.frequency[0] || f0 > s.frequency[s.len() - 1] || !(w > 0.0) {
        return Err(SpectraError::FitDiverged(format!("centre {f0:.4} GHz or width {w:e} out of range")));
    }
    let res = fitted.residuals().unwrap();
    let n = f.len();
    let sse = res.norm_squared();
    let rmse = (sse / n as f64).sqrt();
    let jac = fitted.jacobian().unwrap();
    let s2 = sse / (n as f64 - 3.0).max(1.0);
    let cov = (jac.transpose() * &jac).try_inverse().map(|m| m * s2);
    let (f0_sigma, q_sigma, contrast_sigma) = match cov {
        Some(cv) => {
            // Q = f0/δf: first-order propagation including the covariance term.
            let gq = Vector3::new(1.0 / w, -f0 / (w * w), 0.0);
            let var_q = (gq.transpose() * cv * gq)[(0, 0)];
            (cv[(0, 0)].max(0.0).sqrt(), var_q.max(0.0).sqrt(), cv[(2, 2)].max(0.0).sqrt())
        }
        None => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };
    Ok(DipFit { f0, q: f0 / w, contrast: c, linewidth: w, rmse, f0_sigma, q_sigma, contrast_sigma })
}

/// Detects and fits every dip; windows whose fit diverges are skipped.
pub fn fit_spectrum(s: &Spectrum, threshold: f64) -> Result<Vec<DipFit>, SpectraError> {
    let windows = find_dips(s, threshold)?;
    use rayon::prelude::*;
    Ok(windows.par_iter().filter_map(|w| fit_lorentzian(s, w).ok()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeLabel {
    pub dip: usize,
    pub l_c: u32,
    /// f0 − f_disp (GHz).
    pub offset: f64,
    /// Another dip received the same L_c.
    pub conflict: bool,
}

/// Assigns each dip the nearest simulated L_c. `table` holds (L_c, f_GHz).
pub fn label_modes(dips: &[DipFit], table: &[(u32, f64)]) -> Result<Vec<ModeLabel>, SpectraError> {
    if table.is_empty() {
        return Err(SpectraError::InvalidInput("empty dispersion table".into()));
    }
    let mut labels = Vec::with_capacity(dips.len());
    for (i, d) in dips.iter().enumerate() {
        let mut ranked: Vec<(f64, u32, f64)> = table.iter().map(|&(l, f)| ((d.f0 - f).abs(), l, f)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some(second) = ranked.get(1) {
            if (second.0 - ranked[0].0).abs() < d.linewidth {
                let (a, b) = (ranked[0].1.min(second.1), ranked[0].1.max(second.1));
                return Err(SpectraError::AmbiguousLabel { f0_ghz: d.f0, a, b });
            }
        }
        labels.push(ModeLabel { dip: i, l_c: ranked[0].1, offset: d.f0 - ranked[0].2, conflict: false });
    }
    let mut count: BTreeMap<u32, usize> = BTreeMap::new();
    for l in &labels {
        *count.entry(l.l_c).or_default() += 1;
    }
    for l in &mut labels {
        l.conflict = count[&l.l_c] > 1;
    }
    Ok(labels)
}

/// `f0_GHz, Q, C, L_c, rmse`; unlabeled dips leave L_c empty.
pub fn fit_report_csv(fits: &[DipFit], labels: Option<&[ModeLabel]>) -> String {
    let mut out = String::from("f0_GHz, Q, C, L_c, rmse\n");
    for (i, d) in fits.iter().enumerate() {
        let l = labels
            .and_then(|ls| ls.iter().find(|l| l.dip == i))
            .map(|l| l.l_c.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{:.6}, {:.3}, {:.4}, {}, {:.3e}\n", d.f0, d.q, d.contrast, l, d.rmse));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastReport {
    pub max_contrast: f64,
    pub best_dip: usize,
    pub table: Vec<(f64, f64, f64)>,
}

pub fn coupling_contrast_report(fits: &[DipFit]) -> Result<ContrastReport, SpectraError> {
    if fits.is_empty() {
        return Err(SpectraError::InvalidInput("no dip fits".into()));
    }
    let (best_dip, best) = fits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.contrast.total_cmp(&b.1.contrast))
        .unwrap();
    Ok(ContrastReport {
        max_contrast: best.contrast,
        best_dip,
        table: fits.iter().map(|d| (d.f0, d.q, d.contrast)).collect(),
    })
}

/// Transmission with Lorentzian dips `(f0 GHz, Q, C)` on a unit baseline and
/// Gaussian noise whose standard deviation is the deepest contrast reduced by
/// `snr_db` (amplitude dB).
pub fn synthetic_spectrum(freqs: &[f64], dips: &[(f64, f64, f64)], snr_db: Option<f64>, seed: u64) -> Vec<f64> {
    let mut t: Vec<f64> = freqs
        .iter()
        .map(|&f| dips.iter().map(|&(f0, q, c)| lorentzian_dip(f, f0, f0 / q, c) - 1.0).sum::<f64>() + 1.0)
        .collect();
    if let Some(snr) = snr_db {
        let depth = dips.iter().map(|d| d.2).fold(0.0, f64::max);
        let sigma = depth * 10f64.powf(-snr / 20.0);
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut t {
            *v += normal.sample(&mut rng);
        }
    }
    t
}

/// A dip already labeled with its azimuthal number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledDip {
    pub l_c: u32,
    pub f0_ghz: f64,
    /// Measurement uncertainty of f0 (GHz); used only for the reported
    /// R_in uncertainty.
    pub sigma_ghz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpectrum {
    pub r_outer: f64,
    pub dips: Vec<LabeledDip>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryFitOptions {
    pub interval: (f64, f64),
    /// Absolute tolerance on R_in (m).
    pub tolerance: f64,
    pub coarse: RingSolveOptions,
    /// Edge length of the refinement pass at the optimum; `None` skips it.
    pub refine_edge: Option<f64>,
    pub max_iters: u64,
    /// Squared-GHz cost charged per dip whose L_c has no ring mode.
    pub missing_penalty: f64,
}

impl Default for GeometryFitOptions {
    fn default() -> Self {
        GeometryFitOptions {
            interval: (2.49e-3, 2.75e-3),
            tolerance: 1e-6,
            coarse: RingSolveOptions { edge_length: 50e-6, ..RingSolveOptions::default() },
            refine_edge: Some(35e-6),
            max_iters: 40,
            missing_penalty: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryFit {
    pub r_in: f64,
    pub uncertainty: f64,
    /// Σ (f0 − f_disp)² at the optimum (GHz²).
    pub objective: f64,
    /// Every objective evaluation (R_in, value) in order.
    pub evaluations: Vec<(f64, f64)>,
    /// Best value so far after each evaluation of the coarse search.
    pub trajectory: Vec<(f64, f64)>,
    pub refined: bool,
}

/// Σ over all dips of (f0 − f_disp(L_c; R_in, R))².
pub fn geometry_objective(
    series: &[SeriesSpectrum],
    base: &RingGeometry,
    indices: &RegionIndices,
    r_in: f64,
    opts: &RingSolveOptions,
    missing_penalty: f64,
) -> Result<f64, SpectraError> {
    let mut total = 0.0;
    for s in series {
        let mut g = base.clone();
        g.r_outer = s.r_outer;
        g.r_inner = r_in;
        g.post_outer_radius = g.post_outer_radius.min(r_in);
        let lo = s.dips.iter().map(|d| d.l_c).min().unwrap();
        let hi = s.dips.iter().map(|d| d.l_c).max().unwrap();
        let rows = dispersion_scan(&g, indices, lo..=hi, opts)?;
        for d in &s.dips {
            match rows.iter().find(|r| r.l_c == d.l_c).and_then(|r| r.omega_c) {
                Some(w) => total += (d.f0_ghz - w.ghz()).powi(2),
                None => total += missing_penalty,
            }
        }
    }
    Ok(total)
}

struct Objective<'a> {
    series: &'a [SeriesSpectrum],
    base: &'a RingGeometry,
    indices: &'a RegionIndices,
    opts: RingSolveOptions,
    penalty: f64,
    log: &'a Mutex<Vec<(f64, f64)>>,
    error: &'a Mutex<Option<SpectraError>>,
}

impl CostFunction for Objective<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, r_in: &f64) -> Result<f64, argmin::core::Error> {
        match geometry_objective(self.series, self.base, self.indices, *r_in, &self.opts, self.penalty) {
            Ok(v) => {
                self.log.lock().unwrap().push((*r_in, v));
                Ok(v)
            }
            Err(e) => {
                let msg = e.to_string();
                *self.error.lock().unwrap() = Some(e);
                Err(argmin::core::Error::msg(msg))
            }
        }
    }
}

/// Best-fit inner radius by bounded Brent minimization on a coarse mesh,
/// followed by a parabolic refinement on a finer mesh.
pub fn fit_geometry(
    series: &[SeriesSpectrum],
    base: &RingGeometry,
    indices: &RegionIndices,
    opts: &GeometryFitOptions,
) -> Result<GeometryFit, SpectraError> {
    if series.is_empty() || series.iter().any(|s| s.dips.is_empty()) {
        return Err(SpectraError::InvalidInput("need at least one spectrum with labeled dips".into()));
    }
    let (a, b) = opts.interval;
    if !(a < b) {
        return Err(SpectraError::InvalidInput(format!("empty interval [{a}, {b}]")));
    }
    let r_min = series.iter().map(|s| s.r_outer).fold(f64::INFINITY, f64::min);
    if a < base.post_outer_radius || b >= r_min {
        return Err(SpectraError::InvalidInput(format!(
            "interval [{a}, {b}] must lie within (post radius {}, R {r_min})",
            base.post_outer_radius
        )));
    }
    let log = Mutex::new(Vec::new());
    let error = Mutex::new(None);
    let cost = Objective {
        series,
        base,
        indices,
        opts: opts.coarse,
        penalty: opts.missing_penalty,
        log: &log,
        error: &error,
    };
    let solver = BrentOpt::new(a, b).set_tolerance(opts.tolerance / (0.5 * (a + b)), opts.tolerance / 3.0);
    let run = Executor::new(cost, solver).configure(|s| s.max_iters(opts.max_iters)).run();
    if let Some(e) = error.lock().unwrap().take() {
        return Err(e);
    }
    let result = run.map_err(|e| SpectraError::SearchFailure(e.to_string()))?;
    let state = result.state();
    let mut x = state.best_param.ok_or_else(|| SpectraError::SearchFailure("no evaluation".into()))?;
    let mut fx = state.best_cost;
    let evaluations = log.lock().unwrap().clone();
    let mut trajectory = Vec::with_capacity(evaluations.len());
    let mut best = (f64::NAN, f64::INFINITY);
    for &(r, v) in &evaluations {
        if v < best.1 {
            best = (r, v);
        }
        trajectory.push(best);
    }
    let edge_tol = 3.0 * opts.tolerance;
    if x - a < edge_tol || b - x < edge_tol {
        return Err(SpectraError::SearchFailure(format!(
            "minimum at the interval boundary (R_in = {x:.6e} m)"
        )));
    }

    // Parabola through three points on the refinement mesh.
    let step = (5.0 * opts.tolerance).max(2e-6);
    let mut refined = false;
    let mut evaluations = evaluations;
    let sigma2_meas = {
        let n: usize = series.iter().map(|s| s.dips.len()).sum();
        series.iter().flat_map(|s| s.dips.iter()).map(|d| d.sigma_ghz * d.sigma_ghz).sum::<f64>() / n as f64
    };
    let n_dips: usize = series.iter().map(|s| s.dips.len()).sum();
    let mut curvature = f64::NAN;
    let probe = |edge: f64, x: f64| -> Result<(f64, f64, f64), SpectraError> {
        let o = RingSolveOptions { edge_length: edge, ..opts.coarse };
        let e = |r: f64| geometry_objective(series, base, indices, r, &o, opts.missing_penalty);
        Ok((e(x - step)?, e(x)?, e(x + step)?))
    };
    if let Some(edge) = opts.refine_edge {
        let (fm, f0, fp) = probe(edge, x)?;
        evaluations.extend([(x - step, fm), (x, f0), (x + step, fp)]);
        let c2 = (fp - 2.0 * f0 + fm) / (step * step);
        if c2 > 0.0 {
            let shift = -(fp - fm) / (2.0 * step * c2);
            let shift = shift.clamp(-10.0 * step, 10.0 * step);
            x += shift;
            fx = f0 + 0.5 * c2 * shift * shift + (fp - fm) / (2.0 * step) * shift;
            curvature = c2;
            refined = true;
        } else {
            fx = f0;
        }
    } else {
        let (fm, f0, fp) = probe(opts.coarse.edge_length, x)?;
        curvature = (fp - 2.0 * f0 + fm) / (step * step);
        fx = fx.min(f0);
    }
    let fx = fx.max(0.0);
    let s2 = if n_dips > 1 { (fx / (n_dips - 1) as f64).max(sigma2_meas) } else { sigma2_meas };
    let uncertainty = if curvature > 0.0 { (2.0 * s2 / curvature).sqrt() } else { f64::INFINITY };
    Ok(GeometryFit { r_in: x, uncertainty, objective: fx, evaluations, trajectory, refined })
}
