use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use wgm::conversion::{eo_coefficient_for, efficiency_chain, overlap_factor, ChainInputs, FieldComponent, OpticalLocus};
use wgm::dynamics::{simulate, smallsignal_efficiency, timeseries_csv, Coupling, ModeAmplitudes, SimulateOptions};
use wgm::emsolver::{dispersion_csv, dispersion_scan as run_scan, ring_mesh, solve_ring_mode, DispersionRow, MicrowaveModeSolution};
use wgm::export::{field_vtk, mesh_vtk, plot_svg, profile_csv, Plot, Series};
use wgm::geometry::{cross_section_profile, rim_ratio};
use wgm::phasematch::{find_matches, matches_csv, nearest_crossings, phasematch_line, ConversionType, LineParams, MatchSearch};
use wgm::spectra::{
    coupling_contrast_report, fit_geometry as run_geometry_fit, fit_report_csv, fit_spectrum, label_modes, load_spectrum, lorentzian_dip,
    GeometryFitOptions, LabeledDip, SeriesSpectrum,
};
use wgm::units::{Frequency, C0};

use crate::config::RunConfig;
use crate::UsageError;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn write_output(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn design_rim(cfg: &RunConfig) -> Result<()> {
    let ring = cfg.ring_material()?;
    let prism = cfg.prism_material()?;
    let r = cfg.geometry.r_outer_mm * 1e-3;
    if matches!(&cfg.geometry.rim, crate::config::RimSpec::Named(n) if n == "cylindrical") {
        println!("rho = inf");
        return Ok(());
    }
    let ratio = rim_ratio(prism.n_opt_o, ring.n_opt_e)?;
    println!("rho = {:.0} um, rho/R = {:.3}", ratio * r * 1e6, ratio);
    Ok(())
}

/// Phase-matching line parameters from the configuration.
fn line_params(cfg: &RunConfig) -> Result<LineParams> {
    let ring = cfg.ring_material()?;
    let index = |p: &str| if p == "o" { ring.n_opt_o } else { ring.n_opt_e };
    let pm = &cfg.phasematch;
    let ctype = cfg.conversion_type()?;
    let (n_a, n_b) = match ctype {
        ConversionType::TypeI => (index(&pm.signal_polarization), index(&pm.signal_polarization)),
        ConversionType::TypeII => (index(&pm.pump_polarization), index(&pm.signal_polarization)),
    };
    Ok(LineParams {
        r: cfg.geometry.r_outer_mm * 1e-3,
        n_a,
        n_b,
        omega_a: Frequency::from_rad_per_s(pm.pump_omega_rad_per_s),
        branch: cfg.branch()?,
        conversion_type: ctype,
        height: cfg.geometry.height_um * 1e-6,
        bias_coefficient_pm_per_v: ring.bias_tuning_coefficient(),
    })
}

fn scan(cfg: &RunConfig) -> Result<Vec<DispersionRow>> {
    let geom = cfg.geometry()?;
    let idx = cfg.region_indices()?;
    let opts = cfg.ring_solve_options()?;
    let (lo, hi) = (cfg.solver.l_min, cfg.solver.l_max);
    let rows = run_scan(&geom, &idx, lo..=hi, &opts).with_context(|| format!("dispersion scan L_c = {lo}..={hi}"))?;
    for r in rows.iter().filter(|r| r.omega_c.is_none()) {
        eprintln!("note: no ring mode found at L_c = {}", r.l_c);
    }
    Ok(rows)
}

fn table(rows: &[DispersionRow]) -> Vec<(u32, Frequency)> {
    rows.iter().filter_map(|r| Some((r.l_c, r.omega_c?))).collect()
}

pub fn dispersion(cfg: &RunConfig, line: bool) -> Result<()> {
    let rows = scan(cfg)?;
    write_output(cfg, "dispersion.csv", &dispersion_csv(&rows))?;
    if cfg.output.svg {
        let mut series = vec![Series {
            label: "ring mode".into(),
            points: table(&rows).iter().map(|&(l, w)| (l as f64, w.ghz())).collect(),
            markers: true,
        }];
        if line {
            let p = line_params(cfg)?;
            series.push(Series {
                label: format!("{} line", p.branch),
                points: (cfg.solver.l_min..=cfg.solver.l_max)
                    .map(|l| (l as f64, phasematch_line(l, &p, 0.0) / TWO_PI * 1e-9))
                    .collect(),
                markers: false,
            });
        }
        let plot = Plot {
            title: "Microwave ring-mode dispersion".into(),
            x_label: "L_c".into(),
            y_label: "f_c (GHz)".into(),
            series,
            log_y: false,
        };
        write_output(cfg, "dispersion.svg", &plot_svg(&plot))?;
    }
    Ok(())
}

pub fn phasematch(cfg: &RunConfig) -> Result<()> {
    let params = line_params(cfg)?;
    let rows = scan(cfg)?;
    let tab = table(&rows);
    let matches = match params.conversion_type {
        ConversionType::TypeI => nearest_crossings(&tab, &params),
        ConversionType::TypeII => {
            let tol = if cfg.phasematch.tolerance_mhz > 0.0 {
                cfg.phasematch.tolerance_mhz
            } else {
                cfg.default_tolerance_mhz()
            };
            let search = MatchSearch { tolerance: TWO_PI * tol * 1e6, max_bias_volts: cfg.phasematch.max_bias_v };
            let mut m = find_matches(&tab, &params, &search);
            m.sort_by_key(|s| s.l_c);
            m
        }
    };
    write_output(cfg, "phasematch.csv", &matches_csv(&matches))?;
    if matches.is_empty() {
        let offset_ghz = params.birefringence_offset() / TWO_PI * 1e-9;
        let span_ghz = params.bias_sensitivity().abs() * cfg.phasematch.max_bias_v / TWO_PI * 1e-9;
        eprintln!(
            "note: no phase match for L_c = {}..={}: birefringence offset {offset_ghz:.1} GHz, bias reach ±{span_ghz:.2} GHz at {} V",
            cfg.solver.l_min, cfg.solver.l_max, cfg.phasematch.max_bias_v
        );
    }
    for m in &matches {
        println!(
            "L_c = {}: f_c = {:.3} GHz, detuning {:.1} MHz, bias {:.1} V",
            m.l_c,
            m.omega_disp.ghz(),
            m.detuning / TWO_PI * 1e-6,
            m.bias_voltage
        );
    }
    Ok(())
}

fn solve_mode(cfg: &RunConfig, l_c: u32) -> Result<MicrowaveModeSolution> {
    let geom = cfg.geometry()?;
    let idx = cfg.region_indices()?;
    let opts = cfg.ring_solve_options()?;
    solve_ring_mode(&geom, &idx, l_c, cfg.target(), &opts)
        .with_context(|| format!("solving L_c = {l_c}"))?
        .ok_or_else(|| anyhow!("no ring mode found at L_c = {l_c}"))
}

pub fn efficiency(cfg: &RunConfig) -> Result<()> {
    let c = &cfg.conversion;
    let ctype = cfg.conversion_type()?;
    let ring = cfg.ring_material()?;
    let params = line_params(cfg)?;
    let sol = solve_mode(cfg, c.l_c)?;
    let component = cfg.component()?.unwrap_or_else(|| FieldComponent::for_type(ctype));
    let locus = OpticalLocus {
        mode_radius: c.optical_spot_um * 1e-6,
        ..OpticalLocus::near_rim(cfg.geometry.r_outer_mm * 1e-3, c.locus_depth_um * 1e-6)
    };
    let overlap = overlap_factor(&sol, &locus, component)?;
    let inputs = ChainInputs {
        conversion_type: ctype,
        r_pm_per_v: eo_coefficient_for(&ring, ctype),
        n_a: params.n_a,
        n_b: params.n_b,
        n_c: cfg.region_indices()?.ring,
        omega_0: params.omega_a,
        q: c.q,
        q_m: c.q_m,
        p0: c.p0_mw * 1e-3,
        p_m: c.p_m_w,
    };
    let budget = efficiency_chain(&inputs, sol.omega_c, overlap)?;
    write_output(cfg, "efficiency.csv", &budget.report_csv())?;
    println!("L_c = {}: f_c = {:.3} GHz, g/2pi = {:.2} Hz", c.l_c, sol.omega_c.ghz(), budget.g / TWO_PI);
    println!("photon efficiency at P0 = {} mW: {:.3e}", c.p0_mw, budget.eta_photon);
    println!("unity-efficiency pump: {:.1} mW", budget.p0_unity * 1e3);
    if budget.beyond_model() {
        eprintln!("note: efficiency above 1 lies outside the small-signal model");
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DispersionRecord {
    #[serde(rename = "L_c")]
    l_c: u32,
    #[serde(rename = "f_GHz")]
    f_ghz: Option<f64>,
}

fn read_dispersion(path: &Path) -> Result<Vec<(u32, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<DispersionRecord>() {
        let rec = rec.with_context(|| format!("parsing {}", path.display()))?;
        if let Some(f) = rec.f_ghz {
            out.push((rec.l_c, f));
        }
    }
    Ok(out)
}

pub fn spectrum_fit(cfg: &RunConfig, data: &Path, dispersion: Option<&Path>) -> Result<()> {
    let s = load_spectrum(data)?;
    let fits = fit_spectrum(&s, cfg.spectrum.prominence)?;
    if fits.is_empty() {
        bail!("no dips with prominence above {} in {}", cfg.spectrum.prominence, data.display());
    }
    let labels = match dispersion {
        Some(p) => Some(label_modes(&fits, &read_dispersion(p)?)?),
        None => None,
    };
    let name = if labels.is_some() { "labels.csv" } else { "fits.csv" };
    write_output(cfg, name, &fit_report_csv(&fits, labels.as_deref()))?;
    if let Some(ls) = &labels {
        for l in ls.iter().filter(|l| l.conflict) {
            eprintln!("note: L_c = {} assigned to more than one dip", l.l_c);
        }
    }
    let report = coupling_contrast_report(&fits)?;
    let best = &fits[report.best_dip];
    println!("{} dips; max contrast {:.3} at {:.4} GHz (Q = {:.1})", fits.len(), report.max_contrast, best.f0, best.q);
    if cfg.output.svg {
        let model: Vec<(f64, f64)> = s
            .frequency
            .iter()
            .map(|&f| (f, fits.iter().map(|d| lorentzian_dip(f, d.f0, d.linewidth, d.contrast) - 1.0).sum::<f64>() + 1.0))
            .collect();
        let plot = Plot {
            title: format!("Transmission {}", s.metadata.label),
            x_label: "f (GHz)".into(),
            y_label: "T".into(),
            series: vec![
                Series { label: "data".into(), points: s.frequency.iter().copied().zip(s.transmission.iter().copied()).collect(), markers: false },
                Series { label: "Lorentzian fits".into(), points: model, markers: false },
            ],
            log_y: false,
        };
        write_output(cfg, "spectrum.svg", &plot_svg(&plot))?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SeriesRecord {
    r_outer_mm: f64,
    #[serde(rename = "L_c")]
    l_c: u32,
    #[serde(rename = "f0_GHz")]
    f0_ghz: f64,
    #[serde(rename = "sigma_GHz")]
    sigma_ghz: f64,
}

/// Labeled dips grouped by outer radius, in file order.
fn read_series(path: &Path) -> Result<Vec<SeriesSpectrum>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out: Vec<SeriesSpectrum> = Vec::new();
    for rec in rdr.deserialize::<SeriesRecord>() {
        let rec = rec.with_context(|| format!("parsing {}", path.display()))?;
        let r = rec.r_outer_mm * 1e-3;
        let dip = LabeledDip { l_c: rec.l_c, f0_ghz: rec.f0_ghz, sigma_ghz: rec.sigma_ghz };
        match out.iter_mut().find(|s| s.r_outer == r) {
            Some(s) => s.dips.push(dip),
            None => out.push(SeriesSpectrum { r_outer: r, dips: vec![dip] }),
        }
    }
    Ok(out)
}

pub fn fit_geometry(cfg: &RunConfig, series_path: &Path, interval: Option<(f64, f64)>) -> Result<()> {
    let series = read_series(series_path)?;
    let sp = &cfg.spectrum;
    let defaults = GeometryFitOptions::default();
    let interval = interval.unwrap_or(defaults.interval);
    if !(interval.0 < interval.1) {
        return Err(UsageError(format!("--interval {} {} is empty", interval.0, interval.1)).into());
    }
    let opts = GeometryFitOptions {
        interval,
        tolerance: sp.r_in_tolerance_um * 1e-6,
        coarse: wgm::emsolver::RingSolveOptions { edge_length: sp.coarse_edge_um * 1e-6, ..cfg.ring_solve_options()? },
        refine_edge: Some(sp.refine_edge_um * 1e-6),
        ..defaults
    };
    let base = cfg.geometry()?;
    let fit = run_geometry_fit(&series, &base, &cfg.region_indices()?, &opts)?;
    let mut csv = String::from("r_in_m, objective_GHz2\n");
    for (r, v) in &fit.evaluations {
        csv.push_str(&format!("{r:.9e}, {v:.9e}\n"));
    }
    write_output(cfg, "fit_geometry.csv", &csv)?;
    println!(
        "R_in = {:.4} mm +- {:.1} um (objective {:.3e} GHz^2, {} evaluations)",
        fit.r_in * 1e3,
        fit.uncertainty * 1e6,
        fit.objective,
        fit.evaluations.len()
    );
    if cfg.output.svg {
        let plot = Plot {
            title: "Geometry fit".into(),
            x_label: "evaluation".into(),
            y_label: "best objective (GHz^2)".into(),
            series: vec![Series {
                label: "coarse search".into(),
                points: fit.trajectory.iter().enumerate().map(|(i, &(_, v))| (i as f64, v)).collect(),
                markers: true,
            }],
            log_y: true,
        };
        write_output(cfg, "fit_geometry.svg", &plot_svg(&plot))?;
    }
    Ok(())
}

pub fn dynamics(cfg: &RunConfig, periods: Option<f64>) -> Result<()> {
    let d = &cfg.dynamics;
    let periods = periods.unwrap_or(d.duration_periods);
    if !(periods > 0.0 && periods.is_finite()) {
        return Err(UsageError(format!("duration must be positive, got {periods} periods")).into());
    }
    // Lossless run in units of the coupling rate: g = 1, |a| = 1.
    let one = num_complex::Complex64::new(1.0, 0.0);
    let zero = num_complex::Complex64::new(0.0, 0.0);
    let initial = ModeAmplitudes::lossless(one, zero, zero, num_complex::Complex64::new(0.0, 0.1));
    let coupling = Coupling::both(1.0);
    let opts = SimulateOptions { tolerance: d.tolerance, samples: d.samples, initial_step: 0.0 };
    let ts = simulate(&initial, &coupling, periods * TWO_PI, &opts)?;
    let (n0, m0) = (initial.optical_photons(), initial.manley_rowe());
    let drift = ts
        .states
        .iter()
        .map(|s| ((s.optical_photons() - n0) / n0).abs().max((s.manley_rowe() - m0).abs() / n0))
        .fold(0.0, f64::max);
    write_output(cfg, "dynamics.csv", &timeseries_csv(&ts))?;
    println!("invariants conserved: max drift {drift:.1e} over {periods} periods ({} steps)", ts.steps);

    let c = &cfg.conversion;
    let w0 = Frequency::from_rad_per_s(cfg.phasematch.pump_omega_rad_per_s);
    let wc = Frequency::from_ghz(100.0);
    let g = d.g_rad_per_s;
    let p0 = c.p0_mw * 1e-3;
    let xi = wgm::conversion::xi_factor(g, c.q, c.q_m, w0, wc);
    let ss = smallsignal_efficiency(g, c.q, c.q_m, w0, wc, p0, c.p_m_w)?;
    let formula = wgm::conversion::photon_efficiency(xi, p0, w0, wc);
    let rel = (ss.anti_stokes - formula).abs() / formula;
    let verdict = if rel <= 0.01 { "PASS" } else { "FAIL" };
    println!("small-signal agreement: {:.2}% ({verdict}; simulated {:.4e}, formula {formula:.4e})", rel * 100.0, ss.anti_stokes);
    if cfg.output.svg {
        let plot = Plot {
            title: "Lossless coupled-mode evolution".into(),
            x_label: "t (coupling periods)".into(),
            y_label: "photons".into(),
            series: [("|a|^2", 0usize), ("|b+|^2", 1), ("|b-|^2", 2), ("|c|^2", 3)]
                .iter()
                .map(|&(label, k)| Series {
                    label: label.into(),
                    points: ts.t.iter().zip(&ts.states).map(|(t, s)| (t / TWO_PI, s.amplitudes()[k].norm_sqr())).collect(),
                    markers: false,
                })
                .collect(),
            log_y: false,
        };
        write_output(cfg, "dynamics.svg", &plot_svg(&plot))?;
    }
    if rel > 0.01 {
        bail!("steady state disagrees with the small-signal formula by {:.2}%", rel * 100.0);
    }
    Ok(())
}

pub fn mesh_export(cfg: &RunConfig, field: bool) -> Result<()> {
    let geom = cfg.geometry()?;
    let opts = cfg.ring_solve_options()?;
    let idx = cfg.region_indices()?;
    let guess = cfg.target().unwrap_or_else(|| wgm::emsolver::ring_mode_guess(&geom, &idx, cfg.conversion.l_c));
    let margin = opts.window_wavelengths * C0 / guess.hz();
    let profile = cross_section_profile(&geom, opts.rim_segments, margin)?;
    let mesh = ring_mesh(&geom, guess, &opts)?;
    write_output(cfg, "mesh.vtk", &mesh_vtk(&mesh))?;
    write_output(cfg, "profile.csv", &profile_csv(&profile))?;
    println!("{} nodes, {} triangles", mesh.nodes.len(), mesh.triangles.len());
    if field {
        let sol = solve_mode(cfg, cfg.conversion.l_c)?;
        write_output(cfg, "field.vtk", &field_vtk(&sol))?;
        println!("L_c = {} mode at {:.4} GHz", sol.l_c, sol.omega_c.ghz());
        if cfg.output.svg {
            let n = 200;
            let points: Vec<(f64, f64)> = (0..=n)
                .filter_map(|i| {
                    let r = profile.window_r * i as f64 / n as f64;
                    let e = wgm::emsolver::field_probe(&sol, r, 0.0).ok()?;
                    Some((r * 1e3, FieldComponent::Magnitude.of(&e)))
                })
                .collect();
            let plot = Plot {
                title: format!("|E| on the equator, L_c = {}", sol.l_c),
                x_label: "r (mm)".into(),
                y_label: "|E| (max-normalized)".into(),
                series: vec![Series { label: "|E|".into(), points, markers: false }],
                log_y: true,
            };
            write_output(cfg, "field.svg", &plot_svg(&plot))?;
        }
    }
    Ok(())
}
