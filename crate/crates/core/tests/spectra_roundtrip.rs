use std::io::Write;

use approx::assert_relative_eq;

use wgm::spectra::*;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn single_dip_recovered_at_30_db() {
    let f = grid(95.0, 105.0, 2001);
    for seed in 0..5 {
        let t = synthetic_spectrum(&f, &[(100.0, 100.0, 0.82)], Some(30.0), seed);
        let s = Spectrum::new(f.clone(), t, SpectrumMetadata::default()).unwrap();
        let fits = fit_spectrum(&s, 0.1).unwrap();
        assert_eq!(fits.len(), 1, "seed {seed}");
        let d = fits[0];
        assert_relative_eq!(d.q, 100.0, max_relative = 0.02);
        assert!((d.contrast - 0.82).abs() < 0.02, "seed {seed}: C = {}", d.contrast);
        assert!((d.f0 - 100.0).abs() < 0.05);
    }
}

#[test]
fn file_round_trip_and_labels() {
    let f = grid(90.0, 110.0, 4001);
    let t = synthetic_spectrum(&f, &[(96.0, 300.0, 0.5), (101.0, 300.0, 0.82), (106.0, 300.0, 0.3)], Some(40.0), 7);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "# label: synthetic\n# r_outer_m: 2.9e-3\nf_GHz, T").unwrap();
    for (x, y) in f.iter().zip(&t) {
        writeln!(file, "{x}, {y}").unwrap();
    }
    let s = load_spectrum(file.path()).unwrap();
    assert_eq!(s.metadata.label, "synthetic");
    assert_eq!(s.metadata.r_outer, Some(2.9e-3));
    let fits = fit_spectrum(&s, 0.1).unwrap();
    assert_eq!(fits.len(), 3);
    let report = coupling_contrast_report(&fits).unwrap();
    assert!((report.max_contrast - 0.82).abs() < 0.02);
    let table = [(12, 96.3), (13, 101.2), (14, 105.7)];
    let labels = label_modes(&fits, &table).unwrap();
    assert_eq!(labels.iter().map(|l| l.l_c).collect::<Vec<_>>(), vec![12, 13, 14]);
    assert!(labels.iter().all(|l| !l.conflict));
    let csv = fit_report_csv(&fits, Some(&labels));
    assert!(csv.lines().nth(2).unwrap().contains(", 13, "));
}

#[test]
fn malformed_input_is_rejected() {
    assert!(matches!(parse_spectrum("f_GHz, T\n1, 0.5\nabc, 1\n"), Err(SpectraError::ParseError { line: 3, .. })));
    let mut text = String::from("f_GHz, T\n");
    for i in 0..20 {
        let x = if i == 10 { 5.0 } else { i as f64 };
        text.push_str(&format!("{x}, 1\n"));
    }
    assert!(matches!(parse_spectrum(&text), Err(SpectraError::MonotonicityError { .. })));
}
