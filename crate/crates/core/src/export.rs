//! Legacy ASCII VTK, CSV polylines and minimal SVG line plots.

use std::fmt::Write;

use crate::emsolver::MicrowaveModeSolution;
use crate::geometry::Profile;
use crate::mesh::Mesh;

fn vtk_grid(out: &mut String, title: &str, mesh: &Mesh) {
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(out, "{:.9e} {:.9e} 0", p[0], p[1]);
    }
    let _ = writeln!(out, "CELLS {} {}", mesh.triangles.len(), 4 * mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.triangles.len());
    for _ in &mesh.triangles {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "CELL_DATA {}\nSCALARS region int 1\nLOOKUP_TABLE default", mesh.triangles.len());
    for r in &mesh.regions {
        let _ = writeln!(out, "{}", r.index());
    }
}

/// Mesh as an unstructured grid in the (r, z) plane with region tags
/// (0 ring, 1 post, 2 vacuum).
pub fn mesh_vtk(mesh: &Mesh) -> String {
    let mut out = String::new();
    vtk_grid(&mut out, "wgm cross-section mesh (r, z)", mesh);
    out
}

/// Mode field map: |E| and real/imaginary parts of E_r, E_φ, E_z per vertex.
pub fn field_vtk(sol: &MicrowaveModeSolution) -> String {
    let mut out = String::new();
    let title = format!("L_c = {} mode at {:.6} GHz", sol.l_c, sol.omega_c.ghz());
    vtk_grid(&mut out, &title, &sol.mesh);
    let _ = writeln!(out, "POINT_DATA {}", sol.field.len());
    let _ = writeln!(out, "SCALARS E_abs double 1\nLOOKUP_TABLE default");
    for e in &sol.field {
        let n = e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let _ = writeln!(out, "{n:.9e}");
    }
    for (k, name) in ["E_r", "E_phi", "E_z"].iter().enumerate() {
        for (part, f) in [("re", 0usize), ("im", 1)] {
            let _ = writeln!(out, "SCALARS {name}_{part} double 1\nLOOKUP_TABLE default");
            for e in &sol.field {
                let v = if f == 0 { e[k].re } else { e[k].im };
                let _ = writeln!(out, "{v:.9e}");
            }
        }
    }
    out
}

/// `region, index, r_m, z_m` rows, one closed polyline per region.
pub fn profile_csv(profile: &Profile) -> String {
    let mut out = String::from("region, index, r_m, z_m\n");
    for (name, poly) in [("ring", &profile.ring), ("post", &profile.post), ("window", &profile.window)] {
        for (i, p) in poly.iter().enumerate() {
            let _ = writeln!(out, "{name}, {i}, {:.9e}, {:.9e}", p[0], p[1]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a polyline.
    pub markers: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
}

const COLORS: [&str; 6] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555"];

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).abs().max(1e-300);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

/// Renders an SVG line/marker plot with linear x and linear or log y axes.
pub fn plot_svg(plot: &Plot) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 36.0, 50.0);
    let ty = |y: f64| if plot.log_y { y.max(1e-300).log10() } else { y };
    let pts: Vec<(f64, f64)> = plot
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(x, y)| (x, ty(y))))
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(&plot.title));
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - ml - mr,
        h - mt - mb
    );
    for t in nice_ticks(x0, x1, 6) {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, h - mb, h - mb + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, h - mb + 18.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1, 6) {
        let y = sy(t);
        let label = if plot.log_y { format!("1e{}", fmt_tick(t)) } else { fmt_tick(t) };
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/>"#, ml - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, ml - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (ml + w - mr) / 2.0, h - 12.0, esc(&plot.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (mt + h - mb) / 2.0,
        esc(&plot.y_label)
    );
    for (i, ser) in plot.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let p: Vec<(f64, f64)> = ser
            .points
            .iter()
            .map(|&(x, y)| (x, ty(y)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|(x, y)| (sx(x), sy(y)))
            .collect();
        if ser.markers {
            for (x, y) in &p {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
            }
        } else if !p.is_empty() {
            let coords: Vec<String> = p.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        }
        let ly = mt + 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#, ml + 10.0, esc(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_window_mesh;

    #[test]
    fn vtk_counts() {
        let m = generate_window_mesh(1e-3, 1e-3, 0.4e-3).unwrap();
        let v = mesh_vtk(&m);
        assert!(v.starts_with("# vtk DataFile Version 3.0"));
        assert!(v.contains(&format!("POINTS {} double", m.nodes.len())));
        assert!(v.contains(&format!("CELLS {} {}", m.triangles.len(), 4 * m.triangles.len())));
        assert_eq!(v.lines().filter(|l| *l == "5").count(), m.triangles.len());
    }

    #[test]
    fn svg_well_formed() {
        let p = Plot {
            title: "dispersion <test>".into(),
            x_label: "L_c".into(),
            y_label: "f (GHz)".into(),
            series: vec![
                Series { label: "a".into(), points: vec![(1.0, 10.0), (2.0, 20.0)], markers: false },
                Series { label: "b".into(), points: vec![(1.5, 15.0)], markers: true },
            ],
            log_y: false,
        };
        let s = plot_svg(&p);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("&lt;test&gt;"));
        assert_eq!(s.matches("<polyline").count(), 1);
        assert_eq!(s.matches("<circle").count(), 1);
        let log = plot_svg(&Plot { log_y: true, ..p });
        assert!(log.contains("1e"));
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    }
}
