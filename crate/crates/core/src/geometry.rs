//! Ring-on-post cross-section and the prism-coupling rim rule.

use std::f64::consts::PI;

use thiserror::Error;

use crate::materials::MaterialRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("prism coupling impossible: prism index {prism} does not exceed resonator index {resonator}")]
    CouplingImpossible { prism: f64, resonator: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

/// Axisymmetric ring mounted on a cylindrical post. Lengths in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct RingGeometry {
    pub r_outer: f64,
    pub r_inner: f64,
    pub height: f64,
    /// Meridian curvature radius of the rim; `f64::INFINITY` for a cylinder.
    pub rim_radius: f64,
    pub post_outer_radius: f64,
    pub ring_material: String,
    pub post_material: String,
}

impl RingGeometry {
    /// The lithium niobate Type-I design ring: h = 292 µm, R_in = 2.48 mm,
    /// R = 2.9 mm, ρ = 568 µm, on a fused-silica post filling the bore.
    pub fn reference() -> Self {
        RingGeometry {
            r_outer: 2.9e-3,
            r_inner: 2.48e-3,
            height: 292e-6,
            rim_radius: 568e-6,
            post_outer_radius: 2.48e-3,
            ring_material: "lithium-niobate".into(),
            post_material: "fused-silica".into(),
        }
    }

    pub fn with_cylindrical_rim(mut self) -> Self {
        self.rim_radius = f64::INFINITY;
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidGeometry(m));
        let all_finite = [self.r_outer, self.r_inner, self.height, self.post_outer_radius]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("dimensions must be finite".into());
        }
        if !(self.post_outer_radius > 0.0) {
            return bad(format!("post radius {} must be positive", self.post_outer_radius));
        }
        if self.post_outer_radius > self.r_inner {
            return bad(format!(
                "post radius {} exceeds ring inner radius {}",
                self.post_outer_radius, self.r_inner
            ));
        }
        if !(self.r_inner < self.r_outer) {
            return bad(format!("inner radius {} must be below outer radius {}", self.r_inner, self.r_outer));
        }
        if !(self.height > 0.0) {
            return bad(format!("height {} must be positive", self.height));
        }
        if !(self.rim_radius > 0.0) || self.rim_radius.is_nan() {
            return bad(format!("rim radius {} must be positive or infinite", self.rim_radius));
        }
        if self.rim_radius.is_finite() && self.rim_face_radius() < self.r_inner {
            return bad(format!(
                "rim radius {} too small: rim cuts through the inner wall",
                self.rim_radius
            ));
        }
        Ok(())
    }

    /// Radius at which the flat top/bottom faces end and the rim begins.
    pub fn rim_face_radius(&self) -> f64 {
        let rho = self.rim_radius;
        let half = 0.5 * self.height;
        if rho.is_infinite() {
            self.r_outer
        } else if rho >= half {
            self.r_outer - rho + (rho * rho - half * half).sqrt()
        } else {
            self.r_outer - rho
        }
    }

    /// Exact meridian cross-section area of the ring (curved rim, not the
    /// polygonal approximation).
    pub fn ring_section_area(&self) -> f64 {
        let rho = self.rim_radius;
        let half = 0.5 * self.height;
        if rho.is_infinite() {
            (self.r_outer - self.r_inner) * self.height
        } else if rho >= half {
            let theta = (half / rho).asin();
            (self.rim_face_radius() - self.r_inner) * self.height + rho * rho * (theta - theta.sin() * theta.cos())
        } else {
            (self.r_outer - self.r_inner) * self.height - 2.0 * rho * rho * (1.0 - PI / 4.0)
        }
    }
}

/// ρ/R = (n_p² − n²)/n_p² for evanescent prism coupling.
pub fn rim_ratio(prism_index: f64, resonator_index: f64) -> Result<f64, GeometryError> {
    if !(prism_index > resonator_index) || !(resonator_index > 1.0) {
        return Err(GeometryError::CouplingImpossible { prism: prism_index, resonator: resonator_index });
    }
    let np2 = prism_index * prism_index;
    Ok((np2 - resonator_index * resonator_index) / np2)
}

/// Sets the rim curvature for coupling through `prism`, using the
/// extraordinary optical index of the ring material.
pub fn design_rim(
    geometry: &RingGeometry,
    ring: &MaterialRecord,
    prism: &MaterialRecord,
) -> Result<RingGeometry, GeometryError> {
    let ratio = rim_ratio(prism.n_opt_o, ring.n_opt_e)?;
    let mut out = geometry.clone();
    out.rim_radius = geometry.r_outer * ratio;
    out.validate()?;
    Ok(out)
}

pub type Point = [f64; 2];

/// Closed polylines (implicitly closed, counter-clockwise in (r, z)) of the
/// three regions, plus the window extents.
#[derive(Debug, Clone)]
pub struct Profile {
    pub ring: Vec<Point>,
    pub post: Vec<Point>,
    pub window: Vec<Point>,
    /// Window spans r ∈ [0, window_r], z ∈ [−window_half_height, window_half_height].
    pub window_r: f64,
    pub window_half_height: f64,
    pub geometry: RingGeometry,
}

impl Profile {
    pub fn ring_area(&self) -> f64 {
        polygon_area(&self.ring)
    }

    pub fn post_area(&self) -> f64 {
        polygon_area(&self.post)
    }

    pub fn window_area(&self) -> f64 {
        polygon_area(&self.window)
    }
}

/// Builds the meshable cross-section. `window_margin` is the vacuum gap kept
/// between the ring and the outer wall in +r and ±z.
pub fn cross_section_profile(
    geometry: &RingGeometry,
    rim_segments: usize,
    window_margin: f64,
) -> Result<Profile, GeometryError> {
    geometry.validate()?;
    if geometry.rim_radius.is_finite() && rim_segments < 8 {
        return Err(GeometryError::InvalidGeometry(format!(
            "{rim_segments} rim segments; at least 8 required"
        )));
    }
    if !(window_margin > 0.0) {
        return Err(GeometryError::InvalidGeometry(format!("window margin {window_margin} must be positive")));
    }
    let g = geometry;
    let half = 0.5 * g.height;
    let r_face = g.rim_face_radius();
    let rho = g.rim_radius;
    // Rim from the end of the bottom face to the end of the top face.
    let mut rim = vec![[r_face, -half]];
    if rho.is_infinite() {
        rim.push([g.r_outer, half]);
    } else if rho >= half {
        // Even chord count puts a vertex on the apex r = R.
        let segs = rim_segments + rim_segments % 2;
        let theta0 = (half / rho).asin();
        let center = g.r_outer - rho;
        for k in 1..segs {
            let t = -theta0 + 2.0 * theta0 * k as f64 / segs as f64;
            rim.push([center + rho * t.cos(), rho * t.sin()]);
        }
        rim.push([r_face, half]);
    } else {
        // Rounded corners joined by a straight rim at r = R.
        let per_corner = rim_segments / 2;
        let center = g.r_outer - rho;
        for k in 1..=per_corner {
            let t = -PI / 2.0 + (PI / 2.0) * k as f64 / per_corner as f64;
            rim.push([center + rho * t.cos(), -half + rho + rho * t.sin()]);
        }
        for k in 0..per_corner {
            let t = (PI / 2.0) * k as f64 / per_corner as f64;
            rim.push([center + rho * t.cos(), half - rho + rho * t.sin()]);
        }
        rim.push([r_face, half]);
    }
    let mut ring = vec![[g.r_inner, -half]];
    ring.extend(rim);
    ring.push([g.r_inner, half]);

    let window_r = g.r_outer + window_margin;
    let window_half_height = half + window_margin;
    let zw = window_half_height;
    let p = g.post_outer_radius;
    let post = vec![[0.0, -zw], [p, -zw], [p, zw], [0.0, zw]];
    let window = vec![[0.0, -zw], [window_r, -zw], [window_r, zw], [0.0, zw]];
    Ok(Profile { ring, post, window, window_r, window_half_height, geometry: g.clone() })
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the polygon boundary; zero inside.
pub fn distance_to_polygon(p: Point, poly: &[Point]) -> f64 {
    if point_in_polygon(p, poly) {
        return 0.0;
    }
    let n = poly.len();
    (0..n)
        .map(|i| point_segment_distance(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{diamond, fused_silica, lithium_niobate};
    use proptest::prelude::*;

    #[test]
    fn rim_ratio_diamond_on_niobate() {
        let r = rim_ratio(2.384, 2.138).unwrap();
        assert!((r - 0.196).abs() < 1e-3, "{r}");
    }

    #[test]
    fn rim_ratio_identity_and_error() {
        let n = 1.7_f64;
        assert!((rim_ratio(n * 2f64.sqrt(), n).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(rim_ratio(2.0, 2.138), Err(GeometryError::CouplingImpossible { .. })));
    }

    #[test]
    fn design_rim_reference() {
        let g = design_rim(&RingGeometry::reference(), &lithium_niobate(), &diamond()).unwrap();
        assert!((g.rim_radius - 568e-6).abs() < 1e-6, "{}", g.rim_radius);
    }

    #[test]
    fn design_rim_unit_case() {
        let n = 2.0_f64;
        let mut prism = diamond();
        prism.n_opt_o = n * 2f64.sqrt();
        let mut ring = lithium_niobate();
        ring.n_opt_e = n;
        let mut g = RingGeometry::reference();
        g.r_outer = 1e-3;
        g.r_inner = 0.2e-3;
        g.post_outer_radius = 0.2e-3;
        let out = design_rim(&g, &ring, &prism).unwrap();
        assert!((out.rim_radius - 0.5e-3).abs() < 1e-15);
    }

    #[test]
    fn design_rim_silica_prism_fails() {
        let err = design_rim(&RingGeometry::reference(), &lithium_niobate(), &fused_silica());
        assert!(matches!(err, Err(GeometryError::CouplingImpossible { .. })));
    }

    #[test]
    fn profile_reference_outermost_point() {
        let p = cross_section_profile(&RingGeometry::reference(), 32, 1e-3).unwrap();
        let rmax = p.ring.iter().map(|q| q[0]).fold(0.0, f64::max);
        assert!((rmax - 2.9e-3).abs() < 1e-12);
        assert!(p.ring_area() > 0.0 && p.post_area() > 0.0);
        // The polygonal rim stays within 0.1% of the exact section.
        let exact = p.geometry.ring_section_area();
        assert!(((p.ring_area() - exact) / exact).abs() < 1e-3);
    }

    #[test]
    fn cylindrical_profile_is_rectangle() {
        let g = RingGeometry::reference().with_cylindrical_rim();
        let p = cross_section_profile(&g, 0, 1e-3).unwrap();
        assert_eq!(p.ring.len(), 4);
        assert!(((p.ring_area() - 0.42e-3 * 292e-6) / p.ring_area()).abs() < 1e-12);
    }

    #[test]
    fn small_rim_radius_rounds_corners() {
        let mut g = RingGeometry::reference();
        g.rim_radius = 50e-6;
        let p = cross_section_profile(&g, 32, 1e-3).unwrap();
        let exact = g.ring_section_area();
        assert!(((p.ring_area() - exact) / exact).abs() < 1e-3);
        let rmax = p.ring.iter().map(|q| q[0]).fold(0.0, f64::max);
        assert!((rmax - g.r_outer).abs() < 1e-12);
    }

    #[test]
    fn invalid_geometry() {
        let mut g = RingGeometry::reference();
        g.post_outer_radius = 2.6e-3;
        assert!(matches!(cross_section_profile(&g, 32, 1e-3), Err(GeometryError::InvalidGeometry(_))));
        let g = RingGeometry::reference();
        assert!(matches!(cross_section_profile(&g, 4, 1e-3), Err(GeometryError::InvalidGeometry(_))));
    }

    proptest! {
        #[test]
        fn rim_ratio_scale_free(np in 1.5f64..4.0, frac in 0.3f64..0.99, k in 0.1f64..10.0) {
            let n = 1.0 + (np - 1.0) * frac;
            let a = rim_ratio(np, n).unwrap();
            prop_assume!(k * n > 1.0);
            let b = rim_ratio(k * np, k * n).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
