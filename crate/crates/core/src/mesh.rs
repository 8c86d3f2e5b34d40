//! Triangulation of the axisymmetric computation window.
//!
//! Points are laid down region by region: boundary polylines are subdivided
//! first, then the interior is filled greedily from a hexagonal candidate
//! lattice subject to a size field, and the result is handed to a
//! constrained Delaunay triangulation with a minimum-angle refinement pass.

use std::collections::HashMap;

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};
use thiserror::Error;

use crate::geometry::{distance_to_polygon, point_in_polygon, Point, Profile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh generation failed: {0}")]
    MeshFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Ring,
    Post,
    Vacuum,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Ring, Region::Post, Region::Vacuum];

    pub fn name(self) -> &'static str {
        match self {
            Region::Ring => "ring",
            Region::Post => "post",
            Region::Vacuum => "vacuum",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    OuterWall,
    Axis,
}

/// How the element size grows away from the ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grading {
    Uniform,
    /// Size is the target within `buffer` of the ring, then grows by one
    /// target length per `growth_length` of distance, up to `max_factor`.
    Graded { buffer: f64, growth_length: f64, max_factor: f64 },
}

impl Default for Grading {
    fn default() -> Self {
        Grading::Graded { buffer: 100e-6, growth_length: 250e-6, max_factor: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub grading: Grading,
    /// Minimum interior angle enforced by Delaunay refinement, degrees.
    pub min_angle_deg: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { grading: Grading::default(), min_angle_deg: 25.0 }
    }
}

impl MeshOptions {
    pub fn uniform() -> Self {
        MeshOptions { grading: Grading::Uniform, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counter-clockwise vertex triplets.
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub boundary_edges: Vec<([usize; 2], BoundaryTag)>,
    pub window_r: f64,
    pub window_half_height: f64,
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == region)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn region_triangle_count(&self, region: Region) -> usize {
        self.regions.iter().filter(|&&r| r == region).count()
    }

    /// Longest edge among triangles of `region`.
    pub fn max_edge_length(&self, region: Region) -> f64 {
        let mut longest: f64 = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            if self.regions[t] != region {
                continue;
            }
            for k in 0..3 {
                let a = self.nodes[tri[k]];
                let b = self.nodes[tri[(k + 1) % 3]];
                longest = longest.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        longest
    }

    /// Sorted, de-duplicated list of undirected edges.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| edge_key(t[k], t[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= 0.0 && p[0] <= self.window_r && p[1].abs() <= self.window_half_height
    }

    /// Triangle containing `p` and its barycentric coordinates. When `p` lies
    /// on a shared edge the triangle of `prefer` region wins.
    pub fn locate(&self, p: Point, prefer: Option<Region>) -> Option<(usize, [f64; 3])> {
        if !self.contains(p) {
            return None;
        }
        let tol = -1e-10;
        let mut found: Option<(usize, [f64; 3])> = None;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
            if p[0] < a[0].min(b[0]).min(c[0]) - 1e-12
                || p[0] > a[0].max(b[0]).max(c[0]) + 1e-12
                || p[1] < a[1].min(b[1]).min(c[1]) - 1e-12
                || p[1] > a[1].max(b[1]).max(c[1]) + 1e-12
            {
                continue;
            }
            let bary = self.barycentric(t, p);
            if bary.iter().all(|&l| l >= tol) {
                match (prefer, found) {
                    (Some(r), _) if self.regions[t] == r => return Some((t, bary)),
                    (_, None) => found = Some((t, bary)),
                    _ => {}
                }
                if prefer.is_none() {
                    break;
                }
            }
        }
        found
    }

    /// Splits every triangle into four through its edge midpoints.
    pub fn refine_uniform(&self) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut regions = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            regions.extend([self.regions[t]; 4]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for &([a, b], tag) in &self.boundary_edges {
            let m = mid(a, b, &mut nodes);
            boundary_edges.push((edge_key(a, m), tag));
            boundary_edges.push((edge_key(m, b), tag));
        }
        boundary_edges.sort_by_key(|e| e.0);
        Mesh {
            nodes,
            triangles,
            regions,
            boundary_edges,
            window_r: self.window_r,
            window_half_height: self.window_half_height,
        }
    }

    /// Number of distinct triangles cut by the vertical line r = `r` between
    /// z = `z0` and z = `z1` in `region`.
    pub fn elements_across(&self, r: f64, z0: f64, z1: f64, region: Region) -> usize {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == region)
            .filter(|&t| {
                let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
                let rmin = a[0].min(b[0]).min(c[0]);
                let rmax = a[0].max(b[0]).max(c[0]);
                let zmin = a[1].min(b[1]).min(c[1]);
                let zmax = a[1].max(b[1]).max(c[1]);
                rmin < r && r < rmax && zmax > z0 && zmin < z1
            })
            .count()
    }
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b { [a, b] } else { [b, a] }
}

struct SizeField<'a> {
    target: f64,
    grading: Grading,
    ring: &'a [Point],
}

impl SizeField<'_> {
    fn at(&self, p: Point) -> f64 {
        match self.grading {
            Grading::Uniform => self.target,
            Grading::Graded { buffer, growth_length, max_factor } => {
                let d = distance_to_polygon(p, self.ring);
                let factor = (1.0 + (d - buffer).max(0.0) / growth_length).min(max_factor);
                self.target * factor
            }
        }
    }

    fn max(&self) -> f64 {
        match self.grading {
            Grading::Uniform => self.target,
            Grading::Graded { max_factor, .. } => self.target * max_factor.max(1.0),
        }
    }
}

/// Point set with a uniform-grid spatial hash for neighbour queries.
struct PointSet {
    points: Vec<Point>,
    cell: f64,
    grid: HashMap<(i64, i64), Vec<usize>>,
    exact: HashMap<(i64, i64), usize>,
}

impl PointSet {
    fn new(cell: f64) -> Self {
        PointSet { points: Vec::new(), cell, grid: HashMap::new(), exact: HashMap::new() }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }

    /// Inserts `p`, merging with an existing point at the same location.
    fn insert(&mut self, p: Point) -> usize {
        const QUANTUM: f64 = 1e-11;
        let q = ((p[0] / QUANTUM).round() as i64, (p[1] / QUANTUM).round() as i64);
        if let Some(&i) = self.exact.get(&q) {
            return i;
        }
        let i = self.points.len();
        self.points.push(p);
        self.exact.insert(q, i);
        let k = self.key(p);
        self.grid.entry(k).or_default().push(i);
        i
    }

    fn has_neighbour_within(&self, p: Point, radius: f64) -> bool {
        let (ci, cj) = self.key(p);
        let reach = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        for di in -reach..=reach {
            for dj in -reach..=reach {
                if let Some(ids) = self.grid.get(&(ci + di, cj + dj)) {
                    for &i in ids {
                        let q = self.points[i];
                        if (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) < r2 {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Polyline edges of all regions, split wherever another profile vertex
/// lies on them so that shared boundaries are subdivided identically.
fn boundary_pieces(profile: &Profile) -> Vec<(Point, Point)> {
    let polys = [&profile.ring, &profile.post, &profile.window];
    let all_vertices: Vec<Point> = polys.iter().flat_map(|p| p.iter().copied()).collect();
    let scale = profile.window_r.max(profile.window_half_height);
    let eps = 1e-12 * scale;
    let mut pieces = Vec::new();
    for poly in polys {
        let n = poly.len();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let mut ts: Vec<f64> = all_vertices
                .iter()
                .filter_map(|v| {
                    let t = ((v[0] - a[0]) * d[0] + (v[1] - a[1]) * d[1]) / len2;
                    if t <= 1e-12 || t >= 1.0 - 1e-12 {
                        return None;
                    }
                    let off = (v[0] - a[0]) * d[1] - (v[1] - a[1]) * d[0];
                    (off.abs() / len2.sqrt() < eps).then_some(t)
                })
                .collect();
            ts.push(0.0);
            ts.push(1.0);
            ts.sort_by(f64::total_cmp);
            ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
            for w in ts.windows(2) {
                let p0 = [a[0] + w[0] * d[0], a[1] + w[0] * d[1]];
                let p1 = [a[0] + w[1] * d[0], a[1] + w[1] * d[1]];
                // Canonical orientation so overlapping edges subdivide identically.
                let piece = if (p0[0], p0[1]) <= (p1[0], p1[1]) { (p0, p1) } else { (p1, p0) };
                pieces.push(piece);
            }
        }
    }
    pieces.sort_by(|x, y| {
        x.0.partial_cmp(&y.0).unwrap().then(x.1.partial_cmp(&y.1).unwrap())
    });
    pieces.dedup_by(|x, y| {
        let close = |p: Point, q: Point| (p[0] - q[0]).abs() < eps && (p[1] - q[1]).abs() < eps;
        close(x.0, y.0) && close(x.1, y.1)
    });
    pieces
}

/// Triangulates the window of `profile` with element size `target_edge_length`
/// inside the ring.
///
/// A base Delaunay mesh is built at `target · 2^k`, the coarsest such size that
/// still resolves the ring cross-section, and then split uniformly `k` times.
/// Halving the target therefore reuses the same base mesh with one more split.
pub fn generate_mesh(profile: &Profile, target_edge_length: f64, options: &MeshOptions) -> Result<Mesh, MeshError> {
    let g = &profile.geometry;
    let thinnest = g.height.min(g.r_outer - g.r_inner);
    if !(target_edge_length > 0.0) || target_edge_length >= thinnest {
        return Err(MeshError::MeshFailure(format!(
            "edge length {target_edge_length:e} m must be positive and below the thinnest feature {thinnest:e} m"
        )));
    }
    let (base, levels) = dyadic_base(target_edge_length, 0.5 * thinnest);
    let mut mesh = mesh_window(profile, base, options, true)?;
    for _ in 0..levels {
        mesh = mesh.refine_uniform();
    }
    Ok(mesh)
}

/// Triangulates an empty window (no ring or post), for cavity checks.
pub fn generate_window_mesh(window_r: f64, window_half_height: f64, edge_length: f64) -> Result<Mesh, MeshError> {
    let smallest = window_r.min(2.0 * window_half_height);
    if !(edge_length > 0.0) || edge_length >= smallest {
        return Err(MeshError::MeshFailure(format!("edge length {edge_length:e} m does not fit the window")));
    }
    let zw = window_half_height;
    let window = vec![[0.0, -zw], [window_r, -zw], [window_r, zw], [0.0, zw]];
    let profile = Profile {
        ring: Vec::new(),
        post: Vec::new(),
        window,
        window_r,
        window_half_height,
        geometry: crate::geometry::RingGeometry::reference(),
    };
    let (base, levels) = dyadic_base(edge_length, 0.25 * smallest);
    let mut mesh = mesh_window(&profile, base, &MeshOptions::uniform(), false)?;
    for _ in 0..levels {
        mesh = mesh.refine_uniform();
    }
    Ok(mesh)
}

/// Largest `target · 2^k` not exceeding `ceiling`, and `k`.
fn dyadic_base(target: f64, ceiling: f64) -> (f64, u32) {
    let mut base = target;
    let mut levels = 0;
    while 2.0 * base <= ceiling {
        base *= 2.0;
        levels += 1;
    }
    (base, levels)
}

fn mesh_window(profile: &Profile, target: f64, options: &MeshOptions, with_regions: bool) -> Result<Mesh, MeshError> {
    let grading = if with_regions { options.grading } else { Grading::Uniform };
    let size = SizeField { target, grading, ring: &profile.ring };
    let mut points = PointSet::new(size.max());
    let mut constraints: Vec<(usize, usize)> = Vec::new();

    let pieces = if with_regions {
        boundary_pieces(profile)
    } else {
        let w = &profile.window;
        (0..4).map(|i| (w[i], w[(i + 1) % 4])).collect()
    };
    for (a, b) in &pieces {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let h = size.at(*a).min(size.at(*b)).min(size.at(mid));
        let n = ((len / h).ceil() as usize).max(1);
        let mut prev = points.insert(*a);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let p = if k == n { *b } else { [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])] };
            let id = points.insert(p);
            constraints.push((prev, id));
            prev = id;
        }
    }

    // Greedy fill from a hexagonal lattice at half the finest spacing.
    let step = 0.5 * target;
    let row = step * 3f64.sqrt() / 2.0;
    let zw = profile.window_half_height;
    let rw = profile.window_r;
    let rows = ((2.0 * zw) / row).ceil() as usize;
    let cols = (rw / step).ceil() as usize + 1;
    for j in 1..rows {
        let z = -zw + j as f64 * row;
        let offset = if j % 2 == 1 { 0.5 * step } else { 0.0 };
        for i in 0..cols {
            let r = offset + i as f64 * step;
            if r <= 0.0 || r >= rw || z.abs() >= zw {
                continue;
            }
            let p = [r, z];
            let h = size.at(p);
            if !points.has_neighbour_within(p, 0.99 * h) {
                points.insert(p);
            }
        }
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::with_capacity(points.points.len());
    for p in &points.points {
        let h = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| MeshError::MeshFailure(format!("point insertion: {e:?}")))?;
        handles.push(h);
    }
    for &(a, b) in &constraints {
        if a == b {
            continue;
        }
        if !cdt.can_add_constraint(handles[a], handles[b]) {
            return Err(MeshError::MeshFailure(format!(
                "boundary segment ({:?} – {:?}) crosses another boundary",
                points.points[a], points.points[b]
            )));
        }
        cdt.add_constraint(handles[a], handles[b]);
    }
    // Split edges that exceed the local size by more than 40%.
    for _ in 0..12 {
        let mut splits: Vec<Point> = Vec::new();
        for edge in cdt.undirected_edges() {
            let [a, b] = edge.positions();
            let len = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            let mid = [0.5 * (a.x + b.x), 0.5 * (a.y + b.y)];
            if len > 1.4 * size.at(mid) {
                splits.push(mid);
            }
        }
        if splits.is_empty() {
            break;
        }
        for m in splits {
            cdt.insert(Point2::new(m[0], m[1]))
                .map_err(|e| MeshError::MeshFailure(format!("point insertion: {e:?}")))?;
        }
    }
    let budget = 4 * points.points.len() + 1000;
    let result = cdt.refine(
        RefinementParameters::new()
            .with_angle_limit(AngleLimit::from_deg(options.min_angle_deg))
            .with_max_additional_vertices(budget),
    );
    if !result.refinement_complete {
        return Err(MeshError::MeshFailure("Delaunay refinement did not converge".into()));
    }

    let nodes: Vec<Point> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    let mut regions = Vec::with_capacity(cdt.num_inner_faces());
    for face in cdt.inner_faces() {
        let tri = face.vertices().map(|v| v.fix().index());
        let [a, b, c] = tri.map(|i| nodes[i]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let tri = if det < 0.0 { [tri[0], tri[2], tri[1]] } else { tri };
        if det.abs() <= 1e-14 * target * target {
            return Err(MeshError::MeshFailure(format!("degenerate triangle near {a:?}")));
        }
        let cen = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        let region = if with_regions && point_in_polygon(cen, &profile.ring) {
            Region::Ring
        } else if with_regions && point_in_polygon(cen, &profile.post) {
            Region::Post
        } else {
            Region::Vacuum
        };
        triangles.push(tri);
        regions.push(region);
    }

    let eps = 1e-9 * rw.max(zw);
    let mut boundary_edges = Vec::new();
    for tri in &triangles {
        for k in 0..3 {
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            let (a, b) = (nodes[i], nodes[j]);
            let tag = if a[0].abs() < eps && b[0].abs() < eps {
                Some(BoundaryTag::Axis)
            } else if ((a[0] - rw).abs() < eps && (b[0] - rw).abs() < eps)
                || ((a[1].abs() - zw).abs() < eps && (b[1].abs() - zw).abs() < eps && a[1] * b[1] > 0.0)
            {
                Some(BoundaryTag::OuterWall)
            } else {
                None
            };
            if let Some(tag) = tag {
                boundary_edges.push((edge_key(i, j), tag));
            }
        }
    }
    boundary_edges.sort_by_key(|e| e.0);

    Ok(Mesh { nodes, triangles, regions, boundary_edges, window_r: rw, window_half_height: zw })
}
