//! Axisymmetric vector finite elements for the microwave eigenproblem.
//!
//! The magnetic field H(r, z)·exp(i m φ) is expanded in quadratic Lagrange
//! elements with unknowns (H_r, i·H_φ, H_z) per node, which keeps the pencil
//! real and symmetric. H is continuous across dielectric interfaces, so the
//! discontinuous normal electric field is recovered exactly from curl H / ε.
//! Spurious gradient solutions are pushed up the spectrum by a weighted
//! (div H)² penalty.

pub mod quadrature;
pub mod sparse;

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Point;
use crate::mesh::{BoundaryTag, Mesh, Region};
pub use sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("assembly failed: {0}")]
    AssemblyFailure(String),
    #[error("eigensolver did not converge (worst relative residual {residual:.3e})")]
    ConvergenceFailure { residual: f64 },
    #[error("point ({r:.6e}, {z:.6e}) m lies outside the computation window")]
    OutOfWindow { r: f64, z: f64 },
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

/// Scalar microwave refractive index of each region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionIndices {
    pub ring: f64,
    pub post: f64,
    pub vacuum: f64,
}

impl RegionIndices {
    pub fn vacuum() -> Self {
        RegionIndices { ring: 1.0, post: 1.0, vacuum: 1.0 }
    }

    pub fn index(&self, region: Region) -> f64 {
        match region {
            Region::Ring => self.ring,
            Region::Post => self.post,
            Region::Vacuum => self.vacuum,
        }
    }

    pub fn permittivity(&self, region: Region) -> f64 {
        self.index(region).powi(2)
    }

    pub fn max_index(&self) -> f64 {
        self.ring.max(self.post).max(self.vacuum)
    }
}

/// Quadratic Lagrange node set on a triangle mesh: mesh vertices first, then
/// one node per edge midpoint.
#[derive(Debug, Clone)]
pub struct P2Space {
    pub num_vertices: usize,
    pub edges: Vec<[usize; 2]>,
    /// Local order: three vertices, then edges (0,1), (1,2), (2,0).
    pub elements: Vec<[usize; 6]>,
    pub coords: Vec<Point>,
}

impl P2Space {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.nodes.len();
        let edges = mesh.edges();
        let edge_id: HashMap<[usize; 2], usize> = edges.iter().enumerate().map(|(i, &e)| (e, nv + i)).collect();
        let key = |a: usize, b: usize| if a < b { [a, b] } else { [b, a] };
        let elements = mesh
            .triangles
            .iter()
            .map(|&[a, b, c]| [a, b, c, edge_id[&key(a, b)], edge_id[&key(b, c)], edge_id[&key(c, a)]])
            .collect();
        let mut coords = mesh.nodes.clone();
        coords.extend(edges.iter().map(|&[a, b]| {
            let (p, q) = (mesh.nodes[a], mesh.nodes[b]);
            [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
        }));
        P2Space { num_vertices: nv, edges, elements, coords }
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }
}

/// Values and (r, z) gradients of the six quadratic shape functions.
pub(crate) fn p2_shape(bary: [f64; 3], grad_l: [[f64; 2]; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let l = bary;
    let mut n = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        n[i] = l[i] * (2.0 * l[i] - 1.0);
        for d in 0..2 {
            g[i][d] = (4.0 * l[i] - 1.0) * grad_l[i][d];
        }
    }
    for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        n[3 + k] = 4.0 * l[i] * l[j];
        for d in 0..2 {
            g[3 + k][d] = 4.0 * (l[j] * grad_l[i][d] + l[i] * grad_l[j][d]);
        }
    }
    (n, g)
}

/// Gradients of the barycentric coordinates and the signed area.
pub(crate) fn bary_gradients(p: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = p;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (g, 0.5 * det)
}

/// Rows (c1, c2, c3, div) of the operator applied to one nodal unknown
/// (component `comp` of a shape function with value `n`, gradient `g`).
/// c1, c2, c3 are real rotations of the curl components.
#[inline]
fn b_rows(comp: usize, n: f64, g: [f64; 2], r: f64, m: f64) -> [f64; 4] {
    let (nr, nz) = (g[0], g[1]);
    match comp {
        0 => [0.0, nz, m * n / r, nr + n / r],
        1 => [nz, 0.0, nr + n / r, m * n / r],
        _ => [m * n / r, -nr, 0.0, nz],
    }
}

/// (c1, c2, c3, div) of a nodal field at barycentric point `bary` of an element.
pub(crate) fn element_operator(
    pts: [Point; 3],
    local: &[[f64; 3]; 6],
    bary: [f64; 3],
    m: f64,
) -> ([f64; 4], [f64; 3], f64) {
    let (gl, _) = bary_gradients(pts);
    let (n, g) = p2_shape(bary, gl);
    let r = bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0];
    let mut out = [0.0; 4];
    let mut h = [0.0; 3];
    for a in 0..6 {
        for c in 0..3 {
            let v = local[a][c];
            if v == 0.0 {
                continue;
            }
            h[c] += n[a] * v;
            let row = b_rows(c, n[a], g[a], r, m);
            for k in 0..4 {
                out[k] += row[k] * v;
            }
        }
    }
    (out, h, r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofLink {
    Free(usize),
    /// Equal to `coef` times the given free unknown.
    Tied(usize, f64),
    Zero,
}

/// Maps the 3·(node count) nodal unknowns onto the reduced free vector.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub links: Vec<DofLink>,
    pub num_free: usize,
}

impl DofMap {
    /// Essential conditions for the H unknowns: zero normal H on the outer
    /// wall, and the regularity conditions of azimuthal order `m` on the axis.
    pub fn new(space: &P2Space, mesh: &Mesh, m: u32) -> Self {
        let n = space.num_nodes();
        let tol = 1e-9 * mesh.window_r.max(mesh.window_half_height);
        #[derive(Clone, Copy, PartialEq)]
        enum C {
            Free,
            Zero,
            TieToR,
        }
        let mut kind = vec![C::Free; 3 * n];
        let mut on_wall = vec![false; n];
        let mut on_axis = vec![false; n];
        let edge_node: HashMap<[usize; 2], usize> =
            space.edges.iter().enumerate().map(|(i, &e)| (e, space.num_vertices + i)).collect();
        for &([a, b], tag) in &mesh.boundary_edges {
            let mid = edge_node.get(&[a.min(b), a.max(b)]).copied();
            for node in [Some(a), Some(b), mid].into_iter().flatten() {
                match tag {
                    BoundaryTag::OuterWall => on_wall[node] = true,
                    BoundaryTag::Axis => on_axis[node] = true,
                }
            }
        }
        for i in 0..n {
            let [r, z] = space.coords[i];
            if on_wall[i] {
                if (r - mesh.window_r).abs() < tol {
                    kind[3 * i] = C::Zero;
                }
                if (z.abs() - mesh.window_half_height).abs() < tol {
                    kind[3 * i + 2] = C::Zero;
                }
            }
            if on_axis[i] {
                match m {
                    0 => {
                        kind[3 * i] = C::Zero;
                        kind[3 * i + 1] = C::Zero;
                    }
                    1 => {
                        kind[3 * i + 2] = C::Zero;
                        if kind[3 * i] == C::Zero {
                            kind[3 * i + 1] = C::Zero;
                        } else {
                            kind[3 * i + 1] = C::TieToR;
                        }
                    }
                    _ => {
                        kind[3 * i] = C::Zero;
                        kind[3 * i + 1] = C::Zero;
                        kind[3 * i + 2] = C::Zero;
                    }
                }
            }
        }
        let mut links = vec![DofLink::Zero; 3 * n];
        let mut next = 0;
        for d in 0..3 * n {
            if kind[d] == C::Free {
                links[d] = DofLink::Free(next);
                next += 1;
            }
        }
        for d in 0..3 * n {
            if kind[d] == C::TieToR {
                // i·H_φ = −H_r on the axis for m = 1.
                if let DofLink::Free(j) = links[d - 1] {
                    links[d] = DofLink::Tied(j, -1.0);
                }
            }
        }
        DofMap { links, num_free: next }
    }

    /// Full nodal vector (node-major, three components) from reduced unknowns.
    pub fn expand(&self, x: &[f64]) -> Vec<[f64; 3]> {
        let n = self.links.len() / 3;
        let mut out = vec![[0.0; 3]; n];
        for (d, link) in self.links.iter().enumerate() {
            out[d / 3][d % 3] = match *link {
                DofLink::Free(j) => x[j],
                DofLink::Tied(j, c) => c * x[j],
                DofLink::Zero => 0.0,
            };
        }
        out
    }
}

/// Assembled pencil K x = (ω/c)² M x plus everything needed to interpret x.
#[derive(Debug, Clone)]
pub struct Operators {
    pub mesh: Mesh,
    pub space: P2Space,
    pub dofs: DofMap,
    pub k: CsrMatrix,
    pub m: CsrMatrix,
    pub azimuthal_order: u32,
    pub penalty: f64,
    pub indices: RegionIndices,
}

pub const DEFAULT_PENALTY: f64 = 1.0;
const QUAD_ORDER: usize = 4;

/// Assembles the pencil for azimuthal number `l_c` ≥ 1.
pub fn assemble(mesh: &Mesh, indices: &RegionIndices, l_c: u32) -> Result<Operators, FemError> {
    if l_c == 0 {
        return Err(FemError::InvalidInput("azimuthal number must be at least 1".into()));
    }
    assemble_with(mesh, indices, l_c, DEFAULT_PENALTY)
}

/// Lower-level assembly accepting any azimuthal order, including the m = 0
/// family used by cavity checks, and an explicit penalty weight.
pub fn assemble_with(mesh: &Mesh, indices: &RegionIndices, m: u32, penalty: f64) -> Result<Operators, FemError> {
    check_mesh(mesh)?;
    for region in Region::ALL {
        let n = indices.index(region);
        if !(n.is_finite() && n >= 1.0) {
            return Err(FemError::AssemblyFailure(format!("{} index {n} must be finite and ≥ 1", region.name())));
        }
    }
    if !(penalty.is_finite() && penalty >= 0.0) {
        return Err(FemError::InvalidInput(format!("penalty {penalty} must be non-negative")));
    }
    let space = P2Space::new(mesh);
    let dofs = DofMap::new(&space, mesh, m);
    let mf = m as f64;
    let rule = quadrature::triangle_rule(QUAD_ORDER);

    // Node adjacency of the quadratic space.
    let n = space.num_nodes();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for el in &space.elements {
        for &a in el {
            adj[a].extend_from_slice(el);
        }
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }

    let element_mats: Vec<([[f64; 18]; 18], [[f64; 18]; 18])> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let pts = mesh.triangles[t].map(|i| mesh.nodes[i]);
            let inv_eps = 1.0 / indices.permittivity(mesh.regions[t]);
            element_matrices(pts, inv_eps, penalty, mf, &rule)
        })
        .collect();

    let mut kb: Vec<Vec<[f64; 9]>> = adj.iter().map(|r| vec![[0.0; 9]; r.len()]).collect();
    let mut mb: Vec<Vec<[f64; 9]>> = kb.clone();
    for (el, (ke, me)) in space.elements.iter().zip(&element_mats) {
        for a in 0..6 {
            let row = el[a];
            for b in 0..6 {
                let pos = adj[row].binary_search(&el[b]).unwrap();
                for c in 0..3 {
                    for d in 0..3 {
                        kb[row][pos][3 * c + d] += ke[3 * a + c][3 * b + d];
                        mb[row][pos][3 * c + d] += me[3 * a + c][3 * b + d];
                    }
                }
            }
        }
    }
    drop(element_mats);

    let nf = dofs.num_free;
    let mut krows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nf];
    let mut mrows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nf];
    let link = |d: usize| match dofs.links[d] {
        DofLink::Free(j) => Some((j, 1.0)),
        DofLink::Tied(j, c) => Some((j, c)),
        DofLink::Zero => None,
    };
    for a in 0..n {
        for c in 0..3 {
            let Some((ra, ca)) = link(3 * a + c) else { continue };
            for (pos, &b) in adj[a].iter().enumerate() {
                for d in 0..3 {
                    let Some((rb, cb)) = link(3 * b + d) else { continue };
                    krows[ra].push((rb, ca * cb * kb[a][pos][3 * c + d]));
                    mrows[ra].push((rb, ca * cb * mb[a][pos][3 * c + d]));
                }
            }
        }
    }
    drop(kb);
    drop(mb);
    Ok(Operators {
        mesh: mesh.clone(),
        space,
        dofs,
        k: CsrMatrix::from_rows(krows),
        m: CsrMatrix::from_rows(mrows),
        azimuthal_order: m,
        penalty,
        indices: *indices,
    })
}

/// Every outer edge of the triangulation must carry a boundary tag, and the
/// tags must agree with the window geometry.
fn check_mesh(mesh: &Mesh) -> Result<(), FemError> {
    if mesh.regions.len() != mesh.triangles.len() {
        return Err(FemError::AssemblyFailure(format!(
            "{} region tags for {} triangles",
            mesh.regions.len(),
            mesh.triangles.len()
        )));
    }
    if mesh.triangles.is_empty() {
        return Err(FemError::AssemblyFailure("empty mesh".into()));
    }
    let mut count: HashMap<[usize; 2], usize> = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    let tagged: HashMap<[usize; 2], BoundaryTag> =
        mesh.boundary_edges.iter().map(|&([a, b], tag)| ([a.min(b), a.max(b)], tag)).collect();
    let tol = 1e-9 * mesh.window_r.max(mesh.window_half_height);
    for (edge, &c) in &count {
        if c == 1 && !tagged.contains_key(edge) {
            return Err(FemError::AssemblyFailure(format!("untagged boundary edge {edge:?}")));
        }
    }
    for (edge, tag) in &tagged {
        if count.get(edge) != Some(&1) {
            return Err(FemError::AssemblyFailure(format!("tagged edge {edge:?} is not on the boundary")));
        }
        let (p, q) = (mesh.nodes[edge[0]], mesh.nodes[edge[1]]);
        let ok = match tag {
            BoundaryTag::Axis => p[0].abs() < tol && q[0].abs() < tol,
            BoundaryTag::OuterWall => p[0].abs() > tol || q[0].abs() > tol,
        };
        if !ok {
            return Err(FemError::AssemblyFailure(format!("edge {edge:?} tagged {tag:?} inconsistently")));
        }
    }
    Ok(())
}

fn element_matrices(
    pts: [Point; 3],
    inv_eps: f64,
    penalty: f64,
    m: f64,
    rule: &[quadrature::TriPoint],
) -> ([[f64; 18]; 18], [[f64; 18]; 18]) {
    let (gl, area) = bary_gradients(pts);
    let mut ke = [[0.0; 18]; 18];
    let mut me = [[0.0; 18]; 18];
    let mut b = [[0.0; 4]; 18];
    for q in rule {
        let (n, g) = p2_shape(q.bary, gl);
        let r = q.bary[0] * pts[0][0] + q.bary[1] * pts[1][0] + q.bary[2] * pts[2][0];
        let w = q.weight * area * r;
        for a in 0..6 {
            for c in 0..3 {
                b[3 * a + c] = b_rows(c, n[a], g[a], r, m);
            }
        }
        for i in 0..18 {
            let bi = b[i];
            for j in i..18 {
                let bj = b[j];
                let curl = bi[0] * bj[0] + bi[1] * bj[1] + bi[2] * bj[2];
                ke[i][j] += w * (inv_eps * curl + penalty * bi[3] * bj[3]);
            }
        }
        for a in 0..6 {
            for bb in a..6 {
                let v = w * n[a] * n[bb];
                for c in 0..3 {
                    me[3 * a + c][3 * bb + c] += v;
                }
            }
        }
    }
    for i in 0..18 {
        for j in 0..i {
            ke[i][j] = ke[j][i];
        }
    }
    for a in 0..6 {
        for bb in 0..a {
            for c in 0..3 {
                me[3 * a + c][3 * bb + c] = me[3 * bb + c][3 * a + c];
            }
        }
    }
    (ke, me)
}

impl Operators {
    pub fn num_unknowns(&self) -> usize {
        self.dofs.num_free
    }

    /// Nodal H coefficients of one element from a reduced solution vector.
    pub(crate) fn element_local(&self, full: &[[f64; 3]], t: usize) -> [[f64; 3]; 6] {
        self.space.elements[t].map(|i| full[i])
    }

    /// Per-region split of α∫(div H)² r dA relative to xᵀKx; large values
    /// mark spurious gradient-like solutions.
    pub fn penalty_fraction(&self, x: &[f64]) -> f64 {
        if self.penalty == 0.0 {
            return 0.0;
        }
        let full = self.dofs.expand(x);
        let rule = quadrature::triangle_rule(QUAD_ORDER);
        let mf = self.azimuthal_order as f64;
        let mut div2 = 0.0;
        for t in 0..self.mesh.triangles.len() {
            let pts = self.mesh.triangles[t].map(|i| self.mesh.nodes[i]);
            let local = self.element_local(&full, t);
            let area = self.mesh.triangle_area(t);
            for q in &rule {
                let (ops, _, r) = element_operator(pts, &local, q.bary, mf);
                div2 += q.weight * area * r * ops[3] * ops[3];
            }
        }
        let total = self.k.bilinear(x, x);
        if total > 0.0 { self.penalty * div2 / total } else { 0.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_window_mesh;

    fn small_mesh() -> Mesh {
        generate_window_mesh(1e-3, 1e-3, 3e-4).unwrap()
    }

    #[test]
    fn shape_functions_partition_unity() {
        let pts = [[0.0, 0.0], [1.0, 0.2], [0.3, 1.1]];
        let (gl, _) = bary_gradients(pts);
        let (n, g) = p2_shape([0.2, 0.5, 0.3], gl);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let gs = g.iter().fold([0.0, 0.0], |s, v| [s[0] + v[0], s[1] + v[1]]);
        assert!(gs[0].abs() < 1e-13 && gs[1].abs() < 1e-13);
    }

    #[test]
    fn operators_are_symmetric() {
        let mesh = small_mesh();
        for m in [0, 1, 3] {
            let ops = assemble_with(&mesh, &RegionIndices::vacuum(), m, 1.0).unwrap();
            assert!(ops.k.asymmetry() < 1e-12, "K asymmetric for m = {m}");
            assert!(ops.m.asymmetry() < 1e-12, "M asymmetric for m = {m}");
        }
    }

    #[test]
    fn mass_integrates_revolved_volume() {
        // For H = (1, 0, 0) everywhere the mass form gives ∫ r dA.
        let mesh = small_mesh();
        let ops = assemble_with(&mesh, &RegionIndices::vacuum(), 2, 1.0).unwrap();
        let mut x = vec![0.0; ops.num_unknowns()];
        for (d, link) in ops.dofs.links.iter().enumerate() {
            if let (2, DofLink::Free(j)) = (d % 3, link) {
                x[*j] = 1.0;
            }
        }
        // H_z = 1 except on the top/bottom wall and axis nodes, so compare
        // only the sign and rough size.
        let v = ops.m.bilinear(&x, &x);
        let exact = 0.5 * 1e-3f64.powi(2) * 2e-3;
        assert!(v > 0.3 * exact && v < exact, "{v} vs {exact}");
    }

    #[test]
    fn zero_order_rejected() {
        let mesh = small_mesh();
        assert!(matches!(assemble(&mesh, &RegionIndices::vacuum(), 0), Err(FemError::InvalidInput(_))));
    }

    #[test]
    fn inconsistent_tags_rejected() {
        let mut mesh = small_mesh();
        mesh.boundary_edges.pop();
        assert!(matches!(
            assemble(&mesh, &RegionIndices::vacuum(), 1),
            Err(FemError::AssemblyFailure(_))
        ));
        let mut mesh = small_mesh();
        mesh.regions.pop();
        assert!(matches!(
            assemble(&mesh, &RegionIndices::vacuum(), 1),
            Err(FemError::AssemblyFailure(_))
        ));
    }

    #[test]
    fn higher_orders_clamp_the_axis() {
        let mesh = small_mesh();
        let ops = assemble_with(&mesh, &RegionIndices::vacuum(), 3, 1.0).unwrap();
        for (i, p) in ops.space.coords.iter().enumerate() {
            if p[0] == 0.0 {
                for c in 0..3 {
                    assert_eq!(ops.dofs.links[3 * i + c], DofLink::Zero);
                }
            }
        }
    }
}
