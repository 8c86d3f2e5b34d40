//! Microwave whispering-gallery eigenmodes of the ring-on-post resonator.

use std::ops::RangeInclusive;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigen::{eigs_near, EigenOptions};
use crate::fem::{self, quadrature, FemError, Operators, RegionIndices};
use crate::geometry::{cross_section_profile, GeometryError, RingGeometry};
use crate::materials::MaterialRecord;
use crate::mesh::{generate_mesh, Mesh, MeshError, MeshOptions, Region};
use crate::units::{Frequency, C0};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Dominant electric-field orientation inside the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarization {
    #[default]
    Any,
    /// E along the symmetry axis (E_z), extraordinary in a z-cut crystal.
    Axial,
    /// E in the ring plane (E_r), ordinary in a z-cut crystal.
    Radial,
}

impl Polarization {
    /// Microwave index of a z-cut crystal seen by this polarization.
    pub fn ring_index(self, ring: &MaterialRecord) -> f64 {
        match self {
            Polarization::Radial => ring.n_mw_o,
            _ => ring.n_mw_e,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MicrowaveModeSolution {
    pub l_c: u32,
    pub omega_c: Frequency,
    /// Per mesh vertex (E_r, E_φ, E_z); at dielectric interfaces the value on
    /// the ring side (else the post side) is reported.
    pub field: Vec<[Complex64; 3]>,
    /// Per triangle corner, the one-sided nodal value of the triangle's region.
    pub corner_field: Vec<[[Complex64; 3]; 3]>,
    pub mesh: Arc<Mesh>,
    /// Microwave permittivity of each region (ring, post, vacuum).
    pub permittivity: [f64; 3],
    pub mode_volume: f64,
    pub q_m: Option<f64>,
    pub gamma_abs: Option<f64>,
    pub gamma_nl: Option<f64>,
    /// Share of ∫ε|E|² dV inside the ring.
    pub ring_energy_fraction: f64,
    /// Share of ∫ε|E|² dV in E_z inside the ring, relative to the ring total.
    pub axial_fraction: f64,
    pub penalty_fraction: f64,
    pub residual: f64,
}

impl MicrowaveModeSolution {
    /// Total loss rate when both contributions are known.
    pub fn gamma(&self) -> Option<f64> {
        Some(self.gamma_abs? + self.gamma_nl?)
    }

    pub fn with_losses(mut self, gamma_abs: f64, gamma_nl: f64) -> Self {
        self.gamma_abs = Some(gamma_abs);
        self.gamma_nl = Some(gamma_nl);
        self
    }

    pub fn with_quality_factor(mut self, q_m: f64) -> Self {
        self.q_m = Some(q_m);
        self
    }

    pub fn max_field(&self) -> f64 {
        self.field.iter().map(|e| field_norm(e)).fold(0.0, f64::max)
    }
}

fn field_norm(e: &[Complex64; 3]) -> f64 {
    e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Solver knobs shared by single solves and scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub penalty: f64,
    pub eigen: EigenOptions,
    /// Eigenpairs whose penalty share of xᵀKx exceeds this are discarded.
    pub max_penalty_fraction: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { penalty: fem::DEFAULT_PENALTY, eigen: EigenOptions::default(), max_penalty_fraction: 0.05 }
    }
}

/// The `count` modes nearest `target`, normalized to max |E| = 1, sorted by
/// frequency. Spurious (penalty-dominated) pairs are kept; inspect
/// `penalty_fraction` to filter them.
pub fn solve_modes(
    ops: &Operators,
    target: Frequency,
    count: usize,
    eigen: &EigenOptions,
) -> Result<Vec<MicrowaveModeSolution>, FemError> {
    if !(target.rad_per_s() > 0.0) {
        return Err(FemError::InvalidInput("target frequency must be positive".into()));
    }
    if count == 0 {
        return Err(FemError::InvalidInput("count must be at least 1".into()));
    }
    let k0 = target.rad_per_s() / C0;
    let pairs = eigs_near(&ops.k, &ops.m, k0 * k0, count, eigen)?;
    let mesh = Arc::new(ops.mesh.clone());
    Ok(pairs
        .into_iter()
        .map(|p| {
            let omega = C0 * p.value.max(0.0).sqrt();
            build_solution(ops, &mesh, &p.vector, omega, p.residual)
        })
        .collect())
}

fn build_solution(ops: &Operators, mesh: &Arc<Mesh>, x: &[f64], omega: f64, residual: f64) -> MicrowaveModeSolution {
    let full = ops.dofs.expand(x);
    let m = ops.azimuthal_order as f64;
    let nv = mesh.nodes.len();
    let eps = Region::ALL.map(|r| ops.indices.permittivity(r));
    // Region-wise averages of E at each vertex.
    let mut sums = vec![[[0.0f64; 3]; 3]; nv];
    let mut counts = vec![[0u32; 3]; nv];
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let pts = tri.map(|i| mesh.nodes[i]);
        let local = ops.element_local(&full, t);
        let reg = mesh.regions[t].index();
        for c in 0..3 {
            let mut bary = [0.0; 3];
            bary[c] = 1.0;
            if pts[c][0] <= 0.0 {
                // 1/r terms are finite but indeterminate on the axis.
                bary = [1e-6; 3];
                bary[c] = 1.0 - 2e-6;
            }
            let (ops4, _, _) = fem::element_operator(pts, &local, bary, m);
            let e = [-ops4[0] / eps[reg], ops4[1] / eps[reg], ops4[2] / eps[reg]];
            for k in 0..3 {
                sums[tri[c]][reg][k] += e[k];
            }
            counts[tri[c]][reg] += 1;
        }
    }
    // E = (−c1, i·c2, c3)/ε: radial and axial parts real, azimuthal imaginary.
    let to_complex = |v: [f64; 3]| [Complex64::new(v[0], 0.0), Complex64::new(0.0, v[1]), Complex64::new(v[2], 0.0)];
    let avg = |node: usize, reg: usize| -> [f64; 3] {
        let n = counts[node][reg].max(1) as f64;
        sums[node][reg].map(|s| s / n)
    };
    let corner_raw: Vec<[[f64; 3]; 3]> = (0..mesh.triangles.len())
        .map(|t| {
            let reg = mesh.regions[t].index();
            mesh.triangles[t].map(|i| avg(i, reg))
        })
        .collect();
    let node_raw: Vec<[f64; 3]> = (0..nv)
        .map(|i| {
            let reg = (0..3).find(|&r| counts[i][r] > 0).unwrap_or(2);
            avg(i, reg)
        })
        .collect();
    let scale = node_raw.iter().map(|e| (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()).fold(0.0, f64::max);
    // Fix the sign so the largest component at the peak is positive.
    let peak = node_raw
        .iter()
        .max_by(|a, b| {
            let na = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
            let nb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
            na.total_cmp(&nb)
        })
        .copied()
        .unwrap_or([1.0, 0.0, 0.0]);
    let dominant = peak.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
    let s = if scale > 0.0 { dominant.signum() / scale } else { 1.0 };
    let field: Vec<[Complex64; 3]> = node_raw.iter().map(|e| to_complex(e.map(|v| v * s))).collect();
    let corner_field: Vec<[[Complex64; 3]; 3]> =
        corner_raw.iter().map(|c| c.map(|e| to_complex(e.map(|v| v * s)))).collect();

    let mut sol = MicrowaveModeSolution {
        l_c: ops.azimuthal_order,
        omega_c: Frequency::from_rad_per_s(omega),
        field,
        corner_field,
        mesh: Arc::clone(mesh),
        permittivity: eps,
        mode_volume: 0.0,
        q_m: None,
        gamma_abs: None,
        gamma_nl: None,
        ring_energy_fraction: 0.0,
        axial_fraction: 0.0,
        penalty_fraction: ops.penalty_fraction(x),
        residual,
    };
    let energy = region_energies(&sol);
    let total: f64 = energy.iter().map(|e| e[3]).sum();
    let ring = energy[Region::Ring.index()];
    sol.ring_energy_fraction = if total > 0.0 { ring[3] / total } else { 0.0 };
    sol.axial_fraction = if ring[3] > 0.0 { ring[2] / ring[3] } else { 0.0 };
    sol.mode_volume = mode_volume(&sol, &sol.mesh);
    sol
}

/// Per region: ∫ε|E_k|² dV for each component k and their sum.
fn region_energies(sol: &MicrowaveModeSolution) -> [[f64; 4]; 3] {
    let mesh = &sol.mesh;
    let rule = quadrature::triangle_rule(3);
    let mut out = [[0.0; 4]; 3];
    for t in 0..mesh.triangles.len() {
        let reg = mesh.regions[t].index();
        let pts = mesh.triangles[t].map(|i| mesh.nodes[i]);
        let area = mesh.triangle_area(t);
        let corners = &sol.corner_field[t];
        for q in &rule {
            let r = q.bary[0] * pts[0][0] + q.bary[1] * pts[1][0] + q.bary[2] * pts[2][0];
            let w = q.weight * area * 2.0 * std::f64::consts::PI * r * sol.permittivity[reg];
            for k in 0..3 {
                let e = corners[0][k] * q.bary[0] + corners[1][k] * q.bary[1] + corners[2][k] * q.bary[2];
                out[reg][k] += w * e.norm_sqr();
            }
        }
    }
    for row in &mut out {
        row[3] = row[0] + row[1] + row[2];
    }
    out
}

/// V_c = ∫|E|² dV over the window with the unit-max field, the field taken as
/// linear over each triangle.
pub fn mode_volume(solution: &MicrowaveModeSolution, mesh: &Mesh) -> f64 {
    let rule = quadrature::triangle_rule(3);
    let mut v = 0.0;
    for t in 0..mesh.triangles.len() {
        let pts = mesh.triangles[t].map(|i| mesh.nodes[i]);
        let area = mesh.triangle_area(t);
        let corners = &solution.corner_field[t];
        for q in &rule {
            let r = q.bary[0] * pts[0][0] + q.bary[1] * pts[1][0] + q.bary[2] * pts[2][0];
            let mut e2 = 0.0;
            for k in 0..3 {
                let e = corners[0][k] * q.bary[0] + corners[1][k] * q.bary[1] + corners[2][k] * q.bary[2];
                e2 += e.norm_sqr();
            }
            v += q.weight * area * 2.0 * std::f64::consts::PI * r * e2;
        }
    }
    v
}

/// Permittivity-weighted volume ∫(ε/ε_ring)|E|² dV, the volume that fixes
/// the field per photon inside the ring.
pub fn energy_mode_volume(solution: &MicrowaveModeSolution) -> f64 {
    let e = region_energies(solution);
    let total: f64 = e.iter().map(|r| r[3]).sum();
    total / solution.permittivity[Region::Ring.index()]
}

/// Field at (r, z), linear within the containing triangle. On an interface
/// the ring side wins.
pub fn field_probe(solution: &MicrowaveModeSolution, r: f64, z: f64) -> Result<[Complex64; 3], FemError> {
    field_probe_in(solution, r, z, Some(Region::Ring))
}

/// As [`field_probe`], preferring triangles of `region` on shared edges.
pub fn field_probe_in(
    solution: &MicrowaveModeSolution,
    r: f64,
    z: f64,
    region: Option<Region>,
) -> Result<[Complex64; 3], FemError> {
    let (t, bary) = solution.mesh.locate([r, z], region).ok_or(FemError::OutOfWindow { r, z })?;
    let c = &solution.corner_field[t];
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for k in 0..3 {
        out[k] = c[0][k] * bary[0] + c[1][k] * bary[1] + c[2][k] * bary[2];
    }
    Ok(out)
}

/// Mesh and solver settings for ring-mode computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingSolveOptions {
    /// Element edge inside the ring.
    pub edge_length: f64,
    pub mesh: MeshOptions,
    pub rim_segments: usize,
    /// Vacuum gap between ring and wall, in free-space wavelengths at the
    /// mode frequency estimate.
    pub window_wavelengths: f64,
    pub polarization: Polarization,
    /// Eigenpairs requested around each shift.
    pub count: usize,
    pub solve: SolveOptions,
}

impl Default for RingSolveOptions {
    fn default() -> Self {
        RingSolveOptions {
            edge_length: 50e-6,
            mesh: MeshOptions::default(),
            rim_segments: 24,
            window_wavelengths: 1.5,
            polarization: Polarization::Any,
            count: 8,
            solve: SolveOptions::default(),
        }
    }
}

/// Microwave indices of the ring, post and surrounding vacuum.
pub fn ring_indices(ring: &MaterialRecord, post: &MaterialRecord, polarization: Polarization) -> RegionIndices {
    RegionIndices { ring: polarization.ring_index(ring), post: post.n_mw_o, vacuum: 1.0 }
}

/// Effective-index estimate of the fundamental ring mode: a slab guide of
/// the ring height (field in the slab plane) whose effective index feeds a
/// second slab of the ring width (field normal to the walls), closed into a
/// loop at the mid-ring radius.
pub fn ring_mode_guess(geometry: &RingGeometry, indices: &RegionIndices, l_c: u32) -> Frequency {
    let n = indices.ring;
    let w = geometry.r_outer - geometry.r_inner;
    let r_mid = geometry.r_outer - 0.5 * w;
    let excess = |f: f64| {
        let k = 2.0 * std::f64::consts::PI * f / C0;
        let n1 = slab_beta(k, n, 1.0, geometry.height, false) / k;
        let n2 = slab_beta(k, n1, 1.0, w, true) / k;
        k * n2 * r_mid - l_c as f64
    };
    let (mut lo, mut hi) = (1e6f64, 1e15f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Frequency::from_rad_per_s(2.0 * std::f64::consts::PI * lo)
}

/// Propagation constant of the fundamental even mode of a symmetric slab of
/// index `n`, thickness `h`, cladding `nc`, at vacuum wavenumber `k`.
/// `normal` selects the field polarized across the slab.
fn slab_beta(k: f64, n: f64, nc: f64, h: f64, normal: bool) -> f64 {
    let (lo, hi) = (k * nc, k * n);
    let weight = if normal { n * n / (nc * nc) } else { 1.0 };
    let f = |beta: f64| {
        let kx = (hi * hi - beta * beta).max(0.0).sqrt();
        let g = (beta * beta - lo * lo).max(0.0).sqrt();
        kx * (kx * h / 2.0).tan() - weight * g
    };
    let cut = std::f64::consts::PI / h;
    let mut a = (hi * hi - cut * cut * 0.999_999).max(lo * lo).sqrt();
    let mut b = hi * (1.0 - 1e-12);
    if f(a).signum() == f(b).signum() {
        return lo;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m).signum() == f(a).signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Chooses the fundamental ring mode among candidates: discard spurious and
/// wrongly polarized solutions, then take the largest ring-energy share,
/// breaking near-ties (1%) toward lower frequency.
pub fn select_ring_mode(
    modes: Vec<MicrowaveModeSolution>,
    polarization: Polarization,
    max_penalty_fraction: f64,
) -> Option<MicrowaveModeSolution> {
    let mut candidates: Vec<MicrowaveModeSolution> = modes
        .into_iter()
        .filter(|m| m.penalty_fraction <= max_penalty_fraction)
        .filter(|m| m.ring_energy_fraction >= MIN_RING_FRACTION)
        .filter(|m| match polarization {
            Polarization::Any => true,
            Polarization::Axial => m.axial_fraction >= 0.5,
            Polarization::Radial => m.axial_fraction < 0.5,
        })
        .collect();
    candidates.sort_by(|a, b| a.omega_c.rad_per_s().total_cmp(&b.omega_c.rad_per_s()));
    let best = candidates.iter().map(|m| m.ring_energy_fraction).fold(f64::NEG_INFINITY, f64::max);
    let idx = candidates.iter().position(|m| m.ring_energy_fraction >= best - 0.01)?;
    Some(candidates.swap_remove(idx))
}

/// Modes with less of their energy inside the ring are window resonances.
pub const MIN_RING_FRACTION: f64 = 0.5;

/// Meshes the ring cross-section for modes near `frequency`.
pub fn ring_mesh(geometry: &RingGeometry, frequency: Frequency, opts: &RingSolveOptions) -> Result<Mesh, SolverError> {
    let margin = opts.window_wavelengths * C0 / frequency.hz();
    let profile = cross_section_profile(geometry, opts.rim_segments, margin)?;
    Ok(generate_mesh(&profile, opts.edge_length, &opts.mesh)?)
}

/// Fundamental ring mode for one azimuthal number, searched around the
/// analytic guess (or `near` when given).
pub fn solve_ring_mode(
    geometry: &RingGeometry,
    indices: &RegionIndices,
    l_c: u32,
    near: Option<Frequency>,
    opts: &RingSolveOptions,
) -> Result<Option<MicrowaveModeSolution>, SolverError> {
    if l_c == 0 {
        return Err(FemError::InvalidInput("azimuthal number must be at least 1".into()).into());
    }
    let guess = near.unwrap_or_else(|| ring_mode_guess(geometry, indices, l_c));
    let mesh = ring_mesh(geometry, guess, opts)?;
    let ops = fem::assemble_with(&mesh, indices, l_c, opts.solve.penalty)?;
    // The estimate is good to a few percent; widen the search if the window
    // around it holds no ring mode.
    for factor in [1.0, 0.85, 1.2, 0.7] {
        let target = Frequency::from_rad_per_s(guess.rad_per_s() * factor);
        let modes = solve_modes(&ops, target, opts.count, &opts.solve.eigen)?;
        if let Some(best) = select_ring_mode(modes, opts.polarization, opts.solve.max_penalty_fraction) {
            return Ok(Some(best));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionRow {
    pub l_c: u32,
    /// `None` marks a gap: no acceptable ring mode was found.
    pub omega_c: Option<Frequency>,
    pub ring_energy_fraction: f64,
}

/// Fundamental ring-mode frequency for each azimuthal number in `l_range`.
/// Points are solved in parallel; rows are returned sorted by L_c.
pub fn dispersion_scan(
    geometry: &RingGeometry,
    indices: &RegionIndices,
    l_range: RangeInclusive<u32>,
    opts: &RingSolveOptions,
) -> Result<Vec<DispersionRow>, SolverError> {
    if l_range.is_empty() || *l_range.start() == 0 {
        return Err(FemError::InvalidInput(format!("invalid L_c range {l_range:?}")).into());
    }
    geometry.validate()?;
    let ls: Vec<u32> = l_range.collect();
    let mut rows: Vec<DispersionRow> = ls
        .par_iter()
        .map(|&l| {
            let sol = solve_ring_mode(geometry, indices, l, None, opts)?;
            Ok(match sol {
                Some(s) => DispersionRow { l_c: l, omega_c: Some(s.omega_c), ring_energy_fraction: s.ring_energy_fraction },
                None => DispersionRow { l_c: l, omega_c: None, ring_energy_fraction: 0.0 },
            })
        })
        .collect::<Result<_, SolverError>>()?;
    rows.sort_by_key(|r| r.l_c);
    Ok(rows)
}

/// CSV with header `L_c, f_GHz, ring_energy_fraction`; gaps leave f_GHz empty.
pub fn dispersion_csv(rows: &[DispersionRow]) -> String {
    let mut out = String::from("L_c, f_GHz, ring_energy_fraction\n");
    for r in rows {
        match r.omega_c {
            Some(w) => out.push_str(&format!("{}, {:.6}, {:.6}\n", r.l_c, w.ghz(), r.ring_energy_fraction)),
            None => out.push_str(&format!("{}, , {:.6}\n", r.l_c, r.ring_energy_fraction)),
        }
    }
    out
}
