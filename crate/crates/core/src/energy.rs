//! Cell-averaged spring energy with an orientation penalty.
//!
//! The energy of a periodic deformation on a `k x k` supercell is the sum of
//! `stiffness * (|deformed| - rest)^2` over springs plus `area * f(det)` over
//! penalized triangles, where `f(t) = 1/eta` for `t <= 0` and `0` otherwise.
//! Averaging divides by the supercell area.

use alloc::vec::Vec;

use alloc::format;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Error, Result};
use crate::geometry::Polygon;
use crate::lattice::{LatticeSpec, NodalField, NodeRef, PeriodicDeformation, Supercell};
use crate::linalg::{Mat2, Vec2};
use crate::math;

/// Orientation penalty `f(t)`: `1/eta` when `t <= 0`, else `0`.
#[inline]
pub fn penalty(det: f64, eta: f64) -> f64 {
    if det > 0.0 {
        0.0
    } else {
        1.0 / eta
    }
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        bail!(InvalidArgument, "penalty parameter eta must be positive, got {eta}");
    }
    Ok(())
}

/// One spring instance of a supercell with flat node indices.
#[derive(Debug, Clone, Copy)]
pub struct SpringInstance {
    pub ia: usize,
    pub ib: usize,
    pub xa: Vec2,
    pub xb: Vec2,
    pub rest: f64,
    pub stiffness: f64,
}

/// One penalized triangle instance of a supercell.
#[derive(Debug, Clone, Copy)]
pub struct TriangleInstance {
    pub idx: [usize; 3],
    pub x: [Vec2; 3],
    pub area: f64,
    pub cell: [usize; 2],
    pub triangle: usize,
}

/// Flattened springs and triangles of a supercell, shared by the solvers.
#[derive(Debug, Clone)]
pub struct InstanceTable {
    pub springs: Vec<SpringInstance>,
    pub triangles: Vec<TriangleInstance>,
}

impl InstanceTable {
    pub fn new(cell: &Supercell<'_>) -> Self {
        let spec = cell.spec;
        let mut springs = Vec::with_capacity(spec.springs.len() * cell.k * cell.k);
        let mut triangles = Vec::with_capacity(spec.triangles.len() * cell.k * cell.k);
        for c in cell.cells() {
            for s in &spec.springs {
                springs.push(SpringInstance {
                    ia: cell.index(s.a, c),
                    ib: cell.index(s.b, c),
                    xa: cell.reference(s.a, c),
                    xb: cell.reference(s.b, c),
                    rest: s.rest_length,
                    stiffness: s.stiffness,
                });
            }
            for (ti, t) in spec.triangles.iter().enumerate() {
                triangles.push(TriangleInstance {
                    idx: t.nodes.map(|n| cell.index(n, c)),
                    x: t.nodes.map(|n| cell.reference(n, c)),
                    area: t.area,
                    cell: [c[0] as usize, c[1] as usize],
                    triangle: ti,
                });
            }
        }
        InstanceTable { springs, triangles }
    }

    /// Spring energy of `u(x) = lambda x + psi`.
    pub fn spring_energy(&self, lambda: Mat2, psi: &[Vec2]) -> f64 {
        self.springs
            .iter()
            .map(|s| {
                let d = lambda * (s.xb - s.xa) + psi[s.ib] - psi[s.ia];
                let e = d.norm() - s.rest;
                s.stiffness * e * e
            })
            .sum()
    }

    /// Spring energy and its gradient with respect to `lambda` and `psi`.
    /// Gradients are accumulated into the output buffers.
    pub fn spring_energy_grad(&self, lambda: Mat2, psi: &[Vec2], g_lambda: &mut Mat2, g_psi: &mut [Vec2]) -> f64 {
        let mut total = 0.0;
        for s in &self.springs {
            let dx = s.xb - s.xa;
            let d = lambda * dx + psi[s.ib] - psi[s.ia];
            let len = d.norm();
            let e = len - s.rest;
            total += s.stiffness * e * e;
            if len > 0.0 {
                let g = d * (2.0 * s.stiffness * e / len);
                g_psi[s.ib] += g;
                g_psi[s.ia] -= g;
                *g_lambda = *g_lambda + Mat2::new(g.x * dx.x, g.x * dx.y, g.y * dx.x, g.y * dx.y);
            }
        }
        total
    }

    /// Ratio of deformed to reference signed area of triangle instance `t`.
    #[inline]
    pub fn det(&self, t: &TriangleInstance, lambda: Mat2, psi: &[Vec2]) -> f64 {
        let u = [0, 1, 2].map(|i| lambda * t.x[i] + psi[t.idx[i]]);
        (u[1] - u[0]).cross(u[2] - u[0]) / (2.0 * t.area)
    }

    /// Determinant of triangle instance `t` and its gradient with respect to
    /// the three deformed node positions.
    #[inline]
    pub fn det_grad(&self, t: &TriangleInstance, lambda: Mat2, psi: &[Vec2]) -> (f64, [Vec2; 3]) {
        let u = [0, 1, 2].map(|i| lambda * t.x[i] + psi[t.idx[i]]);
        let (a, b) = (u[1] - u[0], u[2] - u[0]);
        let s = 1.0 / (2.0 * t.area);
        let g1 = Vec2::new(b.y, -b.x) * s;
        let g2 = Vec2::new(-a.y, a.x) * s;
        (a.cross(b) * s, [-(g1 + g2), g1, g2])
    }

    /// Exact-step penalty energy.
    pub fn penalty_energy(&self, lambda: Mat2, psi: &[Vec2], eta: f64) -> f64 {
        self.triangles.iter().map(|t| t.area * penalty(self.det(t, lambda, psi), eta)).sum()
    }

    /// Smallest triangle determinant.
    pub fn min_det(&self, lambda: Mat2, psi: &[Vec2]) -> f64 {
        self.triangles.iter().map(|t| self.det(t, lambda, psi)).fold(f64::INFINITY, f64::min)
    }
}

/// Adds the gradient `g` with respect to a deformed node at reference `x`
/// and flat index `idx` to the `lambda` and `psi` gradients.
#[inline]
pub fn scatter(g: Vec2, x: Vec2, idx: usize, g_lambda: &mut Mat2, g_psi: &mut [Vec2]) {
    g_psi[idx] += g;
    *g_lambda = *g_lambda + Mat2::new(g.x * x.x, g.x * x.y, g.y * x.x, g.y * x.y);
}

/// Flattens `(lambda, psi)` into `[m00, m01, m10, m11, psi0.x, psi0.y, ...]`.
pub fn pack(lambda: Mat2, psi: &[Vec2]) -> Vec<f64> {
    let mut x = Vec::with_capacity(4 + 2 * psi.len());
    x.extend_from_slice(&[lambda.m00, lambda.m01, lambda.m10, lambda.m11]);
    for p in psi {
        x.push(p.x);
        x.push(p.y);
    }
    x
}

/// Inverse of [`pack`].
pub fn unpack(x: &[f64]) -> (Mat2, Vec<Vec2>) {
    let lambda = Mat2::new(x[0], x[1], x[2], x[3]);
    let psi = x[4..].chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
    (lambda, psi)
}

/// Energy of one penalized triangle instance.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TriangleEnergy {
    pub cell: [usize; 2],
    pub triangle: usize,
    pub spring: f64,
    pub penalty: f64,
    /// Sign of the deformation gradient determinant on the triangle.
    pub preserved: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyBreakdown {
    pub spring_total: f64,
    pub penalty_total: f64,
    /// Energy of springs that belong to no penalized triangle.
    pub unattributed_spring: f64,
    pub per_triangle: Vec<TriangleEnergy>,
    pub area: f64,
    /// `(spring_total + penalty_total) / area`.
    pub averaged: f64,
}

/// Total spring energy of a periodic deformation.
pub fn spring_energy(def: &PeriodicDeformation<'_>) -> f64 {
    let spec = def.spec();
    let mut total = 0.0;
    for c in def.cell.cells() {
        for s in &spec.springs {
            let e = (def.evaluate(s.b, c) - def.evaluate(s.a, c)).norm() - s.rest_length;
            total += s.stiffness * e * e;
        }
    }
    total
}

/// Total penalty energy of a periodic deformation.
pub fn penalty_energy(def: &PeriodicDeformation<'_>, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let table = InstanceTable::new(&def.cell);
    Ok(table.penalty_energy(def.lambda, &def.psi, eta))
}

/// `(spring + penalty) / (k^2 |det [v1 v2]|)`.
pub fn averaged_energy(def: &PeriodicDeformation<'_>, eta: f64) -> Result<f64> {
    Ok(energy_breakdown(def, eta)?.averaged)
}

/// Full decomposition of the averaged energy per penalized triangle.
pub fn energy_breakdown(def: &PeriodicDeformation<'_>, eta: f64) -> Result<EnergyBreakdown> {
    check_eta(eta)?;
    let spec = def.spec();
    let table = InstanceTable::new(&def.cell);
    let spring_total = spring_energy(def);
    let mut per_triangle = Vec::with_capacity(table.triangles.len());
    let mut penalty_total = 0.0;
    for t in &table.triangles {
        let c = [t.cell[0] as i64, t.cell[1] as i64];
        let mut e = 0.0;
        for sh in spec.shares(t.triangle) {
            let s = &spec.springs[sh.spring];
            let cc = [c[0] + sh.shift[0], c[1] + sh.shift[1]];
            let d = (def.evaluate(s.b, cc) - def.evaluate(s.a, cc)).norm() - s.rest_length;
            e += sh.weight * s.stiffness * d * d;
        }
        let det = table.det(t, def.lambda, &def.psi);
        let p = t.area * penalty(det, eta);
        penalty_total += p;
        per_triangle.push(TriangleEnergy { cell: t.cell, triangle: t.triangle, spring: e, penalty: p, preserved: det > 0.0 });
    }
    let mut unattributed_spring = 0.0;
    for c in def.cell.cells() {
        for &si in spec.unattributed_springs() {
            let s = &spec.springs[si];
            let d = (def.evaluate(s.b, c) - def.evaluate(s.a, c)).norm() - s.rest_length;
            unattributed_spring += s.stiffness * d * d;
        }
    }
    let area = def.cell.area();
    Ok(EnergyBreakdown {
        spring_total,
        penalty_total,
        unattributed_spring,
        per_triangle,
        area,
        averaged: (spring_total + penalty_total) / area,
    })
}

/// Energy of the scaled cell `eps (U + offset)` under nodal positions `u`,
/// with rest lengths and penalized areas scaled by `eps`.
pub fn scaled_cell_energy(
    spec: &LatticeSpec,
    u: impl Fn(NodeRef) -> Option<Vec2>,
    offset: [i64; 2],
    eta: f64,
    eps: f64,
) -> Result<f64> {
    check_eta(eta)?;
    if !(eps > 0.0) {
        bail!(InvalidArgument, "scale must be positive, got {eps}");
    }
    let get = |n: NodeRef| {
        let n = n.shifted(offset);
        u(n).ok_or_else(|| Error::Precondition(format!("node {} at cell {:?} is missing", n.basic, n.offset)))
    };
    let mut e = 0.0;
    for s in &spec.springs {
        let d = (get(s.b)? - get(s.a)?).norm() - eps * s.rest_length;
        e += s.stiffness * d * d;
    }
    for t in &spec.triangles {
        let p = [get(t.nodes[0])?, get(t.nodes[1])?, get(t.nodes[2])?];
        let det = (p[1] - p[0]).cross(p[2] - p[0]);
        e += eps * eps * t.area * penalty(det, eta);
    }
    Ok(e)
}

/// Reference position of `n` on the `eps`-scaled lattice.
pub fn scaled_position(spec: &LatticeSpec, n: NodeRef, eps: f64) -> Vec2 {
    spec.position(n) * eps
}

/// Offsets of the scaled cells compactly contained in `omega`.
pub fn cells_inside(spec: &LatticeSpec, omega: &Polygon, eps: f64) -> Vec<[i64; 2]> {
    let (lo, hi) = omega.bounds();
    let inv = spec.basis().inverse().expect("validated basis");
    let o = spec.cell_origin;
    let mut range = [[i64::MAX, i64::MIN]; 2];
    for c in [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)] {
        let l = inv * (c * (1.0 / eps) - o);
        for (r, v) in range.iter_mut().zip([l.x, l.y]) {
            r[0] = r[0].min(math::floor(v) as i64 - 1);
            r[1] = r[1].max(math::floor(v) as i64 + 1);
        }
    }
    let corners = spec.cell_corners();
    let mut out = Vec::new();
    for i in range[0][0]..=range[0][1] {
        for j in range[1][0]..=range[1][1] {
            let shift = spec.v1 * i as f64 + spec.v2 * j as f64;
            let q = corners.map(|c| (c + shift) * eps);
            if omega.contains_polygon(&q) {
                out.push([i, j]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DomainEnergy {
    pub total: f64,
    /// `(offset, energy)` of every counted cell.
    pub per_cell: Vec<([i64; 2], f64)>,
}

/// Sum of scaled cell energies over cells compactly contained in `omega`.
pub fn domain_energy(spec: &LatticeSpec, field: &NodalField, omega: &Polygon, eta: f64, eps: f64) -> Result<DomainEnergy> {
    check_eta(eta)?;
    let mut per_cell = Vec::new();
    let mut total = 0.0;
    for c in cells_inside(spec, omega, eps) {
        let e = scaled_cell_energy(spec, |n| field.get(&n).copied(), c, eta, eps)?;
        total += e;
        per_cell.push((c, e));
    }
    Ok(DomainEnergy { total, per_cell })
}

/// Energy of one unscaled cell under arbitrary node positions and the
/// squared `L2` norm over the cell of the piecewise-linear interpolant's gradient.
pub fn cell_energy_and_gradient(spec: &LatticeSpec, u: impl Fn(NodeRef) -> Vec2, eta: f64) -> Result<(f64, f64)> {
    let e = scaled_cell_energy(spec, |n| Some(u(n)), [0, 0], eta, 1.0)?;
    let mut g2 = 0.0;
    for t in &spec.triangulation {
        let x = t.map(|n| spec.position(n));
        let g = crate::lattice::triangle_gradient(x, t.map(&u));
        g2 += 0.5 * (x[1] - x[0]).cross(x[2] - x[0]) * g.frobenius_sq();
    }
    Ok((e, g2))
}

/// Empirical constants of `E <= C1 (|grad u|^2 + |U|)` and
/// `E >= C2 (|grad u|^2 - D2 |U|)` on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellBounds {
    pub c1: f64,
    pub c2: f64,
    pub d2: f64,
    pub samples: usize,
    /// Largest `E / (C1 (|grad u|^2 + |U|))`, at most one.
    pub worst_upper: f64,
    /// Smallest `E - C2 (|grad u|^2 - D2 |U|)`, at least zero.
    pub worst_lower: f64,
}

/// Fits the two cell bounds on the identity, on `u = 0` and on `samples`
/// fields `lambda x + xi` with entries of `lambda` and `xi` uniform in `[-3, 3]`.
pub fn check_cell_bounds(spec: &LatticeSpec, eta: f64, samples: usize, seed: u64) -> Result<CellBounds> {
    check_eta(eta)?;
    if samples == 0 {
        bail!(InvalidArgument, "need at least one sample");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = spec.cell_area();
    let mut nodes: Vec<NodeRef> = Vec::new();
    for s in &spec.springs {
        nodes.extend([s.a, s.b]);
    }
    for t in spec.triangles.iter().map(|t| t.nodes).chain(spec.triangulation.iter().copied()) {
        nodes.extend(t);
    }
    nodes.sort();
    nodes.dedup();
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(samples + 2);
    pts.push(cell_energy_and_gradient(spec, |n| spec.position(n), eta)?);
    pts.push(cell_energy_and_gradient(spec, |_| Vec2::ZERO, eta)?);
    for _ in 0..samples {
        let mut r = || rng.gen_range(-3.0..=3.0);
        let lambda = Mat2::new(r(), r(), r(), r());
        let xi: Vec<Vec2> = nodes.iter().map(|_| Vec2::new(r(), r())).collect();
        let field = |n: NodeRef| {
            let i = nodes.binary_search(&n).expect("collected node");
            lambda * spec.position(n) + xi[i]
        };
        pts.push(cell_energy_and_gradient(spec, field, eta)?);
    }
    let c1 = pts.iter().map(|(e, g)| e / (g + area)).fold(0.0, f64::max);
    // C2 from the median ratio over strongly deformed samples; D2 then
    // absorbs every sample below that line.
    let mut ratios: Vec<f64> = pts.iter().filter(|(_, g)| *g > 4.0 * area).map(|(e, g)| e / g).collect();
    ratios.sort_by(f64::total_cmp);
    let c2 = if ratios.is_empty() { 1.0 } else { 0.5 * ratios[ratios.len() / 2] };
    let d2 = pts.iter().map(|(e, g)| (g - e / c2) / area).fold(0.0, f64::max);
    let worst_upper = pts.iter().map(|(e, g)| e / (c1 * (g + area))).fold(0.0, f64::max);
    let worst_lower = pts.iter().map(|(e, g)| e - c2 * (g - d2 * area)).fold(f64::INFINITY, f64::min);
    Ok(CellBounds { c1, c2, d2, samples: pts.len(), worst_upper, worst_lower })
}
