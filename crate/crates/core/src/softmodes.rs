//! Soft modes: microscopic deformations following a compressive conformal
//! map, built by modulating a uniform twist cell by cell.
//!
//! At a node with reference position `x` on the `eps`-lattice the twist
//! state is chosen so that its compression equals `|f'(x)|`, and the node is
//! placed at `f(x) + eps R(arg f'(x)) psi(x)`. A fixed number of local
//! Gauss-Seidel sweeps then reconciles neighbouring units.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::energy::{cells_inside, check_eta, domain_energy, scaled_position};
use crate::error::{bail, Result};
use crate::geometry::Polygon;
use crate::lattice::{LatticeSpec, NodalField, NodeRef, Supercell};
use crate::linalg::{Mat2, Vec2};
use crate::math::{self, TAU};
use crate::mechanisms::TwistFamily;

/// Number of relaxation sweeps applied by [`modulate`].
pub const RELAX_SWEEPS: usize = 200;

/// Ratio `p(z) / q(z)` of complex polynomials, coefficients lowest first.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rational {
    pub num: Vec<[f64; 2]>,
    pub den: Vec<[f64; 2]>,
}

fn horner(c: &[[f64; 2]], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + Complex64::new(a[0], a[1]);
    }
    (p, dp)
}

impl Rational {
    pub fn polynomial(num: Vec<[f64; 2]>) -> Self {
        Rational { num, den: alloc::vec![[1.0, 0.0]] }
    }

    /// `f(z)` and `f'(z)`.
    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let (p, dp) = horner(&self.num, z);
        let (q, dq) = horner(&self.den, z);
        (p / q, (dp * q - p * dq) / (q * q))
    }
}

fn to_c(v: Vec2) -> Complex64 {
    Complex64::new(v.x, v.y)
}

fn to_v(z: Complex64) -> Vec2 {
    Vec2::new(z.re, z.im)
}

/// Analytic map with `|f'| <= 1` on a polygon.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConformalTarget {
    pub f: Rational,
    pub domain: Polygon,
    /// Largest `|f'|` on the validation grid.
    pub max_derivative: f64,
    /// Smallest `|f'|` on the validation grid.
    pub min_derivative: f64,
}

impl ConformalTarget {
    /// Validates `f` on a `101 x 101` grid over `domain` plus its vertices.
    pub fn new(f: Rational, domain: Polygon) -> Result<Self> {
        if f.num.is_empty() || f.den.is_empty() {
            bail!(InvalidArgument, "empty coefficient list");
        }
        let (lo, hi) = domain.bounds();
        let mut pts: Vec<Vec2> = domain.vertices.clone();
        for i in 0..=100 {
            for j in 0..=100 {
                let p = Vec2::new(lo.x + (hi.x - lo.x) * i as f64 / 100.0, lo.y + (hi.y - lo.y) * j as f64 / 100.0);
                if domain.contains(p) || domain.on_boundary(p) {
                    pts.push(p);
                }
            }
        }
        let (mut mx, mut mn) = (0.0_f64, f64::INFINITY);
        for p in pts {
            let (v, d) = f.eval(to_c(p));
            if !(v.re.is_finite() && v.im.is_finite() && d.norm().is_finite()) {
                bail!(DegenerateGeometry, "map is singular near ({}, {})", p.x, p.y);
            }
            mx = mx.max(d.norm());
            mn = mn.min(d.norm());
        }
        if mx > 1.0 + 1e-9 {
            bail!(Precondition, "map is not compressive: |f'| reaches {mx}");
        }
        Ok(ConformalTarget { f, domain, max_derivative: mx, min_derivative: mn })
    }

    /// `f(z) = z - z^2/4` on `[0.5, 1.5] x [-0.5, 0.5]`, where `|f'|` ranges
    /// over about `[0.25, 0.79]`.
    pub fn quadratic() -> Self {
        let f = Rational::polynomial(alloc::vec![[0.0, 0.0], [1.0, 0.0], [-0.25, 0.0]]);
        Self::new(f, Polygon::rectangle(0.5, 1.5, -0.5, 0.5).expect("valid box")).expect("compressive")
    }

    /// `f(z) = c e^{i phi} z` on the unit square.
    pub fn uniform(c: f64, phi: f64) -> Result<Self> {
        let f = Rational::polynomial(alloc::vec![[0.0, 0.0], [c * math::cos(phi), c * math::sin(phi)]]);
        Self::new(f, Polygon::rectangle(0.0, 1.0, 0.0, 1.0)?)
    }

    pub fn identity() -> Self {
        Self::uniform(1.0, 0.0).expect("compressive")
    }

    pub fn eval(&self, p: Vec2) -> (Vec2, Complex64) {
        let (v, d) = self.f.eval(to_c(p));
        (to_v(v), d)
    }
}

/// Monotone cubic interpolant through increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneSpline {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = alloc::vec![0.0; n];
        d[0] = s[0];
        d[n - 1] = s[n - 2];
        for i in 1..n - 1 {
            if s[i - 1] * s[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
            }
        }
        MonotoneSpline { x, y, d }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return self.y[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let (h00, h10, h01, h11) =
            ((1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u), u * (1.0 - u) * (1.0 - u), u * u * (3.0 - 2.0 * u), u * u * (u - 1.0));
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

/// Local mechanism states indexed by compression.
#[derive(Debug, Clone)]
pub enum StateTable<'a> {
    /// Uniform twist of the rigid units, with `theta(c)` from a monotone spline.
    Twist { family: TwistFamily<'a>, inverse: MonotoneSpline },
    /// Mechanisms `c R x + psi` on a `k` supercell, sorted by `c`; fields in
    /// between are interpolated linearly.
    Tabulated { k: usize, states: Vec<(f64, Vec<Vec2>)> },
}

impl<'a> StateTable<'a> {
    pub fn twist(spec: &'a LatticeSpec) -> Result<Self> {
        let family = TwistFamily::new(spec)?;
        let n = 400;
        let mut cs = Vec::new();
        let mut ts = Vec::new();
        for i in 0..=n {
            let th = family.theta_max * (1.0 - 1e-6) * i as f64 / n as f64;
            let c = family.solve(th)?.compression;
            if cs.last().is_some_and(|&l: &f64| c >= l) {
                break;
            }
            cs.push(c);
            ts.push(th);
        }
        if cs.len() < 3 {
            bail!(DegenerateGeometry, "twist family does not compress");
        }
        cs.reverse();
        ts.reverse();
        Ok(StateTable::Twist { family, inverse: MonotoneSpline::new(cs, ts) })
    }

    /// Table from mechanisms with `lambda = c R`; rotations are removed.
    pub fn tabulated(k: usize, mut states: Vec<(Mat2, Vec<Vec2>)>) -> Result<Self> {
        if k == 0 || states.is_empty() {
            bail!(InvalidArgument, "need a positive supercell size and at least one state");
        }
        let mut out = Vec::with_capacity(states.len());
        for (lam, psi) in states.drain(..) {
            let c = math::hypot(lam.m00 + lam.m11, lam.m10 - lam.m01) * 0.5;
            let rot = math::atan2(lam.m10 - lam.m01, lam.m00 + lam.m11);
            let q = Mat2::rotation(-rot);
            out.push((c, psi.into_iter().map(|p| q * p).collect::<Vec<_>>()));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        if out.windows(2).any(|w| w[0].1.len() != w[1].1.len() || w[1].0 - w[0].0 < 1e-12) {
            bail!(InvalidArgument, "states must have equal size and distinct compressions");
        }
        Ok(StateTable::Tabulated { k, states: out })
    }

    pub fn k(&self) -> usize {
        match self {
            StateTable::Twist { family, .. } => family.k,
            StateTable::Tabulated { k, .. } => *k,
        }
    }

    /// Reachable compressions `(lo, hi]`.
    pub fn range(&self) -> (f64, f64) {
        match self {
            StateTable::Twist { inverse, .. } => (inverse.x[0], 1.0),
            StateTable::Tabulated { states, .. } => (states[0].0, states[states.len() - 1].0),
        }
    }

    /// Periodic field of the unrotated state with compression `c`.
    pub fn state(&self, c: f64) -> Result<Vec<Vec2>> {
        let (lo, hi) = self.range();
        if !(c >= lo && c <= hi + 1e-12) {
            bail!(OutOfRange, "compression {c} outside the reachable range [{lo}, {hi}]");
        }
        match self {
            StateTable::Twist { family, inverse } => {
                // Spline guess, then Newton steps on c(theta) = c.
                let mut th = inverse.eval(c);
                let h = 1e-6;
                let slope = (inverse.eval(c + h) - inverse.eval(c - h)) / (2.0 * h);
                let mut tw = family.solve(th)?;
                for _ in 0..3 {
                    if (tw.compression - c).abs() < 1e-15 {
                        break;
                    }
                    th += (c - tw.compression) * slope;
                    tw = family.solve(th)?;
                }
                let q = Mat2::rotation(-tw.rotation);
                Ok(tw.psi.iter().map(|p| q * *p).collect())
            }
            StateTable::Tabulated { states, .. } => {
                let i = states.partition_point(|s| s.0 <= c).clamp(1, states.len().max(2) - 1);
                if states.len() == 1 {
                    return Ok(states[0].1.clone());
                }
                let (c0, p0) = &states[i - 1];
                let (c1, p1) = &states[i];
                let w = (c - c0) / (c1 - c0);
                Ok(p0.iter().zip(p1).map(|(a, b)| *a * (1.0 - w) + *b * w).collect())
            }
        }
    }
}

/// Follows the mechanism branch through `(lambda, psi)`, `lambda = c R`, on a
/// `k` supercell. The rotation is removed, then `c` is stepped by `step`
/// toward zero and toward one; at each value the spring energy is minimised
/// over `psi` with `lambda = c I` fixed, starting from the previous state.
/// A direction stops at the first state with averaged energy above
/// `energy_tol` or a reversed penalized triangle. States come back sorted by `c`.
pub fn continue_branch(
    spec: &LatticeSpec,
    k: usize,
    lambda: Mat2,
    psi: &[Vec2],
    step: f64,
    energy_tol: f64,
) -> Result<Vec<(Mat2, Vec<Vec2>)>> {
    let cell = Supercell::new(spec, k)?;
    if psi.len() != cell.num_nodes() {
        bail!(InvalidArgument, "field has {} nodes, supercell has {}", psi.len(), cell.num_nodes());
    }
    if !(step > 0.0 && step < 1.0) {
        bail!(InvalidArgument, "step must lie in (0, 1), got {step}");
    }
    let table = crate::energy::InstanceTable::new(&cell);
    let scale = 1.0 / cell.area();
    let rot = math::atan2(lambda.m10 - lambda.m01, lambda.m00 + lambda.m11);
    let c0 = math::hypot(lambda.m00 + lambda.m11, lambda.m10 - lambda.m01) * 0.5;
    let q = Mat2::rotation(-rot);
    let start: Vec<Vec2> = psi.iter().map(|p| q * *p).collect();
    let relax = |c: f64, from: &[Vec2]| -> Option<Vec<Vec2>> {
        let lam = Mat2::IDENTITY * c;
        let x0: Vec<f64> = from.iter().flat_map(|p| [p.x, p.y]).collect();
        let fg = |x: &[f64], g: &mut [f64]| {
            let ps: Vec<Vec2> = x.chunks(2).map(|v| Vec2::new(v[0], v[1])).collect();
            let mut gl = Mat2::ZERO;
            let mut gp = alloc::vec![Vec2::ZERO; ps.len()];
            let e = table.spring_energy_grad(lam, &ps, &mut gl, &mut gp);
            for (i, v) in gp.iter().enumerate() {
                g[2 * i] = v.x * scale;
                g[2 * i + 1] = v.y * scale;
            }
            e * scale
        };
        let opts = crate::optim::LbfgsOptions { max_iter: 3000, grad_tol: 1e-14, f_target: 1e-3 * energy_tol, ..Default::default() };
        let m = crate::optim::lbfgs(&x0, fg, opts);
        let ps: Vec<Vec2> = m.x.chunks(2).map(|v| Vec2::new(v[0], v[1])).collect();
        let ok = table.spring_energy(lam, &ps) * scale <= energy_tol && table.min_det(lam, &ps) > 0.0;
        ok.then_some(ps)
    };
    let Some(first) = relax(c0, &start) else {
        bail!(NoConvergence, "starting state is not a mechanism");
    };
    let mut out = alloc::vec![(c0, first.clone())];
    for dir in [-1.0, 1.0] {
        let mut prev = first.clone();
        let mut c = c0;
        loop {
            c += dir * step;
            if !(c > 0.0 && c < 1.0) {
                break;
            }
            match relax(c, &prev) {
                Some(ps) => {
                    out.push((c, ps.clone()));
                    prev = ps;
                }
                None => break,
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out.into_iter().map(|(c, p)| (Mat2::IDENTITY * c, p)).collect())
}

/// Nodal deformation of the `eps`-lattice near a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    pub epsilon: f64,
    pub field: NodalField,
    /// Spring energy before and after relaxation, over all nodes kept.
    pub initial_spring: f64,
    pub relaxed_spring: f64,
    /// Moves rejected because they would reverse a penalized triangle.
    pub rejected_moves: usize,
}

/// Springs and penalized triangles of the finite lattice on a node set.
struct Mesh {
    nodes: Vec<NodeRef>,
    springs: Vec<(usize, usize, f64, f64)>,
    triangles: Vec<[usize; 3]>,
    node_springs: Vec<Vec<usize>>,
    node_triangles: Vec<Vec<usize>>,
}

impl Mesh {
    fn new(spec: &LatticeSpec, nodes: Vec<NodeRef>, cells: &[[i64; 2]], eps: f64) -> Self {
        let index: BTreeMap<NodeRef, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut springs = Vec::new();
        let mut triangles = Vec::new();
        for &c in cells {
            for s in &spec.springs {
                if let (Some(&a), Some(&b)) = (index.get(&s.a.shifted(c)), index.get(&s.b.shifted(c))) {
                    springs.push((a, b, eps * s.rest_length, s.stiffness));
                }
            }
            for t in &spec.triangles {
                let ids = t.nodes.map(|n| index.get(&n.shifted(c)).copied());
                if let [Some(a), Some(b), Some(d)] = ids {
                    triangles.push([a, b, d]);
                }
            }
        }
        let mut node_springs = alloc::vec![Vec::new(); nodes.len()];
        for (i, s) in springs.iter().enumerate() {
            node_springs[s.0].push(i);
            node_springs[s.1].push(i);
        }
        let mut node_triangles = alloc::vec![Vec::new(); nodes.len()];
        for (i, t) in triangles.iter().enumerate() {
            for &n in t {
                node_triangles[n].push(i);
            }
        }
        Mesh { nodes, springs, triangles, node_springs, node_triangles }
    }

    fn spring_energy(&self, y: &[Vec2]) -> f64 {
        self.springs.iter().map(|&(a, b, r, k)| k * ((y[b] - y[a]).norm() - r) * ((y[b] - y[a]).norm() - r)).sum()
    }

    fn local_energy(&self, y: &[Vec2], i: usize, p: Vec2) -> f64 {
        self.node_springs[i]
            .iter()
            .map(|&s| {
                let (a, b, r, k) = self.springs[s];
                let o = if a == i { y[b] } else { y[a] };
                let d = (p - o).norm() - r;
                k * d * d
            })
            .sum()
    }

    fn preserves(&self, y: &[Vec2], i: usize, p: Vec2) -> bool {
        self.node_triangles[i].iter().all(|&t| {
            let q = self.triangles[t].map(|n| if n == i { p } else { y[n] });
            (q[1] - q[0]).cross(q[2] - q[0]) > 0.0
        })
    }

    /// One Gauss-Newton step per node; returns the number of rejected moves.
    fn sweep(&self, y: &mut [Vec2], free: &[bool]) -> usize {
        let mut rejected = 0;
        for i in 0..y.len() {
            if !free[i] {
                continue;
            }
            let mut g = Vec2::ZERO;
            let mut h = Mat2::ZERO;
            for &s in &self.node_springs[i] {
                let (a, b, r, k) = self.springs[s];
                let o = if a == i { y[b] } else { y[a] };
                let d = y[i] - o;
                let len = d.norm();
                if len < 1e-12 {
                    continue;
                }
                let u = d * (1.0 / len);
                g = g + u * (2.0 * k * (len - r));
                h = h + Mat2::new(u.x * u.x, u.x * u.y, u.y * u.x, u.y * u.y) * (2.0 * k);
            }
            let tr = h.trace();
            if tr <= 0.0 {
                continue;
            }
            let h = h + Mat2::IDENTITY * (1e-9 * tr);
            let Some(inv) = h.inverse() else { continue };
            let step = inv * g;
            let e0 = self.local_energy(y, i, y[i]);
            let mut t = 1.0;
            for _ in 0..8 {
                let p = y[i] - step * t;
                if self.local_energy(y, i, p) < e0 {
                    if self.preserves(y, i, p) {
                        y[i] = p;
                    } else {
                        rejected += 1;
                    }
                    break;
                }
                t *= 0.5;
            }
        }
        rejected
    }
}

/// Node set of the finite lattice covering `omega` with a two-cell margin,
/// and the cells whose springs are modelled.
fn lattice_patch(spec: &LatticeSpec, omega: &Polygon, eps: f64) -> (Vec<NodeRef>, Vec<[i64; 2]>) {
    let (lo, hi) = omega.bounds();
    let margin = 2.0 * eps * (spec.v1.norm() + spec.v2.norm());
    let (lo, hi) = (lo - Vec2::new(margin, margin), hi + Vec2::new(margin, margin));
    let inv = spec.basis().inverse().expect("validated basis");
    let mut range = [[i64::MAX, i64::MIN]; 2];
    for c in [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)] {
        let l = inv * (c * (1.0 / eps) - spec.cell_origin);
        for (r, v) in range.iter_mut().zip([l.x, l.y]) {
            r[0] = r[0].min(math::floor(v) as i64 - 1);
            r[1] = r[1].max(math::floor(v) as i64 + 2);
        }
    }
    let inside = |p: Vec2| p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
    let mut nodes = Vec::new();
    let mut cells = Vec::new();
    for i in range[0][0]..=range[0][1] {
        for j in range[1][0]..=range[1][1] {
            let mut any = false;
            for b in 0..spec.num_basic() {
                let n = NodeRef::new(b, i, j);
                if inside(scaled_position(spec, n, eps)) {
                    nodes.push(n);
                    any = true;
                }
            }
            if any {
                cells.push([i, j]);
            }
        }
    }
    nodes.sort();
    (nodes, cells)
}

/// Modulated mechanism tracking `target` on the `eps`-lattice, relaxed by
/// [`RELAX_SWEEPS`] local sweeps.
pub fn modulate(spec: &LatticeSpec, table: &StateTable<'_>, target: &ConformalTarget, eps: f64) -> Result<Modulation> {
    modulate_with(spec, table, target, eps, RELAX_SWEEPS)
}

/// As [`modulate`] with an explicit sweep budget.
pub fn modulate_with(
    spec: &LatticeSpec,
    table: &StateTable<'_>,
    target: &ConformalTarget,
    eps: f64,
    sweeps: usize,
) -> Result<Modulation> {
    if !(eps > 0.0 && eps.is_finite()) {
        bail!(InvalidArgument, "scale must be positive, got {eps}");
    }
    if cells_inside(spec, &target.domain, eps).is_empty() {
        bail!(Precondition, "no cell of size {eps} fits inside the domain");
    }
    let (nodes, cells) = lattice_patch(spec, &target.domain, eps);
    let mesh = Mesh::new(spec, nodes, &cells, eps);
    let (lo, hi) = table.range();
    let k = table.k();
    let cell = Supercell { spec, k };
    let n = mesh.nodes.len();

    // Rotation field arg f', unwrapped along a breadth-first spanning tree.
    let xs: Vec<Vec2> = mesh.nodes.iter().map(|&m| scaled_position(spec, m, eps)).collect();
    let evals: Vec<(Vec2, Complex64)> = xs.iter().map(|&x| target.eval(x)).collect();
    let mut phase = alloc::vec![f64::NAN; n];
    let mut adj = alloc::vec![Vec::new(); n];
    for &(a, b, _, _) in &mesh.springs {
        adj[a].push(b);
        adj[b].push(a);
    }
    for root in 0..n {
        if !phase[root].is_nan() {
            continue;
        }
        phase[root] = evals[root].1.arg();
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if phase[j].is_nan() {
                    let raw = evals[j].1.arg();
                    phase[j] = raw + TAU * math::round((phase[i] - raw) / TAU);
                    queue.push_back(j);
                }
            }
        }
    }

    let mut y = Vec::with_capacity(n);
    for (i, &m) in mesh.nodes.iter().enumerate() {
        let (fx, d) = evals[i];
        let c = d.norm();
        let x = xs[i];
        let cc = if c >= lo && c <= hi + 1e-12 {
            c
        } else if target.domain.contains(x) || target.domain.on_boundary(x) {
            bail!(OutOfRange, "|f'| = {c} at ({}, {}) is outside the reachable range [{lo}, {hi}]", x.x, x.y);
        } else {
            c.clamp(lo, hi)
        };
        let psi = table.state(cc)?;
        let p = psi[cell.index(NodeRef::new(m.basic, 0, 0), m.offset)];
        y.push(fx + Mat2::rotation(phase[i]) * p * eps);
    }
    let initial_spring = mesh.spring_energy(&y);
    let mut rejected_moves = 0;
    // Nodes outside the open domain keep the modulated state as boundary data.
    let free: Vec<bool> = xs.iter().map(|&x| target.domain.contains(x)).collect();
    for _ in 0..sweeps {
        rejected_moves += mesh.sweep(&mut y, &free);
    }
    let relaxed_spring = mesh.spring_energy(&y);
    let field = mesh.nodes.iter().copied().zip(y).collect();
    Ok(Modulation { epsilon: eps, field, initial_spring, relaxed_spring, rejected_moves })
}

/// Rotation angle of each penalized triangle of the modulated lattice,
/// relative to its reference shape, as `(cell, triangle, angle)`.
pub fn triangle_rotations(spec: &LatticeSpec, m: &Modulation) -> Vec<([i64; 2], usize, f64)> {
    let mut out = Vec::new();
    let mut cells: Vec<[i64; 2]> = m.field.keys().map(|n| n.offset).collect();
    cells.dedup();
    cells.sort();
    cells.dedup();
    for c in cells {
        for (ti, t) in spec.triangles.iter().enumerate() {
            let Some(u) = t.nodes.iter().map(|n| m.field.get(&n.shifted(c)).copied()).collect::<Option<Vec<_>>>() else {
                continue;
            };
            let x = t.nodes.map(|n| scaled_position(spec, n.shifted(c), m.epsilon));
            let g = crate::lattice::triangle_gradient(x, [u[0], u[1], u[2]]);
            out.push((c, ti, math::atan2(g.m10 - g.m01, g.m00 + g.m11)));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingRow {
    pub epsilon: f64,
    /// Domain energy divided by `|omega|`.
    pub energy_per_area: f64,
    pub max_cell_energy: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Slope of `log energy` against `log eps`; `None` when some energy is
    /// at most `1e-10` or fewer than two rows exist.
    pub exponent: Option<f64>,
    /// Steps where the energy grew by more than five percent.
    pub monotonicity_violations: usize,
}

/// Energy of each modulation in `mods` on the target domain.
pub fn scaling_report(spec: &LatticeSpec, target: &ConformalTarget, mods: &[Modulation], eta: f64) -> Result<ScalingReport> {
    check_eta(eta)?;
    let area = target.domain.area();
    let mut rows = Vec::with_capacity(mods.len());
    for m in mods {
        let d = domain_energy(spec, &m.field, &target.domain, eta, m.epsilon)?;
        let max_cell = d.per_cell.iter().map(|c| c.1).fold(0.0, f64::max);
        rows.push(ScalingRow { epsilon: m.epsilon, energy_per_area: d.total / area, max_cell_energy: max_cell, cells: d.per_cell.len() });
    }
    let monotonicity_violations = rows.windows(2).filter(|w| w[1].energy_per_area > 1.05 * w[0].energy_per_area).count();
    let exponent = if rows.len() >= 2 && rows.iter().all(|r| r.energy_per_area > 1e-10) {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (math::ln(r.epsilon), math::ln(r.energy_per_area))).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            Some(sxy / sxx)
        } else {
            None
        }
    } else {
        None
    };
    Ok(ScalingReport { rows, exponent, monotonicity_violations })
}

/// Modulates and measures at every scale in `epsilons`.
pub fn soft_mode_report(
    spec: &LatticeSpec,
    table: &StateTable<'_>,
    target: &ConformalTarget,
    epsilons: &[f64],
    eta: f64,
) -> Result<(Vec<Modulation>, ScalingReport)> {
    let mods = epsilons.iter().map(|&e| modulate(spec, table, target, e)).collect::<Result<Vec<_>>>()?;
    let report = scaling_report(spec, target, &mods, eta)?;
    Ok((mods, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakLimitRow {
    pub epsilon: f64,
    /// Root mean square of `u - f` at the probes, times `sqrt(|omega|)`.
    pub l2_distance: f64,
    /// Root mean square Cauchy-Riemann residual of the box-averaged gradient.
    pub cr_residual: f64,
    /// Root mean square of `|G - f'|` for the box-averaged gradient `G`.
    pub gradient_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakLimitReport {
    pub rows: Vec<WeakLimitRow>,
    pub l2_decreasing: bool,
    pub cr_decreasing: bool,
}

/// Probe points: a `5 x 5` grid over the middle half of the domain's box.
pub fn probe_grid(omega: &Polygon) -> Vec<Vec2> {
    let (lo, hi) = omega.bounds();
    let mut out = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let s = 0.25 + 0.5 * i as f64 / 4.0;
            let t = 0.25 + 0.5 * j as f64 / 4.0;
            let p = Vec2::new(lo.x + s * (hi.x - lo.x), lo.y + t * (hi.y - lo.y));
            if omega.contains(p) {
                out.push(p);
            }
        }
    }
    out
}

fn affine_fit(pts: &[(Vec2, Vec2)]) -> Option<Mat2> {
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().fold(Vec2::ZERO, |a, q| a + q.0) * (1.0 / k);
    let my = pts.iter().fold(Vec2::ZERO, |a, q| a + q.1) * (1.0 / k);
    let mut sxx = Mat2::ZERO;
    let mut syx = Mat2::ZERO;
    for (x, y) in pts {
        let dx = *x - mx;
        let dy = *y - my;
        sxx = sxx + Mat2::new(dx.x * dx.x, dx.x * dx.y, dx.y * dx.x, dx.y * dx.y);
        syx = syx + Mat2::new(dy.x * dx.x, dy.x * dx.y, dy.y * dx.x, dy.y * dx.y);
    }
    if sxx.det() <= 1e-12 * sxx.trace() * sxx.trace() {
        return None;
    }
    Some(syx * sxx.inverse()?)
}

/// Mesoscale gradient at `p`: least-squares affine fits of each sublattice
/// of basic nodes over the box of half-width `h`, averaged. Fitting one
/// sublattice at a time removes the periodic part of the field. The box
/// grows until every sublattice fit is well posed.
fn box_gradient(spec: &LatticeSpec, m: &Modulation, p: Vec2, mut h: f64) -> Option<Mat2> {
    for _ in 0..8 {
        let mut sub: Vec<Vec<(Vec2, Vec2)>> = alloc::vec![Vec::new(); spec.num_basic()];
        for (n, y) in &m.field {
            let x = scaled_position(spec, *n, m.epsilon) - p;
            if x.x.abs() <= h && x.y.abs() <= h {
                sub[n.basic].push((x, *y));
            }
        }
        let fits: Option<Vec<Mat2>> = sub.iter().map(|s| affine_fit(s)).collect();
        if let Some(f) = fits {
            return Some(f.iter().fold(Mat2::ZERO, |a, g| a + *g) * (1.0 / f.len() as f64));
        }
        h *= 1.25;
    }
    None
}

/// Piecewise-linear interpolation of the modulation at `p`.
fn interpolate(spec: &LatticeSpec, m: &Modulation, p: Vec2) -> Result<Vec2> {
    let (nodes, w) = spec.locate(p * (1.0 / m.epsilon))?;
    let mut out = Vec2::ZERO;
    for (n, w) in nodes.iter().zip(w) {
        let Some(y) = m.field.get(n) else {
            bail!(Precondition, "probe ({}, {}) lies outside the modulated patch", p.x, p.y);
        };
        out = out + *y * w;
    }
    Ok(out)
}

/// Distance to the target and Cauchy-Riemann residual of the
/// mesoscale gradient, per modulation.
pub fn weak_limit_check(spec: &LatticeSpec, mods: &[Modulation], target: &ConformalTarget) -> Result<WeakLimitReport> {
    let probes = probe_grid(&target.domain);
    if probes.is_empty() {
        bail!(Precondition, "domain admits no probe points");
    }
    let area = target.domain.area();
    let mut rows = Vec::with_capacity(mods.len());
    for m in mods {
        let h = 0.5 * math::sqrt(m.epsilon);
        let (mut l2, mut cr, mut ge) = (0.0, 0.0, 0.0);
        for &p in &probes {
            let (fp, d) = target.eval(p);
            let u = interpolate(spec, m, p)?;
            l2 += (u - fp).norm_sq();
            let Some(g) = box_gradient(spec, m, p, h) else {
                bail!(Precondition, "mesoscale box at ({}, {}) holds too few nodes", p.x, p.y);
            };
            let r1 = g.m00 - g.m11;
            let r2 = g.m10 + g.m01;
            cr += r1 * r1 + r2 * r2;
            ge += (g - Mat2::new(d.re, -d.im, d.im, d.re)).frobenius_sq();
        }
        let np = probes.len() as f64;
        rows.push(WeakLimitRow {
            epsilon: m.epsilon,
            l2_distance: math::sqrt(l2 / np * area),
            cr_residual: math::sqrt(cr / np),
            gradient_error: math::sqrt(ge / np),
        });
    }
    let dec = |f: fn(&WeakLimitRow) -> f64| rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]));
    let l2_decreasing = dec(|r| r.l2_distance);
    let cr_decreasing = dec(|r| r.cr_residual);
    Ok(WeakLimitReport { rows, l2_decreasing, cr_decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_kagome, build_rotating_squares};

    #[test]
    fn rational_derivative() {
        let f = Rational { num: alloc::vec![[1.0, 0.0], [0.0, 1.0]], den: alloc::vec![[2.0, 0.0], [1.0, 0.0]] };
        let z = Complex64::new(0.3, -0.4);
        let h = 1e-6;
        let fd = (f.eval(z + h).0 - f.eval(z - h).0) / (2.0 * h);
        assert!((fd - f.eval(z).1).norm() < 1e-8);
    }

    #[test]
    fn quadratic_target_is_compressive() {
        let t = ConformalTarget::quadratic();
        assert!(t.max_derivative < 0.8 && (t.min_derivative - 0.25).abs() < 1e-12);
        let bad = Rational::polynomial(alloc::vec![[0.0, 0.0], [1.2, 0.0]]);
        assert!(ConformalTarget::new(bad, Polygon::rectangle(0.0, 1.0, 0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn spline_inverts_kagome_compression() {
        let spec = build_kagome();
        let t = StateTable::twist(&spec).unwrap();
        let StateTable::Twist { inverse, .. } = &t else { unreachable!() };
        for c in [0.4, 0.6, 0.85, 0.99] {
            assert!((inverse.eval(c) - math::acos(c)).abs() < 1e-6);
        }
    }

    #[test]
    fn continued_twist_stays_a_mechanism() {
        let spec = build_kagome();
        let tw = crate::mechanisms::twist_mechanism(&spec, 0.4).unwrap();
        let states = continue_branch(&spec, 1, tw.lambda, &tw.psi, 0.05, 1e-14).unwrap();
        assert!(states.len() >= 10);
        assert!(states.windows(2).all(|w| w[0].0.m00 < w[1].0.m00));
        for (lam, psi) in &states {
            assert_eq!(lam.m01, 0.0);
            let def = crate::lattice::PeriodicDeformation::new(Supercell::new(&spec, 1).unwrap(), *lam, psi.clone()).unwrap();
            let cert = crate::mechanisms::certify(&def, 0.1).unwrap();
            assert!(cert.averaged_energy <= 1e-14 && cert.min_det > 0.0, "{cert:?}");
        }
        assert!(continue_branch(&spec, 1, tw.lambda, &tw.psi, 1.5, 1e-14).is_err());
    }

    #[test]
    fn uniform_target_is_energy_free() {
        for spec in [build_kagome(), build_rotating_squares()] {
            let table = StateTable::twist(&spec).unwrap();
            let target = ConformalTarget::uniform(0.8, 0.3).unwrap();
            let m = modulate_with(&spec, &table, &target, 0.125, 5).unwrap();
            assert!(m.initial_spring < 1e-20, "{}", m.initial_spring);
            let d = domain_energy(&spec, &m.field, &target.domain, 0.1, 0.125).unwrap();
            assert!(d.total < 1e-20 && !d.per_cell.is_empty());
        }
    }

    #[test]
    fn identity_target_gives_identity() {
        let spec = build_kagome();
        let table = StateTable::twist(&spec).unwrap();
        let m = modulate_with(&spec, &table, &ConformalTarget::identity(), 0.25, 2).unwrap();
        for (n, y) in &m.field {
            assert!((*y - scaled_position(&spec, *n, 0.25)).norm() < 1e-12);
        }
    }

    #[test]
    fn relaxation_lowers_energy_and_keeps_orientation() {
        let spec = build_kagome();
        let table = StateTable::twist(&spec).unwrap();
        let target = ConformalTarget::quadratic();
        let m = modulate_with(&spec, &table, &target, 0.125, 50).unwrap();
        assert!(m.relaxed_spring < m.initial_spring);
        let d = domain_energy(&spec, &m.field, &target.domain, 1e-6, 0.125).unwrap();
        assert!(d.total < 1.0, "a penalty was charged: {}", d.total);
    }

    #[test]
    fn anisotropic_corruption_is_detected() {
        let spec = build_kagome();
        let table = StateTable::twist(&spec).unwrap();
        let target = ConformalTarget::uniform(0.8, 0.0).unwrap();
        let mut m = modulate_with(&spec, &table, &target, 0.0625, 0).unwrap();
        let good = weak_limit_check(&spec, core::slice::from_ref(&m), &target).unwrap();
        assert!(good.rows[0].cr_residual < 0.1, "{:?}", good.rows[0]);
        let shear = Mat2::diag(1.0, 0.5);
        for (n, y) in m.field.iter_mut() {
            let x = scaled_position(&spec, *n, m.epsilon);
            *y = *y + (shear - Mat2::IDENTITY) * x;
        }
        let bad = weak_limit_check(&spec, core::slice::from_ref(&m), &target).unwrap();
        assert!(bad.rows[0].cr_residual > 0.3, "{:?}", bad.rows[0]);
    }

    #[test]
    fn out_of_range_derivative_is_reported() {
        let spec = build_rotating_squares();
        let table = StateTable::twist(&spec).unwrap();
        let (lo, _) = table.range();
        if lo > 0.05 {
            let target = ConformalTarget::uniform(lo * 0.5, 0.0).unwrap();
            assert!(modulate_with(&spec, &table, &target, 0.25, 0).is_err());
        }
        let t = StateTable::tabulated(1, alloc::vec![(Mat2::IDENTITY * 0.7, alloc::vec![Vec2::ZERO; 3]), (Mat2::IDENTITY, alloc::vec![Vec2::ZERO; 3])]).unwrap();
        assert!(t.state(0.5).is_err());
        assert!(t.state(0.85).is_ok());
    }

    #[test]
    fn phases_do_not_jump() {
        // arg f' crosses the branch cut of atan2 along x = 0; the rotated
        // copy -f has no cut and must give the same energy.
        let spec = build_kagome();
        let table = StateTable::twist(&spec).unwrap();
        let dom = Polygon::rectangle(-0.5, 0.5, 0.0, 1.0).unwrap();
        let f = Rational::polynomial(alloc::vec![[0.0, 0.0], [-0.7, 0.0], [0.0, 0.1]]);
        let g = Rational::polynomial(alloc::vec![[0.0, 0.0], [0.7, 0.0], [0.0, -0.1]]);
        let tf = ConformalTarget::new(f, dom.clone()).unwrap();
        let tg = ConformalTarget::new(g, dom).unwrap();
        let a = modulate_with(&spec, &table, &tf, 0.125, 0).unwrap();
        let b = modulate_with(&spec, &table, &tg, 0.125, 0).unwrap();
        assert!(a.initial_spring < 0.1);
        assert!((a.initial_spring - b.initial_spring).abs() < 1e-9 * b.initial_spring.max(1e-20));
    }
}
