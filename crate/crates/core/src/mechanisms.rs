//! Zero-energy deformations: sign-alternating twists of rigid units,
//! mechanism search on supercells, and the Kagome domain wall.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{self, pack, scatter, unpack, InstanceTable};
use crate::error::{bail, Error, Result};
use crate::geometry::principal_stretches;
use crate::lattice::{build_kagome, LatticeSpec, NodalField, NodeRef, PeriodicDeformation, Supercell};
use crate::linalg::{Mat2, Vec2};
use crate::math::{self, FRAC_PI_3, PI, SQRT_3};
use crate::optim::{self, LbfgsOptions, LmOptions};

/// Closure tolerance of constructed mechanisms.
pub const CLOSURE_TOL: f64 = 1e-9;

/// A rigid unit of a supercell: penalized triangles glued along edges.
#[derive(Debug, Clone)]
struct Body {
    /// Flat node index and reference position of each node.
    nodes: Vec<(usize, Vec2)>,
}

/// Groups penalized triangles of a `k` supercell into rigid units.
fn rigid_bodies(spec: &LatticeSpec, k: usize) -> Result<Vec<Body>> {
    let cell = Supercell::new(spec, k)?;
    let nt = spec.triangles.len();
    // Base triangles t, u and shift d such that u + d shares an edge with t.
    let mut glue = Vec::new();
    for (ti, t) in spec.triangles.iter().enumerate() {
        for (ui, u) in spec.triangles.iter().enumerate() {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if ti == ui && dx == 0 && dy == 0 {
                        continue;
                    }
                    let shared = u.nodes.iter().filter(|n| t.nodes.contains(&n.shifted([dx, dy]))).count();
                    if shared >= 2 {
                        glue.push((ti, ui, [dx, dy]));
                    }
                }
            }
        }
    }
    let ki = k as i64;
    let inst = |t: usize, c: [i64; 2]| (t * k + c[0].rem_euclid(ki) as usize) * k + c[1].rem_euclid(ki) as usize;
    let total = nt * k * k;
    let mut lifted: Vec<Option<[i64; 2]>> = alloc::vec![None; total];
    let mut bodies = Vec::new();
    for start in 0..total {
        if lifted[start].is_some() {
            continue;
        }
        let t0 = start / (k * k);
        let c0 = [((start / k) % k) as i64, (start % k) as i64];
        lifted[start] = Some(c0);
        let mut queue = VecDeque::from([(t0, c0)]);
        let mut nodes: BTreeSet<(usize, [i64; 2])> = BTreeSet::new();
        let mut list = Vec::new();
        while let Some((t, c)) = queue.pop_front() {
            for n in &spec.triangles[t].nodes {
                let lifted_node = n.shifted(c);
                if nodes.insert((n.basic, lifted_node.offset)) {
                    list.push((cell.index(*n, c), spec.position(lifted_node)));
                }
            }
            for &(a, b, d) in &glue {
                if a != t {
                    continue;
                }
                // u + d touches t, so the neighbour instance sits at c - d.
                let cu = [c[0] - d[0], c[1] - d[1]];
                let id = inst(b, cu);
                match lifted[id] {
                    None => {
                        lifted[id] = Some(cu);
                        queue.push_back((b, cu));
                    }
                    Some(prev) if prev != cu => {
                        bail!(Precondition, "rigid unit wraps around the {k}x{k} supercell");
                    }
                    _ => {}
                }
            }
        }
        // Distinct lifts of one flat index would tie the unit to its own image.
        let mut seen = BTreeMap::new();
        for &(idx, x) in &list {
            if let Some(&y) = seen.get(&idx) {
                let y: Vec2 = y;
                if (y - x).norm() > 1e-9 {
                    bail!(Precondition, "rigid unit meets its own periodic image at k = {k}");
                }
            }
            seen.insert(idx, x);
        }
        bodies.push(Body { nodes: list });
    }
    Ok(bodies)
}

/// Two-colouring of units that share a node, or `None` if impossible.
fn alternate(bodies: &[Body]) -> Option<Vec<i8>> {
    let mut owners: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (bi, b) in bodies.iter().enumerate() {
        let mut idx: Vec<usize> = b.nodes.iter().map(|n| n.0).collect();
        idx.sort_unstable();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        for i in idx {
            owners.entry(i).or_default().push(bi);
        }
    }
    let mut color = alloc::vec![0i8; bodies.len()];
    for start in 0..bodies.len() {
        if color[start] != 0 {
            continue;
        }
        color[start] = 1;
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            for n in &bodies[b].nodes {
                for &o in &owners[&n.0] {
                    if o == b {
                        continue;
                    }
                    if color[o] == 0 {
                        color[o] = -color[b];
                        queue.push_back(o);
                    } else if color[o] == color[b] {
                        return None;
                    }
                }
            }
        }
    }
    Some(color)
}

/// A uniform twist: unit `b` turns by `sign_b * theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Twist {
    pub theta: f64,
    pub k: usize,
    pub lambda: Mat2,
    pub psi: Vec<Vec2>,
    /// `c` in `lambda = c R`.
    pub compression: f64,
    /// Angle of `R` in `lambda = c R`.
    pub rotation: f64,
    /// Residual of the closure system.
    pub closure_residual: f64,
}

impl Twist {
    pub fn deformation<'a>(&self, spec: &'a LatticeSpec) -> PeriodicDeformation<'a> {
        PeriodicDeformation { cell: Supercell { spec, k: self.k }, lambda: self.lambda, psi: self.psi.clone() }
    }
}

/// Diagnostics proving that a deformation is a mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Certificate {
    pub averaged_energy: f64,
    pub max_spring_residual: f64,
    pub min_det: f64,
    /// `l1 - l2` of `lambda`.
    pub anisotropy: f64,
}

/// Exact-penalty energy, largest spring length error and smallest triangle
/// determinant of a periodic deformation.
pub fn certify(def: &PeriodicDeformation<'_>, eta: f64) -> Result<Certificate> {
    let table = InstanceTable::new(&def.cell);
    let mut worst: f64 = 0.0;
    for s in &table.springs {
        let d = def.lambda * (s.xb - s.xa) + def.psi[s.ib] - def.psi[s.ia];
        worst = worst.max((d.norm() - s.rest).abs());
    }
    let st = principal_stretches(def.lambda);
    Ok(Certificate {
        averaged_energy: energy::averaged_energy(def, eta)?,
        max_spring_residual: worst,
        min_det: table.min_det(def.lambda, &def.psi),
        anisotropy: st.l1 - st.l2,
    })
}

/// The one-parameter family of sign-alternating twists of a lattice.
#[derive(Debug, Clone)]
pub struct TwistFamily<'a> {
    pub spec: &'a LatticeSpec,
    /// Supercell on which the alternation is periodic.
    pub k: usize,
    bodies: Vec<Body>,
    signs: Vec<i8>,
    /// Admissible angles are the open interval `(theta_min, theta_max)`.
    pub theta_min: f64,
    pub theta_max: f64,
    /// First angle `> 0` at which a hole triangle of the triangulation flips.
    pub contact: Option<f64>,
}

const SCAN_STEPS: usize = 720;

impl<'a> TwistFamily<'a> {
    /// Finds rigid units, alternates their rotation signs on the smallest
    /// supercell that allows it, and scans the admissible range: the interval
    /// around `0` on which `c(theta)` decreases with `|theta|`.
    pub fn new(spec: &'a LatticeSpec) -> Result<Self> {
        let mut found = None;
        for k in 1..=2 {
            let bodies = rigid_bodies(spec, k);
            if let Ok(bodies) = bodies {
                if let Some(signs) = alternate(&bodies) {
                    found = Some((k, bodies, signs));
                    break;
                }
            }
        }
        let Some((k, bodies, signs)) = found else {
            bail!(Precondition, "rigid units of '{}' admit no alternating twist", spec.name);
        };
        let mut fam = TwistFamily { spec, k, bodies, signs, theta_min: 0.0, theta_max: 0.0, contact: None };
        let (hi, contact_hi) = fam.scan(1.0)?;
        let (lo, _) = fam.scan(-1.0)?;
        fam.theta_max = hi;
        fam.theta_min = lo;
        fam.contact = contact_hi;
        Ok(fam)
    }

    fn scan(&self, dir: f64) -> Result<(f64, Option<f64>)> {
        let h = PI / SCAN_STEPS as f64;
        let mut prev = 1.0;
        let mut contact = None;
        for i in 1..=SCAN_STEPS {
            let th = dir * i as f64 * h;
            let tw = match self.solve(th) {
                Ok(t) => t,
                Err(_) => return Ok((dir * (i - 1) as f64 * h, contact)),
            };
            if contact.is_none() && dir > 0.0 && self.hole_flipped(&tw) {
                contact = Some(th);
            }
            if tw.compression >= prev || tw.compression <= 1e-12 {
                // Minimum of c lies in the last two steps; refine it.
                let (mut a, mut b) = ((i as f64 - 2.0).max(0.0) * h, i as f64 * h);
                let c = |t: f64| self.solve(dir * t).map(|t| t.compression).unwrap_or(f64::INFINITY);
                let g = 0.5 * (math::sqrt(5.0) - 1.0);
                for _ in 0..80 {
                    let (x1, x2) = (b - g * (b - a), a + g * (b - a));
                    if c(x1) < c(x2) {
                        b = x2;
                    } else {
                        a = x1;
                    }
                }
                return Ok((dir * 0.5 * (a + b), contact));
            }
            prev = tw.compression;
        }
        Ok((dir * PI, contact))
    }

    fn hole_flipped(&self, tw: &Twist) -> bool {
        let def = tw.deformation(self.spec);
        def.gradient_field().iter().any(|(_, g)| g.det() <= 0.0)
    }

    /// Solves the closure system at `theta` without a range check.
    pub fn solve(&self, theta: f64) -> Result<Twist> {
        let cell = Supercell::new(self.spec, self.k)?;
        let n = cell.num_nodes();
        let nb = self.bodies.len();
        let cols = 4 + 2 * n + 2 * nb;
        let rows: usize = self.bodies.iter().map(|b| 2 * b.nodes.len()).sum();
        let mut a = alloc::vec![0.0; rows * cols];
        let mut rhs = alloc::vec![0.0; rows];
        let mut r = 0;
        for (bi, b) in self.bodies.iter().enumerate() {
            let rot = Mat2::rotation(self.signs[bi] as f64 * theta);
            for &(idx, x) in &b.nodes {
                let y = rot * x;
                // lambda x + psi[idx] - t_b = R_b x
                a[r * cols] = x.x;
                a[r * cols + 1] = x.y;
                a[r * cols + 4 + 2 * idx] = 1.0;
                a[r * cols + 4 + 2 * n + 2 * bi] = -1.0;
                rhs[r] = y.x;
                r += 1;
                a[r * cols + 2] = x.x;
                a[r * cols + 3] = x.y;
                a[r * cols + 5 + 2 * idx] = 1.0;
                a[r * cols + 5 + 2 * n + 2 * bi] = -1.0;
                rhs[r] = y.y;
                r += 1;
            }
        }
        let (sol, _) = optim::lstsq(&a, &rhs, rows, cols);
        let mut residual: f64 = 0.0;
        for i in 0..rows {
            let v: f64 = (0..cols).map(|j| a[i * cols + j] * sol[j]).sum();
            residual = residual.max((v - rhs[i]).abs());
        }
        if !(residual <= CLOSURE_TOL) {
            return Err(Error::ClosureFailed { residual, tolerance: CLOSURE_TOL });
        }
        let lambda = Mat2::new(sol[0], sol[1], sol[2], sol[3]);
        let mut psi: Vec<Vec2> = (0..n).map(|i| Vec2::new(sol[4 + 2 * i], sol[5 + 2 * i])).collect();
        let mean = psi.iter().fold(Vec2::ZERO, |s, p| s + *p) * (1.0 / n as f64);
        psi.iter_mut().for_each(|p| *p -= mean);
        let st = principal_stretches(lambda);
        let rotation = math::atan2(lambda.m10 - lambda.m01, lambda.m00 + lambda.m11);
        Ok(Twist {
            theta,
            k: self.k,
            lambda,
            psi,
            compression: 0.5 * (st.l1 + st.l2),
            rotation,
            closure_residual: residual,
        })
    }

    /// Twist at `theta`, rejected outside the admissible range.
    pub fn at(&self, theta: f64) -> Result<Twist> {
        if !(theta > self.theta_min && theta < self.theta_max) {
            bail!(
                OutOfRange,
                "twist angle {theta} outside the admissible range ({}, {})",
                self.theta_min,
                self.theta_max
            );
        }
        self.solve(theta)
    }

    /// Smallest compression reached on `[0, theta_max)`.
    pub fn min_compression(&self) -> f64 {
        self.solve(self.theta_max).map(|t| t.compression).unwrap_or(0.0)
    }

    /// `(theta, c(theta))` on `n` equally spaced angles in `[0, theta_max)`.
    pub fn compression_table(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let th = self.theta_max * i as f64 / n as f64;
            out.push((th, self.solve(th)?.compression));
        }
        Ok(out)
    }

    /// Angle in `[0, theta_max)` with `c(theta) = c`, by bisection on the
    /// monotone branch.
    pub fn theta_for(&self, c: f64) -> Result<f64> {
        let cmin = self.min_compression();
        if !(c > cmin && c <= 1.0 + 1e-12) {
            bail!(OutOfRange, "compression {c} outside the reachable range ({cmin}, 1]");
        }
        let (mut a, mut b) = (0.0, self.theta_max);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if self.solve(m)?.compression > c {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Sign-alternating twist by `theta` of the rigid units of `spec`.
pub fn twist_mechanism(spec: &LatticeSpec, theta: f64) -> Result<Twist> {
    TwistFamily::new(spec)?.at(theta)
}

/// Options for [`mechanism_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchOptions {
    pub k: usize,
    pub seeds: usize,
    /// Half-width of the uniform perturbation of `lambda` and `psi`.
    pub perturbation: f64,
    pub seed: u64,
    /// Averaged spring energy below which a minimiser counts as a mechanism.
    pub energy_tol: f64,
    /// Isotropy tolerance on `l1 - l2`.
    pub isotropy_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { k: 2, seeds: 32, perturbation: 0.2, seed: 0, energy_tol: 1e-12, isotropy_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismHit {
    pub lambda: Mat2,
    pub psi: Vec<Vec2>,
    /// Averaged spring energy.
    pub energy: f64,
    pub l1: f64,
    pub l2: f64,
    pub min_det: f64,
}

impl MechanismHit {
    pub fn is_isotropic(&self, tol: f64) -> bool {
        self.l1 - self.l2 <= tol
    }
}

/// Rank data of the linearised spring-length map at the reference state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelRank {
    pub unknowns: usize,
    pub constraints: usize,
    pub kernel: usize,
    /// Translations and the infinitesimal rotation.
    pub trivial: usize,
    pub nontrivial: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub hits: Vec<MechanismHit>,
    /// Minimisers whose energy stayed above the tolerance.
    pub rejected: usize,
    pub kernel: KernelRank,
}

fn spring_residuals(table: &InstanceTable, x: &[f64], r: &mut [f64], jac: &mut [f64]) {
    let n = x.len();
    let (lambda, psi) = unpack(x);
    jac.iter_mut().for_each(|v| *v = 0.0);
    for (row, s) in table.springs.iter().enumerate() {
        let dx = s.xb - s.xa;
        let d = lambda * dx + psi[s.ib] - psi[s.ia];
        let len = d.norm();
        let w = math::sqrt(s.stiffness);
        r[row] = w * (len - s.rest);
        if len > 0.0 {
            let g = d * (w / len);
            let j = &mut jac[row * n..(row + 1) * n];
            j[0] += g.x * dx.x;
            j[1] += g.x * dx.y;
            j[2] += g.y * dx.x;
            j[3] += g.y * dx.y;
            j[4 + 2 * s.ib] += g.x;
            j[5 + 2 * s.ib] += g.y;
            j[4 + 2 * s.ia] -= g.x;
            j[5 + 2 * s.ia] -= g.y;
        }
    }
}

/// Kernel dimension of the spring-length Jacobian at the identity.
pub fn kernel_rank(spec: &LatticeSpec, k: usize, tol: f64) -> Result<KernelRank> {
    let cell = Supercell::new(spec, k)?;
    let table = InstanceTable::new(&cell);
    let x = pack(Mat2::IDENTITY, &alloc::vec![Vec2::ZERO; cell.num_nodes()]);
    let (m, n) = (table.springs.len(), x.len());
    let mut r = alloc::vec![0.0; m];
    let mut jac = alloc::vec![0.0; m * n];
    spring_residuals(&table, &x, &mut r, &mut jac);
    let kernel = n - optim::numerical_rank(&jac, m, n, tol);
    Ok(KernelRank { unknowns: n, constraints: m, kernel, trivial: 3, nontrivial: kernel.saturating_sub(3) })
}

/// Minimises spring energy over `(lambda, psi)` from random seeds with a log
/// barrier on triangle determinants, then polishes zero-residual solutions
/// by Levenberg-Marquardt. Minimisers below `energy_tol` are mechanisms.
pub fn mechanism_search(spec: &LatticeSpec, opts: SearchOptions) -> Result<SearchReport> {
    if opts.seeds == 0 || !(opts.perturbation >= 0.0) {
        bail!(InvalidArgument, "need at least one seed and a non-negative perturbation");
    }
    let cell = Supercell::new(spec, opts.k)?;
    let table = InstanceTable::new(&cell);
    let n = cell.num_nodes();
    let area = cell.area();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut hits = Vec::new();
    let mut rejected = 0;
    for _ in 0..opts.seeds {
        let (lambda0, psi0) = loop {
            let p = opts.perturbation;
            let l = Mat2::IDENTITY + Mat2::new(rng.gen_range(-p..=p), rng.gen_range(-p..=p), rng.gen_range(-p..=p), rng.gen_range(-p..=p));
            let psi: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.gen_range(-p..=p), rng.gen_range(-p..=p))).collect();
            if table.min_det(l, &psi) > 0.05 {
                break (l, psi);
            }
        };
        let mut x = pack(lambda0, &psi0);
        for mu in [1e-3, 1e-6, 1e-9] {
            let res = optim::lbfgs(
                &x,
                |x, g| barrier_objective(&table, x, g, mu),
                LbfgsOptions { max_iter: 400, grad_tol: 1e-12, ..Default::default() },
            );
            x = res.x;
        }
        let m = table.springs.len();
        let res = optim::levenberg_marquardt(
            &x,
            m,
            |x, r, j| spring_residuals(&table, x, r, j),
            |x| {
                let (l, p) = unpack(x);
                table.min_det(l, &p) > 0.0
            },
            LmOptions { max_iter: 100, f_target: 1e-30 },
        );
        let (lambda, psi) = unpack(&res.x);
        let e = table.spring_energy(lambda, &psi) / area;
        if e <= opts.energy_tol {
            let st = principal_stretches(lambda);
            let min_det = table.min_det(lambda, &psi);
            hits.push(MechanismHit { lambda, psi, energy: e, l1: st.l1, l2: st.l2, min_det });
        } else {
            rejected += 1;
        }
    }
    let kernel = kernel_rank(spec, opts.k, 1e-8)?;
    Ok(SearchReport { hits, rejected, kernel })
}

fn barrier_objective(table: &InstanceTable, x: &[f64], g: &mut [f64], mu: f64) -> f64 {
    let (lambda, psi) = unpack(x);
    let mut gl = Mat2::ZERO;
    let mut gp = alloc::vec![Vec2::ZERO; psi.len()];
    let mut f = table.spring_energy_grad(lambda, &psi, &mut gl, &mut gp);
    for t in &table.triangles {
        let (det, dg) = table.det_grad(t, lambda, &psi);
        if !(det > 0.0) {
            return f64::INFINITY;
        }
        f -= mu * t.area * math::ln(det);
        for i in 0..3 {
            scatter(dg[i] * (-mu * t.area / det), t.x[i], t.idx[i], &mut gl, &mut gp);
        }
    }
    g.copy_from_slice(&pack(gl, &gp));
    f
}

/// Angles of the twisted triangle pairs in successive strips next to the
/// wall: `theta_0 = 2 pi/3`, `theta_1` given (`2 pi/3` gives the constant sequence), later ones from the closure of
/// each hexagon. Of the two solutions of the closure in `[pi/3, pi]` the one
/// nearer `theta_{k+1}` is taken.
pub fn domain_wall_angles(theta1: f64, count: usize) -> Result<Vec<f64>> {
    let t0 = 2.0 * FRAC_PI_3;
    if !(theta1 >= t0 && theta1 < PI) {
        bail!(InvalidArgument, "theta1 must lie in [2 pi/3, pi), got {theta1}");
    }
    let mut out = alloc::vec![t0, theta1];
    while out.len() < count {
        let (a, b) = (out[out.len() - 2], out[out.len() - 1]);
        let s = math::sin(a - FRAC_PI_3) - math::sin(b - FRAC_PI_3) + math::sin(b);
        if !(s.abs() <= 1.0) {
            bail!(NoConvergence, "hexagon closure has no solution at index {}", out.len());
        }
        let base = math::asin(s);
        let lo = FRAC_PI_3 - 1e-12;
        let hi = PI + 1e-12;
        let cands = [base, PI - base];
        let pick = cands
            .iter()
            .copied()
            .filter(|c| *c >= lo && *c <= hi)
            .min_by(|x, y| (x - b).abs().total_cmp(&(y - b).abs()));
        match pick {
            Some(c) => out.push(c),
            None => bail!(NoConvergence, "no closure branch in [pi/3, pi] at index {}", out.len()),
        }
    }
    out.truncate(count);
    Ok(out)
}

/// Mirror-symmetric Kagome strip, periodic in the vertical direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainWall {
    /// `theta_0, ..., theta_{2m}`.
    pub angles: Vec<f64>,
    /// Deformed vertical period.
    pub period: f64,
    pub positions: NodalField,
    /// Largest spring length error over springs with both ends placed.
    pub max_spring_residual: f64,
    pub min_det: f64,
    /// Far-field `lambda` measured on the outermost strips of each side.
    pub left_lambda: Mat2,
    pub right_lambda: Mat2,
    /// Angle to which the strip angles converge.
    pub limit_angle: f64,
    /// `lambda` of the uniform twist matching the limit angle.
    pub limit_lambda: Mat2,
}

/// Builds the domain wall with `2m + 1` strips on each side of the wall and
/// `periods` vertical repetitions, and certifies it as a mechanism.
pub fn domain_wall(theta1: f64, m: usize, periods: usize) -> Result<DomainWall> {
    if m == 0 || periods == 0 {
        bail!(InvalidArgument, "half-width and period count must be positive");
    }
    let strips = 2 * m;
    let angles = domain_wall_angles(theta1, strips + 1)?;
    let spec = build_kagome();
    let (a_, b_, c_) = (0usize, 1usize, 2usize);
    let period = 2.0 * (math::sin(angles[0] - FRAC_PI_3) + math::sin(angles[1]));
    // Apex abscissae of strips 0..=2m; the wall passes through strip 0.
    let mut xs = alloc::vec![0.5];
    for k in 0..strips {
        let dx = math::cos(angles[k] - FRAC_PI_3) - math::cos(angles[k + 1]);
        xs.push(xs[k] + dx);
    }
    // Deformed vertices (apex, D-left, D-right, U-left, U-right) of strip k >= 0, pair n.
    let place = |k: usize, n: i64| -> [Vec2; 5] {
        let t = angles[k];
        let apex = Vec2::new(xs[k], -0.5 * SQRT_3 + 0.5 * k as f64 * period + n as f64 * period);
        let l = Vec2::polar(t);
        let r = Vec2::polar(t - FRAC_PI_3);
        [apex, apex + l, apex + r, apex + Vec2::new(l.x, -l.y), apex + Vec2::new(r.x, -r.y)]
    };
    // Node references of the same five vertices in strip k (any sign), pair n.
    let refs = |k: i64, n: i64| -> [NodeRef; 5] {
        let d = [-n, k + 2 * n];
        let u = [-n, k + 2 * n - 1];
        [
            NodeRef::new(a_, d[0], d[1]),
            NodeRef::new(c_, d[0], d[1]),
            NodeRef::new(b_, d[0], d[1]),
            NodeRef::new(b_, u[0], u[1]),
            NodeRef::new(c_, u[0] + 1, u[1]),
        ]
    };
    let x0 = xs[0];
    let mirror = |p: Vec2| Vec2::new(2.0 * x0 - p.x, p.y);
    let mut positions = NodalField::new();
    let mut put = |n: NodeRef, p: Vec2| {
        positions.entry(n).or_insert(p);
    };
    let np = periods as i64;
    for k in -(strips as i64)..=(strips as i64) {
        for n in -1..=np {
            let r = refs(k, n);
            if k >= 0 {
                let p = place(k as usize, n);
                for i in 0..5 {
                    put(r[i], p[i]);
                }
            } else {
                // Mirror image of strip |k|: left and right vertices swap.
                let p = place((-k) as usize, n + k);
                let img = [mirror(p[0]), mirror(p[2]), mirror(p[1]), mirror(p[4]), mirror(p[3])];
                for i in 0..5 {
                    put(r[i], img[i]);
                }
            }
        }
    }
    let mut max_res: f64 = 0.0;
    let mut min_det = f64::INFINITY;
    let cells: BTreeSet<[i64; 2]> = positions.keys().map(|n| n.offset).collect();
    for c in &cells {
        for s in &spec.springs {
            let (a, b) = (s.a.shifted(*c), s.b.shifted(*c));
            if let (Some(pa), Some(pb)) = (positions.get(&a), positions.get(&b)) {
                max_res = max_res.max(((*pb - *pa).norm() - s.rest_length).abs());
            }
        }
        for t in &spec.triangles {
            let ns = t.nodes.map(|n| n.shifted(*c));
            if let (Some(p0), Some(p1), Some(p2)) = (positions.get(&ns[0]), positions.get(&ns[1]), positions.get(&ns[2])) {
                let x = ns.map(|n| spec.position(n));
                let det = (*p1 - *p0).cross(*p2 - *p0) / (x[1] - x[0]).cross(x[2] - x[0]);
                min_det = min_det.min(det);
            }
        }
    }
    let vert = period / (2.0 * SQRT_3);
    // Both sides are measured from the placed apex nodes of the outer strips.
    let apex_x = |k: i64| positions[&refs(k, 0)[0]].x;
    let s = strips as i64;
    let right_h = 0.5 * (apex_x(s) - apex_x(s - 2));
    let left_h = 0.5 * (apex_x(2 - s) - apex_x(-s));
    let limit_angle = PI + PI / 6.0 - math::asin((period / (2.0 * SQRT_3)).clamp(-1.0, 1.0));
    let limit = TwistFamily::new(&spec)?.solve(limit_angle - 2.0 * FRAC_PI_3)?;
    Ok(DomainWall {
        angles,
        period,
        positions,
        max_spring_residual: max_res,
        min_det,
        left_lambda: Mat2::diag(left_h, vert),
        right_lambda: Mat2::diag(right_h, vert),
        limit_angle,
        limit_lambda: limit.lambda,
    })
}
