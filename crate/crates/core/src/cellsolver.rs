//! Upper bounds for the macroscopic energy density by minimising over
//! periodic fields, and numerical checks of the averaged lower bounds.
//!
//! Minimisation runs on a smoothed penalty `(1/eta) sigmoid(-det/tau)` with
//! `tau` annealed from `0.05` to `0.005`; every reported energy is
//! re-evaluated with the exact step penalty.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{check_eta, scatter, InstanceTable};
use crate::error::{bail, Result};
use crate::geometry::{lower_bracket, principal_stretches, Orientation};
use crate::lattice::{LatticeSpec, NodeRef, PeriodicDeformation, Supercell};
use crate::linalg::{Mat2, Vec2};
use crate::math::{self, pos2, sigmoid, FRAC_PI_3};
use crate::mechanisms::TwistFamily;
use crate::optim::{self, LbfgsOptions, LmOptions};

/// Smoothing widths of the penalty surrogate, coarse to fine.
pub const TAU_SCHEDULE: [f64; 4] = [0.05, 0.02, 0.01, 0.005];

/// Settings of [`estimate_density`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityOptions {
    pub eta: f64,
    pub ks: Vec<usize>,
    /// Random seeds per supercell size, in addition to `psi = 0` and the twist.
    pub random_seeds: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { eta: 0.05, ks: alloc::vec![1, 2, 3, 4], random_seeds: 2, seed: 0, max_iter: 600 }
    }
}

/// Where a minimisation run started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SeedKind {
    Zero,
    Twist,
    /// Best field of a smaller supercell dividing this one.
    Coarser,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunRecord {
    pub k: usize,
    pub seed: SeedKind,
    /// Exact-penalty averaged energy of the result.
    pub energy: f64,
    /// Averaged spring part of `energy`.
    pub spring: f64,
    pub iterations: usize,
    /// Gradient norm of the finest surrogate at the final point.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub lambda: Mat2,
    pub eta: f64,
    /// Smallest averaged energy found: an upper bound for the density.
    pub upper: f64,
    pub best_k: usize,
    /// Minimiser on the `best_k` supercell, in the frame of `lambda`.
    pub best_psi: Vec<Vec2>,
    /// Running minimum of `upper` after each supercell size.
    pub per_k: Vec<(usize, f64)>,
    /// Stretch bracket multiplying the lower-bound constant.
    pub bracket: f64,
    pub runs: Vec<RunRecord>,
}

impl DensityEstimate {
    pub fn minimizer<'a>(&self, spec: &'a LatticeSpec) -> Result<PeriodicDeformation<'a>> {
        PeriodicDeformation::new(Supercell::new(spec, self.best_k)?, self.lambda, self.best_psi.clone())
    }
}

/// Rotation `q` with `q lambda e1` on the positive x axis.
fn canonical_frame(lambda: Mat2) -> Mat2 {
    let c = lambda.col0();
    let c = if c.norm() > 1e-300 { c } else { lambda.col1().perp() * -1.0 };
    if c.norm() > 1e-300 {
        Mat2::rotation(-c.angle())
    } else {
        Mat2::IDENTITY
    }
}

fn smoothed_objective(table: &InstanceTable, lambda: Mat2, x: &[f64], g: &mut [f64], eta: f64, tau: f64) -> f64 {
    let psi = unflatten(x);
    let mut gl = Mat2::ZERO;
    let mut gp = alloc::vec![Vec2::ZERO; psi.len()];
    let mut f = table.spring_energy_grad(lambda, &psi, &mut gl, &mut gp);
    for t in &table.triangles {
        let (det, dg) = table.det_grad(t, lambda, &psi);
        let s = sigmoid(-det / tau);
        f += t.area * s / eta;
        // d/d det of sigmoid(-det/tau) = -s (1 - s) / tau
        let w = -t.area * s * (1.0 - s) / (eta * tau);
        if w != 0.0 {
            for i in 0..3 {
                scatter(dg[i] * w, t.x[i], t.idx[i], &mut gl, &mut gp);
            }
        }
    }
    for (i, p) in gp.iter().enumerate() {
        g[2 * i] = p.x;
        g[2 * i + 1] = p.y;
    }
    f
}

fn flatten(psi: &[Vec2]) -> Vec<f64> {
    psi.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflatten(x: &[f64]) -> Vec<Vec2> {
    x.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

/// Repeats a `k0` periodic field on a `k` supercell (`k0` divides `k`).
pub fn replicate(spec: &LatticeSpec, k0: usize, psi: &[Vec2], k: usize) -> Vec<Vec2> {
    let small = Supercell { spec, k: k0 };
    let big = Supercell { spec, k };
    (0..big.num_nodes())
        .map(|i| {
            let n = big.unflatten(i);
            psi[small.index(NodeRef::new(n.basic, 0, 0), n.offset)]
        })
        .collect()
}

/// Minimises the averaged energy over periodic fields for fixed `lambda`.
pub fn estimate_density(spec: &LatticeSpec, lambda: Mat2, opts: &DensityOptions) -> Result<DensityEstimate> {
    estimate_with_family(spec, lambda, opts, TwistFamily::new(spec).ok().as_ref())
}

struct Candidate {
    energy: f64,
    spring: f64,
    psi: Vec<Vec2>,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        self.energy < other.energy || (self.energy == other.energy && self.spring < other.spring)
    }
}

/// As [`estimate_density`], reusing a precomputed twist family for seeding.
pub fn estimate_with_family(
    spec: &LatticeSpec,
    lambda: Mat2,
    opts: &DensityOptions,
    family: Option<&TwistFamily<'_>>,
) -> Result<DensityEstimate> {
    check_eta(opts.eta)?;
    if opts.ks.is_empty() || opts.ks.iter().any(|&k| k == 0) {
        bail!(InvalidArgument, "supercell sizes must be positive");
    }
    if !lambda.is_finite() {
        bail!(InvalidArgument, "lambda must be finite");
    }
    // Work in a frame where lambda e1 lies on the x axis; the energy is
    // invariant under rotating the deformed configuration.
    let q = canonical_frame(lambda);
    let lc = q * lambda;
    let st = principal_stretches(lc);
    let twist = family.and_then(|fam| {
        let c = 0.5 * (st.l1 + st.l2);
        let cc = c.min(1.0).max(fam.min_compression() + 1e-9);
        let th = fam.theta_for(cc).ok()?;
        let tw = fam.solve(th).ok()?;
        // Rotate the twist so its rotation matches the conformal part of lc.
        let target = math::atan2(lc.m10 - lc.m01, lc.m00 + lc.m11);
        let rot = Mat2::rotation(target - tw.rotation);
        Some((tw.k, tw.psi.iter().map(|p| rot * *p).collect::<Vec<_>>()))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut runs = Vec::new();
    let mut per_k = Vec::new();
    // Best candidate per finished supercell size, for seeding multiples.
    let mut finished: Vec<(usize, Candidate)> = Vec::new();
    let mut best: Option<(usize, Candidate)> = None;
    for &k in &opts.ks {
        let cell = Supercell::new(spec, k)?;
        let table = InstanceTable::new(&cell);
        let area = cell.area();
        let n = cell.num_nodes();
        let mut seeds: Vec<(SeedKind, Vec<Vec2>)> = alloc::vec![(SeedKind::Zero, alloc::vec![Vec2::ZERO; n])];
        if let Some((k0, psi)) = &twist {
            if k % k0 == 0 {
                seeds.push((SeedKind::Twist, replicate(spec, *k0, psi, k)));
            }
        }
        for (k0, c) in &finished {
            if k % k0 == 0 && *k0 != k {
                seeds.push((SeedKind::Coarser, replicate(spec, *k0, &c.psi, k)));
            }
        }
        for _ in 0..opts.random_seeds {
            let psi = (0..n).map(|_| Vec2::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15))).collect();
            seeds.push((SeedKind::Random, psi));
        }
        let mut best_k: Option<Candidate> = None;
        for (kind, psi0) in seeds {
            let (rec, cand) = minimise(&table, lc, psi0, opts.eta, area, opts.max_iter);
            runs.push(RunRecord { k, seed: kind, ..rec });
            let done = cand.energy <= 1e-24;
            if best_k.as_ref().map_or(true, |b| cand.better_than(b)) {
                best_k = Some(cand);
            }
            if done {
                break;
            }
        }
        let cand = best_k.expect("at least one seed");
        if best.as_ref().map_or(true, |b| cand.better_than(&b.1)) {
            best = Some((k, Candidate { energy: cand.energy, spring: cand.spring, psi: cand.psi.clone() }));
        }
        per_k.push((k, best.as_ref().map_or(f64::INFINITY, |b| b.1.energy)));
        finished.push((k, cand));
        if best.as_ref().is_some_and(|b| b.1.energy <= 1e-24) {
            break;
        }
    }
    let (best_k, cand) = best.expect("at least one run");
    let qt = q.transpose();
    Ok(DensityEstimate {
        lambda,
        eta: opts.eta,
        upper: cand.energy,
        best_k,
        best_psi: cand.psi.into_iter().map(|p| qt * p).collect(),
        per_k,
        bracket: lower_bracket(lambda),
        runs,
    })
}

fn evaluate(table: &InstanceTable, lambda: Mat2, psi: Vec<Vec2>, eta: f64, area: f64) -> Candidate {
    let spring = table.spring_energy(lambda, &psi) / area;
    let energy = spring + table.penalty_energy(lambda, &psi, eta) / area;
    Candidate { energy, spring, psi }
}

fn minimise(table: &InstanceTable, lambda: Mat2, psi0: Vec<Vec2>, eta: f64, area: f64, max_iter: usize) -> (RunRecord, Candidate) {
    let mut rec = RunRecord { k: 0, seed: SeedKind::Zero, energy: 0.0, spring: 0.0, iterations: 0, grad_norm: 0.0 };
    let mut best = evaluate(table, lambda, psi0.clone(), eta, area);
    let finish = |rec: &mut RunRecord, c: &Candidate| {
        rec.energy = c.energy;
        rec.spring = c.spring;
    };
    if best.energy <= 1e-24 {
        finish(&mut rec, &best);
        return (rec, best);
    }
    let mut x = flatten(&psi0);
    for tau in TAU_SCHEDULE {
        let res = optim::lbfgs(
            &x,
            |x, g| smoothed_objective(table, lambda, x, g, eta, tau),
            LbfgsOptions { max_iter, grad_tol: 1e-11, ..Default::default() },
        );
        rec.iterations += res.iterations;
        x = res.x;
        let c = evaluate(table, lambda, unflatten(&x), eta, area);
        if c.better_than(&best) {
            best = c;
        }
    }
    let mut g = alloc::vec![0.0; x.len()];
    smoothed_objective(table, lambda, &x, &mut g, eta, TAU_SCHEDULE[TAU_SCHEDULE.len() - 1]);
    rec.grad_norm = math::sqrt(g.iter().map(|v| v * v).sum());
    // Gauss-Newton polish of the springs, keeping the orientation pattern.
    let signs: Vec<bool> = {
        let psi = unflatten(&x);
        table.triangles.iter().map(|t| table.det(t, lambda, &psi) > 0.0).collect()
    };
    let res = optim::levenberg_marquardt(
        &x,
        table.springs.len(),
        |x, r, j| {
            let psi = unflatten(x);
            j.iter_mut().for_each(|v| *v = 0.0);
            let n = x.len();
            for (row, s) in table.springs.iter().enumerate() {
                let d = lambda * (s.xb - s.xa) + psi[s.ib] - psi[s.ia];
                let len = d.norm();
                let w = math::sqrt(s.stiffness);
                r[row] = w * (len - s.rest);
                if len > 1e-12 {
                    let g = d * (w / len);
                    let jr = &mut j[row * n..(row + 1) * n];
                    jr[2 * s.ib] += g.x;
                    jr[2 * s.ib + 1] += g.y;
                    jr[2 * s.ia] -= g.x;
                    jr[2 * s.ia + 1] -= g.y;
                }
            }
        },
        |x| {
            let psi = unflatten(x);
            table.triangles.iter().zip(&signs).all(|(t, &s)| (table.det(t, lambda, &psi) > 0.0) == s)
        },
        LmOptions { max_iter: 60, f_target: 1e-30 },
    );
    rec.iterations += res.iterations;
    let c = evaluate(table, lambda, unflatten(&res.x), eta, area);
    if c.better_than(&best) {
        best = c;
    }
    finish(&mut rec, &best);
    (rec, best)
}

/// Averaged inequalities obtained from Jensen's inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum JensenBound {
    /// Marker spring average `>= (l1 - 1)_+^2 + (l2 - 1)_+^2` for diagonal
    /// `lambda >= 0` on a squares lattice.
    SquaresDiagonal,
    /// Triangle spring average `>= sum_i (|lambda e_i| - 1)_+^2` over the
    /// three side directions of a Kagome lattice.
    KagomeSides,
    /// Marker spring average `>= (|lambda e1| - 1)_+^2 + (|lambda e2| - 1)_+^2`.
    SquaresSides,
    /// `(|lambda e| - 1)_+^2 <= (M l_avg)^-1` times the marker spring average,
    /// for markers of unequal rest lengths `l`, `M = min l`.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JensenReport {
    pub bound: JensenBound,
    pub trials: usize,
    /// Smallest `lhs - rhs`.
    pub worst_margin: f64,
    pub holds: bool,
}

/// Left and right sides of `bound` at one deformation.
pub fn jensen_sides(bound: JensenBound, def: &PeriodicDeformation<'_>) -> Result<Vec<(f64, f64)>> {
    let spec = def.spec();
    let k2 = (def.cell.k * def.cell.k) as f64;
    let nt = spec.markers.len() as f64;
    let lam = def.lambda;
    let mut b_sum = 0.0;
    let mut r_sum = 0.0;
    let mut b_len = Vec::new();
    let mut r_len = Vec::new();
    for m in &spec.markers {
        b_len.push((spec.position(m.b[1]) - spec.position(m.b[0])).norm());
        r_len.push((spec.position(m.r[1]) - spec.position(m.r[0])).norm());
    }
    for c in def.cell.cells() {
        for (i, m) in spec.markers.iter().enumerate() {
            let bt = def.evaluate(m.b[1], c) - def.evaluate(m.b[0], c);
            let rt = def.evaluate(m.r[1], c) - def.evaluate(m.r[0], c);
            b_sum += (bt.norm() - b_len[i]) * (bt.norm() - b_len[i]);
            r_sum += (rt.norm() - r_len[i]) * (rt.norm() - r_len[i]);
        }
    }
    let avg = (b_sum + r_sum) / (k2 * nt);
    Ok(match bound {
        JensenBound::SquaresDiagonal => {
            if lam.m01 != 0.0 || lam.m10 != 0.0 || lam.m00 < 0.0 || lam.m11 < 0.0 {
                bail!(Precondition, "bound needs a non-negative diagonal lambda");
            }
            alloc::vec![(avg, pos2(lam.m00 - 1.0) + pos2(lam.m11 - 1.0))]
        }
        JensenBound::SquaresSides => {
            let e1 = Vec2::new(1.0, 0.0);
            let e2 = Vec2::new(0.0, 1.0);
            alloc::vec![(avg, pos2((lam * e1).norm() - 1.0) + pos2((lam * e2).norm() - 1.0))]
        }
        JensenBound::KagomeSides => {
            let b = crate::energy::energy_breakdown(def, 1.0)?;
            let lhs = b.per_triangle.iter().map(|t| t.spring).sum::<f64>() / (k2 * nt);
            let rhs: f64 = (0..3).map(|i| pos2((lam * Vec2::polar(i as f64 * FRAC_PI_3)).norm() - 1.0)).sum();
            alloc::vec![(lhs, rhs)]
        }
        JensenBound::Weighted => {
            let mut out = Vec::new();
            for (sum, lens, first) in [(b_sum, &b_len, true), (r_sum, &r_len, false)] {
                let mn = lens.iter().cloned().fold(f64::INFINITY, f64::min);
                let avg_len = lens.iter().sum::<f64>() / nt;
                let m0 = spec.markers[0];
                let dir = if first {
                    spec.position(m0.b[1]) - spec.position(m0.b[0])
                } else {
                    spec.position(m0.r[1]) - spec.position(m0.r[0])
                };
                let e = dir * (1.0 / dir.norm());
                out.push((sum / (k2 * nt) / (mn * avg_len), pos2((lam * e).norm() - 1.0)));
            }
            out
        }
    })
}

/// Checks `bound` on random `(lambda, psi, k)` with `k <= 3`.
pub fn verify_jensen_bounds(spec: &LatticeSpec, bound: JensenBound, trials: usize, seed: u64) -> Result<JensenReport> {
    if trials == 0 {
        bail!(InvalidArgument, "need at least one trial");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let k = rng.gen_range(1..=3);
        let cell = Supercell::new(spec, k)?;
        let lambda = match bound {
            JensenBound::SquaresDiagonal => Mat2::diag(rng.gen_range(0.0..2.5), rng.gen_range(0.0..2.5)),
            _ => Mat2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
        };
        let amp = rng.gen_range(0.0..0.8);
        let psi = (0..cell.num_nodes()).map(|_| Vec2::new(rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp))).collect();
        let def = PeriodicDeformation::new(cell, lambda, psi)?;
        for (lhs, rhs) in jensen_sides(bound, &def)? {
            worst = worst.min(lhs - rhs);
        }
    }
    Ok(JensenReport { bound, trials, worst_margin: worst, holds: worst >= -1e-12 })
}

/// Largest `eta` for which the isotropic lower bound is asserted: the
/// smallest penalized triangle area (`sqrt(3)/4` Kagome, `1/2` squares).
pub fn eta_threshold(spec: &LatticeSpec) -> f64 {
    spec.triangles.iter().map(|t| t.area).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IsotropicSample {
    pub lambda: Mat2,
    pub k: usize,
    /// Whether the field came from the minimiser or from random sampling.
    pub minimised: bool,
    pub energy: f64,
    pub bracket: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IsotropicFit {
    pub eta: f64,
    /// Smallest `energy / bracket` over samples with a positive bracket.
    pub c_fit: f64,
    pub samples: Vec<IsotropicSample>,
}

/// Random matrix with stretches in `[0, 2]`, occasionally reversing.
pub fn random_lambda(rng: &mut impl Rng) -> Mat2 {
    let u = Mat2::rotation(rng.gen_range(0.0..math::TAU));
    let v = Mat2::rotation(rng.gen_range(0.0..math::TAU));
    let d = Mat2::diag(rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0));
    let f = if rng.gen_bool(0.15) { Mat2::FLIP } else { Mat2::IDENTITY };
    u * f * d * v
}

/// Fits `c` in `E(lambda, psi) >= c * bracket(lambda)` over `trials`
/// random `lambda`, each tried with the minimiser of [`estimate_density`]
/// and with one random field.
pub fn verify_isotropic_bound(spec: &LatticeSpec, eta: f64, trials: usize, seed: u64) -> Result<IsotropicFit> {
    check_eta(eta)?;
    let eta0 = eta_threshold(spec);
    if eta > eta0 {
        bail!(Precondition, "eta = {eta} exceeds {eta0}, where the bound is asserted");
    }
    let family = TwistFamily::new(spec).ok();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = DensityOptions { eta, ks: alloc::vec![1, 2], random_seeds: 1, seed, max_iter: 400 };
    let mut samples = Vec::new();
    for _ in 0..trials {
        let lambda = random_lambda(&mut rng);
        let bracket = lower_bracket(lambda);
        let est = estimate_with_family(spec, lambda, &opts, family.as_ref())?;
        samples.push(IsotropicSample { lambda, k: est.best_k, minimised: true, energy: est.upper, bracket });
        let k = rng.gen_range(1..=3);
        let cell = Supercell::new(spec, k)?;
        let psi = (0..cell.num_nodes()).map(|_| Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3))).collect();
        let def = PeriodicDeformation::new(cell, lambda, psi)?;
        let energy = crate::energy::averaged_energy(&def, eta)?;
        samples.push(IsotropicSample { lambda, k, minimised: false, energy, bracket });
    }
    let c_fit = samples.iter().filter(|s| s.bracket > 1e-12).map(|s| s.energy / s.bracket).fold(f64::INFINITY, f64::min);
    Ok(IsotropicFit { eta, c_fit, samples })
}

/// Whether `lambda` is `c R` with `c <= 1`, the zero set of the density.
pub fn in_zero_set(lambda: Mat2, tol: f64) -> bool {
    let s = principal_stretches(lambda);
    s.orientation == Orientation::Preserving && s.l1 - s.l2 <= tol && s.l1 <= 1.0 + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_kagome, build_rotating_squares};

    fn quick() -> DensityOptions {
        DensityOptions { ks: alloc::vec![1, 2], random_seeds: 1, max_iter: 300, ..Default::default() }
    }

    #[test]
    fn conformal_compression_costs_nothing() {
        let spec = build_kagome();
        let est = estimate_density(&spec, Mat2::rotation(0.7) * 0.6, &quick()).unwrap();
        assert!(est.upper < 1e-20, "{}", est.upper);
        assert_eq!(est.runs[0].k, 1);
    }

    #[test]
    fn shear_costs_energy() {
        let spec = build_rotating_squares();
        let est = estimate_density(&spec, Mat2::diag(1.2, 0.8), &quick()).unwrap();
        assert!(est.upper > 1e-4, "{}", est.upper);
        assert!(est.upper <= est.runs[0].energy);
    }

    #[test]
    fn frame_indifference() {
        let spec = build_kagome();
        let lam = Mat2::new(1.1, 0.2, -0.1, 0.85);
        let a = estimate_density(&spec, lam, &quick()).unwrap();
        let b = estimate_density(&spec, Mat2::rotation(1.3) * lam, &quick()).unwrap();
        assert!((a.upper - b.upper).abs() < 1e-8 * a.upper.max(1.0));
    }

    #[test]
    fn jensen_equality_case() {
        let spec = build_rotating_squares();
        let def = PeriodicDeformation::affine(Supercell::new(&spec, 1).unwrap(), Mat2::diag(1.5, 1.0));
        let s = jensen_sides(JensenBound::SquaresDiagonal, &def).unwrap();
        assert!((s[0].0 - s[0].1).abs() < 1e-12);
        assert!((s[0].1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn jensen_bounds_hold() {
        let rs = build_rotating_squares();
        for b in [JensenBound::SquaresDiagonal, JensenBound::SquaresSides] {
            assert!(verify_jensen_bounds(&rs, b, 200, 3).unwrap().holds);
        }
        let k = build_kagome();
        assert!(verify_jensen_bounds(&k, JensenBound::KagomeSides, 200, 3).unwrap().holds);
    }

    #[test]
    fn zero_set_membership() {
        assert!(in_zero_set(Mat2::rotation(0.4) * 0.7, 1e-12));
        assert!(!in_zero_set(Mat2::diag(1.0, 0.9), 1e-12));
        assert!(!in_zero_set(Mat2::IDENTITY * 1.1, 1e-12));
    }
}
