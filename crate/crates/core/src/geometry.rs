//! Planar geometry of stretches, marker vectors and rigid triangles.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::lattice::PeriodicDeformation;
use crate::linalg::{Mat2, Vec2};
use crate::math::{self, pos2, PI, TAU};

/// Orientation class of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Orientation {
    Preserving,
    Reversing,
}

/// Singular value decomposition `lambda = u diag(l1, l2) v^T` with
/// `l1 >= l2 >= 0`, `v` a rotation, and `det u = sign det lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stretches {
    pub l1: f64,
    pub l2: f64,
    pub u: Mat2,
    pub v: Mat2,
    pub orientation: Orientation,
}

impl Stretches {
    pub fn reconstruct(&self) -> Mat2 {
        self.u * Mat2::diag(self.l1, self.l2) * self.v.transpose()
    }
}

/// Closed-form orientation-aware SVD of a 2x2 matrix.
pub fn principal_stretches(lambda: Mat2) -> Stretches {
    let e = 0.5 * (lambda.m00 + lambda.m11);
    let f = 0.5 * (lambda.m00 - lambda.m11);
    let g = 0.5 * (lambda.m10 + lambda.m01);
    let h = 0.5 * (lambda.m10 - lambda.m01);
    let q = math::hypot(e, h);
    let r = math::hypot(f, g);
    let a1 = math::atan2(g, f);
    let a2 = math::atan2(h, e);
    let theta = 0.5 * (a2 - a1);
    let phi = 0.5 * (a2 + a1);
    let v = Mat2::rotation(-theta);
    if q >= r {
        Stretches { l1: q + r, l2: q - r, u: Mat2::rotation(phi), v, orientation: Orientation::Preserving }
    } else {
        Stretches {
            l1: q + r,
            l2: r - q,
            u: Mat2::rotation(phi) * Mat2::FLIP,
            v,
            orientation: Orientation::Reversing,
        }
    }
}

/// `|(lambda R_alpha - R_alpha lambda) e|` for a unit vector `e`.
pub fn commutator_norm(lambda: Mat2, alpha: f64, e: Vec2) -> f64 {
    let r = Mat2::rotation(alpha);
    ((lambda * r - r * lambda) * e).norm()
}

/// Closed form of [`commutator_norm`]: `|sin a| |l1 - l2|` when
/// `det lambda >= 0`, `|sin a| (l1 + l2)` otherwise.
pub fn commutator_closed_form(lambda: Mat2, alpha: f64) -> f64 {
    let s = principal_stretches(lambda);
    let spread = match s.orientation {
        Orientation::Preserving => s.l1 - s.l2,
        Orientation::Reversing => s.l1 + s.l2,
    };
    math::sin(alpha).abs() * spread
}

/// Lower bracket `(l1 -/+ l2)^2 + (l1 - 1)_+^2 + (l2 - 1)_+^2`, using the sum
/// of stretches when `lambda` reverses orientation.
pub fn lower_bracket(lambda: Mat2) -> f64 {
    let s = principal_stretches(lambda);
    let spread = match s.orientation {
        Orientation::Preserving => s.l1 - s.l2,
        Orientation::Reversing => s.l1 + s.l2,
    };
    spread * spread + pos2(s.l1 - 1.0) + pos2(s.l2 - 1.0)
}

/// Averaged marker vectors of a supercell deformation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AveragedVectors {
    pub a1: Vec2,
    pub a2: Vec2,
    pub a1_deformed: Vec2,
    pub a2_deformed: Vec2,
}

impl AveragedVectors {
    /// Largest deviation from `a~ = lambda a`.
    pub fn affine_defect(&self, lambda: Mat2) -> f64 {
        (self.a1_deformed - lambda * self.a1).norm().max((self.a2_deformed - lambda * self.a2).norm())
    }

    /// The matrix `lambda` recovered from `a~_i = lambda a_i`.
    pub fn recovered_lambda(&self) -> Option<Mat2> {
        let a = Mat2::from_cols(self.a1, self.a2);
        Some(Mat2::from_cols(self.a1_deformed, self.a2_deformed) * a.inverse()?)
    }
}

/// `a_i = k^-2 sum b`, `a~_i = k^-2 sum b~` over all marker pairs of the supercell.
pub fn averaged_vectors(def: &PeriodicDeformation<'_>) -> AveragedVectors {
    let spec = def.spec();
    let k2 = (def.cell.k * def.cell.k) as f64;
    let mut out = AveragedVectors { a1: Vec2::ZERO, a2: Vec2::ZERO, a1_deformed: Vec2::ZERO, a2_deformed: Vec2::ZERO };
    for c in def.cell.cells() {
        for m in &spec.markers {
            out.a1 += def.cell.reference(m.b[1], c) - def.cell.reference(m.b[0], c);
            out.a2 += def.cell.reference(m.r[1], c) - def.cell.reference(m.r[0], c);
            out.a1_deformed += def.evaluate(m.b[1], c) - def.evaluate(m.b[0], c);
            out.a2_deformed += def.evaluate(m.r[1], c) - def.evaluate(m.r[0], c);
        }
    }
    out.a1 = out.a1 * (1.0 / k2);
    out.a2 = out.a2 * (1.0 / k2);
    out.a1_deformed = out.a1_deformed * (1.0 / k2);
    out.a2_deformed = out.a2_deformed * (1.0 / k2);
    out
}

/// Mismatch of a deformed marked triangle against the rotation relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleMismatch {
    /// `(|b~|-|b|)^2 + (|r~|-|r|)^2 + (|r~-b~|-|r-b|)^2`.
    pub spring_energy: f64,
    /// `r~ - c R_{+-alpha} b~`, sign taken from the deformed orientation.
    pub z: Vec2,
    pub orientation: Orientation,
    /// Cosine of the deformed angle between `b~` and `r~`.
    pub cos_gamma: f64,
}

/// Compares deformed marker vectors `(bt, rt)` with reference `(b, r)`.
pub fn triangle_mismatch(b: Vec2, r: Vec2, bt: Vec2, rt: Vec2) -> TriangleMismatch {
    let alpha = math::atan2(b.cross(r), b.dot(r)).abs();
    let c = r.norm() / b.norm();
    let same = bt.cross(rt) * b.cross(r) >= 0.0;
    let (orientation, sgn) = if same { (Orientation::Preserving, 1.0) } else { (Orientation::Reversing, -1.0) };
    let base_sign = if b.cross(r) >= 0.0 { 1.0 } else { -1.0 };
    let z = rt - Mat2::rotation(sgn * base_sign * alpha) * bt * c;
    let (x, y, w) = (bt.norm(), rt.norm(), (rt - bt).norm());
    let e1 = x - b.norm();
    let e2 = y - r.norm();
    let e3 = w - (r - b).norm();
    let cos_gamma = if x > 0.0 && y > 0.0 { (x * x + y * y - w * w) / (2.0 * x * y) } else { f64::NAN };
    TriangleMismatch { spring_energy: e1 * e1 + e2 * e2 + e3 * e3, z, orientation, cos_gamma }
}

/// Sampled rigidity constants of an isosceles unit-leg triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RigidityEstimate {
    pub alpha: f64,
    /// Smallest `E / |z|^2` over accepted samples.
    pub infimum: f64,
    /// `0.9 * infimum`; satisfies `E >= c |z|^2` on every sample with margin.
    pub certified: f64,
    /// Fitted constant in `|cos g - cos a| <= (c1/2) sqrt E`, padded by 10%.
    pub c1_fitted: f64,
    /// Constant `18 + 12 |cos a|` obtained from the elementary length bounds.
    pub c1_analytic: f64,
    /// Lipschitz constant of `arccos` on `|t - cos a| <= (1 - |cos a|)/2`.
    pub c2: f64,
    pub accepted: usize,
}

/// Margin kept between the sampled infimum and the certified constant.
pub const RIGIDITY_SAFETY: f64 = 0.9;

/// One random deformation of the reference triangle: apex at the origin,
/// legs `e` and `R_alpha e`. Returns `(b~, r~)`.
pub fn sample_triangle_deformation(alpha: f64, rho: f64, rng: &mut impl Rng) -> (Vec2, Vec2) {
    let mut disk = || loop {
        let p = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if p.norm_sq() <= 1.0 {
            return p * rho;
        }
    };
    let apex = disk();
    let pb = Vec2::new(1.0, 0.0) + disk();
    let pr = Vec2::polar(alpha) + disk();
    let rot = Mat2::rotation(rng.gen_range(0.0..TAU));
    let m = if rng.gen_bool(0.5) { rot * Mat2::FLIP } else { rot };
    (m * (pb - apex), m * (pr - apex))
}

/// Samples deformations in disks of radius `0.01`, `0.05`, `0.1` composed with
/// random rigid motions and reflections, keeping those with `E <= energy_cap`.
pub fn rigidity_constant(alpha: f64, samples: usize, energy_cap: f64, seed: u64) -> Result<RigidityEstimate> {
    if !(alpha > 0.0 && alpha < PI) {
        bail!(InvalidArgument, "apex angle must lie in (0, pi), got {alpha}");
    }
    if samples == 0 || !(energy_cap > 0.0) {
        bail!(InvalidArgument, "need a positive sample count and energy cap");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, r) = (Vec2::new(1.0, 0.0), Vec2::polar(alpha));
    let cos_a = math::cos(alpha);
    let mut infimum = f64::INFINITY;
    let mut c1: f64 = 0.0;
    let mut accepted = 0;
    for i in 0..samples {
        let rho = [0.01, 0.05, 0.1][i % 3];
        let (bt, rt) = sample_triangle_deformation(alpha, rho, &mut rng);
        let m = triangle_mismatch(b, r, bt, rt);
        let zz = m.z.norm_sq();
        if m.spring_energy > energy_cap || zz < 1e-24 {
            continue;
        }
        accepted += 1;
        infimum = infimum.min(m.spring_energy / zz);
        let se = math::sqrt(m.spring_energy);
        if se > 0.0 && se <= 1.0 / 6.0 {
            c1 = c1.max(2.0 * (m.cos_gamma - cos_a).abs() / se);
        }
    }
    if accepted == 0 {
        bail!(NoConvergence, "no sample passed the energy cap");
    }
    let reach = cos_a.abs() + 0.5 * (1.0 - cos_a.abs());
    Ok(RigidityEstimate {
        alpha,
        infimum,
        certified: RIGIDITY_SAFETY * infimum,
        c1_fitted: 1.1 * c1,
        c1_analytic: 18.0 + 12.0 * cos_a.abs(),
        c2: 1.0 / math::sqrt(1.0 - reach * reach),
        accepted,
    })
}

/// Outcome of re-testing a [`RigidityEstimate`] on new samples.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RigidityCheck {
    pub accepted: usize,
    /// Samples with `E < certified |z|^2`.
    pub spring_violations: usize,
    /// Samples with `sqrt E <= 1/6` and `|cos g - cos a| > (c1/2) sqrt E`.
    pub cosine_violations: usize,
    /// Smallest `E / (certified |z|^2)`.
    pub spring_ratio: f64,
    /// Largest `|cos g - cos a| / ((c1/2) sqrt E)`.
    pub cosine_ratio: f64,
}

/// Tests `est` on `samples` fresh deformations drawn as in [`rigidity_constant`].
pub fn check_rigidity(est: &RigidityEstimate, samples: usize, energy_cap: f64, seed: u64) -> Result<RigidityCheck> {
    if samples == 0 || !(energy_cap > 0.0) {
        bail!(InvalidArgument, "need a positive sample count and energy cap");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, r) = (Vec2::new(1.0, 0.0), Vec2::polar(est.alpha));
    let cos_a = math::cos(est.alpha);
    let mut out = RigidityCheck { accepted: 0, spring_violations: 0, cosine_violations: 0, spring_ratio: f64::INFINITY, cosine_ratio: 0.0 };
    for i in 0..samples {
        let rho = [0.01, 0.05, 0.1][i % 3];
        let (bt, rt) = sample_triangle_deformation(est.alpha, rho, &mut rng);
        let m = triangle_mismatch(b, r, bt, rt);
        let zz = m.z.norm_sq();
        if m.spring_energy > energy_cap || zz < 1e-24 {
            continue;
        }
        out.accepted += 1;
        let q = m.spring_energy / (est.certified * zz);
        out.spring_ratio = out.spring_ratio.min(q);
        if q < 1.0 {
            out.spring_violations += 1;
        }
        let se = math::sqrt(m.spring_energy);
        if se > 0.0 && se <= 1.0 / 6.0 {
            let c = (m.cos_gamma - cos_a).abs() / (0.5 * est.c1_fitted * se);
            out.cosine_ratio = out.cosine_ratio.max(c);
            if c > 1.0 {
                out.cosine_violations += 1;
            }
        }
    }
    Ok(out)
}

/// Rigidity constant valid once `E >= eps0^2`: `(2 + 2/eps0)^-2`.
pub fn large_energy_rigidity_constant(eps0: f64) -> Result<f64> {
    if !(eps0 > 0.0) {
        bail!(InvalidArgument, "energy threshold must be positive");
    }
    let d = 2.0 + 2.0 / eps0;
    Ok(1.0 / (d * d))
}

/// Cauchy-Riemann diagnostics of a piecewise-constant gradient field.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConformalReport {
    /// `L2` norm of `(d1u1 - d2u2, d1u2 + d2u1)`.
    pub cr_residual: f64,
    /// `L2` norm of `l1 - l2`.
    pub anisotropy: f64,
    pub area: f64,
    /// Largest `(l1 + l2)/2`.
    pub max_factor: f64,
    pub min_det: f64,
    pub compressive: bool,
    pub orientation_preserving: bool,
}

/// Checks that `(area, gradient)` pairs are close to a compressive conformal map.
pub fn conformal_check(field: &[(f64, Mat2)], tol: f64) -> Result<ConformalReport> {
    if field.is_empty() {
        bail!(InvalidArgument, "empty gradient field");
    }
    let (mut cr, mut an, mut area) = (0.0, 0.0, 0.0);
    let mut max_factor: f64 = 0.0;
    let mut min_det = f64::INFINITY;
    for &(a, g) in field {
        if !(a >= 0.0) {
            bail!(InvalidArgument, "negative element area");
        }
        let r1 = g.m00 - g.m11;
        let r2 = g.m10 + g.m01;
        cr += a * (r1 * r1 + r2 * r2);
        let s = principal_stretches(g);
        an += a * (s.l1 - s.l2) * (s.l1 - s.l2);
        area += a;
        max_factor = max_factor.max(0.5 * (s.l1 + s.l2));
        min_det = min_det.min(g.det());
    }
    Ok(ConformalReport {
        cr_residual: math::sqrt(cr),
        anisotropy: math::sqrt(an),
        area,
        max_factor,
        min_det,
        compressive: max_factor <= 1.0 + tol,
        orientation_preserving: min_det > 0.0,
    })
}

/// Scalar inequalities checked on parameter grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Inequality {
    /// `max cos^2(t + i pi/3) >= 3/4`.
    KagomeDirectionFactor,
    /// `max cos^2(t + i pi/2) >= 1/2`.
    SquaresDirectionFactor,
    /// `sum_i (|lambda e_i| - 1)_+^2 >= (sqrt(3/4 l1^2 + 1/4 l2^2) - 1)_+^2`, three directions.
    KagomeDirectional,
    /// As above with two orthogonal directions and weights `1/2`.
    SquaresDirectional,
    /// `(l1-l2)^2 + (sqrt(3/4 l1^2 + 1/4 l2^2) - 1)_+^2 >= 1/4 ((l1-1)_+^2 + (l2-1)_+^2)`.
    KagomeMixed,
    /// As above with weights `1/2`.
    SquaresMixed,
}

impl Inequality {
    pub const ALL: [Inequality; 6] = [
        Inequality::KagomeDirectionFactor,
        Inequality::SquaresDirectionFactor,
        Inequality::KagomeDirectional,
        Inequality::SquaresDirectional,
        Inequality::KagomeMixed,
        Inequality::SquaresMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Inequality::KagomeDirectionFactor => "kagome-direction-factor",
            Inequality::SquaresDirectionFactor => "squares-direction-factor",
            Inequality::KagomeDirectional => "kagome-directional",
            Inequality::SquaresDirectional => "squares-directional",
            Inequality::KagomeMixed => "kagome-mixed",
            Inequality::SquaresMixed => "squares-mixed",
        }
    }

    fn weight(self) -> f64 {
        match self {
            Inequality::KagomeDirectionFactor | Inequality::KagomeDirectional | Inequality::KagomeMixed => 0.75,
            _ => 0.5,
        }
    }

    fn directions(self) -> usize {
        match self {
            Inequality::KagomeDirectionFactor | Inequality::KagomeDirectional | Inequality::KagomeMixed => 3,
            _ => 2,
        }
    }

    /// `lhs - rhs` at `(l1, l2, theta)`; arguments not used are ignored.
    pub fn margin(self, l1: f64, l2: f64, theta: f64) -> f64 {
        let w = self.weight();
        let n = self.directions();
        let step = PI / n as f64;
        match self {
            Inequality::KagomeDirectionFactor | Inequality::SquaresDirectionFactor => {
                let t = (0..n).map(|i| math::cos(theta + i as f64 * step)).map(|c| c * c).fold(0.0, f64::max);
                t - w
            }
            Inequality::KagomeDirectional | Inequality::SquaresDirectional => {
                let lhs: f64 = (0..n)
                    .map(|i| {
                        let a = theta + i as f64 * step;
                        pos2(math::hypot(l1 * math::cos(a), l2 * math::sin(a)) - 1.0)
                    })
                    .sum();
                lhs - pos2(math::sqrt(w * l1 * l1 + (1.0 - w) * l2 * l2) - 1.0)
            }
            Inequality::KagomeMixed | Inequality::SquaresMixed => {
                let lhs = (l1 - l2) * (l1 - l2) + pos2(math::sqrt(w * l1 * l1 + (1.0 - w) * l2 * l2) - 1.0);
                lhs - 0.25 * (pos2(l1 - 1.0) + pos2(l2 - 1.0))
            }
        }
    }

    fn uses_theta(self) -> bool {
        !matches!(self, Inequality::KagomeMixed | Inequality::SquaresMixed)
    }

    fn uses_stretch(self) -> bool {
        !matches!(self, Inequality::KagomeDirectionFactor | Inequality::SquaresDirectionFactor)
    }
}

/// Outcome of a grid sweep of one inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InequalityReport {
    pub inequality: Inequality,
    /// Smallest `lhs - rhs` found.
    pub worst_margin: f64,
    /// `(l1, l2, theta)` where it occurs.
    pub worst_at: [f64; 3],
    pub evaluated: usize,
    pub holds: bool,
}

/// Grid of `l1 >= l2` in `[0, max_stretch]` with spacing `step` and angles
/// in `[0, 2 pi)` with spacing `angle_step`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InequalityGrid {
    pub max_stretch: f64,
    pub step: f64,
    pub angle_step: f64,
}

impl Default for InequalityGrid {
    fn default() -> Self {
        InequalityGrid { max_stretch: 3.0, step: 0.01, angle_step: 0.001 }
    }
}

/// Sweeps `ineq` over `grid`, calling `visit(l1, l2, theta, margin)` at
/// every point, and reports the worst margin.
pub fn sweep_inequality(
    ineq: Inequality,
    grid: InequalityGrid,
    mut visit: impl FnMut(f64, f64, f64, f64),
) -> Result<InequalityReport> {
    if !(grid.step > 0.0 && grid.angle_step > 0.0 && grid.max_stretch >= 0.0) {
        bail!(InvalidArgument, "grid spacings must be positive");
    }
    let ns = if ineq.uses_stretch() { math::round(grid.max_stretch / grid.step) as usize } else { 0 };
    let na = if ineq.uses_theta() { math::floor(TAU / grid.angle_step) as usize } else { 1 };
    let mut worst = (f64::INFINITY, [0.0; 3]);
    let mut evaluated = 0;
    let mut angles = Vec::with_capacity(na);
    for a in 0..na {
        angles.push(a as f64 * grid.angle_step);
    }
    for i in 0..=ns {
        let l1 = i as f64 * grid.step;
        for j in 0..=i {
            let l2 = j as f64 * grid.step;
            for &t in &angles {
                let m = ineq.margin(l1, l2, t);
                visit(l1, l2, t, m);
                evaluated += 1;
                if m < worst.0 {
                    worst = (m, [l1, l2, t]);
                }
            }
        }
    }
    Ok(InequalityReport {
        inequality: ineq,
        worst_margin: worst.0,
        worst_at: worst.1,
        evaluated,
        holds: worst.0 >= -1e-12,
    })
}

/// Simple polygon given by its vertices in order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

fn segments_touch(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = (p2 - p1).cross(q1 - p1);
    let d2 = (p2 - p1).cross(q2 - p1);
    let d3 = (q2 - q1).cross(p1 - q1);
    let d4 = (q2 - q1).cross(p2 - q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Vec2, b: Vec2, c: Vec2, d: f64| {
        d == 0.0 && c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    on(p1, p2, q1, d1) || on(p1, p2, q2, d2) || on(q1, q2, p1, d3) || on(q1, q2, p2, d4)
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 || vertices.iter().any(|v| !v.is_finite()) {
            bail!(InvalidArgument, "polygon needs at least three finite vertices");
        }
        let p = Polygon { vertices };
        if p.signed_area().abs() < 1e-300 {
            bail!(DegenerateGeometry, "polygon has zero area");
        }
        Ok(p)
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Polygon::new(alloc::vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)])
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// `(min, max)` corners of the bounding box.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = self.vertices[0];
        let mut hi = lo;
        for v in &self.vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    /// Whether `p` lies on the boundary.
    pub fn on_boundary(&self, p: Vec2) -> bool {
        self.edges().any(|(a, b)| segments_touch(a, b, p, p))
    }

    /// Whether `p` lies in the open interior.
    pub fn contains(&self, p: Vec2) -> bool {
        if self.on_boundary(p) {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if x > p.x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Whether the closed polygon `q` lies in the open interior of `self`.
    pub fn contains_polygon(&self, q: &[Vec2]) -> bool {
        if !q.iter().all(|&p| self.contains(p)) {
            return false;
        }
        let m = q.len();
        !(0..m).any(|i| self.edges().any(|(a, b)| segments_touch(a, b, q[i], q[(i + 1) % m])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_kagome, Supercell};

    #[test]
    fn svd_reconstructs_both_orientations() {
        for m in [
            Mat2::new(1.2, 0.3, -0.4, 0.8),
            Mat2::new(0.2, 1.0, 1.0, 0.1),
            Mat2::diag(2.0, -0.5),
            Mat2::ZERO,
            Mat2::rotation(0.7) * 0.6,
        ] {
            let s = principal_stretches(m);
            assert!(s.reconstruct().max_abs_diff(m) < 1e-14);
            assert!(s.l1 >= s.l2 && s.l2 >= 0.0);
            assert!((s.v.det() - 1.0).abs() < 1e-14);
            let want = if m.det() < 0.0 { -1.0 } else { 1.0 };
            assert!((s.u.det() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn commutator_closed_form_agrees() {
        let m = Mat2::new(1.2, 0.3, -0.4, 0.8);
        let e = Vec2::polar(0.37);
        assert!((commutator_norm(m, 1.0, e) - commutator_closed_form(m, 1.0)).abs() < 1e-14);
        let f = Mat2::new(0.2, 1.0, 1.0, 0.1);
        assert!((commutator_norm(f, 0.4, e) - commutator_closed_form(f, 0.4)).abs() < 1e-14);
    }

    #[test]
    fn bracket_values() {
        assert!(lower_bracket(Mat2::rotation(0.3)).abs() < 1e-28);
        assert!((lower_bracket(Mat2::diag(1.5, 1.0)) - 0.5).abs() < 1e-14);
        // Reflection: spread uses the sum, 2^2.
        assert!((lower_bracket(Mat2::FLIP) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn kagome_markers_average_to_lattice_vectors() {
        let spec = build_kagome();
        let def = PeriodicDeformation::identity(Supercell::new(&spec, 2).unwrap());
        let a = averaged_vectors(&def);
        assert!((a.a1 - spec.v1).norm() < 1e-13);
        assert!((a.a2 - spec.v2).norm() < 1e-13);
    }

    #[test]
    fn rigid_motions_have_no_mismatch() {
        let (b, r) = (Vec2::new(1.0, 0.0), Vec2::polar(1.1));
        for m in [Mat2::rotation(2.0), Mat2::rotation(0.5) * Mat2::FLIP] {
            let t = triangle_mismatch(b, r, m * b, m * r);
            assert!(t.spring_energy < 1e-28);
            assert!(t.z.norm() < 1e-14);
            assert!((t.cos_gamma - math::cos(1.1)).abs() < 1e-14);
        }
    }

    #[test]
    fn fresh_samples_respect_the_estimate() {
        let est = rigidity_constant(PI / 2.0, 3000, 1.0 / 36.0, 4).unwrap();
        let chk = check_rigidity(&est, 3000, 1.0 / 36.0, 5).unwrap();
        assert!(chk.accepted > 1000);
        assert_eq!(chk.spring_violations, 0);
        assert!(chk.spring_ratio >= 1.0 && chk.cosine_ratio <= 1.0);
    }

    #[test]
    fn large_energy_constant() {
        let c = large_energy_rigidity_constant(1.0).unwrap();
        assert!((c - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn rigidity_estimate_is_positive() {
        let est = rigidity_constant(PI / 3.0, 3000, 1.0 / 36.0, 1).unwrap();
        assert!(est.infimum > 0.0 && est.certified < est.infimum);
        assert!(est.c1_fitted < est.c1_analytic);
    }

    #[test]
    fn identity_is_conformal() {
        let r = conformal_check(&[(1.0, Mat2::IDENTITY), (0.5, Mat2::rotation(0.2) * 0.9)], 1e-12).unwrap();
        assert!(r.cr_residual < 1e-15 && r.compressive && r.orientation_preserving);
        let bad = conformal_check(&[(1.0, Mat2::diag(1.0, 0.8))], 1e-12).unwrap();
        assert!((bad.cr_residual - 0.2).abs() < 1e-14);
    }

    #[test]
    fn inequalities_hold_on_coarse_grid() {
        let g = InequalityGrid { max_stretch: 3.0, step: 0.1, angle_step: 0.05 };
        for i in Inequality::ALL {
            let r = sweep_inequality(i, g, |_, _, _, _| {}).unwrap();
            assert!(r.holds, "{:?} {:?}", i, r);
        }
    }
}
