//! Lattice descriptions, supercells and periodic deformations.
//!
//! A lattice is a set of basic nodes repeated by the lattice vectors `v1`,
//! `v2`. Springs, penalized triangles and marker pairs refer to nodes through
//! [`NodeRef`], a basic index plus an integer cell offset. A [`Supercell`] of
//! size `k` identifies offsets modulo `k`, and a [`PeriodicDeformation`] is an
//! affine part `lambda` plus a `k`-periodic nodal field `psi`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::math::{self, FRAC_PI_2, FRAC_PI_3, PI};

/// Absolute tolerance used by geometric validation.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeRef {
    pub basic: usize,
    pub offset: [i64; 2],
}

impl NodeRef {
    pub const fn new(basic: usize, i: i64, j: i64) -> Self {
        NodeRef { basic, offset: [i, j] }
    }

    pub fn shifted(self, d: [i64; 2]) -> Self {
        NodeRef::new(self.basic, self.offset[0] + d[0], self.offset[1] + d[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub a: NodeRef,
    pub b: NodeRef,
    pub rest_length: f64,
    pub stiffness: f64,
}

/// Triangle whose orientation is penalized; nodes are stored counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizedTriangle {
    pub nodes: [NodeRef; 3],
    pub area: f64,
}

/// Two marked edges of a rigid unit, each stored as `[tail, head]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerPair {
    pub b: [NodeRef; 2],
    pub r: [NodeRef; 2],
    pub triangle: usize,
}

/// A spring instance attributed to a penalized triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringShare {
    pub spring: usize,
    pub shift: [i64; 2],
    pub weight: f64,
}

/// Geometry and topology of a periodic spring lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    pub name: String,
    pub v1: Vec2,
    pub v2: Vec2,
    /// Corner of the unit cell parallelogram `origin + [0,1] v1 + [0,1] v2`.
    pub cell_origin: Vec2,
    pub basic_nodes: Vec<Vec2>,
    pub springs: Vec<Spring>,
    pub triangles: Vec<PenalizedTriangle>,
    pub markers: Vec<MarkerPair>,
    /// Periodic triangulation of one fundamental domain, used for interpolation.
    pub triangulation: Vec<[NodeRef; 3]>,
    pub alpha: f64,
    pub c_marker: f64,
    shares: Vec<Vec<SpringShare>>,
    unattributed: Vec<usize>,
    /// Lattice-coordinate bounding boxes of triangulation triangles.
    tri_boxes: Vec<[f64; 4]>,
}

/// Raw lattice data before validation. Rest lengths and areas are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeParts {
    pub name: String,
    pub v1: Vec2,
    pub v2: Vec2,
    pub cell_origin: Vec2,
    pub basic_nodes: Vec<Vec2>,
    /// `(a, b, stiffness)`.
    pub springs: Vec<(NodeRef, NodeRef, f64)>,
    pub triangles: Vec<[NodeRef; 3]>,
    pub markers: Vec<MarkerPair>,
    pub triangulation: Vec<[NodeRef; 3]>,
    pub alpha: f64,
    pub c_marker: f64,
}

fn same_pair(a: NodeRef, b: NodeRef, p: NodeRef, q: NodeRef) -> Option<[i64; 2]> {
    if a.basic != p.basic || b.basic != q.basic {
        return None;
    }
    let d = [p.offset[0] - a.offset[0], p.offset[1] - a.offset[1]];
    (b.shifted(d) == q).then_some(d)
}

impl LatticeSpec {
    /// Validates raw parts and derives rest lengths, areas and attributions.
    pub fn from_parts(p: LatticeParts) -> Result<Self> {
        let det = p.v1.cross(p.v2);
        if !(det.abs() > GEOM_TOL) || !det.is_finite() {
            bail!(DegenerateGeometry, "lattice vectors are linearly dependent");
        }
        if p.basic_nodes.is_empty() {
            bail!(DegenerateGeometry, "no basic nodes");
        }
        if p.basic_nodes.iter().any(|v| !v.is_finite()) || !p.cell_origin.is_finite() {
            bail!(DegenerateGeometry, "non-finite node coordinates");
        }
        let nb = p.basic_nodes.len();
        let pos = |n: NodeRef| -> Result<Vec2> {
            if n.basic >= nb {
                return Err(Error::UnknownNode { basic: n.basic, count: nb });
            }
            Ok(p.basic_nodes[n.basic] + p.v1 * n.offset[0] as f64 + p.v2 * n.offset[1] as f64)
        };
        let mut springs = Vec::with_capacity(p.springs.len());
        for &(a, b, k) in &p.springs {
            let len = (pos(b)? - pos(a)?).norm();
            if !(len > GEOM_TOL) {
                bail!(DegenerateGeometry, "spring between coincident nodes");
            }
            if !(k > 0.0) || !k.is_finite() {
                bail!(InvalidArgument, "spring stiffness must be positive, got {k}");
            }
            springs.push(Spring { a, b, rest_length: len, stiffness: k });
        }
        let oriented = |t: [NodeRef; 3]| -> Result<([NodeRef; 3], f64)> {
            let (x0, x1, x2) = (pos(t[0])?, pos(t[1])?, pos(t[2])?);
            let c = (x1 - x0).cross(x2 - x0);
            if !(c.abs() > GEOM_TOL) {
                bail!(DegenerateGeometry, "triangle with zero area");
            }
            Ok(if c > 0.0 { (t, 0.5 * c) } else { ([t[0], t[2], t[1]], -0.5 * c) })
        };
        let mut triangles = Vec::with_capacity(p.triangles.len());
        for &t in &p.triangles {
            let (nodes, area) = oriented(t)?;
            triangles.push(PenalizedTriangle { nodes, area });
        }
        for m in &p.markers {
            if m.triangle >= triangles.len() {
                bail!(InvalidArgument, "marker refers to missing triangle {}", m.triangle);
            }
            for n in m.b.iter().chain(m.r.iter()) {
                pos(*n)?;
            }
        }
        if p.markers.is_empty() {
            bail!(InvalidArgument, "at least one marker pair is required");
        }
        let mut triangulation = Vec::with_capacity(p.triangulation.len());
        let mut covered = 0.0;
        for &t in &p.triangulation {
            let (x0, x1, x2) = (pos(t[0])?, pos(t[1])?, pos(t[2])?);
            let c = (x1 - x0).cross(x2 - x0);
            if !(c > GEOM_TOL) {
                bail!(DegenerateGeometry, "triangulation triangle is degenerate or clockwise");
            }
            covered += 0.5 * c;
            triangulation.push(t);
        }
        if (covered - det.abs()).abs() > 1e-8 * det.abs() {
            bail!(
                DegenerateGeometry,
                "triangulation covers area {covered} but the cell has area {}",
                det.abs()
            );
        }
        if !(p.alpha > 0.0 && p.alpha < PI) {
            bail!(InvalidArgument, "marker angle must lie in (0, pi), got {}", p.alpha);
        }
        if !(p.c_marker > 0.0) || !p.c_marker.is_finite() {
            bail!(InvalidArgument, "marker ratio must be positive");
        }

        // Attribute each spring class to the penalized triangles containing it.
        let mut members: Vec<Vec<(usize, [i64; 2])>> = alloc::vec![Vec::new(); springs.len()];
        for (ti, t) in triangles.iter().enumerate() {
            for (pi, qi) in [(0, 1), (1, 2), (2, 0)] {
                let (np, nq) = (t.nodes[pi], t.nodes[qi]);
                for (si, s) in springs.iter().enumerate() {
                    let hit = same_pair(s.a, s.b, np, nq).or_else(|| same_pair(s.a, s.b, nq, np));
                    if let Some(d) = hit {
                        members[si].push((ti, d));
                    }
                }
            }
        }
        let mut shares = alloc::vec![Vec::new(); triangles.len()];
        let mut unattributed = Vec::new();
        for (si, m) in members.iter().enumerate() {
            if m.is_empty() {
                unattributed.push(si);
            }
            let w = 1.0 / m.len().max(1) as f64;
            for &(ti, d) in m {
                shares[ti].push(SpringShare { spring: si, shift: d, weight: w });
            }
        }

        let basis_inv = Mat2::from_cols(p.v1, p.v2).inverse().expect("checked above");
        let mut tri_boxes = Vec::with_capacity(triangulation.len());
        for t in &triangulation {
            let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
            for n in t {
                let l = basis_inv * pos(*n)?;
                b[0] = b[0].min(l.x);
                b[1] = b[1].max(l.x);
                b[2] = b[2].min(l.y);
                b[3] = b[3].max(l.y);
            }
            tri_boxes.push(b);
        }

        Ok(LatticeSpec {
            name: p.name,
            v1: p.v1,
            v2: p.v2,
            cell_origin: p.cell_origin,
            basic_nodes: p.basic_nodes,
            springs,
            triangles,
            markers: p.markers,
            triangulation,
            alpha: p.alpha,
            c_marker: p.c_marker,
            shares,
            unattributed,
            tri_boxes,
        })
    }

    /// Reconstructs the raw parts, for serialization.
    pub fn to_parts(&self) -> LatticeParts {
        LatticeParts {
            name: self.name.clone(),
            v1: self.v1,
            v2: self.v2,
            cell_origin: self.cell_origin,
            basic_nodes: self.basic_nodes.clone(),
            springs: self.springs.iter().map(|s| (s.a, s.b, s.stiffness)).collect(),
            triangles: self.triangles.iter().map(|t| t.nodes).collect(),
            markers: self.markers.clone(),
            triangulation: self.triangulation.clone(),
            alpha: self.alpha,
            c_marker: self.c_marker,
        }
    }

    pub fn num_basic(&self) -> usize {
        self.basic_nodes.len()
    }

    pub fn basis(&self) -> Mat2 {
        Mat2::from_cols(self.v1, self.v2)
    }

    /// `|det [v1 v2]|`.
    pub fn cell_area(&self) -> f64 {
        self.v1.cross(self.v2).abs()
    }

    /// Reference position of a node.
    pub fn position(&self, n: NodeRef) -> Vec2 {
        self.basic_nodes[n.basic] + self.v1 * n.offset[0] as f64 + self.v2 * n.offset[1] as f64
    }

    /// Springs attributed to each penalized triangle.
    pub fn shares(&self, triangle: usize) -> &[SpringShare] {
        &self.shares[triangle]
    }

    /// Springs that belong to no penalized triangle.
    pub fn unattributed_springs(&self) -> &[usize] {
        &self.unattributed
    }

    /// Total area of the penalized triangles in one cell.
    pub fn penalized_area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area).sum()
    }

    /// Corners of the unit cell parallelogram, counter-clockwise when
    /// `det [v1 v2] > 0`.
    pub fn cell_corners(&self) -> [Vec2; 4] {
        let o = self.cell_origin;
        [o, o + self.v1, o + self.v1 + self.v2, o + self.v2]
    }

    /// Candidate triangulation translates whose box contains the lattice
    /// coordinates `l`: yields `(triangle, shift)`.
    pub(crate) fn candidates(&self, l: Vec2) -> impl Iterator<Item = (usize, [i64; 2])> + '_ {
        self.tri_boxes.iter().enumerate().flat_map(move |(ti, b)| {
            let i0 = math::floor(l.x - b[1] - 1e-9) as i64;
            let i1 = math::floor(l.x - b[0] + 1e-9) as i64 + 1;
            let j0 = math::floor(l.y - b[3] - 1e-9) as i64;
            let j1 = math::floor(l.y - b[2] + 1e-9) as i64 + 1;
            (i0..=i1).flat_map(move |i| (j0..=j1).map(move |j| (ti, [i, j])))
        })
    }

    /// Finds a triangulation triangle (with its shift) containing `p` and the
    /// barycentric weights of `p` in it.
    pub fn locate(&self, p: Vec2) -> Result<([NodeRef; 3], [f64; 3])> {
        let inv = self.basis().inverse().expect("validated basis");
        let l = inv * p;
        let mut best: Option<([NodeRef; 3], [f64; 3], f64)> = None;
        for (ti, d) in self.candidates(l) {
            let t = self.triangulation[ti].map(|n| n.shifted(d));
            let (x0, x1, x2) = (self.position(t[0]), self.position(t[1]), self.position(t[2]));
            let area2 = (x1 - x0).cross(x2 - x0);
            let b1 = (p - x0).cross(x2 - x0) / area2;
            let b2 = (x1 - x0).cross(p - x0) / area2;
            let b0 = 1.0 - b1 - b2;
            let worst = b0.min(b1).min(b2);
            if best.as_ref().map_or(true, |b| worst > b.2) {
                best = Some((t, [b0, b1, b2], worst));
            }
            if worst >= 0.0 {
                break;
            }
        }
        match best {
            Some((t, w, worst)) if worst >= -1e-9 => Ok((t, w)),
            _ => Err(Error::OutsideTriangulation { x: p.x, y: p.y }),
        }
    }
}

/// Positions assigned to individual lattice nodes, for aperiodic deformations.
pub type NodalField = BTreeMap<NodeRef, Vec2>;

/// A `k x k` periodic supercell of a lattice.
#[derive(Debug, Clone, Copy)]
pub struct Supercell<'a> {
    pub spec: &'a LatticeSpec,
    pub k: usize,
}

impl<'a> Supercell<'a> {
    pub fn new(spec: &'a LatticeSpec, k: usize) -> Result<Self> {
        if k == 0 {
            bail!(InvalidArgument, "supercell size must be at least 1");
        }
        Ok(Supercell { spec, k })
    }

    pub fn num_nodes(&self) -> usize {
        self.spec.num_basic() * self.k * self.k
    }

    /// `k^2 |det [v1 v2]|`.
    pub fn area(&self) -> f64 {
        (self.k * self.k) as f64 * self.spec.cell_area()
    }

    /// Reduces a node reference translated by `cell` modulo `k` to an index.
    #[inline]
    pub fn index(&self, n: NodeRef, cell: [i64; 2]) -> usize {
        let k = self.k as i64;
        let i = (n.offset[0] + cell[0]).rem_euclid(k) as usize;
        let j = (n.offset[1] + cell[1]).rem_euclid(k) as usize;
        (n.basic * self.k + i) * self.k + j
    }

    /// Basic index and cell of a flat node index.
    pub fn unflatten(&self, idx: usize) -> NodeRef {
        let k = self.k;
        NodeRef::new(idx / (k * k), ((idx / k) % k) as i64, (idx % k) as i64)
    }

    /// All cells `(i, j)` with `0 <= i, j < k`.
    pub fn cells(&self) -> impl Iterator<Item = [i64; 2]> {
        let k = self.k as i64;
        (0..k).flat_map(move |i| (0..k).map(move |j| [i, j]))
    }

    /// Reference position of `n` translated by `cell`.
    pub fn reference(&self, n: NodeRef, cell: [i64; 2]) -> Vec2 {
        self.spec.position(n.shifted(cell))
    }
}

/// Deformation `u(x) = lambda x + psi(x)` with `psi` periodic on a supercell.
#[derive(Debug, Clone)]
pub struct PeriodicDeformation<'a> {
    pub cell: Supercell<'a>,
    pub lambda: Mat2,
    pub psi: Vec<Vec2>,
}

impl<'a> PeriodicDeformation<'a> {
    pub fn new(cell: Supercell<'a>, lambda: Mat2, psi: Vec<Vec2>) -> Result<Self> {
        if psi.len() != cell.num_nodes() {
            bail!(
                InvalidArgument,
                "periodic field has {} entries, supercell needs {}",
                psi.len(),
                cell.num_nodes()
            );
        }
        if !lambda.is_finite() || psi.iter().any(|v| !v.is_finite()) {
            bail!(InvalidArgument, "deformation has non-finite entries");
        }
        Ok(PeriodicDeformation { cell, lambda, psi })
    }

    /// The affine deformation `x -> lambda x`.
    pub fn affine(cell: Supercell<'a>, lambda: Mat2) -> Self {
        PeriodicDeformation { cell, lambda, psi: alloc::vec![Vec2::ZERO; cell.num_nodes()] }
    }

    pub fn identity(cell: Supercell<'a>) -> Self {
        Self::affine(cell, Mat2::IDENTITY)
    }

    pub fn spec(&self) -> &'a LatticeSpec {
        self.cell.spec
    }

    /// Deformed position of `n` translated by `cell`.
    #[inline]
    pub fn evaluate(&self, n: NodeRef, cell: [i64; 2]) -> Vec2 {
        self.lambda * self.cell.reference(n, cell) + self.psi[self.cell.index(n, cell)]
    }

    /// Piecewise-linear interpolation of the deformation and its gradient.
    pub fn interpolate(&self, p: Vec2) -> Result<(Vec2, Mat2)> {
        let spec = self.spec();
        let (t, w) = spec.locate(p)?;
        let u = t.map(|n| self.evaluate(n, [0, 0]));
        let x = t.map(|n| spec.position(n));
        let value = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
        Ok((value, triangle_gradient(x, u)))
    }

    /// Gradients on every triangulation triangle of the supercell with their
    /// reference areas.
    pub fn gradient_field(&self) -> Vec<(f64, Mat2)> {
        let spec = self.spec();
        let mut out = Vec::with_capacity(spec.triangulation.len() * self.cell.k * self.cell.k);
        for c in self.cell.cells() {
            for t in &spec.triangulation {
                let x = t.map(|n| self.cell.reference(n, c));
                let u = t.map(|n| self.evaluate(n, c));
                out.push((0.5 * (x[1] - x[0]).cross(x[2] - x[0]), triangle_gradient(x, u)));
            }
        }
        out
    }
}

/// Gradient of the affine map sending triangle `x` to triangle `u`.
pub fn triangle_gradient(x: [Vec2; 3], u: [Vec2; 3]) -> Mat2 {
    let dx = Mat2::from_cols(x[1] - x[0], x[2] - x[0]);
    let du = Mat2::from_cols(u[1] - u[0], u[2] - u[0]);
    du * dx.inverse().unwrap_or(Mat2::ZERO)
}

/// Parameters of the lattice families with rigid units of a common shape.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Variant {
    /// Kagome-type lattice of isosceles triangles with apex angle `apex` and
    /// leg lengths `s1`, `s2` for the two triangle families.
    IsoscelesKagome { apex: f64, s1: f64, s2: f64 },
    /// Kagome-type lattice of similar triangles: marked legs of length `s`
    /// and `c s` enclosing the angle `alpha`.
    GeneralKagome { alpha: f64, c: f64, s1: f64, s2: f64 },
    /// Two families of rhombi with side `s1` and `s2` and interior angle
    /// `alpha`, each with one diagonal spring.
    RhombusSquares { alpha: f64, s1: f64, s2: f64 },
    /// Quadrilaterals with spring diagonals of lengths `diag_b`, `diag_r`
    /// meeting at `alpha`; `split_b`, `split_r` locate the crossing point as a
    /// fraction of each diagonal. The quadrilateral alternates with its half
    /// turn so that every hole is a parallelogram, giving 16 basic nodes and 8
    /// units per cell.
    EqualDiagonalQuads { alpha: f64, diag_b: f64, diag_r: f64, split_b: f64, split_r: f64 },
}

fn check_angle(a: f64) -> Result<()> {
    if !(a > 0.0 && a < PI) {
        bail!(InvalidArgument, "angle must lie in (0, pi), got {a}");
    }
    Ok(())
}

fn check_len(s: f64, what: &str) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        bail!(InvalidArgument, "{what} must be positive, got {s}");
    }
    Ok(())
}

/// Builds a lattice of the given family.
pub fn build_variant(v: Variant) -> Result<LatticeSpec> {
    match v {
        Variant::IsoscelesKagome { apex, s1, s2 } => kagome_family("isosceles-kagome", apex, 1.0, s1, s2),
        Variant::GeneralKagome { alpha, c, s1, s2 } => kagome_family("general-kagome", alpha, c, s1, s2),
        Variant::RhombusSquares { alpha, s1, s2 } => squares_family("rhombus-squares", alpha, s1, s2),
        Variant::EqualDiagonalQuads { alpha, diag_b, diag_r, split_b, split_r } => {
            quads_family(alpha, diag_b, diag_r, split_b, split_r)
        }
    }
}

/// Names accepted by [`builtin`]: the two base lattices, then one preset of
/// each variant family.
pub const BUILTIN_NAMES: [&str; 6] =
    ["kagome", "rotating-squares", "isosceles-kagome", "general-kagome", "rhombus-squares", "equal-diagonal-quads"];

impl Variant {
    /// Preset parameters of the variant family called `name`.
    pub fn preset(name: &str) -> Option<Variant> {
        Some(match name {
            "isosceles-kagome" => Variant::IsoscelesKagome { apex: 1.2, s1: 1.0, s2: 0.6 },
            "general-kagome" => Variant::GeneralKagome { alpha: 1.4, c: 0.7, s1: 1.0, s2: 1.5 },
            "rhombus-squares" => Variant::RhombusSquares { alpha: 1.2, s1: 1.0, s2: 0.5 },
            "equal-diagonal-quads" => {
                Variant::EqualDiagonalQuads { alpha: 1.3, diag_b: 2.0, diag_r: 2.0, split_b: 0.4, split_r: 0.55 }
            }
            _ => return None,
        })
    }
}

/// Built-in lattice by name, see [`BUILTIN_NAMES`].
pub fn builtin(name: &str) -> Result<LatticeSpec> {
    match name {
        "kagome" => Ok(build_kagome()),
        "rotating-squares" => Ok(build_rotating_squares()),
        _ => match Variant::preset(name) {
            Some(v) => build_variant(v),
            None => bail!(InvalidArgument, "unknown lattice `{name}`"),
        },
    }
}

/// Kagome lattice of unit equilateral triangles.
///
/// Basic nodes `A`, `B`, `C`; `v1 = (2, 0)`, `v2 = (1, sqrt 3)`. Each cell has
/// six springs and two penalized triangles `ABC` and its neighbour at `B`.
pub fn build_kagome() -> LatticeSpec {
    kagome_family("kagome", FRAC_PI_3, 1.0, 1.0, 1.0).expect("fixed parameters are valid")
}

/// Rotating Squares lattice of unit squares.
///
/// Four basic nodes, `v1 = (2, 0)`, `v2 = (0, 2)`, ten springs (the two square
/// diagonals with stiffness 2) and four penalized right triangles.
pub fn build_rotating_squares() -> LatticeSpec {
    squares_family("rotating-squares", FRAC_PI_2, 1.0, 1.0).expect("fixed parameters are valid")
}

fn kagome_family(name: &str, alpha: f64, c: f64, s1: f64, s2: f64) -> Result<LatticeSpec> {
    check_angle(alpha)?;
    check_len(c, "marker ratio")?;
    check_len(s1, "size s1")?;
    check_len(s2, "size s2")?;
    let e = Vec2::new(1.0, 0.0);
    let re = Vec2::polar(alpha) * c;
    let l = s1 + s2;
    let (a, b, cc) = (0, 1, 2);
    let n = NodeRef::new;
    // C at the origin, B at the end of the first bottom leg.
    let basic = alloc::vec![e * s1 - re * s1, e * s1, Vec2::ZERO];
    let springs = alloc::vec![
        (n(cc, 0, 0), n(b, 0, 0), 1.0),
        (n(a, 0, 0), n(b, 0, 0), 1.0),
        (n(a, 0, 0), n(cc, 0, 0), 1.0),
        (n(b, 0, 0), n(cc, 1, 0), 1.0),
        (n(b, 0, 0), n(a, 0, 1), 1.0),
        (n(a, 0, 1), n(cc, 1, 0), 1.0),
    ];
    let triangles = alloc::vec![
        [n(cc, 0, 0), n(b, 0, 0), n(a, 0, 0)],
        [n(b, 0, 0), n(cc, 1, 0), n(a, 0, 1)],
    ];
    let markers = alloc::vec![
        MarkerPair { b: [n(cc, 0, 0), n(b, 0, 0)], r: [n(a, 0, 0), n(b, 0, 0)], triangle: 0 },
        MarkerPair { b: [n(b, 0, 0), n(cc, 1, 0)], r: [n(b, 0, 0), n(a, 0, 1)], triangle: 1 },
    ];
    // Both triangles plus a fan over the hexagonal hole from C.
    let hex = [n(cc, 0, 0), n(b, 0, 0), n(a, 0, 1), n(cc, 0, 1), n(b, -1, 1), n(a, -1, 1)];
    let mut triangulation = alloc::vec![
        [n(cc, 0, 0), n(a, 0, 0), n(b, 0, 0)],
        [n(b, 0, 0), n(cc, 1, 0), n(a, 0, 1)],
    ];
    for w in 1..5 {
        triangulation.push([hex[0], hex[w], hex[w + 1]]);
    }
    let v2 = re * l;
    LatticeSpec::from_parts(LatticeParts {
        name: name.into(),
        v1: e * l,
        v2,
        cell_origin: -(v2 * (s1 / l)),
        basic_nodes: basic,
        springs,
        triangles,
        markers,
        triangulation,
        alpha,
        c_marker: c,
    })
}

fn squares_family(name: &str, alpha: f64, s1: f64, s2: f64) -> Result<LatticeSpec> {
    check_angle(alpha)?;
    check_len(s1, "size s1")?;
    check_len(s2, "size s2")?;
    let e = Vec2::new(1.0, 0.0);
    let re = Vec2::polar(alpha);
    let l = s1 + s2;
    let at = [0.0, s1];
    // Grid point g(a, b), a and b in 0..=2, as a node reference.
    let g = |a: i64, b: i64| NodeRef::new(((a % 2) * 2 + (b % 2)) as usize, a / 2, b / 2);
    let mut basic = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            basic.push(e * at[a] + re * at[b]);
        }
    }
    let springs = alloc::vec![
        (g(0, 0), g(1, 0), 1.0),
        (g(1, 0), g(2, 0), 1.0),
        (g(0, 1), g(1, 1), 1.0),
        (g(1, 1), g(2, 1), 1.0),
        (g(0, 0), g(0, 1), 1.0),
        (g(0, 1), g(0, 2), 1.0),
        (g(1, 0), g(1, 1), 1.0),
        (g(1, 1), g(1, 2), 1.0),
        (g(1, 0), g(0, 1), 2.0),
        (g(2, 1), g(1, 2), 2.0),
    ];
    let triangles = alloc::vec![
        [g(0, 0), g(1, 0), g(0, 1)],
        [g(1, 1), g(0, 1), g(1, 0)],
        [g(1, 1), g(2, 1), g(1, 2)],
        [g(2, 2), g(1, 2), g(2, 1)],
    ];
    let mk = |b: [NodeRef; 2], r: [NodeRef; 2], t| MarkerPair { b, r, triangle: t };
    let markers = alloc::vec![
        mk([g(0, 0), g(1, 0)], [g(0, 0), g(0, 1)], 0),
        mk([g(0, 1), g(1, 1)], [g(1, 0), g(1, 1)], 1),
        mk([g(1, 1), g(2, 1)], [g(1, 1), g(1, 2)], 2),
        mk([g(1, 2), g(2, 2)], [g(2, 1), g(2, 2)], 3),
    ];
    let mut triangulation: Vec<[NodeRef; 3]> = Vec::new();
    for t in &triangles {
        triangulation.push(*t);
    }
    triangulation.extend([
        [g(1, 0), g(2, 0), g(2, 1)],
        [g(1, 0), g(2, 1), g(1, 1)],
        [g(0, 1), g(1, 1), g(1, 2)],
        [g(0, 1), g(1, 2), g(0, 2)],
    ]);
    // Fix orientation of the rigid triangles inside the triangulation.
    let pos = |n: NodeRef| basic[n.basic] + e * (l * n.offset[0] as f64) + re * (l * n.offset[1] as f64);
    for t in triangulation.iter_mut() {
        if (pos(t[1]) - pos(t[0])).cross(pos(t[2]) - pos(t[0])) < 0.0 {
            t.swap(1, 2);
        }
    }
    LatticeSpec::from_parts(LatticeParts {
        name: name.into(),
        v1: e * l,
        v2: re * l,
        cell_origin: Vec2::ZERO,
        basic_nodes: basic,
        springs,
        triangles,
        markers,
        triangulation,
        alpha,
        c_marker: 1.0,
    })
}

fn quads_family(alpha: f64, diag_b: f64, diag_r: f64, split_b: f64, split_r: f64) -> Result<LatticeSpec> {
    check_angle(alpha)?;
    check_len(diag_b, "diagonal diag_b")?;
    check_len(diag_r, "diagonal diag_r")?;
    if (diag_b - diag_r).abs() > 1e-12 * diag_b.max(diag_r) {
        bail!(DegenerateGeometry, "quadrilateral diagonals differ: {diag_b} vs {diag_r}");
    }
    for s in [split_b, split_r] {
        if !(s > 0.0 && s < 1.0) {
            bail!(InvalidArgument, "diagonal split must lie in (0, 1), got {s}");
        }
    }
    let e = Vec2::new(1.0, 0.0) * diag_b;
    let re = Vec2::polar(alpha) * diag_r;
    // Corners in counter-clockwise order; the diagonals are q0 q2 and q1 q3.
    let q = [e * -split_b, re * -split_r, e * (1.0 - split_b), re * (1.0 - split_r)];
    // Grid regions (i, j) with i = j mod 2 hold a quadrilateral, the others are
    // parallelogram holes. Quads carry q or its half-turn, period 4 in i and j.
    const P: i64 = 4;
    let g = |a: i64, b: i64| {
        NodeRef::new((a.rem_euclid(P) * P + b.rem_euclid(P)) as usize, a.div_euclid(P), b.div_euclid(P))
    };
    let flipped = |i: i64, j: i64| (i.div_euclid(2) + j.div_euclid(2)).rem_euclid(2) == 1;
    // Corner k of the unit at (i, j), counter-clockwise from g(i, j).
    let corner = |i: i64, j: i64, k: usize| if flipped(i, j) { -q[(k + 2) % 4] } else { q[k] };
    let grid = |i: i64, j: i64| [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];

    // Place the units around one period by walking along shared hinges.
    let units: Vec<(i64, i64)> =
        (-1..=P).flat_map(|i| (-1..=P).map(move |j| (i, j))).filter(|(i, j)| (i - j).rem_euclid(2) == 0).collect();
    let mut pos: BTreeMap<(i64, i64), Vec2> = BTreeMap::new();
    let mut placed = alloc::vec![false; units.len()];
    for c in grid(0, 0).iter().enumerate() {
        pos.insert(*c.1, corner(0, 0, c.0));
    }
    while placed.iter().any(|p| !p) {
        let mut progress = false;
        for (u, &(i, j)) in units.iter().enumerate() {
            if placed[u] {
                continue;
            }
            let cs = grid(i, j);
            let Some(shift) = cs.iter().enumerate().find_map(|(k, c)| pos.get(c).map(|p| *p - corner(i, j, k)))
            else {
                continue;
            };
            for (k, c) in cs.iter().enumerate() {
                pos.entry(*c).or_insert(shift + corner(i, j, k));
            }
            placed[u] = true;
            progress = true;
        }
        debug_assert!(progress);
    }
    for &(i, j) in &units {
        let cs = grid(i, j);
        let shift = pos[&cs[0]] - corner(i, j, 0);
        for (k, c) in cs.iter().enumerate() {
            debug_assert!((pos[c] - shift - corner(i, j, k)).norm() < 1e-9, "inconsistent hinge");
        }
    }
    let at = |a: i64, b: i64| pos[&(a, b)];
    let v1 = at(P, 0) - at(0, 0);
    let v2 = at(0, P) - at(0, 0);
    for a in 0..=P {
        for b in 0..=P {
            if let Some(p) = pos.get(&(a, b)) {
                let base = at(a.rem_euclid(P), b.rem_euclid(P));
                let want = base + v1 * a.div_euclid(P) as f64 + v2 * b.div_euclid(P) as f64;
                debug_assert!((*p - want).norm() < 1e-9, "quad lattice does not close");
            }
        }
    }
    let mut basic = Vec::with_capacity((P * P) as usize);
    for a in 0..P {
        for b in 0..P {
            basic.push(at(a, b));
        }
    }
    let mut springs = Vec::new();
    let mut triangles = Vec::new();
    let mut markers = Vec::new();
    let mut triangulation = Vec::new();
    let place = |c: (i64, i64)| at(c.0, c.1);
    let ccw = |t: [(i64, i64); 3]| {
        let x = t.map(place);
        let t = t.map(|c| g(c.0, c.1));
        if (x[1] - x[0]).cross(x[2] - x[0]) > 0.0 { t } else { [t[0], t[2], t[1]] }
    };
    for i in 0..P {
        for j in 0..P {
            let cs = grid(i, j);
            let n = |k: usize| g(cs[k].0, cs[k].1);
            let t0 = ccw([cs[0], cs[1], cs[2]]);
            let t1 = ccw([cs[0], cs[2], cs[3]]);
            triangulation.push(t0);
            triangulation.push(t1);
            if (i - j).rem_euclid(2) != 0 {
                continue;
            }
            for k in 0..4 {
                springs.push((n(k), n((k + 1) % 4), 1.0));
            }
            springs.push((n(0), n(2), 1.0));
            springs.push((n(1), n(3), 1.0));
            let ti = triangles.len();
            triangles.push(t0);
            triangles.push(t1);
            // Diagonals chain from cell to cell, and the half turn keeps their direction.
            markers.push(MarkerPair { b: [n(0), n(2)], r: [n(1), n(3)], triangle: ti });
        }
    }
    LatticeSpec::from_parts(LatticeParts {
        name: "equal-diagonal-quads".into(),
        v1,
        v2,
        cell_origin: at(0, 0),
        basic_nodes: basic,
        springs,
        triangles,
        markers,
        triangulation,
        alpha,
        c_marker: diag_r / diag_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SQRT_3;

    fn all_builtins() -> Vec<LatticeSpec> {
        BUILTIN_NAMES.iter().map(|n| builtin(n).unwrap()).collect()
    }

    #[test]
    fn kagome_counts_and_lengths() {
        let k = build_kagome();
        assert_eq!(k.num_basic(), 3);
        assert_eq!(k.springs.len(), 6);
        assert_eq!(k.triangles.len(), 2);
        assert!((k.cell_area() - 2.0 * SQRT_3).abs() < 1e-14);
        for s in &k.springs {
            assert!((s.rest_length - 1.0).abs() < 1e-14);
        }
        for t in &k.triangles {
            assert!((t.area - SQRT_3 / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn squares_counts_and_lengths() {
        let r = build_rotating_squares();
        assert_eq!(r.num_basic(), 4);
        assert_eq!(r.springs.len(), 10);
        assert_eq!(r.triangles.len(), 4);
        assert!((r.cell_area() - 4.0).abs() < 1e-14);
        let diag: Vec<_> = r.springs.iter().filter(|s| s.stiffness == 2.0).collect();
        assert_eq!(diag.len(), 2);
        for s in &r.springs {
            let want = if s.stiffness == 2.0 { 2f64.sqrt() } else { 1.0 };
            assert!((s.rest_length - want).abs() < 1e-14);
        }
        for t in &r.triangles {
            assert!((t.area - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn markers_rotate_by_alpha() {
        for spec in all_builtins() {
            let rot = Mat2::rotation(spec.alpha) * spec.c_marker;
            for m in &spec.markers {
                let b = spec.position(m.b[1]) - spec.position(m.b[0]);
                let r = spec.position(m.r[1]) - spec.position(m.r[0]);
                assert!((rot * b - r).norm() < 1e-12, "{}", spec.name);
            }
        }
    }

    #[test]
    fn every_spring_is_attributed_once_per_unit_weight() {
        for spec in [build_kagome(), build_rotating_squares()] {
            assert!(spec.unattributed_springs().is_empty());
            let mut total = alloc::vec![0.0; spec.springs.len()];
            for t in 0..spec.triangles.len() {
                for s in spec.shares(t) {
                    total[s.spring] += s.weight;
                }
            }
            assert!(total.iter().all(|w| (w - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn springs_lie_near_unit_cell() {
        // Skewed quadrilaterals stick out of the cell parallelogram a little.
        for spec in all_builtins() {
            let margin = if spec.name == "equal-diagonal-quads" { 0.1 } else { 1e-12 };
            let inv = spec.basis().inverse().unwrap();
            for s in &spec.springs {
                for n in [s.a, s.b] {
                    let l = inv * (spec.position(n) - spec.cell_origin);
                    assert!(l.x > -margin && l.x < 1.0 + margin, "{} {l:?}", spec.name);
                    assert!(l.y > -margin && l.y < 1.0 + margin, "{} {l:?}", spec.name);
                }
            }
        }
    }

    #[test]
    fn locate_finds_points_everywhere() {
        for spec in all_builtins() {
            for i in 0..37 {
                for j in 0..23 {
                    let p = Vec2::new(-3.1 + 0.17 * i as f64, -2.3 + 0.21 * j as f64);
                    let (t, w) = spec.locate(p).unwrap();
                    let q = spec.position(t[0]) * w[0]
                        + spec.position(t[1]) * w[1]
                        + spec.position(t[2]) * w[2];
                    assert!((p - q).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn supercell_index_reduces_offsets() {
        let spec = build_kagome();
        let sc = Supercell::new(&spec, 3).unwrap();
        let n = NodeRef::new(2, 1, -1);
        assert_eq!(sc.index(n, [2, 1]), sc.index(NodeRef::new(2, 0, 0), [0, 0]));
        assert_eq!(sc.unflatten(sc.index(n, [0, 0])), NodeRef::new(2, 1, 2));
        assert!((sc.area() - 9.0 * 2.0 * SQRT_3).abs() < 1e-12);
        assert!(Supercell::new(&spec, 0).is_err());
    }

    #[test]
    fn affine_interpolation_is_exact() {
        let spec = build_rotating_squares();
        let sc = Supercell::new(&spec, 2).unwrap();
        let lam = Mat2::new(0.9, 0.2, -0.1, 1.1);
        let def = PeriodicDeformation::affine(sc, lam);
        let (u, g) = def.interpolate(Vec2::new(0.3, 1.7)).unwrap();
        assert!((u - lam * Vec2::new(0.3, 1.7)).norm() < 1e-13);
        assert!(g.max_abs_diff(lam) < 1e-13);
    }

    #[test]
    fn unequal_quad_diagonals_rejected() {
        let v = Variant::EqualDiagonalQuads { alpha: 1.0, diag_b: 2.0, diag_r: 1.5, split_b: 0.5, split_r: 0.5 };
        assert!(matches!(build_variant(v), Err(Error::DegenerateGeometry(_))));
        assert!(matches!(
            build_variant(Variant::IsoscelesKagome { apex: 3.5, s1: 1.0, s2: 1.0 }),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn periodic_field_length_checked() {
        let spec = build_kagome();
        let sc = Supercell::new(&spec, 2).unwrap();
        assert!(PeriodicDeformation::new(sc, Mat2::IDENTITY, alloc::vec![Vec2::ZERO; 3]).is_err());
    }
}
