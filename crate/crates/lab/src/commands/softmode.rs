use std::path::Path;

use metalattice::geometry::Polygon;
use metalattice::mechanisms::{mechanism_search, SearchOptions};
use metalattice::softmodes::{continue_branch, modulate_with, scaling_report, triangle_rotations, weak_limit_check, ConformalTarget, Rational, ScalingReport, StateTable, WeakLimitReport};
use metalattice::{LatticeSpec, NodeRef, Supercell, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_geometry, Context, Report};
use crate::cli::{SoftModeArgs, TableKind};
use crate::error::{LabError, LabResult};
use crate::row;
use crate::spec_io::load_spec;

/// Restarts of the search that feeds the two-periodic table.
pub const TABLE_RESTARTS: usize = 64;
/// Start perturbation of that search; small values stay near the identity.
pub const TABLE_PERTURBATION: f64 = 1.2;
/// Compression step of the branch continuation.
pub const TABLE_STEP: f64 = 0.005;

/// File form of a conformal target: rational map and polygon vertices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDocument {
    pub f: Rational,
    pub domain: Vec<[f64; 2]>,
}

pub fn parse_target(s: &str) -> LabResult<ConformalTarget> {
    let bad = |m: &str| LabError::Usage(format!("target '{s}': {m}"));
    Ok(match s {
        "quadratic" => ConformalTarget::quadratic(),
        "identity" => ConformalTarget::identity(),
        _ if s.starts_with("uniform:") => {
            let v: Vec<f64> = s["uniform:".len()..]
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("expected uniform:C,PHI"))?;
            let [c, phi] = v[..] else { return Err(bad("expected uniform:C,PHI")) };
            ConformalTarget::uniform(c, phi)?
        }
        _ if s.starts_with("file:") => load_target(Path::new(&s["file:".len()..]))?,
        _ => return Err(bad("expected quadratic, identity, uniform:C,PHI or file:PATH")),
    })
}

fn load_target(path: &Path) -> LabResult<ConformalTarget> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let doc: TargetDocument = serde_json::from_str(&text).map_err(|e| LabError::format(path, e))?;
    let poly = Polygon::new(doc.domain.iter().map(|p| Vec2::new(p[0], p[1])).collect())?;
    Ok(ConformalTarget::new(doc.f, poly)?)
}

/// Parses `0.125` or `1/8`.
pub fn parse_scale(s: &str) -> LabResult<f64> {
    let bad = || LabError::Usage(format!("bad scale '{s}'"));
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().map_err(|_| bad())? / b.trim().parse::<f64>().map_err(|_| bad())?,
        None => s.trim().parse::<f64>().map_err(|_| bad())?,
    };
    if !(v > 0.0 && v.is_finite()) {
        return Err(bad());
    }
    Ok(v)
}

/// Largest change of the periodic field between cells of the supercell;
/// zero for a replicated one-periodic state.
fn cell_variation(spec: &LatticeSpec, k: usize, psi: &[Vec2]) -> f64 {
    let cell = Supercell { spec, k };
    let mut d: f64 = 0.0;
    for b in 0..spec.num_basic() {
        let n = NodeRef::new(b, 0, 0);
        let p0 = psi[cell.index(n, [0, 0])];
        for c in cell.cells() {
            d = d.max((psi[cell.index(n, c)] - p0).norm());
        }
    }
    d
}

/// Isotropic mechanisms of the search on the double cell that are not
/// replicated twists; the one varying most between cells is continued
/// along its branch.
fn two_periodic(spec: &LatticeSpec, seed: u64) -> LabResult<StateTable<'static>> {
    let k = 2;
    let rep = mechanism_search(spec, SearchOptions { k, seeds: TABLE_RESTARTS, perturbation: TABLE_PERTURBATION, seed, ..Default::default() })?;
    let best = rep
        .hits
        .iter()
        .filter(|h| h.is_isotropic(1e-8) && h.lambda.det() > 0.0)
        .map(|h| (cell_variation(spec, k, &h.psi), h))
        .filter(|(d, _)| *d > 1e-6)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    let Some((_, hit)) = best else {
        return Err(metalattice::Error::Precondition("search found no isotropic two-periodic mechanism".into()).into());
    };
    let states = continue_branch(spec, k, hit.lambda, &hit.psi, TABLE_STEP, 1e-14)?;
    Ok(StateTable::tabulated(k, states)?)
}

#[derive(Serialize)]
struct Summary<'a> {
    target: &'a str,
    table: TableKind,
    min_derivative: f64,
    max_derivative: f64,
    scaling: &'a ScalingReport,
    weak_limit: &'a WeakLimitReport,
    final_over_first: f64,
}

pub fn soft_mode(ctx: &mut Context, args: &SoftModeArgs) -> LabResult<Report> {
    let spec = load_spec(&args.spec.spec)?;
    let target = parse_target(&args.target)?;
    let eps = args.eps.iter().map(|s| parse_scale(s)).collect::<LabResult<Vec<_>>>()?;
    if eps.is_empty() {
        return Err(LabError::Usage("--eps needs at least one scale".into()));
    }
    let cfg = &mut ctx.config;
    cfg.spec = Some(args.spec.spec.clone());
    cfg.eta = Some(args.eta);
    cfg.epsilons = eps.clone();
    cfg.param("target", &args.target).param("sweeps", args.sweeps).param("table", args.table).param("dump", args.dump);
    cfg.tolerance("monotonicity", 0.05);

    let table = match args.table {
        TableKind::Twist => StateTable::twist(&spec)?,
        TableKind::TwoPeriodic => two_periodic(&spec, ctx.config.seed)?,
    };
    let mods = eps.par_iter().map(|&e| modulate_with(&spec, &table, &target, e, args.sweeps)).collect::<Result<Vec<_>, _>>()?;
    let scaling = scaling_report(&spec, &target, &mods, args.eta)?;
    let weak = weak_limit_check(&spec, &mods, &target)?;

    let mut t = ctx.out.table(
        "soft-mode-scaling.csv",
        &[("epsilon", "length"), ("energy_per_area", "energy/area"), ("max_cell_energy", "energy"), ("cells", "1")],
    )?;
    for s in &scaling.rows {
        t.row(row![s.epsilon, s.energy_per_area, s.max_cell_energy, s.cells])?;
    }
    t.finish()?;
    let mut t = ctx.out.table(
        "soft-mode-weak-limit.csv",
        &[("epsilon", "length"), ("l2_distance", "length"), ("cr_residual", "1"), ("gradient_error", "1")],
    )?;
    for w in &weak.rows {
        t.row(row![w.epsilon, w.l2_distance, w.cr_residual, w.gradient_error])?;
    }
    t.finish()?;

    if args.dump {
        for (i, m) in mods.iter().enumerate() {
            let stem = format!("soft-mode-{i}");
            let cells: Vec<[i64; 2]> = m.field.keys().map(|n| n.offset).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            write_geometry(&mut ctx.out, &stem, &spec, &cells, |n| spec.position(n) * m.epsilon, |n| m.field.get(&n).copied())?;
            let mut t = ctx.out.table(
                &format!("{stem}-rotations.csv"),
                &[("cell_i", "cells"), ("cell_j", "cells"), ("triangle", "index"), ("angle", "rad")],
            )?;
            for (c, tri, a) in triangle_rotations(&spec, m) {
                t.row(row![c[0], c[1], tri, a])?;
            }
            t.finish()?;
        }
    }

    let first = scaling.rows[0].energy_per_area;
    let last = scaling.rows[scaling.rows.len() - 1].energy_per_area;
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    ctx.out.json(
        "soft-mode-summary.json",
        &Summary {
            target: &args.target,
            table: args.table,
            min_derivative: target.min_derivative,
            max_derivative: target.max_derivative,
            scaling: &scaling,
            weak_limit: &weak,
            final_over_first: ratio,
        },
    )?;

    let mut r = Report::default();
    for (s, w) in scaling.rows.iter().zip(&weak.rows) {
        r.line(format!("eps {:<10} energy/area {:e}  CR residual {:e}", s.epsilon, s.energy_per_area, w.cr_residual));
    }
    match scaling.exponent {
        Some(p) => r.line(format!("fitted exponent {p:.3}")),
        None => r.line("energy vanishes; no exponent fitted"),
    }
    r.check(scaling.monotonicity_violations == 0, format!("energy grew by more than 5% at {} steps", scaling.monotonicity_violations));
    r.check(weak.cr_decreasing, "Cauchy-Riemann residual does not decrease");
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_and_targets() {
        assert_eq!(parse_scale("1/8").unwrap(), 0.125);
        assert_eq!(parse_scale("0.5").unwrap(), 0.5);
        assert!(parse_scale("0").is_err() && parse_scale("1/x").is_err());
        assert!((parse_target("uniform:0.5,0.3").unwrap().max_derivative - 0.5).abs() < 1e-12);
        assert!(matches!(parse_target("uniform:1.5,0"), Err(LabError::Core(_))));
        assert!(matches!(parse_target("cubic"), Err(LabError::Usage(_))));
    }
}
