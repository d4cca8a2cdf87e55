use metalattice::cellsolver::{jensen_sides, verify_isotropic_bound, verify_jensen_bounds, IsotropicFit, JensenBound, JensenReport};
use metalattice::energy::{check_cell_bounds, CellBounds};
use metalattice::geometry::{check_rigidity, rigidity_constant, RigidityCheck, RigidityEstimate};
use metalattice::{LatticeSpec, Mat2, PeriodicDeformation, Supercell};
use rayon::prelude::*;
use serde::Serialize;

use super::{Context, Report};
use crate::cli::{BoundKind, BoundsArgs};
use crate::error::LabResult;
use crate::row;
use crate::spec_io::load_spec;

/// Energy cap `E <= 1/36` of the rigidity samples.
pub const RIGIDITY_CAP: f64 = 1.0 / 36.0;

/// Averaged bounds that apply to a lattice.
pub fn applicable_jensen(spec: &LatticeSpec) -> Vec<JensenBound> {
    match spec.name.as_str() {
        "kagome" => vec![JensenBound::KagomeSides, JensenBound::Weighted],
        "rotating-squares" => vec![JensenBound::SquaresDiagonal, JensenBound::SquaresSides, JensenBound::Weighted],
        _ => vec![JensenBound::Weighted],
    }
}

fn bound_name(b: JensenBound) -> &'static str {
    match b {
        JensenBound::SquaresDiagonal => "squares-diagonal",
        JensenBound::KagomeSides => "kagome-sides",
        JensenBound::SquaresSides => "squares-sides",
        JensenBound::Weighted => "weighted",
    }
}

enum Outcome {
    Jensen(Vec<JensenReport>, Option<(f64, f64)>),
    Isotropic(IsotropicFit),
    Rigidity(RigidityEstimate, RigidityCheck),
    Cell(CellBounds),
}

#[derive(Serialize)]
struct RigidityDoc {
    estimate: RigidityEstimate,
    fresh_seed: u64,
    check: RigidityCheck,
}

pub fn verify_bounds(ctx: &mut Context, args: &BoundsArgs) -> LabResult<Report> {
    let spec = load_spec(&args.spec.spec)?;
    let seed = ctx.config.seed;
    let kinds = if args.bounds.is_empty() {
        vec![BoundKind::Jensen, BoundKind::Isotropic, BoundKind::Rigidity, BoundKind::Cell]
    } else {
        args.bounds.clone()
    };
    let cfg = &mut ctx.config;
    cfg.spec = Some(args.spec.spec.clone());
    cfg.eta = Some(args.eta);
    cfg.param("bounds", &kinds)
        .param("trials", args.trials)
        .param("iso_trials", args.iso_trials)
        .param("rigidity_samples", args.rigidity_samples)
        .param("cell_samples", args.cell_samples);
    cfg.tolerance("margin", -1e-12);

    let outcomes = kinds
        .par_iter()
        .map(|kind| -> LabResult<Outcome> {
            Ok(match kind {
                BoundKind::Jensen => {
                    let reps = applicable_jensen(&spec)
                        .into_par_iter()
                        .map(|b| verify_jensen_bounds(&spec, b, args.trials, seed))
                        .collect::<Result<Vec<_>, _>>()?;
                    // Equality case of the diagonal bound.
                    let eq = if spec.name == "rotating-squares" {
                        let def = PeriodicDeformation::affine(Supercell::new(&spec, 1)?, Mat2::diag(1.5, 1.0));
                        jensen_sides(JensenBound::SquaresDiagonal, &def)?.first().copied()
                    } else {
                        None
                    };
                    Outcome::Jensen(reps, eq)
                }
                BoundKind::Isotropic => Outcome::Isotropic(verify_isotropic_bound(&spec, args.eta, args.iso_trials, seed)?),
                BoundKind::Rigidity => {
                    let est = rigidity_constant(spec.alpha, args.rigidity_samples, RIGIDITY_CAP, seed)?;
                    let chk = check_rigidity(&est, args.rigidity_samples, RIGIDITY_CAP, seed.wrapping_add(1))?;
                    Outcome::Rigidity(est, chk)
                }
                BoundKind::Cell => Outcome::Cell(check_cell_bounds(&spec, args.eta, args.cell_samples, seed)?),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut r = Report::default();
    let mut summary = ctx.out.table("bounds.csv", &[("check", "-"), ("value", "1"), ("holds", "bool")])?;
    for o in outcomes {
        match o {
            Outcome::Jensen(reps, eq) => {
                for j in &reps {
                    let name = bound_name(j.bound);
                    summary.row(row![format!("jensen-{name}-worst-margin"), j.worst_margin, j.holds])?;
                    r.check(j.holds, format!("averaged bound {name} has margin {}", j.worst_margin));
                    r.line(format!("{name}: worst margin {:e} over {} trials", j.worst_margin, j.trials));
                }
                if let Some((lhs, rhs)) = eq {
                    let ok = (lhs - 0.25).abs() <= 1e-12 && (rhs - 0.25).abs() <= 1e-12;
                    summary.row(row!["jensen-squares-diagonal-equality-lhs", lhs, ok])?;
                    summary.row(row!["jensen-squares-diagonal-equality-rhs", rhs, ok])?;
                    r.check(ok, format!("equality case gives {lhs} vs {rhs}"));
                }
            }
            Outcome::Isotropic(fit) => {
                let mut t = ctx.out.table(
                    "bounds-isotropic.csv",
                    &[("m00", "1"), ("m01", "1"), ("m10", "1"), ("m11", "1"), ("k", "cells"), ("minimised", "bool"), ("energy", "energy/area"), ("bracket", "1")],
                )?;
                for s in &fit.samples {
                    let l = s.lambda;
                    t.row(row![l.m00, l.m01, l.m10, l.m11, s.k, s.minimised, s.energy, s.bracket])?;
                }
                t.finish()?;
                let ok = fit.c_fit > 0.0 && fit.c_fit.is_finite();
                summary.row(row!["isotropic-c-fit", fit.c_fit, ok])?;
                r.check(ok, format!("isotropic bound constant {} is not positive", fit.c_fit));
                r.line(format!("isotropic bound: c_fit = {:e} at eta = {}", fit.c_fit, fit.eta));
            }
            Outcome::Rigidity(est, chk) => {
                let ok = chk.spring_violations == 0 && chk.cosine_violations == 0 && est.certified > 0.0;
                summary.row(row!["rigidity-certified", est.certified, ok])?;
                summary.row(row!["rigidity-c1-fitted", est.c1_fitted, chk.cosine_violations == 0])?;
                summary.row(row!["rigidity-fresh-spring-ratio", chk.spring_ratio, chk.spring_violations == 0])?;
                summary.row(row!["rigidity-fresh-cosine-ratio", chk.cosine_ratio, chk.cosine_violations == 0])?;
                r.check(ok, format!("rigidity: {} spring and {} cosine violations", chk.spring_violations, chk.cosine_violations));
                r.line(format!("rigidity: certified c = {:e}, c1 = {}", est.certified, est.c1_fitted));
                ctx.out.json("bounds-rigidity.json", &RigidityDoc { estimate: est, fresh_seed: seed.wrapping_add(1), check: chk })?;
            }
            Outcome::Cell(cb) => {
                let ok = [cb.c1, cb.c2, cb.d2].iter().all(|v| v.is_finite()) && cb.worst_upper <= 1.0 + 1e-12 && cb.worst_lower >= -1e-12;
                summary.row(row!["cell-c1", cb.c1, ok])?;
                summary.row(row!["cell-c2", cb.c2, ok])?;
                summary.row(row!["cell-d2", cb.d2, ok])?;
                r.check(ok, "cell bounds are not finite certificates");
                r.line(format!("cell bounds: C1 = {}, C2 = {}, D2 = {}", cb.c1, cb.c2, cb.d2));
                ctx.out.json("bounds-cell.json", &cb)?;
            }
        }
    }
    summary.finish()?;
    Ok(r)
}
