use std::f64::consts::FRAC_PI_2;

use metalattice::geometry::{sweep_inequality, Inequality, InequalityGrid, InequalityReport};
use rayon::prelude::*;

use super::{Context, Report};
use crate::cli::InequalityArgs;
use crate::error::LabResult;
use crate::row;

/// Distance from zero accepted for the equality witness at `theta = pi/2`.
pub const WITNESS_TOL: f64 = 1e-12;

pub fn inequalities(ctx: &mut Context, args: &InequalityArgs) -> LabResult<Report> {
    let grid = InequalityGrid { max_stretch: args.max_stretch, step: args.step, angle_step: args.angle_step };
    let cfg = &mut ctx.config;
    cfg.param("grid", grid).param("full", args.full);
    cfg.tolerance("slack", -1e-12).tolerance("witness", WITNESS_TOL);

    let reports: Vec<InequalityReport> = if args.full {
        let mut t = ctx.out.table(
            "inequality-grid.csv",
            &[("inequality", "-"), ("l1", "1"), ("l2", "1"), ("theta", "rad"), ("slack", "1")],
        )?;
        let mut out = Vec::new();
        for ineq in Inequality::ALL {
            let mut err = None;
            let rep = sweep_inequality(ineq, grid, |l1, l2, th, m| {
                if err.is_none() {
                    err = t.row(row![ineq.name(), l1, l2, th, m]).err();
                }
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            out.push(rep);
        }
        t.finish()?;
        out
    } else {
        Inequality::ALL.par_iter().map(|&i| sweep_inequality(i, grid, |_, _, _, _| {})).collect::<Result<_, _>>()?
    };

    let mut r = Report::default();
    let mut t = ctx.out.table(
        "inequalities.csv",
        &[("inequality", "-"), ("l1", "1"), ("l2", "1"), ("theta", "rad"), ("slack", "1"), ("evaluated", "points"), ("holds", "bool")],
    )?;
    for rep in &reports {
        let [l1, l2, th] = rep.worst_at;
        t.row(row![rep.inequality.name(), l1, l2, th, rep.worst_margin, rep.evaluated, rep.holds])?;
        r.line(format!("{:<26} min slack {:+e} at ({l1}, {l2}, {th})", rep.inequality.name(), rep.worst_margin));
        r.check(rep.holds, format!("{} fails with slack {:e}", rep.inequality.name(), rep.worst_margin));
    }
    t.finish()?;
    let witness = Inequality::KagomeDirectionFactor.margin(0.0, 0.0, FRAC_PI_2);
    r.line(format!("t(pi/2) - 3/4 = {witness:e}"));
    r.check(witness.abs() <= WITNESS_TOL, format!("equality witness off by {witness:e}"));
    Ok(r)
}
