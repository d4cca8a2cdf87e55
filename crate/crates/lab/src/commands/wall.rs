use metalattice::lattice::build_kagome;
use metalattice::mechanisms::{domain_wall as build_wall, domain_wall_angles};
use metalattice::Mat2;
use serde::Serialize;

use super::{write_geometry, Context, Report};
use crate::cli::WallArgs;
use crate::error::{LabError, LabResult};
use crate::row;

/// Largest `|theta_n - theta_{n/2}|` accepted as converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Serialize)]
struct Summary {
    theta1: f64,
    n: usize,
    /// `|theta_{n-1} - theta_{(n-1)/2}|`.
    convergence_gap: f64,
    m: usize,
    periods: usize,
    period: f64,
    max_spring_residual: f64,
    min_det: f64,
    left_lambda: Mat2,
    right_lambda: Mat2,
    far_field_gap: f64,
    limit_angle: f64,
    limit_lambda: Mat2,
}

pub fn domain_wall(ctx: &mut Context, args: &WallArgs) -> LabResult<Report> {
    if args.n < 2 {
        return Err(LabError::Usage("--n must be at least 2".into()));
    }
    let cfg = &mut ctx.config;
    cfg.spec = Some("kagome".into());
    cfg.param("theta1", args.theta1).param("n", args.n).param("m", args.m).param("periods", args.periods);
    cfg.tolerance("residual", args.residual_tol).tolerance("convergence", CONVERGENCE_TOL);

    let angles = domain_wall_angles(args.theta1, args.n + 1)?;
    let mut t = ctx.out.table("wall-angles.csv", &[("index", "1"), ("theta", "rad")])?;
    for (i, a) in angles.iter().enumerate() {
        t.row(row![i, *a])?;
    }
    t.finish()?;
    let gap = (angles[args.n] - angles[args.n / 2]).abs();

    let wall = build_wall(args.theta1, args.m, args.periods)?;
    let spec = build_kagome();
    let cells: Vec<[i64; 2]> = wall.positions.keys().map(|n| n.offset).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    write_geometry(&mut ctx.out, "wall", &spec, &cells, |n| spec.position(n), |n| wall.positions.get(&n).copied())?;
    let far = wall.left_lambda.max_abs_diff(wall.right_lambda);
    ctx.out.json(
        "wall-summary.json",
        &Summary {
            theta1: args.theta1,
            n: args.n,
            convergence_gap: gap,
            m: args.m,
            periods: args.periods,
            period: wall.period,
            max_spring_residual: wall.max_spring_residual,
            min_det: wall.min_det,
            left_lambda: wall.left_lambda,
            right_lambda: wall.right_lambda,
            far_field_gap: far,
            limit_angle: wall.limit_angle,
            limit_lambda: wall.limit_lambda,
        },
    )?;

    let mut r = Report::default();
    r.line(format!("|theta_{} - theta_{}| = {gap:e}", args.n, args.n / 2));
    r.line(format!("strip of half-width {}: spring residual {:e}, min det {}", args.m, wall.max_spring_residual, wall.min_det));
    r.line(format!("far-field compressions differ by {far:e}"));
    r.check(gap < CONVERGENCE_TOL, format!("angles not converged: gap {gap:e}"));
    r.check(wall.max_spring_residual <= args.residual_tol, format!("spring residual {:e} above tolerance", wall.max_spring_residual));
    r.check(wall.min_det > 0.0, format!("strip reverses a triangle: min det {}", wall.min_det));
    Ok(r)
}
