use metalattice::cellsolver::{estimate_with_family, in_zero_set, DensityEstimate, DensityOptions};
use metalattice::geometry::principal_stretches;
use metalattice::mechanisms::TwistFamily;
use rayon::prelude::*;
use serde::Serialize;

use super::{Context, Report};
use crate::cli::DensityArgs;
use crate::error::{LabError, LabResult};
use crate::row;
use crate::spec_io::{load_spec, DeformationDocument};

/// Gradient norm below which a run counts as converged.
pub const CONVERGED_GRAD: f64 = 1e-6;

#[derive(Serialize)]
struct Summary {
    matrices: usize,
    zero_set: usize,
    max_upper_zero_set: Option<f64>,
    min_upper_elsewhere: Option<f64>,
    /// Smallest `upper / lower_bracket` off the zero set.
    min_ratio: Option<f64>,
}

pub fn density_sweep(ctx: &mut Context, args: &DensityArgs) -> LabResult<Report> {
    if args.k.is_empty() || args.k.contains(&0) {
        return Err(LabError::Usage("--k needs positive supercell sizes".into()));
    }
    let spec = load_spec(&args.spec.spec)?;
    let seed = ctx.config.seed;
    let cfg = &mut ctx.config;
    cfg.spec = Some(args.spec.spec.clone());
    cfg.eta = Some(args.eta);
    cfg.k = args.k.clone();
    cfg.grid = Some(args.grid.to_string());
    cfg.restarts = Some(args.restarts);
    cfg.param("max_iter", args.max_iter).param("dump_minimizers", args.dump_minimizers);
    cfg.tolerance("zero", args.zero_tol).tolerance("converged_grad", CONVERGED_GRAD);
    let lambdas = args.grid.matrices(seed)?;
    let family = TwistFamily::new(&spec).ok().filter(|f| f.theta_max > 0.0);
    let cmin = family.as_ref().map(|f| f.min_compression()).unwrap_or(1.0);
    let estimates = lambdas
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let opts = DensityOptions {
                eta: args.eta,
                ks: args.k.clone(),
                random_seeds: args.restarts,
                seed: seed.wrapping_add(i as u64),
                max_iter: args.max_iter,
            };
            estimate_with_family(&spec, lambda, &opts, family.as_ref())
        })
        .collect::<Result<Vec<DensityEstimate>, _>>()?;

    let mut r = Report::default();
    let mut t = ctx.out.table(
        "density.csv",
        &[
            ("index", "id"),
            ("m00", "1"),
            ("m01", "1"),
            ("m10", "1"),
            ("m11", "1"),
            ("l1", "1"),
            ("l2", "1"),
            ("eta", "area"),
            ("k", "cells"),
            ("upper", "energy/area"),
            ("lower_bracket", "1"),
            ("restarts", "count"),
            ("converged", "bool"),
            ("zero_set", "bool"),
        ],
    )?;
    let mut summary = Summary { matrices: estimates.len(), zero_set: 0, max_upper_zero_set: None, min_upper_elsewhere: None, min_ratio: None };
    for (i, est) in estimates.iter().enumerate() {
        let l = est.lambda;
        let st = principal_stretches(l);
        let zero = in_zero_set(l, 1e-12);
        for &(k, upper) in &est.per_k {
            let runs: Vec<_> = est.runs.iter().filter(|x| x.k == k).collect();
            let best = runs.iter().min_by(|a, b| a.energy.total_cmp(&b.energy));
            let converged = best.is_some_and(|b| b.grad_norm <= CONVERGED_GRAD || b.energy <= 1e-20);
            t.row(row![i, l.m00, l.m01, l.m10, l.m11, st.l1, st.l2, args.eta, k, upper, est.bracket, runs.len(), converged, zero])?;
        }
        if zero {
            summary.zero_set += 1;
            summary.max_upper_zero_set = Some(summary.max_upper_zero_set.unwrap_or(0.0).max(est.upper));
            if st.l1 > cmin {
                r.check(est.upper <= args.zero_tol, format!("upper = {} at isotropic compression {i}", est.upper));
            }
        } else {
            summary.min_upper_elsewhere = Some(summary.min_upper_elsewhere.unwrap_or(f64::INFINITY).min(est.upper));
            if est.bracket > 1e-12 {
                let q = est.upper / est.bracket;
                summary.min_ratio = Some(summary.min_ratio.unwrap_or(f64::INFINITY).min(q));
            }
        }
        if args.dump_minimizers {
            let doc = DeformationDocument::new(&args.spec.spec, est.best_k, est.lambda, &est.best_psi);
            ctx.out.json(&format!("minimizer-{i:04}.json"), &doc)?;
        }
    }
    t.finish()?;
    ctx.out.json("density-summary.json", &summary)?;
    r.line(format!("{} gradients, {} isotropic compressions", summary.matrices, summary.zero_set));
    if let Some(m) = summary.max_upper_zero_set {
        r.line(format!("largest upper on isotropic compressions: {m:e}"));
    }
    if let Some(m) = summary.min_upper_elsewhere {
        r.line(format!("smallest upper elsewhere: {m:e}"));
    }
    Ok(r)
}
