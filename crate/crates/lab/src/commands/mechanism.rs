use metalattice::geometry::principal_stretches;
use metalattice::mechanisms::{certify, mechanism_search, SearchOptions, TwistFamily};
use metalattice::Supercell;
use rayon::prelude::*;
use serde::Serialize;

use super::{cells_of, write_geometry, Context, Report};
use crate::cli::MechanismArgs;
use crate::error::{LabError, LabResult};
use crate::row;
use crate::spec_io::{load_spec, DeformationDocument};

/// Penalty parameter at which mechanism certificates are evaluated.
pub const ETA_REF: f64 = 0.1;

#[derive(Serialize)]
struct Summary {
    twist_supercell: usize,
    theta_min: f64,
    theta_max: f64,
    contact_angle: Option<f64>,
    min_compression: f64,
    search: Option<SearchSummary>,
}

#[derive(Serialize)]
struct SearchSummary {
    k: usize,
    restarts: usize,
    hits: usize,
    rejected: usize,
    kernel: metalattice::mechanisms::KernelRank,
}

pub fn mechanism(ctx: &mut Context, args: &MechanismArgs) -> LabResult<Report> {
    if args.thetas == 0 {
        return Err(LabError::Usage("--thetas must be positive".into()));
    }
    let spec = load_spec(&args.spec.spec)?;
    let cfg = &mut ctx.config;
    cfg.spec = Some(args.spec.spec.clone());
    cfg.param("thetas", args.thetas).param("search", args.search).param("export_theta", args.export_theta);
    cfg.tolerance("energy", args.energy_tol).tolerance("isotropy", args.isotropy_tol);
    if args.search {
        cfg.k = vec![args.search_k];
        cfg.restarts = Some(args.restarts);
    }
    let fam = TwistFamily::new(&spec)?;
    if !(fam.theta_max > fam.theta_min) {
        return Err(metalattice::Error::Precondition(format!("'{}' has an empty twist range", spec.name)).into());
    }
    let mut r = Report::default();
    let span = fam.theta_max - fam.theta_min;
    let thetas: Vec<f64> = (0..args.thetas).map(|i| fam.theta_min + span * (i as f64 + 0.5) / args.thetas as f64).collect();
    let rows = thetas
        .par_iter()
        .map(|&th| {
            let tw = fam.at(th)?;
            let cert = certify(&tw.deformation(&spec), ETA_REF)?;
            Ok((tw, cert))
        })
        .collect::<Result<Vec<_>, metalattice::Error>>()?;
    let mut t = ctx.out.table(
        "twist.csv",
        &[
            ("theta", "rad"),
            ("compression", "1"),
            ("rotation", "rad"),
            ("averaged_energy", "energy/area"),
            ("max_spring_residual", "length"),
            ("min_det", "1"),
            ("anisotropy", "1"),
            ("closure_residual", "length"),
        ],
    )?;
    for (tw, c) in &rows {
        t.row(row![tw.theta, tw.compression, tw.rotation, c.averaged_energy, c.max_spring_residual, c.min_det, c.anisotropy, tw.closure_residual])?;
        let st = principal_stretches(tw.lambda);
        r.check(
            c.averaged_energy <= args.energy_tol && c.anisotropy <= args.isotropy_tol && tw.lambda.det() > 0.0 && st.l1 <= 1.0 + args.isotropy_tol,
            format!("twist at theta = {} is not an isotropic compression mechanism", tw.theta),
        );
    }
    t.finish()?;
    r.line(format!("twist: {} angles in ({}, {}), k = {}", rows.len(), fam.theta_min, fam.theta_max, fam.k));

    let mut search = None;
    if args.search {
        let opts = SearchOptions { k: args.search_k, seeds: args.restarts, seed: ctx.config.seed, energy_tol: args.energy_tol, isotropy_tol: args.isotropy_tol, ..Default::default() };
        let rep = mechanism_search(&spec, opts)?;
        let mut t = ctx.out.table(
            "search.csv",
            &[
                ("hit", "index"),
                ("averaged_spring", "energy/area"),
                ("l1", "1"),
                ("l2", "1"),
                ("det_lambda", "1"),
                ("min_det", "1"),
                ("m00", "1"),
                ("m01", "1"),
                ("m10", "1"),
                ("m11", "1"),
            ],
        )?;
        for (i, h) in rep.hits.iter().enumerate() {
            let l = h.lambda;
            t.row(row![i, h.energy, h.l1, h.l2, l.det(), h.min_det, l.m00, l.m01, l.m10, l.m11])?;
            r.check(
                h.is_isotropic(args.isotropy_tol) && l.det() > 0.0 && h.l1 <= 1.0 + args.isotropy_tol,
                format!("search hit {i} is not an isotropic compression"),
            );
        }
        t.finish()?;
        r.line(format!(
            "search k = {}: {} mechanisms, {} rejected, kernel {} ({} nontrivial)",
            args.search_k,
            rep.hits.len(),
            rep.rejected,
            rep.kernel.kernel,
            rep.kernel.nontrivial
        ));
        search = Some(SearchSummary { k: args.search_k, restarts: args.restarts, hits: rep.hits.len(), rejected: rep.rejected, kernel: rep.kernel });
    }

    if let Some(th) = args.export_theta {
        let tw = fam.at(th)?;
        let def = tw.deformation(&spec);
        ctx.out.json("twist-deformation.json", &DeformationDocument::new(&args.spec.spec, tw.k, tw.lambda, &tw.psi))?;
        let cell = Supercell::new(&spec, tw.k)?;
        write_geometry(&mut ctx.out, "twist", &spec, &cells_of(tw.k), |n| cell.reference(n, [0, 0]), |n| Some(def.evaluate(n, [0, 0])))?;
    }
    let summary = Summary {
        twist_supercell: fam.k,
        theta_min: fam.theta_min,
        theta_max: fam.theta_max,
        contact_angle: fam.contact,
        min_compression: fam.min_compression(),
        search,
    };
    ctx.out.json("mechanism.json", &summary)?;
    Ok(r)
}
