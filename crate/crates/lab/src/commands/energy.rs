use metalattice::energy::energy_breakdown;
use metalattice::{PeriodicDeformation, Supercell};

use super::{Context, Report};
use crate::cli::EnergyArgs;
use crate::error::{LabError, LabResult};
use crate::grid::parse_matrix;
use crate::row;
use crate::spec_io::{load_spec, DeformationDocument};

pub fn energy(ctx: &mut Context, args: &EnergyArgs) -> LabResult<Report> {
    let doc = args.deformation.as_deref().map(DeformationDocument::load).transpose()?;
    let source = args.spec.clone().or_else(|| doc.as_ref().map(|d| d.spec.clone())).unwrap_or_else(|| "kagome".into());
    let spec = load_spec(&source)?;
    ctx.config.spec = Some(source);
    ctx.config.eta = Some(args.eta);
    let def = match &doc {
        Some(d) => {
            ctx.config.param("deformation", &args.deformation);
            d.deformation(&spec)?
        }
        None => {
            let lambda = parse_matrix(&args.lambda).map_err(LabError::Usage)?;
            ctx.config.param("lambda", lambda.to_rows());
            PeriodicDeformation::affine(Supercell::new(&spec, args.k)?, lambda)
        }
    };
    ctx.config.k = vec![def.cell.k];
    let b = energy_breakdown(&def, args.eta)?;
    ctx.out.json("energy.json", &b)?;
    let mut t = ctx.out.table(
        "energy-triangles.csv",
        &[("cell_i", "cells"), ("cell_j", "cells"), ("triangle", "index"), ("spring", "energy"), ("penalty", "energy"), ("orientation_preserved", "bool")],
    )?;
    for e in &b.per_triangle {
        t.row(row![e.cell[0], e.cell[1], e.triangle, e.spring, e.penalty, e.preserved])?;
    }
    t.finish()?;
    let mut r = Report::default();
    r.line(format!("spring {} penalty {} averaged {}", b.spring_total, b.penalty_total, b.averaged));
    Ok(r)
}
