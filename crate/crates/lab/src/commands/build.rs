use metalattice::cellsolver::eta_threshold;
use metalattice::mechanisms::{kernel_rank, TwistFamily};
use serde::Serialize;

use super::{cells_of, write_geometry, Context, Report};
use crate::cli::BuildArgs;
use crate::error::{LabError, LabResult};
use crate::spec_io::{load_spec, parse_variant, SpecDocument};

#[derive(Serialize)]
struct Summary {
    name: String,
    basic_nodes: usize,
    springs: usize,
    penalized_triangles: usize,
    markers: usize,
    cell_area: f64,
    penalized_area: f64,
    eta_threshold: f64,
    kernel_nontrivial_k1: usize,
    twist_supercell: Option<usize>,
    twist_theta_max: Option<f64>,
    twist_min_compression: Option<f64>,
}

pub fn build(ctx: &mut Context, args: &BuildArgs) -> LabResult<Report> {
    if args.k == 0 {
        return Err(LabError::Usage("--k must be positive".into()));
    }
    let spec = match (&args.spec, &args.variant) {
        (_, Some(v)) => parse_variant(v)?,
        (Some(s), None) => load_spec(s)?,
        (None, None) => load_spec("kagome")?,
    };
    ctx.config.spec = Some(args.variant.clone().or(args.spec.clone()).unwrap_or_else(|| "kagome".into()));
    ctx.config.k = vec![args.k];
    let name = spec.name.clone();
    ctx.out.json(&format!("{name}.spec.json"), &SpecDocument::from_spec(&spec))?;
    write_geometry(&mut ctx.out, &name, &spec, &cells_of(args.k), |n| spec.position(n), |n| Some(spec.position(n)))?;
    let rank = kernel_rank(&spec, 1, 1e-9)?;
    let fam = TwistFamily::new(&spec).ok().filter(|f| f.theta_max > 0.0);
    let summary = Summary {
        name: name.clone(),
        basic_nodes: spec.num_basic(),
        springs: spec.springs.len(),
        penalized_triangles: spec.triangles.len(),
        markers: spec.markers.len(),
        cell_area: spec.cell_area(),
        penalized_area: spec.penalized_area(),
        eta_threshold: eta_threshold(&spec),
        kernel_nontrivial_k1: rank.nontrivial,
        twist_supercell: fam.as_ref().map(|f| f.k),
        twist_theta_max: fam.as_ref().map(|f| f.theta_max),
        twist_min_compression: fam.as_ref().map(|f| f.min_compression()),
    };
    ctx.out.json(&format!("{name}.summary.json"), &summary)?;
    let mut r = Report::default();
    r.line(format!(
        "{name}: {} nodes, {} springs, {} penalized triangles, cell area {}",
        summary.basic_nodes, summary.springs, summary.penalized_triangles, summary.cell_area
    ));
    if let Some(f) = fam {
        r.line(format!("twist on k = {}: theta in ({}, {})", f.k, f.theta_min, f.theta_max));
    }
    Ok(r)
}
