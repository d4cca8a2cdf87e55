//! One function per subcommand. Each writes its artifacts through an
//! [`Output`] and returns the lines to print plus any failed checks.

mod bounds;
mod build;
mod density;
mod energy;
mod inequalities;
mod mechanism;
mod softmode;
mod wall;

use metalattice::{LatticeSpec, NodeRef, Vec2};

pub use bounds::verify_bounds;
pub use build::build;
pub use density::density_sweep;
pub use energy::energy;
pub use inequalities::inequalities;
pub use mechanism::mechanism;
pub use softmode::soft_mode;
pub use wall::domain_wall;

use crate::config::RunConfig;
use crate::error::LabResult;
use crate::output::Output;
use crate::row;

/// What a command reports back to the driver.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    /// Mathematical checks that failed; any entry yields exit code 3.
    pub failures: Vec<String>,
}

impl Report {
    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
}

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub out: Output,
    pub config: RunConfig,
}

/// Writes `<stem>-nodes.csv` and `<stem>-edges.csv` for the springs of the
/// given cells. `place` maps a node to its deformed position.
pub(crate) fn write_geometry(
    out: &mut Output,
    stem: &str,
    spec: &LatticeSpec,
    cells: &[[i64; 2]],
    reference: impl Fn(NodeRef) -> Vec2,
    place: impl Fn(NodeRef) -> Option<Vec2>,
) -> LabResult<()> {
    let mut ids = std::collections::BTreeMap::new();
    let mut edges = Vec::new();
    for &c in cells {
        for s in &spec.springs {
            let (a, b) = (s.a.shifted(c), s.b.shifted(c));
            let (Some(pa), Some(pb)) = (place(a), place(b)) else { continue };
            for n in [a, b] {
                let next = ids.len();
                ids.entry(n).or_insert(next);
            }
            edges.push((ids[&a], ids[&b], s.rest_length, (pb - pa).norm()));
        }
    }
    let mut nodes: Vec<(usize, NodeRef)> = ids.iter().map(|(n, i)| (*i, *n)).collect();
    nodes.sort();
    let mut t = out.table(
        &format!("{stem}-nodes.csv"),
        &[("node", "id"), ("basic", "index"), ("cell_i", "cells"), ("cell_j", "cells"), ("x", "length"), ("y", "length"), ("ux", "length"), ("uy", "length")],
    )?;
    for (i, n) in nodes {
        let x = reference(n);
        let u = place(n).expect("placed above");
        t.row(row![i, n.basic, n.offset[0], n.offset[1], x.x, x.y, u.x, u.y])?;
    }
    t.finish()?;
    let mut t = out.table(
        &format!("{stem}-edges.csv"),
        &[("a", "id"), ("b", "id"), ("rest_length", "length"), ("length", "length")],
    )?;
    for (a, b, l0, l) in edges {
        t.row(row![a, b, l0, l])?;
    }
    t.finish()
}

pub(crate) fn cells_of(k: usize) -> Vec<[i64; 2]> {
    (0..k as i64).flat_map(|i| (0..k as i64).map(move |j| [i, j])).collect()
}
