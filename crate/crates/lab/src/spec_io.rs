//! JSON documents for lattice specs and periodic deformations.
//!
//! A node reference is written `[basic, dx, dy]`. Rest lengths and areas
//! are never stored; they are recomputed from the node positions on load.

use std::fs;
use std::path::Path;

use metalattice::lattice::{self, LatticeParts, MarkerPair, Variant};
use metalattice::{LatticeSpec, Mat2, NodeRef, PeriodicDeformation, Supercell, Vec2};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

pub type NodeTriple = [i64; 3];

fn node_out(n: NodeRef) -> NodeTriple {
    [n.basic as i64, n.offset[0], n.offset[1]]
}

fn node_in(t: NodeTriple) -> Result<NodeRef, String> {
    if t[0] < 0 {
        return Err(format!("negative basic node index {}", t[0]));
    }
    Ok(NodeRef::new(t[0] as usize, t[1], t[2]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringDoc {
    pub a: NodeTriple,
    pub b: NodeTriple,
    pub k_spring: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerDoc {
    pub b: [NodeTriple; 2],
    pub r: [NodeTriple; 2],
    pub triangle: usize,
}

/// Field-for-field image of a lattice spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub name: String,
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    #[serde(default)]
    pub cell_origin: [f64; 2],
    pub basic_nodes: Vec<[f64; 2]>,
    pub springs: Vec<SpringDoc>,
    pub triangles: Vec<[NodeTriple; 3]>,
    pub markers: Vec<MarkerDoc>,
    pub triangulation: Vec<[NodeTriple; 3]>,
    pub alpha: f64,
    pub c_marker: f64,
}

fn v(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

impl SpecDocument {
    pub fn from_spec(spec: &LatticeSpec) -> Self {
        let p = spec.to_parts();
        SpecDocument {
            name: p.name,
            v1: p.v1.to_array(),
            v2: p.v2.to_array(),
            cell_origin: p.cell_origin.to_array(),
            basic_nodes: p.basic_nodes.iter().map(|x| x.to_array()).collect(),
            springs: p.springs.iter().map(|&(a, b, k)| SpringDoc { a: node_out(a), b: node_out(b), k_spring: k }).collect(),
            triangles: p.triangles.iter().map(|t| t.map(node_out)).collect(),
            markers: p
                .markers
                .iter()
                .map(|m| MarkerDoc { b: m.b.map(node_out), r: m.r.map(node_out), triangle: m.triangle })
                .collect(),
            triangulation: p.triangulation.iter().map(|t| t.map(node_out)).collect(),
            alpha: p.alpha,
            c_marker: p.c_marker,
        }
    }

    /// Validates the document and derives a lattice spec.
    pub fn to_spec(&self) -> Result<LatticeSpec, String> {
        let tri = |t: &[NodeTriple; 3]| -> Result<[NodeRef; 3], String> {
            Ok([node_in(t[0])?, node_in(t[1])?, node_in(t[2])?])
        };
        let pair = |t: &[NodeTriple; 2]| -> Result<[NodeRef; 2], String> { Ok([node_in(t[0])?, node_in(t[1])?]) };
        let parts = LatticeParts {
            name: self.name.clone(),
            v1: v(self.v1),
            v2: v(self.v2),
            cell_origin: v(self.cell_origin),
            basic_nodes: self.basic_nodes.iter().map(|&x| v(x)).collect(),
            springs: self
                .springs
                .iter()
                .map(|s| Ok((node_in(s.a)?, node_in(s.b)?, s.k_spring)))
                .collect::<Result<_, String>>()?,
            triangles: self.triangles.iter().map(tri).collect::<Result<_, _>>()?,
            markers: self
                .markers
                .iter()
                .map(|m| Ok(MarkerPair { b: pair(&m.b)?, r: pair(&m.r)?, triangle: m.triangle }))
                .collect::<Result<_, String>>()?,
            triangulation: self.triangulation.iter().map(tri).collect::<Result<_, _>>()?,
            alpha: self.alpha,
            c_marker: self.c_marker,
        };
        LatticeSpec::from_parts(parts).map_err(|e| e.to_string())
    }
}

/// Loads a built-in lattice by name or a spec document from a path.
pub fn load_spec(source: &str) -> LabResult<LatticeSpec> {
    if lattice::BUILTIN_NAMES.contains(&source) {
        return Ok(lattice::builtin(source)?);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(LabError::Usage(format!(
            "'{source}' is neither a built-in lattice ({}) nor an existing file",
            lattice::BUILTIN_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let doc: SpecDocument = serde_json::from_str(&text).map_err(|e| LabError::format(path, e))?;
    doc.to_spec().map_err(|e| LabError::format(path, e))
}

/// Builds a variant from its JSON parameter object, e.g.
/// `{"kind": "rhombus-squares", "alpha": 1.2, "s1": 1.0, "s2": 0.5}`.
pub fn parse_variant(json: &str) -> LabResult<LatticeSpec> {
    let v: Variant = serde_json::from_str(json).map_err(|e| LabError::Usage(format!("variant parameters: {e}")))?;
    Ok(lattice::build_variant(v)?)
}

/// `lambda x + psi` on a `k` supercell, with `psi` listed in supercell order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationDocument {
    /// Built-in name or spec path, as given on the command line.
    pub spec: String,
    pub k: usize,
    /// Row-major.
    pub lambda: [[f64; 2]; 2],
    pub psi: Vec<[f64; 2]>,
}

impl DeformationDocument {
    pub fn new(source: &str, k: usize, lambda: Mat2, psi: &[Vec2]) -> Self {
        DeformationDocument {
            spec: source.to_string(),
            k,
            lambda: lambda.to_rows(),
            psi: psi.iter().map(|p| p.to_array()).collect(),
        }
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::format(path, e))
    }

    pub fn deformation<'a>(&self, spec: &'a LatticeSpec) -> LabResult<PeriodicDeformation<'a>> {
        let cell = Supercell::new(spec, self.k)?;
        Ok(PeriodicDeformation::new(cell, Mat2::from_rows(self.lambda), self.psi.iter().map(|&p| v(p)).collect())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_round_trips() {
        for name in lattice::BUILTIN_NAMES {
            let spec = lattice::builtin(name).unwrap();
            let doc = SpecDocument::from_spec(&spec);
            let json = serde_json::to_string(&doc).unwrap();
            let back: SpecDocument = serde_json::from_str(&json).unwrap();
            assert_eq!(back.to_spec().unwrap(), spec);
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut doc = serde_json::to_value(SpecDocument::from_spec(&lattice::build_kagome())).unwrap();
        doc["rest_lengths"] = serde_json::json!([1.0]);
        assert!(serde_json::from_value::<SpecDocument>(doc).is_err());
    }

    #[test]
    fn bad_geometry_is_reported() {
        let mut doc = SpecDocument::from_spec(&lattice::build_kagome());
        doc.v2 = doc.v1;
        assert!(doc.to_spec().is_err());
    }

    #[test]
    fn variant_parameters() {
        let s = parse_variant(r#"{"kind": "rhombus-squares", "alpha": 1.2, "s1": 1.0, "s2": 0.5}"#).unwrap();
        assert_eq!(s.name, "rhombus-squares");
        assert!(parse_variant(r#"{"kind": "hexagons"}"#).is_err());
    }
}
