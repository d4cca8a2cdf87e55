//! Families of macroscopic gradients swept by `density-sweep`.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use metalattice::cellsolver::random_lambda;
use metalattice::Mat2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

/// `iso`, `diag`, `random:N` or `file:PATH`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaGrid {
    /// `c R_phi` for 10 compressions in `[0.3, 1]` and 8 angles in `[0, 2 pi)`.
    Iso,
    /// `diag(a, b)` with `a, b` in `{0.5, 0.75, ..., 1.5}`.
    Diag,
    Random(usize),
    File(PathBuf),
}

impl FromStr for LambdaGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "iso" => Ok(LambdaGrid::Iso),
            "diag" => Ok(LambdaGrid::Diag),
            _ => {
                if let Some(n) = s.strip_prefix("random:") {
                    let n: usize = n.parse().map_err(|_| format!("bad sample count in '{s}'"))?;
                    if n == 0 {
                        return Err("random grid needs at least one sample".into());
                    }
                    Ok(LambdaGrid::Random(n))
                } else if let Some(p) = s.strip_prefix("file:") {
                    Ok(LambdaGrid::File(PathBuf::from(p)))
                } else {
                    Err(format!("unknown grid '{s}' (expected iso, diag, random:N or file:PATH)"))
                }
            }
        }
    }
}

impl std::fmt::Display for LambdaGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaGrid::Iso => write!(f, "iso"),
            LambdaGrid::Diag => write!(f, "diag"),
            LambdaGrid::Random(n) => write!(f, "random:{n}"),
            LambdaGrid::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Parses `a,b,c,d` (row-major) into a matrix.
pub fn parse_matrix(s: &str) -> Result<Mat2, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}' in matrix '{s}'")))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("matrix '{s}' needs four finite entries m00,m01,m10,m11"));
    }
    Ok(Mat2::new(v[0], v[1], v[2], v[3]))
}

impl LambdaGrid {
    /// The matrices of the grid; `seed` only affects `random:N`.
    pub fn matrices(&self, seed: u64) -> LabResult<Vec<Mat2>> {
        Ok(match self {
            LambdaGrid::Iso => {
                let mut out = Vec::with_capacity(80);
                for i in 0..10 {
                    let c = 0.3 + 0.7 * i as f64 / 9.0;
                    for j in 0..8 {
                        let phi = std::f64::consts::TAU * j as f64 / 8.0;
                        out.push(Mat2::rotation(phi) * c);
                    }
                }
                out
            }
            LambdaGrid::Diag => {
                let vals: Vec<f64> = (0..5).map(|i| 0.5 + 0.25 * i as f64).collect();
                vals.iter().flat_map(|&a| vals.iter().map(move |&b| Mat2::diag(a, b))).collect()
            }
            LambdaGrid::Random(n) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..*n).map(|_| random_lambda(&mut rng)).collect()
            }
            LambdaGrid::File(path) => {
                let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
                let mut out = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("m00")) {
                        continue;
                    }
                    out.push(parse_matrix(line).map_err(|e| LabError::format(path, format!("line {}: {e}", i + 1)))?);
                }
                if out.is_empty() {
                    return Err(LabError::format(path, "no matrices"));
                }
                out
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!("iso".parse::<LambdaGrid>().unwrap(), LambdaGrid::Iso);
        assert_eq!("random:5".parse::<LambdaGrid>().unwrap(), LambdaGrid::Random(5));
        assert_eq!("file:a.csv".parse::<LambdaGrid>().unwrap(), LambdaGrid::File("a.csv".into()));
        assert!("random:0".parse::<LambdaGrid>().is_err());
        assert!("hex".parse::<LambdaGrid>().is_err());
        for g in ["iso", "diag", "random:3", "file:x"] {
            assert_eq!(g.parse::<LambdaGrid>().unwrap().to_string(), g);
        }
    }

    #[test]
    fn grid_sizes_and_determinism() {
        assert_eq!(LambdaGrid::Iso.matrices(0).unwrap().len(), 80);
        assert_eq!(LambdaGrid::Diag.matrices(0).unwrap().len(), 25);
        let a = LambdaGrid::Random(4).matrices(9).unwrap();
        assert_eq!(a, LambdaGrid::Random(4).matrices(9).unwrap());
        assert_ne!(a, LambdaGrid::Random(4).matrices(10).unwrap());
    }

    #[test]
    fn matrix_syntax() {
        assert_eq!(parse_matrix("1, 0,0,2").unwrap(), Mat2::diag(1.0, 2.0));
        assert!(parse_matrix("1,2,3").is_err());
        assert!(parse_matrix("1,2,3,x").is_err());
    }
}
