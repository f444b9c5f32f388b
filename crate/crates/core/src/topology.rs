//! Node topology: symmetric communication-cost matrices and path costs.

use std::path::Path;

use rand::Rng;

use crate::rng::seed_rng;
use crate::{Error, Result};

/// Symmetric node-to-node communication costs: zero diagonal, off-diagonal
/// entries uniform in `(0, beta]`. Distances are control-plane values and
/// always `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
    beta: f64,
    /// Generation seed; `None` for imported matrices.
    seed: Option<u64>,
}

impl DistanceMatrix {
    /// Draws the upper triangle (row-major, ascending) from the seeded stream
    /// and mirrors it. Each entry is `beta * (1 - u)` with `u` uniform in
    /// `[0, 1)`, hence lies in `(0, beta]`.
    pub fn generate(n: usize, beta: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("distance matrix needs n >= 1".into()));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        let mut rng = seed_rng(seed);
        let mut entries = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let u: f64 = rng.gen();
                let d = beta * (1.0 - u);
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        Ok(Self {
            n,
            entries,
            beta,
            seed: Some(seed),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Sum of hop distances along a visit sequence; a single visit costs 0.
    pub fn path_cost(&self, visits: &[usize]) -> Result<f64> {
        for &v in visits {
            if v >= self.n {
                return Err(Error::NodeOutOfRange {
                    node: v,
                    nodes: self.n,
                });
            }
        }
        Ok(visits
            .windows(2)
            .map(|w| self.get(w[0], w[1]))
            .sum())
    }

    /// Structural invariants: zero diagonal, exact symmetry, off-diagonal in
    /// `(0, beta]`.
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Error::InvalidInput {
            context: "distance matrix",
            detail,
        };
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(bad(format!("diagonal entry ({i},{i}) is {}", self.get(i, i))));
            }
            for j in (i + 1)..self.n {
                let d = self.get(i, j);
                if d != self.get(j, i) {
                    return Err(bad(format!(
                        "asymmetry at ({i},{j}): {d} vs {}",
                        self.get(j, i)
                    )));
                }
                if !(d > 0.0) || d > self.beta || !d.is_finite() {
                    return Err(bad(format!(
                        "off-diagonal ({i},{j}) = {d} outside (0, {}]",
                        self.beta
                    )));
                }
            }
        }
        Ok(())
    }

    /// One comma-separated row per node; floats print in shortest-roundtrip
    /// form so exporting and re-importing reproduces the exact values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Parses a square CSV matrix and validates the invariants. `beta` is
    /// inferred as the maximum off-diagonal entry and the seed is unknown.
    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| Error::DataFormat {
                    path: origin.to_string(),
                    detail: format!("line {}: bad float {field:?}", lineno + 1),
                })?;
                row.push(v);
            }
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 {
            return Err(Error::DataFormat {
                path: origin.to_string(),
                detail: "empty matrix".into(),
            });
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::DataFormat {
                path: origin.to_string(),
                detail: format!("row {} has {} columns, expected {n}", bad + 1, rows[bad].len()),
            });
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        let beta = entries
            .iter()
            .enumerate()
            .filter(|(i, _)| i / n != i % n)
            .map(|(_, &v)| v)
            .fold(0.0f64, f64::max);
        let m = Self {
            n,
            entries,
            beta,
            seed: None,
        };
        m.validate().map_err(|e| Error::DataFormat {
            path: origin.to_string(),
            detail: e.to_string(),
        })?;
        Ok(m)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }
}
