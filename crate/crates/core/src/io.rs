//! Text formats shared with other tools.
//!
//! Graph file: first line `n m k`, second line the `n` labels (1-based), then
//! `m` lines `i j` with 0-based endpoints and `i < j`. Side-information file:
//! `n` lines of `k − 1` floats. Model config: TOML with keys `n`, `d`, `p`,
//! `R` (row-major) and `seed`, plus optional `S` (row-major) for side
//! information.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{PsdMatrix, SymMatrix};
use crate::model::{LabeledGraph, ProbVector, SbmModel};

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, what: &str, line: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))?;
    tok.parse().map_err(|_| Error::Parse(format!("line {line}: invalid {what} {tok:?}")))
}

pub fn parse_graph(text: &str) -> Result<LabeledGraph> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (ln, header) = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
    let mut it = header.split_whitespace();
    let n: usize = parse_num(it.next(), "n", ln + 1)?;
    let m: usize = parse_num(it.next(), "m", ln + 1)?;
    let k: usize = parse_num(it.next(), "k", ln + 1)?;
    if it.next().is_some() {
        return Err(Error::Parse(format!("line {}: expected `n m k`", ln + 1)));
    }
    let (ln, label_line) = lines.next().ok_or_else(|| Error::Parse("missing label line".into()))?;
    let labels = label_line
        .split_whitespace()
        .map(|t| match parse_num::<usize>(Some(t), "label", ln + 1)? {
            0 => Err(Error::Parse(format!("line {}: labels are 1-based", ln + 1))),
            l => Ok(l - 1),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut edges = Vec::with_capacity(m);
    for (ln, line) in lines {
        let mut it = line.split_whitespace();
        let i: usize = parse_num(it.next(), "endpoint", ln + 1)?;
        let j: usize = parse_num(it.next(), "endpoint", ln + 1)?;
        if it.next().is_some() {
            return Err(Error::Parse(format!("line {}: expected `i j`", ln + 1)));
        }
        if i >= j {
            return Err(Error::Parse(format!("line {}: edge endpoints must satisfy i < j", ln + 1)));
        }
        edges.push((i, j));
    }
    if edges.len() != m {
        return Err(Error::Parse(format!("header declares {m} edges, found {}", edges.len())));
    }
    let graph = LabeledGraph { n, k, edges, labels, seed: 0 };
    graph.validate()?;
    Ok(graph)
}

pub fn format_graph(graph: &LabeledGraph) -> String {
    let mut out = String::with_capacity(16 + 4 * graph.n + 12 * graph.edges.len());
    writeln!(out, "{} {} {}", graph.n, graph.edges.len(), graph.k).unwrap();
    let labels: Vec<String> = graph.labels.iter().map(|l| (l + 1).to_string()).collect();
    writeln!(out, "{}", labels.join(" ")).unwrap();
    for (i, j) in &graph.edges {
        writeln!(out, "{i} {j}").unwrap();
    }
    out
}

pub fn read_graph(path: &Path) -> Result<LabeledGraph> {
    parse_graph(&std::fs::read_to_string(path)?)
}

pub fn write_graph(path: &Path, graph: &LabeledGraph) -> Result<()> {
    Ok(std::fs::write(path, format_graph(graph))?)
}

/// Parses `n` rows of `dim` floats.
pub fn parse_side_info(text: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, line)| {
            let row = line
                .split_whitespace()
                .map(|t| parse_num::<f64>(Some(t), "value", ln + 1))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != dim {
                return Err(Error::Parse(format!("line {}: expected {dim} values, found {}", ln + 1, row.len())));
            }
            Ok(row)
        })
        .collect()
}

/// One row per node, each value in shortest round-trip form.
pub fn format_side_info(y: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in y {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

pub fn read_side_info(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    parse_side_info(&std::fs::read_to_string(path)?, dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub d: f64,
    pub p: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Side-information SNR matrix, row-major.
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
}

fn square(values: &[f64], dim: usize, name: &str) -> Result<SymMatrix> {
    if values.len() != dim * dim {
        return Err(Error::Config(format!("{name} has {} entries, expected {dim}×{dim}", values.len())));
    }
    SymMatrix::from_row_major(dim, values.to_vec())
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn prob(&self) -> Result<ProbVector> {
        ProbVector::new(self.p.clone())
    }

    pub fn r_matrix(&self) -> Result<SymMatrix> {
        square(&self.r, self.p.len().saturating_sub(1), "R")
    }

    pub fn s_matrix(&self) -> Result<Option<PsdMatrix>> {
        self.s.as_ref().map(|s| PsdMatrix::new(square(s, self.p.len().saturating_sub(1), "S")?)).transpose()
    }

    pub fn build(&self) -> Result<SbmModel> {
        SbmModel::new(self.n, self.d, &self.prob()?, self.r_matrix()?)
    }
}
