//! File formats: whitespace embedding files, CSV matrices, tree files,
//! and the JSON config/report documents.
//!
//! Embedding files start with a `d n` header line followed by `n` rows of
//! `d` whitespace-separated floats. Floats are emitted with 17 significant
//! digits so a write/read round trip is exact.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchy::{RankScore, TreeSpec};
use crate::kernels::KernelConfig;
use crate::matrix::Matrix;

/// Round-trip-safe float formatting (17 significant digits).
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("expected a number, got {tok:?}"),
    })
}

pub fn load_config(path: &Path) -> Result<KernelConfig> {
    let text = fs::read_to_string(path)?;
    let config: KernelConfig = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

pub fn read_embeddings(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (first_no, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, message: "empty embedding file".into() })?;
    let mut head = header.split_whitespace();
    let d: usize = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or(Error::Parse { line: first_no + 1, message: "header must be `d n`".into() })?;
    let n: usize = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or(Error::Parse { line: first_no + 1, message: "header must be `d n`".into() })?;
    if head.next().is_some() {
        return Err(Error::Parse {
            line: first_no + 1,
            message: "header must be exactly `d n`".into(),
        });
    }
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0usize;
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != d {
            return Err(Error::Parse {
                line: no + 1,
                message: format!("expected {d} values, got {}", toks.len()),
            });
        }
        for tok in toks {
            let value = parse_f64(tok, no + 1)?;
            if !value.is_finite() {
                return Err(Error::Parse { line: no + 1, message: "non-finite value".into() });
            }
            data.push(value);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: rows + 1,
            message: format!("header promised {n} rows, found {rows}"),
        });
    }
    Matrix::from_vec(n, d, data)
}

pub fn write_embeddings(path: &Path, matrix: &Matrix) -> Result<()> {
    let mut out = format!("{} {}\n", matrix.cols(), matrix.rows());
    for i in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(i).iter().copied().map(format_f64).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a matrix as CSV; `-inf` masked logits appear literally as
/// `-inf`.
pub fn write_csv_matrix(path: &Path, matrix: &Matrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..matrix.rows() {
        let row: Vec<String> = matrix
            .row(i)
            .iter()
            .map(|&x| {
                if x == f64::NEG_INFINITY {
                    "-inf".to_string()
                } else {
                    format_f64(x)
                }
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Tree files: one `node_id parent_id` pair per line, root has parent -1.
pub fn read_tree(path: &Path) -> Result<TreeSpec> {
    let text = fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: no + 1,
                message: format!("expected `node_id parent_id`, got {trimmed:?}"),
            });
        }
        let node: usize = toks[0].parse().map_err(|_| Error::Parse {
            line: no + 1,
            message: format!("bad node id {:?}", toks[0]),
        })?;
        let parent: i64 = toks[1].parse().map_err(|_| Error::Parse {
            line: no + 1,
            message: format!("bad parent id {:?}", toks[1]),
        })?;
        entries.push((no + 1, node, parent));
    }
    if entries.is_empty() {
        return Err(Error::Parse { line: 1, message: "empty tree file".into() });
    }
    let n = entries.len();
    let mut parents = vec![i64::MIN; n];
    for (line, node, parent) in entries {
        if node >= n {
            return Err(Error::Parse {
                line,
                message: format!("node id {node} out of range for {n} entries"),
            });
        }
        if parents[node] != i64::MIN {
            return Err(Error::Parse { line, message: format!("node {node} defined twice") });
        }
        parents[node] = parent;
    }
    TreeSpec::from_parents(&parents)
}

pub fn write_tree(path: &Path, tree: &TreeSpec) -> Result<()> {
    let mut out = String::new();
    for (i, p) in tree.parents_i64().iter().enumerate() {
        out.push_str(&format!("{i} {p}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// JSON report emitted by the tree benchmark command.
#[derive(Debug, Serialize)]
pub struct TreeBenchReport {
    pub kernel: String,
    pub nodes: usize,
    pub leaves: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub embedding_scores: RankScore,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingReport>,
}

#[derive(Debug, Serialize)]
pub struct TrainingReport {
    pub steps: usize,
    pub dim: usize,
    pub learning_rate: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub scores: RankScore,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("serializing report: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
