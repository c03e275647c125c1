//! Clustering accuracy, normalised mutual information and rank tables.

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How clusters are matched to classes when counting correct samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    /// Optimal one-to-one matching; surplus clusters count as wrong.
    #[default]
    Hungarian,
    /// Every cluster takes its most frequent class; several clusters may
    /// share one class.
    Majority,
}

impl std::str::FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hungarian" => Ok(Self::Hungarian),
            "majority" => Ok(Self::Majority),
            _ => Err(Error::invalid(format!(
                "unknown mapping {s:?} (expected hungarian or majority)"
            ))),
        }
    }
}

/// Cluster x class counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub counts: Vec<Vec<usize>>,
}

impl Contingency {
    pub fn n_clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn n_classes(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// CSV with one row per cluster and one column per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cluster");
        for l in 0..self.n_classes() {
            out.push_str(&format!(",class_{l}"));
        }
        out.push('\n');
        for (k, row) in self.counts.iter().enumerate() {
            out.push_str(&k.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn check_lengths(assignments: &[usize], labels: &[usize]) -> Result<()> {
    if assignments.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if assignments.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty clustering"));
    }
    Ok(())
}

pub fn contingency(assignments: &[usize], labels: &[usize]) -> Result<Contingency> {
    check_lengths(assignments, labels)?;
    let rows = assignments.iter().max().map_or(0, |m| m + 1);
    let cols = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; cols]; rows];
    for (&a, &l) in assignments.iter().zip(labels) {
        counts[a][l] += 1;
    }
    Ok(Contingency { counts })
}

/// `eta = matched / N` under the optimal one-to-one cluster-to-class map.
/// The map sends each cluster id to a class, or `None` for surplus clusters.
pub fn clustering_accuracy(
    assignments: &[usize],
    labels: &[usize],
) -> Result<(f64, Vec<Option<usize>>)> {
    accuracy_with(assignments, labels, Mapping::Hungarian)
}

pub fn accuracy_with(
    assignments: &[usize],
    labels: &[usize],
    mapping: Mapping,
) -> Result<(f64, Vec<Option<usize>>)> {
    let table = contingency(assignments, labels)?;
    let (matched, map) = match mapping {
        Mapping::Hungarian => hungarian_map(&table),
        Mapping::Majority => majority_map(&table),
    };
    Ok((matched as f64 / assignments.len() as f64, map))
}

fn hungarian_map(table: &Contingency) -> (usize, Vec<Option<usize>>) {
    let (r, c) = (table.n_clusters(), table.n_classes());
    let n = r.max(c);
    let weights = Matrix::from_fn(n, n, |(i, j)| {
        if i < r && j < c {
            table.counts[i][j] as i64
        } else {
            0
        }
    });
    let (total, cols) = kuhn_munkres(&weights);
    let map = (0..r)
        .map(|i| (cols[i] < c && table.counts[i][cols[i]] > 0).then_some(cols[i]))
        .collect();
    (total as usize, map)
}

fn majority_map(table: &Contingency) -> (usize, Vec<Option<usize>>) {
    let mut matched = 0;
    let map = table
        .counts
        .iter()
        .map(|row| {
            let mut best: Option<usize> = None;
            for (j, &v) in row.iter().enumerate() {
                if v > 0 && best.is_none_or(|b| v > row[b]) {
                    best = Some(j);
                }
            }
            matched += best.map_or(0, |b| row[b]);
            best
        })
        .collect();
    (matched, map)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(A; L) / sqrt(H(A) H(L))` with natural logarithms.
///
/// Two single-cluster partitions score 1; when exactly one partition has
/// zero entropy the score is 0.
pub fn nmi(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    let table = contingency(assignments, labels)?;
    let n = assignments.len() as f64;
    let row_sums: Vec<usize> = table.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..table.n_classes())
        .map(|j| table.counts.iter().map(|r| r[j]).sum())
        .collect();
    let ha = entropy(row_sums.iter().copied(), n);
    let hl = entropy(col_sums.iter().copied(), n);
    if ha == 0.0 && hl == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hl == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0 {
                let pij = v as f64 / n;
                mi += pij * (v as f64 * n / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (ha * hl).sqrt()).clamp(0.0, 1.0))
}

/// Everything measured about one clustering against reference labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub assignments: Vec<usize>,
    pub contingency: Contingency,
    /// Accuracy under `mapping_kind`.
    pub accuracy: f64,
    pub mapping_kind: Mapping,
    pub mapping: Vec<Option<usize>>,
    pub hungarian_accuracy: f64,
    pub majority_accuracy: f64,
    pub nmi: f64,
}

pub fn evaluate(assignments: &[usize], labels: &[usize], mapping: Mapping) -> Result<EvalReport> {
    let (hungarian_accuracy, hmap) = accuracy_with(assignments, labels, Mapping::Hungarian)?;
    let (majority_accuracy, mmap) = accuracy_with(assignments, labels, Mapping::Majority)?;
    let (accuracy, map) = match mapping {
        Mapping::Hungarian => (hungarian_accuracy, hmap),
        Mapping::Majority => (majority_accuracy, mmap),
    };
    Ok(EvalReport {
        assignments: assignments.to_vec(),
        contingency: contingency(assignments, labels)?,
        accuracy,
        mapping_kind: mapping,
        mapping: map,
        hungarian_accuracy,
        majority_accuracy,
        nmi: nmi(assignments, labels)?,
    })
}

/// Per-dataset ranks plus per-method totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// `ranks[dataset][method]`; absent cells have no rank.
    pub ranks: Vec<Vec<Option<usize>>>,
    pub rank_sums: Vec<usize>,
    /// Mean over the datasets where the method has a value.
    pub mean_accuracy: Vec<Option<f64>>,
}

/// Rank methods per dataset (1 = highest); equal scores share the
/// smallest rank. Absent cells are skipped.
pub fn rank_methods(table: &[Vec<Option<f64>>]) -> Result<RankTable> {
    let width = table
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("rank table is empty"))?;
    if width == 0 {
        return Err(Error::invalid("rank table has no methods"));
    }
    if let Some(i) = table.iter().position(|r| r.len() != width) {
        return Err(Error::shape(format!(
            "dataset row {i} has {} entries, expected {width}",
            table[i].len()
        )));
    }
    let ranks: Vec<Vec<Option<usize>>> = table
        .iter()
        .map(|row| {
            row.iter()
                .map(|cell| {
                    cell.map(|v| 1 + row.iter().flatten().filter(|&&o| o > v).count())
                })
                .collect()
        })
        .collect();
    let rank_sums = (0..width)
        .map(|m| ranks.iter().filter_map(|r| r[m]).sum())
        .collect();
    let mean_accuracy = (0..width)
        .map(|m| {
            let vals: Vec<f64> = table.iter().filter_map(|r| r[m]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    Ok(RankTable {
        ranks,
        rank_sums,
        mean_accuracy,
    })
}
