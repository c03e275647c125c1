//! Serialised and human-readable views of pipeline results.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::bic::BicResult;
use crate::error::{Error, Result};
use crate::pipeline::{ComparisonReport, PipelineReport, RunOutcome, Summary};

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

/// Assignment table with columns `row_index,cluster_id`.
pub fn assignments_csv(assignments: &[usize]) -> String {
    let mut s = String::from("row_index,cluster_id\n");
    for (i, c) in assignments.iter().enumerate() {
        let _ = writeln!(s, "{i},{c}");
    }
    s
}

/// Parse an assignment table. Rows may come in any order but must cover
/// `0..n` exactly once.
pub fn read_assignments(input: impl Read) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let mut pairs = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::RaggedRow {
                row,
                expected: 2,
                found: rec.len(),
            });
        }
        let field = |col: usize| {
            rec[col].parse::<usize>().map_err(|_| Error::BadCell {
                row,
                column: col,
                value: rec[col].to_string(),
            })
        };
        pairs.push((field(0)?, field(1)?));
    }
    let mut out = vec![None; pairs.len()];
    for (i, c) in pairs {
        match out.get_mut(i) {
            Some(slot @ None) => *slot = Some(c),
            Some(Some(_)) => return Err(Error::invalid(format!("row index {i} appears twice"))),
            None => return Err(Error::invalid(format!("row index {i} out of range"))),
        }
    }
    Ok(out.into_iter().map(|c| c.expect("every index filled")).collect())
}

pub fn load_assignments(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_assignments(f)
}

/// Left-aligned first column, right-aligned rest.
fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let ncol = header.len();
    let mut width = header.iter().map(String::len).collect::<Vec<_>>();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (j, cell) in cells.iter().enumerate().take(ncol) {
            if j == 0 {
                let _ = write!(s, "{cell:<w$}", w = width[0]);
            } else {
                let _ = write!(s, "  {cell:>w$}", w = width[j]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    let total: usize = width.iter().sum::<usize>() + 2 * ncol.saturating_sub(1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn summary(s: Option<Summary>, scale: f64) -> String {
    match s {
        Some(s) => format!("{:.2} +- {:.2}", scale * s.mean, scale * s.std),
        None => "-".into(),
    }
}

pub fn bic_text(bic: &BicResult) -> String {
    let header = ["c", "k", "loglik", "bic", ""].map(String::from);
    let rows: Vec<Vec<String>> = bic
        .candidates
        .iter()
        .map(|c| {
            vec![
                c.c.to_string(),
                c.k.to_string(),
                format!("{:.4}", c.loglik),
                format!("{:.4}", c.bic),
                if c.c == bic.selected { "<".into() } else { String::new() },
            ]
        })
        .collect();
    format!("selected clusters: {}\n{}", bic.selected, table(&header, &rows))
}

pub fn pipeline_text(rep: &PipelineReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "dataset {} ({} samples, {} features, {} classes)",
        rep.dataset,
        rep.n_samples,
        rep.n_features,
        rep.n_classes.map_or("?".into(), |c| c.to_string())
    );
    let sizes: Vec<String> = rep.layers.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "layers {}", sizes.join("-"));
    let header = ["run", "seed", "clusters", "acc %", "hungarian %", "majority %", "nmi"].map(String::from);
    let rows: Vec<Vec<String>> = rep
        .runs
        .iter()
        .map(|r| match r {
            RunOutcome::Ok(r) => {
                let mut row = vec![r.run.to_string(), r.seed.to_string(), r.n_clusters.to_string()];
                match &r.eval {
                    Some(e) => row.extend([
                        pct(e.accuracy),
                        pct(e.hungarian_accuracy),
                        pct(e.majority_accuracy),
                        format!("{:.4}", e.nmi),
                    ]),
                    None => row.extend(["-", "-", "-", "-"].map(String::from)),
                }
                row
            }
            RunOutcome::Failed { run, seed, error } => {
                vec![run.to_string(), seed.to_string(), "failed".into(), error.clone()]
            }
        })
        .collect();
    out.push_str(&table(&header, &rows));
    let a = &rep.aggregate;
    let _ = writeln!(out, "runs ok {} failed {}", a.successful_runs, a.failed_runs);
    let _ = writeln!(out, "clusters {}", summary(Some(a.n_clusters), 1.0));
    let _ = writeln!(out, "accuracy % {}", summary(a.accuracy, 100.0));
    let _ = writeln!(out, "nmi {}", summary(a.nmi, 1.0));
    out
}

pub fn comparison_text(rep: &ComparisonReport) -> String {
    let mut header = vec!["dataset".to_string()];
    header.extend(rep.methods.iter().map(|m| m.name().to_string()));
    let mut rows: Vec<Vec<String>> = rep
        .datasets
        .iter()
        .zip(&rep.cells)
        .zip(&rep.ranks.ranks)
        .map(|((d, cells), ranks)| {
            let mut row = vec![d.clone()];
            row.extend(cells.iter().zip(ranks).map(|(c, r)| match (c.accuracy, r) {
                (Some(_), Some(r)) => format!("{} ({r})", summary(c.accuracy, 100.0)),
                _ => "failed".into(),
            }));
            row
        })
        .collect();
    let mut mean = vec!["mean %".to_string()];
    mean.extend(
        rep.ranks
            .mean_accuracy
            .iter()
            .map(|m| m.map_or("-".into(), pct)),
    );
    let mut sums = vec!["rank sum".to_string()];
    sums.extend(rep.ranks.rank_sums.iter().map(usize::to_string));
    rows.push(mean);
    rows.push(sums);
    let mut out = table(&header, &rows);
    for (d, cells) in rep.datasets.iter().zip(&rep.cells) {
        for (m, c) in rep.methods.iter().zip(cells) {
            if let Some(e) = &c.error {
                let _ = writeln!(out, "{d} / {}: {e}", m.name());
            }
        }
    }
    out
}
