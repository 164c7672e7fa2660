use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::commands::{read_json, RunSummary};
use crate::diagnostics::{RankHistogram, RANK_BUCKETS};
use crate::error::{Error, Result};

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: 0.0,
            std: 0.0,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std, n }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Consolidated view over several run directories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub beam_sizes: Vec<usize>,
    pub runs: Vec<RunSummary>,
    /// Markdown table: label, Δp_top10 %, Δp_mode %, then BLEU at each beam size.
    pub table: String,
}

fn mean_fractions(hists: &[&RankHistogram]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for h in hists {
        for (o, f) in out.iter_mut().zip(h.fractions()) {
            *o += f / hists.len() as f64;
        }
    }
    out
}

fn cell(m: Option<crate::experiment::MeanStd>) -> String {
    m.map(|m| m.to_string()).unwrap_or_else(|| "-".into())
}

/// Reads `summary.json` from every directory (skipping, with a warning, any
/// that lack one) and writes `table.md`, `table.csv`, `ranks.csv`, `beam.csv`,
/// `curve.csv` and `report.json` to `out`.
pub fn cmd_report(run_dirs: &[PathBuf], out: &Path) -> Result<Report> {
    let mut runs: Vec<RunSummary> = Vec::new();
    for dir in run_dirs {
        match read_json::<RunSummary>(&dir.join("summary.json")) {
            Ok(s) => runs.push(s),
            Err(e) => log::warn!("skipping {}: {e}", dir.display()),
        }
    }
    if runs.is_empty() {
        return Err(Error::Config("no completed run directories to report on".into()));
    }
    let mut ks: Vec<usize> = runs
        .iter()
        .flat_map(|r| r.baseline.beam.entries.iter().map(|e| e.0))
        .collect();
    ks.sort_unstable();
    ks.dedup();

    let mut header = vec!["run".to_string(), "Δp_top10 (%)".into(), "Δp_mode (%)".into()];
    header.extend(ks.iter().map(|k| format!("k={k}")));
    let mut rows: Vec<Vec<String>> = Vec::new();
    let base = &runs[0].baseline;
    let mut base_row = vec!["pretrained".to_string(), "-".into(), "-".into()];
    base_row.extend(ks.iter().map(|&k| {
        base.beam
            .at(k)
            .map(|v| format!("{v:.2} ± 0.00"))
            .unwrap_or_else(|| "-".into())
    }));
    rows.push(base_row);
    for r in &runs {
        let mut row = vec![
            r.label.clone(),
            cell(r.metric("delta_p_top10_pct")),
            cell(r.metric("delta_p_mode_pct")),
        ];
        row.extend(ks.iter().map(|k| cell(r.metric(&format!("bleu_k{k}")))));
        rows.push(row);
    }

    let mut md = format!("| {} |\n|{}\n", header.join(" | "), " --- |".repeat(header.len()));
    for row in &rows {
        let _ = writeln!(md, "| {} |", row.join(" | "));
    }
    let mut csv = header.join(",") + "\n";
    for row in &rows {
        csv += &(row.join(",") + "\n");
    }

    let mut ranks = "run,bucket,value_before,value_after\n".to_string();
    let mut beam = "run,k,value_before,value_after\n".to_string();
    let mut curve = "run,seed,step,dev_bleu\n".to_string();
    for r in &runs {
        let before = r.baseline.ranks.fractions();
        let after = mean_fractions(&r.runs.iter().map(|s| &s.eval.ranks).collect::<Vec<_>>());
        for b in 0..RANK_BUCKETS.len() {
            let _ = writeln!(ranks, "{},{},{},{}", r.label, RankHistogram::label(b), before[b], after[b]);
        }
        for &k in &ks {
            if let (Some(v0), Some(v1)) = (r.baseline.beam.at(k), r.metric(&format!("bleu_k{k}"))) {
                let _ = writeln!(beam, "{},{k},{v0},{}", r.label, v1.mean);
            }
        }
        for s in &r.runs {
            for (step, v) in &s.dev_curve {
                let _ = writeln!(curve, "{},{},{step},{v}", r.label, s.seed);
            }
        }
    }

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let report = Report {
        beam_sizes: ks,
        runs,
        table: md.clone(),
    };
    for (name, text) in [
        ("table.md", md),
        ("table.csv", csv),
        ("ranks.csv", ranks),
        ("beam.csv", beam),
        ("curve.csv", curve),
        (
            "report.json",
            serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))? + "\n",
        ),
    ] {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
