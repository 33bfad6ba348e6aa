//! Report emission: metric/confusion/residual CSVs and a confusion heatmap.

use crate::error::Result;
use crate::eval::{EvalReport, RankedResiduals};
use image::{Rgb, RgbImage};
use std::fmt::Write as _;
use std::path::Path;

pub const METRICS_CSV_HEADER: &str = "method,loss,mae,r2,corr\n";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub loss: String,
    pub mae: f64,
    pub r2: f64,
    pub corr: f64,
}

impl MetricsRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.method, self.loss, self.mae, self.r2, self.corr
        )
    }

    /// Human-readable results row: MAE to 2 decimals, R^2/corr to 4.
    pub fn table_row(&self) -> String {
        format!(
            "{:<10} {:<10} {:>8.2} {:>8.4} {:>8.4}",
            self.method, self.loss, self.mae, self.r2, self.corr
        )
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from(METRICS_CSV_HEADER);
    for r in rows {
        out.push_str(&r.csv_row());
    }
    write_file(path, &out)
}

pub fn write_confusion_csv(path: &Path, matrix: &[Vec<usize>]) -> Result<()> {
    let mut out = String::new();
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn write_per_sample_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::from("id,target,prediction,residual\n");
    for s in &report.per_sample {
        let _ = writeln!(out, "{},{},{},{}", s.id, s.target, s.prediction, s.residual);
    }
    write_file(path, &out)
}

pub fn write_ranking_csvs(
    smallest_path: &Path,
    largest_path: &Path,
    ranked: &RankedResiduals,
) -> Result<()> {
    let mut out = String::from("decade,rank,id,target,prediction,residual\n");
    for (decade, members) in &ranked.per_decade {
        for (rank, s) in members.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                decade, rank, s.id, s.target, s.prediction, s.residual
            );
        }
    }
    write_file(smallest_path, &out)?;

    let mut out = String::from("rank,id,target,prediction,residual\n");
    for (rank, s) in ranked.largest.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", rank, s.id, s.target, s.prediction, s.residual);
    }
    write_file(largest_path, &out)
}

/// Renders the confusion matrix as a dark-to-warm heatmap, one 24px cell per
/// entry, normalized by the largest count.
pub fn render_confusion_heatmap(path: &Path, matrix: &[Vec<usize>]) -> Result<()> {
    const CELL: u32 = 24;
    let n = matrix.len().max(1) as u32;
    let max = matrix.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut img = RgbImage::new(n * CELL, n * CELL);
    for (i, row) in matrix.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            let t = count as f64 / max;
            let px = Rgb([
                (20.0 + 235.0 * t) as u8,
                (20.0 + 120.0 * t) as u8,
                (40.0 + 40.0 * (1.0 - t)) as u8,
            ]);
            for dy in 0..CELL {
                for dx in 0..CELL {
                    img.put_pixel(j as u32 * CELL + dx, i as u32 * CELL + dy, px);
                }
            }
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path)?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}
