//! Metric suite, decade confusion matrices, residual rankings, and the two
//! reference baselines.

pub mod linreg;
pub mod report;

pub use linreg::{linear_predict, linear_regression_fit};

use crate::error::{Error, Result};

/// Decade width in normalized years.
const DECADE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PerSample {
    pub id: String,
    pub target: f64,
    pub prediction: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mae: f64,
    pub r2: f64,
    pub corr: f64,
    pub per_sample: Vec<PerSample>,
    /// Row = true decade, column = predicted decade.
    pub confusion: Vec<Vec<usize>>,
}

/// MAE, R^2 and Pearson correlation. Constant predictions (or targets) get
/// correlation 0 by convention, matching the constant-prediction baseline.
pub fn compute_metrics(preds: &[f64], targets: &[f64]) -> Result<(f64, f64, f64)> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = preds.len() as f64;
    let mae = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n;

    let t_mean = targets.iter().sum::<f64>() / n;
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (t - p) * (t - p)).sum();
    let ss_tot: f64 = targets.iter().map(|t| (t - t_mean) * (t - t_mean)).sum();
    let r2 = if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    };

    let p_mean = preds.iter().sum::<f64>() / n;
    let var_p: f64 = preds.iter().map(|p| (p - p_mean) * (p - p_mean)).sum();
    let cov: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - p_mean) * (t - t_mean))
        .sum();
    let corr = if var_p == 0.0 || ss_tot == 0.0 {
        0.0
    } else {
        cov / (var_p.sqrt() * ss_tot.sqrt())
    };
    Ok((mae, r2, corr))
}

/// Number of decade bins covering `[0, span]` (span 84 -> 9 bins).
pub fn decade_bins(span: f64) -> usize {
    (span / DECADE).floor() as usize + 1
}

fn decade_bin(year_norm: f64, span: f64) -> usize {
    let clamped = year_norm.clamp(0.0, span);
    ((clamped / DECADE).floor() as usize).min(decade_bins(span) - 1)
}

/// Decade confusion counts over normalized years. Predictions are clamped
/// into `[0, span]` for binning only.
pub fn decade_confusion(preds: &[f64], targets: &[f64], span: f64) -> Vec<Vec<usize>> {
    let bins = decade_bins(span);
    let mut matrix = vec![vec![0usize; bins]; bins];
    for (p, t) in preds.iter().zip(targets) {
        matrix[decade_bin(*t, span)][decade_bin(*p, span)] += 1;
    }
    matrix
}

/// Shannon entropy (nats) of the predicted-decade distribution, i.e. of the
/// confusion matrix's column sums. Higher = predictions spread over more
/// decades.
pub fn column_entropy(confusion: &[Vec<usize>]) -> f64 {
    let bins = confusion.first().map(|r| r.len()).unwrap_or(0);
    let col_sums: Vec<f64> = (0..bins)
        .map(|c| confusion.iter().map(|row| row[c] as f64).sum())
        .collect();
    let total: f64 = col_sums.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    -col_sums
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|s| {
            let p = s / total;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn build_report(
    ids: &[String],
    preds: &[f64],
    targets: &[f64],
    span: f64,
) -> Result<EvalReport> {
    if ids.len() != preds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ids vs {} predictions",
            ids.len(),
            preds.len()
        )));
    }
    let (mae, r2, corr) = compute_metrics(preds, targets)?;
    let per_sample = ids
        .iter()
        .zip(preds.iter().zip(targets))
        .map(|(id, (p, t))| PerSample {
            id: id.clone(),
            target: *t,
            prediction: *p,
            residual: p - t,
        })
        .collect();
    Ok(EvalReport {
        mae,
        r2,
        corr,
        per_sample,
        confusion: decade_confusion(preds, targets, span),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResiduals {
    /// (decade bin, samples sorted by |residual| ascending, k smallest kept).
    pub per_decade: Vec<(usize, Vec<PerSample>)>,
    /// Global list sorted by |residual| descending.
    pub largest: Vec<PerSample>,
}

/// Per-decade smallest-residual samples plus the global largest-residual
/// list. Ties are broken by id for determinism.
pub fn residual_ranking(report: &EvalReport, per_decade_k: usize, largest_n: usize, span: f64) -> RankedResiduals {
    let bins = decade_bins(span);
    let mut per_decade = Vec::new();
    for bin in 0..bins {
        let mut members: Vec<PerSample> = report
            .per_sample
            .iter()
            .filter(|s| decade_bin(s.target, span) == bin)
            .cloned()
            .collect();
        if members.is_empty() {
            continue;
        }
        members.sort_by(|a, b| {
            a.residual
                .abs()
                .partial_cmp(&b.residual.abs())
                .unwrap()
                .then_with(|| a.id.cmp(&b.id))
        });
        members.truncate(per_decade_k);
        per_decade.push((bin, members));
    }
    let mut largest = report.per_sample.clone();
    largest.sort_by(|a, b| {
        b.residual
            .abs()
            .partial_cmp(&a.residual.abs())
            .unwrap()
            .then_with(|| a.id.cmp(&b.id))
    });
    largest.truncate(largest_n);
    RankedResiduals { per_decade, largest }
}

/// The training-set mean year, used as the constant-prediction baseline.
pub fn constant_baseline(train_targets: &[f64]) -> Result<f64> {
    if train_targets.is_empty() {
        return Err(Error::InvalidArgument("empty training targets".into()));
    }
    Ok(train_targets.iter().sum::<f64>() / train_targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_prediction_at_target_mean_zeroes_r2_and_corr() {
        let targets: Vec<f64> = (0..85).map(|y| y as f64).collect();
        let preds = vec![42.0; 85];
        let (mae, r2, corr) = compute_metrics(&preds, &targets).unwrap();
        assert_eq!(r2, 0.0);
        assert_eq!(corr, 0.0);
        // Closed form: mean |y - 42| over 0..=84 is 1806/85.
        assert!((mae - 21.24705882352941).abs() < 1e-12);
        assert!((mae - 21.25).abs() < 0.05);
    }

    #[test]
    fn perfect_predictions_reach_the_ideal_metrics() {
        let targets = vec![3.0, -1.0, 7.5, 2.0];
        let (mae, r2, corr) = compute_metrics(&targets, &targets).unwrap();
        assert_eq!(mae, 0.0);
        assert_eq!(r2, 1.0);
        assert!((corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn five_point_hand_worked_example() {
        let p = [3.0, 1.5, 4.0, 0.5, 2.0];
        let t = [2.0, 1.0, 5.0, 1.0, 2.5];
        let (mae, r2, corr) = compute_metrics(&p, &t).unwrap();
        assert!((mae - 0.7).abs() < 1e-12);
        assert!((r2 - 0.7453703703703705).abs() < 1e-12);
        assert!((corr - 0.8671963022793402).abs() < 1e-12);
    }

    #[test]
    fn correlation_is_invariant_under_positive_affine_maps() {
        let p = [3.0, 1.5, 4.0, 0.5, 2.0];
        let t = [2.0, 1.0, 5.0, 1.0, 2.5];
        let (_, _, corr) = compute_metrics(&p, &t).unwrap();
        let p2: Vec<f64> = p.iter().map(|v| 3.5 * v + 11.0).collect();
        let (_, _, corr2) = compute_metrics(&p2, &t).unwrap();
        assert!((corr - corr2).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_and_empty_error() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn exact_predictions_give_a_diagonal_confusion() {
        let targets: Vec<f64> = (0..85).map(|y| y as f64).collect();
        let m = decade_confusion(&targets, &targets, 84.0);
        assert_eq!(m.len(), 9);
        for (i, row) in m.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i == j {
                    assert!(c > 0);
                } else {
                    assert_eq!(c, 0);
                }
            }
        }
        let total: usize = m.iter().flatten().sum();
        assert_eq!(total, 85);
    }

    #[test]
    fn constant_predictions_fill_a_single_column() {
        let targets: Vec<f64> = (0..85).map(|y| y as f64).collect();
        let preds = vec![42.0; 85];
        let m = decade_confusion(&preds, &targets, 84.0);
        for row in &m {
            for (j, &c) in row.iter().enumerate() {
                if j != 4 {
                    assert_eq!(c, 0);
                }
            }
        }
        // A single predicted decade has zero column entropy.
        assert_eq!(column_entropy(&m), 0.0);
    }

    #[test]
    fn bin_edges_match_manual_binning() {
        // 20 points straddling the 10-year edge between bins 0 and 1.
        let targets: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let preds = targets.clone();
        let m = decade_confusion(&preds, &targets, 84.0);
        assert_eq!(m[0][0], 10); // 0..=9
        assert_eq!(m[1][1], 10); // 10..=19
        // Out-of-range predictions clamp into the outer bins.
        let m2 = decade_confusion(&[-5.0, 91.0], &[0.0, 84.0], 84.0);
        assert_eq!(m2[0][0], 1);
        assert_eq!(m2[8][8], 1);
    }

    #[test]
    fn ranking_matches_a_sort_oracle() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let targets = vec![5.0; 10];
        let preds: Vec<f64> = (0..10).map(|i| 5.0 + (i as f64 - 4.5)).collect();
        let report = build_report(&ids, &preds, &targets, 84.0).unwrap();
        let ranked = residual_ranking(&report, 3, 10, 84.0);
        assert_eq!(ranked.per_decade.len(), 1);
        let smallest = &ranked.per_decade[0].1;
        assert_eq!(smallest.len(), 3);
        assert!((smallest[0].residual.abs() - 0.5).abs() < 1e-12);
        // Largest list is the full sort, descending.
        let mags: Vec<f64> = ranked.largest.iter().map(|s| s.residual.abs()).collect();
        let mut sorted = mags.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(mags, sorted);
    }

    #[test]
    fn ranking_with_k_beyond_population_returns_all_sorted() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let report = build_report(&ids, &[1.0, 4.0], &[2.0, 2.0], 84.0).unwrap();
        let ranked = residual_ranking(&report, 10, 10, 84.0);
        assert_eq!(ranked.per_decade[0].1.len(), 2);
        assert_eq!(ranked.per_decade[0].1[0].id, "a");
        // A single sample is both the smallest and the largest residual.
        let one = build_report(&ids[..1].to_vec(), &[9.0], &[1.0], 84.0).unwrap();
        let r = residual_ranking(&one, 4, 4, 84.0);
        assert_eq!(r.per_decade[0].1[0].id, "a");
        assert_eq!(r.largest[0].id, "a");
    }

    #[test]
    fn constant_baseline_is_the_training_mean() {
        let targets: Vec<f64> = (0..85).map(|y| y as f64).collect();
        assert_eq!(constant_baseline(&targets).unwrap(), 42.0);
        assert_eq!(constant_baseline(&[7.25]).unwrap(), 7.25);
        assert!(constant_baseline(&[]).is_err());
    }
}
