//! Posterior accuracy and efficiency metrics.
//!
//! Accuracy is scored per posterior draw against ground-truth entity labels:
//! precision, recall, and F1 over cross-file record pairs, plus the implied
//! entity count. Efficiency uses an effective-sample-size estimate per
//! continuous parameter component and the count of distinct matching-vector
//! values in a pool, which shrinks as resampling updates degrade it.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linkage::{self, LinkageError, MatchingVectors};
use crate::records::{FileSizes, GlobalIndex};
use crate::samplers::SamplePool;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth covers {found} records, expected {expected}")]
    TruthSize { expected: usize, found: usize },
    #[error("entity id repeated within file {file}")]
    DuplicateEntityInFile { file: usize },
    #[error("series too short: {0} values")]
    SeriesTooShort(usize),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad truth row: {0}")]
    BadRow(String),
    #[error(transparent)]
    Linkage(#[from] LinkageError),
}

/// True entity id per record, indexed like the corpus files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub entities: Vec<Vec<u64>>,
}

impl GroundTruth {
    pub fn sizes(&self) -> FileSizes {
        FileSizes(self.entities.iter().map(|f| f.len()).collect())
    }

    /// Checks the duplicate-free assumption: entity ids unique within a file.
    pub fn validate(&self) -> Result<(), EvalError> {
        for (file, ids) in self.entities.iter().enumerate() {
            let unique: BTreeSet<u64> = ids.iter().copied().collect();
            if unique.len() != ids.len() {
                return Err(EvalError::DuplicateEntityInFile { file });
            }
        }
        Ok(())
    }

    /// All coreferent cross-file pairs as global-index pairs.
    pub fn true_pairs(&self) -> BTreeSet<(GlobalIndex, GlobalIndex)> {
        let sizes = self.sizes();
        let mut by_entity: std::collections::HashMap<u64, Vec<usize>> =
            std::collections::HashMap::new();
        for (file, ids) in self.entities.iter().enumerate() {
            for (row, id) in ids.iter().enumerate() {
                by_entity.entry(*id).or_default().push(sizes.global(file, row).0);
            }
        }
        let mut pairs = BTreeSet::new();
        for members in by_entity.values() {
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    let (a, b) = (members[i].min(members[j]), members[i].max(members[j]));
                    pairs.insert((GlobalIndex(a), GlobalIndex(b)));
                }
            }
        }
        pairs
    }

    /// The unique valid matching-vector representation of the truth: each
    /// record links to the entity's most recent earlier occurrence.
    pub fn to_matching_vectors(&self) -> MatchingVectors {
        let sizes = self.sizes();
        let mut z = MatchingVectors::unlinked(&sizes);
        let mut last_seen: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
        for (file, ids) in self.entities.iter().enumerate() {
            for (row, id) in ids.iter().enumerate() {
                let g = sizes.global(file, row).0;
                if file > 0 {
                    if let Some(&prev) = last_seen.get(id) {
                        z.set(file - 1, row, prev);
                    }
                }
                last_seen.insert(*id, g);
            }
        }
        z
    }

    /// Truth CSV: `file,row,entity_id` with 1-based file and row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["file", "row", "entity_id"])?;
        for (file, ids) in self.entities.iter().enumerate() {
            for (row, id) in ids.iter().enumerate() {
                wtr.write_record([
                    (file + 1).to_string(),
                    (row + 1).to_string(),
                    id.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let mut rows: Vec<(usize, usize, u64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(EvalError::BadRow(format!("{rec:?}")));
            }
            let parse =
                |i: usize| -> Result<usize, EvalError> {
                    rec[i].parse().map_err(|_| EvalError::BadRow(format!("{rec:?}")))
                };
            let file = parse(0)?;
            let row = parse(1)?;
            let id: u64 = rec[2]
                .parse()
                .map_err(|_| EvalError::BadRow(format!("{rec:?}")))?;
            if file == 0 || row == 0 {
                return Err(EvalError::BadRow(format!("{rec:?}")));
            }
            rows.push((file - 1, row - 1, id));
        }
        let files = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let mut entities: Vec<Vec<u64>> = vec![Vec::new(); files];
        rows.sort();
        for (file, row, id) in rows {
            if entities[file].len() != row {
                return Err(EvalError::BadRow(format!(
                    "file {} row {} out of order or missing",
                    file + 1,
                    row + 1
                )));
            }
            entities[file].push(id);
        }
        let truth = GroundTruth { entities };
        truth.validate()?;
        Ok(truth)
    }
}

/// Precision, recall, and F1 of the cross-file pairs implied by `z` against
/// the truth. With no predicted links precision is 1; with no true links
/// recall is 1; F1 is 0 whenever either component is 0.
pub fn precision_recall_f1(
    z: &MatchingVectors,
    truth: &GroundTruth,
) -> Result<(f64, f64, f64), EvalError> {
    let sizes = z.sizes();
    if truth.sizes() != sizes {
        return Err(EvalError::TruthSize {
            expected: sizes.total(),
            found: truth.sizes().total(),
        });
    }
    let predicted = linkage::match_set(z)?;
    let true_pairs = truth.true_pairs();
    let tp = predicted.intersection(&true_pairs).count() as f64;
    let precision = if predicted.is_empty() {
        1.0
    } else {
        tp / predicted.len() as f64
    };
    let recall = if true_pairs.is_empty() {
        1.0
    } else {
        tp / true_pairs.len() as f64
    };
    let f1 = if precision == 0.0 || recall == 0.0 {
        0.0
    } else {
        2.0 / (1.0 / precision + 1.0 / recall)
    };
    Ok((precision, recall, f1))
}

/// Number of clusters implied by valid vectors: total records minus links.
pub fn entity_count(z: &MatchingVectors) -> usize {
    z.sizes().total() - z.total_links()
}

/// Effective sample size by the initial monotone sequence estimator on the
/// autocovariances. A constant series reports 1.
pub fn effective_sample_size(series: &[f64]) -> Result<f64, EvalError> {
    let n = series.len();
    if n < 10 {
        return Err(EvalError::SeriesTooShort(n));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var0: f64 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var0 == 0.0 || !var0.is_finite() {
        return Ok(1.0);
    }
    let autocov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for t in 0..(n - lag) {
            acc += (series[t] - mean) * (series[t + lag] - mean);
        }
        acc / n as f64
    };
    // Geyer: sum paired autocovariances while positive, enforcing a
    // non-increasing sequence.
    let mut sum_rho = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 1usize;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_rho += pair / var0;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (1.0 + 2.0 * sum_rho).max(1e-12);
    Ok((n as f64 / tau).max(1.0))
}

/// Median ESS across every component series of `m` and `u` in a pool.
pub fn median_ess_mu(pool: &SamplePool) -> Result<f64, EvalError> {
    let draws = &pool.draws;
    if draws.len() < 10 {
        return Err(EvalError::SeriesTooShort(draws.len()));
    }
    let p = draws[0].m.len();
    let mut esses = Vec::with_capacity(2 * p);
    let mut series = vec![0.0; draws.len()];
    for slot in 0..p {
        for which in 0..2 {
            for (i, d) in draws.iter().enumerate() {
                series[i] = if which == 0 { d.m[slot] } else { d.u[slot] };
            }
            esses.push(effective_sample_size(&series)?);
        }
    }
    esses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = esses.len() / 2;
    Ok(if esses.len() % 2 == 0 {
        0.5 * (esses[mid - 1] + esses[mid])
    } else {
        esses[mid]
    })
}

/// Number of distinct values the given matching vector takes across a pool.
pub fn distinct_z_count(pool: &SamplePool, vector: usize) -> usize {
    let mut set: BTreeSet<&[usize]> = BTreeSet::new();
    for d in &pool.draws {
        set.insert(d.z.vector(vector));
    }
    set.len()
}

/// One draw's metric row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub draw: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub entities: usize,
}

/// Per-draw metrics with mean/sd summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub f1_mean: f64,
    pub f1_sd: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub entities_mean: f64,
    pub entities_sd: f64,
    pub draws: usize,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Scores every draw in a pool against the truth.
pub fn score_pool(pool: &SamplePool, truth: &GroundTruth) -> Result<MetricSeries, EvalError> {
    truth.validate()?;
    let mut rows = Vec::with_capacity(pool.len());
    for (i, d) in pool.draws.iter().enumerate() {
        let (precision, recall, f1) = precision_recall_f1(&d.z, truth)?;
        rows.push(MetricRow {
            draw: i,
            precision,
            recall,
            f1,
            entities: entity_count(&d.z),
        });
    }
    let n = rows.len();
    let (f1_mean, f1_sd) = mean_sd(rows.iter().map(|r| r.f1), n);
    let (precision_mean, _) = mean_sd(rows.iter().map(|r| r.precision), n);
    let (recall_mean, _) = mean_sd(rows.iter().map(|r| r.recall), n);
    let (entities_mean, entities_sd) = mean_sd(rows.iter().map(|r| r.entities as f64), n);
    Ok(MetricSeries {
        rows,
        summary: MetricSummary {
            f1_mean,
            f1_sd,
            precision_mean,
            recall_mean,
            entities_mean,
            entities_sd,
            draws: n,
        },
    })
}

/// Per-draw metrics CSV: one row per retained draw.
pub fn write_metrics_csv<W: Write>(series: &MetricSeries, w: W) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["draw", "precision", "recall", "f1", "entities"])?;
    for r in &series.rows {
        wtr.write_record([
            r.draw.to_string(),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
            format!("{:.6}", r.f1),
            r.entities.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::FileSizes;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn truth_332() -> GroundTruth {
        // entities: 1..=3 in file one; file two repeats 1 and 3; file three
        // repeats 2 plus a fresh entity
        GroundTruth {
            entities: vec![vec![1, 2, 3], vec![1, 3], vec![2, 4]],
        }
    }

    #[test]
    fn perfect_linkage_scores_one() {
        let truth = truth_332();
        let z = truth.to_matching_vectors();
        assert_eq!(linkage::validate_links(&z), Ok(true));
        let (p, r, f1) = precision_recall_f1(&z, &truth).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_predictions_zero_recall() {
        let truth = truth_332();
        let z = MatchingVectors::unlinked(&truth.sizes());
        let (p, r, f1) = precision_recall_f1(&z, &truth).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(r, 0.0);
        assert_eq!(f1, 0.0);
    }

    #[test]
    fn partial_credit_formula() {
        // 4 true pairs, 2 predicted, 1 correct: precision 1/2, recall 1/4
        let truth = GroundTruth {
            entities: vec![vec![1, 2], vec![1, 2], vec![1]],
        };
        assert_eq!(truth.true_pairs().len(), 4);
        let sizes = truth.sizes();
        // predict (file2 row1 -> file1 row1) correct, (file3 row1 -> file1
        // row2) wrong
        let z =
            MatchingVectors::from_vectors(&sizes, vec![vec![0, 3], vec![1]]).unwrap();
        let (p, r, f1) = precision_recall_f1(&z, &truth).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(r, 0.25);
        approx::assert_relative_eq!(f1, 1.0 / 3.0, epsilon = 1e-12);
        assert!(f1 <= 2.0 * p.min(r));
    }

    #[test]
    fn truth_size_mismatch_is_error() {
        let truth = truth_332();
        let z = MatchingVectors::unlinked(&FileSizes(vec![3, 3]));
        assert!(matches!(
            precision_recall_f1(&z, &truth),
            Err(EvalError::TruthSize { .. })
        ));
    }

    #[test]
    fn entity_count_identities() {
        let sizes = FileSizes(vec![4, 4, 4]);
        let none = MatchingVectors::unlinked(&sizes);
        assert_eq!(entity_count(&none), 12);
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..50 {
            let z = crate::linkage::random_valid_z(&sizes, 0.5, &mut rng);
            assert_eq!(entity_count(&z) + z.total_links(), sizes.total());
            // equals the number of distinct traced clusters
            let mut reps = BTreeSet::new();
            for g in 0..sizes.total() {
                let members = linkage::trace_cluster(GlobalIndex(g), &z).unwrap().members;
                reps.insert(members[0]);
            }
            assert_eq!(entity_count(&z), reps.len());
        }
    }

    #[test]
    fn ess_iid_series() {
        let mut rng = StdRng::seed_from_u64(8);
        let series: Vec<f64> = (0..2000)
            .map(|_| {
                // sum of uniforms is close enough to normal for this check
                (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
            })
            .collect();
        let ess = effective_sample_size(&series).unwrap();
        assert!(
            (1600.0..=2400.0).contains(&ess),
            "iid ESS {ess} out of range"
        );
    }

    #[test]
    fn ess_constant_series_is_one() {
        let series = vec![3.5; 100];
        assert_eq!(effective_sample_size(&series).unwrap(), 1.0);
        assert!(matches!(
            effective_sample_size(&[1.0; 5]),
            Err(EvalError::SeriesTooShort(5))
        ));
    }

    #[test]
    fn ess_ar1_matches_analytic_value() {
        let rho: f64 = 0.5;
        let n = 2000;
        let mut rng = StdRng::seed_from_u64(12);
        let mut series = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            let e: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
            x = rho * x + e * (1.0 - rho * rho).sqrt();
            series.push(x);
        }
        let ess = effective_sample_size(&series).unwrap();
        let analytic = n as f64 * (1.0 - rho) / (1.0 + rho);
        assert!(
            (ess - analytic).abs() / analytic < 0.25,
            "AR(1) ESS {ess} vs analytic {analytic}"
        );
    }

    #[test]
    fn truth_csv_round_trip_and_validation() {
        let truth = truth_332();
        let mut buf = Vec::new();
        truth.write_csv(&mut buf).unwrap();
        let back = GroundTruth::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, truth);

        let dup = GroundTruth {
            entities: vec![vec![1, 1]],
        };
        assert!(matches!(
            dup.validate(),
            Err(EvalError::DuplicateEntityInFile { file: 0 })
        ));
    }
}
