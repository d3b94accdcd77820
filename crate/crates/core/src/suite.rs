//! Seeds x samplers (x prototype counts) grid of full pipeline runs.

use std::fmt::Write as _;
use std::path::Path;

use log::info;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::pipeline::run_pipeline;
use crate::synth::Sampler;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteCell {
    pub sampler: Sampler,
    pub k: usize,
    pub seed: u64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteAggregate {
    pub sampler: Sampler,
    pub k: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteSummary {
    pub cells: Vec<SuiteCell>,
    pub aggregates: Vec<SuiteAggregate>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn aggregate(cells: &[SuiteCell]) -> Vec<SuiteAggregate> {
    let mut keys: Vec<(Sampler, usize)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.sampler, c.k)) {
            keys.push((c.sampler, c.k));
        }
    }
    keys.into_iter()
        .map(|(sampler, k)| {
            let aucs: Vec<f64> = cells.iter().filter(|c| c.sampler == sampler && c.k == k).map(|c| c.auc).collect();
            let n = aucs.len();
            let mean = aucs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SuiteAggregate { sampler, k, n, mean, std, median: median(&aucs) }
        })
        .collect()
}

/// Runs every (k, sampler, seed) combination; `ks = None` keeps the
/// configured prototype count.
pub fn run_suite(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    samplers: &[Sampler],
    ks: Option<&[usize]>,
    out: &Path,
) -> Result<SuiteSummary> {
    if seeds.is_empty() || samplers.is_empty() {
        return Err(Error::InvalidConfig("suite needs at least one seed and one sampler".into()));
    }
    let ks: Vec<usize> = ks.map(<[usize]>::to_vec).unwrap_or_else(|| vec![cfg.embedder.k]);
    let mut cells = Vec::new();
    for &k in &ks {
        for &sampler in samplers {
            for &seed in seeds {
                let mut c = cfg.clone();
                c.embedder.k = k;
                c.sampler = sampler;
                c.seed = seed;
                c.validate()?;
                let (metrics, _) = run_pipeline(&c, out)?;
                info!("suite: k={k} sampler={} seed={seed} AUC {:.4}", sampler.name(), metrics.auc);
                cells.push(SuiteCell { sampler, k, seed, auc: metrics.auc });
            }
        }
    }
    let aggregates = aggregate(&cells);
    Ok(SuiteSummary { cells, aggregates })
}

/// One row per run plus one aggregate row per (sampler, k).
pub fn suite_csv(summary: &SuiteSummary) -> String {
    let mut s = String::from("row,sampler,k,seed,auc,auc_std,auc_median\n");
    for c in &summary.cells {
        writeln!(s, "cell,{},{},{},{:?},,", c.sampler.name(), c.k, c.seed, c.auc).unwrap();
    }
    for a in &summary.aggregates {
        writeln!(s, "aggregate,{},{},,{:?},{:?},{:?}", a.sampler.name(), a.k, a.mean, a.std, a.median).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells() -> Vec<SuiteCell> {
        let mut v = Vec::new();
        for (i, s) in [Sampler::Pgos, Sampler::Gaussian, Sampler::None].into_iter().enumerate() {
            for seed in 0..5u64 {
                v.push(SuiteCell { sampler: s, k: 4, seed, auc: 0.5 + 0.1 * i as f64 + 0.01 * seed as f64 });
            }
        }
        v
    }

    #[test]
    fn fifteen_cells_three_aggregates() {
        let cells = cells();
        let summary = SuiteSummary { aggregates: aggregate(&cells), cells };
        let csv = suite_csv(&summary);
        assert_eq!(csv.lines().filter(|l| l.starts_with("cell,")).count(), 15);
        assert_eq!(csv.lines().filter(|l| l.starts_with("aggregate,")).count(), 3);
        let a = &summary.aggregates[0];
        assert!((a.mean - 0.52).abs() < 1e-12);
        // sample std of 0.50..0.54 step 0.01
        assert!((a.std - 0.025f64.sqrt() / 10.0).abs() < 1e-12);
        assert_eq!(a.median, 0.52);
    }

    #[test]
    fn k_sweep_gives_one_aggregate_per_k() {
        let cells: Vec<SuiteCell> = [2, 4, 8, 16]
            .into_iter()
            .flat_map(|k| (0..3).map(move |seed| SuiteCell { sampler: Sampler::Pgos, k, seed, auc: 0.6 }))
            .collect();
        assert_eq!(aggregate(&cells).len(), 4);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
