use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::lifetime::MetaTestReport;

/// Aggregate record written next to the per-step table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: EnvSpec,
    pub agent: AgentKind,
    pub config_hash: String,
    pub checkpoint_sha256: String,
    /// Master seed of the meta-test; run `i` uses stream `i` of it.
    pub seed: u64,
    pub run_seed_keys: Vec<u64>,
    pub runs: usize,
    pub lifetime: usize,
    pub fitness_mean: f64,
    pub fitness_std: f64,
    pub baseline_fitness_mean: f64,
    pub baseline_fitness_std: f64,
    pub cum_regret_mean: Option<f64>,
    pub cum_regret_std: Option<f64>,
    pub baseline_cum_regret_mean: Option<f64>,
    pub baseline_cum_regret_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportedFiles {
    /// `run,step,reward,cum_regret,baseline_reward`, one row per run and step.
    pub table: PathBuf,
    /// `run,seed_key,fitness,baseline_fitness,cum_regret,baseline_cum_regret`.
    pub runs: PathBuf,
    /// `step,mean_reward,mean_baseline_reward,relative_reward,mean_cum_regret`.
    pub curves: PathBuf,
    pub summary: PathBuf,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the result files for one meta-test into `dir`.
///
/// Output depends only on the report, so identical seeds give identical bytes.
/// `cum_regret` columns are empty for environments without known payouts.
pub fn export_results(
    report: &MetaTestReport,
    agent: AgentKind,
    config_hash: &str,
    checkpoint_sha256: &str,
    dir: &Path,
) -> Result<(ExportedFiles, Summary)> {
    std::fs::create_dir_all(dir)?;
    let files = ExportedFiles {
        table: dir.join("results.csv"),
        runs: dir.join("runs.csv"),
        curves: dir.join("curves.csv"),
        summary: dir.join("summary.json"),
    };

    let mut table = csv::Writer::from_path(&files.table).map_err(csv_err)?;
    table.write_record(["run", "step", "reward", "cum_regret", "baseline_reward"]).map_err(csv_err)?;
    let mut runs = csv::Writer::from_path(&files.runs).map_err(csv_err)?;
    runs.write_record(["run", "seed_key", "fitness", "baseline_fitness", "cum_regret", "baseline_cum_regret"])
        .map_err(csv_err)?;
    for r in &report.runs {
        let mut acc = 0.0f64;
        for t in 0..report.lifetime {
            let regret = r.agent.expected_regrets.as_ref().map(|g| {
                acc += f64::from(g[t]);
                acc
            });
            table
                .write_record([
                    r.run.to_string(),
                    (t + 1).to_string(),
                    r.agent.rewards[t].to_string(),
                    opt(regret),
                    r.baseline.rewards[t].to_string(),
                ])
                .map_err(csv_err)?;
        }
        runs.write_record([
            r.run.to_string(),
            r.seed_key.to_string(),
            r.agent.fitness.to_string(),
            r.baseline.fitness.to_string(),
            opt(r.agent.cumulative_regret()),
            opt(r.baseline.cumulative_regret()),
        ])
        .map_err(csv_err)?;
    }
    table.flush()?;
    runs.flush()?;

    let n = report.runs.len() as f64;
    let mut curves = csv::Writer::from_path(&files.curves).map_err(csv_err)?;
    curves
        .write_record(["step", "mean_reward", "mean_baseline_reward", "relative_reward", "mean_cum_regret"])
        .map_err(csv_err)?;
    let regret_curve = report.regret_curve();
    let relative = report.relative_reward_curve();
    for t in 0..report.lifetime {
        let mean = report.runs.iter().map(|r| f64::from(r.agent.rewards[t])).sum::<f64>() / n;
        let base = report.runs.iter().map(|r| f64::from(r.baseline.rewards[t])).sum::<f64>() / n;
        let regret = regret_curve.as_ref().map(|c| c[t]);
        curves
            .write_record([(t + 1).to_string(), mean.to_string(), base.to_string(), relative[t].to_string(), opt(regret)])
            .map_err(csv_err)?;
    }
    curves.flush()?;

    let (fitness_mean, fitness_std) = report.fitness_stats();
    let (baseline_fitness_mean, baseline_fitness_std) = report.baseline_fitness_stats();
    let regret = report.regret_stats();
    let base_regret = report.baseline_regret_stats();
    let summary = Summary {
        env: report.env.clone(),
        agent,
        config_hash: config_hash.to_string(),
        checkpoint_sha256: checkpoint_sha256.to_string(),
        seed: report.seed,
        run_seed_keys: report.runs.iter().map(|r| r.seed_key).collect(),
        runs: report.runs.len(),
        lifetime: report.lifetime,
        fitness_mean,
        fitness_std,
        baseline_fitness_mean,
        baseline_fitness_std,
        cum_regret_mean: regret.map(|r| r.0),
        cum_regret_std: regret.map(|r| r.1),
        baseline_cum_regret_mean: base_regret.map(|r| r.0),
        baseline_cum_regret_std: base_regret.map(|r| r.1),
    };

    let mut json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    json.push('\n');
    std::fs::write(&files.summary, json)?;
    Ok((files, summary))
}
