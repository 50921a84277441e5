//! Suite execution: seeded cells, append-only CSV results, and the
//! normalized-improvement summary.

mod config;
mod score;

pub use config::{parse_config, SuiteConfig, SuiteMode, TabularSuite, TrainSuite};
pub use score::{normalized_improvement, random_policy_baseline, random_policy_baseline_env};

use crate::agents::{train_agent, RewardSourceCfg, TrainConfig, UpdateRecord};
use crate::env::Preset;
use crate::error::LabError;
use crate::tabular::run_tabular_experiment;
use crate::Result;
use rayon::prelude::*;
use std::time::{SystemTime, UNIX_EPOCH};

/// One checkpoint line of a training-suite results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub suite: String,
    pub config_hash: String,
    pub env: String,
    pub algo: String,
    pub noise_kind: String,
    pub noise_level: String,
    pub source: String,
    pub seed: u64,
    pub update: usize,
    pub mean_return: f64,
    pub episodes_in_window: usize,
    pub window_short: bool,
    pub mean_abs_adv: f64,
    pub mean_sq_adv: f64,
    pub reward_loss: Option<f64>,
    pub warmup_weight: f64,
    pub diverged: bool,
}

pub const RESULTS_HEADER: &str = "suite,config_hash,env,algo,noise_kind,noise_level,source,seed,update,mean_return,episodes_in_window,window_short,mean_abs_adv,mean_sq_adv,reward_loss,warmup_weight,diverged,timestamp";

/// One row of the normalized-improvement summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub noise_level: String,
    pub source: String,
    pub mean_final_return: f64,
    pub seeds_used: usize,
    pub diverged_seeds: usize,
    pub improvement_pct: Option<f64>,
}

/// Outcome of a suite run.
pub struct SuiteOutput {
    pub rows_written: usize,
    pub summary: Vec<SummaryRow>,
    pub summary_csv: String,
}

/// Execute every (noise level, source, seed) cell of the suite, write the
/// results CSV, and aggregate the summary. Cells run concurrently; output
/// order is fixed by the config regardless of scheduling.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteOutput> {
    match &cfg.mode {
        SuiteMode::Tabular(t) => run_tabular_suite(cfg, t),
        SuiteMode::Train(t) => run_train_suite(cfg, t),
    }
}

fn run_tabular_suite(cfg: &SuiteConfig, t: &TabularSuite) -> Result<SuiteOutput> {
    let noise = match (&cfg.noise, cfg.noise_levels.first()) {
        (Some(template), Some(&level)) => Some(template.with_level(level)?),
        _ => None,
    };
    let cells = run_tabular_experiment(
        t.env,
        t.reward_value,
        t.prob,
        noise,
        &t.alphas,
        t.episodes,
        &cfg.seeds,
    )?;
    let mut out = String::from("preset,reward_value,prob,alpha,source,seed,mean_rmse,fallback_events\n");
    for c in &cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.preset, c.reward_value, c.prob, c.alpha, c.source, c.seed, c.mean_rmse,
            c.fallback_events
        ));
    }
    std::fs::write(&cfg.out, out)?;
    Ok(SuiteOutput {
        rows_written: cells.len(),
        summary: Vec::new(),
        summary_csv: String::new(),
    })
}

struct CellSpec {
    level_idx: usize,
    level: f64,
    source: RewardSourceCfg,
    seed: u64,
}

fn run_train_suite(cfg: &SuiteConfig, t: &TrainSuite) -> Result<SuiteOutput> {
    let mut specs = Vec::new();
    for (level_idx, &level) in cfg.noise_levels.iter().enumerate() {
        for source in &t.sources {
            for &seed in &cfg.seeds {
                specs.push(CellSpec {
                    level_idx,
                    level,
                    source: *source,
                    seed,
                });
            }
        }
    }

    let outcomes: Result<Vec<Vec<UpdateRecord>>> = specs
        .par_iter()
        .map(|spec| {
            let mut train_cfg = build_train_config(t, spec.source)?;
            train_cfg.noise = match &cfg.noise {
                Some(template) => Some(template.with_level(spec.level)?),
                None => None,
            };
            let outcome = train_agent(&train_cfg, spec.seed, spec.level_idx as u64)?;
            Ok(outcome.records)
        })
        .collect();
    let outcomes = outcomes?;

    let noise_kind = cfg
        .noise
        .as_ref()
        .map(|m| m.kind_id().to_string())
        .unwrap_or_else(|| "none".to_string());
    let mut rows = Vec::new();
    for (spec, records) in specs.iter().zip(outcomes.iter()) {
        for r in records {
            rows.push(ResultRow {
                suite: cfg.suite_id.clone(),
                config_hash: cfg.config_hash.clone(),
                env: t.env.id().to_string(),
                algo: t.algo.id().to_string(),
                noise_kind: noise_kind.clone(),
                noise_level: format_f64(spec.level),
                source: spec.source.id(),
                seed: spec.seed,
                update: r.update,
                mean_return: r.mean_return,
                episodes_in_window: r.episodes_in_window,
                window_short: r.window_short,
                mean_abs_adv: r.mean_abs_adv,
                mean_sq_adv: r.mean_sq_adv,
                reward_loss: r.reward_loss,
                warmup_weight: r.warmup_weight,
                diverged: r.diverged,
            });
        }
    }

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = String::from(RESULTS_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&format_row(row, timestamp));
        text.push('\n');
    }
    std::fs::write(&cfg.out, &text)?;

    let summary = summarize_rows(&rows)?;
    let summary_csv = summary_to_csv(&summary);
    Ok(SuiteOutput {
        rows_written: rows.len(),
        summary,
        summary_csv,
    })
}

fn build_train_config(t: &TrainSuite, source: RewardSourceCfg) -> Result<TrainConfig> {
    let mut tc = TrainConfig::defaults(t.env, t.algo, source)?;
    if let Some(v) = t.updates {
        tc.updates = v;
    }
    if let Some(v) = t.rollout {
        tc.rollout_len = v;
    }
    if let Some(v) = t.envs {
        tc.n_envs = v;
    }
    if let Some(v) = t.gamma {
        tc.gamma = v;
    }
    if let Some(v) = t.lambda {
        tc.lambda = v;
    }
    if let Some(v) = t.clip {
        tc.clip_epsilon = v;
    }
    if let Some(v) = t.entropy {
        tc.entropy_coef = v;
    }
    if let Some(v) = t.lr_policy {
        tc.lr_policy = v;
    }
    if let Some(v) = t.lr_critic {
        tc.lr_critic = v;
    }
    if let Some(v) = t.lr_reward {
        tc.lr_reward = v;
    }
    if let Some(v) = t.warmup {
        tc.warmup_frac = v;
    }
    if let Some(v) = t.epochs {
        tc.ppo_epochs = v;
    }
    if let Some(v) = t.reward_steps {
        tc.reward_steps = v;
    }
    if let Some(v) = t.hidden {
        tc.hidden = v;
    }
    if let Some(v) = t.window {
        tc.trailing_window = v;
    }
    Ok(tc)
}

fn format_f64(x: f64) -> String {
    format!("{x}")
}

fn format_row(r: &ResultRow, timestamp: u64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.suite,
        r.config_hash,
        r.env,
        r.algo,
        r.noise_kind,
        r.noise_level,
        r.source,
        r.seed,
        r.update,
        r.mean_return,
        r.episodes_in_window,
        r.window_short,
        r.mean_abs_adv,
        r.mean_sq_adv,
        r.reward_loss.map(|v| v.to_string()).unwrap_or_default(),
        r.warmup_weight,
        r.diverged,
        timestamp
    )
}

/// Parse a results CSV back into rows (timestamp column dropped).
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| LabError::Config("empty results csv".into()))?;
    if header != RESULTS_HEADER {
        return Err(LabError::Config("unexpected results csv header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 18 {
            return Err(LabError::Config(format!(
                "row {}: expected 18 fields, got {}",
                i + 2,
                f.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| LabError::Config(format!("row {}: bad {what} `{s}`", i + 2)))
        };
        rows.push(ResultRow {
            suite: f[0].to_string(),
            config_hash: f[1].to_string(),
            env: f[2].to_string(),
            algo: f[3].to_string(),
            noise_kind: f[4].to_string(),
            noise_level: f[5].to_string(),
            source: f[6].to_string(),
            seed: f[7]
                .parse()
                .map_err(|_| LabError::Config(format!("row {}: bad seed", i + 2)))?,
            update: f[8]
                .parse()
                .map_err(|_| LabError::Config(format!("row {}: bad update", i + 2)))?,
            mean_return: num(f[9], "mean_return")?,
            episodes_in_window: f[10]
                .parse()
                .map_err(|_| LabError::Config(format!("row {}: bad episode count", i + 2)))?,
            window_short: f[11] == "true",
            mean_abs_adv: num(f[12], "mean_abs_adv")?,
            mean_sq_adv: num(f[13], "mean_sq_adv")?,
            reward_loss: if f[14].is_empty() {
                None
            } else {
                Some(num(f[14], "reward_loss")?)
            },
            warmup_weight: num(f[15], "warmup_weight")?,
            diverged: f[16] == "true",
        });
    }
    Ok(rows)
}

/// Aggregate rows into the per-(noise level, source) summary with
/// normalized improvement against the sampled source. Pure function of
/// the rows: `lab score` recomputes exactly this from a results CSV.
pub fn summarize_rows(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let preset = Preset::parse(&rows[0].env)?;
    let random = random_policy_baseline(preset, 100, 0)?;

    // group key order: first appearance in the row stream
    let mut groups: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.noise_level.clone(), r.source.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }

    let mut summary = Vec::new();
    for (level, source) in &groups {
        let group: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| &r.noise_level == level && &r.source == source)
            .collect();
        let mut seeds: Vec<u64> = group.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut finals = Vec::new();
        let mut diverged_seeds = 0usize;
        for &seed in &seeds {
            let last = group
                .iter()
                .filter(|r| r.seed == seed)
                .max_by_key(|r| r.update)
                .expect("group has rows for this seed");
            if last.diverged {
                diverged_seeds += 1;
            } else {
                finals.push(last.mean_return);
            }
        }
        if finals.is_empty() {
            return Err(LabError::AllSeedsDiverged(format!(
                "level {level} source {source}"
            )));
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        summary.push(SummaryRow {
            noise_level: level.clone(),
            source: source.clone(),
            mean_final_return: mean,
            seeds_used: finals.len(),
            diverged_seeds,
            improvement_pct: None,
        });
    }

    // improvement against the sampled source at the same level
    let baselines: Vec<(String, f64)> = summary
        .iter()
        .filter(|s| s.source == "sampled")
        .map(|s| (s.noise_level.clone(), s.mean_final_return))
        .collect();
    for row in summary.iter_mut() {
        if let Some((_, baseline)) = baselines.iter().find(|(l, _)| l == &row.noise_level) {
            row.improvement_pct = Some(normalized_improvement(
                row.mean_final_return,
                *baseline,
                random,
            )?);
        }
    }
    Ok(summary)
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> String {
    let mut out =
        String::from("noise_level,source,mean_final_return,seeds,diverged_seeds,improvement_pct\n");
    for s in summary {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.noise_level,
            s.source,
            s.mean_final_return,
            s.seeds_used,
            s.diverged_seeds,
            s.improvement_pct
                .map(|v| v.to_string())
                .unwrap_or_default()
        ));
    }
    out
}

/// Drop the trailing timestamp column from a results CSV, for
/// byte-identity comparisons.
pub fn strip_timestamp_column(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        match line.rsplit_once(',') {
            Some((rest, _)) => out.push_str(rest),
            None => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_suite(dir: &std::path::Path, extra: &str) -> SuiteConfig {
        let text = format!(
            "suite = t\nenv = pointmass\nalgo = clipped\nsources = sampled,estimated:sa\n\
             seeds = 1,2\nupdates = 3\nout = {}\n{extra}",
            dir.join("r.csv").display()
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn suite_writes_rows_and_summary() {
        let dir = std::env::temp_dir().join("lab-suite-test-1");
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = tiny_suite(&dir, "");
        let out = run_suite(&cfg).unwrap();
        assert_eq!(out.rows_written, 2 * 2 * 3);
        assert_eq!(out.summary.len(), 2);
        let text = std::fs::read_to_string(dir.join("r.csv")).unwrap();
        let rows = parse_results_csv(&text).unwrap();
        assert_eq!(rows.len(), 12);
        // score path reproduces the suite summary exactly
        let again = summarize_rows(&rows).unwrap();
        assert_eq!(again, out.summary);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn identical_source_listed_twice_scores_zero() {
        let dir = std::env::temp_dir().join("lab-suite-test-2");
        std::fs::create_dir_all(&dir).unwrap();
        let text = format!(
            "suite = t\nenv = pointmass\nalgo = clipped\nsources = sampled,sampled\n\
             seeds = 1\nupdates = 2\nout = {}\n",
            dir.join("r.csv").display()
        );
        let cfg = parse_config(&text).unwrap();
        let out = run_suite(&cfg).unwrap();
        assert_eq!(out.summary.len(), 1, "duplicate sources collapse to one group");
        assert_eq!(out.summary[0].improvement_pct, Some(0.0));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn strip_timestamp_drops_only_last_column() {
        let text = "a,b,timestamp\n1,2,999\n";
        assert_eq!(strip_timestamp_column(text), "a,b\n1,2\n");
    }
}
