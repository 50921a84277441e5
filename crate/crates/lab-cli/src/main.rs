//! `lab` — experiment CLI for the reward-estimation laboratory.

use clap::{Parser, Subcommand};
use lab_core::agents::{train_agent, Algo, RewardSourceCfg, TrainConfig};
use lab_core::env::Preset;
use lab_core::harness::{
    self, parse_config, parse_results_csv, summarize_rows, summary_to_csv, ResultRow,
    RESULTS_HEADER,
};
use lab_core::noise::NoiseModel;
use lab_core::tabular::{run_tabular_experiment, DEFAULT_ALPHAS};
use lab_core::variance::{
    estimate_gap, mean_reward_stats, measure_reward_statistics, verify_cov_scaling,
    verify_sample_mean_variance, FittedEstimator, JointLaw, RewardLaw,
};
use lab_core::{LabError, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lab", about = "Reward-estimation RL laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabular TD RMSE sweep on a chain preset.
    Tabular {
        #[arg(long, default_value = "chain5")]
        preset: String,
        /// Reward value paid on each successful step.
        #[arg(long, default_value_t = 1.0)]
        reward: f64,
        /// Probability of paying the reward.
        #[arg(long, default_value_t = 0.5)]
        prob: f64,
        /// Comma-separated learning rates (defaults to the standard grid).
        #[arg(long)]
        alphas: Option<String>,
        /// Number of seeds (0..n).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Optional corruption channel, e.g. gaussian:0.4.
        #[arg(long, default_value = "none")]
        noise: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo checks of the variance identities.
    Variance {
        /// One of eq4, eq5, eq6, tables.
        #[arg(long)]
        check: String,
        /// Trial count (accepts forms like 1e6).
        #[arg(long, default_value = "1e6")]
        trials: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one agent configuration across seeds.
    Train {
        #[arg(long)]
        env: String,
        #[arg(long, default_value = "none")]
        noise: String,
        #[arg(long, default_value = "clipped")]
        algo: String,
        /// sampled or estimated:<s|sa|sas>.
        #[arg(long, default_value = "sampled")]
        source: String,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        updates: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full suite from a config file.
    Suite {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the summary table from a results CSV.
    Score {
        #[arg(long)]
        results: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tabular {
            preset,
            reward,
            prob,
            alphas,
            seeds,
            episodes,
            noise,
            out,
        } => {
            let preset = Preset::parse(&preset)?;
            let noise = NoiseModel::parse_spec(&noise)?;
            let alphas = match alphas {
                Some(s) => parse_f64_list(&s)?,
                None => DEFAULT_ALPHAS.to_vec(),
            };
            let seed_list: Vec<u64> = (0..seeds).collect();
            let cells = run_tabular_experiment(
                preset, reward, prob, noise, &alphas, episodes, &seed_list,
            )?;
            let mut text = String::from(
                "preset,reward_value,prob,alpha,source,seed,mean_rmse,fallback_events\n",
            );
            for c in &cells {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    c.preset,
                    c.reward_value,
                    c.prob,
                    c.alpha,
                    c.source,
                    c.seed,
                    c.mean_rmse,
                    c.fallback_events
                ));
            }
            std::fs::write(&out, text)?;
            println!("wrote {} rows to {}", cells.len(), out.display());
            Ok(())
        }
        Command::Variance { check, trials, out } => {
            let trials = parse_trials(&trials)?;
            run_variance_check(&check, trials, &out)
        }
        Command::Train {
            env,
            noise,
            algo,
            source,
            seeds,
            updates,
            out,
        } => {
            let preset = Preset::parse(&env)?;
            let noise = NoiseModel::parse_spec(&noise)?;
            let algo = Algo::parse(&algo)?;
            let source = RewardSourceCfg::parse(&source)?;
            let mut cfg = TrainConfig::defaults(preset, algo, source)?;
            cfg.noise = noise.clone();
            if let Some(u) = updates {
                cfg.updates = u;
            }
            let hash_input = format!(
                "env={}|noise={:?}|algo={}|source={}|updates={}",
                preset.id(),
                noise,
                algo.id(),
                source.id(),
                cfg.updates
            );
            let hash = format!("{:016x}", fnv(hash_input.as_bytes()));
            let timestamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let noise_kind = noise
                .as_ref()
                .map(|m| m.kind_id().to_string())
                .unwrap_or_else(|| "none".to_string());
            let noise_level = noise.as_ref().map(|m| m.level()).unwrap_or(0.0);
            let mut text = String::from(RESULTS_HEADER);
            text.push('\n');
            let mut diverged_all = true;
            for seed in 0..seeds {
                let outcome = train_agent(&cfg, seed, 0)?;
                diverged_all &= outcome.diverged;
                for r in &outcome.records {
                    let row = ResultRow {
                        suite: "train".into(),
                        config_hash: hash.clone(),
                        env: preset.id().into(),
                        algo: algo.id().into(),
                        noise_kind: noise_kind.clone(),
                        noise_level: format!("{noise_level}"),
                        source: source.id(),
                        seed,
                        update: r.update,
                        mean_return: r.mean_return,
                        episodes_in_window: r.episodes_in_window,
                        window_short: r.window_short,
                        mean_abs_adv: r.mean_abs_adv,
                        mean_sq_adv: r.mean_sq_adv,
                        reward_loss: r.reward_loss,
                        warmup_weight: r.warmup_weight,
                        diverged: r.diverged,
                    };
                    text.push_str(&format_result_row(&row, timestamp));
                    text.push('\n');
                }
            }
            std::fs::write(&out, text)?;
            if diverged_all {
                return Err(LabError::AllSeedsDiverged(format!(
                    "{} {} {}",
                    preset.id(),
                    source.id(),
                    noise_kind
                )));
            }
            println!("wrote learning curves to {}", out.display());
            Ok(())
        }
        Command::Suite { config } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = parse_config(&text)?;
            let out = harness::run_suite(&cfg)?;
            println!(
                "wrote {} rows to {}",
                out.rows_written,
                cfg.out.display()
            );
            if !out.summary_csv.is_empty() {
                print!("{}", out.summary_csv);
            }
            Ok(())
        }
        Command::Score { results } => {
            let text = std::fs::read_to_string(&results)?;
            let rows = parse_results_csv(&text)?;
            let summary = summarize_rows(&rows)?;
            print!("{}", summary_to_csv(&summary));
            Ok(())
        }
    }
}

fn run_variance_check(check: &str, trials: usize, out: &PathBuf) -> Result<()> {
    use lab_core::rng;
    let mut text = String::new();
    match check {
        "eq4" => {
            text.push_str("law,n,ratio,expected\n");
            let laws: [(&str, RewardLaw); 2] = [
                ("bernoulli5", RewardLaw::BernoulliScaled { p: 0.5, value: 5.0 }),
                ("gaussian", RewardLaw::Gaussian { mean: 0.0, std: 1.0 }),
            ];
            for (name, law) in laws {
                for n in [1usize, 10, 100] {
                    let mut r = rng::stream(1000 + n as u64, rng::ENV_STREAM);
                    let ratio = verify_sample_mean_variance(&law, n, trials, &mut r);
                    text.push_str(&format!("{name},{n},{ratio},{}\n", 1.0 / n as f64));
                    println!(
                        "eq4 {name} N={n}: ratio {ratio:.6} (expect {:.6})",
                        1.0 / n as f64
                    );
                }
            }
        }
        "eq5" => {
            text.push_str("law,n,empirical_cov,analytic_cov,ratio\n");
            let law = JointLaw::TwoPoint {
                p: 0.3,
                a: (5.0, 2.0),
                b: (1.0, 0.5),
            };
            for n in [1usize, 10] {
                let mut r = rng::stream(2000 + n as u64, rng::ENV_STREAM);
                let c = verify_cov_scaling(&law, n, 1.0, trials, &mut r);
                text.push_str(&format!(
                    "twopoint,{n},{},{},{}\n",
                    c.empirical,
                    c.analytic,
                    c.ratio()
                ));
                println!("eq5 N={n}: cov ratio {:.6} (expect {:.6})", c.ratio(), 1.0 / n as f64);
            }
        }
        "eq6" => {
            text.push_str("law,n,mean_gap,se,analytic_rhs,condition_holds\n");
            let laws: [(&str, JointLaw); 3] = [
                (
                    "cov_pos",
                    JointLaw::LinearValue {
                        reward: RewardLaw::BernoulliScaled { p: 0.5, value: 1.0 },
                        scale: 1.0,
                        offset: 0.0,
                    },
                ),
                (
                    "cov_zero",
                    JointLaw::Independent {
                        reward: RewardLaw::BernoulliScaled { p: 0.5, value: 5.0 },
                        value_mean: 1.0,
                        value_std: 1.0,
                    },
                ),
                (
                    "cov_neg_violating",
                    JointLaw::LinearValue {
                        reward: RewardLaw::BernoulliScaled { p: 0.5, value: 1.0 },
                        scale: -2.0,
                        offset: 0.0,
                    },
                ),
            ];
            let batches = 20;
            for (name, law) in laws {
                let mut r = rng::stream(3000, rng::ENV_STREAM);
                let est = estimate_gap(&law, 10, 1.0, batches, trials / batches, &mut r);
                text.push_str(&format!(
                    "{name},10,{},{},{},{}\n",
                    est.mean_gap, est.se, est.analytic_rhs, est.condition_holds
                ));
                println!(
                    "eq6 {name}: gap {:.6} +- {:.6} (analytic {:.6}, condition {})",
                    est.mean_gap, est.se, est.analytic_rhs, est.condition_holds
                );
            }
        }
        "tables" => {
            text.push_str(
                "preset,noise_kind,level,var_r_true,var_r_corr,var_rhat,mse_corr,mse_rhat\n",
            );
            let channels: Vec<(String, NoiseModel)> = vec![
                ("gaussian".into(), NoiseModel::gaussian(0.4)?),
                ("uniform".into(), NoiseModel::uniform_replace(0.3)?),
                ("sparsity".into(), NoiseModel::sparsify(0.9)?),
            ];
            for (name, model) in channels {
                let chain = Preset::Chain5.build_chain_env(5.0, 0.5)?;
                let env = lab_core::env::EnvKind::Chain(chain);
                // fit the estimator on corrupted data first
                let mut est =
                    lab_core::tabular::SampleMeanEstimator::new(lab_core::tabular::KeyMode::S);
                let mut env_rng = rng::stream(7000, rng::ENV_STREAM);
                let mut noisy = lab_core::noise::NoisyEnv::new(
                    env.clone(),
                    Some(model.clone()),
                    rng::stream(7000, rng::NOISE_STREAM),
                );
                use lab_core::env::Action;
                for _ in 0..20_000 {
                    noisy.reset(&mut env_rng);
                    while !noisy.is_terminal() {
                        let t = noisy.step(&Action::Discrete(0), &mut env_rng);
                        est.observe(est.key_for(&t), t.reward_observed);
                    }
                }
                let mut policy =
                    |_: &lab_core::env::StateRepr, _: &mut lab_core::rng::ChaCha8Rng| {
                        Action::Discrete(0)
                    };
                let stats = measure_reward_statistics(
                    &env,
                    &mut policy,
                    Some(&model),
                    &FittedEstimator::Tabular(&est),
                    100,
                    10,
                    8000,
                )?;
                let m = mean_reward_stats(&stats);
                text.push_str(&format!(
                    "chain5,{name},{},{},{},{},{},{}\n",
                    model.level(),
                    m.var_r_true,
                    m.var_r_corr,
                    m.var_rhat,
                    m.mse_corr_vs_true,
                    m.mse_rhat_vs_true
                ));
                println!(
                    "tables {name}: var_true {:.4} var_corr {:.4} var_rhat {:.4}",
                    m.var_r_true, m.var_r_corr, m.var_rhat
                );
            }
        }
        other => {
            return Err(LabError::Config(format!(
                "unknown check `{other}` (expected eq4|eq5|eq6|tables)"
            )))
        }
    }
    std::fs::write(out, text)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn parse_trials(s: &str) -> Result<usize> {
    let v: f64 = s
        .parse()
        .map_err(|_| LabError::Config(format!("bad trial count `{s}`")))?;
    if !(v.is_finite() && v >= 2.0) {
        return Err(LabError::Config(format!("trial count `{s}` too small")));
    }
    Ok(v as usize)
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| LabError::Config(format!("bad number `{}`", p.trim())))
        })
        .collect()
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn format_result_row(r: &ResultRow, timestamp: u64) -> String {
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
