//! Flat key-value suite configs with dotted keys.
//!
//! One file fully determines a suite: `key = value` lines, `#` comments,
//! comma-separated lists. Keys are validated against the schema for the
//! selected mode; duplicates are rejected. The config hash is FNV-1a over
//! the canonical (sorted) key-value serialization, so it is stable across
//! reordering and re-serialization.

use crate::agents::{Algo, RewardSourceCfg};
use crate::env::Preset;
use crate::error::LabError;
use crate::noise::{NoiseKind, NoiseModel};
use crate::Result;
use std::collections::BTreeMap;
use std::path::PathBuf;

/// What the suite runs.
#[derive(Debug, Clone)]
pub enum SuiteMode {
    Train(TrainSuite),
    Tabular(TabularSuite),
}

#[derive(Debug, Clone)]
pub struct TrainSuite {
    pub env: Preset,
    pub algo: Algo,
    pub sources: Vec<RewardSourceCfg>,
    pub updates: Option<usize>,
    pub rollout: Option<usize>,
    pub envs: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub clip: Option<f64>,
    pub entropy: Option<f64>,
    pub lr_policy: Option<f64>,
    pub lr_critic: Option<f64>,
    pub lr_reward: Option<f64>,
    pub warmup: Option<f64>,
    pub epochs: Option<usize>,
    pub reward_steps: Option<usize>,
    pub hidden: Option<usize>,
    pub window: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TabularSuite {
    pub env: Preset,
    pub reward_value: f64,
    pub prob: f64,
    pub alphas: Vec<f64>,
    pub episodes: usize,
}

/// A parsed, validated suite configuration.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub suite_id: String,
    pub mode: SuiteMode,
    /// Noise channel template; `None` runs without corruption.
    pub noise: Option<NoiseModel>,
    /// Levels swept for the channel (sigma or epsilon). A single `0.0`
    /// when no channel is configured.
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub config_hash: String,
}

const COMMON_KEYS: &[&str] = &[
    "suite", "mode", "env", "out", "seeds", "noise.kind", "noise.levels", "noise.low",
    "noise.high",
];
const TRAIN_KEYS: &[&str] = &[
    "algo", "sources", "updates", "rollout", "envs", "gamma", "lambda", "clip", "entropy",
    "lr.policy", "lr.critic", "lr.reward", "warmup", "epochs", "reward_steps", "hidden",
    "window",
];
const TABULAR_KEYS: &[&str] = &["reward", "prob", "alphas", "episodes"];

/// Parse the text of a config file.
pub fn parse_config(text: &str) -> Result<SuiteConfig> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            LabError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(LabError::Config(format!("duplicate key `{key}`")));
        }
    }
    build_config(map)
}

fn build_config(map: BTreeMap<String, String>) -> Result<SuiteConfig> {
    let mode_name = map.get("mode").map(String::as_str).unwrap_or("train");
    let allowed: Vec<&str> = match mode_name {
        "train" => COMMON_KEYS.iter().chain(TRAIN_KEYS).copied().collect(),
        "tabular" => COMMON_KEYS.iter().chain(TABULAR_KEYS).copied().collect(),
        other => return Err(LabError::Config(format!("unknown mode `{other}`"))),
    };
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(LabError::Config(format!(
                "unknown key `{key}` for mode `{mode_name}`"
            )));
        }
    }

    let get = |k: &str| -> Result<&String> {
        map.get(k)
            .ok_or_else(|| LabError::Config(format!("missing required key `{k}`")))
    };
    let suite_id = map
        .get("suite")
        .cloned()
        .unwrap_or_else(|| "suite".to_string());
    let env = Preset::parse(get("env")?)?;
    let out = PathBuf::from(get("out")?);
    let seeds = parse_u64_list(get("seeds")?)?;
    if seeds.is_empty() {
        return Err(LabError::Config("seeds list is empty".into()));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(LabError::Config("seeds must be distinct".into()));
    }

    let noise_kind = map.get("noise.kind").map(String::as_str).unwrap_or("none");
    let (noise, noise_levels) = if noise_kind == "none" {
        if map.contains_key("noise.levels") {
            return Err(LabError::Config(
                "noise.levels given but noise.kind is none".into(),
            ));
        }
        (None, vec![0.0])
    } else {
        let levels = parse_f64_list(get("noise.levels")?)?;
        if levels.is_empty() {
            return Err(LabError::Config("noise.levels is empty".into()));
        }
        let low = parse_opt_f64(&map, "noise.low")?.unwrap_or(-1.0);
        let high = parse_opt_f64(&map, "noise.high")?.unwrap_or(1.0);
        let template = match noise_kind {
            "gaussian" => NoiseModel::gaussian(levels[0])?,
            "uniform" => NoiseModel::uniform_replace_bounded(levels[0], low, high)?,
            "sparsity" | "sparsify" => NoiseModel::sparsify(levels[0])?,
            other => {
                return Err(LabError::Config(format!("unknown noise.kind `{other}`")))
            }
        };
        // validate every level up front
        for &l in &levels {
            template.with_level(l)?;
        }
        (Some(template), levels)
    };
    if noise.is_none() && (map.contains_key("noise.low") || map.contains_key("noise.high")) {
        return Err(LabError::Config(
            "noise bounds given but noise.kind is none".into(),
        ));
    }
    if let Some(m) = &noise {
        if m.kind != NoiseKind::UniformReplace
            && (map.contains_key("noise.low") || map.contains_key("noise.high"))
        {
            return Err(LabError::Config(
                "noise bounds only apply to uniform replacement".into(),
            ));
        }
    }

    let mode = match mode_name {
        "train" => {
            let sources_raw = get("sources")?;
            let sources = sources_raw
                .split(',')
                .map(|s| RewardSourceCfg::parse(s.trim()))
                .collect::<Result<Vec<_>>>()?;
            if sources.is_empty() {
                return Err(LabError::Config("sources list is empty".into()));
            }
            SuiteMode::Train(TrainSuite {
                env,
                algo: Algo::parse(get("algo")?)?,
                sources,
                updates: parse_opt_usize(&map, "updates")?,
                rollout: parse_opt_usize(&map, "rollout")?,
                envs: parse_opt_usize(&map, "envs")?,
                gamma: parse_opt_f64(&map, "gamma")?,
                lambda: parse_opt_f64(&map, "lambda")?,
                clip: parse_opt_f64(&map, "clip")?,
                entropy: parse_opt_f64(&map, "entropy")?,
                lr_policy: parse_opt_f64(&map, "lr.policy")?,
                lr_critic: parse_opt_f64(&map, "lr.critic")?,
                lr_reward: parse_opt_f64(&map, "lr.reward")?,
                warmup: parse_opt_f64(&map, "warmup")?,
                epochs: parse_opt_usize(&map, "epochs")?,
                reward_steps: parse_opt_usize(&map, "reward_steps")?,
                hidden: parse_opt_usize(&map, "hidden")?,
                window: parse_opt_usize(&map, "window")?,
            })
        }
        "tabular" => {
            if noise_levels.len() > 1 {
                return Err(LabError::Config(
                    "tabular mode takes at most one noise level".into(),
                ));
            }
            SuiteMode::Tabular(TabularSuite {
                env,
                reward_value: parse_opt_f64(&map, "reward")?.unwrap_or(1.0),
                prob: parse_opt_f64(&map, "prob")?.unwrap_or(0.5),
                alphas: match map.get("alphas") {
                    Some(v) => parse_f64_list(v)?,
                    None => crate::tabular::DEFAULT_ALPHAS.to_vec(),
                },
                episodes: parse_opt_usize(&map, "episodes")?.unwrap_or(100),
            })
        }
        _ => unreachable!(),
    };

    let mut canonical = String::new();
    for (k, v) in &map {
        canonical.push_str(k);
        canonical.push('=');
        canonical.push_str(v);
        canonical.push('\n');
    }
    Ok(SuiteConfig {
        suite_id,
        mode,
        noise,
        noise_levels,
        seeds,
        out,
        config_hash: format!("{:016x}", fnv1a64(canonical.as_bytes())),
    })
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| LabError::Config(format!("bad integer `{}`", p.trim())))
        })
        .collect()
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

fn parse_opt_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    map.get(key)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| LabError::Config(format!("bad number for `{key}`: `{v}`")))
        })
        .transpose()
}

fn parse_opt_usize(map: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    map.get(key)
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| LabError::Config(format!("bad integer for `{key}`: `{v}`")))
        })
        .transpose()
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# demo suite
suite = demo
env = pointmass
algo = clipped
sources = sampled, estimated:sa
noise.kind = uniform
noise.levels = 0.0, 0.3
seeds = 1,2,3
updates = 10
out = results.csv
";

    #[test]
    fn parses_a_full_train_config() {
        let cfg = parse_config(GOOD).unwrap();
        assert_eq!(cfg.suite_id, "demo");
        assert_eq!(cfg.noise_levels, vec![0.0, 0.3]);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        match cfg.mode {
            SuiteMode::Train(t) => {
                assert_eq!(t.sources.len(), 2);
                assert_eq!(t.updates, Some(10));
            }
            _ => panic!("expected train mode"),
        }
    }

    #[test]
    fn hash_is_stable_across_reordering() {
        let reordered = "\
out = results.csv
updates = 10
seeds = 1,2,3
noise.levels = 0.0, 0.3
noise.kind = uniform
sources = sampled, estimated:sa
algo = clipped
env = pointmass
suite = demo
";
        let a = parse_config(GOOD).unwrap();
        let b = parse_config(reordered).unwrap();
        assert_eq!(a.config_hash, b.config_hash);
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(parse_config("env pointmass\n").is_err());
        assert!(parse_config(&format!("{GOOD}env = grid5\n")).is_err()); // duplicate
        assert!(parse_config(&GOOD.replace("pointmass", "mujoco")).is_err());
        assert!(parse_config(&GOOD.replace("algo = clipped", "walrus = yes")).is_err());
        assert!(parse_config(&GOOD.replace("seeds = 1,2,3", "seeds = 1,1")).is_err());
        assert!(parse_config(&GOOD.replace("out = results.csv", "")).is_err());
    }

    #[test]
    fn tabular_mode_defaults() {
        let cfg = parse_config(
            "mode = tabular\nenv = chain5\nreward = 5\nout = t.csv\nseeds = 0,1\n",
        )
        .unwrap();
        match cfg.mode {
            SuiteMode::Tabular(t) => {
                assert_eq!(t.reward_value, 5.0);
                assert_eq!(t.prob, 0.5);
                assert_eq!(t.episodes, 100);
                assert_eq!(t.alphas.len(), 7);
            }
            _ => panic!("expected tabular mode"),
        }
    }
}
