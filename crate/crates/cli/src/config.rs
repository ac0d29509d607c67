//! Experiment configuration: TOML-backed, fully defaulted, validated before
//! any training starts, and serialized into the output directory so every
//! run is reproducible from its artifacts.

use anyhow::{anyhow, bail, Context};
use orpo_core::dynamics::{DynamicsConfig, StepMode, UncertaintyHeuristic};
use orpo_core::policies::{SacConfig, Td3BcConfig};
use orpo_core::shaping::RewardShaper;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Optimistic rollouts, pessimistic relabeling, TD3+BC output policy.
    Orpo,
    /// Pessimistic rollouts only; the SAC policy is the output policy.
    Mopo,
    /// Optimistic rollouts and optimistic optimization; SAC is the output.
    Oroo,
    /// ORPO with the pessimistic penalty removed (λ^p treated as 0).
    OrpoNopess,
}

impl Preset {
    pub fn parse(name: &str) -> anyhow::Result<Preset> {
        Ok(match name {
            "orpo" => Preset::Orpo,
            "mopo" => Preset::Mopo,
            "oroo" => Preset::Oroo,
            "orpo-nopess" => Preset::OrpoNopess,
            other => bail!("unknown preset '{other}' (expected orpo|mopo|oroo|orpo-nopess)"),
        })
    }

    /// Whether the rollout-policy branch is optimistic.
    pub fn optimistic_rollouts(self) -> bool {
        !matches!(self, Preset::Mopo)
    }

    /// Whether a separate output policy is trained on relabeled data.
    pub fn trains_output_policy(self) -> bool {
        matches!(self, Preset::Orpo | Preset::OrpoNopess)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSection {
    pub name: String,
    pub dataset_size: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection { name: "riskworld".into(), dataset_size: 4000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ShaperSection {
    pub lambda_p: f64,
    pub lambda_o: f64,
    pub heuristic: UncertaintyHeuristic,
}

impl Default for ShaperSection {
    fn default() -> Self {
        ShaperSection { lambda_p: 100.0, lambda_o: 1.0, heuristic: UncertaintyHeuristic::EnsembleStd }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutSection {
    pub horizon_optimistic: usize,
    pub horizon_pessimistic: usize,
    pub batch: usize,
    pub step_mode: StepMode,
    pub sanity_box: f64,
    /// Replace the model's reward head with the analytic task reward.
    pub known_reward: bool,
}

impl Default for RolloutSection {
    fn default() -> Self {
        RolloutSection {
            horizon_optimistic: 5,
            horizon_pessimistic: 5,
            batch: 400,
            step_mode: StepMode::MemberUniform,
            sanity_box: 10.0,
            known_reward: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MixSection {
    pub batch_size: usize,
    /// Fractions over {D_env, rollout buffer} for rollout-policy updates.
    pub sac: Vec<f64>,
    /// Fractions over {D_env, relabeled optimistic, pessimistic} for
    /// output-policy updates.
    pub td3bc: Vec<f64>,
}

impl Default for MixSection {
    fn default() -> Self {
        MixSection { batch_size: 256, sac: vec![0.05, 0.95], td3bc: vec![0.05, 0.45, 0.5] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: usize,
    pub sac_steps_per_epoch: usize,
    pub td3bc_steps_per_epoch: usize,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    pub eps_u_rollouts: usize,
    /// Ring capacity of each model buffer.
    pub model_buffer_capacity: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 10,
            sac_steps_per_epoch: 1000,
            td3bc_steps_per_epoch: 1000,
            eval_episodes: 50,
            final_eval_episodes: 500,
            eps_u_rollouts: 100,
            model_buffer_capacity: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub env: EnvSection,
    pub dynamics: DynamicsConfig,
    pub shaper: ShaperSection,
    pub rollout: RolloutSection,
    pub mix: MixSection,
    pub sac: SacConfig,
    pub td3bc: Td3BcConfig,
    pub train: TrainSection,
}

impl ExperimentConfig {
    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or(Preset::Orpo)
    }

    /// The shaper actually applied during the run; the no-pessimism preset
    /// zeroes the penalty while leaving the configured value on record.
    pub fn effective_shaper(&self) -> anyhow::Result<RewardShaper> {
        let lambda_p = if self.preset() == Preset::OrpoNopess { 0.0 } else { self.shaper.lambda_p };
        RewardShaper::new(lambda_p, self.shaper.lambda_o, self.shaper.heuristic)
            .map_err(|e| anyhow!("{e}"))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.env.name != "riskworld" {
            bail!("unsupported environment '{}' (only riskworld is implemented)", self.env.name);
        }
        if self.env.dataset_size < 100 {
            bail!("env.dataset_size must be at least 100 (got {})", self.env.dataset_size);
        }
        if self.shaper.lambda_p < 0.0 {
            bail!("shaper.lambda_p must be non-negative");
        }
        if self.rollout.horizon_optimistic == 0 || self.rollout.horizon_pessimistic == 0 {
            bail!("rollout horizons must be positive");
        }
        if self.rollout.batch == 0 {
            bail!("rollout.batch must be positive");
        }
        let check_fractions = |name: &str, fr: &[f64], want_len: usize| -> anyhow::Result<()> {
            if fr.len() != want_len {
                bail!("mix.{name} needs {want_len} fractions, got {}", fr.len());
            }
            let sum: f64 = fr.iter().sum();
            if fr.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
                bail!("mix.{name} fractions must be non-negative and sum to 1 (sum {sum})");
            }
            Ok(())
        };
        check_fractions("sac", &self.mix.sac, 2)?;
        check_fractions("td3bc", &self.mix.td3bc, 3)?;
        if self.mix.batch_size == 0 {
            bail!("mix.batch_size must be positive");
        }
        if self.train.epochs == 0 {
            bail!("train.epochs must be positive");
        }
        if self.dynamics.n_members < 2 {
            bail!("dynamics.n_members must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dynamics.holdout_frac) || self.dynamics.holdout_frac <= 0.0 {
            bail!("dynamics.holdout_frac must be in (0, 1)");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> anyhow::Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing config TOML")?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String], preset_flag: Option<&str>) -> anyhow::Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::load_from_str(&text, overrides, preset_flag)
    }

    /// Parse, apply `key.path=value` overrides onto the TOML tree, then the
    /// preset flag, then validate.
    pub fn load_from_str(
        text: &str,
        overrides: &[String],
        preset_flag: Option<&str>,
    ) -> anyhow::Result<ExperimentConfig> {
        let mut tree: toml::Table = toml::from_str(text).context("parsing config TOML")?;
        for ov in overrides {
            apply_override(&mut tree, ov)?;
        }
        let mut cfg: ExperimentConfig =
            toml::Value::Table(tree).try_into().context("deserializing config")?;
        if let Some(name) = preset_flag {
            cfg.preset = Some(Preset::parse(name)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialized form; this is what gets hashed and written out.
    pub fn to_toml_string(&self) -> anyhow::Result<String> {
        toml::to_string_pretty(self).context("serializing config")
    }

    pub fn hash(&self) -> anyhow::Result<u64> {
        Ok(fnv1a(self.to_toml_string()?.as_bytes()))
    }
}

/// FNV-1a over bytes; stable across runs and platforms.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn apply_override(tree: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let (path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{spec}' must look like key.path=value"))?;
    let value = parse_toml_value(raw_value.trim())?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.is_empty() || keys.iter().any(|k| k.is_empty()) {
        bail!("override '{spec}' has an empty key path");
    }
    let mut node = tree;
    for key in &keys[..keys.len() - 1] {
        node = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override '{spec}': '{key}' is not a table"))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn parse_toml_value(raw: &str) -> anyhow::Result<toml::Value> {
    // Lean on the TOML parser itself so numbers, booleans, arrays, and
    // quoted strings all work; fall back to a plain string.
    let attempt = format!("v = {raw}");
    if let Ok(table) = toml::from_str::<toml::Table>(&attempt) {
        if let Some(v) = table.get("v") {
            return Ok(v.clone());
        }
    }
    Ok(toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.preset(), Preset::Orpo);
        assert_eq!(cfg.shaper.lambda_p, 100.0);
        assert_eq!(cfg.shaper.lambda_o, 1.0);
        assert_eq!(cfg.dynamics.n_members, 7);
        assert_eq!(cfg.mix.td3bc, vec![0.05, 0.45, 0.5]);
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.hash().unwrap(), back.hash().unwrap());
    }

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::load_from_str(
            "",
            &[
                "shaper.lambda_p=50.0".into(),
                "train.epochs=3".into(),
                "sac.hidden=[16, 16]".into(),
                "rollout.known_reward=false".into(),
            ],
            Some("mopo"),
        )
        .unwrap();
        assert_eq!(cfg.shaper.lambda_p, 50.0);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.sac.hidden, vec![16, 16]);
        assert!(!cfg.rollout.known_reward);
        assert_eq!(cfg.preset(), Preset::Mopo);
    }

    #[test]
    fn bad_fractions_rejected() {
        let err = ExperimentConfig::load_from_str("", &["mix.sac=[0.4, 0.4]".into()], None);
        assert!(err.is_err());
    }

    #[test]
    fn nopess_zeroes_penalty() {
        let cfg = ExperimentConfig::load_from_str("", &[], Some("orpo-nopess")).unwrap();
        let sh = cfg.effective_shaper().unwrap();
        assert_eq!(sh.lambda_p, 0.0);
        assert_eq!(sh.lambda_o, 1.0);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default().hash().unwrap();
        let b = ExperimentConfig::default().hash().unwrap();
        assert_eq!(a, b);
        let c = ExperimentConfig::load_from_str("", &["train.epochs=99".into()], None)
            .unwrap()
            .hash()
            .unwrap();
        assert_ne!(a, c);
    }
}
