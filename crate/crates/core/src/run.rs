//! Run configuration and run-directory layout.
//!
//! A run directory is named by the hash of its canonical config text, so any
//! result can be traced back to the exact settings that produced it. The
//! config format is flat `key = value` text with a fixed key order.

use crate::error::{Error, Result};
use crate::features::BovwNorm;
use crate::loss::{LossSpec, TUKEY_C_DEFAULT};
use crate::model::ArchSpec;
use crate::pipeline::Method;
use crate::trainer::{LossPolicy, TrainConfig};
use crate::util::sha256_hex;
use std::path::{Path, PathBuf};

/// What a run estimates with: one of the three learned methods or one of the
/// two reference baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMethod {
    Image,
    Shape,
    Feature,
    Constant,
    Linear,
}

impl RunMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMethod::Image => "image",
            RunMethod::Shape => "shape",
            RunMethod::Feature => "feature",
            RunMethod::Constant => "constant",
            RunMethod::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(RunMethod::Image),
            "shape" => Ok(RunMethod::Shape),
            "feature" => Ok(RunMethod::Feature),
            "constant" => Ok(RunMethod::Constant),
            "linear" => Ok(RunMethod::Linear),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, RunMethod::Constant | RunMethod::Linear)
    }

    pub fn pipeline_method(&self) -> Option<Method> {
        match self {
            RunMethod::Image => Some(Method::Image),
            RunMethod::Shape => Some(Method::Shape),
            RunMethod::Feature | RunMethod::Linear => Some(Method::Feature),
            RunMethod::Constant => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossChoice {
    L1,
    Mse,
    Tukey,
    MseTukey,
}

impl LossChoice {
    pub const GRID: [LossChoice; 4] = [
        LossChoice::L1,
        LossChoice::Mse,
        LossChoice::Tukey,
        LossChoice::MseTukey,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossChoice::L1 => "l1",
            LossChoice::Mse => "mse",
            LossChoice::Tukey => "tukey",
            LossChoice::MseTukey => "mse_tukey",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossChoice::L1),
            "mse" => Ok(LossChoice::Mse),
            "tukey" => Ok(LossChoice::Tukey),
            "mse_tukey" | "mse-tukey" => Ok(LossChoice::MseTukey),
            other => Err(Error::InvalidArgument(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchChoice {
    /// The four-block CNN (16/32/64/128) with the 64/32/1 head.
    Full,
    /// Two conv blocks (8/16) with a 16/8/1 head, for quick experiments.
    Small,
}

impl ArchChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchChoice::Full => "full",
            ArchChoice::Small => "small",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ArchChoice::Full),
            "small" => Ok(ArchChoice::Small),
            other => Err(Error::InvalidArgument(format!("unknown arch '{other}'"))),
        }
    }

    pub fn cnn_spec(&self, in_channels: usize) -> ArchSpec {
        match self {
            ArchChoice::Full => ArchSpec::cnn_regressor(in_channels),
            ArchChoice::Small => ArchSpec::cnn_small(in_channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: RunMethod,
    /// None for the two baselines.
    pub loss: Option<LossChoice>,
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: Option<u32>,
    pub forced_switch_epoch: Option<u32>,
    pub switch_delay: u32,
    pub seed: u64,
    pub tukey_c: f64,
    pub mad_scaling: bool,
    pub arch: ArchChoice,
    pub k: usize,
    pub max_keypoints: usize,
    pub bovw_norm: BovwNorm,
    pub manifest: String,
    pub base_year: i32,
    pub quota: usize,
    pub split_counts: (usize, usize, usize),
    pub codebook: Option<String>,
    pub cache_dir: Option<String>,
}

impl Default for RunConfig {
    /// The shipped defaults: 3000 epochs, batch 128, Adam 1e-4, patience 50,
    /// forced switch 450, k = 128, 500 keypoints, years normalized to 1932.
    fn default() -> Self {
        Self {
            method: RunMethod::Image,
            loss: Some(LossChoice::MseTukey),
            epochs: 3000,
            batch_size: 128,
            learning_rate: 1e-4,
            patience: Some(50),
            forced_switch_epoch: Some(450),
            switch_delay: 0,
            seed: 42,
            tukey_c: TUKEY_C_DEFAULT,
            mad_scaling: true,
            arch: ArchChoice::Full,
            k: 128,
            max_keypoints: 500,
            bovw_norm: BovwNorm::Raw,
            manifest: String::new(),
            base_year: 1932,
            quota: 56,
            split_counts: (20, 8, 28),
            codebook: None,
            cache_dir: None,
        }
    }
}

fn opt_u32(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

fn parse_opt_u32(s: &str) -> Result<Option<u32>> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|_| Error::Format(format!("expected integer or 'none', got '{s}'")))
    }
}

fn opt_str(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| "none".into())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        match (self.method.is_baseline(), self.loss) {
            (true, Some(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "method '{}' is a baseline and takes no loss",
                    self.method.as_str()
                )))
            }
            (false, None) => {
                return Err(Error::InvalidArgument(format!(
                    "method '{}' requires a loss",
                    self.method.as_str()
                )))
            }
            _ => {}
        }
        if self.loss == Some(LossChoice::MseTukey) {
            if let Some(f) = self.forced_switch_epoch {
                if self.epochs < f {
                    return Err(Error::InvalidArgument(format!(
                        "epochs ({}) must be >= forced_switch_epoch ({f}) for mse_tukey",
                        self.epochs
                    )));
                }
            }
        }
        if self.quota != self.split_counts.0 + self.split_counts.1 + self.split_counts.2 {
            return Err(Error::InvalidArgument(format!(
                "quota ({}) must equal the split total ({:?})",
                self.quota, self.split_counts
            )));
        }
        Ok(())
    }

    /// Canonical flat key/value text; the run-directory hash is taken over
    /// these bytes.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("arch = {}\n", self.arch.as_str()));
        s.push_str(&format!("base_year = {}\n", self.base_year));
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("bovw_norm = {}\n", self.bovw_norm.as_str()));
        s.push_str(&format!("cache_dir = {}\n", opt_str(&self.cache_dir)));
        s.push_str(&format!("codebook = {}\n", opt_str(&self.codebook)));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!(
            "forced_switch_epoch = {}\n",
            opt_u32(self.forced_switch_epoch)
        ));
        s.push_str(&format!("k = {}\n", self.k));
        s.push_str(&format!("learning_rate = {}\n", self.learning_rate));
        s.push_str(&format!(
            "loss = {}\n",
            self.loss.map(|l| l.as_str()).unwrap_or("none")
        ));
        s.push_str(&format!("mad_scaling = {}\n", self.mad_scaling));
        s.push_str(&format!("manifest = {}\n", self.manifest));
        s.push_str(&format!("max_keypoints = {}\n", self.max_keypoints));
        s.push_str(&format!("method = {}\n", self.method.as_str()));
        s.push_str(&format!("patience = {}\n", opt_u32(self.patience)));
        s.push_str(&format!("quota = {}\n", self.quota));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!(
            "split_counts = {},{},{}\n",
            self.split_counts.0, self.split_counts.1, self.split_counts.2
        ));
        s.push_str(&format!("switch_delay = {}\n", self.switch_delay));
        s.push_str(&format!("tukey_c = {}\n", self.tukey_c));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected 'key = value'", line_no + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment (config files and overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::Format(format!("bad integer '{v}' for {key}")))
        };
        match key {
            "arch" => self.arch = ArchChoice::parse(value)?,
            "base_year" => {
                self.base_year = value
                    .parse()
                    .map_err(|_| Error::Format(format!("bad base_year '{value}'")))?
            }
            "batch_size" => self.batch_size = int(value)? as usize,
            "bovw_norm" => {
                self.bovw_norm = match value {
                    "raw" => BovwNorm::Raw,
                    "l1" => BovwNorm::L1,
                    other => {
                        return Err(Error::Format(format!("unknown bovw_norm '{other}'")))
                    }
                }
            }
            "cache_dir" => {
                self.cache_dir = (value != "none").then(|| value.to_string());
            }
            "codebook" => {
                self.codebook = (value != "none").then(|| value.to_string());
            }
            "epochs" => self.epochs = int(value)? as u32,
            "forced_switch_epoch" => self.forced_switch_epoch = parse_opt_u32(value)?,
            "k" => self.k = int(value)? as usize,
            "learning_rate" => {
                self.learning_rate = value
                    .parse()
                    .map_err(|_| Error::Format(format!("bad learning_rate '{value}'")))?
            }
            "loss" => {
                self.loss = if value == "none" {
                    None
                } else {
                    Some(LossChoice::parse(value)?)
                }
            }
            "mad_scaling" => {
                self.mad_scaling = value
                    .parse()
                    .map_err(|_| Error::Format(format!("bad mad_scaling '{value}'")))?
            }
            "manifest" => self.manifest = value.to_string(),
            "max_keypoints" => self.max_keypoints = int(value)? as usize,
            "method" => self.method = RunMethod::parse(value)?,
            "patience" => self.patience = parse_opt_u32(value)?,
            "quota" => self.quota = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "split_counts" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Format(format!(
                        "split_counts wants 'train,val,test', got '{value}'"
                    )));
                }
                self.split_counts = (
                    int(parts[0].trim())? as usize,
                    int(parts[1].trim())? as usize,
                    int(parts[2].trim())? as usize,
                );
            }
            "switch_delay" => self.switch_delay = int(value)? as u32,
            "tukey_c" => {
                self.tukey_c = value
                    .parse()
                    .map_err(|_| Error::Format(format!("bad tukey_c '{value}'")))?
            }
            other => return Err(Error::Format(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// First 12 hex chars of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())[..12].to_string()
    }

    pub fn run_dir_name(&self) -> String {
        let loss = self.loss.map(|l| l.as_str()).unwrap_or("base");
        format!("{}-{}-{}", self.method.as_str(), loss, self.hash())
    }

    pub fn tukey_spec(&self) -> LossSpec {
        LossSpec::tukey(self.tukey_c, self.mad_scaling)
    }

    /// The trainer configuration this run implies (not for baselines).
    pub fn train_config(&self) -> Result<TrainConfig> {
        let policy = match self.loss {
            Some(LossChoice::L1) => LossPolicy::Fixed(LossSpec::l1()),
            Some(LossChoice::Mse) => LossPolicy::Fixed(LossSpec::mse()),
            Some(LossChoice::Tukey) => LossPolicy::Fixed(self.tukey_spec()),
            Some(LossChoice::MseTukey) => LossPolicy::mse_then_tukey(
                self.tukey_spec(),
                self.patience,
                self.forced_switch_epoch,
                self.switch_delay,
            ),
            None => {
                return Err(Error::InvalidArgument(
                    "baseline runs have no trainer configuration".into(),
                ))
            }
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            policy,
            seed: self.seed,
        })
    }
}

/// File layout inside one run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(out_root: &Path, cfg: &RunConfig) -> Self {
        Self {
            dir: out_root.join(cfg.run_dir_name()),
        }
    }

    pub fn existing(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
        }
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.txt")
    }

    pub fn history(&self) -> PathBuf {
        self.dir.join("history.csv")
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }

    pub fn phase_checkpoint(&self, phase: &str) -> PathBuf {
        self.dir.join(format!("best_{phase}.ckpt"))
    }

    pub fn train_state(&self) -> PathBuf {
        self.dir.join("state.ckpt")
    }

    pub fn codebook(&self) -> PathBuf {
        self.dir.join("codebook.txt")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.dir.join("reports")
    }

    pub fn load_config(&self) -> Result<RunConfig> {
        let text = std::fs::read_to_string(self.config())?;
        RunConfig::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.method = RunMethod::Feature;
        cfg.loss = Some(LossChoice::Tukey);
        cfg.manifest = "data/manifest.csv".into();
        cfg.patience = None;
        cfg.cache_dir = Some("cache".into());
        let text = cfg.to_text();
        let back = RunConfig::from_text(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg = RunConfig::default();
        let h1 = cfg.hash();
        assert_eq!(h1.len(), 12);
        assert_eq!(h1, RunConfig::default().hash());
        let mut other = RunConfig::default();
        other.seed = 43;
        assert_ne!(h1, other.hash());
    }

    #[test]
    fn shipped_defaults_match_the_protocol() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.epochs, 3000);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.patience, Some(50));
        assert_eq!(cfg.forced_switch_epoch, Some(450));
        assert_eq!(cfg.k, 128);
        assert_eq!(cfg.max_keypoints, 500);
        assert_eq!(cfg.quota, 56);
        assert_eq!(cfg.split_counts, (20, 8, 28));
        assert_eq!(cfg.base_year, 1932);
        assert_eq!(cfg.tukey_c, 4.685);
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut cfg = RunConfig::default();
        cfg.epochs = 0;
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("epochs must be positive"));

        let mut cfg = RunConfig::default();
        cfg.method = RunMethod::Constant;
        assert!(cfg.validate().is_err()); // baseline with a loss
        cfg.loss = None;
        assert!(cfg.validate().is_ok());

        let mut cfg = RunConfig::default();
        cfg.epochs = 100; // < forced_switch_epoch 450
        assert!(cfg.validate().is_err());
        cfg.forced_switch_epoch = Some(50);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_text("nonsense = 1\n").is_err());
    }
}
