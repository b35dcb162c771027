use std::path::{Path, PathBuf};

use micshift_core::augment::AugmentSpec;
use micshift_core::cyclegan::{McTrainConfig, SearchStrategy};
use micshift_core::device_sim::{default_classes, default_suite, CorpusConfig, DeviceProfile, EventClass, SplitSpec};
use micshift_core::rng::{derive_seed, tag};
use micshift_core::sec::SecTrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Identifies the configuration and seed an artifact came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActivityConfig {
    pub enabled: bool,
    pub sparse_thresh: f64,
    pub dense_thresh: f64,
}

impl Default for ActivityConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sparse_thresh: 0.10,
            dense_thresh: 0.50,
        }
    }
}

/// Learning-rate schedule search run before conversion training; the best
/// schedule replaces `mc.lr_init` and `mc.halve_interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub n_iter: usize,
    pub strategy: SearchStrategy,
    /// Shortened per-trial budget.
    pub epochs: usize,
}

/// A training condition of the evaluation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    /// Source-device data with the base augmentation chain.
    Baseline {},
    /// The base chain extended by `chain`.
    Augment { name: String, chain: Vec<AugmentSpec> },
    /// Conversion to every target, using checkpoints saved after `mc_epoch`.
    McGen {
        mc_epoch: usize,
        #[serde(default = "yes")]
        include_source: bool,
    },
    /// Conversion to `target` only, with probability `p`.
    McAdapt { target: String, p: f64, mc_epoch: usize },
    /// One model per device trained on that device's own data.
    Real {},
}

fn yes() -> bool {
    true
}

impl Condition {
    pub fn label(&self) -> String {
        match self {
            Self::Baseline {} => "Baseline".into(),
            Self::Augment { name, .. } => name.clone(),
            Self::McGen { mc_epoch, .. } => format!("MC-{mc_epoch}-Gen"),
            Self::McAdapt { target, p, mc_epoch } => format!("MC-{mc_epoch}-Adapt({p})@{target}"),
            Self::Real {} => "Real".into(),
        }
    }

    /// Directory-safe form of the label.
    pub fn slug(&self) -> String {
        self.label()
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                    c.to_ascii_lowercase()
                } else {
                    '_'
                }
            })
            .collect()
    }
}

/// Everything one experiment needs. Nested `seed` fields are overwritten
/// from the top-level seed, so a run is reproduced from one number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub devices: Vec<DeviceProfile>,
    pub source_device: String,
    pub classes: Vec<EventClass>,
    pub corpus: CorpusConfig,
    pub activity: ActivityConfig,
    pub split: SplitSpec,
    pub mc: McTrainConfig,
    pub mc_search: Option<SearchConfig>,
    pub sec: SecTrainConfig,
    pub conditions: Vec<Condition>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let classes = default_classes();
        let mut sec = SecTrainConfig::default();
        sec.classifier.n_classes = classes.len();
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            devices: default_suite(),
            source_device: "source".into(),
            classes,
            corpus: CorpusConfig::default(),
            activity: ActivityConfig::default(),
            split: SplitSpec::default(),
            mc: McTrainConfig::default(),
            mc_search: None,
            sec,
            conditions: vec![
                Condition::Baseline {},
                Condition::McGen {
                    mc_epoch: 30,
                    include_source: true,
                },
                Condition::Real {},
            ],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let cfg: Self = serde_json::from_str(&text).map_err(Error::json(path))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copy with nested seeds derived from the top-level one.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.corpus.seed = derive_seed(self.seed, &[tag("corpus")]);
        c.mc.seed = derive_seed(self.seed, &[tag("mc")]);
        c.sec.seed = derive_seed(self.seed, &[tag("sec")]);
        c
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, &[tag("split")])
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        for d in &self.devices {
            d.validate()?;
        }
        let mut names: Vec<&str> = self.devices.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return err("device names must be unique".into());
        }
        if !names.contains(&self.source_device.as_str()) {
            return err(format!("source device {:?} is not in the suite", self.source_device));
        }
        if self.devices.len() < 2 {
            return err("need the source device and at least one target".into());
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.id != i {
                return err(format!("class ids must be 0..n in order; position {i} has id {}", c.id));
            }
        }
        if self.sec.classifier.n_classes != self.classes.len() {
            return err(format!(
                "classifier has {} outputs for {} classes",
                self.sec.classifier.n_classes,
                self.classes.len()
            ));
        }
        let a = &self.activity;
        if !(0.0..=1.0).contains(&a.sparse_thresh) || !(0.0..=1.0).contains(&a.dense_thresh) {
            return err("activity thresholds must be in [0, 1]".into());
        }
        self.split.validate()?;
        self.mc.validate()?;
        self.sec.validate()?;
        if let Some(s) = &self.mc_search {
            if s.n_iter == 0 || s.epochs == 0 {
                return err("mc_search needs positive n_iter and epochs".into());
            }
        }
        let mut labels: Vec<String> = self.conditions.iter().map(Condition::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return err("condition labels must be unique".into());
        }
        for c in &self.conditions {
            match c {
                Condition::McGen { mc_epoch, .. } => self.check_mc_epoch(*mc_epoch)?,
                Condition::McAdapt { target, p, mc_epoch } => {
                    self.check_mc_epoch(*mc_epoch)?;
                    if !(0.0..=1.0).contains(p) {
                        return err(format!("adapt probability {p} outside [0, 1]"));
                    }
                    if target == &self.source_device || !names.contains(&target.as_str()) {
                        return err(format!("adapt target {target:?} must be a non-source device"));
                    }
                }
                Condition::Augment { chain, .. } => {
                    let mut s = self.sec.clone();
                    s.augment.extend(chain.iter().cloned());
                    s.validate()?;
                }
                Condition::Baseline {} | Condition::Real {} => {}
            }
        }
        Ok(())
    }

    /// Conversion checkpoints exist every `checkpoint_every` epochs and
    /// after the last.
    fn check_mc_epoch(&self, e: usize) -> Result<()> {
        if e == 0 || e > self.mc.epochs || (e % self.mc.checkpoint_every != 0 && e != self.mc.epochs) {
            return Err(Error::Config(format!(
                "mc_epoch {e} has no checkpoint (every {} of {} epochs)",
                self.mc.checkpoint_every, self.mc.epochs
            )));
        }
        Ok(())
    }

    pub fn target_devices(&self) -> Vec<&str> {
        self.devices
            .iter()
            .map(|d| d.name.as_str())
            .filter(|d| *d != self.source_device)
            .collect()
    }

    pub fn profile(&self, name: &str) -> Option<&DeviceProfile> {
        self.devices.iter().find(|d| d.name == name)
    }

    /// SHA-256 of the canonical JSON of the resolved config, ignoring where
    /// outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.resolved();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed,
        }
    }
}
