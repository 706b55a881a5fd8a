//! Experiment configuration: a flat `key = value` file with optional
//! `[ppo]`, `[vae]` and `[eval]` sections.
//!
//! ```text
//! seed = 7
//! encoder = fixed_vae
//! vae_checkpoint = vae.ckpt
//! lambda_c = 0.01
//!
//! [ppo]
//! lanes = 4
//! horizon = 512
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use crate::encoders::EncoderKind;
use crate::error::{LabError, Result};
use crate::ppo::TrainSchedule;
use crate::vae::VaeTrainConfig;

/// Phase-two curriculum.
#[derive(Debug, Clone, PartialEq)]
pub enum CurriculumChoice {
    Idc,
    Xmc,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub encoder: EncoderKind,
    pub lambda_c: f64,
    pub normalize_intrinsic: bool,
    pub forward_hidden_width: usize,
    /// Initial forward-model learning rate; `None` follows the policy.
    pub forward_lr: Option<f64>,
    pub resolution: usize,
    pub curriculum: CurriculumChoice,
    pub idc_lessons: usize,
    pub xmc_lessons: usize,
    pub idc_steps: u64,
    pub xmc_steps: u64,
    pub vae_checkpoint: Option<PathBuf>,
    pub pretrained_policy: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub deterministic: bool,
    pub probe_size: usize,
    pub ppo: TrainSchedule,
    pub vae: VaeTrainConfig,
    pub dataset_size: usize,
    pub eval_episodes: usize,
    pub pass_fraction: f64,
}

impl ExperimentConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            encoder: EncoderKind::FixedVae,
            lambda_c: 0.01,
            normalize_intrinsic: false,
            forward_hidden_width: crate::icm::FORWARD_HIDDEN,
            forward_lr: None,
            resolution: 32,
            curriculum: CurriculumChoice::Xmc,
            idc_lessons: curiolab_arena::DEFAULT_IDC_LESSONS,
            xmc_lessons: curiolab_arena::DEFAULT_XMC_LESSONS,
            idc_steps: 300_000,
            xmc_steps: 600_000,
            vae_checkpoint: None,
            pretrained_policy: None,
            dataset: None,
            output_dir: PathBuf::from("runs"),
            deterministic: true,
            probe_size: 64,
            ppo: TrainSchedule::default(),
            vae: VaeTrainConfig::default(),
            dataset_size: 5000,
            eval_episodes: 3,
            pass_fraction: crate::curriculum::PASS_FRACTION,
        }
    }

    /// Cross-field rules.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(LabError::InvalidValue {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if !(self.lambda_c >= 0.0 && self.lambda_c.is_finite()) {
            return bad("lambda_c", "must be a nonnegative number");
        }
        if self.encoder == EncoderKind::FixedVae && self.vae_checkpoint.is_none() {
            return bad("vae_checkpoint", "required when encoder = fixed_vae");
        }
        if self.resolution < 16 {
            return bad("resolution", "must be at least 16");
        }
        if self.idc_lessons < 2 || self.xmc_lessons < 2 {
            return bad("lessons", "curricula need at least two lessons");
        }
        if self.probe_size == 0 || self.dataset_size == 0 || self.eval_episodes == 0 {
            return bad("sizes", "probe_size, dataset_size and eval_episodes must be positive");
        }
        if !(0.0..=1.0).contains(&self.pass_fraction) {
            return bad("pass_fraction", "must lie in [0, 1]");
        }
        if self.forward_lr.is_some_and(|v| !(v >= 0.0)) {
            return bad("forward_lr", "must be nonnegative");
        }
        if self.vae.epochs == 0 || self.vae.batch == 0 || self.vae.latent_dim == 0 {
            return bad("vae", "epochs, batch and latent_dim must be positive");
        }
        self.ppo.validate()
    }
}

/// Parses config text; `base` resolves relative paths.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::with_seed(0);
    let mut seed = None;
    let mut section = String::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| LabError::ConfigParse {
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            if !matches!(section.as_str(), "ppo" | "vae" | "eval") {
                return Err(LabError::UnknownKey {
                    line: line_no,
                    key: format!("[{section}]"),
                });
            }
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| LabError::ConfigParse {
            line: line_no,
            msg: "expected `key = value`".into(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        let inv = |msg: &str| LabError::InvalidValue {
            key: key.clone(),
            msg: msg.to_string(),
        };
        let int = || v.parse::<u64>().map_err(|_| inv("expected a nonnegative integer"));
        let num = || v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| inv("expected a number"));
        let flag = || match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(inv("expected true or false")),
        };
        let path = || base.join(v);
        match key.as_str() {
            "seed" => seed = Some(int()?),
            "encoder" => cfg.encoder = EncoderKind::parse(v).ok_or_else(|| inv("expected pixels|rf|idf|online_vae|fixed_vae"))?,
            "lambda_c" => cfg.lambda_c = num()?,
            "normalize_intrinsic" => cfg.normalize_intrinsic = flag()?,
            "forward_hidden_width" => cfg.forward_hidden_width = int()? as usize,
            "forward_lr" => cfg.forward_lr = Some(num()?),
            "resolution" => cfg.resolution = int()? as usize,
            "curriculum" => {
                cfg.curriculum = match v {
                    "idc" => CurriculumChoice::Idc,
                    "xmc" => CurriculumChoice::Xmc,
                    _ => match v.strip_prefix("file:") {
                        Some(p) if !p.is_empty() => CurriculumChoice::File(base.join(p)),
                        _ => return Err(inv("expected idc|xmc|file:<path>")),
                    },
                }
            }
            "idc_lessons" => cfg.idc_lessons = int()? as usize,
            "xmc_lessons" => cfg.xmc_lessons = int()? as usize,
            "idc_steps" => cfg.idc_steps = int()?,
            "xmc_steps" => cfg.xmc_steps = int()?,
            "vae_checkpoint" => cfg.vae_checkpoint = Some(path()),
            "pretrained_policy" => cfg.pretrained_policy = Some(path()),
            "dataset" => cfg.dataset = Some(path()),
            "output_dir" => cfg.output_dir = path(),
            "deterministic" => cfg.deterministic = flag()?,
            "probe_size" => cfg.probe_size = int()? as usize,
            "ppo.lanes" => cfg.ppo.lanes = int()? as usize,
            "ppo.horizon" => cfg.ppo.horizon = int()? as usize,
            "ppo.minibatch" => cfg.ppo.minibatch = int()? as usize,
            "ppo.seq_len" => cfg.ppo.seq_len = int()? as usize,
            "ppo.epochs" => cfg.ppo.epochs = int()? as usize,
            "ppo.lr" => cfg.ppo.lr_init = num()?,
            "ppo.gamma" => cfg.ppo.gamma = num()?,
            "ppo.gae_lambda" => cfg.ppo.gae_lambda = num()?,
            "ppo.clip_eps" => cfg.ppo.clip_eps = num()?,
            "ppo.entropy_coef" => cfg.ppo.entropy_coef = num()?,
            "ppo.value_coef" => cfg.ppo.value_coef = num()?,
            "ppo.max_grad_norm" => cfg.ppo.max_grad_norm = num()?,
            "vae.dataset_size" => cfg.dataset_size = int()? as usize,
            "vae.epochs" => cfg.vae.epochs = int()? as usize,
            "vae.beta" => cfg.vae.beta = num()?,
            "vae.latent_dim" => cfg.vae.latent_dim = int()? as usize,
            "vae.lr" => cfg.vae.lr = num()?,
            "vae.batch" => cfg.vae.batch = int()? as usize,
            "eval.episodes_per_spec" => cfg.eval_episodes = int()? as usize,
            "eval.pass_fraction" => cfg.pass_fraction = num()?,
            _ => return Err(LabError::UnknownKey { line: line_no, key }),
        }
    }
    cfg.seed = seed.ok_or_else(|| LabError::InvalidValue {
        key: "seed".into(),
        msg: "required".into(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
