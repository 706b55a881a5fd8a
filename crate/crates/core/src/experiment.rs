//! End-to-end pipeline: observation dataset, VAE pretraining, the
//! non-curious IDC phase, the curious XMC phase and final scoring.

use std::fs;
use std::path::{Path, PathBuf};

use curiolab_arena::{gen_idc_lesson, gen_test_suite, ArenaSpec, RenderConfig};
use curiolab_numcore::module::{load_param_map, to_param_map};
use curiolab_numcore::{load_checkpoint, save_checkpoint, Adam, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CurriculumChoice, ExperimentConfig};
use crate::curriculum::{score_suite, Curriculum, CurriculumState, GreedyPolicyAgent, LessonSource, SuiteScore};
use crate::dataset::{collect_observation_dataset, ObservationDataset};
use crate::encoders::{build_encoder, feature_drift, Encoder, EncoderKind};
use crate::error::{LabError, Result};
use crate::icm::{Icm, RewardMix};
use crate::policy::{PolicyNet, LSTM_HIDDEN};
use crate::ppo::{auxiliary_update, collect_rollout, ppo_update, CurriculumSource, EnvPool, TrainSchedule};
use crate::vae::{train_vae_offline, EpochLog, VaeModel};

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Env = 1,
    Update = 2,
    Probe = 3,
    Eval = 4,
    Dataset = 5,
    Vae = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// One CSV row per PPO update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub step: u64,
    pub lesson: usize,
    pub cycle: usize,
    pub ep_return_ext_mean: Option<f64>,
    pub ep_return_int_mean: Option<f64>,
    pub loss_policy: f64,
    pub loss_value: f64,
    pub loss_forward: f64,
    pub loss_vae_online: f64,
    pub entropy: f64,
    pub lr: f64,
    pub lesson_pass_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSteps {
    pub cycle: usize,
    pub lesson: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub name: String,
    pub lessons: usize,
    /// Environment steps consumed in this phase.
    pub steps: u64,
    /// Global step of the phase's first transition.
    pub step_offset: u64,
    pub updates: usize,
    pub episodes: usize,
    pub completed: bool,
    /// Phase-local step at which each cycle's last advance fired.
    pub cycle_completions: Vec<u64>,
    /// IDC: the final advance. XMC: the end of the first cycle.
    pub steps_to_complete: Option<u64>,
    pub final_lesson: usize,
    pub final_cycle: usize,
    pub cell_steps: Vec<CellSteps>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecResult {
    pub name: String,
    pub mean_return: f64,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub fraction_solved: f64,
    pub per_spec: Vec<SpecResult>,
}

impl From<SuiteScore> for ScoreReport {
    fn from(s: SuiteScore) -> Self {
        Self {
            fraction_solved: s.fraction_solved,
            per_spec: s
                .per_spec
                .into_iter()
                .map(|p| SpecResult {
                    name: p.name,
                    mean_return: p.mean_return,
                    solved: p.solved,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub encoder: String,
    pub lambda_c: f64,
    pub resolution: usize,
    pub deterministic: bool,
    pub idc: Option<PhaseSummary>,
    pub xmc: PhaseSummary,
    pub training_score: ScoreReport,
    pub test_score: ScoreReport,
    pub encoder_checksum_start: String,
    pub encoder_checksum_end: String,
    /// Checksum of the VAE as loaded from `vae_checkpoint`.
    pub vae_checkpoint_checksum: Option<String>,
    /// Checksum of the wrapped VAE at run end.
    pub vae_checksum_end: Option<String>,
    /// Mean feature distance on the probe set across the curious phase.
    pub probe_drift: f64,
    pub policy_checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub idc_rows: Vec<RunRow>,
    pub xmc_rows: Vec<RunRow>,
    pub summary: RunSummary,
}

/// The trainable pieces of an agent.
pub struct Learner {
    pub policy: PolicyNet,
    pub adam: Adam,
    pub encoder: Encoder,
    pub icm: Icm,
}

pub fn render_config(cfg: &ExperimentConfig) -> RenderConfig {
    RenderConfig::with_resolution(cfg.resolution, cfg.resolution)
}

/// Arenas the VAE dataset is drawn from: every IDC lesson plus
/// `instances` draws of every XMC lesson.
pub fn dataset_specs(cfg: &ExperimentConfig, instances: usize, rng: &mut ChaCha8Rng) -> Result<Vec<ArenaSpec>> {
    let mut specs = Vec::new();
    for i in 0..cfg.idc_lessons {
        specs.push(gen_idc_lesson(i, cfg.idc_lessons)?.with_random_spawn());
    }
    let xmc = Curriculum::xmc(cfg.xmc_lessons)?;
    for lesson in &xmc.lessons {
        for _ in 0..instances {
            specs.push(lesson.source.instantiate(rng)?.with_random_spawn());
        }
    }
    Ok(specs)
}

pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<ObservationDataset> {
    let mut rng = stream_rng(cfg.seed, Stream::Dataset);
    let specs = dataset_specs(cfg, 20, &mut rng)?;
    collect_observation_dataset(&specs, cfg.dataset_size, &render_config(cfg), &mut rng)
}

/// Trains the β-VAE on the configured dataset (generated when absent).
pub fn pretrain_vae(cfg: &ExperimentConfig) -> Result<(VaeModel, Vec<EpochLog>)> {
    let ds = match &cfg.dataset {
        Some(p) => ObservationDataset::load(p)?,
        None => generate_dataset(cfg)?,
    };
    if (ds.height, ds.width) != (cfg.resolution, cfg.resolution) {
        return Err(LabError::ResolutionMismatch {
            expected: (cfg.resolution, cfg.resolution),
            got: (ds.height, ds.width),
        });
    }
    train_vae_offline(&ds, &cfg.vae, &mut stream_rng(cfg.seed, Stream::Vae))
}

pub fn load_vae(path: &Path) -> Result<VaeModel> {
    VaeModel::from_checkpoint(&load_checkpoint(path)?)
}

/// Phase-two curriculum named by the config.
pub fn phase_two_curriculum(cfg: &ExperimentConfig) -> Result<Curriculum> {
    match &cfg.curriculum {
        CurriculumChoice::Idc => Curriculum::idc(cfg.idc_lessons),
        CurriculumChoice::Xmc => Curriculum::xmc(cfg.xmc_lessons),
        CurriculumChoice::File(p) => Curriculum::from_file(p, None),
    }
}

/// Fresh learner from `cfg`; the VAE checkpoint is loaded when the encoder
/// needs one.
pub fn build_learner(cfg: &ExperimentConfig) -> Result<(Learner, Option<String>)> {
    let mut rng = stream_rng(cfg.seed, Stream::Init);
    let input = (3, cfg.resolution, cfg.resolution);
    let vae = match (&cfg.vae_checkpoint, cfg.encoder) {
        (Some(p), EncoderKind::FixedVae | EncoderKind::OnlineVae) => Some(load_vae(p)?),
        (None, EncoderKind::FixedVae) => return Err(LabError::MissingModel("fixed_vae requires vae_checkpoint".into())),
        _ => None,
    };
    let vae_sum = vae.as_ref().map(VaeModel::checksum);
    let mut policy = PolicyNet::new(input, &mut rng);
    if let Some(p) = &cfg.pretrained_policy {
        load_param_map(&mut policy, &load_checkpoint(p)?)?;
    }
    let encoder = build_encoder(cfg.encoder, input, &mut rng, vae.as_ref())?;
    let icm = Icm::new(encoder.output_dim(), cfg.forward_hidden_width, &mut rng);
    Ok((
        Learner {
            policy,
            adam: Adam::default(),
            encoder,
            icm,
        },
        vae_sum,
    ))
}

/// Trains on `cur` until its budget runs out or, for finite curricula, it
/// completes. Rows carry global steps starting after `step_offset`.
#[allow(clippy::too_many_arguments)]
pub fn train_phase(
    name: &str,
    learner: &mut Learner,
    cur: &Curriculum,
    mix: RewardMix,
    sched: &TrainSchedule,
    forward_lr: Option<f64>,
    render: RenderConfig,
    step_offset: u64,
    env_rng: &mut ChaCha8Rng,
    upd_rng: &mut ChaCha8Rng,
) -> Result<(Vec<RunRow>, PhaseSummary)> {
    sched.validate()?;
    let mut mix = mix;
    let mut state = CurriculumState::new();
    let mut pool = {
        let mut src = CurriculumSource {
            curriculum: cur,
            state: &mut state,
        };
        EnvPool::new(sched.lanes, render, LSTM_HIDDEN, &mut src, env_rng)?
    };
    let mut rows = Vec::new();
    let mut consumed = 0u64;
    let mut episodes = 0usize;
    while consumed < sched.total_steps && !state.complete {
        let rollout = {
            let mut src = CurriculumSource {
                curriculum: cur,
                state: &mut state,
            };
            let l = &*learner;
            collect_rollout(&l.policy, &mut pool, &mut src, &l.encoder, &l.icm, &mut mix, sched.horizon, sched.seq_len, env_rng)?
        };
        let m = ppo_update(&mut learner.policy, &mut learner.adam, &rollout, sched, consumed, upd_rng)?;
        let aux_lr = match forward_lr {
            Some(f) => f * (1.0 - consumed as f64 / sched.total_steps as f64).max(0.0),
            None => m.lr,
        };
        let aux = auxiliary_update(&mut learner.encoder, &mut learner.icm, &rollout, sched, aux_lr, upd_rng)?;
        learner.encoder.verify_frozen()?;
        consumed += rollout.len() as u64;
        episodes += rollout.episodes.len();

        let eps = &rollout.episodes;
        let mean = |f: &dyn Fn(&crate::ppo::EpisodeRecord) -> f64| (!eps.is_empty()).then(|| eps.iter().map(f).sum::<f64>() / eps.len() as f64);
        let pass = mean(&|e| f64::from(u8::from(e.ext_return > cur.lessons[e.cell.1].threshold)));
        rows.push(RunRow {
            step: step_offset + consumed,
            lesson: state.lesson_index,
            cycle: state.cycle_index,
            ep_return_ext_mean: mean(&|e| e.ext_return),
            ep_return_int_mean: mean(&|e| e.int_return),
            loss_policy: m.loss_policy,
            loss_value: m.loss_value,
            loss_forward: aux.loss_forward,
            loss_vae_online: aux.loss_vae_online,
            entropy: m.entropy,
            lr: m.lr,
            lesson_pass_rate: pass,
        });
    }
    debug_assert_eq!(state.total_steps, consumed);
    debug_assert_eq!(state.cell_steps.values().sum::<u64>(), consumed);

    let last = cur.len() - 1;
    let cycle_completions: Vec<u64> = state.advances.iter().filter(|a| a.lesson == last).map(|a| a.step).collect();
    let steps_to_complete = if cur.cycles_target.is_some() {
        state.steps_to_complete()
    } else {
        cycle_completions.first().copied()
    };
    let summary = PhaseSummary {
        name: name.to_string(),
        lessons: cur.len(),
        steps: consumed,
        step_offset,
        updates: rows.len(),
        episodes,
        completed: state.complete || (cur.cycles_target.is_none() && !cycle_completions.is_empty()),
        cycle_completions,
        steps_to_complete,
        final_lesson: state.lesson_index,
        final_cycle: state.cycle_index,
        cell_steps: state
            .cell_steps
            .iter()
            .map(|(&(cycle, lesson), &steps)| CellSteps { cycle, lesson, steps })
            .collect(),
    };
    Ok((rows, summary))
}

/// Named training and test suites scored with the greedy policy.
pub fn evaluate(policy: &PolicyNet, cfg: &ExperimentConfig) -> Result<(ScoreReport, ScoreReport)> {
    let mut rng = stream_rng(cfg.seed, Stream::Eval);
    let cur = phase_two_curriculum(cfg)?;
    let mut training = Vec::new();
    for (i, lesson) in cur.lessons.iter().enumerate() {
        let spec = lesson.source.instantiate(&mut rng)?;
        let tag = match lesson.source {
            LessonSource::Idc { .. } => "idc",
            LessonSource::Xmc(_) => "xmc",
            LessonSource::Fixed(_) => "file",
        };
        training.push((format!("{tag}-{i}"), spec));
    }
    let test: Vec<(String, ArenaSpec)> = gen_test_suite().into_iter().map(|t| (format!("{}-{}", t.family, t.variant), t.spec)).collect();
    let mut agent = GreedyPolicyAgent::new(policy, render_config(cfg));
    let train_score = score_suite(&mut agent, &training, cfg.eval_episodes, cfg.pass_fraction, &mut rng)?;
    let test_score = score_suite(&mut agent, &test, cfg.eval_episodes, cfg.pass_fraction, &mut rng)?;
    Ok((train_score.into(), test_score.into()))
}

fn probe_batch(cfg: &ExperimentConfig) -> Result<Tensor> {
    let mut rng = stream_rng(cfg.seed, Stream::Probe);
    let xmc = Curriculum::xmc(cfg.xmc_lessons)?;
    let specs = xmc
        .lessons
        .iter()
        .map(|l| Ok(l.source.instantiate(&mut rng)?.with_random_spawn()))
        .collect::<Result<Vec<_>>>()?;
    let ds = collect_observation_dataset(&specs, cfg.probe_size, &render_config(cfg), &mut rng)?;
    Ok(ds.batch(&(0..ds.len()).collect::<Vec<_>>()))
}

pub fn write_rows(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        // Header only.
        w.write_record(RUN_COLUMNS).map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if header != RUN_COLUMNS {
        return Err(LabError::Dataset(format!("{}: unexpected run-log columns", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub const RUN_COLUMNS: [&str; 12] = [
    "step",
    "lesson",
    "cycle",
    "ep_return_ext_mean",
    "ep_return_int_mean",
    "loss_policy",
    "loss_value",
    "loss_forward",
    "loss_vae_online",
    "entropy",
    "lr",
    "lesson_pass_rate",
];

fn csv_err(path: &Path, e: csv::Error) -> LabError {
    LabError::io(path, std::io::Error::other(e.to_string()))
}

/// Output files of a run, relative to `output_dir`.
pub struct RunPaths {
    pub idc_csv: PathBuf,
    pub xmc_csv: PathBuf,
    pub summary: PathBuf,
    pub policy: PathBuf,
    pub encoder: PathBuf,
    pub forward: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            idc_csv: dir.join("idc.csv"),
            xmc_csv: dir.join("xmc.csv"),
            summary: dir.join("summary.json"),
            policy: dir.join("policy.ckpt"),
            encoder: dir.join("encoder.ckpt"),
            forward: dir.join("forward.ckpt"),
        }
    }
}

/// Runs both phases, scores the result and writes every artefact to
/// `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunLog> {
    cfg.validate()?;
    let (mut learner, vae_checkpoint_checksum) = build_learner(cfg)?;
    let render = render_config(cfg);
    let mut env_rng = stream_rng(cfg.seed, Stream::Env);
    let mut upd_rng = stream_rng(cfg.seed, Stream::Update);

    let (idc_rows, idc) = if cfg.pretrained_policy.is_none() && cfg.idc_steps > 0 {
        let sched = TrainSchedule {
            total_steps: cfg.idc_steps,
            ..cfg.ppo.clone()
        };
        let cur = Curriculum::idc(cfg.idc_lessons)?;
        let (rows, s) = train_phase("idc", &mut learner, &cur, RewardMix::new(0.0, false), &sched, cfg.forward_lr, render.clone(), 0, &mut env_rng, &mut upd_rng)?;
        (rows, Some(s))
    } else {
        (Vec::new(), None)
    };

    let probes = probe_batch(cfg)?;
    let encoder_checksum_start = learner.encoder.checksum();
    let probe_before = learner.encoder.encode(&probes)?;
    let sched = TrainSchedule {
        total_steps: cfg.xmc_steps.max(1),
        ..cfg.ppo.clone()
    };
    let offset = idc.as_ref().map_or(0, |s| s.steps);
    let cur = phase_two_curriculum(cfg)?;
    let (xmc_rows, xmc) = if cfg.xmc_steps > 0 {
        let mix = RewardMix::new(cfg.lambda_c, cfg.normalize_intrinsic);
        train_phase("xmc", &mut learner, &cur, mix, &sched, cfg.forward_lr, render, offset, &mut env_rng, &mut upd_rng)?
    } else {
        phase_skeleton("xmc", &cur, offset)
    };
    let probe_after = learner.encoder.encode(&probes)?;
    let probe_drift = feature_drift(&probe_before, &probe_after);
    let encoder_checksum_end = learner.encoder.checksum();

    match learner.encoder.kind() {
        EncoderKind::RandomFeatures | EncoderKind::FixedVae if encoder_checksum_start != encoder_checksum_end => {
            return Err(LabError::Consistency("frozen encoder changed during the curious phase".into()));
        }
        EncoderKind::FixedVae if learner.encoder.vae().map(VaeModel::checksum) != vae_checkpoint_checksum => {
            return Err(LabError::Consistency("fixed VAE differs from its checkpoint".into()));
        }
        EncoderKind::OnlineVae if xmc.updates > 0 && probe_drift <= 0.0 => {
            return Err(LabError::Consistency("online VAE features did not move".into()));
        }
        _ => {}
    }

    let (training_score, test_score) = evaluate(&learner.policy, cfg)?;
    let summary = RunSummary {
        seed: cfg.seed,
        encoder: cfg.encoder.name().into(),
        lambda_c: cfg.lambda_c,
        resolution: cfg.resolution,
        deterministic: cfg.deterministic,
        idc,
        xmc,
        training_score,
        test_score,
        encoder_checksum_start,
        encoder_checksum_end,
        vae_checkpoint_checksum,
        vae_checksum_end: learner.encoder.vae().map(VaeModel::checksum),
        probe_drift,
        policy_checksum: curiolab_numcore::checksum(&learner.policy),
    };
    let log = RunLog {
        idc_rows,
        xmc_rows,
        summary,
    };
    write_run(&cfg.output_dir, &log, &learner)?;
    Ok(log)
}

/// Summary of a phase with no budget.
fn phase_skeleton(name: &str, cur: &Curriculum, offset: u64) -> (Vec<RunRow>, PhaseSummary) {
    (
        Vec::new(),
        PhaseSummary {
            name: name.to_string(),
            lessons: cur.len(),
            steps: 0,
            step_offset: offset,
            updates: 0,
            episodes: 0,
            completed: false,
            cycle_completions: Vec::new(),
            steps_to_complete: None,
            final_lesson: 0,
            final_cycle: 0,
            cell_steps: Vec::new(),
        },
    )
}

fn write_run(dir: &Path, log: &RunLog, learner: &Learner) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let p = RunPaths::new(dir);
    write_rows(&p.idc_csv, &log.idc_rows)?;
    write_rows(&p.xmc_csv, &log.xmc_rows)?;
    let json = serde_json::to_string_pretty(&log.summary).expect("summary serialises");
    fs::write(&p.summary, json).map_err(|e| LabError::io(&p.summary, e))?;
    save_checkpoint(&p.policy, &to_param_map(&learner.policy))?;
    save_checkpoint(&p.encoder, &to_param_map(&learner.encoder))?;
    save_checkpoint(&p.forward, &to_param_map(&learner.icm.model))?;
    Ok(())
}
