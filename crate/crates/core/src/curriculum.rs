//! Threshold-gated lesson sequences with cycling, per-cell step accounting,
//! and greedy suite scoring.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use curiolab_arena::{
    gen_idc_lesson, parse_arena, render, Action, Arena, ArenaSpec, EpisodeState, RenderConfig, ScriptedOracle, XmcLesson,
};
use curiolab_numcore::softmax::argmax;
use curiolab_numcore::{LstmState, Tensor};
use rand::{Rng, RngCore};

use crate::error::{LabError, Result};
use crate::policy::PolicyNet;

pub const DEFAULT_EVAL_WINDOW: usize = 10;
pub const THRESHOLD_FRACTION: f64 = 0.9;
pub const PASS_FRACTION: f64 = 0.5;
pub const IDC_CYCLES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum LessonSource {
    Idc { index: usize, count: usize },
    Xmc(XmcLesson),
    Fixed(ArenaSpec),
}

impl LessonSource {
    /// A concrete arena for one episode.
    pub fn instantiate(&self, rng: &mut impl Rng) -> Result<ArenaSpec> {
        Ok(match self {
            LessonSource::Idc { index, count } => gen_idc_lesson(*index, *count)?,
            LessonSource::Xmc(l) => l.instantiate(rng),
            LessonSource::Fixed(s) => s.clone(),
        })
    }

    pub fn max_return(&self) -> Result<f64> {
        Ok(match self {
            LessonSource::Idc { index, count } => gen_idc_lesson(*index, *count)?.max_return(),
            LessonSource::Xmc(l) => l.goal_value(),
            LessonSource::Fixed(s) => s.max_return(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lesson {
    pub source: LessonSource,
    pub threshold: f64,
    pub eval_window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    pub lessons: Vec<Lesson>,
    /// `Some(n)`: completing cycle `n − 1` finishes the curriculum.
    /// `None`: cycles indefinitely.
    pub cycles_target: Option<usize>,
}

impl Curriculum {
    fn from_sources(sources: Vec<LessonSource>, cycles_target: Option<usize>) -> Result<Self> {
        let lessons = sources
            .into_iter()
            .map(|source| {
                Ok(Lesson {
                    threshold: THRESHOLD_FRACTION * source.max_return()?,
                    source,
                    eval_window: DEFAULT_EVAL_WINDOW,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { lessons, cycles_target })
    }

    pub fn idc(count: usize) -> Result<Self> {
        Self::from_sources((0..count).map(|index| LessonSource::Idc { index, count }).collect(), Some(IDC_CYCLES))
    }

    pub fn xmc(count: usize) -> Result<Self> {
        let sources = (0..count).map(|i| XmcLesson::new(i, count).map(LessonSource::Xmc)).collect::<Result<_, _>>()?;
        Self::from_sources(sources, None)
    }

    /// One `<dsl path> <threshold>` per line; `#` starts a comment; relative
    /// paths resolve against the file's directory.
    pub fn from_file(path: &Path, cycles_target: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut lessons = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| LabError::ConfigParse {
                line: no + 1,
                msg: msg.to_string(),
            };
            let mut parts = line.split_whitespace();
            let (Some(p), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected `<path> <threshold>`"));
            };
            let threshold: f64 = t.parse().map_err(|_| bad("threshold is not a number"))?;
            let file = base.join(p);
            let dsl = std::fs::read_to_string(&file).map_err(|e| LabError::io(&file, e))?;
            let spec = parse_arena(&dsl)?;
            if !(threshold.is_finite() && threshold <= spec.max_return()) {
                return Err(bad("threshold exceeds the lesson's best return"));
            }
            lessons.push(Lesson {
                source: LessonSource::Fixed(spec),
                threshold,
                eval_window: DEFAULT_EVAL_WINDOW,
            });
        }
        if lessons.is_empty() {
            return Err(LabError::ConfigParse {
                line: 0,
                msg: "curriculum file lists no lessons".into(),
            });
        }
        Ok(Self { lessons, cycles_target })
    }

    pub fn len(&self) -> usize {
        self.lessons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lessons.is_empty()
    }
}

/// Where a curriculum advance happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdvanceEvent {
    pub step: u64,
    pub cycle: usize,
    pub lesson: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub lesson_index: usize,
    pub cycle_index: usize,
    window: VecDeque<f64>,
    pub total_steps: u64,
    pub cell_steps: BTreeMap<(usize, usize), u64>,
    pub complete: bool,
    pub advances: Vec<AdvanceEvent>,
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self::new()
    }
}

impl CurriculumState {
    pub fn new() -> Self {
        Self {
            lesson_index: 0,
            cycle_index: 0,
            window: VecDeque::new(),
            total_steps: 0,
            cell_steps: BTreeMap::new(),
            complete: false,
            advances: Vec::new(),
        }
    }

    /// `(cycle, lesson)` tag for episodes started now.
    pub fn cell(&self) -> (usize, usize) {
        (self.cycle_index, self.lesson_index)
    }

    pub fn window(&self) -> &VecDeque<f64> {
        &self.window
    }

    pub fn rolling_mean(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.window.iter().sum::<f64>() / self.window.len() as f64)
    }

    /// Charges `n` environment steps to the current cell.
    pub fn record_steps(&mut self, n: u64) {
        self.total_steps += n;
        *self.cell_steps.entry(self.cell()).or_insert(0) += n;
    }

    /// Adds a finished episode's extrinsic return and advances when the
    /// window clears the threshold. Episodes begun under another cell are
    /// ignored. Returns whether an advance fired.
    pub fn record_episode(&mut self, cell: (usize, usize), ext_return: f64, cur: &Curriculum) -> bool {
        if self.complete || cell != self.cell() {
            return false;
        }
        let lesson = &cur.lessons[self.lesson_index];
        self.window.push_back(ext_return);
        while self.window.len() > lesson.eval_window {
            self.window.pop_front();
        }
        if !matches!(should_advance(self, cur), Ok(true)) {
            return false;
        }
        let step = self.total_steps;
        match advance(self, cur) {
            Ok(next) => *self = next,
            Err(_) => {
                self.complete = true;
                self.window.clear();
            }
        }
        self.advances.push(AdvanceEvent {
            step,
            cycle: cell.0,
            lesson: cell.1,
        });
        true
    }

    /// Step at which the final advance fired, once complete.
    pub fn steps_to_complete(&self) -> Option<u64> {
        self.complete.then(|| self.advances.last().map(|a| a.step)).flatten()
    }
}

/// True iff the window is full and its mean strictly exceeds the threshold.
pub fn should_advance(state: &CurriculumState, cur: &Curriculum) -> Result<bool> {
    let lesson = &cur.lessons[state.lesson_index];
    if state.window.len() < lesson.eval_window {
        return Err(LabError::WindowNotFull {
            have: state.window.len(),
            need: lesson.eval_window,
        });
    }
    Ok(state.rolling_mean().expect("nonempty window") > lesson.threshold)
}

/// Next lesson, wrapping into the next cycle; clears the window.
pub fn advance(state: &CurriculumState, cur: &Curriculum) -> Result<CurriculumState> {
    let mut next = state.clone();
    next.window.clear();
    next.lesson_index += 1;
    if next.lesson_index == cur.len() {
        next.lesson_index = 0;
        next.cycle_index += 1;
        if cur.cycles_target.is_some_and(|n| next.cycle_index >= n) {
            return Err(LabError::CurriculumComplete);
        }
    }
    Ok(next)
}

/// Something that can play an episode step by step.
pub trait Agent {
    fn begin_episode(&mut self, spec: &ArenaSpec);
    fn act(&mut self, state: &EpisodeState, spec: &ArenaSpec, rng: &mut dyn RngCore) -> Action;
}

/// Path-planning test hook.
#[derive(Default)]
pub struct OracleAgent {
    oracle: Option<ScriptedOracle>,
}

impl Agent for OracleAgent {
    fn begin_episode(&mut self, spec: &ArenaSpec) {
        self.oracle = Some(ScriptedOracle::new(spec));
    }

    fn act(&mut self, state: &EpisodeState, _: &ArenaSpec, _: &mut dyn RngCore) -> Action {
        self.oracle.as_mut().expect("begin_episode first").act(state)
    }
}

pub struct RandomAgent;

impl Agent for RandomAgent {
    fn begin_episode(&mut self, _: &ArenaSpec) {}

    fn act(&mut self, _: &EpisodeState, _: &ArenaSpec, rng: &mut dyn RngCore) -> Action {
        Action::from_index(rng.gen_range(0..Action::COUNT))
    }
}

/// Argmax over the policy logits with the recurrent state threaded through
/// the episode.
pub struct GreedyPolicyAgent<'a> {
    pub policy: &'a PolicyNet,
    pub render: RenderConfig,
    state: LstmState,
}

impl<'a> GreedyPolicyAgent<'a> {
    pub fn new(policy: &'a PolicyNet, render: RenderConfig) -> Self {
        Self {
            state: policy.initial_state(1),
            policy,
            render,
        }
    }
}

impl Agent for GreedyPolicyAgent<'_> {
    fn begin_episode(&mut self, _: &ArenaSpec) {
        self.state = self.policy.initial_state(1);
    }

    fn act(&mut self, state: &EpisodeState, spec: &ArenaSpec, _: &mut dyn RngCore) -> Action {
        let obs = render(state, spec, &self.render);
        let x = Tensor::from_vec(&[1, 3, obs.height, obs.width], obs.to_chw()).expect("observation shape");
        let out = self.policy.step(&x, &self.state).expect("policy step");
        self.state = out.state;
        Action::from_index(argmax(out.logits.row(0)))
    }
}

/// Plays one episode; returns `(extrinsic return, steps)`.
pub fn run_episode(agent: &mut dyn Agent, spec: &ArenaSpec, rng: &mut dyn RngCore) -> Result<(f64, u64)> {
    let arena = Arena::new(spec.clone());
    let mut state = arena.spawn(&mut &mut *rng)?;
    agent.begin_episode(spec);
    let (mut ret, mut steps) = (0.0, 0);
    loop {
        let a = agent.act(&state, spec, rng);
        let r = arena.step(&state, a)?;
        ret += r.reward;
        steps += 1;
        state = r.state;
        if r.done {
            return Ok((ret, steps));
        }
    }
}

/// Drives one agent through the curriculum until it completes or
/// `max_steps` elapse.
pub fn run_curriculum(
    agent: &mut dyn Agent,
    cur: &Curriculum,
    state: &mut CurriculumState,
    max_steps: u64,
    rng: &mut dyn RngCore,
) -> Result<()> {
    while !state.complete && state.total_steps < max_steps {
        let cell = state.cell();
        let spec = cur.lessons[state.lesson_index].source.instantiate(&mut &mut *rng)?;
        let (ret, steps) = run_episode(agent, &spec, rng)?;
        state.record_steps(steps);
        state.record_episode(cell, ret, cur);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecScore {
    pub name: String,
    pub mean_return: f64,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteScore {
    pub fraction_solved: f64,
    pub per_spec: Vec<SpecScore>,
}

/// Solved fraction of `specs`: a spec is solved when the mean extrinsic
/// return over its episodes reaches `pass_fraction` of its best return.
pub fn score_suite(
    agent: &mut dyn Agent,
    specs: &[(String, ArenaSpec)],
    episodes_per_spec: usize,
    pass_fraction: f64,
    rng: &mut dyn RngCore,
) -> Result<SuiteScore> {
    assert!(!specs.is_empty() && episodes_per_spec > 0, "score_suite needs specs and episodes");
    let mut per_spec = Vec::with_capacity(specs.len());
    for (name, spec) in specs {
        let mut total = 0.0;
        for _ in 0..episodes_per_spec {
            total += run_episode(agent, spec, rng)?.0;
        }
        let mean_return = total / episodes_per_spec as f64;
        per_spec.push(SpecScore {
            name: name.clone(),
            mean_return,
            solved: mean_return >= pass_fraction * spec.max_return(),
        });
    }
    let solved = per_spec.iter().filter(|s| s.solved).count();
    Ok(SuiteScore {
        fraction_solved: solved as f64 / specs.len() as f64,
        per_spec,
    })
}
