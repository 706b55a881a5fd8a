//! Deterministic 2D detour-task arenas.
//!
//! An [`ArenaSpec`] describes walls, goals and the spawn rule; it can be read
//! from and written to a small line-based DSL ([`parse_arena`],
//! [`serialize_arena`]). [`Arena`] steps an [`EpisodeState`] through
//! inertial point-mass kinematics with axis-separated wall collision, and
//! [`render`] produces the egocentric first-person [`Observation`].

pub mod dsl;
pub mod error;
pub mod generators;
pub mod geometry;
pub mod oracle;
pub mod physics;
pub mod render;
pub mod spec;
pub mod svg;

pub use dsl::{parse_arena, serialize_arena};
pub use error::{ArenaError, Result};
pub use generators::{
    gen_idc_lesson, gen_test_suite, gen_xmc_lesson, TestArena, XmcLesson, DEFAULT_IDC_LESSONS,
    DEFAULT_XMC_LESSONS,
};
pub use oracle::ScriptedOracle;
pub use physics::{spawn_episode, step, Action, Arena, EpisodeState, Kinematics, StepResult};
pub use render::{render, scan_columns, ColumnScan, Observation, RenderConfig};
pub use spec::{ArenaSpec, GoalColor, GoalSpec, Rect, Spawn, WallKind, WallSpec, AGENT_RADIUS};
pub use svg::arena_to_svg;
