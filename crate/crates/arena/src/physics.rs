//! Episode state and the inertial point-mass kinematics.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{ArenaError, Result};
use crate::spec::{ArenaSpec, Spawn};

pub const SPAWN_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    /// Speed retained from the previous step.
    pub inertia: f64,
    pub accel: f64,
    pub max_speed: f64,
    /// Turn per step, radians.
    pub turn_rate: f64,
    pub radius: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self {
            inertia: 0.9,
            accel: 0.15,
            max_speed: 1.0,
            turn_rate: 6f64.to_radians(),
            radius: crate::spec::AGENT_RADIUS,
        }
    }
}

/// One of the nine `(move, turn)` combinations, each in `{-1, 0, 1}`.
/// Positive turn is counter-clockwise (towards +y when facing +x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub movement: i8,
    pub turn: i8,
}

impl Action {
    pub const COUNT: usize = 9;
    pub const NOOP: Action = Action { movement: 0, turn: 0 };

    pub fn new(movement: i8, turn: i8) -> Self {
        assert!(
            (-1..=1).contains(&movement) && (-1..=1).contains(&turn),
            "action components must be in {{-1, 0, 1}}"
        );
        Self { movement, turn }
    }

    /// Index `(move + 1) * 3 + (turn + 1)`.
    pub fn from_index(index: usize) -> Self {
        assert!(index < Self::COUNT, "action index {index} out of range");
        Self {
            movement: (index / 3) as i8 - 1,
            turn: (index % 3) as i8 - 1,
        }
    }

    pub fn index(self) -> usize {
        ((self.movement + 1) * 3 + (self.turn + 1)) as usize
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..Self::COUNT).map(Self::from_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub pos: (f64, f64),
    /// Radians in `[0, 2π)`.
    pub heading: f64,
    pub speed: f64,
    pub steps_elapsed: u32,
    /// Indices into `spec.goals` not yet consumed.
    pub remaining_goals: Vec<usize>,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: EpisodeState,
    pub reward: f64,
    pub done: bool,
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// An arena spec bound to a set of kinematic constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Arena {
    pub spec: ArenaSpec,
    pub kin: Kinematics,
}

impl Arena {
    pub fn new(spec: ArenaSpec) -> Self {
        Self {
            spec,
            kin: Kinematics::default(),
        }
    }

    pub fn with_kinematics(spec: ArenaSpec, kin: Kinematics) -> Self {
        Self { spec, kin }
    }

    pub fn spawn(&self, rng: &mut impl Rng) -> Result<EpisodeState> {
        let (pos, heading) = match &self.spec.spawn {
            Spawn::Fixed { x, y, heading_deg } => ((*x, *y), wrap_angle(heading_deg.to_radians())),
            Spawn::Random(region) => {
                let mut found = None;
                for _ in 0..SPAWN_ATTEMPTS {
                    let x = region.x + rng.gen::<f64>() * region.w;
                    let y = region.y + rng.gen::<f64>() * region.h;
                    let heading = rng.gen::<f64>() * TAU;
                    if self.spec.is_free(x, y, self.kin.radius) {
                        found = Some(((x, y), wrap_angle(heading)));
                        break;
                    }
                }
                found.ok_or(ArenaError::SpawnExhausted {
                    attempts: SPAWN_ATTEMPTS,
                })?
            }
        };
        Ok(EpisodeState {
            pos,
            heading,
            speed: 0.0,
            steps_elapsed: 0,
            remaining_goals: (0..self.spec.goals.len()).collect(),
            terminal: false,
        })
    }

    pub fn step(&self, state: &EpisodeState, action: Action) -> Result<StepResult> {
        if state.terminal {
            return Err(ArenaError::SteppedTerminal);
        }
        let k = &self.kin;
        let heading = wrap_angle(state.heading + f64::from(action.turn) * k.turn_rate);
        let speed = (k.inertia * state.speed + f64::from(action.movement) * k.accel).clamp(0.0, k.max_speed);
        let (x0, y0) = state.pos;
        let x = self.sweep_x(x0, y0, speed * heading.cos());
        let y = self.sweep_y(x, y0, speed * heading.sin());

        let mut reward = 0.0;
        let mut remaining = Vec::with_capacity(state.remaining_goals.len());
        let mut consumed = false;
        for &g in &state.remaining_goals {
            let goal = &self.spec.goals[g];
            if (goal.center.0 - x).hypot(goal.center.1 - y) < k.radius + goal.radius {
                reward += goal.value;
                consumed = true;
            } else {
                remaining.push(g);
            }
        }
        let steps_elapsed = state.steps_elapsed + 1;
        let done = consumed || steps_elapsed >= self.spec.time_limit;
        Ok(StepResult {
            state: EpisodeState {
                pos: (x, y),
                heading,
                speed,
                steps_elapsed,
                remaining_goals: remaining,
                terminal: done,
            },
            reward,
            done,
        })
    }

    fn sweep_x(&self, x: f64, y: f64, dx: f64) -> f64 {
        let r = self.kin.radius;
        let mut nx = x + dx;
        for w in &self.spec.walls {
            let e = w.rect.expanded(r);
            if !(e.y0 < y && y < e.y1) {
                continue;
            }
            if dx > 0.0 && x <= e.x0 && nx > e.x0 {
                nx = e.x0;
            } else if dx < 0.0 && x >= e.x1 && nx < e.x1 {
                nx = e.x1;
            }
        }
        nx.clamp(r, self.spec.width - r)
    }

    fn sweep_y(&self, x: f64, y: f64, dy: f64) -> f64 {
        let r = self.kin.radius;
        let mut ny = y + dy;
        for w in &self.spec.walls {
            let e = w.rect.expanded(r);
            if !(e.x0 < x && x < e.x1) {
                continue;
            }
            if dy > 0.0 && y <= e.y0 && ny > e.y0 {
                ny = e.y0;
            } else if dy < 0.0 && y >= e.y1 && ny < e.y1 {
                ny = e.y1;
            }
        }
        ny.clamp(r, self.spec.height - r)
    }
}

/// [`Arena::spawn`] with default kinematics.
pub fn spawn_episode(spec: &ArenaSpec, rng: &mut impl Rng) -> Result<EpisodeState> {
    Arena::new(spec.clone()).spawn(rng)
}

/// [`Arena::step`] with default kinematics.
pub fn step(spec: &ArenaSpec, state: &EpisodeState, action: Action) -> Result<StepResult> {
    Arena::new(spec.clone()).step(state, action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{GoalColor, GoalSpec, Rect, WallSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open(goal_x: f64) -> Arena {
        Arena::new(ArenaSpec {
            width: 40.0,
            height: 40.0,
            time_limit: 500,
            walls: vec![],
            goals: vec![GoalSpec {
                color: GoalColor::Green,
                center: (goal_x, 5.0),
                radius: 0.5,
                value: 1.0,
            }],
            spawn: Spawn::Fixed { x: 5.0, y: 5.0, heading_deg: 0.0 },
        })
    }

    #[test]
    fn action_indexing_round_trips() {
        for i in 0..Action::COUNT {
            assert_eq!(Action::from_index(i).index(), i);
        }
        assert_eq!(Action::from_index(4), Action::NOOP);
        assert_eq!(Action::from_index(7), Action::new(1, 0));
    }

    #[test]
    fn noop_in_open_space() {
        let a = open(30.0);
        let s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = a.step(&s, Action::NOOP).unwrap();
        assert_eq!(r.state.pos, (5.0, 5.0));
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    // Hand simulation: speed = clamp(0.9*0 + 0.15, 0, 1) = 0.15, so after one
    // forward step the agent sits at x = 5.15. Contact needs centre distance
    // below 0.5 + 0.5 = 1.0, i.e. goal x below 6.15.
    #[test]
    fn first_step_goal_contact() {
        let a = open(6.1);
        let s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = a.step(&s, Action::new(1, 0)).unwrap();
        assert!((r.state.pos.0 - 5.15).abs() < 1e-12);
        assert_eq!(r.reward, 1.0);
        assert!(r.done && r.state.terminal);
        assert!(r.state.remaining_goals.is_empty());
        assert_eq!(a.step(&r.state, Action::NOOP), Err(ArenaError::SteppedTerminal));

        let a = open(6.2);
        let s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = a.step(&s, Action::new(1, 0)).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    #[test]
    fn speed_saturates() {
        let a = open(39.0);
        let mut s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        s.heading = std::f64::consts::FRAC_PI_2;
        for _ in 0..200 {
            s = a.step(&s, Action::new(1, 0)).unwrap().state;
        }
        // Fixed point of v = 0.9 v + 0.15 is 1.5, so the cap binds.
        assert_eq!(s.speed, 1.0);
        assert_eq!(s.pos.1, 39.5);
    }

    #[test]
    fn flush_wall_blocks_motion() {
        let mut spec = open(30.0).spec;
        spec.walls.push(WallSpec::opaque(Rect::new(5.5, 0.0, 1.0, 20.0)));
        let a = Arena::new(spec);
        let s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut st = s.clone();
        for _ in 0..10 {
            st = a.step(&st, Action::new(1, 0)).unwrap().state;
            assert_eq!(st.pos.0, 5.0);
        }
    }

    #[test]
    fn slides_along_wall() {
        let mut spec = open(30.0).spec;
        spec.walls.push(WallSpec::opaque(Rect::new(6.0, 0.0, 1.0, 20.0)));
        let a = Arena::new(spec);
        let mut s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        s.heading = 45f64.to_radians();
        for _ in 0..20 {
            s = a.step(&s, Action::new(1, 0)).unwrap().state;
        }
        assert_eq!(s.pos.0, 5.5);
        assert!(s.pos.1 > 10.0);
    }

    #[test]
    fn heading_wraps() {
        let a = open(30.0);
        let s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = a.step(&s, Action::new(0, -1)).unwrap();
        assert!((r.state.heading - (TAU - 6f64.to_radians())).abs() < 1e-12);
        assert!((0.0..TAU).contains(&r.state.heading));
    }

    #[test]
    fn random_spawn_is_seeded_and_exhaustible() {
        let spec = open(30.0).spec.with_random_spawn();
        let a = Arena::new(spec.clone());
        let s1 = a.spawn(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let s2 = a.spawn(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(s1, s2);
        assert!(spec.is_free(s1.pos.0, s1.pos.1, 0.5));

        let mut blocked = spec;
        blocked.walls.push(WallSpec::opaque(Rect::new(10.0, 10.0, 10.0, 10.0)));
        blocked.spawn = Spawn::Random(Rect::new(12.0, 12.0, 5.0, 5.0));
        let err = Arena::new(blocked).spawn(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(err, Err(ArenaError::SpawnExhausted { attempts: 1000 }));
    }

    #[test]
    fn time_limit_terminates() {
        let mut spec = open(30.0).spec;
        spec.time_limit = 3;
        let a = Arena::new(spec);
        let mut s = a.spawn(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in 0..3 {
            let r = a.step(&s, Action::NOOP).unwrap();
            assert_eq!(r.done, i == 2);
            s = r.state;
        }
    }
}
