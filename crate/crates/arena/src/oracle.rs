//! Scripted privileged controller: plans a path on an occupancy grid with
//! full knowledge of the spec and steers along it. Used to exercise the
//! curriculum machinery without learning.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::physics::{Action, EpisodeState, Kinematics};
use crate::spec::{ArenaSpec, GoalColor};

const CELL: f64 = 0.25;
const MARGIN: f64 = 0.3;
const REPLAN_EVERY: u32 = 25;
const LOOKAHEAD: usize = 80;

#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    spec: ArenaSpec,
    kin: Kinematics,
    cols: usize,
    rows: usize,
    free: Vec<bool>,
    path: Vec<(f64, f64)>,
    cursor: usize,
    planned_at: Option<u32>,
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

impl ScriptedOracle {
    pub fn new(spec: &ArenaSpec) -> Self {
        Self::with_kinematics(spec, Kinematics::default())
    }

    pub fn with_kinematics(spec: &ArenaSpec, kin: Kinematics) -> Self {
        let cols = (spec.width / CELL).ceil() as usize;
        let rows = (spec.height / CELL).ceil() as usize;
        let mut oracle = Self {
            spec: spec.clone(),
            kin,
            cols,
            rows,
            free: Vec::new(),
            path: Vec::new(),
            cursor: 0,
            planned_at: None,
        };
        oracle.free = (0..rows * cols)
            .map(|i| {
                let (x, y) = oracle.center(i);
                oracle.clear(x, y, MARGIN)
            })
            .collect();
        oracle
    }

    fn center(&self, i: usize) -> (f64, f64) {
        (((i % self.cols) as f64 + 0.5) * CELL, ((i / self.cols) as f64 + 0.5) * CELL)
    }

    fn cell_of(&self, (x, y): (f64, f64)) -> usize {
        let c = ((x / CELL) as usize).min(self.cols - 1);
        let r = ((y / CELL) as usize).min(self.rows - 1);
        r * self.cols + c
    }

    /// True if an agent disc grown by `margin` fits at `(x, y)` without
    /// touching walls or hazards. Positive goals do not count as obstacles.
    fn clear(&self, x: f64, y: f64, margin: f64) -> bool {
        let r = self.kin.radius + margin;
        x >= r
            && x <= self.spec.width - r
            && y >= r
            && y <= self.spec.height - r
            && self.spec.walls.iter().all(|w| w.rect.distance_to(x, y) >= r)
            && self
                .spec
                .goals
                .iter()
                .filter(|g| g.color == GoalColor::Red)
                .all(|g| (g.center.0 - x).hypot(g.center.1 - y) >= r + g.radius)
    }

    /// Straight-line clearance from `a` to `b`. Samples near `a` only need
    /// to avoid contact, so an agent already hugging a wall can pull away.
    fn visible(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let n = (len / 0.1).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let t = k as f64 / n as f64;
            let margin = if t * len < 0.5 { 0.0 } else { MARGIN * 0.5 };
            self.clear(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), margin)
        })
    }

    fn plan(&mut self, state: &EpisodeState) {
        let targets: Vec<(f64, f64, f64)> = state
            .remaining_goals
            .iter()
            .map(|&g| &self.spec.goals[g])
            .filter(|g| g.value > 0.0)
            .map(|g| (g.center.0, g.center.1, g.radius))
            .collect();
        let is_target = |p: (f64, f64)| {
            targets
                .iter()
                .any(|&(x, y, rad)| (x - p.0).hypot(y - p.1) < rad + 0.8 * self.kin.radius)
        };

        let n = self.rows * self.cols;
        let start = self.cell_of(state.pos);
        let mut dist = vec![u64::MAX; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[start] = 0;
        heap.push(Reverse((0u64, start)));
        let mut reached = None;
        while let Some(Reverse((d, i))) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            if is_target(self.center(i)) {
                reached = Some(i);
                break;
            }
            let (c, r) = ((i % self.cols) as i64, (i / self.cols) as i64);
            for (dc, dr, cost) in [
                (1, 0, 10),
                (-1, 0, 10),
                (0, 1, 10),
                (0, -1, 10),
                (1, 1, 14),
                (1, -1, 14),
                (-1, 1, 14),
                (-1, -1, 14),
            ] {
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc >= self.cols as i64 || nr >= self.rows as i64 {
                    continue;
                }
                let j = nr as usize * self.cols + nc as usize;
                // The start cell may sit inside the safety margin; leaving it is allowed.
                if !self.free[j] && !(i == start && self.clear(self.center(j).0, self.center(j).1, 0.0)) {
                    continue;
                }
                let nd = d + cost;
                if nd < dist[j] {
                    dist[j] = nd;
                    prev[j] = i;
                    heap.push(Reverse((nd, j)));
                }
            }
        }

        self.path.clear();
        self.cursor = 0;
        let Some(end) = reached else {
            return;
        };
        let mut i = end;
        self.path.push(self.center(i));
        while prev[i] != usize::MAX {
            i = prev[i];
            self.path.push(self.center(i));
        }
        self.path.reverse();
        let e = self.center(end);
        if let Some(&(gx, gy, _)) = targets
            .iter()
            .min_by(|a, b| (a.0 - e.0).hypot(a.1 - e.1).total_cmp(&(b.0 - e.0).hypot(b.1 - e.1)))
        {
            self.path.push((gx, gy));
        }
    }

    pub fn act(&mut self, state: &EpisodeState) -> Action {
        let stale = match self.planned_at {
            None => true,
            Some(t) => state.steps_elapsed < t || state.steps_elapsed - t >= REPLAN_EVERY,
        };
        if stale || self.path.is_empty() {
            self.plan(state);
            self.planned_at = Some(state.steps_elapsed);
        }
        if self.path.is_empty() {
            return Action::NOOP;
        }
        // Pure pursuit: aim at the farthest path point in clear line of sight.
        let horizon = (self.cursor + LOOKAHEAD).min(self.path.len());
        if let Some(j) = (self.cursor..horizon).rev().find(|&j| self.visible(state.pos, self.path[j])) {
            self.cursor = j;
        }
        let (x, y) = state.pos;
        let (wx, wy) = self.path[self.cursor];
        let err = angle_diff((wy - y).atan2(wx - x), state.heading);
        let turn = if err.abs() < self.kin.turn_rate / 2.0 {
            0
        } else if err > 0.0 {
            1
        } else {
            -1
        };
        let movement = if err.abs() < 25f64.to_radians() {
            1
        } else if state.speed > 0.2 {
            -1
        } else {
            0
        };
        Action::new(movement, turn)
    }

    /// Forgets the cached plan, e.g. at the start of a new episode.
    pub fn reset(&mut self) {
        self.path.clear();
        self.cursor = 0;
        self.planned_at = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_idc_lesson, gen_test_suite, XmcLesson};
    use crate::physics::Arena;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(spec: &ArenaSpec, seed: u64) -> f64 {
        let arena = Arena::new(spec.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = arena.spawn(&mut rng).unwrap();
        let mut oracle = ScriptedOracle::new(spec);
        let mut ret = 0.0;
        loop {
            let r = arena.step(&s, oracle.act(&s)).unwrap();
            ret += r.reward;
            if r.done {
                return ret;
            }
            s = r.state;
        }
    }

    #[test]
    fn solves_every_idc_lesson() {
        for i in 0..12 {
            assert_eq!(run(&gen_idc_lesson(i, 12).unwrap(), 0), 1.0, "lesson {i}");
        }
    }

    #[test]
    fn solves_xmc_and_test_arenas() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..6 {
            let lesson = XmcLesson::new(i, 6).unwrap();
            for k in 0..5 {
                assert_eq!(run(&lesson.instantiate(&mut rng), k), 1.0, "xmc {i}");
            }
        }
        for t in gen_test_suite() {
            assert_eq!(run(&t.spec, 0), t.spec.max_return(), "{} {}", t.family, t.variant);
        }
    }
}
