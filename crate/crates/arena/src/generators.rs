//! Procedural lesson generators and the held-out test suite.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{ArenaError, Result};
use crate::spec::{ArenaSpec, GoalColor, GoalSpec, Rect, Spawn, WallSpec};

pub const DEFAULT_IDC_LESSONS: usize = 12;
pub const DEFAULT_XMC_LESSONS: usize = 6;
/// Number of XMC lessons the arm-length schedule is laid out for.
pub const FULL_XMC_LESSONS: usize = 18;
pub const XMC_ARM_THICKNESS: f64 = 0.5;

fn check_index(index: usize, n: usize) -> Result<()> {
    if index >= n {
        return Err(ArenaError::IndexOutOfRange { index, len: n });
    }
    Ok(())
}

/// Position of `index` within its third of the curriculum, in `[0, 1]`.
fn idc_phase(index: usize, n: usize) -> (usize, f64) {
    let phase = 3 * index / n;
    let start = (phase * n).div_ceil(3);
    let end = ((phase + 1) * n).div_ceil(3);
    let len = end - start;
    let q = if len <= 1 { 0.0 } else { (index - start) as f64 / (len - 1) as f64 };
    (phase, q)
}

/// Nominal difficulty of an IDC lesson: arena side, goal bearing from the
/// spawn heading (degrees) and obstacle count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdcDifficulty {
    pub size: f64,
    pub bearing_deg: f64,
    pub obstacles: usize,
}

/// Lesson `index` of an `n`-lesson initial curriculum.
///
/// The first third places one goal in an open arena at growing range and
/// bearing, the second third puts the goal behind the agent, the last third
/// hides it behind one or two opaque walls.
pub fn gen_idc_lesson(index: usize, n: usize) -> Result<ArenaSpec> {
    check_index(index, n)?;
    let (phase, q) = idc_phase(index, n);
    let size = 12.0 + if n > 1 { (8 * index / (n - 1)) as f64 } else { 0.0 };
    let mid = size / 2.0;
    let time_limit = (10.0 * size) as u32 + 50 * phase as u32;
    let green = |x: f64, y: f64| GoalSpec::new(GoalColor::Green, x, y, 1.0);

    let (walls, goal, spawn) = match phase {
        0 => {
            let (dist, bearing) = (4.0 + 3.0 * q, (40.0 * q).to_radians());
            (vec![], green(3.0 + dist * bearing.cos(), mid + dist * bearing.sin()), (3.0, mid))
        }
        1 => {
            let bearing = (100.0 + 80.0 * q).to_radians();
            (vec![], green(mid + 4.0 * bearing.cos(), mid + 4.0 * bearing.sin()), (mid, mid))
        }
        _ => {
            let len = 4.0 + 4.0 * q;
            let mut walls = vec![WallSpec::opaque(Rect::new(mid - 0.5, mid - len / 2.0, 1.0, len))];
            if q >= 0.5 {
                walls.push(WallSpec::opaque(Rect::new(mid + 2.0, mid, 1.0, len / 2.0)));
            }
            (walls, green(size - 3.0, mid), (3.0, mid))
        }
    };
    let spec = ArenaSpec {
        width: size,
        height: size,
        time_limit,
        walls,
        goals: vec![goal],
        spawn: Spawn::Fixed { x: spawn.0, y: spawn.1, heading_deg: 0.0 },
    };
    debug_assert_eq!(spec.validate(), Ok(()));
    Ok(spec)
}

pub fn idc_difficulty(spec: &ArenaSpec) -> IdcDifficulty {
    let (sx, sy, heading) = match spec.spawn {
        Spawn::Fixed { x, y, heading_deg } => (x, y, heading_deg),
        Spawn::Random(r) => (r.x + r.w / 2.0, r.y + r.h / 2.0, 0.0),
    };
    let g = &spec.goals[0];
    let bearing = (g.center.1 - sy).atan2(g.center.0 - sx).to_degrees() - heading;
    let bearing = (bearing + 180.0).rem_euclid(360.0) - 180.0;
    IdcDifficulty {
        size: spec.width.max(spec.height),
        bearing_deg: bearing.abs(),
        obstacles: spec.walls.len(),
    }
}

/// One XMC lesson: the arena layout plus the arm-length band that each
/// episode samples from.
#[derive(Debug, Clone, PartialEq)]
pub struct XmcLesson {
    pub index: usize,
    pub arena_size: f64,
    pub time_limit: u32,
    /// Closed interval of arm lengths, measured from the maze centre.
    pub arm_band: (f64, f64),
    pub goal_radius: f64,
}

impl XmcLesson {
    pub fn new(index: usize, n: usize) -> Result<Self> {
        check_index(index, n)?;
        let j = if n > 1 {
            index as f64 * (FULL_XMC_LESSONS - 1) as f64 / (n - 1) as f64
        } else {
            0.0
        };
        let lo = 3.0 + 0.6 * j;
        Ok(Self {
            index,
            arena_size: 16.0 + j.ceil(),
            time_limit: 200 + (30.0 * j).round() as u32,
            arm_band: (lo, lo + 0.5),
            goal_radius: 1.0,
        })
    }

    /// Best episode return of every instance: the single green goal.
    pub fn goal_value(&self) -> f64 {
        GoalColor::Green.default_value()
    }

    /// Draws one concrete arena: arm length, spawn quadrant, offsets within
    /// the quadrant and heading. The goal sits in a quadrant adjacent to the
    /// agent's, mirrored across the arm that separates them.
    pub fn instantiate(&self, rng: &mut impl Rng) -> ArenaSpec {
        let (lo, hi) = self.arm_band;
        let arm = lo + rng.gen::<f64>() * (hi - lo);
        let c = self.arena_size / 2.0;
        let t = XMC_ARM_THICKNESS;
        let walls = vec![
            WallSpec::transparent(Rect::new(c + t / 2.0, c - t / 2.0, arm - t / 2.0, t)),
            WallSpec::transparent(Rect::new(c - arm, c - t / 2.0, arm - t / 2.0, t)),
            WallSpec::transparent(Rect::new(c - t / 2.0, c - arm, t, 2.0 * arm)),
        ];
        let max_off = (arm - 1.0).min(3.0);
        let ox = rng.gen_range(1.5..=max_off);
        let oy = rng.gen_range(1.5..=max_off);
        let (sx, sy) = (
            if rng.gen::<bool>() { 1.0 } else { -1.0 },
            if rng.gen::<bool>() { 1.0 } else { -1.0 },
        );
        let across_vertical_arm = rng.gen::<bool>();
        let (gx, gy) = if across_vertical_arm { (-sx, sy) } else { (sx, -sy) };
        let heading_deg = rng.gen::<f64>() * 360.0;
        let spec = ArenaSpec {
            width: self.arena_size,
            height: self.arena_size,
            time_limit: self.time_limit,
            walls,
            goals: vec![GoalSpec::new(GoalColor::Green, c + gx * ox, c + gy * oy, self.goal_radius)],
            spawn: Spawn::Fixed { x: c + sx * ox, y: c + sy * oy, heading_deg },
        };
        debug_assert_eq!(spec.validate(), Ok(()));
        spec
    }
}

/// A freshly randomised arena for lesson `index` of an `n`-lesson X-maze
/// curriculum.
pub fn gen_xmc_lesson(index: usize, n: usize, rng: &mut impl Rng) -> Result<ArenaSpec> {
    Ok(XmcLesson::new(index, n)?.instantiate(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestArena {
    pub family: &'static str,
    pub variant: usize,
    pub spec: ArenaSpec,
}

pub const TEST_FAMILIES: [&str; 8] = [
    "short-transparent-barrier",
    "opaque-barrier",
    "transparent-cup",
    "opaque-cup",
    "opaque-x-maze",
    "transparent-x-maze-opposite",
    "long-transparent-gold",
    "transparent-corridor-red",
];

fn cup(opaque: bool, half: f64, depth: f64) -> Vec<WallSpec> {
    let mk = |r: Rect| if opaque { WallSpec::opaque(r) } else { WallSpec::transparent(r) };
    vec![
        mk(Rect::new(12.0, 10.0 - half, 0.5, 2.0 * half)),
        mk(Rect::new(12.5, 10.0 - half, depth, 0.5)),
        mk(Rect::new(12.5, 10.0 + half - 0.5, depth, 0.5)),
    ]
}

fn x_maze(opaque: bool, c: f64, arm: f64) -> Vec<WallSpec> {
    let mk = |r: Rect| if opaque { WallSpec::opaque(r) } else { WallSpec::transparent(r) };
    let t = XMC_ARM_THICKNESS;
    vec![
        mk(Rect::new(c + t / 2.0, c - t / 2.0, arm - t / 2.0, t)),
        mk(Rect::new(c - arm, c - t / 2.0, arm - t / 2.0, t)),
        mk(Rect::new(c - t / 2.0, c - arm, t, 2.0 * arm)),
    ]
}

/// Eight detour families with three variants each. Every family differs
/// from the training generators in wall kind, shape or placement.
pub fn gen_test_suite() -> Vec<TestArena> {
    let mut out = Vec::with_capacity(24);
    for (f, &family) in TEST_FAMILIES.iter().enumerate() {
        for v in 0..3 {
            let vf = v as f64;
            let green = |x: f64, y: f64| GoalSpec::new(GoalColor::Green, x, y, 1.0);
            let fixed = |x: f64, y: f64, heading_deg: f64| Spawn::Fixed { x, y, heading_deg };
            let (size, walls, goals, spawn) = match f {
                0 => (
                    20.0,
                    vec![WallSpec::transparent(Rect::new(9.75, 10.0 - (1.5 + 0.5 * vf), 0.5, 3.0 + vf))],
                    vec![green(15.0, 10.0)],
                    fixed(4.0, 10.0, 0.0),
                ),
                1 => (
                    20.0,
                    vec![WallSpec::opaque(Rect::new(9.75, 10.0 - (2.0 + vf), 0.5, 4.0 + 2.0 * vf))],
                    vec![green(15.0, 10.0)],
                    fixed(4.0, 10.0, 0.0),
                ),
                2 | 3 => (
                    24.0,
                    cup(f == 3, 2.5 + 0.5 * vf, 4.0),
                    vec![green(14.5, 10.0)],
                    fixed(4.0, 10.0 + 2.0 * (vf - 1.0), 0.0),
                ),
                4 => {
                    let (c, o) = (10.0, 2.5);
                    (
                        20.0,
                        x_maze(true, c, 4.0 + vf),
                        vec![green(c - o, c + o)],
                        fixed(c + o, c + o, 90.0 * vf),
                    )
                }
                5 => {
                    let (c, o) = (10.0, 2.5);
                    (
                        20.0,
                        x_maze(false, c, 4.0 + vf),
                        vec![green(c - o, c - o)],
                        fixed(c + o, c + o, 225.0),
                    )
                }
                6 => (
                    20.0,
                    vec![WallSpec::transparent(Rect::new(9.75, 10.0 - (6.0 + vf), 0.5, 12.0 + 2.0 * vf))],
                    vec![GoalSpec::new(GoalColor::Gold, 15.0, 10.0, 1.0)],
                    fixed(4.0, 10.0, 0.0),
                ),
                _ => (
                    20.0,
                    vec![
                        WallSpec::transparent(Rect::new(3.0, 7.5, 14.0, 0.5)),
                        WallSpec::transparent(Rect::new(3.0, 12.0, 14.0, 0.5)),
                    ],
                    vec![
                        GoalSpec::new(GoalColor::Red, 9.0 + 1.5 * vf, 10.0, 0.6),
                        green(16.0, 10.0),
                    ],
                    fixed(4.0, 10.0, 0.0),
                ),
            };
            let spec = ArenaSpec {
                width: size,
                height: size,
                time_limit: 400,
                walls,
                goals,
                spawn,
            };
            debug_assert_eq!(spec.validate(), Ok(()), "{family}/{v}");
            out.push(TestArena { family, variant: v, spec });
        }
    }
    out
}

/// Uniform heading in `[0, 2π)`.
pub fn random_heading(rng: &mut impl Rng) -> f64 {
    rng.gen::<f64>() * TAU
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::serialize_arena;
    use crate::geometry::segment_intersects_rect;
    use crate::spec::WallKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn idc_phases_partition() {
        for n in [1, 2, 3, 4, 12, 40] {
            let mut last = (0, -1.0);
            for i in 0..n {
                let (p, q) = idc_phase(i, n);
                assert!(p < 3 && (0.0..=1.0).contains(&q));
                assert!((p, q) > last, "n={n} i={i}");
                last = (p, q);
            }
        }
    }

    #[test]
    fn idc_endpoints_and_determinism() {
        for n in [12, 40] {
            let first = gen_idc_lesson(0, n).unwrap();
            assert!(first.walls.is_empty());
            let d = idc_difficulty(&first);
            assert!(d.bearing_deg < 1e-9);
            let last = gen_idc_lesson(n - 1, n).unwrap();
            assert!(!last.walls.is_empty());
            for i in 0..n {
                let s = gen_idc_lesson(i, n).unwrap();
                s.validate().unwrap();
                assert_eq!(s, gen_idc_lesson(i, n).unwrap());
            }
        }
        assert_eq!(gen_idc_lesson(12, 12), Err(ArenaError::IndexOutOfRange { index: 12, len: 12 }));
    }

    #[test]
    fn idc_difficulty_is_monotone() {
        for n in [3, 12, 40] {
            let ds: Vec<_> = (0..n).map(|i| idc_difficulty(&gen_idc_lesson(i, n).unwrap())).collect();
            for w in ds.windows(2) {
                assert!(w[1].size >= w[0].size);
                assert!(w[1].obstacles >= w[0].obstacles);
                if w[1].obstacles == w[0].obstacles {
                    assert!(w[1].bearing_deg >= w[0].bearing_deg - 1e-9, "{w:?}");
                }
            }
        }
    }

    #[test]
    fn idc_walls_block_the_direct_line() {
        for i in 0..12 {
            let s = gen_idc_lesson(i, 12).unwrap();
            if let (Some(w), Spawn::Fixed { x, y, .. }) = (s.walls.first(), &s.spawn) {
                assert!(segment_intersects_rect((*x, *y), s.goals[0].center, &w.rect));
            }
        }
    }

    #[test]
    fn xmc_bands_strictly_increase() {
        for n in [2, 6, 18] {
            let ls: Vec<_> = (0..n).map(|i| XmcLesson::new(i, n).unwrap()).collect();
            assert_eq!(ls[0].arm_band, (3.0, 3.5));
            for w in ls.windows(2) {
                assert!(w[1].arm_band.0 > w[0].arm_band.1);
                assert!(w[1].arena_size >= w[0].arena_size);
            }
        }
        assert!(XmcLesson::new(6, 6).is_err());
    }

    #[test]
    fn xmc_goal_never_in_straight_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [6, 18] {
            for i in 0..n {
                let lesson = XmcLesson::new(i, n).unwrap();
                for _ in 0..200 {
                    let s = lesson.instantiate(&mut rng);
                    s.validate().unwrap();
                    assert!(s.walls.iter().all(|w| w.kind == WallKind::Transparent));
                    let Spawn::Fixed { x, y, .. } = s.spawn else { unreachable!() };
                    let g = s.goals[0].center;
                    assert!(s.walls.iter().any(|w| segment_intersects_rect((x, y), g, &w.rect)));
                }
            }
        }
    }

    #[test]
    fn test_suite_shape() {
        let suite = gen_test_suite();
        assert_eq!(suite.len(), 24);
        let opaque_between = TEST_FAMILIES
            .iter()
            .filter(|fam| {
                suite.iter().filter(|t| t.family == **fam).all(|t| {
                    let Spawn::Fixed { x, y, .. } = t.spec.spawn else { return false };
                    t.spec.walls.iter().any(|w| {
                        w.kind == WallKind::Opaque && segment_intersects_rect((x, y), t.spec.goals.last().unwrap().center, &w.rect)
                    })
                })
            })
            .count();
        assert!(opaque_between >= 2);
        for t in &suite {
            t.spec.validate().unwrap();
        }
    }

    #[test]
    fn test_suite_disjoint_from_training() {
        let mut training: Vec<String> = (0..40).map(|i| serialize_arena(&gen_idc_lesson(i, 40).unwrap())).collect();
        training.extend((0..12).map(|i| serialize_arena(&gen_idc_lesson(i, 12).unwrap())));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..18 {
            for _ in 0..50 {
                training.push(serialize_arena(&gen_xmc_lesson(i, 18, &mut rng).unwrap()));
            }
        }
        for t in gen_test_suite() {
            assert!(!training.contains(&serialize_arena(&t.spec)));
        }
    }
}
