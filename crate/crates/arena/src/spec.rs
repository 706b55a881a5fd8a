//! Declarative arena description and its validity rules.

use crate::error::{ArenaError, Result};

/// Agent disc radius assumed when validating fixed spawns.
pub const AGENT_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    /// The rectangle grown by `margin` on every side.
    pub fn expanded(&self, margin: f64) -> ExpandedRect {
        ExpandedRect {
            x0: self.x - margin,
            y0: self.y - margin,
            x1: self.x + self.w + margin,
            y1: self.y + self.h + margin,
        }
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.x1() && py >= self.y && py <= self.y1()
    }

    /// Euclidean distance from a point to the closed rectangle.
    pub fn distance_to(&self, px: f64, py: f64) -> f64 {
        let dx = (self.x - px).max(0.0).max(px - self.x1());
        let dy = (self.y - py).max(0.0).max(py - self.y1());
        dx.hypot(dy)
    }
}

/// Minkowski sum of a wall with the agent's bounding square. The agent
/// centre is in contact iff it lies strictly inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpandedRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl ExpandedRect {
    pub fn overlaps(&self, px: f64, py: f64) -> bool {
        self.x0 < px && px < self.x1 && self.y0 < py && py < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WallKind {
    Opaque,
    Transparent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallSpec {
    pub kind: WallKind,
    pub rect: Rect,
    /// Only meaningful for opaque walls; `None` uses the default wall colour.
    pub color: Option<[f64; 3]>,
}

impl WallSpec {
    pub fn opaque(rect: Rect) -> Self {
        Self {
            kind: WallKind::Opaque,
            rect,
            color: None,
        }
    }

    pub fn transparent(rect: Rect) -> Self {
        Self {
            kind: WallKind::Transparent,
            rect,
            color: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GoalColor {
    Green,
    Gold,
    Red,
}

impl GoalColor {
    pub fn default_value(self) -> f64 {
        match self {
            GoalColor::Green => 1.0,
            GoalColor::Gold => 2.0,
            GoalColor::Red => -1.0,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            GoalColor::Green => "green",
            GoalColor::Gold => "gold",
            GoalColor::Red => "red",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpec {
    pub color: GoalColor,
    pub center: (f64, f64),
    pub radius: f64,
    pub value: f64,
}

impl GoalSpec {
    pub fn new(color: GoalColor, x: f64, y: f64, radius: f64) -> Self {
        Self {
            color,
            center: (x, y),
            radius,
            value: color.default_value(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Spawn {
    /// Heading is kept in degrees so the DSL round-trips exactly.
    Fixed { x: f64, y: f64, heading_deg: f64 },
    Random(Rect),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArenaSpec {
    pub width: f64,
    pub height: f64,
    pub time_limit: u32,
    pub walls: Vec<WallSpec>,
    pub goals: Vec<GoalSpec>,
    pub spawn: Spawn,
}

impl ArenaSpec {
    /// Largest single-episode extrinsic return: episodes end on the first
    /// goal contact, so this is the best positive goal value.
    pub fn max_return(&self) -> f64 {
        self.goals
            .iter()
            .map(|g| g.value)
            .fold(0.0, f64::max)
    }

    /// Same arena with the agent spawned uniformly over the whole floor.
    pub fn with_random_spawn(&self) -> ArenaSpec {
        ArenaSpec {
            spawn: Spawn::Random(Rect::new(0.0, 0.0, self.width, self.height)),
            ..self.clone()
        }
    }

    /// True if an agent disc of `radius` centred at `(x, y)` fits inside the
    /// bounds and touches no wall or goal.
    pub fn is_free(&self, x: f64, y: f64, radius: f64) -> bool {
        x >= radius
            && x <= self.width - radius
            && y >= radius
            && y <= self.height - radius
            && !self.walls.iter().any(|w| w.rect.expanded(radius).overlaps(x, y))
            && !self.goals.iter().any(|g| {
                (g.center.0 - x).hypot(g.center.1 - y) < radius + g.radius
            })
    }

    pub fn validate(&self) -> Result<()> {
        let sem = |m: String| Err(ArenaError::Semantic(m));
        if !(self.width.is_finite() && self.width > 0.0 && self.height.is_finite() && self.height > 0.0) {
            return sem(format!("arena size must be positive, got {}x{}", self.width, self.height));
        }
        if self.time_limit < 1 {
            return sem("time limit must be at least 1".into());
        }
        let inside = |r: &Rect| {
            r.x >= 0.0 && r.y >= 0.0 && r.x1() <= self.width && r.y1() <= self.height
        };
        for (i, w) in self.walls.iter().enumerate() {
            let r = &w.rect;
            if ![r.x, r.y, r.w, r.h].iter().all(|v| v.is_finite()) || r.w <= 0.0 || r.h <= 0.0 {
                return sem(format!("wall {i} must have positive finite extent"));
            }
            if !inside(r) {
                return sem(format!("wall {i} lies outside the arena"));
            }
            match (w.kind, w.color) {
                (WallKind::Transparent, Some(_)) => {
                    return sem(format!("transparent wall {i} cannot carry a colour"))
                }
                (WallKind::Opaque, Some(c)) if !c.iter().all(|v| (0.0..=1.0).contains(v)) => {
                    return sem(format!("wall {i} colour components must be in [0,1]"))
                }
                _ => {}
            }
        }
        if self.goals.is_empty() {
            return sem("arena has no goal".into());
        }
        for (i, g) in self.goals.iter().enumerate() {
            let (x, y) = g.center;
            if ![x, y, g.radius, g.value].iter().all(|v| v.is_finite()) || g.radius <= 0.0 {
                return sem(format!("goal {i} must have a positive finite radius"));
            }
            if x - g.radius < 0.0 || y - g.radius < 0.0 || x + g.radius > self.width || y + g.radius > self.height {
                return sem(format!("goal {i} lies outside the arena"));
            }
            let ok = match g.color {
                GoalColor::Green | GoalColor::Gold => g.value > 0.0,
                GoalColor::Red => g.value < 0.0,
            };
            if !ok {
                return sem(format!("goal {i}: {} goals need a value of the matching sign", g.color.keyword()));
            }
        }
        match &self.spawn {
            Spawn::Fixed { x, y, heading_deg } => {
                if ![*x, *y, *heading_deg].iter().all(|v| v.is_finite()) {
                    return sem("spawn must be finite".into());
                }
                if !self.is_free(*x, *y, AGENT_RADIUS) {
                    return sem(format!("spawn ({x}, {y}) is out of bounds or inside a wall or goal"));
                }
            }
            Spawn::Random(r) => {
                if ![r.x, r.y, r.w, r.h].iter().all(|v| v.is_finite()) || r.w <= 0.0 || r.h <= 0.0 {
                    return sem("random spawn region must have positive finite extent".into());
                }
                if !inside(r) {
                    return sem("random spawn region lies outside the arena".into());
                }
            }
        }
        Ok(())
    }
}
