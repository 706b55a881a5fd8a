//! Line-oriented arena description language.
//!
//! ```text
//! arena <width> <height> <time_limit>
//! wall opaque <x> <y> <w> <h> [<r> <g> <b>]
//! wall transparent <x> <y> <w> <h>
//! goal <green|gold|red> <x> <y> <radius> <value>
//! agent <x> <y> <heading_deg>  |  agent random <x> <y> <w> <h>
//! ```
//!
//! One statement per line, `#` starts a comment, tokens are separated by
//! whitespace. `arena` must come first. Numbers are plain decimals; the time
//! limit is an unsigned integer.

use std::fmt::Write as _;

use crate::error::{ArenaError, Result};
use crate::spec::{ArenaSpec, GoalColor, GoalSpec, Rect, Spawn, WallKind, WallSpec};

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    col: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    /// Column just past the last token, for "missing argument" errors.
    end_col: usize,
}

fn tokenize(line: &str) -> (Vec<Token<'_>>, usize) {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut col = 0;
    for (byte, ch) in code.char_indices() {
        col += 1;
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                tokens.push(Token { text: &code[b..byte], col: c });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, c)) = start {
        tokens.push(Token { text: &code[b..], col: c });
    }
    let end_col = tokens
        .last()
        .map(|t| t.col + t.text.chars().count())
        .unwrap_or(1);
    (tokens, end_col)
}

fn syntax(line: usize, col: usize, expected: impl Into<String>) -> ArenaError {
    ArenaError::Syntax {
        line,
        col,
        expected: expected.into(),
    }
}

fn is_decimal(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => (!int.is_empty() || !f.is_empty()) && digits(int) && digits(f),
    }
}

struct Cursor<'a, 'l> {
    line: &'l Line<'a>,
    pos: usize,
}

impl<'a> Cursor<'a, '_> {
    fn next(&mut self, expected: &str) -> Result<Token<'a>> {
        match self.line.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => Err(syntax(self.line.number, self.line.end_col, expected)),
        }
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.line.tokens.get(self.pos)
    }

    fn number(&mut self, name: &str) -> Result<f64> {
        let t = self.next(&format!("<{name}>"))?;
        if !is_decimal(t.text) {
            return Err(syntax(self.line.number, t.col, format!("decimal number for <{name}>")));
        }
        t.text
            .parse()
            .map_err(|_| syntax(self.line.number, t.col, format!("decimal number for <{name}>")))
    }

    fn integer(&mut self, name: &str) -> Result<u32> {
        let t = self.next(&format!("<{name}>"))?;
        let body = t.text.strip_prefix('+').unwrap_or(t.text);
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return Err(syntax(self.line.number, t.col, format!("unsigned integer for <{name}>")));
        }
        body.parse()
            .map_err(|_| syntax(self.line.number, t.col, format!("integer <{name}> within u32 range")))
    }

    fn end(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(syntax(self.line.number, t.col, "end of statement")),
        }
    }
}

pub fn parse_arena(text: &str) -> Result<ArenaSpec> {
    let lines: Vec<Line<'_>> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let (tokens, end_col) = tokenize(l);
            Line {
                number: i + 1,
                tokens,
                end_col,
            }
        })
        .filter(|l| !l.tokens.is_empty())
        .collect();

    let Some(first) = lines.first() else {
        return Err(syntax(1, 1, "`arena` statement"));
    };
    if first.tokens[0].text != "arena" {
        return Err(syntax(first.number, first.tokens[0].col, "`arena` statement"));
    }
    let mut cur = Cursor { line: first, pos: 1 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let time_limit = cur.integer("time_limit")?;
    cur.end()?;

    let mut walls = Vec::new();
    let mut goals = Vec::new();
    let mut spawn: Option<Spawn> = None;

    for line in &lines[1..] {
        let mut cur = Cursor { line, pos: 1 };
        let head = line.tokens[0];
        match head.text {
            "wall" => {
                let kind_tok = cur.next("`opaque` or `transparent`")?;
                let kind = match kind_tok.text {
                    "opaque" => WallKind::Opaque,
                    "transparent" => WallKind::Transparent,
                    _ => return Err(syntax(line.number, kind_tok.col, "`opaque` or `transparent`")),
                };
                let rect = Rect::new(cur.number("x")?, cur.number("y")?, cur.number("w")?, cur.number("h")?);
                let color = if kind == WallKind::Opaque && cur.peek().is_some() {
                    Some([cur.number("r")?, cur.number("g")?, cur.number("b")?])
                } else {
                    None
                };
                cur.end()?;
                walls.push(WallSpec { kind, rect, color });
            }
            "goal" => {
                let color_tok = cur.next("`green`, `gold` or `red`")?;
                let color = match color_tok.text {
                    "green" => GoalColor::Green,
                    "gold" => GoalColor::Gold,
                    "red" => GoalColor::Red,
                    _ => return Err(syntax(line.number, color_tok.col, "`green`, `gold` or `red`")),
                };
                let x = cur.number("x")?;
                let y = cur.number("y")?;
                let radius = cur.number("radius")?;
                let value = cur.number("value")?;
                cur.end()?;
                goals.push(GoalSpec {
                    color,
                    center: (x, y),
                    radius,
                    value,
                });
            }
            "agent" => {
                if spawn.is_some() {
                    return Err(syntax(line.number, head.col, "at most one `agent` statement"));
                }
                let s = if cur.peek().map(|t| t.text) == Some("random") {
                    cur.pos += 1;
                    Spawn::Random(Rect::new(cur.number("x")?, cur.number("y")?, cur.number("w")?, cur.number("h")?))
                } else {
                    Spawn::Fixed {
                        x: cur.number("x")?,
                        y: cur.number("y")?,
                        heading_deg: cur.number("heading_deg")?,
                    }
                };
                cur.end()?;
                spawn = Some(s);
            }
            "arena" => return Err(syntax(line.number, head.col, "`wall`, `goal` or `agent` (arena already declared)")),
            _ => return Err(syntax(line.number, head.col, "`wall`, `goal` or `agent`")),
        }
    }

    let spec = ArenaSpec {
        width,
        height,
        time_limit,
        walls,
        goals,
        spawn: spawn.ok_or_else(|| ArenaError::Semantic("arena has no agent statement".into()))?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Canonical text: `arena`, walls, goals, then `agent`, one per line.
pub fn serialize_arena(spec: &ArenaSpec) -> String {
    let mut s = String::new();
    // Writing to a String cannot fail.
    let _ = writeln!(s, "arena {} {} {}", spec.width, spec.height, spec.time_limit);
    for w in &spec.walls {
        let r = &w.rect;
        match w.kind {
            WallKind::Opaque => {
                let _ = write!(s, "wall opaque {} {} {} {}", r.x, r.y, r.w, r.h);
                if let Some([cr, cg, cb]) = w.color {
                    let _ = write!(s, " {cr} {cg} {cb}");
                }
                s.push('\n');
            }
            WallKind::Transparent => {
                let _ = writeln!(s, "wall transparent {} {} {} {}", r.x, r.y, r.w, r.h);
            }
        }
    }
    for g in &spec.goals {
        let _ = writeln!(
            s,
            "goal {} {} {} {} {}",
            g.color.keyword(),
            g.center.0,
            g.center.1,
            g.radius,
            g.value
        );
    }
    match &spec.spawn {
        Spawn::Fixed { x, y, heading_deg } => {
            let _ = writeln!(s, "agent {x} {y} {heading_deg}");
        }
        Spawn::Random(r) => {
            let _ = writeln!(s, "agent random {} {} {} {}", r.x, r.y, r.w, r.h);
        }
    }
    s
}
