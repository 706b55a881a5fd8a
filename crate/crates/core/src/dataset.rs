//! Observation datasets for offline VAE training and latent analysis, and
//! the `OBSD` file format.
//!
//! Layout (little endian): magic `OBSD`, version `u16`, count `u32`, height
//! `u16`, width `u16`, channels `u8`, label flag `u8`, then per item an
//! optional `u8` label followed by `H·W·C` bytes in HWC order (`value / 255`).

use std::path::Path;

use curiolab_arena::{render, scan_columns, Arena, ArenaSpec, EpisodeState, RenderConfig};
use curiolab_numcore::Tensor;
use rand::Rng;

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 4] = b"OBSD";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 1 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    GoalVisible = 0,
    TransparentWall = 1,
    OuterWall = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::GoalVisible, Label::TransparentWall, Label::OuterWall];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::GoalVisible => "goal-visible",
            Label::TransparentWall => "transparent-wall-dominant",
            Label::OuterWall => "outer-wall-only",
        }
    }
}

/// Scene category of a view: any visible goal wins, then a view with glass
/// across at least a quarter of its columns, otherwise walls only.
pub fn label_view(state: &EpisodeState, spec: &ArenaSpec, cfg: &RenderConfig) -> Label {
    let cols = scan_columns(state, spec, cfg);
    if cols.iter().any(|c| c.goals > 0) {
        Label::GoalVisible
    } else if 4 * cols.iter().filter(|c| c.glass > 0).count() >= cols.len() {
        Label::TransparentWall
    } else {
        Label::OuterWall
    }
}

/// Images of one resolution stored as contiguous HWC `f64` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDataset {
    pub height: usize,
    pub width: usize,
    pixels: Vec<f64>,
    pub labels: Option<Vec<Label>>,
}

impl ObservationDataset {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: Vec::new(),
            labels: None,
        }
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / self.image_len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// HWC pixels of item `i`.
    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn push(&mut self, hwc: &[f64], label: Option<Label>) -> Result<()> {
        if hwc.len() != self.image_len() {
            return Err(LabError::Dataset(format!("image has {} values, expected {}", hwc.len(), self.image_len())));
        }
        let was_empty = self.is_empty();
        match (&mut self.labels, label) {
            (Some(ls), Some(l)) => ls.push(l),
            (None, None) => {}
            (None, Some(l)) if was_empty => self.labels = Some(vec![l]),
            _ => return Err(LabError::Dataset("labels must be present on all items or none".into())),
        }
        self.pixels.extend_from_slice(hwc);
        Ok(())
    }

    /// `[N, 3, H, W]` tensor of the selected items.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let hw = self.height * self.width;
        let mut out = vec![0.0; indices.len() * 3 * hw];
        for (k, &i) in indices.iter().enumerate() {
            hwc_to_chw(self.image(i), hw, &mut out[k * 3 * hw..(k + 1) * 3 * hw]);
        }
        Tensor::from_vec(&[indices.len(), 3, self.height, self.width], out).expect("batch shape")
    }

    /// Items `range` as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.height, self.width);
        for &i in indices {
            out.pixels.extend_from_slice(self.image(i));
        }
        out.labels = self.labels.as_ref().map(|ls| indices.iter().map(|&i| ls[i]).collect());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * (self.image_len() + 1));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.push(3);
        out.push(u8::from(self.labels.is_some()));
        for i in 0..self.len() {
            if let Some(ls) = &self.labels {
                out.push(ls[i] as u8);
            }
            out.extend(self.image(i).iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Err(LabError::Dataset(m.to_string()));
        if bytes.len() < HEADER_LEN {
            return bad("truncated header");
        }
        if &bytes[..4] != MAGIC {
            return bad("bad magic");
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        if u16_at(4) != VERSION {
            return bad("unsupported version");
        }
        let count = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let (h, w) = (u16_at(10) as usize, u16_at(12) as usize);
        let (c, flag) = (bytes[14], bytes[15]);
        if c != 3 {
            return bad("only 3-channel datasets are supported");
        }
        if h == 0 || w == 0 || count == 0 {
            return bad("empty dimensions or count");
        }
        if flag > 1 {
            return bad("label flag must be 0 or 1");
        }
        let item = h * w * 3 + usize::from(flag);
        let body = &bytes[HEADER_LEN..];
        if body.len() / item < count || body.len() != count * item {
            return bad("payload size does not match header");
        }
        let mut ds = Self::new(h, w);
        ds.pixels.reserve(count * h * w * 3);
        let mut labels = Vec::new();
        for chunk in body.chunks_exact(item) {
            let px = if flag == 1 {
                labels.push(Label::from_u8(chunk[0]).ok_or_else(|| LabError::Dataset("unknown label".into()))?);
                &chunk[1..]
            } else {
                chunk
            };
            ds.pixels.extend(px.iter().map(|&b| f64::from(b) / 255.0));
        }
        if flag == 1 {
            ds.labels = Some(labels);
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.encode()).map_err(|e| LabError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| LabError::io(&path, e))?;
        Self::decode(&bytes)
    }
}

pub fn hwc_to_chw(hwc: &[f64], hw: usize, out: &mut [f64]) {
    for (p, px) in hwc.chunks_exact(3).enumerate() {
        out[p] = px[0];
        out[hw + p] = px[1];
        out[2 * hw + p] = px[2];
    }
}

/// Renders `n` views, each from a uniformly chosen spec and a fresh spawn.
pub fn collect_observation_dataset(
    specs: &[ArenaSpec],
    n: usize,
    cfg: &RenderConfig,
    rng: &mut impl Rng,
) -> Result<ObservationDataset> {
    if specs.is_empty() || n == 0 {
        return Err(LabError::Dataset("need at least one spec and one observation".into()));
    }
    let arenas: Vec<Arena> = specs.iter().cloned().map(Arena::new).collect();
    let mut ds = ObservationDataset::new(cfg.height, cfg.width);
    ds.pixels.reserve(n * ds.image_len());
    for _ in 0..n {
        let arena = &arenas[rng.gen_range(0..arenas.len())];
        let state = arena.spawn(rng)?;
        let obs = render(&state, &arena.spec, cfg);
        ds.push(&obs.pixels, Some(label_view(&state, &arena.spec, cfg)))?;
    }
    Ok(ds)
}
