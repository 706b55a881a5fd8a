//! Central-difference gradient checker.

use rand::seq::index::sample;
use rand::SeedableRng;

use crate::module::Module;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many randomly chosen entries per tensor.
    pub max_per_tensor: Option<usize>,
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
    /// Also difference at `step / 10`; entries where the two estimates
    /// disagree by more than ten times the tolerance straddle a kink and
    /// are skipped.
    pub kink_guard: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_per_tensor: Some(64),
            floor: 1e-6,
            seed: 0,
            kink_guard: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    /// Entries dropped by the kink guard.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < self.tolerance && self.skipped * 100 <= self.checked + self.skipped
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compare `analytic` (a gradient buffer shaped like `params`) against
/// central differences of `loss` evaluated around `params`.
pub fn grad_check<M, F>(
    params: &M,
    analytic: &M,
    mut loss: F,
    tolerance: f64,
    opts: &GradCheckOptions,
) -> GradCheckReport
where
    M: Module + Clone,
    F: FnMut(&M) -> f64,
{
    let mut grads: Vec<(String, Tensor)> = Vec::new();
    analytic.visit(&mut |name, t| grads.push((name.to_string(), t.clone())));

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
        skipped: 0,
        tolerance,
    };
    let mut probe = params.clone();
    for (ti, (name, g)) in grads.iter().enumerate() {
        let indices: Vec<usize> = match opts.max_per_tensor {
            Some(k) if k < g.len() => {
                let mut v = sample(&mut rng, g.len(), k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..g.len()).collect(),
        };
        for idx in indices {
            let original = nth_value(&probe, ti, idx);
            let mut central = |h: f64| {
                set_nth(&mut probe, ti, idx, original + h);
                let plus = loss(&probe);
                set_nth(&mut probe, ti, idx, original - h);
                let minus = loss(&probe);
                set_nth(&mut probe, ti, idx, original);
                (plus - minus) / (2.0 * h)
            };
            let numeric = central(opts.step);
            if opts.kink_guard && relative_error(numeric, central(opts.step / 10.0), opts.floor) > 10.0 * tolerance {
                report.skipped += 1;
                continue;
            }
            let a = g.data()[idx];
            let err = relative_error(a, numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_err || err.is_nan() {
                report.max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = Some((name.clone(), idx));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    report
}

fn nth_value<M: Module>(m: &M, tensor: usize, idx: usize) -> f64 {
    let mut i = 0;
    let mut out = 0.0;
    m.visit(&mut |_, t| {
        if i == tensor {
            out = t.data()[idx];
        }
        i += 1;
    });
    out
}

fn set_nth<M: Module>(m: &mut M, tensor: usize, idx: usize, value: f64) {
    let mut i = 0;
    m.visit_mut(&mut |_, t| {
        if i == tensor {
            t.data_mut()[idx] = value;
        }
        i += 1;
    });
}
