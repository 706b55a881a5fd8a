//! Categorical distributions over logits.

use rand::Rng;

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

pub fn entropy(probs: &[f64], log_probs: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(log_probs)
        .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
        .sum::<f64>()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSample {
    pub action: usize,
    pub log_prob: f64,
    pub probs: Vec<f64>,
}

/// Draw one index by inverse CDF on a single uniform variate.
pub fn softmax_sample(logits: &[f64], rng: &mut impl Rng) -> CategoricalSample {
    let probs = softmax(logits);
    let log_probs = log_softmax(logits);
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut action = None;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            action = Some(i);
            break;
        }
    }
    // Rounding can leave cum slightly below 1; fall back to the last index
    // with positive mass.
    let action = action.unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).unwrap_or(0));
    CategoricalSample {
        action,
        log_prob: log_probs[action],
        probs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn equal_logits_are_uniform() {
        let p = softmax(&[0.3; 9]);
        for v in p {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
        let lp = log_softmax(&[1000.0, 0.0]);
        assert_eq!(lp[0], 0.0);
        assert_eq!(lp[1], -1000.0);
    }

    #[test]
    fn empirical_frequencies_within_three_sigma() {
        let logits = [0.5, -1.0, 2.0, 0.0];
        let probs = softmax(&logits);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let s = softmax_sample(&logits, &mut rng);
            assert_eq!(s.log_prob, log_softmax(&logits)[s.action]);
            counts[s.action] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?} {probs:?}");
        }
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
