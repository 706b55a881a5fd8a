//! Latent-space factorisation: a 2-D PCA projection and k-nearest-neighbour
//! label purity of the posterior means.

use curiolab_numcore::Tensor;

use crate::dataset::{Label, ObservationDataset};
use crate::error::{LabError, Result};
use crate::vae::VaeModel;

pub const PURITY_K: usize = 10;
const POWER_ITERS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentAnalysis {
    /// `n` rows of `(pc1, pc2)`.
    pub projection: Vec<[f64; 2]>,
    pub purity: f64,
    /// Eigenvalues of the two components.
    pub variances: [f64; 2],
}

/// Top eigenvector of a symmetric `d×d` matrix by power iteration.
fn power_iteration(c: &[f64], d: usize) -> (Vec<f64>, f64) {
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let mut w = vec![0.0; d];
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = c[i * d..(i + 1) * d].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (v, 0.0);
        }
        w.iter_mut().for_each(|x| *x /= norm);
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        lambda = norm;
        if delta < 1e-13 {
            break;
        }
    }
    // Largest-magnitude component positive.
    let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (v, lambda)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Projects the rows of `x` (`[n, d]`) onto the top two principal axes.
pub fn pca_2d(x: &Tensor) -> Result<(Vec<[f64; 2]>, [f64; 2])> {
    let (n, d) = (x.dim(0), x.dim(1));
    let mut mean = vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v / n as f64);
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r: Vec<f64> = x.row(i).iter().zip(&mean).map(|(v, m)| v - m).collect();
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += r[a] * r[b] / n as f64;
            }
        }
    }
    let trace: f64 = (0..d).map(|a| cov[a * d + a]).sum();
    if trace <= 1e-12 {
        return Err(LabError::DegenerateCovariance);
    }
    let (v1, l1) = power_iteration(&cov, d);
    for a in 0..d {
        for b in 0..d {
            cov[a * d + b] -= l1 * v1[a] * v1[b];
        }
    }
    let (v2, l2) = if d > 1 { power_iteration(&cov, d) } else { (vec![0.0], 0.0) };
    let proj = (0..n)
        .map(|i| {
            let r = x.row(i);
            let dot = |v: &[f64]| r.iter().zip(&mean).zip(v).map(|((x, m), e)| (x - m) * e).sum::<f64>();
            [dot(&v1), dot(&v2)]
        })
        .collect();
    Ok((proj, [l1, l2]))
}

/// Mean over items of the fraction of their `k` nearest neighbours (self
/// excluded, ties by index) that share their label.
pub fn knn_purity(x: &Tensor, labels: &[Label], k: usize) -> f64 {
    let n = x.dim(0);
    assert_eq!(n, labels.len(), "one label per row");
    assert!(n > k, "need more than k items");
    let mut total = 0.0;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist.clear();
        let a = x.row(i);
        for j in (0..n).filter(|&j| j != i) {
            let d: f64 = a.iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            dist.push((d, j));
        }
        dist.select_nth_unstable_by(k - 1, |p, q| p.partial_cmp(q).expect("finite distances"));
        let same = dist[..k].iter().filter(|&&(_, j)| labels[j] == labels[i]).count();
        total += same as f64 / k as f64;
    }
    total / n as f64
}

/// Posterior means of every dataset item, `[n, latent]`.
pub fn encode_dataset(model: &VaeModel, ds: &ObservationDataset) -> Result<Tensor> {
    let mut out = Vec::with_capacity(ds.len() * model.latent_dim);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(128) {
        out.extend_from_slice(model.encode(&ds.batch(chunk))?.mu.data());
    }
    Ok(Tensor::from_vec(&[ds.len(), model.latent_dim], out)?)
}

pub fn latent_analysis(model: &VaeModel, ds: &ObservationDataset) -> Result<LatentAnalysis> {
    let labels = ds.labels.as_ref().ok_or_else(|| LabError::Dataset("latent analysis needs labels".into()))?;
    if ds.len() < 10 || ds.len() <= PURITY_K {
        return Err(LabError::Dataset(format!("latent analysis needs more than {PURITY_K} items")));
    }
    let mu = encode_dataset(model, ds)?;
    let (projection, variances) = pca_2d(&mu)?;
    Ok(LatentAnalysis {
        projection,
        purity: knn_purity(&mu, labels, PURITY_K),
        variances,
    })
}
