//! Named parameter traversal shared by layers, optimisers and checkpoints.

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Ordered map of parameter name to tensor.
pub type ParamMap = IndexMap<String, Tensor>;

/// Anything that owns trainable tensors.
///
/// Visiting order must be stable: optimiser state and checkpoints are matched
/// by position and name respectively. A value of the same type doubles as the
/// gradient accumulator for itself.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));
}

impl Module for Tensor {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("", self)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("", self)
    }
}

impl<M: Module> Module for Vec<M> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, m) in self.iter().enumerate() {
            let prefix = i.to_string();
            visit_scoped(m, &prefix, f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, m) in self.iter_mut().enumerate() {
            let prefix = i.to_string();
            visit_scoped_mut(m, &prefix, f);
        }
    }
}

fn join(prefix: &str, name: &str) -> String {
    if name.is_empty() {
        prefix.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Visit `m`'s parameters with names prefixed by `prefix.`.
pub fn visit_scoped<M: Module + ?Sized>(m: &M, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
    m.visit(&mut |name, t| f(&join(prefix, name), t));
}

pub fn visit_scoped_mut<M: Module + ?Sized>(
    m: &mut M,
    prefix: &str,
    f: &mut dyn FnMut(&str, &mut Tensor),
) {
    m.visit_mut(&mut |name, t| f(&join(prefix, name), t));
}

pub fn param_count<M: Module + ?Sized>(m: &M) -> usize {
    let mut n = 0;
    m.visit(&mut |_, t| n += t.len());
    n
}

pub fn zero_grads<M: Module + ?Sized>(m: &mut M) {
    m.visit_mut(&mut |_, t| t.fill(0.0));
}

/// Clone of `m` with every parameter zeroed, for use as a gradient buffer.
pub fn zeros_like<M: Module + Clone>(m: &M) -> M {
    let mut g = m.clone();
    zero_grads(&mut g);
    g
}

pub fn global_norm<M: Module + ?Sized>(m: &M) -> f64 {
    let mut s = 0.0;
    m.visit(&mut |_, t| s += t.sum_squares());
    s.sqrt()
}

pub fn scale_all<M: Module + ?Sized>(m: &mut M, factor: f64) {
    m.visit_mut(&mut |_, t| t.scale(factor));
}

/// Rescale so the global L2 norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_global_norm<M: Module + ?Sized>(m: &mut M, max_norm: f64) -> f64 {
    let norm = global_norm(m);
    if norm > max_norm && norm > 0.0 {
        scale_all(m, max_norm / norm);
    }
    norm
}

pub fn all_finite<M: Module + ?Sized>(m: &M) -> bool {
    let mut ok = true;
    m.visit(&mut |_, t| ok &= t.is_finite());
    ok
}

pub fn to_param_map<M: Module + ?Sized>(m: &M) -> ParamMap {
    let mut map = ParamMap::new();
    m.visit(&mut |name, t| {
        map.insert(name.to_string(), t.clone());
    });
    map
}

/// Copy tensors from `map` into `m` by name. Every parameter of `m` must be
/// present with a matching shape; extra entries in `map` are ignored.
pub fn load_param_map<M: Module + ?Sized>(m: &mut M, map: &ParamMap) -> Result<()> {
    let mut err = None;
    m.visit_mut(&mut |name, t| {
        if err.is_some() {
            return;
        }
        match map.get(name) {
            Some(src) if src.shape() == t.shape() => {
                t.data_mut().copy_from_slice(src.data());
            }
            Some(src) => {
                err = Some(format!(
                    "parameter {name}: expected {:?}, found {:?}",
                    t.shape(),
                    src.shape()
                ))
            }
            None => err = Some(format!("parameter {name} missing")),
        }
    });
    match err {
        Some(e) => shape_err(e),
        None => Ok(()),
    }
}

/// SHA-256 over parameter names, shapes and the exact `f64` bit patterns.
pub fn checksum<M: Module + ?Sized>(m: &M) -> String {
    let mut h = Sha256::new();
    m.visit(&mut |name, t| {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    });
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Pair {
        a: Tensor,
        b: Tensor,
    }

    impl Module for Pair {
        fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
            f("a", &self.a);
            f("b", &self.b);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f("a", &mut self.a);
            f("b", &mut self.b);
        }
    }

    fn pair() -> Pair {
        Pair {
            a: Tensor::vector(vec![3.0, 0.0]),
            b: Tensor::vector(vec![4.0]),
        }
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut p = pair();
        let before = clip_global_norm(&mut p, 1.0);
        assert_eq!(before, 5.0);
        assert!((global_norm(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_map_round_trip_and_checksum() {
        let p = pair();
        let map = to_param_map(&p);
        assert_eq!(map.keys().collect::<Vec<_>>(), ["a", "b"]);
        let mut q = zeros_like(&p);
        assert_ne!(checksum(&p), checksum(&q));
        load_param_map(&mut q, &map).unwrap();
        assert_eq!(checksum(&p), checksum(&q));
    }

    #[test]
    fn load_rejects_missing_and_misshapen() {
        let mut p = pair();
        let mut map = to_param_map(&p);
        map.shift_remove("b");
        assert!(load_param_map(&mut p, &map).is_err());
        map.insert("b".into(), Tensor::vector(vec![1.0, 2.0]));
        assert!(load_param_map(&mut p, &map).is_err());
    }

    #[test]
    fn vec_modules_are_prefixed() {
        let v = vec![pair(), pair()];
        let names: Vec<_> = to_param_map(&v).keys().cloned().collect();
        assert_eq!(names, ["0.a", "0.b", "1.a", "1.b"]);
    }
}
