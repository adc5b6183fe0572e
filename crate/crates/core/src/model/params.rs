//! Named parameter matrices with deterministic seeded initialization.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// All learnable state of a model, keyed by dotted path. Values are stored
/// in single precision; forward passes upcast to double precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Array2<f32>>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    /// Insert a matrix; panics on duplicate names (always a programming error).
    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f32>) {
        let name = name.into();
        let prev = self.params.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    /// Fetch by name; panics if absent (names are internal and fixed).
    pub fn get(&self, name: &str) -> &Array2<f32> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f32> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f32>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f32>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all matrices.
    pub fn n_scalars(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    /// Scalar count over names accepted by the filter.
    pub fn n_scalars_matching(&self, mut filter: impl FnMut(&str) -> bool) -> usize {
        self.params
            .iter()
            .filter(|(k, _)| filter(k))
            .map(|(_, v)| v.len())
            .sum()
    }
}

/// Uniform init in `[-limit, limit]`.
pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit) as f32)
}

/// Glorot-style uniform init scaled by fan-in and fan-out.
pub fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f32> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, limit)
}

pub fn zeros(rows: usize, cols: usize) -> Array2<f32> {
    Array2::zeros((rows, cols))
}

pub fn ones(rows: usize, cols: usize) -> Array2<f32> {
    Array2::ones((rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn insert_get_and_counts() {
        let mut p = ParamStore::new();
        p.insert("a.w", zeros(2, 3));
        p.insert("b.w", ones(1, 4));
        assert_eq!(p.n_scalars(), 10);
        assert_eq!(p.n_scalars_matching(|n| n.starts_with("a.")), 6);
        assert_eq!(p.names().collect::<Vec<_>>(), vec!["a.w", "b.w"]);
        assert_eq!(p.get("b.w")[[0, 0]], 1.0);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_insert_panics() {
        let mut p = ParamStore::new();
        p.insert("x", zeros(1, 1));
        p.insert("x", zeros(1, 1));
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(glorot(&mut r1, 4, 5), glorot(&mut r2, 4, 5));
        let mut r3 = ChaCha8Rng::seed_from_u64(10);
        assert_ne!(glorot(&mut r1, 4, 5), glorot(&mut r3, 4, 5));
    }

    #[test]
    fn glorot_respects_fan_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot(&mut rng, 30, 20);
        let limit = (6.0_f64 / 50.0).sqrt() as f32;
        assert!(w.iter().all(|v| v.abs() <= limit));
    }
}
