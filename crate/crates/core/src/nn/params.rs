//! Named parameter tensors and their initializers.

use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::rng::sample_normal;

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> usize {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter `{name}`"
        );
        let slot = self.tensors.len();
        self.index.insert(name.to_string(), slot);
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        slot
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn slot(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn get(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn by_name(&self, name: &str) -> &Tensor {
        self.get(self.slot(name))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn total_entries(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

/// Per-parameter gradient buffer aligned with a store's slots.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub tensors: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> ParamGrads {
        ParamGrads {
            tensors: store
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn accumulate(&mut self, slot: usize, grad: &Tensor) {
        self.tensors[slot].add_assign(grad);
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= factor;
            }
        }
    }
}

/// Glorot-uniform weight matrix.
pub fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

/// Standard-normal embedding rows.
pub fn normal_init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| sample_normal(rng)).collect();
    Tensor::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn store_roundtrip() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(1.0));
        let b = store.add("b", Tensor::zeros(2, 3));
        assert_eq!(store.slot("a"), a);
        assert_eq!(store.slot("b"), b);
        assert_eq!(store.name(b), "b");
        assert_eq!(store.total_entries(), 7);
    }

    #[test]
    fn xavier_respects_bound() {
        let mut rng = stream_rng(0, "init");
        let t = xavier_uniform(30, 20, &mut rng);
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(t.data.iter().all(|v| v.abs() <= bound));
    }
}
