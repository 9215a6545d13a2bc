//! Row-sparse gradients and a lazy Adam that only touches rows present in
//! the gradient.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Gradient rows keyed by id, kept in first-touch order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    width: usize,
    index: HashMap<u32, usize>,
    ids: Vec<u32>,
    data: Vec<f64>,
}

impl SparseRows {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            index: HashMap::new(),
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn row_mut(&mut self, id: u32) -> &mut [f64] {
        let slot = match self.index.get(&id) {
            Some(&s) => s,
            None => {
                let s = self.ids.len();
                self.index.insert(id, s);
                self.ids.push(id);
                self.data.resize(self.data.len() + self.width, 0.0);
                s
            }
        };
        &mut self.data[slot * self.width..(slot + 1) * self.width]
    }

    pub fn get(&self, id: u32) -> Option<&[f64]> {
        self.index
            .get(&id)
            .map(|&s| &self.data[s * self.width..(s + 1) * self.width])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.width.max(1)))
    }

    /// Adds every row of `other` into `self`.
    pub fn merge(&mut self, other: &SparseRows) {
        debug_assert_eq!(self.width, other.width);
        for (id, row) in other.iter() {
            self.row_mut(id).iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers for one dense table updated row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdam {
    cfg: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl SparseAdam {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Applies one update to the rows in `grad`; `step` starts at 1 and
    /// drives bias correction.
    pub fn step(&mut self, params: &mut [f64], grad: &SparseRows, step: u64) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let t = step.max(1) as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let w = grad.width();
        for (id, g_row) in grad.iter() {
            let base = id as usize * w;
            for (k, &g) in g_row.iter().enumerate() {
                let i = base + k;
                let m = beta1 * self.first[i] + (1.0 - beta1) * g;
                let v = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                self.first[i] = m;
                self.second[i] = v;
                params[i] -= learning_rate * (m / c1) / ((v / c2).sqrt() + epsilon);
            }
        }
    }
}
