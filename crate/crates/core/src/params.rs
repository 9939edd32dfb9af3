//! Named parameter arrays shared by the models, the optimizer and checkpoints.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{Matrix, Tape, TensorId};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
}

/// Ordered list of named parameters. Order is part of the model layout and
/// is what the optimizer state is indexed by.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a `rows x cols` array drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn push_uniform<R: Rng>(&mut self, name: String, rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        self.push(name, Array2::from_shape_vec((rows, cols), data).expect("shape matches data"))
    }

    pub fn push(&mut self, name: String, value: Matrix) -> usize {
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.params.iter_mut().map(|p| &mut p.value)
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total number of stored floats.
    pub fn num_floats(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Places every parameter on the tape, trainable or not.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<TensorId> {
        self.params
            .iter()
            .map(|p| if trainable { tape.param(p.value.clone()) } else { tape.constant(p.value.clone()) })
            .collect()
    }

    pub fn to_stored(&self) -> BTreeMap<String, StoredArray> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), StoredArray::from(&p.value)))
            .collect()
    }

    /// Overwrites values from stored arrays, matching by name and shape.
    pub fn load_stored(&mut self, stored: &BTreeMap<String, StoredArray>) -> Result<(), String> {
        if stored.len() != self.params.len() {
            return Err(format!("expected {} arrays, found {}", self.params.len(), stored.len()));
        }
        for p in &mut self.params {
            let s = stored.get(&p.name).ok_or_else(|| format!("missing array '{}'", p.name))?;
            if (s.rows, s.cols) != p.value.dim() || s.data.len() != s.rows * s.cols {
                return Err(format!("array '{}' has shape {}x{}, expected {:?}", p.name, s.rows, s.cols, p.value.dim()));
            }
            p.value = Array2::from_shape_vec((s.rows, s.cols), s.data.clone()).expect("checked shape");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredArray {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for StoredArray {
    fn from(m: &Matrix) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.iter().copied().collect() }
    }
}
