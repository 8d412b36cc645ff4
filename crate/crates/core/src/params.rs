//! Named parameter storage shared by every trainable layer.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Which model component a parameter belongs to. Used by ablations and by
/// the optimizer to decide what it may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Encoder,
    Estimator,
    VadHead,
    PreDecoderNorm,
    Decoder,
    Projection,
    StanceHead,
    SentimentHead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub group: Group,
    /// Frozen parameters (pretrained adapter weights) are never updated.
    pub frozen: bool,
    pub value: Matrix,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<NamedParam>,
}

/// How a freshly registered tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Gaussian with standard deviation `std`.
    Normal(f64),
    /// Xavier-style normal: `std = sqrt(2 / (fan_in + fan_out))`.
    Xavier,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        group: Group,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let value = match init {
            Init::Zeros => Matrix::zeros(rows, cols),
            Init::Ones => Matrix::filled(rows, cols, 1.0),
            Init::Normal(std) => normal_matrix(rows, cols, std, rng),
            Init::Xavier => {
                let std = libm::sqrt(2.0 / (rows + cols).max(1) as f64);
                normal_matrix(rows, cols, std, rng)
            }
        };
        self.insert(name, group, false, value)
    }

    pub fn insert(&mut self, name: impl Into<String>, group: Group, frozen: bool, value: Matrix) -> ParamId {
        self.params.push(NamedParam { name: name.into(), group, frozen, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn get(&self, id: ParamId) -> &NamedParam {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &NamedParam)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, group: Group) -> impl Iterator<Item = ParamId> + '_ {
        self.iter().filter(move |(_, p)| p.group == group).map(|(id, _)| id)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            e * std
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}
