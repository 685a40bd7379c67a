use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub value: Array2<T>,
    pub trainable: bool,
}

/// The trainable state of a model. Gradients live in a separate
/// [`Gradients`] buffer so a tape can borrow parameters immutably.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    tensors: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter `{name}`");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.tensors.push(Tensor {
            name,
            value,
            trainable: true,
        });
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<T> {
        &self.tensors[id.0].value
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.tensors[id.0].trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.tensors.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            grads: self.tensors.iter().map(|t| Array2::zeros(t.value.raw_dim())).collect(),
        }
    }

    pub fn to_checkpoint(&self) -> ParamCheckpoint {
        ParamCheckpoint {
            version: CHECKPOINT_VERSION,
            params: self
                .tensors
                .iter()
                .map(|t| {
                    (
                        t.name.clone(),
                        TensorRecord {
                            shape: [t.value.nrows(), t.value.ncols()],
                            values: t.value.iter().map(|v| v.as_f64()).collect(),
                            trainable: t.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Rebuilds a parameter set. Insertion order follows `order` when given so
    /// ids match those of a freshly initialized model.
    pub fn from_checkpoint(ck: &ParamCheckpoint, order: Option<&[String]>) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let names: Vec<String> = match order {
            Some(o) => o.to_vec(),
            None => ck.params.keys().cloned().collect(),
        };
        let mut out = ParamSet::new();
        for name in names {
            let rec = ck.params.get(&name).ok_or_else(|| Error::MissingParameter(name.clone()))?;
            let [r, c] = rec.shape;
            if r * c != rec.values.len() {
                return Err(Error::DimensionMismatch {
                    expected: r * c,
                    got: rec.values.len(),
                    context: format!("checkpoint tensor `{name}`"),
                });
            }
            if rec.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("checkpoint tensor `{name}`")));
            }
            let value = Array2::from_shape_vec((r, c), rec.values.iter().map(|&v| T::of(v)).collect())
                .expect("shape checked above");
            let id = out.add(name, value);
            out.set_trainable(id, rec.trainable);
        }
        Ok(out)
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.iter().map(|t| t.name.clone()).collect()
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Array2<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Array2<T>)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: T) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * k);
        }
    }

    pub fn fill_zero(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub shape: [usize; 2],
    /// Row-major.
    pub values: Vec<f64>,
    #[serde(default = "yes")]
    pub trainable: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamCheckpoint {
    pub version: u32,
    pub params: BTreeMap<String, TensorRecord>,
}
