use std::collections::HashMap;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use voxstyle_tensor::{Array, Scalar, Tape, Tensor};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Normal(f64),
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Ordered collection of named parameter arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T: Scalar> {
    names: Vec<String>,
    values: Vec<Arc<Array<T>>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    /// Draws every parameter from its own random stream; `salt` separates
    /// networks initialized from the same seed.
    pub fn init(specs: &[ParamSpec], seed: u64, salt: u64) -> Self {
        let mut set = Self::default();
        for (i, spec) in specs.iter().enumerate() {
            let n: usize = spec.shape.iter().product();
            let data: Vec<T> = match spec.init {
                Init::Const(v) => vec![T::of(v); n],
                Init::Normal(std) => {
                    let mut rng = stream(seed, Purpose::Init, (salt << 24) | i as u64);
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            T::of(z * std)
                        })
                        .collect()
                }
            };
            set.push(&spec.name, Array::from_vec(&spec.shape, data).expect("spec shape"))
                .expect("unique spec names");
        }
        set
    }

    pub fn push(&mut self, name: &str, value: Array<T>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name:?}")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.values.push(Arc::new(value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Arc<Array<T>>] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array<T>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter().map(|v| v.as_ref()))
    }

    pub fn get(&self, name: &str) -> Option<&Array<T>> {
        self.index.get(name).map(|&i| self.values[i].as_ref())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array<T>> {
        let i = *self.index.get(name)?;
        Some(Arc::make_mut(&mut self.values[i]))
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Array<T> {
        Arc::make_mut(&mut self.values[i])
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Arc::new(v.cast::<U>())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(&Array<T>) -> Array<T>) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Arc::new(f(v))).collect(),
            index: self.index.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Checks that names and shapes agree exactly with `specs`.
    pub fn check_specs(&self, specs: &[ParamSpec]) -> Result<()> {
        for name in &self.names {
            if !specs.iter().any(|s| &s.name == name) {
                return Err(Error::UnknownTensor(name.clone()));
            }
        }
        for spec in specs {
            let v = self.get(&spec.name).ok_or_else(|| Error::MissingTensor(spec.name.clone()))?;
            if v.shape() != spec.shape.as_slice() {
                return Err(Error::TensorDims {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: v.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Wraps every parameter as a tensor: tape leaves when `tape` is given,
    /// constants otherwise. Values are shared, not copied.
    pub fn bind(&self, tape: Option<&Tape<T>>) -> Bound<T> {
        let tensors = self
            .values
            .iter()
            .map(|v| match tape {
                Some(t) => t.leaf_shared(v.clone()),
                None => Tensor::constant_shared(v.clone()),
            })
            .collect();
        Bound {
            names: self.names.clone(),
            tensors,
            index: self.index.clone(),
        }
    }

    /// Parameter set holding `tensors`' values under this set's names.
    pub fn with_values(&self, values: Vec<Array<T>>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!("expected {} arrays, got {}", self.len(), values.len())));
        }
        for (name, (old, new)) in self.names.iter().zip(self.values.iter().zip(&values)) {
            if old.shape() != new.shape() {
                return Err(Error::TensorDims {
                    name: name.clone(),
                    expected: old.shape().to_vec(),
                    found: new.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            names: self.names.clone(),
            values: values.into_iter().map(Arc::new).collect(),
            index: self.index.clone(),
        })
    }
}

/// Parameters wrapped as tensors for one forward pass.
#[derive(Clone)]
pub struct Bound<T: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Bound<T> {
    /// Binds arbitrary tensors (for example finite-difference probes) under
    /// the given parameter names.
    pub fn from_tensors(names: &[String], tensors: Vec<Tensor<T>>) -> Result<Self> {
        if names.len() != tensors.len() {
            return Err(Error::InvalidArgument(format!("{} names for {} tensors", names.len(), tensors.len())));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate parameter {n:?}")));
            }
        }
        Ok(Self {
            names: names.to_vec(),
            tensors,
            index,
        })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i])
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
