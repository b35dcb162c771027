use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::{Gradients, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
}

/// Ordered collection of uniquely named parameters. The order is the
/// registration order and is what [`ParamSet::bind`] follows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Weights drawn from `N(0, std²)`.
pub fn normal_init<T: Scalar>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::randn(shape, std, rng)
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Registers a parameter and returns its position.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::arg(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter { name, value, trainable });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    /// Places every parameter on the tape; trainable ones require grad.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<Vec<Var>> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), p.trainable))
            .collect()
    }

    /// Places every parameter on the tape as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Result<Vec<Var>> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Gradients aligned with the parameters, for vars from [`Self::bind`].
    pub fn collect_grads(&self, grads: &mut Gradients<T>, vars: &[Var]) -> Vec<Option<Tensor<T>>> {
        vars.iter().map(|&v| grads.take(v)).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Overwrites values by name from `other`, which must hold exactly the
    /// same names and shapes.
    pub fn load_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::shape(
                "load_from",
                format!("{} parameters, got {}", self.len(), other.len()),
            ));
        }
        for p in &mut self.params {
            let src = other
                .get(&p.name)
                .ok_or_else(|| Error::arg(format!("missing parameter {:?}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::shape(
                    "load_from",
                    format!("{}: {:?} vs {:?}", p.name, p.value.shape(), src.value.shape()),
                ));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}
