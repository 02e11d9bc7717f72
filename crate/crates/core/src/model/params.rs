use std::collections::BTreeMap;

use super::ModelError;
use crate::engine::{adam_step, sgd_step, AdamConfig, AdamMoments, Gradients, Tape, Tensor, Var};
use crate::rng::{label, path_id, Stream};

/// Which weights take part in federated synchronization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    /// Shared backbone and main classifier; averaged across sites.
    Backbone,
    /// Site-local auxiliary head; never leaves its site.
    Aux,
}

impl ParamGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Backbone => "backbone",
            ParamGroup::Aux => "aux",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "backbone" => Some(ParamGroup::Backbone),
            "aux" => Some(ParamGroup::Aux),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Optimizer::Sgd),
            "adam" => Some(Optimizer::Adam),
            _ => None,
        }
    }
}

/// Per-parameter moment estimates; stays empty under SGD.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    moments: BTreeMap<String, AdamMoments>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub group: ParamGroup,
    pub value: Tensor,
}

/// Named parameters, iterated in lexicographic path order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

/// Gradients keyed by parameter path.
pub type GradMap = BTreeMap<String, Tensor>;

/// Tape handles of a bound [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var, ModelError> {
        self.vars.get(name).copied().ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Collects the gradient of every bound parameter.
    pub fn gradients(&self, grads: &Gradients) -> GradMap {
        self.vars
            .iter()
            .filter_map(|(name, &v)| grads.wrt(v).map(|g| (name.clone(), g.clone())))
            .collect()
    }
}

/// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`, drawn from a stream keyed by
/// the parameter path so that the result does not depend on creation order.
pub fn init_uniform(shape: &[usize], fan_in: usize, seed: u64, stream_label: u64, name: &str) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut s = Stream::new(seed, &[stream_label, path_id(&name.bytes().map(u64::from).collect::<Vec<_>>())]);
    let n = shape.iter().product();
    let data = (0..n).map(|_| s.uniform_in(-bound, bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("non-empty parameter shape")
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) {
        self.entries.insert(name.into(), Param { group, value });
    }

    /// Adds a seeded `[fan_in, fan_out]` weight and `[fan_out]` bias.
    pub fn insert_linear(&mut self, prefix: &str, group: ParamGroup, fan_in: usize, fan_out: usize, bias: bool, seed: u64) {
        let stream = match group {
            ParamGroup::Backbone => label::INIT,
            ParamGroup::Aux => label::AUX_INIT,
        };
        let w = format!("{prefix}.weight");
        self.insert(w.clone(), group, init_uniform(&[fan_in, fan_out], fan_in, seed, stream, &w));
        if bias {
            let b = format!("{prefix}.bias");
            self.insert(b.clone(), group, init_uniform(&[fan_out], fan_in, seed, stream, &b));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|p| &mut p.value)
    }

    pub fn group_of(&self, name: &str) -> Option<ParamGroup> {
        self.entries.get(name).map(|p| p.group)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self, group: ParamGroup) -> Vec<&str> {
        self.iter().filter(|(_, p)| p.group == group).map(|(k, _)| k).collect()
    }

    pub fn numel(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    /// Copy of the entries that belong to `group`.
    pub fn subset(&self, group: ParamGroup) -> ParamStore {
        let entries = self.entries.iter().filter(|(_, p)| p.group == group).map(|(k, p)| (k.clone(), p.clone())).collect();
        ParamStore { entries }
    }

    /// Inserts or overwrites every entry of `other`.
    pub fn extend_from(&mut self, other: &ParamStore) {
        for (k, p) in &other.entries {
            self.entries.insert(k.clone(), p.clone());
        }
    }

    /// Overwrites the values of `other`'s entries, which must already exist
    /// with the same shapes.
    pub fn load(&mut self, other: &ParamStore) -> Result<(), ModelError> {
        for (k, p) in &other.entries {
            let slot = self.entries.get_mut(k).ok_or_else(|| ModelError::MissingParam(k.clone()))?;
            if slot.value.shape() != p.value.shape() {
                return Err(ModelError::ParamShape {
                    name: k.clone(),
                    expected: slot.value.shape().to_vec(),
                    found: p.value.shape().to_vec(),
                });
            }
            slot.value = p.value.clone();
        }
        Ok(())
    }

    /// Registers every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<Bound, ModelError> {
        let mut vars = BTreeMap::new();
        for (k, p) in &self.entries {
            vars.insert(k.clone(), tape.leaf(p.value.clone(), requires_grad)?);
        }
        Ok(Bound { vars })
    }

    /// One SGD step over every parameter that has a gradient, in path order.
    /// Parameters without a gradient entry are left untouched.
    pub fn sgd(&mut self, grads: &GradMap, lr: f64) -> Result<(), ModelError> {
        for (k, g) in grads {
            let p = self.entries.get_mut(k).ok_or_else(|| ModelError::MissingParam(k.clone()))?;
            sgd_step(std::slice::from_mut(&mut p.value), std::slice::from_ref(g), lr)?;
        }
        Ok(())
    }
}

impl ParamStore {
    /// One optimizer step over every parameter that has a gradient.
    pub fn step(&mut self, grads: &GradMap, lr: f64, optimizer: Optimizer, state: &mut OptimizerState) -> Result<(), ModelError> {
        match optimizer {
            Optimizer::Sgd => self.sgd(grads, lr),
            Optimizer::Adam => {
                for (k, g) in grads {
                    let p = self.entries.get_mut(k).ok_or_else(|| ModelError::MissingParam(k.clone()))?;
                    let m = state.moments.entry(k.clone()).or_insert_with(|| AdamMoments::zeros(p.value.shape()));
                    adam_step(&mut p.value, g, m, lr, AdamConfig::default())?;
                }
                Ok(())
            }
        }
    }
}

/// `acc += other`, entry by entry; missing entries in `acc` are inserted.
pub fn accumulate(acc: &mut GradMap, other: &GradMap) {
    for (k, g) in other {
        match acc.get_mut(k) {
            Some(a) => a.data_mut().iter_mut().zip(g.data()).for_each(|(a, g)| *a += g),
            None => {
                acc.insert(k.clone(), g.clone());
            }
        }
    }
}
