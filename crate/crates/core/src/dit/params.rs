//! Named, seeded trainable parameters.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use candle_core::{Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::seed::SeedStreams;
use crate::tensor::device;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    Uniform(f64),
}

/// Owns every trainable tensor of a model, keyed by its stable public name.
///
/// Each parameter's initial values are drawn from its own stream derived from
/// `(seed, name)`, so adding a module never perturbs the initialisation of
/// the others.
pub struct ParamStore {
    seeds: SeedStreams,
    vars: Mutex<BTreeMap<String, Var>>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seeds: SeedStreams::new(seed),
            vars: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn root(&self) -> ParamBuilder<'_> {
        ParamBuilder {
            store: self,
            prefix: String::new(),
        }
    }

    pub fn vars(&self) -> BTreeMap<String, Var> {
        self.vars.lock().expect("param store poisoned").clone()
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.lock().expect("param store poisoned").keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.lock().expect("param store poisoned").get(name).cloned()
    }

    pub fn tensors(&self) -> HashMap<String, Tensor> {
        self.vars
            .lock()
            .expect("param store poisoned")
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.vars
            .lock()
            .expect("param store poisoned")
            .values()
            .map(|v| v.elem_count())
            .sum()
    }

    fn create(&self, name: String, shape: &[usize], init: Init) -> Result<Tensor> {
        let mut vars = self.vars.lock().expect("param store poisoned");
        if vars.contains_key(&name) {
            return Err(Error::Contract(format!("parameter `{name}` registered twice")));
        }
        let count: usize = shape.iter().product();
        let mut rng = self.seeds.rng(&name);
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; count],
            Init::Ones => vec![1.0; count],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
                (0..count).map(|_| dist.sample(&mut rng)).collect()
            }
            Init::Uniform(bound) => (0..count).map(|_| rng.random_range(-bound..=bound)).collect(),
        };
        let var = Var::from_tensor(&Tensor::from_vec(values, shape, &device())?)?;
        let tensor = var.as_tensor().clone();
        vars.insert(name, var);
        Ok(tensor)
    }
}

/// Prefix-scoped view of a [`ParamStore`] used while constructing modules.
#[derive(Clone)]
pub struct ParamBuilder<'a> {
    store: &'a ParamStore,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    pub fn pp(&self, name: impl AsRef<str>) -> ParamBuilder<'a> {
        let prefix = if self.prefix.is_empty() {
            name.as_ref().to_string()
        } else {
            format!("{}.{}", self.prefix, name.as_ref())
        };
        ParamBuilder {
            store: self.store,
            prefix,
        }
    }

    pub fn get(&self, shape: &[usize], name: &str, init: Init) -> Result<Tensor> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        self.store.create(full, shape, init)
    }
}
