//! Trainable parameters: value + accumulated gradient + ADAM moments.

use super::{Real, Tensor2D};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor2D<T>,
    pub grad: Tensor2D<T>,
    pub adam_m: Tensor2D<T>,
    pub adam_v: Tensor2D<T>,
    pub step_count: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor2D<T>) -> Self {
        let (r, c) = value.shape();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor2D::zeros(r, c),
            adam_m: Tensor2D::zeros(r, c),
            adam_v: Tensor2D::zeros(r, c),
            step_count: 0,
        }
    }
}

/// Stable handle into a `ParamSet`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of named parameters. Iteration order is insertion
/// order, which keeps optimizer sweeps and checkpoints deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
    by_name: BTreeMap<String, usize>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            params: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2D<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter::new(name, value));
        ParamId(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// One ADAM step on every parameter; gradients are zeroed afterwards.
    pub fn adam_step_all(&mut self, cfg: &AdamConfig) {
        for p in &mut self.params {
            adam_step(p, cfg);
        }
    }

    /// Largest absolute gradient entry over the whole set.
    pub fn grad_max_abs(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.max_abs().as_f64())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 4e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Validation(format!("{name} {b} must lie in [0, 1)")));
            }
        }
        if self.eps <= 0.0 || !self.eps.is_finite() {
            return Err(Error::Validation(format!(
                "eps {} must be positive",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Bias-corrected ADAM update on one parameter. Consumes and zeroes the
/// accumulated gradient. Moment math runs in f64.
pub fn adam_step<T: Real>(p: &mut Parameter<T>, cfg: &AdamConfig) {
    p.step_count += 1;
    let t = p.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..p.value.len() {
        let g = p.grad.data()[i].as_f64();
        let m = cfg.beta1 * p.adam_m.data()[i].as_f64() + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * p.adam_v.data()[i].as_f64() + (1.0 - cfg.beta2) * g * g;
        p.adam_m.data_mut()[i] = T::from_f64(m);
        p.adam_v.data_mut()[i] = T::from_f64(v);
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        let x = p.value.data()[i].as_f64();
        p.value.data_mut()[i] = T::from_f64(x - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps));
        p.grad.data_mut()[i] = T::zero();
    }
}
