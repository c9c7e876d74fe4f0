use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub trait Optimizer {
    /// Applies one update from the gradients currently held in `store`.
    fn step(&mut self, store: &mut ParamStore) -> Result<()>;
}

fn check_grads(store: &ParamStore) -> Result<()> {
    for p in store.iter() {
        if !p.grad.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
    }
    Ok(())
}

/// Plain gradient descent.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        check_grads(store)?;
        for p in store.iter_mut() {
            for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                *w -= self.lr * g;
            }
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        check_grads(store)?;
        if self.m.len() != store.len() {
            self.m = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (value, grad) = (p.value.data_mut(), p.grad.data());
            for i in 0..value.len() {
                let g = grad[i];
                let mi = &mut m.data_mut()[i];
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                let vi = &mut v.data_mut()[i];
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = m.data()[i] / bc1;
                let v_hat = v.data()[i] / bc2;
                value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tape;

    fn quadratic_grad(store: &mut ParamStore) {
        store.zero_grads();
        let id = store.ids().next().unwrap();
        let w = store.get(id).value.data()[0];
        store.get_mut(id).grad.data_mut()[0] = 2.0 * (w - 3.0);
    }

    #[test]
    fn sgd_zero_lr_is_noop() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, -2.0]));
        store.get_mut(id).grad = Tensor::vector(vec![5.0, 7.0]);
        Sgd::new(0.0).step(&mut store).unwrap();
        assert_eq!(store.get(id).value.data(), &[1.0, -2.0]);
    }

    #[test]
    fn sgd_unit_lr_subtracts_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, -2.0]));
        let mut tape = Tape::new();
        let v = tape.param(&store, id);
        let loss = tape.sum(v).unwrap();
        tape.backward(loss, &mut store).unwrap();
        Sgd::new(1.0).step(&mut store).unwrap();
        assert_eq!(store.get(id).value.data(), &[0.0, -3.0]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.0));
        let mut adam = Adam::new(1e-1);
        for _ in 0..500 {
            quadratic_grad(&mut store);
            adam.step(&mut store).unwrap();
        }
        let w = store.iter().next().unwrap().value.data()[0];
        assert!((w - 3.0).abs() < 1e-3, "w = {w}");
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(0.0));
        store.get_mut(id).grad.data_mut()[0] = f64::NAN;
        assert!(Sgd::new(0.1).step(&mut store).is_err());
        assert!(Adam::new(0.1).step(&mut store).is_err());
    }
}
