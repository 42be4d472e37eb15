//! First-order optimizers over a [`Params`] store.

use crate::autodiff::Params;
use crate::linalg::C64;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam { lr, ..Self::default() }
    }

    /// One bias-corrected Adam update using the accumulated gradients. Real
    /// and imaginary parts are updated as independent coordinates.
    pub fn step(&self, params: &mut Params) {
        params.step += 1;
        let t = params.step as f64;
        let c1 = 1.0 - math::pow(self.beta1, t);
        let c2 = 1.0 - math::pow(self.beta2, t);
        for p in params.entries.iter_mut().filter(|p| p.trainable) {
            let real = p.value.is_real();
            let g = p.grad.data();
            let m = p.m.data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = *mi * self.beta1 + gi * (1.0 - self.beta1);
            }
            let v = p.v.data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                vi.re = self.beta2 * vi.re + (1.0 - self.beta2) * gi.re * gi.re;
                vi.im = self.beta2 * vi.im + (1.0 - self.beta2) * gi.im * gi.im;
            }
            let (m, v) = (p.m.data(), p.v.data());
            for ((x, mi), vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                let dr = self.lr * (mi.re / c1) / (math::sqrt(vi.re / c2) + self.eps);
                let di = if real {
                    0.0
                } else {
                    self.lr * (mi.im / c1) / (math::sqrt(vi.im / c2) + self.eps)
                };
                *x -= C64::new(dr, di);
            }
        }
    }
}

/// Plain gradient descent `x <- x - lr * g`.
pub fn sgd_step(params: &mut Params, lr: f64) {
    params.step += 1;
    for p in params.entries.iter_mut().filter(|p| p.trainable) {
        let g = p.grad.data();
        for (x, gi) in p.value.data_mut().iter_mut().zip(g) {
            *x -= gi * lr;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{CTensor, Graph, Mode};

    fn quadratic_loss(params: &mut Params) -> f64 {
        // L = Σ (x - 3)^2 over a real vector
        let id = params.ids().next().unwrap();
        let mut g = Graph::new(Mode::Train, 0);
        let x = g.param(params, id);
        let t = g.add_scalar(x, -3.0).unwrap();
        let sq = g.abs2(t).unwrap();
        let loss = g.sum_all(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        params.zero_grad();
        grads.accumulate_into(&g, params);
        g.value(loss).item()
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        let mut p = Params::new();
        p.add("x", CTensor::from_real(&[3], alloc::vec![0.0, 1.0, -2.0]).unwrap());
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            last = quadratic_loss(&mut p);
            sgd_step(&mut p, 0.1);
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Params::new();
        p.add("x", CTensor::from_real(&[2], alloc::vec![0.0, 10.0]).unwrap());
        quadratic_loss(&mut p);
        Adam::with_lr(0.01).step(&mut p);
        let x = p.value(p.ids().next().unwrap()).re();
        assert!((x[0] - 0.01).abs() < 1e-9);
        assert!((x[1] - 9.99).abs() < 1e-9);
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut p = Params::new();
        p.add("x", CTensor::from_real(&[1], alloc::vec![0.0]).unwrap());
        let b = p.add_buffer("scale", CTensor::scalar(2.0));
        quadratic_loss(&mut p);
        Adam::default().step(&mut p);
        assert_eq!(p.value(b).item(), 2.0);
    }

    #[test]
    fn sgd_single_step_example() {
        let mut p = Params::new();
        let id = p.add("x", CTensor::scalar(1.0));
        p.accumulate_grad(id, &CTensor::scalar(2.0));
        sgd_step(&mut p, 0.1);
        assert!((p.value(id).item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Params::new();
        let id = p.add("x", CTensor::from_real(&[2], alloc::vec![1.5, -0.5]).unwrap());
        let before = p.value(id).clone();
        sgd_step(&mut p, 0.1);
        Adam::default().step(&mut p);
        assert_eq!(p.value(id), &before);
    }

    #[test]
    fn adam_reaches_quadratic_minimum() {
        let mut p = Params::new();
        let id = p.add("x", CTensor::from_real(&[3], alloc::vec![2.0, 3.5, 2.9]).unwrap());
        let adam = Adam::with_lr(0.05);
        for _ in 0..200 {
            quadratic_loss(&mut p);
            adam.step(&mut p);
        }
        let dist: f64 = p.value(id).re().iter().map(|x| (x - 3.0) * (x - 3.0)).sum::<f64>();
        assert!(dist.sqrt() < 1e-3, "{dist}");
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = Params::new();
            p.add("x", CTensor::from_real(&[2], alloc::vec![0.3, -1.0]).unwrap());
            for _ in 0..10 {
                quadratic_loss(&mut p);
                Adam::default().step(&mut p);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
