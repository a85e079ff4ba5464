use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam with bias correction. Moments are kept per parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: BTreeMap<String, Tensor<f32>>,
    pub v: BTreeMap<String, Tensor<f32>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update of every named parameter. Nothing changes if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor<f32>>,
        grads: &[(String, Tensor<f32>)],
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Missing(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient of `{name}` is {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteValue(format!("gradient of `{name}`")));
            }
        }
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let it = p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut());
            for (((w, m), v), &g) in it.zip(g.data()) {
                let g = g as f64;
                let mn = self.beta1 * *m as f64 + (1.0 - self.beta1) * g;
                let vn = self.beta2 * *v as f64 + (1.0 - self.beta2) * g * g;
                *m = mn as f32;
                *v = vn as f32;
                let step = self.lr * (mn / c1) / (libm::sqrt(vn / c2) + self.eps);
                *w = (*w as f64 - step) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one(v: f32) -> BTreeMap<String, Tensor<f32>> {
        BTreeMap::from([("w".into(), Tensor::scalar(v))])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = one(0.7);
        let mut a = Adam::new(0.1, 0.0, 0.999, 1e-8);
        a.step(&mut p, &[("w".into(), Tensor::scalar(0.0))])
            .unwrap();
        assert_eq!(p["w"].item(), 0.7);
    }

    #[test]
    fn first_step_is_learning_rate_sized() {
        let mut p = one(0.0);
        let mut a = Adam::new(0.001, 0.0, 0.999, 1e-8);
        a.step(&mut p, &[("w".into(), Tensor::scalar(4.0))])
            .unwrap();
        assert!((p["w"].item() as f64 + 0.001).abs() < 1e-9);
    }

    #[test]
    fn descends_a_parabola() {
        let mut p = one(1.0);
        let mut a = Adam::new(0.001, 0.0, 0.999, 1e-8);
        let mut prev = 1.0f32;
        for _ in 0..100 {
            let w = p["w"].item();
            a.step(&mut p, &[("w".into(), Tensor::scalar(2.0 * w))])
                .unwrap();
            let now = p["w"].item().abs();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = one(1.0);
        let mut a = Adam::new(0.1, 0.0, 0.999, 1e-8);
        let bad = vec![("w".into(), Tensor::scalar(f32::NAN))];
        assert!(a.step(&mut p, &bad).is_err());
        assert_eq!((p["w"].item(), a.t), (1.0, 0));
    }
}
