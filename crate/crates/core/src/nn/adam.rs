use ndarray::ArrayD;

use super::layers::Param;
use crate::Scalar;

/// Adam with bias correction. Moment buffers are matched to parameters by position.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    steps: i32,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr: T::of(lr),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Apply one update from the accumulated gradients, then clear them.
    pub fn step(&mut self, params: Vec<&mut Param<T>>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.steps += 1;
        let c1 = T::one() - self.beta1.powi(self.steps);
        let c2 = T::one() - self.beta2.powi(self.steps);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.value)
                .and(&mut p.grad)
                .and(m)
                .and(v)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + (T::one() - b1) * *g;
                    *v = b2 * *v + (T::one() - b2) * *g * *g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    *g = T::zero();
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::new(ArrayD::from_elem(IxDyn(&[3]), 1.0f64));
        p.grad.fill(0.25);
        let mut opt = Adam::new(0.001);
        opt.step(vec![&mut p]);
        for &w in p.value.iter() {
            assert!((w - 0.999).abs() < 1e-9);
        }
        assert!(p.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::new(ArrayD::from_elem(IxDyn(&[2]), 5.0f64));
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = p.value.mapv(|w| 2.0 * (w - 1.0));
            p.grad.assign(&g);
            opt.step(vec![&mut p]);
        }
        assert!(p.value.iter().all(|&w| (w - 1.0).abs() < 1e-2));
    }
}
