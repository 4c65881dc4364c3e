use ndarray::{Array2, ArrayD};

use crate::Scalar;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy on logits, summed over all elements.
///
/// Returns the total loss and its gradient with respect to the logits.
pub fn bce_with_logits<T: Scalar>(logits: &ArrayD<T>, targets: &ArrayD<T>) -> (T, ArrayD<T>) {
    assert_eq!(logits.shape(), targets.shape(), "bce shape mismatch");
    let mut total = T::zero();
    let mut grad = ArrayD::zeros(logits.raw_dim());
    ndarray::Zip::from(&mut grad).and(logits).and(targets).for_each(|g, &z, &t| {
        // max(z,0) - z*t + log(1 + exp(-|z|))
        let e = (-z.abs()).exp();
        total += z.max(T::zero()) - z * t + e.ln_1p();
        let p = if z >= T::zero() { T::one() / (T::one() + e) } else { e / (T::one() + e) };
        *g = p - t;
    });
    (total, grad)
}

/// BCE against a constant label, summed over all elements.
pub fn bce_with_logits_const<T: Scalar>(logits: &ArrayD<T>, target: T) -> (T, ArrayD<T>) {
    let targets = ArrayD::from_elem(logits.raw_dim(), target);
    bce_with_logits(logits, &targets)
}

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over all elements, with gradients
/// for mu and logvar.
pub fn gaussian_kl<T: Scalar>(mu: &Array2<T>, logvar: &Array2<T>) -> (T, Array2<T>, Array2<T>) {
    let half = T::of(0.5);
    let mut total = T::zero();
    let mut dlogvar = Array2::zeros(logvar.raw_dim());
    ndarray::Zip::from(&mut dlogvar).and(mu).and(logvar).for_each(|d, &m, &lv| {
        let e = lv.exp();
        total += -half * (T::one() + lv - m * m - e);
        *d = half * (e - T::one());
    });
    (total, mu.clone(), dlogvar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, IxDyn};

    #[test]
    fn bce_matches_naive_formula() {
        let z = array![-3.0f64, -0.5, 0.0, 0.7, 4.0].into_dyn();
        let t = array![0.0f64, 1.0, 1.0, 0.0, 1.0].into_dyn();
        let (loss, grad) = bce_with_logits(&z, &t);
        let mut naive = 0.0;
        for (&zi, &ti) in z.iter().zip(t.iter()) {
            let p = 1.0 / (1.0 + (-zi).exp());
            naive -= ti * p.ln() + (1.0 - ti) * (1.0 - p).ln();
        }
        assert!((loss - naive).abs() < 1e-12);
        assert!((grad[IxDyn(&[2])] - (0.5 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn bce_is_finite_for_extreme_logits() {
        let z = array![-1000.0f32, 1000.0].into_dyn();
        let t = array![1.0f32, 0.0].into_dyn();
        let (loss, grad) = bce_with_logits(&z, &t);
        assert!((loss - 2000.0).abs() < 1e-3);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn kl_is_zero_at_standard_normal() {
        let mu = Array2::<f64>::zeros((2, 3));
        let lv = Array2::<f64>::zeros((2, 3));
        let (kl, dmu, dlv) = gaussian_kl(&mu, &lv);
        assert_eq!(kl, 0.0);
        assert!(dmu.iter().chain(dlv.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }
}
