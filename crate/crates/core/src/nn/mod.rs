//! A small CPU neural-network toolkit: layers with hand-written backward
//! passes, losses and Adam.

mod adam;
mod layers;
mod loss;
mod tensor;

pub use adam::Adam;
pub use layers::{
    BatchNorm, Conv2d, ConvTranspose2d, Flatten, Layer, LeakyRelu, Linear, Param, Sequential, Unflatten,
};
pub use loss::{bce_with_logits, bce_with_logits_const, gaussian_kl, sigmoid};
pub use tensor::{col2im, conv_out, im2col};

#[cfg(test)]
mod gradcheck {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f64> {
        ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-1.0..1.0))
    }

    fn objective(layer: &mut dyn Layer<f64>, x: &ArrayD<f64>, r: &ArrayD<f64>) -> f64 {
        (&layer.forward(x.clone()) * r).sum()
    }

    /// Compare analytic gradients of <layer(x), r> against central differences.
    fn check(layer: &mut dyn Layer<f64>, in_shape: &[usize], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(in_shape, &mut rng);
        let y = layer.forward(x.clone());
        let r = random(y.shape(), &mut rng);
        let dx = layer.backward(r.clone());
        assert_eq!(dx.shape(), x.shape());
        let h = 1e-5;
        let tol = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()));

        for i in (0..x.len()).step_by((x.len() / 40).max(1)) {
            let mut xp = x.clone();
            xp.as_slice_mut().unwrap()[i] += h;
            let mut xm = x.clone();
            xm.as_slice_mut().unwrap()[i] -= h;
            let fd = (objective(layer, &xp, &r) - objective(layer, &xm, &r)) / (2.0 * h);
            let an = dx.as_slice().unwrap()[i];
            assert!(tol(fd, an), "input grad {i}: fd {fd} vs analytic {an}");
        }

        let analytic: Vec<ArrayD<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
        for (pi, an) in analytic.iter().enumerate() {
            for i in (0..an.len()).step_by((an.len() / 20).max(1)) {
                let orig = layer.params()[pi].value.as_slice().unwrap()[i];
                layer.params_mut()[pi].value.as_slice_mut().unwrap()[i] = orig + h;
                let fp = objective(layer, &x, &r);
                layer.params_mut()[pi].value.as_slice_mut().unwrap()[i] = orig - h;
                let fm = objective(layer, &x, &r);
                layer.params_mut()[pi].value.as_slice_mut().unwrap()[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let a = an.as_slice().unwrap()[i];
                assert!(tol(fd, a), "param {pi}[{i}]: fd {fd} vs analytic {a}");
            }
        }
    }

    #[test]
    fn linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check(&mut Linear::new(7, 5, &mut rng), &[3, 7], 2);
    }

    #[test]
    fn conv_strided() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(&mut Conv2d::new(3, 4, 4, 2, 1, &mut rng), &[2, 3, 8, 8], 4);
    }

    #[test]
    fn conv_same() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        check(&mut Conv2d::new(2, 3, 3, 1, 1, &mut rng), &[2, 2, 4, 4], 6);
    }

    #[test]
    fn conv_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut layer = ConvTranspose2d::new(3, 2, 4, 2, 1, &mut rng);
        assert_eq!(layer.forward(ArrayD::zeros(IxDyn(&[1, 3, 4, 4]))).shape(), &[1, 2, 8, 8]);
        check(&mut layer, &[2, 3, 4, 4], 8);
    }

    #[test]
    fn batchnorm() {
        let mut layer = BatchNorm::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in layer.params_mut() {
            p.value.mapv_inplace(|v| v + rng.random_range(-0.5..0.5));
        }
        check(&mut layer, &[4, 3, 2, 2], 10);
        check(&mut BatchNorm::new(5), &[6, 5], 11);
    }

    #[test]
    fn leaky_relu() {
        check(&mut LeakyRelu::new(0.2), &[3, 4, 2, 2], 12);
    }

    #[test]
    fn sequential_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = Sequential::new()
            .push(Conv2d::new(2, 3, 4, 2, 1, &mut rng))
            .push(BatchNorm::new(3))
            .push(LeakyRelu::new(0.2))
            .push(Flatten::default())
            .push(Linear::new(12, 12, &mut rng))
            .push(Unflatten::new(3, 2, 2))
            .push(ConvTranspose2d::new(3, 2, 4, 2, 1, &mut rng));
        check(&mut net, &[3, 2, 4, 4], 14);
    }

    #[test]
    fn batchnorm_eval_uses_running_statistics() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = ArrayD::from_shape_vec(IxDyn(&[4, 1]), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.forward(x.clone());
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
        // unbiased variance of 1..4 is 5/3
        assert!((bn.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        let y = bn.infer(x);
        let expect = (1.0 - 0.25) / (bn.running_var[0] + 1e-5).sqrt();
        assert!((y[[0, 0]] - expect).abs() < 1e-12);
    }
}
