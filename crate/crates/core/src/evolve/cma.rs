//! (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
//! rank-one plus rank-mu covariance updates.

use nalgebra::{DMatrix, DVector, RealField, SymmetricEigen};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Smallest eigenvalue kept in the covariance matrix.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Step sizes below this (relative to the largest axis) end the run.
pub const SIGMA_FLOOR: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmaError {
    #[error("budget {budget} is smaller than one generation of {lambda} evaluations")]
    InvalidBudget { budget: usize, lambda: usize },
    #[error("invalid CMA-ES parameter: {0}")]
    InvalidParameter(String),
    #[error("objective returned a non-finite value at {0:?}")]
    NonFiniteFitness(Vec<f64>),
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    Budget,
    TargetReached,
    SigmaCollapse,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Budget => "BUDGET",
            Termination::TargetReached => "TARGET_REACHED",
            Termination::SigmaCollapse => "SIGMA_COLLAPSE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaOptions {
    pub budget: usize,
    pub seed: u64,
    pub sigma0: f64,
    /// Initial mean; `None` means the origin.
    pub mean0: Option<Vec<f64>>,
    /// Stop as soon as a fitness at or below this value is seen.
    pub stop_fitness: Option<f64>,
    /// Population size; `None` uses `4 + floor(3 ln n)`.
    pub lambda: Option<usize>,
}

impl Default for CmaOptions {
    fn default() -> Self {
        CmaOptions { budget: 10_000, seed: 0, sigma0: 0.5, mean0: None, stop_fitness: None, lambda: None }
    }
}

/// One generation of the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub generation: usize,
    pub evaluations: usize,
    pub best: f64,
    pub best_so_far: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug)]
pub struct CmaResult<T> {
    pub best: Vec<T>,
    pub best_fitness: T,
    pub evaluations: usize,
    pub termination: Termination,
    /// Set when the last generation's fitness values were all equal, so
    /// selection carried no information.
    pub flat_fitness: bool,
    pub history: Vec<Generation>,
    pub final_sigma: T,
}

/// Mutable optimizer state.
#[derive(Clone, Debug)]
pub struct CmaState<T: Scalar + RealField> {
    pub mean: DVector<T>,
    pub sigma: T,
    pub covariance: DMatrix<T>,
    pub p_sigma: DVector<T>,
    pub p_c: DVector<T>,
    pub generation: usize,
    basis: DMatrix<T>,
    axes: DVector<T>,
}

/// Strategy constants derived from the dimension and population size.
#[derive(Clone, Debug)]
pub struct CmaParams<T> {
    pub dim: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<T>,
    pub mu_eff: T,
    pub c_sigma: T,
    pub d_sigma: T,
    pub c_c: T,
    pub c_1: T,
    pub c_mu: T,
    pub chi_n: T,
}

pub fn default_lambda(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

impl<T: Scalar + RealField> CmaParams<T> {
    pub fn new(dim: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let sum: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let mu_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        CmaParams {
            dim,
            lambda,
            mu,
            weights: w.into_iter().map(T::of).collect(),
            mu_eff: T::of(mu_eff),
            c_sigma: T::of(c_sigma),
            d_sigma: T::of(d_sigma),
            c_c: T::of(c_c),
            c_1: T::of(c_1),
            c_mu: T::of(c_mu),
            chi_n: T::of(chi_n),
        }
    }
}

impl<T: Scalar + RealField> CmaState<T> {
    pub fn new(mean: DVector<T>, sigma: T) -> Self {
        let n = mean.len();
        CmaState {
            mean,
            sigma,
            covariance: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            basis: DMatrix::identity(n, n),
            axes: DVector::from_element(n, T::one()),
        }
    }

    /// Symmetrize the covariance, clamp its eigenvalues and refresh the
    /// sampling basis `C = B diag(axes^2) B^T`.
    fn decompose(&mut self) {
        let c = (&self.covariance + self.covariance.transpose()) * T::of(0.5);
        let eig = SymmetricEigen::new(c);
        let floor = T::of(EIGEN_FLOOR);
        let vals = eig.eigenvalues.map(|v| if v > floor { v } else { floor });
        self.covariance = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        self.axes = vals.map(|v| Float::sqrt(v));
        self.basis = eig.eigenvectors;
    }

    fn largest_axis(&self) -> T {
        self.axes.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

/// Minimize `f` over R^n. `f` scores a whole generation at once and must
/// return one value per candidate.
pub fn cma_minimize_batch<T, F>(dim: usize, mut f: F, opts: &CmaOptions) -> Result<CmaResult<T>, CmaError>
where
    T: Scalar + RealField,
    F: FnMut(&[Vec<T>]) -> Vec<T>,
{
    let lambda = opts.lambda.unwrap_or_else(|| default_lambda(dim));
    if dim == 0 {
        return Err(CmaError::InvalidParameter("dimension must be positive".into()));
    }
    if lambda < 2 {
        return Err(CmaError::InvalidParameter("population size must be at least 2".into()));
    }
    if !(opts.sigma0.is_finite() && opts.sigma0 > 0.0) {
        return Err(CmaError::InvalidParameter("sigma0 must be positive".into()));
    }
    if opts.budget < lambda {
        return Err(CmaError::InvalidBudget { budget: opts.budget, lambda });
    }
    let mean0 = match &opts.mean0 {
        Some(m) if m.len() != dim => return Err(CmaError::InvalidParameter(format!("mean0 has {} entries, expected {dim}", m.len()))),
        Some(m) if m.iter().any(|v| !v.is_finite()) => return Err(CmaError::InvalidParameter("mean0 must be finite".into())),
        Some(m) => DVector::from_iterator(dim, m.iter().map(|&v| T::of(v))),
        None => DVector::zeros(dim),
    };

    let p = CmaParams::<T>::new(dim, lambda);
    let mut st = CmaState::new(mean0, T::of(opts.sigma0));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let stop = opts.stop_fitness.map(T::of);
    let mut best: Option<(Vec<T>, T)> = None;
    let mut history = Vec::new();
    let mut evaluations = 0;
    let mut flat = false;
    let two = T::of(2.0);

    let termination = loop {
        if evaluations + lambda > opts.budget {
            break Termination::Budget;
        }
        // sample
        let bd = &st.basis * DMatrix::from_diagonal(&st.axes);
        let ys: Vec<DVector<T>> = (0..lambda)
            .map(|_| {
                let z = DVector::from_fn(dim, |_, _| T::of(rng.sample::<f64, _>(StandardNormal)));
                &bd * z
            })
            .collect();
        let xs: Vec<Vec<T>> = ys.iter().map(|y| (&st.mean + y * st.sigma).iter().copied().collect()).collect();
        let fit = f(&xs);
        assert_eq!(fit.len(), lambda, "objective must score every candidate");
        evaluations += lambda;
        if let Some(i) = fit.iter().position(|v| !Float::is_finite(*v)) {
            return Err(CmaError::NonFiniteFitness(xs[i].iter().map(|v| v.as_f64()).collect()));
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fit[a].partial_cmp(&fit[b]).expect("finite"));
        let gen_best = order[0];
        if best.as_ref().is_none_or(|(_, bf)| fit[gen_best] < *bf) {
            best = Some((xs[gen_best].clone(), fit[gen_best]));
        }
        let best_so_far = best.as_ref().expect("set above").1;
        flat = fit[order[0]] == fit[order[lambda - 1]];
        st.generation += 1;

        // recombination
        let mut y_w = DVector::<T>::zeros(dim);
        for (w, &i) in p.weights.iter().zip(&order[..p.mu]) {
            y_w.axpy(*w, &ys[i], T::one());
        }
        st.mean.axpy(st.sigma, &y_w, T::one());

        // step-size path
        let inv_sqrt_c = &st.basis * DMatrix::from_diagonal(&st.axes.map(|a| T::one() / a)) * st.basis.transpose();
        let cs = p.c_sigma;
        st.p_sigma = &st.p_sigma * (T::one() - cs) + &inv_sqrt_c * &y_w * Float::sqrt(cs * (two - cs) * p.mu_eff);
        let ps_norm = st.p_sigma.norm();
        let decay = Float::sqrt(T::one() - Float::powi(T::one() - cs, 2 * st.generation as i32));
        let h_sigma = ps_norm / decay < (T::of(1.4) + two / T::of_usize(dim + 1)) * p.chi_n;

        // covariance paths and update
        let cc = p.c_c;
        st.p_c *= T::one() - cc;
        if h_sigma {
            st.p_c.axpy(Float::sqrt(cc * (two - cc) * p.mu_eff), &y_w, T::one());
        }
        let delta = if h_sigma { T::zero() } else { cc * (two - cc) };
        let mut c = &st.covariance * (T::one() - p.c_1 - p.c_mu + delta * p.c_1);
        c.ger(p.c_1, &st.p_c, &st.p_c, T::one());
        for (w, &i) in p.weights.iter().zip(&order[..p.mu]) {
            c.ger(p.c_mu * *w, &ys[i], &ys[i], T::one());
        }
        st.covariance = c;

        st.sigma *= Float::exp((cs / p.d_sigma) * (ps_norm / p.chi_n - T::one()));
        st.decompose();

        history.push(Generation {
            generation: st.generation,
            evaluations,
            best: fit[gen_best].as_f64(),
            best_so_far: best_so_far.as_f64(),
            sigma: st.sigma.as_f64(),
        });

        if stop.is_some_and(|s| best_so_far <= s) {
            break Termination::TargetReached;
        }
        if !Float::is_finite(st.sigma) || (st.sigma * st.largest_axis()).as_f64() < SIGMA_FLOOR {
            break Termination::SigmaCollapse;
        }
    };

    let (best, best_fitness) = best.expect("at least one generation runs");
    Ok(CmaResult { best, best_fitness, evaluations, termination, flat_fitness: flat, history, final_sigma: st.sigma })
}

/// Minimize a per-candidate objective.
pub fn cma_minimize<T, F>(dim: usize, mut f: F, opts: &CmaOptions) -> Result<CmaResult<T>, CmaError>
where
    T: Scalar + RealField,
    F: FnMut(&[T]) -> T,
{
    cma_minimize_batch(dim, |xs: &[Vec<T>]| xs.iter().map(|x| f(x)).collect(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_constants_for_64_dimensions() {
        let p = CmaParams::<f64>::new(64, default_lambda(64));
        assert_eq!((p.lambda, p.mu), (16, 8));
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.weights.windows(2).all(|w| w[0] > w[1]));
        assert!(p.mu_eff > 4.0 && p.mu_eff < 6.0);
        assert!(p.c_1 + p.c_mu <= 1.0);
    }

    #[test]
    fn budget_below_one_generation_is_rejected() {
        let r = cma_minimize::<f64, _>(64, |_| 0.0, &CmaOptions { budget: 10, ..Default::default() });
        assert!(matches!(r, Err(CmaError::InvalidBudget { budget: 10, lambda: 16 })));
    }

    #[test]
    fn non_finite_fitness_is_reported() {
        let r = cma_minimize::<f64, _>(4, |x| if x[0] > 0.0 { f64::NAN } else { 1.0 }, &CmaOptions::default());
        assert!(matches!(r, Err(CmaError::NonFiniteFitness(v)) if v[0] > 0.0));
    }

    #[test]
    fn covariance_stays_symmetric_positive_definite() {
        let mut st = CmaState::<f64>::new(DVector::zeros(3), 1.0);
        st.covariance = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        st.decompose();
        let eig = SymmetricEigen::new(st.covariance.clone());
        assert!(eig.eigenvalues.iter().all(|&v| v >= EIGEN_FLOOR * 0.5));
        assert!((&st.covariance - st.covariance.transpose()).norm() < 1e-12);
    }
}
