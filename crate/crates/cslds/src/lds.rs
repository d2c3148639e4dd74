//! Linear dynamical system model for videos: synthesis, oracle fitting via
//! PCA, transition estimation and observability tests.
//!
//! A video is modeled as `y_t = mu + C x_t + w_t` with state evolution
//! `x_{t+1} = A x_t + v_t`. The observation matrix `C` spans the
//! `d`-dimensional subspace the frames live in; the state sequence is the
//! trajectory of subspace coefficients.

use std::ops::{AddAssign, SubAssign};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::linalg;

/// Relative singular-value tolerance used by every full-rank test.
pub const RANK_TOL: f64 = 1.0e-10;

/// Generative scene model: system matrices, mean image and noise levels.
#[derive(Debug, Clone)]
pub struct LdsModel {
    /// Observation matrix, `N x d`, full column rank.
    pub c: DMatrix<f64>,
    /// State transition matrix, `d x d`.
    pub a: DMatrix<f64>,
    /// Mean image, length `N`; all zeros for the pure-LDS model.
    pub mu: DVector<f64>,
    /// Process-noise standard deviation (isotropic).
    pub q_noise_std: f64,
    /// Observation-noise standard deviation (isotropic).
    pub r_noise_std: f64,
    pub h: usize,
    pub w: usize,
}

impl LdsModel {
    pub fn new(
        c: DMatrix<f64>,
        a: DMatrix<f64>,
        mu: DVector<f64>,
        q_noise_std: f64,
        r_noise_std: f64,
        h: usize,
        w: usize,
    ) -> Result<Self> {
        let (n, d) = c.shape();
        if h * w != n {
            return Err(Error::DimensionMismatch(format!(
                "spatial dims {h}x{w} do not match signal length {n}"
            )));
        }
        if d > n {
            return Err(Error::DimensionMismatch(format!(
                "state dimension {d} exceeds signal length {n}"
            )));
        }
        if a.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "transition matrix must be {d}x{d}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if mu.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "mean length {} does not match signal length {n}",
                mu.len()
            )));
        }
        if q_noise_std < 0.0 || r_noise_std < 0.0 {
            return Err(Error::Config(
                "noise standard deviations must be >= 0".into(),
            ));
        }
        let svd = linalg::thin_svd(&c);
        let smax = svd.singular_values[0];
        let smin = svd.singular_values[d - 1];
        // Negated so that NaN singular values also count as deficient.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(smin > RANK_TOL * smax) {
            return Err(Error::Numerical(format!(
                "observation matrix is column rank deficient (s_min/s_max = {:e})",
                if smax > 0.0 { smin / smax } else { 0.0 }
            )));
        }
        Ok(Self {
            c,
            a,
            mu,
            q_noise_std,
            r_noise_std,
            h,
            w,
        })
    }

    /// Signal length `N = h * w`.
    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    /// State dimension.
    pub fn d(&self) -> usize {
        self.c.ncols()
    }
}

/// A state trajectory `x_1..x_T` stored as the columns of a `d x T` matrix.
#[derive(Debug, Clone)]
pub struct StateSequence {
    pub x: DMatrix<f64>,
}

impl StateSequence {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "state sequence has non-finite entries".into(),
            ));
        }
        Ok(Self { x })
    }

    pub fn d(&self) -> usize {
        self.x.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.x.ncols()
    }
}

/// Frames as columns of an `N x T` matrix with spatial dimensions `(h, w)`.
#[derive(Debug, Clone)]
pub struct VideoTensor {
    pub y: DMatrix<f64>,
    pub h: usize,
    pub w: usize,
}

impl VideoTensor {
    pub fn new(y: DMatrix<f64>, h: usize, w: usize) -> Result<Self> {
        if h * w != y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "spatial dims {h}x{w} do not match frame length {}",
                y.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("video has non-finite entries".into()));
        }
        Ok(Self { y, h, w })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.y.ncols()
    }
}

/// Simulates the model forward from `x1` for `t_len` frames. Process and
/// observation noise are drawn from independent substreams of `seed`, so the
/// output is fully determined by `(model, x1, t_len, seed)`.
pub fn synthesize(
    model: &LdsModel,
    x1: &DVector<f64>,
    t_len: usize,
    seed: u64,
) -> Result<(VideoTensor, StateSequence)> {
    let d = model.d();
    let n = model.n();
    if x1.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, model expects {d}",
            x1.len()
        )));
    }
    if t_len == 0 {
        return Err(Error::Config("need at least one frame".into()));
    }
    if x1.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "initial state has non-finite entries".into(),
        ));
    }

    let mut process_rng = ChaCha8Rng::seed_from_u64(seed);
    process_rng.set_stream(0);
    let mut obs_rng = ChaCha8Rng::seed_from_u64(seed);
    obs_rng.set_stream(1);

    let mut states = DMatrix::zeros(d, t_len);
    states.set_column(0, x1);
    if model.q_noise_std > 0.0 {
        let dist = Normal::new(0.0, model.q_noise_std).expect("valid std");
        for t in 1..t_len {
            let prev = states.column(t - 1).into_owned();
            let mut next = &model.a * prev;
            for i in 0..d {
                next[i] += process_rng.sample(dist);
            }
            states.set_column(t, &next);
        }
    } else {
        for t in 1..t_len {
            let prev = states.column(t - 1).into_owned();
            let next = &model.a * prev;
            states.set_column(t, &next);
        }
    }

    let mut frames = &model.c * &states;
    for t in 0..t_len {
        frames.column_mut(t).add_assign(&model.mu);
    }
    if model.r_noise_std > 0.0 {
        let dist = Normal::new(0.0, model.r_noise_std).expect("valid std");
        for t in 0..t_len {
            for i in 0..n {
                frames[(i, t)] += obs_rng.sample(dist);
            }
        }
    }

    Ok((
        VideoTensor::new(frames, model.h, model.w)?,
        StateSequence::new(states)?,
    ))
}

/// Result of a transition-matrix least-squares fit.
#[derive(Debug, Clone)]
pub struct TransitionEstimate {
    pub matrix: DMatrix<f64>,
    /// Numerical rank of the regressor block `x_{1..T-1}`.
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Least-squares minimizer of `sum_t ||x_{t+1} - A x_t||^2`, computed as
/// `A = X_{2:T} pinv(X_{1:T-1})`. Singular values below `1e-12 * s_max` of
/// the regressor are treated as zero.
pub fn estimate_transition(states: &StateSequence) -> Result<TransitionEstimate> {
    let d = states.d();
    let t_len = states.t_len();
    if t_len < d + 1 {
        return Err(Error::DimensionMismatch(format!(
            "need at least d+1 = {} states to fit a transition, got {t_len}",
            d + 1
        )));
    }
    let x_past = states.x.columns(0, t_len - 1).into_owned();
    let x_next = states.x.columns(1, t_len - 1).into_owned();
    let (p, rank) = linalg::pinv(&x_past, 1.0e-12);
    Ok(TransitionEstimate {
        matrix: x_next * p,
        rank,
        rank_deficient: rank < d,
    })
}

/// Fits an oracle model by a rank-`d` factorization of the (optionally
/// mean-subtracted) data matrix, then a transition fit on the recovered
/// states. Noise levels are set from the residual statistics.
pub fn fit_oracle(
    video: &VideoTensor,
    d: usize,
    subtract_mean: bool,
) -> Result<(LdsModel, StateSequence)> {
    let n = video.n();
    let t_len = video.t_len();
    if d == 0 || d > n.min(t_len) {
        return Err(Error::DimensionMismatch(format!(
            "rank {d} out of bounds for a {n}x{t_len} data matrix"
        )));
    }

    let mu = if subtract_mean {
        let mut m = DVector::zeros(n);
        for t in 0..t_len {
            m += video.y.column(t);
        }
        m / t_len as f64
    } else {
        DVector::zeros(n)
    };
    let mut centered = video.y.clone();
    if subtract_mean {
        for t in 0..t_len {
            centered.column_mut(t).sub_assign(&mu);
        }
    }

    let svd = linalg::thin_svd(&centered);
    let c = svd.u.columns(0, d).into_owned();
    let mut x = svd.v_t.rows(0, d).into_owned();
    for i in 0..d {
        x.row_mut(i).scale_mut(svd.singular_values[i]);
    }
    let states = StateSequence::new(x)?;

    let transition = estimate_transition(&states)?;
    let d_states = states.x.columns(1, t_len - 1).into_owned()
        - &transition.matrix * states.x.columns(0, t_len - 1).into_owned();
    let q_noise_std = rms(d_states.as_slice());

    let residual = &centered - &c * &states.x;
    let r_noise_std = rms(residual.as_slice());

    let model = LdsModel::new(
        c,
        transition.matrix,
        mu,
        q_noise_std,
        r_noise_std,
        video.h,
        video.w,
    )?;
    Ok((model, states))
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Vertical stack `[C; CA; ...; CA^{depth-1}]`.
pub fn observability_matrix(
    c_eff: &DMatrix<f64>,
    a: &DMatrix<f64>,
    depth: usize,
) -> Result<DMatrix<f64>> {
    let (m, d) = c_eff.shape();
    if a.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "transition matrix must be {d}x{d}, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if depth == 0 {
        return Err(Error::Config("observability depth must be >= 1".into()));
    }
    let mut out = DMatrix::zeros(m * depth, d);
    let mut block = c_eff.clone();
    for k in 0..depth {
        out.rows_mut(k * m, m).copy_from(&block);
        if k + 1 < depth {
            block = &block * a;
        }
    }
    Ok(out)
}

/// Singular-value summary of an observability test.
#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `sigma_d / sigma_1`; zero when the stack has fewer than `d` rows.
    pub ratio: f64,
    pub depth: usize,
}

/// Full-rank test of the depth-`d` observability matrix: true iff
/// `sigma_d(O) > RANK_TOL * sigma_1(O)`.
pub fn is_observable(
    c_eff: &DMatrix<f64>,
    a: &DMatrix<f64>,
) -> Result<(bool, ObservabilityReport)> {
    let d = a.nrows();
    let obs = observability_matrix(c_eff, a, d)?;
    let svd = linalg::thin_svd(&obs);
    let sigma_max = svd.singular_values[0];
    let (sigma_min, ratio) = if obs.nrows() < d || sigma_max <= 0.0 {
        (0.0, 0.0)
    } else {
        let smin = svd.singular_values[d - 1];
        (smin, smin / sigma_max)
    };
    Ok((
        ratio > RANK_TOL,
        ObservabilityReport {
            sigma_max,
            sigma_min,
            ratio,
            depth: d,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn rotation_block(theta: f64, magnitude: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                magnitude * theta.cos(),
                -magnitude * theta.sin(),
                magnitude * theta.sin(),
                magnitude * theta.cos(),
            ],
        )
    }

    fn random_model(n: usize, d: usize, seed: u64) -> LdsModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() - 0.5);
        let (c, _) = linalg::orthonormal_colspace(&raw, 1e-12);
        let mut a = DMatrix::zeros(d, d);
        let mut i = 0;
        while i + 1 < d {
            let theta = 0.2 + 0.5 * rng.random::<f64>();
            let mag = 0.9 + 0.09 * rng.random::<f64>();
            a.view_mut((i, i), (2, 2))
                .copy_from(&rotation_block(theta, mag));
            i += 2;
        }
        if i < d {
            a[(i, i)] = 0.9;
        }
        LdsModel::new(c, a, DVector::zeros(n), 0.0, 0.0, 1, n).unwrap()
    }

    #[test]
    fn identity_dynamics_hold_state_constant() {
        let n = 12;
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() - 0.5);
        let (c, _) = linalg::orthonormal_colspace(&raw, 1e-12);
        let model = LdsModel::new(
            c.clone(),
            DMatrix::identity(d, d),
            DVector::zeros(n),
            0.0,
            0.0,
            3,
            4,
        )
        .unwrap();
        let x1 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (video, states) = synthesize(&model, &x1, 6, 0).unwrap();
        let expected_frame = &c * &x1;
        for t in 0..6 {
            assert!((states.x.column(t) - &x1).norm() < 1e-14);
            assert!((video.y.column(t) - &expected_frame).norm() < 1e-14);
        }
    }

    #[test]
    fn scalar_geometric_decay() {
        let n = 9;
        let c = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
        let model = LdsModel::new(
            c,
            DMatrix::from_element(1, 1, 0.5),
            DVector::zeros(n),
            0.0,
            0.0,
            3,
            3,
        )
        .unwrap();
        let (video, _) = synthesize(&model, &DVector::from_element(1, 1.0), 5, 0).unwrap();
        for t in 0..5 {
            let expected = 0.5_f64.powi(t as i32) / (n as f64).sqrt();
            for i in 0..n {
                assert!((video.y[(i, t)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rotation_dynamics_match_direct_iteration() {
        let a = rotation_block(0.7, 1.0);
        let c = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.3, 0.1, -0.2, 0.5]);
        let model = LdsModel::new(c, a.clone(), DVector::zeros(4), 0.0, 0.0, 2, 2).unwrap();
        let x1 = DVector::from_vec(vec![0.6, -0.8]);
        let (_, states) = synthesize(&model, &x1, 40, 0).unwrap();
        // Brute-force iteration oracle.
        let mut x = x1.clone();
        for t in 0..40 {
            assert!((states.x.column(t) - &x).norm() < 1e-12);
            assert!((states.x.column(t).norm() - x1.norm()).abs() < 1e-10);
            x = &a * x;
        }
    }

    #[test]
    fn synthesize_is_deterministic_in_seed() {
        let model = random_model(20, 4, 3);
        let mut noisy = model.clone();
        noisy.q_noise_std = 0.1;
        noisy.r_noise_std = 0.05;
        let x1 = DVector::from_element(4, 1.0);
        let (v1, s1) = synthesize(&noisy, &x1, 30, 77).unwrap();
        let (v2, s2) = synthesize(&noisy, &x1, 30, 77).unwrap();
        assert_eq!(v1.y, v2.y);
        assert_eq!(s1.x, s2.x);
        let (v3, _) = synthesize(&noisy, &x1, 30, 78).unwrap();
        assert!(v1.y != v3.y);
    }

    #[test]
    fn synthesize_rejects_wrong_state_length() {
        let model = random_model(10, 3, 5);
        let err = synthesize(&model, &DVector::zeros(2), 5, 0);
        assert!(err.is_err());
    }

    #[test]
    fn fit_oracle_exact_on_low_rank_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = DMatrix::from_fn(30, 4, |_, _| rng.random::<f64>() - 0.5);
        let w = DMatrix::from_fn(4, 25, |_, _| rng.random::<f64>() - 0.5);
        let y = VideoTensor::new(&b * &w, 5, 6).unwrap();
        let (model, states) = fit_oracle(&y, 4, false).unwrap();
        let recon = &model.c * &states.x;
        assert!((recon - &y.y).norm() < 1e-10 * y.y.norm());
    }

    #[test]
    fn fit_oracle_round_trips_synthesized_video() {
        let model = random_model(40, 4, 9);
        let x1 = DVector::from_vec(vec![1.0, -0.5, 0.8, 0.2]);
        let (video, _) = synthesize(&model, &x1, 60, 1).unwrap();
        let (fit, states) = fit_oracle(&video, 4, false).unwrap();
        let recon = &fit.c * &states.x;
        let err = (&recon - &video.y).norm_squared();
        let snr = 10.0 * (video.y.norm_squared() / err).log10();
        assert!(snr >= 140.0, "snr = {snr}");
        // Column spaces agree.
        let angle = linalg::max_principal_angle(&fit.c, &model.c).unwrap();
        assert!(angle < 1e-6, "angle = {angle}");
    }

    #[test]
    fn fit_oracle_constant_video_goes_to_mean() {
        let y = VideoTensor::new(DMatrix::from_element(16, 10, 3.25), 4, 4).unwrap();
        let (model, states) = fit_oracle(&y, 1, true).unwrap();
        for i in 0..16 {
            assert!((model.mu[i] - 3.25).abs() < 1e-12);
        }
        assert!((&model.c * &states.x).norm() < 1e-9);
    }

    #[test]
    fn transition_recovers_generator() {
        let model = random_model(25, 4, 11);
        let x1 = DVector::from_vec(vec![1.0, 0.3, -0.6, 0.9]);
        let (_, states) = synthesize(&model, &x1, 50, 2).unwrap();
        let est = estimate_transition(&states).unwrap();
        assert!(!est.rank_deficient);
        assert!((est.matrix - &model.a).norm() < 1e-8);
    }

    #[test]
    fn transition_fixed_point_on_constant_states() {
        let col = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut x = DMatrix::zeros(3, 8);
        for t in 0..8 {
            x.set_column(t, &col);
        }
        let est = estimate_transition(&StateSequence::new(x).unwrap()).unwrap();
        assert!(est.rank_deficient);
        assert!((&est.matrix * &col - &col).norm() < 1e-10);
    }

    #[test]
    fn transition_scalar_geometric() {
        let x = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 4.0, 8.0]);
        let est = estimate_transition(&StateSequence::new(x).unwrap()).unwrap();
        assert!((est.matrix[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn observability_stack_identity_dynamics() {
        let c = DMatrix::from_row_slice(1, 2, &[0.4, -0.7]);
        let o = observability_matrix(&c, &DMatrix::identity(2, 2), 3).unwrap();
        for k in 0..3 {
            assert_eq!(o.row(k), c.row(0));
        }
    }

    #[test]
    fn observability_stack_swap_dynamics() {
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let o = observability_matrix(&c, &a, 2).unwrap();
        assert_eq!(o, DMatrix::identity(2, 2));
    }

    #[test]
    fn depth_one_stack_is_c() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let a = DMatrix::identity(3, 3);
        assert_eq!(observability_matrix(&c, &a, 1).unwrap(), c);
    }

    #[test]
    fn single_projection_observable_with_distinct_eigenvalues() {
        // Monte-Carlo rank check: diagonalizable A with distinct
        // eigenvalues stays observable under a random 1-row projection.
        let d = 6;
        let mut pass = 0;
        for seed in 0..50u64 {
            let model = random_model(40, d, 1000 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let phi = DMatrix::from_fn(1, 40, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let c_eff = &phi * &model.c;
            let (ok, _) = is_observable(&c_eff, &model.a).unwrap();
            if ok {
                pass += 1;
            }
        }
        assert!(pass >= 49, "observable in {pass}/50 trials");
    }

    #[test]
    fn repeated_eigenvalues_defeat_single_projection() {
        // A block with a 2-dimensional eigenspace makes the Vandermonde
        // factor collapse; checked against an explicitly built stack.
        let d = 4;
        let mut a = DMatrix::identity(d, d) * 0.8; // eigenvalue 0.8 repeated
        a[(2, 2)] = 0.5;
        a[(3, 3)] = 0.3;
        let model = random_model(30, d, 77);
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let phi = DMatrix::from_fn(1, 30, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let c_eff = &phi * &model.c;
        let (ok, report) = is_observable(&c_eff, &a).unwrap();
        assert!(!ok);
        assert!(report.ratio <= RANK_TOL);
        let o = observability_matrix(&c_eff, &a, d).unwrap();
        let svd = linalg::thin_svd(&o);
        assert!(svd.singular_values[d - 1] < 1e-10 * svd.singular_values[0]);
    }

    #[test]
    fn zero_observation_row_is_unobservable() {
        let c = DMatrix::zeros(1, 3);
        let a = DMatrix::identity(3, 3);
        let (ok, report) = is_observable(&c, &a).unwrap();
        assert!(!ok);
        assert_eq!(report.ratio, 0.0);
    }

    #[test]
    fn full_rank_c_with_identity_dynamics_is_observable() {
        let model = random_model(20, 4, 13);
        let (ok, _) = is_observable(&model.c, &DMatrix::identity(4, 4)).unwrap();
        assert!(ok);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn prop_observability_similarity_invariant(seed in 0u64..1000) {
            let d = 3;
            let model = random_model(15, d, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
            // Well-conditioned random L: identity plus a small perturbation.
            let l = DMatrix::identity(d, d)
                + DMatrix::from_fn(d, d, |_, _| 0.3 * (rng.random::<f64>() - 0.5));
            let l_inv = l.clone().try_inverse().unwrap();
            let phi = DMatrix::from_fn(2, 15, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let c_eff = &phi * &model.c;
            let (plain, _) = is_observable(&c_eff, &model.a).unwrap();
            let (transformed, _) =
                is_observable(&(&c_eff * &l), &(&l_inv * &model.a * &l)).unwrap();
            prop_assert_eq!(plain, transformed);
        }
    }
}
