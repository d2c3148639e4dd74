//! Observation-matrix recovery from all compressive measurements given a
//! state estimate: greedy model-based CoSAMP with row-group sparsity.
//!
//! With the states fixed, the measurements are linear in the observation
//! matrix `C = Psi S`. The state-basis ambiguity mixes columns of `C`, so
//! all columns of `S` share one sparse row support; the solver therefore
//! selects whole rows of `S` at a time. A static mean image is handled as
//! an extra column whose state coefficient is one in every frame, with its
//! own basis and its own sparsity budget. The inner least squares over the
//! merged support runs conjugate gradient on the normal equations with all
//! operators applied matrix-free.

use std::ops::AddAssign;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::acquisition::CompressiveStream;
use crate::cg::conjugate_gradient;
use crate::error::{Error, Result};
use crate::lds::{StateSequence, VideoTensor};
use crate::transforms::{MeasurementEnsemble, SparsifyingBasis};

/// Support structure imposed on the coefficient matrix `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// All columns of `S` share one row support (the default; matches the
    /// support union induced by the state-basis ambiguity).
    RowGroup,
    /// Each column keeps its own support; realizes the plain per-column
    /// sparse prior.
    PerColumn,
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row_group" => Ok(Grouping::RowGroup),
            "per_column" => Ok(Grouping::PerColumn),
            other => Err(Error::Config(format!("unknown grouping '{other}'"))),
        }
    }
}

/// Solver configuration for [`recover_observation`].
#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    /// Row-group sparsity of `S = Psi' C`.
    pub k: usize,
    /// Sparsity of the mean coefficients; zero disables the mean term.
    pub k_mu: usize,
    pub basis_c: SparsifyingBasis,
    pub basis_mu: SparsifyingBasis,
    pub max_iters: usize,
    /// Relative residual-change stopping tolerance.
    pub tol: f64,
    /// Inner least-squares iteration cap.
    pub ls_iters: usize,
    /// Inner least-squares relative tolerance.
    pub ls_tol: f64,
    pub grouping: Grouping,
}

impl RecoveryConfig {
    pub fn new(k: usize, basis_c: SparsifyingBasis) -> Self {
        let basis_mu = basis_c.clone();
        Self {
            k,
            k_mu: 0,
            basis_c,
            basis_mu,
            max_iters: 50,
            tol: 1.0e-6,
            ls_iters: 200,
            ls_tol: 1.0e-10,
            grouping: Grouping::RowGroup,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::Config(format!(
                "sparsity must satisfy 1 <= K <= N, got K={}, N={n}",
                self.k
            )));
        }
        if 2 * self.k > n {
            return Err(Error::Config(format!(
                "need 2K <= N for support merging, got K={}, N={n}",
                self.k
            )));
        }
        if self.basis_c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "basis covers length {}, measurements cover {n}",
                self.basis_c.len()
            )));
        }
        if self.k_mu > 0 {
            if self.basis_mu.len() != n {
                return Err(Error::DimensionMismatch(
                    "mean basis length does not match signal length".into(),
                ));
            }
            if 2 * self.k_mu > n {
                return Err(Error::Config(format!(
                    "need 2K_mu <= N, got K_mu={}",
                    self.k_mu
                )));
            }
        }
        if self.max_iters == 0 || self.ls_iters == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Recovered observation matrix, mean image and solver diagnostics.
#[derive(Debug, Clone)]
pub struct RecoveredModel {
    /// `N x d` observation-matrix estimate.
    pub c_hat: DMatrix<f64>,
    /// Mean-image estimate (zero when the mean term is disabled).
    pub mu_hat: DVector<f64>,
    /// Total squared residual after each iteration.
    pub residual_history: Vec<f64>,
    /// Total squared residual right after each least-squares step, before
    /// pruning.
    pub ls_residual_history: Vec<f64>,
    /// Final row support of `S` (union over columns for per-column runs).
    pub support: Vec<usize>,
    /// Final support of the mean coefficients.
    pub support_mu: Vec<usize>,
    pub converged: bool,
    /// Set when any inner conjugate-gradient solve hit a breakdown.
    pub cg_breakdown: bool,
    pub h: usize,
    pub w: usize,
}

/// Reconstructs frames as `yhat_t = mu_hat + C_hat x_t`.
pub fn reconstruct_video(model: &RecoveredModel, states: &StateSequence) -> Result<VideoTensor> {
    if states.d() != model.c_hat.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "states have dimension {}, model expects {}",
            states.d(),
            model.c_hat.ncols()
        )));
    }
    let mut frames = &model.c_hat * &states.x;
    for t in 0..frames.ncols() {
        frames.column_mut(t).add_assign(&model.mu_hat);
    }
    VideoTensor::new(frames, model.h, model.w)
}

// Ragged per-column support plus the mean support. All index lists sorted.
#[derive(Debug, Clone, PartialEq)]
struct Support {
    cols: Vec<Vec<usize>>,
    mu: Vec<usize>,
}

impl Support {
    fn empty(d: usize) -> Self {
        Self {
            cols: vec![Vec::new(); d],
            mu: Vec::new(),
        }
    }

    fn total(&self) -> usize {
        self.cols.iter().map(Vec::len).sum::<usize>() + self.mu.len()
    }
}

// Values on a support, flattened column by column with the mean last.
#[derive(Debug, Clone)]
struct Coeffs {
    support: Support,
    values: DVector<f64>,
}

impl Coeffs {
    fn zeros(support: Support) -> Self {
        let total = support.total();
        Self {
            support,
            values: DVector::zeros(total),
        }
    }

    // Dense expansion of the column block, `N x d`.
    fn dense_cols(&self, n: usize) -> DMatrix<f64> {
        let d = self.support.cols.len();
        let mut s = DMatrix::zeros(n, d);
        let mut pos = 0;
        for (i, col) in self.support.cols.iter().enumerate() {
            for &k in col {
                s[(k, i)] = self.values[pos];
                pos += 1;
            }
        }
        s
    }

    fn dense_mu(&self, n: usize) -> Option<DVector<f64>> {
        if self.support.mu.is_empty() {
            return None;
        }
        let mut v = DVector::zeros(n);
        let offset = self.values.len() - self.support.mu.len();
        for (j, &k) in self.support.mu.iter().enumerate() {
            v[k] = self.values[offset + j];
        }
        Some(v)
    }

    // Re-embeds these values into another support, dropping entries that
    // fall outside it.
    fn embed_into(&self, target: &Support) -> Coeffs {
        let mut out = Coeffs::zeros(target.clone());
        let n_cols = self.support.cols.len();
        let mut dst_offsets = Vec::with_capacity(n_cols);
        let mut acc = 0;
        for col in &target.cols {
            dst_offsets.push(acc);
            acc += col.len();
        }
        let mu_dst_offset = acc;
        let mut src = 0;
        for (i, col) in self.support.cols.iter().enumerate().take(n_cols) {
            for &k in col {
                if let Ok(j) = target.cols[i].binary_search(&k) {
                    out.values[dst_offsets[i] + j] = self.values[src];
                }
                src += 1;
            }
        }
        for &k in &self.support.mu {
            if let Ok(j) = target.mu.binary_search(&k) {
                out.values[mu_dst_offset + j] = self.values[src];
            }
            src += 1;
        }
        out
    }

    // Gathers entries of a dense coefficient field onto a support.
    fn gather(support: &Support, field: &DMatrix<f64>, field_mu: Option<&DVector<f64>>) -> Coeffs {
        let mut values = Vec::with_capacity(support.total());
        for (i, col) in support.cols.iter().enumerate() {
            for &k in col {
                values.push(field[(k, i)]);
            }
        }
        if let Some(fm) = field_mu {
            for &k in &support.mu {
                values.push(fm[k]);
            }
        } else {
            debug_assert!(support.mu.is_empty());
        }
        Coeffs {
            support: support.clone(),
            values: DVector::from_vec(values),
        }
    }
}

// Indices of the `k` largest energies, ties broken toward the lowest
// index; returned sorted ascending.
fn top_k_indices(energies: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| {
        energies[b]
            .partial_cmp(&energies[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    picked
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out.dedup();
    out
}

// Per-frame measurement blocks: optional common part plus innovations.
type FrameVecs = Vec<(Option<DVector<f64>>, DVector<f64>)>;

// The full linear measurement context of one recovery run.
struct MeasurementContext<'a> {
    stream: &'a CompressiveStream,
    ensemble: MeasurementEnsemble,
    states: &'a StateSequence,
    n: usize,
    d: usize,
}

impl MeasurementContext<'_> {
    // Predicted measurements of a pixel-domain model `(u_cols, u_mu)`.
    fn predict(&self, u_cols: &DMatrix<f64>, u_mu: Option<&DVector<f64>>) -> Result<FrameVecs> {
        (0..self.stream.t_len())
            .into_par_iter()
            .map(|t| {
                let mut p = u_cols * self.states.x.column(t);
                if let Some(m) = u_mu {
                    p += m;
                }
                let zc = if self.stream.common[t].is_some() {
                    Some(self.ensemble.common.apply(&p)?)
                } else {
                    None
                };
                let zi = self.ensemble.innovation[t].apply(&p)?;
                Ok((zc, zi))
            })
            .collect()
    }

    // Back-projects per-frame residuals into the pixel domain summed
    // against the states: `B = sum_t Phi_t' v_t x_t'` and
    // `b_mu = sum_t Phi_t' v_t`. Frames are processed in parallel but
    // accumulated in ascending t, so results do not depend on the thread
    // count.
    fn backproject(
        &self,
        residuals: &[(Option<DVector<f64>>, DVector<f64>)],
        with_mu: bool,
    ) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
        let per_frame: Vec<DVector<f64>> = residuals
            .par_iter()
            .enumerate()
            .map(|(t, (rc, ri))| {
                let mut a = self.ensemble.innovation[t].adjoint(ri)?;
                if let Some(rc) = rc {
                    a += self.ensemble.common.adjoint(rc)?;
                }
                Ok(a)
            })
            .collect::<Result<_>>()?;
        let mut b = DMatrix::zeros(self.n, self.d);
        let mut b_mu = with_mu.then(|| DVector::zeros(self.n));
        for (t, a) in per_frame.iter().enumerate() {
            let x_t = self.states.x.column(t);
            for i in 0..self.d {
                b.column_mut(i).axpy(x_t[i], a, 1.0);
            }
            if let Some(bm) = b_mu.as_mut() {
                *bm += a;
            }
        }
        Ok((b, b_mu))
    }

    fn residuals(&self, predicted: &[(Option<DVector<f64>>, DVector<f64>)]) -> FrameVecs {
        (0..self.stream.t_len())
            .map(|t| {
                let rc = self.stream.common[t]
                    .as_ref()
                    .map(|z| z - predicted[t].0.as_ref().expect("common predicted"));
                let ri = &self.stream.innovation[t] - &predicted[t].1;
                (rc, ri)
            })
            .collect()
    }

    fn measurement_energy(&self) -> f64 {
        let mut e = 0.0;
        for t in 0..self.stream.t_len() {
            if let Some(z) = &self.stream.common[t] {
                e += z.norm_squared();
            }
            e += self.stream.innovation[t].norm_squared();
        }
        e
    }
}

fn residual_energy(residuals: &[(Option<DVector<f64>>, DVector<f64>)]) -> f64 {
    residuals
        .iter()
        .map(|(rc, ri)| rc.as_ref().map_or(0.0, |v| v.norm_squared()) + ri.norm_squared())
        .sum()
}

// Synthesizes the pixel-domain model from coefficients on a support.
fn synthesize_model(
    coeffs: &Coeffs,
    cfg: &RecoveryConfig,
    n: usize,
) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
    let s = coeffs.dense_cols(n);
    let d = s.ncols();
    let cols: Vec<DVector<f64>> = (0..d)
        .into_par_iter()
        .map(|i| cfg.basis_c.synthesize(&s.column(i).into_owned()))
        .collect::<Result<_>>()?;
    let mut u = DMatrix::zeros(n, d);
    for (i, col) in cols.iter().enumerate() {
        u.set_column(i, col);
    }
    let u_mu = match coeffs.dense_mu(n) {
        Some(sm) => Some(cfg.basis_mu.synthesize(&sm)?),
        None => None,
    };
    Ok((u, u_mu))
}

// Analyzes a pixel-domain back-projection into coefficient space.
fn analyze_backprojection(
    b: &DMatrix<f64>,
    b_mu: Option<&DVector<f64>>,
    cfg: &RecoveryConfig,
) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
    let d = b.ncols();
    let cols: Vec<DVector<f64>> = (0..d)
        .into_par_iter()
        .map(|i| cfg.basis_c.analyze(&b.column(i).into_owned()))
        .collect::<Result<_>>()?;
    let mut r = DMatrix::zeros(b.nrows(), d);
    for (i, col) in cols.iter().enumerate() {
        r.set_column(i, col);
    }
    let r_mu = match b_mu {
        Some(bm) => Some(cfg.basis_mu.analyze(bm)?),
        None => None,
    };
    Ok((r, r_mu))
}

// One application of the least-squares normal operator on a support.
fn normal_apply(
    ctx: &MeasurementContext<'_>,
    cfg: &RecoveryConfig,
    support: &Support,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let coeffs = Coeffs {
        support: support.clone(),
        values: u.clone(),
    };
    let with_mu = !support.mu.is_empty();
    let (dense, dense_mu) = synthesize_model(&coeffs, cfg, ctx.n)?;
    let predicted = ctx.predict(&dense, dense_mu.as_ref())?;
    let (b, b_mu) = ctx.backproject(&predicted, with_mu)?;
    let (r, r_mu) = analyze_backprojection(&b, b_mu.as_ref(), cfg)?;
    Ok(Coeffs::gather(support, &r, r_mu.as_ref()).values)
}

/// Greedy recovery of the observation matrix (and optionally the mean) from
/// all compressive measurements, given the state trajectory for every
/// measured frame.
pub fn recover_observation(
    stream: &CompressiveStream,
    states: &StateSequence,
    cfg: &RecoveryConfig,
) -> Result<RecoveredModel> {
    let n = stream.plan.n;
    let d = states.d();
    let t_len = stream.t_len();
    cfg.validate(n)?;
    if states.t_len() != t_len {
        return Err(Error::DimensionMismatch(format!(
            "states cover {} frames, stream has {t_len}",
            states.t_len()
        )));
    }
    let (h, w) = cfg.basis_c.shape();

    // The least squares is only well posed when the states excite all d
    // directions.
    let sv = crate::linalg::thin_svd(&states.x).singular_values;
    // Negated so that NaN singular values also count as degenerate.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(sv[d - 1] > 1.0e-12 * sv[0]) {
        return Err(Error::Numerical("states_not_exciting".into()));
    }

    let ctx = MeasurementContext {
        stream,
        ensemble: stream.plan.build_ensemble()?,
        states,
        n,
        d,
    };

    let with_mu = cfg.k_mu > 0;
    let mut support = Support::empty(d);
    let mut coeffs = Coeffs::zeros(support.clone());
    let mut residuals = ctx.residuals(&zero_prediction(stream));
    let baseline = ctx.measurement_energy();
    let floor = 1.0e-26 * baseline;
    let mut prev_energy = baseline;

    // Right-hand side of the normal equations is the back-projection of
    // the raw measurements; it does not change across iterations.
    let (rhs_field, rhs_field_mu) = {
        let (bz, bz_mu) = ctx.backproject(&ctx.residuals(&zero_prediction(stream)), with_mu)?;
        analyze_backprojection(&bz, bz_mu.as_ref(), cfg)?
    };

    let mut history = Vec::new();
    let mut ls_history = Vec::new();
    let mut converged = false;
    let mut cg_breakdown = false;

    for _iter in 0..cfg.max_iters {
        // Signal proxy and row energies.
        let (b, b_mu) = ctx.backproject(&residuals, with_mu)?;
        let (proxy, proxy_mu) = analyze_backprojection(&b, b_mu.as_ref(), cfg)?;

        // Support identification and merger.
        let mut merged = Support::empty(d);
        match cfg.grouping {
            Grouping::RowGroup => {
                let energies: Vec<f64> = (0..n)
                    .map(|k| (0..d).map(|i| proxy[(k, i)] * proxy[(k, i)]).sum())
                    .collect();
                let fresh = top_k_indices(&energies, 2 * cfg.k);
                let rows = merge_sorted(&support.cols[0], &fresh);
                merged.cols = vec![rows; d];
            }
            Grouping::PerColumn => {
                for i in 0..d {
                    let energies: Vec<f64> =
                        (0..n).map(|k| proxy[(k, i)] * proxy[(k, i)]).collect();
                    let fresh = top_k_indices(&energies, 2 * cfg.k);
                    merged.cols[i] = merge_sorted(&support.cols[i], &fresh);
                }
            }
        }
        if let Some(pm) = &proxy_mu {
            let energies: Vec<f64> = pm.iter().map(|v| v * v).collect();
            let fresh = top_k_indices(&energies, 2 * cfg.k_mu);
            merged.mu = merge_sorted(&support.mu, &fresh);
        }

        // Least squares over the merged support, warm-started from the
        // previous estimate so the objective cannot get worse.
        let rhs = Coeffs::gather(&merged, &rhs_field, rhs_field_mu.as_ref()).values;
        let warm = coeffs.embed_into(&merged);
        let mut apply_failed = None;
        let (solution, report) = conjugate_gradient(
            |u| match normal_apply(&ctx, cfg, &merged, u) {
                Ok(v) => v,
                Err(e) => {
                    apply_failed = Some(e);
                    DVector::from_element(u.len(), f64::NAN)
                }
            },
            &rhs,
            warm.values,
            cfg.ls_tol,
            cfg.ls_iters,
        );
        if let Some(e) = apply_failed {
            return Err(e);
        }
        if report.breakdown {
            cg_breakdown = true;
        }
        let ls_coeffs = Coeffs {
            support: merged.clone(),
            values: solution,
        };

        // Residual right after the least-squares step.
        {
            let (dense, dense_mu) = synthesize_model(&ls_coeffs, cfg, n)?;
            let predicted = ctx.predict(&dense, dense_mu.as_ref())?;
            ls_history.push(residual_energy(&ctx.residuals(&predicted)));
        }

        // Prune to the sparsity budget.
        let mut pruned = Support::empty(d);
        let merged_dense = ls_coeffs.dense_cols(n);
        match cfg.grouping {
            Grouping::RowGroup => {
                let rows = &merged.cols[0];
                let energies: Vec<f64> = rows
                    .iter()
                    .map(|&k| (0..d).map(|i| merged_dense[(k, i)].powi(2)).sum())
                    .collect();
                let keep = top_k_indices(&energies, cfg.k.min(rows.len()));
                let rows_kept: Vec<usize> = keep.iter().map(|&j| rows[j]).collect();
                pruned.cols = vec![rows_kept; d];
            }
            Grouping::PerColumn => {
                for i in 0..d {
                    let col = &merged.cols[i];
                    let energies: Vec<f64> =
                        col.iter().map(|&k| merged_dense[(k, i)].powi(2)).collect();
                    let keep = top_k_indices(&energies, cfg.k.min(col.len()));
                    pruned.cols[i] = keep.iter().map(|&j| col[j]).collect();
                }
            }
        }
        if with_mu {
            let mu_dense = ls_coeffs.dense_mu(n).unwrap_or_else(|| DVector::zeros(n));
            let energies: Vec<f64> = merged.mu.iter().map(|&k| mu_dense[k].powi(2)).collect();
            let keep = top_k_indices(&energies, cfg.k_mu.min(merged.mu.len()));
            pruned.mu = keep.iter().map(|&j| merged.mu[j]).collect();
        }
        coeffs = ls_coeffs.embed_into(&pruned);
        support = pruned;

        // New estimate and residual update.
        let (dense, dense_mu) = synthesize_model(&coeffs, cfg, n)?;
        let predicted = ctx.predict(&dense, dense_mu.as_ref())?;
        residuals = ctx.residuals(&predicted);
        let energy = residual_energy(&residuals);
        history.push(energy);

        if energy <= floor {
            converged = true;
            break;
        }
        let change = (prev_energy - energy).abs() / prev_energy.max(f64::MIN_POSITIVE);
        if change < cfg.tol {
            converged = true;
            break;
        }
        prev_energy = energy;
    }

    if cg_breakdown {
        converged = false;
    }

    let (c_hat, mu_dense) = synthesize_model(&coeffs, cfg, n)?;
    let mu_hat = mu_dense.unwrap_or_else(|| DVector::zeros(n));
    let support_union = {
        let mut all: Vec<usize> = support.cols.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    Ok(RecoveredModel {
        c_hat,
        mu_hat,
        residual_history: history,
        ls_residual_history: ls_history,
        support: support_union,
        support_mu: support.mu,
        converged,
        cg_breakdown,
        h,
        w,
    })
}

// Zero prediction with the right per-frame shapes.
fn zero_prediction(stream: &CompressiveStream) -> FrameVecs {
    (0..stream.t_len())
        .map(|t| {
            let zc = stream.common[t].as_ref().map(|z| DVector::zeros(z.len()));
            (zc, DVector::zeros(stream.innovation[t].len()))
        })
        .collect()
}
