//! Recovers the observation matrix from per-frame innovation measurements
//! with the row-group greedy solver, on a planted instance where the truth
//! is known exactly. Also shows the measurement-budget rule of thumb and
//! what happens below it.
//!
//!     cargo run --release --example observation_recovery

use cslds::acquisition::{acquire, innovation_budget, MeasurementPlan};
use cslds::lds::{StateSequence, VideoTensor};
use cslds::obs_recovery::{recover_observation, RecoveryConfig};
use cslds::transforms::{BasisKind, SparsifyingBasis};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> cslds::Result<()> {
    let (n, d, k, t_len) = (256usize, 3usize, 8usize, 37usize);
    let basis = SparsifyingBasis::new(BasisKind::Dct2d, 16, 16)?;

    // Plant C = Psi S with K shared nonzero rows across all d columns.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut rows = rand::seq::index::sample(&mut rng, n, k).into_vec();
    rows.sort_unstable();
    let mut coeffs = DMatrix::zeros(n, d);
    for &r in &rows {
        for i in 0..d {
            coeffs[(r, i)] = rng.random::<f64>() + 0.5;
        }
    }
    let mut c_true = DMatrix::zeros(n, d);
    for i in 0..d {
        c_true.set_column(i, &basis.synthesize(&coeffs.column(i).into_owned())?);
    }
    let states = StateSequence::new(DMatrix::from_fn(d, t_len, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }))?;
    let video = VideoTensor::new(&c_true * &states.x, 16, 16)?;

    let budget = innovation_budget(d, k, n, t_len)?;
    println!(
        "N = {n}, d = {d}, K = {k}: budget rule asks for {} innovation measurements per frame over T = {t_len}",
        budget.m_innov_required
    );
    println!(
        "{:>8} {:>16} {:>14}",
        "m_innov", "relative error", "support hit"
    );

    for m_innov in [budget.m_innov_required + 3, budget.m_innov_required, 4, 2] {
        let plan = MeasurementPlan::new(n, t_len, 0, m_innov, 0.0, 1, 2, vec![])?;
        let stream = acquire(&video, &plan)?;
        let cfg = RecoveryConfig::new(k, basis.clone());
        let model = recover_observation(&stream, &states, &cfg)?;
        let rel = (&model.c_hat - &c_true).norm() / c_true.norm();
        println!(
            "{m_innov:>8} {rel:>16.2e} {:>14}",
            if model.support == rows {
                "exact"
            } else {
                "missed"
            }
        );
    }
    Ok(())
}
