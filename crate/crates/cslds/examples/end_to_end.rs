//! The whole pipeline in one run at a high compression ratio: acquire a
//! two-part measurement stream, estimate states, recover the observation
//! matrix, reconstruct, and compare against the rank-d oracle fitted on the
//! ground truth.
//!
//!     cargo run --release --example end_to_end

use cslds::acquisition::{acquire, input_snr, noise_std_for_input_snr, MeasurementPlan};
use cslds::evaluation::reconstruction_snr;
use cslds::lds::{fit_oracle, VideoTensor};
use cslds::obs_recovery::{reconstruct_video, recover_observation, RecoveryConfig};
use cslds::pipeline::registered_state_snr;
use cslds::state_estim::{build_hankel, estimate_states};
use cslds::texture::{generate_scene, ModeSpec, SceneKind, SceneSpec};
use cslds::transforms::{BasisKind, SparsifyingBasis};

fn main() -> cslds::Result<()> {
    let (h, w, d, t_len) = (64usize, 64usize, 12usize, 200usize);
    let n = h * w;
    let mut spec = SceneSpec::new(SceneKind::OscillatingModes, h, w, d, 314);
    spec.temporal = (0..d / 2)
        .map(|j| ModeSpec {
            magnitude: 1.0,
            phase: 0.3 + 0.35 * j as f64,
            amplitude: 1.0,
        })
        .collect();
    spec.pixel_noise_std = 0.002;
    let (video, _, states) = generate_scene(&spec, t_len)?;

    let (m_common, m_innov) = (60usize, 45usize);
    let sigma = noise_std_for_input_snr(&video, 40.0);
    println!(
        "scene {h}x{w}, d = {d}, T = {t_len}; {} + {} measurements per frame (compression {:.0}x), input snr {:.0} dB",
        m_common,
        m_innov,
        n as f64 / (m_common + m_innov) as f64,
        input_snr(&video, sigma)?
    );

    let plan = MeasurementPlan::new(n, t_len, m_common, m_innov, sigma, 271, 272, vec![])?;
    let stream = acquire(&video, &plan)?;

    let hankel = build_hankel(&stream.common, 25)?;
    let estimate = estimate_states(&hankel, d, false)?;
    println!(
        "state snr after registration: {:.1} dB",
        registered_state_snr(&estimate.x_hat, &states.x)
    );
    let extended = estimate.extended_states(t_len)?;

    let mut cfg = RecoveryConfig::new(16, SparsifyingBasis::new(BasisKind::Dct2d, h, w)?);
    cfg.ls_iters = 40;
    let recovered = recover_observation(&stream, &extended, &cfg)?;
    let recon = reconstruct_video(&recovered, &extended)?;
    let cs_snr = reconstruction_snr(&video, &recon)?;

    let (oracle_model, oracle_states) = fit_oracle(&video, d, false)?;
    let oracle = VideoTensor::new(&oracle_model.c * &oracle_states.x, h, w)?;
    let oracle_snr = reconstruction_snr(&video, &oracle)?;

    println!(
        "video snr: {cs_snr:.1} dB from measurements vs {oracle_snr:.1} dB rank-{d} oracle (gap {:.1} dB)",
        oracle_snr - cs_snr
    );
    println!(
        "solver: {} iterations, converged = {}",
        recovered.residual_history.len(),
        recovered.converged
    );
    Ok(())
}
