//! Recovers the state trajectory of a scene from a handful of fixed
//! ("common") compressive measurements per frame via block-Hankel SVD,
//! and shows how accuracy scales with the number of measurements.
//!
//!     cargo run --release --example state_estimation

use cslds::acquisition::{acquire, noise_std_for_input_snr, MeasurementPlan};
use cslds::pipeline::registered_state_snr;
use cslds::state_estim::{build_hankel, estimate_states};
use cslds::texture::{generate_scene, ModeSpec, SceneKind, SceneSpec};

fn main() -> cslds::Result<()> {
    let d = 10;
    let t_len = 500;
    let mut spec = SceneSpec::new(SceneKind::OscillatingModes, 8, 8, d, 7);
    // Energy-preserving rotations keep every mode excited for the whole
    // clip.
    spec.temporal = (0..d / 2)
        .map(|j| ModeSpec {
            magnitude: 1.0,
            phase: 0.3 + 0.4 * j as f64,
            amplitude: 1.0,
        })
        .collect();
    let (video, _, states) = generate_scene(&spec, t_len)?;
    let sigma = noise_std_for_input_snr(&video, 40.0);
    println!(
        "scene: {}x{}, d = {d}, T = {t_len}, input snr 40 dB",
        video.h, video.w
    );
    println!("{:>9} {:>7} {:>16}", "m_common", "depth", "state snr (dB)");

    for m_common in [1usize, 2, 4, 8] {
        // Deeper Hankel blocks average more noise; keep the row count
        // roughly constant across the sweep.
        let q = (50 / m_common).max(2 * d / m_common + 1);
        let plan = MeasurementPlan::new(video.n(), t_len, m_common, 0, sigma, 11, 12, vec![])?;
        let stream = acquire(&video, &plan)?;
        let hankel = build_hankel(&stream.common, q)?;
        let estimate = estimate_states(&hankel, d, false)?;
        let snr = registered_state_snr(&estimate.x_hat, &states.x);
        println!("{m_common:>9} {q:>7} {snr:>16.2}");
    }
    Ok(())
}
