//! Fills in frames that carry no common measurement at all: the
//! block-Hankel matrix of an LDS output is low rank, so missing blocks are
//! recovered by alternating spectral shrinkage with structure projection.
//!
//!     cargo run --release --example hankel_completion

use cslds::acquisition::{acquire, MeasurementPlan, MissingPattern};
use cslds::evaluation::energy_snr_db;
use cslds::state_estim::{build_hankel, complete_hankel};
use cslds::texture::{generate_scene, ModeSpec, SceneKind, SceneSpec};

fn main() -> cslds::Result<()> {
    let d = 10;
    let t_len = 500;
    let q = 125;
    let mut spec = SceneSpec::new(SceneKind::OscillatingModes, 8, 8, d, 19);
    spec.temporal = (0..d / 2)
        .map(|j| ModeSpec {
            magnitude: 1.0,
            phase: 0.25 + 0.45 * j as f64,
            amplitude: 1.0,
        })
        .collect();
    let (video, _, _) = generate_scene(&spec, t_len)?;

    // Reference: the fully observed Hankel matrix.
    let full_plan = MeasurementPlan::new(video.n(), t_len, 1, 0, 0.0, 5, 6, vec![])?;
    let full = acquire(&video, &full_plan)?;
    let truth = build_hankel(&full.common, q)?;

    println!("one common measurement per observed frame, depth q = {q}");
    println!(
        "{:>9} {:>16} {:>11} {:>10}",
        "missing", "hankel snr (dB)", "iterations", "converged"
    );
    for frac in [0.3, 0.5, 0.8] {
        let plan = MeasurementPlan::with_pattern(
            video.n(),
            t_len,
            1,
            0,
            0.0,
            5,
            6,
            MissingPattern::Random { frac },
        )?;
        let stream = acquire(&video, &plan)?;
        let hankel = build_hankel(&stream.common, q)?;
        let (completed, report) = complete_hankel(&hankel, d)?;
        let err = (&completed.matrix - &truth.matrix).norm_squared();
        let snr = energy_snr_db(truth.matrix.norm_squared(), err);
        println!(
            "{:>8}% {snr:>16.1} {:>11} {:>10}",
            (frac * 100.0) as usize,
            report.iterations,
            report.converged
        );
    }
    Ok(())
}
