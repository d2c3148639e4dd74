//! Scenes with a bright static background: the measurement mean is removed
//! before the state SVD, and the background is recovered jointly with the
//! observation matrix as an extra constant-coefficient column with its own
//! wavelet sparsity budget.
//!
//!     cargo run --release --example mean_plus_lds

use cslds::acquisition::{acquire, MeasurementPlan};
use cslds::evaluation::reconstruction_snr;
use cslds::obs_recovery::{reconstruct_video, recover_observation, RecoveryConfig};
use cslds::state_estim::{build_hankel, estimate_states};
use cslds::texture::{generate_scene, SceneKind, SceneSpec};
use cslds::transforms::{BasisKind, SparsifyingBasis};

fn main() -> cslds::Result<()> {
    let d = 6;
    let t_len = 150;
    let mut spec = SceneSpec::new(SceneKind::StaticPlusLds, 16, 16, d, 99);
    spec.mean_level = 4.0; // background carries most of the energy
    let (video, model, _) = generate_scene(&spec, t_len)?;
    println!(
        "scene: {}x{}, d = {d}, background norm {:.1}, dynamic part norm {:.1}",
        video.h,
        video.w,
        model.mu.norm(),
        model.c.norm()
    );

    let plan = MeasurementPlan::new(video.n(), t_len, 3 * d, 140, 0.0, 31, 32, vec![])?;
    let stream = acquire(&video, &plan)?;

    // De-meaned Hankel factorization, then joint recovery of C and mu.
    let hankel = build_hankel(&stream.common, d)?;
    let estimate = estimate_states(&hankel, d, true)?;
    println!(
        "sample measurement mean stored: {} channels",
        estimate.z_bar.as_ref().map_or(0, |z| z.len())
    );
    let extended = estimate.extended_states(t_len)?;

    for (label, k_mu) in [("without mean term", 0usize), ("with mean term", 40)] {
        let mut cfg = RecoveryConfig::new(90, SparsifyingBasis::new(BasisKind::Dct2d, 16, 16)?);
        cfg.k_mu = k_mu;
        cfg.basis_mu = SparsifyingBasis::new(BasisKind::Haar2d, 16, 16)?;
        let recovered = recover_observation(&stream, &extended, &cfg)?;
        let recon = reconstruct_video(&recovered, &extended)?;
        let snr = reconstruction_snr(&video, &recon)?;
        println!(
            "{label:>18}: video snr {snr:6.1} dB (background error {:.2e})",
            (&recovered.mu_hat - &model.mu).norm() / model.mu.norm()
        );
    }
    Ok(())
}
