//! Generates the two synthetic scene families and shows why a linear
//! dynamical model fits them: the data-matrix spectrum collapses after the
//! first `d` singular values.
//!
//!     cargo run --release --example scene_synthesis

use cslds::io::pgm::write_video_frames;
use cslds::linalg::thin_svd;
use cslds::texture::{generate_scene, SceneKind, SceneSpec};

fn main() -> cslds::Result<()> {
    let out_root = std::path::Path::new("target/examples-output/scene_synthesis");

    for (kind, name) in [
        (SceneKind::BlinkingBlobs, "blinking_blobs"),
        (SceneKind::OscillatingModes, "oscillating_modes"),
        (SceneKind::StaticPlusLds, "static_plus_lds"),
    ] {
        let d = 6;
        let spec = SceneSpec::new(kind, 32, 32, d, 2024);
        let (video, model, states) = generate_scene(&spec, 96)?;
        let dir = out_root.join(name);
        write_video_frames(&video, &dir, 255)?;

        let spectrum = thin_svd(&video.y).singular_values;
        println!("{name}: {}x{} frames, d = {}", video.h, video.w, model.d());
        println!("  frames written to {}", dir.display());
        print!("  top 12 singular values (relative):");
        for i in 0..12 {
            print!(" {:.2e}", spectrum[i] / spectrum[0]);
        }
        println!();
        println!(
            "  state range: [{:.3}, {:.3}] over {} frames\n",
            states.x.min(),
            states.x.max(),
            states.t_len()
        );
    }
    Ok(())
}
