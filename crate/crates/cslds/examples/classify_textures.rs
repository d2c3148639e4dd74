//! Classifies dynamic-texture models by the Procrustes distance between
//! their observability subspaces with a nearest-neighbor rule.
//!
//!     cargo run --release --example classify_textures

use cslds::evaluation::{nn_classify, procrustes_distance2, SubspaceDescriptor};
use cslds::pipeline::jitter_model;
use cslds::texture::{generate_scene, SceneKind, SceneSpec};

fn main() -> cslds::Result<()> {
    let d = 5;
    let classes = 3;
    let per_class = 8;
    let jitter = 0.02;

    // One blob-layout prototype per class, then jittered members.
    let mut protos = Vec::new();
    for class in 0..classes {
        let spec = SceneSpec::new(SceneKind::BlinkingBlobs, 8, 8, d, 500 + class as u64);
        let (_, model, _) = generate_scene(&spec, 2)?;
        protos.push(model);
    }

    let mut train = Vec::new();
    let mut tests = Vec::new();
    for (class, proto) in protos.iter().enumerate() {
        for j in 0..per_class as u64 {
            train.push((
                jitter_model(proto, jitter, 600 + class as u64 * 50 + j)?,
                class,
            ));
            tests.push((
                jitter_model(proto, jitter, 900 + class as u64 * 50 + j)?,
                class,
            ));
        }
    }

    // Pairwise prototype distances show the class separation.
    println!("squared procrustes distances between class prototypes:");
    let descs: Vec<SubspaceDescriptor> = protos
        .iter()
        .map(|m| SubspaceDescriptor::from_model(m, d))
        .collect::<cslds::Result<_>>()?;
    for i in 0..classes {
        print!("  class {i}:");
        for j in 0..classes {
            print!(" {:6.3}", procrustes_distance2(&descs[i], &descs[j])?);
        }
        println!();
    }

    let mut confusion = vec![vec![0usize; classes]; classes];
    for (query, truth) in &tests {
        let (label, _) = nn_classify(&train, query, d)?;
        confusion[*truth][label] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    println!(
        "\nconfusion matrix ({} train / {} test per class, {jitter} jitter):",
        per_class, per_class
    );
    for (c, row) in confusion.iter().enumerate() {
        println!("  true {c}: {row:?}");
    }
    println!(
        "accuracy: {}/{} = {:.0}%",
        correct,
        tests.len(),
        100.0 * correct as f64 / tests.len() as f64
    );
    Ok(())
}
