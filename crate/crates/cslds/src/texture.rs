//! Synthetic dynamic-texture scenes with known ground-truth models:
//! blinking blob layouts and smooth oscillatory textures, optionally over a
//! static background.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lds::{synthesize, LdsModel, StateSequence, VideoTensor};

/// Scene families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Isotropic Gaussian blobs, each with its own scalar dynamics.
    BlinkingBlobs,
    /// Smooth 2D gratings driven by rotation-scaling state pairs.
    OscillatingModes,
    /// Oscillating modes over a bright static background.
    StaticPlusLds,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blinking_blobs" => Ok(SceneKind::BlinkingBlobs),
            "oscillating_modes" => Ok(SceneKind::OscillatingModes),
            "static_plus_lds" => Ok(SceneKind::StaticPlusLds),
            other => Err(Error::Config(format!("unknown scene kind '{other}'"))),
        }
    }
}

/// Dynamics of one mode. A phase of `0` or `pi` yields a real 1x1 block
/// (`+magnitude` or `-magnitude`, the latter a frame-rate blinker); any
/// other phase yields a 2x2 rotation-scaling block consuming two state
/// dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    /// Eigenvalue magnitude, in `(0, 1]` for stability.
    pub magnitude: f64,
    /// Eigenvalue phase in radians.
    pub phase: f64,
    /// Spatial amplitude of the mode (scales its columns of `C`).
    pub amplitude: f64,
}

impl ModeSpec {
    fn state_dims(&self) -> usize {
        if self.phase == 0.0 || (self.phase - std::f64::consts::PI).abs() < 1.0e-12 {
            1
        } else {
            2
        }
    }
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub h: usize,
    pub w: usize,
    /// State dimension; the temporal descriptors must account for exactly
    /// this many dimensions.
    pub d: usize,
    /// Per-mode dynamics; leave empty to use kind-specific defaults.
    pub temporal: Vec<ModeSpec>,
    /// Blob radius / inverse grating frequency scale, in pixels.
    pub spatial_smoothness: f64,
    pub process_noise_std: f64,
    pub pixel_noise_std: f64,
    /// Euclidean norm of the static background (static_plus_lds only).
    pub mean_level: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, h: usize, w: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            h,
            w,
            d,
            temporal: Vec::new(),
            spatial_smoothness: (h.min(w) as f64 / 8.0).max(1.0),
            process_noise_std: 0.0,
            pixel_noise_std: 0.0,
            mean_level: if kind == SceneKind::StaticPlusLds {
                1.0
            } else {
                0.0
            },
            seed,
        }
    }

    fn default_temporal(&self) -> Vec<ModeSpec> {
        let mut modes = Vec::new();
        match self.kind {
            SceneKind::BlinkingBlobs => {
                // Alternating steady and blinking blobs with staggered
                // decay rates.
                for j in 0..self.d {
                    let magnitude = 0.9 + 0.08 * (j as f64 / self.d.max(1) as f64);
                    let phase = if j % 2 == 1 {
                        std::f64::consts::PI
                    } else {
                        0.0
                    };
                    modes.push(ModeSpec {
                        magnitude,
                        phase,
                        amplitude: 1.0,
                    });
                }
            }
            SceneKind::OscillatingModes | SceneKind::StaticPlusLds => {
                let pairs = self.d / 2;
                for j in 0..pairs {
                    let spread = if pairs > 1 {
                        j as f64 / (pairs - 1) as f64
                    } else {
                        0.0
                    };
                    modes.push(ModeSpec {
                        magnitude: 0.995 - 0.015 * spread,
                        phase: 0.25 + 1.1 * spread,
                        amplitude: 0.92_f64.powi(j as i32),
                    });
                }
                if self.d % 2 == 1 {
                    modes.push(ModeSpec {
                        magnitude: 0.97,
                        phase: 0.0,
                        amplitude: 0.92_f64.powi(pairs as i32),
                    });
                }
            }
        }
        modes
    }
}

/// Generates a scene: builds spatial modes as columns of `C`, a
/// block-diagonal `A` from the temporal descriptors, then simulates the
/// model for `t_len` frames. The ground-truth model and states are
/// returned for evaluation.
pub fn generate_scene(
    spec: &SceneSpec,
    t_len: usize,
) -> Result<(VideoTensor, LdsModel, StateSequence)> {
    let n = spec.h * spec.w;
    if spec.d == 0 || spec.d > n {
        return Err(Error::Config(format!(
            "mode count {} out of range for a {}x{} scene",
            spec.d, spec.h, spec.w
        )));
    }
    if spec.kind != SceneKind::BlinkingBlobs && 2 * spec.d + 1 > n {
        return Err(Error::Config(format!(
            "grating scenes need 2d+1 <= N distinct frequencies, got d={} for N={n}",
            spec.d
        )));
    }
    let temporal = if spec.temporal.is_empty() {
        spec.default_temporal()
    } else {
        spec.temporal.clone()
    };
    let dims: usize = temporal.iter().map(ModeSpec::state_dims).sum();
    if dims != spec.d {
        return Err(Error::Config(format!(
            "temporal descriptors cover {dims} state dimensions, scene declares {}",
            spec.d
        )));
    }
    for mode in &temporal {
        if !(mode.magnitude > 0.0 && mode.magnitude <= 1.0) {
            return Err(Error::Config(format!(
                "unstable or degenerate eigenvalue magnitude {}",
                mode.magnitude
            )));
        }
        if mode.amplitude <= 0.0 {
            return Err(Error::Config("mode amplitudes must be positive".into()));
        }
    }

    let mut pattern_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pattern_rng.set_stream(10);
    // Grating scenes draw their frequency pairs as a seeded random subset
    // of the low-frequency pool, so different seeds give different
    // subspaces.
    let atom_order: Vec<usize> = {
        let mut pool: Vec<usize> = (0..2 * spec.d).collect();
        if spec.kind != SceneKind::BlinkingBlobs {
            let extra = (4 * spec.d).min(n - 1);
            pool = (0..extra).collect();
            pool.shuffle(&mut pattern_rng);
            pool.truncate(2 * spec.d);
        }
        pool
    };

    // Transition matrix: 1x1 blocks for real modes, rotation-scaling
    // blocks for complex pairs.
    let mut a = DMatrix::zeros(spec.d, spec.d);
    let mut c = DMatrix::zeros(n, spec.d);
    let mut dim = 0;
    for (j, mode) in temporal.iter().enumerate() {
        if mode.state_dims() == 1 {
            let sign = if mode.phase == 0.0 { 1.0 } else { -1.0 };
            a[(dim, dim)] = sign * mode.magnitude;
            let pattern = spatial_pattern(spec, atom_order[2 * j], &mut pattern_rng);
            c.set_column(dim, &(pattern * mode.amplitude));
            dim += 1;
        } else {
            let (cos, sin) = (mode.phase.cos(), mode.phase.sin());
            a[(dim, dim)] = mode.magnitude * cos;
            a[(dim, dim + 1)] = -mode.magnitude * sin;
            a[(dim + 1, dim)] = mode.magnitude * sin;
            a[(dim + 1, dim + 1)] = mode.magnitude * cos;
            let p0 = spatial_pattern(spec, atom_order[2 * j], &mut pattern_rng);
            let p1 = spatial_pattern(spec, atom_order[2 * j + 1], &mut pattern_rng);
            c.set_column(dim, &(p0 * mode.amplitude));
            c.set_column(dim + 1, &(p1 * mode.amplitude));
            dim += 2;
        }
    }

    let mu = if spec.kind == SceneKind::StaticPlusLds && spec.mean_level > 0.0 {
        background(spec) * spec.mean_level
    } else {
        DVector::zeros(n)
    };

    let model = LdsModel::new(
        c,
        a,
        mu,
        spec.process_noise_std,
        spec.pixel_noise_std,
        spec.h,
        spec.w,
    )?;

    let mut x1_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    x1_rng.set_stream(11);
    let x1 = DVector::from_fn(spec.d, |_, _| {
        x1_rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
    .normalize();

    let (video, states) = synthesize(&model, &x1, t_len, spec.seed)?;
    Ok((video, model, states))
}

// Unit-norm spatial pattern for the given atom index (gratings) or the
// next seeded blob position (blobs).
fn spatial_pattern(spec: &SceneSpec, pattern_id: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let n = spec.h * spec.w;
    let raw = match spec.kind {
        SceneKind::BlinkingBlobs => {
            // Blob centers keep one smoothness radius of margin.
            let margin = spec.spatial_smoothness.min(spec.h.min(spec.w) as f64 / 4.0);
            let cy = margin + rng.random::<f64>() * (spec.h as f64 - 2.0 * margin);
            let cx = margin + rng.random::<f64>() * (spec.w as f64 - 2.0 * margin);
            let s2 = 2.0 * spec.spatial_smoothness * spec.spatial_smoothness;
            DVector::from_fn(n, |idx, _| {
                let r = (idx % spec.h) as f64;
                let col = (idx / spec.h) as f64;
                (-((r - cy).powi(2) + (col - cx).powi(2)) / s2).exp()
            })
        }
        SceneKind::OscillatingModes | SceneKind::StaticPlusLds => {
            // Separable half-sample cosine gratings at distinct low
            // frequency pairs: mutually orthogonal, so columns are
            // guaranteed independent, and each is a single coefficient in
            // a 2D DCT expansion.
            let (kr, kc) = grating_frequency(pattern_id, spec.h, spec.w);
            let alpha_r = if kr == 0 {
                (1.0 / spec.h as f64).sqrt()
            } else {
                (2.0 / spec.h as f64).sqrt()
            };
            let alpha_c = if kc == 0 {
                (1.0 / spec.w as f64).sqrt()
            } else {
                (2.0 / spec.w as f64).sqrt()
            };
            DVector::from_fn(n, |idx, _| {
                let r = (idx % spec.h) as f64;
                let col = (idx / spec.h) as f64;
                alpha_r
                    * alpha_c
                    * (std::f64::consts::PI * kr as f64 * (2.0 * r + 1.0) / (2.0 * spec.h as f64))
                        .cos()
                    * (std::f64::consts::PI * kc as f64 * (2.0 * col + 1.0) / (2.0 * spec.w as f64))
                        .cos()
            })
        }
    };
    let norm = raw.norm();
    raw / norm.max(f64::MIN_POSITIVE)
}

// Distinct low spatial frequency pairs in diagonal enumeration order,
// skipping (0, 0) which is reserved for the static background.
fn grating_frequency(pattern_index: usize, h: usize, w: usize) -> (usize, usize) {
    let mut count = 0;
    for s in 1.. {
        for kr in 0..=s {
            let kc = s - kr;
            if kr >= h || kc >= w {
                continue;
            }
            if count == pattern_index {
                return (kr, kc);
            }
            count += 1;
        }
    }
    unreachable!()
}

// Smooth unit-norm background: a broad centered bump.
fn background(spec: &SceneSpec) -> DVector<f64> {
    let n = spec.h * spec.w;
    let (cy, cx) = (spec.h as f64 / 2.0, spec.w as f64 / 2.0);
    let s2 = 0.5 * (spec.h as f64 * spec.w as f64).sqrt();
    let raw = DVector::from_fn(n, |idx, _| {
        let r = (idx % spec.h) as f64;
        let c = (idx / spec.h) as f64;
        1.0 + (-((r - cy).powi(2) + (c - cx).powi(2)) / (2.0 * s2 * s2)).exp()
    });
    let norm = raw.norm();
    raw / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::is_observable;
    use crate::linalg;

    #[test]
    fn blinking_blobs_are_exactly_low_rank() {
        let spec = SceneSpec::new(SceneKind::BlinkingBlobs, 16, 16, 6, 3);
        let (video, _, _) = generate_scene(&spec, 40).unwrap();
        let svd = linalg::thin_svd(&video.y);
        let s1 = svd.singular_values[0];
        for i in 6..20 {
            assert!(
                svd.singular_values[i] < 1e-8 * s1,
                "sigma_{} = {:e}",
                i + 1,
                svd.singular_values[i] / s1
            );
        }
    }

    #[test]
    fn static_single_mode_gives_constant_video() {
        let mut spec = SceneSpec::new(SceneKind::BlinkingBlobs, 8, 8, 1, 5);
        spec.temporal = vec![ModeSpec {
            magnitude: 1.0,
            phase: 0.0,
            amplitude: 1.0,
        }];
        let (video, _, _) = generate_scene(&spec, 10).unwrap();
        let first = video.y.column(0).into_owned();
        for t in 1..10 {
            assert!((video.y.column(t) - &first).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_pairs_preserve_state_energy() {
        let mut spec = SceneSpec::new(SceneKind::OscillatingModes, 8, 8, 4, 7);
        spec.temporal = vec![
            ModeSpec {
                magnitude: 1.0,
                phase: 0.4,
                amplitude: 1.0,
            },
            ModeSpec {
                magnitude: 1.0,
                phase: 0.9,
                amplitude: 0.7,
            },
        ];
        let (_, model, states) = generate_scene(&spec, 60).unwrap();
        // Brute-force iteration oracle plus per-pair energy conservation.
        let mut x = states.x.column(0).into_owned();
        for t in 0..60 {
            assert!((states.x.column(t) - &x).norm() < 1e-10);
            for pair in 0..2 {
                let e0 = states.x[(2 * pair, 0)].hypot(states.x[(2 * pair + 1, 0)]);
                let et = states.x[(2 * pair, t)].hypot(states.x[(2 * pair + 1, t)]);
                assert!((et - e0).abs() < 1e-10);
            }
            x = &model.a * x;
        }
    }

    #[test]
    fn unstable_modes_rejected() {
        let mut spec = SceneSpec::new(SceneKind::OscillatingModes, 8, 8, 2, 1);
        spec.temporal = vec![ModeSpec {
            magnitude: 1.05,
            phase: 0.5,
            amplitude: 1.0,
        }];
        assert!(generate_scene(&spec, 10).is_err());
    }

    #[test]
    fn generated_models_are_observable() {
        for (kind, d) in [
            (SceneKind::BlinkingBlobs, 5),
            (SceneKind::OscillatingModes, 6),
            (SceneKind::StaticPlusLds, 4),
        ] {
            let spec = SceneSpec::new(kind, 16, 16, d, 11);
            let (_, model, _) = generate_scene(&spec, 8).unwrap();
            let (ok, report) = is_observable(&model.c, &model.a).unwrap();
            assert!(ok, "{kind:?} ratio {}", report.ratio);
        }
    }

    #[test]
    fn noiseless_data_matrix_rank_equals_d() {
        let spec = SceneSpec::new(SceneKind::OscillatingModes, 16, 16, 6, 13);
        let (video, _, _) = generate_scene(&spec, 50).unwrap();
        let svd = linalg::thin_svd(&video.y);
        let s1 = svd.singular_values[0];
        assert!(svd.singular_values[5] > 1e-10 * s1);
        assert!(svd.singular_values[6] < 1e-10 * s1);
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let mut spec = SceneSpec::new(SceneKind::StaticPlusLds, 8, 8, 4, 17);
        spec.pixel_noise_std = 0.01;
        spec.process_noise_std = 0.02;
        let (v1, m1, s1) = generate_scene(&spec, 20).unwrap();
        let (v2, m2, s2) = generate_scene(&spec, 20).unwrap();
        assert_eq!(v1.y, v2.y);
        assert_eq!(m1.c, m2.c);
        assert_eq!(s1.x, s2.x);
    }

    #[test]
    fn static_background_raises_mean() {
        let mut spec = SceneSpec::new(SceneKind::StaticPlusLds, 8, 8, 2, 19);
        spec.mean_level = 5.0;
        let (_, model, _) = generate_scene(&spec, 10).unwrap();
        assert!((model.mu.norm() - 5.0).abs() < 1e-12);
    }
}
