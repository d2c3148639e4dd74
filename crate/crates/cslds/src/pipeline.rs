//! Config-driven experiment pipeline: generate, acquire, recover, evaluate,
//! classify and sweep, each emitting reproducible artifacts and plot-ready
//! CSV. All randomness derives from the configured seed; re-running a
//! config reproduces every artifact exactly.

use std::fs;
use std::ops::AddAssign;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::{
    acquire, innovation_budget, input_snr, noise_std_for_input_snr, MeasurementPlan, MissingPattern,
};
use crate::error::{Error, Result};
use crate::evaluation::{nn_classify, reconstruction_snr};
use crate::io::config::KvConfig;
use crate::io::container;
use crate::io::csv::{format_float, write_csv};
use crate::io::pgm;
use crate::lds::{fit_oracle, LdsModel, StateSequence, VideoTensor};
use crate::linalg;
use crate::obs_recovery::{reconstruct_video, recover_observation, Grouping, RecoveryConfig};
use crate::state_estim::{build_hankel, complete_hankel, estimate_states};
use crate::texture::{generate_scene, SceneKind, SceneSpec};
use crate::transforms::{BasisKind, SparsifyingBasis};

/// Column order of every per-trial CSV produced by the pipeline.
pub const TRIAL_CSV_HEADER: [&str; 15] = [
    "trial",
    "seed",
    "N",
    "T",
    "d",
    "q",
    "K",
    "M_common",
    "M_innov",
    "missing_frac",
    "noise_std",
    "input_snr_db",
    "state_snr_db",
    "video_snr_db",
    "wall_ms",
];

/// One CSV row of a pipeline run.
#[derive(Debug, Clone)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub t_len: usize,
    pub d: usize,
    pub q: usize,
    pub k: usize,
    pub m_common: usize,
    pub m_innov: usize,
    pub missing_frac: f64,
    pub noise_std: f64,
    pub input_snr_db: f64,
    pub state_snr_db: f64,
    pub video_snr_db: f64,
    pub wall_ms: f64,
}

impl TrialRow {
    pub fn to_fields(&self) -> Vec<String> {
        vec![
            self.trial.to_string(),
            self.seed.to_string(),
            self.n.to_string(),
            self.t_len.to_string(),
            self.d.to_string(),
            self.q.to_string(),
            self.k.to_string(),
            self.m_common.to_string(),
            self.m_innov.to_string(),
            format_float(self.missing_frac),
            format_float(self.noise_std),
            format_float(self.input_snr_db),
            format_float(self.state_snr_db),
            format_float(self.video_snr_db),
            format_float(self.wall_ms),
        ]
    }
}

/// Measurement-noise level: either a raw standard deviation or a
/// target input SNR realized against the generated video.
#[derive(Debug, Clone, Copy)]
pub enum NoiseLevel {
    Std(f64),
    TargetInputSnrDb(f64),
}

/// Recovery-side parameters (basis kinds rather than bound bases; the
/// bases are instantiated against the video dimensions).
#[derive(Debug, Clone)]
pub struct RecoverParams {
    pub d: usize,
    pub q: usize,
    pub k: usize,
    pub k_mu: usize,
    pub basis_c: BasisKind,
    pub basis_mu: BasisKind,
    pub max_iters: usize,
    pub tol: f64,
    pub ls_iters: usize,
    pub ls_tol: f64,
    pub grouping: Grouping,
    pub remove_mean: bool,
}

impl RecoverParams {
    pub fn build_config(&self, h: usize, w: usize) -> Result<RecoveryConfig> {
        let basis_c = SparsifyingBasis::new(self.basis_c, h, w)?;
        let basis_mu = SparsifyingBasis::new(self.basis_mu, h, w)?;
        let mut cfg = RecoveryConfig::new(self.k, basis_c);
        cfg.k_mu = self.k_mu;
        cfg.basis_mu = basis_mu;
        cfg.max_iters = self.max_iters;
        cfg.tol = self.tol;
        cfg.ls_iters = self.ls_iters;
        cfg.ls_tol = self.ls_tol;
        cfg.grouping = self.grouping;
        Ok(cfg)
    }
}

/// Everything one end-to-end trial needs.
#[derive(Debug, Clone)]
pub struct TrialParams {
    pub scene: SceneSpec,
    pub t_len: usize,
    pub m_common: usize,
    pub m_innov: usize,
    pub noise: NoiseLevel,
    pub missing: MissingPattern,
    pub recover: RecoverParams,
    pub trial: usize,
    pub seed: u64,
}

/// Deterministic seed derivation (splitmix64 on a salted base).
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Registered state-sequence SNR: best linear map of the estimated states
/// onto the true states over the frames both cover.
pub fn registered_state_snr(x_hat: &DMatrix<f64>, x_true: &DMatrix<f64>) -> f64 {
    let t = x_hat.ncols().min(x_true.ncols());
    let est = x_hat.columns(0, t);
    let truth = x_true.columns(0, t).into_owned();
    let (p, _) = linalg::pinv(&est.into_owned(), 1.0e-12);
    let l = &truth * p;
    let aligned = l * x_hat.columns(0, t);
    let err = (&aligned - &truth).norm_squared();
    crate::evaluation::energy_snr_db(truth.norm_squared(), err)
}

/// Intermediate products of one trial, for callers that want more than the
/// CSV row.
pub struct TrialArtifacts {
    pub video: VideoTensor,
    pub model: LdsModel,
    pub states: StateSequence,
    pub stream: crate::acquisition::CompressiveStream,
    pub estimate: crate::state_estim::StateEstimate,
    pub extended: StateSequence,
    pub recovered: crate::obs_recovery::RecoveredModel,
    pub reconstruction: VideoTensor,
}

/// Runs one full pipeline pass: generate, acquire, estimate states
/// (completing the Hankel matrix when frames are missing), recover the
/// observation matrix, reconstruct, and score.
pub fn run_trial(params: &TrialParams) -> Result<(TrialRow, TrialArtifacts)> {
    let start = Instant::now();
    let mut scene = params.scene.clone();
    scene.seed = derive_seed(params.seed, 0xA11CE);
    let (video, model, states) = generate_scene(&scene, params.t_len)?;

    let noise_std = match params.noise {
        NoiseLevel::Std(s) => s,
        NoiseLevel::TargetInputSnrDb(snr) => noise_std_for_input_snr(&video, snr),
    };
    let plan = MeasurementPlan::with_pattern(
        video.n(),
        params.t_len,
        params.m_common,
        params.m_innov,
        noise_std,
        derive_seed(params.seed, 0xE15),
        derive_seed(params.seed, 0x0153),
        params.missing,
    )?;
    let stream = acquire(&video, &plan)?;

    let rec = &params.recover;
    let hankel = build_hankel(&stream.common, rec.q)?;
    let complete = if hankel.is_complete() {
        hankel
    } else {
        complete_hankel(&hankel, rec.d)?.0
    };
    let estimate = estimate_states(&complete, rec.d, rec.remove_mean)?;
    let state_snr_db = registered_state_snr(&estimate.x_hat, &states.x);
    let extended = estimate.extended_states(params.t_len)?;

    let cfg = rec.build_config(video.h, video.w)?;
    let recovered = recover_observation(&stream, &extended, &cfg)?;
    let reconstruction = reconstruct_video(&recovered, &extended)?;
    let video_snr_db = reconstruction_snr(&video, &reconstruction)?;

    let row = TrialRow {
        trial: params.trial,
        seed: params.seed,
        n: video.n(),
        t_len: params.t_len,
        d: rec.d,
        q: rec.q,
        k: rec.k,
        m_common: params.m_common,
        m_innov: params.m_innov,
        missing_frac: plan.missing_fraction(),
        noise_std,
        input_snr_db: input_snr(&video, noise_std)?,
        state_snr_db,
        video_snr_db,
        wall_ms: start.elapsed().as_secs_f64() * 1.0e3,
    };
    Ok((
        row,
        TrialArtifacts {
            video,
            model,
            states,
            stream,
            estimate,
            extended,
            recovered,
            reconstruction,
        },
    ))
}

// ---------------------------------------------------------------------
// Config parsing.

fn scene_from_config(cfg: &KvConfig, seed: u64) -> Result<(SceneSpec, usize)> {
    let kind: SceneKind = cfg.require_parsed("scene.kind")?;
    let h = cfg.require_parsed("scene.h")?;
    let w = cfg.require_parsed("scene.w")?;
    let d = cfg.require_parsed("scene.d")?;
    let t_len = cfg.require_parsed("scene.t")?;
    let mut spec = SceneSpec::new(kind, h, w, d, seed);
    spec.spatial_smoothness = cfg.parsed_or("scene.smoothness", spec.spatial_smoothness)?;
    spec.process_noise_std = cfg.parsed_or("scene.process_noise_std", 0.0)?;
    spec.pixel_noise_std = cfg.parsed_or("scene.pixel_noise_std", 0.0)?;
    spec.mean_level = cfg.parsed_or("scene.mean_level", spec.mean_level)?;
    Ok((spec, t_len))
}

fn noise_from_config(cfg: &KvConfig) -> Result<NoiseLevel> {
    match (cfg.get("plan.noise_std"), cfg.get("plan.input_snr_db")) {
        (Some(_), Some(_)) => Err(Error::Config(
            "set either plan.noise_std or plan.input_snr_db, not both".into(),
        )),
        (Some(s), None) => {
            Ok(NoiseLevel::Std(s.parse().map_err(|_| {
                Error::Config(format!("bad value '{s}' for plan.noise_std"))
            })?))
        }
        (None, Some(s)) => Ok(NoiseLevel::TargetInputSnrDb(s.parse().map_err(|_| {
            Error::Config(format!("bad value '{s}' for plan.input_snr_db"))
        })?)),
        (None, None) => Ok(NoiseLevel::Std(0.0)),
    }
}

fn recover_from_config(cfg: &KvConfig) -> Result<RecoverParams> {
    let d = cfg.require_parsed("recover.d")?;
    let k = cfg.require_parsed("recover.k")?;
    let k_mu = cfg.parsed_or("recover.k_mu", 0usize)?;
    Ok(RecoverParams {
        d,
        q: cfg.parsed_or("recover.q", d)?,
        k,
        k_mu,
        basis_c: cfg.parsed_or("recover.basis_c", BasisKind::Dct2d)?,
        basis_mu: cfg.parsed_or("recover.basis_mu", BasisKind::Haar2d)?,
        max_iters: cfg.parsed_or("recover.max_iters", 50usize)?,
        tol: cfg.parsed_or("recover.tol", 1.0e-6)?,
        ls_iters: cfg.parsed_or("recover.ls_iters", 200usize)?,
        ls_tol: cfg.parsed_or("recover.ls_tol", 1.0e-10)?,
        grouping: cfg.parsed_or("recover.grouping", Grouping::RowGroup)?,
        remove_mean: cfg.parsed_or("recover.remove_mean", k_mu > 0)?,
    })
}

// Innovation count, honoring `plan.m_innov = auto` via the measurement
// budget rule.
fn innovation_from_config(cfg: &KvConfig, n: usize, t_len: usize) -> Result<usize> {
    match cfg.get("plan.m_innov") {
        Some("auto") => {
            let d = cfg.require_parsed("recover.d")?;
            let k = cfg.require_parsed("recover.k")?;
            Ok(innovation_budget(d, k, n, t_len)?.m_innov_required)
        }
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::Config(format!("bad value '{raw}' for plan.m_innov"))),
        None => Err(Error::Config("missing required key 'plan.m_innov'".into())),
    }
}

fn base_seed(cfg: &KvConfig) -> Result<u64> {
    // Seeds are mandatory; nothing falls back to wall-clock time.
    cfg.require_parsed("seed")
}

fn out_file(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}

fn ensure_out(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Commands.

/// Generates a scene: video, ground-truth model and states in CSLD
/// containers plus viewable PGM frames.
pub fn cmd_generate(cfg: &KvConfig, out_dir: &Path) -> Result<()> {
    ensure_out(out_dir)?;
    let seed = base_seed(cfg)?;
    let (spec, t_len) = scene_from_config(cfg, derive_seed(seed, 0xA11CE))?;
    let (video, model, states) = generate_scene(&spec, t_len)?;
    container::write_video(&video, &out_file(out_dir, "video.csld"))?;
    container::write_model(&model, &out_file(out_dir, "model.csld"))?;
    container::write_states(&states, &out_file(out_dir, "states.csld"))?;
    pgm::write_video_frames(&video, &out_dir.join("frames"), 255)?;
    println!(
        "generate: {}x{} x {} frames, d={}, wrote {}",
        video.h,
        video.w,
        video.t_len(),
        model.d(),
        out_dir.display()
    );
    Ok(())
}

/// Acquires compressive measurements of a generated (or supplied) video.
pub fn cmd_acquire(cfg: &KvConfig, out_dir: &Path) -> Result<()> {
    ensure_out(out_dir)?;
    let seed = base_seed(cfg)?;
    let video_path = match cfg.get("input") {
        Some(p) => PathBuf::from(p),
        None => out_file(out_dir, "video.csld"),
    };
    let video = container::read_video(&video_path)?;
    let n = video.n();
    let t_len = video.t_len();
    let m_common = cfg.require_parsed("plan.m_common")?;
    let m_innov = innovation_from_config(cfg, n, t_len)?;
    let noise_std = match noise_from_config(cfg)? {
        NoiseLevel::Std(s) => s,
        NoiseLevel::TargetInputSnrDb(snr) => noise_std_for_input_snr(&video, snr),
    };
    let missing: MissingPattern = cfg.parsed_or("plan.missing", MissingPattern::None)?;
    let plan = MeasurementPlan::with_pattern(
        n,
        t_len,
        m_common,
        m_innov,
        noise_std,
        derive_seed(seed, 0xE15),
        derive_seed(seed, 0x0153),
        missing,
    )?;
    let stream = acquire(&video, &plan)?;
    container::write_stream(&stream, &out_file(out_dir, "stream.csld"))?;
    println!(
        "acquire: M_common={m_common} M_innov={m_innov} noise_std={} missing={}/{} -> stream.csld",
        format_float(noise_std),
        plan.missing_set.len(),
        t_len
    );
    Ok(())
}

/// Recovers states and observation matrix from a stream file and writes
/// the reconstruction.
pub fn cmd_recover(cfg: &KvConfig, out_dir: &Path) -> Result<()> {
    ensure_out(out_dir)?;
    let stream_path = match cfg.get("input") {
        Some(p) => PathBuf::from(p),
        None => out_file(out_dir, "stream.csld"),
    };
    let stream = container::read_stream(&stream_path)?;
    let rec = recover_from_config(cfg)?;

    let hankel = build_hankel(&stream.common, rec.q)?;
    let complete = if hankel.is_complete() {
        hankel
    } else {
        let (done, report) = complete_hankel(&hankel, rec.d)?;
        println!(
            "recover: hankel completion {} after {} iterations",
            if report.converged {
                "converged"
            } else {
                "did not converge"
            },
            report.iterations
        );
        done
    };
    let estimate = estimate_states(&complete, rec.d, rec.remove_mean)?;
    let extended = estimate.extended_states(stream.t_len())?;

    // Spectrum for scree plots.
    let spectrum_rows: Vec<Vec<String>> = estimate
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| vec![(i + 1).to_string(), format_float(s)])
        .collect();
    write_csv(
        &out_file(out_dir, "spectrum.csv"),
        &["index", "singular_value"],
        &spectrum_rows,
    )?;

    // Infer spatial dims: prefer the generated video if present.
    let (h, w) = match container::read_video(&out_file(out_dir, "video.csld")) {
        Ok(v) => (v.h, v.w),
        Err(_) => {
            let h = cfg.parsed_or("scene.h", 1usize)?;
            let w = cfg.parsed_or("scene.w", stream.plan.n)?;
            if h * w != stream.plan.n {
                (1, stream.plan.n)
            } else {
                (h, w)
            }
        }
    };

    let rcfg = rec.build_config(h, w)?;
    let recovered = recover_observation(&stream, &extended, &rcfg)?;
    let reconstruction = reconstruct_video(&recovered, &extended)?;

    container::write_state_estimate(&estimate, &out_file(out_dir, "state_estimate.csld"))?;
    container::write_recovered_model(&recovered, &out_file(out_dir, "recovered_model.csld"))?;
    container::write_video(&reconstruction, &out_file(out_dir, "reconstruction.csld"))?;
    pgm::write_video_frames(&reconstruction, &out_dir.join("recon_frames"), 255)?;
    let residual_rows: Vec<Vec<String>> = recovered
        .residual_history
        .iter()
        .zip(&recovered.ls_residual_history)
        .enumerate()
        .map(|(i, (&r, &l))| vec![(i + 1).to_string(), format_float(l), format_float(r)])
        .collect();
    write_csv(
        &out_file(out_dir, "residuals.csv"),
        &["iteration", "after_least_squares", "after_prune"],
        &residual_rows,
    )?;
    println!(
        "recover: d={} q={} K={} iters={} converged={}",
        rec.d,
        rec.q,
        rec.k,
        recovered.residual_history.len(),
        recovered.converged
    );
    Ok(())
}

/// Scores a reconstruction against the ground truth and the oracle model.
pub fn cmd_evaluate(cfg: &KvConfig, out_dir: &Path) -> Result<()> {
    ensure_out(out_dir)?;
    let video = container::read_video(&out_file(out_dir, "video.csld"))?;
    let recon = container::read_video(&out_file(out_dir, "reconstruction.csld"))?;
    let states = container::read_states(&out_file(out_dir, "states.csld"))?;
    let estimate = container::read_state_estimate(&out_file(out_dir, "state_estimate.csld"))?;
    let stream = container::read_stream(&out_file(out_dir, "stream.csld"))?;
    let rec = recover_from_config(cfg)?;

    let video_snr = reconstruction_snr(&video, &recon)?;
    let state_snr = registered_state_snr(&estimate.x_hat, &states.x);

    // Oracle: rank-d fit on the ground-truth frames.
    let (oracle_model, oracle_states) = fit_oracle(&video, rec.d, rec.remove_mean)?;
    let mut oracle_frames = &oracle_model.c * &oracle_states.x;
    for t in 0..oracle_frames.ncols() {
        oracle_frames.column_mut(t).add_assign(&oracle_model.mu);
    }
    let oracle_video = VideoTensor::new(oracle_frames, video.h, video.w)?;
    let oracle_snr = reconstruction_snr(&video, &oracle_video)?;

    // Frame-agnostic baseline: every frame is the temporal mean.
    let mut mean = DVector::zeros(video.n());
    for t in 0..video.t_len() {
        mean += video.y.column(t);
    }
    mean /= video.t_len() as f64;
    let mut baseline_frames = DMatrix::zeros(video.n(), video.t_len());
    for t in 0..video.t_len() {
        baseline_frames.set_column(t, &mean);
    }
    let baseline_video = VideoTensor::new(baseline_frames, video.h, video.w)?;
    let baseline_snr = reconstruction_snr(&video, &baseline_video)?;

    // The stream file stores noise baked into the values, so recompute the
    // configured noise level against the truth video.
    let noise_std = match noise_from_config(cfg)? {
        NoiseLevel::Std(s) => s,
        NoiseLevel::TargetInputSnrDb(snr) => noise_std_for_input_snr(&video, snr),
    };
    let m_total = stream.plan.m_common + stream.plan.m_innov;
    let compression = video.n() as f64 / m_total.max(1) as f64;

    let metrics = [
        ("video_snr_db", format_float(video_snr)),
        ("oracle_snr_db", format_float(oracle_snr)),
        ("baseline_snr_db", format_float(baseline_snr)),
        ("state_snr_db", format_float(state_snr)),
        ("input_snr_db", format_float(input_snr(&video, noise_std)?)),
        ("compression_ratio", format_float(compression)),
        ("m_common", stream.plan.m_common.to_string()),
        ("m_innov", stream.plan.m_innov.to_string()),
        ("missing_frac", format_float(stream.plan.missing_fraction())),
    ];
    let mut text = String::new();
    for (k, v) in &metrics {
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(out_file(out_dir, "metrics.txt"), &text)?;
    print!("{text}");
    Ok(())
}

/// Perturbs a model's system matrices by a relative amount; used to build
/// synthetic classification ensembles.
pub fn jitter_model(model: &LdsModel, rel: f64, seed: u64) -> Result<LdsModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n();
    let d = model.d();
    let c_scale = rel * model.c.norm() / ((n * d) as f64).sqrt();
    let c = &model.c
        + DMatrix::from_fn(n, d, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        }) * c_scale;
    let a_scale = rel * model.a.norm() / (d as f64);
    let a = &model.a
        + DMatrix::from_fn(d, d, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        }) * a_scale;
    LdsModel::new(
        c,
        a,
        model.mu.clone(),
        model.q_noise_std,
        model.r_noise_std,
        model.h,
        model.w,
    )
}

/// Nearest-neighbor classification of jittered model ensembles; writes the
/// confusion matrix and accuracy.
pub fn cmd_classify(cfg: &KvConfig, out_dir: &Path) -> Result<()> {
    ensure_out(out_dir)?;
    let seed = base_seed(cfg)?;
    let classes: usize = cfg.parsed_or("classify.classes", 2usize)?;
    let train_per_class: usize = cfg.parsed_or("classify.train_per_class", 10usize)?;
    let test_per_class: usize = cfg.parsed_or("classify.test_per_class", 10usize)?;
    let jitter: f64 = cfg.parsed_or("classify.jitter", 0.01)?;
    let (spec, _) = scene_from_config(cfg, 0)?;
    let depth: usize = cfg.parsed_or("classify.depth", spec.d)?;
    if classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }

    // One prototype model per class, then jittered train/test members.
    let mut train = Vec::new();
    let mut tests = Vec::new();
    for class in 0..classes {
        let mut proto_spec = spec.clone();
        proto_spec.seed = derive_seed(seed, 0xC1A55 + class as u64);
        let (_, proto, _) = generate_scene(&proto_spec, 2)?;
        for j in 0..train_per_class {
            let s = derive_seed(seed, 0x7001 + (class * train_per_class + j) as u64);
            train.push((jitter_model(&proto, jitter, s)?, class));
        }
        for j in 0..test_per_class {
            let s = derive_seed(seed, 0x7E57 + (class * test_per_class + j) as u64);
            tests.push((jitter_model(&proto, jitter, s)?, class));
        }
    }

    let predictions: Vec<(usize, usize)> = tests
        .par_iter()
        .map(|(query, truth)| {
            let (label, _) = nn_classify(&train, query, depth)?;
            Ok((*truth, label))
        })
        .collect::<Result<_>>()?;

    // Full test-by-train distance matrix, parallel over test rows.
    let train_descs: Vec<crate::evaluation::SubspaceDescriptor> = train
        .iter()
        .map(|(m, _)| crate::evaluation::SubspaceDescriptor::from_model(m, depth))
        .collect::<Result<_>>()?;
    let distance_rows: Vec<Vec<String>> = tests
        .par_iter()
        .enumerate()
        .map(|(i, (query, _))| {
            let desc = crate::evaluation::SubspaceDescriptor::from_model(query, depth)?;
            let mut row = vec![i.to_string()];
            for td in &train_descs {
                row.push(format_float(crate::evaluation::procrustes_distance2(
                    &desc, td,
                )?));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let dist_header: Vec<String> = std::iter::once("test_index".to_string())
        .chain((0..train.len()).map(|j| format!("train_{j}")))
        .collect();
    let dist_header_refs: Vec<&str> = dist_header.iter().map(String::as_str).collect();
    write_csv(
        &out_file(out_dir, "distances.csv"),
        &dist_header_refs,
        &distance_rows,
    )?;

    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut correct = 0;
    for &(truth, predicted) in &predictions {
        confusion[truth][predicted] += 1;
        if truth == predicted {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / predictions.len() as f64;

    let header: Vec<String> = std::iter::once("true_class".to_string())
        .chain((0..classes).map(|c| format!("predicted_{c}")))
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            std::iter::once(c.to_string())
                .chain(row.iter().map(|v| v.to_string()))
                .collect()
        })
        .collect();
    write_csv(&out_file(out_dir, "confusion.csv"), &header_refs, &rows)?;
    fs::write(
        out_file(out_dir, "classify.txt"),
        format!(
            "accuracy = {}\nclasses = {classes}\ntrain_per_class = {train_per_class}\ntest_per_class = {test_per_class}\njitter = {}\ndepth = {depth}\n",
            format_float(accuracy),
            format_float(jitter),
        ),
    )?;
    println!("classify: accuracy = {accuracy:.3}");
    Ok(())
}

/// The swept quantity of a parameter study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepVariable {
    MCommon,
    MissingFrac,
    Compression,
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m_common" => Ok(SweepVariable::MCommon),
            "missing_frac" => Ok(SweepVariable::MissingFrac),
            "compression" => Ok(SweepVariable::Compression),
            other => Err(Error::Config(format!("unknown sweep variable '{other}'"))),
        }
    }
}

fn trial_params_from_config(cfg: &KvConfig, n_hint: usize, t_len: usize) -> Result<TrialParams> {
    let seed = base_seed(cfg)?;
    let (scene, _) = scene_from_config(cfg, 0)?;
    let recover = recover_from_config(cfg)?;
    Ok(TrialParams {
        scene,
        t_len,
        m_common: cfg.require_parsed("plan.m_common")?,
        m_innov: innovation_from_config(cfg, n_hint, t_len)?,
        noise: noise_from_config(cfg)?,
        missing: cfg.parsed_or("plan.missing", MissingPattern::None)?,
        recover,
        trial: 0,
        seed,
    })
}

/// Runs the configured experiment mode (`single`, `monte_carlo` or
/// `sweep`) and writes the aggregated per-trial CSV. Trials run in a
/// parallel worker pool; rows come out sorted by sweep point and trial
/// index regardless of scheduling.
pub fn cmd_sweep(cfg: &KvConfig, out_dir: &Path) -> Result<()> {
    ensure_out(out_dir)?;
    let mode = cfg.parsed_or("mode", "single".to_string())?;
    let (scene, t_len) = scene_from_config(cfg, 0)?;
    let n = scene.h * scene.w;
    let base = trial_params_from_config(cfg, n, t_len)?;
    let trials: usize = cfg.parsed_or("trials", 1usize)?;

    let jobs: Vec<TrialParams> = match mode.as_str() {
        "single" => vec![base.clone()],
        "monte_carlo" => (0..trials)
            .map(|trial| {
                let mut p = base.clone();
                p.trial = trial;
                p.seed = derive_seed(base.seed, trial as u64 + 1);
                p
            })
            .collect(),
        "sweep" => {
            let variable: SweepVariable = cfg.require_parsed("sweep.variable")?;
            let values: Vec<f64> = cfg
                .require("sweep.values")?
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad sweep value '{v}'")))
                })
                .collect::<Result<_>>()?;
            let mut jobs = Vec::new();
            for (vi, &value) in values.iter().enumerate() {
                for trial in 0..trials {
                    let mut p = base.clone();
                    p.trial = trial;
                    p.seed = derive_seed(base.seed, (vi * trials + trial) as u64 + 1);
                    match variable {
                        SweepVariable::MCommon => p.m_common = value as usize,
                        SweepVariable::MissingFrac => {
                            p.missing = MissingPattern::Random { frac: value }
                        }
                        SweepVariable::Compression => {
                            let m_total = ((n as f64) / value).round() as usize;
                            p.m_innov = m_total.saturating_sub(p.m_common).max(1);
                        }
                    }
                    jobs.push(p);
                }
            }
            jobs
        }
        other => {
            return Err(Error::Config(format!(
                "unknown mode '{other}' (expected single, monte_carlo or sweep)"
            )))
        }
    };

    let outcomes: Vec<(TrialRow, Option<TrialArtifacts>)> = jobs
        .par_iter()
        .map(|p| {
            run_trial(p).map(|(row, artifacts)| {
                let keep = (mode == "single").then_some(artifacts);
                (row, keep)
            })
        })
        .collect::<Result<_>>()?;

    let fields: Vec<Vec<String>> = outcomes.iter().map(|(row, _)| row.to_fields()).collect();
    write_csv(&out_file(out_dir, "sweep.csv"), &TRIAL_CSV_HEADER, &fields)?;
    println!(
        "sweep: mode={mode}, {} rows -> {}",
        outcomes.len(),
        out_file(out_dir, "sweep.csv").display()
    );
    if let Some((_, Some(artifacts))) = outcomes.into_iter().next() {
        // Keep full artifacts for the one-shot run.
        container::write_video(&artifacts.video, &out_file(out_dir, "video.csld"))?;
        container::write_model(&artifacts.model, &out_file(out_dir, "model.csld"))?;
        container::write_states(&artifacts.states, &out_file(out_dir, "states.csld"))?;
        container::write_stream(&artifacts.stream, &out_file(out_dir, "stream.csld"))?;
        container::write_state_estimate(
            &artifacts.estimate,
            &out_file(out_dir, "state_estimate.csld"),
        )?;
        container::write_recovered_model(
            &artifacts.recovered,
            &out_file(out_dir, "recovered_model.csld"),
        )?;
        container::write_video(
            &artifacts.reconstruction,
            &out_file(out_dir, "reconstruction.csld"),
        )?;
    }
    Ok(())
}
