//! Simulated compressive acquisition: the two-part measurement schedule
//! applied to a video, with i.i.d. Gaussian measurement noise and optional
//! missing common measurements.

use std::str::FromStr;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lds::VideoTensor;
use crate::transforms::{make_measurement_ensemble, MeasurementEnsemble};

/// How the set of frames without common measurements is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MissingPattern {
    /// Every frame has common measurements.
    None,
    /// A fixed fraction of frames, drawn uniformly without replacement.
    Random { frac: f64 },
    /// Keep common measurements only on every `keep_every`-th frame.
    Periodic { keep_every: usize },
}

impl FromStr for MissingPattern {
    type Err = Error;

    /// Accepts `none`, `random:<frac>` or `periodic:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(MissingPattern::None);
        }
        if let Some(frac) = s.strip_prefix("random:") {
            let frac: f64 = frac
                .parse()
                .map_err(|_| Error::Config(format!("bad missing fraction '{frac}'")))?;
            if !(0.0..1.0).contains(&frac) {
                return Err(Error::Config(format!(
                    "missing fraction must be in [0, 1), got {frac}"
                )));
            }
            return Ok(MissingPattern::Random { frac });
        }
        if let Some(k) = s.strip_prefix("periodic:") {
            let keep_every: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("bad period '{k}'")))?;
            if keep_every == 0 {
                return Err(Error::Config("period must be >= 1".into()));
            }
            return Ok(MissingPattern::Periodic { keep_every });
        }
        Err(Error::Config(format!("unknown missing pattern '{s}'")))
    }
}

/// Sizes, seeds and missing-frame schedule of one acquisition run.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPlan {
    /// Common measurements per frame.
    pub m_common: usize,
    /// Innovation measurements per frame.
    pub m_innov: usize,
    /// Sorted frame indices (0-based) with no common measurement.
    pub missing_set: Vec<usize>,
    /// Measurement-noise standard deviation.
    pub noise_std: f64,
    pub ensemble_seed: u64,
    pub noise_seed: u64,
    pub t_len: usize,
    pub n: usize,
}

impl MeasurementPlan {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        t_len: usize,
        m_common: usize,
        m_innov: usize,
        noise_std: f64,
        ensemble_seed: u64,
        noise_seed: u64,
        mut missing_set: Vec<usize>,
    ) -> Result<Self> {
        if m_common + m_innov > n {
            return Err(Error::Config(format!(
                "measurement budget {} exceeds signal length {n}",
                m_common + m_innov
            )));
        }
        if noise_std < 0.0 {
            return Err(Error::Config("noise std must be >= 0".into()));
        }
        if t_len == 0 {
            return Err(Error::Config("need at least one frame".into()));
        }
        missing_set.sort_unstable();
        missing_set.dedup();
        if missing_set.last().is_some_and(|&t| t >= t_len) {
            return Err(Error::Config("missing-frame index out of range".into()));
        }
        Ok(Self {
            m_common,
            m_innov,
            missing_set,
            noise_std,
            ensemble_seed,
            noise_seed,
            t_len,
            n,
        })
    }

    /// Builds the missing set from a pattern. Random draws come from the
    /// plan's ensemble seed on a dedicated substream.
    #[allow(clippy::too_many_arguments)]
    pub fn with_pattern(
        n: usize,
        t_len: usize,
        m_common: usize,
        m_innov: usize,
        noise_std: f64,
        ensemble_seed: u64,
        noise_seed: u64,
        pattern: MissingPattern,
    ) -> Result<Self> {
        let missing_set = match pattern {
            MissingPattern::None => Vec::new(),
            MissingPattern::Random { frac } => {
                if !(0.0..1.0).contains(&frac) {
                    return Err(Error::Config(format!(
                        "missing fraction must be in [0, 1), got {frac}"
                    )));
                }
                let count = ((t_len as f64) * frac).floor() as usize;
                let mut rng = ChaCha8Rng::seed_from_u64(ensemble_seed);
                rng.set_stream(u64::MAX); // away from per-frame streams
                rand::seq::index::sample(&mut rng, t_len, count).into_vec()
            }
            MissingPattern::Periodic { keep_every } => {
                (0..t_len).filter(|t| t % keep_every != 0).collect()
            }
        };
        Self::new(
            n,
            t_len,
            m_common,
            m_innov,
            noise_std,
            ensemble_seed,
            noise_seed,
            missing_set,
        )
    }

    pub fn is_missing(&self, t: usize) -> bool {
        self.missing_set.binary_search(&t).is_ok()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_set.len() as f64 / self.t_len as f64
    }

    /// Rebuilds the measurement operators this plan describes.
    pub fn build_ensemble(&self) -> Result<MeasurementEnsemble> {
        make_measurement_ensemble(
            self.n,
            self.m_common,
            self.m_innov,
            self.t_len,
            self.ensemble_seed,
        )
    }
}

/// Time-indexed common and innovation measurements plus the plan that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressiveStream {
    /// `common[t]` is `None` exactly when `t` is in the plan's missing set.
    pub common: Vec<Option<DVector<f64>>>,
    pub innovation: Vec<DVector<f64>>,
    pub plan: MeasurementPlan,
}

impl CompressiveStream {
    pub fn t_len(&self) -> usize {
        self.plan.t_len
    }
}

/// Applies the measurement schedule to a video. Noise for frame `t` is
/// drawn from substream `t` of the plan's noise seed, so serial and
/// parallel acquisition produce identical streams.
pub fn acquire(video: &VideoTensor, plan: &MeasurementPlan) -> Result<CompressiveStream> {
    if plan.n != video.n() || plan.t_len != video.t_len() {
        return Err(Error::DimensionMismatch(format!(
            "plan is for {}x{}, video is {}x{}",
            plan.n,
            plan.t_len,
            video.n(),
            video.t_len()
        )));
    }
    let ensemble = plan.build_ensemble()?;
    let frames: Vec<(Option<DVector<f64>>, DVector<f64>)> = (0..plan.t_len)
        .into_par_iter()
        .map(|t| {
            let y = video.y.column(t).into_owned();
            let mut rng = ChaCha8Rng::seed_from_u64(plan.noise_seed);
            rng.set_stream(t as u64);
            let common = if plan.is_missing(t) {
                None
            } else {
                let mut z = ensemble.common.apply(&y)?;
                add_noise(&mut z, plan.noise_std, &mut rng);
                Some(z)
            };
            let mut z_innov = ensemble.innovation[t].apply(&y)?;
            add_noise(&mut z_innov, plan.noise_std, &mut rng);
            Ok((common, z_innov))
        })
        .collect::<Result<_>>()?;

    let (common, innovation) = frames.into_iter().unzip();
    Ok(CompressiveStream {
        common,
        innovation,
        plan: plan.clone(),
    })
}

fn add_noise(z: &mut DVector<f64>, std: f64, rng: &mut ChaCha8Rng) {
    if std > 0.0 {
        let dist = Normal::new(0.0, std).expect("valid std");
        for v in z.iter_mut() {
            *v += rng.sample(dist);
        }
    }
}

/// Innovation-measurement budget from the `4 d K log(N/K)` rule of thumb
/// (natural logarithm), spread across `T` frames and floored at one.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub m_innov_required: usize,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub t_len: usize,
    pub constant: f64,
}

pub fn innovation_budget(d: usize, k: usize, n: usize, t_len: usize) -> Result<BudgetReport> {
    if k == 0 || k >= n {
        return Err(Error::Config(format!(
            "sparsity must satisfy 1 <= K < N, got K={k}, N={n}"
        )));
    }
    if d == 0 || t_len == 0 {
        return Err(Error::Config("need d >= 1 and T >= 1".into()));
    }
    let constant = 4.0;
    let total = constant * (d * k) as f64 * ((n as f64) / (k as f64)).ln();
    let per_frame = (total / t_len as f64).ceil() as usize;
    Ok(BudgetReport {
        m_innov_required: per_frame.max(1),
        d,
        k,
        n,
        t_len,
        constant,
    })
}

/// Input SNR in dB: `10 log10(sum_t ||y_t||^2 / (T sigma^2))`. Returns the
/// `+inf` sentinel when `noise_std` is zero.
pub fn input_snr(video: &VideoTensor, noise_std: f64) -> Result<f64> {
    if noise_std < 0.0 {
        return Err(Error::Config("noise std must be >= 0".into()));
    }
    if noise_std == 0.0 {
        return Ok(f64::INFINITY);
    }
    let energy = video.y.norm_squared();
    Ok(10.0 * (energy / (video.t_len() as f64 * noise_std * noise_std)).log10())
}

/// Noise level that realizes a target input SNR for the given video.
pub fn noise_std_for_input_snr(video: &VideoTensor, snr_db: f64) -> f64 {
    if snr_db.is_infinite() {
        return 0.0;
    }
    let mean_energy = video.y.norm_squared() / video.t_len() as f64;
    (mean_energy * 10f64.powf(-snr_db / 10.0)).sqrt()
}
