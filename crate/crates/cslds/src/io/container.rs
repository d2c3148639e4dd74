//! The CSLD binary container: lossless f64 interchange for streams,
//! videos, state estimates and recovered models.
//!
//! Every file starts with the magic `CSLD` and a little-endian `u16`
//! version (currently 1). Measurement-stream files continue directly with
//! the stream payload: `N, T, M_common, M_innov, ensemble_seed,
//! noise_seed` as little-endian `u64`, the missing set as a `u32` count
//! followed by `u32` frame indices, then per frame one `has_common` flag
//! byte followed by the common and innovation values as little-endian
//! `f64`. All other record kinds carry a `u16` type tag after the version.
//! All floats everywhere are IEEE-754 f64 little-endian.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::acquisition::{CompressiveStream, MeasurementPlan};
use crate::error::{Error, Result};
use crate::lds::{LdsModel, StateSequence, VideoTensor};
use crate::state_estim::StateEstimate;

const MAGIC: &[u8; 4] = b"CSLD";
const VERSION: u16 = 1;

const TAG_VIDEO: u16 = 2;
const TAG_STATE_ESTIMATE: u16 = 3;
const TAG_RECOVERED_MODEL: u16 = 4;
const TAG_LDS_MODEL: u16 = 5;
const TAG_STATES: u16 = 6;

// ---------------------------------------------------------------------
// Byte-level helpers.

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        Self { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64_slice(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    fn finish(self, path: &Path) -> Result<()> {
        fs::write(path, self.buf)?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &Path) -> Result<Self> {
        let mut r = Self {
            bytes,
            pos: 0,
            path: path.display().to_string(),
        };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("{}: bad magic", r.path)));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported version {version}",
                r.path
            )));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!("{}: truncated", self.path)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn expect_tag(&mut self, tag: u16) -> Result<()> {
        let found = self.u16()?;
        if found != tag {
            return Err(Error::Format(format!(
                "{}: expected record type {tag}, found {found}",
                self.path
            )));
        }
        Ok(())
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.path,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn matrix_bytes(w: &mut Writer, m: &DMatrix<f64>) {
    w.f64_slice(m.as_slice()); // column-major
}

// ---------------------------------------------------------------------
// Measurement streams (untagged payload, fixed layout).

pub fn write_stream(stream: &CompressiveStream, path: &Path) -> Result<()> {
    let plan = &stream.plan;
    let mut w = Writer::new();
    w.u64(plan.n as u64);
    w.u64(plan.t_len as u64);
    w.u64(plan.m_common as u64);
    w.u64(plan.m_innov as u64);
    w.u64(plan.ensemble_seed);
    w.u64(plan.noise_seed);
    w.u32(plan.missing_set.len() as u32);
    for &t in &plan.missing_set {
        w.u32(t as u32);
    }
    for t in 0..plan.t_len {
        match &stream.common[t] {
            Some(z) => {
                w.u8(1);
                w.f64_slice(z.as_slice());
            }
            None => w.u8(0),
        }
        w.f64_slice(stream.innovation[t].as_slice());
    }
    w.finish(path)
}

/// Reads a stream file. Measurement noise is already baked into the stored
/// values, so the reconstructed plan carries `noise_std = 0`.
pub fn read_stream(path: &Path) -> Result<CompressiveStream> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, path)?;
    let n = r.usize()?;
    let t_len = r.usize()?;
    let m_common = r.usize()?;
    let m_innov = r.usize()?;
    let ensemble_seed = r.u64()?;
    let noise_seed = r.u64()?;
    let missing_len = r.u32()? as usize;
    let mut missing_set = Vec::with_capacity(missing_len);
    for _ in 0..missing_len {
        missing_set.push(r.u32()? as usize);
    }
    let plan = MeasurementPlan::new(
        n,
        t_len,
        m_common,
        m_innov,
        0.0,
        ensemble_seed,
        noise_seed,
        missing_set,
    )?;
    let mut common = Vec::with_capacity(t_len);
    let mut innovation = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let has_common = r.u8()?;
        let zc = match has_common {
            1 => Some(DVector::from_vec(r.f64_vec(m_common)?)),
            0 => None,
            other => {
                return Err(Error::Format(format!(
                    "{}: bad frame flag {other}",
                    path.display()
                )))
            }
        };
        if zc.is_some() == plan.is_missing(t) {
            return Err(Error::Format(format!(
                "{}: frame {t} contradicts the missing set",
                path.display()
            )));
        }
        common.push(zc);
        innovation.push(DVector::from_vec(r.f64_vec(m_innov)?));
    }
    r.done()?;
    Ok(CompressiveStream {
        common,
        innovation,
        plan,
    })
}

// ---------------------------------------------------------------------
// Videos.

pub fn write_video(video: &VideoTensor, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.u16(TAG_VIDEO);
    w.u64(video.h as u64);
    w.u64(video.w as u64);
    w.u64(video.t_len() as u64);
    matrix_bytes(&mut w, &video.y);
    w.finish(path)
}

pub fn read_video(path: &Path) -> Result<VideoTensor> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, path)?;
    r.expect_tag(TAG_VIDEO)?;
    let h = r.usize()?;
    let w_dim = r.usize()?;
    let t_len = r.usize()?;
    let data = r.f64_vec(h * w_dim * t_len)?;
    r.done()?;
    VideoTensor::new(DMatrix::from_vec(h * w_dim, t_len, data), h, w_dim)
}

// ---------------------------------------------------------------------
// Plain state sequences.

pub fn write_states(states: &StateSequence, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.u16(TAG_STATES);
    w.u64(states.d() as u64);
    w.u64(states.t_len() as u64);
    matrix_bytes(&mut w, &states.x);
    w.finish(path)
}

pub fn read_states(path: &Path) -> Result<StateSequence> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, path)?;
    r.expect_tag(TAG_STATES)?;
    let d = r.usize()?;
    let t_len = r.usize()?;
    let data = r.f64_vec(d * t_len)?;
    r.done()?;
    StateSequence::new(DMatrix::from_vec(d, t_len, data))
}

// ---------------------------------------------------------------------
// State estimates (trajectory block plus spectrum).

pub fn write_state_estimate(est: &StateEstimate, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.u16(TAG_STATE_ESTIMATE);
    w.u64(est.d as u64);
    w.u64(est.t_len() as u64);
    w.u64(est.q as u64);
    w.u8(u8::from(est.mean_removed));
    match &est.z_bar {
        Some(z) => {
            w.u64(z.len() as u64);
            w.f64_slice(z.as_slice());
        }
        None => w.u64(0),
    }
    w.u64(est.singular_values.len() as u64);
    w.f64_slice(est.singular_values.as_slice());
    matrix_bytes(&mut w, &est.x_hat);
    w.finish(path)
}

pub fn read_state_estimate(path: &Path) -> Result<StateEstimate> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, path)?;
    r.expect_tag(TAG_STATE_ESTIMATE)?;
    let d = r.usize()?;
    let t_len = r.usize()?;
    let q = r.usize()?;
    let mean_removed = r.u8()? != 0;
    let z_len = r.usize()?;
    let z_bar = if z_len > 0 {
        Some(DVector::from_vec(r.f64_vec(z_len)?))
    } else {
        None
    };
    if mean_removed != z_bar.is_some() {
        return Err(Error::Format(format!(
            "{}: mean flag contradicts stored mean",
            path.display()
        )));
    }
    let s_len = r.usize()?;
    let singular_values = DVector::from_vec(r.f64_vec(s_len)?);
    let x_hat = DMatrix::from_vec(d, t_len, r.f64_vec(d * t_len)?);
    r.done()?;
    Ok(StateEstimate {
        x_hat,
        singular_values,
        d,
        q,
        mean_removed,
        z_bar,
    })
}

// ---------------------------------------------------------------------
// Recovered models.

pub fn write_recovered_model(
    model: &crate::obs_recovery::RecoveredModel,
    path: &Path,
) -> Result<()> {
    let mut w = Writer::new();
    w.u16(TAG_RECOVERED_MODEL);
    w.u64(model.c_hat.nrows() as u64);
    w.u64(model.c_hat.ncols() as u64);
    w.u64(model.h as u64);
    w.u64(model.w as u64);
    matrix_bytes(&mut w, &model.c_hat);
    w.f64_slice(model.mu_hat.as_slice());
    w.u64(model.support.len() as u64);
    for &k in &model.support {
        w.u64(k as u64);
    }
    w.u64(model.support_mu.len() as u64);
    for &k in &model.support_mu {
        w.u64(k as u64);
    }
    w.u64(model.residual_history.len() as u64);
    w.f64_slice(&model.residual_history);
    w.u64(model.ls_residual_history.len() as u64);
    w.f64_slice(&model.ls_residual_history);
    w.u8(u8::from(model.converged));
    w.u8(u8::from(model.cg_breakdown));
    w.finish(path)
}

pub fn read_recovered_model(path: &Path) -> Result<crate::obs_recovery::RecoveredModel> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, path)?;
    r.expect_tag(TAG_RECOVERED_MODEL)?;
    let n = r.usize()?;
    let d = r.usize()?;
    let h = r.usize()?;
    let w_dim = r.usize()?;
    let c_hat = DMatrix::from_vec(n, d, r.f64_vec(n * d)?);
    let mu_hat = DVector::from_vec(r.f64_vec(n)?);
    let s_len = r.usize()?;
    let mut support = Vec::with_capacity(s_len);
    for _ in 0..s_len {
        support.push(r.usize()?);
    }
    let sm_len = r.usize()?;
    let mut support_mu = Vec::with_capacity(sm_len);
    for _ in 0..sm_len {
        support_mu.push(r.usize()?);
    }
    let rh_len = r.usize()?;
    let residual_history = r.f64_vec(rh_len)?;
    let lh_len = r.usize()?;
    let ls_residual_history = r.f64_vec(lh_len)?;
    let converged = r.u8()? != 0;
    let cg_breakdown = r.u8()? != 0;
    r.done()?;
    Ok(crate::obs_recovery::RecoveredModel {
        c_hat,
        mu_hat,
        residual_history,
        ls_residual_history,
        support,
        support_mu,
        converged,
        cg_breakdown,
        h,
        w: w_dim,
    })
}

// ---------------------------------------------------------------------
// Ground-truth models.

pub fn write_model(model: &LdsModel, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.u16(TAG_LDS_MODEL);
    w.u64(model.h as u64);
    w.u64(model.w as u64);
    w.u64(model.d() as u64);
    matrix_bytes(&mut w, &model.c);
    matrix_bytes(&mut w, &model.a);
    w.f64_slice(model.mu.as_slice());
    w.f64(model.q_noise_std);
    w.f64(model.r_noise_std);
    w.finish(path)
}

pub fn read_model(path: &Path) -> Result<LdsModel> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, path)?;
    r.expect_tag(TAG_LDS_MODEL)?;
    let h = r.usize()?;
    let w_dim = r.usize()?;
    let d = r.usize()?;
    let n = h * w_dim;
    let c = DMatrix::from_vec(n, d, r.f64_vec(n * d)?);
    let a = DMatrix::from_vec(d, d, r.f64_vec(d * d)?);
    let mu = DVector::from_vec(r.f64_vec(n)?);
    let q_noise_std = r.f64()?;
    let r_noise_std = r.f64()?;
    r.done()?;
    LdsModel::new(c, a, mu, q_noise_std, r_noise_std, h, w_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{acquire, MeasurementPlan};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn sample_stream(missing: Vec<usize>) -> CompressiveStream {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let video = VideoTensor::new(
            DMatrix::from_fn(24, 7, |_, _| rng.random::<f64>() - 0.5),
            4,
            6,
        )
        .unwrap();
        let plan = MeasurementPlan::new(24, 7, 3, 5, 0.1, 9, 10, missing).unwrap();
        acquire(&video, &plan).unwrap()
    }

    #[test]
    fn stream_round_trip_bit_exact() {
        let dir = tmp();
        let path = dir.path().join("s.csld");
        let stream = sample_stream(vec![2, 5]);
        write_stream(&stream, &path).unwrap();
        let back = read_stream(&path).unwrap();
        assert_eq!(back.common, stream.common);
        assert_eq!(back.innovation, stream.innovation);
        assert_eq!(back.plan.missing_set, stream.plan.missing_set);
        // Writing what was read reproduces the file byte for byte.
        let bytes = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("s2.csld");
        write_stream(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), bytes);
    }

    #[test]
    fn stream_header_layout_is_fixed() {
        let dir = tmp();
        let path = dir.path().join("s.csld");
        let stream = sample_stream(vec![]);
        write_stream(&stream, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"CSLD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 24); // N
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 7); // T
        assert_eq!(u64::from_le_bytes(bytes[22..30].try_into().unwrap()), 3); // M_common
        assert_eq!(u64::from_le_bytes(bytes[30..38].try_into().unwrap()), 5); // M_innov
        assert_eq!(u64::from_le_bytes(bytes[38..46].try_into().unwrap()), 9); // ensemble seed
        assert_eq!(u64::from_le_bytes(bytes[46..54].try_into().unwrap()), 10); // noise seed
        assert_eq!(u32::from_le_bytes(bytes[54..58].try_into().unwrap()), 0); // missing count
        assert_eq!(bytes[58], 1); // frame 0 has common measurements
    }

    #[test]
    fn video_round_trip() {
        let dir = tmp();
        let path = dir.path().join("v.csld");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let video = VideoTensor::new(
            DMatrix::from_fn(12, 5, |_, _| rng.random::<f64>() - 0.5),
            3,
            4,
        )
        .unwrap();
        write_video(&video, &path).unwrap();
        let back = read_video(&path).unwrap();
        assert_eq!(back.y, video.y);
        assert_eq!((back.h, back.w), (3, 4));
    }

    #[test]
    fn state_estimate_round_trip() {
        let dir = tmp();
        let path = dir.path().join("x.csld");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est = StateEstimate {
            x_hat: DMatrix::from_fn(3, 9, |_, _| rng.random::<f64>() - 0.5),
            singular_values: DVector::from_fn(6, |_, _| rng.random::<f64>()),
            d: 3,
            q: 2,
            mean_removed: true,
            z_bar: Some(DVector::from_vec(vec![0.25, -1.5])),
        };
        write_state_estimate(&est, &path).unwrap();
        let back = read_state_estimate(&path).unwrap();
        assert_eq!(back.x_hat, est.x_hat);
        assert_eq!(back.singular_values, est.singular_values);
        assert_eq!(back.z_bar, est.z_bar);
        assert_eq!(back.q, 2);
    }

    #[test]
    fn recovered_model_round_trip() {
        let dir = tmp();
        let path = dir.path().join("m.csld");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = crate::obs_recovery::RecoveredModel {
            c_hat: DMatrix::from_fn(16, 2, |_, _| rng.random::<f64>() - 0.5),
            mu_hat: DVector::from_fn(16, |_, _| rng.random::<f64>()),
            residual_history: vec![3.0, 1.0, 0.5],
            ls_residual_history: vec![2.5, 0.9, 0.4],
            support: vec![1, 5, 9],
            support_mu: vec![0, 2],
            converged: true,
            cg_breakdown: false,
            h: 4,
            w: 4,
        };
        write_recovered_model(&model, &path).unwrap();
        let back = read_recovered_model(&path).unwrap();
        assert_eq!(back.c_hat, model.c_hat);
        assert_eq!(back.mu_hat, model.mu_hat);
        assert_eq!(back.support, model.support);
        assert_eq!(back.support_mu, model.support_mu);
        assert_eq!(back.residual_history, model.residual_history);
        assert!(back.converged);
    }

    #[test]
    fn model_round_trip() {
        let dir = tmp();
        let path = dir.path().join("g.csld");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DMatrix::from_fn(16, 3, |_, _| rng.random::<f64>() - 0.5);
        let (c, _) = crate::linalg::orthonormal_colspace(&raw, 1e-12);
        let model = LdsModel::new(
            c,
            DMatrix::identity(3, 3) * 0.9,
            DVector::from_fn(16, |_, _| rng.random::<f64>()),
            0.01,
            0.02,
            4,
            4,
        )
        .unwrap();
        write_model(&model, &path).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.c, model.c);
        assert_eq!(back.a, model.a);
        assert_eq!(back.mu, model.mu);
        assert_eq!(back.q_noise_std, model.q_noise_std);
    }

    #[test]
    fn wrong_tag_is_rejected() {
        let dir = tmp();
        let vpath = dir.path().join("v.csld");
        let video = VideoTensor::new(DMatrix::zeros(4, 2), 2, 2).unwrap();
        write_video(&video, &vpath).unwrap();
        assert!(read_model(&vpath).is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("junk.csld");
        std::fs::write(&path, b"JUNKxxxxxxxx").unwrap();
        assert!(read_stream(&path).is_err());
        assert!(read_video(&path).is_err());
    }
}
