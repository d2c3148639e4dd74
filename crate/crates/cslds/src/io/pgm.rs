//! Binary (P5) PGM images, 8 or 16 bit, for viewable frame dumps. The
//! lossless interchange path is the CSLD container; PGM output quantizes
//! with one global affine scale per video so frames stay comparable.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lds::VideoTensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    /// 255 for 8-bit files, up to 65535 for 16-bit files.
    pub maxval: u16,
    /// Row-major samples.
    pub samples: Vec<u16>,
}

pub fn write_pgm(image: &PgmImage, path: &Path) -> Result<()> {
    if image.samples.len() != image.width * image.height {
        return Err(Error::DimensionMismatch(format!(
            "pgm has {} samples for {}x{}",
            image.samples.len(),
            image.width,
            image.height
        )));
    }
    if image.maxval == 0 {
        return Err(Error::Config("pgm maxval must be positive".into()));
    }
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(
        out,
        "P5\n{} {}\n{}\n",
        image.width, image.height, image.maxval
    )?;
    if image.maxval < 256 {
        for &s in &image.samples {
            out.write_all(&[s as u8])?;
        }
    } else {
        // Two-byte samples are most-significant byte first.
        for &s in &image.samples {
            out.write_all(&s.to_be_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "{}: not a binary pgm",
            path.display()
        )));
    }
    let width = parse_usize(&bytes, &mut pos, path)?;
    let height = parse_usize(&bytes, &mut pos, path)?;
    let maxval = parse_usize(&bytes, &mut pos, path)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("{}: bad maxval", path.display())));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let count = width * height;
    let mut samples = Vec::with_capacity(count);
    if maxval < 256 {
        if bytes.len() < pos + count {
            return Err(Error::Format(format!("{}: truncated", path.display())));
        }
        samples.extend(bytes[pos..pos + count].iter().map(|&b| b as u16));
    } else {
        if bytes.len() < pos + 2 * count {
            return Err(Error::Format(format!("{}: truncated", path.display())));
        }
        for i in 0..count {
            samples.push(u16::from_be_bytes([
                bytes[pos + 2 * i],
                bytes[pos + 2 * i + 1],
            ]));
        }
    }
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    // Skip whitespace and '#' comment lines.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of pgm header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_usize(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<usize> {
    let token = next_token(bytes, pos)?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("{}: bad header field", path.display())))
}

/// Quantization used when a video was written as PGM frames; needed to map
/// samples back to pixel values.
#[derive(Debug, Clone, Copy)]
pub struct FrameScale {
    pub min: f64,
    pub max: f64,
    pub maxval: u16,
}

/// Writes `frame_%05d.pgm` files under `dir` with one global scale.
pub fn write_video_frames(video: &VideoTensor, dir: &Path, maxval: u16) -> Result<FrameScale> {
    fs::create_dir_all(dir)?;
    let min = video.y.min();
    let max = video.y.max();
    let span = (max - min).max(f64::MIN_POSITIVE);
    for t in 0..video.t_len() {
        let mut samples = vec![0u16; video.n()];
        for r in 0..video.h {
            for c in 0..video.w {
                let v = video.y[(c * video.h + r, t)];
                let q = ((v - min) / span * maxval as f64).round();
                samples[r * video.w + c] = q.clamp(0.0, maxval as f64) as u16;
            }
        }
        let image = PgmImage {
            width: video.w,
            height: video.h,
            maxval,
            samples,
        };
        write_pgm(&image, &frame_path(dir, t))?;
    }
    Ok(FrameScale { min, max, maxval })
}

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:05}.pgm"))
}
