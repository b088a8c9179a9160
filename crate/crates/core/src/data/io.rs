//! Dataset file format.
//!
//! ```text
//! magic        [u8; 4] = "PDST"
//! version      u16
//! spec         num_classes, samples_per_class, primary_dim, privileged_dim,
//!              segments, frames_per_segment, latent_dim: u32 each;
//!              sample_sigma, noise_sigma, privileged_noise_scale,
//!              privileged_informativeness: f64;
//!              seed: u64
//! count        u32 number of samples
//! digest       [u8; 32] SHA-256 of everything after this field
//! records      per sample: id u64, label u32,
//!              primary: u32 count, u32 dim, f64 × count·dim,
//!              privileged: u32 count, u32 dim, f64 × count·dim
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Dataset, DatasetSpec, PairedSample};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"PDST";
pub const DATASET_VERSION: u16 = 1;

fn write_frames(w: &mut ByteWriter, frames: &[Tensor]) {
    w.u32(frames.len() as u32);
    w.u32(frames.first().map_or(0, |t| t.len()) as u32);
    for t in frames {
        w.f64s(t.data());
    }
}

pub(crate) fn encode(ds: &Dataset) -> Vec<u8> {
    let mut body = ByteWriter::default();
    for s in &ds.samples {
        body.u64(s.id);
        body.u32(s.label as u32);
        write_frames(&mut body, &s.primary);
        write_frames(&mut body, &s.privileged);
    }

    let sp = &ds.spec;
    let mut w = ByteWriter::default();
    w.bytes(&DATASET_MAGIC);
    w.u16(DATASET_VERSION);
    for v in [
        sp.num_classes,
        sp.samples_per_class,
        sp.primary_dim,
        sp.privileged_dim,
        sp.segments,
        sp.frames_per_segment,
        sp.latent_dim,
    ] {
        w.u32(v as u32);
    }
    w.f64(sp.sample_sigma);
    w.f64(sp.noise_sigma);
    w.f64(sp.privileged_noise_scale);
    w.f64(sp.privileged_informativeness);
    w.u64(sp.seed);
    w.u32(ds.samples.len() as u32);
    w.bytes(&Sha256::digest(&body.buf));
    w.bytes(&body.buf);
    w.buf
}

fn read_frames(r: &mut ByteReader<'_>, what: &str) -> Result<Vec<Tensor>> {
    let at = r.offset();
    let count = r.u32(what)? as usize;
    let dim = r.u32(what)? as usize;
    if count == 0 || dim == 0 {
        return Err(Error::Format {
            offset: at,
            message: format!("{what} has empty shape {count}×{dim}"),
        });
    }
    (0..count)
        .map(|_| Ok(Tensor::vector(&r.f64s(dim, what)?)))
        .collect()
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "magic")? != DATASET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad dataset magic".into(),
        });
    }
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported dataset version {version}"),
        });
    }
    let mut dims = [0usize; 7];
    for d in dims.iter_mut() {
        *d = r.u32("spec field")? as usize;
    }
    let spec = DatasetSpec {
        num_classes: dims[0],
        samples_per_class: dims[1],
        primary_dim: dims[2],
        privileged_dim: dims[3],
        segments: dims[4],
        frames_per_segment: dims[5],
        latent_dim: dims[6],
        sample_sigma: r.f64("sample_sigma")?,
        noise_sigma: r.f64("noise_sigma")?,
        privileged_noise_scale: r.f64("privileged_noise_scale")?,
        privileged_informativeness: r.f64("privileged_informativeness")?,
        seed: r.u64("seed")?,
    };
    let count = r.u32("sample count")? as usize;
    let digest_at = r.offset();
    let digest = r.take(32, "digest")?;
    let body_at = r.offset();
    let body = r.take(r.remaining(), "records")?;

    let mut br = ByteReader::with_base(body, body_at);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let id = br.u64("sample id")?;
        let label_at = br.offset();
        let label = br.u32("label")? as usize;
        if label >= spec.num_classes {
            return Err(Error::Format {
                offset: label_at,
                message: format!("label {label} out of range for {} classes", spec.num_classes),
            });
        }
        let primary = read_frames(&mut br, "primary segments")?;
        let privileged = read_frames(&mut br, "privileged frames")?;
        samples.push(PairedSample {
            id,
            label,
            primary,
            privileged,
        });
    }
    if br.remaining() != 0 {
        return Err(br.error("trailing bytes after records"));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format {
            offset: digest_at,
            message: "content digest mismatch".into(),
        });
    }
    Ok(Dataset { spec, samples })
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
