//! The DPRF checkpoint format. Fixed little-endian layout:
//!
//! ```text
//! magic "DPRF"              4 bytes
//! format_version            u16
//! sh_convention_version     u16
//! n_points                  u32
//! l_max                     u32
//! config_len                u32
//! config                    UTF-8 key=value lines (sorted keys)
//! positions                 n * 3 f32
//! sh_coeffs                 n * 3 * (l_max+1)^2 f32
//! ```
//!
//! Arrays are serialized as f32; a saved file reloads and re-saves
//! bit-identically.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::RadiancePointCloud;
use crate::sh;

pub const MAGIC: [u8; 4] = *b"DPRF";
pub const FORMAT_VERSION: u16 = 1;
/// Identifies the real-SH sign/ordering convention the coefficients were
/// trained under; loaders must reject checkpoints from other conventions.
pub const SH_CONVENTION_VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub cloud: RadiancePointCloud,
    /// Raster and training configuration snapshot.
    pub config: BTreeMap<String, String>,
}

pub fn save_checkpoint(
    cloud: &RadiancePointCloud,
    config: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    let mut bytes = encode(cloud, config)?;
    bytes.shrink_to_fit();
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

pub fn encode(cloud: &RadiancePointCloud, config: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let mut cfg_text = String::new();
    for (k, v) in config {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::Config(format!("config key/value not encodable: {k}")));
        }
        cfg_text.push_str(k);
        cfg_text.push('=');
        cfg_text.push_str(v);
        cfg_text.push('\n');
    }
    let cfg_bytes = cfg_text.into_bytes();

    let n = cloud.len();
    let b = cloud.basis_len();
    let mut out = Vec::with_capacity(16 + 4 + cfg_bytes.len() + n * 3 * 4 + n * 3 * b * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&SH_CONVENTION_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(cloud.l_max() as u32).to_le_bytes());
    out.extend_from_slice(&(cfg_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg_bytes);
    for p in cloud.positions() {
        for ax in 0..3 {
            out.extend_from_slice(&(p[ax] as f32).to_le_bytes());
        }
    }
    for &v in cloud.sh() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated: needed {} bytes at offset {}, file has {}",
                n,
                self.at,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic, not a DPRF file".into()));
    }
    let format = r.u16()?;
    if format != FORMAT_VERSION {
        return Err(Error::CorruptCheckpoint(format!(
            "unsupported format version {format} (expected {FORMAT_VERSION})"
        )));
    }
    let sh_convention = r.u16()?;
    if sh_convention != SH_CONVENTION_VERSION {
        return Err(Error::CorruptCheckpoint(format!(
            "sh convention version {sh_convention} does not match this build ({SH_CONVENTION_VERSION})"
        )));
    }
    let n = r.u32()? as usize;
    let l_max = r.u32()? as usize;
    if l_max > sh::MAX_DEGREE {
        return Err(Error::CorruptCheckpoint(format!("l_max {l_max} out of range")));
    }
    let cfg_len = r.u32()? as usize;
    let cfg_bytes = r.take(cfg_len)?;
    let cfg_text = std::str::from_utf8(cfg_bytes)
        .map_err(|_| Error::CorruptCheckpoint("config block is not UTF-8".into()))?;
    let mut config = BTreeMap::new();
    for line in cfg_text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::CorruptCheckpoint(format!("bad config line: {line}")))?;
        config.insert(k.to_string(), v.to_string());
    }

    let stride = 3 * sh::basis_len(l_max);
    let expected_total = r.at + n * 3 * 4 + n * stride * 4;
    if bytes.len() != expected_total {
        return Err(Error::CorruptCheckpoint(format!(
            "file length {} does not match header (expected {expected_total})",
            bytes.len()
        )));
    }
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let x = r.f32()? as f64;
        let y = r.f32()? as f64;
        let z = r.f32()? as f64;
        positions.push(Vector3::new(x, y, z));
    }
    let mut coeffs = Vec::with_capacity(n * stride);
    for _ in 0..n * stride {
        coeffs.push(r.f32()? as f64);
    }
    Ok(Checkpoint {
        cloud: RadiancePointCloud::new(positions, coeffs, l_max)?,
        config,
    })
}
