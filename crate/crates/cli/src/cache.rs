//! On-disk spectrum cache.
//!
//! Files are named `<sha256 hex>.spec` and hold, all little-endian:
//!
//! ```text
//! magic        8 bytes  "RCSPEC01"
//! dim          u64      dimension of the full space
//! source_len   u64      followed by that many UTF-8 bytes
//! n_blocks     u64
//! per block:
//!   sector_tag u8       0 none, 1 parity, 2 U(1)
//!   sector     i64      parity eigenvalue, or twice the U(1) label
//!   m          u64      block size
//!   support    m x u64  flat basis indices
//!   values     m x f64  ascending eigenvalues
//!   vec_tag    u8       0 none, 1 real, 2 complex
//!   vectors    m*m f64 (real) or m*m (re, im) f64 pairs, column-major
//! ```
//!
//! A missing, truncated or malformed file is a cache miss; entries are
//! written to a temporary file and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rabi_chaos::models::ModelParams;
use rabi_chaos::spectral::{BlockVectors, EigenBlock, Spectrum};
use rabi_chaos::symmetry::{HalfInt, SectorLabel};
use rabi_chaos::Complex64;
use sha2::{Digest, Sha256};

use crate::error::CliError;

const MAGIC: &[u8; 8] = b"RCSPEC01";

#[derive(Debug, Clone)]
pub struct SpectrumCache {
    dir: PathBuf,
}

/// Hex SHA-256 of the exact parameter bits, cutoffs, sector and vector flag.
pub fn cache_key(params: &ModelParams<f64>, cutoffs: &[usize], sector: Option<f64>, with_vectors: bool) -> String {
    let text = format!(
        "kind={:?};omega={:016x};delta={:016x};g={:016x};lambda={:016x};cutoffs={:?};sector={};vectors={}",
        params.kind,
        params.omega.to_bits(),
        params.delta.to_bits(),
        params.g.to_bits(),
        params.lambda_perturb.to_bits(),
        cutoffs,
        sector.map_or("all".to_string(), |s| format!("{:016x}", s.to_bits())),
        with_vectors
    );
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl SpectrumCache {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating cache {}", dir.display()), e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.spec"))
    }

    pub fn load(&self, key: &str) -> Option<Spectrum<f64>> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        decode(&bytes)
    }

    pub fn store(&self, key: &str, spectrum: &Spectrum<f64>) -> Result<(), CliError> {
        let final_path = self.path(key);
        let tmp = self.dir.join(format!("{key}.tmp.{}", std::process::id()));
        let ctx = || format!("writing cache entry {}", final_path.display());
        let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::io(ctx(), e))?;
        f.write_all(&encode(spectrum)).and_then(|_| f.sync_all()).map_err(|e| CliError::io(ctx(), e))?;
        std::fs::rename(&tmp, &final_path).map_err(|e| CliError::io(ctx(), e))
    }
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

pub fn encode(spectrum: &Spectrum<f64>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u64(&mut out, spectrum.dim() as u64);
    put_u64(&mut out, spectrum.source().len() as u64);
    out.extend_from_slice(spectrum.source().as_bytes());
    put_u64(&mut out, spectrum.blocks().len() as u64);
    for b in spectrum.blocks() {
        let (tag, value) = match b.sector {
            None => (0u8, 0i64),
            Some(SectorLabel::Parity(p)) => (1, p as i64),
            Some(SectorLabel::U1(c)) => (2, c.twice()),
        };
        out.push(tag);
        out.extend_from_slice(&value.to_le_bytes());
        put_u64(&mut out, b.values.len() as u64);
        for &i in &b.support {
            put_u64(&mut out, i as u64);
        }
        for &v in &b.values {
            put_f64(&mut out, v);
        }
        match &b.vectors {
            None => out.push(0),
            Some(BlockVectors::Real(m)) => {
                out.push(1);
                m.iter().for_each(|x| put_f64(&mut out, *x));
            }
            Some(BlockVectors::Complex(m)) => {
                out.push(2);
                for z in m.iter() {
                    put_f64(&mut out, z.re);
                    put_f64(&mut out, z.im);
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        Some(self.take(1)?[0])
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn i64(&mut self) -> Option<i64> {
        Some(i64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn len(&mut self) -> Option<usize> {
        let n = usize::try_from(self.u64()?).ok()?;
        // every counted item occupies at least one byte
        (n <= self.bytes.len()).then_some(n)
    }
}

pub fn decode(bytes: &[u8]) -> Option<Spectrum<f64>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return None;
    }
    let dim = r.len()?;
    let source_len = r.len()?;
    let source = std::str::from_utf8(r.take(source_len)?).ok()?.to_string();
    let n_blocks = r.len()?;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let tag = r.u8()?;
        let value = r.i64()?;
        let sector = match tag {
            0 => None,
            1 => Some(SectorLabel::Parity(i8::try_from(value).ok()?)),
            2 => Some(SectorLabel::U1(HalfInt::from_twice(value))),
            _ => return None,
        };
        let m = r.len()?;
        let support = (0..m).map(|_| r.u64().and_then(|i| usize::try_from(i).ok())).collect::<Option<Vec<_>>>()?;
        let values = (0..m).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
        let vectors = match r.u8()? {
            0 => None,
            1 => {
                let data = (0..m * m).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
                Some(BlockVectors::Real(DMatrix::from_vec(m, m, data)))
            }
            2 => {
                let data = (0..m * m).map(|_| Some(Complex64::new(r.f64()?, r.f64()?))).collect::<Option<Vec<_>>>()?;
                Some(BlockVectors::Complex(DMatrix::from_vec(m, m, data)))
            }
            _ => return None,
        };
        blocks.push(EigenBlock { support, values, vectors, sector });
    }
    if r.pos != bytes.len() {
        return None;
    }
    Spectrum::from_blocks(dim, blocks, source).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rabi_chaos::spectral::solve_model;

    #[test]
    fn round_trip_is_exact() {
        let p = ModelParams::qr(1.0, 4.0, 1.3).unwrap();
        for vectors in [false, true] {
            let (_, s) = solve_model(&p, &[12], vectors).unwrap();
            assert_eq!(decode(&encode(&s)).unwrap(), s);
        }
        let p = ModelParams::perturbed_qr(1.0, 4.0, 1.3, 0.2).unwrap();
        let (_, s) = solve_model(&p, &[6], true).unwrap();
        assert_eq!(decode(&encode(&s)).unwrap(), s);
    }

    #[test]
    fn corrupt_entries_are_misses() {
        let p = ModelParams::qr(1.0, 4.0, 1.3).unwrap();
        let (_, s) = solve_model(&p, &[5], false).unwrap();
        let bytes = encode(&s);
        assert!(decode(&bytes[..bytes.len() - 3]).is_none());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_none());
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_none());
    }

    #[test]
    fn keys_separate_parameters() {
        let p = ModelParams::qr(1.0, 4.0, 1.3).unwrap();
        let k = cache_key(&p, &[10], None, false);
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key(&p.with_g(1.3000000000000003), &[10], None, false));
        assert_ne!(k, cache_key(&p, &[10], Some(-1.0), false));
        assert_ne!(k, cache_key(&p, &[10], None, true));
        assert_eq!(k, cache_key(&p, &[10], None, false));
    }
}
