//! Little-endian binary layout:
//!
//! ```text
//! magic    "DRVK"
//! version  u16 = 1
//! header   u32 n_w, n_per_period, n_grid, n_r, q, d_max, n_samples, folds
//!          f64 tol
//!          u64 seed
//!          u32 n_alphas, f64[n_alphas] alphas
//!          f64[q] noise table
//!          f64[n_r] design cut-offs
//! records  sorted by (band, noise, order), each:
//!          u16 band, u16 noise, u16 order, u16 rank
//!          f64 selected alpha, f64 truncation error
//!          f64[n_w·rank] U (column-major), f64[rank] S, f64[n_w·rank] V
//!          u32 CRC32 of the record bytes above
//! trailer  u32 CRC32 of every preceding byte
//! ```

use nalgebra::DMatrix;

use super::{CompressedMap, DictKey, ModelDictionary, TrainingConfig};
use crate::basis::{DesignGrid, PulsationGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DRVK";
pub const FORMAT_VERSION: u16 = 1;

pub(super) fn encode(dict: &ModelDictionary) -> Vec<u8> {
    let c = dict.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [c.n_w, c.n_per_period, c.n_grid, c.n_r, c.q(), c.d_max, c.n_samples, c.folds] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.tol.to_le_bytes());
    out.extend_from_slice(&dict.seed().to_le_bytes());
    out.extend_from_slice(&(c.alphas.len() as u32).to_le_bytes());
    put_f64s(&mut out, &c.alphas);
    put_f64s(&mut out, &c.noise_table);
    put_f64s(&mut out, dict.design().values());

    for (key, map) in dict.iter() {
        let start = out.len();
        for v in [key.band, key.noise, key.order, map.rank()] {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
        let alpha = dict.selected_alpha(key).expect("key from iteration");
        out.extend_from_slice(&alpha.to_le_bytes());
        out.extend_from_slice(&map.rel_err().to_le_bytes());
        put_f64s(&mut out, map.u().as_slice());
        put_f64s(&mut out, map.singular_values());
        put_f64s(&mut out, map.v().as_slice());
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        if end > self.bytes.len() {
            return Err(Error::Truncated(what));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(Error::Truncated(what))?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<ModelDictionary> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut counts = [0usize; 8];
    for c in counts.iter_mut() {
        *c = r.u32("header")? as usize;
    }
    let [n_w, n_per_period, n_grid, n_r, q, d_max, n_samples, folds] = counts;
    let tol = r.f64("header")?;
    let seed = r.u64("header")?;
    let n_alphas = r.u32("header")? as usize;
    let alphas = r.f64s(n_alphas, "alpha table")?;
    let noise_table = r.f64s(q, "noise table")?;
    let design_values = r.f64s(n_r, "design grid")?;

    let config = TrainingConfig {
        n_per_period,
        n_grid,
        n_r,
        noise_table,
        n_w,
        d_max,
        n_samples,
        alphas,
        folds,
        tol,
    };
    if n_w == 0 || n_per_period < 2 || n_grid < 2 || n_r < 2 || q == 0 {
        return Err(Error::Format("header contains invalid counts".into()));
    }
    let grid = PulsationGrid::new(n_per_period, n_grid)?;
    let design = DesignGrid::from_values(&grid, design_values)?;

    let expected = config.entry_count();
    let mut entries = Vec::with_capacity(expected);
    let mut selected = Vec::with_capacity(expected);
    let mut keys = (0..n_r).flat_map(|b| (0..q).flat_map(move |n| (0..=d_max).map(move |o| DictKey::new(b, n, o))));
    for _ in 0..expected {
        let start = r.pos;
        let key = DictKey::new(
            r.u16("record key")? as usize,
            r.u16("record key")? as usize,
            r.u16("record key")? as usize,
        );
        let rank = r.u16("record rank")? as usize;
        let alpha = r.f64("record alpha")?;
        let rel_err = r.f64("record error")?;
        let u = r.f64s(n_w * rank, "record U")?;
        let s = r.f64s(rank, "record S")?;
        let v = r.f64s(n_w * rank, "record V")?;
        let body = &bytes[start..r.pos];
        let crc = r.u32("record checksum")?;
        if crc32fast::hash(body) != crc {
            return Err(Error::Checksum(format!("record {key}")));
        }
        if Some(key) != keys.next() {
            return Err(Error::Format(format!("record {key} out of order")));
        }
        if rank > n_w {
            return Err(Error::Format(format!("record {key} has rank {rank} > n_w {n_w}")));
        }
        let map = CompressedMap::from_factors(
            DMatrix::from_vec(n_w, rank, u),
            s,
            DMatrix::from_vec(n_w, rank, v),
            rel_err,
        )?;
        entries.push(map);
        selected.push(alpha);
    }
    let body_end = r.pos;
    let crc = r.u32("file checksum")?;
    if crc32fast::hash(&bytes[..body_end]) != crc {
        return Err(Error::Checksum("file trailer".into()));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    ModelDictionary::from_parts(config, seed, design, entries, selected)
}
