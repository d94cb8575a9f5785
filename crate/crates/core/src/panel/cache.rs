//! Binary cache of a [`PreparedPanel`].
//!
//! Layout, all integers `u32` and all reals `f64`, little-endian:
//!
//! ```text
//! magic      8 bytes  "MVPCACHE"
//! version    u32      1
//! K          u32      predictor count, then K strings
//! M          u32      month count, then M month blocks:
//!   month    u32      YYYYMM
//!   N        u32      firm count, then N firm-id strings
//!   ret_fwd  N f64
//!   has_size u8       0 or 1, then N f64 sizes when 1
//!   degen    K u8     degenerate-column flags
//!   values   K*N f64  column-major: predictor 0 for all firms, then predictor 1, ...
//! string:    u32 byte length followed by UTF-8 bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{PredictorMatrix, PreparedMonth, PreparedPanel};
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"MVPCACHE";
pub const CACHE_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn count(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Cache(format!("count {n} does not fit in u32")))
}

/// Writes `panel` to `path` (via a temporary file renamed into place).
pub fn write_cache(panel: &PreparedPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        put_u32(&mut w, CACHE_VERSION)?;
        put_u32(&mut w, count(panel.names.len())?)?;
        for n in panel.names.iter() {
            put_str(&mut w, n)?;
        }
        put_u32(&mut w, count(panel.months.len())?)?;
        for m in &panel.months {
            put_u32(&mut w, m.month())?;
            put_u32(&mut w, count(m.n_firms())?)?;
            for f in &m.matrix.firm_ids {
                put_str(&mut w, f)?;
            }
            put_f64s(&mut w, &m.ret_fwd)?;
            match &m.size {
                Some(s) => {
                    w.write_all(&[1])?;
                    put_f64s(&mut w, s)?;
                }
                None => w.write_all(&[0])?,
            }
            let flags: Vec<u8> = m.matrix.degenerate.iter().map(|&d| u8::from(d)).collect();
            w.write_all(&flags)?;
            put_f64s(&mut w, m.matrix.values.as_slice())?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Cache(format!("truncated cache: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut b = vec![0u8; len];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Cache(format!("truncated cache: {e}")))?;
        String::from_utf8(b).map_err(|e| Error::Cache(format!("invalid UTF-8: {e}")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(self.bytes::<8>()?))).collect()
    }
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<PreparedPanel> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    if &r.bytes::<8>()? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic header".into()));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let k = r.u32()? as usize;
    let names = Arc::new((0..k).map(|_| r.string()).collect::<Result<Vec<_>>>()?);
    let m = r.u32()? as usize;
    let mut months = Vec::with_capacity(m);
    for _ in 0..m {
        let month = r.u32()?;
        let n = r.u32()? as usize;
        let firm_ids = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let ret_fwd = r.f64s(n)?;
        let size = match r.bytes::<1>()?[0] {
            0 => None,
            1 => Some(r.f64s(n)?),
            b => return Err(Error::Cache(format!("bad size flag {b}"))),
        };
        let degenerate = (0..k)
            .map(|_| Ok(r.bytes::<1>()?[0] != 0))
            .collect::<Result<Vec<_>>>()?;
        let values = DMatrix::from_vec(n, k, r.f64s(n * k)?);
        months.push(PreparedMonth {
            matrix: PredictorMatrix {
                month,
                firm_ids,
                values,
                names: names.clone(),
                degenerate,
            },
            ret_fwd,
            size,
        });
    }
    let mut tail = [0u8; 1];
    if r.0.read(&mut tail)? != 0 {
        return Err(Error::Cache("trailing bytes after last month".into()));
    }
    Ok(PreparedPanel { names, months })
}
