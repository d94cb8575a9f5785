use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::Result;

/// Leading bytes of a trace dump.
pub const TRACE_MAGIC: &[u8; 8] = b"MVPTRACE";

/// Effective sample size by Geyer's initial positive sequence estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let acov = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = acov(0);
    if g0 <= 0.0 {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acov(lag) + acov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let var = -g0 + 2.0 * sum;
    if var <= 0.0 {
        return n as f64;
    }
    (n as f64 * g0 / var).min(n as f64)
}

/// Writes named equal-length columns: magic, u32 column count, u64 row count,
/// then per column a u32 name length, the UTF-8 name and the little-endian
/// f64 values.
pub fn write_trace(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.1.len());
    if let Some((name, col)) = columns.iter().find(|c| c.1.len() != rows) {
        return Err(crate::Error::InvalidArgument(format!(
            "trace column `{name}` has {} rows, expected {rows}",
            col.len()
        )));
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(TRACE_MAGIC)?;
        w.write_all(&(columns.len() as u32).to_le_bytes())?;
        w.write_all(&(rows as u64).to_le_bytes())?;
        for (name, col) in columns {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            for v in *col {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}
