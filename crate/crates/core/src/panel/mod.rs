//! Firm-month characteristics: ingestion, cleaning, and predictor expansion.
//!
//! The cleaning order is fixed: winsorize each month's cross-section, standardize
//! bases to mean 0 / sd 1 over the firms present, set missing cells to 0, build
//! squares and interactions from the standardized bases, then re-standardize
//! every column. Standard deviations use the `n - 1` denominator throughout.

mod cache;
mod features;
mod metadata;
mod prepared;
mod winsor;

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};

use crate::{Error, Result};

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub(crate) use features::standardize_base;
pub use features::{
    classify, expand_predictors, standardize_and_impute, standardize_in_place, PredictorClass, PredictorMatrix,
    PredictorSpec, Term,
};
pub use metadata::Metadata;
pub use prepared::{prepare_panel, PreparedMonth, PreparedPanel};
pub use winsor::{winsorize_cross_section, winsorize_values, winsorize_with_rule, QuantileRule};

/// Month identifier in `YYYYMM` form.
pub type MonthId = u32;

/// Per-characteristic flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CharacteristicMeta {
    /// Indicator variable taking values in {0, 1}; never winsorized or squared.
    pub binary: bool,
    pub exclude_square: bool,
}

/// One month's cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthSlice {
    pub month: MonthId,
    /// Sorted firm identifiers.
    pub firms: Vec<String>,
    /// `values[c][i]` is characteristic `c` of firm `i`; NaN marks missing.
    pub values: Vec<Vec<f64>>,
    /// Simple return realized over the following month.
    pub ret_fwd: Vec<f64>,
}

impl MonthSlice {
    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }
}

/// Raw firm-month panel, sorted by month then firm.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicsPanel {
    names: Vec<String>,
    meta: Vec<CharacteristicMeta>,
    months: Vec<MonthSlice>,
    dropped_rows: usize,
}

/// Column names of the ingestion CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub month: String,
    pub firm: String,
    pub ret: String,
    /// Characteristic columns to read; `None` takes every other column.
    pub characteristics: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            month: "date".into(),
            firm: "id".into(),
            ret: "ret_fwd".into(),
            characteristics: None,
        }
    }
}

impl CharacteristicsPanel {
    /// Builds a panel from month slices, checking ordering and shape.
    pub fn new(names: Vec<String>, meta: Vec<CharacteristicMeta>, months: Vec<MonthSlice>) -> Result<Self> {
        if meta.len() != names.len() {
            return Err(Error::dim("characteristic metadata", names.len(), meta.len()));
        }
        for w in months.windows(2) {
            if w[0].month >= w[1].month {
                return Err(Error::InvalidArgument(format!(
                    "months must be strictly increasing ({} then {})",
                    w[0].month, w[1].month
                )));
            }
        }
        for m in &months {
            let n = m.firms.len();
            if m.values.len() != names.len() {
                return Err(Error::dim("characteristics per month", names.len(), m.values.len()));
            }
            if m.ret_fwd.len() != n {
                return Err(Error::dim("returns per month", n, m.ret_fwd.len()));
            }
            if let Some(col) = m.values.iter().find(|c| c.len() != n) {
                return Err(Error::dim("characteristic column", n, col.len()));
            }
            for w in m.firms.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::DuplicateCell {
                        month: m.month,
                        firm: w[1].clone(),
                    });
                }
            }
        }
        let panel = Self {
            names,
            meta,
            months,
            dropped_rows: 0,
        };
        panel.check_binary()?;
        Ok(panel)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn meta(&self) -> &[CharacteristicMeta] {
        &self.meta
    }

    pub fn months(&self) -> &[MonthSlice] {
        &self.months
    }

    pub fn month_ids(&self) -> Vec<MonthId> {
        self.months.iter().map(|m| m.month).collect()
    }

    pub fn month(&self, id: MonthId) -> Result<&MonthSlice> {
        self.months
            .binary_search_by_key(&id, |m| m.month)
            .map(|i| &self.months[i])
            .map_err(|_| Error::UnknownMonth(id))
    }

    pub fn char_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows discarded at ingestion because the forward return was missing.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Total number of (month, firm) cells.
    pub fn n_cells(&self) -> usize {
        self.months.iter().map(MonthSlice::n_firms).sum()
    }

    /// Applies binary / square-exclusion flags from a metadata sidecar.
    pub fn with_metadata(mut self, meta: &Metadata) -> Result<Self> {
        for name in meta.binary.iter().chain(&meta.square_exclusions) {
            if self.char_index(name).is_none() {
                return Err(Error::UnknownPredictor(name.clone()));
            }
        }
        for (name, m) in self.names.iter().zip(self.meta.iter_mut()) {
            m.binary = meta.binary.contains(name);
            m.exclude_square = m.binary || meta.square_exclusions.contains(name);
        }
        self.check_binary()?;
        Ok(self)
    }

    pub(crate) fn with_months(&self, months: Vec<MonthSlice>) -> Self {
        Self {
            names: self.names.clone(),
            meta: self.meta.clone(),
            months,
            dropped_rows: self.dropped_rows,
        }
    }

    fn check_binary(&self) -> Result<()> {
        for (c, m) in self.meta.iter().enumerate() {
            if !m.binary {
                continue;
            }
            for slice in &self.months {
                if let Some(v) = slice.values[c].iter().find(|v| !v.is_nan() && **v != 0.0 && **v != 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "binary characteristic `{}` has value {v} in month {}",
                        self.names[c], slice.month
                    )));
                }
            }
        }
        Ok(())
    }
}

fn parse_cell(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if t.is_empty() || matches!(t, "NA" | "NaN" | "nan" | "." | "null") {
        return Ok(f64::NAN);
    }
    t.parse::<f64>()
        .map_err(|e| format!("cannot parse `{t}` as a number: {e}"))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite value `{t}`"))
            }
        })
}

/// The month `n` months after `start` (both `YYYYMM`).
pub fn month_offset(start: MonthId, n: usize) -> std::result::Result<MonthId, String> {
    let (y, m) = (start / 100, start % 100);
    if !(1..=12).contains(&m) {
        return Err(format!("month `{start}` is not a valid YYYYMM value"));
    }
    let idx = y as usize * 12 + (m as usize - 1) + n;
    let out = (idx / 12) * 100 + idx % 12 + 1;
    u32::try_from(out)
        .ok()
        .filter(|v| *v <= 999_912)
        .ok_or_else(|| format!("month offset {n} from {start} overflows"))
}

fn parse_month(s: &str) -> std::result::Result<MonthId, String> {
    let t = s.trim();
    let v: u32 = t.parse().map_err(|_| format!("month `{t}` is not a YYYYMM integer"))?;
    let mm = v % 100;
    if !(100_000..=999_999).contains(&v) || !(1..=12).contains(&mm) {
        return Err(format!("month `{t}` is not a valid YYYYMM value"));
    }
    Ok(v)
}

/// Reads a firm-month CSV with a header row.
///
/// Rows with a missing forward return are dropped and counted; a repeated
/// (month, firm) pair is an error.
pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<CharacteristicsPanel> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let month_col = find(&schema.month)?;
    let firm_col = find(&schema.firm)?;
    let ret_col = find(&schema.ret)?;
    let (names, char_cols): (Vec<String>, Vec<usize>) = match &schema.characteristics {
        Some(list) => {
            let cols = list.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
            (list.clone(), cols)
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![month_col, firm_col, ret_col].contains(i))
            .map(|(i, h)| (h.to_string(), i))
            .unzip(),
    };
    if names.is_empty() {
        return Err(Error::MissingColumn("<at least one characteristic>".into()));
    }

    let mut cells: BTreeMap<MonthId, BTreeMap<String, (Vec<f64>, f64)>> = BTreeMap::new();
    let mut dropped = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let field = |i: usize| rec.get(i).unwrap_or("");
        let month = parse_month(field(month_col)).map_err(perr)?;
        let firm = field(firm_col).to_string();
        if firm.is_empty() {
            return Err(perr("empty firm id".into()));
        }
        let ret = parse_cell(field(ret_col)).map_err(perr)?;
        let values = char_cols
            .iter()
            .map(|&c| parse_cell(field(c)))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(perr)?;
        if ret.is_nan() {
            dropped += 1;
            continue;
        }
        let month_map = cells.entry(month).or_default();
        if month_map.contains_key(&firm) {
            return Err(Error::DuplicateCell { month, firm });
        }
        month_map.insert(firm, (values, ret));
    }
    if dropped > 0 {
        warn!("{}: dropped {dropped} rows with missing forward return", path.display());
    }

    let k = names.len();
    let months = cells
        .into_iter()
        .map(|(month, firms)| {
            let n = firms.len();
            let mut slice = MonthSlice {
                month,
                firms: Vec::with_capacity(n),
                values: vec![Vec::with_capacity(n); k],
                ret_fwd: Vec::with_capacity(n),
            };
            for (firm, (vals, ret)) in firms {
                slice.firms.push(firm);
                slice.ret_fwd.push(ret);
                for (col, v) in slice.values.iter_mut().zip(vals) {
                    col.push(v);
                }
            }
            slice
        })
        .collect();
    let mut panel = CharacteristicsPanel::new(names, vec![CharacteristicMeta::default(); k], months)?;
    panel.dropped_rows = dropped;
    info!(
        "loaded {} months, {} cells, {} characteristics from {}",
        panel.months.len(),
        panel.n_cells(),
        k,
        path.display()
    );
    Ok(panel)
}

/// Writes a panel in the ingestion CSV layout (`date,id,ret_fwd,<chars...>`).
pub fn write_panel_csv(panel: &CharacteristicsPanel, path: impl AsRef<Path>) -> Result<()> {
    crate::fsio::atomic_write(path.as_ref(), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["date".to_string(), "id".into(), "ret_fwd".into()];
        header.extend(panel.names.iter().cloned());
        w.write_record(&header)?;
        for m in &panel.months {
            for i in 0..m.n_firms() {
                let mut row = vec![m.month.to_string(), m.firms[i].clone(), fmt_f64(m.ret_fwd[i])];
                row.extend(m.values.iter().map(|c| fmt_f64(c[i])));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn month_offsets_wrap_years() {
        assert_eq!(month_offset(199_911, 0).unwrap(), 199_911);
        assert_eq!(month_offset(199_911, 2).unwrap(), 200_001);
        assert_eq!(month_offset(200_012, 13).unwrap(), 200_201);
        assert!(month_offset(200_013, 1).is_err());
    }

    #[test]
    fn loads_complete_file() {
        let f = csv_file("date,id,ret_fwd,size\n200001,a,0.01,1\n200001,b,0.02,2\n200002,a,0.03,3\n");
        let p = load_panel(f.path(), &ColumnSchema::default()).unwrap();
        assert_eq!(p.n_cells(), 3);
        assert_eq!(p.month_ids(), vec![200001, 200002]);
        assert_eq!(p.dropped_rows(), 0);
        assert_eq!(p.month(200001).unwrap().values[0], vec![1.0, 2.0]);
    }

    #[test]
    fn drops_missing_return_and_sorts() {
        let f = csv_file("date,id,ret_fwd,x\n200002,b,0.1,1\n200001,z,,2\n200001,c,0.2,\n200001,a,0.3,4\n");
        let p = load_panel(f.path(), &ColumnSchema::default()).unwrap();
        assert_eq!(p.dropped_rows(), 1);
        let m = p.month(200001).unwrap();
        assert_eq!(m.firms, vec!["a", "c"]);
        assert!(m.values[0][1].is_nan());
        assert_eq!(p.months()[1].month, 200002);
    }

    #[test]
    fn duplicate_pair_is_named() {
        let f = csv_file("date,id,ret_fwd,x\n200001,a,0.1,1\n200001,a,0.2,2\n");
        let err = load_panel(f.path(), &ColumnSchema::default()).unwrap_err();
        match err {
            Error::DuplicateCell { month, firm } => {
                assert_eq!((month, firm.as_str()), (200001, "a"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn schema_and_parse_errors() {
        let f = csv_file("date,id,x\n200001,a,1\n");
        assert!(matches!(
            load_panel(f.path(), &ColumnSchema::default()),
            Err(Error::MissingColumn(c)) if c == "ret_fwd"
        ));
        let f = csv_file("date,id,ret_fwd,x\n200001,a,0.1,1\n200001,b,0.1,abc\n");
        match load_panel(f.path(), &ColumnSchema::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = csv_file("date,id,ret_fwd,x\n200013,a,0.1,1\n");
        assert!(matches!(
            load_panel(f.path(), &ColumnSchema::default()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn binary_flags_are_validated() {
        let f = csv_file("date,id,ret_fwd,d\n200001,a,0.1,1\n200001,b,0.1,0.5\n");
        let p = load_panel(f.path(), &ColumnSchema::default()).unwrap();
        let meta = Metadata::parse("binary = d\n").unwrap();
        assert!(matches!(p.with_metadata(&meta), Err(Error::InvalidArgument(_))));
    }
}
