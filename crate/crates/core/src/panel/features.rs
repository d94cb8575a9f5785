use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use nalgebra::DMatrix;

use super::metadata::canonical_pair;
use super::{CharacteristicsPanel, Metadata, MonthId};
use crate::{Error, Result};

/// Suffix of squared predictors.
pub const SQUARE_SUFFIX: &str = "_sq";
/// Separator of interaction predictors.
pub const INTERACTION_SEP: &str = "_x_";

/// One column of the expanded predictor space, by base index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Main(usize),
    Square(usize),
    Interaction(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorClass {
    Main,
    SecondOrder,
    Interaction,
}

impl PredictorClass {
    pub const ALL: [PredictorClass; 3] = [
        PredictorClass::Main,
        PredictorClass::SecondOrder,
        PredictorClass::Interaction,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PredictorClass::Main => "main",
            PredictorClass::SecondOrder => "second-order",
            PredictorClass::Interaction => "interaction",
        }
    }
}

/// Classifies an expanded predictor name by its naming convention.
pub fn classify(name: &str) -> Option<PredictorClass> {
    if name.is_empty() {
        None
    } else if name.contains(INTERACTION_SEP) {
        Some(PredictorClass::Interaction)
    } else if name.ends_with(SQUARE_SUFFIX) {
        Some(PredictorClass::SecondOrder)
    } else {
        Some(PredictorClass::Main)
    }
}

/// Which predictors enter the policy: bases, optional squares and interactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorSpec {
    base_names: Vec<String>,
    include_squares: bool,
    include_interactions: bool,
    square_exclusions: BTreeSet<String>,
    interaction_exclusions: BTreeSet<(String, String)>,
}

impl PredictorSpec {
    /// Main effects only. Base names must be unique and must not collide with
    /// the expansion naming scheme.
    pub fn new<S: Into<String>>(base_names: impl IntoIterator<Item = S>) -> Result<Self> {
        let base_names: Vec<String> = base_names.into_iter().map(Into::into).collect();
        if base_names.is_empty() {
            return Err(Error::InvalidArgument("predictor spec needs at least one base".into()));
        }
        let mut seen = HashSet::new();
        for n in &base_names {
            if classify(n) != Some(PredictorClass::Main) {
                return Err(Error::InvalidArgument(format!(
                    "base name `{n}` clashes with the `{SQUARE_SUFFIX}` / `{INTERACTION_SEP}` naming scheme"
                )));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate base name `{n}`")));
            }
        }
        Ok(Self {
            base_names,
            include_squares: false,
            include_interactions: false,
            square_exclusions: BTreeSet::new(),
            interaction_exclusions: BTreeSet::new(),
        })
    }

    /// Bases from `names`, squares / interactions switched on as requested, and
    /// exclusions taken from the sidecar (binary characteristics are never squared).
    pub fn from_metadata(names: &[String], meta: &Metadata, squares: bool, interactions: bool) -> Result<Self> {
        Ok(Self::new(names.iter().cloned())?
            .with_squares(squares)
            .with_interactions(interactions)
            .exclude_squares(meta.binary.iter().chain(&meta.square_exclusions).cloned())
            .exclude_interactions(meta.interaction_exclusions.iter().cloned()))
    }

    pub fn with_squares(mut self, on: bool) -> Self {
        self.include_squares = on;
        self
    }

    pub fn with_interactions(mut self, on: bool) -> Self {
        self.include_interactions = on;
        self
    }

    pub fn exclude_squares<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.square_exclusions.extend(names.into_iter().map(Into::into));
        self
    }

    pub fn exclude_interactions<S: AsRef<str>>(mut self, pairs: impl IntoIterator<Item = (S, S)>) -> Self {
        self.interaction_exclusions
            .extend(pairs.into_iter().map(|(a, b)| canonical_pair(a.as_ref(), b.as_ref())));
        self
    }

    pub fn base_names(&self) -> &[String] {
        &self.base_names
    }

    pub fn includes_squares(&self) -> bool {
        self.include_squares
    }

    pub fn includes_interactions(&self) -> bool {
        self.include_interactions
    }

    /// Expanded columns: bases, then squares, then interactions over `i < j`
    /// in base order.
    pub fn terms(&self) -> Vec<Term> {
        let k = self.base_names.len();
        let mut terms: Vec<Term> = (0..k).map(Term::Main).collect();
        if self.include_squares {
            terms.extend(
                (0..k)
                    .filter(|&i| !self.square_exclusions.contains(&self.base_names[i]))
                    .map(Term::Square),
            );
        }
        if self.include_interactions {
            for i in 0..k {
                for j in i + 1..k {
                    let pair = canonical_pair(&self.base_names[i], &self.base_names[j]);
                    if !self.interaction_exclusions.contains(&pair) {
                        terms.push(Term::Interaction(i, j));
                    }
                }
            }
        }
        terms
    }

    pub fn term_name(&self, term: Term) -> String {
        match term {
            Term::Main(i) => self.base_names[i].clone(),
            Term::Square(i) => format!("{}{SQUARE_SUFFIX}", self.base_names[i]),
            Term::Interaction(i, j) => {
                let (a, b) = canonical_pair(&self.base_names[i], &self.base_names[j]);
                format!("{a}{INTERACTION_SEP}{b}")
            }
        }
    }
}

/// Ordered expanded predictor names (`a`, `a_sq`, `a_x_b`).
pub fn expand_predictors(spec: &PredictorSpec) -> Vec<String> {
    spec.terms().into_iter().map(|t| spec.term_name(t)).collect()
}

/// Cross-sectionally standardized predictors for one month.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMatrix {
    pub month: MonthId,
    pub firm_ids: Vec<String>,
    /// Firms × predictors.
    pub values: DMatrix<f64>,
    pub names: Arc<Vec<String>>,
    /// Columns with no cross-sectional variation, emitted as zeros.
    pub degenerate: Vec<bool>,
}

impl PredictorMatrix {
    pub fn n_firms(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_predictors(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        let n = self.values.nrows();
        &self.values.as_slice()[k * n..(k + 1) * n]
    }
}

/// Centers `col` and scales it to unit sample standard deviation. A column
/// without variation is zeroed and `false` returned.
pub fn standardize_in_place(col: &mut [f64]) -> bool {
    let n = col.len();
    if n < 2 {
        col.fill(0.0);
        return false;
    }
    let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = col.iter().sum::<f64>() / n as f64;
    col.iter_mut().for_each(|v| *v -= mean);
    let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 1e-12 * scale) || scale == 0.0 {
        col.fill(0.0);
        return false;
    }
    col.iter_mut().for_each(|v| *v /= sd);
    true
}

/// Standardizes a base characteristic over its non-missing entries, fills the
/// missing ones with 0, and rescales the full column to unit sd.
pub(crate) fn standardize_base(raw: &[f64]) -> (Vec<f64>, bool) {
    let idx: Vec<usize> = (0..raw.len()).filter(|&i| !raw[i].is_nan()).collect();
    let mut present: Vec<f64> = idx.iter().map(|&i| raw[i]).collect();
    let mut col = vec![0.0; raw.len()];
    if !standardize_in_place(&mut present) {
        return (col, false);
    }
    for (&i, v) in idx.iter().zip(present) {
        col[i] = v;
    }
    let ok = standardize_in_place(&mut col);
    (col, ok)
}

/// Builds the standardized predictor matrix for `month`.
///
/// `panel` is expected to be winsorized already. Bases are standardized over
/// the firms with data, missing cells set to 0 (the cross-sectional mean),
/// and expansions built from the standardized bases and standardized again.
pub fn standardize_and_impute(
    panel: &CharacteristicsPanel,
    month: MonthId,
    spec: &PredictorSpec,
) -> Result<PredictorMatrix> {
    let names = Arc::new(expand_predictors(spec));
    standardize_month(panel, month, spec, &spec.terms(), names)
}

pub(crate) fn standardize_month(
    panel: &CharacteristicsPanel,
    month: MonthId,
    spec: &PredictorSpec,
    terms: &[Term],
    names: Arc<Vec<String>>,
) -> Result<PredictorMatrix> {
    let slice = panel.month(month)?;
    let cols: Vec<usize> = spec
        .base_names()
        .iter()
        .map(|b| panel.char_index(b).ok_or_else(|| Error::UnknownPredictor(b.clone())))
        .collect::<Result<_>>()?;
    let n = slice.n_firms();
    let bases: Vec<(Vec<f64>, bool)> = cols.iter().map(|&c| standardize_base(&slice.values[c])).collect();

    let mut values = DMatrix::<f64>::zeros(n, terms.len());
    let mut degenerate = vec![false; terms.len()];
    for (k, term) in terms.iter().enumerate() {
        let mut col: Vec<f64> = match *term {
            Term::Main(i) => {
                degenerate[k] = !bases[i].1;
                bases[i].0.clone()
            }
            Term::Square(i) => bases[i].0.iter().map(|v| v * v).collect(),
            Term::Interaction(i, j) => bases[i].0.iter().zip(&bases[j].0).map(|(a, b)| a * b).collect(),
        };
        if !matches!(term, Term::Main(_)) {
            degenerate[k] = !standardize_in_place(&mut col);
        }
        values.column_mut(k).copy_from_slice(&col);
    }
    Ok(PredictorMatrix {
        month,
        firm_ids: slice.firms.clone(),
        values,
        names,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{CharacteristicMeta, MonthSlice};
    use proptest::prelude::*;

    fn panel(cols: Vec<Vec<f64>>) -> CharacteristicsPanel {
        let n = cols[0].len();
        let k = cols.len();
        let slice = MonthSlice {
            month: 200001,
            firms: (0..n).map(|i| format!("f{i:03}")).collect(),
            values: cols,
            ret_fwd: vec![0.0; n],
        };
        let names = (0..k).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
        CharacteristicsPanel::new(names, vec![CharacteristicMeta::default(); k], vec![slice]).unwrap()
    }

    fn col_stats(c: &[f64]) -> (f64, f64) {
        let n = c.len() as f64;
        let m = c.iter().sum::<f64>() / n;
        let v = c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn two_bases_expand_to_five() {
        let spec = PredictorSpec::new(["a", "b"])
            .unwrap()
            .with_squares(true)
            .with_interactions(true);
        assert_eq!(expand_predictors(&spec), vec!["a", "b", "a_sq", "b_sq", "a_x_b"]);
    }

    #[test]
    fn interaction_names_are_canonical() {
        let spec = PredictorSpec::new(["z", "a"]).unwrap().with_interactions(true);
        assert_eq!(expand_predictors(&spec), vec!["z", "a", "a_x_z"]);
        let spec = spec.exclude_interactions([("z", "a")]);
        assert_eq!(expand_predictors(&spec), vec!["z", "a"]);
    }

    #[test]
    fn ninety_five_bases() {
        let names: Vec<String> = (0..95).map(|i| format!("c{i:02}")).collect();
        let excluded: Vec<String> = names[..7].to_vec();
        let spec = PredictorSpec::new(names.clone())
            .unwrap()
            .with_squares(true)
            .with_interactions(true)
            .exclude_squares(excluded);
        // 95 + (95 - 7) + 95 * 94 / 2
        assert_eq!(expand_predictors(&spec).len(), 95 + 88 + 4465);
        let pairs: Vec<(String, String)> = (0..38).map(|j| (names[0].clone(), names[j + 1].clone())).collect();
        let spec = spec.exclude_interactions(pairs);
        assert_eq!(expand_predictors(&spec).len(), 4610);
    }

    #[test]
    fn rejects_clashing_names() {
        assert!(PredictorSpec::new(["a_sq"]).is_err());
        assert!(PredictorSpec::new(["a_x_b"]).is_err());
        assert!(PredictorSpec::new(["a", "a"]).is_err());
        assert!(PredictorSpec::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn three_firm_standardization() {
        // Sample sd of (-1, 0, 1) is 1, so the values are already standardized.
        let p = panel(vec![vec![-1.0, 0.0, 1.0]]);
        let spec = PredictorSpec::new(["a"]).unwrap();
        let x = standardize_and_impute(&p, 200001, &spec).unwrap();
        let expect = [-1.0, 0.0, 1.0];
        for (a, b) in x.column(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_cell_sits_at_the_mean() {
        let p = panel(vec![vec![1.0, f64::NAN, 3.0, 8.0]]);
        let spec = PredictorSpec::new(["a"]).unwrap();
        let x = standardize_and_impute(&p, 200001, &spec).unwrap();
        assert_eq!(x.column(0)[1], 0.0);
        let (m, sd) = col_stats(x.column(0));
        assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        // Ordering of present values is preserved.
        assert!(x.column(0)[0] < x.column(0)[2] && x.column(0)[2] < x.column(0)[3]);
    }

    #[test]
    fn degenerate_column_is_zero_and_flagged() {
        let p = panel(vec![vec![2.0; 5], vec![1.0, 2.0, 3.0, 4.0, 6.0]]);
        let spec = PredictorSpec::new(["a", "b"])
            .unwrap()
            .with_squares(true)
            .with_interactions(true);
        let x = standardize_and_impute(&p, 200001, &spec).unwrap();
        assert_eq!(x.degenerate, vec![true, false, true, false, true]);
        assert!(x.column(0).iter().all(|v| *v == 0.0));
        assert!(x.column(4).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unknown_month_and_base() {
        let p = panel(vec![vec![1.0, 2.0]]);
        let spec = PredictorSpec::new(["a"]).unwrap();
        assert!(matches!(
            standardize_and_impute(&p, 199901, &spec),
            Err(Error::UnknownMonth(_))
        ));
        let spec = PredictorSpec::new(["nope"]).unwrap();
        assert!(matches!(
            standardize_and_impute(&p, 200001, &spec),
            Err(Error::UnknownPredictor(_))
        ));
    }

    proptest! {
        #[test]
        fn expansion_count_formula(
            k in 1usize..30,
            sq_mask in prop::collection::vec(any::<bool>(), 30),
            pair_mask in prop::collection::vec(any::<bool>(), 435),
        ) {
            let names: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
            let sq: Vec<String> = (0..k).filter(|&i| sq_mask[i]).map(|i| names[i].clone()).collect();
            let mut pairs = Vec::new();
            let mut idx = 0;
            for i in 0..k {
                for j in i + 1..k {
                    if pair_mask[idx % pair_mask.len()] {
                        pairs.push((names[j].clone(), names[i].clone()));
                    }
                    idx += 1;
                }
            }
            let spec = PredictorSpec::new(names.clone()).unwrap()
                .with_squares(true).with_interactions(true)
                .exclude_squares(sq.clone()).exclude_interactions(pairs.clone());
            let expanded = expand_predictors(&spec);
            prop_assert_eq!(expanded.len(), k + (k - sq.len()) + (k * (k - 1) / 2 - pairs.len()));
            let unique: HashSet<&String> = expanded.iter().collect();
            prop_assert_eq!(unique.len(), expanded.len());
        }

        #[test]
        fn columns_are_standardized(
            raw in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.85, -50.0f64..50.0), 12), 3),
        ) {
            let cols: Vec<Vec<f64>> = raw.iter().map(|c| c.iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect();
            let p = panel(cols);
            let spec = PredictorSpec::new(["a", "b", "c"]).unwrap().with_squares(true).with_interactions(true);
            let x = standardize_and_impute(&p, 200001, &spec).unwrap();
            for k in 0..x.n_predictors() {
                let c = x.column(k);
                prop_assert!(c.iter().all(|v| v.is_finite()));
                if x.degenerate[k] {
                    prop_assert!(c.iter().all(|v| *v == 0.0));
                } else {
                    let (m, sd) = col_stats(c);
                    prop_assert!(m.abs() < 1e-10);
                    prop_assert!((sd - 1.0).abs() < 1e-8);
                }
            }
        }
    }
}
