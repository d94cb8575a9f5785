use log::debug;
use serde::{Deserialize, Serialize};

use super::CharacteristicsPanel;
use crate::linalg::{quantile_linear, quantile_nearest_rank, sorted_copy};
use crate::{Error, Result};

/// Empirical percentile rule used for the clipping bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileRule {
    /// Linear interpolation between order statistics, `h = (n - 1) p`.
    #[default]
    Linear,
    /// The `ceil(n p)`-th order statistic. Winsorizing with this rule is
    /// idempotent; the interpolated rule is not.
    NearestRank,
}

impl QuantileRule {
    fn quantile(self, sorted: &[f64], p: f64) -> f64 {
        match self {
            QuantileRule::Linear => quantile_linear(sorted, p),
            QuantileRule::NearestRank => quantile_nearest_rank(sorted, p),
        }
    }
}

/// Clips the non-missing entries of `values` to their `[lower, upper]`
/// empirical percentiles. Returns `false` (values untouched) when fewer than
/// two entries are present.
pub fn winsorize_values(values: &mut [f64], lower: f64, upper: f64, rule: QuantileRule) -> bool {
    let present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.len() < 2 {
        return false;
    }
    let sorted = sorted_copy(&present);
    let lo = rule.quantile(&sorted, lower);
    let hi = rule.quantile(&sorted, upper);
    for v in values.iter_mut().filter(|v| !v.is_nan()) {
        *v = v.clamp(lo, hi);
    }
    true
}

/// Cross-sectional winsorization with the default (interpolated) rule.
pub fn winsorize_cross_section(panel: &CharacteristicsPanel, lower: f64, upper: f64) -> Result<CharacteristicsPanel> {
    winsorize_with_rule(panel, lower, upper, QuantileRule::Linear)
}

/// Winsorizes every non-binary characteristic within each month.
pub fn winsorize_with_rule(
    panel: &CharacteristicsPanel,
    lower: f64,
    upper: f64,
    rule: QuantileRule,
) -> Result<CharacteristicsPanel> {
    if !(0.0..1.0).contains(&lower) || !(lower < upper && upper <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "winsorization limits must satisfy 0 <= lower < upper <= 1, got ({lower}, {upper})"
        )));
    }
    let meta = panel.meta();
    let names = panel.names();
    let months = crate::par::map(panel.months(), |slice| {
        let mut slice = slice.clone();
        for (c, col) in slice.values.iter_mut().enumerate() {
            if meta[c].binary {
                continue;
            }
            if !winsorize_values(col, lower, upper, rule) {
                debug!(
                    "month {}: `{}` has fewer than 2 values, not winsorized",
                    slice.month, names[c]
                );
            }
        }
        slice
    });
    Ok(panel.with_months(months))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{CharacteristicMeta, MonthSlice};
    use proptest::prelude::*;

    fn one_month(cols: Vec<Vec<f64>>, binary: Vec<bool>) -> CharacteristicsPanel {
        let n = cols[0].len();
        let names = (0..cols.len()).map(|i| format!("c{i}")).collect();
        let meta = binary
            .into_iter()
            .map(|b| CharacteristicMeta {
                binary: b,
                exclude_square: b,
            })
            .collect();
        let slice = MonthSlice {
            month: 200001,
            firms: (0..n).map(|i| format!("f{i:04}")).collect(),
            values: cols,
            ret_fwd: vec![0.0; n],
        };
        CharacteristicsPanel::new(names, meta, vec![slice]).unwrap()
    }

    #[test]
    fn one_to_hundred() {
        // Brute force: h = 99 p, interpolate between the neighbouring order statistics.
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let oracle = |p: f64| {
            let h = 99.0 * p;
            let j = h.floor() as usize;
            xs[j] + (h - j as f64) * (xs[j + 1] - xs[j])
        };
        let p = one_month(vec![xs.clone()], vec![false]);
        let w = winsorize_cross_section(&p, 0.01, 0.99).unwrap();
        let col = &w.months()[0].values[0];
        assert!((col[0] - oracle(0.01)).abs() < 1e-12);
        assert!((col[0] - 1.99).abs() < 1e-12);
        assert!((col[99] - oracle(0.99)).abs() < 1e-12);
        assert!((col[99] - 99.01).abs() < 1e-12);
        assert_eq!(&col[1..99], &xs[1..99]);
    }

    #[test]
    fn degenerate_and_binary_columns_untouched() {
        let p = one_month(
            vec![vec![3.0; 10], vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]],
            vec![false, true],
        );
        let w = winsorize_cross_section(&p, 0.1, 0.9).unwrap();
        assert_eq!(w, p);
    }

    #[test]
    fn single_value_passes_through() {
        let mut v = vec![f64::NAN, 5.0, f64::NAN];
        assert!(!winsorize_values(&mut v, 0.01, 0.99, QuantileRule::Linear));
        assert_eq!(v[1], 5.0);
    }

    #[test]
    fn rejects_bad_limits() {
        let p = one_month(vec![vec![1.0, 2.0]], vec![false]);
        assert!(winsorize_cross_section(&p, 0.5, 0.5).is_err());
        assert!(winsorize_cross_section(&p, -0.1, 0.9).is_err());
    }

    proptest! {
        #[test]
        fn nearest_rank_is_idempotent(
            xs in prop::collection::vec(-1e3f64..1e3, 2..200),
            lower in 0.0f64..0.2,
            width in 0.3f64..0.8,
        ) {
            let upper = (lower + width).min(1.0);
            let mut once = xs.clone();
            winsorize_values(&mut once, lower, upper, QuantileRule::NearestRank);
            let mut twice = once.clone();
            winsorize_values(&mut twice, lower, upper, QuantileRule::NearestRank);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn interpolated_rule_is_a_contraction(
            xs in prop::collection::vec(-1e3f64..1e3, 2..200),
        ) {
            // A second interpolated pass can only tighten the bounds, and it
            // stays inside the range produced by the first pass.
            let mut once = xs.clone();
            winsorize_values(&mut once, 0.01, 0.99, QuantileRule::Linear);
            let mut twice = once.clone();
            winsorize_values(&mut twice, 0.01, 0.99, QuantileRule::Linear);
            let (lo, hi) = once.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!(*b >= lo && *b <= hi);
                prop_assert!((a - b).abs() <= hi - lo);
            }
        }
    }
}
