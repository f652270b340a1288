use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Items × raters grid of nominal labels; `None` marks a missing rating.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub items: Vec<Vec<Option<String>>>,
}

impl RatingMatrix {
    pub fn new(items: Vec<Vec<Option<String>>>) -> Self {
        RatingMatrix { items }
    }

    /// Builds a matrix from rows of plain labels (no missing cells).
    pub fn from_complete<S: AsRef<str>>(rows: &[Vec<S>]) -> Self {
        RatingMatrix {
            items: rows
                .iter()
                .map(|r| r.iter().map(|v| Some(v.as_ref().to_string())).collect())
                .collect(),
        }
    }
}

/// Krippendorff's alpha for nominal data via the coincidence matrix.
///
/// Items with fewer than two ratings are not pairable and are ignored. When
/// every pairable value is identical the expected disagreement is zero and
/// alpha is reported as 1.
pub fn krippendorff_alpha(matrix: &RatingMatrix) -> Result<f64, MetricError> {
    let mut coincidence: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for item in &matrix.items {
        let values: Vec<&str> = item.iter().flatten().map(String::as_str).collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        let w = 1.0 / (m - 1) as f64;
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a, b)).or_insert(0.0) += w;
                }
            }
        }
    }
    let mut marginals: BTreeMap<&str, f64> = BTreeMap::new();
    for (&(c, _), o) in &coincidence {
        *marginals.entry(c).or_insert(0.0) += o;
    }
    let n: f64 = marginals.values().sum();
    if n < 2.0 {
        return Err(MetricError::Undefined(
            "Krippendorff's alpha needs at least two pairable ratings".into(),
        ));
    }
    let observed: f64 = coincidence
        .iter()
        .filter(|((c, k), _)| c != k)
        .map(|(_, o)| o)
        .sum();
    let total_sq: f64 = marginals.values().sum::<f64>().powi(2);
    let same_sq: f64 = marginals.values().map(|v| v * v).sum();
    let expected = total_sq - same_sq;
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        let perfect = RatingMatrix::from_complete(&[vec!["A", "A"], vec!["B", "B"], vec!["A", "A"]]);
        assert_eq!(krippendorff_alpha(&perfect).unwrap(), 1.0);
        let flipped = RatingMatrix::from_complete(&[vec!["A", "B"], vec!["B", "A"]]);
        assert!((krippendorff_alpha(&flipped).unwrap() + 0.5).abs() < 1e-12);
        let single = RatingMatrix::from_complete(&[vec!["A"]]);
        assert!(matches!(krippendorff_alpha(&single), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn missing_cells_are_excluded() {
        let m = RatingMatrix::new(vec![
            vec![Some("A".into()), Some("B".into()), None],
            vec![Some("B".into()), None, Some("A".into())],
            vec![Some("A".into()), None, None],
        ]);
        let complete = RatingMatrix::from_complete(&[vec!["A", "B"], vec!["B", "A"]]);
        assert_eq!(krippendorff_alpha(&m).unwrap(), krippendorff_alpha(&complete).unwrap());
    }
}
