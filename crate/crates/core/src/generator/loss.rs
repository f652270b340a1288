use super::GeneratorError;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Negative log-likelihood of a reference sequence, summed over steps.
///
/// `rows[t]` is the predicted distribution at step `t` and `reference[t]`
/// the index of the reference token.
pub fn nll_loss(rows: &[Vec<f64>], reference: &[usize]) -> Result<f64, GeneratorError> {
    if rows.len() != reference.len() {
        return Err(GeneratorError::LengthMismatch {
            rows: rows.len(),
            tokens: reference.len(),
        });
    }
    let mut total = 0.0;
    for (step, (row, &token)) in rows.iter().zip(reference).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|p| *p < 0.0) {
            return Err(GeneratorError::RowNotNormalized { step, sum });
        }
        let p = *row
            .get(token)
            .ok_or(GeneratorError::TokenOutOfRange { step, token })?;
        if p <= 0.0 {
            return Err(GeneratorError::ZeroProbability { step });
        }
        total -= p.ln();
    }
    // -ln(1) is -0.0; report a clean zero
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_rows_give_zero() {
        let rows = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(nll_loss(&rows, &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rows_match_closed_form() {
        let rows = vec![vec![0.25; 4]; 2];
        let expected = 2.0 * 4f64.ln();
        assert!((nll_loss(&rows, &[0, 3]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 2.77259).abs() < 1e-5);
    }

    #[test]
    fn error_paths() {
        let rows = vec![vec![0.5, 0.5]];
        assert!(matches!(
            nll_loss(&rows, &[0, 1]),
            Err(GeneratorError::LengthMismatch { rows: 1, tokens: 2 })
        ));
        assert!(matches!(
            nll_loss(&[vec![1.0, 0.0]], &[1]),
            Err(GeneratorError::ZeroProbability { step: 0 })
        ));
        assert!(matches!(
            nll_loss(&[vec![0.6, 0.6]], &[1]),
            Err(GeneratorError::RowNotNormalized { .. })
        ));
        assert!(matches!(
            nll_loss(&[vec![1.0]], &[4]),
            Err(GeneratorError::TokenOutOfRange { .. })
        ));
    }
}
