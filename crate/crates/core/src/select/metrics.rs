use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("predictions ({predictions}) and actuals ({actuals}) differ in length")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("no observations")]
    Empty,
    #[error("actual value at index {0} is zero; MAPE is undefined")]
    ZeroActual(usize),
}

fn check(predictions: &[f64], actuals: &[f64]) -> Result<(), MetricError> {
    if predictions.len() != actuals.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            actuals: actuals.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64, MetricError> {
    check(predictions, actuals)?;
    let mse = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute percent error, in percent.
pub fn mape(predictions: &[f64], actuals: &[f64]) -> Result<f64, MetricError> {
    check(predictions, actuals)?;
    if let Some(i) = actuals.iter().position(|&a| a == 0.0) {
        return Err(MetricError::ZeroActual(i));
    }
    let total: f64 = predictions.iter().zip(actuals).map(|(p, a)| ((p - a) / a).abs()).sum();
    Ok(total / predictions.len() as f64 * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(mape(&[3.0], &[1.0]).unwrap(), 200.0);
        assert_eq!(rmse(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mape(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 75.0);
    }

    #[test]
    fn errors() {
        assert_eq!(mape(&[1.0, 1.0], &[1.0, 0.0]), Err(MetricError::ZeroActual(1)));
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn pair_order_does_not_matter(pairs in prop::collection::vec((-100.0f64..100.0, 1.0f64..100.0), 1..20), rot in 0usize..20) {
            let (p, a): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let k = rot % pairs.len();
            let (pr, ar): (Vec<f64>, Vec<f64>) = pairs[k..].iter().chain(&pairs[..k]).copied().unzip();
            prop_assert!((rmse(&p, &a).unwrap() - rmse(&pr, &ar).unwrap()).abs() < 1e-9);
            prop_assert!((mape(&p, &a).unwrap() - mape(&pr, &ar).unwrap()).abs() < 1e-9);
        }
    }
}
