use crate::error::{Error, Result};

/// RMSE between two arrays that are already in natural-log space.
pub fn log_rmse(predicted_log: &[f64], target_log: &[f64]) -> f64 {
    assert_eq!(predicted_log.len(), target_log.len());
    if predicted_log.is_empty() {
        return 0.0;
    }
    let sse: f64 = predicted_log
        .iter()
        .zip(target_log)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    (sse / predicted_log.len() as f64).sqrt()
}

/// Coefficient of determination of `predicted` against `target`.
///
/// A constant target yields 1 for an exact fit and 0 otherwise.
pub fn r_squared(predicted: &[f64], target: &[f64]) -> f64 {
    assert_eq!(predicted.len(), target.len());
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = predicted.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

pub fn accuracy(predicted: &[usize], target: &[usize]) -> f64 {
    assert_eq!(predicted.len(), target.len());
    if target.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(target).filter(|(p, t)| p == t).count() as f64 / target.len() as f64
}

/// Cosine similarity; `value_a`/`value_b` name the numerals in errors.
pub fn cosine(a: &[f64], b: &[f64], value_a: f64, value_b: f64) -> Result<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(Error::ZeroNorm(value_a));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm(value_b));
    }
    Ok((a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities() {
        let y = [0.5, 2.0, 7.0];
        assert_eq!(log_rmse(&y, &y), 0.0);
        assert_eq!(r_squared(&y, &y), 1.0);
        let shifted: Vec<f64> = y.iter().map(|v| v + 3.0).collect();
        let p = [0.0, 2.5, 6.0];
        let ps: Vec<f64> = p.iter().map(|v| v + 3.0).collect();
        assert!((log_rmse(&p, &y) - log_rmse(&ps, &shifted)).abs() < 1e-12);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 0, 3, 0]), 0.5);
    }

    #[test]
    fn mean_prediction_has_zero_r2() {
        let t = [1.0, 2.0, 3.0];
        assert!(r_squared(&[2.0; 3], &t).abs() < 1e-12);
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0], 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0], 1.0, 2.0).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0], &[1.0], 7.0, 1.0), Err(Error::ZeroNorm(v)) if v == 7.0));
    }
}
