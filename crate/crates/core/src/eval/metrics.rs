use super::EvalError;

/// Root mean square difference over `(pred, truth)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::TooFew(1));
    }
    let sse: f64 = pairs.iter().map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// Product-moment correlation, clamped to [-1, 1] against rounding.
pub fn pearson(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.len() < 2 {
        return Err(EvalError::TooFew(2));
    }
    // Welford-style single pass keeps the sums centered
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &(x, y)) in pairs.iter().enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 {
        return Err(EvalError::ZeroVariance("predicted"));
    }
    if syy <= 0.0 {
        return Err(EvalError::ZeroVariance("truth"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use statrs::statistics::Statistics;

    /// Two passes: means first, then centered sums.
    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let cov = x.iter().covariance(y.iter());
        cov / (x.iter().std_dev() * y.iter().std_dev())
    }

    fn rmse_oracle(x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            acc += (x[i] - y[i]).powi(2);
        }
        (acc / x.len() as f64).sqrt()
    }

    #[test]
    fn fixed_values() {
        assert_eq!(rmse(&[(4.0, 5.0), (6.0, 5.0)]).unwrap(), 1.0);
        assert_eq!(rmse(&[(2.5, 2.5), (7.0, 7.0)]).unwrap(), 0.0);
        assert!(matches!(rmse(&[]), Err(EvalError::TooFew(1))));
        let y = [1.0, 2.5, 3.0, 7.5, 4.25];
        let same: Vec<_> = y.iter().map(|v| (*v, *v)).collect();
        let neg: Vec<_> = y.iter().map(|v| (*v, -*v)).collect();
        assert_eq!(pearson(&same).unwrap(), 1.0);
        assert_eq!(pearson(&neg).unwrap(), -1.0);
        assert!(matches!(pearson(&[(1.0, 2.0), (1.0, 3.0)]), Err(EvalError::ZeroVariance("predicted"))));
        assert!(matches!(pearson(&[(1.0, 2.0)]), Err(EvalError::TooFew(2))));
    }

    #[test]
    fn random_vectors_match_oracles() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1000).map(|_| rng.gen_range(1.0..12.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.6 * v + rng.gen_range(-2.0..2.0)).collect();
        let pairs: Vec<_> = x.iter().copied().zip(y.iter().copied()).collect();
        assert!((rmse(&pairs).unwrap() - rmse_oracle(&x, &y)).abs() <= 1e-12);
        assert!((pearson(&pairs).unwrap() - pearson_oracle(&x, &y)).abs() <= 1e-12);
    }

    proptest! {
        #[test]
        fn invariances(
            v in proptest::collection::vec((1.0f64..12.0, 1.0f64..12.0), 3..60),
            a in 0.1f64..10.0, b in -50.0f64..50.0, c in -5.0f64..5.0,
        ) {
            let shifted: Vec<_> = v.iter().map(|(p, t)| (p + c, t + c)).collect();
            prop_assert!((rmse(&v).unwrap() - rmse(&shifted).unwrap()).abs() <= 1e-12);
            if let Ok(r) = pearson(&v) {
                let affine: Vec<_> = v.iter().map(|(p, t)| (a * p + b, *t)).collect();
                prop_assert!((r - pearson(&affine).unwrap()).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn perfect_affine(y in proptest::collection::vec(-100.0f64..100.0, 2..80), a in 0.01f64..100.0, b in -100.0f64..100.0) {
            let pairs: Vec<_> = y.iter().map(|v| (*v, a * v + b)).collect();
            if let Ok(r) = pearson(&pairs) {
                prop_assert!((r - 1.0).abs() <= 1e-12);
            }
        }
    }
}
