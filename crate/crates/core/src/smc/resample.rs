use crate::error::{Result, SmcError};

/// Systematic resampling: one uniform `u` in `[0, 1)` and the `N` evenly spaced
/// points `(u + i) / N`. Output indices are sorted.
pub fn systematic_resample(normalized: &[f64], u: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&u) {
        return Err(SmcError::InvalidArgument(format!(
            "systematic resampling offset must lie in [0, 1), got {u}"
        )));
    }
    let n = normalized.len();
    if n == 0 {
        return Err(SmcError::Empty("weights".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut cumulative = normalized[0];
    let mut j = 0;
    for i in 0..n {
        let point = (u + i as f64) / n as f64;
        while point >= cumulative && j < n - 1 {
            j += 1;
            cumulative += normalized[j];
        }
        // rounding in the running sum can push the last points onto a
        // trailing zero-weight particle
        let mut k = j;
        while normalized[k] == 0.0 && k > 0 {
            k -= 1;
        }
        out.push(k);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_mass() {
        for u in [0.0, 0.3, 0.999] {
            assert_eq!(systematic_resample(&[1.0, 0.0, 0.0], u).unwrap(), vec![0, 0, 0]);
        }
    }

    #[test]
    fn uniform_keeps_population() {
        assert_eq!(
            systematic_resample(&[0.25; 4], 0.1).unwrap(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn two_strata() {
        // points 0.15 and 0.65 against cumulative (0.5, 1.0)
        assert_eq!(systematic_resample(&[0.5, 0.5], 0.3).unwrap(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_offset() {
        assert!(systematic_resample(&[1.0], 1.0).is_err());
        assert!(systematic_resample(&[1.0], -0.1).is_err());
    }

    proptest! {
        #[test]
        fn counts_within_one_of_expectation(
            raw in prop::collection::vec(0.0f64..1.0, 1..60),
            u in 0.0f64..1.0,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-9);
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let idx = systematic_resample(&w, u).unwrap();
            prop_assert_eq!(idx.len(), w.len());
            prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
            let n = w.len() as f64;
            for (i, wi) in w.iter().enumerate() {
                let count = idx.iter().filter(|&&k| k == i).count() as f64;
                prop_assert!((count - n * wi).abs() < 1.0 + 1e-9);
            }
        }
    }
}
