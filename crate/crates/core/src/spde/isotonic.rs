/// In-place least-squares projection onto nondecreasing sequences
/// (pool adjacent violators, unit weights).
pub fn isotonic_project(values: &mut [f64]) {
    // blocks as (sum, len); merged while the previous mean exceeds the last
    let mut sums: Vec<f64> = Vec::with_capacity(values.len());
    let mut lens: Vec<usize> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        sums.push(v);
        lens.push(1);
        while sums.len() > 1 {
            let k = sums.len() - 1;
            if sums[k - 1] * lens[k] as f64 > sums[k] * lens[k - 1] as f64 {
                let (s, l) = (sums.pop().unwrap(), lens.pop().unwrap());
                sums[k - 1] += s;
                lens[k - 1] += l;
            } else {
                break;
            }
        }
    }
    let mut j = 0;
    for (s, l) in sums.into_iter().zip(lens) {
        let mean = s / l as f64;
        for v in &mut values[j..j + l] {
            *v = mean;
        }
        j += l;
    }
}

/// Total size of the downward jumps `Σ max(v_{j−1} − v_j, 0)`.
pub fn negative_increment_mass(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[0] - w[1]).max(0.0)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `x̂_i = max_{j ≤ i} min_{k ≥ i} mean(x_j..=x_k)`.
    fn minmax_oracle(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        (i..n)
                            .map(|k| x[j..=k].iter().sum::<f64>() / (k - j + 1) as f64)
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    #[test]
    fn small_examples() {
        let mut v = vec![1.0, 3.0, 2.0, 4.0];
        isotonic_project(&mut v);
        assert_eq!(v, vec![1.0, 2.5, 2.5, 4.0]);
        let mut v = vec![3.0, 2.0, 1.0];
        isotonic_project(&mut v);
        assert_eq!(v, vec![2.0, 2.0, 2.0]);
        let mut v: Vec<f64> = vec![];
        isotonic_project(&mut v);
    }

    proptest! {
        #[test]
        fn matches_minmax_formula(x in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let mut v = x.clone();
            isotonic_project(&mut v);
            let oracle = minmax_oracle(&x);
            for (a, b) in v.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn idempotent_and_mass_preserving(x in prop::collection::vec(-5.0f64..5.0, 1..60)) {
            let mut v = x.clone();
            isotonic_project(&mut v);
            prop_assert!(v.windows(2).all(|w| w[0] <= w[1]));
            let mut again = v.clone();
            isotonic_project(&mut again);
            prop_assert_eq!(&again, &v);
            let s0: f64 = x.iter().sum();
            let s1: f64 = v.iter().sum();
            prop_assert!((s0 - s1).abs() < 1e-9);
            let shift = (v[v.len() - 1] - x[x.len() - 1]).abs();
            prop_assert!(shift <= negative_increment_mass(&x) + 1e-12);
        }
    }
}
