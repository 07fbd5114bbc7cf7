//! Paired significance tests used by the experiment summaries.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_diff: f64,
    pub t_stat: f64,
    /// One-sided p-value for `mean(a - b) > 0`.
    pub p_value: f64,
}

/// One-sided paired t-test of `a > b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> PairedTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return PairedTest {
            mean_diff: mean,
            t_stat: f64::NAN,
            p_value: 1.0,
        };
    }
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        return PairedTest {
            mean_diff: mean,
            t_stat: if mean > 0.0 { f64::INFINITY } else { f64::NAN },
            p_value: p,
        };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
    PairedTest {
        mean_diff: mean,
        t_stat: t,
        p_value: 1.0 - dist.cdf(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_consistent_improvement() {
        let a: Vec<f64> = (0..30).map(|i| 1.0 + 0.01 * (i % 3) as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| 0.9 + 0.01 * (i % 5) as f64).collect();
        let t = paired_t_test(&a, &b);
        assert!(t.p_value < 1e-6);
        let t = paired_t_test(&b, &a);
        assert!(t.p_value > 0.99);
    }

    #[test]
    fn known_value() {
        // diffs 1,2,3: mean 2, sd 1, t = 2*sqrt(3) = 3.4641, df 2 -> p = 0.03709
        let t = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]);
        assert!((t.t_stat - 12f64.sqrt()).abs() < 1e-12);
        assert!((t.p_value - 0.037_089).abs() < 1e-5);
    }
}
