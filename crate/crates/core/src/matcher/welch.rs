use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Welch's unequal-variance t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    /// mean(a) − mean(b) over its standard error.
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Both samples have zero variance. `t` is then 0 (equal constants) or
    /// ±∞ (unequal), `p_value` 1 or 0, and `df` is `n_a + n_b − 2`.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::data(format!("Welch test needs two samples of size >= 2, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::data("non-finite value in Welch test sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let diff = ma - mb;
        return Ok(WelchTest {
            t: if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY },
            df: na + nb - 2.0,
            p_value: if diff == 0.0 { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    // P(|T| > |t|) = I_{df/(df+t²)}(df/2, 1/2)
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(WelchTest { t, df, p_value: p, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand::seq::SliceRandom;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn normal(n: usize, mu: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = Normal::new(mu, 1.0).unwrap();
        (0..n).map(|_| d.sample(rng)).collect()
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.5, 3.0, 7.0];
        let w = welch_t(&a, &a).unwrap();
        assert_eq!(w.t, 0.0);
        assert_eq!(w.p_value, 1.0);
        assert!(!w.degenerate);
    }

    #[test]
    fn constant_samples() {
        let w = welch_t(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((w.t, w.p_value, w.degenerate), (0.0, 1.0, true));
        let w = welch_t(&[1.0, 1.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((w.t, w.p_value, w.degenerate), (f64::NEG_INFINITY, 0.0, true));
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn reference_values() {
        // Computed by hand: means 3 and 6, variances 2.5 and 2 → t = −3/sqrt(0.5 + 1/3).
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [4.0, 5.0, 6.0, 7.0, 8.0, 6.0];
        let w = welch_t(&a, &b).unwrap();
        let se2: f64 = 2.5 / 5.0 + 2.0 / 6.0;
        assert!((w.t + 3.0 / se2.sqrt()).abs() < 1e-12);
        let df = se2 * se2 / ((0.5f64).powi(2) / 4.0 + (2.0f64 / 6.0).powi(2) / 5.0);
        assert!((w.df - df).abs() < 1e-12);
        // For one degree of freedom the t distribution is Cauchy.
        let w = welch_t(&[0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!((w.df - 1.0).abs() < 1e-12);
        let cauchy = 1.0 - 2.0 * w.t.abs().atan() / std::f64::consts::PI;
        assert!((w.p_value - cauchy).abs() < 1e-12);
    }

    #[test]
    fn shifted_normals_are_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = normal(100, 0.0, &mut rng);
        let b = normal(100, 5.0, &mut rng);
        assert!(welch_t(&a, &b).unwrap().p_value < 1e-5);
    }

    fn permutation_p(a: &[f64], b: &[f64], resamples: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let observed = (mean(a) - mean(b)).abs();
        let mut pool: Vec<f64> = a.iter().chain(b).copied().collect();
        let mut hits = 0;
        for _ in 0..resamples {
            pool.shuffle(rng);
            let (x, y) = pool.split_at(a.len());
            if (mean(x) - mean(y)).abs() >= observed - 1e-12 {
                hits += 1;
            }
        }
        (hits + 1) as f64 / (resamples + 1) as f64
    }

    #[test]
    fn agrees_with_permutation_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut agree = 0;
        for _ in 0..100 {
            let shift = rng.random_range(0.0..2.5);
            let a = normal(8, 0.0, &mut rng);
            let b = normal(8, shift, &mut rng);
            let welch = welch_t(&a, &b).unwrap().p_value < 0.05;
            let perm = permutation_p(&a, &b, 20_000, &mut rng) < 0.05;
            agree += (welch == perm) as usize;
        }
        assert!(agree >= 95, "{agree}");
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(seed in 0u64..500, na in 2usize..20, nb in 2usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = normal(na, 0.0, &mut rng);
            let b = normal(nb, 0.5, &mut rng);
            let ab = welch_t(&a, &b).unwrap();
            let ba = welch_t(&b, &a).unwrap();
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert!((ab.t + ba.t).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }
    }
}
