//! Pass@k estimation: the unbiased per-problem estimator
//! `1 - C(n-S, k) / C(n, k)`, benchmark aggregation, the Delta-method
//! variance approximation, and exact distributional references computed by
//! full Binomial enumeration.

use statrs::distribution::{Binomial, Discrete};

use crate::error::{Error, Result};
use crate::eval_log::OutcomeMatrix;

/// Largest n that exact enumeration will accept.
pub const MAX_ENUMERABLE_N: u64 = 10_000;

fn check_nk(n: u64, k: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("sample count n must be at least 1".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k must satisfy 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Unbiased per-problem Pass@k from S successes out of n samples.
///
/// Evaluates `1 - prod_{i=n-S+1..n} (1 - k/i)`, which equals
/// `1 - C(n-S,k)/C(n,k)` without forming binomial coefficients. When fewer
/// than k failures exist the estimate is exactly 1. The product runs from
/// large i downward so that growing S only appends factors <= 1, keeping the
/// estimate monotone in S even in floating point.
pub fn passk_problem(n: u64, successes: u64, k: u64) -> Result<f64> {
    check_nk(n, k)?;
    if successes > n {
        return Err(Error::Domain(format!(
            "successes must satisfy 0 <= S <= n, got S={successes}, n={n}"
        )));
    }
    if n - successes < k {
        return Ok(1.0);
    }
    let mut product = 1.0f64;
    let mut i = n;
    while i > n - successes {
        product *= 1.0 - k as f64 / i as f64;
        i -= 1;
    }
    Ok(1.0 - product)
}

/// Delta-method approximation of Var(q-hat):
/// `k^2 (1-p)^(2(k-1)) p (1-p) / n`.
pub fn variance_delta(n: u64, p: f64, k: u64) -> Result<f64> {
    check_nk(n, k)?;
    check_probability(p)?;
    let kf = k as f64;
    Ok(kf * kf * (1.0 - p).powi(2 * (k as i32 - 1)) * p * (1.0 - p) / n as f64)
}

/// Ratio of Var(q-hat) to the single-trial Bernoulli variance p(1-p):
/// `k^2 (1-p)^(2(k-1)) / n`. Undefined at p in {0, 1}.
pub fn variance_ratio(n: u64, p: f64, k: u64) -> Result<f64> {
    check_nk(n, k)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "variance ratio needs p strictly inside (0, 1), got {p}"
        )));
    }
    let kf = k as f64;
    Ok(kf * kf * (1.0 - p).powi(2 * (k as i32 - 1)) / n as f64)
}

/// Probability of at least one success in k attempts: `1 - (1-p)^k`.
pub fn latent_passk(p: f64, k: u64) -> f64 {
    1.0 - (1.0 - p).powi(k as i32)
}

/// A problem with latent single-attempt success probability p, observed
/// through n samples and scored at k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentSuccessModel {
    p: f64,
    n: u64,
    k: u64,
}

impl LatentSuccessModel {
    pub fn new(p: f64, n: u64, k: u64) -> Result<Self> {
        check_probability(p)?;
        check_nk(n, k)?;
        Ok(LatentSuccessModel { p, n, k })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// The target parameter q_k = 1 - (1-p)^k.
    pub fn latent_passk(&self) -> f64 {
        latent_passk(self.p, self.k)
    }

    fn check_enumerable(&self) -> Result<()> {
        if self.n > MAX_ENUMERABLE_N {
            return Err(Error::Domain(format!(
                "exact enumeration supports n <= {MAX_ENUMERABLE_N}, got {}",
                self.n
            )));
        }
        Ok(())
    }

    fn pmf_table(&self) -> Vec<f64> {
        let dist = Binomial::new(self.p, self.n).expect("validated parameters");
        (0..=self.n).map(|s| dist.pmf(s)).collect()
    }
}

/// E[q-hat] by summing over the full Binomial distribution of S. Unbiasedness
/// means this equals `1 - (1-p)^k` up to float round-off.
pub fn exact_expectation(model: &LatentSuccessModel) -> Result<f64> {
    model.check_enumerable()?;
    let pmf = model.pmf_table();
    let mut acc = 0.0;
    for s in 0..=model.n {
        acc += pmf[s as usize] * passk_problem(model.n, s, model.k)?;
    }
    Ok(acc)
}

/// Var(q-hat) by full enumeration, computed two-pass around the enumerated
/// mean to avoid cancellation when q-hat concentrates near 1.
pub fn exact_variance(model: &LatentSuccessModel) -> Result<f64> {
    model.check_enumerable()?;
    let pmf = model.pmf_table();
    let mut mean = 0.0;
    let mut estimates = Vec::with_capacity(model.n as usize + 1);
    for s in 0..=model.n {
        let q = passk_problem(model.n, s, model.k)?;
        mean += pmf[s as usize] * q;
        estimates.push(q);
    }
    let mut var = 0.0;
    for (s, q) in estimates.iter().enumerate() {
        let dev = q - mean;
        var += pmf[s] * dev * dev;
    }
    Ok(var)
}

/// Benchmark-level Pass@k: unweighted mean over problems, with the
/// plug-in (p-hat = S/n) Delta variance summed under problem independence.
#[derive(Debug, Clone, PartialEq)]
pub struct PassKEstimate {
    pub k: u64,
    pub benchmark_value: f64,
    pub per_problem: Vec<(String, f64)>,
    pub variance_estimate: f64,
}

pub fn passk_benchmark(matrix: &OutcomeMatrix, k: u64) -> Result<PassKEstimate> {
    if matrix.problems.is_empty() {
        return Err(Error::Domain("outcome matrix has no problems".into()));
    }
    let offenders: Vec<String> = matrix
        .problems
        .iter()
        .filter(|p| p.samples < k)
        .map(|p| p.problem_id.clone())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::InsufficientSamples {
            k,
            problems: offenders,
        });
    }
    // Problems arrive sorted by id, which fixes the summation order.
    let mut per_problem = Vec::with_capacity(matrix.problems.len());
    let mut value_sum = 0.0;
    let mut variance_sum = 0.0;
    for problem in &matrix.problems {
        let q = passk_problem(problem.samples, problem.successes, k)?;
        let p_hat = problem.successes as f64 / problem.samples as f64;
        variance_sum += variance_delta(problem.samples, p_hat, k)?;
        value_sum += q;
        per_problem.push((problem.problem_id.clone(), q));
    }
    let m = matrix.problems.len() as f64;
    Ok(PassKEstimate {
        k,
        benchmark_value: value_sum / m,
        per_problem,
        variance_estimate: variance_sum / (m * m),
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval_log::{group, ingest_str};

    #[test]
    fn no_successes_means_zero() {
        assert_eq!(passk_problem(4, 0, 2).unwrap(), 0.0);
    }

    #[test]
    fn fewer_failures_than_k_means_one() {
        assert_eq!(passk_problem(10, 8, 4).unwrap(), 1.0);
    }

    #[test]
    fn four_choose_two_case() {
        let got = passk_problem(4, 2, 2).unwrap();
        let want = oracle::passk_reference(4, 2, 2);
        assert!((want - 5.0 / 6.0).abs() < 1e-15);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn domain_violations_are_rejected() {
        assert_eq!(passk_problem(4, 5, 2).unwrap_err().code(), "DomainError");
        assert_eq!(passk_problem(4, 2, 0).unwrap_err().code(), "DomainError");
        assert_eq!(passk_problem(4, 2, 5).unwrap_err().code(), "DomainError");
        assert_eq!(passk_problem(0, 0, 1).unwrap_err().code(), "DomainError");
    }

    #[test]
    fn delta_variance_vanishes_at_certainty() {
        assert_eq!(variance_delta(10, 0.0, 2).unwrap(), 0.0);
        assert_eq!(variance_delta(10, 1.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn delta_variance_at_k1_is_proportion_variance() {
        let p = 0.37;
        assert_eq!(variance_delta(50, p, 1).unwrap(), p * (1.0 - p) / 50.0);
    }

    #[test]
    fn delta_variance_spot_value() {
        // 16 * 0.7^6 * 0.21 / 100
        let got = variance_delta(100, 0.3, 4).unwrap();
        assert!((got - 0.0039530064).abs() / 0.0039530064 < 1e-12);
    }

    #[test]
    fn ratio_collapses_at_k1() {
        assert_eq!(variance_ratio(20, 0.3, 1).unwrap(), 1.0 / 20.0);
    }

    #[test]
    fn ratio_spot_value_is_exact_in_binary() {
        // 16 * 0.5^6 / 16, all powers of two
        assert_eq!(variance_ratio(16, 0.5, 4).unwrap(), 0.015625);
    }

    #[test]
    fn ratio_undefined_at_degenerate_p() {
        assert_eq!(variance_ratio(16, 0.0, 4).unwrap_err().code(), "DomainError");
        assert_eq!(variance_ratio(16, 1.0, 4).unwrap_err().code(), "DomainError");
    }

    #[test]
    fn expectation_matches_latent_passk() {
        let model = LatentSuccessModel::new(0.3, 10, 2).unwrap();
        let got = exact_expectation(&model).unwrap();
        assert!((got - 0.51).abs() < 1e-12);
        assert!((got - model.latent_passk()).abs() < 1e-12);
    }

    #[test]
    fn expectation_degenerate_cases() {
        let zero = LatentSuccessModel::new(0.0, 10, 3).unwrap();
        assert!(exact_expectation(&zero).unwrap().abs() < 1e-15);
        let one = LatentSuccessModel::new(1.0, 10, 3).unwrap();
        assert!((exact_expectation(&one).unwrap() - 1.0).abs() < 1e-15);
        let single = LatentSuccessModel::new(0.42, 1, 1).unwrap();
        assert!((exact_expectation(&single).unwrap() - 0.42).abs() < 1e-12);
    }

    #[test]
    fn variance_of_single_bernoulli() {
        let p = 0.42;
        let model = LatentSuccessModel::new(p, 1, 1).unwrap();
        assert!((exact_variance(&model).unwrap() - p * (1.0 - p)).abs() < 1e-12);
    }

    #[test]
    fn variance_degenerate_at_p_zero() {
        let model = LatentSuccessModel::new(0.0, 20, 4).unwrap();
        assert!(exact_variance(&model).unwrap().abs() < 1e-15);
    }

    #[test]
    fn delta_tracks_exact_variance_at_large_n() {
        let model = LatentSuccessModel::new(0.3, 200, 4).unwrap();
        let exact = exact_variance(&model).unwrap();
        let delta = variance_delta(200, 0.3, 4).unwrap();
        assert!((exact - delta).abs() / exact < 0.05);
    }

    #[test]
    fn enumeration_bound_is_enforced() {
        let model = LatentSuccessModel::new(0.5, MAX_ENUMERABLE_N + 1, 2).unwrap();
        assert_eq!(exact_expectation(&model).unwrap_err().code(), "DomainError");
    }

    fn matrix_from(lines: &[String]) -> OutcomeMatrix {
        let ds = ingest_str(&lines.join("\n")).unwrap();
        group(&ds, "c1", "bench").unwrap().0
    }

    fn record_line(problem: &str, outcomes: &str) -> String {
        format!(
            r#"{{"checkpoint":"c1","step":1,"benchmark":"bench","problem":"{problem}","mode":"sampled","outcomes":{outcomes}}}"#
        )
    }

    #[test]
    fn benchmark_single_problem() {
        let matrix = matrix_from(&[record_line("p1", "[true,false,true,false]")]);
        let est = passk_benchmark(&matrix, 2).unwrap();
        assert!((est.benchmark_value - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(est.per_problem.len(), 1);
    }

    #[test]
    fn benchmark_all_solved_has_zero_variance() {
        let matrix = matrix_from(&[
            record_line("p1", "[true,true,true]"),
            record_line("p2", "[true,true,true]"),
        ]);
        let est = passk_benchmark(&matrix, 2).unwrap();
        assert_eq!(est.benchmark_value, 1.0);
        assert_eq!(est.variance_estimate, 0.0);
    }

    #[test]
    fn benchmark_k1_is_mean_success_rate() {
        let matrix = matrix_from(&[
            record_line("p1", "[true,false,false,false]"),
            record_line("p2", "[true,true,true,false]"),
        ]);
        let est = passk_benchmark(&matrix, 1).unwrap();
        let want = (0.25 + 0.75) / 2.0;
        assert!((est.benchmark_value - want).abs() < 1e-12);
    }

    #[test]
    fn benchmark_rejects_undersampled_problems() {
        let matrix = matrix_from(&[
            record_line("p1", "[true,false]"),
            record_line("p2", "[true,false,true,false]"),
        ]);
        match passk_benchmark(&matrix, 4).unwrap_err() {
            Error::InsufficientSamples { k, problems } => {
                assert_eq!(k, 4);
                assert_eq!(problems, vec!["p1".to_string()]);
            }
            other => panic!("expected InsufficientSamples, got {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn nsk() -> impl Strategy<Value = (u64, u64, u64)> {
            (1u64..=30).prop_flat_map(|n| {
                (Just(n), 0..=n, 1..=n)
            })
        }

        proptest! {
            #[test]
            fn matches_binomial_coefficient_definition((n, s, k) in nsk()) {
                let got = passk_problem(n, s, k).unwrap();
                let want = oracle::passk_reference(n, s, k);
                prop_assert!((got - want).abs() <= 1e-12);
            }

            #[test]
            fn stays_in_unit_interval((n, s, k) in nsk()) {
                let got = passk_problem(n, s, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&got));
            }

            #[test]
            fn monotone_in_k((n, s, _k) in nsk()) {
                let mut prev = 0.0;
                for k in 1..=n {
                    let cur = passk_problem(n, s, k).unwrap();
                    prop_assert!(cur >= prev);
                    prev = cur;
                }
            }

            #[test]
            fn monotone_in_successes((n, _s, k) in nsk()) {
                let mut prev = 0.0;
                for s in 0..=n {
                    let cur = passk_problem(n, s, k).unwrap();
                    prop_assert!(cur >= prev);
                    prev = cur;
                }
            }
        }
    }
}
