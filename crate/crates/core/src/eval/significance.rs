use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bleu::{sentence_stats, BleuStats};
use super::EvalError;

pub const MIN_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    ApproximateRandomization,
    PairedBootstrap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub test: TestKind,
    pub metric_a: f64,
    pub metric_b: f64,
    /// `metric_a - metric_b`
    pub delta: f64,
    pub p_value: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Trial `t` draws from its own ChaCha stream so the result does not depend
/// on how trials are scheduled across threads.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn check(trials: usize, a: &[BleuStats], b: &[BleuStats]) -> Result<(), EvalError> {
    if trials < MIN_TRIALS {
        return Err(EvalError::TooFewTrials { trials, min: MIN_TRIALS });
    }
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { hyp: a.len(), reference: b.len() });
    }
    Ok(())
}

fn total(stats: &[BleuStats]) -> BleuStats {
    let mut t = BleuStats::default();
    for s in stats {
        t += *s;
    }
    t
}

/// Approximate randomization over precomputed per-sentence statistics.
pub fn approx_randomization_stats(a: &[BleuStats], b: &[BleuStats], trials: usize, seed: u64) -> Result<SignificanceReport, EvalError> {
    check(trials, a, b)?;
    let (metric_a, metric_b) = (total(a).score(), total(b).score());
    let observed = (metric_a - metric_b).abs();
    let at_least = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = trial_rng(seed, t);
            let (mut x, mut y) = (BleuStats::default(), BleuStats::default());
            for (sa, sb) in a.iter().zip(b) {
                if rng.gen::<bool>() {
                    x += *sb;
                    y += *sa;
                } else {
                    x += *sa;
                    y += *sb;
                }
            }
            (x.score() - y.score()).abs() >= observed
        })
        .count();
    Ok(SignificanceReport {
        test: TestKind::ApproximateRandomization,
        metric_a,
        metric_b,
        delta: metric_a - metric_b,
        p_value: (at_least + 1) as f64 / (trials + 1) as f64,
        trials,
        seed,
    })
}

/// Two-sided approximate randomization test on the corpus BLEU difference.
///
/// Each trial swaps the two systems' outputs for every sentence with
/// probability ½; `p = (#{trial gap ≥ observed gap} + 1) / (trials + 1)`.
pub fn approx_randomization<S: AsRef<str>, R: AsRef<str>>(
    hyp_a: &[S],
    hyp_b: &[S],
    refs: &[R],
    trials: usize,
    seed: u64,
    lowercase: bool,
) -> Result<SignificanceReport, EvalError> {
    let a = sentence_stats(hyp_a, refs, lowercase)?;
    let b = sentence_stats(hyp_b, refs, lowercase)?;
    approx_randomization_stats(&a, &b, trials, seed)
}

/// Paired bootstrap resampling: the fraction of resampled test sets on
/// which the observed winner does not win, add-one corrected.
pub fn paired_bootstrap_stats(a: &[BleuStats], b: &[BleuStats], samples: usize, seed: u64) -> Result<SignificanceReport, EvalError> {
    check(samples, a, b)?;
    let (metric_a, metric_b) = (total(a).score(), total(b).score());
    let sign = (metric_a - metric_b).signum();
    let n = a.len();
    let losses = (0..samples)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = trial_rng(seed, t);
            let (mut x, mut y) = (BleuStats::default(), BleuStats::default());
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                x += a[i];
                y += b[i];
            }
            let d = x.score() - y.score();
            sign == 0.0 || d * sign <= 0.0
        })
        .count();
    Ok(SignificanceReport {
        test: TestKind::PairedBootstrap,
        metric_a,
        metric_b,
        delta: metric_a - metric_b,
        p_value: (losses + 1) as f64 / (samples + 1) as f64,
        trials: samples,
        seed,
    })
}

pub fn paired_bootstrap<S: AsRef<str>, R: AsRef<str>>(
    hyp_a: &[S],
    hyp_b: &[S],
    refs: &[R],
    samples: usize,
    seed: u64,
    lowercase: bool,
) -> Result<SignificanceReport, EvalError> {
    let a = sentence_stats(hyp_a, refs, lowercase)?;
    let b = sentence_stats(hyp_b, refs, lowercase)?;
    paired_bootstrap_stats(&a, &b, samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_systems_give_p_one() {
        let refs = ["a b c d", "e f g h", "a c e g"];
        let hyp = ["a b c x", "e f g h", "a c"];
        let r = approx_randomization(&hyp, &hyp, &refs, 1000, 5, false).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn too_few_trials() {
        assert!(matches!(approx_randomization(&["a"], &["a"], &["a"], 10, 1, false), Err(EvalError::TooFewTrials { .. })));
    }

    #[test]
    fn p_is_bounded_below() {
        let refs: Vec<String> = (0..50).map(|i| format!("w{i} x{i} y{i} z{i} q{i}")).collect();
        let bad: Vec<String> = (0..50).map(|i| format!("n{i} m{i} o{i} p{i} r{i}")).collect();
        let r = approx_randomization(&refs, &bad, &refs, 1000, 2, false).unwrap();
        assert!(r.p_value >= 1.0 / 1001.0);
        assert!(r.p_value < 0.01);
        let b = paired_bootstrap(&refs, &bad, &refs, 1000, 2, false).unwrap();
        assert!(b.p_value < 0.01 && b.p_value >= 1.0 / 1001.0);
    }
}
