use std::collections::BTreeSet;

use gendertag::dataset::{build_gender_testsets, plan_datasets, split_indices, BuildSpec, SplitSpec};
use gendertag::eval::{approx_randomization_stats, BleuStats};
use gendertag::ingest::{AnnotatedCorpus, Gender, SentencePair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, gender_of: impl Fn(usize) -> Gender) -> AnnotatedCorpus {
    let pairs = (0..n).map(|i| SentencePair::with_gender(format!("s {i}"), format!("t {i}"), "EN-FR", gender_of(i))).collect();
    AnnotatedCorpus::from_pairs("EN-FR", pairs)
}

/// Every index is included with probability k/N; allow 4.5 binomial sigmas.
fn assert_uniform(counts: &[usize], k: usize, draws: usize) {
    let p = k as f64 / counts.len() as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        let freq = c as f64 / draws as f64;
        assert!((freq - p).abs() < 4.5 * sigma, "index {i}: {freq} vs {p}");
    }
    let mean = counts.iter().sum::<usize>() as f64 / (counts.len() * draws) as f64;
    assert!((mean - p).abs() < 1e-12);
}

#[test]
fn test_split_inclusion_is_uniform() {
    let c = corpus(200, |i| if i % 2 == 0 { Gender::Male } else { Gender::Female });
    let draws = 1000;
    let mut counts = vec![0; 200];
    for seed in 0..draws as u64 {
        let (_, test) = split_indices(&c, &SplitSpec { test_size: 50, seed, exclude_unknown: true }).unwrap();
        for i in test {
            counts[i] += 1;
        }
    }
    assert_uniform(&counts, 50, draws);
}

#[test]
fn gender_test_set_inclusion_is_uniform() {
    let c = corpus(150, |i| if i < 90 { Gender::Male } else { Gender::Female });
    let draws = 1000;
    let (mut male, mut female) = (vec![0; 90], vec![0; 60]);
    for seed in 0..draws as u64 {
        let (m, f) = build_gender_testsets(&c, 30, seed).unwrap();
        for p in &m.pairs {
            male[p.src[2..].parse::<usize>().unwrap()] += 1;
        }
        for p in &f.pairs {
            female[p.src[2..].parse::<usize>().unwrap() - 90] += 1;
        }
    }
    assert_uniform(&male, 30, draws);
    assert_uniform(&female, 30, draws);
}

#[test]
fn large_plan_is_disjoint_and_exhaustive() {
    let c = corpus(10_000, |i| match i % 7 {
        0 => Gender::Unknown,
        1 | 2 | 3 => Gender::Male,
        _ => Gender::Female,
    });
    let spec = BuildSpec { split: SplitSpec { test_size: 2000, seed: 9, exclude_unknown: true }, gender_test_size: 1000, first_person_size: 0, ..Default::default() };
    let plan = plan_datasets(&c, &spec).unwrap();
    let mut seen = BTreeSet::new();
    for (name, set) in plan.sets() {
        for &i in set {
            assert!(seen.insert(i), "{name} repeats {i}");
            assert!(c.pairs[i].has_known_gender());
        }
    }
    let known = c.pairs.iter().filter(|p| p.has_known_gender()).count();
    assert_eq!(seen.len(), known);
    assert_eq!((plan.test.len(), plan.male.len(), plan.female.len()), (2000, 1000, 1000));
    assert_eq!(plan.train.len(), known - 4000);
    assert_eq!(plan_datasets(&c, &spec).unwrap(), plan);
}

#[test]
fn randomization_p_values_are_calibrated_under_the_null() {
    // Both systems draw each sentence's output from the same distribution,
    // so p should be roughly uniform on (0, 1].
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps = 200;
    let mut ps = Vec::with_capacity(reps);
    for rep in 0..reps {
        let sentence = |rng: &mut ChaCha8Rng| {
            let n = 6;
            let mut s = BleuStats { hyp_len: n, ref_len: n, ..Default::default() };
            for k in 0..4 {
                s.totals[k] = n - k as u64;
                s.matches[k] = rng.gen_range(0..=s.totals[k]).min(if k == 0 { n } else { s.matches[k - 1] });
            }
            s
        };
        let a: Vec<BleuStats> = (0..30).map(|_| sentence(&mut rng)).collect();
        let b: Vec<BleuStats> = (0..30).map(|_| sentence(&mut rng)).collect();
        ps.push(approx_randomization_stats(&a, &b, 1000, rep as u64).unwrap().p_value);
    }
    ps.sort_by(f64::total_cmp);
    let d = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - i as f64 / reps as f64).abs().max(((i + 1) as f64 / reps as f64 - p).abs()))
        .fold(0.0, f64::max);
    // Kolmogorov–Smirnov critical value at the 1% level
    assert!(d < 1.63 / (reps as f64).sqrt(), "D = {d}");
}
