//! Evaluation metrics: average/final displacement error, the forgetting
//! measure over task sequences, and the Mann-Whitney U rank-sum test.

use crate::error::{Error, Result};
use crate::math::Vec2;
use serde::{Deserialize, Serialize};

/// Mean Euclidean distance between predicted and true positions.
pub fn ade(pred: &[Vec2], truth: &[Vec2]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptySample("ade"));
    }
    let sum: f64 = pred.iter().zip(truth).map(|(a, b)| a.dist(*b)).sum();
    Ok(sum / pred.len() as f64)
}

/// Euclidean distance at the final step.
pub fn fde(pred: &[Vec2], truth: &[Vec2]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    match (pred.last(), truth.last()) {
        (Some(a), Some(b)) => Ok(a.dist(*b)),
        _ => Err(Error::EmptySample("fde")),
    }
}

/// Summary of one model evaluated on one validation set after one training
/// phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub strategy: String,
    /// Number of completed training phases when the evaluation ran (0 =
    /// pre-trained model before any task).
    pub phase: usize,
    pub env: String,
    pub ade_mean: f64,
    pub ade_std: f64,
    pub fde_mean: f64,
    pub fde_std: f64,
    pub n: usize,
}

pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricRecord {
    pub fn from_samples(
        strategy: &str,
        phase: usize,
        env: &str,
        ade_samples: &[f64],
        fde_samples: &[f64],
    ) -> MetricRecord {
        let (ade_mean, ade_std) = mean_std(ade_samples);
        let (fde_mean, fde_std) = mean_std(fde_samples);
        MetricRecord {
            strategy: strategy.to_string(),
            phase,
            env: env.to_string(),
            ade_mean,
            ade_std,
            fde_mean,
            fde_std,
            n: ade_samples.len(),
        }
    }
}

/// Per-environment increase of the mean metric after later training phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgottenEntry {
    pub env: String,
    pub d_ade: f64,
    pub d_fde: f64,
}

/// For each environment at sequence position `j`, the mean over later phases
/// `j' > j` of `metric(env, j') - metric(env, j)`. The environment trained
/// last has no later phases and reports exactly zero.
///
/// `records` must contain an evaluation of every environment in `sequence`
/// after every training phase `1..=K`.
pub fn forgotten_metric(records: &[MetricRecord], sequence: &[String]) -> Result<Vec<ForgottenEntry>> {
    let k = sequence.len();
    let lookup = |env: &str, phase: usize| -> Option<&MetricRecord> {
        records.iter().find(|r| r.env == env && r.phase == phase)
    };

    let mut gaps = Vec::new();
    for env in sequence {
        for phase in 1..=k {
            if lookup(env, phase).is_none() {
                gaps.push(format!("({env}, phase {phase})"));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::MissingRecords(gaps.join(", ")));
    }

    let mut out = Vec::with_capacity(k);
    for (pos, env) in sequence.iter().enumerate() {
        let own_phase = pos + 1;
        let base = lookup(env, own_phase).unwrap();
        let mut d_ade = 0.0;
        let mut d_fde = 0.0;
        let later = k - own_phase;
        for phase in own_phase + 1..=k {
            let rec = lookup(env, phase).unwrap();
            d_ade += rec.ade_mean - base.ade_mean;
            d_fde += rec.fde_mean - base.fde_mean;
        }
        if later > 0 {
            d_ade /= later as f64;
            d_fde /= later as f64;
        }
        out.push(ForgottenEntry {
            env: env.clone(),
            d_ade,
            d_fde,
        });
    }
    Ok(out)
}

/// Complementary error function (Numerical Recipes rational approximation,
/// absolute error below 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Mann-Whitney U statistic for sample `a` (number of (a, b) pairs where `a`
/// wins, ties counting half) and the two-sided p-value from the normal
/// approximation with midranks, tie-corrected variance and continuity
/// correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample("mann_whitney_u"));
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let mut combined: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    combined.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));

    // Midranks and the tie-correction term sum(t^3 - t).
    let n = combined.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && combined[j].0 == combined[i].0 {
            j += 1;
        }
        let tied = (j - i) as f64;
        let rank = (i + j + 1) as f64 / 2.0;
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = rank;
        }
        if tied > 1.0 {
            tie_term += tied * tied * tied - tied;
        }
        i = j;
    }

    let r1: f64 = combined
        .iter()
        .zip(&ranks)
        .filter(|((_, is_a), _)| *is_a)
        .map(|(_, r)| *r)
        .sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;

    let mean = n1 * n2 / 2.0;
    let n_total = n1 + n2;
    let variance =
        n1 * n2 / 12.0 * (n_total + 1.0 - tie_term / (n_total * (n_total - 1.0)));
    if variance <= 0.0 {
        // Every value identical across both samples.
        return Ok((u, 1.0));
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let p = erfc(z / std::f64::consts::SQRT_2).min(1.0);
    Ok((u, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec2> {
        v.iter().map(|&(x, y)| Vec2::new(x, y)).collect()
    }

    #[test]
    fn ade_fde_hand_values() {
        let truth = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(ade(&truth, &truth).unwrap(), 0.0);
        assert_eq!(fde(&truth, &truth).unwrap(), 0.0);

        // Constant offset of (1, 0).
        let off = pts(&[(1.0, 0.0), (2.0, 0.0)]);
        assert!((ade(&off, &truth).unwrap() - 1.0).abs() < 1e-15);
        assert!((fde(&off, &truth).unwrap() - 1.0).abs() < 1e-15);

        // Offsets of 0 then 2 m.
        let grow = pts(&[(0.0, 0.0), (3.0, 0.0)]);
        assert!((ade(&grow, &truth).unwrap() - 1.0).abs() < 1e-15);
        assert!((fde(&grow, &truth).unwrap() - 2.0).abs() < 1e-15);

        assert!(ade(&truth, &pts(&[(0.0, 0.0)])).is_err());
        assert!(fde(&[], &[]).is_err());
    }

    #[test]
    fn forgotten_hand_values() {
        let seq: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut records = Vec::new();
        // Environment a: 0.10 after its own phase, then 0.30 and 0.50.
        let ade_for = |env: &str, phase: usize| match (env, phase) {
            ("a", 1) => 0.10,
            ("a", 2) => 0.30,
            ("a", 3) => 0.50,
            _ => 0.42,
        };
        for env in &seq {
            for phase in 1..=3 {
                records.push(MetricRecord {
                    strategy: "x".into(),
                    phase,
                    env: env.clone(),
                    ade_mean: ade_for(env, phase),
                    ade_std: 0.0,
                    fde_mean: ade_for(env, phase) * 2.0,
                    fde_std: 0.0,
                    n: 10,
                });
            }
        }
        let out = forgotten_metric(&records, &seq).unwrap();
        assert!((out[0].d_ade - 0.30).abs() < 1e-12);
        assert!((out[0].d_fde - 0.60).abs() < 1e-12);
        // Constant metrics forget nothing.
        assert_eq!(out[1].d_ade, 0.0);
        // The environment trained last has no later phases.
        assert_eq!(out[2].d_ade, 0.0);
        assert_eq!(out[2].d_fde, 0.0);
    }

    #[test]
    fn forgotten_reports_gaps() {
        let seq: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let records = vec![MetricRecord {
            strategy: "x".into(),
            phase: 1,
            env: "a".into(),
            ade_mean: 0.1,
            ade_std: 0.0,
            fde_mean: 0.1,
            fde_std: 0.0,
            n: 1,
        }];
        match forgotten_metric(&records, &seq) {
            Err(Error::MissingRecords(msg)) => {
                assert!(msg.contains("(a, phase 2)"));
                assert!(msg.contains("(b, phase 1)"));
            }
            other => panic!("expected MissingRecords, got {other:?}"),
        }
    }

    /// Brute-force U: count pairwise wins for `a`, ties at half weight.
    fn brute_force_u(a: &[f64], b: &[f64]) -> f64 {
        let mut u = 0.0;
        for &x in a {
            for &y in b {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        u
    }

    #[test]
    fn mann_whitney_hand_values() {
        let (u, _) = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(u, 0.0);

        let (u, p) = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(u, 4.5);
        assert!(p > 0.9);

        let (u, _) = mann_whitney_u(&[1.0, 3.0], &[2.0]).unwrap();
        assert_eq!(u, 1.0);

        // All values identical across both samples: p = 1 exactly.
        let (u, p) = mann_whitney_u(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(u, 3.0);
    }

    #[test]
    fn mann_whitney_detects_separation() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let b: Vec<f64> = (0..100).map(|i| 2.0 + i as f64 * 0.01).collect();
        let (u, p) = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(u, 0.0);
        assert!(p < 1e-10);
    }

    proptest! {
        #[test]
        fn u_matches_brute_force(
            a in proptest::collection::vec(-5.0f64..5.0, 1..12),
            b in proptest::collection::vec(-5.0f64..5.0, 1..12),
        ) {
            let (u, p) = mann_whitney_u(&a, &b).unwrap();
            prop_assert!((u - brute_force_u(&a, &b)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn u_symmetry_without_ties(
            seedling in proptest::collection::vec(0u32..1_000_000, 2..20),
            split in 1usize..19,
        ) {
            // Distinct integers guarantee a tie-free sample.
            let mut values: Vec<f64> = seedling.iter().enumerate().map(|(i, &v)| v as f64 + i as f64 * 1e7).collect();
            values.dedup();
            let split = split.min(values.len() - 1).max(1);
            let (a, b) = values.split_at(split);
            let (ua, _) = mann_whitney_u(a, b).unwrap();
            let (ub, _) = mann_whitney_u(b, a).unwrap();
            prop_assert!((ua + ub - (a.len() * b.len()) as f64).abs() < 1e-9);
        }

        #[test]
        fn displacement_metrics_are_rigid_motion_invariant(
            steps in proptest::collection::vec(((-3.0f64..3.0), (-3.0f64..3.0), (-3.0f64..3.0), (-3.0f64..3.0)), 1..10),
            tx in -5.0f64..5.0,
            ty in -5.0f64..5.0,
            angle in -3.1f64..3.1,
        ) {
            let pred: Vec<Vec2> = steps.iter().map(|&(x, y, _, _)| Vec2::new(x, y)).collect();
            let truth: Vec<Vec2> = steps.iter().map(|&(_, _, x, y)| Vec2::new(x, y)).collect();
            let t = Vec2::new(tx, ty);
            let xform = |v: &Vec2| v.rotated(angle) + t;
            let pred_t: Vec<Vec2> = pred.iter().map(xform).collect();
            let truth_t: Vec<Vec2> = truth.iter().map(xform).collect();
            let a0 = ade(&pred, &truth).unwrap();
            let a1 = ade(&pred_t, &truth_t).unwrap();
            prop_assert!((a0 - a1).abs() < 1e-9);
            let f0 = fde(&pred, &truth).unwrap();
            let f1 = fde(&pred_t, &truth_t).unwrap();
            prop_assert!((f0 - f1).abs() < 1e-9);

            // ade is bounded by the worst step; fde equals the last step.
            let max_step = pred.iter().zip(&truth).map(|(a, b)| a.dist(*b)).fold(0.0, f64::max);
            prop_assert!(a0 <= max_step + 1e-12);
            let last = pred.last().unwrap().dist(*truth.last().unwrap());
            prop_assert!((f0 - last).abs() < 1e-12);
        }
    }
}
