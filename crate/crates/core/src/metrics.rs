//! Edge-level confusion counts and F1 between binary graph stacks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{AdjacencyStack, SummaryGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Every slice `0..=tau_max`.
    Overall,
    /// Slice 0 only.
    Contemp,
    /// Slices `1..=tau_max`.
    Lagged,
    /// Both stacks OR-collapsed over lags.
    Summary,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] = [EvalMode::Overall, EvalMode::Contemp, EvalMode::Lagged, EvalMode::Summary];

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Overall => "overall",
            EvalMode::Contemp => "contemp",
            EvalMode::Lagged => "lagged",
            EvalMode::Summary => "summary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
}

impl EvalReport {
    fn from_counts(mode: EvalMode, tp: usize, fp: usize, fn_: usize) -> Self {
        Self {
            mode,
            tp,
            fp,
            fn_,
            f1: f1_score(tp, fp, fn_),
        }
    }
}

/// `TP / (TP + (FP + FN) / 2)`, defined as 1 when both graphs are empty.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Count self-loops in summary mode.
    pub summary_diagonal: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            summary_diagonal: false,
        }
    }
}

/// Compare an estimated stack against the truth with default options.
pub fn evaluate(est: &AdjacencyStack, truth: &AdjacencyStack, mode: EvalMode) -> Result<EvalReport> {
    evaluate_with(est, truth, mode, EvalOptions::default())
}

pub fn evaluate_with(
    est: &AdjacencyStack,
    truth: &AdjacencyStack,
    mode: EvalMode,
    opts: EvalOptions,
) -> Result<EvalReport> {
    if est.d() != truth.d() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} nodes, truth has {}",
            est.d(),
            truth.d()
        )));
    }
    if mode == EvalMode::Summary {
        return evaluate_summary_with(&est.summary(), &truth.summary(), opts);
    }
    if est.tau_max() != truth.tau_max() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has tau_max {}, truth has {}",
            est.tau_max(),
            truth.tau_max()
        )));
    }
    let lags = match mode {
        EvalMode::Overall => 0..=truth.tau_max(),
        EvalMode::Contemp => 0..=0,
        EvalMode::Lagged if truth.tau_max() == 0 => return Ok(EvalReport::from_counts(mode, 0, 0, 0)),
        EvalMode::Lagged => 1..=truth.tau_max(),
        EvalMode::Summary => unreachable!(),
    };
    let d = truth.d();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for k in lags {
        for i in 0..d {
            for j in 0..d {
                match (est.get(k, i, j), truth.get(k, i, j)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
    }
    Ok(EvalReport::from_counts(mode, tp, fp, fn_))
}

/// Summary-level comparison when only a summary ground truth is known.
pub fn evaluate_summary(est: &SummaryGraph, truth: &SummaryGraph) -> Result<EvalReport> {
    evaluate_summary_with(est, truth, EvalOptions::default())
}

pub fn evaluate_summary_with(est: &SummaryGraph, truth: &SummaryGraph, opts: EvalOptions) -> Result<EvalReport> {
    if est.d() != truth.d() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} nodes, truth has {}",
            est.d(),
            truth.d()
        )));
    }
    let d = truth.d();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..d {
        for j in 0..d {
            if i == j && !opts.summary_diagonal {
                continue;
            }
            match (est.has_edge(i, j), truth.has_edge(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(EvalReport::from_counts(EvalMode::Summary, tp, fp, fn_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::{any, prop_assert_eq, proptest};
    use rand::Rng;

    fn random_stack(d: usize, tau: usize, p: f64, seed: u64) -> AdjacencyStack {
        let mut r = rng::seeded(seed);
        let mut s = AdjacencyStack::empty(d, tau);
        for k in 0..=tau {
            for i in 0..d {
                for j in 0..d {
                    s.set(k, i, j, r.random_bool(p));
                }
            }
        }
        s
    }

    #[test]
    fn f1_formula() {
        assert_eq!(f1_score(1, 1, 1), 0.5);
        assert_eq!(f1_score(0, 0, 0), 1.0);
        assert_eq!(f1_score(0, 3, 0), 0.0);
        assert_eq!(f1_score(4, 0, 0), 1.0);
    }

    #[test]
    fn identical_stacks_score_one() {
        let s = random_stack(5, 2, 0.3, 1);
        for mode in EvalMode::ALL {
            assert_eq!(evaluate(&s, &s, mode).unwrap().f1, 1.0);
        }
    }

    #[test]
    fn counts_match_entrywise_oracle() {
        for seed in 0..100 {
            let est = random_stack(5, 2, 0.3, seed);
            let truth = random_stack(5, 2, 0.3, seed + 500);
            let mut oracle = [[0usize; 3]; 3];
            for k in 0..3 {
                for i in 0..5 {
                    for j in 0..5 {
                        let (e, t) = (est.get(k, i, j), truth.get(k, i, j));
                        oracle[k][0] += (e && t) as usize;
                        oracle[k][1] += (e && !t) as usize;
                        oracle[k][2] += (!e && t) as usize;
                    }
                }
            }
            let o = evaluate(&est, &truth, EvalMode::Overall).unwrap();
            let c = evaluate(&est, &truth, EvalMode::Contemp).unwrap();
            let l = evaluate(&est, &truth, EvalMode::Lagged).unwrap();
            assert_eq!((c.tp, c.fp, c.fn_), (oracle[0][0], oracle[0][1], oracle[0][2]));
            let sum = |x: usize| (0..3).map(|k| oracle[k][x]).sum::<usize>();
            assert_eq!((o.tp, o.fp, o.fn_), (sum(0), sum(1), sum(2)));
            assert_eq!((o.tp, o.fp, o.fn_), (c.tp + l.tp, c.fp + l.fp, c.fn_ + l.fn_));
        }
    }

    #[test]
    fn summary_mode_ignores_diagonal_and_lag_depth() {
        let mut est = AdjacencyStack::empty(3, 1);
        est.set(1, 0, 0, true);
        est.set(1, 0, 1, true);
        let mut truth = AdjacencyStack::empty(3, 3);
        truth.set(3, 0, 1, true);
        let r = evaluate(&est, &truth, EvalMode::Summary).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.f1), (1, 0, 0, 1.0));
        let with_diag = evaluate_with(
            &est,
            &truth,
            EvalMode::Summary,
            EvalOptions {
                summary_diagonal: true,
            },
        )
        .unwrap();
        assert_eq!(with_diag.fp, 1);
        assert!(evaluate(&est, &truth, EvalMode::Overall).is_err());
    }

    #[test]
    fn node_count_mismatch() {
        let a = AdjacencyStack::empty(3, 1);
        let b = AdjacencyStack::empty(4, 1);
        assert!(matches!(evaluate(&a, &b, EvalMode::Summary), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn report_json_uses_fn_key() {
        let r = EvalReport::from_counts(EvalMode::Summary, 1, 2, 3);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["fn"], 3);
        assert_eq!(v["mode"], "summary");
    }

    proptest! {
        #[test]
        fn swap_exchanges_fp_and_fn(seed in any::<u64>(), mode_ix in 0usize..4) {
            let a = random_stack(5, 2, 0.4, seed);
            let b = random_stack(5, 2, 0.4, seed.wrapping_add(1));
            let mode = EvalMode::ALL[mode_ix];
            let ab = evaluate(&a, &b, mode).unwrap();
            let ba = evaluate(&b, &a, mode).unwrap();
            prop_assert_eq!((ab.tp, ab.fp, ab.fn_), (ba.tp, ba.fn_, ba.fp));
            prop_assert_eq!(ab.f1, ba.f1);
        }
    }
}
