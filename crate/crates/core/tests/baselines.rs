//! Sort-and-regress on strongly varsortable data.

use tssort::graphs::summary_of;
use tssort::harness::{draw_dataset, NoiseModel, DEFAULT_MAX_DRAWS};
use tssort::metrics::evaluate_summary;
use tssort::{
    binarize, marginal_variance, rng, sortability_score, sortnregress_ts, GraphGenConfig, OrderKind, OrderStrategy,
    PairMode,
};

#[test]
fn variance_order_beats_random_order_when_varsortable() {
    let gen = GraphGenConfig {
        d: 5,
        d_c: 4.0,
        tau_max: 1,
        ..Default::default()
    };
    let (mut var_f1, mut rand_f1) = (Vec::new(), Vec::new());
    let mut seed = 0;
    while var_f1.len() < 20 {
        seed += 1;
        let ds = draw_dataset(&gen, 2000, &NoiseModel::Unit, DEFAULT_MAX_DRAWS, &mut rng::seeded(seed)).unwrap();
        let truth = summary_of(&ds.graph);
        let Ok(rep) = sortability_score(&marginal_variance(&ds.panel), &truth, PairMode::AllConnected) else {
            continue;
        };
        if rep.score < 0.9 {
            continue;
        }
        for (kind, out) in [(OrderKind::Variance, &mut var_f1), (OrderKind::Random, &mut rand_f1)] {
            let strategy = OrderStrategy { kind, seed };
            let est = sortnregress_ts(&ds.panel, 1, strategy).unwrap();
            let summary = binarize(&est, 0.1).summary();
            out.push(evaluate_summary(&summary, &truth).unwrap().f1);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&var_f1) > mean(&rand_f1),
        "varsortnregress {:.3} vs randomregress {:.3}",
        mean(&var_f1),
        mean(&rand_f1)
    );
}
