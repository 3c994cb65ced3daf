use evidence_core::{bma_weights, log_bayes_factor, ModelScore};
use proptest::prelude::*;

fn scores(v: &[f64]) -> Vec<ModelScore<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, &s)| ModelScore::fake(format!("m{i}"), s))
        .collect()
}

proptest! {
    #[test]
    fn bma_weights_ignore_common_shift(v in prop::collection::vec(-200.0f64..200.0, 1..8), c in -1e4f64..1e4) {
        let a = bma_weights(&scores(&v)).unwrap();
        let shifted: Vec<f64> = v.iter().map(|s| s + c).collect();
        let b = bma_weights(&scores(&shifted)).unwrap();
        let total: f64 = a.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bayes_factor_is_antisymmetric(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let (sa, sb) = (ModelScore::proper("a", a), ModelScore::proper("b", b));
        let ab = log_bayes_factor(&sa, &sb).unwrap();
        let ba = log_bayes_factor(&sb, &sa).unwrap();
        prop_assert_eq!(ab, -ba);
    }

    #[test]
    fn bma_order_follows_scores(v in prop::collection::vec(-50.0f64..50.0, 2..6)) {
        let w = bma_weights(&scores(&v)).unwrap();
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] > v[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }
}
