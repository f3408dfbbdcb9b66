use numanchor::augment::{strip_augmentation, Augmenter, Strategy as AugStrategy};
use numanchor::gmm::{gmm_pdf, AnchorTable, Component, Direction, GmmModel, Space};
use numanchor::numeral::{parse_numeral, scan_document};
use proptest::prelude::*;

fn anchors() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(-2000i32..2000, 1..20)
        .prop_map(|s| s.into_iter().map(|v| f64::from(v) / 4.0).collect())
}

proptest! {
    #[test]
    fn nearest_anchor_is_no_farther_than_any_other(anchors in anchors(), q in -600.0f64..600.0) {
        let table = AnchorTable::from_anchors(anchors.clone(), Space::Linear).unwrap();
        let hit = table.nearest_anchor(q).unwrap();
        let d = (hit.anchor - q).abs();
        for &a in &anchors {
            prop_assert!(d <= (a - q).abs());
            // ties go to the smaller anchor
            if (a - q).abs() == d {
                prop_assert!(hit.anchor <= a);
            }
        }
        let expect = if hit.anchor < q { Direction::Left } else if hit.anchor > q { Direction::Right } else { Direction::Exact };
        prop_assert_eq!(hit.direction, expect);
    }

    #[test]
    fn plain_integers_parse_to_themselves(n in 0u64..10_000_000_000) {
        prop_assert_eq!(parse_numeral(&n.to_string()).unwrap(), n as f64);
    }

    #[test]
    fn stripping_undoes_every_strategy(
        words in prop::collection::vec(prop_oneof!["[a-z]{1,6}", (0u32..5_000_000).prop_map(|n| n.to_string())], 0..20),
        anchors in prop::collection::btree_set(1i32..20, 1..6),
    ) {
        let text = words.join(" ");
        let doc = scan_document(0, &text).unwrap();
        for strategy in AugStrategy::ALL {
            let values: Vec<f64> = match strategy.space() {
                Space::Linear => anchors.iter().map(|&a| f64::from(a) * 1000.0).collect(),
                Space::Log => anchors.iter().map(|&a| f64::from(a) * 0.7).collect(),
            };
            let table = AnchorTable::from_anchors(values, strategy.space()).unwrap();
            let out = Augmenter::new(&table, strategy).unwrap().augment(&doc.tokens, &doc.numerals).unwrap();
            prop_assert_eq!(out.tokens.len(), doc.tokens.len() + 2 * doc.numerals.len());
            prop_assert_eq!(strip_augmentation(&out.tokens).unwrap(), doc.tokens.clone());
        }
    }

    #[test]
    fn mixture_density_is_non_negative(x in -1e3f64..1e3, w in 0.05f64..0.95, m in -50.0f64..50.0, v in 1e-3f64..1e3) {
        let model = GmmModel {
            components: vec![
                Component { weight: w, mean: m, variance: v },
                Component { weight: 1.0 - w, mean: -m, variance: v * 2.0 },
            ],
            space: Space::Linear,
            seed: 0,
            tolerance: 1e-3,
            final_log_likelihood: 0.0,
            log_likelihood_trace: Vec::new(),
            iterations: 0,
        };
        prop_assert!(gmm_pdf(&model, x) >= 0.0);
    }
}
