use plantnet_core::data::PLANT_VILLAGE;
use plantnet_core::imgproc::{plan_balance, random_ops, AugmentOp, BalanceEntry, Image};
use plantnet_core::Rng;

#[test]
fn every_class_count_balances_to_2000() {
    for (label, count) in PLANT_VILLAGE {
        let plan = plan_balance(count, 2000, 42).unwrap();
        assert_eq!(plan.len(), 2000, "{label}");
        let originals: Vec<usize> = plan
            .iter()
            .filter_map(|e| match e {
                BalanceEntry::Original(i) => Some(*i),
                _ => None,
            })
            .collect();
        if count <= 2000 {
            assert_eq!(originals, (0..count).collect::<Vec<_>>(), "{label}");
        } else {
            assert_eq!(originals.len(), 2000, "{label}");
            assert!(originals.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(plan, plan_balance(count, 2000, 42).unwrap());
    }
    let mold = plan_balance(952, 2000, 42).unwrap();
    let augmented: Vec<usize> = mold
        .iter()
        .filter_map(|e| match e {
            BalanceEntry::Augmented { source, .. } => Some(*source),
            _ => None,
        })
        .collect();
    assert_eq!(augmented.len(), 1048);
    assert!(augmented.iter().enumerate().all(|(k, &s)| s == k % 952));
}

#[test]
fn augmented_entries_regenerate_from_their_seed() {
    for entry in plan_balance(5, 40, 3).unwrap() {
        if let BalanceEntry::Augmented { ops, seed, .. } = entry {
            assert_eq!(ops, random_ops(&mut Rng::new(seed)));
            let text: Vec<String> = ops.iter().map(ToString::to_string).collect();
            let parsed: Vec<AugmentOp> = text.iter().map(|t| t.parse().unwrap()).collect();
            assert_eq!(parsed, ops);
        }
    }
}

#[test]
fn augmentation_keeps_dimensions() {
    let img = Image::from_fn(17, 11, 3, |x, y| vec![x as f32 / 17.0, y as f32 / 11.0, 0.5]).unwrap();
    let mut rng = Rng::new(1);
    for _ in 0..50 {
        for op in random_ops(&mut rng) {
            let out = op.apply(&img);
            assert_eq!((out.width(), out.height(), out.channels()), (17, 11, 3));
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
