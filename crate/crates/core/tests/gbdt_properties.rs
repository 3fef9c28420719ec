use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_trust::gbdt::{gradient, hessian, logistic_loss, train_rows, GbdtError, GbdtModel, TrainConfig, TreeNode};
use spatial_trust::geometry::FEATURE_NAMES;

fn random_set(rng: &mut ChaCha8Rng, n: usize, width: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    loop {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..width).map(|_| (rng.random_range(0..6) as f64) / 5.0).collect())
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if labels.iter().any(|&y| y) && labels.iter().any(|&y| !y) {
            return (rows, labels);
        }
    }
}

fn soft(g: f64, a: f64) -> f64 {
    g.signum() * (g.abs() - a).max(0.0)
}

fn oracle_weight(g: f64, h: f64) -> f64 {
    -soft(g, 0.5) / (h + 2.0)
}

fn oracle_score(g: f64, h: f64) -> f64 {
    soft(g, 0.5).powi(2) / (h + 2.0)
}

#[test]
fn derivatives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let step = 1e-4;
    for _ in 0..1000 {
        let s: f64 = rng.random_range(-8.0..8.0);
        for y in [false, true] {
            let fd_g = (logistic_loss(s + step, y) - logistic_loss(s - step, y)) / (2.0 * step);
            assert!((fd_g - gradient(s, y)).abs() < 1e-6, "gradient at {s}");
            let fd_h = (gradient(s + step, y) - gradient(s - step, y)) / (2.0 * step);
            assert!((fd_h - hessian(s)).abs() < 1e-4, "hessian at {s}");
        }
    }
}

#[test]
fn depth_one_split_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = TrainConfig {
        n_trees: 1,
        max_depth: 1,
        ..TrainConfig::default()
    };
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let (rows, labels) = random_set(&mut rng, n, 3);
        let g: Vec<f64> = labels.iter().map(|&y| if y { -0.5 } else { 0.5 }).collect();
        let (gt, ht) = (g.iter().sum::<f64>(), 0.25 * n as f64);

        let mut best = f64::NEG_INFINITY;
        for f in 0..3 {
            for t in rows.iter().map(|r| r[f]) {
                let left: Vec<usize> = (0..n).filter(|&i| rows[i][f] < t).collect();
                if left.is_empty() {
                    continue;
                }
                let gl: f64 = left.iter().map(|&i| g[i]).sum();
                let hl = 0.25 * left.len() as f64;
                let gain = 0.5 * (oracle_score(gl, hl) + oracle_score(gt - gl, ht - hl) - oracle_score(gt, ht));
                best = best.max(gain);
            }
        }

        let (model, _) = train_rows(&rows, &labels, &["a", "b", "c"], &cfg, None).unwrap();
        let tree = &model.trees[0];
        if best <= 0.0 {
            assert!(tree.is_single_leaf());
            assert_eq!(tree.predict(&rows[0]), 0.0);
            continue;
        }
        let TreeNode::Split { gain, .. } = tree.nodes[0] else {
            panic!("expected a split with oracle gain {best}");
        };
        assert!((gain - best).abs() < 1e-9, "gain {gain} vs {best}");
        for leaf in [tree.leaf_index(&rows[0]), tree.leaf_index(&rows[n - 1])] {
            let members: Vec<usize> = (0..n).filter(|&i| tree.leaf_index(&rows[i]) == leaf).collect();
            let gs: f64 = members.iter().map(|&i| g[i]).sum();
            let expected = oracle_weight(gs, 0.25 * members.len() as f64);
            let TreeNode::Leaf { weight } = tree.nodes[leaf] else {
                unreachable!()
            };
            assert!((weight - expected).abs() < 1e-9);
        }
    }
}

#[test]
fn training_loss_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rows, labels) = random_set(&mut rng, 300, 4);
    let (_, log) = train_rows(&rows, &labels, &FEATURE_NAMES, &TrainConfig::default(), None).unwrap();
    assert!(log[0].train_loss <= std::f64::consts::LN_2 + 1e-12);
    for w in log.windows(2) {
        assert!(w[1].train_loss <= w[0].train_loss + 1e-12);
    }
}

#[test]
fn stronger_l2_shrinks_leaves() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (rows, labels) = random_set(&mut rng, 200, 4);
    let one = |l2: f64| TrainConfig {
        n_trees: 1,
        l2_lambda: l2,
        ..TrainConfig::default()
    };
    let (reference, _) = train_rows(&rows, &labels, &FEATURE_NAMES, &one(2.0), None).unwrap();
    let tree = &reference.trees[0];
    // Hold the structure fixed and recompute the leaves at increasing lambda.
    let mut previous: Option<Vec<f64>> = None;
    for l2 in [0.0, 1.0, 2.0, 10.0, 100.0] {
        let weights: Vec<f64> = (0..tree.nodes.len())
            .filter(|&k| matches!(tree.nodes[k], TreeNode::Leaf { .. }))
            .map(|k| {
                let members: Vec<usize> = (0..rows.len()).filter(|&i| tree.leaf_index(&rows[i]) == k).collect();
                let g: f64 = members.iter().map(|&i| gradient(0.0, labels[i])).sum();
                spatial_trust::gbdt::leaf_weight(g, 0.25 * members.len() as f64, 0.5, l2)
            })
            .collect();
        if let Some(prev) = &previous {
            for (a, b) in weights.iter().zip(prev) {
                assert!(a.abs() <= b.abs() + 1e-15);
            }
        }
        previous = Some(weights);
    }
}

#[test]
fn predictions_are_piecewise_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (rows, labels) = random_set(&mut rng, 200, 4);
    let (model, _) = train_rows(&rows, &labels, &FEATURE_NAMES, &TrainConfig::default(), None).unwrap();
    for row in rows.iter().take(50) {
        let nudged: Vec<f64> = row.iter().map(|v| v + 1e-6).collect();
        // inputs are multiples of 0.2 and thresholds are midpoints, so a tiny
        // nudge never crosses a threshold
        assert_eq!(model.predict_proba(row), model.predict_proba(&nudged));
        assert!(model.trees.iter().all(|t| t.depth() <= 3));
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (rows, labels) = random_set(&mut rng, 150, 4);
    let a = train_rows(&rows, &labels, &FEATURE_NAMES, &TrainConfig::default(), None)
        .unwrap()
        .0;
    let b = train_rows(&rows, &labels, &FEATURE_NAMES, &TrainConfig::default(), None)
        .unwrap()
        .0;
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn save_load_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (rows, labels) = random_set(&mut rng, 200, 4);
    let (mut model, _) = train_rows(&rows, &labels, &FEATURE_NAMES, &TrainConfig::default(), None).unwrap();
    model.decision_threshold = Some(0.4321);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = GbdtModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        assert_eq!(loaded.predict_proba(&x).to_bits(), model.predict_proba(&x).to_bits());
    }

    let text = std::fs::read_to_string(&path).unwrap();
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert!(matches!(GbdtModel::load(&cut), Err(GbdtError::Malformed(_))));
}

#[test]
fn uninformative_features_get_little_importance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1000;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let labels: Vec<bool> = rows.iter().map(|r| r[0] + rng.random_range(-0.1..0.1) > 0.5).collect();
    let (model, _) = train_rows(&rows, &labels, &FEATURE_NAMES, &TrainConfig::default(), None).unwrap();
    let share = model.feature_importance().share("alpha_geo").unwrap();
    assert!(share > 0.9, "alpha_geo share {share}");
}
