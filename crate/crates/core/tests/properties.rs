use morphcl::metrics::{forgetting, task_divergence, PerfMatrix, Polarity};
use morphcl::netcore::{init_network, ActivationKind, Architecture, LossKind, Matrix};
use morphcl::optim::{clip_grad, global_norm};
use morphcl::replay::{ReplayBuffer, ReplayQuotas};
use morphcl::search::{ndds_search, poll_points_bounded, DirectionSet, SearchConfig};
use morphcl::tasks::Dataset;
use morphcl::transfer::{apply_transfer, init_ab, plan_ffn_shapes, train_ab, AbConfig};
use proptest::prelude::*;

fn column(n: usize, task: usize) -> Dataset {
    let x = Matrix::from_fn(n, 1, |r, _| (task * 10_000 + r) as f64);
    Dataset::new(x.clone(), x, task).unwrap()
}

fn widths(depth: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=16, depth + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn buffer_never_exceeds_capacity(cap in 1usize..400, sizes in prop::collection::vec(1usize..200, 1..6), seed in any::<u64>()) {
        let mut buf = ReplayBuffer::new(cap, seed);
        for (t, &n) in sizes.iter().enumerate() {
            buf.add_task(&column(n, t), t).unwrap();
            prop_assert!(buf.len() <= cap);
            prop_assert_eq!(buf.len(), (0..=t).map(|k| buf.count_for(k)).sum::<usize>());
            let seen: usize = sizes[..=t].iter().sum();
            prop_assert_eq!(buf.len(), seen.min(cap));
        }
    }

    #[test]
    fn balanced_sampling_is_deterministic(seed in any::<u64>(), n in 1usize..64) {
        let mut buf = ReplayBuffer::new(10_000, 1);
        for t in 0..4 {
            buf.add_task(&column(50, t), t).unwrap();
        }
        let a = buf.sample_balanced(n, 4, ReplayQuotas::default(), seed).unwrap();
        let b = buf.sample_balanced(n, 4, ReplayQuotas::default(), seed).unwrap();
        prop_assert_eq!(a.data.len(), n);
        prop_assert_eq!(a.data.x, b.data.x);
        prop_assert!(a.tasks.iter().all(|&t| t < 4));
    }

    #[test]
    fn forgetting_is_non_negative(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 2..6)) {
        let t = rows.len();
        let tri: Vec<Vec<f64>> = rows.iter().enumerate().map(|(j, r)| r[..=j].to_vec()).collect();
        for pol in [Polarity::Error, Polarity::Accuracy] {
            let m = PerfMatrix::from_rows(&tri, pol).unwrap();
            prop_assert!(forgetting(&m).unwrap().unwrap() >= 0.0);
        }
        let mut mono = tri.clone();
        for i in 0..t {
            for j in i + 1..t {
                mono[j][i] = mono[j - 1][i] * 0.9;
            }
        }
        let m = PerfMatrix::from_rows(&mono, Polarity::Error).unwrap();
        prop_assert_eq!(forgetting(&m).unwrap().unwrap(), 0.0);
    }

    #[test]
    fn divergence_is_symmetric_and_bounded(a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..60),
                                           b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..60)) {
        let ds = |v: &[(f64, f64)]| Dataset::new(
            Matrix::from_fn(v.len(), 1, |r, _| v[r].0),
            Matrix::from_fn(v.len(), 1, |r, _| v[r].1),
            0,
        ).unwrap();
        let (da, db) = (ds(&a), ds(&b));
        let ab = task_divergence(&da, &db, 16).unwrap();
        let ba = task_divergence(&db, &da, 16).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!(task_divergence(&da, &da, 16).unwrap() < 1e-12);
    }

    #[test]
    fn planned_shapes_compose(depth in 1usize..=4, old in widths(4), new_hidden in prop::collection::vec(1usize..=16, 4), seed in any::<u64>()) {
        let old = Architecture::new(old[..=depth].to_vec()).unwrap();
        let mut nw = old.widths().to_vec();
        for i in 1..depth {
            nw[i] = new_hidden[i];
        }
        let new = Architecture::new(nw).unwrap();
        let plan = plan_ffn_shapes(&old, &new).unwrap();
        let src = init_network(&old, ActivationKind::Tanh, seed);
        let out = apply_transfer(&init_ab(&plan, seed), &src, &new).unwrap();
        for (i, l) in out.layers().iter().enumerate() {
            prop_assert_eq!(l.weight.shape(), new.layer_shape(i));
            prop_assert_eq!(plan.layers[i].output_shape(), new.layer_shape(i));
        }
    }

    #[test]
    fn clipping_bounds_the_norm(scale in 0.01f64..100.0, max in 0.1f64..5.0, seed in any::<u64>()) {
        let net = init_network(&Architecture::new(vec![3, 4, 2]).unwrap(), ActivationKind::Relu, seed);
        let mut g = morphcl::netcore::Gradients::zeros_like(&net);
        for (k, l) in g.layers.iter_mut().enumerate() {
            l.weight.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = scale * ((i + k) as f64).sin());
        }
        let before = global_norm(&g);
        let reported = clip_grad(&mut g, max);
        prop_assert!((reported - before).abs() < 1e-9 * before.max(1.0));
        prop_assert!(global_norm(&g) <= max * (1.0 + 1e-12));
    }

    #[test]
    fn poll_points_respect_bounds(a in 8usize..=64, b in 8usize..=64, step in 1usize..=16) {
        let arch = Architecture::new(vec![2, a, b, 1]).unwrap();
        let dirs = DirectionSet::axis(&arch, &[1, 2, 3]).unwrap();
        for p in poll_points_bounded(&arch, &dirs, step, Some((8, 64))) {
            prop_assert!(p.hidden().iter().all(|&w| (8..=64).contains(&w)));
            prop_assert_eq!(p.input_width(), 2);
            prop_assert_eq!(p.output_width(), 1);
            prop_assert_ne!(p.widths(), arch.widths());
        }
    }

    #[test]
    fn search_path_losses_decrease(table in prop::collection::vec(0.0f64..1.0, 64), start in 0usize..8) {
        let f = |a: &Architecture| table[(a.widths()[1] / 4 - 1) * 8 + (a.widths()[2] / 4 - 1)];
        let w = 4 * (start + 1);
        let psi = Architecture::new(vec![1, w, w, 1]).unwrap();
        let cfg = SearchConfig { step_size: 4, threshold_ratio: 1e-9, max_rounds: 10, width_bounds: Some((4, 32)), ..Default::default() };
        let out = ndds_search(&psi, &DirectionSet::axis(&psi, &[1]).unwrap(), &cfg, &f).unwrap();
        let losses: Vec<f64> = out.path.iter().map(|w| f(&Architecture::new(w.clone()).unwrap())).collect();
        prop_assert!(losses.windows(2).all(|p| p[1] < p[0]));
        prop_assert_eq!(out.best_loss, *losses.last().unwrap());
        prop_assert!(out.best_loss <= out.initial_loss);
    }
}

#[test]
fn ab_training_freezes_core_and_never_worsens() {
    let old = Architecture::new(vec![1, 6, 6, 1]).unwrap();
    let new = Architecture::new(vec![1, 10, 4, 1]).unwrap();
    let src = init_network(&old, ActivationKind::Relu, 3);
    let frozen = src.clone();
    let x = Matrix::from_fn(64, 1, |r, _| r as f64 / 32.0 - 1.0);
    let y = Matrix::from_fn(64, 1, |r, _| (3.0 * x.get(r, 0)).sin());
    let data = Dataset::new(x, y, 0).unwrap();
    let pair = init_ab(&plan_ffn_shapes(&old, &new).unwrap(), 4);
    let cfg = AbConfig { epochs: 30, lr: 1e-2, batch_size: 16 };
    let out = train_ab(&src, &pair, &new, &data, &cfg, LossKind::Mse, 5).unwrap();
    assert_eq!(src, frozen);
    assert!(out.post_loss <= out.pre_loss);
    assert!(!out.diverged);
}
