use proptest::prelude::*;
use rand::Rng;
use trixlab::{pgd_attack, project_linf, rng, sample_targets, AttackConfig, AttackMode, Mlp64, Scalar, Tensor64};

fn random_model(rng: &mut impl Rng, seed: u64) -> Mlp64 {
    let d = rng.random_range(1..=6);
    let c = rng.random_range(2..=5);
    let hidden = rng.random_range(0..=2);
    let mut dims = vec![d];
    dims.extend((0..hidden).map(|_| rng.random_range(2..=8)));
    dims.push(c);
    Mlp64::init(&dims, seed).unwrap()
}

fn inside(adv: &Tensor64, x: &Tensor64, eps: &[f64]) -> bool {
    (0..x.rows()).all(|i| {
        x.row(i).iter().zip(adv.row(i)).all(|(&b, &a)| a >= b - eps[i] && a <= b + eps[i] && (0.0..=1.0).contains(&a))
    })
}

#[test]
fn ten_thousand_attacks_stay_in_the_ball_and_box() {
    let mut rng = rng::stream(&[0xa7]);
    let modes = [AttackMode::UntargetedKl, AttackMode::UntargetedCe, AttackMode::TargetedCe];
    for call in 0..10_000u64 {
        let model = random_model(&mut rng, call);
        let (d, c) = (model.input_dim(), model.num_classes());
        let n = rng.random_range(1..=4);
        // Some inputs sit exactly on the box faces.
        let x = Tensor64::matrix(
            n,
            d,
            (0..n * d)
                .map(|_| match rng.random_range(0..6) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.random_range(0.0..1.0),
                })
                .collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let mode = modes[call as usize % 3];
        let epsilon = rng.random_range(0.001..0.5);
        let cfg = AttackConfig {
            epsilon,
            step_size: epsilon * rng.random_range(0.1..1.5),
            num_steps: rng.random_range(1..=5),
            mode,
            random_start: rng.random_bool(0.5),
            seed: call,
        };
        let per_sample = rng.random_bool(0.5);
        let eps: Vec<f64> = if per_sample {
            (0..n).map(|_| rng.random_range(0.0..0.3)).collect()
        } else {
            vec![epsilon; n]
        };
        let targets = (mode == AttackMode::TargetedCe).then(|| sample_targets(&labels, c, call).unwrap());
        let adv = pgd_attack(&model, &x, &labels, &cfg, per_sample.then_some(&eps[..]), targets.as_deref()).unwrap();
        assert!(inside(&adv, &x, &eps), "call {call}: {mode:?} left the feasible set");
    }
}

/// Closed-form one-step CE attack on `logits = x·W + b`:
/// `∇_x CE = (softmax(z) − e_y)·Wᵀ`.
fn fgsm_oracle(w: &[Vec<f64>], b: &[f64], x: &[f64], y: usize, eps: f64) -> Vec<f64> {
    let c = b.len();
    let z: Vec<f64> = (0..c).map(|k| b[k] + x.iter().zip(w).map(|(xi, row)| xi * row[k]).sum::<f64>()).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    x.iter()
        .zip(w)
        .map(|(&xi, row)| {
            let g: f64 = (0..c).map(|k| (e[k] / s - if k == y { 1.0 } else { 0.0 }) * row[k]).sum();
            (xi + eps * g.sign()).max(xi - eps).min(xi + eps).clamp(0.0, 1.0)
        })
        .collect()
}

#[test]
fn one_step_ce_on_linear_model_matches_sign_gradient_oracle() {
    let mut rng = rng::stream(&[0xf9]);
    for case in 0..200u64 {
        let (d, c) = (rng.random_range(1..=8), rng.random_range(2..=5));
        let mut model = Mlp64::init(&[d, c], case).unwrap();
        for v in model.layers_mut()[0].bias.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let layer = &model.layers()[0];
        let w: Vec<Vec<f64>> = (0..d).map(|i| layer.weight.row(i).to_vec()).collect();
        let b = layer.bias.data().to_vec();
        let n = rng.random_range(1..=5);
        let x = Tensor64::matrix(n, d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let eps = rng.random_range(0.01..0.3);
        let cfg = AttackConfig {
            epsilon: eps,
            step_size: eps,
            num_steps: 1,
            mode: AttackMode::UntargetedCe,
            random_start: false,
            seed: case,
        };
        let adv = pgd_attack(&model, &x, &labels, &cfg, None, None).unwrap();
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(adv.row(i), &fgsm_oracle(&w, &b, x.row(i), y, eps)[..], "case {case} row {i}");
        }
    }
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_feasible(
        rows in proptest::collection::vec(proptest::collection::vec((0.0f64..=1.0, -2.0f64..3.0), 3), 1..6),
        eps in proptest::collection::vec(0.0f64..0.5, 6),
    ) {
        let x = Tensor64::from_rows(&rows.iter().map(|r| r.iter().map(|p| p.0).collect::<Vec<_>>()).collect::<Vec<_>>()).unwrap();
        let raw = Tensor64::from_rows(&rows.iter().map(|r| r.iter().map(|p| p.1).collect::<Vec<_>>()).collect::<Vec<_>>()).unwrap();
        let e = &eps[..rows.len()];
        let once = project_linf(&raw, &x, e).unwrap();
        prop_assert!(inside(&once, &x, e));
        prop_assert_eq!(project_linf(&once, &x, e).unwrap(), once);
    }

    #[test]
    fn targets_differ_from_labels(labels in proptest::collection::vec(0usize..7, 1..50), seed in any::<u64>()) {
        let t = sample_targets(&labels, 7, seed).unwrap();
        prop_assert!(t.iter().zip(&labels).all(|(a, b)| a != b && *a < 7));
    }

    #[test]
    fn zero_radius_returns_the_input(seed in any::<u64>(), steps in 1usize..4) {
        let model = Mlp64::init(&[3, 5, 2], seed).unwrap();
        let x = Tensor64::from_rows(&[[0.2, 0.5, 0.9], [0.0, 1.0, 0.3]]).unwrap();
        let cfg = AttackConfig { epsilon: 0.1, step_size: 0.05, num_steps: steps, mode: AttackMode::UntargetedKl, random_start: true, seed };
        prop_assert_eq!(pgd_attack(&model, &x, &[0, 1], &cfg, Some(&[0.0, 0.0]), None).unwrap(), x);
    }
}

#[test]
fn sign_of_zero_is_zero() {
    assert_eq!(0.0f64.sign(), 0.0);
    assert_eq!((-0.0f64).sign(), 0.0);
    assert_eq!(3.0f64.sign(), 1.0);
    assert_eq!((-2.0f32).sign(), -1.0);
}
