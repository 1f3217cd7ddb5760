use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netrepair::bounds::{intermediate_bounds, linear_lower_bounds, BoundOptions, BoundsMode};
use netrepair::fixtures::{random_box, random_network, sample_box};
use netrepair::linalg::euclidean_distance;
use netrepair::preimage::synthesize_proxy_box;
use netrepair::repair::{point_wise_repair, region_wise_repair};
use netrepair::{ActivationKind, Exec, Hyperbox, LinearConstraint, Property, RepairConfig};

const IBP: BoundOptions = BoundOptions {
    mode: BoundsMode::Ibp,
    exec: Exec::Sequential,
};
const BACKWARD: BoundOptions = BoundOptions {
    mode: BoundsMode::Backward,
    exec: Exec::Sequential,
};

fn class_constraints(n: usize, y: usize) -> Vec<LinearConstraint> {
    (0..n).filter(|&j| j != y).map(|j| LinearConstraint::at_least(n, y, j)).collect()
}

#[test]
fn repaired_regions_survive_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut repaired = 0;
    for case in 0..6 {
        let net = random_network(&mut rng, &[3, 12, 12, 3], ActivationKind::Relu);
        let bx = random_box(&mut rng, 3, 0.4);
        let y = net.argmax(&bx.midpoint()).unwrap();
        let prop = Property::new(bx, class_constraints(3, y), format!("p{case}")).unwrap();
        let out = region_wise_repair(&net, std::slice::from_ref(&prop), &RepairConfig::default()).unwrap();
        if !out.is_repaired() {
            continue;
        }
        repaired += 1;
        for _ in 0..100_000 {
            let x = sample_box(&mut rng, prop.input());
            assert!(out.network.satisfies(&x, &prop), "case {case}: violation at {x:?}");
        }
    }
    assert!(repaired >= 4, "only {repaired} of 6 regions repaired");
}

#[test]
fn features_within_radius_imply_satisfaction() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut runs = 0;
    for _ in 0..10 {
        let net = random_network(&mut rng, &[4, 16, 16, 4], ActivationKind::Relu);
        let props: Vec<Property> = (0..5)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y = rng.gen_range(0..4);
                Property::classification(&x, y, 4)
            })
            .collect();
        let cfg = RepairConfig::default();
        let out = point_wise_repair(&net, &props, &cfg).unwrap();
        runs += 1;
        // each synthesized box is re-derived on the frozen head, then the
        // final feature is checked against it
        let head = net.head();
        for p in &props {
            let x = p.input().lower();
            let h = net.forward_features(x).unwrap();
            let s = synthesize_proxy_box(&head, &h, p.constraints(), cfg.radius, cfg.box_iters, cfg.bounds).unwrap();
            let Some(proxy) = s.proxy() else { continue };
            let h_new = out.network.forward_features(x).unwrap();
            if euclidean_distance(&h_new, &proxy.center) <= cfg.radius {
                assert!(out.network.satisfies(x, p), "feature within r of a certified center but property fails");
            }
        }
        if out.stats.tasks_within_radius == out.stats.tasks {
            assert!(props.iter().all(|p| out.network.satisfies(p.input().lower(), p)));
        }
        if out.is_repaired() {
            assert!(props.iter().all(|p| out.network.satisfies(p.input().lower(), p)));
        }
    }
    assert_eq!(runs, 10);
}

fn net_strategy() -> impl Strategy<Value = (u64, Vec<usize>, bool)> {
    (
        any::<u64>(),
        prop::collection::vec(2usize..12, 1..4),
        any::<bool>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_intervals_nest_inside_ibp((seed, hidden, leaky) in net_strategy(), width in 0.01f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![3];
        dims.extend(hidden);
        dims.push(2);
        let act = if leaky { ActivationKind::LeakyRelu(0.1) } else { ActivationKind::Relu };
        let net = random_network(&mut rng, &dims, act);
        let bx = random_box(&mut rng, 3, width);
        let a = intermediate_bounds(net.layers(), &bx, BACKWARD).unwrap();
        let b = intermediate_bounds(net.layers(), &bx, IBP).unwrap();
        for (i, (la, lb)) in a.lower.iter().zip(&b.lower).enumerate() {
            for k in 0..la.len() {
                prop_assert!(la[k] >= lb[k] - 1e-9, "layer {} neuron {}: {} < {}", i, k, la[k], lb[k]);
                prop_assert!(a.upper[i][k] <= b.upper[i][k] + 1e-9);
                prop_assert!(la[k] <= a.upper[i][k]);
            }
        }
    }

    #[test]
    fn point_boxes_give_exact_bounds((seed, hidden, leaky) in net_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![3];
        dims.extend(hidden);
        dims.push(3);
        let act = if leaky { ActivationKind::LeakyRelu(0.2) } else { ActivationKind::Relu };
        let net = random_network(&mut rng, &dims, act);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = net.forward(&x).unwrap();
        let cs = class_constraints(3, 0);
        for opts in [IBP, BACKWARD] {
            let r = linear_lower_bounds(net.layers(), &Hyperbox::point(x.clone()), &cs, opts).unwrap();
            for (c, lb) in cs.iter().zip(&r.lb) {
                prop_assert!((c.eval(&y) - lb).abs() < 1e-9);
            }
        }
    }
}
