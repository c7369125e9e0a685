//! Property-based invariants: correlation affine invariance, interval
//! ordering and monotonicity, projection feasibility, tensor algebra.

use proptest::prelude::*;

use uqrecon::evaluation::pearson;
use uqrecon::interval::{inn_forward, interval_layer_forward, IntervalParams};
use uqrecon::nn::{forward, init_params, Layer, NetworkSpec};
use uqrecon::rng::{derive_seed, rng_from_seed};
use uqrecon::tensor::Tensor;

use rand::Rng;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_is_invariant_under_positive_affine_maps(
        a in vec_strategy(40),
        b in vec_strategy(40),
        alpha in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let ta = Tensor::from_vec(a);
        let tb = Tensor::from_vec(b);
        if let (Ok(r0), scaled) = (pearson(&ta, &tb), ta.scale(alpha).map(|v| v + shift)) {
            let r1 = pearson(&scaled, &tb).unwrap();
            prop_assert!((r0 - r1).abs() < 1e-12);
            // and symmetric
            let r2 = pearson(&tb, &ta).unwrap();
            prop_assert!((r0 - r2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_layer_interval_bounds_contain_sampled_points(
        seed in 0u64..1000,
        width in 0.0f64..0.5,
    ) {
        let mut rng = rng_from_seed(seed);
        let n = 3usize;
        let m = 2usize;
        let w_c: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let b_c: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() - 0.5).collect();
        let x_lo_v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 0.5).collect();
        let x_hi_v: Vec<f64> = x_lo_v.iter().map(|v| v + rng.gen::<f64>() * 0.5).collect();

        let w_lo = Tensor::new(vec![m, n], w_c.iter().map(|v| v - width).collect()).unwrap();
        let w_hi = Tensor::new(vec![m, n], w_c.iter().map(|v| v + width).collect()).unwrap();
        let b_lo = Tensor::new(vec![m], b_c.iter().map(|v| v - width).collect()).unwrap();
        let b_hi = Tensor::new(vec![m], b_c.iter().map(|v| v + width).collect()).unwrap();
        let x_lo = Tensor::from_vec(x_lo_v.clone());
        let x_hi = Tensor::from_vec(x_hi_v.clone());

        let (z_lo, z_hi) =
            interval_layer_forward(&x_lo, &x_hi, &w_lo, &w_hi, &b_lo, &b_hi).unwrap();
        prop_assert!(z_lo.data().iter().zip(z_hi.data()).all(|(l, h)| l <= h));
        prop_assert!(z_lo.data().iter().all(|&v| v >= 0.0));

        // sampled parameter/input assignments stay inside
        for s in 0..20u64 {
            let mut r2 = rng_from_seed(derive_seed(seed, s + 1));
            let w: Vec<f64> = w_c.iter().map(|v| v - width + 2.0 * width * r2.gen::<f64>()).collect();
            let b: Vec<f64> = b_c.iter().map(|v| v - width + 2.0 * width * r2.gen::<f64>()).collect();
            let x: Vec<f64> = x_lo_v
                .iter()
                .zip(&x_hi_v)
                .map(|(l, h)| l + (h - l) * r2.gen::<f64>())
                .collect();
            for o in 0..m {
                let mut acc = b[o];
                for i in 0..n {
                    acc += w[o * n + i] * x[i];
                }
                let z = acc.max(0.0);
                prop_assert!(z >= z_lo[o] - 1e-9 && z <= z_hi[o] + 1e-9);
            }
        }
    }
}

#[test]
fn interval_ordering_survives_every_public_operation() {
    // ordering lower <= central <= upper after degenerate init, widening,
    // projection and forward propagation
    let spec = NetworkSpec::new(
        vec![2],
        vec![
            Layer::Dense {
                input_dim: 2,
                output_dim: 4,
            },
            Layer::Relu,
            Layer::Dense {
                input_dim: 4,
                output_dim: 1,
            },
        ],
    )
    .unwrap();
    for seed in 0..12u64 {
        let central = init_params(&spec, seed);
        let mut ip = IntervalParams::degenerate(central, 2);
        ip.check_ordering().unwrap();
        ip.widen(&spec, 0.1 + seed as f64 * 0.01);
        ip.check_ordering().unwrap();
        ip.project();
        ip.check_ordering().unwrap();
        let pred = inn_forward(&spec, &ip, &Tensor::from_vec(vec![0.2, 0.9])).unwrap();
        for ((l, c), u) in pred
            .lower
            .data()
            .iter()
            .zip(pred.central.data())
            .zip(pred.upper.data())
        {
            assert!(l <= c && c <= u);
        }
    }
}

#[test]
fn multi_layer_soundness_over_many_random_nets() {
    // fifty random small nets, two hundred parameter samples each
    let mut violations = 0usize;
    for net_seed in 0..50u64 {
        let mut rng = rng_from_seed(derive_seed(9000, net_seed));
        let d0 = 2 + (rng.gen::<f64>() * 3.0) as usize;
        let d1 = 2 + (rng.gen::<f64>() * 4.0) as usize;
        let d2 = 1 + (rng.gen::<f64>() * 3.0) as usize;
        let spec = NetworkSpec::new(
            vec![d0],
            vec![
                Layer::Dense {
                    input_dim: d0,
                    output_dim: d1,
                },
                Layer::Relu,
                Layer::Dense {
                    input_dim: d1,
                    output_dim: d2,
                },
                Layer::Relu,
            ],
        )
        .unwrap();
        let central = init_params(&spec, derive_seed(9001, net_seed));
        let mut ip = IntervalParams::degenerate(central, 2);
        // asymmetric widening
        {
            let (lower, upper) = ip.bounds_mut();
            for t in lower.tensors_mut() {
                for v in t.data_mut() {
                    *v -= rng.gen::<f64>() * 0.3;
                }
            }
            for t in upper.tensors_mut() {
                for v in t.data_mut() {
                    *v += rng.gen::<f64>() * 0.3;
                }
            }
        }
        let input = Tensor::new(
            vec![d0],
            (0..d0).map(|_| rng.gen::<f64>()).collect(),
        )
        .unwrap();
        let pred = inn_forward(&spec, &ip, &input).unwrap();

        for s in 0..200u64 {
            let mut r2 = rng_from_seed(derive_seed(derive_seed(9002, net_seed), s));
            let mut sample = ip.central().clone();
            for ((t, lo), hi) in sample
                .tensors_mut()
                .into_iter()
                .zip(ip.lower().tensors())
                .zip(ip.upper().tensors())
            {
                for ((v, &l), &h) in t.data_mut().iter_mut().zip(lo.data()).zip(hi.data()) {
                    *v = l + (h - l) * r2.gen::<f64>();
                }
            }
            let out = forward(&spec, &sample, &input, None).unwrap();
            for ((&o, &l), &u) in out
                .data()
                .iter()
                .zip(pred.lower.data())
                .zip(pred.upper.data())
            {
                if o < l - 1e-9 || o > u + 1e-9 {
                    violations += 1;
                }
            }
        }
    }
    assert_eq!(violations, 0, "sampled outputs escaped interval bounds");
}
