mod common;

use flowlab::datasets::{csv_read, csv_write, Table};
use flowlab::extract::{local_covariance, project};
use flowlab::flow::{random_orthogonal, Activation, Bijection, FlowNetwork, Layer};
use flowlab::numlin::{slogdet, svd, Matrix};
use flowlab::rng::GaussianRng;
use proptest::prelude::*;

use common::{perturbed_dense, perturbed_realnvp};

#[test]
fn numlin_random_suite() {
    match common::numlin_suite(1000, 11) {
        Ok(s) => println!("{s}"),
        Err(e) => panic!("{e}"),
    }
}

fn random_net_set() -> impl Iterator<Item = (FlowNetwork, Vec<f64>)> {
    let mut rng = GaussianRng::new(21);
    (0..1000).map(move |k| {
        let dim = 2 + k % 2;
        let layers = 1 + (k / 2) % 8;
        let net = perturbed_dense(dim, layers, Activation::Asinh, k as u64);
        (net, rng.normal_vec(dim))
    })
}

#[test]
fn dense_round_trip_jacobian_and_logdet() {
    let (mut rt, mut jac, mut ld) = (0f64, 0f64, 0f64);
    for (net, x) in random_net_set() {
        let y = net.forward(&x).unwrap();
        let back = net.inverse(&y).unwrap();
        rt = rt.max(x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        let j = net.jacobian(&x).unwrap();
        let h = 1e-6;
        let scale = j.frobenius_norm().max(1.0);
        for c in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (net.forward(&xp).unwrap(), net.forward(&xm).unwrap());
            for r in 0..x.len() {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                jac = jac.max((fd - j[(r, c)]).abs() / scale);
            }
        }

        let (_, explicit) = slogdet(&j).unwrap();
        ld = ld.max((net.log_abs_det_jacobian(&x).unwrap() - explicit).abs());
    }
    assert!(rt < 1e-8, "round trip {rt:e}");
    assert!(jac < 1e-5, "jacobian vs finite differences {jac:e}");
    assert!(ld < 1e-8, "logdet decomposition {ld:e}");
}

#[test]
fn local_covariance_spectrum_matches_variances() {
    let mut worst = 0f64;
    for (net, x) in random_net_set() {
        let p = project(&net, &x).unwrap();
        let (_, eig) = local_covariance(&net, &x).unwrap();
        for (a, b) in p.variances.iter().zip(&eig) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn coupling_stack_round_trip_and_logdet() {
    let mut rng = GaussianRng::new(5);
    for seed in 0..20 {
        let dim = 2 + seed as usize % 2;
        let nvp = perturbed_realnvp(dim, seed);
        for _ in 0..50 {
            let x = rng.normal_vec(dim);
            let back = nvp.inverse(&nvp.forward(&x).unwrap()).unwrap();
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "seed {seed}: {err:e}");
            let (_, explicit) = slogdet(&nvp.jacobian(&x).unwrap()).unwrap();
            assert!((nvp.log_abs_det_jacobian(&x).unwrap() - explicit).abs() < 1e-6);
        }
    }
}

fn matrix_strategy(max_n: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| Matrix::new(n, n, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn svd_reconstructs(a in matrix_strategy(6)) {
        let f = svd(&a).unwrap();
        let err = f.reconstruct().sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * a.frobenius_norm().max(1.0));
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn slogdet_scales_with_dimension(a in matrix_strategy(5), c in 0.1f64..5.0) {
        let (s1, l1) = slogdet(&a).unwrap();
        prop_assume!(s1 != 0.0 && l1 > -50.0);
        let (s2, l2) = slogdet(&a.scale(c)).unwrap();
        prop_assert_eq!(s1, s2);
        prop_assert!((l2 - l1 - a.rows() as f64 * c.ln()).abs() < 1e-8 * (1.0 + l1.abs()));
    }

    #[test]
    fn csv_round_trip_is_bit_exact(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 0..20)) {
        let data = Matrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
        let table = Table::from_matrix(data.clone());
        let mut buf = Vec::new();
        csv_write(&mut buf, &table).unwrap();
        let back = csv_read(buf.as_slice()).unwrap();
        prop_assert_eq!(back.columns, table.columns);
        for (a, b) in back.data.as_slice().iter().zip(data.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn output_rotation_leaves_components_unchanged(seed in 0u64..1000, x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let net = perturbed_dense(3, 2, Activation::Asinh, seed);
        let r = random_orthogonal(3, &mut GaussianRng::new(seed + 1)).unwrap();
        let mut layers = net.layers().to_vec();
        let last = layers.pop().unwrap();
        let w = r.matmul(&last.weight).unwrap();
        let b = r.matvec(&last.bias).unwrap();
        layers.push(Layer::new(w, b, Activation::Identity));
        let rotated = FlowNetwork::new(layers).unwrap();
        let p = project(&net, &x).unwrap();
        let q = project(&rotated, &x).unwrap();
        for (a, b) in p.y_hat.iter().zip(&q.y_hat) {
            prop_assert!((a.abs() - b.abs()).abs() < 1e-8 * (1.0 + a.abs()));
        }
    }
}
