use super::*;
use crate::error::Error;
use crate::rng::Prng;

fn rand_vec(rng: &mut Prng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect()
}

#[test]
fn matmul_identity() {
    let eye = Tensor::<f64>::from_f64s(vec![2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let m = Tensor::<f64>::from_f64s(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let out = matmul(&eye, &m).unwrap();
    assert_eq!(out.data(), m.data());
}

#[test]
fn matmul_orthogonal_projectors_give_zero() {
    let a = Tensor::<f64>::from_f64s(vec![2, 2], &[1.0, 0.0, 0.0, 0.0]);
    let b = Tensor::<f64>::from_f64s(vec![2, 2], &[0.0, 0.0, 0.0, 1.0]);
    let out = matmul(&a, &b).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let mut rng = Prng::new(17);
    let (m, k, n) = (3, 4, 2);
    let a = rand_vec(&mut rng, m * k);
    let b = rand_vec(&mut rng, k * n);
    let out = matmul(
        &Tensor::<f64>::from_f64s(vec![m, k], &a),
        &Tensor::<f64>::from_f64s(vec![k, n], &b),
    )
    .unwrap();
    // Independent element-wise triple loop.
    let mut expect = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            expect[i * n + j] = acc;
        }
    }
    for (got, want) in out.data().iter().zip(&expect) {
        assert!((got - want).abs() <= 1e-12, "got {got} want {want}");
    }
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let a = Tensor::<f64>::zeros(vec![2, 3]);
    let b = Tensor::<f64>::zeros(vec![4, 2]);
    let err = matmul(&a, &b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
}

#[test]
fn matmul_deterministic_bitwise() {
    let mut rng = Prng::new(3);
    let a = Tensor::<f32>::from_f64s(vec![17, 9], &rand_vec(&mut rng, 17 * 9));
    let b = Tensor::<f32>::from_f64s(vec![9, 13], &rand_vec(&mut rng, 9 * 13));
    let x = matmul(&a, &b).unwrap();
    let y = matmul(&a, &b).unwrap();
    assert_eq!(x.data(), y.data());
}

#[test]
fn softmax_uniform_on_zero_row() {
    let x = Tensor::<f64>::zeros(vec![1, 4]);
    let s = softmax_rows(&x).unwrap();
    for &v in s.data() {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn softmax_large_inputs_do_not_overflow() {
    let x = Tensor::<f64>::from_f64s(vec![1, 2], &[1000.0, 0.0]);
    let s = softmax_rows(&x).unwrap();
    assert!(s.data().iter().all(|v| v.is_finite()));
    assert!((s.data()[0] - 1.0).abs() < 1e-12);
    assert!(s.data()[1].abs() < 1e-12);
}

#[test]
fn softmax_matches_direct_oracle() {
    let mut rng = Prng::new(5);
    let raw = rand_vec(&mut rng, 16);
    let s = softmax_rows(&Tensor::<f64>::from_f64s(vec![4, 4], &raw)).unwrap();
    for (row_in, row_out) in raw.chunks(4).zip(s.data().chunks(4)) {
        let denom: f64 = row_in.iter().map(|v| v.exp()).sum();
        for (&x, &got) in row_in.iter().zip(row_out) {
            assert!((got - x.exp() / denom).abs() <= 1e-12);
        }
    }
}

#[test]
fn softmax_rows_sum_to_one_and_shift_invariant() {
    let mut rng = Prng::new(9);
    let raw = rand_vec(&mut rng, 40);
    let x = Tensor::<f64>::from_f64s(vec![5, 8], &raw);
    let s = softmax_rows(&x).unwrap();
    for row in s.data().chunks(8) {
        let total: f64 = row.iter().sum();
        assert!((total - 1.0).abs() <= 1e-6);
    }
    let shifted: Vec<f64> = raw.iter().map(|v| v + 3.5).collect();
    let s2 = softmax_rows(&Tensor::<f64>::from_f64s(vec![5, 8], &shifted)).unwrap();
    for (&a, &b) in s.data().iter().zip(s2.data()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn softmax_rejects_non_finite() {
    let x = Tensor::<f64>::from_f64s(vec![1, 2], &[f64::NAN, 0.0]);
    assert!(matches!(
        softmax_rows(&x),
        Err(Error::NonFinite { op: "softmax_rows" })
    ));
}

#[test]
fn layer_norm_constant_row_is_zero() {
    let x = Tensor::<f64>::from_f64s(vec![1, 4], &[3.0; 4]);
    let gain = Tensor::<f64>::from_f64s(vec![4], &[1.0; 4]);
    let bias = Tensor::<f64>::zeros(vec![4]);
    let out = layer_norm(&x, &gain, &bias, 1e-6).unwrap();
    for &v in out.data() {
        assert!(v.abs() < 1e-9);
    }
}

#[test]
fn layer_norm_already_normalized_row() {
    let x = Tensor::<f64>::from_f64s(vec![1, 2], &[1.0, -1.0]);
    let gain = Tensor::<f64>::from_f64s(vec![2], &[1.0, 1.0]);
    let bias = Tensor::<f64>::zeros(vec![2]);
    let out = layer_norm(&x, &gain, &bias, 1e-12).unwrap();
    assert!((out.data()[0] - 1.0).abs() < 1e-6);
    assert!((out.data()[1] + 1.0).abs() < 1e-6);
}

#[test]
fn layer_norm_matches_two_pass_oracle() {
    let mut rng = Prng::new(21);
    let raw = rand_vec(&mut rng, 24);
    let g = rand_vec(&mut rng, 6);
    let b = rand_vec(&mut rng, 6);
    let eps = 1e-5;
    let out = layer_norm(
        &Tensor::<f64>::from_f64s(vec![4, 6], &raw),
        &Tensor::<f64>::from_f64s(vec![6], &g),
        &Tensor::<f64>::from_f64s(vec![6], &b),
        eps,
    )
    .unwrap();
    for (row, got) in raw.chunks(6).zip(out.data().chunks(6)) {
        let mean: f64 = row.iter().sum::<f64>() / 6.0;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        for (j, (&x, &o)) in row.iter().zip(got).enumerate() {
            let want = g[j] * (x - mean) / (var + eps).sqrt() + b[j];
            assert!((o - want).abs() <= 1e-10, "got {o} want {want}");
        }
    }
}

#[test]
fn deconv_doubles_and_composes() {
    let x = Tensor::<f64>::zeros(vec![14, 14, 3]);
    let k = Tensor::<f64>::from_f64s(vec![3, 2, 2], &[1.0; 12]);
    let once = deconv_2x(&x, &k).unwrap();
    assert_eq!(once.shape(), [28, 28, 3]);
    let twice = deconv_2x(&once, &k).unwrap();
    assert_eq!(twice.shape(), [56, 56, 3]);
}

#[test]
fn deconv_single_pixel_replicates_value() {
    let x = Tensor::<f64>::from_f64s(vec![1, 1, 1], &[2.5]);
    let k = Tensor::<f64>::from_f64s(vec![1, 2, 2], &[1.0; 4]);
    let out = deconv_2x(&x, &k).unwrap();
    assert_eq!(out.shape(), [2, 2, 1]);
    for &v in out.data() {
        assert_eq!(v, 2.5);
    }
}

#[test]
fn deconv_rejects_non_square() {
    let x = Tensor::<f64>::zeros(vec![2, 4, 1]);
    let k = Tensor::<f64>::zeros(vec![1, 2, 2]);
    assert!(deconv_2x(&x, &k).is_err());
}

#[test]
fn avgpool_halves_shape_and_averages() {
    let x = Tensor::<f64>::zeros(vec![14, 14, 2]);
    assert_eq!(avgpool_2x(&x).unwrap().shape(), [7, 7, 2]);

    let c = Tensor::<f64>::from_f64s(vec![4, 4, 1], &[0.7; 16]);
    for &v in avgpool_2x(&c).unwrap().data() {
        assert!((v - 0.7).abs() < 1e-15);
    }

    let m = Tensor::<f64>::from_f64s(vec![2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
    let out = avgpool_2x(&m).unwrap();
    assert_eq!(out.shape(), [1, 1, 1]);
    assert!((out.data()[0] - 2.5).abs() < 1e-15);
}

#[test]
fn avgpool_rejects_odd_extent() {
    let x = Tensor::<f64>::zeros(vec![3, 4, 1]);
    assert!(avgpool_2x(&x).is_err());
}

#[test]
fn deconv_then_avgpool_restores_shape() {
    let x = Tensor::<f64>::zeros(vec![6, 6, 2]);
    let k = Tensor::<f64>::from_f64s(vec![2, 2, 2], &[1.0; 8]);
    let up = deconv_2x(&x, &k).unwrap();
    let down = avgpool_2x(&up).unwrap();
    assert_eq!(down.shape(), x.shape());
}

#[test]
fn backward_of_sum_is_ones() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = Prng::new(1);
    store
        .register("p", vec![5], rand_vec(&mut rng, 5), true)
        .unwrap();
    let p = store.leaf("p").unwrap();
    let loss = sum(&p);
    let grads = backward(&loss).unwrap();
    assert_eq!(grads.get(&p).unwrap(), &[1.0; 5]);
}

#[test]
fn backward_of_half_square_sum_is_identity() {
    let mut store = ParamStore::<f64>::new();
    let vals = vec![0.3, -1.2, 2.0];
    store.register("p", vec![3], vals.clone(), true).unwrap();
    let p = store.leaf("p").unwrap();
    let loss = scale(&sum(&mul(&p, &p).unwrap()), 0.5);
    let grads = backward(&loss).unwrap();
    for (g, v) in grads.get(&p).unwrap().iter().zip(&vals) {
        assert!((g - v).abs() < 1e-14);
    }
}

#[test]
fn backward_rejects_non_scalar_and_untraced() {
    let mut store = ParamStore::<f64>::new();
    store.register("p", vec![2], vec![1.0, 2.0], true).unwrap();
    let p = store.leaf("p").unwrap();
    assert!(matches!(
        backward(&scale(&p, 2.0)),
        Err(Error::NonScalarLoss { .. })
    ));
    let constant = Tensor::<f64>::scalar(3.0);
    assert!(matches!(backward(&constant), Err(Error::UntracedLoss)));
}

#[test]
fn backward_accumulates_across_reuse() {
    let mut store = ParamStore::<f64>::new();
    store.register("p", vec![1], vec![3.0], true).unwrap();
    let p = store.leaf("p").unwrap();
    // loss = p*p + 2p  =>  dp = 2p + 2 = 8
    let loss = sum(&add(&mul(&p, &p).unwrap(), &scale(&p, 2.0)).unwrap());
    let grads = backward(&loss).unwrap();
    assert!((grads.get(&p).unwrap()[0] - 8.0).abs() < 1e-14);
}

#[test]
fn detach_blocks_gradient_flow() {
    let mut store = ParamStore::<f64>::new();
    store.register("p", vec![2], vec![1.0, 2.0], true).unwrap();
    let p = store.leaf("p").unwrap();
    let cut = scale(&p, 3.0).detach();
    let loss = sum(&mul(&cut, &cut).unwrap());
    assert!(matches!(backward(&loss), Err(Error::UntracedLoss)));

    // A mixed graph: traced path plus detached path.
    let loss2 = sum(&add(&mul(&cut, &cut).unwrap(), &p.clone()).unwrap());
    let grads = backward(&loss2).unwrap();
    assert_eq!(grads.get(&p).unwrap(), &[1.0, 1.0]);
}

#[test]
fn repeated_backward_identical() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = Prng::new(4);
    store
        .register("w", vec![4, 4], rand_vec(&mut rng, 16), true)
        .unwrap();
    store
        .register("x", vec![2, 4], rand_vec(&mut rng, 8), true)
        .unwrap();
    let run = |store: &ParamStore<f64>| {
        let w = store.leaf("w").unwrap();
        let x = store.leaf("x").unwrap();
        let y = softmax_rows(&matmul(&x, &w).unwrap()).unwrap();
        let loss = sum(&mul(&y, &y).unwrap());
        let grads = backward(&loss).unwrap();
        store.grads_by_name(&grads)
    };
    let a = run(&store);
    store.clear_bindings();
    let b = run(&store);
    assert_eq!(a["w"], b["w"]);
    assert_eq!(a["x"], b["x"]);
}

#[test]
fn finite_diff_quadratic_is_exact() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = Prng::new(2);
    store
        .register("p", vec![6], rand_vec(&mut rng, 6), true)
        .unwrap();
    let report = finite_diff_check(
        &mut store,
        |s| {
            let p = s.leaf("p")?;
            Ok(scale(&sum(&mul(&p, &p)?), 0.5))
        },
        1e-3,
        6,
        &mut Prng::new(7),
    )
    .unwrap();
    assert!(report.max_rel_err <= 1e-10, "{report}");
}

#[test]
fn finite_diff_softmax_composite() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = Prng::new(13);
    store
        .register("logits", vec![3, 5], rand_vec(&mut rng, 15), true)
        .unwrap();
    let target = Tensor::<f64>::from_f64s(vec![3, 5], &rand_vec(&mut rng, 15));
    let report = finite_diff_check(
        &mut store,
        move |s| {
            let l = s.leaf("logits")?;
            let sm = softmax_rows(&l)?;
            let d = sub(&sm, &target)?;
            Ok(scale(&sum(&mul(&d, &d)?), 0.5))
        },
        1e-3,
        15,
        &mut Prng::new(8),
    )
    .unwrap();
    assert!(report.max_rel_err <= 1e-6, "{report}");
}

#[test]
fn gather_scatter_roundtrip_and_grads() {
    let x = Tensor::<f64>::from_f64s(vec![4, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let picked = gather_rows(&x, &[2, 0]).unwrap();
    assert_eq!(picked.data(), &[5.0, 6.0, 1.0, 2.0]);
    let placed = scatter_rows(&picked, &[2, 0], 4).unwrap();
    assert_eq!(placed.data(), &[1.0, 2.0, 0.0, 0.0, 5.0, 6.0, 0.0, 0.0]);
    assert!(gather_rows(&x, &[4]).is_err());
}

#[test]
fn params_zero_for_untouched() {
    let mut store = ParamStore::<f64>::new();
    store.register("used", vec![2], vec![1.0, 2.0], true).unwrap();
    store
        .register("unused", vec![3], vec![0.0; 3], true)
        .unwrap();
    let p = store.leaf("used").unwrap();
    let loss = sum(&p);
    let grads = backward(&loss).unwrap();
    let by_name = store.grads_by_name(&grads);
    assert_eq!(by_name["used"], vec![1.0, 1.0]);
    assert_eq!(by_name["unused"], vec![0.0; 3]);
}
