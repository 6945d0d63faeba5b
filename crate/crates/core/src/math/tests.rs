use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, 1.0, &mut rng)
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[1, 2], &[0.0, 0.0]));
    g.softmax(x);
    let out = g.evaluate(&Bindings::new()).unwrap();
    assert_eq!(out.data(), &[0.5, 0.5]);
}

#[test]
fn layer_norm_of_constant_row_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[1, 4], &[3.0; 4]));
    g.layer_norm(x);
    let out = g.evaluate(&Bindings::new()).unwrap();
    assert!(out.data().iter().all(|v| *v == 0.0));
}

#[test]
fn identity_matmul_returns_operand() {
    let a = random(&[3, 3], 1);
    let mut g = Graph::<f64>::new();
    let i = g.constant(Tensor::identity(3));
    let x = g.input("a");
    g.matmul(i, x);
    let mut b = Bindings::new();
    b.insert("a", a.clone());
    assert_eq!(g.evaluate(&b).unwrap(), &a);
}

#[test]
fn gradient_of_sum_of_squares() {
    let mut g = Graph::<f64>::new();
    let x = g.param("x");
    let sq = g.mul(x, x);
    g.sum(sq);
    let mut b = Bindings::new();
    b.insert("x", Tensor::scalar(3.0));
    g.evaluate(&b).unwrap();
    let grads = g.backward().unwrap();
    assert_eq!(grads.get("x").unwrap().data(), &[6.0]);
}

#[test]
fn constant_root_gives_zero_gradients() {
    let mut g = Graph::<f64>::new();
    let _unused = g.param("w");
    let c = g.constant(Tensor::scalar(2.0));
    g.scale(c, 3.0);
    let mut b = Bindings::new();
    b.insert("w", t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    g.evaluate(&b).unwrap();
    let grads = g.backward().unwrap();
    assert_eq!(grads.get("w").unwrap(), &Tensor::zeros(&[2, 2]));
}

#[test]
fn non_scalar_root_is_an_error() {
    let mut g = Graph::<f64>::new();
    let x = g.param("x");
    g.sigmoid(x);
    let mut b = Bindings::new();
    b.insert("x", Tensor::row(&[1.0, 2.0]));
    g.evaluate(&b).unwrap();
    assert!(matches!(g.backward(), Err(Error::NonScalarRoot(s)) if s == vec![1, 2]));
}

#[test]
fn unbound_leaf_is_reported_by_name() {
    let mut g = Graph::<f64>::new();
    let x = g.param("missing");
    let _ = g.sum(x);
    match g.evaluate(&Bindings::new()) {
        Err(Error::UnboundLeaf(name)) => assert_eq!(name, "missing"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn shape_mismatch_names_the_node() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let m = g.matmul(a, b);
    match g.evaluate(&Bindings::new()) {
        Err(Error::Shape { node, op, .. }) => {
            assert_eq!(node, m.index());
            assert_eq!(op, "matmul");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn backward_before_evaluate_fails() {
    let mut g = Graph::<f64>::new();
    let x = g.param("x");
    g.sum(x);
    assert!(matches!(g.backward(), Err(Error::NotEvaluated)));
}

#[test]
fn quadratic_passes_fd_check() {
    let mut g = Graph::<f64>::new();
    let x = g.param("x");
    let sq = g.mul(x, x);
    let s = g.scale(sq, 0.5);
    g.sum(s);
    let mut b = Bindings::new();
    b.insert("x", t(&[1, 3], &[0.5, -1.2, 2.0]));
    let err = finite_difference_check(&mut g, &b, 1e-5).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn softmax_cross_entropy_passes_fd_check() {
    let mut g = Graph::<f64>::new();
    let w = g.param("w");
    let x = g.constant(random(&[3, 4], 7));
    let logits = g.matmul(x, w);
    g.cross_entropy(logits, &[0, 4, 2]);
    let mut b = Bindings::new();
    b.insert("w", random(&[4, 5], 8));
    let err = finite_difference_check(&mut g, &b, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn explicit_softmax_then_log_matches_cross_entropy() {
    let logits = random(&[2, 3], 3);
    let mut g = Graph::<f64>::new();
    let l = g.constant(logits.clone());
    g.cross_entropy(l, &[1, 2]);
    let ce = g.evaluate(&Bindings::new()).unwrap().item();
    let mut manual = 0.0;
    for (i, target) in [1usize, 2].iter().enumerate() {
        let row = logits.row_slice(i);
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        manual -= (row[*target].exp() / z).ln();
    }
    assert!((ce - manual / 2.0).abs() < 1e-12);
}

#[test]
fn attention_passes_fd_check() {
    for causal in [false, true] {
        let mut g = Graph::<f64>::new();
        let q = g.param("q");
        let k = g.param("k");
        let v = g.param("v");
        let a = g.attention(q, k, v, 2, causal);
        let w = g.constant(random(&[3, 4], 11));
        let prod = g.mul(a, w);
        g.sum(prod);
        let mut b = Bindings::new();
        b.insert("q", random(&[3, 4], 1));
        b.insert("k", random(&[3, 4], 2));
        b.insert("v", random(&[3, 4], 3));
        let err = finite_difference_check(&mut g, &b, 1e-5).unwrap();
        assert!(err < 1e-7, "causal={causal}: {err}");
    }
}

#[test]
fn causal_attention_ignores_future_keys() {
    let q = random(&[3, 4], 1);
    let k = random(&[3, 4], 2);
    let mut v = random(&[3, 4], 3);
    let run = |v: &Tensor<f64>| {
        let mut g = Graph::<f64>::new();
        let (qn, kn, vn) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
        g.attention(qn, kn, vn, 1, true);
        g.evaluate(&Bindings::new()).unwrap().clone()
    };
    let before = run(&v);
    v.data_mut()[8..].iter_mut().for_each(|x| *x += 5.0);
    let after = run(&v);
    assert_eq!(before.row_slice(0), after.row_slice(0));
    assert_eq!(before.row_slice(1), after.row_slice(1));
    assert_ne!(before.row_slice(2), after.row_slice(2));
}

#[test]
fn attention_over_no_keys_is_zero() {
    let mut g = Graph::<f64>::new();
    let q = g.param("q");
    let k = g.constant(Tensor::zeros(&[0, 4]));
    let v = g.constant(Tensor::zeros(&[0, 4]));
    let a = g.attention(q, k, v, 2, false);
    g.sum(a);
    let mut b = Bindings::new();
    b.insert("q", random(&[2, 4], 1));
    assert_eq!(g.evaluate(&b).unwrap().item(), 0.0);
    let grads = g.backward().unwrap();
    assert!(grads.get("q").unwrap().data().iter().all(|v| *v == 0.0));
}

#[test]
fn mean_over_empty_rows_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(&[0, 3]));
    g.mean(x, 0);
    assert_eq!(g.evaluate(&Bindings::new()).unwrap(), &Tensor::zeros(&[1, 3]));
}

#[test]
fn blend_and_bce_pass_fd_check() {
    let mut g = Graph::<f64>::new();
    let w = g.param("alpha");
    let parts: Vec<_> = (0..3).map(|i| g.param(&format!("u{i}"))).collect();
    let mixed = g.blend(w, &parts, 0.2);
    let target = g.constant(t(&[1, 2], &[1.0, 0.0]));
    g.bce_with_logits(mixed, target);
    let mut b = Bindings::new();
    b.insert("alpha", random(&[1, 3], 5));
    for i in 0..3 {
        b.insert(format!("u{i}"), random(&[1, 2], 20 + i));
    }
    let err = finite_difference_check(&mut g, &b, 1e-5).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn evaluation_is_deterministic() {
    let build = || {
        let mut g = Graph::<f32>::new();
        let x = g.param("x");
        let w = g.param("w");
        let h = g.matmul(x, w);
        let n = g.layer_norm(h);
        g.softmax(n);
        g
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut b = Bindings::new();
    b.insert("x", Tensor::uniform(&[5, 7], 1.0, &mut rng));
    b.insert("w", Tensor::uniform(&[7, 6], 1.0, &mut rng));
    let a = build().evaluate(&b).unwrap().clone();
    let c = build().evaluate(&b).unwrap().clone();
    assert_eq!(a.data(), c.data());
}

/// A randomly composed differentiable graph over three parameter matrices.
#[derive(Clone, Debug)]
enum Step {
    MatMulSquare,
    AddParam,
    MulParam,
    Sigmoid,
    Gelu,
    Softmax,
    LayerNorm,
    Scale(f64),
    ConcatSlice,
    Attention,
    MeanRows,
    Embed,
}

fn step_strategy() -> impl Strategy<Value = Step> {
    prop_oneof![
        Just(Step::MatMulSquare),
        Just(Step::AddParam),
        Just(Step::MulParam),
        Just(Step::Sigmoid),
        Just(Step::Gelu),
        Just(Step::Softmax),
        Just(Step::LayerNorm),
        (-2.0f64..2.0).prop_map(Step::Scale),
        Just(Step::ConcatSlice),
        Just(Step::Attention),
        Just(Step::MeanRows),
        Just(Step::Embed),
    ]
}

fn build_random_graph(steps: &[Step], head: usize) -> Graph<f64> {
    let mut g = Graph::<f64>::new();
    let a = g.param("a");
    let w = g.param("w");
    let bias = g.param("bias");
    let table = g.param("table");
    let mut cur = a;
    let mut rows = 3;
    for s in steps {
        cur = match s {
            Step::MatMulSquare => g.matmul(cur, w),
            Step::AddParam => g.add(cur, bias),
            Step::MulParam => g.mul(cur, bias),
            Step::Sigmoid => g.sigmoid(cur),
            Step::Gelu => g.gelu(cur),
            Step::Softmax => g.softmax(cur),
            Step::LayerNorm => g.layer_norm(cur),
            Step::Scale(c) => g.scale(cur, *c),
            Step::ConcatSlice => {
                let joined = g.concat_rows(&[cur, a]);
                rows += 3;
                let sliced = g.slice_rows(joined, 1, rows);
                rows -= 1;
                sliced
            }
            Step::Attention => {
                let k = g.matmul(a, w);
                g.attention(cur, k, a, 2, false)
            }
            Step::MeanRows => {
                rows = 1;
                g.mean(cur, 0)
            }
            Step::Embed => {
                let e = g.embedding(table, &vec![1; rows]);
                g.add(cur, e)
            }
        };
    }
    let logits = g.concat(&[cur, cur]);
    let targets: Vec<usize> = (0..rows).map(|i| (i + head) % 8).collect();
    g.cross_entropy(logits, &targets);
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_graphs_pass_fd_check(
        steps in prop::collection::vec(step_strategy(), 1..7),
        seed in 0u64..10_000,
        head in 0usize..8,
    ) {
        let mut g = build_random_graph(&steps, head);
        let mut b = Bindings::new();
        b.insert("a", random(&[3, 4], seed));
        b.insert("w", random(&[4, 4], seed + 1));
        b.insert("bias", random(&[1, 4], seed + 2));
        b.insert("table", random(&[2, 4], seed + 3));
        let err = finite_difference_check(&mut g, &b, 1e-5).unwrap();
        prop_assert!(err < 1e-6, "steps {:?}: {}", steps, err);
    }

    #[test]
    fn softmax_rows_sum_to_one(data in prop::collection::vec(-50.0f32..50.0, 12)) {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::new(vec![3, 4], data).unwrap());
        g.softmax(x);
        let out = g.evaluate(&Bindings::new()).unwrap();
        for r in 0..3 {
            let s: f32 = out.row_slice(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
