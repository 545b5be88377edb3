use chrononet::tensor::gradcheck::{check_gradients, GradCheckOptions};
use chrononet::tensor::OpTag;
use chrononet::{Error, Graph, Prng, Tensor, Var};
use proptest::prelude::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], prng: &mut Prng) -> Tensor<f64> {
    let n = shape.iter().product();
    t(shape, &(0..n).map(|_| prng.normal()).collect::<Vec<_>>())
}

/// `sum(out ⊙ R)` for a fixed random `R`, so every output element matters.
fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> chrononet::Result<Var> {
    let shape = g.shape(out).to_vec();
    let r = random(&shape, &mut Prng::new(seed));
    let r = g.constant(r);
    let m = g.mul(out, r)?;
    g.sum(m)
}

#[test]
fn elementwise_examples() {
    let mut g = Graph::<f64>::new();
    let z = g.constant(Tensor::scalar(0.0));
    let s = g.sigmoid(z).unwrap();
    assert_eq!(g.value(s).item().unwrap(), 0.5);

    let a = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
    let zeros = g.constant(t(&[3], &[0.0, 0.0, 0.0]));
    let m = g.mul(a, zeros).unwrap();
    assert_eq!(g.value(m).data(), &[0.0, 0.0, 0.0]);

    let h = g.constant(Tensor::scalar(0.5));
    let th = g.tanh(h).unwrap();
    assert!((g.value(th).item().unwrap() - 0.462_117_157_260_009_8).abs() < 1e-15);

    let neg = g.constant(t(&[3], &[-1.0, 0.0, 2.5]));
    let r = g.relu(neg).unwrap();
    assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.5]);
}

#[test]
fn sigmoid_is_stable_at_extremes() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[2], &[-800.0, 800.0]));
    let s = g.sigmoid(x).unwrap();
    assert_eq!(g.value(s).data(), &[0.0, 1.0]);
}

#[test]
fn broadcast_add_bias_rows() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let b = g.constant(t(&[3], &[10.0, 20.0, 30.0]));
    let c = g.add(a, b).unwrap();
    assert_eq!(g.value(c).shape(), &[2, 3]);
    assert_eq!(g.value(c).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    // left operand untouched
    assert_eq!(g.value(a).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let bad = g.constant(t(&[2], &[1.0, 2.0]));
    assert!(matches!(g.add(a, bad), Err(Error::Shape(_))));
}

#[test]
fn matmul_examples() {
    let mut g = Graph::<f64>::new();
    let id = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let v = g.constant(t(&[2, 1], &[3.0, 4.0]));
    let p = g.matmul(id, v).unwrap();
    assert_eq!(g.value(p).data(), &[3.0, 4.0]);

    let row = g.constant(t(&[1, 2], &[1.0, 2.0]));
    let p = g.matmul(row, v).unwrap();
    assert_eq!(g.value(p).data(), &[11.0]);

    assert!(matches!(g.matmul(v, v), Err(Error::Shape(_))));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut prng = Prng::new(99);
    for _ in 0..10 {
        let a = random(&[3, 4], &mut prng);
        let b = random(&[4, 2], &mut prng);
        let mut expect = [0.0; 6];
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..4 {
                    expect[i * 2 + j] += a.data()[i * 4 + k] * b.data()[k * 2 + j];
                }
            }
        }
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a), g.constant(b));
        let c = g.matmul(va, vb).unwrap();
        for (x, y) in g.value(c).data().iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn concat_examples() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 5]));
    let c = g.concat(&[a, b], 1).unwrap();
    assert_eq!(g.shape(c), &[2, 8]);

    let one = g.concat(&[a], 1).unwrap();
    assert_eq!(g.value(one), g.value(a));

    let blocks: Vec<Var> = (0..3)
        .map(|_| g.constant(Tensor::zeros(vec![1, 32, 7])))
        .collect();
    let c = g.concat(&blocks, 1).unwrap();
    assert_eq!(g.shape(c), &[1, 96, 7]);

    let off = g.constant(Tensor::zeros(vec![3, 5]));
    assert!(matches!(g.concat(&[a, off], 1), Err(Error::Shape(_))));
}

#[test]
fn backward_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[4], &[1.0, -2.0, 3.0, 0.5]));
    let s = g.sum(x).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0; 4]);

    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[2], &[1.0, 2.0]));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);

    assert!(matches!(g.backward(sq), Err(Error::Contract(_))));
}

#[test]
fn fan_out_sums_branch_gradients() {
    let x0 = t(&[3], &[0.3, -0.7, 1.1]);
    let branch = |use_a: bool, use_b: bool| {
        let mut g = Graph::<f64>::new();
        let x = g.param(x0.clone());
        let mut terms = Vec::new();
        if use_a {
            let a = g.tanh(x).unwrap();
            terms.push(g.sum(a).unwrap());
        }
        if use_b {
            let b = g.mul(x, x).unwrap();
            let b = g.sigmoid(b).unwrap();
            terms.push(g.sum(b).unwrap());
        }
        let loss = if terms.len() == 2 {
            g.add(terms[0], terms[1]).unwrap()
        } else {
            terms[0]
        };
        g.backward(loss).unwrap().get(x).unwrap().clone()
    };
    let both = branch(true, true);
    let a = branch(true, false);
    let b = branch(false, true);
    for i in 0..3 {
        assert!((both.data()[i] - a.data()[i] - b.data()[i]).abs() < 1e-15);
    }
}

fn assert_passes(inputs: Vec<(String, Tensor<f64>)>, f: impl Fn(&mut Graph<f64>, &[Var]) -> chrononet::Result<Var>) {
    let reports = check_gradients(&inputs, f, &GradCheckOptions::default()).unwrap();
    for r in reports {
        assert!(r.passed, "{} max rel error {:e}", r.name, r.max_rel_error);
    }
}

#[test]
fn finite_differences_every_op() {
    for seed in 0..10u64 {
        let mut p = Prng::new(1000 + seed);
        let a = random(&[2, 3], &mut p);
        let b = random(&[2, 3], &mut p);
        let row = random(&[3], &mut p);
        let col = random(&[2, 1], &mut p);

        assert_passes(
            vec![("a".into(), a.clone()), ("b".into(), b.clone())],
            |g, v| {
                let s = g.add(v[0], v[1])?;
                let d = g.sub(s, v[1])?;
                let d = g.sub(d, v[1])?;
                let m = g.mul(d, v[0])?;
                project(g, m, 1)
            },
        );
        assert_passes(
            vec![("a".into(), a.clone()), ("row".into(), row.clone()), ("col".into(), col.clone())],
            |g, v| {
                let s = g.mul(v[0], v[1])?;
                let s = g.sub(s, v[2])?;
                let s = g.add(v[1], s)?;
                project(g, s, 2)
            },
        );
        assert_passes(vec![("a".into(), a.clone())], |g, v| {
            let x = g.sigmoid(v[0])?;
            let y = g.tanh(v[0])?;
            let z = g.mul(x, y)?;
            let z = g.scale(z, -1.7)?;
            project(g, z, 3)
        });
        // relu away from the kink
        let shifted = a.map(|v| if v.abs() < 1e-3 { v + 0.1 } else { v });
        assert_passes(vec![("a".into(), shifted)], |g, v| {
            let r = g.relu(v[0])?;
            project(g, r, 4)
        });
        let m1 = random(&[3, 4], &mut p);
        let m2 = random(&[4, 2], &mut p);
        assert_passes(vec![("a".into(), m1.clone()), ("b".into(), m2)], |g, v| {
            let c = g.matmul(v[0], v[1])?;
            project(g, c, 5)
        });
        let w = random(&[5, 4], &mut p);
        let bias = random(&[5], &mut p);
        assert_passes(
            vec![("x".into(), m1.clone()), ("w".into(), w.clone()), ("b".into(), bias)],
            |g, v| {
                let y = g.linear(v[0], v[1], Some(v[2]))?;
                let y2 = g.linear(v[0], v[1], None)?;
                let y = g.mul(y, y2)?;
                project(g, y, 6)
            },
        );
        let c1 = random(&[2, 3, 4], &mut p);
        let c2 = random(&[2, 1, 4], &mut p);
        assert_passes(vec![("c1".into(), c1.clone()), ("c2".into(), c2.clone())], |g, v| {
            let c = g.concat(&[v[0], v[1], v[0]], 1)?;
            let s = g.slice(c, 1, 2, 3)?;
            let sel = g.select(c, 2, 1)?;
            let st = g.stack(&[sel, sel], 2)?;
            let a = project(g, s, 7)?;
            let b = project(g, st, 8)?;
            g.add(a, b)
        });
        let x = random(&[2, 3, 9], &mut p);
        let k = random(&[4, 3, 4], &mut p);
        let kb = random(&[4], &mut p);
        for stride in [1, 2, 3] {
            assert_passes(
                vec![("x".into(), x.clone()), ("k".into(), k.clone()), ("b".into(), kb.clone())],
                |g, v| {
                    let y = g.conv1d(v[0], v[1], v[2], stride)?;
                    project(g, y, 9)
                },
            );
        }
        let logits = random(&[4, 3], &mut p);
        assert_passes(vec![("logits".into(), logits)], |g, v| {
            let l = g.softmax_cross_entropy(v[0], &[0, 2, 1, 2])?;
            let m = g.mean(v[0])?;
            let m = g.mul(m, m)?;
            g.add(l, m)
        });
    }
}

#[test]
fn corrupted_rule_is_caught() {
    let mut p = Prng::new(5);
    let inputs = vec![("a".into(), random(&[3, 4], &mut p)), ("b".into(), random(&[4, 2], &mut p))];
    let opts = GradCheckOptions {
        fault: Some(OpTag::Matmul),
        ..Default::default()
    };
    let reports = check_gradients(&inputs, |g, v| {
        let c = g.matmul(v[0], v[1])?;
        project(g, c, 1)
    }, &opts)
    .unwrap();
    assert!(reports.iter().all(|r| !r.passed));
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let mut p = Prng::new(77);
        let mut g = Graph::<f32>::new();
        let x = g.constant(random(&[2, 3, 10], &mut p).cast());
        let k = g.constant(random(&[4, 3, 3], &mut p).cast());
        let b = g.constant(random(&[4], &mut p).cast());
        let y = g.conv1d(x, k, b, 2).unwrap();
        let y = g.tanh(y).unwrap();
        g.value(y).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_detection() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[2], &[f64::MAX, 1.0]));
    let y = g.add(x, x).unwrap();
    assert_eq!(g.first_non_finite(), Some((y, OpTag::Add)));

    let mut g = Graph::<f64>::new();
    g.set_check_finite(true);
    let x = g.constant(t(&[2], &[f64::MAX, 1.0]));
    assert!(matches!(g.add(x, x), Err(Error::NonFinite(_))));
}

#[test]
fn tensor_shape_invariant() {
    assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
    assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
    assert_eq!(Tensor::<f32>::zeros(vec![4, 5]).numel(), 20);
}

proptest! {
    #[test]
    fn split_inverts_concat(
        rows in 1usize..4,
        widths in proptest::collection::vec(1usize..5, 1..5),
        seed in any::<u64>(),
    ) {
        let mut p = Prng::new(seed);
        let mut g = Graph::<f64>::new();
        let parts: Vec<Var> = widths.iter().map(|&w| g.constant(random(&[rows, w, 2], &mut p))).collect();
        let joined = g.concat(&parts, 1).unwrap();
        let back = g.split(joined, 1, &widths).unwrap();
        for (orig, piece) in parts.iter().zip(back) {
            prop_assert_eq!(g.value(*orig), g.value(piece));
        }
    }

    #[test]
    fn broadcast_keeps_left_values(
        rows in 1usize..5,
        cols in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut p = Prng::new(seed);
        let a = random(&[rows, cols], &mut p);
        let mut g = Graph::<f64>::new();
        let va = g.constant(a.clone());
        let vb = g.constant(Tensor::zeros(vec![cols]));
        let s = g.add(va, vb).unwrap();
        prop_assert_eq!(g.value(s), &a);
        prop_assert_eq!(g.value(va), &a);
    }
}
