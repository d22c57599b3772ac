use mutualfriends_autodiff::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in [-1, 1) so gradients are not vanishingly small.
fn store_with(shapes: &[(&str, Vec<usize>)], seed: u64) -> ParamStore {
    let mut r = rng(seed);
    let mut s = ParamStore::new();
    for (name, shape) in shapes {
        s.add_uniform(name, shape, 1.0, &mut r);
    }
    s
}

fn check(store: &mut ParamStore, f: impl Fn(&mut Tape) -> Var) {
    let rep = check_gradients(store, f, H, 64);
    assert!(rep.checked > 0);
    assert!(rep.max_rel_err < TOL, "max rel err {}", rep.max_rel_err);
}

/// Reduces any tensor to a scalar with non-uniform weights so every output matters.
fn reduce(t: &mut Tape, v: Var) -> Var {
    let n = t.value(v).len();
    let w = t.leaf(Tensor::new(
        t.value(v).shape.clone(),
        (0..n).map(|i| 0.3 + 0.17 * i as f64).collect(),
    ));
    let p = t.mul(v, w);
    t.sum(p)
}

#[test]
fn softmax_examples() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let a = t.leaf(Tensor::vector(vec![0.0, 0.0]));
    let y = t.softmax(a, 1.0);
    assert_eq!(t.value(y).data, vec![0.5, 0.5]);
    let b = t.leaf(Tensor::vector(vec![2f64.ln(), 0.0]));
    let y = t.softmax(b, 1.0);
    assert!((t.value(y).data[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((t.value(y).data[1] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn max_set_example() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let a = t.leaf(Tensor::vector(vec![1.0, 4.0]));
    let b = t.leaf(Tensor::vector(vec![3.0, 2.0]));
    let m = t.max_set(&[a, b]);
    assert_eq!(t.value(m).data, vec![3.0, 4.0]);
}

#[test]
fn sum_gives_all_ones() {
    let mut s = store_with(&[("theta", vec![3, 4])], 1);
    let id = s.id("theta").unwrap();
    let mut g = Gradients::zeros_like(&s);
    let t = {
        let mut t = Tape::new(&s);
        let p = t.param(id);
        let l = t.sum(p);
        t.backward(l, &mut g).unwrap();
        t.len()
    };
    assert!(t > 0);
    assert!(g.get(id).iter().all(|&x| x == 1.0));
    // second call without zeroing accumulates
    {
        let mut t = Tape::new(&s);
        let p = t.param(id);
        let l = t.sum(p);
        t.backward(l, &mut g).unwrap();
    }
    assert!(g.get(id).iter().all(|&x| x == 2.0));
    g.zero();
    assert!(g.get(id).iter().all(|&x| x == 0.0));
    s.get_mut(id).data[0] = 5.0;
}

#[test]
fn non_scalar_loss_is_an_error() {
    let s = store_with(&[("w", vec![2])], 2);
    let mut g = Gradients::zeros_like(&s);
    let mut t = Tape::new(&s);
    let p = t.param(s.id("w").unwrap());
    assert!(matches!(
        t.backward(p, &mut g),
        Err(AutodiffError::NonScalarLoss(_))
    ));
}

#[test]
#[should_panic(expected = "shape mismatch")]
fn add_shape_mismatch_panics() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let a = t.leaf(Tensor::vector(vec![1.0, 2.0]));
    let b = t.leaf(Tensor::vector(vec![1.0]));
    t.add(a, b);
}

#[test]
#[should_panic(expected = "inner dimension")]
fn linear_shape_mismatch_panics() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let w = t.leaf(Tensor::zeros(&[2, 3]));
    let x = t.leaf(Tensor::zeros(&[4]));
    t.linear(w, x);
}

#[test]
fn edge_max_zero_for_isolated_nodes() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let p = t.leaf(Tensor::matrix(2, 2, vec![0.1, 0.2, 0.3, -0.4]));
    let q = t.leaf(Tensor::matrix(1, 2, vec![0.0, 0.0]));
    let m = t.edge_max(p, q, &[(0, 0, 0), (0, 1, 0)], 3);
    let v = &t.value(m).data;
    assert_eq!(v[0], 0.3f64.tanh());
    assert_eq!(v[1], 0.2f64.tanh());
    assert_eq!(&v[2..], &[0.0; 4]);
}

#[test]
fn lstm_zero_weights_give_zero_h() {
    let mut s = ParamStore::new();
    let lstm = Lstm::new(&mut s, "cell", 3, 4, &mut rng(0));
    s.get_mut(lstm.w).data.iter_mut().for_each(|x| *x = 0.0);
    s.get_mut(lstm.b).data.iter_mut().for_each(|x| *x = 0.0);
    let mut t = Tape::new(&s);
    let x = t.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
    let (h0, c0) = lstm.zero_state(&mut t);
    let (h, c) = lstm.step(&mut t, x, h0, c0);
    assert!(t.value(h).data.iter().all(|&v| v == 0.0));
    assert!(t.value(c).data.iter().all(|&v| v == 0.0));
    // with c_prev = 1 the cell halves and h = 0.5 tanh(0.5)
    let c1 = t.leaf(Tensor::vector(vec![1.0; 4]));
    let (h, c) = lstm.step(&mut t, x, h0, c1);
    assert!(t.value(c).data.iter().all(|&v| v == 0.5));
    assert!(t.value(h).data.iter().all(|&v| (v - 0.5 * 0.5f64.tanh()).abs() < 1e-15));
}

#[test]
fn lstm_three_step_gradient_check() {
    let mut s = ParamStore::new();
    let mut r = rng(7);
    let lstm = Lstm::new(&mut s, "cell", 3, 4, &mut r);
    let xs = s.add_uniform("xs", &[3, 3], 1.0, &mut r);
    let rows: Vec<f64> = s.get(lstm.b).data.iter().map(|_| 0.0).collect();
    assert_eq!(rows.len(), 16);
    check(&mut s, |t| {
        let xm = t.param(xs);
        let (mut h, mut c) = lstm.zero_state(t);
        for i in 0..3 {
            let x = t.row(xm, i);
            (h, c) = lstm.step(t, x, h, c);
        }
        let hc = t.concat(&[h, c]);
        reduce(t, hc)
    });
}

#[test]
fn adagrad_examples() {
    let mut s = ParamStore::new();
    let id = s.add("theta", Tensor::vector(vec![1.0, 1.0]));
    let mut g = Gradients::zeros_like(&s);
    g.get_mut(id).copy_from_slice(&[0.5, 0.0]);
    let mut opt = AdaGrad::new(0.5);
    opt.step(&mut s, &g);
    assert!((s.get(id).data[0] - 0.5).abs() < 1e-7);
    assert_eq!(s.get(id).data[1], 1.0);
    let first = 0.5;
    let before = s.get(id).data[0];
    opt.step(&mut s, &g);
    let second = before - s.get(id).data[0];
    assert!(second < first && second > 0.0);
}

#[test]
fn deterministic_forward() {
    let build = || {
        let mut s = ParamStore::new();
        let lstm = Lstm::new(&mut s, "c", 5, 6, &mut rng(3));
        let mut t = Tape::new(&s);
        let x = t.leaf(Tensor::vector(vec![0.25; 5]));
        let (h, c) = lstm.zero_state(&mut t);
        let (h, _) = lstm.step(&mut t, x, h, c);
        t.value(h).data.clone()
    };
    assert_eq!(build(), build());
}

#[derive(Debug, Clone, Copy)]
enum OpCase {
    Add,
    Sub,
    Mul,
    Scale,
    Sigmoid,
    Tanh,
    LinearVec,
    LinearMat,
    Concat,
    Slice,
    Stack,
    Rows,
    MaxSet,
    EdgeMax,
    Softmax,
    WeightedSum,
    LerpScalar,
    LerpVector,
    CrossEntropy,
    MaskedCrossEntropy,
    ConcatCols,
    AddRow,
}

const ALL_OPS: [OpCase; 22] = [
    OpCase::ConcatCols,
    OpCase::AddRow,
    OpCase::Add,
    OpCase::Sub,
    OpCase::Mul,
    OpCase::Scale,
    OpCase::Sigmoid,
    OpCase::Tanh,
    OpCase::LinearVec,
    OpCase::LinearMat,
    OpCase::Concat,
    OpCase::Slice,
    OpCase::Stack,
    OpCase::Rows,
    OpCase::MaxSet,
    OpCase::EdgeMax,
    OpCase::Softmax,
    OpCase::WeightedSum,
    OpCase::LerpScalar,
    OpCase::LerpVector,
    OpCase::CrossEntropy,
    OpCase::MaskedCrossEntropy,
];

fn run_op(op: OpCase, n: usize, m: usize, seed: u64) {
    let mut s = store_with(
        &[
            ("a", vec![n]),
            ("b", vec![n]),
            ("w", vec![m, n]),
            ("x", vec![m, n]),
            ("q", vec![3, n]),
            ("g", vec![1]),
        ],
        seed,
    );
    let [a, b, w, x, q, g] = ["a", "b", "w", "x", "q", "g"].map(|k| s.id(k).unwrap());
    check(&mut s, move |t| {
        let (va, vb, vw, vx) = (t.param(a), t.param(b), t.param(w), t.param(x));
        let out = match op {
            OpCase::Add => t.add(va, vb),
            OpCase::Sub => t.sub(va, vb),
            OpCase::Mul => t.mul(va, vb),
            OpCase::Scale => t.scale(va, -1.7),
            OpCase::Sigmoid => t.sigmoid(va),
            OpCase::Tanh => t.tanh(va),
            OpCase::LinearVec => t.linear(vw, va),
            OpCase::LinearMat => t.linear(vw, vx),
            OpCase::Concat => t.concat(&[va, vw, vb]),
            OpCase::ConcatCols => {
                let vq = t.param(q);
                let top = t.rows(vx, &[0, 1, m - 1]);
                t.concat_cols(&[top, vq, top])
            }
            OpCase::AddRow => t.add_row(vx, va),
            OpCase::Slice => t.slice(vw, 1, m * n - 1),
            OpCase::Stack => t.stack(&[vb, va, vb]),
            OpCase::Rows => t.rows(vx, &[m - 1, 0, m - 1]),
            OpCase::MaxSet => t.max_set(&[va, vb]),
            OpCase::EdgeMax => {
                let vq = t.param(q);
                let mut edges = vec![];
                for src in 0..m {
                    edges.push((src % 2, src, src % 3));
                }
                t.edge_max(vx, vq, &edges, 3)
            }
            OpCase::Softmax => t.softmax(va, 0.5),
            OpCase::WeightedSum => {
                let wv = t.row(vw, 0);
                let wv = t.slice(wv, 0, m.min(n));
                let rows: Vec<usize> = (0..m.min(n)).collect();
                let xr = t.rows(vx, &rows);
                t.weighted_sum(wv, xr)
            }
            OpCase::LerpScalar => {
                let gs = t.param(g);
                let gs = t.sigmoid(gs);
                t.lerp(gs, va, vb)
            }
            OpCase::LerpVector => {
                let gv = t.sigmoid(vb);
                let r = t.row(vw, 0);
                t.lerp(gv, va, r)
            }
            OpCase::CrossEntropy => return t.cross_entropy(va, n - 1, None),
            OpCase::MaskedCrossEntropy => {
                let mask: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
                return t.cross_entropy(va, 0, Some(&mask));
            }
        };
        reduce(t, out)
    });
}

#[test]
fn every_op_passes_gradient_check() {
    for op in ALL_OPS {
        run_op(op, 5, 4, 11);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ops_match_finite_differences(op in 0usize..ALL_OPS.len(), n in 2usize..=8, m in 2usize..=8, seed in 0u64..1000) {
        run_op(ALL_OPS[op], n, m, seed);
    }

    #[test]
    fn softmax_sums_to_one_and_is_permutation_equivariant(
        xs in prop::collection::vec(-30.0f64..30.0, 1..=8),
        temp in 0.1f64..4.0,
        rot in 0usize..8,
    ) {
        let y = softmax(&xs, temp);
        prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let k = rot % xs.len();
        let mut xr = xs.clone();
        xr.rotate_left(k);
        let mut yr_expected = y.clone();
        yr_expected.rotate_left(k);
        for (a, b) in softmax(&xr, temp).iter().zip(&yr_expected) {
            prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn adagrad_accumulators_monotone(gs in prop::collection::vec(-2.0f64..2.0, 1..10)) {
        let mut s = ParamStore::new();
        let id = s.add("t", Tensor::scalar(0.0));
        let mut opt = AdaGrad::new(0.5);
        // effective rate lr / (sqrt(acc) + eps) never grows
        let mut prev_rate = f64::INFINITY;
        for gv in gs {
            if gv.abs() < 1e-3 {
                continue;
            }
            let mut g = Gradients::zeros_like(&s);
            g.get_mut(id)[0] = gv;
            let before = s.get(id).data[0];
            opt.step(&mut s, &g);
            let rate = (before - s.get(id).data[0]) / gv;
            prop_assert!(rate > 0.0 && rate <= prev_rate * (1.0 + 1e-12));
            prev_rate = rate;
        }
    }
}
