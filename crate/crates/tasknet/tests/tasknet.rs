use diffmath::{gradcheck, Parameter, Tape, Tensor, FD_STEP};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tasknet::{TaskNet, TaskVars};

fn net(seed: u64, d: usize, c: usize) -> TaskNet {
    TaskNet::init(d, 8, c, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn row(xs: &[f64]) -> Tensor {
    Tensor::row(xs.to_vec())
}

#[test]
fn zero_weights_give_uniform_prediction() {
    let n = TaskNet::zeros(3, 5, 4);
    let l = n.logits(&row(&[1.0, 2.0, 3.0]), &row(&[0.0, -1.0, 4.0])).unwrap();
    assert!(l.data().iter().all(|&v| v == 0.0));
    let mut t = Tape::new();
    let v = n.bind(&mut t, false);
    let q = t.constant(row(&[1.0, 2.0, 3.0]));
    let loss = n.task_loss(&mut t, &v, q, None, &[2]).unwrap();
    assert!((t.value(loss).item() - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn concatenation_is_ordered() {
    let n = net(1, 3, 4);
    let (a, b) = (row(&[0.5, -0.3, 1.0]), row(&[0.1, 0.9, -0.7]));
    assert_ne!(n.logits(&a, &b).unwrap(), n.logits(&b, &a).unwrap());
    assert_eq!(n.logits(&a, &a).unwrap(), n.logits(&a, &a).unwrap());
}

#[test]
fn full_gradcheck_on_a_pair() {
    let n = net(2, 3, 4);
    let mut params: Vec<Parameter> = n.params().to_vec();
    params.push(Parameter::new("xq", row(&[0.4, -0.2, 0.8])));
    params.push(Parameter::new("xctx", row(&[-0.6, 0.3, 0.5])));
    let rep = gradcheck(
        |t, v| {
            let tv = TaskVars { w1: v[0], b1: v[1], w2: v[2], b2: v[3], null: v[4] };
            let a = n.task_loss(t, &tv, v[5], Some(v[6]), &[1])?;
            let b = n.task_loss(t, &tv, v[5], None, &[3])?;
            t.add(a, b)
        },
        &params,
        FD_STEP,
        1e-4,
    )
    .unwrap();
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn noctx_is_pair_with_null_vector() {
    let mut n = net(3, 4, 3);
    n.params_mut()[4].value = row(&[0.3, -0.1, 0.7, 0.2]);
    let q = row(&[1.0, 0.0, -1.0, 0.5]);
    let a = n.logits_noctx(&q).unwrap();
    let b = n.logits(&q, n.null_context()).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn zero_context_weights_ignore_the_context() {
    let mut n = net(4, 3, 4);
    let w1 = &mut n.params_mut()[0].value;
    for r in 0..w1.rows() {
        for c in 3..6 {
            w1.set(r, c, 0.0);
        }
    }
    let q = row(&[0.2, 0.4, -0.9]);
    let base = n.logits_noctx(&q).unwrap();
    assert_eq!(base, n.logits(&q, &row(&[5.0, -3.0, 2.0])).unwrap());
}

#[test]
fn null_vector_matters() {
    let mut n = net(5, 3, 4);
    let q = row(&[0.2, 0.4, -0.9]);
    let before = n.logits_noctx(&q).unwrap();
    n.params_mut()[4].value = row(&[1.0, 1.0, 1.0]);
    assert_ne!(before, n.logits_noctx(&q).unwrap());
}

#[test]
fn saturated_loss_is_tiny() {
    let n = TaskNet::from_weights(
        Tensor::zeros(1, 4),
        Tensor::row(vec![1.0]),
        Tensor::from_vec(2, 1, vec![40.0, -40.0]).unwrap(),
        Tensor::zeros(1, 2),
        Tensor::zeros(1, 2),
    )
    .unwrap();
    let mut t = Tape::new();
    let v = n.bind(&mut t, false);
    let q = t.constant(row(&[0.0, 0.0]));
    let l = n.task_loss(&mut t, &v, q, None, &[0]).unwrap();
    assert!(t.value(l).item() < 1e-6);
}

#[test]
fn task_loss_is_cross_entropy_of_forward_pair() {
    let n = net(6, 3, 4);
    let mut t = Tape::new();
    let v = n.bind(&mut t, false);
    let q = t.constant(row(&[0.1, 0.2, 0.3]));
    let c = t.constant(row(&[0.3, 0.2, 0.1]));
    let l = n.task_loss(&mut t, &v, q, Some(c), &[2]).unwrap();
    let logits = n.logits(&row(&[0.1, 0.2, 0.3]), &row(&[0.3, 0.2, 0.1])).unwrap();
    assert_eq!(t.value(l).item(), diffmath::row_cross_entropy(logits.data(), 2).unwrap());
    assert!(n.task_loss(&mut t, &v, q, Some(c), &[4]).is_err());
}

#[test]
fn gradients_reach_both_halves() {
    let n = net(7, 3, 4);
    let mut t = Tape::new();
    let v = n.bind(&mut t, true);
    let q = t.constant(row(&[0.1, -0.2, 0.3]));
    let c = t.constant(row(&[0.5, 0.4, -0.3]));
    let l = n.task_loss(&mut t, &v, q, Some(c), &[0]).unwrap();
    t.backward(l).unwrap();
    let g = t.grad(v.w1).unwrap();
    let half = |lo: usize| (0..g.rows()).flat_map(|r| (lo..lo + 3).map(move |j| (r, j))).any(|(r, j)| g.get(r, j) != 0.0);
    assert!(half(0) && half(3));
    assert!(t.grad(v.null).is_none(), "null context untouched by a real-context loss");

    let mut t = Tape::new();
    let v = n.bind(&mut t, true);
    let q = t.constant(row(&[0.1, -0.2, 0.3]));
    let l = n.task_loss(&mut t, &v, q, None, &[0]).unwrap();
    t.backward(l).unwrap();
    assert!(t.grad(v.null).unwrap().data().iter().any(|&x| x != 0.0));
}

#[test]
fn bad_widths_are_shape_errors() {
    let n = net(8, 3, 4);
    assert!(n.logits(&row(&[1.0, 2.0]), &row(&[1.0, 2.0, 3.0])).is_err());
    assert!(TaskNet::from_weights(Tensor::zeros(2, 5), Tensor::zeros(1, 2), Tensor::zeros(3, 2), Tensor::zeros(1, 3), Tensor::zeros(1, 3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn task_loss_is_non_negative(seed in any::<u64>(), xs in prop::collection::vec(-3.0f64..3.0, 6), y in 0usize..4) {
        let n = net(seed, 3, 4);
        let mut t = Tape::new();
        let v = n.bind(&mut t, false);
        let q = t.constant(row(&xs[..3]));
        let c = t.constant(row(&xs[3..]));
        let l = n.task_loss(&mut t, &v, q, Some(c), &[y]).unwrap();
        prop_assert!(t.value(l).item() >= 0.0);
    }

    #[test]
    fn noctx_bit_identical(seed in any::<u64>(), xs in prop::collection::vec(-3.0f64..3.0, 3)) {
        let n = net(seed, 3, 4);
        let q = row(&xs);
        prop_assert_eq!(n.logits_noctx(&q).unwrap(), n.logits(&q, n.null_context()).unwrap());
    }
}
