//! Self-contained estimator and gradient checks with printed statistics.

use std::time::Instant;

use diffmath::{gradcheck, relative_error, softmax_slice, DiffError, Parameter, Tape, Tensor, Var, FD_STEP};
use hybrid_trainer::gumbel::{gumbel_matrix, gumbel_softmax_select, gumbel_softmax_select_with_noise};
use hybrid_trainer::policy::{compute_rewards, policy_loss, sample_index, standardize_advantages};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selector::{SelectorNet, SelectorVars};
use tasknet::{TaskNet, TaskVars};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const INSTANCES: u64 = 20;
pub const GUMBEL_DRAWS: usize = 200_000;
pub const TV_LIMIT: f64 = 0.01;
pub const BANDIT_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Breaks the softmax backward pass so the gradient check must fail.
    pub corrupt_softmax: bool,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).expect("sized")
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Check {
    let t = Instant::now();
    let (passed, detail) = f();
    Check { name, passed, detail, seconds: t.elapsed().as_secs_f64() }
}

type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>>;

/// Reduces any output to a scalar through a fixed random projection.
fn project(tape: &mut Tape, v: Var, seed: u64) -> Result<Var, DiffError> {
    let (r, c) = tape.value(v).shape();
    let w = tape.constant(random(&mut rng(seed ^ 0x5eed), r, c));
    let m = tape.mul(v, w)?;
    Ok(tape.sum(m))
}

/// One random instance of every differentiable op: name, function, inputs.
fn op_instances(seed: u64) -> Vec<(&'static str, OpFn, Vec<Tensor>)> {
    let mut r = rng(seed);
    let (m, k, n) = (r.random_range(1..4), r.random_range(1..4), r.random_range(2..5));
    let labels: Vec<usize> = (0..m).map(|_| r.random_range(0..n)).collect();
    let idx: Vec<usize> = (0..m).map(|_| r.random_range(0..n)).collect();
    let weights: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut mask = Tensor::zeros(m, n);
    for row in 0..m {
        let keep = r.random_range(0..n);
        for col in 0..n {
            if col != keep && r.random::<f64>() < 0.3 {
                mask.set(row, col, f64::NEG_INFINITY);
            }
        }
    }
    let s = seed;
    let mut v: Vec<(&'static str, OpFn, Vec<Tensor>)> = vec![
        ("matmul_nt", Box::new(move |t, x| { let y = t.matmul_nt(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, m, k), random(&mut r, n, k)]),
        ("matmul", Box::new(move |t, x| { let y = t.matmul(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, m, k), random(&mut r, k, n)]),
        ("matvec", Box::new(move |t, x| { let y = t.matvec(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, n, k), random(&mut r, 1, k)]),
        ("add", Box::new(move |t, x| { let y = t.add(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, m, n), random(&mut r, m, n)]),
        ("sub", Box::new(move |t, x| { let y = t.sub(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, m, n), random(&mut r, m, n)]),
        ("mul", Box::new(move |t, x| { let y = t.mul(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, m, n), random(&mut r, m, n)]),
        ("add_row", Box::new(move |t, x| { let y = t.add_row(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, m, n), random(&mut r, 1, n)]),
        ("scale", Box::new(move |t, x| { let y = t.scale(x[0], -1.7); project(t, y, s) }), vec![random(&mut r, m, n)]),
        ("tanh", Box::new(move |t, x| { let y = t.tanh(x[0]); project(t, y, s) }), vec![random(&mut r, m, n)]),
        ("repeat_rows", Box::new(move |t, x| { let y = t.repeat_rows(x[0], 3)?; project(t, y, s) }), vec![random(&mut r, 1, n)]),
        ("concat_cols", Box::new(move |t, x| { let y = t.concat_cols(x[0], x[1])?; project(t, y, s) }), vec![random(&mut r, m, k), random(&mut r, m, n)]),
        ("dot", Box::new(|t, x| t.dot(x[0], x[1])), vec![random(&mut r, 1, n), random(&mut r, 1, n)]),
        ("sum", Box::new(|t, x| { let y = t.tanh(x[0]); Ok(t.sum(y)) }), vec![random(&mut r, m, n)]),
    ];
    let mk = mask;
    v.push(("softmax", Box::new(move |t, x| { let c = t.constant(mk.clone()); let y = t.add(x[0], c)?; let y = t.softmax(y)?; project(t, y, s) }), vec![random(&mut r, m, n)]));
    v.push(("log_softmax", Box::new(move |t, x| { let y = t.log_softmax(x[0])?; project(t, y, s) }), vec![random(&mut r, m, n)]));
    v.push(("cross_entropy", Box::new(move |t, x| t.cross_entropy(x[0], &labels)), vec![random(&mut r, m, n)]));
    v.push(("pick", Box::new(move |t, x| { let y = t.log_softmax(x[0])?; t.pick(y, &idx, &weights) }), vec![random(&mut r, m, n)]));
    v
}

/// Worst relative error per op over `INSTANCES` random instances, plus the
/// smooth selector + tasknet composite.
pub fn gradcheck_suite(opts: &VerifyOptions) -> Vec<(String, f64)> {
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, err: f64| match worst.iter_mut().find(|(n, _)| n == name) {
        Some(w) => w.1 = w.1.max(err),
        None => worst.push((name.to_string(), err)),
    };
    let corrupt = opts.corrupt_softmax;
    for i in 0..INSTANCES {
        for (name, f, inputs) in op_instances(opts.seed.wrapping_mul(1000).wrapping_add(i)) {
            let params: Vec<Parameter> = inputs.into_iter().enumerate().map(|(j, t)| Parameter::new(format!("x{j}"), t)).collect();
            let g = |t: &mut Tape, x: &[Var]| {
                if corrupt {
                    t.inject_softmax_fault();
                }
                f(t, x)
            };
            let err = gradcheck(g, &params, FD_STEP, GRAD_TOLERANCE).map_or(f64::INFINITY, |r| r.max_rel_error());
            record(name, err);
        }
        record("selector+tasknet", composite_error(opts.seed.wrapping_add(i), corrupt));
    }
    worst
}

struct Toy {
    sel: SelectorNet,
    task: TaskNet,
    xq: Tensor,
    pool: Tensor,
    labels: Vec<usize>,
}

fn toy(seed: u64) -> Toy {
    let mut r = rng(seed);
    let (d, b, n) = (5, 3, 6);
    let sel = SelectorNet::init(d, 4, 3, &mut r);
    let task = TaskNet::init(d, 4, 3, &mut r);
    Toy { sel, task, xq: random(&mut r, b, d), pool: random(&mut r, n, d), labels: (0..b).map(|_| r.random_range(0..3)).collect() }
}

fn sel_vars(v: &[Var]) -> SelectorVars {
    SelectorVars { w1: v[0], b1: v[1], w2: v[2], b2: v[3] }
}

fn task_vars(v: &[Var]) -> TaskVars {
    TaskVars { w1: v[0], b1: v[1], w2: v[2], b2: v[3], null: v[4] }
}

fn all_params(t: &Toy) -> Vec<Parameter> {
    t.sel.params().iter().chain(t.task.params()).cloned().collect()
}

/// Soft-attention context plus policy and null-context terms: every
/// selector and tasknet parameter is on a smooth path.
fn composite_error(seed: u64, corrupt: bool) -> f64 {
    let t = toy(seed);
    let mut r = rng(seed ^ 0xc0);
    let (b, n) = (t.xq.rows(), t.pool.rows());
    let actions: Vec<usize> = (0..b).map(|_| r.random_range(0..n)).collect();
    let adv: Vec<f64> = (0..b).map(|_| r.random_range(-1.0..1.0)).collect();
    let masks = vec![vec![false; n]; b];
    let f = |tape: &mut Tape, v: &[Var]| -> Result<Var, DiffError> {
        if corrupt {
            tape.inject_softmax_fault();
        }
        let (sv, tv) = (sel_vars(&v[..4]), task_vars(&v[4..]));
        let xq = tape.constant(t.xq.clone());
        let xc = tape.constant(t.pool.clone());
        let s = t.sel.score_matrix(tape, &sv, xq, xc, &masks).map_err(|e| DiffError::Numeric(e.to_string()))?;
        let w = tape.softmax(s)?;
        let ctx = tape.matmul(w, xc)?;
        let lg = t.task.task_loss(tape, &tv, xq, Some(ctx), &t.labels)?;
        let ln = t.task.task_loss(tape, &tv, xq, None, &t.labels)?;
        let lp = policy_loss(tape, s, &actions, &adv).map_err(|e| DiffError::Numeric(e.to_string()))?;
        let lp = tape.scale(lp, 0.5);
        let a = tape.add(lg, ln)?;
        tape.add(a, lp)
    };
    gradcheck(f, &all_params(&t), FD_STEP, GRAD_TOLERANCE).map_or(f64::INFINITY, |r| r.max_rel_error())
}

pub fn check_gradients(opts: &VerifyOptions) -> Check {
    timed("gradcheck", || {
        let worst = gradcheck_suite(opts);
        let failed: Vec<&str> = worst.iter().filter(|(_, e)| !(*e < GRAD_TOLERANCE)).map(|(n, _)| n.as_str()).collect();
        let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
        let mut detail = format!("{} ops x {INSTANCES} instances, max rel error {max:.2e}", worst.len());
        if !failed.is_empty() {
            detail.push_str(&format!("; failing: {}", failed.join(", ")));
        }
        (failed.is_empty(), detail)
    })
}

/// Worst relative error between straight-through gradients of the full
/// selector + tasknet loss and finite differences of its first-order
/// surrogate `L(hard) + <dL/dy, soft(theta)>` at fixed noise.
pub fn straight_through_error(seed: u64) -> f64 {
    let t = toy(seed);
    let (b, n) = (t.xq.rows(), t.pool.rows());
    let noise = gumbel_matrix(&mut rng(seed ^ 0x9b), b, n);
    let masks = vec![vec![false; n]; b];
    let params = all_params(&t);

    let mut tape = Tape::new();
    let v: Vec<Var> = params.iter().map(|p| tape.param(p.value.clone())).collect();
    let (sv, tv) = (sel_vars(&v[..4]), task_vars(&v[4..]));
    let xq = tape.constant(t.xq.clone());
    let xc = tape.constant(t.pool.clone());
    let s = t.sel.score_matrix(&mut tape, &sv, xq, xc, &masks).expect("shapes");
    let (y, idx) = gumbel_softmax_select_with_noise(&mut tape, s, 0.1, &noise).expect("unmasked");
    let ctx = tape.matmul(y, xc).expect("shapes");
    let loss = t.task.task_loss(&mut tape, &tv, xq, Some(ctx), &t.labels).expect("labels");
    tape.backward(loss).expect("scalar");

    let mut hard = Tensor::zeros(b, n);
    idx.iter().enumerate().for_each(|(r, &i)| hard.set(r, i, 1.0));
    let mut yt = Tape::new();
    let tvc = t.task.bind(&mut yt, false);
    let yv = yt.param(hard.clone());
    let (q, c) = (yt.constant(t.xq.clone()), yt.constant(t.pool.clone()));
    let cx = yt.matmul(yv, c).expect("shapes");
    let l = t.task.task_loss(&mut yt, &tvc, q, Some(cx), &t.labels).expect("labels");
    yt.backward(l).expect("scalar");
    let gy = yt.grad(yv).expect("tracked").clone();

    let surrogate = |ps: &[Parameter]| -> f64 {
        let mut tp = Tape::new();
        let v: Vec<Var> = ps.iter().map(|p| tp.param(p.value.clone())).collect();
        let (sv, tv) = (sel_vars(&v[..4]), task_vars(&v[4..]));
        let xq = tp.constant(t.xq.clone());
        let xc = tp.constant(t.pool.clone());
        let s = t.sel.score_matrix(&mut tp, &sv, xq, xc, &masks).expect("shapes");
        let g = tp.constant(noise.clone());
        let sg = tp.add(s, g).expect("shapes");
        let sg = tp.scale(sg, 10.0);
        let soft = tp.softmax(sg).expect("finite");
        let gyv = tp.constant(gy.clone());
        let lin = tp.mul(soft, gyv).expect("shapes");
        let lin = tp.sum(lin);
        let hc = tp.constant(hard.clone());
        let ctx = tp.matmul(hc, xc).expect("shapes");
        let lg = t.task.task_loss(&mut tp, &tv, xq, Some(ctx), &t.labels).expect("labels");
        let out = tp.add(lg, lin).expect("scalars");
        tp.value(out).item()
    };
    let mut worst: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.value.len() {
            let at = |delta: f64| {
                let mut ps = params.clone();
                ps[pi].value.data_mut()[k] += delta;
                surrogate(&ps)
            };
            let numeric = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
            let analytic = tape.grad(v[pi]).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    worst
}

pub fn check_straight_through(opts: &VerifyOptions) -> Check {
    timed("straight-through", || {
        let worst = (0..INSTANCES).map(|i| straight_through_error(opts.seed.wrapping_add(i))).fold(0.0, f64::max);
        (worst < GRAD_TOLERANCE, format!("{INSTANCES} instances, max rel error {worst:.2e}"))
    })
}

/// Per-arm frequencies of hard samples and their total-variation distance.
pub fn hard_sample_frequencies(seed: u64, draws: usize) -> ([f64; 4], f64, bool) {
    let logits: Vec<f64> = (1..=4).map(|k| (k as f64).ln()).collect();
    let scores = Tensor::from_vec(draws, 4, logits.iter().cycle().take(4 * draws).copied().collect()).expect("sized");
    let mut tape = Tape::new();
    let s = tape.constant(scores);
    let (_, idx) = gumbel_softmax_select(&mut tape, s, 0.1, &mut rng(seed)).expect("unmasked");
    let mut counts = [0usize; 4];
    idx.iter().for_each(|&i| counts[i] += 1);
    let freq = counts.map(|c| c as f64 / draws as f64);
    let mut within = true;
    let mut tv = 0.0;
    for (k, f) in freq.iter().enumerate() {
        let p = (k + 1) as f64 / 10.0;
        within &= (f - p).abs() <= 3.0 * (p * (1.0 - p) / draws as f64).sqrt();
        tv += 0.5 * (f - p).abs();
    }
    (freq, tv, within)
}

pub fn check_hard_sample_law(opts: &VerifyOptions) -> Check {
    timed("hard-sample law", || {
        let (f, tv, within) = hard_sample_frequencies(opts.seed, GUMBEL_DRAWS);
        (within && tv < TV_LIMIT, format!("freq {:.4}/{:.4}/{:.4}/{:.4}, tv {tv:.4}", f[0], f[1], f[2], f[3]))
    })
}

/// Mean single-sample gradient of the expected bandit reward, its standard
/// error, and the analytic gradient, per arm.
pub fn bandit_gradient(seed: u64, draws: usize) -> [(f64, f64, f64); 3] {
    let rewards = [0.0, 0.5, 1.0];
    let probs = softmax_slice(&[0.0; 3]).expect("finite");
    let mut r = rng(seed);
    let (mut sum, mut sq) = ([0.0; 3], [0.0; 3]);
    for _ in 0..draws {
        let a = sample_index(&probs, &mut r);
        let mut tape = Tape::new();
        let s = tape.param(Tensor::row(vec![0.0; 3]));
        let l = policy_loss(&mut tape, s, &[a], &[rewards[a]]).expect("valid action");
        tape.backward(l).expect("scalar");
        for (k, g) in tape.grad(s).expect("tracked").data().iter().enumerate() {
            sum[k] -= g;
            sq[k] += g * g;
        }
    }
    let mean_r: f64 = probs.iter().zip(&rewards).map(|(p, r)| p * r).sum();
    let n = draws as f64;
    std::array::from_fn(|k| {
        let m = sum[k] / n;
        let se = ((sq[k] / n - m * m) / n).sqrt();
        (m, se, probs[k] * (rewards[k] - mean_r))
    })
}

pub fn check_unbiasedness(opts: &VerifyOptions) -> Check {
    timed("policy-gradient bias", || {
        let g = bandit_gradient(opts.seed, BANDIT_DRAWS);
        let ok = g.iter().all(|(m, se, a)| (m - a).abs() <= 3.0 * se);
        let z: Vec<String> = g.iter().map(|(m, se, a)| format!("{:+.2}", (m - a) / se)).collect();
        (ok, format!("{BANDIT_DRAWS} draws, z-scores {}", z.join(" ")))
    })
}

/// Largest absolute tasknet gradient entry after backpropagating only the
/// weighted policy loss of a full step graph.
pub fn policy_only_tasknet_gradient(seed: u64) -> f64 {
    let t = toy(seed);
    let (b, n) = (t.xq.rows(), t.pool.rows());
    let mut r = rng(seed ^ 0xde);
    let mut tape = Tape::new();
    let sv = t.sel.bind(&mut tape, true);
    let tv = t.task.bind(&mut tape, true);
    let xq = tape.constant(t.xq.clone());
    let xc = tape.constant(t.pool.clone());
    let s = t.sel.score_matrix(&mut tape, &sv, xq, xc, &vec![vec![false; n]; b]).expect("shapes");
    let (y, _) = gumbel_softmax_select(&mut tape, s, 0.1, &mut r).expect("unmasked");
    let ctx = tape.matmul(y, xc).expect("shapes");
    let _task = t.task.task_loss(&mut tape, &tv, xq, Some(ctx), &t.labels).expect("labels");
    let probs: Vec<Vec<f64>> = (0..b).map(|i| softmax_slice(tape.value(s).row_slice(i)).expect("finite")).collect();
    let actions: Vec<usize> = probs.iter().map(|p| sample_index(p, &mut r)).collect();
    let rewards = compute_rewards(&t.task, &t.xq, &t.pool.gather_rows(&actions), &t.labels).expect("shapes");
    let adv = standardize_advantages(&rewards).expect("batch of 3");
    let lp = policy_loss(&mut tape, s, &actions, &adv).expect("valid actions");
    let lp = tape.scale(lp, 0.5);
    tape.backward(lp).expect("scalar");
    tv.all().iter().filter_map(|&v| tape.grad(v)).flat_map(|g| g.data().iter().map(|x| x.abs())).fold(0.0, f64::max)
}

pub fn check_detachment(opts: &VerifyOptions) -> Check {
    timed("detachment", || {
        let worst = (0..INSTANCES).map(|i| policy_only_tasknet_gradient(opts.seed.wrapping_add(i))).fold(0.0, f64::max);
        (worst == 0.0, format!("{INSTANCES} step graphs, max |tasknet grad| {worst:e}"))
    })
}

/// Deviations of standardized reward batches from their targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizationStats {
    pub batches: usize,
    /// Worst |mean| over batches with spread above the zero-variance guard.
    pub mean_dev: f64,
    /// Worst |std - 1| over every batch with variance above 1e-12.
    pub std_dev_all: f64,
    /// Worst |std - 1| over batches whose reward std is at least 0.1.
    pub std_dev_resolved: f64,
    /// Worst relative gap between std and `sigma / (sigma + eps)`.
    pub identity_dev: f64,
    pub zero_variance_zeroed: bool,
}

/// Standardizes random batches whose reward spread ranges from far below
/// to far above the advantage epsilon, plus exact constant batches.
pub fn standardization_stats(seed: u64, batches: usize) -> StandardizationStats {
    let mut r = rng(seed);
    let mut st = StandardizationStats {
        batches,
        mean_dev: 0.0,
        std_dev_all: 0.0,
        std_dev_resolved: 0.0,
        identity_dev: 0.0,
        zero_variance_zeroed: true,
    };
    for i in 0..batches {
        let n = r.random_range(2..64);
        let scale = 10f64.powf(r.random_range(-6.0..3.0));
        let offset = r.random_range(-1.0..1.0);
        let rewards: Vec<f64> =
            if i % 10 == 0 { vec![offset; n] } else { (0..n).map(|_| offset + scale * r.random_range(-1.0..1.0)).collect() };
        let a = standardize_advantages(&rewards).expect("batch of 2+");
        let nf = n as f64;
        let m = rewards.iter().sum::<f64>() / nf;
        let sigma = (rewards.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf).sqrt();
        if sigma < hybrid_trainer::policy::ZERO_VARIANCE {
            st.zero_variance_zeroed &= a.iter().all(|&x| x == 0.0);
            continue;
        }
        let am = a.iter().sum::<f64>() / nf;
        let astd = (a.iter().map(|x| (x - am).powi(2)).sum::<f64>() / nf).sqrt();
        st.mean_dev = st.mean_dev.max(am.abs());
        if sigma * sigma > 1e-12 {
            st.std_dev_all = st.std_dev_all.max((astd - 1.0).abs());
        }
        if sigma >= 1e-1 {
            st.std_dev_resolved = st.std_dev_resolved.max((astd - 1.0).abs());
        }
        let expected = sigma / (sigma + hybrid_trainer::policy::ADV_EPS);
        st.identity_dev = st.identity_dev.max((astd - expected).abs() / expected);
    }
    st
}

pub fn check_standardization(opts: &VerifyOptions) -> Check {
    timed("advantage standardization", || {
        let s = standardization_stats(opts.seed, 2000);
        let ok = s.mean_dev <= 1e-9 && s.std_dev_resolved <= 1e-6 && s.identity_dev <= 1e-9 && s.zero_variance_zeroed;
        let detail = format!(
            "{} batches, |mean| <= {:.2e}, |std - 1| <= {:.1e} (reward std >= 0.1), std vs sigma/(sigma+eps) <= {:.1e}, \
             |std - 1| <= {:.1e} over all var > 1e-12, constant batches zeroed: {}",
            s.batches, s.mean_dev, s.std_dev_resolved, s.identity_dev, s.std_dev_all, s.zero_variance_zeroed
        );
        (ok, detail)
    })
}

/// All checks, in order.
pub fn run_all(opts: &VerifyOptions) -> Vec<Check> {
    vec![
        check_gradients(opts),
        check_straight_through(opts),
        check_hard_sample_law(opts),
        check_unbiasedness(opts),
        check_detachment(opts),
        check_standardization(opts),
    ]
}
