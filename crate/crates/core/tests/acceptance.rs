//! Acceptance suite. Each test prints one `PASS`/`FAIL`/`SKIP` line to
//! stderr (written directly, so it survives output capture) and then asserts.
//! Tests hold a shared lock so the runtime limits are measured without
//! contention.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nnkit::datasets::{synth_blobs, DataSpec, Dataset};
use nnkit::experiment::{run_experiment, ExperimentConfig};
use nnkit::network::{LayerNode, SequentialNetwork};
use nnkit::pruning::{apply_slim_masks, network_slim, weight_prune, PruneAmount, SlimMask};
use nnkit::repair::{repair, RepairConfig};
use nnkit::training::{self, batch_loss, loss_and_grads, parameter_slots, parameter_slots_mut, TrainingConfig};
use nnkit::verification::{
    emit_smtlib, parse_smtlib, robustness_property, verify_bab, BabConfig, InputBox, LinearAtom, Property,
    PropertySource, SmtlibError, Status, MAX_DISJUNCTS,
};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, verdict: &str, elapsed: Duration, detail: &str) {
    let line = format!(
        "acceptance {id:>2} {verdict} {name} ({:.1}s): {detail}\n",
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn conclude(id: u32, name: &str, start: Instant, limit: Duration, ok: bool, detail: String) {
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = ok && in_time;
    let detail = if in_time {
        detail
    } else {
        format!("{detail}; runtime exceeds {}s", limit.as_secs())
    };
    report(id, name, if pass { "PASS" } else { "FAIL" }, elapsed, &detail);
    assert!(pass, "criterion {id} failed: {detail}");
}

fn random_bn_net(rng: &mut ChaCha8Rng, input: usize, hidden: &[usize], output: usize) -> SequentialNetwork {
    let mut net = SequentialNetwork::initialized("r", input, hidden, output, true, rng.random());
    for node in &mut net.nodes {
        match node {
            LayerNode::BatchNorm1D(bn) => {
                for g in bn.gamma.data_mut() {
                    let mag = rng.random_range(0.5..1.5);
                    *g = if rng.random_bool(0.5) { mag } else { -mag };
                }
                for b in bn.beta.data_mut() {
                    *b = rng.random_range(-0.5..0.5);
                }
                for m in bn.running_mean.data_mut() {
                    *m = rng.random_range(-0.5..0.5);
                }
                for v in bn.running_var.data_mut() {
                    *v = rng.random_range(0.1..2.0);
                }
            }
            LayerNode::FullyConnected(fc) => {
                for b in fc.bias.data_mut() {
                    *b = rng.random_range(-0.3..0.3);
                }
            }
            LayerNode::ReLU(_) => {}
        }
    }
    net
}

fn random_input(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// 1

const FD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error, at the finite-difference noise level.
const GRAD_REL_FLOOR: f64 = 1e-6;

#[test]
fn c01_gradient_correctness() {
    let _g = serial();
    let start = Instant::now();
    let cfg = TrainingConfig {
        l2_lambda: 0.01,
        slim_lambda: 0.001,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0usize, 0usize);
    let nets = 20;
    for _ in 0..nets {
        let net = random_bn_net(&mut rng, 4, &[8, 8], 3);
        let inputs: Vec<Vec<f64>> = (0..8).map(|_| random_input(&mut rng, 4)).collect();
        let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
        let rows: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let (_, grads) = loss_and_grads(&net, &rows, &labels, &cfg).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slots().iter().map(|s| s.to_vec()).collect();
        let (_, base_pattern) = batch_loss(&net, &rows, &labels, &cfg).unwrap();
        let shapes: Vec<usize> = parameter_slots(&net).iter().map(|s| s.len()).collect();
        assert_eq!(shapes, analytic.iter().map(Vec::len).collect::<Vec<_>>());
        for (slot, &len) in shapes.iter().enumerate() {
            for k in 0..len {
                let eval = |delta: f64| {
                    let mut n = net.clone();
                    parameter_slots_mut(&mut n)[slot][k] += delta;
                    batch_loss(&n, &rows, &labels, &cfg).unwrap()
                };
                let (lp, pp) = eval(FD_STEP);
                let (lm, pm) = eval(-FD_STEP);
                if pp != base_pattern || pm != base_pattern {
                    skipped += 1;
                    continue;
                }
                let fd = (lp - lm) / (2.0 * FD_STEP);
                let a = analytic[slot][k];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_REL_FLOOR);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let ok = worst < GRAD_REL_TOL && checked > 0 && skipped * 20 < checked;
    conclude(
        1,
        "gradient correctness",
        start,
        Duration::from_secs(60),
        ok,
        format!(
            "{nets} nets 4-8-8-3+BN, {checked} coordinates, max rel err {worst:.2e} (tol {GRAD_REL_TOL:e}), {skipped} skipped at ReLU kinks"
        ),
    );
}

// 2

#[test]
fn c02_bn_fold_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let input = rng.random_range(1..=6);
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let output = rng.random_range(1..=4);
        let net = random_bn_net(&mut rng, input, &hidden, output);
        let folded = net.fold_batchnorm().unwrap();
        assert!(!folded.has_batch_norm());
        for _ in 0..10 {
            let x = random_input(&mut rng, input);
            worst = worst.max(max_abs_diff(&net.forward(&x).unwrap(), &folded.forward(&x).unwrap()));
        }
    }
    conclude(
        2,
        "BN-fold equivalence",
        start,
        Duration::from_secs(60),
        worst <= 1e-9,
        format!("1000 nets x 10 inputs, max discrepancy {worst:.2e} (tol 1e-9)"),
    );
}

// 3

#[test]
fn c03_training_sanity_synthetic() {
    let _g = serial();
    let start = Instant::now();
    let ds = synth_blobs(1, 100, 2, 2, 0.05);
    let net = SequentialNetwork::initialized("blobs", 2, &[16], 2, true, 1);
    let cfg = TrainingConfig {
        epochs: 100,
        learning_rate: 0.01,
        batch_size: 16,
        seed: 1,
        ..Default::default()
    };
    let (trained, _) = training::train(&net, &ds, &cfg).unwrap();
    let acc = training::evaluate(&trained, ds.test()).unwrap().accuracy;
    conclude(
        3,
        "training sanity (synthetic)",
        start,
        Duration::from_secs(60),
        acc >= 0.95,
        format!("2-16-2+BN, {} epochs, test accuracy {acc:.3} (min 0.95)", cfg.epochs),
    );
}

// 4

fn mnist_dir() -> Option<PathBuf> {
    let candidates = std::env::var_os("NNKIT_MNIST_DIR")
        .map(PathBuf::from)
        .into_iter()
        .chain([PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist"))]);
    for dir in candidates {
        let files = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];
        if files.iter().all(|f| dir.join(f).is_file()) {
            return Some(dir);
        }
    }
    None
}

#[test]
fn c04_training_sanity_mnist() {
    let _g = serial();
    let start = Instant::now();
    let Some(dir) = mnist_dir() else {
        report(
            4,
            "training sanity (MNIST)",
            "SKIP",
            start.elapsed(),
            "IDX files not found; set NNKIT_MNIST_DIR or place them in data/mnist",
        );
        return;
    };
    let spec = DataSpec::Idx {
        train_images: dir.join("train-images-idx3-ubyte"),
        train_labels: dir.join("train-labels-idx1-ubyte"),
        test_images: Some(dir.join("t10k-images-idx3-ubyte")),
        test_labels: Some(dir.join("t10k-labels-idx1-ubyte")),
        num_classes: 10,
        train_limit: Some(2000),
        test_limit: Some(1000),
    };
    let ds = spec.load().unwrap();
    let net = SequentialNetwork::initialized("mnist", 784, &[64, 32, 16], 10, true, 0);
    let cfg = TrainingConfig {
        epochs: 20,
        learning_rate: 0.001,
        ..Default::default()
    };
    let (trained, _) = training::train(&net, &ds, &cfg).unwrap();
    let acc = training::evaluate(&trained, ds.test()).unwrap().accuracy;
    conclude(
        4,
        "training sanity (MNIST)",
        start,
        Duration::from_secs(600),
        acc >= 0.80,
        format!("784-64-32-16-10, 2000/1000 samples, 20 epochs, test accuracy {acc:.3} (min 0.80)"),
    );
}

// 5

#[test]
fn c05_pruning_exactness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let mut removed_total = 0;
    for _ in 0..100 {
        let input = rng.random_range(1..=5);
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
        let output = rng.random_range(1..=4);
        let mut net = random_bn_net(&mut rng, input, &hidden, output);
        let mut masks = Vec::new();
        for (idx, node) in net.nodes.iter_mut().enumerate() {
            if let LayerNode::BatchNorm1D(bn) = node {
                let survivor = rng.random_range(0..bn.dim);
                let keep: Vec<bool> = (0..bn.dim).map(|j| j == survivor || rng.random_bool(0.5)).collect();
                for (j, k) in keep.iter().enumerate() {
                    if !k {
                        bn.gamma.data_mut()[j] = 0.0;
                        bn.beta.data_mut()[j] = 0.0;
                        removed_total += 1;
                    }
                }
                masks.push(SlimMask { node: idx, keep });
            }
        }
        let pruned = apply_slim_masks(&net, &masks).unwrap();
        for _ in 0..10 {
            let x = random_input(&mut rng, input);
            worst = worst.max(max_abs_diff(&net.forward(&x).unwrap(), &pruned.forward(&x).unwrap()));
        }
    }

    let (mut idempotent, mut floor_ok) = (true, true);
    for _ in 0..1000 {
        let input = rng.random_range(1..=6);
        let hidden: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=8)).collect();
        let output = rng.random_range(1..=4);
        let net = random_bn_net(&mut rng, input, &hidden, output);
        let t = rng.random_range(0.0..0.8);
        let once = weight_prune(&net, PruneAmount::Threshold(t));
        idempotent &= weight_prune(&once, PruneAmount::Threshold(t)) == once;
        floor_ok &= once
            .fully_connected()
            .flat_map(|fc| fc.weights.data())
            .all(|&w| w == 0.0 || w.abs() >= t);
    }
    conclude(
        5,
        "pruning exactness",
        start,
        Duration::from_secs(60),
        worst <= 1e-12 && idempotent && floor_ok,
        format!(
            "100 constructions ({removed_total} neurons removed), max change {worst:.2e} (tol 1e-12); idempotence {idempotent}, threshold floor {floor_ok} on 1000 nets"
        ),
    );
}

// 6

const WITNESS_TOL: f64 = 1e-7;
const ATTACK_SAMPLES: usize = 100_000;

fn plain_net(rng: &mut ChaCha8Rng, input: usize, hidden: &[usize], output: usize) -> SequentialNetwork {
    let mut net = SequentialNetwork::initialized("tiny", input, hidden, output, false, rng.random());
    for fc in net.nodes.iter_mut().filter_map(|n| match n {
        LayerNode::FullyConnected(fc) => Some(fc),
        _ => None,
    }) {
        for b in fc.bias.data_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    net
}

/// Concrete violation check written against the property's own definition.
fn violates(p: &Property, y: &[f64], tol: f64) -> bool {
    p.violation.iter().any(|d| {
        d.iter()
            .all(|a| a.coeffs.iter().zip(y).map(|(c, v)| c * v).sum::<f64>() <= a.rhs + tol)
    })
}

#[test]
fn c06_verifier_soundness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let instances = 500;
    let (mut verified, mut falsified, mut unknown) = (0, 0, 0);
    let mut bad_witness = 0;
    let mut attacked_witnesses = 0;
    let cfg = BabConfig::default();
    for _ in 0..instances {
        let input = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=5)).collect();
        let classes = rng.random_range(2..=3);
        let net = plain_net(&mut rng, input, &hidden, classes);
        let x0 = random_input(&mut rng, input);
        let label = if rng.random_bool(0.8) {
            net.classify(&x0).unwrap()
        } else {
            rng.random_range(0..classes)
        };
        let eps = rng.random_range(0.005..0.2);
        let p = robustness_property(&x0, label, classes, eps, &InputBox::unit(input)).unwrap();
        let r = verify_bab(&net, &p, &cfg).unwrap();
        match r.status {
            Status::Falsified => {
                falsified += 1;
                let c = r.counterexample.expect("falsified carries a witness");
                let in_box = c
                    .input
                    .iter()
                    .zip(p.input_box.lo.iter().zip(&p.input_box.hi))
                    .all(|(x, (l, h))| *x >= l - WITNESS_TOL && *x <= h + WITNESS_TOL);
                let y = net.forward(&c.input).unwrap();
                if !(in_box && violates(&p, &y, WITNESS_TOL)) {
                    bad_witness += 1;
                }
            }
            Status::Verified => {
                verified += 1;
                let mut attack = ChaCha8Rng::seed_from_u64(rng.random());
                for _ in 0..ATTACK_SAMPLES {
                    let x: Vec<f64> = p
                        .input_box
                        .lo
                        .iter()
                        .zip(&p.input_box.hi)
                        .map(|(l, h)| if l < h { attack.random_range(*l..=*h) } else { *l })
                        .collect();
                    if violates(&p, &net.forward(&x).unwrap(), 0.0) {
                        attacked_witnesses += 1;
                    }
                }
            }
            Status::Unknown => unknown += 1,
        }
    }
    conclude(
        6,
        "verifier soundness",
        start,
        Duration::from_secs(600),
        bad_witness == 0 && attacked_witnesses == 0,
        format!(
            "{instances} instances ({verified} verified, {falsified} falsified, {unknown} unknown); invalid witnesses {bad_witness}, attack witnesses on verified {attacked_witnesses} ({ATTACK_SAMPLES} samples each)"
        ),
    );
}

// 7: exact oracle

type Q = BigRational;

fn q(x: f64) -> Q {
    Q::from_float(x).expect("finite")
}

/// Phase-one simplex over the rationals with Bland's rule: is
/// `{x : lo ≤ x ≤ hi, a·x ≤ b for every row}` nonempty?
fn exact_feasible(rows: &[(Vec<Q>, Q)], lo: &[Q], hi: &[Q]) -> bool {
    let n = lo.len();
    // z = x - lo ≥ 0; upper bounds become rows
    let mut cons: Vec<(Vec<Q>, Q)> = rows
        .iter()
        .map(|(a, b)| {
            let shift: Q = a.iter().zip(lo).map(|(ai, li)| ai * li).sum();
            (a.clone(), b - shift)
        })
        .collect();
    for i in 0..n {
        let mut a = vec![Q::zero(); n];
        a[i] = Q::from_integer(1.into());
        cons.push((a, &hi[i] - &lo[i]));
    }
    let m = cons.len();
    let arts: Vec<usize> = (0..m).filter(|&i| cons[i].1.is_negative()).collect();
    let cols = n + m + arts.len();
    let one = Q::from_integer(1.into());
    let mut t = vec![vec![Q::zero(); cols + 1]; m];
    let mut basis = vec![0usize; m];
    for (i, (a, b)) in cons.iter().enumerate() {
        let neg = b.is_negative();
        for j in 0..n {
            t[i][j] = if neg { -a[j].clone() } else { a[j].clone() };
        }
        t[i][n + i] = if neg { -one.clone() } else { one.clone() };
        t[i][cols] = b.abs();
        basis[i] = n + i;
    }
    for (k, &i) in arts.iter().enumerate() {
        t[i][n + m + k] = one.clone();
        basis[i] = n + m + k;
    }
    let cost = |j: usize| j >= n + m;
    loop {
        let entering = (0..cols).find(|&j| {
            let mut r = if cost(j) { one.clone() } else { Q::zero() };
            for i in 0..m {
                if cost(basis[i]) {
                    r -= &t[i][j];
                }
            }
            r.is_negative()
        });
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, Q)> = None;
        for i in 0..m {
            if t[i][e].is_positive() {
                let ratio = &t[i][cols] / &t[i][e];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("phase one is bounded");
        let piv = t[r][e].clone();
        for v in t[r].iter_mut() {
            *v /= &piv;
        }
        let prow = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && !row[e].is_zero() {
                let f = row[e].clone();
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= &f * p;
                }
            }
        }
        basis[r] = e;
    }
    (0..m).filter(|&i| cost(basis[i])).all(|i| t[i][cols].is_zero())
}

/// Affine form `coeffs · x + c` over the inputs.
#[derive(Clone)]
struct Affine {
    coeffs: Vec<Q>,
    c: Q,
}

struct Enumerator<'a> {
    layers: Vec<(Vec<Vec<Q>>, Vec<Q>)>,
    prop: &'a Property,
    lo: Vec<Q>,
    hi: Vec<Q>,
    lp_calls: usize,
}

impl Enumerator<'_> {
    fn layer_pre(&self, l: usize, post: &[Affine]) -> Vec<Affine> {
        let (w, b) = &self.layers[l];
        let n = self.lo.len();
        w.iter()
            .zip(b)
            .map(|(row, bi)| {
                let mut coeffs = vec![Q::zero(); n];
                let mut c = bi.clone();
                for (wij, a) in row.iter().zip(post) {
                    if wij.is_zero() {
                        continue;
                    }
                    for k in 0..n {
                        coeffs[k] += wij * &a.coeffs[k];
                    }
                    c += wij * &a.c;
                }
                Affine { coeffs, c }
            })
            .collect()
    }

    fn feasible(&mut self, rows: &[(Vec<Q>, Q)]) -> bool {
        self.lp_calls += 1;
        exact_feasible(rows, &self.lo, &self.hi)
    }

    fn leaf(&mut self, out: &[Affine], rows: &[(Vec<Q>, Q)]) -> bool {
        let n = self.lo.len();
        for d in &self.prop.violation {
            let mut r = rows.to_vec();
            for atom in d {
                let mut coeffs = vec![Q::zero(); n];
                let mut c = Q::zero();
                for (a, y) in atom.coeffs.iter().zip(out) {
                    let a = q(*a);
                    for k in 0..n {
                        coeffs[k] += &a * &y.coeffs[k];
                    }
                    c += &a * &y.c;
                }
                r.push((coeffs, q(atom.rhs) - c));
            }
            if self.feasible(&r) {
                return true;
            }
        }
        false
    }

    /// True when some activation region extending this prefix contains a
    /// violation. `pre` holds the pre-activations of hidden layer `layer`.
    fn search(&mut self, layer: usize, neuron: usize, pre: &[Affine], post: Vec<Affine>, rows: Vec<(Vec<Q>, Q)>) -> bool {
        if neuron == pre.len() {
            let next = self.layer_pre(layer + 1, &post);
            if layer + 2 == self.layers.len() {
                return self.leaf(&next, &rows);
            }
            return self.search(layer + 1, 0, &next, Vec::new(), rows);
        }
        let z = &pre[neuron];
        let n = self.lo.len();
        // active: z >= 0, inactive: z <= 0
        for active in [true, false] {
            let mut r = rows.clone();
            if active {
                r.push((z.coeffs.iter().map(|v| -v.clone()).collect(), z.c.clone()));
            } else {
                r.push((z.coeffs.clone(), -z.c.clone()));
            }
            if !self.feasible(&r) {
                continue;
            }
            let mut p = post.clone();
            p.push(if active {
                z.clone()
            } else {
                Affine { coeffs: vec![Q::zero(); n], c: Q::zero() }
            });
            if self.search(layer, neuron + 1, pre, p, r) {
                return true;
            }
        }
        false
    }
}

/// Exhaustive activation-pattern oracle: is the property violated anywhere in its box?
fn oracle_violated(net: &SequentialNetwork, p: &Property) -> (bool, usize) {
    let layers: Vec<(Vec<Vec<Q>>, Vec<Q>)> = net
        .fully_connected()
        .map(|fc| {
            let w = (0..fc.out_dim)
                .map(|i| (0..fc.in_dim).map(|j| q(fc.weight(i, j))).collect())
                .collect();
            (w, fc.bias.data().iter().map(|b| q(*b)).collect())
        })
        .collect();
    let n = net.input_dim;
    let inputs: Vec<Affine> = (0..n)
        .map(|i| {
            let mut coeffs = vec![Q::zero(); n];
            coeffs[i] = Q::from_integer(1.into());
            Affine { coeffs, c: Q::zero() }
        })
        .collect();
    let mut e = Enumerator {
        layers,
        prop: p,
        lo: p.input_box.lo.iter().map(|v| q(*v)).collect(),
        hi: p.input_box.hi.iter().map(|v| q(*v)).collect(),
        lp_calls: 0,
    };
    let first = e.layer_pre(0, &inputs);
    let violated = if e.layers.len() == 1 {
        e.leaf(&first, &[])
    } else {
        e.search(0, 0, &first, Vec::new(), Vec::new())
    };
    (violated, e.lp_calls)
}

fn dyadic(rng: &mut ChaCha8Rng, k: i32, denom: f64) -> f64 {
    rng.random_range(-k..=k) as f64 / denom
}

/// Network with dyadic weights so the oracle works on small rationals.
fn dyadic_net(rng: &mut ChaCha8Rng, input: usize, hidden: &[usize], output: usize) -> SequentialNetwork {
    let mut net = SequentialNetwork::initialized("d", input, hidden, output, false, 0);
    for node in &mut net.nodes {
        if let LayerNode::FullyConnected(fc) = node {
            for w in fc.weights.data_mut() {
                *w = dyadic(rng, 48, 32.0);
            }
            for b in fc.bias.data_mut() {
                *b = dyadic(rng, 16, 32.0);
            }
        }
    }
    net
}

#[test]
fn c07_verifier_completeness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cfg = BabConfig::default();
    let (mut mismatches, mut unknowns, mut violated, mut lp_calls) = (0, 0, 0, 0);
    let nets = 100;
    for i in 0..nets {
        let input = rng.random_range(1..=4);
        let total = rng.random_range(2..=8);
        let hidden = if total >= 4 && rng.random_bool(0.5) {
            let a = rng.random_range(2..=total - 2);
            vec![a, total - a]
        } else {
            vec![total]
        };
        let classes = rng.random_range(2..=3);
        let net = dyadic_net(&mut rng, input, &hidden, classes);
        let x0: Vec<f64> = (0..input).map(|_| rng.random_range(0..=32) as f64 / 32.0).collect();
        let p = if i % 3 == 2 {
            let lo: Vec<f64> = x0.iter().map(|x| (x - 0.25f64).max(0.0)).collect();
            let hi: Vec<f64> = x0.iter().map(|x| (x + 0.25f64).min(1.0)).collect();
            let disjuncts = (0..rng.random_range(1..=2))
                .map(|_| {
                    (0..rng.random_range(1..=2))
                        .map(|_| {
                            let mut coeffs: Vec<f64> = (0..classes).map(|_| dyadic(&mut rng, 4, 4.0)).collect();
                            coeffs[0] = if coeffs[0] == 0.0 { 1.0 } else { coeffs[0] };
                            LinearAtom::output(coeffs, dyadic(&mut rng, 8, 8.0))
                        })
                        .collect()
                })
                .collect();
            Property::new(InputBox::new(lo, hi).unwrap(), classes, disjuncts, PropertySource::Smtlib).unwrap()
        } else {
            let eps = [0.0625, 0.125, 0.25, 0.5][rng.random_range(0..4)];
            robustness_property(&x0, net.classify(&x0).unwrap(), classes, eps, &InputBox::unit(input)).unwrap()
        };
        let (oracle, calls) = oracle_violated(&net, &p);
        lp_calls += calls;
        violated += oracle as usize;
        let r = verify_bab(&net, &p, &cfg).unwrap();
        match r.status {
            Status::Unknown => unknowns += 1,
            Status::Falsified if !oracle => mismatches += 1,
            Status::Verified if oracle => mismatches += 1,
            _ => {}
        }
    }
    conclude(
        7,
        "verifier completeness",
        start,
        Duration::from_secs(600),
        mismatches == 0 && unknowns == 0,
        format!(
            "{nets} nets (<= 8 ReLUs, <= 4 inputs), oracle violated {violated}/{nets} using {lp_calls} exact LPs; mismatches {mismatches}, unknowns {unknowns}"
        ),
    );
}

// 8

fn random_property(rng: &mut ChaCha8Rng) -> Property {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=4);
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..1.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..2.0)).collect();
    let disjuncts = (0..rng.random_range(1..=4))
        .map(|_| {
            (0..rng.random_range(1..=3))
                .map(|_| {
                    let mut coeffs: Vec<f64> = (0..m)
                        .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(-3.0..3.0) })
                        .collect();
                    let k = rng.random_range(0..m);
                    if coeffs.iter().all(|c| *c == 0.0) {
                        coeffs[k] = 1.5;
                    }
                    LinearAtom::output(coeffs, rng.random_range(-5.0..5.0))
                })
                .collect()
        })
        .collect();
    Property::new(InputBox::new(lo, hi).unwrap(), m, disjuncts, PropertySource::Smtlib).unwrap()
}

#[test]
fn c08_parser_round_trip() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut round_trip_failures = 0;
    for _ in 0..100 {
        let p = random_property(&mut rng);
        match parse_smtlib(&emit_smtlib(&p)) {
            Ok(back) if back.semantically_equal(&p) => {}
            _ => round_trip_failures += 1,
        }
    }

    let decls = "(declare-const X_0 Real)(declare-const X_1 Real)(declare-const Y_0 Real)(declare-const Y_1 Real)\
                 (assert (>= X_0 0.0))(assert (<= X_0 1.0))(assert (>= X_1 0.0))(assert (<= X_1 1.0))";
    let non_box = format!("{decls}(assert (<= (+ X_0 X_1) 1.0))(assert (>= Y_0 Y_1))");
    let unknown = format!("{decls}(assert (>= Y_0 Z_9))");
    let clause = |i: usize| format!("(or (>= Y_0 {i}.0) (>= Y_1 {i}.0))");
    let wide = (0..7).map(clause).collect::<String>();
    let dnf = format!("{decls}(assert (and {wide}))");
    let rejections = [
        ("non-box input atom", matches!(parse_smtlib(&non_box), Err(SmtlibError::NonBoxInput { .. }))),
        ("unknown symbol", matches!(parse_smtlib(&unknown), Err(SmtlibError::UnknownSymbol { .. }))),
        ("DNF cap", matches!(parse_smtlib(&dnf), Err(SmtlibError::DnfTooLarge))),
    ];
    let failed: Vec<&str> = rejections.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    conclude(
        8,
        "parser round-trip",
        start,
        Duration::from_secs(60),
        round_trip_failures == 0 && failed.is_empty(),
        format!(
            "100 properties, {round_trip_failures} round-trip failures; rejections (non-box, unknown symbol, DNF 2^7 > {MAX_DISJUNCTS}) failing: {failed:?}"
        ),
    );
}

// 9

#[test]
fn c09_pruning_trend() {
    let _g = serial();
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(DataSpec::Synth {
        seed: 9,
        n_per_class: 150,
        num_classes: 4,
        dim: 8,
        spread: 0.08,
    });
    cfg.hidden = vec![16, 16, 16];
    cfg.baseline = TrainingConfig {
        epochs: 30,
        learning_rate: 0.005,
        seed: 9,
        ..Default::default()
    };
    cfg.sparse = TrainingConfig {
        slim_lambda: 1e-2,
        ..cfg.baseline.clone()
    };
    cfg.ns_ratio = 0.5;
    cfg.fine_tune = Some(TrainingConfig {
        epochs: 10,
        ..cfg.baseline.clone()
    });
    cfg.queries = 20;
    cfg.epsilon = 0.02;
    cfg.timeout_secs = 60.0;
    let r = run_experiment(&cfg).unwrap();
    let base = r.row("Baseline").unwrap();
    let ns = r.row("NS").unwrap();
    let slowest = r.instances.iter().map(|i| i.wall_time_secs).fold(0.0, f64::max);
    let ok = r.rows.len() == 4
        && ns.solved >= base.solved
        && ns.mean_root_unstable <= base.mean_root_unstable
        && slowest <= 2.0 * cfg.timeout_secs;
    let table = r.table();
    let _ = std::io::stderr().write_all(table.as_bytes());
    conclude(
        9,
        "pruning trend at desk scale",
        start,
        Duration::from_secs(1800),
        ok,
        format!(
            "solved NS {} vs Baseline {}, mean root-unstable NS {:.2} vs Baseline {:.2}, slowest instance {slowest:.2}s (limit {}s)",
            ns.solved,
            base.solved,
            ns.mean_root_unstable,
            base.mean_root_unstable,
            2.0 * cfg.timeout_secs
        ),
    );
}

// 10

/// Two blobs; a lightly trained net and robustness queries on training points,
/// some of which start out falsified.
fn repair_scenario(seed: u64) -> (SequentialNetwork, Dataset, Vec<Property>, RepairConfig) {
    let ds = synth_blobs(seed, 40, 2, 2, 0.05);
    let init = SequentialNetwork::initialized("repair", 2, &[8], 2, false, seed);
    let quick = TrainingConfig {
        epochs: 2,
        learning_rate: 0.01,
        seed,
        ..Default::default()
    };
    let net = training::train(&init, &ds, &quick).unwrap().0;
    let props = ds
        .train()
        .iter()
        .take(6)
        .map(|s| robustness_property(&s.input, s.label, 2, 0.01, &InputBox::unit(2)).unwrap())
        .collect();
    let cfg = RepairConfig {
        max_iterations: 10,
        trainer: TrainingConfig {
            epochs: 10,
            learning_rate: 0.01,
            seed,
            ..Default::default()
        },
        counterexamples_per_property_per_round: 3,
        verifier: BabConfig { seed, ..Default::default() },
        from_scratch: false,
    };
    (net, ds, props, cfg)
}

#[test]
fn c10_repair_honesty() {
    let _g = serial();
    let start = Instant::now();
    let (mut dishonest, mut bookkeeping, mut reached, mut initially_failing) = (0, 0, 0, 0);
    let seeds = 10;
    for seed in 0..seeds {
        let (net, mut ds, props, cfg) = repair_scenario(seed);
        let before = ds.train().len();
        initially_failing += props
            .iter()
            .filter(|p| verify_bab(&net, p, &cfg.verifier).unwrap().status != Status::Verified)
            .count();
        let (out, rep) = repair(&net, &props, &mut ds, &cfg).unwrap();
        let fresh: Vec<Status> = props.iter().map(|p| verify_bab(&out, p, &cfg.verifier).unwrap().status).collect();
        if fresh != rep.final_statuses || rep.all_verified != fresh.iter().all(|s| *s == Status::Verified) {
            dishonest += 1;
        }
        let per_iter: usize = rep.iterations.iter().map(|i| i.samples_added).sum();
        let labels_ok = rep.added_samples.iter().all(|a| {
            props[a.property].label() == Some(a.label) && props[a.property].input_box.contains(&a.input, 0.0)
        });
        if ds.train().len() != before + rep.total_samples_added
            || rep.added_samples.len() != rep.total_samples_added
            || per_iter != rep.total_samples_added
            || !labels_ok
        {
            bookkeeping += 1;
        }
        reached += rep.all_verified as usize;
    }
    let majority = reached * 2 > seeds as usize;
    let detail = format!(
        "{seeds} seeds, {initially_failing} properties initially not verified; dishonest reports {dishonest}, bookkeeping errors {bookkeeping}; all-verified in {reached}/{seeds} seeds (majority target {}, report-only)",
        if majority { "met" } else { "missed" }
    );
    conclude(10, "repair honesty", start, Duration::from_secs(600), dishonest == 0 && bookkeeping == 0, detail);
}

// 11

#[test]
fn c11_determinism() {
    let _g = serial();
    let start = Instant::now();
    let run = || {
        let ds = synth_blobs(11, 40, 3, 4, 0.1);
        let init = SequentialNetwork::initialized("det", 4, &[12, 8], 3, true, 11);
        let cfg = TrainingConfig {
            epochs: 8,
            learning_rate: 0.01,
            slim_lambda: 1e-3,
            seed: 11,
            ..Default::default()
        };
        let trained = training::train(&init, &ds, &cfg).unwrap().0;
        let wp = weight_prune(&trained, PruneAmount::Ratio(0.4));
        let ns = network_slim(&trained, 0.4).unwrap();
        let bab = BabConfig { seed: 11, ..Default::default() };
        let verdicts: Vec<Status> = ds
            .test()
            .iter()
            .take(5)
            .map(|s| {
                let p = robustness_property(&s.input, s.label, 3, 0.03, &InputBox::unit(4)).unwrap();
                verify_bab(&ns, &p, &bab).unwrap().status
            })
            .collect();
        let (net, mut rds, props, rcfg) = repair_scenario(3);
        let (repaired, rep) = repair(&net, &props, &mut rds, &rcfg).unwrap();
        (trained, wp, ns, verdicts, repaired, rep.final_statuses, rep.added_samples, rds)
    };
    let a = run();
    let b = run();
    let parts = [
        ("train", a.0 == b.0),
        ("weight prune", a.1 == b.1),
        ("slim", a.2 == b.2),
        ("verify", a.3 == b.3),
        ("repair", a.4 == b.4 && a.5 == b.5 && a.6 == b.6 && a.7 == b.7),
    ];
    let differing: Vec<&str> = parts.iter().filter(|(_, same)| !same).map(|(n, _)| *n).collect();
    conclude(
        11,
        "determinism",
        start,
        Duration::from_secs(300),
        differing.is_empty(),
        format!("two identical runs of train, prune, verify, repair; differing outputs: {differing:?}"),
    );
}
