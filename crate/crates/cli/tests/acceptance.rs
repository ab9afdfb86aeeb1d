//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.
//!
//! Needs the MNIST IDX files in `data/mnist` at the workspace root (or the
//! directory named by `LOGICNET_MNIST_DIR`); `scripts/fetch_mnist.sh` puts
//! them there.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use logicnet::baselines::integrated_gradients;
use logicnet::data::{self, Dataset};
use logicnet::explain::{fanin_trace, local_map, sp_analytical, ExplanationSpec, Guide, Variant};
use logicnet::mininet;
use logicnet::switchdist::{self, Direction, EvalConfig, Method, SwitchConfig};
use logicnet::train::{self, TrainConfig};
use logicnet::{GateType, Layer, LogicNetwork, NodeId, Port, Sign, Wire};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

// ---------------------------------------------------------------- helpers

fn mnist_dir() -> PathBuf {
    std::env::var_os("LOGICNET_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn random_gate(rng: &mut ChaCha8Rng) -> GateType {
    GateType::from_id(rng.random_range(0..16)).unwrap()
}

/// Layered net with arbitrary fan-out.
fn random_hard_net(rng: &mut ChaCha8Rng, inputs: usize, depth: usize, classes: usize, group: usize) -> LogicNetwork {
    let mut prev = inputs;
    let mut layers = Vec::new();
    for l in 0..depth {
        let width = if l + 1 == depth {
            classes * group
        } else {
            rng.random_range(2..=8)
        };
        let wires = (0..width)
            .map(|_| Wire::new(rng.random_range(0..prev), rng.random_range(0..prev)))
            .collect();
        let gates = (0..width).map(|_| random_gate(rng)).collect();
        layers.push(Layer::hard(wires, gates));
        prev = width;
    }
    LogicNetwork::new(inputs, classes, group, 1.0, layers).unwrap()
}

fn random_soft_net(rng: &mut ChaCha8Rng, inputs: usize, depth: usize, classes: usize, group: usize) -> LogicNetwork {
    let hard = random_hard_net(rng, inputs, depth, classes, group);
    let layers = hard
        .layers()
        .iter()
        .map(|l| {
            let logits = (0..l.width())
                .map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0)))
                .collect();
            Layer::soft(l.wires.clone(), logits)
        })
        .collect();
    LogicNetwork::new(inputs, classes, group, 1.0, layers).unwrap()
}

/// Tree-shaped circuit: every node and input feeds at most one live port.
/// A port the gate ignores is wired to the same source as its live port.
struct TreeBuilder {
    layers: Vec<Vec<(Wire, GateType)>>,
    next_input: usize,
}

impl TreeBuilder {
    fn live_ports(g: GateType) -> usize {
        [Port::A, Port::B]
            .iter()
            .filter(|&&p| g.dependence(p) != logicnet::Dependence::Ignored)
            .count()
    }

    /// Adds a node at `layer` using at most `budget >= 1` inputs; returns
    /// its index and the inputs it used.
    fn node(&mut self, rng: &mut ChaCha8Rng, layer: usize, budget: usize) -> (usize, usize) {
        // Prefer two live ports while inputs remain so trees use the budget.
        let want_two = budget >= 2 && rng.random_bool(0.8);
        let (gate, need) = loop {
            let g = random_gate(rng);
            let need = Self::live_ports(g).max(1);
            if need <= budget && (need == 2) == want_two {
                break (g, need);
            }
        };
        let (wire, used) = if layer == 0 {
            let a = self.next_input;
            self.next_input += need;
            let b = if need == 2 { a + 1 } else { a };
            (Wire::new(a, b), need)
        } else if need == 2 {
            let first = rng.random_range(1..budget);
            let (a, ua) = self.node(rng, layer - 1, first);
            let (b, ub) = self.node(rng, layer - 1, budget - ua);
            (Wire::new(a, b), ua + ub)
        } else {
            let (a, ua) = self.node(rng, layer - 1, budget);
            (Wire::new(a, a), ua)
        };
        self.layers[layer].push((wire, gate));
        (self.layers[layer].len() - 1, used)
    }
}

fn fan_out_free_net(rng: &mut ChaCha8Rng) -> LogicNetwork {
    let depth = rng.random_range(1..=4);
    let mut b = TreeBuilder {
        layers: vec![Vec::new(); depth],
        next_input: 0,
    };
    let budget = rng.random_range(2..=12);
    b.node(rng, depth - 1, budget);
    let layers = b
        .layers
        .into_iter()
        .map(|nodes| {
            let (wires, gates) = nodes.into_iter().unzip();
            Layer::hard(wires, gates)
        })
        .collect();
    LogicNetwork::new(b.next_input.max(1), 1, 1, 1.0, layers).unwrap()
}

fn bits(mask: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

fn last_layer_values(net: &LogicNetwork, x: &[bool]) -> Vec<bool> {
    net.forward_hard(x).unwrap().layers.pop().unwrap()
}

// ------------------------------------------------------------- criteria

/// Rows of the published gate table: id and outputs for AB = 00, 01, 10, 11.
const GATE_TABLE: [(u8, [u8; 4]); 16] = [
    (0, [0, 0, 0, 0]),
    (1, [0, 0, 0, 1]),
    (2, [0, 0, 1, 0]),
    (3, [0, 0, 1, 1]),
    (4, [0, 1, 0, 0]),
    (5, [0, 1, 0, 1]),
    (6, [0, 1, 1, 0]),
    (7, [0, 1, 1, 1]),
    (8, [1, 0, 0, 0]),
    (9, [1, 0, 0, 1]),
    (10, [1, 0, 1, 0]),
    (11, [1, 0, 1, 1]),
    (12, [1, 1, 0, 0]),
    (13, [1, 1, 0, 1]),
    (14, [1, 1, 1, 0]),
    (15, [1, 1, 1, 1]),
];

fn criterion_1() -> Outcome {
    let mut hard_ok = 0;
    let mut worst = 0.0f64;
    for (id, row) in GATE_TABLE {
        let g = GateType::from_id(id).unwrap();
        for (k, &want) in row.iter().enumerate() {
            let (a, b) = (k >> 1 == 1, k & 1 == 1);
            if g.eval_hard(a, b) == (want == 1) {
                hard_ok += 1;
            }
        }
        for i in 0..=10 {
            for j in 0..=10 {
                let (pa, pb) = (i as f64 / 10.0, j as f64 / 10.0);
                let mut expect = 0.0;
                for (k, &out) in row.iter().enumerate() {
                    let wa = if k >> 1 == 1 { pa } else { 1.0 - pa };
                    let wb = if k & 1 == 1 { pb } else { 1.0 - pb };
                    expect += wa * wb * f64::from(out);
                }
                worst = worst.max((g.eval_soft(pa, pb).unwrap() - expect).abs());
            }
        }
    }
    let detail = format!("{hard_ok}/64 hard cases, max soft deviation {worst:.1e} on the 11x11 grid");
    if hard_ok == 64 && worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for n in 0..50 {
        let inputs = rng.random_range(2..=6);
        let depth = rng.random_range(1..=3);
        let classes = rng.random_range(1..=3);
        let group = rng.random_range(1..=2);
        let net = if n % 2 == 0 {
            random_hard_net(&mut rng, inputs, depth, classes, group)
        } else {
            random_soft_net(&mut rng, inputs, depth, classes, group)
        };
        let p: Vec<f64> = (0..inputs).map(|_| rng.random_range(0.05..0.95)).collect();
        for class in 0..classes {
            let g = net.backward_soft(&p, class).unwrap();
            for i in 0..inputs {
                let mut up = p.clone();
                let mut down = p.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (net.forward_soft(&up).unwrap().scores[class]
                    - net.forward_soft(&down).unwrap().scores[class])
                    / (2.0 * h);
                worst = worst.max(rel_err(g[i], fd));
            }
        }
    }
    let mut gate_worst = 0.0f64;
    for g in GateType::ALL {
        for _ in 0..50 {
            let (pa, pb) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
            let (da, db) = g.soft_gradient(pa, pb);
            let fa = (g.eval_soft(pa + h, pb).unwrap() - g.eval_soft(pa - h, pb).unwrap()) / (2.0 * h);
            let fb = (g.eval_soft(pa, pb + h).unwrap() - g.eval_soft(pa, pb - h).unwrap()) / (2.0 * h);
            gate_worst = gate_worst.max(rel_err(da, fa)).max(rel_err(db, fb));
        }
    }
    let detail = format!(
        "50 nets max rel error {worst:.1e}, 16 gates x 50 points max rel error {gate_worst:.1e} (limit 1e-4)"
    );
    if worst <= 1e-4 && gate_worst <= 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut max_inputs = 0;
    for _ in 0..100 {
        let net = fan_out_free_net(&mut rng);
        let n = net.input_dim();
        max_inputs = max_inputs.max(n);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let sf = sp_analytical(&net, &p).unwrap();
        let mut expect: Vec<Vec<f64>> = net.layers().iter().map(|l| vec![0.0; l.width()]).collect();
        for mask in 0..1usize << n {
            let x = bits(mask, n);
            let w: f64 = x
                .iter()
                .zip(&p)
                .map(|(&b, &pi)| if b { pi } else { 1.0 - pi })
                .product();
            let fwd = net.forward_hard(&x).unwrap();
            for (acc, vals) in expect.iter_mut().zip(&fwd.layers) {
                for (e, &v) in acc.iter_mut().zip(vals) {
                    if v {
                        *e += w;
                    }
                }
            }
        }
        for (a, e) in sf.nodes.iter().zip(&expect) {
            for (x, y) in a.iter().zip(e) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    let detail = format!("100 circuits (up to {max_inputs} inputs), max |SP_A - enumeration| {worst:.1e} (limit 1e-9)");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Trained {
    net: LogicNetwork,
    train: Dataset,
    test: Dataset,
}

fn criterion_4(model: &mut Option<Trained>) -> Outcome {
    let dir = mnist_dir();
    let full = data::load_mnist_dir(&dir).map_err(|e| format!("cannot load MNIST from {}: {e}", dir.display()))?;
    let config = TrainConfig::default();
    let (train_set, test_set) = data::split(&full, config.split_ratio, config.seed).map_err(|e| e.to_string())?;
    let mut net = train::init_network(&config, train_set.dim(), 10, config.seed).map_err(|e| e.to_string())?;
    let start = Instant::now();
    train::train(&mut net, &train_set, None, &config).map_err(|e| e.to_string())?;
    let hard = train::discretize(&net);
    let acc = train::hard_accuracy(&hard, &test_set).map_err(|e| e.to_string())?;
    let detail = format!(
        "layers {:?}, {} epochs in {:.0?}: discretized test accuracy {:.4} on {} samples (limit 0.85)",
        config.layers,
        config.epochs,
        start.elapsed(),
        acc,
        test_set.len()
    );
    *model = Some(Trained {
        net: hard,
        train: train_set,
        test: test_set,
    });
    if acc >= 0.85 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut checked = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let depth = rng.random_range(1..=4);
        let classes = rng.random_range(1..=3);
        let group = rng.random_range(1..=3);
        let net = random_hard_net(&mut rng, n, depth, classes, group);
        let table: Vec<Vec<bool>> = (0..1usize << n).map(|m| last_layer_values(&net, &bits(m, n))).collect();
        for root in 0..classes * group {
            let support = fanin_trace(&net, Guide::Structural, NodeId::new(depth - 1, root))
                .unwrap()
                .support();
            for i in 0..n {
                let depends = (0..1usize << n).any(|m| table[m][root] != table[m ^ (1 << i)][root]);
                checked += 1;
                if depends && !support[i] {
                    violations += 1;
                }
            }
        }
    }
    let mut flip_checked = 0;
    let mut flip_violations = 0;
    for _ in 0..100 {
        let net = fan_out_free_net(&mut rng);
        let n = net.input_dim();
        let root = NodeId::new(net.depth() - 1, 0);
        let trace = fanin_trace(&net, Guide::Structural, root).unwrap();
        let table: Vec<bool> = (0..1usize << n).map(|m| last_layer_values(&net, &bits(m, n))[0]).collect();
        for i in 0..n {
            let Some(sign) = trace.pure_sign(i) else { continue };
            flip_checked += 1;
            let ok = (0..1usize << n).filter(|m| m >> i & 1 == 0).all(|m| {
                let (off, on) = (table[m], table[m | 1 << i]);
                match sign {
                    Sign::Positive => on >= off,
                    Sign::Negative => on <= off,
                }
            });
            if !ok {
                flip_violations += 1;
            }
        }
    }
    let detail = format!(
        "support: {violations} violations in {checked} (output, input) pairs; monotone flip: {flip_violations} violations in {flip_checked} pure-sign inputs"
    );
    if violations == 0 && flip_violations == 0 && flip_checked > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6(model: Option<&Trained>) -> Outcome {
    let m = model.ok_or("no trained model (criterion 4 could not train)")?;
    let config = EvalConfig {
        switch: SwitchConfig {
            alpha: 0.1,
            budget: Some(100.0),
        },
        seed: 6,
        max_samples: Some(1000),
        ..EvalConfig::default()
    };
    let methods = [Method::Random, Method::Explain(Variant::LE), Method::Explain(Variant::LA)];
    let start = Instant::now();
    let summary = switchdist::evaluate(&m.net, &m.test, Some(&m.train), &methods, &config).map_err(|e| e.to_string())?;
    let row = |method: &str| summary.row(method, Direction::Full).expect("row present").clone();
    let (random, le, la) = (row("random"), row("L_E"), row("L_A"));
    let tps = switchdist::true_positives(&m.net, &m.test).map_err(|e| e.to_string())?;
    let mut differing = 0;
    for &i in tps.iter().take(le.n_samples) {
        let x = &m.test.images[i];
        let a = local_map(&m.net, x, None, &ExplanationSpec::new(Variant::LE)).unwrap();
        let b = local_map(&m.net, x, None, &ExplanationSpec::new(Variant::LA)).unwrap();
        if a.values != b.values {
            differing += 1;
        }
    }
    let checks = [
        ("n >= 500", le.n_samples >= 500),
        ("(a) median L_E < median Random", le.median < random.median),
        ("(b) L %Switch >= 85", le.percent_switch >= 85.0 && la.percent_switch >= 85.0),
        ("(c) Random mean in [5, 11]", (5.0..=11.0).contains(&random.mean)),
        ("(d) L_E == L_A", differing == 0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = format!(
        "{} TP images, +/-I: L_E median {:.2} vs Random median {:.2}; %Switch L_E {:.1} L_A {:.1}; Random mean {:.2} +- {:.2}; L_E/L_A maps differ on {differing}; {:.0?}",
        le.n_samples,
        le.median,
        random.median,
        le.percent_switch,
        la.percent_switch,
        random.mean,
        random.std,
        start.elapsed()
    );
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failed: {}", failed.join(", ")))
    }
}

fn criterion_7(model: Option<&Trained>) -> Outcome {
    let m = model.ok_or("no trained model (criterion 4 could not train)")?;
    let classes: Vec<usize> = (0..10).collect();
    let minis = mininet::prune_classes(&m.net, &classes, &m.train).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random: Vec<Vec<bool>> = (0..10_000)
        .map(|_| (0..m.net.input_dim()).map(|_| rng.random_bool(0.5)).collect())
        .collect();
    let parent_scores = m.net.scores_hard_batch(&random).unwrap();
    let reports = mininet::benchmark(&m.net, &minis, &m.test, 30).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for (mini, r) in minis.iter().zip(&reports) {
        let c = mini.class_id;
        let scores = mini.scores_batch(&random).unwrap();
        let mismatches = (0..random.len()).filter(|&i| scores[i] != parent_scores[i][c]).count();
        let size = r.prune.size_change();
        let gap = r.prune.mini.accuracy - r.prune.parent.accuracy;
        lines.push(format!(
            "c{c}: size {size:.1}% time {:.1}% acc {:.3} vs {:.3}",
            r.time_change(),
            r.prune.mini.accuracy,
            r.prune.parent.accuracy
        ));
        if size > -80.0 {
            failed.push(format!("class {c} (a) size {size:.1}%"));
        }
        if mismatches > 0 {
            failed.push(format!("class {c} (b) {mismatches} score mismatches"));
        }
        if r.mini_ns >= r.parent_ns {
            failed.push(format!("class {c} (c) no time reduction"));
        }
        if gap.abs() > 0.06 {
            failed.push(format!("class {c} (d) accuracy gap {gap:.3}"));
        }
    }
    let detail = lines.join("; ");
    if failed.is_empty() {
        Ok(format!("10 classes, 10^4 random inputs each: {detail}"))
    } else {
        Err(format!("{detail}; failed: {}", failed.join(", ")))
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut worst_fine = 0.0f64;
    let mut nets = 0;
    while nets < 20 {
        let inputs = rng.random_range(2..=10);
        let depth = rng.random_range(1..=4);
        let net = random_hard_net(&mut rng, inputs, depth, 2, 3);
        let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(0.0..1.0)).collect();
        let baseline = vec![0.0; inputs];
        let class = rng.random_range(0..2);
        let diff = net.forward_soft(&x).unwrap().scores[class] - net.forward_soft(&baseline).unwrap().scores[class];
        // A zero score difference has no relative error to speak of.
        if diff.abs() < 1e-9 {
            continue;
        }
        let ig = integrated_gradients(&net, &x, class, &baseline, 200).unwrap();
        let total: f64 = ig.values.iter().sum();
        worst = worst.max((total - diff).abs() / diff.abs());
        // Same check with 10x the steps: a correct right-endpoint sum
        // shrinks its error by 10x.
        let fine: f64 = integrated_gradients(&net, &x, class, &baseline, 2000).unwrap().values.iter().sum();
        worst_fine = worst_fine.max((fine - diff).abs() / diff.abs());
        nets += 1;
    }
    let detail = format!(
        "20 nets, 200 steps: max |sum IG - score diff| / |score diff| = {:.3}% (limit 1%); at 2000 steps {:.4}%",
        100.0 * worst,
        100.0 * worst_fine
    );
    if worst <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_logicnet"))
        .args(args)
        .env("LOGICNET_THREADS", "1")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`logicnet {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Relative path -> bytes for every non-manifest file under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with("manifest.toml") {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Drops the wall-clock columns of a bench CSV.
fn bench_deterministic(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            [0, 2, 3, 4, 5, 6, 7].map(|i| cols[i]).join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn pipeline(root: &Path, data_dir: &str) -> Result<(String, String), String> {
    let cfg = root.join("cfg.toml");
    std::fs::write(
        &cfg,
        "[train]\nlayers = [120, 120]\nepochs = 2\nlimit = 2000\n[switchdist]\nmax_samples = 15\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let common = ["--config", cfg, "--data-dir", data_dir, "--seed", "11"];
    let with = |cmd: &[&str]| -> Vec<String> {
        cmd.iter().chain(common.iter()).map(|s| s.to_string()).collect()
    };
    let call = |args: Vec<String>| run_cli(&args.iter().map(String::as_str).collect::<Vec<_>>());
    call(with(&["train", "--out", &p("run")]))?;
    let model = p("run/model.txt");
    run_cli(&["discretize", "--model", &p("run/model_soft.txt"), "--out", &p("disc/model.txt")])?;
    call(with(&["explain", "--model", &model, "--variant", "L_E", "--sample", "0", "--out", &p("explain")]))?;
    call(with(&["explain", "--model", &model, "--variant", "C_A", "--class", "3", "--out", &p("explain")]))?;
    call(with(&["explain", "--model", &model, "--variant", "G_null", "--class", "1", "--out", &p("explain")]))?;
    call(with(&[
        "eval-switchdist",
        "--model",
        &model,
        "--methods",
        "random,vg,ig,L_E,G_U,C_E",
        "--out",
        &p("switch"),
    ]))?;
    call(with(&["prune", "--model", &model, "--out", &p("prune")]))?;
    call(with(&["bench", "--model", &model, "--class", "2", "--reps", "30", "--out", &p("bench")]))?;
    let inspect = run_cli(&["inspect", "--model", &p("prune/mini_class4.txt")])?;
    let bench = std::fs::read_to_string(root.join("bench/bench.csv")).unwrap();
    std::fs::remove_dir_all(root.join("bench")).unwrap();
    Ok((inspect, bench_deterministic(&bench)))
}

fn criterion_9() -> Outcome {
    let dir = mnist_dir();
    if !dir.join(data::TRAIN_IMAGES).exists() {
        return Err(format!("MNIST not found in {}", dir.display()));
    }
    let data_dir = dir.to_string_lossy().into_owned();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let (inspect_a, bench_a) = pipeline(&a, &data_dir)?;
    let (inspect_b, bench_b) = pipeline(&b, &data_dir)?;
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let mut differing: Vec<String> = sa
        .iter()
        .filter(|(k, v)| sb.get(*k) != Some(*v))
        .map(|(k, _)| k.clone())
        .collect();
    differing.extend(sb.keys().filter(|k| !sa.contains_key(*k)).cloned());
    if inspect_a != inspect_b {
        differing.push("inspect stdout".into());
    }
    if bench_a != bench_b {
        differing.push("bench deterministic columns".into());
    }
    if sa.get("disc/model.txt") != sa.get("run/model.txt") {
        differing.push("discretize output differs from train's discretized model".into());
    }
    let detail = format!(
        "train, discretize, explain x3, eval-switchdist, prune, bench, inspect run twice: {} artifacts compared",
        sa.len()
    );
    if differing.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; differing: {}", differing.join(", ")))
    }
}

fn main() {
    let mut results = Vec::new();
    let mut record = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n} {tag} [{name}] {detail} ({:.1?})", start.elapsed());
        results.push(outcome.is_ok());
    };
    let mut model = None;
    record(1, "gate semantics", &mut criterion_1);
    record(2, "gradient correctness", &mut criterion_2);
    record(3, "SP_A oracle equivalence", &mut criterion_3);
    record(4, "training", &mut || criterion_4(&mut model));
    record(5, "explanation soundness", &mut criterion_5);
    record(6, "SwitchDist ordering", &mut || criterion_6(model.as_ref()));
    record(7, "MiniNet", &mut || criterion_7(model.as_ref()));
    record(8, "IG completeness", &mut criterion_8);
    record(9, "reproducibility", &mut criterion_9);
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
