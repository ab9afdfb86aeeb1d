//! Single-class networks cut from a class's structural fan-in cone.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::format::{self, MiniMeta};
use crate::gate::{Dependence, GateType, Port};
use crate::network::{pack_lanes, Layer, LayerGates, LogicNetwork, Wire};

/// `cone[layer][node]` is true for nodes the class group reads through live
/// ports. Constant gates end the traversal; pass-through gates follow only
/// their live port.
pub fn fanin_cone(net: &LogicNetwork, class: usize) -> Result<Vec<Vec<bool>>> {
    net.require_hard()?;
    let group = net.group_range(class)?;
    let layers = net.layers();
    let mut cone: Vec<Vec<bool>> = layers.iter().map(|l| vec![false; l.width()]).collect();
    let last = layers.len() - 1;
    for i in group {
        cone[last][i] = true;
    }
    for li in (1..layers.len()).rev() {
        let layer = &layers[li];
        let (upper, lower) = cone.split_at_mut(li);
        for (node, _) in lower[0].iter().enumerate().filter(|(_, k)| **k) {
            let gate = layer.gate(node).expect("hard layer");
            for port in [Port::A, Port::B] {
                if gate.dependence(port) != Dependence::Ignored {
                    upper[li - 1][layer.wires[node].port(port)] = true;
                }
            }
        }
    }
    Ok(cone)
}

pub fn cone_size(cone: &[Vec<bool>]) -> usize {
    cone.iter().flatten().filter(|k| **k).count()
}

/// A pruned single-class network with its decision threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniNet {
    /// One class whose score equals the parent's score for `class_id`.
    pub network: LogicNetwork,
    pub class_id: usize,
    /// Positive when the score is at least this value.
    pub threshold: f64,
    /// `remap[layer][mini index]` is the parent index; `None` marks a filler
    /// node that keeps an otherwise empty layer well formed.
    pub remap: Vec<Vec<Option<usize>>>,
    pub parent_hash: String,
}

impl MiniNet {
    pub fn score(&self, x: &[bool]) -> Result<u32> {
        Ok(self.network.forward_hard(x)?.scores[0])
    }

    pub fn scores_batch(&self, samples: &[Vec<bool>]) -> Result<Vec<u32>> {
        Ok(self
            .network
            .scores_hard_batch(samples)?
            .into_iter()
            .map(|s| s[0])
            .collect())
    }

    pub fn predict(&self, x: &[bool]) -> Result<bool> {
        Ok(f64::from(self.score(x)?) >= self.threshold)
    }

    pub fn gate_count(&self) -> usize {
        self.network.gate_count()
    }

    pub fn meta(&self) -> MiniMeta {
        MiniMeta {
            class_id: self.class_id,
            threshold: self.threshold,
            parent_hash: self.parent_hash.clone(),
            remap: self.remap.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        format::write_document(&self.network, Some(&self.meta()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<MiniNet> {
        let doc = format::load_document(path)?;
        let meta = doc.mini.ok_or_else(|| Error::ModelFormat {
            line: 0,
            message: "not a MiniNet file (no mini_class field)".into(),
        })?;
        Ok(MiniNet {
            network: doc.network,
            class_id: meta.class_id,
            threshold: meta.threshold,
            remap: meta.remap,
            parent_hash: meta.parent_hash,
        })
    }
}

/// Compacts the cone of `class` into a network with a single output group.
/// The threshold is left at zero; see [`fit_threshold`].
pub fn build_mininet(net: &LogicNetwork, class: usize) -> Result<MiniNet> {
    let cone = fanin_cone(net, class)?;
    let parent_layers = net.layers();
    let mut remap: Vec<Vec<Option<usize>>> = Vec::with_capacity(cone.len());
    let mut layers = Vec::with_capacity(cone.len());
    // Parent index -> mini index for the previous layer.
    let mut prev_index: Vec<Option<usize>> = Vec::new();
    for (li, keep) in cone.iter().enumerate() {
        let parent = &parent_layers[li];
        let kept: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
        let LayerGates::Hard(parent_gates) = &parent.gates else {
            unreachable!("hard checked by fanin_cone")
        };
        let map_source = |port_source: usize, gate: GateType, port: Port| -> usize {
            if gate.dependence(port) == Dependence::Ignored {
                return 0;
            }
            if li == 0 {
                port_source
            } else {
                prev_index[port_source].expect("live predecessor is in the cone")
            }
        };
        let (wires, gates, ids) = if kept.is_empty() {
            (vec![Wire::new(0, 0)], vec![GateType::FALSE], vec![None])
        } else {
            let mut wires = Vec::with_capacity(kept.len());
            let mut gates = Vec::with_capacity(kept.len());
            for &i in &kept {
                let g = parent_gates[i];
                let w = parent.wires[i];
                wires.push(Wire::new(map_source(w.a, g, Port::A), map_source(w.b, g, Port::B)));
                gates.push(g);
            }
            (wires, gates, kept.iter().map(|&i| Some(i)).collect())
        };
        let mut index = vec![None; keep.len()];
        for (mini, &i) in kept.iter().enumerate() {
            index[i] = Some(mini);
        }
        prev_index = index;
        layers.push(Layer::hard(wires, gates));
        remap.push(ids);
    }
    let network = LogicNetwork::new(net.input_dim(), 1, net.group_size(), net.tau(), layers)?;
    Ok(MiniNet {
        network,
        class_id: class,
        threshold: 0.0,
        remap,
        parent_hash: format::model_hash(net),
    })
}

/// Gaussian fit summary of one side of the one-vs-all split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreGaussian {
    pub mean: f64,
    pub variance: f64,
    pub prior: f64,
}

fn gaussian(scores: &[f64], total: usize) -> Option<ScoreGaussian> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let variance = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Some(ScoreGaussian {
        mean,
        variance,
        prior: n / total as f64,
    })
}

/// Scores where the prior-weighted densities cross, ascending. Empty when
/// the fit is degenerate or the densities never cross.
pub fn gaussian_crossings(pos: ScoreGaussian, neg: ScoreGaussian) -> Vec<f64> {
    if pos.variance <= 0.0 || neg.variance <= 0.0 {
        return Vec::new();
    }
    let (mp, vp, mn, vn) = (pos.mean, pos.variance, neg.mean, neg.variance);
    let a = 1.0 / (2.0 * vn) - 1.0 / (2.0 * vp);
    let b = mp / vp - mn / vn;
    let c = mn * mn / (2.0 * vn) - mp * mp / (2.0 * vp)
        + (pos.prior / neg.prior).ln()
        + 0.5 * (vn / vp).ln();
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    if a.abs() <= 1e-12 * scale {
        // Equal variances: a single crossing, the midpoint under equal priors.
        return if b == 0.0 { Vec::new() } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let mut roots = vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
    roots.sort_by(f64::total_cmp);
    roots
}

fn accuracy_at(scores: &[u32], positive: &[bool], threshold: f64) -> usize {
    scores
        .iter()
        .zip(positive)
        .filter(|(s, p)| (f64::from(**s) >= threshold) == **p)
        .count()
}

/// Integer threshold with the best one-vs-all accuracy, lowest on ties.
pub fn sweep_threshold(scores: &[u32], positive: &[bool], max_score: u32) -> f64 {
    let mut best = (0usize, 0u32);
    for t in 0..=max_score + 1 {
        let correct = scores
            .iter()
            .zip(positive)
            .filter(|(s, p)| (**s >= t) == **p)
            .count();
        if correct > best.0 {
            best = (correct, t);
        }
    }
    f64::from(best.1)
}

/// Fits the decision threshold of `mini` on `train` relabelled as its class
/// versus the rest, and stores it.
pub fn fit_threshold(mini: &mut MiniNet, train: &Dataset) -> Result<f64> {
    let scores = mini.scores_batch(&train.images)?;
    let positive: Vec<bool> = train.labels.iter().map(|&l| l == mini.class_id).collect();
    let threshold = threshold_from_scores(&scores, &positive, mini.network.group_size() as u32)?;
    mini.threshold = threshold;
    Ok(threshold)
}

pub fn threshold_from_scores(scores: &[u32], positive: &[bool], max_score: u32) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, p)| **p)
        .map(|(s, _)| f64::from(*s))
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, p)| !**p)
        .map(|(s, _)| f64::from(*s))
        .collect();
    if pos.is_empty() {
        return Err(Error::Empty("no positive training samples for this class".into()));
    }
    let roots = match (gaussian(&pos, scores.len()), gaussian(&neg, scores.len())) {
        (Some(p), Some(n)) => gaussian_crossings(p, n),
        _ => Vec::new(),
    };
    // A score threshold can only realise one crossing; keep the one that
    // separates the training data best, the smaller on ties.
    let mut best: Option<(usize, f64)> = None;
    for r in roots {
        let acc = accuracy_at(scores, positive, r);
        if best.is_none_or(|(b, _)| acc > b) {
            best = Some((acc, r));
        }
    }
    Ok(match best {
        Some((_, r)) => r,
        None => sweep_threshold(scores, positive, max_score),
    })
}

/// One-vs-all confusion summary.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BinaryMetrics {
    /// Undefined ratios are reported as zero.
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> BinaryMetrics {
        let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => tn += 1,
            }
        }
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BinaryMetrics {
            accuracy: ratio(tp + tn, predicted.len()),
            precision,
            recall,
            f1,
        }
    }
}

/// Deterministic per-class comparison of a MiniNet against its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    pub class_id: usize,
    pub parent_gates: usize,
    pub mini_gates: usize,
    pub threshold: f64,
    pub mini: BinaryMetrics,
    /// The parent's argmax read as class-versus-rest.
    pub parent: BinaryMetrics,
}

impl PruneReport {
    /// Percentage change in gate count (negative is smaller).
    pub fn size_change(&self) -> f64 {
        100.0 * (self.mini_gates as f64 - self.parent_gates as f64) / self.parent_gates as f64
    }
}

pub fn prune_report(parent: &LogicNetwork, mini: &MiniNet, test: &Dataset) -> Result<PruneReport> {
    let actual: Vec<bool> = test.labels.iter().map(|&l| l == mini.class_id).collect();
    let mini_pred: Vec<bool> = mini
        .scores_batch(&test.images)?
        .iter()
        .map(|&s| f64::from(s) >= mini.threshold)
        .collect();
    let parent_pred: Vec<bool> = parent
        .predict_hard_batch(&test.images)?
        .iter()
        .map(|&c| c == mini.class_id)
        .collect();
    Ok(PruneReport {
        class_id: mini.class_id,
        parent_gates: parent.gate_count(),
        mini_gates: mini.gate_count(),
        threshold: mini.threshold,
        mini: BinaryMetrics::from_predictions(&mini_pred, &actual),
        parent: BinaryMetrics::from_predictions(&parent_pred, &actual),
    })
}

pub fn prune_csv(reports: &[PruneReport]) -> String {
    let mut s = String::from(
        "class,%size,acc,prec,recall,f1,threshold,mini_gates,parent_gates,parent_acc\n",
    );
    for r in reports {
        writeln!(
            s,
            "{},{:.2},{:.4},{:.4},{:.4},{:.4},{:.6},{},{},{:.4}",
            r.class_id,
            r.size_change(),
            r.mini.accuracy,
            r.mini.precision,
            r.mini.recall,
            r.mini.f1,
            r.threshold,
            r.mini_gates,
            r.parent_gates,
            r.parent.accuracy
        )
        .unwrap();
    }
    s
}

/// Prunes and fits every requested class.
pub fn prune_classes(parent: &LogicNetwork, classes: &[usize], train: &Dataset) -> Result<Vec<MiniNet>> {
    classes
        .iter()
        .map(|&c| {
            let mut mini = build_mininet(parent, c)?;
            fit_threshold(&mut mini, train)?;
            Ok(mini)
        })
        .collect()
}

/// Samples packed 64 per word, ready for repeated timing.
struct PackedBatch {
    chunks: Vec<(Vec<u64>, usize)>,
    samples: usize,
}

impl PackedBatch {
    fn new(samples: &[Vec<bool>], dim: usize) -> Self {
        PackedBatch {
            chunks: samples
                .chunks(64)
                .map(|c| (pack_lanes(c, dim), c.len()))
                .collect(),
            samples: samples.len(),
        }
    }
}

/// Single-threaded time per sample in nanoseconds for scoring `batch`.
fn time_per_sample(net: &LogicNetwork, batch: &PackedBatch) -> f64 {
    let start = Instant::now();
    let mut sink = 0u64;
    for (words, lanes) in &batch.chunks {
        let layers = net.eval_packed(words).expect("validated");
        let scores = net.scores_from_words(layers.last().expect("non-empty"), *lanes);
        sink = sink.wrapping_add(u64::from(scores[0][0]));
    }
    std::hint::black_box(sink);
    start.elapsed().as_nanos() as f64 / batch.samples as f64
}

/// Wall-clock comparison of one MiniNet against its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub prune: PruneReport,
    pub parent_ns: f64,
    pub mini_ns: f64,
    pub repetitions: usize,
}

impl BenchReport {
    /// Percentage change in median per-sample time (negative is faster).
    pub fn time_change(&self) -> f64 {
        100.0 * (self.mini_ns - self.parent_ns) / self.parent_ns
    }

    /// Percentage change in gate evaluations per sample.
    pub fn gate_eval_change(&self) -> f64 {
        self.prune.size_change()
    }
}

pub fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub const MIN_REPETITIONS: usize = 30;

/// Median-of-repetitions timing of the parent's full forward pass against
/// each MiniNet on `test`, plus the deterministic metrics.
pub fn benchmark(
    parent: &LogicNetwork,
    minis: &[MiniNet],
    test: &Dataset,
    repetitions: usize,
) -> Result<Vec<BenchReport>> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::Config(format!(
            "benchmark needs at least {MIN_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    if test.is_empty() {
        return Err(Error::Empty("benchmark data".into()));
    }
    parent.require_hard()?;
    let batch = PackedBatch::new(&test.images, parent.input_dim());
    // Warm-up.
    time_per_sample(parent, &batch);
    minis.iter().for_each(|m| {
        time_per_sample(&m.network, &batch);
    });
    let mut reports = Vec::with_capacity(minis.len());
    for mini in minis {
        let mut parent_t = Vec::with_capacity(repetitions);
        let mut mini_t = Vec::with_capacity(repetitions);
        // Interleave so drift affects both sides alike.
        for _ in 0..repetitions {
            parent_t.push(time_per_sample(parent, &batch));
            mini_t.push(time_per_sample(&mini.network, &batch));
        }
        reports.push(BenchReport {
            prune: prune_report(parent, mini, test)?,
            parent_ns: median_of(parent_t),
            mini_ns: median_of(mini_t),
            repetitions,
        });
    }
    Ok(reports)
}

pub fn bench_csv(reports: &[BenchReport]) -> String {
    let mut s = String::from(
        "class,%time,%size,acc,prec,recall,f1,%gate_evals,parent_ns,mini_ns,repetitions\n",
    );
    for r in reports {
        let p = &r.prune;
        writeln!(
            s,
            "{},{:.2},{:.2},{:.4},{:.4},{:.4},{:.4},{:.2},{:.1},{:.1},{}",
            p.class_id,
            r.time_change(),
            p.size_change(),
            p.mini.accuracy,
            p.mini.precision,
            p.mini.recall,
            p.mini.f1,
            r.gate_eval_change(),
            r.parent_ns,
            r.mini_ns,
            r.repetitions
        )
        .unwrap();
    }
    s
}
