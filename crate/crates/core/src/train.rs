//! Relaxed training of gate mixtures and discretization.
//!
//! Each soft node outputs `Σ_g softmax(logits)_g · P_g(a, b)`. Every gate
//! formula is bilinear in `(a, b)`, so the mixture collapses to four
//! coefficients per node and a batch forward pass costs a handful of
//! multiply-adds per node and sample. Class scores are group sums and the
//! loss is cross-entropy over `softmax(scores / tau)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gate::GateType;
use crate::network::{argmax, softmax16, Layer, LayerGates, LogicNetwork, Mode, Wire};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub layers: Vec<usize>,
    pub learning_rate: f64,
    pub tau: f64,
    pub grad_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Scale of the normal logit initialization.
    pub init_scale: f64,
    pub split_ratio: f64,
    /// Optional cap on the number of samples read before splitting.
    pub limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: vec![2500, 2500],
            learning_rate: 0.01,
            tau: 10.0,
            grad_factor: 1.0,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_scale: 0.1,
            split_ratio: 0.8,
            limit: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers.is_empty() || self.layers.contains(&0) {
            return bad(format!("layer widths must be positive: {:?}", self.layers));
        }
        let last = *self.layers.last().unwrap();
        if class_count == 0 || last % class_count != 0 {
            return bad(format!(
                "final width {last} is not divisible by {class_count} classes"
            ));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        Ok(())
    }
}

/// Builds a soft network with random wiring and small random logits.
pub fn init_network(
    config: &TrainConfig,
    input_dim: usize,
    class_count: usize,
    seed: u64,
) -> Result<LogicNetwork> {
    config.validate(class_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = input_dim;
    let mut layers = Vec::with_capacity(config.layers.len());
    for &width in &config.layers {
        if prev < 2 {
            return Err(Error::Config(format!("layer input width {prev} < 2")));
        }
        let wires = (0..width)
            .map(|_| {
                let a = rng.random_range(0..prev);
                // Uniform over the other prev - 1 indices.
                let mut b = rng.random_range(0..prev - 1);
                if b >= a {
                    b += 1;
                }
                Wire::new(a, b)
            })
            .collect();
        let logits = (0..width)
            .map(|_| {
                let mut l = [0.0; 16];
                for v in &mut l {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * config.init_scale;
                }
                l
            })
            .collect();
        layers.push(Layer::soft(wires, logits));
        prev = width;
    }
    let group_size = prev / class_count;
    LogicNetwork::new(input_dim, class_count, group_size, config.tau, layers)
}

/// Replaces every gate mixture by its most likely gate (lowest id on ties).
pub fn discretize(net: &LogicNetwork) -> LogicNetwork {
    let layers = net
        .layers()
        .iter()
        .map(|layer| match &layer.gates {
            LayerGates::Hard(_) => layer.clone(),
            LayerGates::Soft(logits) => Layer::hard(
                layer.wires.clone(),
                logits
                    .iter()
                    .map(|l| GateType::ALL[argmax(l)])
                    .collect(),
            ),
        })
        .collect();
    LogicNetwork::new(
        net.input_dim(),
        net.class_count(),
        net.group_size(),
        net.tau(),
        layers,
    )
    .expect("wiring unchanged")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Accuracy of the discretized network on the test split.
    pub final_test_acc: Option<f64>,
    /// Accuracy of the soft mixture network on the test split.
    pub final_soft_test_acc: Option<f64>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_acc,test_acc\n");
        for e in &self.epochs {
            let test = e.test_acc.map_or(String::new(), |a| format!("{a:.6}"));
            s.push_str(&format!("{},{:.8},{:.6},{}\n", e.epoch, e.loss, e.train_acc, test));
        }
        s
    }
}

/// Gradient of the mean batch loss with respect to every node's logits.
pub struct LogitGradient {
    pub loss: f64,
    pub correct: usize,
    pub layers: Vec<Vec<[f64; 16]>>,
}

/// Batched node-major workspace. Row `n` of a layer buffer holds node `n`
/// for every sample in the batch.
struct Workspace {
    batch: usize,
    inputs: Vec<f64>,
    acts: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    weights: Vec<Vec<[f64; 16]>>,
    coeffs: Vec<Vec<[f64; 4]>>,
    da: Vec<f64>,
    db: Vec<f64>,
}

impl Workspace {
    fn new(net: &LogicNetwork, batch: usize) -> Self {
        let widths: Vec<usize> = net.layers().iter().map(Layer::width).collect();
        Workspace {
            batch,
            inputs: vec![0.0; net.input_dim() * batch],
            acts: widths.iter().map(|&w| vec![0.0; w * batch]).collect(),
            grads: widths.iter().map(|&w| vec![0.0; w * batch]).collect(),
            weights: widths.iter().map(|&w| vec![[0.0; 16]; w]).collect(),
            coeffs: widths.iter().map(|&w| vec![[0.0; 4]; w]).collect(),
            da: vec![0.0; batch],
            db: vec![0.0; batch],
        }
    }

    fn load_inputs(&mut self, samples: &[&[bool]], dim: usize) {
        let b = self.batch;
        for (k, s) in samples.iter().enumerate() {
            for i in 0..dim {
                self.inputs[i * b + k] = f64::from(u8::from(s[i]));
            }
        }
    }

    fn refresh_mixtures(&mut self, net: &LogicNetwork) {
        for (li, layer) in net.layers().iter().enumerate() {
            let LayerGates::Soft(logits) = &layer.gates else {
                unreachable!("training requires a soft network")
            };
            for (n, l) in logits.iter().enumerate() {
                let w = softmax16(l);
                self.coeffs[li][n] = crate::network::mixture_coefficients(&w);
                self.weights[li][n] = w;
            }
        }
    }

    fn forward(&mut self, net: &LogicNetwork) {
        let b = self.batch;
        for (li, layer) in net.layers().iter().enumerate() {
            let (before, rest) = self.acts.split_at_mut(li);
            let prev: &[f64] = if li == 0 { &self.inputs } else { &before[li - 1] };
            let cur = &mut rest[0];
            for (n, (w, c)) in layer.wires.iter().zip(&self.coeffs[li]).enumerate() {
                let [c0, ca, cb, cab] = *c;
                let a = &prev[w.a * b..w.a * b + b];
                let bb = &prev[w.b * b..w.b * b + b];
                let out = &mut cur[n * b..n * b + b];
                for k in 0..b {
                    out[k] = c0 + ca * a[k] + cb * bb[k] + cab * a[k] * bb[k];
                }
            }
        }
    }

    /// Loss and output-layer gradient. Returns (summed loss, correct count).
    fn loss_head(&mut self, net: &LogicNetwork, labels: &[usize], scale: f64) -> (f64, usize) {
        let b = self.batch;
        let classes = net.class_count();
        let group = net.group_size();
        let last = net.depth() - 1;
        let tau = net.tau();
        let mut loss = 0.0;
        let mut correct = 0;
        let mut scores = vec![0.0; classes];
        let grad = &mut self.grads[last];
        for (k, &label) in labels.iter().enumerate() {
            for (c, s) in scores.iter_mut().enumerate() {
                *s = (c * group..(c + 1) * group)
                    .map(|n| self.acts[last][n * b + k])
                    .sum();
            }
            if argmax(&scores) == label {
                correct += 1;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
            let total: f64 = exps.iter().sum();
            loss += total.ln() - (scores[label] - max) / tau;
            for (c, e) in exps.iter().enumerate() {
                let target = if c == label { 1.0 } else { 0.0 };
                let g = (e / total - target) / tau * scale;
                for n in c * group..(c + 1) * group {
                    grad[n * b + k] = g;
                }
            }
        }
        (loss, correct)
    }

    /// Backpropagates from the output gradient; returns per-node logit gradients.
    fn backward(&mut self, net: &LogicNetwork, grad_factor: f64) -> Vec<Vec<[f64; 16]>> {
        let b = self.batch;
        let mut out: Vec<Vec<[f64; 16]>> = Vec::with_capacity(net.depth());
        for li in (0..net.depth()).rev() {
            let layer = &net.layers()[li];
            if grad_factor != 1.0 {
                for g in &mut self.grads[li] {
                    *g *= grad_factor;
                }
            }
            let (lower, upper) = self.grads.split_at_mut(li);
            let grad = &upper[0];
            let prev: &[f64] = if li == 0 { &self.inputs } else { &self.acts[li - 1] };
            let mut prev_grad = if li == 0 {
                None
            } else {
                let pg = &mut lower[li - 1];
                pg.iter_mut().for_each(|v| *v = 0.0);
                Some(pg)
            };
            let mut layer_grad = Vec::with_capacity(layer.width());
            for (n, w) in layer.wires.iter().enumerate() {
                let [_, ca, cb, cab] = self.coeffs[li][n];
                let g = &grad[n * b..n * b + b];
                let a = &prev[w.a * b..w.a * b + b];
                let bb = &prev[w.b * b..w.b * b + b];
                let mut dc = [0.0; 4];
                for k in 0..b {
                    let gk = g[k];
                    let ab = a[k] * bb[k];
                    dc[0] += gk;
                    dc[1] += gk * a[k];
                    dc[2] += gk * bb[k];
                    dc[3] += gk * ab;
                }
                if let Some(pg) = prev_grad.as_deref_mut() {
                    for k in 0..b {
                        self.da[k] = g[k] * (ca + cab * bb[k]);
                        self.db[k] = g[k] * (cb + cab * a[k]);
                    }
                    for (dst, v) in pg[w.a * b..w.a * b + b].iter_mut().zip(&self.da) {
                        *dst += v;
                    }
                    for (dst, v) in pg[w.b * b..w.b * b + b].iter_mut().zip(&self.db) {
                        *dst += v;
                    }
                }
                // dL/dw_g, then through the softmax.
                let weights = &self.weights[li][n];
                let mut dw = [0.0; 16];
                let mut mean = 0.0;
                for (gi, gate) in GateType::ALL.iter().enumerate() {
                    let coef = gate.coefficients();
                    dw[gi] = dc[0] * coef[0] + dc[1] * coef[1] + dc[2] * coef[2] + dc[3] * coef[3];
                    mean += weights[gi] * dw[gi];
                }
                let mut dl = [0.0; 16];
                for gi in 0..16 {
                    dl[gi] = weights[gi] * (dw[gi] - mean);
                }
                layer_grad.push(dl);
            }
            out.push(layer_grad);
        }
        out.reverse();
        out
    }
}

fn require_soft(net: &LogicNetwork) -> Result<()> {
    if net.mode() == Mode::Soft {
        Ok(())
    } else {
        Err(Error::WrongMode {
            expected: "soft",
            actual: "hard",
        })
    }
}

/// Mean cross-entropy loss over a batch and its exact logit gradient.
pub fn logit_gradient(
    net: &LogicNetwork,
    samples: &[&[bool]],
    labels: &[usize],
    grad_factor: f64,
) -> Result<LogitGradient> {
    require_soft(net)?;
    if samples.len() != labels.len() || samples.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            actual: labels.len(),
        });
    }
    for &l in labels {
        net.check_class(l)?;
    }
    let mut ws = Workspace::new(net, samples.len());
    ws.refresh_mixtures(net);
    ws.load_inputs(samples, net.input_dim());
    ws.forward(net);
    let scale = 1.0 / samples.len() as f64;
    let (loss, correct) = ws.loss_head(net, labels, scale);
    let layers = ws.backward(net, grad_factor);
    Ok(LogitGradient {
        loss: loss * scale,
        correct,
        layers,
    })
}

/// Mean cross-entropy of `softmax(scores / tau)` using the plain soft forward pass.
pub fn mean_loss(net: &LogicNetwork, samples: &[&[bool]], labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (s, &label) in samples.iter().zip(labels) {
        let p: Vec<f64> = s.iter().map(|&b| f64::from(u8::from(b))).collect();
        let scores = net.forward_soft(&p)?.scores;
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| ((s - max) / net.tau()).exp()).sum();
        total += z.ln() - (scores[label] - max) / net.tau();
    }
    Ok(total / samples.len() as f64)
}

struct Adam {
    m: Vec<Vec<[f64; 16]>>,
    v: Vec<Vec<[f64; 16]>>,
    step: i32,
}

impl Adam {
    fn new(net: &LogicNetwork) -> Self {
        let zeros: Vec<Vec<[f64; 16]>> = net
            .layers()
            .iter()
            .map(|l| vec![[0.0; 16]; l.width()])
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn apply(&mut self, net: &mut LogicNetwork, grads: &[Vec<[f64; 16]>], cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            let LayerGates::Soft(logits) = &mut layer.gates else {
                unreachable!("checked soft")
            };
            for (n, l) in logits.iter_mut().enumerate() {
                for g in 0..16 {
                    let grad = grads[li][n][g];
                    let m = &mut self.m[li][n][g];
                    let v = &mut self.v[li][n][g];
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * grad;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * grad * grad;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
                    l[g] -= cfg.learning_rate * update;
                }
            }
        }
    }
}

/// Fraction of samples the discretized network classifies correctly.
pub fn hard_accuracy(net: &LogicNetwork, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("accuracy of an empty dataset".into()));
    }
    let preds = net.predict_hard_batch(&data.images)?;
    let correct = preds.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Fraction classified correctly by the soft (mixture) forward pass on binary inputs.
pub fn soft_accuracy(net: &LogicNetwork, data: &Dataset, batch: usize) -> Result<f64> {
    require_soft(net)?;
    if data.is_empty() {
        return Err(Error::Empty("accuracy of an empty dataset".into()));
    }
    let mut correct = 0;
    for (imgs, labels) in data.images.chunks(batch).zip(data.labels.chunks(batch)) {
        let refs: Vec<&[bool]> = imgs.iter().map(Vec::as_slice).collect();
        let mut ws = Workspace::new(net, refs.len());
        ws.refresh_mixtures(net);
        ws.load_inputs(&refs, net.input_dim());
        ws.forward(net);
        correct += ws.loss_head(net, labels, 0.0).1;
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch Adam on the relaxed network. Only logits change.
pub fn train(
    net: &mut LogicNetwork,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_with_progress(net, train_data, test_data, config, |_| {})
}

pub fn train_with_progress(
    net: &mut LogicNetwork,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    require_soft(net)?;
    config.validate(net.class_count())?;
    if train_data.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    for &l in &train_data.labels {
        net.check_class(l)?;
    }
    let mut adam = Adam::new(net);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut ws = Workspace::new(net, config.batch_size);
    for epoch in 0..config.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() != ws.batch {
                ws = Workspace::new(net, chunk.len());
            }
            let samples: Vec<&[bool]> = chunk
                .iter()
                .map(|&i| train_data.images[i].as_slice())
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_data.labels[i]).collect();
            ws.refresh_mixtures(net);
            ws.load_inputs(&samples, net.input_dim());
            ws.forward(net);
            let (loss, ok) = ws.loss_head(net, &labels, 1.0 / chunk.len() as f64);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += loss;
            correct += ok;
            let grads = ws.backward(net, config.grad_factor);
            adam.apply(net, &grads, config);
        }
        let test_acc = match test_data {
            Some(t) if !t.is_empty() => Some(hard_accuracy(&discretize(net), t)?),
            _ => None,
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / train_data.len() as f64,
            train_acc: correct as f64 / train_data.len() as f64,
            test_acc,
        };
        progress(&stats);
        epochs.push(stats);
    }
    let (final_test_acc, final_soft_test_acc) = match test_data {
        Some(t) if !t.is_empty() => (
            Some(hard_accuracy(&discretize(net), t)?),
            Some(soft_accuracy(net, t, 256)?),
        ),
        _ => (None, None),
    };
    Ok(TrainReport {
        epochs,
        final_test_acc,
        final_soft_test_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;

    fn small_config(layers: Vec<usize>) -> TrainConfig {
        TrainConfig {
            layers,
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let cfg = TrainConfig::default();
        let net = init_network(&cfg, 400, 10, 3).unwrap();
        assert_eq!(net.group_size(), 250);
        assert_eq!(net.gate_count(), 5000);
        assert_eq!(net, init_network(&cfg, 400, 10, 3).unwrap());
        assert!(net
            .layers()
            .iter()
            .all(|l| l.wires.iter().all(|w| w.a != w.b)));
        let bad = TrainConfig {
            layers: vec![2500, 2501],
            ..cfg
        };
        assert!(matches!(init_network(&bad, 400, 10, 3), Err(Error::Config(_))));
    }

    #[test]
    fn discretize_picks_argmax() {
        let mut nand = [0.0; 16];
        nand[14] = 1.0;
        let mut tie = [0.0; 16];
        tie[3] = 2.0;
        tie[9] = 2.0;
        let layer = Layer::soft(vec![Wire::new(0, 1), Wire::new(1, 0)], vec![nand, tie]);
        let net = LogicNetwork::new(2, 1, 2, 1.0, vec![layer]).unwrap();
        let hard = discretize(&net);
        assert_eq!(hard.layers()[0].gate(0), Some(GateType::NAND));
        assert_eq!(hard.layers()[0].gate(1), Some(GateType::A));
        assert_eq!(discretize(&hard), hard);
        assert_eq!(hard.layers()[0].wires, net.layers()[0].wires);
    }

    fn xor_data() -> Dataset {
        let images = vec![
            vec![false, false],
            vec![false, true],
            vec![true, false],
            vec![true, true],
        ];
        let labels = images.iter().map(|x| usize::from(x[0] ^ x[1])).collect();
        Dataset::new(images, labels, SplitTag::Train).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_config(vec![4, 2])
        };
        let mut net = init_network(&cfg, 2, 2, 1).unwrap();
        let before = net.clone();
        train(&mut net, &xor_data(), None, &cfg).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn one_step_descends_and_keeps_wiring() {
        let cfg = TrainConfig {
            tau: 1.0,
            ..small_config(vec![2])
        };
        let mut net = init_network(&cfg, 2, 2, 5).unwrap();
        let data = xor_data();
        let refs: Vec<&[bool]> = data.images.iter().map(Vec::as_slice).collect();
        let before = mean_loss(&net, &refs, &data.labels).unwrap();
        let wires: Vec<_> = net.layers().iter().map(|l| l.wires.clone()).collect();
        train(&mut net, &data, None, &cfg).unwrap();
        let after = mean_loss(&net, &refs, &data.labels).unwrap();
        assert!(after < before, "{after} !< {before}");
        let wires_after: Vec<_> = net.layers().iter().map(|l| l.wires.clone()).collect();
        assert_eq!(wires, wires_after);
    }

    #[test]
    fn xor_is_learnable() {
        let cfg = TrainConfig {
            tau: 1.0,
            learning_rate: 0.1,
            epochs: 200,
            ..small_config(vec![2])
        };
        let mut net = init_network(&cfg, 2, 2, 5).unwrap();
        let report = train(&mut net, &xor_data(), Some(&xor_data()), &cfg).unwrap();
        assert_eq!(report.final_test_acc, Some(1.0));
    }

    #[test]
    fn hard_input_rejected() {
        let net = discretize(&init_network(&small_config(vec![2]), 2, 2, 0).unwrap());
        let mut n = net.clone();
        assert!(matches!(
            train(&mut n, &xor_data(), None, &small_config(vec![2])),
            Err(Error::WrongMode { .. })
        ));
    }
}
