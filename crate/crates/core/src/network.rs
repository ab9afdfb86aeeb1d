//! Layered two-input logic networks.
//!
//! Layer 0 reads the input bits; every later layer reads the layer directly
//! before it. The final layer is split into `class_count` contiguous groups
//! of `group_size` nodes and a class score is the sum over its group.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gate::{GateType, Port};

/// Predecessor indices of one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Wire {
    pub a: usize,
    pub b: usize,
}

impl Wire {
    pub fn new(a: usize, b: usize) -> Self {
        Wire { a, b }
    }

    pub fn port(&self, port: Port) -> usize {
        match port {
            Port::A => self.a,
            Port::B => self.b,
        }
    }
}

/// Gate assignment for a whole layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerGates {
    Hard(Vec<GateType>),
    /// 16 gate logits per node, indexed by gate id.
    Soft(Vec<[f64; 16]>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Hard,
    Soft,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hard => "hard",
            Mode::Soft => "soft",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub wires: Vec<Wire>,
    pub gates: LayerGates,
}

impl Layer {
    pub fn hard(wires: Vec<Wire>, gates: Vec<GateType>) -> Self {
        Layer {
            wires,
            gates: LayerGates::Hard(gates),
        }
    }

    pub fn soft(wires: Vec<Wire>, logits: Vec<[f64; 16]>) -> Self {
        Layer {
            wires,
            gates: LayerGates::Soft(logits),
        }
    }

    pub fn width(&self) -> usize {
        self.wires.len()
    }

    pub fn mode(&self) -> Mode {
        match self.gates {
            LayerGates::Hard(_) => Mode::Hard,
            LayerGates::Soft(_) => Mode::Soft,
        }
    }

    /// Gate of a node in a hard layer.
    pub fn gate(&self, node: usize) -> Option<GateType> {
        match &self.gates {
            LayerGates::Hard(gates) => gates.get(node).copied(),
            LayerGates::Soft(_) => None,
        }
    }

    /// Per-node coefficients `[c0, ca, cb, cab]` of the node output as a
    /// bilinear function of its two inputs. For soft layers this is the
    /// softmax-weighted mixture of the 16 gates.
    pub fn coefficients(&self) -> Vec<[f64; 4]> {
        match &self.gates {
            LayerGates::Hard(gates) => gates.iter().map(|g| g.coefficients()).collect(),
            LayerGates::Soft(logits) => logits
                .iter()
                .map(|l| mixture_coefficients(&softmax16(l)))
                .collect(),
        }
    }
}

/// Numerically stable softmax over 16 logits.
pub fn softmax16(logits: &[f64; 16]) -> [f64; 16] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; 16];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

pub(crate) fn mixture_coefficients(weights: &[f64; 16]) -> [f64; 4] {
    let mut c = [0.0; 4];
    for (gate, &w) in GateType::ALL.iter().zip(weights) {
        for (ck, gk) in c.iter_mut().zip(gate.coefficients()) {
            *ck += w * gk;
        }
    }
    c
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Location of a gate node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub layer: usize,
    pub index: usize,
}

impl NodeId {
    pub fn new(layer: usize, index: usize) -> Self {
        NodeId { layer, index }
    }
}

/// Anything a gate port can read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Input(usize),
    Node(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HardForward {
    pub layers: Vec<Vec<bool>>,
    pub scores: Vec<u32>,
}

impl HardForward {
    pub fn predicted(&self) -> usize {
        argmax(&self.scores)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftForward {
    pub layers: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
}

impl SoftForward {
    pub fn predicted(&self) -> usize {
        argmax(&self.scores)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogicNetwork {
    input_dim: usize,
    class_count: usize,
    group_size: usize,
    tau: f64,
    layers: Vec<Layer>,
}

impl LogicNetwork {
    /// Validates shape invariants: consistent mode, in-range wiring, and a
    /// final layer of exactly `class_count * group_size` nodes.
    pub fn new(
        input_dim: usize,
        class_count: usize,
        group_size: usize,
        tau: f64,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if class_count == 0 || group_size == 0 {
            return Err(Error::Config("class_count and group_size must be positive".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        let mode = layers[0].mode();
        let mut prev_width = input_dim;
        for (li, layer) in layers.iter().enumerate() {
            if layer.mode() != mode {
                return Err(Error::WrongMode {
                    expected: mode.as_str(),
                    actual: layer.mode().as_str(),
                });
            }
            let gate_len = match &layer.gates {
                LayerGates::Hard(g) => g.len(),
                LayerGates::Soft(l) => l.len(),
            };
            if gate_len != layer.wires.len() {
                return Err(Error::DimensionMismatch {
                    expected: layer.wires.len(),
                    actual: gate_len,
                });
            }
            for (ni, w) in layer.wires.iter().enumerate() {
                for index in [w.a, w.b] {
                    if index >= prev_width {
                        return Err(Error::DanglingIndex {
                            layer: li,
                            node: ni,
                            index,
                            width: prev_width,
                        });
                    }
                }
            }
            prev_width = layer.width();
        }
        if prev_width != class_count * group_size {
            return Err(Error::Config(format!(
                "final layer width {prev_width} != {class_count} classes x {group_size}"
            )));
        }
        Ok(LogicNetwork {
            input_dim,
            class_count,
            group_size,
            tau,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn mode(&self) -> Mode {
        self.layers[0].mode()
    }

    pub fn require_hard(&self) -> Result<()> {
        match self.mode() {
            Mode::Hard => Ok(()),
            Mode::Soft => Err(Error::WrongMode {
                expected: "hard",
                actual: "soft",
            }),
        }
    }

    /// Number of gate nodes. Class-sum accumulators are not gates.
    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Layer::width).sum()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    /// Final-layer node range belonging to `class`.
    pub fn group_range(&self, class: usize) -> Result<std::ops::Range<usize>> {
        self.check_class(class)?;
        Ok(class * self.group_size..(class + 1) * self.group_size)
    }

    pub fn check_class(&self, class: usize) -> Result<()> {
        if class < self.class_count {
            Ok(())
        } else {
            Err(Error::ClassOutOfRange {
                class,
                class_count: self.class_count,
            })
        }
    }

    /// The source read by `port` of `node`.
    pub fn predecessor(&self, node: NodeId, port: Port) -> Source {
        let index = self.layers[node.layer].wires[node.index].port(port);
        if node.layer == 0 {
            Source::Input(index)
        } else {
            Source::Node(NodeId::new(node.layer - 1, index))
        }
    }

    pub fn gate(&self, node: NodeId) -> Option<GateType> {
        self.layers[node.layer].gate(node.index)
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len == self.input_dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: len,
            })
        }
    }

    /// Single-sample boolean forward pass.
    pub fn forward_hard(&self, x: &[bool]) -> Result<HardForward> {
        self.require_hard()?;
        self.check_input(x.len())?;
        let mut layers: Vec<Vec<bool>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev: &[bool] = layers.last().map_or(x, Vec::as_slice);
            let LayerGates::Hard(gates) = &layer.gates else {
                unreachable!("mode checked above")
            };
            let values = layer
                .wires
                .iter()
                .zip(gates)
                .map(|(w, g)| g.eval_hard(prev[w.a], prev[w.b]))
                .collect();
            layers.push(values);
        }
        let last = layers.last().expect("non-empty network");
        let scores = (0..self.class_count)
            .map(|c| {
                last[c * self.group_size..(c + 1) * self.group_size]
                    .iter()
                    .filter(|&&b| b)
                    .count() as u32
            })
            .collect();
        Ok(HardForward { layers, scores })
    }

    /// Bit-parallel forward pass. `inputs[i]` holds input bit `i` for up to
    /// 64 samples, one per lane. Returns per-layer node words.
    pub fn eval_packed(&self, inputs: &[u64]) -> Result<Vec<Vec<u64>>> {
        self.require_hard()?;
        self.check_input(inputs.len())?;
        let mut out: Vec<Vec<u64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev: &[u64] = out.last().map_or(inputs, Vec::as_slice);
            let LayerGates::Hard(gates) = &layer.gates else {
                unreachable!("mode checked above")
            };
            out.push(eval_layer_words(&layer.wires, gates, prev));
        }
        Ok(out)
    }

    /// Class scores of every lane from final-layer words.
    pub fn scores_from_words(&self, last: &[u64], lanes: usize) -> Vec<Vec<u32>> {
        let mut scores = vec![vec![0u32; self.class_count]; lanes];
        for class in 0..self.class_count {
            for &word in &last[class * self.group_size..(class + 1) * self.group_size] {
                let mut w = word;
                while w != 0 {
                    let lane = w.trailing_zeros() as usize;
                    if lane < lanes {
                        scores[lane][class] += 1;
                    }
                    w &= w - 1;
                }
            }
        }
        scores
    }

    /// Hard class scores for many samples, bit-packed 64 at a time.
    pub fn scores_hard_batch(&self, samples: &[Vec<bool>]) -> Result<Vec<Vec<u32>>> {
        self.require_hard()?;
        for s in samples {
            self.check_input(s.len())?;
        }
        let chunks: Vec<Vec<Vec<u32>>> = samples
            .par_chunks(64)
            .map(|chunk| {
                let words = pack_lanes(chunk, self.input_dim);
                let layers = self.eval_packed(&words).expect("validated");
                self.scores_from_words(layers.last().expect("non-empty"), chunk.len())
            })
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    pub fn predict_hard_batch(&self, samples: &[Vec<bool>]) -> Result<Vec<usize>> {
        Ok(self
            .scores_hard_batch(samples)?
            .iter()
            .map(|s| argmax(s))
            .collect())
    }

    /// Probabilistic forward pass. Hard layers use the fixed gate formulas,
    /// soft layers the softmax mixture over all 16 gates.
    pub fn forward_soft(&self, p: &[f64]) -> Result<SoftForward> {
        self.check_input(p.len())?;
        for &v in p {
            crate::gate::check_probability(v)?;
        }
        Ok(self.forward_soft_unchecked(p))
    }

    pub(crate) fn forward_soft_unchecked(&self, p: &[f64]) -> SoftForward {
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev: &[f64] = layers.last().map_or(p, Vec::as_slice);
            let values = match &layer.gates {
                LayerGates::Hard(gates) => layer
                    .wires
                    .iter()
                    .zip(gates)
                    .map(|(w, g)| g.eval_soft_unchecked(prev[w.a], prev[w.b]))
                    .collect(),
                LayerGates::Soft(_) => layer
                    .wires
                    .iter()
                    .zip(layer.coefficients())
                    .map(|(w, [c0, ca, cb, cab])| {
                        let (a, b) = (prev[w.a], prev[w.b]);
                        c0 + ca * a + cb * b + cab * a * b
                    })
                    .collect(),
            };
            layers.push(values);
        }
        let last = layers.last().expect("non-empty network");
        let scores = (0..self.class_count)
            .map(|c| {
                last[c * self.group_size..(c + 1) * self.group_size]
                    .iter()
                    .sum()
            })
            .collect();
        SoftForward { layers, scores }
    }

    /// Soft-semantics argmax class for a real-valued input.
    pub fn predict_soft(&self, p: &[f64]) -> Result<usize> {
        Ok(self.forward_soft(p)?.predicted())
    }

    /// Exact gradient of the soft score of `class` with respect to the input
    /// probabilities.
    pub fn backward_soft(&self, p: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_class(class)?;
        let fwd = self.forward_soft(p)?;
        Ok(self.backward_from(p, &fwd, class))
    }

    pub(crate) fn backward_from(&self, p: &[f64], fwd: &SoftForward, class: usize) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut grad = vec![0.0; self.layers[last].width()];
        for g in &mut grad[class * self.group_size..(class + 1) * self.group_size] {
            *g = 1.0;
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let prev: &[f64] = if li == 0 { p } else { &fwd.layers[li - 1] };
            let mut prev_grad = vec![0.0; prev.len()];
            let coeffs = match &layer.gates {
                LayerGates::Hard(_) => None,
                LayerGates::Soft(_) => Some(layer.coefficients()),
            };
            for (ni, w) in layer.wires.iter().enumerate() {
                let g = grad[ni];
                if g == 0.0 {
                    continue;
                }
                let (a, b) = (prev[w.a], prev[w.b]);
                let (da, db) = match (&layer.gates, &coeffs) {
                    (LayerGates::Hard(gates), _) => gates[ni].soft_gradient(a, b),
                    (_, Some(c)) => {
                        let [_, ca, cb, cab] = c[ni];
                        (ca + cab * b, cb + cab * a)
                    }
                    _ => unreachable!(),
                };
                prev_grad[w.a] += g * da;
                prev_grad[w.b] += g * db;
            }
            grad = prev_grad;
        }
        grad
    }
}

fn eval_layer_words(wires: &[Wire], gates: &[GateType], prev: &[u64]) -> Vec<u64> {
    wires
        .iter()
        .zip(gates)
        .map(|(w, g)| g.eval_word(prev[w.a], prev[w.b]))
        .collect()
}

/// Packs up to 64 boolean vectors into one word per dimension.
pub fn pack_lanes(samples: &[Vec<bool>], dim: usize) -> Vec<u64> {
    assert!(samples.len() <= 64, "at most 64 lanes per word");
    let mut words = vec![0u64; dim];
    for (lane, sample) in samples.iter().enumerate() {
        for (word, &bit) in words.iter_mut().zip(sample) {
            if bit {
                *word |= 1 << lane;
            }
        }
    }
    words
}
