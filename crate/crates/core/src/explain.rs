//! Signal-probability saliency factors and signed fan-in traversal.
//!
//! A traversal starts at a root node with a positive sign and walks every
//! live input port breadth-first. Each edge multiplies the path sign by the
//! port's sign (negative for inverting ports) and the predecessor must pass a
//! threshold test on its saliency factor: `sf > theta` on positive paths and
//! `sf < 1 - theta` on negative ones. Inputs reached this way are recorded
//! with their path sign and summed into a signed per-input count.

use std::collections::VecDeque;

use crate::data::{bit_means, pixel_stats, Dataset, StatsScope};
use crate::error::{Error, Result};
use crate::gate::{Dependence, Port, PortSign, Sign};
use crate::network::{pack_lanes, LogicNetwork, NodeId, Source};
use crate::saliency::{MapMeta, SaliencyMap, ThetaRange};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorSource {
    Empirical,
    Analytical,
}

/// Per-node and per-input values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyFactors {
    pub inputs: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    pub source: FactorSource,
}

impl SaliencyFactors {
    pub fn get(&self, source: Source) -> f64 {
        match source {
            Source::Input(i) => self.inputs[i],
            Source::Node(n) => self.nodes[n.layer][n.index],
        }
    }
}

/// Fraction of samples for which each node outputs 1.
pub fn sp_empirical(net: &LogicNetwork, samples: &[&[bool]]) -> Result<SaliencyFactors> {
    net.require_hard()?;
    if samples.is_empty() {
        return Err(Error::Empty("empirical signal probability needs samples".into()));
    }
    let inputs = bit_means(samples, net.input_dim())?;
    let mut counts: Vec<Vec<u64>> = net.layers().iter().map(|l| vec![0; l.width()]).collect();
    for chunk in samples.chunks(64) {
        let owned: Vec<Vec<bool>> = chunk.iter().map(|s| s.to_vec()).collect();
        let words = net.eval_packed(&pack_lanes(&owned, net.input_dim()))?;
        let mask = if chunk.len() == 64 {
            u64::MAX
        } else {
            (1u64 << chunk.len()) - 1
        };
        for (lc, lw) in counts.iter_mut().zip(&words) {
            for (c, w) in lc.iter_mut().zip(lw) {
                *c += u64::from((w & mask).count_ones());
            }
        }
    }
    let n = samples.len() as f64;
    Ok(SaliencyFactors {
        inputs,
        nodes: counts
            .into_iter()
            .map(|l| l.into_iter().map(|c| c as f64 / n).collect())
            .collect(),
        source: FactorSource::Empirical,
    })
}

/// Signal probabilities propagated through the gate formulas assuming
/// independent node inputs.
pub fn sp_analytical(net: &LogicNetwork, p: &[f64]) -> Result<SaliencyFactors> {
    net.require_hard()?;
    let fwd = net.forward_soft(p)?;
    Ok(SaliencyFactors {
        inputs: p.to_vec(),
        nodes: fwd.layers,
        source: FactorSource::Analytical,
    })
}

/// Threshold test applied to each predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PassRule {
    /// `sf > theta` on positive paths, `sf < 1 - theta` on negative paths.
    #[default]
    SignAware,
    /// `sf > theta` on positive paths, `sf > 1 - theta` on negative paths.
    Literal,
}

impl PassRule {
    pub fn passes(self, sf: f64, sign: Sign, theta: f64) -> bool {
        match (self, sign) {
            (_, Sign::Positive) => sf > theta,
            (PassRule::SignAware, Sign::Negative) => sf < 1.0 - theta,
            (PassRule::Literal, Sign::Negative) => sf > 1.0 - theta,
        }
    }
}

/// Factors steering a traversal. `Structural` lets every live edge pass.
#[derive(Clone, Copy, Debug)]
pub enum Guide<'a> {
    Factors {
        sf: &'a SaliencyFactors,
        theta: f64,
        rule: PassRule,
    },
    Structural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum PathSign {
    Signed(Sign),
    /// Passed a non-monotone port with no factor to resolve its slope.
    Mixed,
}

impl PathSign {
    fn slot(self) -> u8 {
        match self {
            PathSign::Signed(Sign::Positive) => 1,
            PathSign::Signed(Sign::Negative) => 2,
            PathSign::Mixed => 4,
        }
    }
}

/// Input arrivals of one or more traversals, split by path sign.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaninTrace {
    pub positive: Vec<u32>,
    pub negative: Vec<u32>,
    pub mixed: Vec<u32>,
}

impl FaninTrace {
    pub fn new(input_dim: usize) -> Self {
        FaninTrace {
            positive: vec![0; input_dim],
            negative: vec![0; input_dim],
            mixed: vec![0; input_dim],
        }
    }

    /// Signed sum of arrivals per input.
    pub fn signed(&self) -> Vec<f64> {
        self.positive
            .iter()
            .zip(&self.negative)
            .map(|(&p, &n)| f64::from(p) - f64::from(n))
            .collect()
    }

    /// Inputs reached with any sign.
    pub fn support(&self) -> Vec<bool> {
        (0..self.positive.len())
            .map(|i| self.positive[i] + self.negative[i] + self.mixed[i] > 0)
            .collect()
    }

    /// Inputs reached only along positive (or only negative) paths.
    pub fn pure_sign(&self, input: usize) -> Option<Sign> {
        let (p, n, m) = (self.positive[input], self.negative[input], self.mixed[input]);
        match (p > 0, n > 0, m > 0) {
            (true, false, false) => Some(Sign::Positive),
            (false, true, false) => Some(Sign::Negative),
            _ => None,
        }
    }

    pub fn endpoints(&self) -> usize {
        self.positive
            .iter()
            .chain(&self.negative)
            .chain(&self.mixed)
            .map(|&c| c as usize)
            .sum()
    }

    pub fn absorb(&mut self, other: &FaninTrace) {
        for (a, b) in self.positive.iter_mut().zip(&other.positive) {
            *a += b;
        }
        for (a, b) in self.negative.iter_mut().zip(&other.negative) {
            *a += b;
        }
        for (a, b) in self.mixed.iter_mut().zip(&other.mixed) {
            *a += b;
        }
    }
}

fn check_node(net: &LogicNetwork, node: NodeId) -> Result<()> {
    let Some(layer) = net.layers().get(node.layer) else {
        return Err(Error::NodeOutOfRange {
            layer: node.layer,
            node: node.index,
            width: 0,
        });
    };
    if node.index >= layer.width() {
        return Err(Error::NodeOutOfRange {
            layer: node.layer,
            node: node.index,
            width: layer.width(),
        });
    }
    Ok(())
}

/// Breadth-first signed traversal from `root`. Nodes are expanded once per
/// (node, sign); every arrival at an input is counted.
pub fn fanin_trace(net: &LogicNetwork, guide: Guide<'_>, root: NodeId) -> Result<FaninTrace> {
    net.require_hard()?;
    check_node(net, root)?;
    if let Guide::Factors { theta, .. } = guide {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::ThetaRange {
                min: theta,
                step: 0.0,
                max: theta,
            });
        }
    }
    let mut trace = FaninTrace::new(net.input_dim());
    let mut visited: Vec<Vec<u8>> = net.layers().iter().map(|l| vec![0; l.width()]).collect();
    let mut queue = VecDeque::new();
    let start = PathSign::Signed(Sign::Positive);
    visited[root.layer][root.index] |= start.slot();
    queue.push_back((root, start));
    while let Some((node, sign)) = queue.pop_front() {
        let gate = net.gate(node).expect("hard network");
        for port in [Port::A, Port::B] {
            let dep = gate.dependence(port);
            if dep == Dependence::Ignored {
                continue;
            }
            let pred = net.predecessor(node, port);
            let (edge, passes) = match guide {
                Guide::Structural => {
                    let edge = match dep {
                        Dependence::Positive => PathSign::Signed(Sign::Positive),
                        Dependence::Negative => PathSign::Signed(Sign::Negative),
                        _ => PathSign::Mixed,
                    };
                    (edge, true)
                }
                Guide::Factors { sf, theta, rule } => {
                    let partner = sf.get(net.predecessor(node, port.other()));
                    let PortSign::Signed(edge) = gate.port_sign(port, partner) else {
                        unreachable!("ignored ports skipped above")
                    };
                    let new_sign = match sign {
                        PathSign::Signed(s) => s.times(edge),
                        PathSign::Mixed => unreachable!("factor-guided paths stay signed"),
                    };
                    (PathSign::Signed(edge), rule.passes(sf.get(pred), new_sign, theta))
                }
            };
            if !passes {
                continue;
            }
            let new_sign = match (sign, edge) {
                (PathSign::Signed(s), PathSign::Signed(e)) => PathSign::Signed(s.times(e)),
                _ => PathSign::Mixed,
            };
            match pred {
                Source::Input(i) => match new_sign {
                    PathSign::Signed(Sign::Positive) => trace.positive[i] += 1,
                    PathSign::Signed(Sign::Negative) => trace.negative[i] += 1,
                    PathSign::Mixed => trace.mixed[i] += 1,
                },
                Source::Node(n) => {
                    let flags = &mut visited[n.layer][n.index];
                    if *flags & new_sign.slot() == 0 {
                        *flags |= new_sign.slot();
                        queue.push_back((n, new_sign));
                    }
                }
            }
        }
    }
    Ok(trace)
}

/// Signed endpoint counts of one traversal at one threshold.
pub fn fanin(
    net: &LogicNetwork,
    sf: &SaliencyFactors,
    root: NodeId,
    theta: f64,
    rule: PassRule,
) -> Result<SaliencyMap> {
    let trace = fanin_trace(net, Guide::Factors { sf, theta, rule }, root)?;
    Ok(SaliencyMap::new(
        trace.signed(),
        MapMeta {
            method: "fanin".into(),
            target: format!("node {}:{}", root.layer, root.index),
            theta: Some(ThetaRange {
                min: theta,
                step: 0.0,
                max: theta,
            }),
            model_hash: None,
        },
    ))
}

/// Sum of signed maps over `roots` at one threshold.
pub fn fanin_roots(
    net: &LogicNetwork,
    sf: &SaliencyFactors,
    roots: &[NodeId],
    theta: f64,
    rule: PassRule,
) -> Result<FaninTrace> {
    let mut total = FaninTrace::new(net.input_dim());
    for &root in roots {
        total.absorb(&fanin_trace(net, Guide::Factors { sf, theta, rule }, root)?);
    }
    Ok(total)
}

/// Mean of the summed root maps over every threshold in `range`.
pub fn sweep(
    net: &LogicNetwork,
    sf: &SaliencyFactors,
    roots: &[NodeId],
    range: ThetaRange,
    rule: PassRule,
) -> Result<Vec<f64>> {
    let thetas = range.samples()?;
    let mut acc = vec![0.0; net.input_dim()];
    for &theta in &thetas {
        let map = fanin_roots(net, sf, roots, theta, rule)?.signed();
        for (a, v) in acc.iter_mut().zip(map) {
            *a += v;
        }
    }
    let n = thetas.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Explanation variants, by saliency-factor source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Local, empirical factors of the sample itself.
    LE,
    /// Local, analytical factors with the sample as input probabilities.
    LA,
    /// Structural: every live edge passes.
    GNull,
    /// Analytical factors at uniform input probability 0.5.
    GU,
    /// Empirical factors over the whole dataset.
    GE,
    /// Analytical factors at the dataset's pixel means.
    GA,
    /// Empirical factors over the target class's samples.
    CE,
    /// Analytical factors at the target class's pixel means.
    CA,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::LE,
        Variant::LA,
        Variant::GNull,
        Variant::GU,
        Variant::GE,
        Variant::GA,
        Variant::CE,
        Variant::CA,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::LE => "L_E",
            Variant::LA => "L_A",
            Variant::GNull => "G_null",
            Variant::GU => "G_U",
            Variant::GE => "G_E",
            Variant::GA => "G_A",
            Variant::CE => "C_E",
            Variant::CA => "C_A",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Some(match norm.as_str() {
            "L_E" | "LE" => Variant::LE,
            "L_A" | "LA" => Variant::LA,
            "G_NULL" | "G_0" | "G_EMPTY" | "G_∅" => Variant::GNull,
            "G_U" | "GU" => Variant::GU,
            "G_E" | "GE" => Variant::GE,
            "G_A" | "GA" => Variant::GA,
            "C_E" | "CE" => Variant::CE,
            "C_A" | "CA" => Variant::CA,
            _ => return None,
        })
    }

    pub fn is_local(self) -> bool {
        matches!(self, Variant::LE | Variant::LA)
    }

    pub fn default_theta(self) -> ThetaRange {
        if self.is_local() {
            ThetaRange::SINGLE_ZERO
        } else {
            ThetaRange::FULL_SWEEP
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplanationSpec {
    pub variant: Variant,
    pub theta: ThetaRange,
    pub rule: PassRule,
}

impl ExplanationSpec {
    pub fn new(variant: Variant) -> Self {
        ExplanationSpec {
            variant,
            theta: variant.default_theta(),
            rule: PassRule::SignAware,
        }
    }
}

/// What an explanation is about.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    /// A single input; the explained class defaults to the hard prediction.
    Sample {
        input: &'a [bool],
        class: Option<usize>,
    },
    Class(usize),
}

/// Output-group nodes of `class`.
pub fn group_roots(net: &LogicNetwork, class: usize) -> Result<Vec<NodeId>> {
    let last = net.depth() - 1;
    Ok(net
        .group_range(class)?
        .map(|i| NodeId::new(last, i))
        .collect())
}

/// Saliency factors for a non-local variant and class.
pub fn class_factors(
    net: &LogicNetwork,
    data: Option<&Dataset>,
    variant: Variant,
    class: usize,
) -> Result<Option<SaliencyFactors>> {
    let need_data = || data.ok_or_else(|| Error::Empty(format!("{} needs a dataset", variant.tag())));
    let dim = net.input_dim();
    Ok(Some(match variant {
        Variant::GNull => return Ok(None),
        Variant::GU => sp_analytical(net, &vec![0.5; dim])?,
        Variant::GE => {
            let d = need_data()?;
            let refs: Vec<&[bool]> = d.images.iter().map(Vec::as_slice).collect();
            sp_empirical(net, &refs)?
        }
        Variant::GA => sp_analytical(net, &pixel_stats(need_data()?, StatsScope::All, dim)?.mean)?,
        Variant::CE => {
            let subset = need_data()?.class_subset(class);
            if subset.is_empty() {
                return Err(Error::Empty(format!("no samples of class {class}")));
            }
            sp_empirical(net, &subset)?
        }
        Variant::CA => {
            sp_analytical(net, &pixel_stats(need_data()?, StatsScope::Class(class), dim)?.mean)?
        }
        Variant::LE | Variant::LA => {
            return Err(Error::Config(format!(
                "{} explains a sample, not a class",
                variant.tag()
            )))
        }
    }))
}

/// Saliency map for a class from precomputed factors (`None` = structural).
pub fn class_map(
    net: &LogicNetwork,
    factors: Option<&SaliencyFactors>,
    class: usize,
    spec: &ExplanationSpec,
) -> Result<SaliencyMap> {
    let roots = group_roots(net, class)?;
    let values = match factors {
        None => {
            spec.theta.validate()?;
            let mut total = FaninTrace::new(net.input_dim());
            for &root in &roots {
                total.absorb(&fanin_trace(net, Guide::Structural, root)?);
            }
            total.signed()
        }
        Some(sf) => sweep(net, sf, &roots, spec.theta, spec.rule)?,
    };
    Ok(SaliencyMap::new(
        values,
        MapMeta {
            method: spec.variant.tag().into(),
            target: format!("class {class}"),
            theta: Some(spec.theta),
            model_hash: None,
        },
    ))
}

/// Local explanation of one input for `class` (defaults to the prediction).
pub fn local_map(
    net: &LogicNetwork,
    input: &[bool],
    class: Option<usize>,
    spec: &ExplanationSpec,
) -> Result<SaliencyMap> {
    let sf = match spec.variant {
        Variant::LE => sp_empirical(net, &[input])?,
        Variant::LA => {
            let p: Vec<f64> = input.iter().map(|&b| f64::from(u8::from(b))).collect();
            sp_analytical(net, &p)?
        }
        other => {
            return Err(Error::Config(format!(
                "{} explains a class, not a sample",
                other.tag()
            )))
        }
    };
    let class = match class {
        Some(c) => c,
        None => net.forward_hard(input)?.predicted(),
    };
    let roots: Vec<NodeId> = group_roots(net, class)?
        .into_iter()
        .filter(|&r| PassRule::SignAware.passes(sf.get(Source::Node(r)), Sign::Positive, 0.0))
        .collect();
    let values = sweep(net, &sf, &roots, spec.theta, spec.rule)?;
    Ok(SaliencyMap::new(
        values,
        MapMeta {
            method: spec.variant.tag().into(),
            target: format!("sample, class {class}"),
            theta: Some(spec.theta),
            model_hash: None,
        },
    ))
}

/// Dispatches on the variant: local variants need a sample target, the
/// others a class target.
pub fn explain(
    net: &LogicNetwork,
    data: Option<&Dataset>,
    target: Target<'_>,
    spec: &ExplanationSpec,
) -> Result<SaliencyMap> {
    match (spec.variant.is_local(), target) {
        (true, Target::Sample { input, class }) => local_map(net, input, class, spec),
        (false, Target::Class(class)) => {
            let factors = class_factors(net, data, spec.variant, class)?;
            class_map(net, factors.as_ref(), class, spec)
        }
        (true, Target::Class(_)) => Err(Error::Config(format!(
            "{} needs a sample target",
            spec.variant.tag()
        ))),
        (false, Target::Sample { .. }) => Err(Error::Config(format!(
            "{} needs a class target",
            spec.variant.tag()
        ))),
    }
}
