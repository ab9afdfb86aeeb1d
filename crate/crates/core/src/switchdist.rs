//! Switch distance: how far an input must move along a saliency-derived
//! direction before the predicted class changes.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::baselines::{integrated_gradients, random_map, vanilla_gradients, DEFAULT_IG_STEPS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::{class_factors, class_map, local_map, ExplanationSpec, SaliencyFactors, Variant};
use crate::network::LogicNetwork;

pub const DEFAULT_ALPHA: f64 = 0.1;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `v / |v|`.
pub fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Step against the whole map.
    Full,
    /// Only coordinates with `U + delta > 0`.
    Positive,
    /// Only coordinates with `U + delta <= 0`.
    Negative,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Full, Direction::Positive, Direction::Negative];

    pub fn tag(self) -> &'static str {
        match self {
            Direction::Full => "+/-I",
            Direction::Positive => "+I",
            Direction::Negative => "-I",
        }
    }
}

/// The three unit directions of one map. Masked directions with no
/// surviving coordinate are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSet {
    pub full: Vec<f64>,
    pub positive: Option<Vec<f64>>,
    pub negative: Option<Vec<f64>>,
    pub delta: f64,
}

impl DirectionSet {
    pub fn get(&self, d: Direction) -> Option<&[f64]> {
        match d {
            Direction::Full => Some(&self.full),
            Direction::Positive => self.positive.as_deref(),
            Direction::Negative => self.negative.as_deref(),
        }
    }
}

pub fn directions(saliency: &[f64]) -> Result<DirectionSet> {
    let u = unit(saliency)?;
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let delta = var.sqrt() / 100.0;
    let masked = |keep: &dyn Fn(f64) -> bool| -> Option<Vec<f64>> {
        let v: Vec<f64> = u.iter().map(|&x| if keep(x + delta) { x } else { 0.0 }).collect();
        unit(&v).ok()
    };
    Ok(DirectionSet {
        positive: masked(&|s| s > 0.0),
        negative: masked(&|s| s <= 0.0),
        full: u,
        delta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchConfig {
    pub alpha: f64,
    /// Distance cap; `input_dim / 4` when `None`.
    pub budget: Option<f64>,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            alpha: DEFAULT_ALPHA,
            budget: None,
        }
    }
}

impl SwitchConfig {
    pub fn budget_for(&self, input_dim: usize) -> f64 {
        self.budget.unwrap_or(input_dim as f64 / 4.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchResult {
    pub switched: bool,
    /// `|x_t - x|` at the last step taken.
    pub distance: f64,
    pub steps: usize,
    pub original_class: usize,
    pub new_class: usize,
}

/// Steps `x_{t+1} = clamp(x_t - alpha * direction)` until the soft argmax
/// changes. Gives up when the distance exceeds the budget, when clamping
/// stalls the iterate, or after `budget / alpha` steps.
pub fn switch_dist(
    net: &LogicNetwork,
    x: &[f64],
    direction: &[f64],
    config: &SwitchConfig,
) -> Result<SwitchResult> {
    if direction.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: direction.len(),
        });
    }
    let original_class = net.predict_soft(x)?;
    let budget = config.budget_for(net.input_dim());
    let max_steps = (budget / config.alpha).ceil() as usize;
    let mut cur = x.to_vec();
    let mut result = SwitchResult {
        switched: false,
        distance: 0.0,
        steps: 0,
        original_class,
        new_class: original_class,
    };
    for step in 1..=max_steps {
        let mut moved = false;
        for (c, d) in cur.iter_mut().zip(direction) {
            let next = (*c - config.alpha * d).clamp(0.0, 1.0);
            moved |= next != *c;
            *c = next;
        }
        if !moved {
            break;
        }
        let dist = cur
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        result.steps = step;
        result.distance = dist;
        if dist > budget {
            break;
        }
        let class = net.forward_soft_unchecked(&cur).predicted();
        if class != original_class {
            result.switched = true;
            result.new_class = class;
            break;
        }
    }
    Ok(result)
}

/// A saliency method under evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Random,
    VanillaGradients,
    IntegratedGradients,
    Explain(Variant),
}

impl Method {
    pub fn tag(&self) -> String {
        match self {
            Method::Random => "random".into(),
            Method::VanillaGradients => "vg".into(),
            Method::IntegratedGradients => "ig".into(),
            Method::Explain(v) => v.tag().into(),
        }
    }

    /// Parses `random`, `vg`, `ig` or a variant tag. The structural variant
    /// is rejected: it carries no data and is for visualization only.
    pub fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Method::Random),
            "vg" => Ok(Method::VanillaGradients),
            "ig" => Ok(Method::IntegratedGradients),
            other => match Variant::parse(other) {
                Some(Variant::GNull) => Err(Error::Config(
                    "G_null is a structural visualization and is excluded from switch-distance evaluation"
                        .into(),
                )),
                Some(v) => Ok(Method::Explain(v)),
                None => Err(Error::Config(format!("unknown method `{s}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub switch: SwitchConfig,
    pub seed: u64,
    pub ig_steps: usize,
    /// Evaluate at most this many true-positive samples (in dataset order).
    pub max_samples: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            switch: SwitchConfig::default(),
            seed: 0,
            ig_steps: DEFAULT_IG_STEPS,
            max_samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub sample_id: usize,
    pub method: String,
    pub direction: Direction,
    /// `None` when the direction was absent for this sample.
    pub result: Option<SwitchResult>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub direction: Direction,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub percent_switch: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub traces: Vec<TraceRow>,
    pub seed: u64,
    pub model_hash: String,
}

impl EvalSummary {
    pub fn row(&self, method: &str, direction: Direction) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.direction == direction)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,direction,mean,std,percent_switch,n_samples,seed,model_hash\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{:.6},{:.6},{:.2},{},{},{}",
                r.method,
                r.direction.tag(),
                r.mean,
                r.std,
                r.percent_switch,
                r.n_samples,
                self.seed,
                self.model_hash
            )
            .unwrap();
        }
        s
    }

    pub fn traces_csv(&self) -> String {
        let mut s = String::from("sample_id,method,direction,switched,distance,steps\n");
        for t in &self.traces {
            let (sw, d, st) = match t.result {
                Some(r) => (r.switched.to_string(), format!("{:.6}", r.distance), r.steps.to_string()),
                None => ("absent".into(), String::new(), String::new()),
            };
            writeln!(s, "{},{},{},{sw},{d},{st}", t.sample_id, t.method, t.direction.tag()).unwrap();
        }
        s
    }
}

/// Population mean and standard deviation, NaN for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Per-sample seed for the random baseline.
pub fn random_seed_for(seed: u64, sample: usize) -> u64 {
    seed ^ (sample as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Indices of test samples the hard network classifies correctly.
pub fn true_positives(net: &LogicNetwork, test: &Dataset) -> Result<Vec<usize>> {
    let preds = net.predict_hard_batch(&test.images)?;
    Ok(preds
        .iter()
        .zip(&test.labels)
        .enumerate()
        .filter(|(_, (p, l))| p == l)
        .map(|(i, _)| i)
        .collect())
}

/// Switch distances of every method and direction over the true positives
/// of `test`. `reference` supplies the data for dataset- and class-level
/// explanation variants.
pub fn evaluate(
    net: &LogicNetwork,
    test: &Dataset,
    reference: Option<&Dataset>,
    methods: &[Method],
    config: &EvalConfig,
) -> Result<EvalSummary> {
    net.require_hard()?;
    let mut tps = true_positives(net, test)?;
    if let Some(cap) = config.max_samples {
        tps.truncate(cap);
    }
    if tps.is_empty() {
        return Err(Error::Empty("no true-positive test samples".into()));
    }
    let model_hash = crate::format::model_hash(net);
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for method in methods {
        // Class-level maps depend only on the class; build each once.
        let class_maps: Option<Vec<Vec<f64>>> = match method {
            Method::Explain(v) if !v.is_local() => {
                let spec = ExplanationSpec::new(*v);
                let maps = (0..net.class_count())
                    .map(|c| {
                        let sf: Option<SaliencyFactors> = class_factors(net, reference, *v, c)?;
                        Ok(class_map(net, sf.as_ref(), c, &spec)?.values)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(maps)
            }
            _ => None,
        };
        let per_sample: Vec<Vec<TraceRow>> = tps
            .par_iter()
            .map(|&i| -> Result<Vec<TraceRow>> {
                let img = &test.images[i];
                let class = test.labels[i];
                let x: Vec<f64> = img.iter().map(|&b| f64::from(u8::from(b))).collect();
                let map = match method {
                    Method::Random => random_map(x.len(), random_seed_for(config.seed, i)).values,
                    Method::VanillaGradients => vanilla_gradients(net, &x, class)?.values,
                    Method::IntegratedGradients => {
                        integrated_gradients(net, &x, class, &vec![0.0; x.len()], config.ig_steps)?
                            .values
                    }
                    Method::Explain(v) if v.is_local() => {
                        local_map(net, img, Some(class), &ExplanationSpec::new(*v))?.values
                    }
                    Method::Explain(_) => class_maps.as_ref().expect("built above")[class].clone(),
                };
                let dirs = directions(&map).ok();
                Direction::ALL
                    .iter()
                    .map(|&d| {
                        let result = match dirs.as_ref().and_then(|s| s.get(d)) {
                            Some(u) => Some(switch_dist(net, &x, u, &config.switch)?),
                            None => None,
                        };
                        Ok(TraceRow {
                            sample_id: i,
                            method: method.tag(),
                            direction: d,
                            result,
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let flat: Vec<TraceRow> = per_sample.into_iter().flatten().collect();
        for d in Direction::ALL {
            let dists: Vec<f64> = flat
                .iter()
                .filter(|t| t.direction == d)
                .filter_map(|t| t.result.filter(|r| r.switched).map(|r| r.distance))
                .collect();
            let (mean, std) = mean_std(&dists);
            rows.push(EvalRow {
                method: method.tag(),
                direction: d,
                mean,
                std,
                median: median(&dists),
                percent_switch: 100.0 * dists.len() as f64 / tps.len() as f64,
                n_samples: tps.len(),
            });
        }
        traces.extend(flat);
    }
    Ok(EvalSummary {
        rows,
        traces,
        seed: config.seed,
        model_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::GateType;
    use crate::network::{Layer, Wire};

    #[test]
    fn unit_examples() {
        let u = unit(&[3.0, 4.0]).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
        assert_eq!(unit(&u).unwrap(), u);
        assert!(matches!(unit(&[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn all_positive_map_has_no_negative_direction() {
        let d = directions(&[1.0, 2.0, 3.0]).unwrap();
        assert!(d.negative.is_none());
        assert_eq!(d.positive.as_deref(), Some(d.full.as_slice()));
    }

    #[test]
    fn symmetric_map_splits() {
        let d = directions(&[2.0, -2.0]).unwrap();
        assert_eq!(d.positive.unwrap(), vec![1.0, 0.0]);
        assert_eq!(d.negative.unwrap(), vec![0.0, -1.0]);
    }

    #[test]
    fn masks_partition() {
        let s = [0.5, -0.1, 0.0, 2.0, -3.0, 1e-9];
        let d = directions(&s).unwrap();
        let pos = d.positive.unwrap();
        let neg = d.negative.unwrap();
        for i in 0..s.len() {
            let in_pos = pos[i] != 0.0 || d.full[i] + d.delta > 0.0;
            let in_neg = neg[i] != 0.0 || d.full[i] + d.delta <= 0.0;
            assert!(in_pos ^ in_neg);
        }
    }

    /// One pixel. Class 0 reads the pixel and class 1 its negation, so ties
    /// at one half go to class 0 and class 0 is predicted iff the pixel is at
    /// least one half.
    fn threshold_model() -> LogicNetwork {
        let layer = Layer::hard(
            vec![Wire::new(0, 0), Wire::new(0, 0)],
            vec![GateType::A, GateType::NOT_A],
        );
        LogicNetwork::new(1, 2, 1, 1.0, vec![layer]).unwrap()
    }

    #[test]
    fn threshold_model_switches_after_six_steps() {
        let net = threshold_model();
        assert_eq!(net.predict_soft(&[0.5]).unwrap(), 0);
        assert_eq!(net.predict_soft(&[0.49]).unwrap(), 1);
        // The default budget of input_dim / 4 would stop a 1-pixel walk at 0.25.
        let config = SwitchConfig {
            budget: Some(100.0),
            ..SwitchConfig::default()
        };
        let r = switch_dist(&net, &[1.0], &[1.0], &config).unwrap();
        assert!(r.switched);
        assert_eq!(r.steps, 6);
        assert!((r.distance - 0.6).abs() < 1e-12);
        assert_eq!((r.original_class, r.new_class), (0, 1));
    }

    #[test]
    fn irrelevant_direction_never_switches() {
        // Only pixel 0 matters; pushing pixel 1 saturates without a switch.
        let layer = Layer::hard(
            vec![Wire::new(0, 1), Wire::new(0, 1)],
            vec![GateType::A, GateType::NOT_A],
        );
        let net = LogicNetwork::new(2, 2, 1, 1.0, vec![layer]).unwrap();
        let r = switch_dist(&net, &[1.0, 1.0], &[0.0, 1.0], &SwitchConfig::default()).unwrap();
        assert!(!r.switched);
        assert!(r.distance <= SwitchConfig::default().budget_for(2) + 0.1);
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("random").unwrap(), Method::Random);
        assert_eq!(Method::parse("L_E").unwrap(), Method::Explain(Variant::LE));
        assert!(matches!(Method::parse("G_null"), Err(Error::Config(_))));
        assert!(Method::parse("shap").is_err());
    }

    #[test]
    fn stats_helpers() {
        let (m, s) = mean_std(&[]);
        assert!(m.is_nan() && s.is_nan());
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
