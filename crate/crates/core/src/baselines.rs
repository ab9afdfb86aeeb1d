//! Gradient and random saliency baselines.
//!
//! Gradients are taken through the fixed-gate probability formulas of the
//! network, which is the continuous extension of the hard netlist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::network::LogicNetwork;
use crate::saliency::{MapMeta, SaliencyMap};

pub const DEFAULT_IG_STEPS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMethod {
    VanillaGradients,
    IntegratedGradients,
    Random,
}

impl BaselineMethod {
    pub fn tag(self) -> &'static str {
        match self {
            BaselineMethod::VanillaGradients => "VG",
            BaselineMethod::IntegratedGradients => "IG",
            BaselineMethod::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    pub ig_steps: usize,
    /// All zeros when `None`.
    pub ig_baseline: Option<Vec<f64>>,
    pub random_seed: u64,
}

impl BaselineSpec {
    pub fn new(method: BaselineMethod) -> Self {
        BaselineSpec {
            method,
            ig_steps: DEFAULT_IG_STEPS,
            ig_baseline: None,
            random_seed: 0,
        }
    }

    /// Map for `x` explaining `class`.
    pub fn compute(&self, net: &LogicNetwork, x: &[f64], class: usize) -> Result<SaliencyMap> {
        match self.method {
            BaselineMethod::VanillaGradients => vanilla_gradients(net, x, class),
            BaselineMethod::IntegratedGradients => {
                let zeros;
                let baseline = match &self.ig_baseline {
                    Some(b) => b.as_slice(),
                    None => {
                        zeros = vec![0.0; x.len()];
                        &zeros
                    }
                };
                integrated_gradients(net, x, class, baseline, self.ig_steps)
            }
            BaselineMethod::Random => Ok(random_map(x.len(), self.random_seed)),
        }
    }
}

fn meta(method: &str, class: usize) -> MapMeta {
    MapMeta {
        method: method.into(),
        target: format!("class {class}"),
        theta: None,
        model_hash: None,
    }
}

/// Gradient of the class score at `x`.
pub fn vanilla_gradients(net: &LogicNetwork, x: &[f64], class: usize) -> Result<SaliencyMap> {
    Ok(SaliencyMap::new(net.backward_soft(x, class)?, meta("VG", class)))
}

/// `(x - baseline) * mean_k grad(baseline + k/m (x - baseline))`, `k = 1..=m`.
pub fn integrated_gradients(
    net: &LogicNetwork,
    x: &[f64],
    class: usize,
    baseline: &[f64],
    steps: usize,
) -> Result<SaliencyMap> {
    if steps == 0 {
        return Err(Error::Config("integrated gradients needs at least one step".into()));
    }
    if baseline.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: baseline.len(),
        });
    }
    let delta: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mut total = vec![0.0; x.len()];
    let mut point = vec![0.0; x.len()];
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        for ((p, b), d) in point.iter_mut().zip(baseline).zip(&delta) {
            *p = b + t * d;
        }
        let g = net.backward_soft(&point, class)?;
        for (acc, gi) in total.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    let values = total
        .iter()
        .zip(&delta)
        .map(|(g, d)| d * g / steps as f64)
        .collect();
    Ok(SaliencyMap::new(values, meta("IG", class)))
}

/// I.i.d. standard normal entries.
pub fn random_map(input_dim: usize, seed: u64) -> SaliencyMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..input_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    SaliencyMap::new(
        values,
        MapMeta {
            method: "random".into(),
            target: format!("seed {seed}"),
            theta: None,
            model_hash: None,
        },
    )
}
