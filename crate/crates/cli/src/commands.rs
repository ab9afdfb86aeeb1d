use std::path::{Path, PathBuf};
use std::time::Instant;

use logicnet::data::{self, Dataset};
use logicnet::explain::{self, ExplanationSpec, Target, Variant};
use logicnet::format;
use logicnet::mininet::{self, MiniNet};
use logicnet::switchdist::{self, Method};
use logicnet::train::{self, TrainConfig};
use logicnet::{Error, GateType, LayerGates, LogicNetwork, Mode};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{ensure_dir, RunManifest};
use crate::Common;

const CLASS_COUNT: usize = 10;

struct Loaded {
    train: Dataset,
    test: Dataset,
    hash: String,
}

fn load_config(common: &Common) -> CliResult<(ExperimentConfig, u64)> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok((cfg.clone(), cfg.train.seed))
}

/// Reads the IDX files and reproduces the training split.
fn load_split(common: &Common, cfg: &TrainConfig) -> CliResult<Loaded> {
    let mut full = data::load_mnist_dir(&common.data_dir)?;
    if let Some(limit) = cfg.limit {
        full = full.truncate(limit);
    }
    let hash = full.content_hash();
    let (train, test) = data::split(&full, cfg.split_ratio, cfg.seed)?;
    Ok(Loaded { train, test, hash })
}

fn load_model(path: &Path) -> CliResult<LogicNetwork> {
    Ok(format::load_document(path)?.network)
}

fn require_hard(net: &LogicNetwork, model: &Path) -> CliResult<()> {
    if net.mode() == Mode::Soft {
        eprintln!(
            "hint: {} is a soft model; run `logicnet discretize --model {} --out <file>` first",
            model.display(),
            model.display()
        );
    }
    Ok(net.require_hard()?)
}

fn sibling_manifest(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    path.with_file_name(format!("{name}.manifest.toml"))
}

fn parse_classes(spec: &str, net: &LogicNetwork) -> CliResult<Vec<usize>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok((0..net.class_count()).collect());
    }
    let class: usize = spec
        .parse()
        .map_err(|_| CliError::Usage(format!("--class must be a class id or `all`, got `{spec}`")))?;
    net.check_class(class)?;
    Ok(vec![class])
}

pub fn train(common: &Common, out: &Path) -> CliResult<()> {
    let (cfg, seed) = load_config(common)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("train", seed, &cfg.to_toml());
    let loaded = load_split(common, &cfg.train)?;
    let mut net = train::init_network(&cfg.train, loaded.train.dim(), CLASS_COUNT, seed)?;
    let started = Instant::now();
    let report = train::train_with_progress(
        &mut net,
        &loaded.train,
        Some(&loaded.test),
        &cfg.train,
        |e| {
            eprintln!(
                "epoch {:>3}  loss {:.4}  train {:.4}  test {:.4}  {:.0?}",
                e.epoch,
                e.loss,
                e.train_acc,
                e.test_acc.unwrap_or(f64::NAN),
                started.elapsed()
            )
        },
    )?;
    let hard = train::discretize(&net);
    manifest.write_artifact(&out.join("model_soft.txt"), format::to_text(&net).as_bytes())?;
    manifest.write_artifact(&out.join("model.txt"), format::to_text(&hard).as_bytes())?;
    manifest.write_artifact(&out.join("train_report.csv"), report.to_csv().as_bytes())?;
    manifest.model_hash = Some(format::model_hash(&hard));
    manifest.dataset_hash = Some(loaded.hash);
    manifest.finish(&out.join("manifest.toml"))?;
    println!(
        "test accuracy: discretized {:.4}, relaxed {:.4}",
        report.final_test_acc.unwrap_or(f64::NAN),
        report.final_soft_test_acc.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn discretize(model: &Path, out: &Path) -> CliResult<()> {
    let net = load_model(model)?;
    let mut manifest = RunManifest::start("discretize", 0, "");
    let hard = train::discretize(&net);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    manifest.write_artifact(out, format::to_text(&hard).as_bytes())?;
    manifest.model_hash = Some(format::model_hash(&hard));
    manifest.finish(&sibling_manifest(out))?;
    Ok(())
}

pub fn explain(
    common: &Common,
    model: &Path,
    variant: &str,
    sample: Option<usize>,
    class: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    let v = Variant::parse(variant)
        .ok_or_else(|| CliError::Usage(format!("unknown variant `{variant}`")))?;
    if v.is_local() {
        if class.is_some() {
            return Err(CliError::Usage(format!(
                "{} explains a sample; pass --sample, not --class",
                v.tag()
            )));
        }
        if sample.is_none() {
            return Err(CliError::Usage(format!("{} needs --sample", v.tag())));
        }
    } else {
        if sample.is_some() {
            return Err(CliError::Usage(format!(
                "{} explains a class; pass --class, not --sample",
                v.tag()
            )));
        }
        if class.is_none() {
            return Err(CliError::Usage(format!("{} needs --class", v.tag())));
        }
    }
    let (cfg, seed) = load_config(common)?;
    let net = load_model(model)?;
    require_hard(&net, model)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("explain", seed, &cfg.to_toml());
    let mut spec = ExplanationSpec::new(v);
    if let Some(theta) = cfg.explain.theta_range() {
        spec.theta = theta;
    }
    spec.rule = cfg.explain.rule();
    let needs_data = v.is_local() || matches!(v, Variant::GE | Variant::GA | Variant::CE | Variant::CA);
    let loaded = if needs_data {
        Some(load_split(common, &cfg.train)?)
    } else {
        None
    };
    let (target, stem) = match (sample, class) {
        (Some(i), _) => {
            let test = &loaded.as_ref().expect("loaded for local variants").test;
            let input = test.images.get(i).ok_or_else(|| {
                CliError::Usage(format!("--sample {i} is out of range for {} test samples", test.len()))
            })?;
            (
                Target::Sample {
                    input,
                    class: None,
                },
                format!("{}_sample{i}", v.tag()),
            )
        }
        (None, Some(c)) => (Target::Class(c), format!("{}_class{c}", v.tag())),
        (None, None) => unreachable!("checked above"),
    };
    let mut map = explain::explain(&net, loaded.as_ref().map(|l| &l.train), target, &spec)?;
    let hash = format::model_hash(&net);
    map.meta.model_hash = Some(hash.clone());
    let manifest_name = format!("{stem}.manifest.toml");
    let (w, h) = (cfg.explain.image_width, cfg.explain.image_height);
    manifest.write_artifact(&out.join(format!("{stem}.csv")), map.to_csv().as_bytes())?;
    manifest.write_artifact(&out.join(format!("{stem}.pgm")), &map.to_pgm(w, h)?)?;
    let meta = format!("{}manifest = {manifest_name:?}\n", map.metadata_text());
    manifest.write_artifact(&out.join(format!("{stem}.meta.toml")), meta.as_bytes())?;
    manifest.model_hash = Some(hash);
    manifest.dataset_hash = loaded.map(|l| l.hash);
    manifest.finish(&out.join(manifest_name))?;
    println!("{stem}: {}, Σ = {}", map.meta.target, map.important_count());
    Ok(())
}

pub fn eval_switchdist(common: &Common, model: &Path, methods: &str, out: &Path) -> CliResult<()> {
    let methods: Vec<Method> = methods
        .split(',')
        .filter(|m| !m.trim().is_empty())
        .map(Method::parse)
        .collect::<Result<_, Error>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    let (cfg, seed) = load_config(common)?;
    let net = load_model(model)?;
    require_hard(&net, model)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("eval-switchdist", seed, &cfg.to_toml());
    let loaded = load_split(common, &cfg.train)?;
    let summary = switchdist::evaluate(
        &net,
        &loaded.test,
        Some(&loaded.train),
        &methods,
        &cfg.switchdist.eval_config(seed),
    )?;
    manifest.write_artifact(&out.join("switchdist.csv"), summary.to_csv().as_bytes())?;
    if cfg.switchdist.traces {
        manifest.write_artifact(&out.join("traces.csv"), summary.traces_csv().as_bytes())?;
    }
    manifest.model_hash = Some(summary.model_hash.clone());
    manifest.dataset_hash = Some(loaded.hash);
    manifest.finish(&out.join("manifest.toml"))?;
    println!("{:<8} {:<5} {:>14} {:>9}", "method", "dir", "SwitchDist", "%Switch");
    for r in &summary.rows {
        println!(
            "{:<8} {:<5} {:>6.2} ± {:<5.2} {:>8.1}%",
            r.method,
            r.direction.tag(),
            r.mean,
            r.std,
            r.percent_switch
        );
    }
    Ok(())
}

/// Mini scores must equal the parent's class scores on every test sample.
fn check_equivalence(parent: &LogicNetwork, minis: &[MiniNet], samples: &[Vec<bool>]) -> CliResult<()> {
    let parent_scores = parent.scores_hard_batch(samples)?;
    for mini in minis {
        let scores = mini.scores_batch(samples)?;
        if let Some(i) = (0..samples.len()).find(|&i| scores[i] != parent_scores[i][mini.class_id]) {
            return Err(CliError::Invariant(format!(
                "MiniNet for class {} disagrees with its parent on sample {i}",
                mini.class_id
            )));
        }
    }
    Ok(())
}

pub fn prune(common: &Common, model: &Path, class: &str, out: &Path) -> CliResult<()> {
    let (cfg, seed) = load_config(common)?;
    let net = load_model(model)?;
    require_hard(&net, model)?;
    let classes = parse_classes(class, &net)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("prune", seed, &cfg.to_toml());
    let loaded = load_split(common, &cfg.train)?;
    let minis = mininet::prune_classes(&net, &classes, &loaded.train)?;
    check_equivalence(&net, &minis, &loaded.test.images)?;
    let mut reports = Vec::with_capacity(minis.len());
    for mini in &minis {
        let path = out.join(format!("mini_class{}.txt", mini.class_id));
        manifest.write_artifact(&path, mini.to_text().as_bytes())?;
        reports.push(mininet::prune_report(&net, mini, &loaded.test)?);
    }
    let csv = mininet::prune_csv(&reports);
    manifest.write_artifact(&out.join("prune_report.csv"), csv.as_bytes())?;
    manifest.model_hash = Some(format::model_hash(&net));
    manifest.dataset_hash = Some(loaded.hash);
    manifest.finish(&out.join("manifest.toml"))?;
    print!("{csv}");
    Ok(())
}

pub fn bench(
    common: &Common,
    model: &Path,
    class: &str,
    reps: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    let (mut cfg, seed) = load_config(common)?;
    if let Some(r) = reps {
        cfg.prune.repetitions = r;
    }
    let net = load_model(model)?;
    require_hard(&net, model)?;
    let classes = parse_classes(class, &net)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("bench", seed, &cfg.to_toml());
    let loaded = load_split(common, &cfg.train)?;
    let minis = mininet::prune_classes(&net, &classes, &loaded.train)?;
    check_equivalence(&net, &minis, &loaded.test.images)?;
    let reports = mininet::benchmark(&net, &minis, &loaded.test, cfg.prune.repetitions)?;
    let csv = mininet::bench_csv(&reports);
    manifest.write_artifact(&out.join("bench.csv"), csv.as_bytes())?;
    manifest.model_hash = Some(format::model_hash(&net));
    manifest.dataset_hash = Some(loaded.hash);
    manifest.finish(&out.join("manifest.toml"))?;
    print!("{csv}");
    Ok(())
}

pub fn inspect(model: &Path) -> CliResult<()> {
    let doc = format::load_document(model)?;
    let net = &doc.network;
    println!("mode         {}", net.mode().as_str());
    println!("input_dim    {}", net.input_dim());
    println!("class_count  {}", net.class_count());
    println!("group_size   {}", net.group_size());
    println!("tau          {}", net.tau());
    let widths: Vec<String> = net.layers().iter().map(|l| l.width().to_string()).collect();
    println!("layers       {}", widths.join(" "));
    println!("gates        {}", net.gate_count());
    println!("model_hash   {}", format::model_hash(net));
    if let Some(mini) = &doc.mini {
        println!("mini_class   {}", mini.class_id);
        println!("threshold    {}", mini.threshold);
        println!("parent_hash  {}", mini.parent_hash);
    }
    // Soft models are counted by their most likely gate.
    let hard;
    let counted = if net.mode() == Mode::Soft {
        hard = train::discretize(net);
        &hard
    } else {
        net
    };
    let mut histogram = [0usize; GateType::COUNT];
    for layer in counted.layers() {
        if let LayerGates::Hard(gates) = &layer.gates {
            for g in gates {
                histogram[g.id() as usize] += 1;
            }
        }
    }
    println!("gate histogram");
    for g in GateType::ALL {
        println!("  {:>2} {:<12} {}", g.id(), g.name(), histogram[g.id() as usize]);
    }
    Ok(())
}
