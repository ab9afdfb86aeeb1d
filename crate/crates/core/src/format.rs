//! Versioned text format for networks and MiniNets.
//!
//! ```text
//! format_version 1
//! input_dim 400
//! class_count 10
//! group_size 250
//! mode hard
//! tau 1.0000000000000000e1
//! layers 2
//! layer 2500
//! 17 203 6
//! ...
//! ```
//!
//! Hard node lines are `in_a in_b gate_id`; soft node lines are `in_a in_b`
//! followed by 16 logits with 17 significant digits. MiniNet files add
//! `mini_class`, `threshold` and `parent_hash` after `tau`, and one
//! `remap <layer> <parent ids...>` line per layer after the node lines.
//! Keys appear in a fixed order and anything else is rejected.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gate::GateType;
use crate::network::{Layer, LayerGates, LogicNetwork, Mode, Wire};

pub const FORMAT_VERSION: u32 = 1;

/// MiniNet header fields and parent index map.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniMeta {
    pub class_id: usize,
    pub threshold: f64,
    pub parent_hash: String,
    /// `remap[layer][mini index]` is the parent node index, `None` for filler nodes.
    pub remap: Vec<Vec<Option<usize>>>,
}

/// A parsed model file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDocument {
    pub network: LogicNetwork,
    pub mini: Option<MiniMeta>,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_text(net: &LogicNetwork) -> String {
    write_document(net, None)
}

pub fn write_document(net: &LogicNetwork, mini: Option<&MiniMeta>) -> String {
    let mut s = String::new();
    writeln!(s, "format_version {FORMAT_VERSION}").unwrap();
    writeln!(s, "input_dim {}", net.input_dim()).unwrap();
    writeln!(s, "class_count {}", net.class_count()).unwrap();
    writeln!(s, "group_size {}", net.group_size()).unwrap();
    writeln!(s, "mode {}", net.mode().as_str()).unwrap();
    writeln!(s, "tau {}", real(net.tau())).unwrap();
    if let Some(m) = mini {
        writeln!(s, "mini_class {}", m.class_id).unwrap();
        writeln!(s, "threshold {}", real(m.threshold)).unwrap();
        writeln!(s, "parent_hash {}", m.parent_hash).unwrap();
    }
    writeln!(s, "layers {}", net.depth()).unwrap();
    for layer in net.layers() {
        writeln!(s, "layer {}", layer.width()).unwrap();
        match &layer.gates {
            LayerGates::Hard(gates) => {
                for (w, g) in layer.wires.iter().zip(gates) {
                    writeln!(s, "{} {} {}", w.a, w.b, g.id()).unwrap();
                }
            }
            LayerGates::Soft(logits) => {
                for (w, l) in layer.wires.iter().zip(logits) {
                    write!(s, "{} {}", w.a, w.b).unwrap();
                    for v in l {
                        write!(s, " {}", real(*v)).unwrap();
                    }
                    s.push('\n');
                }
            }
        }
    }
    if let Some(m) = mini {
        for (li, ids) in m.remap.iter().enumerate() {
            write!(s, "remap {li}").unwrap();
            for id in ids {
                match id {
                    Some(i) => write!(s, " {i}").unwrap(),
                    None => s.push_str(" -"),
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Hex SHA-256 of the canonical text form.
pub fn model_hash(net: &LogicNetwork) -> String {
    hash_bytes(to_text(net).as_bytes())
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save(net: &LogicNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<LogicNetwork> {
    Ok(load_document(path)?.network)
}

pub fn load_document(path: &Path) -> Result<ModelDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_document(&text)
}

pub fn from_text(text: &str) -> Result<LogicNetwork> {
    Ok(parse_document(text)?.network)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<Option<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    fn expect_line(&mut self) -> Result<&'a str> {
        self.next_line()?
            .ok_or_else(|| self.err("unexpected end of file"))
    }

    fn key(&mut self, key: &str) -> Result<&'a str> {
        let line = self.expect_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.err(format!("expected `{key}`, found `{line}`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, v: &str, what: &str) -> Result<T> {
        v.parse()
            .map_err(|_| self.err(format!("invalid {what} `{v}`")))
    }
}

pub fn parse_document(text: &str) -> Result<ModelDocument> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let version: u32 = {
        let v = lines.key("format_version")?;
        lines.parse(v, "format_version")?
    };
    if version != FORMAT_VERSION {
        return Err(Error::SchemaVersion(version));
    }
    let v = lines.key("input_dim")?;
    let input_dim: usize = lines.parse(v, "input_dim")?;
    let v = lines.key("class_count")?;
    let class_count: usize = lines.parse(v, "class_count")?;
    let v = lines.key("group_size")?;
    let group_size: usize = lines.parse(v, "group_size")?;
    let mode = match lines.key("mode")? {
        "hard" => Mode::Hard,
        "soft" => Mode::Soft,
        other => return Err(lines.err(format!("unknown mode `{other}`"))),
    };
    let v = lines.key("tau")?;
    let tau: f64 = lines.parse(v, "tau")?;

    let mut line = lines.expect_line()?;
    let mut mini_header = None;
    if let Some(v) = line.strip_prefix("mini_class ") {
        let class_id: usize = lines.parse(v.trim(), "mini_class")?;
        let v = lines.key("threshold")?;
        let threshold: f64 = lines.parse(v, "threshold")?;
        let parent_hash = lines.key("parent_hash")?.to_string();
        mini_header = Some((class_id, threshold, parent_hash));
        line = lines.expect_line()?;
    }
    let depth: usize = match line.split_once(' ') {
        Some(("layers", v)) => lines.parse(v.trim(), "layers")?,
        _ => return Err(lines.err(format!("expected `layers`, found `{line}`"))),
    };

    let mut layers = Vec::with_capacity(depth);
    let mut prev_width = input_dim;
    for li in 0..depth {
        let v = lines.key("layer")?;
        let width: usize = lines.parse(v, "layer width")?;
        let mut wires = Vec::with_capacity(width);
        let mut hard = Vec::new();
        let mut soft = Vec::new();
        for ni in 0..width {
            let line = lines.expect_line()?;
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            let expected = match mode {
                Mode::Hard => 3,
                Mode::Soft => 18,
            };
            if fields.len() != expected {
                return Err(lines.err(format!(
                    "node line has {} fields, expected {expected}",
                    fields.len()
                )));
            }
            let a: usize = lines.parse(fields[0], "input index")?;
            let b: usize = lines.parse(fields[1], "input index")?;
            for index in [a, b] {
                if index >= prev_width {
                    return Err(Error::DanglingIndex {
                        layer: li,
                        node: ni,
                        index,
                        width: prev_width,
                    });
                }
            }
            wires.push(Wire::new(a, b));
            match mode {
                Mode::Hard => {
                    let id: u64 = lines.parse(fields[2], "gate id")?;
                    let gate = u8::try_from(id)
                        .map_err(|_| Error::InvalidGate(id))
                        .and_then(GateType::from_id)?;
                    hard.push(gate);
                }
                Mode::Soft => {
                    let mut l = [0.0; 16];
                    for (slot, f) in l.iter_mut().zip(&fields[2..]) {
                        *slot = lines.parse(f, "logit")?;
                    }
                    soft.push(l);
                }
            }
        }
        layers.push(match mode {
            Mode::Hard => Layer::hard(wires, hard),
            Mode::Soft => Layer::soft(wires, soft),
        });
        prev_width = width;
    }

    let mini = match mini_header {
        None => None,
        Some((class_id, threshold, parent_hash)) => {
            let mut remap = Vec::with_capacity(depth);
            for (li, layer) in layers.iter().enumerate() {
                let v = lines.key("remap")?;
                let mut parts = v.split_ascii_whitespace();
                let idx: usize = lines.parse(parts.next().unwrap_or(""), "remap layer")?;
                if idx != li {
                    return Err(lines.err(format!("remap for layer {idx}, expected {li}")));
                }
                let ids = parts
                    .map(|p| {
                        if p == "-" {
                            Ok(None)
                        } else {
                            lines.parse(p, "remap index").map(Some)
                        }
                    })
                    .collect::<Result<Vec<Option<usize>>>>()?;
                if ids.len() != layer.width() {
                    return Err(lines.err("remap length differs from layer width"));
                }
                remap.push(ids);
            }
            Some(MiniMeta {
                class_id,
                threshold,
                parent_hash,
                remap,
            })
        }
    };

    if let Some(extra) = lines.next_line()? {
        return Err(lines.err(format!("unexpected content `{extra}`")));
    }
    let network = LogicNetwork::new(input_dim, class_count, group_size, tau, layers)?;
    Ok(ModelDocument { network, mini })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64, soft: bool) -> LogicNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_dim = rng.random_range(2..12);
        let class_count = rng.random_range(1..4);
        let group_size = rng.random_range(1..4);
        let depth = rng.random_range(1..4);
        let mut prev = input_dim;
        let mut layers = Vec::new();
        for li in 0..depth {
            let width = if li + 1 == depth {
                class_count * group_size
            } else {
                rng.random_range(1..10)
            };
            let wires = (0..width)
                .map(|_| Wire::new(rng.random_range(0..prev), rng.random_range(0..prev)))
                .collect();
            layers.push(if soft {
                let logits = (0..width)
                    .map(|_| {
                        let mut l = [0.0; 16];
                        for v in &mut l {
                            *v = rng.random_range(-1e3..1e3) * rng.random::<f64>().powi(7);
                        }
                        l
                    })
                    .collect();
                Layer::soft(wires, logits)
            } else {
                let gates = (0..width)
                    .map(|_| GateType::from_id(rng.random_range(0..16)).unwrap())
                    .collect();
                Layer::hard(wires, gates)
            });
            prev = width;
        }
        LogicNetwork::new(input_dim, class_count, group_size, 0.5 + rng.random::<f64>(), layers)
            .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn round_trip(seed in any::<u64>(), soft in any::<bool>()) {
            let net = random_net(seed, soft);
            let back = from_text(&to_text(&net)).unwrap();
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn mini_round_trip() {
        let net = random_net(3, false);
        let meta = MiniMeta {
            class_id: 0,
            threshold: 12.25,
            parent_hash: "abc".into(),
            remap: net
                .layers()
                .iter()
                .map(|l| (0..l.width()).map(|i| if i == 0 { None } else { Some(i * 2) }).collect())
                .collect(),
        };
        let doc = parse_document(&write_document(&net, Some(&meta))).unwrap();
        assert_eq!(doc.network, net);
        assert_eq!(doc.mini, Some(meta));
    }

    #[test]
    fn rejects_bad_files() {
        let good = "format_version 1\ninput_dim 2\nclass_count 1\ngroup_size 1\nmode hard\ntau 1\nlayers 1\nlayer 1\n0 1 1\n";
        assert!(from_text(good).is_ok());
        assert!(matches!(
            from_text(&good.replace("0 1 1", "0 2 1")),
            Err(Error::DanglingIndex { index: 2, .. })
        ));
        assert!(matches!(
            from_text(&good.replace("format_version 1", "format_version 2")),
            Err(Error::SchemaVersion(2))
        ));
        assert!(matches!(
            from_text(&good.replace("0 1 1", "0 1 16")),
            Err(Error::InvalidGate(16))
        ));
        assert!(from_text(&good.replace("tau 1", "tau 1\ncolour red")).is_err());
        assert!(from_text(&format!("{good}extra 1\n")).is_err());
        assert!(from_text(&good[..good.len() - 6]).is_err());
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.txt");
        let net = random_net(11, true);
        save(&net, &path).unwrap();
        assert_eq!(load(&path).unwrap(), net);
        assert!(matches!(load(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
