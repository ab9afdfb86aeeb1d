//! Saliency maps and their file exports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Inclusive `[min; step; max]` threshold sweep. A zero step means a single
/// threshold and requires `min == max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaRange {
    pub min: f64,
    pub step: f64,
    pub max: f64,
}

impl ThetaRange {
    pub const SINGLE_ZERO: ThetaRange = ThetaRange {
        min: 0.0,
        step: 0.0,
        max: 0.0,
    };
    pub const FULL_SWEEP: ThetaRange = ThetaRange {
        min: 0.0,
        step: 0.01,
        max: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let err = Err(Error::ThetaRange {
            min: self.min,
            step: self.step,
            max: self.max,
        });
        let finite = self.min.is_finite() && self.max.is_finite() && self.step.is_finite();
        if !finite || self.min > self.max || self.step < 0.0 {
            return err;
        }
        if self.step == 0.0 && self.min != self.max {
            return err;
        }
        if !(0.0..=1.0).contains(&self.min) || !(0.0..=1.0).contains(&self.max) {
            return err;
        }
        Ok(())
    }

    /// Threshold samples `min, min + step, ..., max`.
    pub fn samples(&self) -> Result<Vec<f64>> {
        self.validate()?;
        if self.step == 0.0 || self.min == self.max {
            return Ok(vec![self.min]);
        }
        let n = ((self.max - self.min) / self.step).round() as usize;
        Ok((0..=n)
            .map(|k| self.min + (self.max - self.min) * k as f64 / n as f64)
            .collect())
    }
}

impl std::fmt::Display for ThetaRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}; {}; {}]", self.min, self.step, self.max)
    }
}

/// Where a map came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MapMeta {
    /// Variant tag (`L_E`, `C_A`, ...) or baseline name (`VG`, `IG`, `random`).
    pub method: String,
    /// Sample index, class id or root description.
    pub target: String,
    pub theta: Option<ThetaRange>,
    pub model_hash: Option<String>,
}

/// Signed per-input importance. Positive entries support the output when the
/// input is 1, negative entries when it is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub values: Vec<f64>,
    pub meta: MapMeta,
}

impl SaliencyMap {
    pub fn new(values: Vec<f64>, meta: MapMeta) -> Self {
        SaliencyMap { values, meta }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of inputs with nonzero importance.
    pub fn important_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("pixel_index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(s, "{i},{v}").unwrap();
        }
        s
    }

    /// 8-bit grayscale with `[-m, m] -> [0, 255]`, `m = max |v|`, so 128 is zero.
    pub fn to_pgm(&self, width: usize, height: usize) -> Result<Vec<u8>> {
        if width * height != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                actual: width * height,
            });
        }
        let peak = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend(self.values.iter().map(|&v| {
            if peak == 0.0 {
                128
            } else {
                (127.5 + 127.5 * v / peak).round().clamp(0.0, 255.0) as u8
            }
        }));
        Ok(out)
    }

    /// `key = value` sidecar describing the map.
    pub fn metadata_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "method = {:?}", self.meta.method).unwrap();
        writeln!(s, "target = {:?}", self.meta.target).unwrap();
        match self.meta.theta {
            Some(t) => writeln!(s, "theta = [{:?}, {:?}, {:?}]", t.min, t.step, t.max).unwrap(),
            None => writeln!(s, "theta = []").unwrap(),
        }
        writeln!(
            s,
            "model_hash = {:?}",
            self.meta.model_hash.as_deref().unwrap_or("")
        )
        .unwrap();
        writeln!(s, "important_inputs = {}", self.important_count()).unwrap();
        s
    }

    /// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.meta.toml` into `dir`.
    pub fn export(&self, dir: &Path, stem: &str, width: usize, height: usize) -> Result<()> {
        let write = |name: String, bytes: &[u8]| {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
        };
        write(format!("{stem}.csv"), self.to_csv().as_bytes())?;
        write(format!("{stem}.pgm"), &self.to_pgm(width, height)?)?;
        write(format!("{stem}.meta.toml"), self.metadata_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_samples() {
        let full = ThetaRange::FULL_SWEEP.samples().unwrap();
        assert_eq!(full.len(), 101);
        assert_eq!(full[0], 0.0);
        assert_eq!(full[100], 1.0);
        assert!((full[37] - 0.37).abs() < 1e-15);
        assert_eq!(ThetaRange::SINGLE_ZERO.samples().unwrap(), vec![0.0]);
        let bad = ThetaRange {
            min: 0.6,
            step: 0.1,
            max: 0.2,
        };
        assert!(matches!(bad.samples(), Err(Error::ThetaRange { .. })));
    }

    #[test]
    fn pgm_mapping() {
        let map = SaliencyMap::new(vec![-2.0, 0.0, 2.0, 1.0], MapMeta::default());
        let pgm = map.to_pgm(2, 2).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[0, 128, 255, 191]);
        assert!(map.to_pgm(3, 1).is_err());
        assert_eq!(map.important_count(), 3);
        let zero = SaliencyMap::new(vec![0.0; 4], MapMeta::default());
        assert!(zero.to_pgm(2, 2).unwrap().ends_with(&[128, 128, 128, 128]));
    }

    #[test]
    fn csv_layout() {
        let map = SaliencyMap::new(vec![1.0, -0.5], MapMeta::default());
        assert_eq!(map.to_csv(), "pixel_index,value\n0,1\n1,-0.5\n");
    }
}
