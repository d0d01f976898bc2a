//! Text checkpoint: an architecture header followed by the flat parameter
//! array, one value per line with 17 significant digits.
//!
//! ```text
//! neural-galerkin checkpoint 1
//! architecture: shallow_periodic_gaussian
//! period: 6.0000000000000000e1
//! width: 10
//! dim: 1
//! frozen_features: false
//! time: 0.0000000000000000e0
//! params: 30
//! 1.2345678901234567e-1
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Architecture, NetSpec, ParamVector};
use crate::error::{Error, Result};

const MAGIC: &str = "neural-galerkin checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetSpec,
    pub time: f64,
    pub theta: ParamVector,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let spec = &self.spec;
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "architecture: {}", spec.architecture.name()).unwrap();
        if let Some(period) = spec.architecture.period() {
            writeln!(s, "period: {period:.16e}").unwrap();
        }
        if let Architecture::DeepTanhPeriodic { layers, .. } = spec.architecture {
            writeln!(s, "layers: {layers}").unwrap();
        }
        writeln!(s, "width: {}", spec.width).unwrap();
        writeln!(s, "dim: {}", spec.dim).unwrap();
        writeln!(s, "frozen_features: {}", spec.frozen_features).unwrap();
        writeln!(s, "time: {:.16e}", self.time).unwrap();
        writeln!(s, "params: {}", self.theta.len()).unwrap();
        for v in &self.theta.values {
            writeln!(s, "{v:.16e}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::Parse("missing checkpoint header".into()));
        }
        let mut header = std::collections::BTreeMap::new();
        let mut count = None;
        for line in lines.by_ref() {
            let (key, value) =
                line.split_once(':').ok_or_else(|| Error::Parse(format!("malformed header line `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "params" {
                count = Some(parse_num::<usize>(value, key)?);
                break;
            }
            header.insert(key.to_string(), value.to_string());
        }
        let count = count.ok_or_else(|| Error::Parse("missing `params` line".into()))?;
        let get = |k: &str| header.get(k).ok_or_else(|| Error::Parse(format!("missing `{k}`")));
        let period = || -> Result<f64> { parse_num(get("period")?, "period") };
        let architecture = match get("architecture")?.as_str() {
            "shallow_gaussian" => Architecture::ShallowGaussian,
            "shallow_squared_gaussian" => Architecture::ShallowSquaredGaussian,
            "shallow_periodic_gaussian" => Architecture::ShallowPeriodicGaussian { period: period()? },
            "deep_tanh_periodic" => {
                Architecture::DeepTanhPeriodic { period: period()?, layers: parse_num(get("layers")?, "layers")? }
            }
            other => return Err(Error::Parse(format!("unknown architecture `{other}`"))),
        };
        let spec = NetSpec {
            architecture,
            width: parse_num(get("width")?, "width")?,
            dim: parse_num(get("dim")?, "dim")?,
            frozen_features: parse_num(get("frozen_features")?, "frozen_features")?,
        };
        let time = parse_num(get("time")?, "time")?;
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| parse_num::<f64>(l.trim(), "parameter"))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != count {
            return Err(Error::Parse(format!("expected {count} parameters, found {}", values.len())));
        }
        let theta = ParamVector::new(&spec, values)?;
        Ok(Checkpoint { spec, time, theta })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("invalid {what} `{s}`")))
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_text())?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deep_round_trip_is_exact() {
        let spec = NetSpec::new(Architecture::DeepTanhPeriodic { period: std::f64::consts::TAU, layers: 3 }, 2, 1);
        let values: Vec<f64> = (0..17).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let ck = Checkpoint { theta: ParamVector::new(&spec, values).unwrap(), spec, time: 0.1 };
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_truncated_arrays() {
        let spec = NetSpec::new(Architecture::ShallowGaussian, 1, 1);
        let ck = Checkpoint { theta: ParamVector::new(&spec, vec![1.0, 2.0, 3.0]).unwrap(), spec, time: 0.0 };
        let text = ck.to_text();
        let cut: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(Checkpoint::from_text(&cut).is_err());
    }
}
