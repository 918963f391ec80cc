//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use ectwist_nn::AdamConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::dataset::InputMode;
use super::saliency::SaliencyTarget;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub n: usize,
    pub curves: PathBuf,
    /// Training band, inclusive.
    pub conductor_min: u64,
    pub conductor_max: u64,
    /// Transfer band, inclusive; should not overlap the training band.
    pub transfer_min: u64,
    pub transfer_max: u64,
    pub random_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// BCE weight of the genuine-curve class.
    pub pos_weight: f64,
    pub train_percent: u32,
    /// `anti-leak` or `literal`.
    pub input_mode: String,
    /// Curves of higher rank are dropped from the rank task.
    pub max_rank: u32,
    /// `predicted` or a class index.
    pub saliency_class: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            n: 100,
            curves: PathBuf::from("data/curves.csv"),
            conductor_min: 1,
            conductor_max: 2000,
            transfer_min: 2001,
            transfer_max: 3000,
            random_count: 20_000,
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            pos_weight: 3.0,
            train_percent: 80,
            input_mode: "anti-leak".into(),
            max_rank: 2,
            saliency_class: "predicted".into(),
        }
    }
}

/// Settings that are not configurable, listed in every written config.
pub const FIXED: &[(&str, &str)] = &[
    ("conv_kernel", "3 per axis, stride 1, zero padding 1"),
    ("pool", "max, window 2, stride 2, floor on odd extents"),
    ("channels", "64,128,256,512,512"),
    (
        "head",
        "global average pool, dense 512->256, batch norm, relu, dropout 0.5, dense 256->outputs",
    ),
    ("batch_norm", "eps 1e-5, momentum 0.1, unbiased running variance"),
    (
        "init",
        "uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases, gamma 1, beta 0",
    ),
    ("threshold", "logit >= 0 predicts a genuine curve"),
    ("positive_class", "genuine curves"),
    ("split", "stratified by label"),
    ("rounding", "x_p = round(2 x~ sqrt p), ties away from zero"),
    ("precision", "binary32 training, binary64 gradient checks"),
];

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let Value::Object(mut map) = serde_json::to_value(Config::default())? else {
            unreachable!("config serialises to an object")
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(old) = map.get(key) else {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
            };
            let parsed = match old {
                Value::String(_) => Value::String(value.to_string()),
                _ => serde_json::from_str(value)
                    .map_err(|_| Error::Config(format!("line {}: bad value {value:?} for {key}", lineno + 1)))?,
            };
            map.insert(key.to_string(), parsed);
        }
        let config: Config = serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        self.input_mode()?;
        self.saliency_target()?;
        if self.n == 0 || self.batch_size < 2 || self.train_percent == 0 || self.train_percent >= 100 {
            return Err(Error::Config(
                "n > 0, batch_size >= 2 and 0 < train_percent < 100 required".into(),
            ));
        }
        if self.conductor_min > self.conductor_max || self.transfer_min > self.transfer_max {
            return Err(Error::Config("empty conductor band".into()));
        }
        if self.transfer_min <= self.conductor_max && self.conductor_min <= self.transfer_max {
            return Err(Error::Config("transfer band overlaps the training band".into()));
        }
        Ok(())
    }

    pub fn input_mode(&self) -> Result<InputMode> {
        match self.input_mode.as_str() {
            "anti-leak" => Ok(InputMode::AntiLeak),
            "literal" => Ok(InputMode::Literal),
            other => Err(Error::Config(format!(
                "input_mode {other:?}: expected anti-leak or literal"
            ))),
        }
    }

    pub fn saliency_target(&self) -> Result<SaliencyTarget> {
        match self.saliency_class.as_str() {
            "predicted" => Ok(SaliencyTarget::Predicted),
            s => s
                .parse()
                .map(SaliencyTarget::Fixed)
                .map_err(|_| Error::Config(format!("saliency_class {s:?}: expected predicted or an index"))),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// The config as `key = value` lines, followed by the fixed settings as comments.
    pub fn to_text(&self) -> String {
        let Ok(Value::Object(map)) = serde_json::to_value(self) else {
            unreachable!("config serialises to an object")
        };
        let mut out = String::new();
        for (k, v) in &map {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str("# fixed settings\n");
        for (k, v) in FIXED {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Map<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serialises to an object"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let c = Config {
            seed: 7,
            input_mode: "literal".into(),
            learning_rate: 5e-4,
            ..Config::default()
        };
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn overrides_and_errors() {
        let c = Config::parse("# desk run\nepochs = 3\nsaliency_class = 1  # fixed class\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.saliency_target().unwrap(), SaliencyTarget::Fixed(1));
        assert!(Config::parse("epoch = 3").is_err());
        assert!(Config::parse("epochs = many").is_err());
        assert!(Config::parse("input_mode = fuzzy").is_err());
        assert!(Config::parse("transfer_min = 1500").is_err());
    }
}
