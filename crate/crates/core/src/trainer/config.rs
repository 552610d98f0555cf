//! Flat `key=value` configuration covering every hyperparameter.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::cf::ConfidenceParams;
use crate::dataio::NormalizationMode;
use crate::{CdlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_n: f64,
    pub lambda_w: f64,
    /// Layer precision; the MAP trainer always works in the infinite limit and
    /// only the sampler reads this value.
    pub lambda_s: f64,
    pub conf: ConfidenceParams,
    pub k: usize,
    /// Full architecture `K_0..K_L`; `None` means `[S, K, S]`.
    pub widths: Option<Vec<usize>>,
    pub noise_level: f64,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs_per_block: usize,
    pub max_sweeps: usize,
    /// Items per gradient step; 0 means full batch.
    pub batch_size: usize,
    /// Reconstruction-only epochs before the first sweep.
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub normalization: NormalizationMode,
    /// Stop once `|Δℒ| / |ℒ|` stays below this for `early_stop_patience` sweeps.
    pub early_stop_tol: f64,
    pub early_stop_patience: usize,
    /// Fixed initial weight standard deviation; `None` uses `min(λw^-1/2, fan_in^-1/2)`.
    pub init_sd: Option<f64>,
}

impl HyperParams {
    /// Defaults for everything but the four required precisions.
    pub fn with_lambdas(lambda_u: f64, lambda_v: f64, lambda_n: f64, lambda_w: f64) -> Self {
        Self {
            lambda_u,
            lambda_v,
            lambda_n,
            lambda_w,
            lambda_s: 100.0,
            conf: ConfidenceParams::default(),
            k: 50,
            widths: None,
            noise_level: 0.3,
            dropout_rate: 0.1,
            learning_rate: 0.1,
            momentum: 0.9,
            epochs_per_block: 1,
            max_sweeps: 20,
            batch_size: 128,
            pretrain_epochs: 0,
            seed: 0,
            normalization: NormalizationMode::BinaryPresence,
            early_stop_tol: 1e-6,
            early_stop_patience: 3,
            init_sd: None,
        }
    }

    /// Architecture for vocabulary size `s`.
    pub fn widths_for(&self, s: usize) -> Result<Vec<usize>> {
        let widths = self.widths.clone().unwrap_or_else(|| vec![s, self.k, s]);
        if widths.len() < 3 || widths.len() % 2 == 0 {
            return Err(CdlError::Validation(format!(
                "widths {widths:?} must list an odd number (>= 3) of layer sizes"
            )));
        }
        if widths[0] != s || widths[widths.len() - 1] != s {
            return Err(CdlError::Validation(format!(
                "widths {widths:?} must start and end with the vocabulary size {s}"
            )));
        }
        if widths[widths.len() / 2] != self.k {
            return Err(CdlError::Validation(format!(
                "widths {widths:?} must have the code width k={} in the middle",
                self.k
            )));
        }
        Ok(widths)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("lambda_u", self.lambda_u),
            ("lambda_v", self.lambda_v),
            ("lambda_n", self.lambda_n),
            ("lambda_w", self.lambda_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name}: must be a finite non-negative number, got {v}"));
            }
        }
        if self.lambda_u <= 0.0 {
            bad.push("lambda_u: must be positive".into());
        }
        if self.lambda_v <= 0.0 {
            bad.push("lambda_v: must be positive".into());
        }
        if !(self.lambda_s > 0.0) {
            bad.push(format!("lambda_s: must be positive or inf, got {}", self.lambda_s));
        }
        if ConfidenceParams::new(self.conf.a, self.conf.b).is_err() {
            bad.push(format!("a, b: need a > b >= 0, got a={} b={}", self.conf.a, self.conf.b));
        }
        if self.k == 0 {
            bad.push("k: must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            bad.push(format!("noise_level: {} outside [0, 1]", self.noise_level));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            bad.push(format!("dropout_rate: {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            bad.push(format!("learning_rate: must be non-negative, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bad.push(format!("momentum: {} outside [0, 1)", self.momentum));
        }
        if let Some(sd) = self.init_sd {
            if !(sd >= 0.0 && sd.is_finite()) {
                bad.push(format!("init_sd: must be non-negative, got {sd}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CdlError::Validation(bad.join("; ")))
        }
    }

    /// Parses a config file body. Every offending key is reported at once.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut errors = Vec::new();
        let mut hp = Self::with_lambdas(f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        let mut seen = Vec::new();
        for (key, value) in &pairs {
            if seen.contains(key) {
                errors.push(format!("{key}: given more than once"));
                continue;
            }
            seen.push(key.clone());
            if let Err(msg) = hp.set(key, value) {
                errors.push(msg);
            }
        }
        for req in REQUIRED {
            if !seen.iter().any(|k| k == req) {
                errors.push(format!("{req}: missing required key"));
            }
        }
        if errors.is_empty() {
            if let Err(CdlError::Validation(msg)) = hp.validate() {
                errors.push(msg);
            }
        }
        if errors.is_empty() {
            Ok(hp)
        } else {
            Err(CdlError::Validation(errors.join("; ")))
        }
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("{key}: cannot parse {value:?}"))
        }
        match key {
            "lambda_u" => self.lambda_u = num(key, value)?,
            "lambda_v" => self.lambda_v = num(key, value)?,
            "lambda_n" => self.lambda_n = num(key, value)?,
            "lambda_w" => self.lambda_w = num(key, value)?,
            "lambda_s" => self.lambda_s = num(key, value)?,
            "a" => self.conf.a = num(key, value)?,
            "b" => self.conf.b = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "widths" => {
                let w: std::result::Result<Vec<usize>, _> =
                    value.split(',').map(|t| t.trim().parse()).collect();
                self.widths = Some(w.map_err(|_| format!("{key}: cannot parse {value:?}"))?);
            }
            "noise_level" => self.noise_level = num(key, value)?,
            "dropout_rate" => self.dropout_rate = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "epochs_per_block" => self.epochs_per_block = num(key, value)?,
            "max_sweeps" => self.max_sweeps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "normalization" => {
                self.normalization = value.parse().map_err(|e: CdlError| format!("{key}: {e}"))?
            }
            "early_stop_tol" => self.early_stop_tol = num(key, value)?,
            "early_stop_patience" => self.early_stop_patience = num(key, value)?,
            "init_sd" => {
                self.init_sd = if value == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            other => return Err(format!("{other}: unknown key")),
        }
        Ok(())
    }

    /// Serializes every field; `from_config_str(to_config_string())` is the identity.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("lambda_u", self.lambda_u.to_string());
        put("lambda_v", self.lambda_v.to_string());
        put("lambda_n", self.lambda_n.to_string());
        put("lambda_w", self.lambda_w.to_string());
        put("lambda_s", self.lambda_s.to_string());
        put("a", self.conf.a.to_string());
        put("b", self.conf.b.to_string());
        put("k", self.k.to_string());
        if let Some(w) = &self.widths {
            let w: Vec<String> = w.iter().map(|x| x.to_string()).collect();
            put("widths", w.join(","));
        }
        put("noise_level", self.noise_level.to_string());
        put("dropout_rate", self.dropout_rate.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("momentum", self.momentum.to_string());
        put("epochs_per_block", self.epochs_per_block.to_string());
        put("max_sweeps", self.max_sweeps.to_string());
        put("batch_size", self.batch_size.to_string());
        put("pretrain_epochs", self.pretrain_epochs.to_string());
        put("seed", self.seed.to_string());
        put("normalization", self.normalization.as_str().to_string());
        put("early_stop_tol", self.early_stop_tol.to_string());
        put("early_stop_patience", self.early_stop_patience.to_string());
        put(
            "init_sd",
            self.init_sd.map_or_else(|| "auto".to_string(), |v| v.to_string()),
        );
        out
    }
}

const REQUIRED: [&str; 4] = ["lambda_u", "lambda_v", "lambda_n", "lambda_w"];

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CdlError::Validation(format!("line {}: expected key=value, got {line:?}", idx + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Expands a config whose values may list alternatives separated by `|` into
/// the Cartesian product, in enumeration order (last key varies fastest).
pub fn expand_grid(text: &str) -> Result<Vec<HyperParams>> {
    let pairs = parse_pairs(text)?;
    let options: Vec<(String, Vec<String>)> = pairs
        .into_iter()
        .map(|(k, v)| {
            let alts = v.split('|').map(|s| s.trim().to_string()).collect();
            (k, alts)
        })
        .collect();
    if options.iter().any(|(_, alts)| alts.iter().any(String::is_empty)) {
        return Err(CdlError::Validation("grid contains an empty value".into()));
    }
    let total: usize = options.iter().map(|(_, a)| a.len()).product();
    if options.is_empty() || total == 0 {
        return Err(CdlError::Validation("empty grid".into()));
    }
    let mut configs = Vec::with_capacity(total);
    for mut n in 0..total {
        let mut picks = vec![0; options.len()];
        for (slot, (_, alts)) in picks.iter_mut().zip(&options).rev() {
            *slot = n % alts.len();
            n /= alts.len();
        }
        let mut body = String::new();
        for ((k, alts), &p) in options.iter().zip(&picks) {
            let _ = writeln!(body, "{k}={}", alts[p]);
        }
        configs.push(HyperParams::from_config_str(&body)?);
    }
    Ok(configs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "lambda_u=0.1\nlambda_v=10\nlambda_n=1000\nlambda_w=0.0001\n";

    #[test]
    fn parses_required_and_defaults() {
        let hp = HyperParams::from_config_str(BASE).unwrap();
        assert_eq!(hp.lambda_v, 10.0);
        assert_eq!((hp.conf.a, hp.conf.b, hp.k), (1.0, 0.01, 50));
        assert_eq!(hp.noise_level, 0.3);
    }

    #[test]
    fn paper_architecture_key() {
        let text = format!("{BASE}widths=8000,200,50,200,8000\n");
        let hp = HyperParams::from_config_str(&text).unwrap();
        assert_eq!(hp.widths_for(8000).unwrap(), vec![8000, 200, 50, 200, 8000]);
    }

    #[test]
    fn missing_lambda_v_is_named() {
        let err = HyperParams::from_config_str("lambda_u=1\nlambda_n=1\nlambda_w=1\n").unwrap_err();
        assert!(err.to_string().contains("lambda_v"), "{err}");
    }

    #[test]
    fn every_bad_key_is_listed() {
        let err = HyperParams::from_config_str(&format!("{BASE}bogus=1\nmomentum=abc\nother=2\n"))
            .unwrap_err()
            .to_string();
        for key in ["bogus", "momentum", "other"] {
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn config_round_trip() {
        let mut hp = HyperParams::from_config_str(BASE).unwrap();
        hp.widths = Some(vec![10, 4, 10]);
        hp.k = 4;
        hp.init_sd = Some(0.05);
        hp.lambda_s = f64::INFINITY;
        let back = HyperParams::from_config_str(&hp.to_config_string()).unwrap();
        assert_eq!(back, hp);
    }

    #[test]
    fn grid_enumerates_cartesian_product() {
        let g = expand_grid("lambda_u=0.1|1\nlambda_v=1|10\nlambda_n=1\nlambda_w=1\n").unwrap();
        let pts: Vec<(f64, f64)> = g.iter().map(|h| (h.lambda_u, h.lambda_v)).collect();
        assert_eq!(pts, vec![(0.1, 1.0), (0.1, 10.0), (1.0, 1.0), (1.0, 10.0)]);
        assert!(expand_grid("").is_err());
        assert!(expand_grid("lambda_u=|\n").is_err());
    }
}
