//! Flat key = value run configuration, merged from an optional config file
//! and command-line flags. Flags win over the file, the file over defaults.

use std::collections::BTreeMap;
use std::path::Path;

use tubelink::eval::EvalThresholds;
use tubelink::io::ClassVocabulary;
use tubelink::{Error, LinkerConfig, Result};

/// Everything a subcommand may need, resolved from defaults, config file and
/// flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub linker: LinkerConfig,
    pub thresholds: EvalThresholds,
    /// Per-class mean areas keyed by class name; resolved to ids per video.
    pub class_areas_by_name: BTreeMap<String, f64>,
    pub w_appearance: f64,
    pub w_flow: f64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            linker: LinkerConfig::default(),
            thresholds: EvalThresholds::default(),
            class_areas_by_name: BTreeMap::new(),
            w_appearance: 1.0,
            w_flow: 1.0,
            threads: 1,
        }
    }
}

impl RunConfig {
    /// Applies one config entry; unknown keys are rejected.
    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Invalid(format!("config key {key:?}: bad {what} {value:?}"));
        let f = |v: &str| v.parse::<f64>().map_err(|_| bad("number"));
        let n = |v: &str| v.parse::<usize>().map_err(|_| bad("integer"));
        if let Some(class) = key.strip_prefix("gamma.") {
            self.class_areas_by_name.insert(class.to_string(), f(value)?);
            return Ok(());
        }
        match key {
            "lambda" => self.linker.lambda = f(value)?,
            "alpha" => self.linker.alpha = f(value)?,
            "max_paths" => self.linker.max_paths = n(value)?,
            "delta" => self.linker.delta = n(value)?,
            "tau" => self.linker.tau = f(value)?,
            "nms_iou" => self.linker.nms_iou = f(value)?,
            "actionness_threshold" => self.linker.actionness_threshold = f(value)?,
            "top_k_score" => self.linker.top_k_score = n(value)?,
            "placeholder_score" => self.linker.placeholder_score = f(value)?,
            "t_sr" => self.thresholds.t_sr = f(value)?,
            "t_tr" => self.thresholds.t_tr = f(value)?,
            "t_sp" => self.thresholds.t_sp = f(value)?,
            "t_tp" => self.thresholds.t_tp = f(value)?,
            "eta" => self.thresholds.eta = f(value)?,
            "grid_step" => self.thresholds.grid_step = f(value)?,
            "w_appearance" => self.w_appearance = f(value)?,
            "w_flow" => self.w_flow = f(value)?,
            "threads" => self.threads = n(value)?,
            _ => return Err(Error::Invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Reads a config file: `key = value` lines, `#` comments, blank lines.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected key = value, got {line:?}"),
                });
            };
            self.apply(key.trim(), value.trim()).map_err(|e| Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Copies the name-keyed area table into the linker config using a
    /// video's class ordering. Names absent from the vocabulary are ignored,
    /// matching the per-class opt-in semantics of the area filter.
    pub fn linker_for(&self, vocab: &ClassVocabulary) -> LinkerConfig {
        let mut linker = self.linker.clone();
        linker.class_areas = self
            .class_areas_by_name
            .iter()
            .filter_map(|(name, area)| vocab.id_of(name).map(|id| (id, *area)))
            .collect();
        linker
    }

    pub fn validate(&self) -> Result<()> {
        self.linker.validate()?;
        self.thresholds.validate()
    }
}
