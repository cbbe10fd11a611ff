//! Flat key/value experiment configs and the run manifest.
//!
//! The format is line-oriented `key = value` with dotted key sections,
//! `#` comments, and no nesting, chosen so configs diff cleanly and can be
//! written by hand or by scripts in any language. Unknown keys are hard
//! errors: a typo must never silently fall back to a default.
//!
//! The manifest written next to each run's outputs is itself a config in
//! this format with every default materialized, so replaying a manifest
//! reproduces the run exactly. Domain constants (`teleop.*`) are included
//! and validated on load: a manifest recorded with different constants
//! refuses to run rather than produce different results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use qd_core::domains::{DomainConfig, Evaluator, M1Kind, TeleopConsts};
use qd_core::scheduler::ELITIST_FLOOR;
use qd_core::{Algorithm, DsageConfig, ExperimentConfig, TrainConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fixed file names inside every output directory.
pub mod layout {
    pub const MANIFEST: &str = "manifest";
    pub const ARCHIVE: &str = "archive.csv";
    pub const STATS: &str = "stats.csv";
    pub const HEATMAP: &str = "heatmap.pgm";
    pub const CHECKPOINT_DIR: &str = "checkpoint";
    pub const FINAL_CHECKPOINT: &str = "checkpoint/final.json";
    pub const DATASET: &str = "dataset.csv";
    pub const SURROGATE: &str = "surrogate.txt";
    pub const COMPARE: &str = "compare.csv";
}

/// Parsed but uninterpreted key/value pairs.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    map: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {line:?}", lineno + 1))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            if map.insert(key.clone(), value).is_some() {
                bail!("line {}: duplicate key {key:?}", lineno + 1);
            }
        }
        Ok(Self { map })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Insert or replace a key; used by `--override` and `--seed`.
    pub fn set(&mut self, key: &str, value: &str) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("override {spec:?} is not of the form key=value"))?;
        self.set(key.trim(), value.trim());
        Ok(())
    }
}

/// Tracks which keys a materialization consumed so leftovers can be
/// reported as unknown.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: BTreeSet<String>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Self { raw, used: BTreeSet::new() }
    }

    fn get(&mut self, key: &str) -> Option<&'a str> {
        self.used.insert(key.to_string());
        self.raw.map.get(key).map(|s| s.as_str())
    }

    fn required(&mut self, key: &str) -> Result<&'a str> {
        self.get(key).ok_or_else(|| anyhow!("missing required key {key:?}"))
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| anyhow!("{key}: not a number: {v:?}")))
            .transpose()
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| v.parse::<u64>().map_err(|_| anyhow!("{key}: not a non-negative integer: {v:?}")))
            .transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(anyhow!("{key}: expected true or false, got {other:?}")),
            })
            .transpose()
    }

    fn resolution(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<usize>()
                            .map_err(|_| anyhow!("{key}: bad resolution entry {p:?}"))
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .transpose()
    }

    /// `teleop.*` rows in a manifest must match this build's constants, and
    /// `out.*` / `version` rows are informational.
    fn absorb_manifest_keys(&mut self, domain: &DomainConfig) -> Result<()> {
        self.get("version");
        let known_out: Vec<String> = self
            .raw
            .map
            .keys()
            .filter(|k| k.starts_with("out."))
            .cloned()
            .collect();
        for k in known_out {
            self.get(&k);
        }
        if matches!(domain, DomainConfig::Teleop { .. }) {
            for (key, expect) in TeleopConsts::default().manifest_rows() {
                if let Some(found) = self.get(&key) {
                    if found != expect {
                        bail!(
                            "{key} = {found} does not match this build's constant {expect}; \
                             the manifest cannot be reproduced by this binary"
                        );
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<&String> =
            self.raw.map.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            bail!(
                "unknown config keys: {}",
                unknown.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
            );
        }
        Ok(())
    }
}

/// A fully materialized run: every default resolved to an explicit value.
#[derive(Debug, Clone, PartialEq)]
pub enum RunSpec {
    Search {
        config: ExperimentConfig,
        /// Write an intermediate checkpoint every N iterations (0 = final
        /// checkpoint only).
        checkpoint_every: u64,
    },
    Dsage(DsageConfig),
}

fn parse_domain(reader: &mut Reader) -> Result<DomainConfig> {
    let name = reader.required("domain")?;
    let dim = reader.usize("domain.dim")?;
    let m1 = reader.get("domain.m1");
    let domain = match name {
        "sphere-lp" => DomainConfig::SphereLp { dim: dim.unwrap_or(20) },
        "plateau" => DomainConfig::Plateau { dim: dim.unwrap_or(20) },
        "teleop" => {
            if dim.is_some() {
                bail!("domain.dim does not apply to the teleop domain");
            }
            let m1 = match m1.unwrap_or("human-variation") {
                "human-variation" => M1Kind::HumanVariation,
                "wrong-goal-belief" => M1Kind::WrongGoalBelief,
                other => bail!(
                    "domain.m1: expected human-variation or wrong-goal-belief, got {other:?}"
                ),
            };
            DomainConfig::Teleop { m1 }
        }
        other => bail!("domain: expected sphere-lp, plateau, or teleop, got {other:?}"),
    };
    if m1.is_some() && !matches!(domain, DomainConfig::Teleop { .. }) {
        bail!("domain.m1 only applies to the teleop domain");
    }
    Ok(domain)
}

fn parse_algorithm(text: &str) -> Result<Algorithm> {
    text.parse::<Algorithm>().map_err(|e| anyhow!("algorithm: {e}"))
}

pub fn materialize(raw: &RawConfig) -> Result<RunSpec> {
    let mut reader = Reader::new(raw);
    let algorithm = reader.required("algorithm")?.to_string();
    let domain = parse_domain(&mut reader)?;
    let seed = reader.u64("seed")?.unwrap_or(0);
    reader.absorb_manifest_keys(&domain)?;

    let spec = if algorithm == "dsage" {
        for key in [
            "budget",
            "emitters",
            "batch",
            "sigma0",
            "archive.learning_rate",
            "archive.threshold_floor",
            "checkpoint.every",
            "target.qd_score",
            "target.coverage",
        ] {
            if reader.get(key).is_some() {
                bail!(
                    "{key} does not apply to dsage runs; the ground-truth budget is \
                     dsage.bootstrap + dsage.outer * dsage.downsample and the \
                     ground-truth archive is always elitist"
                );
            }
        }
        let mut cfg = DsageConfig::new(domain, seed);
        if let Some(inner) = reader.get("dsage.inner") {
            cfg.inner_algorithm = parse_algorithm(inner)?;
        }
        if let Some(v) = reader.usize("dsage.outer")? {
            cfg.outer_iterations = v;
        }
        if let Some(v) = reader.usize("dsage.bootstrap")? {
            cfg.bootstrap_evals = v;
        }
        if let Some(v) = reader.usize("dsage.downsample")? {
            cfg.downsample = v;
        }
        if let Some(v) = reader.u64("dsage.inner_budget")? {
            cfg.inner_budget = v;
        }
        if let Some(v) = reader.bool("dsage.occupancy")? {
            cfg.use_occupancy = v;
        }
        let mut train = TrainConfig::default();
        if let Some(v) = reader.usize("train.epochs")? {
            train.epochs = v;
        }
        if let Some(v) = reader.usize("train.batch")? {
            train.batch_size = v;
        }
        if let Some(v) = reader.f64("train.learning_rate")? {
            train.learning_rate = v;
        }
        if let Some(v) = reader.f64("train.momentum")? {
            train.momentum = v;
        }
        if let Some(v) = reader.f64("train.loss_weight")? {
            train.loss_weight = v;
        }
        train.seed = 0;
        cfg.train = train;
        let built = cfg.domain.build(seed).map_err(|e| anyhow!("{e}"))?;
        cfg.resolution =
            Some(reader.resolution("archive.resolution")?.unwrap_or_else(|| built.default_resolution()));
        RunSpec::Dsage(cfg)
    } else {
        let algorithm = parse_algorithm(&algorithm)?;
        let budget = reader
            .u64("budget")?
            .ok_or_else(|| anyhow!("missing required key \"budget\""))?;
        let mut config = ExperimentConfig::new(algorithm, domain, budget, seed);
        let built = config.domain.build(seed).map_err(|e| anyhow!("{e}"))?;

        config.emitter_count =
            Some(reader.usize("emitters")?.unwrap_or_else(|| config.resolved_emitter_count()));
        config.batch_size =
            Some(reader.usize("batch")?.unwrap_or_else(|| config.resolved_batch_size()));
        config.sigma0 =
            Some(reader.f64("sigma0")?.unwrap_or_else(|| built.default_sigma()));
        config.learning_rate = Some(
            reader
                .f64("archive.learning_rate")?
                .unwrap_or_else(|| config.resolved_learning_rate()),
        );
        config.threshold_floor = Some(match reader.get("archive.threshold_floor") {
            None => config.resolved_threshold_floor(),
            Some("elitist") => ELITIST_FLOOR,
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| anyhow!("archive.threshold_floor: expected a number or `elitist`, got {v:?}"))?,
        });
        config.resolution = Some(
            reader
                .resolution("archive.resolution")?
                .unwrap_or_else(|| built.default_resolution()),
        );
        config.target_qd_score = reader.f64("target.qd_score")?;
        config.target_coverage = reader.f64("target.coverage")?;
        let checkpoint_every = reader.u64("checkpoint.every")?.unwrap_or(0);
        RunSpec::Search { config, checkpoint_every }
    };
    reader.finish()?;
    Ok(spec)
}

fn push_kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {value}");
}

fn push_domain(out: &mut String, domain: &DomainConfig) {
    push_kv(out, "domain", domain.name());
    match domain {
        DomainConfig::SphereLp { dim } | DomainConfig::Plateau { dim } => {
            push_kv(out, "domain.dim", dim);
        }
        DomainConfig::Teleop { m1 } => {
            let m1 = match m1 {
                M1Kind::HumanVariation => "human-variation",
                M1Kind::WrongGoalBelief => "wrong-goal-belief",
            };
            push_kv(out, "domain.m1", m1);
            for (key, value) in TeleopConsts::default().manifest_rows() {
                push_kv(out, &key, value);
            }
        }
    }
}

fn push_resolution(out: &mut String, resolution: &[usize]) {
    let rendered =
        resolution.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",");
    push_kv(out, "archive.resolution", rendered);
}

/// Render the fully resolved spec as a config that reproduces the run.
/// `materialize(parse(manifest(spec)))` returns the identical spec.
pub fn manifest(spec: &RunSpec) -> String {
    let mut out = String::from(
        "# Run manifest. Replaying this file reproduces the run byte-for-byte:\n\
         #   qdsearch run --config <this file> --out <dir>\n",
    );
    push_kv(&mut out, "version", VERSION);
    match spec {
        RunSpec::Search { config, checkpoint_every } => {
            push_kv(&mut out, "algorithm", config.algorithm);
            push_domain(&mut out, &config.domain);
            push_kv(&mut out, "seed", config.master_seed);
            push_kv(&mut out, "budget", config.budget);
            push_kv(&mut out, "emitters", config.resolved_emitter_count());
            push_kv(&mut out, "batch", config.resolved_batch_size());
            if let Some(s) = config.sigma0 {
                push_kv(&mut out, "sigma0", s);
            }
            push_kv(&mut out, "archive.learning_rate", config.resolved_learning_rate());
            let floor = config.resolved_threshold_floor();
            if floor == ELITIST_FLOOR {
                push_kv(&mut out, "archive.threshold_floor", "elitist");
            } else {
                push_kv(&mut out, "archive.threshold_floor", floor);
            }
            if let Some(res) = &config.resolution {
                push_resolution(&mut out, res);
            }
            if let Some(t) = config.target_qd_score {
                push_kv(&mut out, "target.qd_score", t);
            }
            if let Some(t) = config.target_coverage {
                push_kv(&mut out, "target.coverage", t);
            }
            push_kv(&mut out, "checkpoint.every", checkpoint_every);
            for name in [layout::ARCHIVE, layout::STATS, layout::HEATMAP] {
                push_kv(&mut out, &format!("out.{}", stem(name)), name);
            }
            push_kv(&mut out, "out.checkpoint", layout::FINAL_CHECKPOINT);
        }
        RunSpec::Dsage(cfg) => {
            push_kv(&mut out, "algorithm", "dsage");
            push_domain(&mut out, &cfg.domain);
            push_kv(&mut out, "seed", cfg.master_seed);
            push_kv(&mut out, "dsage.inner", cfg.inner_algorithm);
            push_kv(&mut out, "dsage.outer", cfg.outer_iterations);
            push_kv(&mut out, "dsage.bootstrap", cfg.bootstrap_evals);
            push_kv(&mut out, "dsage.downsample", cfg.downsample);
            push_kv(&mut out, "dsage.inner_budget", cfg.inner_budget);
            push_kv(&mut out, "dsage.occupancy", cfg.use_occupancy);
            push_kv(&mut out, "train.epochs", cfg.train.epochs);
            push_kv(&mut out, "train.batch", cfg.train.batch_size);
            push_kv(&mut out, "train.learning_rate", cfg.train.learning_rate);
            push_kv(&mut out, "train.momentum", cfg.train.momentum);
            push_kv(&mut out, "train.loss_weight", cfg.train.loss_weight);
            if let Some(res) = &cfg.resolution {
                push_resolution(&mut out, res);
            }
            for name in
                [layout::ARCHIVE, layout::STATS, layout::HEATMAP, layout::DATASET, layout::SURROGATE]
            {
                push_kv(&mut out, &format!("out.{}", stem(name)), name);
            }
        }
    }
    out
}

fn stem(file: &str) -> &str {
    file.split('.').next().unwrap_or(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_spec(text: &str) -> Result<RunSpec> {
        materialize(&RawConfig::parse(text).unwrap())
    }

    #[test]
    fn minimal_search_config_resolves_all_defaults() {
        let spec = parse_spec("algorithm = cma-mae\ndomain = teleop\nbudget = 100\n").unwrap();
        let RunSpec::Search { config, checkpoint_every } = spec else {
            panic!("expected a search spec")
        };
        assert_eq!(config.algorithm, Algorithm::CmaMae);
        assert_eq!(config.master_seed, 0);
        assert_eq!(config.emitter_count, Some(3));
        assert_eq!(config.batch_size, Some(12));
        assert_eq!(config.learning_rate, Some(0.1));
        assert_eq!(config.threshold_floor, Some(0.0));
        assert_eq!(config.resolution, Some(vec![25, 25]));
        assert_eq!(config.sigma0, Some(0.1));
        assert_eq!(checkpoint_every, 0);
    }

    #[test]
    fn unknown_keys_are_listed_in_the_error() {
        let err = parse_spec(
            "algorithm = cma-mae\ndomain = teleop\nbudget = 100\nbatchh = 3\nseeed = 9\n",
        )
        .unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("batchh") && msg.contains("seeed"), "got: {msg}");
    }

    #[test]
    fn comments_blank_lines_and_duplicates_behave() {
        let raw = RawConfig::parse("# full line\n\nseed = 3 # trailing\n").unwrap();
        assert_eq!(raw.map.get("seed").map(String::as_str), Some("3"));
        assert!(RawConfig::parse("a = 1\na = 2\n").is_err(), "duplicates are errors");
        assert!(RawConfig::parse("just some words\n").is_err());
    }

    #[test]
    fn elitist_floor_keyword_round_trips() {
        let spec = parse_spec(
            "algorithm = cma-me\ndomain = sphere-lp\ndomain.dim = 10\nbudget = 50\n",
        )
        .unwrap();
        let RunSpec::Search { config, .. } = &spec else { panic!() };
        assert_eq!(config.threshold_floor, Some(ELITIST_FLOOR));
        let text = manifest(&spec);
        assert!(text.contains("archive.threshold_floor = elitist"));
        assert_eq!(parse_spec(&text).unwrap(), spec);
    }

    #[test]
    fn manifest_of_a_search_run_round_trips_exactly() {
        let spec = parse_spec(
            "algorithm = cma-mae\ndomain = teleop\ndomain.m1 = wrong-goal-belief\n\
             budget = 5000\nseed = 7\nemitters = 2\nbatch = 10\nsigma0 = 0.2\n\
             archive.learning_rate = 0.3\narchive.resolution = 10,10\n\
             target.qd_score = 50\ncheckpoint.every = 25\n",
        )
        .unwrap();
        let text = manifest(&spec);
        assert_eq!(parse_spec(&text).unwrap(), spec, "manifest must replay to the same spec");
    }

    #[test]
    fn manifest_of_a_dsage_run_round_trips_exactly() {
        let spec = parse_spec(
            "algorithm = dsage\ndomain = teleop\nseed = 3\ndsage.inner = cma-maega\n\
             dsage.outer = 4\ndsage.bootstrap = 50\ndsage.downsample = 40\n\
             dsage.inner_budget = 500\ndsage.occupancy = false\ntrain.epochs = 10\n",
        )
        .unwrap();
        let text = manifest(&spec);
        assert_eq!(parse_spec(&text).unwrap(), spec);
        let RunSpec::Dsage(cfg) = spec else { panic!() };
        assert_eq!(cfg.resolution, Some(vec![25, 25]));
        assert!(!cfg.use_occupancy);
    }

    #[test]
    fn dsage_rejects_search_only_keys() {
        let err =
            parse_spec("algorithm = dsage\ndomain = teleop\nbudget = 100\n").unwrap_err();
        assert!(format!("{err:#}").contains("budget"));
    }

    #[test]
    fn mismatched_domain_constants_refuse_to_run() {
        let spec = parse_spec("algorithm = cma-mae\ndomain = teleop\nbudget = 10\n").unwrap();
        let text =
            manifest(&spec).replace("teleop.memory_decay = 0.96", "teleop.memory_decay = 0.5");
        let err = parse_spec(&text).unwrap_err();
        assert!(format!("{err:#}").contains("teleop.memory_decay"));
    }

    #[test]
    fn domain_specific_keys_are_validated() {
        assert!(parse_spec("algorithm = cma-mae\ndomain = teleop\ndomain.dim = 5\nbudget = 1\n")
            .is_err());
        assert!(parse_spec(
            "algorithm = cma-mae\ndomain = sphere-lp\ndomain.m1 = human-variation\nbudget = 1\n"
        )
        .is_err());
        assert!(parse_spec("algorithm = nope\ndomain = teleop\nbudget = 1\n").is_err());
        assert!(parse_spec("algorithm = cma-mae\ndomain = mars\nbudget = 1\n").is_err());
    }
}
