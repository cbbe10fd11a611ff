//! Experiment orchestration: ask emitters (or sample uniformly), repair,
//! evaluate, add to the archive, and route improvements back to the emitters,
//! until the evaluation budget is spent.
//!
//! Runs are pure functions of (config, master seed). Candidate evaluations
//! within an iteration may run on any number of threads, but archive adds and
//! emitter updates are applied by the coordinator in a fixed canonical order
//! (anchors first, then batch candidates by emitter index and intra-batch
//! index), so thread count never changes the outcome.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{ArchiveConfig, GridArchive, Solution};
use crate::domains::{Domain, DomainConfig, EvalResult, Evaluator};
use crate::emitters::{Emitter, GaussianEmitter, GradientEmitter, ImprovementEmitter};
use crate::error::{Error, Result};
use crate::rng::{self, stream};

use rand_chacha::ChaCha8Rng;

/// Threshold of empty cells under elitist archive semantics. Effectively
/// minus infinity (every finite objective exceeds it) while staying finite,
/// which archive validation and JSON checkpoints require.
pub const ELITIST_FLOOR: f64 = f64::MIN;

/// Consecutive zero-evaluation iterations tolerated before a run aborts.
/// Only reachable when every candidate of an iteration fails repair.
const STALL_LIMIT: u32 = 10;


// --- config ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    MapElites,
    CmaMe,
    CmaMae,
    CmaMega,
    CmaMaega,
    UniformBaseline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::MapElites,
        Algorithm::CmaMe,
        Algorithm::CmaMae,
        Algorithm::CmaMega,
        Algorithm::CmaMaega,
        Algorithm::UniformBaseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::MapElites => "map-elites",
            Algorithm::CmaMe => "cma-me",
            Algorithm::CmaMae => "cma-mae",
            Algorithm::CmaMega => "cma-mega",
            Algorithm::CmaMaega => "cma-maega",
            Algorithm::UniformBaseline => "uniform-baseline",
        }
    }

    /// Whether candidates come from emitters rather than uniform sampling.
    fn uses_emitters(&self) -> bool {
        *self != Algorithm::UniformBaseline
    }

    fn needs_gradients(&self) -> bool {
        matches!(self, Algorithm::CmaMega | Algorithm::CmaMaega)
    }

    /// Annealed-threshold variants; the rest keep elitist archive semantics.
    fn anneals_thresholds(&self) -> bool {
        matches!(self, Algorithm::CmaMae | Algorithm::CmaMaega)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// A complete experiment description. Optional fields fall back to
/// per-algorithm and per-domain defaults, resolved once at construction and
/// recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub domain: DomainConfig,
    /// Total ground-truth evaluations. Zero is allowed and yields an empty
    /// archive with no stats rows.
    pub budget: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub emitter_count: Option<usize>,
    /// Candidates per emitter per iteration (lambda).
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Archive threshold learning rate; defaults to 0.1 for the annealing
    /// algorithms and 1 (elitist) otherwise.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub threshold_floor: Option<f64>,
    #[serde(default)]
    pub resolution: Option<Vec<usize>>,
    /// Initial emitter step size; defaults to the domain's parameter scale.
    #[serde(default)]
    pub sigma0: Option<f64>,
    /// Optional early-stop thresholds, off by default.
    #[serde(default)]
    pub target_qd_score: Option<f64>,
    #[serde(default)]
    pub target_coverage: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, domain: DomainConfig, budget: u64, master_seed: u64) -> Self {
        Self {
            algorithm,
            domain,
            budget,
            master_seed,
            emitter_count: None,
            batch_size: None,
            learning_rate: None,
            threshold_floor: None,
            resolution: None,
            sigma0: None,
            target_qd_score: None,
            target_coverage: None,
        }
    }

    pub fn resolved_emitter_count(&self) -> usize {
        self.emitter_count.unwrap_or(if self.algorithm.uses_emitters() {
            match self.algorithm {
                Algorithm::MapElites => 1,
                _ => 3,
            }
        } else {
            1
        })
    }

    pub fn resolved_batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.algorithm {
            Algorithm::MapElites | Algorithm::UniformBaseline => 36,
            _ => 12,
        })
    }

    pub fn resolved_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(if self.algorithm.anneals_thresholds() { 0.1 } else { 1.0 })
    }

    pub fn resolved_threshold_floor(&self) -> f64 {
        self.threshold_floor.unwrap_or(if self.algorithm.anneals_thresholds() {
            0.0
        } else {
            ELITIST_FLOOR
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.learning_rate {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("learning rate {a} outside [0, 1]")));
            }
        }
        if self.emitter_count == Some(0) {
            return Err(Error::Config("emitter count must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let Some(t) = self.target_coverage {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("target coverage {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

// --- statistics ---

/// One line of the stats trace, appended after every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub iteration: u64,
    /// Cumulative ground-truth evaluations after this iteration.
    pub evals: u64,
    pub qd_score: f64,
    pub coverage: f64,
    /// None while the archive is empty.
    pub best_objective: Option<f64>,
}

/// Summary of a finished (or budget-exhausted) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub rows: Vec<StatsRow>,
    pub evals_used: u64,
    /// Candidates discarded because constraint repair did not converge.
    pub repair_failures: u64,
    pub emitter_restarts: u64,
    /// Wall-clock of this process's portion of the run (a resumed run counts
    /// only time since the checkpoint).
    pub wall_seconds: f64,
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from("iteration,evals,qd_score,coverage,best_objective\n");
    for r in rows {
        let best = r.best_objective.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.evals, r.qd_score, r.coverage, best
        ));
    }
    out
}

// --- the search loop ---

/// Serialized form of a paused run. The domain is rebuilt from the config on
/// resume; everything stateful (archive, emitters, RNG cursors, counters) is
/// stored verbatim so a resumed run replays bit-identically.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: ExperimentConfig,
    archive: GridArchive,
    emitters: Vec<Emitter>,
    uniform_rng: ChaCha8Rng,
    evals_used: u64,
    iteration: u64,
    repair_failures: u64,
    stall: u32,
    stats: Vec<StatsRow>,
}

#[derive(Debug)]
pub struct Search {
    config: ExperimentConfig,
    domain: Domain,
    archive: GridArchive,
    emitters: Vec<Emitter>,
    uniform_rng: ChaCha8Rng,
    evals_used: u64,
    iteration: u64,
    repair_failures: u64,
    stall: u32,
    stats: Vec<StatsRow>,
}

impl Search {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let domain = config.domain.build(config.master_seed)?;
        Self::with_domain(config, domain)
    }

    /// Search an explicit evaluator instead of building one from the config.
    /// Used for surrogate inner loops; checkpoints of such a search rebuild
    /// the config's base domain, so they are not resumable.
    pub fn with_domain(config: ExperimentConfig, domain: Domain) -> Result<Self> {
        config.validate()?;
        if config.algorithm.needs_gradients() && !domain.gradients_available() {
            return Err(Error::Config(format!(
                "{} needs objective and measure gradients, which the {} domain does not provide",
                config.algorithm,
                config.domain.name()
            )));
        }

        let (mlo, mhi) = domain.measure_bounds();
        let resolution =
            config.resolution.clone().unwrap_or_else(|| domain.default_resolution());
        let archive = GridArchive::new(ArchiveConfig::new(
            mlo,
            mhi,
            resolution,
            config.resolved_learning_rate(),
            config.resolved_threshold_floor(),
        )?)?;

        let emitters = Self::build_emitters(&config, &domain)?;
        let uniform_rng = rng::child_rng(config.master_seed, stream::UNIFORM_SAMPLER, 0);
        Ok(Self {
            config,
            domain,
            archive,
            emitters,
            uniform_rng,
            evals_used: 0,
            iteration: 0,
            repair_failures: 0,
            stall: 0,
            stats: Vec::new(),
        })
    }

    fn build_emitters(config: &ExperimentConfig, domain: &Domain) -> Result<Vec<Emitter>> {
        if !config.algorithm.uses_emitters() {
            return Ok(Vec::new());
        }
        let start = domain.start_point();
        let sigma0 = config.sigma0.unwrap_or_else(|| domain.default_sigma());
        let lambda = config.resolved_batch_size();
        (0..config.resolved_emitter_count())
            .map(|i| {
                let stream_rng =
                    rng::child_rng(config.master_seed, stream::EMITTER, i as u64);
                Ok(match config.algorithm {
                    Algorithm::MapElites => Emitter::Gaussian(GaussianEmitter::new(
                        start,
                        sigma0,
                        lambda,
                        stream_rng,
                    )?),
                    Algorithm::CmaMe | Algorithm::CmaMae => Emitter::Improvement(
                        ImprovementEmitter::new(start, sigma0, lambda, stream_rng)?,
                    ),
                    Algorithm::CmaMega | Algorithm::CmaMaega => Emitter::Gradient(
                        GradientEmitter::new(
                            start,
                            domain.measure_dim(),
                            lambda,
                            stream_rng,
                        )?,
                    ),
                    Algorithm::UniformBaseline => unreachable!("no emitters for the baseline"),
                })
            })
            .collect()
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn archive(&self) -> &GridArchive {
        &self.archive
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    pub fn stats(&self) -> &[StatsRow] {
        &self.stats
    }

    pub fn evals_used(&self) -> u64 {
        self.evals_used
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn repair_failures(&self) -> u64 {
        self.repair_failures
    }

    pub fn emitter_restarts(&self) -> u64 {
        self.emitters.iter().map(|e| e.restarts()).sum()
    }

    fn remaining(&self) -> u64 {
        self.config.budget.saturating_sub(self.evals_used)
    }

    fn targets_met(&self) -> bool {
        let qd = self.config.target_qd_score.is_some_and(|t| self.archive.qd_score() >= t);
        let cov = self.config.target_coverage.is_some_and(|t| self.archive.coverage() >= t);
        qd || cov
    }

    pub fn done(&self) -> bool {
        self.remaining() == 0 || self.targets_met()
    }

    /// Evaluate with budget accounting; failures carry the offending
    /// parameters.
    fn evaluate_one(domain: &Domain, params: &[f64]) -> Result<EvalResult> {
        domain.evaluate(params).map_err(|e| Error::Evaluation {
            source: Box::new(e),
            params: params.to_vec(),
        })
    }

    /// One iteration of the loop. Returns false (and does nothing) once the
    /// budget is spent or a quality target is met.
    pub fn step(&mut self) -> Result<bool> {
        if self.done() {
            return Ok(false);
        }
        self.iteration += 1;
        let mut evaluated = 0u64;

        // Gradient anchors: evaluated one at a time, in emitter index order,
        // before any batch candidate. Each consumes budget and enters the
        // archive like any other evaluation.
        for idx in 0..self.emitters.len() {
            if self.remaining() == 0 {
                break;
            }
            let Some(anchor) = self.emitters[idx].anchor_request().map(<[f64]>::to_vec) else {
                continue;
            };
            let repaired = match self.domain.repair(&anchor) {
                Ok((r, _)) => r,
                Err(Error::RepairFailed(_)) => {
                    self.repair_failures += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let result = Self::evaluate_one(&self.domain, &repaired)?;
            self.evals_used += 1;
            evaluated += 1;
            let grads = result.gradients.clone().ok_or_else(|| {
                Error::Config(format!(
                    "{} domain advertised gradients but returned none",
                    self.config.domain.name()
                ))
            })?;
            self.archive.add(Solution {
                params: repaired.clone(),
                objective: result.objective,
                measures: result.measures,
                seeds: result.seeds,
            })?;
            self.emitters[idx].provide_anchor(repaired, &grads)?;
        }

        // Ask, in emitter index order. An emitter still waiting on its anchor
        // (budget ran out above) contributes nothing this iteration.
        let mut labeled: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut asked = vec![0usize; self.emitters.len().max(1)];
        if self.config.algorithm.uses_emitters() {
            for idx in 0..self.emitters.len() {
                if self.emitters[idx].anchor_request().is_some() {
                    continue;
                }
                let batch = self.emitters[idx].ask(&self.archive)?;
                asked[idx] = batch.len();
                labeled.extend(batch.into_iter().map(|p| (idx, p)));
            }
        } else {
            let (lo, hi) = self.domain.parameter_box();
            let n = (self.config.resolved_emitter_count() * self.config.resolved_batch_size())
                .min(self.remaining() as usize);
            for _ in 0..n {
                let p = rng::uniform_in_box(&mut self.uniform_rng, &lo, &hi);
                labeled.push((0, p));
            }
            asked[0] = n;
        }
        labeled.truncate(self.remaining() as usize);

        // Repair; non-convergent candidates are discarded without spending
        // budget and the owning emitter skips its update this iteration.
        let mut kept: Vec<(usize, Vec<f64>)> = Vec::with_capacity(labeled.len());
        for (idx, params) in labeled {
            match self.domain.repair(&params) {
                Ok((r, _)) => kept.push((idx, r)),
                Err(Error::RepairFailed(_)) => self.repair_failures += 1,
                Err(e) => return Err(e),
            }
        }

        // Parallel evaluation; results land in submission order regardless of
        // which thread finished first.
        let domain = &self.domain;
        let results: Result<Vec<EvalResult>> =
            kept.par_iter().map(|(_, p)| Self::evaluate_one(domain, p)).collect();
        let results = results?;
        self.evals_used += kept.len() as u64;
        evaluated += kept.len() as u64;

        // Canonical adds plus per-emitter feedback.
        let n_emitters = self.emitters.len().max(1);
        let mut batches: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_emitters];
        let mut objectives: Vec<Vec<f64>> = vec![Vec::new(); n_emitters];
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n_emitters];
        for ((idx, params), result) in kept.into_iter().zip(results) {
            let add = self.archive.add(Solution {
                params: params.clone(),
                objective: result.objective,
                measures: result.measures,
                seeds: result.seeds,
            })?;
            batches[idx].push(params);
            objectives[idx].push(result.objective);
            deltas[idx].push(add.improvement);
        }

        // Updates only for emitters whose full batch came back; partial
        // batches (budget truncation, repair discards) leave state untouched.
        for idx in 0..self.emitters.len() {
            if asked[idx] > 0 && batches[idx].len() == asked[idx] {
                self.emitters[idx].tell(
                    &self.archive,
                    &batches[idx],
                    &objectives[idx],
                    &deltas[idx],
                )?;
            }
        }

        if evaluated == 0 {
            self.stall += 1;
            if self.stall >= STALL_LIMIT {
                return Err(Error::Config(format!(
                    "search stalled: {STALL_LIMIT} consecutive iterations evaluated nothing \
                     (every candidate failed repair)"
                )));
            }
        } else {
            self.stall = 0;
        }

        self.stats.push(StatsRow {
            iteration: self.iteration,
            evals: self.evals_used,
            qd_score: self.archive.qd_score(),
            coverage: self.archive.coverage(),
            best_objective: self.archive.best_objective(),
        });
        Ok(true)
    }

    /// Drive the loop to completion and summarize.
    pub fn run_to_budget(&mut self) -> Result<RunStats> {
        let started = Instant::now();
        while self.step()? {}
        Ok(RunStats {
            rows: self.stats.clone(),
            evals_used: self.evals_used,
            repair_failures: self.repair_failures,
            emitter_restarts: self.emitter_restarts(),
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }

    pub fn stats_csv(&self) -> String {
        stats_csv(&self.stats)
    }

    pub fn checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            config: self.config.clone(),
            archive: self.archive.clone(),
            emitters: self.emitters.clone(),
            uniform_rng: self.uniform_rng.clone(),
            evals_used: self.evals_used,
            iteration: self.iteration,
            repair_failures: self.repair_failures,
            stall: self.stall,
            stats: self.stats.clone(),
        })?)
    }

    pub fn resume_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        cp.config.validate()?;
        let domain = cp.config.domain.build(cp.config.master_seed)?;
        Ok(Self {
            config: cp.config,
            domain,
            archive: cp.archive,
            emitters: cp.emitters,
            uniform_rng: cp.uniform_rng,
            evals_used: cp.evals_used,
            iteration: cp.iteration,
            repair_failures: cp.repair_failures,
            stall: cp.stall,
            stats: cp.stats,
        })
    }
}

/// Build and run an experiment in one call.
pub fn run(config: ExperimentConfig) -> Result<(GridArchive, RunStats)> {
    let mut search = Search::new(config)?;
    let stats = search.run_to_budget()?;
    Ok((search.archive, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::M1Kind;

    fn sphere_config(algorithm: Algorithm, budget: u64, seed: u64) -> ExperimentConfig {
        ExperimentConfig::new(algorithm, DomainConfig::SphereLp { dim: 10 }, budget, seed)
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("cma_me".parse::<Algorithm>().is_err());
    }

    #[test]
    fn zero_budget_yields_an_empty_archive_and_no_stats() {
        let (archive, stats) = run(sphere_config(Algorithm::CmaMae, 0, 1)).unwrap();
        assert_eq!(archive.num_occupied(), 0);
        assert!(stats.rows.is_empty());
        assert_eq!(stats.evals_used, 0);
    }

    #[test]
    fn identical_config_and_seed_reproduce_identical_exports() {
        let cfg = sphere_config(Algorithm::CmaMae, 400, 77);
        let (a1, s1) = run(cfg.clone()).unwrap();
        let (a2, s2) = run(cfg).unwrap();
        assert_eq!(a1.to_csv(), a2.to_csv());
        assert_eq!(stats_csv(&s1.rows), stats_csv(&s2.rows));
        assert_eq!(s1.evals_used, s2.evals_used);
    }

    #[test]
    fn different_seeds_explore_differently() {
        let (a1, _) = run(sphere_config(Algorithm::CmaMe, 300, 1)).unwrap();
        let (a2, _) = run(sphere_config(Algorithm::CmaMe, 300, 2)).unwrap();
        assert_ne!(a1.to_csv(), a2.to_csv());
    }

    #[test]
    fn thread_count_does_not_change_the_archive() {
        let run_in_pool = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run(sphere_config(Algorithm::CmaMae, 300, 9)).unwrap())
        };
        let (a1, _) = run_in_pool(1);
        let (a4, _) = run_in_pool(4);
        assert_eq!(a1.to_csv(), a4.to_csv());
    }

    #[test]
    fn budget_is_spent_exactly_and_rows_are_monotone() {
        // 50 is not a multiple of the 36-candidate iteration, so the final
        // batch is truncated.
        let cfg = ExperimentConfig {
            budget: 50,
            ..sphere_config(Algorithm::UniformBaseline, 50, 3)
        };
        let (_, stats) = run(cfg).unwrap();
        assert_eq!(stats.evals_used, 50);
        let rows = &stats.rows;
        assert_eq!(rows.last().unwrap().evals, 50);
        for w in rows.windows(2) {
            assert!(w[1].qd_score >= w[0].qd_score, "qd_score decreased");
            assert!(w[1].evals > w[0].evals, "evals stalled");
        }
        for r in rows {
            assert!(r.evals <= 50);
            assert!((0.0..=1.0).contains(&r.coverage));
        }
    }

    #[test]
    fn emitter_count_and_batch_multiply_into_iteration_size() {
        let mut cfg = sphere_config(Algorithm::CmaMe, 1000, 5);
        cfg.emitter_count = Some(2);
        cfg.batch_size = Some(5);
        let mut search = Search::new(cfg).unwrap();
        search.step().unwrap();
        assert_eq!(search.evals_used(), 10);
        assert_eq!(search.emitters().len(), 2);
    }

    #[test]
    fn default_shapes_follow_the_algorithm() {
        let cma = Search::new(sphere_config(Algorithm::CmaMae, 10, 1)).unwrap();
        assert_eq!(cma.emitters().len(), 3);
        assert!(cma.emitters().iter().all(|e| e.kind() == "improvement"));

        let me = Search::new(sphere_config(Algorithm::MapElites, 10, 1)).unwrap();
        assert_eq!(me.emitters().len(), 1);
        assert_eq!(me.emitters()[0].kind(), "gaussian");

        let mega = Search::new(sphere_config(Algorithm::CmaMega, 10, 1)).unwrap();
        assert!(mega.emitters().iter().all(|e| e.kind() == "gradient"));

        let uniform = Search::new(sphere_config(Algorithm::UniformBaseline, 10, 1)).unwrap();
        assert!(uniform.emitters().is_empty());
    }

    #[test]
    fn annealing_algorithms_default_to_soft_thresholds() {
        let cfg = sphere_config(Algorithm::CmaMae, 10, 1);
        assert_eq!(cfg.resolved_learning_rate(), 0.1);
        assert_eq!(cfg.resolved_threshold_floor(), 0.0);
        let cfg = sphere_config(Algorithm::CmaMe, 10, 1);
        assert_eq!(cfg.resolved_learning_rate(), 1.0);
        assert_eq!(cfg.resolved_threshold_floor(), ELITIST_FLOOR);
    }

    #[test]
    fn gradient_algorithms_reject_gradient_free_domains() {
        let cfg = ExperimentConfig::new(
            Algorithm::CmaMega,
            DomainConfig::Teleop { m1: M1Kind::HumanVariation },
            100,
            1,
        );
        let err = Search::new(cfg).unwrap_err();
        assert!(err.to_string().contains("gradients"), "{err}");
    }

    #[test]
    fn out_of_range_learning_rate_is_rejected() {
        let mut cfg = sphere_config(Algorithm::CmaMae, 10, 1);
        cfg.learning_rate = Some(1.5);
        assert!(Search::new(cfg).is_err());
    }

    #[test]
    fn uniform_baseline_samples_inside_the_parameter_box() {
        let (archive, stats) = run(sphere_config(Algorithm::UniformBaseline, 200, 4)).unwrap();
        assert_eq!(stats.evals_used, 200);
        for (_, s) in archive.occupants() {
            assert!(s.params.iter().all(|&p| (-5.12..5.12).contains(&p)));
        }
    }

    #[test]
    fn gradient_search_runs_and_fills_cells() {
        let (archive, stats) = run(sphere_config(Algorithm::CmaMega, 300, 11)).unwrap();
        assert!(stats.evals_used <= 300);
        assert!(archive.num_occupied() > 20, "only {} cells", archive.num_occupied());
    }

    #[test]
    fn quality_targets_stop_the_run_early() {
        let mut cfg = sphere_config(Algorithm::CmaMae, 100_000, 6);
        cfg.target_coverage = Some(0.02);
        let (archive, stats) = run(cfg).unwrap();
        assert!(archive.coverage() >= 0.02);
        assert!(stats.evals_used < 100_000, "ran the whole budget anyway");
    }

    #[test]
    fn truncated_final_batch_skips_the_emitter_update() {
        // Budget below one batch: candidates are evaluated and added, but the
        // emitter must not see a partial generation.
        let mut cfg = sphere_config(Algorithm::CmaMe, 7, 1);
        cfg.emitter_count = Some(1);
        cfg.batch_size = Some(12);
        let mut search = Search::new(cfg).unwrap();
        search.run_to_budget().unwrap();
        assert_eq!(search.evals_used(), 7);
        assert!(search.archive().num_occupied() > 0);
        match &search.emitters()[0] {
            Emitter::Improvement(e) => assert_eq!(e.state().generation(), 0),
            other => panic!("unexpected emitter {}", other.kind()),
        }
    }

    #[test]
    fn checkpoint_resumes_bit_identically() {
        let cfg = sphere_config(Algorithm::CmaMae, 600, 21);

        let mut straight = Search::new(cfg.clone()).unwrap();
        straight.run_to_budget().unwrap();

        let mut first = Search::new(cfg).unwrap();
        for _ in 0..5 {
            first.step().unwrap();
        }
        let blob = first.checkpoint_json().unwrap();
        let mut resumed = Search::resume_json(&blob).unwrap();
        resumed.run_to_budget().unwrap();

        assert_eq!(straight.archive().to_csv(), resumed.archive().to_csv());
        assert_eq!(straight.stats_csv(), resumed.stats_csv());
        assert_eq!(straight.evals_used(), resumed.evals_used());
    }

    #[test]
    fn checkpoint_covers_the_uniform_sampler_cursor() {
        let cfg = sphere_config(Algorithm::UniformBaseline, 144, 30);
        let mut straight = Search::new(cfg.clone()).unwrap();
        straight.run_to_budget().unwrap();

        let mut first = Search::new(cfg).unwrap();
        first.step().unwrap();
        let mut resumed = Search::resume_json(&first.checkpoint_json().unwrap()).unwrap();
        resumed.run_to_budget().unwrap();
        assert_eq!(straight.archive().to_csv(), resumed.archive().to_csv());
    }

    #[test]
    fn teleop_smoke_run_is_deterministic_and_in_budget() {
        let cfg = ExperimentConfig::new(
            Algorithm::CmaMae,
            DomainConfig::Teleop { m1: M1Kind::HumanVariation },
            90,
            13,
        );
        let (a1, s1) = run(cfg.clone()).unwrap();
        let (a2, _) = run(cfg).unwrap();
        assert_eq!(a1.to_csv(), a2.to_csv());
        assert_eq!(s1.evals_used, 90);
        assert!(a1.num_occupied() > 0);
        for (_, s) in a1.occupants() {
            assert!((0.0..=1.0).contains(&s.objective));
            assert!(!s.seeds.is_empty(), "teleop solutions record their rollout seeds");
        }
    }

    #[test]
    fn stats_csv_has_the_documented_header() {
        let mut search = Search::new(sphere_config(Algorithm::CmaMe, 36, 2)).unwrap();
        search.run_to_budget().unwrap();
        let csv = search.stats_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,evals,qd_score,coverage,best_objective"));
        assert!(lines.next().is_some());
    }
}
