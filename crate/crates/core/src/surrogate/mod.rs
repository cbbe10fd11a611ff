//! Surrogate-assisted scenario search.
//!
//! The outer loop alternates between three phases: train a cheap net on all
//! ground-truth labels so far, run a full QD search against the net (free,
//! no simulator calls), then label a uniform sample of the surrogate
//! archive's occupants in the real domain. Labeled solutions enter a
//! persistent elitist archive and the training set; the surrogate archive is
//! discarded each iteration because its contents reflect a stale net.
//!
//! Ground-truth budget accounting is strict: only real-domain evaluations
//! count, surrogate forward passes are free, and candidates whose repair
//! fails consume nothing.

pub mod dataset;
pub mod net;

pub use dataset::{DataRow, Dataset};
pub use net::{train, Activation, EpochLoss, NetConfig, Prediction, SurrogateNet, TrainConfig};

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{ArchiveConfig, GridArchive, Solution};
use crate::domains::{Domain, DomainConfig, EvalResult, Evaluator};
use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::scheduler::{Algorithm, ExperimentConfig, Search, StatsRow, ELITIST_FLOOR};

/// A trained net posing as a domain, so the scheduler can search it
/// unchanged. Bounds, start point, and repair delegate to the base domain;
/// evaluation is a forward pass, and gradients come from the backward pass,
/// so gradient-based algorithms work even when the base domain is
/// gradient-free.
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator {
    net: Arc<SurrogateNet>,
    base: Arc<Domain>,
}

impl SurrogateEvaluator {
    pub fn new(net: SurrogateNet, base: Domain) -> Result<Self> {
        if net.config().input_dim != base.param_dim()
            || net.config().measure_dim != base.measure_dim()
        {
            return Err(Error::Config(format!(
                "net shaped for {}->{} cannot stand in for a {}->{} domain",
                net.config().input_dim,
                net.config().measure_dim,
                base.param_dim(),
                base.measure_dim()
            )));
        }
        Ok(Self { net: Arc::new(net), base: Arc::new(base) })
    }

    pub fn net(&self) -> &SurrogateNet {
        &self.net
    }
}

impl Evaluator for SurrogateEvaluator {
    fn param_dim(&self) -> usize {
        self.base.param_dim()
    }
    fn measure_dim(&self) -> usize {
        self.base.measure_dim()
    }
    fn parameter_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.base.parameter_box()
    }
    fn start_point(&self) -> Vec<f64> {
        self.base.start_point()
    }
    fn default_sigma(&self) -> f64 {
        self.base.default_sigma()
    }
    fn measure_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.base.measure_bounds()
    }
    fn default_resolution(&self) -> Vec<usize> {
        self.base.default_resolution()
    }
    fn gradients_available(&self) -> bool {
        true
    }
    fn repair(&self, params: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.base.repair(params)
    }
    fn evaluate(&self, params: &[f64]) -> Result<EvalResult> {
        let pred = self.net.predict(params)?;
        let gradients = self.net.input_gradients(params)?;
        Ok(EvalResult {
            objective: pred.objective,
            measures: pred.measures,
            gradients: Some(gradients),
            occupancy: pred.occupancy,
            trajectory: None,
            seeds: Vec::new(),
        })
    }
}

/// Uniform sample of archive occupants without replacement. Asking for more
/// solutions than the archive holds returns every occupant.
pub fn downsample(archive: &GridArchive, size: usize, rng: &mut ChaCha8Rng) -> Vec<Solution> {
    let occupants: Vec<&Solution> = archive.occupants().map(|(_, s)| s).collect();
    if occupants.len() <= size {
        return occupants.into_iter().cloned().collect();
    }
    // Partial Fisher-Yates: after i swaps the prefix is a uniform i-subset.
    let mut idx: Vec<usize> = (0..occupants.len()).collect();
    for i in 0..size {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx[..size].iter().map(|&i| occupants[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsageConfig {
    pub domain: DomainConfig,
    /// Inner-loop algorithm searching the surrogate: threshold-annealing,
    /// either covariance-based or gradient-based.
    pub inner_algorithm: Algorithm,
    pub outer_iterations: usize,
    /// Uniform ground-truth evaluations seeding the first training set.
    pub bootstrap_evals: usize,
    /// Ground-truth labels added per outer iteration.
    pub downsample: usize,
    /// Surrogate evaluations per inner search (free).
    pub inner_budget: u64,
    pub master_seed: u64,
    /// Ablation switch for the occupancy head.
    pub use_occupancy: bool,
    /// Epochs, batch size, learning rate, momentum, and loss weight for each
    /// retraining; the seed field is ignored and derived per iteration.
    pub train: TrainConfig,
    #[serde(default)]
    pub resolution: Option<Vec<usize>>,
}

impl DsageConfig {
    pub fn new(domain: DomainConfig, master_seed: u64) -> Self {
        Self {
            domain,
            inner_algorithm: Algorithm::CmaMae,
            outer_iterations: 12,
            bootstrap_evals: 100,
            downsample: 200,
            inner_budget: 10_000,
            master_seed,
            use_occupancy: true,
            train: TrainConfig::default(),
            resolution: None,
        }
    }

    /// Upper bound on real-domain evaluations the run may consume.
    pub fn ground_truth_budget(&self) -> u64 {
        (self.bootstrap_evals + self.outer_iterations * self.downsample) as u64
    }

    fn validate(&self) -> Result<()> {
        match self.inner_algorithm {
            Algorithm::CmaMae | Algorithm::CmaMaega => {}
            other => {
                return Err(Error::Config(format!(
                    "inner loop requires a threshold-annealing algorithm, got {other}"
                )))
            }
        }
        if self.outer_iterations > 0 && (self.bootstrap_evals == 0 || self.downsample == 0) {
            return Err(Error::Config(
                "bootstrap and downsample sizes must be positive".into(),
            ));
        }
        if self.outer_iterations > 0 && self.inner_budget == 0 {
            return Err(Error::Config("inner budget must be positive".into()));
        }
        Ok(())
    }
}

/// Per-outer-iteration diagnostics alongside the ground-truth archive.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DsageStats {
    /// Archive state after the bootstrap (iteration 0) and after each outer
    /// iteration; `evals` counts ground-truth evaluations only.
    pub rows: Vec<StatsRow>,
    pub ground_truth_evals: u64,
    pub repair_failures: u64,
    /// Training-set size after each outer iteration; non-decreasing and
    /// growing by at most `downsample` per step.
    pub dataset_sizes: Vec<usize>,
    /// Surrogate-archive QD score at the end of each inner search.
    pub inner_qd_scores: Vec<f64>,
    /// Surrogate-archive coverage at the start of each inner search; always
    /// zero because the archive is rebuilt from scratch.
    pub inner_start_coverage: Vec<f64>,
    /// Final-epoch training loss per outer iteration.
    pub final_train_loss: Vec<f64>,
    pub wall_seconds: f64,
}

/// Everything a finished surrogate-assisted run produces: the ground-truth
/// archive, diagnostics, the accumulated training set, and the last trained
/// net (None when no outer iteration ran).
#[derive(Debug, Clone)]
pub struct DsageRun {
    pub archive: GridArchive,
    pub stats: DsageStats,
    pub dataset: Dataset,
    pub net: Option<SurrogateNet>,
}

struct OuterLoop {
    domain: Domain,
    archive: GridArchive,
    dataset: Dataset,
    occupancy_cells: usize,
    stats: DsageStats,
}

impl OuterLoop {
    /// Repair, evaluate (in parallel), and insert a batch of candidates,
    /// charging the ground-truth budget for evaluations only.
    fn label(&mut self, candidates: Vec<Vec<f64>>) -> Result<()> {
        let mut kept = Vec::with_capacity(candidates.len());
        for params in candidates {
            match self.domain.repair(&params) {
                Ok((r, _)) => kept.push(r),
                Err(Error::RepairFailed(_)) => self.stats.repair_failures += 1,
                Err(e) => return Err(e),
            }
        }
        let domain = &self.domain;
        let results: Result<Vec<EvalResult>> = kept
            .par_iter()
            .map(|p| {
                domain.evaluate(p).map_err(|e| Error::Evaluation {
                    source: Box::new(e),
                    params: p.clone(),
                })
            })
            .collect();
        let results = results?;
        self.stats.ground_truth_evals += kept.len() as u64;

        for (params, result) in kept.into_iter().zip(results) {
            let occupancy = result
                .occupancy
                .unwrap_or_else(|| vec![0.0; self.occupancy_cells]);
            self.archive.add(Solution {
                params: params.clone(),
                objective: result.objective,
                measures: result.measures.clone(),
                seeds: result.seeds.clone(),
            })?;
            self.dataset.push(DataRow {
                params,
                objective: result.objective,
                measures: result.measures,
                occupancy,
                seeds: result.seeds,
            });
        }
        Ok(())
    }

    fn push_row(&mut self, iteration: u64) {
        self.stats.rows.push(StatsRow {
            iteration,
            evals: self.stats.ground_truth_evals,
            qd_score: self.archive.qd_score(),
            coverage: self.archive.coverage(),
            best_objective: self.archive.best_objective(),
        });
    }
}

/// Run the full surrogate-assisted loop. The ground-truth archive is never
/// reset. Deterministic in the config.
pub fn dsage_run(config: &DsageConfig) -> Result<DsageRun> {
    config.validate()?;
    let started = Instant::now();
    let domain = config.domain.build(config.master_seed)?;
    let (mlo, mhi) = domain.measure_bounds();
    let resolution =
        config.resolution.clone().unwrap_or_else(|| domain.default_resolution());
    let archive = GridArchive::new(ArchiveConfig::new(
        mlo,
        mhi,
        resolution.clone(),
        1.0,
        ELITIST_FLOOR,
    )?)?;

    let mut loop_state = OuterLoop {
        domain,
        archive,
        dataset: Dataset::new(),
        occupancy_cells: 64,
        stats: DsageStats::default(),
    };
    let mut last_net = None;
    if config.outer_iterations == 0 {
        return Ok(DsageRun {
            archive: loop_state.archive,
            stats: loop_state.stats,
            dataset: loop_state.dataset,
            net: last_net,
        });
    }

    // Phase 0: uniform bootstrap labels so the first net has signal.
    let (lo, hi) = loop_state.domain.parameter_box();
    let mut boot_rng = rng::child_rng(config.master_seed, stream::BOOTSTRAP, 0);
    let candidates: Vec<Vec<f64>> = (0..config.bootstrap_evals)
        .map(|_| lo.iter().zip(&hi).map(|(&a, &b)| boot_rng.gen_range(a..b)).collect())
        .collect();
    loop_state.label(candidates)?;
    if loop_state.dataset.is_empty() {
        return Err(Error::Config(
            "bootstrap produced no usable rows; every candidate failed repair".into(),
        ));
    }
    loop_state.occupancy_cells = loop_state.dataset.rows()[0].occupancy.len();
    loop_state.push_row(0);

    for outer in 0..config.outer_iterations as u64 {
        // Retrain from scratch: standardization is frozen per iteration, and
        // warm starts would see those statistics shift under them.
        let mut net_cfg = NetConfig::new(
            loop_state.domain.param_dim(),
            loop_state.domain.measure_dim(),
        );
        net_cfg.occupancy_cells = loop_state.occupancy_cells;
        net_cfg.use_occupancy = config.use_occupancy;
        let mut net = SurrogateNet::new(
            net_cfg,
            rng::child_seed(config.master_seed, stream::SURROGATE_INIT, outer),
        )?;
        net.set_standardization(&loop_state.dataset)?;
        let mut train_cfg = config.train.clone();
        train_cfg.seed = rng::child_seed(config.master_seed, stream::SURROGATE_TRAIN, outer);
        let trace = train(&mut net, &loop_state.dataset, &train_cfg)?;
        loop_state
            .stats
            .final_train_loss
            .push(trace.last().map(|e| e.total).unwrap_or(f64::NAN));

        // Inner QD search against the net; a fresh archive every time, so
        // stale predictions never survive a retrain.
        last_net = Some(net.clone());
        let stand_in = SurrogateEvaluator::new(net, loop_state.domain.clone())?;
        let mut inner_cfg = ExperimentConfig::new(
            config.inner_algorithm,
            config.domain.clone(),
            config.inner_budget,
            rng::child_seed(config.master_seed, stream::INNER_LOOP, outer),
        );
        inner_cfg.resolution = Some(resolution.clone());
        let mut inner = Search::with_domain(inner_cfg, Domain::Surrogate(stand_in))?;
        loop_state.stats.inner_start_coverage.push(inner.archive().coverage());
        inner.run_to_budget()?;
        loop_state.stats.inner_qd_scores.push(inner.archive().qd_score());

        // Label a uniform slice of what the surrogate found.
        let mut ds_rng = rng::child_rng(config.master_seed, stream::DOWNSAMPLE, outer);
        let picked = downsample(inner.archive(), config.downsample, &mut ds_rng);
        loop_state.label(picked.into_iter().map(|s| s.params).collect())?;

        loop_state.stats.dataset_sizes.push(loop_state.dataset.len());
        loop_state.push_row(outer + 1);
    }

    loop_state.stats.wall_seconds = started.elapsed().as_secs_f64();
    Ok(DsageRun {
        archive: loop_state.archive,
        stats: loop_state.stats,
        dataset: loop_state.dataset,
        net: last_net,
    })
}
