//! Subcommand implementations. Every artifact goes through atomic writes so
//! a crash or Ctrl-C never leaves a half-written file behind.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use qd_core::domains::{DomainConfig, Evaluator};
use qd_core::scheduler::stats_csv;
use qd_core::surrogate::dsage_run;
use qd_core::{write_atomic, ArchiveConfig, GridArchive, Search};

use crate::config::{layout, manifest, materialize, RawConfig, RunSpec};

fn load_spec(config_path: &Path, overrides: &[String], seed: Option<u64>) -> Result<RunSpec> {
    let mut raw = RawConfig::from_file(config_path)?;
    for spec in overrides {
        raw.apply_override(spec)?;
    }
    if let Some(seed) = seed {
        raw.set("seed", &seed.to_string());
    }
    materialize(&raw).with_context(|| format!("in config {}", config_path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// Write archive CSV, stats CSV, and (for 2D archives) the heatmap.
fn write_archive_outputs(dir: &Path, archive: &GridArchive, stats: &str) -> Result<()> {
    write_text(&dir.join(layout::ARCHIVE), &archive.to_csv())?;
    write_text(&dir.join(layout::STATS), stats)?;
    if archive.config().dims() == 2 {
        let pgm = archive.heatmap_pgm().map_err(|e| anyhow!("{e}"))?;
        write_atomic(&dir.join(layout::HEATMAP), &pgm)
            .with_context(|| "writing heatmap".to_string())?;
    } else {
        println!("skipping heatmap: archive is not 2-dimensional");
    }
    Ok(())
}

fn summarize(archive: &GridArchive, evals: u64, seconds: f64) {
    println!("evals     = {evals}");
    println!("qd_score  = {:.4}", archive.qd_score());
    println!(
        "coverage  = {:.4} ({} of {} cells)",
        archive.coverage(),
        archive.num_occupied(),
        archive.num_cells()
    );
    match archive.best_objective() {
        Some(best) => println!("best      = {best:.4}"),
        None => println!("best      = n/a (empty archive)"),
    }
    println!("seconds   = {seconds:.2}");
}

/// Drive a search to its budget, writing intermediate checkpoints every
/// `every` iterations when requested.
fn run_search(search: &mut Search, dir: &Path, every: u64) -> Result<()> {
    loop {
        let progressed = search.step().map_err(|e| anyhow!("{e}"))?;
        if !progressed {
            break;
        }
        if every > 0 && search.iteration() % every == 0 {
            let name = format!("iter_{:06}.json", search.iteration());
            let json = search.checkpoint_json().map_err(|e| anyhow!("{e}"))?;
            write_text(&dir.join(layout::CHECKPOINT_DIR).join(name), &json)?;
        }
    }
    let json = search.checkpoint_json().map_err(|e| anyhow!("{e}"))?;
    write_text(&dir.join(layout::FINAL_CHECKPOINT), &json)?;
    Ok(())
}

pub fn cmd_run(
    config_path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let spec = load_spec(config_path, overrides, seed)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("qd-out"));
    std::fs::create_dir_all(&dir)?;
    // Manifest first: an interrupted run still records what it was.
    write_text(&dir.join(layout::MANIFEST), &manifest(&spec))?;

    let started = Instant::now();
    match spec {
        RunSpec::Search { config, checkpoint_every } => {
            std::fs::create_dir_all(dir.join(layout::CHECKPOINT_DIR))?;
            println!("algorithm = {}", config.algorithm);
            println!("domain    = {}", config.domain.name());
            let mut search = Search::new(config).map_err(|e| anyhow!("{e}"))?;
            run_search(&mut search, &dir, checkpoint_every)?;
            write_archive_outputs(&dir, search.archive(), &search.stats_csv())?;
            summarize(search.archive(), search.evals_used(), started.elapsed().as_secs_f64());
        }
        RunSpec::Dsage(cfg) => {
            println!("algorithm = dsage ({} inner)", cfg.inner_algorithm);
            println!("domain    = {}", cfg.domain.name());
            let run = dsage_run(&cfg).map_err(|e| anyhow!("{e}"))?;
            write_archive_outputs(&dir, &run.archive, &stats_csv(&run.stats.rows))?;
            write_text(&dir.join(layout::DATASET), &run.dataset.to_csv())?;
            if let Some(net) = &run.net {
                write_text(&dir.join(layout::SURROGATE), &net.to_text())?;
            }
            summarize(&run.archive, run.stats.ground_truth_evals, started.elapsed().as_secs_f64());
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn cmd_resume(checkpoint: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(checkpoint)
        .with_context(|| format!("cannot read checkpoint {}", checkpoint.display()))?;
    let mut search = Search::resume_json(&text).map_err(|e| anyhow!("{e}"))?;
    // Default output: the run directory the checkpoint came from
    // (<dir>/checkpoint/x.json -> <dir>), so resuming overwrites in place.
    let dir = match out {
        Some(d) => d,
        None => checkpoint
            .parent()
            .and_then(Path::parent)
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .ok_or_else(|| anyhow!("cannot infer an output directory; pass --out"))?,
    };
    std::fs::create_dir_all(dir.join(layout::CHECKPOINT_DIR))?;
    println!("resuming at iteration {} with {} evals used", search.iteration(), search.evals_used());

    let started = Instant::now();
    let spec = RunSpec::Search { config: search.config().clone(), checkpoint_every: 0 };
    write_text(&dir.join(layout::MANIFEST), &manifest(&spec))?;
    run_search(&mut search, &dir, 0)?;
    write_archive_outputs(&dir, search.archive(), &search.stats_csv())?;
    summarize(search.archive(), search.evals_used(), started.elapsed().as_secs_f64());
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn cmd_compare(configs: &[PathBuf], seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    if configs.is_empty() {
        bail!("compare needs at least one --config");
    }
    let mut specs = Vec::new();
    for path in configs {
        match load_spec(path, &[], seed)? {
            RunSpec::Search { config, .. } => specs.push(config),
            RunSpec::Dsage(_) => {
                bail!("{}: compare handles direct search algorithms only", path.display())
            }
        }
    }
    let first = &specs[0];
    for (path, other) in configs.iter().zip(&specs).skip(1).map(|(p, c)| (p, c)) {
        if other.domain != first.domain {
            bail!(
                "{}: domain {} differs from {}; compared runs must share a domain",
                path.display(),
                other.domain.name(),
                first.domain.name()
            );
        }
        if other.resolution != first.resolution {
            bail!("{}: archive resolution differs; compared runs must share one", path.display());
        }
        if other.master_seed != first.master_seed {
            bail!(
                "{}: seed {} differs from {}; pass --seed to pair them",
                path.display(),
                other.master_seed,
                first.master_seed
            );
        }
    }

    let mut rows = Vec::new();
    for config in specs {
        let name = config.algorithm.to_string();
        let started = Instant::now();
        let (archive, stats) = qd_core::scheduler::run(config).map_err(|e| anyhow!("{e}"))?;
        rows.push((
            name,
            archive.qd_score(),
            archive.coverage(),
            stats.evals_used,
            archive.best_objective().unwrap_or(f64::NAN),
            started.elapsed().as_secs_f64(),
        ));
    }

    println!(
        "{:<18} {:>12} {:>10} {:>8} {:>8} {:>8}",
        "algorithm", "qd_score", "coverage", "evals", "best", "seconds"
    );
    // Wall time stays out of the CSV so paired runs compare byte-for-byte.
    let mut csv = String::from("algorithm,qd_score,coverage,evals,best_objective\n");
    for (name, qd, cov, evals, best, secs) in &rows {
        println!("{name:<18} {qd:>12.4} {cov:>10.4} {evals:>8} {best:>8.4} {secs:>8.2}");
        csv.push_str(&format!("{name},{qd},{cov},{evals},{best}\n"));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        write_text(&dir.join(layout::COMPARE), &csv)?;
        println!("wrote {}", dir.join(layout::COMPARE).display());
    }
    Ok(())
}

/// Rebuild the archive geometry from the manifest sitting next to the CSV.
fn archive_config_for(archive_csv: &Path) -> Result<ArchiveConfig> {
    let manifest_path = archive_csv
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .join(layout::MANIFEST);
    let raw = RawConfig::from_file(&manifest_path).with_context(|| {
        format!(
            "a heatmap needs the run manifest next to the archive ({})",
            manifest_path.display()
        )
    })?;
    let spec = materialize(&raw)?;
    let (domain_cfg, resolution, lr, floor) = match &spec {
        RunSpec::Search { config, .. } => (
            config.domain.clone(),
            config.resolution.clone().expect("materialized config has a resolution"),
            config.resolved_learning_rate(),
            config.resolved_threshold_floor(),
        ),
        RunSpec::Dsage(cfg) => (
            cfg.domain.clone(),
            cfg.resolution.clone().expect("materialized config has a resolution"),
            1.0,
            qd_core::scheduler::ELITIST_FLOOR,
        ),
    };
    let seed = match &spec {
        RunSpec::Search { config, .. } => config.master_seed,
        RunSpec::Dsage(cfg) => cfg.master_seed,
    };
    let domain = DomainConfig::build(&domain_cfg, seed).map_err(|e| anyhow!("{e}"))?;
    let (mlo, mhi) = domain.measure_bounds();
    ArchiveConfig::new(mlo, mhi, resolution, lr, floor).map_err(|e| anyhow!("{e}"))
}

pub fn cmd_heatmap(archive_csv: &Path, out: &Path) -> Result<()> {
    let config = archive_config_for(archive_csv)?;
    let text = std::fs::read_to_string(archive_csv)
        .with_context(|| format!("cannot read archive {}", archive_csv.display()))?;
    let archive = GridArchive::from_csv(config, &text).map_err(|e| anyhow!("{e}"))?;
    let pgm = archive.heatmap_pgm().map_err(|e| anyhow!("{e}"))?;
    write_atomic(out, &pgm).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}
