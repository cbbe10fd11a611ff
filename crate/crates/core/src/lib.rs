//! Quality-diversity optimization over tessellated archives.
//!
//! The crate provides a soft-threshold grid archive, a self-adapting Gaussian
//! search engine, three emitter families built on it (random perturbation,
//! improvement-ranked, and objective-measure gradient arborescence), a
//! scheduler that runs complete experiments, benchmark and robot-teleoperation
//! domains, and a surrogate-assisted outer loop that spends most of its
//! evaluation budget inside a learned model of the expensive domain.
//!
//! All randomness flows through seeds derived in [`rng`], so a run is a pure
//! function of its config and master seed.

pub mod archive;
pub mod cma_es;
pub mod domains;
pub mod emitters;
pub mod error;
pub mod rng;
pub mod scheduler;
pub mod surrogate;

pub use archive::{AddResult, AddStatus, ArchiveConfig, Cell, GridArchive, Solution};
pub use error::{Error, Result};
pub use scheduler::{Algorithm, ExperimentConfig, RunStats, Search, StatsRow};
pub use surrogate::{dsage_run, DsageConfig, DsageRun, DsageStats, SurrogateNet, TrainConfig};

use std::path::Path;

/// Write a file atomically: stage to a sibling temp file, then rename over
/// the destination so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = dir.join(Path::new(&tmp).file_name().unwrap());
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
