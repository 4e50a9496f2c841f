use std::path::{Path, PathBuf};

/// Paths under `out/<config-hash>/`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(out: &Path, hash: &str) -> Self {
        OutputLayout { root: out.join(hash) }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    /// Merged over every seed that has been run.
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn costs(&self) -> PathBuf {
        self.root.join("costs.csv")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join("seeds").join(format!("seed-{seed}"))
    }

    pub fn seed_metrics(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("metrics.csv")
    }

    pub fn seed_costs(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("costs.csv")
    }

    pub fn checkpoint(&self, seed: u64, round: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("seed-{seed}")).join(format!("round-{round}.json"))
    }

    /// Draws and simulations of one round, needed to resume.
    pub fn round_record(&self, seed: u64, round: usize) -> PathBuf {
        self.root.join("store").join(format!("seed-{seed}")).join(format!("round-{round}.json"))
    }

    pub fn samples(&self, seed: u64, round: usize) -> PathBuf {
        self.root.join("samples").join(format!("seed-{seed}")).join(format!("round-{round}.jsonl"))
    }

    /// Seeds with a per-seed metric file, ascending.
    pub fn seeds_present(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = std::fs::read_dir(self.root.join("seeds"))
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| e.file_name().to_str()?.strip_prefix("seed-")?.parse().ok())
            .collect();
        seeds.sort_unstable();
        seeds
    }
}
