//! Named datasets and their fixed splits.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use difnet::graph::{load_citation_dataset, standard_split, Graph, GraphError, Split};
use difnet::rng::node_permutation;
use difnet::toy;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "DIFNET_DATA_DIR";

/// Labelled nodes per class in the training set of the citation datasets.
pub const TRAIN_PER_CLASS: usize = 20;
pub const VAL_SIZE: usize = 500;
pub const TEST_SIZE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Cora,
    Citeseer,
    Pubmed,
    /// Bundled 10-node two-cluster graph; needs no files.
    Toy,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Cora => "cora",
            Dataset::Citeseer => "citeseer",
            Dataset::Pubmed => "pubmed",
            Dataset::Toy => "toy",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `$DIFNET_DATA_DIR`, or `data` relative to the working directory.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

/// Loads `<root>/<name>/<name>.{content,cites}` with its standard split.
///
/// With `shuffle`, nodes are first put in a seeded random order, so the
/// split no longer follows file order. The toy graph ignores `shuffle`.
pub fn load(dataset: Dataset, root: &Path, shuffle: Option<u64>) -> Result<(Graph, Split), GraphError> {
    if dataset == Dataset::Toy {
        return Ok((toy::two_cluster(), toy::two_cluster_split()));
    }
    let dir = root.join(dataset.name());
    let mut g = load_citation_dataset(
        &dir.join(format!("{}.content", dataset.name())),
        &dir.join(format!("{}.cites", dataset.name())),
    )?;
    if let Some(seed) = shuffle {
        g = g.permuted(&node_permutation(g.node_count(), seed));
    }
    let split = standard_split(&g, TRAIN_PER_CLASS, VAL_SIZE, TEST_SIZE)?;
    Ok((g, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_needs_no_files() {
        let (g, split) = load(Dataset::Toy, Path::new("/nonexistent"), None).unwrap();
        assert_eq!(g.node_count(), 10);
        assert_eq!(split.train.len(), 4);
    }

    #[test]
    fn missing_files_report_the_path() {
        let err = load(Dataset::Citeseer, Path::new("/nonexistent"), Some(1)).unwrap_err();
        assert!(err.to_string().contains("citeseer.content"), "{err}");
    }
}
