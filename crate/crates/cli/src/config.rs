//! INI run configuration. Every key is optional; unknown sections and keys
//! are rejected so typos surface as configuration errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use siting::consensus::ConsensusConfig;
use siting::similarity::{Method, Metric, SimilarityConfig};
use siting::synth::SyntheticCitySpec;
use siting::{Error, ModelConfig, Result, TrainConfig};

pub const DEFAULT_SWEEP_K: [usize; 7] = [1, 3, 5, 9, 17, 34, 68];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Hdae,
    Raw,
}

#[derive(Debug, Clone)]
pub struct Paths {
    pub output_dir: PathBuf,
    pub grid: PathBuf,
    pub features: PathBuf,
    pub model: PathBuf,
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub cell_size_m: f64,
    pub origin: (f64, f64),
    pub synth: SyntheticCitySpec,
    pub aggregate: Vec<String>,
    pub aggregate_hops: usize,
    /// `ModelConfig` with `input_dim` filled in once features are loaded.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_ratio: f64,
    pub similarity: SimilarityConfig,
    pub n: usize,
    pub buffer_m: f64,
    pub local_search_max_iters: usize,
    pub representation: Representation,
    pub reference_ids: Option<Vec<usize>>,
    pub candidate_ids: Option<Vec<usize>>,
    pub sweep_k: Vec<usize>,
    pub consensus: ConsensusConfig,
    pub consensus_inputs: Option<Vec<PathBuf>>,
    pub eval_clusters: usize,
    pub eval_max_iters: usize,
    pub silhouette_cap: usize,
}

/// Section → key → value, consumed as keys are read.
struct Table {
    entries: BTreeMap<String, BTreeMap<String, String>>,
}

impl Table {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.entries.get_mut(section).and_then(|s| s.remove(key))
    }

    fn parse<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T> {
        match self.take(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse '{v}'"))),
        }
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.take(section, key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse '{s}'")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn finish(self) -> Result<()> {
        for (section, keys) in self.entries {
            if let Some(key) = keys.keys().next() {
                return Err(Error::Config(format!("unknown key [{section}] {key}")));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 12] = [
    "run",
    "paths",
    "grid",
    "synth",
    "features",
    "model",
    "train",
    "similarity",
    "allocation",
    "sweep",
    "consensus",
    "evaluate",
];

impl RunConfig {
    /// Loads `path` (or pure defaults when `None`). Relative paths in the
    /// file resolve against the file's directory; `out` replaces the output
    /// directory and `seed` the global seed.
    pub fn load(path: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                let ini = Ini::load_from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (to_table(&ini)?, base)
            }
            None => (Table { entries: BTreeMap::new() }, PathBuf::new()),
        };
        let cfg = Self::from_table(&mut table, &base, seed, out)?;
        table.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_table(t: &mut Table, base: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        let file_seed = t.parse("run", "seed", 0u64)?;
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let output_dir = match out {
            Some(o) => o.to_path_buf(),
            None => t.take("paths", "output_dir").map(resolve).unwrap_or_else(|| base.to_path_buf()),
        };
        let mut path_or = |key: &str, default: &str| -> PathBuf {
            t.take("paths", key).map(resolve).unwrap_or_else(|| output_dir.join(default))
        };
        let paths = Paths {
            grid: path_or("grid", "grid.csv"),
            features: path_or("features", "features.csv"),
                model: path_or("model", "model.json"),
            embeddings: path_or("embeddings", "embeddings.csv"),
            output_dir: output_dir.clone(),
        };

        let cell_size_m = t.parse("grid", "cell_size_m", siting::grid::DEFAULT_CELL_SIZE_M)?;
        let origin = (t.parse("grid", "origin_x", 0.0)?, t.parse("grid", "origin_y", 0.0)?);

        let d = SyntheticCitySpec::default();
        let synth = SyntheticCitySpec {
            rows: t.parse("synth", "rows", d.rows)?,
            cols: t.parse("synth", "cols", d.cols)?,
            n_features: t.parse("synth", "n_features", d.n_features)?,
            n_station_cells: t.parse("synth", "n_station_cells", d.n_station_cells)?,
            n_planted_zones: t.parse("synth", "n_planted_zones", d.n_planted_zones)?,
            zone_side: t.parse("synth", "zone_side", d.zone_side)?,
            noise_std: t.parse("synth", "noise_std", d.noise_std)?,
            seed: 0,
        };

        let aggregate = t.list::<String>("features", "aggregate")?.unwrap_or_default();
        let aggregate_hops = t.parse("features", "hops", 1usize)?;

        let m = ModelConfig::new(1);
        let model = ModelConfig {
            input_dim: 1,
            latent_dim: t.parse("model", "latent_dim", m.latent_dim)?,
            base_hidden: t.parse("model", "base_hidden", m.base_hidden)?,
            depth: t.parse("model", "depth", m.depth)?,
            noise_prob: t.parse("model", "noise_prob", m.noise_prob)?,
            noise_std: t.parse("model", "noise_std", m.noise_std)?,
            lambda_cls: t.parse("model", "lambda_cls", m.lambda_cls)?,
            pos_weight: t.parse("model", "pos_weight", m.pos_weight)?,
        };
        let tr = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: t.parse("train", "learning_rate", tr.learning_rate)?,
            batch_size: t.parse("train", "batch_size", tr.batch_size)?,
            max_epochs: t.parse("train", "max_epochs", tr.max_epochs)?,
            patience: t.parse("train", "patience", tr.patience)?,
            seed: 0,
        };
        let train_ratio = t.parse("train", "train_ratio", 0.8)?;

        let metric: Metric = t.parse("similarity", "metric", Metric::Cosine)?;
        let method = t.take("similarity", "method").unwrap_or_else(|| "topk".into());
        let k = t.parse("similarity", "k", 3usize)?;
        let similarity = match method.as_str() {
            "topk" => SimilarityConfig::topk(k, metric),
            "kde" => SimilarityConfig::kde(metric),
            other => return Err(Error::Config(format!("[similarity] method: unknown '{other}'"))),
        };

        let n = t.parse("allocation", "n", 68usize)?;
        let buffer_m = t.parse("allocation", "buffer_m", 250.0)?;
        let local_search_max_iters = t.parse("allocation", "local_search_max_iters", 50usize)?;
        let representation = match t.take("allocation", "embedding").as_deref() {
            None | Some("hdae") => Representation::Hdae,
            Some("raw") => Representation::Raw,
            Some(other) => return Err(Error::Config(format!("[allocation] embedding: unknown '{other}'"))),
        };
        let reference_ids = t.list("allocation", "reference_ids")?;
        let candidate_ids = t.list("allocation", "candidate_ids")?;

        let sweep_k = t.list("sweep", "k_values")?.unwrap_or_else(|| DEFAULT_SWEEP_K.to_vec());

        let c = ConsensusConfig::default();
        let consensus = ConsensusConfig {
            eps_m: t.parse("consensus", "eps_m", c.eps_m)?,
            min_pts: t.parse("consensus", "min_pts", c.min_pts)?,
            unanimity: t.parse("consensus", "unanimity", c.unanimity)?,
            buffer_m,
        };
        let consensus_inputs = t
            .list::<String>("consensus", "inputs")?
            .map(|v| v.into_iter().map(resolve).collect());

        Ok(Self {
            seed: seed.unwrap_or(file_seed),
            paths,
            cell_size_m,
            origin,
            synth,
            aggregate,
            aggregate_hops,
            model,
            train,
            train_ratio,
            similarity,
            n,
            buffer_m,
            local_search_max_iters,
            representation,
            reference_ids,
            candidate_ids,
            sweep_k,
            consensus,
            consensus_inputs,
            eval_clusters: t.parse("evaluate", "clusters", 5usize)?,
            eval_max_iters: t.parse("evaluate", "max_iters", siting::evaluation::DEFAULT_KMEANS_MAX_ITERS)?,
            silhouette_cap: t.parse("evaluate", "silhouette_cap", siting::evaluation::DEFAULT_SILHOUETTE_CAP)?,
        })
    }

    fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.consensus.validate()?;
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(Error::Config("[grid] cell_size_m must be positive".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config("[train] train_ratio must lie in (0, 1)".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("[allocation] n must be >= 1".into()));
        }
        if !(self.buffer_m >= 0.0 && self.buffer_m.is_finite()) {
            return Err(Error::Config("[allocation] buffer_m must be >= 0".into()));
        }
        if let Method::TopK(0) = self.similarity.method {
            return Err(Error::Config("[similarity] k must be >= 1".into()));
        }
        if self.sweep_k.is_empty() || self.sweep_k.contains(&0) {
            return Err(Error::Config("[sweep] k_values must be a non-empty list of k >= 1".into()));
        }
        let mut ks = self.sweep_k.clone();
        ks.sort_unstable();
        ks.dedup();
        if ks.len() != self.sweep_k.len() {
            return Err(Error::Config("[sweep] k_values contains duplicates".into()));
        }
        if self.eval_clusters == 0 {
            return Err(Error::Config("[evaluate] clusters must be >= 1".into()));
        }
        Ok(())
    }
}

fn to_table(ini: &Ini) -> Result<Table> {
    let mut entries: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for (section, props) in ini.iter() {
        let name = section.unwrap_or("run");
        if !SECTIONS.contains(&name) {
            return Err(Error::Config(format!("unknown section [{name}]")));
        }
        let map = entries.entry(name.to_string()).or_default();
        for (k, v) in props.iter() {
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key [{name}] {k}")));
            }
        }
    }
    Ok(Table { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.ini");
        std::fs::write(&p, text).unwrap();
        RunConfig::load(Some(&p), None, None)
    }

    #[test]
    fn defaults_without_file() {
        let c = RunConfig::load(None, Some(9), Some(Path::new("out"))).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.paths.grid, Path::new("out/grid.csv"));
        assert_eq!(c.sweep_k, DEFAULT_SWEEP_K);
        assert_eq!(c.similarity, SimilarityConfig::topk(3, Metric::Cosine));
        assert_eq!(c.n, 68);
    }

    #[test]
    fn values_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.ini");
        std::fs::write(
            &p,
            "[run]\nseed = 4\n[paths]\noutput_dir = res\ngrid = data/g.csv\n[similarity]\nmethod = kde\nmetric = euclidean\n[sweep]\nk_values = 1, 2\n",
        )
        .unwrap();
        let c = RunConfig::load(Some(&p), None, None).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.paths.grid, dir.path().join("data/g.csv"));
        assert_eq!(c.paths.features, dir.path().join("res/features.csv"));
        assert_eq!(c.similarity, SimilarityConfig::kde(Metric::Euclidean));
        assert_eq!(c.sweep_k, vec![1, 2]);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(load("[allocation]\nnn = 3\n"), Err(Error::Config(_))));
        assert!(matches!(load("[bogus]\nx = 1\n"), Err(Error::Config(_))));
        assert!(matches!(load("[allocation]\nn = many\n"), Err(Error::Config(_))));
        assert!(matches!(load("[allocation]\nbuffer_m = -1\n"), Err(Error::Config(_))));
        assert!(matches!(load("[synth]\nrows = 3\ncols = 3\n"), Err(Error::Config(_))));
        assert!(matches!(load("[consensus]\nunanimity = 1.5\n"), Err(Error::Config(_))));
    }
}
