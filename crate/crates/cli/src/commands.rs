use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use siting::allocation::{allocate as run_allocation, read_allocation_csv, AllocationConfig, AllocationResult};
use siting::consensus::{required_diversity, run_consensus, Selection};
use siting::evaluation::{embedding_correlation, kmeans, overlap_stats, silhouette_score, zscore_columns};
use siting::export::{
    allocation_geojson, consensus_csv, consensus_geojson, matrix_csv, stations_geojson, text_summary, write_json,
};
use siting::features::load_feature_table;
use siting::hdae::{encode, read_checkpoint, train as train_model, write_checkpoint, Checkpoint};
use siting::io::{fmt_f64, write_atomic};
use siting::seed::stage_seed;
use siting::similarity::Method;
use siting::split::train_val_split;
use siting::synth::generate_synthetic_city;
use siting::{EmbeddingTable, Error, FeatureTable, GridModel, ModelConfig, Result, TrainConfig};

use crate::config::{Representation, RunConfig};

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.output_dir.join(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_grid(cfg: &RunConfig) -> Result<GridModel> {
    GridModel::read_csv(&cfg.paths.grid, cfg.cell_size_m, cfg.origin)
}

/// Raw features with any configured neighbourhood aggregates appended.
fn load_features(cfg: &RunConfig, grid: &GridModel) -> Result<FeatureTable<f64>> {
    let table = load_feature_table(&cfg.paths.features, grid)?;
    if cfg.aggregate.is_empty() {
        return Ok(table);
    }
    let names: Vec<&str> = cfg.aggregate.iter().map(String::as_str).collect();
    table.neighborhood_aggregate(grid, &names, cfg.aggregate_hops)
}

/// Embeddings for allocation: the trained model's, or z-scored features.
fn load_embeddings(cfg: &RunConfig, grid: &GridModel) -> Result<EmbeddingTable<f64>> {
    match cfg.representation {
        Representation::Raw => {
            let feats = load_features(cfg, grid)?.zscore_normalize()?;
            Ok(EmbeddingTable::from_features(&feats))
        }
        Representation::Hdae => {
            if cfg.paths.embeddings.exists() || !cfg.paths.model.exists() {
                return EmbeddingTable::read_csv(&cfg.paths.embeddings);
            }
            let ckpt: Checkpoint<f64> = read_checkpoint(&cfg.paths.model)?;
            let stats = ckpt
                .norm_stats
                .as_ref()
                .ok_or_else(|| Error::format(&cfg.paths.model, "checkpoint carries no normalization statistics"))?;
            let feats = load_features(cfg, grid)?;
            if feats.feature_names != ckpt.feature_names {
                return Err(Error::format(&cfg.paths.features, "feature columns differ from the checkpoint's"));
            }
            encode(&ckpt.params, &feats.normalize_with(stats)?)
        }
    }
}

fn allocation_config(cfg: &RunConfig) -> AllocationConfig {
    AllocationConfig {
        n: cfg.n,
        buffer_m: cfg.buffer_m,
        similarity: cfg.similarity,
        local_search_max_iters: cfg.local_search_max_iters,
        seed: stage_seed(cfg.seed, "allocate"),
        reference_ids: cfg.reference_ids.clone(),
        candidate_ids: cfg.candidate_ids.clone(),
    }
}

fn allocation_entries(r: &AllocationResult<f64>, fingerprint: &str) -> Vec<(&'static str, String)> {
    vec![
        ("similarity", r.config.similarity.to_string()),
        ("requested", r.config.n.to_string()),
        ("selected", r.selected_ids.len().to_string()),
        ("exhausted", r.exhausted.to_string()),
        ("buffer_m", fmt_f64(r.config.buffer_m)),
        ("candidates", r.candidate_weights.candidate_ids.len().to_string()),
        ("greedy_total_weight", fmt_f64(r.greedy_total_weight)),
        ("total_weight", fmt_f64(r.total_weight)),
        ("local_search_passes", r.iterations_used.to_string()),
        ("embedding_fingerprint", fingerprint.to_string()),
    ]
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let spec = siting::synth::SyntheticCitySpec {
        seed: stage_seed(cfg.seed, "synth"),
        ..cfg.synth.clone()
    };
    // Everything is generated before the first write.
    let city = generate_synthetic_city(&spec)?;
    let grid_path = out_path(cfg, "grid.csv");
    city.grid.write_csv(&grid_path)?;
    println!("wrote {}", grid_path.display());
    let features_path = out_path(cfg, "features.csv");
    city.features.write_csv(&features_path)?;
    println!("wrote {}", features_path.display());
    let manifest = out_path(cfg, "manifest.csv");
    city.write_manifest(&manifest)?;
    println!("wrote {}", manifest.display());
    let summary = text_summary(
        "synthetic city",
        &[
            ("seed", cfg.seed.to_string()),
            ("rows", spec.rows.to_string()),
            ("cols", spec.cols.to_string()),
            ("features", spec.n_features.to_string()),
            ("stations", city.grid.station_ids().len().to_string()),
            ("zones", city.zones.len().to_string()),
            ("zone_cells", city.zone_cells().len().to_string()),
        ],
    );
    write_text(&out_path(cfg, "synth_summary.txt"), &summary)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let grid = load_grid(cfg)?;
    let feats = load_features(cfg, &grid)?.zscore_normalize()?;
    let split = train_val_split(&grid, cfg.train_ratio, stage_seed(cfg.seed, "split"))?;
    let mcfg = ModelConfig {
        input_dim: feats.n_features(),
        ..cfg.model.clone()
    };
    let tcfg = TrainConfig {
        seed: stage_seed(cfg.seed, "train"),
        ..cfg.train.clone()
    };
    let (params, report) = train_model(&feats, &grid.labels(), &split, &mcfg, &tcfg)?;
    let emb = encode(&params, &feats)?;

    let model_path = out_path(cfg, "model.json");
    write_checkpoint(
        &model_path,
        &Checkpoint {
            params: params.clone(),
            feature_names: feats.feature_names.clone(),
            norm_stats: feats.norm_stats.clone(),
        },
    )?;
    println!("wrote {}", model_path.display());
    write_text(&out_path(cfg, "training_report.csv"), &report.to_csv())?;
    let emb_path = out_path(cfg, "embeddings.csv");
    emb.write_csv(&emb_path)?;
    println!("wrote {}", emb_path.display());

    let best = report.best_val();
    let summary = text_summary(
        "training",
        &[
            ("seed", cfg.seed.to_string()),
            ("features", feats.n_features().to_string()),
            ("latent_dim", mcfg.latent_dim.to_string()),
            ("parameters", params.parameter_count().to_string()),
            ("train_cells", split.train_ids.len().to_string()),
            ("val_cells", split.val_ids.len().to_string()),
            ("best_epoch", report.best_epoch.to_string()),
            ("stopped_epoch", report.stopped_epoch.to_string()),
            ("best_val_total", fmt_f64(best.total)),
            ("best_val_mse", fmt_f64(best.mse)),
            ("best_val_bce", fmt_f64(best.bce)),
            ("model_fingerprint", params.fingerprint()),
        ],
    );
    write_text(&out_path(cfg, "train_summary.txt"), &summary)
}

pub fn allocate(cfg: &RunConfig) -> Result<()> {
    let grid = load_grid(cfg)?;
    let emb = load_embeddings(cfg, &grid)?;
    let result = run_allocation(&grid, &emb, &allocation_config(cfg))?;

    let csv = out_path(cfg, "allocation.csv");
    result.write_csv(&csv, &grid)?;
    println!("wrote {}", csv.display());
    for (name, value) in [
        ("allocation.geojson", allocation_geojson(&grid, &result)),
        ("stations.geojson", stations_geojson(&grid)),
    ] {
        let path = out_path(cfg, name);
        write_json(&path, &value)?;
        println!("wrote {}", path.display());
    }
    let weights = out_path(cfg, "weights.csv");
    result.candidate_weights.write_csv(&weights)?;
    println!("wrote {}", weights.display());
    let summary = text_summary("allocation", &allocation_entries(&result, &emb.fingerprint));
    if result.exhausted {
        eprintln!(
            "warning: only {} of {} requested sites fit under the buffer",
            result.selected_ids.len(),
            result.config.n
        );
    }
    write_text(&out_path(cfg, "allocation_summary.txt"), &summary)
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    if cfg.similarity.method == Method::Kde {
        return Err(Error::Config("sweep varies k and needs [similarity] method = topk".into()));
    }
    let grid = load_grid(cfg)?;
    let emb = load_embeddings(cfg, &grid)?;
    let base = allocation_config(cfg);
    let mut results = Vec::new();
    for &k in &cfg.sweep_k {
        let acfg = AllocationConfig {
            similarity: cfg.similarity.with_k(k),
            ..base.clone()
        };
        results.push((k, run_allocation(&grid, &emb, &acfg)?));
    }
    let mut summary = String::from("sweep\n");
    for (k, r) in &results {
        let path = out_path(cfg, &format!("alloc_k{k}.csv"));
        r.write_csv(&path, &grid)?;
        println!("wrote {}", path.display());
        let _ = writeln!(
            summary,
            "k={k} selected={} total_weight={} exhausted={}",
            r.selected_ids.len(),
            fmt_f64(r.total_weight),
            r.exhausted
        );
    }
    if results.len() >= 2 {
        let sets: Vec<(String, Vec<usize>)> =
            results.iter().map(|(k, r)| (format!("k{k}"), r.selected_ids.clone())).collect();
        let report = overlap_stats(&sets)?;
        write_text(&out_path(cfg, "overlap_pairwise.csv"), &report.pairwise_csv())?;
        write_text(&out_path(cfg, "overlap_multiplicity.csv"), &report.multiplicity_csv())?;
        summary.push_str(&report.summary());
    }
    write_text(&out_path(cfg, "sweep_summary.txt"), &summary)
}

/// `alloc_*.csv` files in the output directory, sorted by name.
fn discover_allocations(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("alloc_") && name.ends_with(".csv") {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::format(dir, "no alloc_*.csv allocation files to combine"));
    }
    Ok(found)
}

pub fn consensus(cfg: &RunConfig) -> Result<()> {
    let grid = load_grid(cfg)?;
    let inputs = match &cfg.consensus_inputs {
        Some(list) => list.clone(),
        None => discover_allocations(&cfg.paths.output_dir)?,
    };
    let mut selections = Vec::new();
    for path in &inputs {
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::format(path, "allocation file needs a UTF-8 name"))?;
        let ids = read_allocation_csv(path)?.into_iter().map(|(id, _)| id).collect();
        selections.push(Selection::new(label, ids));
    }
    let outcome = run_consensus(&selections, &grid, &cfg.consensus)?;

    write_text(&out_path(cfg, "zones.csv"), &consensus_csv(&outcome.zones))?;
    let geo = out_path(cfg, "zones.geojson");
    write_json(&geo, &consensus_geojson(&grid, &outcome.zones))?;
    println!("wrote {}", geo.display());

    let labels: Vec<&str> = selections.iter().map(|s| s.label.as_str()).collect();
    let mut summary = text_summary(
        "consensus",
        &[
            ("inputs", labels.join(",")),
            ("eps_m", fmt_f64(cfg.consensus.eps_m)),
            ("min_pts", cfg.consensus.min_pts.to_string()),
            ("unanimity", fmt_f64(cfg.consensus.unanimity)),
            ("required_diversity", required_diversity(selections.len(), cfg.consensus.unanimity).to_string()),
            ("pooled_candidates", outcome.pooled.len().to_string()),
            ("clusters", outcome.cluster_count.to_string()),
            ("zones", outcome.zones.len().to_string()),
        ],
    );
    for z in &outcome.zones {
        let _ = writeln!(
            summary,
            "zone {}: size={} diversity={} medoid={}",
            z.zone_id, z.size, z.diversity, z.medoid_id
        );
    }
    write_text(&out_path(cfg, "consensus_summary.txt"), &summary)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let grid = load_grid(cfg)?;
    let raw = load_features(cfg, &grid)?.zscore_normalize()?;
    let emb = EmbeddingTable::<f64>::read_csv(&cfg.paths.embeddings)?;
    if emb.n_rows() != grid.len() {
        return Err(Error::Shape(format!("{} embedding rows for {} grid cells", emb.n_rows(), grid.len())));
    }
    let km_seed = stage_seed(cfg.seed, "evaluate.kmeans");
    let sil_seed = stage_seed(cfg.seed, "evaluate.silhouette");

    let mut silhouette = String::from("representation,k,score,n_points,n_used,iterations,converged,inertia\n");
    let mut labels = Vec::new();
    let mut summary = String::from("evaluation\n");
    for (name, values) in [("raw", &raw.values), ("embedding", &emb.vectors)] {
        let x = zscore_columns(values.view());
        let km = kmeans(x.view(), cfg.eval_clusters, km_seed, cfg.eval_max_iters)?;
        let sil = silhouette_score(x.view(), &km.labels, cfg.silhouette_cap, sil_seed)?;
        let _ = writeln!(
            silhouette,
            "{name},{},{},{},{},{},{},{}",
            cfg.eval_clusters,
            fmt_f64(sil.score),
            sil.n_points,
            sil.n_used,
            km.iterations,
            km.converged,
            fmt_f64(km.inertia())
        );
        let _ = writeln!(summary, "{name} silhouette: {:.4}", sil.score);
        labels.push(km.labels);
    }
    let mut clusters = String::from("id,raw_cluster,embedding_cluster\n");
    for (id, (a, b)) in labels[0].iter().zip(&labels[1]).enumerate() {
        let _ = writeln!(clusters, "{id},{a},{b}");
    }
    let corr = embedding_correlation(&emb)?;
    let names: Vec<String> = (0..emb.dim()).map(|j| format!("z_{j}")).collect();
    let max_off = (0..emb.dim())
        .flat_map(|i| (0..emb.dim()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| corr[[i, j]].abs())
        .fold(0.0f64, f64::max);
    let _ = writeln!(summary, "max |off-diagonal correlation|: {max_off:.4}");

    write_text(&out_path(cfg, "clusters.csv"), &clusters)?;
    write_text(&out_path(cfg, "silhouette.csv"), &silhouette)?;
    write_text(&out_path(cfg, "correlation.csv"), &matrix_csv(&names, &corr))?;
    write_text(&out_path(cfg, "evaluation_summary.txt"), &summary)
}
