use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use verbsense::acquire::{
    build_nodes, parse_reply, ChatClient, FetchJob, HttpTransport, ImageInput, PromptKind, PromptTemplate, ReplyCache,
};
use verbsense::cluster::{default_ratio_grid, run_two_step, ClusteringConfig};
use verbsense::eval::{self, ambiguity_stats, breakdown, rank_by_similarity, robustness_sweep, score};
use verbsense::io::{self, PairsFormat};
use verbsense::metrics::model_report;
use verbsense::{SynsetLexicon, VerbLexicon, TOOLKIT_VERSION};

use crate::args::*;
use crate::config::{require, FileConfig};
use crate::UsageError;

pub fn dispatch(cli: &Cli) -> Result<String> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Acquire(a) => acquire(a, &file),
        Command::Ingest(a) => ingest(a, &file),
        Command::Cluster(a) => cluster(a, &file),
        Command::Metrics(a) => metrics(a, &file),
        Command::Eval(a) => evaluate(a, &file),
        Command::Ambiguity(a) => ambiguity(a),
        Command::Sweep(a) => sweep(a),
        Command::Probe(a) => probe(a, &file),
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    toolkit_version: &'a str,
    command: &'a str,
    run_config: &'a Value,
    result: T,
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn opt_path(p: &Option<PathBuf>) -> Value {
    p.as_deref().map_or(Value::Null, |p| Value::String(path_str(p)))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_report<T: Serialize>(path: &Path, command: &str, run_config: &Value, result: T) -> Result<()> {
    let report = Report {
        toolkit_version: TOOLKIT_VERSION,
        command,
        run_config,
        result,
    };
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    write_file(path, &body)
}

/// TSV body preceded by provenance comment lines.
fn write_tsv(path: &Path, run_config: &Value, table: &str) -> Result<()> {
    let mut body = format!("# toolkit: {TOOLKIT_VERSION}\n# run_config: {run_config}\n");
    body.push_str(table);
    write_file(path, &body)
}

fn lexicon_at(path: &Path) -> Result<VerbLexicon> {
    Ok(io::read_lexicon(path)?)
}

fn pct(f: eval::Fraction) -> String {
    format!("{:.1}%", 100.0 * f.value())
}

fn cluster(a: &ClusterArgs, file: &FileConfig) -> Result<String> {
    let pairs_path = require(a.pairs.clone(), file.pairs.clone(), "pairs")?;
    let lexicon_path = require(a.lexicon.clone(), file.lexicon.clone(), "lexicon")?;
    let defaults = ClusteringConfig::default();
    let k_min = a.k_min.or(file.k_min).unwrap_or(2);
    let k_max = a.k_max.or(file.k_max).unwrap_or(16);
    let config = ClusteringConfig {
        algorithm: a.algorithm.or(file.algorithm).unwrap_or(defaults.algorithm),
        k_range: (k_min..=k_max).collect(),
        ratio_grid: a
            .ratios
            .clone()
            .or(file.ratios.clone())
            .unwrap_or_else(default_ratio_grid),
        seed: a.seed.or(file.seed).unwrap_or(defaults.seed),
        kmeans_restarts: a.restarts.or(file.restarts).unwrap_or(defaults.kmeans_restarts),
        max_iters: a.max_iters.or(file.max_iters).unwrap_or(defaults.max_iters),
        tolerance: a.tolerance.or(file.tolerance).unwrap_or(defaults.tolerance),
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let run_config = json!({
        "pairs": path_str(&pairs_path),
        "lexicon": path_str(&lexicon_path),
        "clustering": config,
    });

    let lexicon = lexicon_at(&lexicon_path)?;
    let (pairs, _) = io::read_pairs(&pairs_path, &lexicon)?;
    let model = run_two_step(&pairs, lexicon.len(), &config)?;
    io::write_cluster_model(&model, &run_config, &a.out)?;
    Ok(format!(
        "cluster: {} pairs, {} Step-1 clusters, {} final clusters (ratio {}, silhouette {:.4}) -> {}",
        pairs.len(),
        model.step1_count(),
        model.final_clusters.len(),
        model.chosen_ratio,
        model.final_silhouette,
        a.out.display()
    ))
}

fn ingest(a: &IngestArgs, file: &FileConfig) -> Result<String> {
    let lexicon_path = require(a.lexicon.clone(), file.lexicon.clone(), "lexicon")?;
    let lexicon = lexicon_at(&lexicon_path)?;
    let (pairs, manifest) = io::read_pairs(&a.pairs, &lexicon)?;
    let images: std::collections::BTreeSet<&str> = pairs.iter().map(|p| p.image_id.as_str()).collect();
    let verbs: std::collections::BTreeSet<&str> = pairs.iter().map(|p| p.verb.as_str()).collect();
    let injected = pairs
        .iter()
        .filter(|p| p.source == verbsense::PairSource::GoldInjected)
        .count();
    let mut summary = format!(
        "ingest: {} pairs, dim {}, {} images, {} verbs, {} gold-injected",
        pairs.len(),
        manifest.embedding_dim,
        images.len(),
        verbs.len(),
        injected
    );
    if let Some(out) = &a.out {
        let created_by = format!("{TOOLKIT_VERSION} ingest");
        match a.format {
            PairsFormat::Text => io::write_pairs(out, &pairs, &lexicon, &created_by)?,
            PairsFormat::Binary => io::write_pairs_binary(out, &pairs, &lexicon, &created_by)?,
        };
        let _ = write!(summary, " -> {}", out.display());
    }
    Ok(summary)
}

fn metrics(a: &MetricsArgs, file: &FileConfig) -> Result<String> {
    let pairs_path = require(a.pairs.clone(), file.pairs.clone(), "pairs")?;
    let lexicon_path = require(a.lexicon.clone(), file.lexicon.clone(), "lexicon")?;
    let synsets_path = a.synsets.clone().or(file.synsets.clone());
    let run_config = json!({
        "model": path_str(&a.model),
        "pairs": path_str(&pairs_path),
        "lexicon": path_str(&lexicon_path),
        "synsets": opt_path(&synsets_path),
    });
    let model = io::read_cluster_model(&a.model)?;
    let lexicon = lexicon_at(&lexicon_path)?;
    let (pairs, _) = io::read_pairs(&pairs_path, &lexicon)?;
    let synsets = synsets_path.as_deref().map(io::read_synsets).transpose()?;
    let report = model_report(&model, &pairs, synsets.as_ref())?;
    write_report(&a.out, "metrics", &run_config, &report)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let ch = report.calinski_harabasz.and_then(|c| c.value());
    let purity = report.purity.map(|p| p.value());
    if let Some(tsv) = &a.tsv {
        let table = format!(
            "algorithm\tsilhouette\tcalinski_harabasz\tpurity\tn_clusters\tn_points\n{}\t{}\t{}\t{}\t{}\t{}\n",
            model.algorithm(),
            fmt(report.silhouette),
            fmt(ch),
            fmt(purity),
            report.n_clusters,
            report.n_points
        );
        write_tsv(tsv, &run_config, &table)?;
    }
    Ok(format!(
        "metrics: silhouette {}, calinski-harabasz {}, purity {} over {} pairs in {} clusters -> {}",
        fmt(report.silhouette),
        fmt(ch),
        fmt(purity),
        report.n_points,
        report.n_clusters,
        a.out.display()
    ))
}

fn evaluate(a: &EvalArgs, file: &FileConfig) -> Result<String> {
    let synsets_path = a.synsets.clone().or(file.synsets.clone());
    let lexicon_path = a.lexicon.clone().or(file.lexicon.clone());
    let ks = a.ks.clone().or(file.ks.clone()).unwrap_or_else(|| vec![1, 5]);
    if !ks.contains(&1) {
        return Err(UsageError("--ks must include 1 (the breakdown is top-1)".into()).into());
    }
    let run_config = json!({
        "model": path_str(&a.model),
        "preds": path_str(&a.preds),
        "synsets": opt_path(&synsets_path),
        "lexicon": opt_path(&lexicon_path),
        "ks": ks,
    });
    let model = io::read_cluster_model(&a.model)?;
    let lexicon = lexicon_path.as_deref().map(lexicon_at).transpose()?;
    let records = io::read_predictions(&a.preds, lexicon.as_ref())?;
    let synsets = match &synsets_path {
        Some(p) => io::read_synsets(p)?,
        None => {
            log::warn!("no synsets given: the synset criterion reduces to exact match");
            SynsetLexicon::default()
        }
    };
    let result = score(&records, &model, &synsets, &ks)?;
    let parts = breakdown(&records, &model)?;
    if !parts.identity_holds() {
        anyhow::bail!("internal error: accuracy decomposition does not add up: {parts:?}");
    }
    write_report(
        &a.out,
        "eval",
        &run_config,
        json!({"accuracy": result, "breakdown": parts}),
    )?;
    if let Some(dir) = &a.tsv_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_tsv(&dir.join("accuracy.tsv"), &run_config, &eval::eval_tsv(&result))?;
        write_tsv(&dir.join("breakdown.tsv"), &run_config, &eval::breakdown_tsv(&parts))?;
    }
    let mut summary = format!("eval: {} records ({} skipped)", result.n_records, result.skipped);
    for (k, c) in &result.by_k {
        let _ = write!(
            summary,
            "; top-{k} gold {} wn-syn {} cluster {}",
            pct(c.gold),
            pct(c.synset),
            pct(c.cluster)
        );
    }
    let _ = write!(summary, " -> {}", a.out.display());
    Ok(summary)
}

fn ambiguity(a: &AmbiguityArgs) -> Result<String> {
    let run_config = json!({ "model": path_str(&a.model) });
    let model = io::read_cluster_model(&a.model)?;
    let stats = ambiguity_stats(&model);
    write_report(&a.out, "ambiguity", &run_config, &stats)?;
    if let Some(tsv) = &a.tsv {
        write_tsv(tsv, &run_config, &eval::ambiguity_tsv(&stats))?;
    }
    Ok(format!(
        "ambiguity: {} clusters, {:.2} verbs/cluster, {:.2} clusters/image, {:.0}% multi-cluster images, \
         {:.2} clusters/verb, {:.0}% multi-cluster verbs -> {}",
        stats.n_clusters,
        stats.verbs_per_cluster,
        stats.clusters_per_image,
        100.0 * stats.multi_image_rate,
        stats.clusters_per_verb,
        100.0 * stats.multi_verb_rate,
        a.out.display()
    ))
}

fn sweep(a: &SweepArgs) -> Result<String> {
    let run_config = json!({
        "model": path_str(&a.model),
        "preds": path_str(&a.preds),
        "raw": path_str(&a.raw),
        "ks": a.ks,
    });
    let model = io::read_cluster_model(&a.model)?;
    let records = io::read_predictions(&a.preds, None)?;
    let raw = io::read_raw_references(&a.raw, None)?;
    let result = robustness_sweep(&model, &a.ks, &records, &raw)?;
    write_report(&a.out, "sweep", &run_config, &result)?;
    if let Some(tsv) = &a.tsv {
        write_tsv(tsv, &run_config, &eval::sweep_tsv(&result))?;
    }
    let curve: Vec<String> = result
        .points
        .iter()
        .map(|p| format!("k={} {}", p.k, pct(p.top1_cluster)))
        .collect();
    Ok(format!(
        "sweep: {}; baseline {} ({} k skipped) -> {}",
        curve.join(", "),
        pct(result.baseline),
        result.skipped_ks.len(),
        a.out.display()
    ))
}

fn probe(a: &ProbeArgs, file: &FileConfig) -> Result<String> {
    let lexicon_path = a.lexicon.clone().or(file.lexicon.clone());
    let ks = a.ks.clone().or(file.ks.clone()).unwrap_or_else(|| vec![1, 5]);
    let run_config = json!({
        "matrix": path_str(&a.matrix),
        "gold": path_str(&a.gold),
        "lexicon": opt_path(&lexicon_path),
        "ks": ks,
    });
    let lexicon = lexicon_path.as_deref().map(lexicon_at).transpose()?;
    let matrix = io::read_similarity_matrix(&a.matrix)?;
    let gold = io::read_gold(&a.gold, lexicon.as_ref())?;
    let result = rank_by_similarity(&matrix, &gold, lexicon.as_ref(), &ks)?;
    write_report(&a.out, "probe", &run_config, &result)?;
    if let Some(tsv) = &a.tsv {
        write_tsv(tsv, &run_config, &eval::probe_tsv(&result))?;
    }
    let parts: Vec<String> = result
        .top_k
        .iter()
        .map(|(k, f)| format!("top-{k} {}", pct(*f)))
        .collect();
    Ok(format!(
        "probe: {} images; {} -> {}",
        result.n_images,
        parts.join(", "),
        a.out.display()
    ))
}

fn image_input(reference: &str, base: &Path) -> Result<ImageInput> {
    if reference.starts_with("http://") || reference.starts_with("https://") || reference.starts_with("data:") {
        return Ok(ImageInput::Url(reference.to_string()));
    }
    let path = base.join(reference);
    let data = std::fs::read(&path).with_context(|| format!("reading image {}", path.display()))?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    };
    Ok(ImageInput::Bytes {
        data,
        mime: mime.into(),
    })
}

fn read_image_list(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, reference) = line.split_once('\t').ok_or_else(|| {
            UsageError(format!(
                "{}:{}: expected `image_id \\t path-or-url`",
                path.display(),
                i + 1
            ))
        })?;
        out.push((id.trim().to_string(), reference.trim().to_string()));
    }
    Ok(out)
}

fn acquire(a: &AcquireArgs, file: &FileConfig) -> Result<String> {
    let lexicon_path = require(a.lexicon.clone(), file.lexicon.clone(), "lexicon")?;
    let cache_dir = require(a.cache_dir.clone(), file.cache_dir.clone(), "cache-dir")?;
    let kind = a.prompt.or(file.prompt).unwrap_or(PromptKind::Closed);
    let mut endpoint = file.endpoint.clone().unwrap_or_default();
    if let Some(url) = &a.endpoint {
        endpoint.url = url.clone();
    }
    if let Some(model) = &a.model {
        endpoint.model = model.clone();
    }
    if let Some(c) = a.concurrency {
        endpoint.concurrency = c;
    }
    if let Some(r) = a.max_retries {
        endpoint.retry.max_retries = r;
    }
    if endpoint.model.is_empty() {
        return Err(UsageError("missing --model (or `endpoint.model` in the config file)".into()).into());
    }
    let run_config = json!({
        "lexicon": path_str(&lexicon_path),
        "images": path_str(&a.images),
        "gold": path_str(&a.gold),
        "prompt": kind,
        "cache_dir": path_str(&cache_dir),
        "endpoint": endpoint,
    });
    if kind == PromptKind::Open {
        log::warn!(
            "open-prompt replies often fall outside the lexicon; the prompt kind is recorded in the output header"
        );
    }

    let lexicon = lexicon_at(&lexicon_path)?;
    let gold = io::read_gold(&a.gold, Some(&lexicon))?;
    let images = read_image_list(&a.images)?;
    let base = a.images.parent().unwrap_or(Path::new(""));
    let jobs = images
        .iter()
        .map(|(id, reference)| {
            Ok(FetchJob {
                image_id: id.clone(),
                image: image_input(reference, base)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let prompt = PromptTemplate::new(kind, &lexicon);
    let transport = HttpTransport::new(Duration::from_secs(endpoint.timeout_secs));
    let client = ChatClient::new(endpoint, transport, ReplyCache::new(&cache_dir));
    let replies = client.fetch_many(&prompt, &jobs);

    let mut nodes = String::from("image_id\tverb\tsource\n");
    let mut raw = String::new();
    let (mut failed, mut empty, mut n_nodes) = (0usize, 0usize, 0usize);
    let mut first_error = None;
    for (job, reply) in jobs.iter().zip(replies) {
        let g = gold.get(&job.image_id).ok_or_else(|| {
            UsageError(format!(
                "image {:?} has no gold verb in {}",
                job.image_id,
                a.gold.display()
            ))
        })?;
        let verbs = match reply {
            Ok(text) => parse_reply(&text, &lexicon),
            Err(e) => {
                failed += 1;
                first_error.get_or_insert(e);
                continue;
            }
        };
        if verbs.is_empty() {
            empty += 1;
        } else {
            let _ = writeln!(raw, "{}\t{}", job.image_id, verbs.join(","));
        }
        for (verb, source) in build_nodes(&verbs, g, &lexicon)? {
            let _ = writeln!(nodes, "{}\t{verb}\t{source}", job.image_id);
            n_nodes += 1;
        }
    }
    if failed == jobs.len() && !jobs.is_empty() {
        return Err(anyhow::Error::new(first_error.expect("a failure was recorded")).context("every request failed"));
    }
    write_tsv(&a.out_nodes, &run_config, &nodes)?;
    if let Some(p) = &a.out_raw {
        write_tsv(p, &run_config, &raw)?;
    }
    Ok(format!(
        "acquire: {} images, {} nodes, {} empty replies, {} failed requests, {} network requests -> {}",
        jobs.len(),
        n_nodes,
        empty,
        failed,
        client.request_count(),
        a.out_nodes.display()
    ))
}
