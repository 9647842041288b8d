//! Acceptance gate. Each criterion prints one PASS/FAIL line; any failure
//! makes the target exit non-zero.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use verbsense::cluster::{ratio_cluster_count, run_two_step, ClusteringConfig, Dendrogram, KMeans};
use verbsense::eval::{breakdown, robustness_sweep, score};
use verbsense::io::{read_lexicon, read_pairs, read_predictions, read_raw_references, read_synsets};
use verbsense::metrics::{calinski_harabasz, purity, silhouette, MetricError};
use verbsense::{ClusterModel, Embedding, PairKey, PairNode, PairSource, SynsetLexicon};

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(&str, Check); 8] = [
        ("metric oracle equivalence", metric_oracles),
        ("purity fixtures", purity_fixtures),
        ("ratio cluster count", ratio_counts),
        ("planted-structure recovery", planted_recovery),
        ("cluster determinism", cluster_determinism),
        ("evaluation identities", evaluation_identities),
        ("sweep dominance", sweep_dominance),
        ("kmeans inertia and hac merge monotonicity", monotonicity),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

fn random_embedding(rng: &mut impl Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-3 {
            return Embedding::from_f64(&v).unwrap();
        }
    }
}

/// Labels over `n` points using every one of `0..k`.
fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    labels.shuffle(rng);
    labels
}

fn as_f64(e: &Embedding) -> Vec<f64> {
    e.values().iter().map(|&x| x as f64).collect()
}

fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Per-point definition, written out loop by loop.
fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let own_size = labels.iter().filter(|&&l| l == labels[i]).count();
        if own_size == 1 {
            continue;
        }
        let mut a = 0.0;
        for j in 0..n {
            if j != i && labels[j] == labels[i] {
                a += cosine_oracle(&points[i], &points[j]);
            }
        }
        a /= (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for c in (0..k).filter(|&c| c != labels[i]) {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            let mean = members
                .iter()
                .map(|&j| cosine_oracle(&points[i], &points[j]))
                .sum::<f64>()
                / members.len() as f64;
            b = b.min(mean);
        }
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Trace form via pairwise squared distances: tr(T) and tr(W) both equal
/// half the mean pairwise squared distance times the group size.
fn calinski_harabasz_oracle(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let unit: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            p.iter().map(|x| x / norm).collect()
        })
        .collect();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let scatter = |idx: &[usize]| {
        let mut s = 0.0;
        for &i in idx {
            for &j in idx {
                s += sq(&unit[i], &unit[j]);
            }
        }
        s / (2.0 * idx.len() as f64)
    };
    let n = unit.len();
    let all: Vec<usize> = (0..n).collect();
    let total = scatter(&all);
    let within: f64 = (0..k)
        .map(|c| scatter(&(0..n).filter(|&i| labels[i] == c).collect::<Vec<_>>()))
        .sum();
    (total - within) / within * (n - k) as f64 / (k - 1) as f64
}

fn metric_oracles() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5117);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(k + 1..=30);
        let dim = rng.random_range(2..=8);
        let points: Vec<Embedding> = (0..n).map(|_| random_embedding(&mut rng, dim)).collect();
        let labels = random_labels(&mut rng, n, k);
        let raw: Vec<Vec<f64>> = points.iter().map(as_f64).collect();

        let s = silhouette(&points, &labels).map_err(|e| format!("case {case}: {e}"))?;
        let s_ref = silhouette_oracle(&raw, &labels, k);
        let ch = calinski_harabasz(&points, &labels)
            .map_err(|e| format!("case {case}: {e}"))?
            .value()
            .ok_or_else(|| format!("case {case}: degenerate Calinski-Harabasz"))?;
        let ch_ref = calinski_harabasz_oracle(&raw, &labels, k);
        let ds = (s - s_ref).abs();
        let dch = (ch - ch_ref).abs();
        ensure(ds <= 1e-9, || format!("case {case}: silhouette {s} vs oracle {s_ref}"))?;
        ensure(dch <= 1e-9, || {
            format!("case {case}: calinski-harabasz {ch} vs oracle {ch_ref}")
        })?;
        worst = worst.max(ds).max(dch);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("200 instances, max abs deviation {worst:.2e}"))
}

fn verb_set(verbs: &[&str]) -> BTreeSet<String> {
    verbs.iter().map(|v| v.to_string()).collect()
}

fn purity_fixtures() -> Result<String, String> {
    let synsets = SynsetLexicon::new([("run.v.01", vec!["run", "jog"]), ("eat.v.01", vec!["eat", "dine"])]).unwrap();
    let mixed = [verb_set(&["run", "jog", "eat"])];
    let p = purity(mixed.iter(), &synsets).map_err(|e| e.to_string())?;
    ensure((p.matched, p.total) == (2, 3), || {
        format!("mixed cluster gave {}/{}", p.matched, p.total)
    })?;

    let singletons = [verb_set(&["run"]), verb_set(&["jog"]), verb_set(&["eat"])];
    ensure(
        matches!(purity(singletons.iter(), &synsets), Err(MetricError::Undefined(_))),
        || "all-singleton clustering was not reported as undefined".into(),
    )?;

    let perfect = [verb_set(&["run", "jog"]), verb_set(&["eat", "dine"])];
    let p = purity(perfect.iter(), &synsets).map_err(|e| e.to_string())?;
    ensure(p.value() == 1.0, || format!("perfect clustering gave {}", p.value()))?;
    Ok("2/3, undefined, 1.0".into())
}

fn ratio_counts() -> Result<String, String> {
    let a = ratio_cluster_count(504, 1.3);
    let b = ratio_cluster_count(504, 1.1);
    ensure((a, b) == (655, 554), || format!("got {a} and {b}"))?;
    Ok("504 x 1.3 = 655, 504 x 1.1 = 554".into())
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// A unit vector orthogonal to `c`, drawn at random.
fn orthogonal(rng: &mut impl Rng, c: &[f64]) -> Vec<f64> {
    loop {
        let r: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let proj: f64 = r.iter().zip(c).map(|(x, y)| x * y).sum();
        let w: Vec<f64> = r.iter().zip(c).map(|(x, y)| x - proj * y).collect();
        if w.iter().map(|x| x * x).sum::<f64>() > 1e-4 {
            return unit(w);
        }
    }
}

/// The unit vector at `angle` radians from unit `c` along a random direction.
fn rotate(rng: &mut impl Rng, c: &[f64], angle: f64) -> Vec<f64> {
    let w = orthogonal(rng, c);
    c.iter()
        .zip(&w)
        .map(|(x, y)| angle.cos() * x + angle.sin() * y)
        .collect()
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
        .clamp(-1.0, 1.0)
        .acos()
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Hubert-Arabie adjusted Rand index from the contingency table.
fn adjusted_rand(truth: &[usize], pred: &[usize]) -> f64 {
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        *table.entry((t, p)).or_default() += 1;
        *rows.entry(t).or_default() += 1;
        *cols.entry(p).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = a * b / choose2(truth.len() as u64);
    let max = (a + b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

fn check_partition(model: &ClusterModel, pairs: &[PairNode], lexicon_size: usize) -> Result<(), String> {
    let all: BTreeSet<PairKey> = pairs.iter().map(PairNode::key).collect();
    let mut seen = BTreeSet::new();
    let mut next_id = 0;
    for (verb, clusters) in &model.step1 {
        for c in clusters {
            ensure(c.id == next_id, || format!("Step-1 id {} out of sequence", c.id))?;
            next_id += 1;
            ensure(!c.is_empty(), || format!("Step-1 cluster {} is empty", c.id))?;
            for m in c.members() {
                ensure(&m.verb == verb, || format!("{m:?} filed under {verb}"))?;
                ensure(seen.insert(m.clone()), || format!("{m:?} in two Step-1 clusters"))?;
            }
        }
    }
    ensure(seen == all, || "Step-1 clusters do not cover the input exactly".into())?;
    ensure(model.step1_to_final.len() == next_id, || {
        "Step-1 to final map has the wrong length".into()
    })?;
    let f = model.final_clusters.len();
    ensure(f == ratio_cluster_count(lexicon_size, model.chosen_ratio), || {
        format!("{f} final clusters for ratio {}", model.chosen_ratio)
    })?;
    let mut expected: Vec<BTreeSet<PairKey>> = vec![BTreeSet::new(); f];
    for clusters in model.step1.values() {
        for c in clusters {
            let target = model.step1_to_final[c.id];
            ensure(target < f, || format!("Step-1 cluster {} maps to {target}", c.id))?;
            expected[target].extend(c.members().iter().cloned());
        }
    }
    for (i, (fc, want)) in model.final_clusters.iter().zip(&expected).enumerate() {
        let got: BTreeSet<PairKey> = fc.members().iter().cloned().collect();
        ensure(!got.is_empty(), || format!("final cluster {i} is empty"))?;
        ensure(&got == want, || {
            format!("final cluster {i} is not the union of its Step-1 parts")
        })?;
    }
    model.validate().map_err(|e| e.to_string())
}

fn planted_recovery() -> Result<String, String> {
    const VERBS: usize = 20;
    const PER_BLOB: usize = 6;
    const DIM: usize = 16;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xb10b);
    let mut pairs = Vec::new();
    let mut truth: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for v in 0..VERBS {
        let verb = format!("verb{v:02}");
        let a = unit((0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect());
        let sep = rng.random_range(60.0f64..=120.0).to_radians();
        let b = rotate(&mut rng, &a, sep);
        ensure(angle_between(&a, &b) >= 60f64.to_radians() - 1e-9, || {
            "separation below 60 degrees".into()
        })?;
        for (blob, centre) in [a, b].iter().enumerate() {
            for i in 0..PER_BLOB {
                let spread = rng.random_range(0.0f64..=5.0).to_radians();
                let p = rotate(&mut rng, centre, spread);
                let image = format!("img_{v:02}_{blob}_{i}");
                truth.entry(verb.clone()).or_default().insert(image.clone(), blob);
                pairs.push(PairNode::new(
                    image,
                    &verb,
                    Embedding::from_f64(&p).unwrap(),
                    PairSource::LlmReply,
                ));
            }
        }
    }
    let model = run_two_step(&pairs, VERBS, &ClusteringConfig::default()).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    for (verb, planted) in &truth {
        let clusters = model
            .step1
            .get(verb)
            .ok_or_else(|| format!("{verb} missing from Step 1"))?;
        let mut found = BTreeMap::new();
        for (label, c) in clusters.iter().enumerate() {
            for m in c.members() {
                found.insert(m.image.clone(), label);
            }
        }
        let t: Vec<usize> = planted.values().copied().collect();
        let p: Vec<usize> = planted.keys().map(|img| found[img]).collect();
        let ari = adjusted_rand(&t, &p);
        ensure(ari >= 0.9, || {
            format!("{verb}: adjusted Rand {ari:.3} with {} clusters", clusters.len())
        })?;
        worst = worst.min(ari);
    }
    check_partition(&model, &pairs, VERBS)?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{VERBS} verbs, min adjusted Rand {worst:.3}, {} final clusters",
        model.final_clusters.len()
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_verbsense"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn cluster_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = fixture_dir();
    let pairs = fx.join("pairs.tsv");
    let lexicon = fx.join("lexicon.txt");
    for algo in ["kmeans", "hac"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{algo}-{run}.json"));
            run_cli(&[
                "cluster",
                "--pairs",
                pairs.to_str().unwrap(),
                "--lexicon",
                lexicon.to_str().unwrap(),
                "--algo",
                algo,
                "--seed",
                "17",
                "--out",
                out.to_str().unwrap(),
            ])?;
            outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1], || format!("{algo}: model files differ"))?;
    }
    Ok("kmeans and hac runs byte-identical".into())
}

struct FixtureRun {
    model: ClusterModel,
    records: Vec<verbsense::PredictionRecord>,
    synsets: SynsetLexicon,
    raw: BTreeMap<String, BTreeSet<String>>,
}

fn fixture_run() -> Result<FixtureRun, String> {
    let fx = fixture_dir();
    let lexicon = read_lexicon(&fx.join("lexicon.txt")).map_err(|e| e.to_string())?;
    let (pairs, _) = read_pairs(&fx.join("pairs.tsv"), &lexicon).map_err(|e| e.to_string())?;
    let model = run_two_step(&pairs, lexicon.len(), &ClusteringConfig::default()).map_err(|e| e.to_string())?;
    Ok(FixtureRun {
        model,
        records: read_predictions(&fx.join("preds.tsv"), Some(&lexicon)).map_err(|e| e.to_string())?,
        synsets: read_synsets(&fx.join("synsets.tsv")).map_err(|e| e.to_string())?,
        raw: read_raw_references(&fx.join("raw.tsv"), Some(&lexicon)).map_err(|e| e.to_string())?,
    })
}

fn evaluation_identities() -> Result<String, String> {
    let fx = fixture_run()?;
    let acc = score(&fx.records, &fx.model, &fx.synsets, &[1, 5]).map_err(|e| e.to_string())?;
    ensure(acc.n_records >= 50, || format!("only {} scored records", acc.n_records))?;
    let (t1, t5) = (acc.at(1).unwrap(), acc.at(5).unwrap());
    let den = acc.n_records as u64;
    for f in [t1.gold, t1.synset, t1.cluster, t5.gold, t5.synset, t5.cluster] {
        ensure(f.den == den, || format!("denominator {} != {den}", f.den))?;
    }
    ensure(t1.cluster.num >= t1.gold.num, || "top-1 cluster below gold".into())?;
    ensure(t1.synset.num >= t1.gold.num, || "top-1 synset below gold".into())?;
    ensure(
        t5.gold.num >= t1.gold.num && t5.synset.num >= t1.synset.num && t5.cluster.num >= t1.cluster.num,
        || "top-5 below top-1".into(),
    )?;

    let b = breakdown(&fx.records, &fx.model).map_err(|e| e.to_string())?;
    ensure(
        [b.gold_acc, b.cluster_acc, b.syn_gain, b.multi_p_gain]
            .iter()
            .all(|f| f.den == den),
        || "breakdown denominators differ".into(),
    )?;
    ensure(
        b.gold_acc.num == t1.gold.num && b.cluster_acc.num == t1.cluster.num,
        || "breakdown disagrees with top-1 scores".into(),
    )?;
    ensure(
        b.cluster_acc.num - b.gold_acc.num == b.syn_gain.num + b.multi_p_gain.num,
        || {
            format!(
                "{} - {} != {} + {}",
                b.cluster_acc.num, b.gold_acc.num, b.syn_gain.num, b.multi_p_gain.num
            )
        },
    )?;

    // Published rows in tenths of a percent: cluster - gold = syn + multi-p.
    for (cluster, gold, syn, multi) in [(432, 305, 39, 88), (615, 462, 49, 104), (721, 560, 54, 107)] {
        ensure(cluster - gold == syn + multi, || {
            format!("{cluster} - {gold} != {syn} + {multi}")
        })?;
    }
    Ok(format!(
        "{den} records ({} skipped); gold {}, cluster {} = gold + syn {} + multi-p {}; published rows balance",
        acc.skipped, b.gold_acc, b.cluster_acc, b.syn_gain, b.multi_p_gain
    ))
}

fn sweep_dominance() -> Result<String, String> {
    let fx = fixture_run()?;
    let m = fx.model.step1_count();
    let ks: Vec<usize> = (1..m).collect();
    let sweep = robustness_sweep(&fx.model, &ks, &fx.records, &fx.raw).map_err(|e| e.to_string())?;
    ensure(sweep.skipped_ks.is_empty(), || {
        format!("skipped {:?}", sweep.skipped_ks)
    })?;
    ensure(sweep.points.len() == ks.len(), || "missing sweep points".into())?;
    let mut lowest = sweep.points[0].top1_cluster;
    for p in &sweep.points {
        ensure(p.top1_cluster.den == sweep.baseline.den, || {
            "denominators differ".into()
        })?;
        ensure(p.top1_cluster.num >= sweep.baseline.num, || {
            format!("k = {}: {} below baseline {}", p.k, p.top1_cluster, sweep.baseline)
        })?;
        if p.top1_cluster.num < lowest.num {
            lowest = p.top1_cluster;
        }
    }
    Ok(format!(
        "k = 1..{}: lowest {lowest} vs baseline {}",
        m - 1,
        sweep.baseline
    ))
}

fn monotonicity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e5);
    let mut steps = 0;
    let mut merges = 0;
    for case in 0..100 {
        let n = rng.random_range(8..=40);
        let dim = rng.random_range(2..=8);
        let k = rng.random_range(2..=5);
        let points: Vec<Embedding> = (0..n).map(|_| random_embedding(&mut rng, dim)).collect();

        let fit = KMeans::new(k)
            .seed(case)
            .fit(&points)
            .map_err(|e| format!("case {case}: {e}"))?;
        for w in fit.inertia_history.windows(2) {
            ensure(w[1] <= w[0], || {
                format!("case {case}: inertia rose {} -> {}", w[0], w[1])
            })?;
        }
        steps += fit.inertia_history.len();

        let tree = Dendrogram::build(&points).map_err(|e| format!("case {case}: {e}"))?;
        ensure(tree.merges().len() == n - 1, || {
            format!("case {case}: {} merges", tree.merges().len())
        })?;
        for w in tree.merges().windows(2) {
            ensure(w[1].distance >= w[0].distance, || {
                format!(
                    "case {case}: merge distance fell {} -> {}",
                    w[0].distance, w[1].distance
                )
            })?;
        }
        merges += tree.merges().len();
    }
    Ok(format!("100 instances, {steps} update steps, {merges} merges"))
}
