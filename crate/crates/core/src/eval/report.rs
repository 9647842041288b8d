//! Flat TSV renderings. Accuracies are printed as percentages with one
//! decimal next to the exact counts they come from.

use std::fmt::Write;

use super::{AmbiguityStats, BreakdownResult, EvalResult, Fraction, ProbeResult, SweepResult};

fn pct(f: Fraction) -> String {
    format!("{:.1}", 100.0 * f.value())
}

/// One row per cutoff: gold, synset and cluster accuracies.
pub fn eval_tsv(r: &EvalResult) -> String {
    let mut out = String::from("k\tgold\twn_syn\tcluster\tgold_count\twn_syn_count\tcluster_count\tn_records\n");
    for (k, c) in &r.by_k {
        let _ = writeln!(
            out,
            "{k}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            pct(c.gold),
            pct(c.synset),
            pct(c.cluster),
            c.gold.num,
            c.synset.num,
            c.cluster.num,
            r.n_records
        );
    }
    out
}

pub fn breakdown_tsv(b: &BreakdownResult) -> String {
    format!(
        "gold\tsyn\tmulti_p\tcluster\tn_records\n{}\t{}\t{}\t{}\t{}\n",
        pct(b.gold_acc),
        pct(b.syn_gain),
        pct(b.multi_p_gain),
        pct(b.cluster_acc),
        b.n_records
    )
}

pub fn ambiguity_tsv(s: &AmbiguityStats) -> String {
    format!(
        "n_clusters\tverbs_per_cluster\tclusters_per_image\tmulti_image_rate\tclusters_per_verb\tmulti_verb_rate\n\
         {}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\n",
        s.n_clusters,
        s.verbs_per_cluster,
        s.clusters_per_image,
        s.multi_image_rate,
        s.clusters_per_verb,
        s.multi_verb_rate
    )
}

/// Curve data: one row per `k`, then the baseline as a final row.
pub fn sweep_tsv(s: &SweepResult) -> String {
    let mut out = String::from("k\ttop1_cluster\tcount\tn_records\n");
    for p in &s.points {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            p.k,
            pct(p.top1_cluster),
            p.top1_cluster.num,
            s.n_records
        );
    }
    let _ = writeln!(
        out,
        "baseline\t{}\t{}\t{}",
        pct(s.baseline),
        s.baseline.num,
        s.n_records
    );
    out
}

pub fn probe_tsv(p: &ProbeResult) -> String {
    let mut out = String::from("k\taccuracy\tcount\tn_images\n");
    for (k, f) in &p.top_k {
        let _ = writeln!(out, "{k}\t{}\t{}\t{}", pct(*f), f.num, p.n_images);
    }
    out
}
