//! Writes the small synthetic corpus under `fixtures/mini/`.
//!
//! ```text
//! cargo run -p verbsense --example make_fixture -- fixtures/mini
//! ```
//!
//! Eight activities of three verbs each. Every image shows one main
//! activity, and two in five also show a second one. Pair embeddings point
//! at their activity's direction with a small per-verb offset and per-image
//! jitter, so clustering recovers activities while the image-level
//! ambiguity stays visible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use verbsense::io::{write_lexicon, write_pairs, write_synsets};
use verbsense::{Embedding, PairNode, PairSource, SynsetLexicon, VerbLexicon};

const DIM: usize = 8;
const IMAGES: usize = 60;

const ACTIVITIES: [[&str; 3]; 8] = [
    ["teaching", "lecturing", "instructing"],
    ["running", "jogging", "sprinting"],
    ["eating", "dining", "feeding"],
    ["drawing", "sketching", "painting"],
    ["standing", "waiting", "queuing"],
    ["marching", "parading", "performing"],
    ["swimming", "diving", "splashing"],
    ["cooking", "frying", "stirring"],
];

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn noise(rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    (0..DIM).map(|_| scale * gauss(rng)).collect()
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fixtures/mini".into()).into();
    std::fs::create_dir_all(&out).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);

    let lexicon = VerbLexicon::new(ACTIVITIES.iter().flatten()).unwrap();
    let activity_of: BTreeMap<&str, usize> = ACTIVITIES
        .iter()
        .enumerate()
        .flat_map(|(a, vs)| vs.iter().map(move |v| (*v, a)))
        .collect();

    // Activity directions: the first DIM coordinate axes bent slightly
    // toward a shared component, so activities are distinct but not
    // orthogonal.
    let centers: Vec<Vec<f64>> = (0..ACTIVITIES.len())
        .map(|a| (0..DIM).map(|d| if d == a { 1.0 } else { 0.15 }).collect())
        .collect();
    let verb_offset: BTreeMap<&str, Vec<f64>> = ACTIVITIES
        .iter()
        .flatten()
        .map(|v| (*v, noise(&mut rng, 0.08)))
        .collect();

    let mut pairs = Vec::new();
    let mut preds = String::new();
    let mut raw = String::new();
    let mut gold_tsv = String::new();
    let mut matrix = format!("image_id\t{}\n", lexicon.verbs().join("\t"));
    for i in 0..IMAGES {
        let image = format!("img{i:03}");
        let main = i % ACTIVITIES.len();
        let second =
            (rng.random_bool(0.4)).then(|| (main + 1 + rng.random_range(0..ACTIVITIES.len() - 1)) % ACTIVITIES.len());
        let gold = ACTIVITIES[main][rng.random_range(0..3)];

        // Reply: one or two verbs of the main activity, sometimes without
        // the gold verb, plus one of the second activity.
        let n_main = rng.random_range(1..=2);
        let mut reply: Vec<&str> = ACTIVITIES[main].choose_multiple(&mut rng, n_main).copied().collect();
        if let Some(s) = second {
            reply.push(*ACTIVITIES[s].choose(&mut rng).unwrap());
        }
        let _ = writeln!(raw, "{image}\t{}", reply.join(","));
        let mut verbs: Vec<(&str, PairSource)> = reply.iter().map(|v| (*v, PairSource::LlmReply)).collect();
        if !reply.contains(&gold) {
            verbs.push((gold, PairSource::GoldInjected));
        }
        let jitter = noise(&mut rng, 0.03);
        for (verb, source) in &verbs {
            let c = &centers[activity_of[verb]];
            let off = &verb_offset[verb];
            let values: Vec<f64> = (0..DIM)
                .map(|d| c[d] + off[d] + jitter[d] + 0.02 * gauss(&mut rng))
                .collect();
            pairs.push(PairNode::new(
                image.clone(),
                verb,
                Embedding::from_f64(&values).unwrap(),
                *source,
            ));
        }

        // Predictions: a mix of exact hits, synonyms, the second activity
        // and unrelated verbs, followed by filler to five.
        let others: Vec<&str> = lexicon
            .verbs()
            .iter()
            .map(String::as_str)
            .filter(|v| activity_of[v] != main && Some(activity_of[v]) != second)
            .collect();
        let top1 = match rng.random_range(0..10) {
            0..=3 => gold,
            4..=5 => *ACTIVITIES[main]
                .iter()
                .filter(|v| **v != gold)
                .collect::<Vec<_>>()
                .choose(&mut rng)
                .unwrap(),
            6..=7 => match second {
                Some(s) => *ACTIVITIES[s].choose(&mut rng).unwrap(),
                None => *others.choose(&mut rng).unwrap(),
            },
            _ => *others.choose(&mut rng).unwrap(),
        };
        let mut ranked = vec![top1];
        let pool: Vec<&str> = ACTIVITIES[main].iter().copied().chain(others.iter().copied()).collect();
        while ranked.len() < 5 {
            let v = *pool.choose(&mut rng).unwrap();
            if !ranked.contains(&v) {
                ranked.push(v);
            }
        }
        let _ = writeln!(preds, "{image}\t{gold}\t{}", ranked.join(","));
        let _ = writeln!(gold_tsv, "{image}\t{gold}");

        // Similarity scores: the main activity scores high, the gold verb
        // a little higher on most images.
        let _ = write!(matrix, "{image}");
        for v in lexicon.verbs() {
            let mut s = 0.2 + 0.05 * rng.random::<f64>();
            if activity_of[v.as_str()] == main {
                s += 0.1;
            }
            if v == gold && rng.random_bool(0.6) {
                s += 0.08;
            }
            let _ = write!(matrix, "\t{s:.4}");
        }
        matrix.push('\n');
    }

    // Predictions for images that never reached the pair corpus; evaluation
    // skips and counts them.
    let _ = writeln!(preds, "orphan01\tteaching\tteaching,lecturing");
    let _ = writeln!(preds, "orphan02\tcooking\tstirring");

    // Synsets cover two verbs of most activities, plus a few cross-activity
    // senses.
    let mut synsets: Vec<(String, Vec<&str>)> = ACTIVITIES
        .iter()
        .take(6)
        .map(|vs| (format!("{}.v.01", vs[0].trim_end_matches("ing")), vec![vs[0], vs[1]]))
        .collect();
    synsets.push(("perform.v.03".into(), vec!["performing", "painting"]));
    synsets.push(("wait.v.02".into(), vec!["waiting", "queuing", "standing"]));

    write_lexicon(&out.join("lexicon.txt"), &lexicon).unwrap();
    write_synsets(&out.join("synsets.tsv"), &SynsetLexicon::new(synsets).unwrap()).unwrap();
    write_pairs(&out.join("pairs.tsv"), &pairs, &lexicon, "make_fixture").unwrap();
    std::fs::write(out.join("preds.tsv"), preds).unwrap();
    std::fs::write(out.join("raw.tsv"), raw).unwrap();
    std::fs::write(out.join("gold.tsv"), gold_tsv).unwrap();
    std::fs::write(out.join("similarity.tsv"), matrix).unwrap();
    println!("wrote {} pairs for {IMAGES} images to {}", pairs.len(), out.display());
}
