//! Regenerates the bundled fixture under `fixtures/`:
//! `cargo run -p tweettopic-cli --example gen_fixture`

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tweettopic::dataset::{write_annotations_csv, AnnotationRow};
use tweettopic::synth::{generate, SynthConfig};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = generate(&SynthConfig { n: 180, seed: 7, distractor_rate: 0.111, ..SynthConfig::default() });

    let lines: Vec<String> = corpus.tweets.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
    std::fs::write(dir.join("raw.jsonl"), lines.join("\n") + "\n").unwrap();
    std::fs::write(dir.join("keywords.txt"), corpus.keyword_file()).unwrap();

    // three raters over the first 40 labeled tweets, each cell flipped with p = 0.05
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    for t in corpus.tweets.iter().filter(|t| t.topics.is_some()).take(40) {
        for rater in ["r1", "r2", "r3"] {
            let mut labels = t.labels().unwrap();
            for b in labels.0.iter_mut() {
                if rng.random_bool(0.05) {
                    *b = !*b;
                }
            }
            rows.push(AnnotationRow { tweet_id: t.id.clone(), rater_id: rater.into(), labels });
        }
    }
    write_annotations_csv(dir.join("annotations.csv"), &rows).unwrap();
    println!("wrote {} tweets and {} annotation rows to {}", lines.len(), rows.len(), dir.display());
}
