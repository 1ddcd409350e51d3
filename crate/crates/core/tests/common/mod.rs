#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satd_core::corpus::{CommentRecord, Corpus, Label};
use satd_core::features::{FeatureVector, LabeledMatrix};

const MARKERS: &[&str] = &["todo", "fixme", "hack", "workaround", "temporary", "kludge", "ugly", "xxx"];

/// Cleaned-text corpus with a skewed word distribution. SATD comments carry
/// a debt marker most of the time; a few non-SATD comments do too.
pub fn synthetic_corpus(projects: usize, per_project: usize, satd_rate: f64, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = 4000f64;
    let mut records = Vec::with_capacity(projects * per_project);
    for p in 0..projects {
        for _ in 0..per_project {
            let satd = rng.gen_bool(satd_rate);
            let len = rng.gen_range(3..14);
            let mut words: Vec<String> = (0..len)
                .map(|_| {
                    let k = (rng.gen::<f64>() * vocab.ln()).exp() as usize;
                    format!("w{k}")
                })
                .collect();
            let marker_p = if satd { 0.8 } else { 0.03 };
            if rng.gen_bool(marker_p) {
                let pos = rng.gen_range(0..=words.len());
                words.insert(pos, MARKERS[rng.gen_range(0..MARKERS.len())].to_string());
            }
            if satd && rng.gen_bool(0.3) {
                words.push(format!("d{}", rng.gen_range(0..40)));
            }
            records.push(CommentRecord {
                project_id: format!("proj{p:02}"),
                text: words.join(" "),
                label: if satd { Label::Satd } else { Label::NonSatd },
            });
        }
    }
    Corpus::new(records)
}

/// Dense random matrix with about `density` nonzeros per cell.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, dim: usize, density: f64, n_satd: usize) -> LabeledMatrix {
    let vectors = (0..rows)
        .map(|_| {
            let dense: Vec<f64> = (0..dim)
                .map(|_| if rng.gen_bool(density) { rng.gen_range(0.05..1.0) } else { 0.0 })
                .collect();
            FeatureVector::from_dense(&dense)
        })
        .collect();
    let labels = (0..rows)
        .map(|i| if i < n_satd { Label::Satd } else { Label::NonSatd })
        .collect();
    LabeledMatrix::new(dim, vectors, labels)
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}
