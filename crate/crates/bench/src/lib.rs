//! Synthetic workloads for the criterion benches.

use q2d_core::corpus_io::{Document, Query};
use q2d_core::query_expansion::PseudoDocument;
use q2d_core::training_objectives::ObjectiveBatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Workload {
    pub docs: Vec<Document>,
    pub queries: Vec<Query>,
    /// One pseudo-document per query, drawn from the same vocabulary.
    pub pseudo: Vec<PseudoDocument>,
}

fn word(rng: &mut ChaCha8Rng, vocab: usize) -> String {
    // squared draw: a few frequent terms and a long tail
    let u: f64 = rng.gen();
    format!("w{}", (u * u * vocab as f64) as usize)
}

fn text(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> String {
    (0..len)
        .map(|_| word(rng, vocab))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `docs` passages of about 55 terms and `queries` queries of 3 to 6
/// terms, each with a 60-term pseudo-document.
pub fn workload(docs: usize, queries: usize, seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = 5000;
    let docs = (0..docs)
        .map(|i| {
            let len = rng.gen_range(40..70);
            Document {
                doc_id: format!("D{i}"),
                text: text(&mut rng, vocab, len),
            }
        })
        .collect();
    let mut qs = Vec::with_capacity(queries);
    let mut pseudo = Vec::with_capacity(queries);
    for i in 0..queries {
        let id = format!("Q{i}");
        let len = rng.gen_range(3..=6);
        qs.push(Query::new(id.clone(), text(&mut rng, vocab, len)));
        pseudo.push(PseudoDocument::offline(id, text(&mut rng, vocab, 60)).expect("non-empty"));
    }
    Workload {
        docs,
        queries: qs,
        pseudo,
    }
}

/// Contrastive batch with `negatives` hard negatives in `dim` dimensions
/// and teacher scores for distillation.
pub fn objective_batch(dim: usize, negatives: usize, seed: u64) -> ObjectiveBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = || {
        (0..dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let query = v();
    let positive = v();
    let negs = (0..negatives).map(|_| v()).collect();
    let teacher = (0..=negatives)
        .map(|j| if j == 0 { 4.0 } else { 0.0 })
        .collect();
    ObjectiveBatch::new(query, positive, negs, Some(teacher)).expect("consistent shapes")
}
