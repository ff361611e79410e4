use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_io::Query;

use super::ExpansionError;

pub const DEFAULT_INSTRUCTION: &str = "Write a passage that answers the given query:";

/// System message for chat models that otherwise tend to ask follow-up
/// questions instead of writing the passage.
pub const CHAT_SYSTEM_MESSAGE: &str = "You are asked to write a passage that answers the given query. Do not ask the user for further clarification.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub query: String,
    pub passage: String,
}

impl ExamplePair {
    pub fn new(query: impl Into<String>, passage: impl Into<String>) -> Self {
        ExamplePair {
            query: query.into(),
            passage: passage.into(),
        }
    }
}

/// Few-shot prompt: an instruction followed by `k` labeled pairs drawn from
/// `examples` for every call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
    pub examples: Vec<ExamplePair>,
    pub k: usize,
    pub system_message: Option<String>,
}

impl PromptTemplate {
    pub fn new(examples: Vec<ExamplePair>, k: usize) -> Result<Self, ExpansionError> {
        let t = PromptTemplate {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            examples,
            k,
            system_message: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_system_message(mut self, message: impl Into<String>) -> Self {
        self.system_message = Some(message.into());
        self
    }

    pub fn validate(&self) -> Result<(), ExpansionError> {
        if self.instruction.trim().is_empty() {
            return Err(ExpansionError::Template(
                "instruction must be non-empty".into(),
            ));
        }
        if self.examples.len() < self.k {
            return Err(ExpansionError::PoolTooSmall {
                pool: self.examples.len(),
                k: self.k,
            });
        }
        Ok(())
    }
}

/// Derives the per-query sampling seed from the run seed and query id, so
/// each query's example draw is independent of the rest of the run.
pub fn query_seed(global_seed: u64, query_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(query_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Picks `k` distinct pool indices for this query, returned in pool order.
pub fn sample_examples(pool_len: usize, k: usize, global_seed: u64, query_id: &str) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(query_seed(global_seed, query_id));
    let mut picked = rand::seq::index::sample(&mut rng, pool_len, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Renders the prompt for `query`:
///
/// ```text
/// <instruction>
///
/// Query: <q1>
/// Passage: <p1>
///
/// ...
///
/// Query: <query>
/// Passage:
/// ```
pub fn render_prompt(
    query: &Query,
    template: &PromptTemplate,
    seed: u64,
) -> Result<String, ExpansionError> {
    template.validate()?;
    let picked = sample_examples(template.examples.len(), template.k, seed, &query.query_id);
    let mut blocks = Vec::with_capacity(template.k + 2);
    blocks.push(template.instruction.clone());
    for i in picked {
        let ex = &template.examples[i];
        blocks.push(format!("Query: {}\nPassage: {}", ex.query, ex.passage));
    }
    blocks.push(format!("Query: {}\nPassage:", query.text));
    Ok(blocks.join("\n\n"))
}

/// Hex SHA-256 of the exact rendered prompt.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<ExamplePair> {
        (0..n)
            .map(|i| ExamplePair::new(format!("q{i}"), format!("p{i}")))
            .collect()
    }

    #[test]
    fn zero_shot_prompt() {
        let t = PromptTemplate::new(pool(3), 0).unwrap();
        let p = render_prompt(&Query::new("1", "what is rust"), &t, 0).unwrap();
        assert_eq!(
            p,
            "Write a passage that answers the given query:\n\nQuery: what is rust\nPassage:"
        );
    }

    #[test]
    fn pool_smaller_than_k_rejected() {
        assert!(matches!(
            PromptTemplate::new(pool(3), 4),
            Err(ExpansionError::PoolTooSmall { pool: 3, k: 4 })
        ));
        let mut t = PromptTemplate::new(pool(5), 4).unwrap();
        t.examples.truncate(2);
        assert!(render_prompt(&Query::new("1", "x"), &t, 0).is_err());
    }

    #[test]
    fn deterministic_per_query_and_seed() {
        let t = PromptTemplate::new(pool(50), 4).unwrap();
        let q = Query::new("q17", "some query");
        let a = render_prompt(&q, &t, 42).unwrap();
        assert_eq!(a, render_prompt(&q, &t, 42).unwrap());
        assert_eq!(a.matches("Query: ").count(), 5);
    }

    #[test]
    fn draws_vary_with_seed_and_query() {
        let distinct_seeds: std::collections::HashSet<Vec<usize>> =
            (0..20).map(|s| sample_examples(50, 4, s, "q1")).collect();
        assert!(distinct_seeds.len() > 15);
        let distinct_queries: std::collections::HashSet<Vec<usize>> = (0..20)
            .map(|i| sample_examples(50, 4, 7, &format!("q{i}")))
            .collect();
        assert!(distinct_queries.len() > 15);
    }

    #[test]
    fn sampled_indices_distinct_and_in_range() {
        for seed in 0..50 {
            let s = sample_examples(10, 4, seed, "q");
            assert_eq!(s.len(), 4);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 10));
        }
    }

    #[test]
    fn hash_is_stable_hex_sha256() {
        assert_eq!(
            prompt_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(prompt_hash("abc").len(), 64);
    }
}
