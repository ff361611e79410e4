use std::path::Path;

use q2d_core::corpus_io::Query;
use q2d_core::query_expansion::{load_examples, render_prompt, PromptTemplate};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/prompt")
        .join(name)
}

#[test]
fn four_shot_prompt_matches_reference_block() {
    let pool = load_examples(&fixture("msmarco_examples.tsv")).unwrap();
    assert_eq!(pool.len(), 4);
    let expected = std::fs::read_to_string(fixture("msmarco_4shot_prompt.txt")).unwrap();
    let template = PromptTemplate::new(pool, 4).unwrap();
    let query = Query::new("0", "when was pokemon green released");
    // every seed selects the whole pool, so the rendering is seed-independent
    for seed in [0, 1, 42, u64::MAX] {
        assert_eq!(render_prompt(&query, &template, seed).unwrap(), expected);
    }
}
