use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use q2d_bench::{objective_batch, workload};
use q2d_core::dense_retrieval::{EmbeddingProvider, HashProjectionProvider, Metric, VectorIndex};
use q2d_core::query_expansion::{expand_sparse, DEFAULT_QUERY_REPEATS};
use q2d_core::sparse_retrieval::{build_index, search, Bm25Params};
use q2d_core::text_analysis::AnalyzerConfig;
use q2d_core::training_objectives::{contrastive_loss, distill_loss, DistillParams};

fn sparse_search(c: &mut Criterion) {
    let w = workload(20_000, 50, 1);
    let index = build_index(&w.docs, &AnalyzerConfig::default()).unwrap();
    let params = Bm25Params::default();
    let expanded: Vec<String> = w
        .queries
        .iter()
        .zip(&w.pseudo)
        .map(|(q, d)| expand_sparse(q, d, DEFAULT_QUERY_REPEATS).text)
        .collect();

    let mut group = c.benchmark_group("bm25 top-100");
    group.bench_function("baseline", |b| {
        b.iter(|| {
            for q in &w.queries {
                black_box(search(&index, &q.text, 100, &params));
            }
        })
    });
    group.bench_function("query2doc", |b| {
        b.iter(|| {
            for q in &expanded {
                black_box(search(&index, q, 100, &params));
            }
        })
    });
    group.finish();
}

fn dense_search(c: &mut Criterion) {
    let w = workload(20_000, 10, 2);
    let mut group = c.benchmark_group("exact dense top-100");
    for dim in [128, 768] {
        let provider = HashProjectionProvider::new(dim, AnalyzerConfig::default()).unwrap();
        let mut index = VectorIndex::new(provider.info(), Metric::Dot);
        for chunk in w.docs.chunks(512) {
            let texts: Vec<&str> = chunk.iter().map(|d| d.text.as_str()).collect();
            for (d, v) in chunk.iter().zip(provider.embed(&texts).unwrap()) {
                index.add(d.doc_id.clone(), &v).unwrap();
            }
        }
        let texts: Vec<&str> = w.queries.iter().map(|q| q.text.as_str()).collect();
        let queries = provider.embed(&texts).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(dim), &queries, |b, qs| {
            b.iter(|| {
                for q in qs {
                    black_box(index.search(q, 100).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn losses(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss and gradients");
    for negatives in [7, 63] {
        let batch = objective_batch(768, negatives, 3);
        group.bench_with_input(
            BenchmarkId::new("contrastive", negatives),
            &batch,
            |b, batch| b.iter(|| contrastive_loss(black_box(batch)).unwrap()),
        );
        let params = DistillParams::default();
        group.bench_with_input(
            BenchmarkId::new("distill", negatives),
            &batch,
            |b, batch| b.iter(|| distill_loss(black_box(batch), &params).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, sparse_search, dense_search, losses);
criterion_main!(benches);
