use criterion::{criterion_group, criterion_main, Criterion};
use mathsearch::benchmark::{ndcg_at_k, IdcgMode, Labels};
use mathsearch::{mock_embed, Bm25Index, Bm25Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "group", "ring", "field", "subgroup", "order", "divides", "prime", "continuous", "compact",
    "bounded", "monotone", "sequence", "converges", "injective", "surjective", "bijective",
    "function", "set", "finite", "integral", "derivative", "measure", "topology", "metric",
];

fn sentence(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn bench_bm25(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let docs: Vec<(String, String)> = (0..5_000).map(|i| (format!("t{i}"), sentence(&mut rng, 30))).collect();
    let index = Bm25Index::new(docs.clone(), Bm25Params::default()).unwrap();
    c.bench_function("bm25_index_5k", |b| b.iter(|| Bm25Index::new(docs.clone(), Bm25Params::default()).unwrap()));
    c.bench_function("bm25_search_5k", |b| b.iter(|| index.search("bounded monotone sequence converges", 20)));
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ranking: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
    let mut labels = Labels::new();
    for i in 0..100 {
        if rng.random_bool(0.2) {
            labels.insert(format!("t{i}"), rng.random_range(1..=2u8));
        }
    }
    c.bench_function("ndcg_at_20_retrieved", |b| b.iter(|| ndcg_at_k(&ranking, &labels, 20, IdcgMode::Retrieved)));
}

fn bench_mock_embed(c: &mut Criterion) {
    let text = "Instruct: Retrieve math theorems\nQuery:Every bounded monotone sequence of real numbers converges";
    c.bench_function("mock_embed_256", |b| b.iter(|| mock_embed(text, 256)));
}

criterion_group!(benches, bench_bm25, bench_metrics, bench_mock_embed);
criterion_main!(benches);
