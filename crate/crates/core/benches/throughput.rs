use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termshift::cluster::{kmeans, KMeansConfig};
use termshift::dictionary::{build_entries, read_source_rows, ExclusionList};
use termshift::frequency::corpus_deltas;
use termshift::synthgen::{generate, SynthSpec};
use termshift::{Corpus, DictionaryConfig, Parallelism, TermDictionary};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Rayon)];

fn deltas(c: &mut Criterion) {
    let spec = SynthSpec { sections: 2_000, filler_pairs: 5_000, record_spans: false, ..SynthSpec::default() };
    let out = generate(&spec).expect("bench spec is feasible");
    let (corpus, _) = Corpus::ingest(&out.corpus_jsonl().unwrap()[..]).unwrap();
    let rows = read_source_rows(&out.dictionary_csv().unwrap()[..], Path::new("bench.csv")).unwrap();
    let (entries, _) = build_entries(&rows, &ExclusionList::default(), None, &DictionaryConfig::default());
    let dict = TermDictionary::from_entries(entries, Some(&corpus.token_frequencies()));

    let mut group = c.benchmark_group("corpus_deltas");
    group.throughput(Throughput::Elements(corpus.len() as u64));
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(corpus_deltas(&corpus, &dict, mode)))
        });
    }
    group.finish();
}

fn restarts(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<Vec<f64>> =
        (0..3_000).map(|i| vec![(i % 3) as f64 * 4.0 + rng.random::<f64>(), rng.random::<f64>()]).collect();
    let mut group = c.benchmark_group("kmeans_restarts");
    for (name, mode) in MODES {
        let cfg = KMeansConfig { restarts: 32, parallelism: mode, ..KMeansConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(kmeans(&points, cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, deltas, restarts);
criterion_main!(benches);
