//! Microbenchmarks for the hot kernels: word reduction, orbit streaming,
//! PF classification, and exact nullspace search.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cvn_core::freegroup::{cyclic_reduce, FreeMap, Letter, Word, DEFAULT_LETTER_CAP};
use cvn_core::trainmap::{pf_classify, TopRep};
use cvn_core::witness::{candidate_graphs, crossing_matrix, nullspace_direction};

fn w(s: &str) -> Word {
    Word::parse(s).unwrap()
}

fn fib_phi() -> FreeMap {
    FreeMap::with_inverse(2, vec![w("a b"), w("a")], vec![w("b"), w("b- a")]).unwrap()
}

fn bench_word_reduction(c: &mut Criterion) {
    // alternating cancellation-heavy input of 10^4 letters
    let letters: Vec<Letter> = (0..10_000)
        .map(|i| Letter::new(i % 3, (i / 7) % 2 == 0))
        .collect();
    c.bench_function("word_reduce_10k", |b| {
        b.iter(|| Word::reduced(black_box(&letters).iter().copied()))
    });
    let word = Word::reduced(letters.iter().copied());
    c.bench_function("cyclic_reduce_canonical", |b| {
        b.iter(|| cyclic_reduce(black_box(&word)))
    });
}

fn bench_orbit(c: &mut Criterion) {
    let phi = fib_phi();
    let g = w("a");
    c.bench_function("fibonacci_orbit_n20", |b| {
        b.iter(|| {
            phi.orbit(black_box(&g), 0, 20, DEFAULT_LETTER_CAP)
                .unwrap()
                .samples
                .len()
        })
    });
}

fn bench_pf_classify(c: &mut Criterion) {
    let fib = TopRep::rose_representative(&fib_phi()).unwrap();
    let m = fib.transition_matrix(0);
    c.bench_function("pf_classify_fibonacci", |b| {
        b.iter(|| pf_classify(black_box(&m)).unwrap())
    });
}

fn bench_nullspace(c: &mut Criterion) {
    let phi = FreeMap::with_inverse(2, vec![w("a"), w("b a")], vec![w("a"), w("b a-")]).unwrap();
    let barbell = candidate_graphs(2).swap_remove(1);
    let sample: Vec<Word> = phi
        .orbit(&w("b"), -100, 100, DEFAULT_LETTER_CAP)
        .unwrap()
        .samples
        .iter()
        .map(|s| s.cyclic.to_word())
        .collect();
    let matrix = crossing_matrix(&barbell, &sample).unwrap();
    let rho = "1/2".parse().unwrap();
    c.bench_function("nullspace_201_rows", |b| {
        b.iter(|| {
            nullspace_direction(black_box(&matrix), barbell.lengths(), &rho)
                .unwrap()
                .unwrap()
        })
    });
}

criterion_group!(
    kernels,
    bench_word_reduction,
    bench_orbit,
    bench_pf_classify,
    bench_nullspace
);
criterion_main!(kernels);
