//! End-to-end acceptance suite: one test per criterion, each printing a
//! pass line and asserting its runtime budget. Tolerances are pinned in
//! code; all arithmetic-facing assertions are exact.

use std::time::{Duration, Instant};

use num::rational::BigRational;
use num::{BigInt, BigUint, One};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cvn_core::freegroup::{
    cyclic_reduce, extend_to_basis, CyclicWord, FreeMap, Letter, Word, DEFAULT_LETTER_CAP,
};
use cvn_core::graph::{
    extend_to_cross, primitive_loop_crossing, CyclicPath, Graph, LoopCertificate, Path, Subgraph,
};
use cvn_core::rigidity::{check_property_p_default, w_to_wstar, Direction};
use cvn_core::trainmap::{
    pf_classify, verify_rtt, verify_train_track, Legality, PfClass, TopRep, Turn, CHECK_DEPTH,
};
use cvn_core::witness::{
    build_witness, candidate_graphs, distinguishing_word, nullspace_direction, WitnessOutcome,
};

fn w(s: &str) -> Word {
    Word::parse(s).unwrap()
}

fn rat(s: &str) -> BigRational {
    s.parse().unwrap()
}

fn fib_phi() -> FreeMap {
    FreeMap::with_inverse(2, vec![w("a b"), w("a")], vec![w("b"), w("b- a")]).unwrap()
}

fn neg_phi() -> FreeMap {
    FreeMap::with_inverse(2, vec![w("a"), w("b a")], vec![w("a"), w("b a-")]).unwrap()
}

fn random_letters(rng: &mut ChaCha8Rng, rank: usize, max_len: usize) -> Vec<Letter> {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| Letter::new(rng.gen_range(0..rank), rng.gen()))
        .collect()
}

fn finish(n: u32, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "criterion {n} exceeded budget: {elapsed:?} >= {budget:?}"
    );
    println!("ACCEPT {n} PASS ({elapsed:?})");
}

#[test]
fn accept_01_word_kernel_randomized() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for i in 0..100_000u32 {
        let ls = random_letters(&mut rng, 4, 30);
        match i % 3 {
            0 => {
                // reduction is idempotent and leaves no cancelling pair
                let r = Word::reduced(ls);
                assert_eq!(Word::reduced(r.letters().iter().copied()), r);
                for pair in r.letters().windows(2) {
                    assert_ne!(pair[0], pair[1].inverse());
                }
            }
            1 => {
                // cyclic reduction is conjugacy invariant
                let word = Word::reduced(ls);
                let u = Word::reduced(random_letters(&mut rng, 4, 8));
                let conj = u.concat(&word).concat(&u.inverse());
                assert_eq!(cyclic_reduce(&conj), cyclic_reduce(&word));
            }
            _ => {
                // inverses cancel exactly
                let word = Word::reduced(ls);
                assert!(word.concat(&word.inverse()).is_empty());
            }
        }
    }
    finish(1, start, Duration::from_secs(10));
}

#[test]
fn accept_02_train_track_verdicts() {
    let start = Instant::now();

    let fib = TopRep::rose_representative(&fib_phi()).unwrap();
    let report = verify_train_track(&fib, CHECK_DEPTH);
    assert!(report.is_train_track());
    // letter-exactness: reduced iterates match the unreduced recurrence
    for k in 0..2 {
        let mut unreduced = vec![BigUint::one(); 2];
        for n in 1..=10u32 {
            let next: Vec<BigUint> = (0..2)
                .map(|e| {
                    fib.image_of(2 * e)
                        .edges()
                        .iter()
                        .map(|&d| unreduced[d / 2].clone())
                        .sum()
                })
                .collect();
            unreduced = next;
            let p = Path::new(fib.graph(), 0, vec![2 * k]).unwrap();
            let reduced = fib.iterate_reduced(&p, n, DEFAULT_LETTER_CAP).unwrap();
            assert_eq!(BigUint::from(reduced.len()), unreduced[k]);
        }
    }

    // x -> xy, y -> x^-1 is rejected with the known orbit and cancellation
    let g = Graph::rose(2);
    let images = vec![
        Path::new(&g, 0, vec![0, 2]).unwrap(),
        Path::new(&g, 0, vec![1]).unwrap(),
    ];
    let bad = TopRep::new(g, images, vec![]).unwrap();
    let report = verify_train_track(&bad, CHECK_DEPTH);
    assert!(!report.is_train_track());
    let expected_orbit = vec![
        Turn::new(1, 2),
        Turn::new(3, 1),
        Turn::new(0, 3),
        Turn::new(0, 0),
    ];
    assert!(report
        .illegal_turns
        .iter()
        .any(|(_, l)| matches!(l, Legality::Illegal { orbit } if *orbit == expected_orbit)));
    let cancel = report.cancellation.expect("cancellation witness");
    assert_eq!(cancel.edge, 0);
    assert_eq!(cancel.step, 4);
    assert_eq!(cancel.pair, (1, 0));

    finish(2, start, Duration::from_secs(1));
}

#[test]
fn accept_03_pf_classification() {
    let start = Instant::now();

    // Fibonacci transition matrix [[1,1],[1,0]]
    let fib = TopRep::rose_representative(&fib_phi()).unwrap();
    assert_eq!(fib.n_strata(), 1);
    let class = pf_classify(&fib.transition_matrix(0)).unwrap();
    let PfClass::Eg { lambda, cert_power } = class else {
        panic!("expected EG, got {class:?}");
    };
    assert!((lambda - 1.618_033_988_749_894_9).abs() < 1e-9);
    assert!(cert_power >= 1);

    // NEG stratum [1] and a zero stratum
    let neg = TopRep::rose_representative(&neg_phi()).unwrap();
    let top = neg.n_strata() - 1;
    assert_eq!(
        pf_classify(&neg.transition_matrix(top)).unwrap(),
        PfClass::Neg
    );
    let g = Graph::rose(2);
    let collapse = TopRep::new(
        g.clone(),
        vec![
            Path::new(&g, 0, vec![2]).unwrap(),
            Path::new(&g, 0, vec![2]).unwrap(),
        ],
        vec![vec![1], vec![0, 1]],
    )
    .unwrap();
    assert_eq!(
        pf_classify(&collapse.transition_matrix(1)).unwrap(),
        PfClass::Zero
    );

    finish(3, start, Duration::from_secs(1));
}

#[test]
fn accept_04_property_p_bounds() {
    let start = Instant::now();

    let neg = neg_phi();
    for d in [Direction::Forward, Direction::Backward] {
        let r = check_property_p_default(&neg, &w("b"), 1, 20, d).unwrap();
        assert_eq!(r.observed_m, 1);
        assert!(r.stabilized);
    }

    let fib = fib_phi();
    for h in [8, 12] {
        let r = check_property_p_default(&fib, &w("a"), 0, h, Direction::Forward).unwrap();
        assert_eq!(r.observed_m, 2, "horizon {h}");
        assert!(r.stabilized, "horizon {h}");
    }

    finish(4, start, Duration::from_secs(30));
}

#[test]
fn accept_05_starred_rewriting() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xBADA55);

    for set in 0..1000u32 {
        let m = 1 + (set as usize % 3);
        let mut sample: Vec<CyclicWord> = Vec::new();
        while sample.len() < 4 {
            let c = cyclic_reduce(&Word::reduced(random_letters(&mut rng, 2, 16)));
            // rejection sampling to the bounded-a-power hypothesis
            if !c.is_empty() && c.max_power(0) <= m {
                sample.push(c);
            }
        }
        let report = w_to_wstar(&sample, m).unwrap();
        assert!(report.holds(), "set {set} violated with k = {}", report.k);
    }

    // adversarial: (b a^2)^3 rewritten with too-small k = 2 collapses to b'^3
    let report = w_to_wstar(&[CyclicWord::parse("b a a b a a b a a").unwrap()], 1).unwrap();
    assert_eq!(report.k, 2);
    assert_eq!(report.cond2_violations.len(), 1);
    assert_eq!(report.cond2_violations[0].1, 3);

    finish(5, start, Duration::from_secs(30));
}

#[test]
fn accept_06_neg_witness_full_orbit() {
    let start = Instant::now();

    let phi = neg_phi();
    let family = candidate_graphs(2);
    let outcome = build_witness(
        &phi,
        &w("b"),
        1000,
        Direction::Both,
        &family,
        &rat("1/2"),
        4,
        DEFAULT_LETTER_CAP,
    )
    .unwrap();
    let WitnessOutcome::Found(pair) = outcome else {
        panic!("expected witness pair");
    };
    assert_eq!(
        pair.delta,
        vec![BigInt::from(0), BigInt::from(2), BigInt::from(-1)]
    );
    assert_eq!(pair.step, rat("1/4"));
    assert_eq!(pair.wstar, w("b b"));
    assert_eq!(pair.t1.translation_length(&pair.wstar).unwrap(), rat("4"));
    assert_eq!(pair.t2.translation_length(&pair.wstar).unwrap(), rat("9/2"));

    // the per-n dot-product identity: row (n, 1, 2) ⊥ (0, 2, -1)
    let orbit = phi.orbit(&w("b"), -1000, 1000, DEFAULT_LETTER_CAP).unwrap();
    assert_eq!(orbit.samples.len(), 2001);
    for s in &orbit.samples {
        let row = pair.t1.crossing_vector(&s.cyclic.to_word()).unwrap();
        assert_eq!(row[1..], [1, 2]);
        let dot: BigInt = row
            .iter()
            .zip(&pair.delta)
            .map(|(&c, d)| BigInt::from(c) * d)
            .sum();
        assert_eq!(dot, BigInt::from(0), "n = {}", s.n);
    }

    finish(6, start, Duration::from_secs(10));
}

#[test]
fn accept_07_fibonacci_forward_witness() {
    let start = Instant::now();

    let phi = fib_phi();
    let orbit = phi.orbit(&w("a"), 0, 25, DEFAULT_LETTER_CAP).unwrap();
    assert_eq!(orbit.samples.len(), 26);
    assert!(orbit.samples.last().unwrap().word.len() > 100_000);

    // the no-bb property: b-letters are isolated in every sampled word
    for s in &orbit.samples {
        let ls = s.cyclic.letters();
        for i in 0..ls.len() {
            let next = ls[(i + 1) % ls.len()];
            assert!(ls[i].is_positive(), "n = {}", s.n);
            assert!(
                !(ls[i].index() == 1 && next.index() == 1),
                "bb at n = {}",
                s.n
            );
        }
    }

    let family = candidate_graphs(2);
    let outcome = build_witness(
        &phi,
        &w("a"),
        25,
        Direction::Forward,
        &family,
        &rat("1/2"),
        4,
        DEFAULT_LETTER_CAP,
    )
    .unwrap();
    let WitnessOutcome::Found(pair) = outcome else {
        panic!("expected witness pair");
    };
    assert_eq!(pair.wstar, w("b b"));
    // exact equality on every sampled word, re-verified here
    for s in &orbit.samples {
        let word = s.cyclic.to_word();
        assert_eq!(
            pair.t1.translation_length(&word).unwrap(),
            pair.t2.translation_length(&word).unwrap(),
            "n = {}",
            s.n
        );
    }

    finish(7, start, Duration::from_secs(120));
}

#[test]
fn accept_08_rank_three_witness() {
    let start = Instant::now();

    let hung = &candidate_graphs(3)[1];
    let sample = [w("a"), w("b"), w("c")];
    let matrix: Vec<Vec<u64>> = sample
        .iter()
        .map(|g| hung.crossing_vector(g).unwrap())
        .collect();
    let dir = nullspace_direction(&matrix, hung.lengths(), &rat("1/2"))
        .unwrap()
        .expect("direction exists");
    assert_eq!(dir.delta, [0, 0, 2, -1].map(BigInt::from).to_vec());
    let t = dir.t_star / BigRational::from(BigInt::from(2));
    let lengths: Vec<BigRational> = hung
        .lengths()
        .iter()
        .zip(&dir.delta)
        .map(|(l, d)| l + &t * BigRational::from(d.clone()))
        .collect();
    let t2 = hung.with_lengths(lengths).unwrap();
    let wstar = distinguishing_word(hung, &t2, 4).unwrap().unwrap();
    assert_eq!(wstar, w("c c"));

    finish(8, start, Duration::from_secs(1));
}

#[test]
fn accept_09_splitting_and_composition() {
    let start = Instant::now();

    // splitting identity holds on all enumerated legal test paths
    let fib = TopRep::rose_representative(&fib_phi()).unwrap();
    let rtt = verify_rtt(&fib);
    assert!(rtt.passes());
    assert!(rtt.splitting.is_empty());
    let neg = TopRep::rose_representative(&neg_phi()).unwrap();
    let rtt = verify_rtt(&neg);
    assert!(rtt.passes());
    assert!(rtt.splitting.is_empty());

    // composition: the bound at horizon l*h + l - 1 for phi equals the max
    // over r < l of the bound for phi^l seeded at Phi^r(g), horizon h
    let phi = fib_phi();
    let (l, h) = (3u32, 4i64);
    let horizon = i64::from(l) * h + i64::from(l) - 1;
    let left = check_property_p_default(&phi, &w("a"), 0, horizon, Direction::Forward)
        .unwrap()
        .observed_m;
    let phi_l = phi.power(l).unwrap();
    let mut right = 0;
    let mut seed = w("a");
    for _ in 0..l {
        let r = check_property_p_default(&phi_l, &seed, 0, h, Direction::Forward).unwrap();
        right = right.max(r.observed_m);
        seed = phi.apply(&seed).unwrap();
    }
    assert_eq!(left, right);
    assert_eq!(left, 2);

    finish(9, start, Duration::from_secs(30));
}

#[test]
fn accept_10_constructions() {
    let start = Instant::now();

    // non-separating case on the rose: x^3 y crosses x exactly three times
    let g = Graph::rose(2);
    let h = Subgraph::new(&g, &[0]).unwrap();
    let lp = primitive_loop_crossing(&g, &h, 0, 3).unwrap();
    assert_eq!(lp.cyclic.crossings(0), 3);
    assert_eq!(lp.word, w("a a a b"));
    assert!(matches!(
        lp.certificate,
        LoopCertificate::CrossesOnce { .. }
    ));
    let cert = extend_to_basis(&lp.word, 2).unwrap();
    cert.automorphism.certify().unwrap();

    // barbell: eta = e y e-bar, all H-crossings survive cyclic reduction
    let barbell = Graph::new(2, &[(0, 0), (1, 1), (0, 1)]).unwrap();
    let h = Subgraph::new(&barbell, &[1, 2]).unwrap();
    let alpha = CyclicPath::from_path(&barbell, &Path::new(&barbell, 0, vec![0]).unwrap()).unwrap();
    let ext = extend_to_cross(&barbell, &h, &alpha).unwrap();
    assert_eq!(ext.eta.edges(), &[4, 2, 5]);
    assert_eq!(ext.alpha_prime.len(), 4);
    assert_eq!(ext.alpha_prime.crossings(1), 1);
    assert_eq!(ext.alpha_prime.crossings(2), 2);

    finish(10, start, Duration::from_secs(1));
}
