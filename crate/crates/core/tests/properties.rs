//! Randomized property tests for the word kernel, basis rewriting,
//! automorphisms, path/word consistency, and length functions.

use num::rational::BigRational;
use num::BigInt;
use proptest::prelude::*;

use cvn_core::freegroup::{
    cyclic_reduce, from_basis_a_bak, to_basis_a_bak, CyclicWord, FreeMap, Letter, Word,
};
use cvn_core::graph::{path_to_word, word_to_path, Graph, Path};
use cvn_core::outerspace::MarkedMetricGraph;
use cvn_core::rigidity::w_to_wstar;

fn letters(rank: usize, max_len: usize) -> impl Strategy<Value = Vec<Letter>> {
    prop::collection::vec(
        (0..rank, any::<bool>()).prop_map(|(i, s)| Letter::new(i, s)),
        0..=max_len,
    )
}

fn word(rank: usize, max_len: usize) -> impl Strategy<Value = Word> {
    letters(rank, max_len).prop_map(Word::reduced)
}

/// Random automorphism with certified inverse: a product of elementary
/// transvections and inversions.
fn automorphism(rank: usize, max_factors: usize) -> impl Strategy<Value = FreeMap> {
    prop::collection::vec((0..rank, 0..rank, any::<bool>()), 0..=max_factors).prop_map(
        move |factors| {
            let mut out = FreeMap::identity(rank).unwrap();
            for (i, j, sign) in factors {
                let elem = if i == j {
                    // inversion of generator i
                    let mut imgs: Vec<Word> = (0..rank).map(Word::generator).collect();
                    imgs[i] = Word::generator(i).inverse();
                    FreeMap::with_inverse(rank, imgs.clone(), imgs).unwrap()
                } else {
                    // transvection a_i -> a_i a_j^{±1}
                    let mut imgs: Vec<Word> = (0..rank).map(Word::generator).collect();
                    let mut invs = imgs.clone();
                    let aj = if sign {
                        Word::generator(j)
                    } else {
                        Word::generator(j).inverse()
                    };
                    imgs[i] = Word::generator(i).concat(&aj);
                    invs[i] = Word::generator(i).concat(&aj.inverse());
                    FreeMap::with_inverse(rank, imgs, invs).unwrap()
                };
                out = elem.compose(&out).unwrap();
            }
            out
        },
    )
}

proptest! {
    #[test]
    fn reduction_is_idempotent(ls in letters(4, 40)) {
        let w = Word::reduced(ls);
        let again = Word::reduced(w.letters().iter().copied());
        prop_assert_eq!(&again, &w);
        // no adjacent cancelling pair survives
        for pair in w.letters().windows(2) {
            prop_assert_ne!(pair[0], pair[1].inverse());
        }
    }

    #[test]
    fn inverse_cancels(w in word(4, 40)) {
        prop_assert!(w.concat(&w.inverse()).is_empty());
        prop_assert!(w.inverse().concat(&w).is_empty());
    }

    #[test]
    fn cyclic_reduce_is_conjugacy_invariant(w in word(3, 30), u in word(3, 10)) {
        let conj = u.concat(&w).concat(&u.inverse());
        prop_assert_eq!(cyclic_reduce(&conj), cyclic_reduce(&w));
    }

    #[test]
    fn cyclic_reduction_has_no_seam_cancellation(w in word(3, 30)) {
        let c = cyclic_reduce(&w);
        let ls = c.letters();
        if ls.len() >= 2 {
            prop_assert_ne!(ls[0], ls[ls.len() - 1].inverse());
        }
    }

    #[test]
    fn max_power_rotation_and_inversion_invariant(w in word(2, 24), rot in 0usize..24) {
        let c = cyclic_reduce(&w);
        if !c.is_empty() {
            let r = rot % c.len();
            let mut rotated: Vec<Letter> = c.letters()[r..].to_vec();
            rotated.extend_from_slice(&c.letters()[..r]);
            let rc = cyclic_reduce(&Word::reduced(rotated));
            prop_assert_eq!(rc.max_power(0), c.max_power(0));
            let inv = cyclic_reduce(&c.to_word().inverse());
            prop_assert_eq!(inv.max_power(0), c.max_power(0));
        }
    }

    #[test]
    fn basis_a_bak_round_trip(w in word(2, 24), k in 1u32..=5) {
        let c = cyclic_reduce(&w);
        let rewritten = to_basis_a_bak(&c, k).unwrap();
        prop_assert_eq!(from_basis_a_bak(&rewritten, k), c);
    }

    #[test]
    fn automorphism_inverse_round_trip(phi in automorphism(3, 6), w in word(3, 20)) {
        phi.certify().unwrap();
        let there = phi.apply(&w).unwrap();
        prop_assert_eq!(phi.apply_inverse(&there).unwrap(), w.clone());
        let back = phi.apply_inverse(&w).unwrap();
        prop_assert_eq!(phi.apply(&back).unwrap(), w);
    }

    #[test]
    fn rose_path_reduction_matches_word_reduction(ls in letters(3, 30)) {
        // in the rose, generator i <-> positive edge i
        let g = Graph::rose(3);
        let tree = g.spanning_tree(&[]).unwrap();
        let edges: Vec<usize> = ls
            .iter()
            .map(|l| 2 * l.index() + usize::from(!l.is_positive()))
            .collect();
        let path = Path::new(&g, 0, edges).unwrap().reduced(&g);
        let word = Word::reduced(ls);
        prop_assert_eq!(path_to_word(&path, &tree), word.clone());
        prop_assert_eq!(word_to_path(&g, &tree, 0, &word).unwrap(), path);
    }

    #[test]
    fn translation_length_scales(w in word(2, 16), num in 1i64..20, den in 1i64..20) {
        let t = MarkedMetricGraph::unit_rose(2);
        let lambda = BigRational::new(BigInt::from(num), BigInt::from(den));
        let scaled = t.scale(&lambda).unwrap();
        prop_assert_eq!(
            scaled.translation_length(&w).unwrap(),
            lambda * t.translation_length(&w).unwrap()
        );
    }

    #[test]
    fn crossing_vectors_add_over_powers_on_roses(w in word(2, 12), n in 1u32..=5) {
        // on a rose every realization is cyclically reduced, so crossings
        // are homogeneous in the exponent
        let t = MarkedMetricGraph::unit_rose(2);
        let c = cyclic_reduce(&w).to_word();
        if !c.is_empty() {
            let base = t.crossing_vector(&c).unwrap();
            let scaled: Vec<u64> = base.iter().map(|&x| x * u64::from(n)).collect();
            prop_assert_eq!(t.crossing_vector(&c.pow(n)).unwrap(), scaled);
        }
    }

    #[test]
    fn bounded_a_power_sets_pass_the_starred_check(
        raw in prop::collection::vec(word(2, 16), 1..6),
        m in 1usize..4,
    ) {
        // rejection sampling: keep only words whose a-powers stay within m
        let sample: Vec<CyclicWord> = raw
            .iter()
            .map(cyclic_reduce)
            .filter(|c| !c.is_empty() && c.max_power(0) <= m)
            .collect();
        if !sample.is_empty() {
            let report = w_to_wstar(&sample, m).unwrap();
            prop_assert!(report.holds(), "violations with k = {}", report.k);
        }
    }
}
