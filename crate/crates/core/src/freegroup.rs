//! Exact arithmetic on words and cyclic words over a free basis, automorphism
//! application, orbit streams, basis rewriting, and primitivity certificates.
//!
//! Words are kept reduced at all times; a `CyclicWord` is additionally
//! cyclically reduced and stored in its canonical (least) rotation, so cyclic
//! words compare equal exactly when they name the same conjugacy class.

use std::fmt;

use thiserror::Error;

/// Default per-word letter budget for orbit computation.
pub const DEFAULT_LETTER_CAP: usize = 10_000_000;

/// Largest supported rank; generators are printed `a`..`z`.
pub const MAX_RANK: usize = 26;

/// A signed generator: index into the basis plus a sign.
///
/// Encoded as a nonzero `i32` (`(index + 1) * sign`) so that words of a few
/// million letters stay compact.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Letter(i32);

impl Letter {
    pub fn new(index: usize, positive: bool) -> Letter {
        let code = (index as i32) + 1;
        Letter(if positive { code } else { -code })
    }

    pub fn index(self) -> usize {
        (self.0.abs() - 1) as usize
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn inverse(self) -> Letter {
        Letter(-self.0)
    }

    /// Fixed total order on signed generators: a < a⁻¹ < b < b⁻¹ < …
    fn key(self) -> (usize, bool) {
        (self.index(), !self.is_positive())
    }
}

impl PartialOrd for Letter {
    fn partial_cmp(&self, other: &Letter) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Letter {
    fn cmp(&self, other: &Letter) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = (b'a' + (self.index() % MAX_RANK) as u8) as char;
        if self.is_positive() {
            write!(f, "{c}")
        } else {
            write!(f, "{c}-")
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WordError {
    #[error("unexpected character {0:?} in word")]
    BadCharacter(char),
    #[error("dangling inverse marker")]
    DanglingInverse,
}

/// Appends a letter to a reduced buffer, cancelling against the tail.
#[inline]
pub(crate) fn push_reduced(buf: &mut Vec<Letter>, l: Letter) {
    if buf.last() == Some(&l.inverse()) {
        buf.pop();
    } else {
        buf.push(l);
    }
}

/// A reduced word in the free group; the empty word is the identity.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn identity() -> Word {
        Word::default()
    }

    /// Reduces an arbitrary letter sequence (single stack pass).
    pub fn reduced(letters: impl IntoIterator<Item = Letter>) -> Word {
        let mut buf = Vec::new();
        for l in letters {
            push_reduced(&mut buf, l);
        }
        Word { letters: buf }
    }

    pub fn generator(index: usize) -> Word {
        Word {
            letters: vec![Letter::new(index, true)],
        }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: self.letters.iter().rev().map(|l| l.inverse()).collect(),
        }
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut buf = self.letters.clone();
        for &l in &other.letters {
            push_reduced(&mut buf, l);
        }
        Word { letters: buf }
    }

    /// Largest generator index used, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.letters.iter().map(|l| l.index()).max()
    }

    pub fn pow(&self, n: u32) -> Word {
        let mut out = Word::identity();
        for _ in 0..n {
            out = out.concat(self);
        }
        out
    }

    /// Counts occurrences of generator `index` regardless of sign.
    pub fn occurrences(&self, index: usize) -> usize {
        self.letters.iter().filter(|l| l.index() == index).count()
    }

    /// Parses whitespace-separated tokens; each token is a run of generators
    /// like `a`, `b-`, `ab-a`. `1` (or nothing) is the identity.
    pub fn parse(s: &str) -> Result<Word, WordError> {
        let mut letters = Vec::new();
        for token in s.split_whitespace() {
            if token == "1" {
                continue;
            }
            let mut chars = token.chars().peekable();
            while let Some(c) = chars.next() {
                if !c.is_ascii_lowercase() {
                    return Err(WordError::BadCharacter(c));
                }
                let index = (c as u8 - b'a') as usize;
                let mut positive = true;
                match chars.peek() {
                    Some('-') => {
                        positive = false;
                        chars.next();
                    }
                    Some('\u{207b}') => {
                        // superscript minus, optionally followed by superscript one
                        positive = false;
                        chars.next();
                        if chars.peek() == Some(&'\u{b9}') {
                            chars.next();
                        }
                    }
                    _ => {}
                }
                letters.push(Letter::new(index, positive));
            }
        }
        Ok(Word::reduced(letters))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Index of the lexicographically least rotation (two-pointer scan, O(n)).
pub(crate) fn least_rotation<T: Ord>(s: &[T]) -> usize {
    let n = s.len();
    if n == 0 {
        return 0;
    }
    let (mut i, mut j, mut k) = (0usize, 1usize, 0usize);
    while i < n && j < n && k < n {
        let a = &s[(i + k) % n];
        let b = &s[(j + k) % n];
        if a == b {
            k += 1;
            continue;
        }
        if a > b {
            i = i + k + 1;
        } else {
            j = j + k + 1;
        }
        if i == j {
            j += 1;
        }
        k = 0;
    }
    i.min(j)
}

/// A cyclically reduced word in canonical (least) rotation; the equivalence
/// class `[[w]]` of a conjugacy class.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct CyclicWord {
    letters: Vec<Letter>,
}

impl CyclicWord {
    /// Cyclic reduction: strip conjugating prefix/suffix pairs, then rotate
    /// into canonical form.
    pub fn from_word(w: &Word) -> CyclicWord {
        let mut letters: &[Letter] = w.letters();
        while letters.len() >= 2 && letters[0] == letters[letters.len() - 1].inverse() {
            letters = &letters[1..letters.len() - 1];
        }
        let start = least_rotation(letters);
        let mut out = Vec::with_capacity(letters.len());
        out.extend_from_slice(&letters[start..]);
        out.extend_from_slice(&letters[..start]);
        CyclicWord { letters: out }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// A representative reduced word (the canonical rotation read linearly).
    pub fn to_word(&self) -> Word {
        Word {
            letters: self.letters.clone(),
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.letters.iter().map(|l| l.index()).max()
    }

    /// Maximum `|k|` with `a_i^k` a cyclic subword; runs are counted across
    /// the rotation seam, and a pure power reports its full exponent.
    pub fn max_power(&self, index: usize) -> usize {
        let n = self.letters.len();
        if n == 0 {
            return 0;
        }
        let mut best = 0usize;
        for positive in [true, false] {
            let target = Letter::new(index, positive);
            if self.letters.iter().all(|&l| l == target) {
                best = best.max(n);
                continue;
            }
            let mut run = 0usize;
            // doubled scan merges the seam run
            for t in 0..2 * n {
                if self.letters[t % n] == target {
                    run += 1;
                    if t < n || run <= n {
                        best = best.max(run.min(n));
                    }
                } else {
                    run = 0;
                }
            }
        }
        best
    }

    pub fn parse(s: &str) -> Result<CyclicWord, WordError> {
        Ok(CyclicWord::from_word(&Word::parse(s)?))
    }
}

impl fmt::Display for CyclicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_word().fmt(f)
    }
}

impl fmt::Debug for CyclicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Cyclic reduction of a word.
pub fn cyclic_reduce(w: &Word) -> CyclicWord {
    CyclicWord::from_word(w)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FreeMapError {
    #[error("rank must be between 2 and {MAX_RANK}, got {0}")]
    BadRank(usize),
    #[error("expected {expected} images, got {got}")]
    ImageCount { expected: usize, got: usize },
    #[error("image of generator {gen} uses generator index {index} outside rank {rank}")]
    IndexOutOfRank {
        gen: usize,
        index: usize,
        rank: usize,
    },
    #[error("word uses generator index {index} outside rank {rank}")]
    WordOutOfRank { index: usize, rank: usize },
    #[error("inverse certificate fails on generator {0}")]
    NotInverse(usize),
    #[error("map carries no inverse images")]
    NoInverse,
    #[error("malformed automorphism file: {0}")]
    Parse(String),
}

/// An endomorphism of `F_N` given by generator images; when inverse images are
/// supplied and certified, the map is an automorphism.
#[derive(Clone, PartialEq, Eq)]
pub struct FreeMap {
    rank: usize,
    images: Vec<Word>,
    inverse_images: Option<Vec<Word>>,
}

impl fmt::Debug for FreeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FreeMap(rank {}", self.rank)?;
        for (i, w) in self.images.iter().enumerate() {
            write!(f, ", {} -> {}", Letter::new(i, true), w)?;
        }
        write!(f, ")")
    }
}

impl FreeMap {
    fn check_images(rank: usize, images: &[Word]) -> Result<(), FreeMapError> {
        if !(2..=MAX_RANK).contains(&rank) {
            return Err(FreeMapError::BadRank(rank));
        }
        if images.len() != rank {
            return Err(FreeMapError::ImageCount {
                expected: rank,
                got: images.len(),
            });
        }
        for (gen, w) in images.iter().enumerate() {
            if let Some(index) = w.max_index() {
                if index >= rank {
                    return Err(FreeMapError::IndexOutOfRank { gen, index, rank });
                }
            }
        }
        Ok(())
    }

    pub fn new(rank: usize, images: Vec<Word>) -> Result<FreeMap, FreeMapError> {
        Self::check_images(rank, &images)?;
        Ok(FreeMap {
            rank,
            images,
            inverse_images: None,
        })
    }

    /// Builds the map and certifies the supplied inverse images: both
    /// compositions must fix every generator after reduction.
    pub fn with_inverse(
        rank: usize,
        images: Vec<Word>,
        inverse_images: Vec<Word>,
    ) -> Result<FreeMap, FreeMapError> {
        Self::check_images(rank, &images)?;
        Self::check_images(rank, &inverse_images)?;
        let map = FreeMap {
            rank,
            images,
            inverse_images: Some(inverse_images),
        };
        map.certify()?;
        Ok(map)
    }

    pub fn identity(rank: usize) -> Result<FreeMap, FreeMapError> {
        let images: Vec<Word> = (0..rank).map(Word::generator).collect();
        FreeMap::with_inverse(rank, images.clone(), images)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn images(&self) -> &[Word] {
        &self.images
    }

    pub fn inverse_images(&self) -> Option<&[Word]> {
        self.inverse_images.as_deref()
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse_images.is_some()
    }

    /// Checks the automorphism certificate.
    pub fn certify(&self) -> Result<(), FreeMapError> {
        let inv = self
            .inverse_images
            .as_ref()
            .ok_or(FreeMapError::NoInverse)?;
        for i in 0..self.rank {
            let gen = Word::generator(i);
            let a = self.apply_images(&inv[i], &self.images);
            let b = self.apply_images(&self.images[i], inv);
            if a != gen || b != gen {
                return Err(FreeMapError::NotInverse(i));
            }
        }
        Ok(())
    }

    fn apply_images(&self, w: &Word, images: &[Word]) -> Word {
        let mut buf: Vec<Letter> = Vec::with_capacity(w.len());
        for &l in w.letters() {
            let image = &images[l.index()];
            if l.is_positive() {
                for &m in image.letters() {
                    push_reduced(&mut buf, m);
                }
            } else {
                for &m in image.letters().iter().rev() {
                    push_reduced(&mut buf, m.inverse());
                }
            }
        }
        Word { letters: buf }
    }

    /// Reduced image of `w` under the map.
    pub fn apply(&self, w: &Word) -> Result<Word, FreeMapError> {
        if let Some(index) = w.max_index() {
            if index >= self.rank {
                return Err(FreeMapError::WordOutOfRank {
                    index,
                    rank: self.rank,
                });
            }
        }
        Ok(self.apply_images(w, &self.images))
    }

    pub fn apply_inverse(&self, w: &Word) -> Result<Word, FreeMapError> {
        let inv = self
            .inverse_images
            .as_ref()
            .ok_or(FreeMapError::NoInverse)?;
        if let Some(index) = w.max_index() {
            if index >= self.rank {
                return Err(FreeMapError::WordOutOfRank {
                    index,
                    rank: self.rank,
                });
            }
        }
        Ok(self.apply_images(w, inv))
    }

    /// The inverse automorphism, when certified.
    pub fn inverse_map(&self) -> Option<FreeMap> {
        let inv = self.inverse_images.clone()?;
        Some(FreeMap {
            rank: self.rank,
            images: inv,
            inverse_images: Some(self.images.clone()),
        })
    }

    /// Composition `self ∘ inner`.
    pub fn compose(&self, inner: &FreeMap) -> Result<FreeMap, FreeMapError> {
        if self.rank != inner.rank {
            return Err(FreeMapError::ImageCount {
                expected: self.rank,
                got: inner.rank,
            });
        }
        let images: Result<Vec<Word>, _> = inner.images.iter().map(|w| self.apply(w)).collect();
        let images = images?;
        let inverse_images = match (&self.inverse_images, &inner.inverse_images) {
            (Some(_), Some(inner_inv)) => {
                // (self ∘ inner)⁻¹ = inner⁻¹ ∘ self⁻¹
                let self_inv = self.inverse_images.as_ref().unwrap();
                let inner_map = FreeMap {
                    rank: self.rank,
                    images: inner_inv.clone(),
                    inverse_images: None,
                };
                let composed: Result<Vec<Word>, _> =
                    self_inv.iter().map(|w| inner_map.apply(w)).collect();
                Some(composed?)
            }
            _ => None,
        };
        Ok(FreeMap {
            rank: self.rank,
            images,
            inverse_images,
        })
    }

    /// The `n`-th compositional power (certified when `self` is).
    pub fn power(&self, n: u32) -> Result<FreeMap, FreeMapError> {
        let mut out = match self.inverse_images {
            Some(_) => FreeMap::identity(self.rank)?,
            None => FreeMap::new(self.rank, (0..self.rank).map(Word::generator).collect())?,
        };
        for _ in 0..n {
            out = self.compose(&out)?;
        }
        Ok(out)
    }

    /// Streams `[[Φⁿ(g)]]` for `n_lo ≤ n ≤ n_hi`, each step applying the map
    /// to the previous reduced word. A direction stops early once the word
    /// exceeds `letter_cap`; truncation is reported, not an error.
    pub fn orbit(
        &self,
        g: &Word,
        n_lo: i64,
        n_hi: i64,
        letter_cap: usize,
    ) -> Result<OrbitResult, FreeMapError> {
        assert!(n_lo <= 0 && 0 <= n_hi, "orbit range must contain 0");
        if n_lo < 0 && self.inverse_images.is_none() {
            return Err(FreeMapError::NoInverse);
        }
        let mut samples = Vec::new();
        let mut truncated_forward = None;
        let mut truncated_backward = None;

        let mut w = g.clone();
        samples.push(OrbitSample {
            n: 0,
            cyclic: cyclic_reduce(&w),
            word: w.clone(),
        });
        for n in 1..=n_hi {
            w = self.apply(&w)?;
            if w.len() > letter_cap {
                truncated_forward = Some(n);
                break;
            }
            samples.push(OrbitSample {
                n,
                cyclic: cyclic_reduce(&w),
                word: w.clone(),
            });
        }
        let mut w = g.clone();
        for n in 1..=(-n_lo) {
            w = self.apply_inverse(&w)?;
            if w.len() > letter_cap {
                truncated_backward = Some(-n);
                break;
            }
            samples.push(OrbitSample {
                n: -n,
                cyclic: cyclic_reduce(&w),
                word: w.clone(),
            });
        }
        samples.sort_by_key(|s| s.n);
        Ok(OrbitResult {
            samples,
            truncated_forward,
            truncated_backward,
        })
    }

    /// Automorphism file: `rank N`, `image <gen> <word>` lines and optional
    /// `inverse <gen> <word>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<FreeMap, FreeMapError> {
        let mut rank: Option<usize> = None;
        let mut images: Vec<Option<Word>> = Vec::new();
        let mut inverses: Vec<Option<Word>> = Vec::new();
        let mut saw_inverse = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let keyword = parts.next().unwrap();
            let err = |msg: String| FreeMapError::Parse(format!("line {}: {msg}", lineno + 1));
            match keyword {
                "rank" => {
                    let n: usize = parts
                        .next()
                        .ok_or_else(|| err("missing rank value".into()))?
                        .parse()
                        .map_err(|_| err("bad rank value".into()))?;
                    rank = Some(n);
                    images = vec![None; n];
                    inverses = vec![None; n];
                }
                "image" | "inverse" => {
                    let n = rank.ok_or_else(|| err("rank must come first".into()))?;
                    let gen_tok = parts
                        .next()
                        .ok_or_else(|| err("missing generator".into()))?
                        .trim_end_matches(':');
                    let gen = Word::parse(gen_tok).map_err(|e| err(e.to_string()))?;
                    let [l] = gen.letters() else {
                        return Err(err(format!("bad generator {gen_tok:?}")));
                    };
                    if !l.is_positive() || l.index() >= n {
                        return Err(err(format!("bad generator {gen_tok:?}")));
                    }
                    let rest: Vec<&str> = parts.collect();
                    let word = Word::parse(&rest.join(" ")).map_err(|e| err(e.to_string()))?;
                    if keyword == "image" {
                        images[l.index()] = Some(word);
                    } else {
                        inverses[l.index()] = Some(word);
                        saw_inverse = true;
                    }
                }
                other => {
                    return Err(err(format!("unknown keyword {other:?}")));
                }
            }
        }
        let rank = rank.ok_or_else(|| FreeMapError::Parse("missing rank line".into()))?;
        let images: Result<Vec<Word>, _> = images
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                w.ok_or(FreeMapError::Parse(format!(
                    "missing image for generator {i}"
                )))
            })
            .collect();
        let images = images?;
        if saw_inverse {
            let inverses: Result<Vec<Word>, _> = inverses
                .into_iter()
                .enumerate()
                .map(|(i, w)| {
                    w.ok_or(FreeMapError::Parse(format!(
                        "missing inverse image for generator {i}"
                    )))
                })
                .collect();
            FreeMap::with_inverse(rank, images, inverses?)
        } else {
            FreeMap::new(rank, images)
        }
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("rank {}\n", self.rank);
        for (i, w) in self.images.iter().enumerate() {
            out.push_str(&format!("image {} {}\n", Letter::new(i, true), w));
        }
        if let Some(inv) = &self.inverse_images {
            for (i, w) in inv.iter().enumerate() {
                out.push_str(&format!("inverse {} {}\n", Letter::new(i, true), w));
            }
        }
        out
    }
}

/// One orbit entry: the reduced word `Φⁿ(g)` and its conjugacy class.
#[derive(Clone, Debug)]
pub struct OrbitSample {
    pub n: i64,
    pub word: Word,
    pub cyclic: CyclicWord,
}

/// Orbit over a finite horizon, with truncation notices per direction.
#[derive(Clone, Debug)]
pub struct OrbitResult {
    pub samples: Vec<OrbitSample>,
    pub truncated_forward: Option<i64>,
    pub truncated_backward: Option<i64>,
}

impl OrbitResult {
    pub fn truncated(&self) -> bool {
        self.truncated_forward.is_some() || self.truncated_backward.is_some()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BasisError {
    #[error("operation requires rank 2, word uses generator index {0}")]
    NotRankTwo(usize),
    #[error("exponent k must be >= 1")]
    BadExponent,
    #[error("no generator occurs exactly once; this sufficient condition gives no certificate")]
    NoSingleOccurrence,
}

/// Rewrites a rank-2 cyclic word into the basis `{a, b' = b a^k}` by the
/// substitution `b -> b' a^-k`. Generator index 1 of the output is `b'`.
pub fn to_basis_a_bak(w: &CyclicWord, k: u32) -> Result<CyclicWord, BasisError> {
    if k == 0 {
        return Err(BasisError::BadExponent);
    }
    if let Some(index) = w.max_index() {
        if index > 1 {
            return Err(BasisError::NotRankTwo(index));
        }
    }
    let mut buf = Vec::new();
    for &l in w.letters() {
        match (l.index(), l.is_positive()) {
            (0, _) => push_reduced(&mut buf, l),
            (1, true) => {
                push_reduced(&mut buf, Letter::new(1, true));
                for _ in 0..k {
                    push_reduced(&mut buf, Letter::new(0, false));
                }
            }
            (1, false) => {
                for _ in 0..k {
                    push_reduced(&mut buf, Letter::new(0, true));
                }
                push_reduced(&mut buf, Letter::new(1, false));
            }
            _ => unreachable!(),
        }
    }
    Ok(CyclicWord::from_word(&Word { letters: buf }))
}

/// Inverse rewriting: substitutes `b' -> b a^k` and cyclically reduces.
pub fn from_basis_a_bak(w: &CyclicWord, k: u32) -> CyclicWord {
    let mut buf = Vec::new();
    for &l in w.letters() {
        match (l.index(), l.is_positive()) {
            (0, _) => push_reduced(&mut buf, l),
            (1, true) => {
                push_reduced(&mut buf, Letter::new(1, true));
                for _ in 0..k {
                    push_reduced(&mut buf, Letter::new(0, true));
                }
            }
            (1, false) => {
                for _ in 0..k {
                    push_reduced(&mut buf, Letter::new(0, false));
                }
                push_reduced(&mut buf, Letter::new(1, false));
            }
            _ => unreachable!(),
        }
    }
    CyclicWord::from_word(&Word { letters: buf })
}

/// A primitivity certificate: a certified automorphism carrying the standard
/// basis to a basis containing the word (as the image of `generator`).
#[derive(Clone, Debug)]
pub struct PrimitivityCertificate {
    pub generator: usize,
    pub automorphism: FreeMap,
}

/// Extends a word with a single occurrence of some generator to a free basis,
/// reading transvections off the prefix and suffix around that occurrence.
pub fn extend_to_basis(w: &Word, rank: usize) -> Result<PrimitivityCertificate, BasisError> {
    // Prefer the highest qualifying generator index.
    let gen = (0..rank)
        .rev()
        .find(|&j| w.occurrences(j) == 1)
        .ok_or(BasisError::NoSingleOccurrence)?;
    let pos = w
        .letters()
        .iter()
        .position(|l| l.index() == gen)
        .expect("occurrence located");
    let positive = w.letters()[pos].is_positive();
    let alpha = Word {
        letters: w.letters()[..pos].to_vec(),
    };
    let beta = Word {
        letters: w.letters()[pos + 1..].to_vec(),
    };

    let mut images: Vec<Word> = (0..rank).map(Word::generator).collect();
    let mut inverses = images.clone();
    images[gen] = w.clone();
    // Solve phi(x) = gen-letter for x.
    let core = alpha
        .inverse()
        .concat(&Word {
            letters: vec![Letter::new(gen, true)],
        })
        .concat(&beta.inverse());
    inverses[gen] = if positive { core } else { core.inverse() };
    let automorphism = FreeMap::with_inverse(rank, images, inverses)
        .expect("transvection composition is an automorphism");
    Ok(PrimitivityCertificate {
        generator: gen,
        automorphism,
    })
}
