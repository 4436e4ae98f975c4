//! Tight graph self-maps with filtrations: turn legality, train-track and
//! relative-train-track verification, transition matrices with exact PF
//! classification, memoized reduced iteration, and power-bound diagnostics.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Mutex;

use num::BigUint;
use thiserror::Error;

use crate::freegroup::FreeMap;
use crate::graph::{
    edge_token, inv, parse_edge_token, positive_index, CyclicPath, EdgeId, Graph, Path, Subgraph,
    VertexId,
};

/// Per-entry cap for the iterate memo table (letters).
pub const MEMO_LETTER_CAP: usize = 1_000_000;
/// Default length cap for reduced iterates.
pub const ITERATE_LETTER_CAP: usize = 10_000_000;
/// Default iteration depth for the no-cancellation cross-check.
pub const CHECK_DEPTH: u32 = 8;
/// Length cap for enumerated test paths in the relative checks.
const TEST_PATH_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrainMapError {
    #[error("expected {expected} edge images, got {got}")]
    ImageCount { expected: usize, got: usize },
    #[error("image of edge {0} is degenerate")]
    DegenerateImage(usize),
    #[error("image of edge {0} is not reduced")]
    UnreducedImage(usize),
    #[error("vertex map inconsistent at vertex {0}")]
    VertexMap(VertexId),
    #[error("filtration level {0} is not invariant: image of edge {1} leaves it")]
    NotInvariant(usize, usize),
    #[error("filtration is not strictly ascending at level {0}")]
    NotAscending(usize),
    #[error("filtration does not end at the full graph")]
    NotExhaustive,
    #[error("iterate exceeded the letter cap at step {step} (length {len})")]
    Truncated { step: u32, len: usize },
    #[error("transition matrix is reducible but nonzero")]
    Reducible,
    #[error("top stratum is not exponentially growing")]
    TopNotEg,
    #[error("graph error: {0}")]
    Graph(#[from] crate::graph::GraphError),
    #[error("malformed map file: {0}")]
    Parse(String),
}

/// An unordered pair of directed edges with a common origin.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Turn(pub EdgeId, pub EdgeId);

impl Turn {
    pub fn new(a: EdgeId, b: EdgeId) -> Turn {
        if a <= b {
            Turn(a, b)
        } else {
            Turn(b, a)
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.0 == self.1
    }
}

impl fmt::Debug for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}}}", edge_token(self.0), edge_token(self.1))
    }
}

/// Legality verdict with the witnessing orbit when illegal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Legality {
    Legal,
    /// `Tf` orbit from the queried turn down to the first degenerate turn.
    Illegal {
        orbit: Vec<Turn>,
    },
}

impl Legality {
    pub fn is_legal(&self) -> bool {
        matches!(self, Legality::Legal)
    }
}

/// A topological representative: a tight self-map of a graph together with an
/// ascending invariant filtration.
pub struct TopRep {
    graph: Graph,
    /// reduced image per positive edge
    images: Vec<Path>,
    vertex_image: Vec<VertexId>,
    /// ascending; last level is the whole graph
    filtration: Vec<Subgraph>,
    /// memoized [f^n(e)] per directed edge, entries capped at MEMO_LETTER_CAP
    memo: Mutex<HashMap<(EdgeId, u32), Vec<EdgeId>>>,
}

impl Clone for TopRep {
    fn clone(&self) -> TopRep {
        TopRep {
            graph: self.graph.clone(),
            images: self.images.clone(),
            vertex_image: self.vertex_image.clone(),
            filtration: self.filtration.clone(),
            memo: Mutex::new(HashMap::new()),
        }
    }
}

impl fmt::Debug for TopRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TopRep({:?}, {} strata)",
            self.graph,
            self.filtration.len()
        )
    }
}

impl TopRep {
    /// Builds and validates a tight map; `filtration` levels are positive
    /// edge sets, ascending, or empty for the trivial filtration.
    pub fn new(
        graph: Graph,
        images: Vec<Path>,
        filtration: Vec<Vec<usize>>,
    ) -> Result<TopRep, TrainMapError> {
        if images.len() != graph.n_edges() {
            return Err(TrainMapError::ImageCount {
                expected: graph.n_edges(),
                got: images.len(),
            });
        }
        for (k, p) in images.iter().enumerate() {
            if p.is_empty() {
                return Err(TrainMapError::DegenerateImage(k));
            }
            if !p.is_reduced() {
                return Err(TrainMapError::UnreducedImage(k));
            }
        }
        // derive the vertex map and check consistency over every star
        let mut vertex_image = vec![usize::MAX; graph.n_vertices()];
        for k in 0..graph.n_edges() {
            let pairs = [
                (graph.o(2 * k), images[k].o()),
                (graph.t(2 * k), images[k].t(&graph)),
            ];
            for (v, fv) in pairs {
                if vertex_image[v] == usize::MAX {
                    vertex_image[v] = fv;
                } else if vertex_image[v] != fv {
                    return Err(TrainMapError::VertexMap(v));
                }
            }
        }

        let filtration = if filtration.is_empty() {
            vec![(0..graph.n_edges()).collect::<Vec<_>>()]
        } else {
            filtration
        };
        let mut levels = Vec::new();
        let mut prev: HashSet<usize> = HashSet::new();
        for (i, level) in filtration.iter().enumerate() {
            let cur: HashSet<usize> = level.iter().copied().collect();
            if !prev.is_subset(&cur) || cur.len() <= prev.len() {
                return Err(TrainMapError::NotAscending(i));
            }
            for &k in level {
                for &e in images[k].edges() {
                    if !cur.contains(&positive_index(e)) {
                        return Err(TrainMapError::NotInvariant(i, k));
                    }
                }
            }
            levels.push(Subgraph::new(&graph, level)?);
            prev = cur;
        }
        if prev.len() != graph.n_edges() {
            return Err(TrainMapError::NotExhaustive);
        }

        Ok(TopRep {
            graph,
            images,
            vertex_image,
            filtration: levels,
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// The rose representative of an automorphism: petal i maps to the edge
    /// path spelled by the image word, with the finest invariant filtration.
    pub fn rose_representative(phi: &FreeMap) -> Result<TopRep, TrainMapError> {
        let graph = Graph::rose(phi.rank());
        let images: Vec<Path> = phi
            .images()
            .iter()
            .map(|w| {
                let edges: Vec<EdgeId> = w
                    .letters()
                    .iter()
                    .map(|l| 2 * l.index() + usize::from(!l.is_positive()))
                    .collect();
                Path::new(&graph, 0, edges).expect("rose paths always chain")
            })
            .collect();
        let filtration = stratify_images(&images, phi.rank());
        TopRep::new(graph, images, filtration)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn images(&self) -> &[Path] {
        &self.images
    }

    pub fn vertex_image(&self, v: VertexId) -> VertexId {
        self.vertex_image[v]
    }

    pub fn filtration(&self) -> &[Subgraph] {
        &self.filtration
    }

    pub fn n_strata(&self) -> usize {
        self.filtration.len()
    }

    /// Positive edges of the i-th stratum H_i = G_i \ G_{i-1} (0-based).
    pub fn stratum_edges(&self, i: usize) -> Vec<usize> {
        let cur = self.filtration[i].positive_edges();
        if i == 0 {
            return cur;
        }
        let below = &self.filtration[i - 1];
        cur.into_iter()
            .filter(|&k| !below.contains(2 * k))
            .collect()
    }

    /// Vertices of the stratum (origins of its directed edges).
    fn stratum_vertices(&self, i: usize) -> HashSet<VertexId> {
        let mut out = HashSet::new();
        for k in self.stratum_edges(i) {
            out.insert(self.graph.o(2 * k));
            out.insert(self.graph.t(2 * k));
        }
        out
    }

    /// Reduced image of a directed edge.
    pub fn image_of(&self, e: EdgeId) -> Path {
        let k = positive_index(e);
        if e % 2 == 0 {
            self.images[k].clone()
        } else {
            self.images[k].inverse(&self.graph)
        }
    }

    /// The initial-edge derivative `Df`.
    pub fn df(&self, e: EdgeId) -> EdgeId {
        let k = positive_index(e);
        if e % 2 == 0 {
            self.images[k].edges()[0]
        } else {
            inv(*self.images[k].edges().last().unwrap())
        }
    }

    /// Legality of a turn by finite orbit detection under `Tf`.
    pub fn turn_legality(&self, turn: Turn) -> Legality {
        let mut orbit = vec![turn];
        let mut seen: HashSet<Turn> = HashSet::from([turn]);
        let mut cur = turn;
        loop {
            if cur.is_degenerate() {
                return Legality::Illegal { orbit };
            }
            let next = Turn::new(self.df(cur.0), self.df(cur.1));
            if next.is_degenerate() {
                orbit.push(next);
                return Legality::Illegal { orbit };
            }
            if !seen.insert(next) {
                return Legality::Legal;
            }
            orbit.push(next);
            cur = next;
        }
    }

    /// Interior turns of a path: `{ē_i, e_{i+1}}` at each junction.
    fn path_turns(p: &Path) -> Vec<Turn> {
        p.edges()
            .windows(2)
            .map(|w| Turn::new(inv(w[0]), w[1]))
            .collect()
    }

    /// Whether every interior turn of `p` is legal.
    pub fn path_is_legal(&self, p: &Path) -> bool {
        Self::path_turns(p)
            .into_iter()
            .all(|t| self.turn_legality(t).is_legal())
    }

    /// Whether `p`'s illegal turns all lie in `G_{i-1}` (i-legality).
    pub fn path_is_i_legal(&self, p: &Path, i: usize) -> bool {
        let below = if i == 0 {
            None
        } else {
            Some(&self.filtration[i - 1])
        };
        Self::path_turns(p).into_iter().all(|t| {
            self.turn_legality(t).is_legal()
                || below.is_some_and(|b| b.contains(t.0) && b.contains(t.1))
        })
    }

    /// Applies the map once to a path, reducing as it goes.
    pub fn apply(&self, p: &Path) -> Path {
        let mut edges: Vec<EdgeId> = Vec::new();
        for &e in p.edges() {
            for &d in self.image_of(e).edges() {
                if edges.last() == Some(&inv(d)) {
                    edges.pop();
                } else {
                    edges.push(d);
                }
            }
        }
        let base = edges
            .first()
            .map_or(self.vertex_image[p.o()], |&e| self.graph.o(e));
        Path::new(&self.graph, base, edges).expect("image of a chained path chains")
    }

    /// `[f^n(e)]` for a directed edge, memoized.
    fn edge_iterate(&self, e: EdgeId, n: u32, cap: usize) -> Result<Vec<EdgeId>, TrainMapError> {
        if n == 0 {
            return Ok(vec![e]);
        }
        if let Some(hit) = self.memo.lock().unwrap().get(&(e, n)) {
            return Ok(hit.clone());
        }
        let prev = self.edge_iterate(e, n - 1, cap)?;
        let mut edges: Vec<EdgeId> = Vec::new();
        for &d in &prev {
            for &x in self.image_of(d).edges() {
                if edges.last() == Some(&inv(x)) {
                    edges.pop();
                } else {
                    edges.push(x);
                }
            }
            if edges.len() > cap {
                return Err(TrainMapError::Truncated {
                    step: n,
                    len: edges.len(),
                });
            }
        }
        if edges.len() <= MEMO_LETTER_CAP {
            self.memo.lock().unwrap().insert((e, n), edges.clone());
        }
        Ok(edges)
    }

    /// `[f^n(p)]`, assembled from memoized per-edge iterates.
    pub fn iterate_reduced(&self, p: &Path, n: u32, cap: usize) -> Result<Path, TrainMapError> {
        let mut edges: Vec<EdgeId> = Vec::new();
        for &e in p.edges() {
            for &x in self.edge_iterate(e, n, cap)?.iter() {
                if edges.last() == Some(&inv(x)) {
                    edges.pop();
                } else {
                    edges.push(x);
                }
            }
            if edges.len() > cap {
                return Err(TrainMapError::Truncated {
                    step: n,
                    len: edges.len(),
                });
            }
        }
        let mut base = p.o();
        for _ in 0..n {
            base = self.vertex_image[base];
        }
        let base = edges.first().map_or(base, |&e| self.graph.o(e));
        Ok(Path::new(&self.graph, base, edges).expect("iterate chains"))
    }

    /// `[[f^n(p)]]` for a closed path.
    pub fn iterate_cyclic(
        &self,
        p: &CyclicPath,
        n: u32,
        cap: usize,
    ) -> Result<CyclicPath, TrainMapError> {
        let linear = p.to_path(&self.graph);
        let image = self.iterate_reduced(&linear, n, cap)?;
        Ok(CyclicPath::from_path(&self.graph, &image)?)
    }

    /// Transition matrix of stratum `i`: entry (r, c) counts occurrences of
    /// stratum edge r (either direction) in the image of stratum edge c.
    pub fn transition_matrix(&self, i: usize) -> TransitionMatrix {
        let edges = self.stratum_edges(i);
        let n = edges.len();
        let mut entries = vec![vec![0u64; n]; n];
        for (c, &kc) in edges.iter().enumerate() {
            for (r, &kr) in edges.iter().enumerate() {
                entries[r][c] = self.images[kc].crossings(kr) as u64;
            }
        }
        TransitionMatrix { edges, entries }
    }

    /// Unreduced length of `f^n(e)` per positive edge (matrix power on the
    /// full transition matrix), used for the no-cancellation cross-check.
    fn unreduced_lengths(&self, n: u32) -> Vec<BigUint> {
        let m = self.graph.n_edges();
        let mut lens: Vec<BigUint> = (0..m).map(|_| BigUint::from(1u32)).collect();
        for _ in 0..n {
            let next: Vec<BigUint> = (0..m)
                .map(|k| {
                    self.images[k]
                        .edges()
                        .iter()
                        .map(|&e| lens[positive_index(e)].clone())
                        .sum()
                })
                .collect();
            lens = next;
        }
        lens
    }
}

/// Finest invariant filtration of rose edge images: SCC condensation of the
/// edge-occurrence digraph, accumulated in dependency order.
fn stratify_images(images: &[Path], n: usize) -> Vec<Vec<usize>> {
    // j -> i when edge i occurs in the image of edge j
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            let mut out: Vec<usize> = images[j]
                .edges()
                .iter()
                .map(|&e| positive_index(e))
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    let sccs = strongly_connected_components(&adj);
    // order SCCs so every dependency (out-edge target) appears earlier
    let mut comp_of = vec![0usize; n];
    for (ci, comp) in sccs.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    let mut placed = vec![false; sccs.len()];
    let mut order: Vec<usize> = Vec::new();
    while order.len() < sccs.len() {
        for ci in 0..sccs.len() {
            if placed[ci] {
                continue;
            }
            let ready = sccs[ci].iter().all(|&v| {
                adj[v]
                    .iter()
                    .all(|&w| comp_of[w] == ci || placed[comp_of[w]])
            });
            if ready {
                placed[ci] = true;
                order.push(ci);
            }
        }
    }
    let mut acc: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for ci in order {
        acc.extend(sccs[ci].iter().copied());
        let mut level = acc.clone();
        level.sort_unstable();
        out.push(level);
    }
    out
}

/// Tarjan-style SCCs via iterative Kosaraju (two DFS passes).
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        // iterative post-order
        let mut stack = vec![(s, 0usize)];
        seen[s] = true;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < adj[v].len() {
                let w = adj[v][*i];
                *i += 1;
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }
    let mut radj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, outs) in adj.iter().enumerate() {
        for &w in outs {
            radj[w].push(v);
        }
    }
    let mut comp = Vec::new();
    let mut seen = vec![false; n];
    for &s in order.iter().rev() {
        if seen[s] {
            continue;
        }
        let mut cur = vec![];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(v) = queue.pop_front() {
            cur.push(v);
            for &w in &radj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        cur.sort_unstable();
        comp.push(cur);
    }
    comp
}

/// A stratum transition matrix: occurrence counts over its positive edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    /// positive edge index per row/column
    pub edges: Vec<usize>,
    pub entries: Vec<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn size(&self) -> usize {
        self.edges.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|&x| x == 0)
    }

    fn big(&self) -> Vec<Vec<BigUint>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|&x| BigUint::from(x)).collect())
            .collect()
    }

    /// Whether the occurrence digraph is strongly connected (nonzero matrix).
    pub fn is_irreducible(&self) -> bool {
        let n = self.size();
        if n == 0 || self.is_zero() {
            return false;
        }
        // reachability both ways from vertex 0 in the support digraph
        let reach = |transpose: bool| {
            let mut seen = vec![false; n];
            seen[0] = true;
            let mut queue = VecDeque::from([0usize]);
            while let Some(v) = queue.pop_front() {
                for w in 0..n {
                    let hit = if transpose {
                        self.entries[v][w] > 0
                    } else {
                        self.entries[w][v] > 0
                    };
                    if hit && !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(false) && reach(true)
    }

    /// An invariant proper edge subset witnessing reducibility, if any.
    pub fn reducibility_witness(&self) -> Option<Vec<usize>> {
        let n = self.size();
        if n == 0 || self.is_irreducible() {
            return None;
        }
        // closure of each singleton under "occurs in image of"
        for s in 0..n {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for w in 0..n {
                    if self.entries[w][v] > 0 && !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            if seen.iter().filter(|&&x| x).count() < n {
                return Some((0..n).filter(|&i| seen[i]).map(|i| self.edges[i]).collect());
            }
        }
        None
    }
}

fn mat_mul(a: &[Vec<BigUint>], b: &[Vec<BigUint>]) -> Vec<Vec<BigUint>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| &a[i][k] * &b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// PF classification with exact integer certificates.
#[derive(Clone, Debug, PartialEq)]
pub enum PfClass {
    Zero,
    /// λ = 1: the matrix is a permutation matrix on its support
    Neg,
    /// λ > 1 with the float value and the exact certificate exponent k such
    /// that every row of M^k sums to at least 2
    Eg {
        lambda: f64,
        cert_power: u32,
    },
}

impl PfClass {
    pub fn lambda(&self) -> f64 {
        match self {
            PfClass::Zero => 0.0,
            PfClass::Neg => 1.0,
            PfClass::Eg { lambda, .. } => *lambda,
        }
    }
}

/// Classifies an irreducible (or zero) transition matrix.
///
/// λ = 1 exactly when an irreducible non-negative integer matrix is a
/// permutation matrix; otherwise some power has every row sum ≥ 2, which
/// forces λ > 1. The float λ comes from power iteration with
/// Collatz–Wielandt bracketing on M + I (tolerance 1e-9).
pub fn pf_classify(m: &TransitionMatrix) -> Result<PfClass, TrainMapError> {
    if m.size() == 0 || m.is_zero() {
        return Ok(PfClass::Zero);
    }
    if !m.is_irreducible() {
        return Err(TrainMapError::Reducible);
    }
    let n = m.size();
    let is_permutation = (0..n).all(|i| {
        m.entries[i].iter().sum::<u64>() == 1 && (0..n).map(|r| m.entries[r][i]).sum::<u64>() == 1
    });
    if is_permutation {
        return Ok(PfClass::Neg);
    }
    // exact λ > 1 certificate: some power with all row sums ≥ 2
    let base = m.big();
    let mut pow = base.clone();
    let mut cert_power = None;
    let two = BigUint::from(2u32);
    for k in 1..=((n as u32) * (n as u32) + 2) {
        if pow.iter().all(|row| row.iter().sum::<BigUint>() >= two) {
            cert_power = Some(k);
            break;
        }
        pow = mat_mul(&pow, &base);
    }
    let cert_power = cert_power.ok_or(TrainMapError::Reducible)?;

    // power iteration on A = M + I (primitive since M is irreducible)
    let mut v = vec![1.0f64; n];
    let mut lambda = 1.0;
    for _ in 0..100_000 {
        let mut next = vec![0.0f64; n];
        for i in 0..n {
            next[i] = v[i];
            for j in 0..n {
                next[i] += m.entries[i][j] as f64 * v[j];
            }
        }
        // Collatz-Wielandt bracket: min and max of next_i / v_i
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            let r = next[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm: f64 = next.iter().sum();
        for x in next.iter_mut() {
            *x /= norm;
        }
        v = next;
        lambda = (lo + hi) / 2.0 - 1.0;
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(PfClass::Eg { lambda, cert_power })
}

/// Train-track verification report.
#[derive(Clone, Debug)]
pub struct TtReport {
    /// interior turns of edge images that are illegal, with orbits
    pub illegal_turns: Vec<(usize, Legality)>,
    /// first cancellation found in an iterate: (edge, step, position)
    pub cancellation: Option<CancellationWitness>,
    pub check_depth: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CancellationWitness {
    /// positive edge whose iterate cancels
    pub edge: usize,
    /// first step n at which [f^n(e)] ≠ f^n(e)
    pub step: u32,
    /// the cancelling adjacent pair in the unreduced f^n(e)
    pub pair: (EdgeId, EdgeId),
}

impl TtReport {
    pub fn is_train_track(&self) -> bool {
        self.illegal_turns.is_empty() && self.cancellation.is_none()
    }
}

/// Certifies the train-track property: every edge image legal, cross-checked
/// by no-cancellation of iterates up to `check_depth`.
pub fn verify_train_track(f: &TopRep, check_depth: u32) -> TtReport {
    let mut illegal_turns = Vec::new();
    for (k, p) in f.images().iter().enumerate() {
        for turn in TopRep::path_turns(p) {
            let verdict = f.turn_legality(turn);
            if !verdict.is_legal() {
                illegal_turns.push((k, verdict));
            }
        }
    }

    // Remark-style cross-check: reduced vs unreduced iterate lengths.
    let mut cancellation = None;
    'outer: for n in 1..=check_depth {
        let unred = f.unreduced_lengths(n);
        for k in 0..f.graph().n_edges() {
            let reduced = match f.edge_iterate(2 * k, n, ITERATE_LETTER_CAP) {
                Ok(p) => p,
                Err(_) => break 'outer,
            };
            if BigUint::from(reduced.len()) != unred[k] {
                // expand f(f^{n-1}(e)) and locate the cancelling pair
                let prev = f
                    .edge_iterate(2 * k, n - 1, ITERATE_LETTER_CAP)
                    .expect("previous step fit the cap");
                let mut flat: Vec<EdgeId> = Vec::new();
                let mut pair = None;
                'scan: for &e in &prev {
                    for &d in f.image_of(e).edges() {
                        if let Some(&last) = flat.last() {
                            if last == inv(d) {
                                pair = Some((last, d));
                                break 'scan;
                            }
                        }
                        flat.push(d);
                    }
                }
                cancellation = Some(CancellationWitness {
                    edge: k,
                    step: n,
                    pair: pair.expect("length mismatch implies a cancelling pair"),
                });
                break 'outer;
            }
        }
    }

    TtReport {
        illegal_turns,
        cancellation,
        check_depth,
    }
}

/// Relative train track verification report, one entry per condition.
#[derive(Clone, Debug)]
pub struct RttReport {
    /// vertices of valence < 3 (valence 1 fails; valence 2 is a warning)
    pub valence_one: Vec<VertexId>,
    /// per-stratum: nonzero matrix irreducible? witness subset when not
    pub irreducibility: Vec<(usize, Result<(), Vec<usize>>)>,
    /// condition 3(a) violations: (stratum, edge whose Df leaves the stratum)
    pub cond3a: Vec<(usize, EdgeId)>,
    /// condition 3(b) violations: (stratum, offending path)
    pub cond3b: Vec<(usize, Path)>,
    /// condition 3(c) violations: (stratum, legal path with non-i-legal image)
    pub cond3c: Vec<(usize, Path)>,
    /// splitting (Lemma-style) violations on r-legal test paths
    pub splitting: Vec<(usize, Path)>,
    pub classes: Vec<PfClass>,
}

impl RttReport {
    pub fn passes(&self) -> bool {
        self.valence_one.is_empty()
            && self.irreducibility.iter().all(|(_, r)| r.is_ok())
            && self.cond3a.is_empty()
            && self.cond3b.is_empty()
            && self.cond3c.is_empty()
            && self.splitting.is_empty()
    }
}

/// Enumerates reduced paths with edges drawn from `allowed`, length 1..=cap.
fn enumerate_paths(g: &Graph, allowed: &dyn Fn(EdgeId) -> bool, cap: usize) -> Vec<Path> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<EdgeId>> = (0..g.n_directed())
        .filter(|&e| allowed(e))
        .map(|e| vec![e])
        .collect();
    for _ in 0..cap {
        let mut next = Vec::new();
        for seq in &frontier {
            out.push(Path::new(g, g.o(seq[0]), seq.clone()).unwrap());
            let last = *seq.last().unwrap();
            for e in g.star(g.t(last)) {
                if e != inv(last) && allowed(e) {
                    let mut longer = seq.clone();
                    longer.push(e);
                    next.push(longer);
                }
            }
        }
        frontier = next;
    }
    out
}

/// Checks the relative train track conditions on the supplied filtration.
pub fn verify_rtt(f: &TopRep) -> RttReport {
    let g = f.graph();
    let valence_one: Vec<VertexId> = (0..g.n_vertices()).filter(|&v| g.valence(v) < 2).collect();

    let mut irreducibility = Vec::new();
    let mut classes = Vec::new();
    for i in 0..f.n_strata() {
        let m = f.transition_matrix(i);
        if m.is_zero() {
            irreducibility.push((i, Ok(())));
            classes.push(PfClass::Zero);
            continue;
        }
        match m.reducibility_witness() {
            None => {
                irreducibility.push((i, Ok(())));
                classes.push(pf_classify(&m).unwrap_or(PfClass::Neg));
            }
            Some(w) => {
                irreducibility.push((i, Err(w)));
                classes.push(PfClass::Zero);
            }
        }
    }

    let mut cond3a = Vec::new();
    let mut cond3b = Vec::new();
    let mut cond3c = Vec::new();
    let mut splitting = Vec::new();
    for i in 0..f.n_strata() {
        if !matches!(classes[i], PfClass::Eg { .. }) {
            continue;
        }
        let stratum: HashSet<usize> = f.stratum_edges(i).into_iter().collect();
        let in_stratum = |e: EdgeId| stratum.contains(&positive_index(e));
        for &k in &stratum {
            for e in [2 * k, 2 * k + 1] {
                if !in_stratum(f.df(e)) {
                    cond3a.push((i, e));
                }
            }
        }

        let h_vertices = f.stratum_vertices(i);
        if i > 0 {
            let below = f.filtration()[i - 1].clone();
            let allowed = |e: EdgeId| below.contains(e);
            for p in enumerate_paths(g, &allowed, TEST_PATH_LEN) {
                if h_vertices.contains(&p.o()) && h_vertices.contains(&p.t(g)) {
                    let image = f.apply(&p);
                    if image.is_empty() {
                        cond3b.push((i, p));
                    }
                }
            }
        }

        // 3(c): legal paths inside H_i map to i-legal paths
        let allowed = |e: EdgeId| in_stratum(e);
        for p in enumerate_paths(g, &allowed, TEST_PATH_LEN) {
            if !f.path_is_legal(&p) {
                continue;
            }
            let image = f.apply(&p);
            if !f.path_is_i_legal(&image, i) {
                cond3c.push((i, p.clone()));
            }
        }

        // splitting check on i-legal paths in G_i
        let gi = f.filtration()[i].clone();
        let allowed = |e: EdgeId| gi.contains(e);
        for p in enumerate_paths(g, &allowed, TEST_PATH_LEN) {
            if !f.path_is_i_legal(&p, i) {
                continue;
            }
            if !splitting_holds(f, &p, i) {
                splitting.push((i, p));
            }
        }
    }

    RttReport {
        valence_one,
        irreducibility,
        cond3a,
        cond3b,
        cond3c,
        splitting,
        classes,
    }
}

/// Verifies the splitting identity [f(σ)] = f(a₁)[f(b₁)]f(a₂)⋯ for an r-legal
/// path: the concatenation of unreduced stratum pieces and reduced lower
/// pieces must be letter-for-letter the reduced image.
fn splitting_holds(f: &TopRep, p: &Path, r: usize) -> bool {
    let stratum: HashSet<usize> = f.stratum_edges(r).into_iter().collect();
    let mut assembled: Vec<EdgeId> = Vec::new();
    let mut run: Vec<EdgeId> = Vec::new();
    let mut run_in_stratum = None;
    let flush = |run: &mut Vec<EdgeId>, in_stratum: bool, assembled: &mut Vec<EdgeId>| {
        if run.is_empty() {
            return;
        }
        let path = Path::new(f.graph(), f.graph().o(run[0]), run.clone()).unwrap();
        let image = f.apply(&path);
        if in_stratum {
            // f(a_i) must already be reduced (unreduced == reduced for legal
            // stratum pieces); apply reduces, which is the same thing here
            assembled.extend_from_slice(image.edges());
        } else {
            assembled.extend_from_slice(image.edges());
        }
        run.clear();
    };
    for &e in p.edges() {
        let here = stratum.contains(&positive_index(e));
        if run_in_stratum != Some(here) {
            if let Some(prev) = run_in_stratum {
                flush(&mut run, prev, &mut assembled);
            }
            run_in_stratum = Some(here);
        }
        run.push(e);
    }
    if let Some(prev) = run_in_stratum {
        flush(&mut run, prev, &mut assembled);
    }
    let reduced = f.apply(p);
    assembled == reduced.edges()
}

/// Good-relative-train-track report (aperiodicity, zero-not-top, NEG form).
#[derive(Clone, Debug)]
pub struct GoodRttReport {
    /// per EG stratum: Ok(k) with M^k ≫ 0, or Err(()) when periodic
    pub aperiodicity: Vec<(usize, Result<u32, ()>)>,
    /// zero strata occupying the top level
    pub zero_top: Vec<usize>,
    /// per NEG stratum: Ok((edge, u)) confirming f(e₀) = e₀u with u closed in
    /// the lower level at a fixed basepoint, or Err(reason)
    pub neg_form: Vec<(usize, Result<(usize, Path), String>)>,
}

impl GoodRttReport {
    pub fn passes(&self) -> bool {
        self.aperiodicity.iter().all(|(_, r)| r.is_ok())
            && self.zero_top.is_empty()
            && self.neg_form.iter().all(|(_, r)| r.is_ok())
    }
}

pub fn verify_good_rtt(f: &TopRep) -> GoodRttReport {
    let top = f.n_strata() - 1;
    let mut aperiodicity = Vec::new();
    let mut zero_top = Vec::new();
    let mut neg_form = Vec::new();
    for i in 0..f.n_strata() {
        let m = f.transition_matrix(i);
        match pf_classify(&m) {
            Ok(PfClass::Zero) => {
                if i == top {
                    zero_top.push(i);
                }
            }
            Ok(PfClass::Eg { .. }) => {
                let n = m.size() as u32;
                let base = m.big();
                let mut pow = base.clone();
                let mut found = Err(());
                for k in 1..=(n * n + 1) {
                    if pow.iter().flatten().all(|x| *x > BigUint::ZERO) {
                        found = Ok(k);
                        break;
                    }
                    pow = mat_mul(&pow, &base);
                }
                aperiodicity.push((i, found));
            }
            Ok(PfClass::Neg) | Err(_) => {
                let edges = f.stratum_edges(i);
                let verdict = if edges.len() != 1 {
                    Err(format!("NEG stratum has {} edges, want 1", edges.len()))
                } else {
                    let e0 = edges[0];
                    let image = &f.images()[e0];
                    if image.edges().first() != Some(&(2 * e0)) {
                        Err("image does not start with the stratum edge".into())
                    } else {
                        let u =
                            Path::new(f.graph(), f.graph().t(2 * e0), image.edges()[1..].to_vec())
                                .unwrap();
                        let below_ok = i == 0 && u.is_empty()
                            || i > 0
                                && u.edges().iter().all(|&e| f.filtration()[i - 1].contains(e));
                        let basepoint = f.graph().t(2 * e0);
                        if !u.is_empty() && !below_ok {
                            Err("u leaves the lower filtration level".into())
                        } else if !u.is_empty() && !u.is_closed(f.graph()) {
                            Err("u is not closed".into())
                        } else if f.vertex_image(basepoint) != basepoint {
                            Err("basepoint is not fixed".into())
                        } else {
                            Ok((e0, u))
                        }
                    }
                };
                neg_form.push((i, verdict));
            }
        }
    }
    GoodRttReport {
        aperiodicity,
        zero_top,
        neg_form,
    }
}

/// `L = 2K`, `K` = max top-stratum letter count over top-stratum edge images.
pub fn lemma_l_constant(f: &TopRep) -> Result<usize, TrainMapError> {
    let top = f.n_strata() - 1;
    let m = f.transition_matrix(top);
    if !matches!(pf_classify(&m)?, PfClass::Eg { .. }) {
        return Err(TrainMapError::TopNotEg);
    }
    let stratum: HashSet<usize> = f.stratum_edges(top).into_iter().collect();
    let k = stratum
        .iter()
        .map(|&e| {
            f.images()[e]
                .edges()
                .iter()
                .filter(|&&d| stratum.contains(&positive_index(d)))
                .count()
        })
        .max()
        .unwrap_or(0);
    Ok(2 * k)
}

/// Scan of α-power content across iterates of a source edge or loop.
#[derive(Clone, Debug)]
pub struct MaxPowerScan {
    pub max_k: usize,
    pub argmax_n: u32,
    /// max over the first 3/4 of the horizon equals the overall max
    pub stabilized: bool,
    pub per_n: Vec<usize>,
    pub truncated_at: Option<u32>,
}

/// What to iterate in `max_cyclic_power_in_iterates`.
#[derive(Clone, Debug)]
pub enum IterSource {
    Edge(EdgeId),
    Loop(CyclicPath),
}

/// Longest run of the needle sequence inside the haystack.
fn max_repeats(hay: &[EdgeId], needle: &[EdgeId]) -> usize {
    let (n, m) = (hay.len(), needle.len());
    if m == 0 || n < m {
        return 0;
    }
    let mut best = 0;
    let mut i = 0;
    while i + m <= n {
        let mut reps = 0;
        let mut j = i;
        while j + m <= n && hay[j..j + m] == needle[..] {
            reps += 1;
            j += m;
        }
        if reps > best {
            best = reps;
        }
        i += 1;
    }
    best
}

/// Max k with α^k a subpath of [f^n(source)] over 1 ≤ n ≤ horizon.
pub fn max_cyclic_power_in_iterates(
    f: &TopRep,
    alpha: &CyclicPath,
    source: &IterSource,
    horizon: u32,
    cap: usize,
) -> MaxPowerScan {
    // try every rotation of alpha as the linear needle
    let rotations: Vec<Vec<EdgeId>> = (0..alpha.len())
        .map(|r| {
            let mut v = alpha.edges().to_vec();
            v.rotate_left(r);
            v
        })
        .collect();
    let mut per_n = Vec::new();
    let mut truncated_at = None;
    for n in 1..=horizon {
        let hay: Vec<EdgeId> = match source {
            IterSource::Edge(e) => match f.edge_iterate(*e, n, cap) {
                Ok(p) => p,
                Err(_) => {
                    truncated_at = Some(n);
                    break;
                }
            },
            IterSource::Loop(l) => match f.iterate_cyclic(l, n, cap) {
                Ok(c) => {
                    // doubled scan approximates cyclic subword search
                    let mut d = c.edges().to_vec();
                    d.extend_from_slice(c.edges());
                    d
                }
                Err(_) => {
                    truncated_at = Some(n);
                    break;
                }
            },
        };
        let k = rotations
            .iter()
            .map(|r| max_repeats(&hay, r))
            .max()
            .unwrap_or(0);
        per_n.push(k);
    }
    let max_k = per_n.iter().copied().max().unwrap_or(0);
    let argmax_n = per_n
        .iter()
        .position(|&k| k == max_k)
        .map(|i| i as u32 + 1)
        .unwrap_or(0);
    let early = per_n
        .iter()
        .take((per_n.len() * 3).div_ceil(4))
        .copied()
        .max()
        .unwrap_or(0);
    MaxPowerScan {
        max_k,
        argmax_n,
        stabilized: !per_n.is_empty() && early == max_k && truncated_at.is_none(),
        per_n,
        truncated_at,
    }
}

/// Empirical bounded-cancellation lower bound: max edges cancelled in
/// [f(α)·f(β)] over reduced concatenations α·β with |α|, |β| ≤ len_cap.
pub fn bcc_estimate(f: &TopRep, len_cap: usize) -> usize {
    let g = f.graph();
    let all = |_: EdgeId| true;
    let paths = enumerate_paths(g, &all, len_cap);
    let mut best = 0usize;
    for a in &paths {
        for b in &paths {
            if a.t(g) != b.o() {
                continue;
            }
            if let Some(&last) = a.edges().last() {
                if b.edges().first() == Some(&inv(last)) {
                    continue; // α·β must itself be reduced
                }
            }
            let fa = f.apply(a);
            let fb = f.apply(b);
            let joined = fa.concat(g, &fb).expect("images chain");
            let cancelled = (fa.len() + fb.len() - joined.len()) / 2;
            best = best.max(cancelled);
        }
    }
    best
}

/// TopRep file: a graph file plus `map <edge> <edge tokens>` lines and
/// optional ascending `stratum <edge ids>` lines (cumulative levels).
pub fn parse_toprep(text: &str) -> Result<TopRep, TrainMapError> {
    let mut graph_lines = String::new();
    let mut map_lines: Vec<(usize, Vec<EdgeId>)> = Vec::new();
    let mut strata: Vec<Vec<usize>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| TrainMapError::Parse(format!("line {}: {msg}", lineno + 1));
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "vertices" | "edge" => {
                graph_lines.push_str(line);
                graph_lines.push('\n');
            }
            "map" => {
                let k: usize = toks
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err("bad edge index".into()))?;
                let edges: Option<Vec<EdgeId>> =
                    toks[2..].iter().map(|t| parse_edge_token(t)).collect();
                let edges = edges.ok_or_else(|| err("bad edge token".into()))?;
                map_lines.push((k, edges));
            }
            "stratum" => {
                let ids: Option<Vec<usize>> = toks[1..].iter().map(|t| t.parse().ok()).collect();
                strata.push(ids.ok_or_else(|| err("bad stratum edge id".into()))?);
            }
            other => return Err(err(format!("unknown keyword {other:?}"))),
        }
    }
    let graph = Graph::parse(&graph_lines)?;
    let mut images: Vec<Option<Path>> = vec![None; graph.n_edges()];
    for (k, edges) in map_lines {
        if k >= graph.n_edges() {
            return Err(TrainMapError::Parse(format!("map for unknown edge {k}")));
        }
        let base = edges
            .first()
            .map(|&e| graph.o(e))
            .ok_or_else(|| TrainMapError::Parse(format!("empty image for edge {k}")))?;
        images[k] = Some(Path::new(&graph, base, edges)?);
    }
    let images: Result<Vec<Path>, _> = images
        .into_iter()
        .enumerate()
        .map(|(k, p)| p.ok_or(TrainMapError::Parse(format!("missing map for edge {k}"))))
        .collect();
    TopRep::new(graph, images?, strata)
}

pub fn toprep_to_string(f: &TopRep) -> String {
    let mut out = f.graph().to_file_string();
    for (k, p) in f.images().iter().enumerate() {
        let toks: Vec<String> = p.edges().iter().map(|&e| edge_token(e)).collect();
        out.push_str(&format!("map {} {}\n", k, toks.join(" ")));
    }
    for level in f.filtration() {
        let ids: Vec<String> = level
            .positive_edges()
            .iter()
            .map(|k| k.to_string())
            .collect();
        out.push_str(&format!("stratum {}\n", ids.join(" ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freegroup::Word;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    /// Fibonacci map on the rose: x -> xy, y -> x.
    fn fib() -> TopRep {
        let phi =
            FreeMap::with_inverse(2, vec![w("a b"), w("a")], vec![w("b"), w("b- a")]).unwrap();
        TopRep::rose_representative(&phi).unwrap()
    }

    /// Not a train track: x -> xy, y -> x^-1.
    fn xy_xbar() -> TopRep {
        let g = Graph::rose(2);
        let images = vec![
            Path::new(&g, 0, vec![0, 2]).unwrap(),
            Path::new(&g, 0, vec![1]).unwrap(),
        ];
        TopRep::new(g, images, vec![]).unwrap()
    }

    /// NEG map: x -> x, y -> yx with filtration {x} < {x,y}.
    fn neg() -> TopRep {
        let phi =
            FreeMap::with_inverse(2, vec![w("a"), w("b a")], vec![w("a"), w("b a-")]).unwrap();
        TopRep::rose_representative(&phi).unwrap()
    }

    #[test]
    fn rose_representative_examples() {
        let f = fib();
        assert_eq!(f.images()[0].edges(), &[0, 2]);
        assert_eq!(f.images()[1].edges(), &[0]);
        assert_eq!(f.n_strata(), 1);

        let id = TopRep::rose_representative(&FreeMap::identity(2).unwrap()).unwrap();
        assert_eq!(id.images()[0].edges(), &[0]);

        let f = neg();
        assert_eq!(f.n_strata(), 2);
        assert_eq!(f.stratum_edges(0), vec![0]);
        assert_eq!(f.stratum_edges(1), vec![1]);
    }

    #[test]
    fn df_table_and_illegal_orbit() {
        let f = xy_xbar();
        // Df: x -> x, y -> x^-1, x^-1 -> y^-1, y^-1 -> x
        assert_eq!(f.df(0), 0);
        assert_eq!(f.df(2), 1);
        assert_eq!(f.df(1), 3);
        assert_eq!(f.df(3), 0);
        let verdict = f.turn_legality(Turn::new(1, 2));
        let Legality::Illegal { orbit } = verdict else {
            panic!("turn {{x-, y}} must be illegal");
        };
        assert_eq!(
            orbit,
            vec![
                Turn::new(1, 2),
                Turn::new(3, 1),
                Turn::new(0, 3),
                Turn::new(0, 0),
            ]
        );
    }

    #[test]
    fn degenerate_turn_illegal() {
        let f = fib();
        assert!(!f.turn_legality(Turn::new(0, 0)).is_legal());
    }

    #[test]
    fn fibonacci_is_train_track() {
        let report = verify_train_track(&fib(), 10);
        assert!(report.is_train_track(), "{report:?}");
    }

    #[test]
    fn identity_is_train_track() {
        let id = TopRep::rose_representative(&FreeMap::identity(2).unwrap()).unwrap();
        assert!(verify_train_track(&id, 8).is_train_track());
    }

    #[test]
    fn xy_xbar_rejected_with_witness() {
        let report = verify_train_track(&xy_xbar(), 8);
        assert!(!report.is_train_track());
        assert!(!report.illegal_turns.is_empty());
        let c = report.cancellation.expect("cancellation in f^4(x)");
        assert_eq!(c.edge, 0);
        assert_eq!(c.step, 4);
        assert_eq!(c.pair, (1, 0)); // x^-1 . x
    }

    #[test]
    fn transition_matrices() {
        let f = fib();
        let m = f.transition_matrix(0);
        assert_eq!(m.entries, vec![vec![1, 1], vec![1, 0]]);

        let g = Graph::rose(2);
        let images = vec![
            Path::new(&g, 0, vec![0]).unwrap(),
            Path::new(&g, 0, vec![2]).unwrap(),
        ];
        let id = TopRep::new(g, images, vec![vec![0, 1]]).unwrap();
        assert_eq!(
            id.transition_matrix(0).entries,
            vec![vec![1, 0], vec![0, 1]]
        );

        let f = neg();
        assert_eq!(f.transition_matrix(1).entries, vec![vec![1]]);
    }

    #[test]
    fn pf_classification() {
        let f = fib();
        let m = f.transition_matrix(0);
        let PfClass::Eg { lambda, cert_power } = pf_classify(&m).unwrap() else {
            panic!("Fibonacci matrix is EG");
        };
        assert!((lambda - 1.618_033_988_749_895).abs() < 1e-9);
        assert!(cert_power >= 1);

        let single = TransitionMatrix {
            edges: vec![0],
            entries: vec![vec![1]],
        };
        assert_eq!(pf_classify(&single).unwrap(), PfClass::Neg);

        let zero = TransitionMatrix {
            edges: vec![0],
            entries: vec![vec![0]],
        };
        assert_eq!(pf_classify(&zero).unwrap(), PfClass::Zero);
    }

    #[test]
    fn pf_power_consistency() {
        // λ(M^k) = λ(M)^k for the Fibonacci matrix
        let f = fib();
        let m = f.transition_matrix(0);
        let lambda = pf_classify(&m).unwrap().lambda();
        let mut big = m.big();
        for k in 2..=4u32 {
            big = mat_mul(&big, &m.big());
            let entries: Vec<Vec<u64>> = big
                .iter()
                .map(|r| r.iter().map(|x| u64::try_from(x).unwrap()).collect())
                .collect();
            let mk = TransitionMatrix {
                edges: m.edges.clone(),
                entries,
            };
            let lk = pf_classify(&mk).unwrap().lambda();
            assert!((lk - lambda.powi(k as i32)).abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn iterate_reduced_examples() {
        let f = neg();
        let g = f.graph();
        let y = Path::new(g, 0, vec![2]).unwrap();
        let out = f.iterate_reduced(&y, 3, ITERATE_LETTER_CAP).unwrap();
        assert_eq!(out.edges(), &[2, 0, 0, 0]); // y x^3

        let f = fib();
        let p = Path::new(f.graph(), 0, vec![0, 3]).unwrap(); // x y^-1
        let out = f.iterate_reduced(&p, 1, ITERATE_LETTER_CAP).unwrap();
        assert_eq!(out.edges(), &[0, 2, 1]); // x y x^-1

        let out0 = f.iterate_reduced(&p, 0, ITERATE_LETTER_CAP).unwrap();
        assert_eq!(out0.edges(), p.edges());
    }

    #[test]
    fn iterate_functoriality() {
        let f = fib();
        let p = Path::new(f.graph(), 0, vec![0, 2, 1]).unwrap();
        for m in 0..=3u32 {
            for n in 0..=3u32 {
                let direct = f.iterate_reduced(&p, m + n, ITERATE_LETTER_CAP).unwrap();
                let mid = f.iterate_reduced(&p, m, ITERATE_LETTER_CAP).unwrap();
                let two_step = f.iterate_reduced(&mid, n, ITERATE_LETTER_CAP).unwrap();
                assert_eq!(direct.edges(), two_step.edges());
            }
        }
    }

    #[test]
    fn rtt_reports() {
        let report = verify_rtt(&fib());
        assert!(report.passes(), "{report:?}");

        let report = verify_rtt(&neg());
        assert!(report.passes(), "{report:?}");
        assert_eq!(report.classes, vec![PfClass::Neg, PfClass::Neg]);

        // reducible top matrix: x -> xy, y -> y with trivial filtration
        let g = Graph::rose(2);
        let images = vec![
            Path::new(&g, 0, vec![0, 2]).unwrap(),
            Path::new(&g, 0, vec![2]).unwrap(),
        ];
        let f = TopRep::new(g, images, vec![vec![0, 1]]).unwrap();
        let report = verify_rtt(&f);
        let (_, verdict) = &report.irreducibility[0];
        assert_eq!(verdict.clone().unwrap_err(), vec![1]);
    }

    #[test]
    fn good_rtt_reports() {
        let report = verify_good_rtt(&fib());
        assert!(report.passes(), "{report:?}");
        assert_eq!(report.aperiodicity, vec![(0, Ok(2))]); // M^2 of [[1,1],[1,0]] ≫ 0

        let report = verify_good_rtt(&neg());
        assert!(report.passes(), "{report:?}");
        let (_, verdict) = &report.neg_form[1];
        let (e0, u) = verdict.clone().unwrap();
        assert_eq!(e0, 1);
        assert_eq!(u.edges(), &[0]); // f(y) = y x

        // periodic permutation stratum: x -> y, y -> x
        let g = Graph::rose(2);
        let images = vec![
            Path::new(&g, 0, vec![2]).unwrap(),
            Path::new(&g, 0, vec![0]).unwrap(),
        ];
        let f = TopRep::new(g, images, vec![]).unwrap();
        let report = verify_good_rtt(&f);
        // swap is NEG (permutation) so it lands in neg_form, failing the
        // single-edge requirement
        assert!(!report.passes());
    }

    #[test]
    fn lemma_l() {
        assert_eq!(lemma_l_constant(&fib()).unwrap(), 4); // K = 2

        // every length-4 window of f^10(x) contains both letters
        let f = fib();
        let p = Path::new(f.graph(), 0, vec![0]).unwrap();
        let big = f.iterate_reduced(&p, 10, ITERATE_LETTER_CAP).unwrap();
        for win in big.edges().windows(4) {
            let has_x = win.iter().any(|&e| positive_index(e) == 0);
            let has_y = win.iter().any(|&e| positive_index(e) == 1);
            assert!(has_x && has_y);
        }

        assert!(lemma_l_constant(&neg()).is_err());
    }

    #[test]
    fn max_power_scans() {
        let f = fib();
        let g = f.graph();
        let alpha = CyclicPath::from_path(g, &Path::new(g, 0, vec![0]).unwrap()).unwrap();
        let scan =
            max_cyclic_power_in_iterates(&f, &alpha, &IterSource::Edge(0), 12, ITERATE_LETTER_CAP);
        assert_eq!(scan.max_k, 2);
        assert!(scan.stabilized);

        let f = neg();
        let g = f.graph();
        let alpha = CyclicPath::from_path(g, &Path::new(g, 0, vec![0]).unwrap()).unwrap();
        let scan =
            max_cyclic_power_in_iterates(&f, &alpha, &IterSource::Edge(2), 10, ITERATE_LETTER_CAP);
        assert_eq!(scan.max_k, 10); // [f^n(y)] = y x^n
        assert!(!scan.stabilized);

        let alpha = CyclicPath::from_path(g, &Path::new(g, 0, vec![2]).unwrap()).unwrap();
        let scan =
            max_cyclic_power_in_iterates(&f, &alpha, &IterSource::Edge(2), 10, ITERATE_LETTER_CAP);
        assert_eq!(scan.max_k, 1);
        assert!(scan.stabilized);
    }

    #[test]
    fn bcc_estimates() {
        let id = TopRep::rose_representative(&FreeMap::identity(2).unwrap()).unwrap();
        assert_eq!(bcc_estimate(&id, 2), 0);

        // x -> xy, y -> x^-1: [f(y)f(x)] = x^-1 . xy = y cancels one edge
        assert!(bcc_estimate(&xy_xbar(), 2) >= 1);
        assert!(bcc_estimate(&fib(), 2) >= 1); // [f(x^-1)f(y)] = y^-1x^-1 . x
    }

    #[test]
    fn toprep_file_round_trip() {
        let f = neg();
        let text = toprep_to_string(&f);
        let again = parse_toprep(&text).unwrap();
        assert_eq!(again.images()[1].edges(), f.images()[1].edges());
        assert_eq!(again.n_strata(), 2);
    }

    #[test]
    fn memoized_iterates_are_consistent() {
        let f = fib();
        let p = Path::new(f.graph(), 0, vec![0]).unwrap();
        let a = f.iterate_reduced(&p, 6, ITERATE_LETTER_CAP).unwrap();
        let b = f.iterate_reduced(&p, 6, ITERATE_LETTER_CAP).unwrap(); // memo hit
        assert_eq!(a.edges(), b.edges());
        // against step-by-step application
        let mut q = p;
        for _ in 0..6 {
            q = f.apply(&q);
        }
        assert_eq!(q.edges(), a.edges());
    }

    #[test]
    fn truncation_notice() {
        let f = fib();
        let p = Path::new(f.graph(), 0, vec![0]).unwrap();
        let err = f.iterate_reduced(&p, 40, 100).unwrap_err();
        assert!(matches!(err, TrainMapError::Truncated { .. }));
    }
}
