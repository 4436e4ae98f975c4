//! Marked metric graphs with exact rational edge lengths: realization of
//! conjugacy classes, crossing vectors, translation lengths, scaling, and
//! marking-difference maps.

use std::fmt;

use num::rational::BigRational;
use num::{BigInt, One, Signed, Zero};
use thiserror::Error;

use crate::freegroup::{CyclicWord, FreeMap, Letter, Word};
use crate::graph::{
    edge_token, parse_edge_token, CyclicPath, EdgeId, Graph, GraphError, Path, VertexId,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OuterSpaceError {
    #[error("marking count {got} does not match rank {expected}")]
    MarkingCount { expected: usize, got: usize },
    #[error("marking path for generator {0} is not a closed loop at the base vertex")]
    MarkingNotClosed(usize),
    #[error("length of edge {0} must be positive")]
    BadLength(usize),
    #[error("scale factor must be positive")]
    BadScale,
    #[error("the trivial word has no realization")]
    TrivialWord,
    #[error("word uses generator index {index} outside rank {rank}")]
    OutOfRank { index: usize, rank: usize },
    #[error("no basis certificate on the source graph")]
    NoBasisCert,
    #[error("marking difference fails on generator {0}")]
    MarkingMismatch(usize),
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("malformed marked-graph file: {0}")]
    Parse(String),
}

/// A point of cv_N: a graph, a marking (petal images at a base vertex), and
/// positive rational edge lengths.
#[derive(Clone, PartialEq, Eq)]
pub struct MarkedMetricGraph {
    graph: Graph,
    base: VertexId,
    /// closed reduced loop at `base` per generator
    marking: Vec<Path>,
    /// positive rational length per positive edge
    lengths: Vec<BigRational>,
    /// optional certificate that the marking words (in a spanning-tree
    /// collapse basis) form a free basis: a certified automorphism whose
    /// images are exactly those words
    basis_cert: Option<FreeMap>,
}

impl fmt::Debug for MarkedMetricGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MarkedMetricGraph({:?}, lengths ", self.graph)?;
        let ls: Vec<String> = self.lengths.iter().map(|l| l.to_string()).collect();
        write!(f, "[{}])", ls.join(", "))
    }
}

impl MarkedMetricGraph {
    pub fn new(
        graph: Graph,
        base: VertexId,
        marking: Vec<Path>,
        lengths: Vec<BigRational>,
    ) -> Result<MarkedMetricGraph, OuterSpaceError> {
        let rank = graph.rank();
        if marking.len() != rank {
            return Err(OuterSpaceError::MarkingCount {
                expected: rank,
                got: marking.len(),
            });
        }
        for (i, p) in marking.iter().enumerate() {
            if p.is_empty() || p.o() != base || !p.is_closed(&graph) || !p.is_reduced() {
                return Err(OuterSpaceError::MarkingNotClosed(i));
            }
        }
        if lengths.len() != graph.n_edges() {
            return Err(OuterSpaceError::MarkingCount {
                expected: graph.n_edges(),
                got: lengths.len(),
            });
        }
        for (k, l) in lengths.iter().enumerate() {
            if !l.is_positive() {
                return Err(OuterSpaceError::BadLength(k));
            }
        }
        Ok(MarkedMetricGraph {
            graph,
            base,
            marking,
            lengths,
            basis_cert: None,
        })
    }

    /// Attaches a basis certificate; `cert` images must be the marking words
    /// in the collapse basis of the default spanning tree.
    pub fn with_basis_cert(mut self, cert: FreeMap) -> Result<MarkedMetricGraph, OuterSpaceError> {
        let tree = self.graph.spanning_tree(&[])?;
        for (i, p) in self.marking.iter().enumerate() {
            if crate::graph::path_to_word(p, &tree) != cert.images()[i] {
                return Err(OuterSpaceError::MarkingMismatch(i));
            }
        }
        self.basis_cert = Some(cert);
        Ok(self)
    }

    /// The rose with the identity marking and unit lengths.
    pub fn unit_rose(rank: usize) -> MarkedMetricGraph {
        let graph = Graph::rose(rank);
        let marking = (0..rank)
            .map(|k| Path::new(&graph, 0, vec![2 * k]).unwrap())
            .collect();
        let lengths = vec![BigRational::one(); rank];
        let cert = FreeMap::identity(rank).unwrap();
        MarkedMetricGraph::new(graph, 0, marking, lengths)
            .unwrap()
            .with_basis_cert(cert)
            .unwrap()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn base(&self) -> VertexId {
        self.base
    }

    pub fn rank(&self) -> usize {
        self.graph.rank()
    }

    pub fn marking(&self) -> &[Path] {
        &self.marking
    }

    pub fn lengths(&self) -> &[BigRational] {
        &self.lengths
    }

    pub fn basis_cert(&self) -> Option<&FreeMap> {
        self.basis_cert.as_ref()
    }

    pub fn volume(&self) -> BigRational {
        self.lengths.iter().sum()
    }

    /// Structural diagnostics (valence, marking sanity); empty means clean.
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.graph.validate();
        for v in 0..self.graph.n_vertices() {
            if self.graph.valence(v) == 2 {
                // already reported by graph validation; nothing extra
            }
        }
        if let Some(cert) = &self.basis_cert {
            if cert.certify().is_err() {
                out.push("basis certificate fails".into());
            }
        }
        out
    }

    /// The closed reduced loop representing the conjugacy class of `g`:
    /// cyclically reduce the word first, then map letters through the marking
    /// and reduce as a path.
    pub fn realize(&self, g: &Word) -> Result<Path, OuterSpaceError> {
        let cyc = CyclicWord::from_word(g);
        if cyc.is_empty() {
            return Err(OuterSpaceError::TrivialWord);
        }
        self.realize_linear(&cyc.to_word())
    }

    /// Maps a reduced word through the marking without cyclic pre-reduction.
    pub fn realize_linear(&self, w: &Word) -> Result<Path, OuterSpaceError> {
        let rank = self.rank();
        // single reducing pass over the concatenated petals
        let mut edges: Vec<EdgeId> = Vec::new();
        for &l in w.letters() {
            if l.index() >= rank {
                return Err(OuterSpaceError::OutOfRank {
                    index: l.index(),
                    rank,
                });
            }
            let petal = if l.is_positive() {
                self.marking[l.index()].clone()
            } else {
                self.marking[l.index()].inverse(&self.graph)
            };
            for &e in petal.edges() {
                if edges.last() == Some(&crate::graph::inv(e)) {
                    edges.pop();
                } else {
                    edges.push(e);
                }
            }
        }
        if edges.is_empty() {
            Ok(Path::degenerate(self.base))
        } else {
            Ok(Path::new(&self.graph, self.base, edges)?)
        }
    }

    /// Per-positive-edge crossing counts of the realization.
    pub fn crossing_vector(&self, g: &Word) -> Result<Vec<u64>, OuterSpaceError> {
        let p = self.realize(g)?;
        Ok((0..self.graph.n_edges())
            .map(|k| p.crossings(k) as u64)
            .collect())
    }

    /// ‖g‖: crossing vector dotted with the lengths, exactly.
    pub fn translation_length(&self, g: &Word) -> Result<BigRational, OuterSpaceError> {
        if CyclicWord::from_word(g).is_empty() {
            return Ok(BigRational::zero());
        }
        let v = self.crossing_vector(g)?;
        Ok(dot(&v, &self.lengths))
    }

    /// Same point with all lengths multiplied by λ > 0.
    pub fn scale(&self, lambda: &BigRational) -> Result<MarkedMetricGraph, OuterSpaceError> {
        if !lambda.is_positive() {
            return Err(OuterSpaceError::BadScale);
        }
        let mut out = self.clone();
        for l in out.lengths.iter_mut() {
            *l *= lambda;
        }
        Ok(out)
    }

    /// Same marked graph with replaced lengths.
    pub fn with_lengths(
        &self,
        lengths: Vec<BigRational>,
    ) -> Result<MarkedMetricGraph, OuterSpaceError> {
        let mut out =
            MarkedMetricGraph::new(self.graph.clone(), self.base, self.marking.clone(), lengths)?;
        out.basis_cert = self.basis_cert.clone();
        Ok(out)
    }

    /// Marked-graph file: graph file + `base <v>` + `mark <gen> <tokens>` +
    /// `len <edge> <p/q>` lines.
    pub fn parse(text: &str) -> Result<MarkedMetricGraph, OuterSpaceError> {
        let mut graph_lines = String::new();
        let mut base = 0usize;
        let mut marks: Vec<(usize, Vec<EdgeId>)> = Vec::new();
        let mut lens: Vec<(usize, BigRational)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| OuterSpaceError::Parse(format!("line {}: {msg}", lineno + 1));
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "vertices" | "edge" => {
                    graph_lines.push_str(line);
                    graph_lines.push('\n');
                }
                "base" => {
                    base = toks
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("bad base vertex".into()))?;
                }
                "mark" => {
                    let gen = toks
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("bad generator index".into()))?;
                    let edges: Option<Vec<EdgeId>> =
                        toks[2..].iter().map(|t| parse_edge_token(t)).collect();
                    marks.push((gen, edges.ok_or_else(|| err("bad edge token".into()))?));
                }
                "len" => {
                    let k = toks
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("bad edge index".into()))?;
                    let r = toks
                        .get(2)
                        .and_then(|s| parse_rational(s))
                        .ok_or_else(|| err("bad rational length".into()))?;
                    lens.push((k, r));
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }
        let graph = Graph::parse(&graph_lines)?;
        let rank = graph.rank();
        let mut marking: Vec<Option<Path>> = vec![None; rank];
        for (gen, edges) in marks {
            if gen >= rank {
                return Err(OuterSpaceError::Parse(format!(
                    "mark for generator {gen} out of rank"
                )));
            }
            marking[gen] = Some(Path::new(&graph, base, edges)?);
        }
        let marking: Result<Vec<Path>, _> = marking
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                p.ok_or(OuterSpaceError::Parse(format!(
                    "missing mark for generator {i}"
                )))
            })
            .collect();
        let mut lengths = vec![BigRational::one(); graph.n_edges()];
        for (k, r) in lens {
            if k >= graph.n_edges() {
                return Err(OuterSpaceError::Parse(format!(
                    "length for unknown edge {k}"
                )));
            }
            lengths[k] = r;
        }
        MarkedMetricGraph::new(graph, base, marking?, lengths)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = self.graph.to_file_string();
        out.push_str(&format!("base {}\n", self.base));
        for (i, p) in self.marking.iter().enumerate() {
            let toks: Vec<String> = p.edges().iter().map(|&e| edge_token(e)).collect();
            out.push_str(&format!("mark {} {}\n", i, toks.join(" ")));
        }
        for (k, l) in self.lengths.iter().enumerate() {
            out.push_str(&format!("len {} {}\n", k, l));
        }
        out
    }
}

pub(crate) fn parse_rational(s: &str) -> Option<BigRational> {
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.parse().ok()?;
        let q: BigInt = q.parse().ok()?;
        if q.is_zero() {
            return None;
        }
        Some(BigRational::new(p, q))
    } else {
        let p: BigInt = s.parse().ok()?;
        Some(BigRational::from(p))
    }
}

pub(crate) fn dot(crossings: &[u64], lengths: &[BigRational]) -> BigRational {
    crossings
        .iter()
        .zip(lengths)
        .map(|(&c, l)| l * BigRational::from(BigInt::from(c)))
        .sum()
}

/// An edge-level marking-difference map υ: G′ → G with possibly degenerate
/// edge images, verified on every generator.
#[derive(Clone, Debug)]
pub struct MarkingChange {
    /// closed path in the target per directed edge of the source (tree edges
    /// map to the degenerate path at the target base)
    pub edge_images: Vec<Path>,
}

impl MarkingChange {
    /// Applies the map to a path in the source graph, reducing the result.
    pub fn apply(&self, target: &Graph, base: VertexId, p: &Path) -> Path {
        let mut out = Path::degenerate(base);
        for &e in p.edges() {
            out = out
                .concat(target, &self.edge_images[e])
                .expect("closed loops at the base always chain");
        }
        out
    }
}

/// Builds υ: T′.graph → T.graph sending each non-tree edge of the source to
/// the realization (in the target) of the corresponding inverse-basis word,
/// and tree edges to the degenerate path; verifies [[υ(τ′(xᵢ))]] = [[τ(xᵢ)]].
pub fn marking_change(
    target: &MarkedMetricGraph,
    source: &MarkedMetricGraph,
) -> Result<MarkingChange, OuterSpaceError> {
    let cert = source.basis_cert().ok_or(OuterSpaceError::NoBasisCert)?;
    if cert.inverse_images().is_none() {
        return Err(OuterSpaceError::NoBasisCert);
    }
    let sg = source.graph();
    let tree = sg.spanning_tree(&[])?;
    let basis = tree.complement();
    let mut edge_images: Vec<Path> = Vec::with_capacity(sg.n_directed());
    for e in 0..sg.n_directed() {
        if tree.contains(e) {
            edge_images.push(Path::degenerate(target.base()));
            continue;
        }
        let j = basis
            .iter()
            .position(|&k| k == crate::graph::positive_index(e))
            .unwrap();
        let mut letter_word = Word::reduced([Letter::new(j, crate::graph::is_positive(e))]);
        letter_word = cert.apply_inverse(&letter_word).unwrap();
        edge_images.push(target.realize_linear(&letter_word)?);
    }
    let upsilon = MarkingChange { edge_images };

    // generator-by-generator verification as conjugacy classes
    for i in 0..source.rank() {
        let image = upsilon.apply(target.graph(), target.base(), &source.marking()[i]);
        let lhs = CyclicPath::from_path(target.graph(), &image)?;
        let rhs = CyclicPath::from_path(target.graph(), &target.marking()[i])?;
        if lhs != rhs {
            return Err(OuterSpaceError::MarkingMismatch(i));
        }
    }
    Ok(upsilon)
}
