//! Directed communication graphs and the spectral quantities the
//! synthesis algorithms consume.
//!
//! Nodes are 0-indexed in memory. The text format is 1-indexed.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph as PetGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, tol, Mat, Vector};

/// Unweighted digraph. An edge `(parent, child)` means the child hears the
/// parent, i.e. `a[child][parent] = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DiGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (p, c) in edges {
            if p >= n || c >= n {
                return Err(Error::Graph(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    p + 1,
                    c + 1
                )));
            }
            if p == c {
                return Err(Error::Graph(format!("self-loop at node {}", p + 1)));
            }
            set.insert((p, c));
        }
        Ok(Self { n, edges: set })
    }

    /// Builds a graph from an adjacency matrix with `a[i][j] = 1` iff `j -> i`.
    pub fn from_adjacency(adj: &Mat) -> Result<Self> {
        if adj.nrows() != adj.ncols() {
            return Err(Error::Graph("adjacency matrix must be square".into()));
        }
        let n = adj.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                match adj[(i, j)] {
                    v if v == 0.0 => {}
                    v if v == 1.0 => edges.push((j, i)),
                    v => {
                        return Err(Error::Graph(format!(
                            "adjacency entry ({}, {}) = {v}; only 0/1 weights are supported",
                            i + 1,
                            j + 1
                        )))
                    }
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.edges.contains(&(parent, child))
    }

    pub fn adjacency(&self) -> Mat {
        let mut a = Mat::zeros(self.n, self.n);
        for &(p, c) in &self.edges {
            a[(c, p)] = 1.0;
        }
        a
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(_, c)| c == node).count()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(p, _)| p == node).count()
    }

    /// Nodes reachable from `root` along edge direction, including `root`.
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for &(p, c) in &self.edges {
                if p == u && !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        seen
    }

    /// Parses the edge-list format: a `nodes N` header followed by one
    /// 1-indexed `parent child` pair per line. `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| -> Result<usize> {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("expected a positive integer, found `{s}`"),
                })
            };
            if fields[0] == "nodes" {
                if n.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "duplicate `nodes` header".into(),
                    });
                }
                if fields.len() != 2 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "expected `nodes N`".into(),
                    });
                }
                n = Some(parse(fields[1])?);
                continue;
            }
            let Some(count) = n else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "edge before `nodes N` header".into(),
                });
            };
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected `parent child`, found `{line}`"),
                });
            }
            let (p, c) = (parse(fields[0])?, parse(fields[1])?);
            if p == 0 || c == 0 || p > count || c > count {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("node index out of range 1..={count}"),
                });
            }
            if p == c {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("self-loop at node {p}"),
                });
            }
            edges.push((p - 1, c - 1));
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "missing `nodes N` header".into(),
        })?;
        Self::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {}\n", self.n);
        for &(p, c) in &self.edges {
            let _ = writeln!(out, "{} {}", p + 1, c + 1);
        }
        out
    }
}

/// Graph Laplacian `L = D_in - A`. Row sums are exactly zero.
pub fn laplacian(g: &DiGraph) -> Mat {
    // 0 - A rather than -A keeps absent edges at +0.0.
    let mut l = Mat::zeros(g.n(), g.n()) - g.adjacency();
    for i in 0..g.n() {
        let deg: f64 = (0..g.n()).filter(|&j| j != i).map(|j| -l[(i, j)]).sum();
        l[(i, i)] = deg;
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFlags {
    pub strongly_connected: bool,
    pub balanced: bool,
    pub has_spanning_tree: bool,
    /// A node with no in-neighbours that reaches every other node.
    pub leader_follower_root: Option<usize>,
}

/// Combinatorial classification (integer-exact, no spectra involved).
pub fn classify(g: &DiGraph) -> GraphFlags {
    let n = g.n();
    let mut pg = PetGraph::<(), ()>::with_capacity(n, g.edges.len());
    let nodes: Vec<_> = (0..n).map(|_| pg.add_node(())).collect();
    for (p, c) in g.edges() {
        pg.add_edge(nodes[p], nodes[c], ());
    }
    let strongly_connected = tarjan_scc(&pg).len() == 1;
    let balanced = (0..n).all(|i| g.in_degree(i) == g.out_degree(i));

    let roots: Vec<usize> = (0..n)
        .filter(|&r| g.reachable_from(r).iter().all(|&s| s))
        .collect();
    let has_spanning_tree = !roots.is_empty();
    let leader_follower_root = roots.iter().copied().find(|&r| g.in_degree(r) == 0);

    GraphFlags {
        strongly_connected,
        balanced,
        has_spanning_tree,
        leader_follower_root,
    }
}

/// Positive left null vector of a strongly connected Laplacian, normalised
/// to sum to one.
///
/// Solves `L^T r = 0` with the last entry pinned: for a strongly connected
/// graph every proper principal block of `L` is a nonsingular M-matrix.
pub fn left_perron(l: &Mat) -> Result<Vector> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::NonSquare {
            rows: n,
            cols: l.ncols(),
        });
    }
    if n == 1 {
        return Ok(Vector::from_element(1, 1.0));
    }
    let lt = l.transpose();
    let m = n - 1;
    let block = lt.view((0, 0), (m, m)).into_owned();
    let rhs = -lt.view((0, m), (m, 1)).into_owned();
    let head = numkit::solve_linear(&block, &rhs).map_err(|_| {
        Error::Precondition("graph is not strongly connected (zero eigenvalue of L is not simple)".into())
    })?;
    let mut r = Vector::from_element(n, 1.0);
    r.rows_mut(0, m).copy_from(&head.column(0));
    let total = r.sum();
    r /= total;
    if r.iter().any(|&x| x <= 0.0) {
        return Err(Error::Precondition(
            "graph is not strongly connected (left null vector is not positive)".into(),
        ));
    }
    let residual = (l.transpose() * &r).norm();
    if residual > tol::PERRON_RESIDUAL {
        return Err(Error::Precondition(format!(
            "left null vector residual {residual:e} too large"
        )));
    }
    Ok(r)
}

/// Generalized algebraic connectivity
/// `min_{r^T x = 0, x != 0} x^T (RL + L^T R) x / (2 x^T R x)`.
///
/// With `y = R^{1/2} x` this is half the smallest eigenvalue of
/// `R^{-1/2}(RL + L^T R)R^{-1/2}` restricted to the orthogonal complement
/// of `w = sqrt(r) / |sqrt(r)|`. The restriction uses an orthonormal basis
/// of that complement taken from a Householder reflector mapping `w` to `e_1`.
pub fn generalized_connectivity(l: &Mat, r: &Vector) -> Result<f64> {
    let n = l.nrows();
    if r.len() != n || l.ncols() != n {
        return Err(Error::Dimension("laplacian and r disagree in size".into()));
    }
    if r.iter().any(|&x| x <= 0.0) {
        return Err(Error::Precondition("r must be entrywise positive".into()));
    }
    if n == 1 {
        return Err(Error::Precondition(
            "generalized connectivity needs at least two nodes".into(),
        ));
    }
    let big_r = Mat::from_diagonal(r);
    let q = &big_r * l + l.transpose() * &big_r;
    let inv_sqrt = Vector::from_iterator(n, r.iter().map(|x| 1.0 / x.sqrt()));
    let scaled = Mat::from_fn(n, n, |i, j| q[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);

    let basis = complement_basis(&Vector::from_iterator(n, r.iter().map(|x| x.sqrt())));
    let restricted = basis.transpose() * scaled * &basis;
    let lam = numkit::min_eigenvalue(&restricted)?;
    Ok(0.5 * lam)
}

/// Orthonormal basis (n x (n-1)) of the complement of a nonzero vector.
pub(crate) fn complement_basis(v: &Vector) -> Mat {
    let n = v.len();
    let w = v / v.norm();
    let mut u = w.clone();
    // Reflect w onto -sign(w_0) e_1 for stability.
    let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += sign;
    let un = u.norm();
    let u = u / un;
    let h = Mat::identity(n, n) - &u * u.transpose() * 2.0;
    h.columns(1, n - 1).into_owned()
}

/// Everything the leaderless and H∞ algorithms need from the graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpectra {
    pub laplacian: Mat,
    pub r: Vector,
    pub big_r: Mat,
    pub a_of_l: f64,
    /// Smallest nonzero eigenvalue of `(L + L^T)/2`; only set for balanced graphs.
    pub lambda2_sym: Option<f64>,
    pub flags: GraphFlags,
}

impl GraphSpectra {
    /// Requires a strongly connected graph.
    pub fn compute(g: &DiGraph) -> Result<Self> {
        let flags = classify(g);
        if !flags.strongly_connected {
            return Err(Error::Precondition(
                "graph is not strongly connected".into(),
            ));
        }
        let laplacian = laplacian(g);
        let r = left_perron(&laplacian)?;
        let a_of_l = generalized_connectivity(&laplacian, &r)?;
        let lambda2_sym = if flags.balanced {
            Some(lambda2_symmetric(&laplacian)?)
        } else {
            None
        };
        Ok(Self {
            big_r: Mat::from_diagonal(&r),
            laplacian,
            r,
            a_of_l,
            lambda2_sym,
            flags,
        })
    }

    /// `RL + L^T R`, positive semidefinite for strongly connected graphs.
    pub fn weighted_symmetric(&self) -> Mat {
        &self.big_r * &self.laplacian + self.laplacian.transpose() * &self.big_r
    }
}

/// Second-smallest eigenvalue of `(L + L^T)/2`. For a balanced strongly
/// connected graph the smallest is the simple zero.
pub fn lambda2_symmetric(l: &Mat) -> Result<f64> {
    let e = numkit::sym_eig(&numkit::symmetrize(l))?;
    if e.values.len() < 2 {
        return Err(Error::Precondition("need at least two nodes".into()));
    }
    Ok(e.values[1])
}

/// Leader-follower partition of the Laplacian plus the derived weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderFollowerData {
    pub leader: usize,
    /// Follower indices in the order used by `l1`, `l2` and `q`.
    pub followers: Vec<usize>,
    pub l1: Mat,
    pub l2: Mat,
    pub q: Vector,
    pub big_g: Mat,
    pub h: Mat,
    pub lambda1_h: f64,
    pub min_q: f64,
    /// `lambda_min((L1 + L1^T)/2)` when the follower subgraph is balanced and
    /// strongly connected; the simplified coupling bound uses it.
    pub lambda1_sym_l1: Option<f64>,
}

pub fn leader_follower_data(g: &DiGraph, leader: usize) -> Result<LeaderFollowerData> {
    let n = g.n();
    if leader >= n {
        return Err(Error::Graph(format!("leader {} out of range", leader + 1)));
    }
    if n < 2 {
        return Err(Error::Precondition("leader-follower needs at least one follower".into()));
    }
    if g.in_degree(leader) != 0 {
        return Err(Error::Precondition(format!(
            "leader {} has in-neighbours; it must receive no information",
            leader + 1
        )));
    }
    if !g.reachable_from(leader).iter().all(|&s| s) {
        return Err(Error::Precondition(format!(
            "no directed spanning tree rooted at leader {}",
            leader + 1
        )));
    }
    let l = laplacian(g);
    let followers: Vec<usize> = (0..n).filter(|&i| i != leader).collect();
    let m = followers.len();
    let l1 = Mat::from_fn(m, m, |i, j| l[(followers[i], followers[j])]);
    let l2 = Mat::from_fn(m, 1, |i, _| l[(followers[i], leader)]);

    let q = numkit::solve_vector(&l1, &Vector::from_element(m, 1.0)).map_err(|e| {
        Error::Precondition(format!("follower Laplacian block L1 is singular ({e})"))
    })?;
    if q.iter().any(|&x| x <= 0.0) {
        return Err(Error::Precondition(
            "q = L1^-1 1 is not positive".into(),
        ));
    }
    let big_g = Mat::from_diagonal(&q.map(|x| 1.0 / x));
    let h = (&big_g * &l1 + l1.transpose() * &big_g) * 0.5;
    let lambda1_h = numkit::min_eigenvalue(&h)?;
    let min_q = q.min();

    let sub = DiGraph::new(
        m,
        g.edges().filter_map(|(p, c)| {
            let pi = followers.iter().position(|&f| f == p)?;
            let ci = followers.iter().position(|&f| f == c)?;
            Some((pi, ci))
        }),
    )?;
    let sub_flags = classify(&sub);
    let lambda1_sym_l1 = if sub_flags.balanced && sub_flags.strongly_connected {
        let v = numkit::min_eigenvalue(&numkit::symmetrize(&l1))?;
        (v > 0.0).then_some(v)
    } else {
        None
    };

    Ok(LeaderFollowerData {
        leader,
        followers,
        l1,
        l2,
        q,
        big_g,
        h,
        lambda1_h,
        min_q,
        lambda1_sym_l1,
    })
}
