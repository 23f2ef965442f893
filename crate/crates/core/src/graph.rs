//! Undirected simple graphs: generators, edge-list I/O and topology statistics.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Immutable undirected simple graph stored as sorted adjacency lists
/// in compressed (offset + flat neighbor array) form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    labels: Option<Vec<i64>>,
}

impl Graph {
    /// Builds a graph from an undirected edge iterator. Self-loops and
    /// duplicates (in either orientation) are dropped.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("graph must have at least one node"));
        }
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_count];
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {node_count} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].insert(v);
            adj[v].insert(u);
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for set in adj {
            neighbors.extend(set);
            offsets.push(neighbors.len());
        }
        Ok(Graph {
            offsets,
            neighbors,
            labels: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count()).map(|i| self.degree(i)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn avg_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.node_count() as f64
    }

    /// Original labels when the graph was loaded from a file.
    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Edges as `(i, j)` pairs with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Serializes to the edge-list format: one `i j` pair per line, `i < j`, sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes {} edges {}", self.node_count(), self.edge_count());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

/// Barabási–Albert preferential attachment. The seed graph is a complete
/// graph on `m` nodes; every later node attaches to `m` distinct existing
/// nodes chosen proportionally to degree.
pub fn generate_ba(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m < 1 || n <= m {
        return Err(Error::invalid(format!("BA requires n > m >= 1 (got n={n}, m={m})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + m * (n - m));
    // Each node appears once per incident edge endpoint.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..m {
        for v in (u + 1)..m {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    // The first newcomer links to the whole seed clique (for m = 1 the
    // endpoint list is still empty).
    for t in 0..m {
        edges.push((t, m));
        endpoints.push(t);
        endpoints.push(m);
    }
    let mut targets = Vec::with_capacity(m);
    for source in (m + 1)..n {
        targets.clear();
        while targets.len() < m {
            let candidate = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&candidate) {
                targets.push(candidate);
            }
        }
        for &t in &targets {
            edges.push((t, source));
            endpoints.push(t);
            endpoints.push(source);
        }
    }
    Graph::from_edges(n, edges)
}

/// Watts–Strogatz small world: ring lattice of even degree `k`, each
/// lattice edge rewired with probability `p` to a uniformly drawn endpoint
/// that keeps the graph simple.
pub fn generate_ws(n: usize, k: usize, p: f64, seed: u64) -> Result<Graph> {
    if !k.is_multiple_of(2) {
        return Err(Error::invalid(format!("WS ring degree k must be even (got {k})")));
    }
    if n <= k {
        return Err(Error::invalid(format!("WS requires n > k (got n={n}, k={k})")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("rewire probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for u in 0..n {
        for j in 1..=k / 2 {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if !adj[u].contains(&v) || rng.random::<f64>() >= p {
                continue;
            }
            if adj[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !adj[u].contains(&w) {
                    break w;
                }
            };
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    let edges: Vec<(usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(u, set)| set.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
        .collect();
    Graph::from_edges(n, edges)
}

/// Parses an edge list from a reader. `source` is used in error messages.
pub fn parse_edge_list(reader: impl Read, source: &Path) -> Result<Graph> {
    let mut raw: Vec<(i64, i64)> = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<i64> {
            let tok = tok.ok_or_else(|| Error::Parse {
                path: source.to_path_buf(),
                line: idx + 1,
                msg: "expected two node labels".into(),
            })?;
            tok.parse::<i64>().map_err(|_| Error::Parse {
                path: source.to_path_buf(),
                line: idx + 1,
                msg: format!("invalid node label {tok:?}"),
            })
        };
        let u = parse(tokens.next())?;
        let v = parse(tokens.next())?;
        raw.push((u, v));
    }
    if raw.is_empty() {
        return Err(Error::Parse {
            path: source.to_path_buf(),
            line: 0,
            msg: "edge list contains no edges".into(),
        });
    }
    let labels: Vec<i64> = raw
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<i64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut graph = Graph::from_edges(labels.len(), raw.iter().map(|(u, v)| (index[u], index[v])))?;
    graph.labels = Some(labels);
    Ok(graph)
}

/// Loads a whitespace-separated edge list; `#` and `%` lines are comments.
/// Labels are remapped to `0..N` in ascending label order.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_edge_list(file, path)
}

fn local_clustering(graph: &Graph, node: usize) -> f64 {
    let nbrs = graph.neighbors(node);
    let k = nbrs.len();
    if k < 2 {
        return 0.0;
    }
    let mut links = 0usize;
    for (a, &u) in nbrs.iter().enumerate() {
        // count neighbors of u that are also later neighbors of `node`
        let rest = &nbrs[a + 1..];
        let nu = graph.neighbors(u);
        let (mut i, mut j) = (0, 0);
        while i < rest.len() && j < nu.len() {
            match rest[i].cmp(&nu[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    links += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    2.0 * links as f64 / (k * (k - 1)) as f64
}

/// Mean local clustering coefficient; nodes of degree < 2 contribute 0.
pub fn avg_clustering(graph: &Graph) -> f64 {
    let n = graph.node_count();
    (0..n).map(|i| local_clustering(graph, i)).sum::<f64>() / n as f64
}

/// Unnormalized shortest-path betweenness (Brandes accumulation over BFS
/// DAGs). Each unordered pair is counted once.
pub fn betweenness(graph: &Graph) -> Vec<f64> {
    let n = graph.node_count();
    let mut centrality = vec![0.0; n];
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        stack.clear();
        for p in preds.iter_mut() {
            p.clear();
        }
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = -1);
        delta.iter_mut().for_each(|x| *x = 0.0);
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in graph.neighbors(v) {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    centrality.iter_mut().for_each(|c| *c /= 2.0);
    centrality
}
