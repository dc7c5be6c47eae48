//! Approximate geodesic distances: a symmetrized k-nearest-neighbor graph on
//! the ambient points, followed by all-pairs shortest paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Smallest edge weight; duplicate points would otherwise give zero-length edges.
pub const MIN_EDGE_WEIGHT: f64 = 1e-12;

/// Floyd-Warshall is used at or below this many nodes, Dijkstra above.
pub const FLOYD_WARSHALL_MAX_NODES: usize = 500;

const CACHE_MAGIC: &[u8; 6] = b"MAEDM1";

#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    k: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl KnnGraph {
    /// Undirected graph from an explicit edge list. Weights are clamped to
    /// [`MIN_EDGE_WEIGHT`]; repeated edges keep the smallest weight.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(i, j, w) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::Parameter {
                    name: "edges",
                    reason: format!("edge ({i}, {j}) out of range for {n_nodes} nodes"),
                });
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Parameter {
                    name: "edges",
                    reason: format!("edge ({i}, {j}) has weight {w}"),
                });
            }
            if i == j {
                continue;
            }
            let w = w.max(MIN_EDGE_WEIGHT);
            insert_min(&mut adjacency[i], j, w);
            insert_min(&mut adjacency[j], i, w);
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Self { k: 0, adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Neighbors of `i` as `(index, edge length)`, sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }
}

fn insert_min(list: &mut Vec<(usize, f64)>, j: usize, w: f64) {
    match list.iter_mut().find(|(n, _)| *n == j) {
        Some(entry) => entry.1 = entry.1.min(w),
        None => list.push((j, w)),
    }
}

fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Connects every point to its `k` nearest neighbors (ties broken by index)
/// and symmetrizes by edge union.
pub fn build_knn_graph(points: ArrayView2<f64>, k: usize) -> Result<KnnGraph> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::Parameter {
            name: "k",
            reason: format!("need 1 <= k < N, got k = {k} with N = {n}"),
        });
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut row: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(points.row(i), points.row(j)), j)),
        );
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        row.select_nth_unstable_by(k - 1, cmp);
        for &(d, j) in &row[..k] {
            edges.push((i, j, d));
        }
    }
    let mut graph = KnnGraph::from_edges(n, &edges)?;
    graph.k = k;
    Ok(graph)
}

/// Symmetric all-pairs distance matrix. Unreachable pairs hold `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    d: Array2<f64>,
    connected: bool,
}

impl DistanceMatrix {
    /// Wraps a square matrix; `connected` is derived from finiteness.
    pub fn from_array(d: Array2<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() {
            return Err(crate::error::shape_err(
                "distance matrix",
                "square",
                format!("{}x{}", d.nrows(), d.ncols()),
            ));
        }
        let connected = d.iter().all(|v| v.is_finite());
        Ok(Self { d, connected })
    }

    /// Euclidean distances between the rows of `points`.
    pub fn euclidean(points: ArrayView2<f64>) -> Self {
        let n = points.nrows();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = euclidean(points.row(i), points.row(j));
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        Self { d, connected: true }
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[[i, j]]
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.d
    }

    pub fn max(&self) -> f64 {
        self.d.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max)
    }

    /// Writes `MAEDM1`, N as u64 little-endian, then row-major f64 LE.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        for v in self.d.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            kind: "distance cache",
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CACHE_MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let mut n = [0u8; 8];
        r.read_exact(&mut n).map_err(|_| bad("truncated header"))?;
        let n = usize::try_from(u64::from_le_bytes(n)).map_err(|_| bad("size overflow"))?;
        let len = n.checked_mul(n).ok_or_else(|| bad("size overflow"))?;
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() != len * 8 {
            return Err(bad(&format!("expected {} payload bytes, found {}", len * 8, buf.len())));
        }
        let values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let d = Array2::from_shape_vec((n, n), values).map_err(|e| bad(&e.to_string()))?;
        Self::from_array(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?), path)
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra_from(graph: &KnnGraph, source: usize, dist: &mut [f64], heap: &mut BinaryHeap<HeapEntry>) {
    dist.fill(f64::INFINITY);
    dist[source] = 0.0;
    heap.clear();
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in graph.neighbors(u) {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
}

/// One Dijkstra run per source. Row `i` comes from source `i` for `j >= i`
/// and is mirrored below the diagonal.
pub fn dijkstra_all_pairs(graph: &KnnGraph) -> DistanceMatrix {
    let n = graph.n_nodes();
    let mut d = Array2::from_elem((n, n), f64::INFINITY);
    let mut dist = vec![0.0; n];
    let mut heap = BinaryHeap::new();
    for s in 0..n {
        dijkstra_from(graph, s, &mut dist, &mut heap);
        for j in s..n {
            d[[s, j]] = dist[j];
            d[[j, s]] = dist[j];
        }
    }
    let connected = d.iter().all(|v| v.is_finite());
    DistanceMatrix { d, connected }
}

pub fn floyd_warshall(graph: &KnnGraph) -> DistanceMatrix {
    let n = graph.n_nodes();
    let mut d = Array2::from_elem((n, n), f64::INFINITY);
    for i in 0..n {
        d[[i, i]] = 0.0;
        for &(j, w) in graph.neighbors(i) {
            d[[i, j]] = w;
        }
    }
    let buf = d.as_slice_mut().unwrap();
    for k in 0..n {
        for i in 0..n {
            let dik = buf[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            for j in (i + 1)..n {
                let cand = dik + buf[k * n + j];
                if cand < buf[i * n + j] {
                    buf[i * n + j] = cand;
                    buf[j * n + i] = cand;
                }
            }
        }
    }
    let connected = d.iter().all(|v| v.is_finite());
    DistanceMatrix { d, connected }
}

/// Floyd-Warshall up to [`FLOYD_WARSHALL_MAX_NODES`], Dijkstra above.
pub fn all_pairs_shortest_paths(graph: &KnnGraph) -> DistanceMatrix {
    if graph.n_nodes() > FLOYD_WARSHALL_MAX_NODES {
        dijkstra_all_pairs(graph)
    } else {
        floyd_warshall(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn collinear_k1() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let g = build_knn_graph(pts.view(), 1).unwrap();
        assert_eq!(g.neighbors(0), &[(1, 1.0)]);
        assert_eq!(g.neighbors(1), &[(0, 1.0), (2, 1.0)]);
        assert_eq!(g.neighbors(2), &[(1, 1.0)]);
        let d = dijkstra_all_pairs(&g);
        assert_eq!(d.get(0, 2), 2.0);
        assert!(d.is_connected());
    }

    #[test]
    fn unit_square_k2() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let g = build_knn_graph(pts.view(), 2).unwrap();
        assert_eq!(g.neighbors(0), &[(1, 1.0), (3, 1.0)]);
        assert_eq!(g.neighbors(2), &[(1, 1.0), (3, 1.0)]);
        assert_eq!(g.n_edges(), 4);
        let d = floyd_warshall(&g);
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(1, 3), 2.0);
    }

    #[test]
    fn k_must_be_below_n() {
        let pts = array![[0.0], [1.0]];
        assert!(matches!(
            build_knn_graph(pts.view(), 2),
            Err(Error::Parameter { name: "k", .. })
        ));
        assert!(build_knn_graph(pts.view(), 0).is_err());
    }

    #[test]
    fn single_node() {
        let g = KnnGraph::from_edges(1, &[]).unwrap();
        let d = dijkstra_all_pairs(&g);
        assert_eq!(d.as_array(), &array![[0.0]]);
        assert!(d.is_connected());
    }

    #[test]
    fn disconnected_pair() {
        let g = KnnGraph::from_edges(2, &[]).unwrap();
        for d in [floyd_warshall(&g), dijkstra_all_pairs(&g)] {
            assert!(!d.is_connected());
            assert_eq!(d.get(0, 1), f64::INFINITY);
            assert_eq!(d.get(1, 0), f64::INFINITY);
            assert_eq!(d.get(0, 0), 0.0);
        }
        assert_eq!(g.component_count(), 2);
    }

    #[test]
    fn duplicate_points_clamped() {
        let pts = array![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]];
        let g = build_knn_graph(pts.view(), 1).unwrap();
        assert_eq!(g.neighbors(0)[0], (1, MIN_EDGE_WEIGHT));
    }

    #[test]
    fn cache_round_trip() {
        let g = KnnGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 1.25)]).unwrap();
        let d = floyd_warshall(&g);
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..6], b"MAEDM1");
        assert_eq!(&bytes[6..14], &3u64.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 9 * 8);
        let back = DistanceMatrix::read_from(&bytes[..], Path::new("mem")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn cache_rejects_bad_magic_and_truncation() {
        let p = Path::new("mem");
        assert!(DistanceMatrix::read_from(&b"MAEDM2\0\0\0\0\0\0\0\0"[..], p).is_err());
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MAEDM1");
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&0f64.to_le_bytes());
        assert!(matches!(
            DistanceMatrix::read_from(&bytes[..], p),
            Err(Error::Format { .. })
        ));
    }
}
