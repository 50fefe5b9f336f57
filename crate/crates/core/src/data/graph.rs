use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Undirected, loop-free, connected adjacency structure over regions.
///
/// Region indices are 0-based internally; the text format is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionGraph {
    neighbors: Vec<Vec<usize>>,
    num_edges: usize,
}

const PORTUGAL_NUTS3: &str = include_str!("../../data/portugal_nuts3.adj");

impl RegionGraph {
    /// Builds a graph from 0-based neighbour lists, checking symmetry,
    /// self-loops and connectivity.
    pub fn from_neighbor_lists(mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n == 0 {
            return Err(Error::Domain("graph has no regions".into()));
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&k) = list.iter().find(|&&k| k >= n) {
                return Err(Error::Domain(format!(
                    "region {} lists unknown neighbour {}",
                    i + 1,
                    k + 1
                )));
            }
            if list.binary_search(&i).is_ok() {
                return Err(Error::Domain(format!(
                    "region {} is its own neighbour",
                    i + 1
                )));
            }
        }
        for (i, list) in neighbors.iter().enumerate() {
            for &k in list {
                if neighbors[k].binary_search(&i).is_err() {
                    return Err(Error::Asymmetry(i + 1, k + 1));
                }
            }
        }
        let num_edges = neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        let graph = RegionGraph {
            neighbors,
            num_edges,
        };
        let sizes = graph.component_sizes();
        if sizes.len() > 1 {
            return Err(Error::DisconnectedGraph(sizes));
        }
        Ok(graph)
    }

    /// Contiguity of the 28 mainland NUTS III regions (2002 nomenclature),
    /// numbered as in the usual INE listing (1 = Minho-Lima … 28 = Algarve).
    pub fn portugal_nuts3() -> Self {
        parse_adjacency(PORTUGAL_NUTS3, Path::new("<builtin>")).expect("builtin adjacency is valid")
    }

    pub fn num_regions(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, region: usize) -> &[usize] {
        &self.neighbors[region]
    }

    pub fn degree(&self, region: usize) -> usize {
        self.neighbors[region].len()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(i, k)` with `i < k`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&k| k > i).map(move |&k| (i, k)))
    }

    /// Dense `D − A` (degree minus adjacency), row-major.
    pub fn laplacian(&self) -> Vec<f64> {
        let n = self.num_regions();
        let mut q = vec![0.0; n * n];
        for (i, list) in self.neighbors.iter().enumerate() {
            q[i * n + i] = list.len() as f64;
            for &k in list {
                q[i * n + k] = -1.0;
            }
        }
        q
    }

    fn component_sizes(&self) -> Vec<usize> {
        let n = self.num_regions();
        let mut seen = vec![false; n];
        let mut sizes = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut size = 0;
            while let Some(v) = stack.pop() {
                size += 1;
                for &w in &self.neighbors[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }
}

/// Parses the `id: id id …` neighbour-list format (1-based ids, `#` comments).
pub fn parse_adjacency(text: &str, origin: &Path) -> Result<RegionGraph> {
    let mut entries: Vec<(usize, Vec<usize>)> = Vec::new();
    let parse_id = |token: &str, line: usize| -> Result<usize> {
        match token.trim().parse::<usize>() {
            Ok(id) if id >= 1 => Ok(id - 1),
            _ => Err(Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: format!("invalid region id `{token}`"),
            }),
        }
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, tail) = line.split_once(':').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message: "expected `id: neighbour ids`".into(),
        })?;
        let id = parse_id(head, lineno + 1)?;
        let list = tail
            .split_whitespace()
            .map(|tok| parse_id(tok, lineno + 1))
            .collect::<Result<Vec<_>>>()?;
        entries.push((id, list));
    }
    let n = entries
        .iter()
        .map(|(id, list)| list.iter().copied().chain([*id]).max().unwrap_or(0) + 1)
        .max()
        .unwrap_or(0);
    let mut neighbors = vec![Vec::new(); n];
    let mut listed = vec![false; n];
    for (id, list) in entries {
        if listed[id] {
            return Err(Error::Domain(format!("region {} listed twice", id + 1)));
        }
        listed[id] = true;
        neighbors[id] = list;
    }
    RegionGraph::from_neighbor_lists(neighbors)
}

pub fn load_adjacency(path: impl AsRef<Path>) -> Result<RegionGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_adjacency(&text, path)
}

pub fn write_adjacency(graph: &RegionGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (i, list) in graph.neighbors.iter().enumerate() {
        write!(out, "{}:", i + 1).unwrap();
        for k in list {
            write!(out, " {}", k + 1).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RegionGraph> {
        parse_adjacency(text, Path::new("test"))
    }

    #[test]
    fn two_node_graph() {
        let g = parse("1: 2\n2: 1\n").unwrap();
        assert_eq!(g.num_regions(), 2);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn asymmetric_listing_is_rejected() {
        match parse("1: 2\n2:\n") {
            Err(Error::Asymmetry(1, 2)) => {}
            other => panic!("expected asymmetry error, got {other:?}"),
        }
    }

    #[test]
    fn disconnected_graph_reports_components() {
        match parse("1: 2\n2: 1\n3: 4\n4: 3\n5:\n") {
            Err(Error::DisconnectedGraph(sizes)) => assert_eq!(sizes, vec![2, 2, 1]),
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn self_loop_is_rejected() {
        assert!(matches!(parse("1: 1 2\n2: 1\n"), Err(Error::Domain(_))));
    }

    #[test]
    fn builtin_portugal_graph() {
        let g = RegionGraph::portugal_nuts3();
        assert_eq!(g.num_regions(), 28);
        assert_eq!(g.num_edges(), 60);
        assert_eq!(g.edges().count(), 60);
        // Grande Lisboa borders Oeste; Algarve only the two southern Alentejo units.
        assert!(g.are_neighbors(19, 18));
        assert_eq!(g.neighbors(27), &[23, 26]);
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let g = RegionGraph::portugal_nuts3();
        let n = g.num_regions();
        let q = g.laplacian();
        for i in 0..n {
            let s: f64 = q[i * n..(i + 1) * n].iter().sum();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn write_then_parse_round_trips() {
        let g = RegionGraph::portugal_nuts3();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.adj");
        write_adjacency(&g, &path).unwrap();
        assert_eq!(load_adjacency(&path).unwrap(), g);
    }
}
