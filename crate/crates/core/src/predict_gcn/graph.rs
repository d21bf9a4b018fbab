use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GcnError;
use crate::tensor::Matrix;

pub const PRODUCTPAGE: &str = "productpage";
pub const DETAILS: &str = "details";
pub const REVIEWS: &str = "reviews";
pub const RATINGS: &str = "ratings";

/// `D̃^(−1/2) (A + I) D̃^(−1/2)` for a square, symmetric 0/1 adjacency with
/// an empty diagonal.
pub fn normalize_adjacency(adjacency: &Matrix) -> Result<Matrix, GcnError> {
    let (n, m) = adjacency.shape();
    if n != m {
        return Err(GcnError::NotSquare { rows: n, cols: m });
    }
    for i in 0..n {
        for j in 0..n {
            let v = adjacency.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(GcnError::NotBinary {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            if v != adjacency.get(j, i) {
                return Err(GcnError::Asymmetric { row: i, col: j });
            }
        }
        if adjacency.get(i, i) != 0.0 {
            return Err(GcnError::SelfLoop(i));
        }
    }
    let degree_inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = 1.0 + adjacency.row(i).iter().sum::<f64>();
            1.0 / d.sqrt()
        })
        .collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a_tilde = adjacency.get(i, j) + if i == j { 1.0 } else { 0.0 };
            if a_tilde != 0.0 {
                out.set(i, j, degree_inv_sqrt[i] * a_tilde * degree_inv_sqrt[j]);
            }
        }
    }
    Ok(out)
}

/// Static undirected dependency graph between microservices.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceGraph {
    nodes: Vec<String>,
    adjacency: Matrix,
    normalized: Matrix,
}

/// On-disk graph definition: ordered node names and undirected edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl ServiceGraph {
    pub fn from_adjacency(nodes: Vec<String>, adjacency: Matrix) -> Result<Self, GcnError> {
        if nodes.is_empty() {
            return Err(GcnError::EmptyGraph);
        }
        if adjacency.shape() != (nodes.len(), nodes.len()) {
            return Err(GcnError::NotSquare {
                rows: adjacency.rows(),
                cols: adjacency.cols(),
            });
        }
        for (i, a) in nodes.iter().enumerate() {
            if nodes[..i].contains(a) {
                return Err(GcnError::DuplicateNode(a.clone()));
            }
        }
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(Self {
            nodes,
            adjacency,
            normalized,
        })
    }

    pub fn from_edges<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self, GcnError> {
        let names: Vec<String> = nodes.iter().map(|s| s.as_ref().to_string()).collect();
        let n = names.len();
        let mut adjacency = Matrix::zeros(n, n);
        for (a, b) in edges {
            let i = position(&names, a.as_ref())?;
            let j = position(&names, b.as_ref())?;
            if i == j {
                return Err(GcnError::SelfLoop(i));
            }
            adjacency.set(i, j, 1.0);
            adjacency.set(j, i, 1.0);
        }
        Self::from_adjacency(names, adjacency)
    }

    /// productpage–details, productpage–reviews, reviews–ratings.
    pub fn bookinfo() -> Self {
        Self::from_edges(
            &[PRODUCTPAGE, DETAILS, REVIEWS, RATINGS],
            &[(PRODUCTPAGE, DETAILS), (PRODUCTPAGE, REVIEWS), (REVIEWS, RATINGS)],
        )
        .expect("bookinfo topology is valid")
    }

    pub fn from_file(file: &GraphFile) -> Result<Self, GcnError> {
        let edges: Vec<(&str, &str)> = file.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let nodes: Vec<&str> = file.nodes.iter().map(String::as_str).collect();
        Self::from_edges(&nodes, &edges)
    }

    pub fn load(path: &Path) -> Result<Self, GcnError> {
        let text = std::fs::read_to_string(path).map_err(|e| GcnError::Io(format!("{}: {e}", path.display())))?;
        let file: GraphFile =
            serde_json::from_str(&text).map_err(|e| GcnError::Io(format!("{}: {e}", path.display())))?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> GraphFile {
        let mut edges = Vec::new();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if self.adjacency.get(i, j) != 0.0 {
                    edges.push((self.nodes[i].clone(), self.nodes[j].clone()));
                }
            }
        }
        GraphFile {
            nodes: self.nodes.clone(),
            edges,
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, GcnError> {
        position(&self.nodes, name)
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency.get(a, b) != 0.0
    }

    /// Same graph with nodes reordered so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GcnError> {
        let n = self.len();
        let mut adjacency = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                adjacency.set(i, j, self.adjacency.get(perm[i], perm[j]));
            }
        }
        let nodes = perm.iter().map(|&p| self.nodes[p].clone()).collect();
        Self::from_adjacency(nodes, adjacency)
    }
}

fn position(nodes: &[String], name: &str) -> Result<usize, GcnError> {
    nodes
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| GcnError::UnknownNode(name.to_string()))
}
