//! Similarity clustering of span embeddings.

use super::embed::cosine;

/// Tolerance applied to inclusive similarity thresholds.
pub(crate) const SLACK: f64 = 1e-12;

/// Cluster assignment for a list of spans. Spans in components smaller
/// than the minimum size are singletons (`None`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clusters {
    pub assignment: Vec<Option<usize>>,
    pub members: Vec<Vec<usize>>,
}

impl Clusters {
    pub fn cluster_of(&self, span: usize) -> Option<&[usize]> {
        self.assignment.get(span).copied().flatten().map(|c| self.members[c].as_slice())
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the graph linking spans with cosine at least
/// `threshold`. Cluster ids follow each component's smallest member.
pub fn cluster_embeddings(embeddings: &[Vec<f64>], threshold: f64, min_size: usize) -> Clusters {
    let n = embeddings.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&embeddings[i], &embeddings[j]) >= threshold - SLACK {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        by_root.entry(r).or_default().push(i);
    }
    let mut assignment = vec![None; n];
    let mut members = Vec::new();
    for (_, group) in by_root {
        if group.len() >= min_size.max(1) {
            for &i in &group {
                assignment[i] = Some(members.len());
            }
            members.push(group);
        }
    }
    Clusters { assignment, members }
}
