//! Agglomerative hierarchical clustering on a distance matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::DistanceMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Single,
    Complete,
    Average,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::invalid("linkage", format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        })
    }
}

/// One agglomeration step. Nodes `0..m` are leaves; merge `k` creates node
/// `m + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub method: Linkage,
    pub merges: Vec<Merge>,
    pub leaf_labels: Vec<String>,
}

impl Dendrogram {
    pub fn leaves(&self) -> usize {
        self.leaf_labels.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serializes")
    }

    /// Leaves in drawing order (left subtree first).
    pub fn leaf_order(&self) -> Vec<usize> {
        let m = self.leaves();
        if m == 0 {
            return Vec::new();
        }
        if self.merges.is_empty() {
            return (0..m).collect();
        }
        let mut out = Vec::with_capacity(m);
        let mut stack = vec![m + self.merges.len() - 1];
        while let Some(node) = stack.pop() {
            if node < m {
                out.push(node);
            } else {
                let mg = &self.merges[node - m];
                stack.push(mg.right);
                stack.push(mg.left);
            }
        }
        out
    }
}

/// Clusters the rows of `d`. Ties are broken by the smallest pair of active
/// cluster slots; the merged cluster takes the smaller slot.
pub fn linkage(d: &DistanceMatrix, method: Linkage) -> Result<Dendrogram> {
    d.validate()?;
    let m = d.len();
    if m == 0 {
        return Err(Error::invalid("distance matrix", "no leaves"));
    }
    let mut dist = d.values.clone();
    let mut active = vec![true; m];
    let mut node = (0..m).collect::<Vec<usize>>();
    let mut size = vec![1usize; m];
    let mut merges = Vec::with_capacity(m - 1);

    for step in 0..m - 1 {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in (0..m).filter(|&i| active[i]) {
            for j in (i + 1..m).filter(|&j| active[j]) {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (h, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..m).filter(|&k| active[k] && k != i && k != j) {
            let (dik, djk) = (dist[i][k], dist[j][k]);
            let v = match method {
                Linkage::Single => dik.min(djk),
                Linkage::Complete => dik.max(djk),
                Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
            };
            dist[i][k] = v;
            dist[k][i] = v;
        }
        let (a, b) = (node[i].min(node[j]), node[i].max(node[j]));
        merges.push(Merge {
            left: a,
            right: b,
            height: h,
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        node[i] = m + step;
    }
    Ok(Dendrogram {
        method,
        merges,
        leaf_labels: d.labels.clone(),
    })
}

/// Flat clustering into `k` groups by undoing the `k - 1` last merges.
/// Labels are `0..k`, numbered by first occurrence along the leaves.
pub fn cut(dend: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let m = dend.leaves();
    if k < 1 || k > m {
        return Err(Error::invalid("cluster count", format!("k = {k} with {m} leaves")));
    }
    // union-find over the first m - k merges
    let mut parent: Vec<usize> = (0..2 * m).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (s, mg) in dend.merges.iter().take(m - k).enumerate() {
        let new = m + s;
        let (a, b) = (find(&mut parent, mg.left), find(&mut parent, mg.right));
        parent[a] = new;
        parent[b] = new;
    }
    let mut ids: Vec<Option<usize>> = vec![None; 2 * m];
    let mut next = 0;
    Ok((0..m)
        .map(|leaf| {
            let root = find(&mut parent, leaf);
            *ids[root].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect())
}
