//! Static k-d tree over the atoms of a measure, used for region queries.

use super::Region;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    dim: usize,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(dim: usize, coords: &[f64]) -> Self {
        let count = coords.len().checked_div(dim).unwrap_or(0);
        let mut tree = KdTree {
            dim,
            perm: (0..count).collect(),
            nodes: Vec::new(),
        };
        if count > 0 {
            tree.build_node(coords, 0, count);
        }
        tree
    }

    fn build_node(&mut self, coords: &[f64], start: usize, end: usize) -> usize {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.perm[start..end] {
            for k in 0..dim {
                let c = coords[i * dim + k];
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo: lo.clone(),
            hi: hi.clone(),
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
                .unwrap_or(0);
            if hi[axis] > lo[axis] {
                let mid = (start + end) / 2;
                self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                    coords[a * dim + axis]
                        .partial_cmp(&coords[b * dim + axis])
                        .unwrap()
                        .then(a.cmp(&b))
                });
                let l = self.build_node(coords, start, mid);
                let r = self.build_node(coords, mid, end);
                self.nodes[id].children = Some((l, r));
            }
        }
        id
    }

    /// Indices of atoms strictly inside `region`, ascending.
    pub fn query(&self, coords: &[f64], region: &Region) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.query_node(0, coords, region, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn query_node(&self, id: usize, coords: &[f64], region: &Region, out: &mut Vec<usize>) {
        let node = &self.nodes[id];
        if region.misses_box(&node.lo, &node.hi) {
            return;
        }
        if region.contains_box(&node.lo, &node.hi) {
            out.extend_from_slice(&self.perm[node.start..node.end]);
            return;
        }
        match node.children {
            Some((l, r)) => {
                self.query_node(l, coords, region, out);
                self.query_node(r, coords, region, out);
            }
            None => {
                let dim = self.dim;
                for &i in &self.perm[node.start..node.end] {
                    if region.contains(&coords[i * dim..(i + 1) * dim]) {
                        out.push(i);
                    }
                }
            }
        }
    }
}
