//! Primal network simplex for uncapacitated min-cost flow with real supplies.
//!
//! Spanning-tree bookkeeping is kept simple: after each pivot the subtree that
//! moved gets its depth and potential refreshed by a DFS.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub cost: f64,
    /// Node potentials `π` with `c(u,v) + π(u) − π(v) ≥ 0` on every arc.
    pub potential: Vec<f64>,
    pub pivots: usize,
}

/// Minimizes `Σ c_a x_a` over `x ≥ 0` with `out(v) − in(v) = supply(v)`.
/// Supplies must sum to zero (up to round-off) and every node must be able to
/// route flow; otherwise an error is returned.
pub fn min_cost_flow(n: usize, arcs: &[Arc], supply: &[f64]) -> Result<FlowSolution> {
    if supply.len() != n {
        return Err(Error::Internal("supply length".into()));
    }
    let scale: f64 = supply.iter().map(|s| s.abs()).sum::<f64>().max(1e-300);
    let imbalance: f64 = supply.iter().sum();
    if imbalance.abs() > 1e-9 * scale {
        return Err(Error::Internal(format!("supplies do not balance ({imbalance:e})")));
    }
    let max_cost = arcs.iter().fold(0.0f64, |m, a| m.max(a.cost.abs()));
    let art_cost = (max_cost + 1.0) * (n as f64 + 1.0);

    let root = n;
    let m_real = arcs.len();
    let mut from: Vec<usize> = arcs.iter().map(|a| a.from).collect();
    let mut to: Vec<usize> = arcs.iter().map(|a| a.to).collect();
    let mut cost: Vec<f64> = arcs.iter().map(|a| a.cost).collect();
    let mut flow = vec![0.0; m_real];

    let mut parent = vec![usize::MAX; n + 1];
    let mut pred = vec![usize::MAX; n + 1];
    let mut depth = vec![0usize; n + 1];
    let mut pot = vec![0.0; n + 1];
    for v in 0..n {
        let a = from.len();
        if supply[v] >= 0.0 {
            from.push(v);
            to.push(root);
            flow.push(supply[v]);
            pot[v] = -art_cost;
        } else {
            from.push(root);
            to.push(v);
            flow.push(-supply[v]);
            pot[v] = art_cost;
        }
        cost.push(art_cost);
        parent[v] = root;
        pred[v] = a;
        depth[v] = 1;
    }
    let m = from.len();
    let mut in_tree = vec![false; m];
    for v in 0..n {
        in_tree[pred[v]] = true;
    }

    let block = ((m as f64).sqrt().ceil() as usize).max(10);
    let eps = 1e-12 * (max_cost + 1.0);
    let mut next_arc = 0usize;
    let mut pivots = 0usize;
    let max_pivots = 200 * (m + n) + 10_000;

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for v in 0..n {
        children[root].push(v);
    }

    loop {
        // Block pricing: scan arcs in blocks, take the most negative in the first block that has one.
        let mut entering = usize::MAX;
        let mut best = -eps;
        let mut scanned = 0;
        let mut cnt = 0;
        while scanned < m {
            let a = next_arc;
            next_arc = if next_arc + 1 == m { 0 } else { next_arc + 1 };
            scanned += 1;
            cnt += 1;
            if !in_tree[a] {
                let rc = cost[a] + pot[from[a]] - pot[to[a]];
                if rc < best {
                    best = rc;
                    entering = a;
                }
            }
            if cnt >= block {
                if entering != usize::MAX {
                    break;
                }
                cnt = 0;
            }
        }
        if entering == usize::MAX {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NonConvergence(format!("network simplex exceeded {max_pivots} pivots")));
        }

        let u = from[entering];
        let v = to[entering];
        // Cycle: u → v along the entering arc, then v up to the join and down to u.
        let mut a_side = v;
        let mut b_side = u;
        while a_side != b_side {
            if depth[a_side] >= depth[b_side] {
                a_side = parent[a_side];
            } else {
                b_side = parent[b_side];
            }
        }
        let join = a_side;

        let mut delta = f64::INFINITY;
        let mut leave_node = usize::MAX;
        // v side: traversing child → parent; decreasing when arc points parent → child.
        let mut x = v;
        while x != join {
            let a = pred[x];
            if from[a] != x && flow[a] < delta {
                delta = flow[a];
                leave_node = x;
            }
            x = parent[x];
        }
        // u side: traversing parent → child; decreasing when arc points child → parent.
        let mut x = u;
        while x != join {
            let a = pred[x];
            if from[a] == x && flow[a] <= delta {
                delta = flow[a];
                leave_node = x;
            }
            x = parent[x];
        }
        if leave_node == usize::MAX {
            return Err(Error::Internal("unbounded min-cost flow".into()));
        }

        // Push delta around the cycle.
        if delta > 0.0 {
            flow[entering] += delta;
            let mut x = v;
            while x != join {
                let a = pred[x];
                if from[a] == x {
                    flow[a] += delta;
                } else {
                    flow[a] -= delta;
                }
                x = parent[x];
            }
            let mut x = u;
            while x != join {
                let a = pred[x];
                if from[a] == x {
                    flow[a] -= delta;
                } else {
                    flow[a] += delta;
                }
                x = parent[x];
            }
        }
        let leaving = pred[leave_node];
        flow[leaving] = 0.0;
        in_tree[leaving] = false;
        in_tree[entering] = true;

        // Re-hang the subtree below the leaving arc from the entering arc.
        let on_v_side = {
            let mut x = v;
            let mut found = false;
            while x != join {
                if x == leave_node {
                    found = true;
                    break;
                }
                x = parent[x];
            }
            found
        };
        let (q, q_other) = if on_v_side { (v, u) } else { (u, v) };
        // Reverse the path q .. leave_node.
        let mut path = vec![q];
        let mut x = q;
        while x != leave_node {
            x = parent[x];
            path.push(x);
        }
        let old_parent_of_leave = parent[leave_node];
        remove_child(&mut children[old_parent_of_leave], leave_node);
        for w in (1..path.len()).rev() {
            let child = path[w];
            let par = path[w - 1];
            // child's new parent is par, through par's old pred arc.
            remove_child(&mut children[child], par);
            parent[child] = par;
            pred[child] = pred[par];
            children[par].push(child);
        }
        parent[q] = q_other;
        pred[q] = entering;
        children[q_other].push(q);

        // Refresh depth and potential in the moved subtree.
        let mut stack = vec![q];
        while let Some(x) = stack.pop() {
            let p = parent[x];
            let a = pred[x];
            depth[x] = depth[p] + 1;
            pot[x] = if from[a] == x { pot[p] - cost[a] } else { pot[p] + cost[a] };
            stack.extend_from_slice(&children[x]);
        }
    }

    let art_flow: f64 = flow[m_real..].iter().sum();
    if art_flow > 1e-9 * scale {
        return Err(Error::Internal(format!("infeasible flow problem (residual {art_flow:e})")));
    }
    let total: f64 = (0..m_real).map(|a| flow[a] * cost[a]).sum();
    pot.truncate(n);
    Ok(FlowSolution {
        cost: total,
        potential: pot,
        pivots,
    })
}

fn remove_child(list: &mut Vec<usize>, c: usize) {
    if let Some(i) = list.iter().position(|&x| x == c) {
        list.swap_remove(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_transport() {
        let arcs = [Arc { from: 0, to: 1, cost: 2.5 }, Arc { from: 1, to: 0, cost: 2.5 }];
        let s = min_cost_flow(2, &arcs, &[3.0, -3.0]).unwrap();
        assert!((s.cost - 7.5).abs() < 1e-12);
    }

    #[test]
    fn prefers_cheaper_route() {
        // 0 → 2 directly costs 5, via 1 costs 1 + 1.
        let arcs = [
            Arc { from: 0, to: 2, cost: 5.0 },
            Arc { from: 0, to: 1, cost: 1.0 },
            Arc { from: 1, to: 2, cost: 1.0 },
        ];
        let s = min_cost_flow(3, &arcs, &[1.0, 0.0, -1.0]).unwrap();
        assert!((s.cost - 2.0).abs() < 1e-12);
        for a in &arcs {
            assert!(a.cost + s.potential[a.from] - s.potential[a.to] >= -1e-9);
        }
    }

    #[test]
    fn assignment_on_line() {
        // Sources at 0 and 1, sinks at 2 and 3: optimal cost 4.
        let pos = [0.0f64, 1.0, 2.0, 3.0];
        let mut arcs = vec![];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    arcs.push(Arc { from: i, to: j, cost: (pos[i] - pos[j]).abs() });
                }
            }
        }
        let s = min_cost_flow(4, &arcs, &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert!((s.cost - 4.0).abs() < 1e-12);
    }
}
