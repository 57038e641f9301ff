//! Brute-force audit of the lattice properties.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HashGrid, Lattice};
use crate::linalg::{dist, linear_fit};
use crate::measure::{Ball, DiscreteMeasure, Region};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    pub violations: usize,
    /// First offending cell ids (at most 20).
    pub offenders: Vec<usize>,
    pub measured: String,
    pub asserted: String,
}

impl PropertyCheck {
    fn new(name: &str, offenders: Vec<usize>, measured: String, asserted: &str) -> Self {
        PropertyCheck {
            name: name.into(),
            pass: offenders.is_empty(),
            violations: offenders.len(),
            offenders: offenders.into_iter().take(20).collect(),
            measured,
            asserted: asserted.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeReport {
    pub checks: Vec<PropertyCheck>,
    /// `(l, Σσ(N_l(Q)) / Σσ(90B(Q)))`.
    pub small_boundary: Vec<(usize, f64)>,
    /// Mass fraction carried by the doubling cells of generation `g`, per `g`.
    pub doubling_coverage: Vec<f64>,
    pub regime_deviation: bool,
}

impl LatticeReport {
    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Nesting, partition, 5B-disjointness and containment all hold.
    pub fn structural_pass(&self) -> bool {
        ["nesting", "partition", "disjoint_5b", "containment"]
            .iter()
            .all(|n| self.check(n).is_some_and(|c| c.pass))
    }
}

pub fn verify_lattice(lat: &Lattice, mu: &DiscreteMeasure) -> LatticeReport {
    let mut checks = Vec::new();

    // Nesting: parent one generation up, child members inside the parent.
    let bad: Vec<usize> = lat
        .cells
        .par_iter()
        .filter(|c| match c.parent {
            None => c.generation != 0,
            Some(p) => {
                let pc = &lat.cells[p];
                let mut pm = pc.members.clone();
                pm.sort_unstable();
                pc.generation + 1 != c.generation
                    || !pc.children.contains(&c.id)
                    || c.members.iter().any(|i| pm.binary_search(i).is_err())
            }
        })
        .map(|c| c.id)
        .collect();
    checks.push(PropertyCheck::new("nesting", bad, format!("{} cells", lat.cells.len()), "children lie inside parents"));

    // Partition: each generation covers every atom once; children partition parents.
    let mut bad = Vec::new();
    for gen in &lat.generations {
        let mut count = vec![0u32; mu.len()];
        for &id in gen {
            for &i in &lat.cells[id].members {
                count[i] += 1;
            }
        }
        if count.iter().any(|&c| c != 1) {
            bad.extend(gen.iter().copied().filter(|&id| lat.cells[id].members.iter().any(|&i| count[i] != 1)));
            if bad.is_empty() {
                bad.push(gen[0]);
            }
        }
    }
    for c in &lat.cells {
        if c.children.is_empty() {
            continue;
        }
        let mut all: Vec<usize> = c.children.iter().flat_map(|&k| lat.cells[k].members.iter().copied()).collect();
        all.sort_unstable();
        let mut own = c.members.clone();
        own.sort_unstable();
        if all != own {
            bad.push(c.id);
        }
    }
    bad.sort_unstable();
    bad.dedup();
    checks.push(PropertyCheck::new(
        "partition",
        bad,
        format!("{} generations × {} atoms", lat.generations.len(), mu.len()),
        "each generation partitions the atoms",
    ));

    // 5B disjointness within a generation.
    let mut bad = Vec::new();
    for gen in &lat.generations {
        let rmax = gen.iter().map(|&id| lat.cells[id].r).fold(0.0f64, f64::max);
        let mut grid = HashGrid::new(10.0 * rmax);
        for &id in gen {
            grid.insert(id, &lat.cells[id].center);
        }
        let found: Vec<usize> = gen
            .par_iter()
            .copied()
            .filter(|&id| {
                let c = &lat.cells[id];
                grid.near(&c.center).iter().any(|&o| {
                    o != id && dist(&c.center, &lat.cells[o].center) <= 5.0 * (c.r + lat.cells[o].r)
                })
            })
            .collect();
        bad.extend(found);
    }
    checks.push(PropertyCheck::new("disjoint_5b", bad, "pairwise center gaps".into(), "5B(Q) pairwise disjoint per generation"));

    // Containment W ∩ B(Q) ⊆ Q ⊆ 28B(Q).
    let bad: Vec<usize> = lat
        .cells
        .par_iter()
        .filter(|c| {
            let mut m = c.members.clone();
            m.sort_unstable();
            let inner = mu.atoms_in(&Region::Ball(c.ball(1.0)));
            inner.iter().any(|i| m.binary_search(i).is_err())
                || c.members.iter().any(|&i| dist(mu.point(i), &c.center) > 28.0 * c.r)
        })
        .map(|c| c.id)
        .collect();
    checks.push(PropertyCheck::new("containment", bad, "ball queries per cell".into(), "W∩B(Q) ⊆ Q ⊆ W∩28B(Q)"));

    // Small boundaries: N_l(Q) = atoms within A₀^{-k-l} of the other side of ∂Q.
    let a0 = lat.params.a0;
    let levels = 3usize;
    let mut num = vec![0.0f64; levels];
    let mut den = 0.0f64;
    let mut owner_by_gen: Vec<Vec<usize>> = Vec::with_capacity(lat.generations.len());
    for gen in &lat.generations {
        let mut own = vec![usize::MAX; mu.len()];
        for &id in gen {
            for &i in &lat.cells[id].members {
                own[i] = id;
            }
        }
        owner_by_gen.push(own);
    }
    for (k, gen) in lat.generations.iter().enumerate() {
        let own = &owner_by_gen[k];
        den += gen.iter().map(|&id| mu.mass_in(&Region::Ball(lat.cells[id].ball(90.0)))).sum::<f64>();
        for (l, slot) in num.iter_mut().enumerate() {
            let lam = a0.powi(-((k + l + 1) as i32));
            // An atom sits in N_l of its own cell and of every other cell with
            // an atom within λ; count each such (atom, cell) pair.
            let s: f64 = (0..mu.len())
                .into_par_iter()
                .map(|i| {
                    let p = mu.point(i);
                    let mut others: Vec<usize> = mu
                        .atoms_in(&Region::Ball(Ball {
                            center: p.to_vec(),
                            radius: lam,
                        }))
                        .into_iter()
                        .map(|j| own[j])
                        .filter(|&c| c != own[i])
                        .collect();
                    others.sort_unstable();
                    others.dedup();
                    if others.is_empty() {
                        0.0
                    } else {
                        mu.weight(i) * (1 + others.len()) as f64
                    }
                })
                .sum();
            *slot += s;
        }
    }
    let small_boundary: Vec<(usize, f64)> =
        num.iter().enumerate().map(|(l, v)| (l + 1, if den > 0.0 { v / den } else { 0.0 })).collect();
    let nonincreasing = small_boundary.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-15);
    let pos: Vec<(f64, f64)> = small_boundary.iter().filter(|p| p.1 > 0.0).map(|p| (p.0 as f64, p.1.ln())).collect();
    let base = if pos.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        (-linear_fit(&xs, &ys).0).exp()
    } else {
        f64::INFINITY
    };
    checks.push(PropertyCheck {
        name: "small_boundary".into(),
        pass: nonincreasing,
        violations: usize::from(!nonincreasing),
        offenders: Vec::new(),
        measured: format!("ratios {small_boundary:?}, fitted base {base:.3}"),
        asserted: "σ(N_l(Q)) ≤ (C⁻¹K₀^{-3(n+1)-1}A₀)^{-l} σ(90B(Q))".into(),
    });

    // Non-doubling decay along chains of non-doubling cells.
    let n = mu.n() as i32;
    let m100: Vec<f64> = lat.cells.par_iter().map(|c| mu.mass_in(&Region::Ball(c.ball(100.0)))).collect();
    let bad: Vec<usize> = lat
        .cells
        .par_iter()
        .filter(|q| {
            if q.flags.doubling {
                return false;
            }
            let mut cur = q.parent;
            while let Some(r) = cur {
                let gap = q.generation as i32 - lat.cells[r].generation as i32 - 1;
                if m100[q.id] > a0.powi(-10 * n * gap) * m100[r] * (1.0 + 1e-12) {
                    return true;
                }
                if lat.cells[r].flags.doubling {
                    break;
                }
                cur = lat.cells[r].parent;
            }
            false
        })
        .map(|c| c.id)
        .collect();
    checks.push(PropertyCheck::new(
        "nondoubling_decay",
        bad,
        "chains of non-doubling cells".into(),
        "σ(100B(Q)) ≤ A₀^{-10n(J(Q)-J(R)-1)} σ(100B(R))",
    ));

    // Mass carried by the doubling cells of each generation.
    let total = mu.total_mass();
    let doubling_coverage = lat
        .generations
        .iter()
        .map(|gen| {
            let m: f64 = gen
                .iter()
                .map(|&id| &lat.cells[id])
                .filter(|c| c.flags.doubling)
                .flat_map(|c| c.members.iter().map(|&i| mu.weight(i)))
                .sum();
            if total > 0.0 {
                m / total + 0.0
            } else {
                0.0
            }
        })
        .collect();

    LatticeReport {
        checks,
        small_boundary,
        doubling_coverage,
        regime_deviation: lat.regime_deviation,
    }
}
