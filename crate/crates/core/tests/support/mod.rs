//! Independent oracles shared by integration and acceptance tests.
#![allow(dead_code)]

use rand::Rng;

/// Random directed graph: `(nodes, arcs (from, to, gain, cost), boundary nodes)`.
pub type SmallGraph = (usize, Vec<(usize, usize, f64, f64)>, Vec<usize>);

/// Integer gains in [-5, 5] and costs in [1, 6], so ratios compare exactly.
pub fn random_graph(rng: &mut impl Rng) -> SmallGraph {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(1..=12);
    let mut arcs = Vec::with_capacity(m);
    while arcs.len() < m {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            arcs.push((a, b, rng.gen_range(-5..=5) as f64, rng.gen_range(1..=6) as f64));
        }
    }
    let mut boundary: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.35)).collect();
    boundary.dedup();
    (n, arcs, boundary)
}

/// Max of `Σgain/Σcost` over arc subsets forming one simple directed cycle or one
/// simple path between distinct boundary nodes; 0 when nothing positive exists.
pub fn brute_force_ratio(g: &SmallGraph) -> f64 {
    let (n, arcs, boundary) = g;
    let m = arcs.len();
    let mut best = 0.0f64;
    for mask in 1u32..(1 << m) {
        let sel: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let mut indeg = vec![0; *n];
        let mut outdeg = vec![0; *n];
        for &i in &sel {
            outdeg[arcs[i].0] += 1;
            indeg[arcs[i].1] += 1;
        }
        if indeg.iter().chain(&outdeg).any(|&d| d > 1) {
            continue;
        }
        let sources: Vec<usize> = (0..*n).filter(|&v| outdeg[v] == 1 && indeg[v] == 0).collect();
        let sinks: Vec<usize> = (0..*n).filter(|&v| indeg[v] == 1 && outdeg[v] == 0).collect();
        let start = match (sources.len(), sinks.len()) {
            (0, 0) => arcs[sel[0]].0,
            (1, 1) if boundary.contains(&sources[0]) && boundary.contains(&sinks[0]) => sources[0],
            _ => continue,
        };
        // walk from start and require that the walk uses every selected arc
        let mut v = start;
        let mut used = 0;
        while let Some(&i) = sel.iter().find(|&&i| arcs[i].0 == v) {
            used += 1;
            v = arcs[i].1;
            if v == start || used > sel.len() {
                break;
            }
        }
        if used != sel.len() {
            continue;
        }
        let gsum: f64 = sel.iter().map(|&i| arcs[i].2).sum();
        let csum: f64 = sel.iter().map(|&i| arcs[i].3).sum();
        best = best.max(gsum / csum);
    }
    best
}

/// Minimum assignment cost by enumerating all permutations.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost[row].len() {
            if !used[j] {
                used[j] = true;
                rec(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost[0].len()], 0.0, &mut best);
    best
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let w = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let t = if dd > 0.0 { ((w[0] * d[0] + w[1] * d[1] + w[2] * d[2]) / dd).clamp(0.0, 1.0) } else { 0.0 };
    let q = [w[0] - t * d[0], w[1] - t * d[1], w[2] - t * d[2]];
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt()
}

/// Chord of the unit-direction line `p + s·dir` inside the ball `|x − c| < r`.
pub fn chord(p: [f64; 3], dir: [f64; 3], c: [f64; 3], r: f64) -> Option<([f64; 3], [f64; 3])> {
    let w = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
    let b = w[0] * dir[0] + w[1] * dir[1] + w[2] * dir[2];
    let cc = w[0] * w[0] + w[1] * w[1] + w[2] * w[2] - r * r;
    let disc = b * b - cc;
    if disc <= 0.0 {
        return None;
    }
    let (s0, s1) = (-b - disc.sqrt(), -b + disc.sqrt());
    let at = |s: f64| [p[0] + s * dir[0], p[1] + s * dir[1], p[2] + s * dir[2]];
    Some((at(s0), at(s1)))
}
