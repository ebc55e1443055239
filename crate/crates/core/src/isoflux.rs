//! Polyhedral 1-currents and the weighted isoflux problem.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{contract, Error, Result};
use crate::mesh::{ijk3, Grid, Loc, ScalarField, VKind, VectorField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub mult: i64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        crate::mesh::norm(crate::mesh::sub(self.b, self.a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurrentKind {
    Loop,
    BoundaryToBoundary,
    Mixed,
}

/// Integer-multiplicity polygonal current.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyCurrent {
    pub segments: Vec<Segment>,
    pub kind: CurrentKind,
}

fn key(p: [f64; 3]) -> [i64; 3] {
    p.map(|x| (x * 1e9).round() as i64)
}

impl PolyCurrent {
    pub fn empty() -> PolyCurrent {
        PolyCurrent { segments: Vec::new(), kind: CurrentKind::Loop }
    }

    /// Drops zero-multiplicity and zero-length segments.
    pub fn new(segments: Vec<Segment>, kind: CurrentKind) -> PolyCurrent {
        let segments = segments.into_iter().filter(|s| s.mult != 0 && s.length() > 0.0).collect();
        PolyCurrent { segments, kind }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// `Σ |m|·length`.
    pub fn mass(&self) -> f64 {
        self.segments.iter().map(|s| s.mult.unsigned_abs() as f64 * s.length()).sum()
    }

    /// Signed endpoint counts (end minus start), with cancelled points removed.
    pub fn boundary(&self) -> Vec<([f64; 3], i64)> {
        let mut m: BTreeMap<[i64; 3], ([f64; 3], i64)> = BTreeMap::new();
        for s in &self.segments {
            m.entry(key(s.b)).or_insert((s.b, 0)).1 += s.mult;
            m.entry(key(s.a)).or_insert((s.a, 0)).1 -= s.mult;
        }
        m.into_values().filter(|(_, c)| *c != 0).collect()
    }

    pub fn scaled_mult(&self, k: i64) -> PolyCurrent {
        let segments = self.segments.iter().map(|s| Segment { mult: s.mult * k, ..*s }).collect();
        PolyCurrent { segments, kind: self.kind }
    }
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Parameters in [0,1] where the segment crosses half-spacing planes, so that
/// trilinear interpolants of every staggered lattice are polynomial per piece.
fn breakpoints(g: &Grid, a: [f64; 3], b: [f64; 3]) -> Vec<f64> {
    let s = g.spec();
    let h = g.h();
    let mut t = vec![0.0, 1.0];
    for ax in 0..3 {
        let d = b[ax] - a[ax];
        if d == 0.0 {
            continue;
        }
        let half = 0.5 * h[ax];
        let (x0, x1) = if d > 0.0 { (a[ax], b[ax]) } else { (b[ax], a[ax]) };
        let k0 = ((x0 - s.box_min[ax]) / half).ceil() as i64;
        let k1 = ((x1 - s.box_min[ax]) / half).floor() as i64;
        for k in k0..=k1 {
            let x = s.box_min[ax] + k as f64 * half;
            let tt = (x - a[ax]) / d;
            if tt > 0.0 && tt < 1.0 {
                t.push(tt);
            }
        }
    }
    t.sort_by(|x, y| x.partial_cmp(y).unwrap());
    t.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    t
}

fn inside_box(g: &Grid, p: [f64; 3]) -> bool {
    let s = g.spec();
    (0..3).all(|a| p[a] >= s.box_min[a] - 1e-12 && p[a] <= s.box_max[a] + 1e-12)
}

/// Piecewise 3-point Gauss rule for `∫_seg f ds`-type integrands.
fn seg_quad(g: &Grid, a: [f64; 3], b: [f64; 3], mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
    let t = breakpoints(g, a, b);
    let mut s = 0.0;
    for w in t.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let half = 0.5 * (t1 - t0);
        let mid = 0.5 * (t0 + t1);
        for (x, wt) in GAUSS3 {
            let tt = mid + half * x;
            let p = [0, 1, 2].map(|i| a[i] + tt * (b[i] - a[i]));
            s += wt * half * f(p);
        }
    }
    s
}

/// Trilinear interpolation of a cell field over the Ω cells only, with
/// weights renormalized over the in-Ω corners.
pub fn interp_omega(f: &ScalarField, p: [f64; 3]) -> Option<f64> {
    let g = &f.grid;
    let s = g.spec();
    let h = g.h();
    let n = g.n();
    let cin = g.cell_in();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let x = ((p[a] - s.box_min[a]) / h[a] - 0.5).clamp(0.0, (n[a] - 1) as f64);
        let i = (x.floor() as usize).min(n[a] - 2);
        base[a] = i;
        frac[a] = x - i as f64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let w: f64 = (0..3).map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
        if w == 0.0 {
            continue;
        }
        let c = crate::mesh::idx3(n, base[0] + o[0], base[1] + o[1], base[2] + o[2]);
        if cin[c] {
            num += w * f.v[c];
            den += w;
        }
    }
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

/// `Σ m ∫_seg B·t` with trilinear field interpolation.
pub fn circulation(gamma: &PolyCurrent, b: &VectorField) -> Result<f64> {
    let g = &b.grid;
    let mut total = 0.0;
    for s in &gamma.segments {
        if !inside_box(g, s.a) || !inside_box(g, s.b) {
            return contract("segment leaves the field's box");
        }
        total += s.mult as f64 * seg_gain(b, s.a, s.b);
    }
    Ok(total)
}

fn seg_gain(b: &VectorField, p: [f64; 3], q: [f64; 3]) -> f64 {
    let d = crate::mesh::sub(q, p);
    seg_quad(&b.grid, p, q, |x| crate::mesh::dot3(b.at(x), d))
}

fn seg_cost(eta: &ScalarField, p: [f64; 3], q: [f64; 3]) -> Result<f64> {
    let len = crate::mesh::norm(crate::mesh::sub(q, p));
    let mut bad = false;
    let v = seg_quad(&eta.grid, p, q, |x| match interp_omega(eta, x) {
        Some(e) if e > 0.0 => e,
        _ => {
            bad = true;
            0.0
        }
    });
    if bad {
        return contract("weight η is not positive along the current");
    }
    Ok(v * len)
}

/// `Σ |m| ∫_seg η ds`.
pub fn weighted_mass(gamma: &PolyCurrent, eta: &ScalarField) -> Result<f64> {
    if eta.loc != Loc::Cell {
        return contract("η must be a cell field");
    }
    let mut total = 0.0;
    for s in &gamma.segments {
        if !inside_box(&eta.grid, s.a) || !inside_box(&eta.grid, s.b) {
            return contract("segment leaves the field's box");
        }
        total += s.mult.unsigned_abs() as f64 * seg_cost(eta, s.a, s.b)?;
    }
    Ok(total)
}

/// The `⋆B` competitor ratio `‖B‖₂² / ‖ηB‖₁` and the bound `‖B‖₂/‖η‖₂`.
#[derive(Clone, Copy, Debug)]
pub struct StarRatio {
    pub ratio: f64,
    pub lower_bound_l2: f64,
    pub zero_field: bool,
}

/// Edge field averaged to cell centres.
pub fn cell_average(b: &VectorField) -> Vec<[f64; 3]> {
    let g = &b.grid;
    let n = g.n();
    let mut out = vec![[0.0; 3]; g.len(Loc::Cell)];
    for (c, o) in out.iter_mut().enumerate() {
        let p = ijk3(n, c);
        for a in 0..3 {
            let (bb, cc) = ((a + 1) % 3, (a + 2) % 3);
            let d = g.dims(Loc::Edge(a));
            let mut s = 0.0;
            for (db, dc) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let mut q = p;
                q[bb] += db;
                q[cc] += dc;
                s += b.c[a][crate::mesh::idx3(d, q[0], q[1], q[2])];
            }
            o[a] = 0.25 * s;
        }
    }
    out
}

pub fn star_ratio(b: &VectorField, eta: &ScalarField) -> Result<StarRatio> {
    if b.kind != VKind::Edge {
        return contract("star ratio needs an edge field");
    }
    crate::mesh::same_grid(&b.grid, &eta.grid)?;
    let g = &b.grid;
    let cb = cell_average(b);
    let (mut b2, mut eb, mut e2) = (0.0, 0.0, 0.0);
    for &c in g.omega_cells() {
        let m2 = cb[c][0] * cb[c][0] + cb[c][1] * cb[c][1] + cb[c][2] * cb[c][2];
        b2 += m2;
        eb += eta.v[c] * m2.sqrt();
        e2 += eta.v[c] * eta.v[c];
    }
    let v = g.vol();
    if b2 == 0.0 {
        return Ok(StarRatio { ratio: 0.0, lower_bound_l2: 0.0, zero_field: true });
    }
    let ratio = (v * b2) / (v * eb);
    let lower = (v * b2).sqrt() / (v * e2).sqrt();
    if ratio < lower - 1e-10 * lower.max(1.0) {
        return Err(Error::Invariant(format!("Cauchy-Schwarz violated: {ratio} < {lower}")));
    }
    Ok(StarRatio { ratio, lower_bound_l2: lower, zero_field: false })
}

/// Directed graph with gains and positive costs; boundary nodes connect to a
/// zero-cost virtual node so that boundary-to-boundary paths count as cycles.
#[derive(Clone, Debug)]
pub struct RatioGraph {
    pub points: Vec<[f64; 3]>,
    pub arcs: Vec<Arc>,
    pub boundary: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub gain: f64,
    pub cost: f64,
}

/// Best structure of a ratio graph: node sequence plus arcs.
#[derive(Clone, Debug)]
pub struct RatioOptimum {
    pub ratio: f64,
    pub arcs: Vec<usize>,
    pub through_boundary: bool,
    pub lambda_bracket: (f64, f64),
    pub iterations: usize,
}

impl RatioGraph {
    pub fn new(n: usize, arcs: Vec<Arc>, boundary: Vec<usize>) -> Result<RatioGraph> {
        for a in &arcs {
            if a.from >= n || a.to >= n || a.from == a.to {
                return contract("arc endpoints out of range or a self-loop");
            }
            if !(a.cost > 0.0) || !a.gain.is_finite() {
                return contract("arc costs must be positive and gains finite");
            }
        }
        if boundary.iter().any(|&b| b >= n) {
            return contract("boundary node out of range");
        }
        Ok(RatioGraph { points: vec![[0.0; 3]; n], arcs, boundary })
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    /// Search for a cycle of negative weight `λc − g` in the augmented graph.
    /// Returns arc indices (augmented numbering) of a simple negative cycle.
    fn negative_cycle(&self, lambda: f64, adj: &[Vec<(usize, usize)>], tol: f64) -> Option<Vec<usize>> {
        let n = self.node_count() + 1;
        let weight = |ai: usize| -> f64 {
            if ai < self.arcs.len() {
                let a = &self.arcs[ai];
                lambda * a.cost - a.gain
            } else {
                0.0
            }
        };
        let mut dist = vec![0.0f64; n];
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut inq = vec![true; n];
        let mut queue: VecDeque<usize> = (0..n).collect();
        let mut relax = 0usize;
        let check_every = n.max(16);
        while let Some(v) = queue.pop_front() {
            inq[v] = false;
            for &(to, ai) in &adj[v] {
                let nd = dist[v] + weight(ai);
                if nd < dist[to] - tol {
                    dist[to] = nd;
                    parent[to] = Some((v, ai));
                    relax += 1;
                    if relax.is_multiple_of(check_every) {
                        if let Some(c) = parent_cycle(&parent) {
                            let w: f64 = c.iter().map(|&ai| weight(ai)).sum();
                            if w < -tol {
                                return Some(c);
                            }
                        }
                    }
                    if !inq[to] {
                        inq[to] = true;
                        queue.push_back(to);
                    }
                }
            }
        }
        parent_cycle(&parent).filter(|c| c.iter().map(|&ai| weight(ai)).sum::<f64>() < -tol)
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let n = self.node_count();
        let s = n;
        let m = self.arcs.len();
        let mut adj = vec![Vec::new(); n + 1];
        for (i, a) in self.arcs.iter().enumerate() {
            adj[a.from].push((a.to, i));
        }
        // virtual arcs: S→b numbered m + 2k, b→S numbered m + 2k + 1
        for (k, &b) in self.boundary.iter().enumerate() {
            adj[s].push((b, m + 2 * k));
            adj[b].push((s, m + 2 * k + 1));
        }
        adj
    }

    fn ratio_of(&self, cycle: &[usize]) -> (f64, f64) {
        let (mut g, mut c) = (0.0, 0.0);
        for &ai in cycle {
            if ai < self.arcs.len() {
                g += self.arcs[ai].gain;
                c += self.arcs[ai].cost;
            }
        }
        (g, c)
    }

    /// Maximize `Σg/Σc` over simple cycles and boundary-to-boundary paths.
    pub fn maximize(&self) -> Result<RatioOptimum> {
        if self.arcs.is_empty() {
            return contract("empty graph");
        }
        let adj = self.adjacency();
        let hi0 = self.arcs.iter().map(|a| a.gain / a.cost).fold(0.0f64, f64::max);
        let scale = self.arcs.iter().map(|a| a.gain.abs() + hi0 * a.cost).fold(0.0f64, f64::max);
        let tol = 1e-12 * scale.max(1e-300);
        let (mut lo, mut hi) = (0.0f64, hi0);
        let mut best: Option<Vec<usize>> = None;
        let mut lambda = lo;
        let mut iters = 0usize;
        let mut dinkelbach;
        while hi - lo > 1e-9 {
            iters += 1;
            if iters > 500 {
                return Err(Error::Solver("ratio search exceeded its iteration cap".into()));
            }
            match self.negative_cycle(lambda, &adj, tol) {
                Some(c) => {
                    let (g, cost) = self.ratio_of(&c);
                    let r = if cost > 0.0 { g / cost } else { lo };
                    if r > lo + 1e-15 * (1.0 + lo.abs()) {
                        lo = r;
                        best = Some(c);
                        dinkelbach = true;
                    } else {
                        // no progress at this λ: fall back to bisection
                        dinkelbach = false;
                        if lambda > lo {
                            lo = lambda.min(hi);
                        }
                    }
                }
                None => {
                    hi = hi.min(lambda);
                    if lambda <= lo {
                        hi = lo;
                    }
                    dinkelbach = false;
                }
            }
            lambda = if dinkelbach { lo } else { 0.5 * (lo + hi) };
        }
        let (arcs, through) = match &best {
            Some(c) => {
                let real: Vec<usize> = c.iter().copied().filter(|&ai| ai < self.arcs.len()).collect();
                (real, c.iter().any(|&ai| ai >= self.arcs.len()))
            }
            None => (Vec::new(), false),
        };
        let ratio = match &best {
            Some(c) => {
                let (g, cost) = self.ratio_of(c);
                g / cost
            }
            None => 0.0,
        };
        Ok(RatioOptimum { ratio, arcs, through_boundary: through, lambda_bracket: (lo, hi), iterations: iters })
    }
}

/// A cycle in the parent pointer graph, as arc indices in traversal order.
fn parent_cycle(parent: &[Option<(usize, usize)>]) -> Option<Vec<usize>> {
    let n = parent.len();
    let mut state = vec![0u8; n];
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        loop {
            if state[v] == 2 {
                break;
            }
            if state[v] == 1 {
                // cycle found: v is on the current path
                let pos = path.iter().position(|&x: &usize| x == v).unwrap();
                let nodes = &path[pos..];
                let mut arcs: Vec<usize> = nodes.iter().map(|&x| parent[x].unwrap().1).collect();
                arcs.reverse();
                for &x in &path {
                    state[x] = 2;
                }
                return Some(arcs);
            }
            state[v] = 1;
            path.push(v);
            match parent[v] {
                Some((p, _)) => v = p,
                None => break,
            }
        }
        for &x in &path {
            state[x] = 2;
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighborhood {
    Six,
    TwentySix,
}

#[derive(Clone, Debug)]
pub struct IsofluxResult {
    pub best_current: PolyCurrent,
    pub ratio: f64,
    pub circulation: f64,
    pub weighted_mass: f64,
    pub lower_bound_l2: f64,
    pub star_ratio: f64,
    /// `max(0, lower_bound_l2 − ratio)`.
    pub slack: f64,
    pub hc1: Option<f64>,
    pub graph_nodes: usize,
}

fn lattice_in_omega(g: &Grid, q: [usize; 3], res: usize) -> bool {
    let n = g.n();
    let cin = g.cell_in();
    let mut ranges = [(0usize, 0usize); 3];
    for a in 0..3 {
        let (i, r) = (q[a] / res, q[a] % res);
        if r == 0 {
            if i == 0 || i >= n[a] {
                return false;
            }
            ranges[a] = (i - 1, i);
        } else {
            ranges[a] = (i, i);
        }
    }
    for k in ranges[2].0..=ranges[2].1 {
        for j in ranges[1].0..=ranges[1].1 {
            for i in ranges[0].0..=ranges[0].1 {
                if !cin[crate::mesh::idx3(n, i, j, k)] {
                    return false;
                }
            }
        }
    }
    true
}

/// Lattice graph inside Ω with gains `∫B·t` and costs `∫η ds`.
pub fn build_graph(b: &VectorField, eta: &ScalarField, resolution: usize, nb: Neighborhood) -> Result<RatioGraph> {
    if resolution == 0 {
        return contract("graph resolution must be positive");
    }
    let g = &b.grid;
    let s = g.spec();
    let h = g.h();
    let n = g.n();
    let dims = [0, 1, 2].map(|a| n[a] * resolution + 1);
    let step = [0, 1, 2].map(|a| h[a] / resolution as f64);
    let total = dims[0] * dims[1] * dims[2];
    let mut id = vec![usize::MAX; total];
    let mut points = Vec::new();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if lattice_in_omega(g, [i, j, k], resolution) {
                    id[crate::mesh::idx3(dims, i, j, k)] = points.len();
                    points.push([
                        s.box_min[0] + i as f64 * step[0],
                        s.box_min[1] + j as f64 * step[1],
                        s.box_min[2] + k as f64 * step[2],
                    ]);
                }
            }
        }
    }
    if points.is_empty() {
        return contract("no graph nodes inside Ω");
    }
    let mut offsets: Vec<[i64; 3]> = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let o = [dx, dy, dz];
                let nz = o.iter().filter(|&&x| x != 0).count();
                let positive = o.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0);
                if positive && (nb == Neighborhood::TwentySix || nz == 1) {
                    offsets.push(o);
                }
            }
        }
    }
    let lookup = |q: [i64; 3]| -> Option<usize> {
        if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as i64) {
            return None;
        }
        let v = id[crate::mesh::idx3(dims, q[0] as usize, q[1] as usize, q[2] as usize)];
        (v != usize::MAX).then_some(v)
    };
    let mut arcs = Vec::new();
    let mut boundary = Vec::new();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let q = [i as i64, j as i64, k as i64];
                let Some(u) = lookup(q) else { continue };
                let mut on_bd = false;
                for a in 0..3 {
                    for sgn in [-1, 1] {
                        let mut r = q;
                        r[a] += sgn;
                        if lookup(r).is_none() {
                            on_bd = true;
                        }
                    }
                }
                if on_bd {
                    boundary.push(u);
                }
                for o in &offsets {
                    let r = [q[0] + o[0], q[1] + o[1], q[2] + o[2]];
                    if let Some(v) = lookup(r) {
                        let (p, pp) = (points[u], points[v]);
                        let gain = seg_gain(b, p, pp);
                        let cost = seg_cost(eta, p, pp)?;
                        arcs.push(Arc { from: u, to: v, gain, cost });
                        arcs.push(Arc { from: v, to: u, gain: -gain, cost });
                    }
                }
            }
        }
    }
    let mut graph = RatioGraph::new(points.len(), arcs, boundary)?;
    graph.points = points;
    Ok(graph)
}

/// `H_c1 = |log ε| / (2R)`.
pub fn critical_field(ratio: f64, eps: f64) -> Result<f64> {
    if !(ratio > 0.0) {
        return contract("the isoflux ratio must be positive (curl H must not vanish identically in Ω)");
    }
    if !(eps > 0.0) {
        return contract("ε must be positive");
    }
    Ok(eps.ln().abs() / (2.0 * ratio))
}

pub fn maximize_ratio(
    b: &VectorField,
    eta: &ScalarField,
    resolution: usize,
    nb: Neighborhood,
    eps: Option<f64>,
) -> Result<IsofluxResult> {
    let graph = build_graph(b, eta, resolution, nb)?;
    let opt = graph.maximize()?;
    let segments: Vec<Segment> = opt
        .arcs
        .iter()
        .map(|&ai| {
            let a = graph.arcs[ai];
            Segment { a: graph.points[a.from], b: graph.points[a.to], mult: 1 }
        })
        .collect();
    let kind = if opt.through_boundary { CurrentKind::BoundaryToBoundary } else { CurrentKind::Loop };
    let best_current = PolyCurrent::new(segments, kind);
    let star = star_ratio(b, eta)?;
    let (circ, wm) = if best_current.is_empty() {
        (0.0, 0.0)
    } else {
        (circulation(&best_current, b)?, weighted_mass(&best_current, eta)?)
    };
    let ratio = if wm > 0.0 { circ / wm } else { 0.0 };
    let hc1 = match eps {
        Some(e) if ratio > 0.0 => Some(critical_field(ratio, e)?),
        _ => None,
    };
    Ok(IsofluxResult {
        best_current,
        ratio,
        circulation: circ,
        weighted_mass: wm,
        lower_bound_l2: star.lower_bound_l2,
        star_ratio: star.ratio,
        slack: (star.lower_bound_l2 - ratio).max(0.0),
        hc1,
        graph_nodes: graph.node_count(),
    })
}

/// One row of the liminf experiment.
#[derive(Clone, Debug)]
pub struct LiminfRow {
    pub field: String,
    pub eps: f64,
    pub ratio: f64,
    pub lower_bound_l2: f64,
    pub b0_l2: f64,
    pub h_l2: f64,
}

/// `‖V‖₂` over Ω-interior edges.
pub fn edge_l2(v: &VectorField) -> f64 {
    let g = &v.grid;
    let mut s = 0.0;
    for a in 0..3 {
        for (e, &k) in g.edge_in(a).iter().enumerate() {
            if k {
                s += v.c[a][e] * v.c[a][e];
            }
        }
    }
    (s * g.vol()).sqrt()
}

/// For each field and ε: ρ_ε, the Meissner state, and the isoflux ratio of B⁰.
pub fn liminf_experiment(
    fields: &[(String, crate::meissner::ExternalField)],
    eps_list: &[f64],
    a: &ScalarField,
    resolution: usize,
) -> Result<Vec<LiminfRow>> {
    let g = &a.grid;
    let mut rows = Vec::new();
    for (name, f) in fields {
        let applied = crate::meissner::applied_field(f, g)?;
        for &eps in eps_list {
            let rho = crate::pinning::solve_rho(a, eps)?.rho;
            let state = crate::meissner::minimize_j(&rho, &applied)?;
            let eta = ScalarField { grid: g.clone(), loc: Loc::Cell, v: rho.v.iter().map(|r| r * r).collect() };
            let res = maximize_ratio(&state.b0, &eta, resolution, Neighborhood::Six, Some(eps))?;
            rows.push(LiminfRow {
                field: name.clone(),
                eps,
                ratio: res.ratio,
                lower_bound_l2: res.lower_bound_l2,
                b0_l2: edge_l2(&state.b0),
                h_l2: edge_l2(&applied.h0ex),
            });
        }
    }
    Ok(rows)
}
