//! Vortex filament detection: grid choice, face windings, minimal
//! connections, ball construction and dual-norm estimators.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::isoflux::{weighted_mass, CurrentKind, PolyCurrent, Segment};
use crate::mesh::{
    curl_f, idx3, ijk3, link_kinetic, norm, sub, ComplexField, Grid, Loc, Omega, ScalarField, VKind, VectorField,
};

/// Phase increment `arg(q/p)` wrapped to (−π, π].
#[inline]
fn dphase(p: Complex64, q: Complex64) -> f64 {
    (q * p.conj()).arg()
}

/// Integer winding of u around a closed sample loop.
pub fn winding(loop_: &[Complex64]) -> i64 {
    let n = loop_.len();
    let s: f64 = (0..n).map(|i| dphase(loop_[i], loop_[(i + 1) % n])).sum();
    (s / (2.0 * PI)).round() as i64
}

// ------------------------------------------------------------------ grid

#[derive(Clone, Debug)]
pub struct DetectionGrid {
    /// Position of the cube lattice origin `b_ε`.
    pub offset: [f64; 3],
    pub offset_index: [usize; 3],
    /// Cube side in cells per axis.
    pub m: [usize; 3],
    pub delta: f64,
    /// Lower-corner cell indices of the retained cubes.
    pub cubes: Vec<[usize; 3]>,
    pub theta_region: Vec<usize>,
    pub edge_energy: f64,
    pub face_energy: f64,
    /// `edge_energy·δ²/F` and `face_energy·δ/F`.
    pub c_edge: f64,
    pub c_face: f64,
    pub min_edge_modulus: f64,
    pub candidates_scanned: usize,
}

/// Free-energy density per cell, links split evenly between their cells.
fn energy_density(u: &ComplexField, a: &VectorField, rho: &ScalarField, eps: f64) -> Vec<f64> {
    let g = &u.grid;
    let h = g.h();
    let mut e = vec![0.0; g.len(Loc::Cell)];
    for ax in 0..3 {
        for l in g.links(ax) {
            let k = rho.v[l.lo] * rho.v[l.hi] * link_kinetic(u.v[l.lo], u.v[l.hi], h[ax] * a.c[ax][l.face], h[ax]);
            e[l.lo] += 0.25 * k;
            e[l.hi] += 0.25 * k;
        }
    }
    for &c in g.omega_cells() {
        let r2 = rho.v[c] * rho.v[c];
        let t = 1.0 - u.v[c].norm_sqr();
        e[c] += 0.25 * r2 * r2 * t * t / (eps * eps);
    }
    e
}

fn block_inside(g: &Grid, lo: [usize; 3], m: [usize; 3]) -> bool {
    let n = g.n();
    if (0..3).any(|a| lo[a] + m[a] >= n[a]) {
        return false;
    }
    let cin = g.cell_in();
    for k in lo[2]..=lo[2] + m[2] {
        for j in lo[1]..=lo[1] + m[1] {
            for i in lo[0]..=lo[0] + m[0] {
                if !cin[idx3(n, i, j, k)] {
                    return false;
                }
            }
        }
    }
    true
}

fn retained_cubes(g: &Grid, off: [usize; 3], m: [usize; 3]) -> Vec<[usize; 3]> {
    let n = g.n();
    let mut out = Vec::new();
    let mut k = off[2];
    while k + m[2] < n[2] {
        let mut j = off[1];
        while j + m[1] < n[1] {
            let mut i = off[0];
            while i + m[0] < n[0] {
                if block_inside(g, [i, j, k], m) {
                    out.push([i, j, k]);
                }
                i += m[0];
            }
            j += m[1];
        }
        k += m[2];
    }
    out
}

/// Cell indices along the 12 edges of a cube.
fn cube_edge_cells(n: [usize; 3], lo: [usize; 3], m: [usize; 3], out: &mut Vec<usize>) {
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for sb in [0, m[b]] {
            for sc in [0, m[c]] {
                for t in 0..=m[a] {
                    let mut p = lo;
                    p[a] += t;
                    p[b] += sb;
                    p[c] += sc;
                    out.push(idx3(n, p[0], p[1], p[2]));
                }
            }
        }
    }
}

/// Cell indices on the 6 faces of a cube.
fn cube_face_cells(n: [usize; 3], lo: [usize; 3], m: [usize; 3], out: &mut Vec<usize>) {
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for sa in [0, m[a]] {
            for tb in 0..=m[b] {
                for tc in 0..=m[c] {
                    let mut p = lo;
                    p[a] += sa;
                    p[b] += tb;
                    p[c] += tc;
                    out.push(idx3(n, p[0], p[1], p[2]));
                }
            }
        }
    }
}

/// Scan cube-lattice offsets and keep the admissible one with least skeleton energy.
pub fn choose_grid(u: &ComplexField, a: &VectorField, rho: &ScalarField, eps: f64, delta: f64) -> Result<DetectionGrid> {
    let g = &u.grid;
    let h = g.h();
    let n = g.n();
    let m = [0, 1, 2].map(|ax| (delta / h[ax]).round() as usize);
    if m.iter().any(|&k| k < 4) {
        return contract(format!("cube side δ = {delta} must span at least 4 cells"));
    }
    let dens = energy_density(u, a, rho, eps);
    let total_f: f64 = g.omega_cells().iter().map(|&c| dens[c]).sum::<f64>() * g.vol();
    let modulus: Vec<f64> = u.v.iter().map(|z| z.norm()).collect();
    let mut best: Option<(f64, DetectionGrid)> = None;
    let mut scanned = 0;
    let mut any_cubes = false;
    let mut cells = Vec::new();
    for ok in 0..m[2] {
        for oj in 0..m[1] {
            for oi in 0..m[0] {
                scanned += 1;
                let off = [oi, oj, ok];
                let cubes = retained_cubes(g, off, m);
                if cubes.is_empty() {
                    continue;
                }
                any_cubes = true;
                cells.clear();
                for c in &cubes {
                    cube_edge_cells(n, *c, m, &mut cells);
                }
                cells.sort_unstable();
                cells.dedup();
                let min_mod = cells.iter().fold(f64::INFINITY, |x, &c| x.min(modulus[c]));
                if !(min_mod > 0.625) {
                    continue;
                }
                let e_edge: f64 = cells.iter().map(|&c| dens[c]).sum::<f64>() * h[0];
                cells.clear();
                for c in &cubes {
                    cube_face_cells(n, *c, m, &mut cells);
                }
                cells.sort_unstable();
                cells.dedup();
                let e_face: f64 = cells.iter().map(|&c| dens[c]).sum::<f64>() * h[0] * h[1];
                let score = e_edge + e_face;
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    let spec = g.spec();
                    let offset = [0, 1, 2].map(|ax| spec.box_min[ax] + (off[ax] as f64 + 0.5) * h[ax]);
                    let (c_edge, c_face) = if total_f > 0.0 {
                        (e_edge * delta * delta / total_f, e_face * delta / total_f)
                    } else {
                        (0.0, 0.0)
                    };
                    best = Some((
                        score,
                        DetectionGrid {
                            offset,
                            offset_index: off,
                            m,
                            delta,
                            cubes,
                            theta_region: Vec::new(),
                            edge_energy: e_edge,
                            face_energy: e_face,
                            c_edge,
                            c_face,
                            min_edge_modulus: min_mod,
                            candidates_scanned: 0,
                        },
                    ));
                }
            }
        }
    }
    if !any_cubes {
        return contract(format!("no cube of side δ = {delta} fits inside Ω; reduce δ or refine the grid"));
    }
    let Some((_, mut dg)) = best else {
        return Err(Error::Solver(
            "no cube-lattice offset keeps |u| > 5/8 on the skeleton; refine the grid or enlarge δ".into(),
        ));
    };
    dg.candidates_scanned = scanned;
    let mut covered = vec![false; g.len(Loc::Cell)];
    for c in &dg.cubes {
        for k in c[2]..=c[2] + m[2] {
            for j in c[1]..=c[1] + m[1] {
                for i in c[0]..=c[0] + m[0] {
                    covered[idx3(n, i, j, k)] = true;
                }
            }
        }
    }
    dg.theta_region = g.omega_cells().iter().copied().filter(|&c| !covered[c]).collect();
    Ok(dg)
}

// ----------------------------------------------------------------- faces

/// Samples of u on a planar square lattice, oriented by `e_b × e_c`.
#[derive(Clone, Debug)]
pub struct FaceSamples {
    pub nb: usize,
    pub nc: usize,
    pub origin: [f64; 3],
    pub eb: [f64; 3],
    pub ec: [f64; 3],
    /// Row-major, index `ib + nb·ic`.
    pub values: Vec<Complex64>,
}

impl FaceSamples {
    pub fn pos(&self, ib: f64, ic: f64) -> [f64; 3] {
        [0, 1, 2].map(|k| self.origin[k] + ib * self.eb[k] + ic * self.ec[k])
    }
    fn at(&self, ib: usize, ic: usize) -> Complex64 {
        self.values[ib + self.nb * ic]
    }
    /// Winding of each plaquette, index `ib + (nb−1)·ic`.
    pub fn plaquette_windings(&self) -> Vec<i64> {
        let mut w = Vec::with_capacity((self.nb - 1) * (self.nc - 1));
        for ic in 0..self.nc - 1 {
            for ib in 0..self.nb - 1 {
                w.push(winding(&[self.at(ib, ic), self.at(ib + 1, ic), self.at(ib + 1, ic + 1), self.at(ib, ic + 1)]));
            }
        }
        w
    }
    fn boundary_ring(&self) -> Vec<Complex64> {
        let mut r = Vec::new();
        for ib in 0..self.nb - 1 {
            r.push(self.at(ib, 0));
        }
        for ic in 0..self.nc - 1 {
            r.push(self.at(self.nb - 1, ic));
        }
        for ib in (1..self.nb).rev() {
            r.push(self.at(ib, self.nc - 1));
        }
        for ic in (1..self.nc).rev() {
            r.push(self.at(0, ic));
        }
        r
    }
}

/// Face identifier: normal axis and the cell index of its lower corner.
pub type FaceId = (usize, [usize; 3]);

#[derive(Clone, Debug, PartialEq)]
pub struct FaceVortex {
    pub face: FaceId,
    pub centroid: [f64; 3],
    pub degree: i64,
}

/// Components of `{|u| ≤ ½}` with nonzero degree.
///
/// Each plaquette with nonzero winding is charged to the first component
/// touching one of its corners, or to its own centre when none does, so the
/// degrees add up to the winding along the face boundary.
pub fn face_vortices(face: &FaceSamples, id: FaceId) -> Result<Vec<FaceVortex>> {
    let (nb, nc) = (face.nb, face.nc);
    if nb < 2 || nc < 2 || face.values.len() != nb * nc {
        return contract("face lattice needs at least 2×2 samples");
    }
    if face.boundary_ring().iter().any(|z| !(z.norm() > 0.625)) {
        return contract("|u| must exceed 5/8 on the face boundary");
    }
    let small: Vec<bool> = face.values.iter().map(|z| z.norm() <= 0.5).collect();
    let mut label = vec![usize::MAX; nb * nc];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..nb * nc {
        if !small[s] || label[s] != usize::MAX {
            continue;
        }
        let id_c = comps.len();
        let mut stack = vec![s];
        label[s] = id_c;
        let mut members = Vec::new();
        while let Some(x) = stack.pop() {
            members.push(x);
            let (ib, ic) = ((x % nb) as i64, (x / nb) as i64);
            for dc in -1..=1 {
                for db in -1..=1 {
                    let (jb, jc) = (ib + db, ic + dc);
                    if jb < 0 || jc < 0 || jb >= nb as i64 || jc >= nc as i64 {
                        continue;
                    }
                    let y = jb as usize + nb * jc as usize;
                    if small[y] && label[y] == usize::MAX {
                        label[y] = id_c;
                        stack.push(y);
                    }
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    let mut degree = vec![0i64; comps.len()];
    let mut pseudo: Vec<([f64; 3], i64)> = Vec::new();
    for (p, &w) in face.plaquette_windings().iter().enumerate() {
        if w == 0 {
            continue;
        }
        let (ib, ic) = (p % (nb - 1), p / (nb - 1));
        let corners = [ib + nb * ic, ib + 1 + nb * ic, ib + 1 + nb * (ic + 1), ib + nb * (ic + 1)];
        match corners.iter().filter_map(|&c| (label[c] != usize::MAX).then_some(label[c])).min() {
            Some(l) => degree[l] += w,
            None => pseudo.push((face.pos(ib as f64 + 0.5, ic as f64 + 0.5), w)),
        }
    }
    let mut out = Vec::new();
    for (k, members) in comps.iter().enumerate() {
        if degree[k] == 0 {
            continue;
        }
        let mut c = [0.0; 3];
        for &s in members {
            let p = face.pos((s % nb) as f64, (s / nb) as f64);
            for i in 0..3 {
                c[i] += p[i];
            }
        }
        let centroid = c.map(|x| x / members.len() as f64);
        out.push(FaceVortex { face: id, centroid, degree: degree[k] });
    }
    for (p, w) in pseudo {
        out.push(FaceVortex { face: id, centroid: p, degree: w });
    }
    Ok(out)
}

/// Sample the face with normal `axis` whose lower corner is cell `lo`.
pub fn cube_face(u: &ComplexField, axis: usize, lo: [usize; 3], m: [usize; 3]) -> FaceSamples {
    let g = &u.grid;
    let n = g.n();
    let h = g.h();
    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
    let (nb, nc) = (m[b] + 1, m[c] + 1);
    let mut values = Vec::with_capacity(nb * nc);
    for tc in 0..nc {
        for tb in 0..nb {
            let mut p = lo;
            p[b] += tb;
            p[c] += tc;
            values.push(u.v[idx3(n, p[0], p[1], p[2])]);
        }
    }
    let mut eb = [0.0; 3];
    let mut ec = [0.0; 3];
    eb[b] = h[b];
    ec[c] = h[c];
    FaceSamples { nb, nc, origin: g.pos(Loc::Cell, idx3(n, lo[0], lo[1], lo[2])), eb, ec, values }
}

// ------------------------------------------------- vorticity on a face

/// Pairing data of a face: flux density of μ per plaquette and its geometry.
#[derive(Clone, Debug)]
pub struct FaceMeasure {
    /// Plaquette centres and fluxes `μ·n h²`.
    pub cells: Vec<([f64; 2], f64)>,
    /// Point masses `(position, weight)`.
    pub atoms: Vec<([f64; 2], f64)>,
    pub size: [f64; 2],
}

/// Lower estimate of the `C^{0,1}(ω)*` norm over a seeded dictionary of
/// coordinate functions and Lipschitz bumps, each normalized by
/// `max(sup|φ|, Lip φ)`.
pub fn lipschitz_dual_norm(m: &FaceMeasure, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = |f: &dyn Fn([f64; 2]) -> f64| -> f64 {
        let s1: f64 = m.cells.iter().map(|(p, w)| w * f(*p)).sum();
        let s2: f64 = m.atoms.iter().map(|(p, w)| w * f(*p)).sum();
        s1 + s2
    };
    let mut best = 0.0f64;
    let diam = m.size[0].max(m.size[1]);
    // constants and coordinates
    best = best.max(pair(&|_| 1.0).abs());
    for k in 0..2 {
        let norm = (m.size[k]).max(1.0);
        best = best.max(pair(&|p: [f64; 2]| p[k]).abs() / norm);
    }
    for _ in 0..count.max(200) {
        let c = [rng.gen_range(0.0..m.size[0]), rng.gen_range(0.0..m.size[1])];
        let r = rng.gen_range(0.05..1.0) * diam;
        let f = move |p: [f64; 2]| (1.0 - ((p[0] - c[0]).hypot(p[1] - c[1])) / r).max(0.0);
        let lip = (1.0f64).max(1.0 / r);
        best = best.max(pair(&f).abs() / lip);
    }
    best
}

#[derive(Clone, Copy, Debug)]
pub struct DefectReport {
    pub defect: f64,
    /// `max(ε, r)(1 + F + F_∂)` with r the sample spacing.
    pub rhs_scale: f64,
}

/// Dual Lipschitz norm of `μ_ω − 2π Σ d_i δ_{a_i}` on a cube face.
pub fn vorticity_estimate_check(
    u: &ComplexField,
    a: &VectorField,
    axis: usize,
    lo: [usize; 3],
    m: [usize; 3],
    vortices: &[FaceVortex],
    eps: f64,
    seed: u64,
) -> Result<DefectReport> {
    let g = &u.grid;
    let h = g.h();
    let n = g.n();
    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
    let mu = crate::energy::vorticity(u, a)?;
    let ed = g.dims(Loc::Edge(axis));
    let origin = g.pos(Loc::Cell, idx3(n, lo[0], lo[1], lo[2]));
    let mut cells = Vec::new();
    // the a-edges through plaquette centres of the face lie at node indices lo+1..
    for tc in 0..m[c] {
        for tb in 0..m[b] {
            let mut p = lo;
            p[b] += tb + 1;
            p[c] += tc + 1;
            let e = idx3(ed, p[0], p[1], p[2]);
            let w = mu.c[axis][e] * h[b] * h[c];
            cells.push(([(tb as f64 + 0.5) * h[b], (tc as f64 + 0.5) * h[c]], w));
        }
    }
    let atoms = vortices
        .iter()
        .map(|v| {
            let d = sub(v.centroid, origin);
            ([d[b], d[c]], -2.0 * PI * v.degree as f64)
        })
        .collect();
    let meas = FaceMeasure { cells, atoms, size: [m[b] as f64 * h[b], m[c] as f64 * h[c]] };
    let defect = lipschitz_dual_norm(&meas, 200, seed);
    // face and face-boundary energies
    let face = cube_face(u, axis, lo, m);
    let mut f2 = 0.0;
    let mut f1 = 0.0;
    for ic in 0..face.nc {
        for ib in 0..face.nb {
            let z = face.at(ib, ic);
            let mut e = 0.25 * (1.0 - z.norm_sqr()).powi(2) / (eps * eps);
            if ib + 1 < face.nb {
                e += 0.5 * (face.at(ib + 1, ic) - z).norm_sqr() / (h[b] * h[b]);
            }
            if ic + 1 < face.nc {
                e += 0.5 * (face.at(ib, ic + 1) - z).norm_sqr() / (h[c] * h[c]);
            }
            f2 += e * h[b] * h[c];
            if ib == 0 || ic == 0 || ib + 1 == face.nb || ic + 1 == face.nc {
                f1 += e * h[b];
            }
        }
    }
    Ok(DefectReport { defect, rhs_scale: eps.max(h[b]) * (1.0 + f2 + f1) })
}

// ------------------------------------------------------ minimal connection

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method).
/// Returns `col[row]`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            col[p[j] - 1] = j - 1;
        }
    }
    col
}

#[derive(Clone, Copy, Debug)]
pub enum Connection<'a> {
    WithinCube,
    /// Points may be routed to their nearest boundary point of Ω.
    ThroughBoundary(&'a Grid),
}

/// Distance to ∂Ω and the nearest boundary point.
pub fn boundary_projection(g: &Grid, p: [f64; 3]) -> ([f64; 3], f64) {
    let om = g.omega();
    match (om.sdf(p), om.project_to_boundary(p)) {
        (Some(d), Some(q)) => (q, d.abs()),
        _ => {
            // sampled descriptor: interpolate the signed distance and step along its gradient
            let Omega::Samples(s) = om else { unreachable!() };
            let f = |x: [f64; 3]| g.interp(Loc::Cell, s, x);
            let d = f(p);
            let h = g.hmin() * 0.5;
            let grad = [0, 1, 2].map(|k| {
                let mut a = p;
                let mut b = p;
                a[k] -= h;
                b[k] += h;
                (f(b) - f(a)) / (2.0 * h)
            });
            let gn = norm(grad).max(1e-300);
            (std::array::from_fn(|k| p[k] - d * grad[k] / gn), d.abs())
        }
    }
}

/// Minimal connection from `plus` points to `minus` points; every segment
/// runs from a plus point (or the boundary) to a minus point (or the boundary).
pub fn minimal_connection(plus: &[[f64; 3]], minus: &[[f64; 3]], geometry: Connection) -> Result<PolyCurrent> {
    let dist = |p: [f64; 3], q: [f64; 3]| norm(sub(p, q));
    match geometry {
        Connection::WithinCube => {
            if plus.len() != minus.len() {
                return contract(format!("unbalanced points: {} plus vs {} minus", plus.len(), minus.len()));
            }
            let cost: Vec<Vec<f64>> = plus.iter().map(|&p| minus.iter().map(|&q| dist(p, q)).collect()).collect();
            let col = hungarian(&cost);
            let segs = col.iter().enumerate().map(|(i, &j)| Segment { a: plus[i], b: minus[j], mult: 1 }).collect();
            Ok(PolyCurrent::new(segs, CurrentKind::Loop))
        }
        Connection::ThroughBoundary(g) => {
            let (np, nm) = (plus.len(), minus.len());
            let n = np + nm;
            let bp: Vec<([f64; 3], f64)> = plus.iter().map(|&p| boundary_projection(g, p)).collect();
            let bm: Vec<([f64; 3], f64)> = minus.iter().map(|&q| boundary_projection(g, q)).collect();
            let mut cost = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    cost[i][j] = match (i < np, j < nm) {
                        (true, true) => dist(plus[i], minus[j]).min(bp[i].1 + bm[j].1),
                        (true, false) => bp[i].1,
                        (false, true) => bm[j].1,
                        (false, false) => 0.0,
                    };
                }
            }
            let col = hungarian(&cost);
            let mut segs = Vec::new();
            for (i, &j) in col.iter().enumerate() {
                match (i < np, j < nm) {
                    (true, true) => {
                        if dist(plus[i], minus[j]) <= bp[i].1 + bm[j].1 {
                            segs.push(Segment { a: plus[i], b: minus[j], mult: 1 });
                        } else {
                            segs.push(Segment { a: plus[i], b: bp[i].0, mult: 1 });
                            segs.push(Segment { a: bm[j].0, b: minus[j], mult: 1 });
                        }
                    }
                    (true, false) => segs.push(Segment { a: plus[i], b: bp[i].0, mult: 1 }),
                    (false, true) => segs.push(Segment { a: bm[j].0, b: minus[j], mult: 1 }),
                    (false, false) => {}
                }
            }
            Ok(PolyCurrent::new(segs, CurrentKind::Mixed))
        }
    }
}

// ------------------------------------------------------------- assembly

#[derive(Clone, Debug)]
pub struct VortexApproximation {
    /// Multiplicities are ν/π.
    pub nu: PolyCurrent,
    pub support_cells: Vec<usize>,
    /// `|ν| = π Σ |m| length`.
    pub mass: f64,
    /// `|ρ²ν|`.
    pub weighted_mass: f64,
    pub grid: DetectionGrid,
    pub face_vortices: Vec<FaceVortex>,
    /// Outward degree sums per retained cube.
    pub cube_degree_sums: Vec<i64>,
}

impl VortexApproximation {
    /// Boundary points of ν not lying on ∂Ω.
    pub fn interior_boundary(&self, g: &Grid) -> Vec<([f64; 3], i64)> {
        let tol = 1e-9 * (1.0 + g.hmax());
        self.nu.boundary().into_iter().filter(|(p, _)| boundary_projection(g, *p).1 > tol).collect()
    }
}

/// Build ν_ε from face windings on the detection grid.
pub fn assemble_nu(
    u: &ComplexField,
    a: &VectorField,
    rho: &ScalarField,
    eps: f64,
    delta: f64,
) -> Result<VortexApproximation> {
    let g = &u.grid;
    let n = g.n();
    let dg = choose_grid(u, a, rho, eps, delta)?;
    let m = dg.m;
    let cube_set: std::collections::BTreeSet<[usize; 3]> = dg.cubes.iter().copied().collect();
    let mut faces: BTreeMap<FaceId, Vec<FaceVortex>> = BTreeMap::new();
    let mut face_of = |axis: usize, lo: [usize; 3]| -> Result<Vec<FaceVortex>> {
        if let Some(v) = faces.get(&(axis, lo)) {
            return Ok(v.clone());
        }
        let fv = face_vortices(&cube_face(u, axis, lo, m), (axis, lo))?;
        faces.insert((axis, lo), fv.clone());
        Ok(fv)
    };
    let mut segments = Vec::new();
    let mut degree_sums = Vec::new();
    let mut used_cells = vec![false; g.len(Loc::Cell)];
    let mut theta_plus = Vec::new();
    let mut theta_minus = Vec::new();
    for &c in &dg.cubes {
        // entries (outward degree < 0) are plus points, exits are minus points
        let (mut plus, mut minus) = (Vec::new(), Vec::new());
        let mut sum = 0i64;
        let mut any = false;
        for axis in 0..3 {
            for side in 0..2 {
                let mut lo = c;
                lo[axis] += side * m[axis];
                let sign: i64 = if side == 1 { 1 } else { -1 };
                let fv = face_of(axis, lo)?;
                let mut nb = c;
                let shared = if side == 1 {
                    nb[axis] += m[axis];
                    cube_set.contains(&nb)
                } else {
                    nb[axis] >= m[axis] && {
                        nb[axis] -= m[axis];
                        cube_set.contains(&nb)
                    }
                };
                for v in &fv {
                    any = true;
                    let d = sign * v.degree;
                    sum += d;
                    for _ in 0..d.unsigned_abs() {
                        if d < 0 {
                            plus.push(v.centroid);
                        } else {
                            minus.push(v.centroid);
                        }
                        if !shared {
                            // outward from the cube is inward for Θ
                            if d > 0 {
                                theta_plus.push(v.centroid);
                            } else {
                                theta_minus.push(v.centroid);
                            }
                        }
                    }
                }
            }
        }
        degree_sums.push(sum);
        if sum != 0 {
            return Err(Error::Invariant(format!(
                "cube at {c:?}: face degrees sum to {sum}; winding misclassified"
            )));
        }
        if any {
            for k in c[2]..=c[2] + m[2] {
                for j in c[1]..=c[1] + m[1] {
                    for i in c[0]..=c[0] + m[0] {
                        used_cells[idx3(n, i, j, k)] = true;
                    }
                }
            }
        }
        let conn = minimal_connection(&plus, &minus, Connection::WithinCube)?;
        segments.extend(conn.segments);
    }
    if !theta_plus.is_empty() || !theta_minus.is_empty() {
        for &c in &dg.theta_region {
            used_cells[c] = true;
        }
    }
    let conn = minimal_connection(&theta_plus, &theta_minus, Connection::ThroughBoundary(g))?;
    segments.extend(conn.segments);
    let nu = PolyCurrent::new(segments, CurrentKind::Mixed).scaled_mult(2);
    let eta = ScalarField { grid: g.clone(), loc: Loc::Cell, v: rho.v.iter().map(|r| r * r).collect() };
    let mass = PI * nu.mass();
    let wm = if nu.is_empty() { 0.0 } else { PI * weighted_mass(&nu, &eta)? };
    let support_cells = (0..used_cells.len()).filter(|&c| used_cells[c]).collect();
    let face_vortices = faces.into_values().flatten().collect();
    Ok(VortexApproximation {
        nu,
        support_cells,
        mass,
        weighted_mass: wm,
        grid: dg,
        face_vortices,
        cube_degree_sums: degree_sums,
    })
}

/// Dual-plaquette windings placed on primal edges, multiplicity ν/π = 2·winding.
/// Closed at every node whose eight cells lie in Ω.
pub fn lattice_current(u: &ComplexField) -> PolyCurrent {
    let g = &u.grid;
    let n = g.n();
    let mut segs = Vec::new();
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let ed = g.dims(Loc::Edge(axis));
        for (e, &k) in g.edge_in(axis).iter().enumerate() {
            if !k {
                continue;
            }
            let p = ijk3(ed, e);
            let cell = |db: usize, dc: usize| {
                let mut q = p;
                q[b] = q[b] + db - 1;
                q[c] = q[c] + dc - 1;
                u.v[idx3(n, q[0], q[1], q[2])]
            };
            let w = winding(&[cell(0, 0), cell(1, 0), cell(1, 1), cell(0, 1)]);
            if w != 0 {
                let mid = g.pos(Loc::Edge(axis), e);
                let h = g.h()[axis];
                let mut s = mid;
                let mut t = mid;
                s[axis] -= 0.5 * h;
                t[axis] += 0.5 * h;
                segs.push(Segment { a: s, b: t, mult: 2 * w });
            }
        }
    }
    PolyCurrent::new(segs, CurrentKind::Mixed)
}

/// `|ν|` from the detection pipeline, or from the lattice current when no
/// admissible detection grid exists.
pub fn vortex_mass(u: &ComplexField, a: &VectorField, rho: &ScalarField, eps: f64, delta: f64) -> Result<f64> {
    match assemble_nu(u, a, rho, eps, delta) {
        Ok(v) => Ok(v.mass),
        Err(Error::Solver(_)) | Err(Error::Contract(_)) => Ok(PI * lattice_current(u).mass()),
        Err(e) => Err(e),
    }
}

// ----------------------------------------------------- ball construction

/// Complex field and density on a planar square lattice, restricted to a disk.
#[derive(Clone, Debug)]
pub struct Slice2D {
    pub n: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub center: [f64; 2],
    pub radius: f64,
    pub u: Vec<Complex64>,
    pub rho: Vec<f64>,
}

impl Slice2D {
    pub fn from_fn(
        n: usize,
        center: [f64; 2],
        radius: f64,
        mut u: impl FnMut([f64; 2]) -> Complex64,
        mut rho: impl FnMut([f64; 2]) -> f64,
    ) -> Slice2D {
        let h = 2.0 * radius / n as f64;
        let origin = [center[0] - radius + 0.5 * h, center[1] - radius + 0.5 * h];
        let mut uu = Vec::with_capacity(n * n);
        let mut rr = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let p = [origin[0] + i as f64 * h, origin[1] + j as f64 * h];
                uu.push(u(p));
                rr.push(rho(p));
            }
        }
        Slice2D { n, h, origin, center, radius, u: uu, rho: rr }
    }
    pub fn pos(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }
    pub fn inside(&self, i: usize, j: usize) -> bool {
        let p = self.pos(i, j);
        (p[0] - self.center[0]).hypot(p[1] - self.center[1]) < self.radius
    }
    /// `Σ h² [½ρρ'|Δu/h|² per link + ρ⁴(1−|u|²)²/(4ε²)]` over the disk.
    pub fn energy(&self, eps: f64) -> f64 {
        let n = self.n;
        let mut e = 0.0;
        for j in 0..n {
            for i in 0..n {
                if !self.inside(i, j) {
                    continue;
                }
                let k = i + n * j;
                let r2 = self.rho[k] * self.rho[k];
                e += 0.25 * r2 * r2 * (1.0 - self.u[k].norm_sqr()).powi(2) / (eps * eps);
                for (di, dj) in [(1, 0), (0, 1)] {
                    let (i2, j2) = (i + di, j + dj);
                    if i2 < n && j2 < n && self.inside(i2, j2) {
                        let k2 = i2 + n * j2;
                        e += 0.5 * self.rho[k] * self.rho[k2] * (self.u[k2] - self.u[k]).norm_sqr() / (self.h * self.h);
                    }
                }
            }
        }
        e * self.h * self.h
    }
}

/// Degree-one vortex `tanh(r/ε)e^{iθ}` on the unit disk with constant density `√rho2`.
pub fn degree_one_slice(n: usize, eps: f64, rho2: f64) -> Slice2D {
    let r = rho2.sqrt();
    Slice2D::from_fn(n, [0.0, 0.0], 1.0, |p| Complex64::from_polar((p[0].hypot(p[1]) / eps).tanh(), p[1].atan2(p[0])), |_| r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball2 {
    pub center: [f64; 2],
    pub radius: f64,
    pub degree: i64,
}

#[derive(Clone, Debug)]
pub struct BallReport {
    pub balls: Vec<Ball2>,
    pub bound: f64,
    pub measured_energy: f64,
}

fn plaquette_degree_in(s: &Slice2D, c: [f64; 2], r: f64) -> i64 {
    let n = s.n;
    let mut d = 0;
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let p = s.pos(i, j);
            let mid = [p[0] + 0.5 * s.h, p[1] + 0.5 * s.h];
            if (mid[0] - c[0]).hypot(mid[1] - c[1]) <= r {
                let k = i + n * j;
                d += winding(&[s.u[k], s.u[k + 1], s.u[k + 1 + n], s.u[k + n]]);
            }
        }
    }
    d
}

/// Growth-and-merge ball construction with the weighted lower bound
/// `π |Σ d| min ρ² (log 1/ε − log M)`.
pub fn ball_construction(s: &Slice2D, eps: f64, m_eps: f64) -> Result<BallReport> {
    let n = s.n;
    // clearance: |u| ≥ ½ within ε of the disk edge
    for j in 0..n {
        for i in 0..n {
            if !s.inside(i, j) {
                continue;
            }
            let p = s.pos(i, j);
            let r = (p[0] - s.center[0]).hypot(p[1] - s.center[1]);
            if r > s.radius - eps.max(2.0 * s.h) && s.u[i + n * j].norm() < 0.5 {
                return contract("|u| must be at least 1/2 near the slice boundary");
            }
        }
    }
    // seeds: components of {|u| ≤ ½}
    let small: Vec<bool> = (0..n * n).map(|k| s.inside(k % n, k / n) && s.u[k].norm() <= 0.5).collect();
    let mut seen = vec![false; n * n];
    let mut balls: Vec<Ball2> = Vec::new();
    for k0 in 0..n * n {
        if !small[k0] || seen[k0] {
            continue;
        }
        let mut stack = vec![k0];
        seen[k0] = true;
        let mut pts = Vec::new();
        while let Some(k) = stack.pop() {
            pts.push(s.pos(k % n, k / n));
            let (i, j) = ((k % n) as i64, (k / n) as i64);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if a >= 0 && b >= 0 && a < n as i64 && b < n as i64 {
                        let q = a as usize + n * b as usize;
                        if small[q] && !seen[q] {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        let c = [
            pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64,
            pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64,
        ];
        let r = pts.iter().map(|p| (p[0] - c[0]).hypot(p[1] - c[1])).fold(0.0, f64::max) + s.h;
        balls.push(Ball2 { center: c, radius: r, degree: 0 });
    }
    // grow synchronously, merging overlaps, while the balls stay clear of the edge
    let clear = |b: &Ball2| (b.center[0] - s.center[0]).hypot(b.center[1] - s.center[1]) + b.radius < s.radius - eps;
    loop {
        merge_balls(&mut balls);
        let grown: Vec<Ball2> = balls.iter().map(|b| Ball2 { radius: b.radius * 1.1, ..*b }).collect();
        if grown.is_empty() || !grown.iter().all(clear) {
            break;
        }
        balls = grown;
    }
    for b in balls.iter_mut() {
        b.degree = plaquette_degree_in(s, b.center, b.radius);
    }
    let dsum: i64 = balls.iter().map(|b| b.degree.abs()).sum();
    let min_rho2 = (0..n * n).filter(|&k| s.inside(k % n, k / n)).fold(f64::INFINITY, |m, k| m.min(s.rho[k] * s.rho[k]));
    let bound = (PI * dsum as f64 * min_rho2 * ((1.0 / eps).ln() - m_eps.ln())).max(0.0);
    let measured = s.energy(eps);
    if bound > 0.0 && measured < bound {
        return Err(Error::Invariant(format!("ball bound {bound} exceeds the measured energy {measured}")));
    }
    Ok(BallReport { balls, bound, measured_energy: measured })
}

fn merge_balls(balls: &mut Vec<Ball2>) {
    loop {
        let mut merged = false;
        'outer: for i in 0..balls.len() {
            for j in i + 1..balls.len() {
                let (a, b) = (balls[i], balls[j]);
                let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
                if d < a.radius + b.radius {
                    let r = a.radius + b.radius;
                    let w = a.radius / r;
                    let c = [
                        w * a.center[0] + (1.0 - w) * b.center[0],
                        w * a.center[1] + (1.0 - w) * b.center[1],
                    ];
                    balls[i] = Ball2 { center: c, radius: r, degree: a.degree + b.degree };
                    balls.remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
}

// ------------------------------------------------------- 3D dual norms

/// A vector measure: an edge density plus a scaled polyhedral current.
#[derive(Clone, Debug)]
pub struct VectorMeasure {
    pub density: Option<VectorField>,
    pub current: Option<(PolyCurrent, f64)>,
}

impl VectorMeasure {
    pub fn scaled(&self, c: f64) -> VectorMeasure {
        VectorMeasure {
            density: self.density.as_ref().map(|d| d.scaled(c)),
            current: self.current.as_ref().map(|(p, f)| (p.clone(), f * c)),
        }
    }
}

struct Bump {
    c: [f64; 3],
    r: f64,
    v: [f64; 3],
    curl: bool,
}

impl Bump {
    fn eval(&self, p: [f64; 3]) -> [f64; 3] {
        let d = sub(p, self.c);
        let s2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (self.r * self.r);
        if s2 >= 1.0 {
            return [0.0; 3];
        }
        let t = 1.0 - s2;
        if self.curl {
            // ∇ψ × v with ψ = (1 − s²)³
            let gpsi = crate::mesh::scale(d, -6.0 * t * t / (self.r * self.r));
            crate::mesh::cross(gpsi, self.v)
        } else {
            crate::mesh::scale(self.v, t * t * t)
        }
    }
}

/// Lower estimate of the `(C^{0,γ}_T)*` norm by pairing with seeded bump
/// fields supported inside Ω, each normalized by its discrete Hölder norm.
pub fn dual_norm_estimate(m: &VectorMeasure, gamma: f64, seed: u64, count: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return contract("γ must lie in (0, 1]");
    }
    let g = match (&m.density, &m.current) {
        (Some(d), _) => d.grid.clone(),
        (None, Some(_)) => return contract("a current-only measure needs a grid; attach a zero density"),
        (None, None) => return Ok(0.0),
    };
    let density = m.density.as_ref().unwrap();
    if density.kind != VKind::Edge {
        return contract("measure density must be an edge field");
    }
    let h = g.h();
    let spec = g.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega_cells = g.omega_cells();
    let mut best = 0.0f64;
    let mut tried = 0;
    let mut attempts = 0;
    while tried < count.max(500) {
        attempts += 1;
        if attempts > 50 * count.max(500) {
            break;
        }
        let c = g.pos(Loc::Cell, omega_cells[rng.gen_range(0..omega_cells.len())]);
        let r = rng.gen_range(2.0..8.0) * g.hmax();
        if boundary_projection(&g, c).1 <= r + g.hmax() || !inside_omega(&g, c) {
            continue;
        }
        let mut v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let vn = norm(v).max(1e-12);
        v = v.map(|x| x / vn);
        let bump = Bump { c, r, v, curl: tried % 2 == 1 };
        tried += 1;
        // index window of the support
        let lo = [0, 1, 2].map(|a| (((c[a] - r - spec.box_min[a]) / h[a]).floor().max(0.0)) as usize);
        let hi = [0, 1, 2].map(|a| ((c[a] + r - spec.box_min[a]) / h[a]).ceil() as usize + 1);
        let mut pairing = 0.0;
        for a in 0..3 {
            let d = g.dims(Loc::Edge(a));
            let ein = g.edge_in(a);
            for k in lo[2]..hi[2].min(d[2]) {
                for j in lo[1]..hi[1].min(d[1]) {
                    for i in lo[0]..hi[0].min(d[0]) {
                        let e = idx3(d, i, j, k);
                        if ein[e] {
                            pairing += density.c[a][e] * bump.eval(g.pos(Loc::Edge(a), e))[a];
                        }
                    }
                }
            }
        }
        pairing *= g.vol();
        if let Some((cur, f)) = &m.current {
            let mut s = 0.0;
            for seg in &cur.segments {
                let len = seg.length();
                let pieces = ((len / (0.5 * g.hmin())).ceil() as usize).max(1);
                let d = sub(seg.b, seg.a);
                for q in 0..pieces {
                    for (x, w) in [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)] {
                        let t = (q as f64 + 0.5 + 0.5 * x) / pieces as f64;
                        let p = [0, 1, 2].map(|k| seg.a[k] + t * d[k]);
                        s += seg.mult as f64 * w * 0.5 / pieces as f64 * crate::mesh::dot3(bump.eval(p), d);
                    }
                }
            }
            pairing += f * s;
        }
        let hn = holder_norm(&g, &bump, gamma, lo, hi);
        if hn > 0.0 {
            best = best.max(pairing.abs() / hn);
        }
    }
    Ok(best)
}

fn inside_omega(g: &Grid, p: [f64; 3]) -> bool {
    let s = g.spec();
    let h = g.h();
    let n = g.n();
    let idx = [0, 1, 2].map(|a| (((p[a] - s.box_min[a]) / h[a]).floor() as i64).clamp(0, n[a] as i64 - 1) as usize);
    g.cell_in()[idx3(n, idx[0], idx[1], idx[2])]
}

/// `max(max|X|, max Hölder quotient over node pairs at dyadic axis distances)`.
fn holder_norm(g: &Grid, bump: &Bump, gamma: f64, lo: [usize; 3], hi: [usize; 3]) -> f64 {
    let d = g.dims(Loc::Node);
    let h = g.h();
    let hi = [0, 1, 2].map(|a| hi[a].min(d[a]));
    let dims = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut vals = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                vals.push(bump.eval(g.pos(Loc::Node, idx3(d, i, j, k))));
            }
        }
    }
    let mut best = vals.iter().map(|v| norm(*v)).fold(0.0, f64::max);
    for a in 0..3 {
        let mut step = 1;
        while step < dims[a] {
            let dist = (step as f64 * h[a]).powf(gamma);
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let p = [i, j, k];
                        if p[a] + step >= dims[a] {
                            continue;
                        }
                        let mut q = p;
                        q[a] += step;
                        let x = vals[idx3(dims, p[0], p[1], p[2])];
                        let y = vals[idx3(dims, q[0], q[1], q[2])];
                        best = best.max(norm(sub(x, y)) / dist);
                    }
                }
            }
            step *= 2;
        }
    }
    best
}

/// `μ(u,A) − ν` as a vector measure (ν multiplicities are ν/π).
pub fn vorticity_defect(u: &ComplexField, a: &VectorField, nu: &PolyCurrent) -> Result<VectorMeasure> {
    let mu = crate::energy::vorticity(u, a)?;
    Ok(VectorMeasure { density: Some(mu), current: Some((nu.clone(), -PI)) })
}

/// μ as a vector measure.
pub fn vorticity_measure(u: &ComplexField, a: &VectorField) -> Result<VectorMeasure> {
    Ok(VectorMeasure { density: Some(crate::energy::vorticity(u, a)?), current: None })
}

#[allow(dead_code)]
fn curl_of(v: &VectorField) -> VectorField {
    VectorField { grid: v.grid.clone(), kind: VKind::Edge, c: curl_f(&v.grid, &v.c) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::fixtures;
    use crate::mesh::GridSpec;

    fn ones(g: &Grid) -> ScalarField {
        ScalarField::from_fn(g, Loc::Cell, |_| 1.0)
    }

    #[test]
    fn hungarian_small() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let col = hungarian(&c);
        let cost: f64 = col.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
        assert_eq!(cost, 5.0);
    }

    #[test]
    fn single_face_vortex() {
        let n = 21;
        let z0 = [0.13, -0.07];
        let vals: Vec<Complex64> = (0..n * n)
            .map(|k| {
                let (x, y) = (-1.0 + 0.1 * (k % n) as f64, -1.0 + 0.1 * (k / n) as f64);
                let (dx, dy) = (x - z0[0], y - z0[1]);
                Complex64::from_polar((dx.hypot(dy) / 0.1).tanh(), dy.atan2(dx))
            })
            .collect();
        let f = FaceSamples { nb: n, nc: n, origin: [-1.0, -1.0, 0.0], eb: [0.1, 0.0, 0.0], ec: [0.0, 0.1, 0.0], values: vals };
        let v = face_vortices(&f, (2, [0, 0, 0])).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].degree, 1);
        assert!((v[0].centroid[0] - z0[0]).hypot(v[0].centroid[1] - z0[1]) < 0.1);
    }

    #[test]
    fn vortexless_field_gives_empty_nu() {
        let g = Grid::new(GridSpec::ball(1.0, 1.3, 30)).unwrap();
        let u = ComplexField::constant(&g, Complex64::new(1.0, 0.0));
        let a = VectorField::zeros(&g, VKind::Face);
        let nu = assemble_nu(&u, &a, &ones(&g), 0.1, 0.4).unwrap();
        assert!(nu.nu.is_empty() && nu.support_cells.is_empty() && nu.mass == 0.0);
        assert_eq!(nu.grid.offset_index, [0, 0, 0]);
    }

    #[test]
    fn ring_gives_closed_nu() {
        let g = Grid::new(GridSpec::ball(1.0, 1.25, 48)).unwrap();
        let u = fixtures::vortex_ring(&g, [0.0, 0.0, 0.02], 0.5, 0.05);
        let a = VectorField::zeros(&g, VKind::Face);
        let nu = assemble_nu(&u, &a, &ones(&g), 0.05, 0.32).unwrap();
        assert!(!nu.nu.is_empty());
        assert!(nu.nu.boundary().is_empty(), "{:?}", nu.nu.boundary());
        assert!(nu.cube_degree_sums.iter().all(|&s| s == 0));
        assert!(nu.nu.segments.iter().all(|s| s.mult % 2 == 0));
    }

    #[test]
    fn lattice_current_is_closed_inside() {
        let g = Grid::new(GridSpec::ball(1.0, 1.3, 30)).unwrap();
        let u = fixtures::vortex_ring(&g, [0.0, 0.0, 0.0], 0.5, 0.1);
        let lc = lattice_current(&u);
        assert!(!lc.is_empty());
        assert!(lc.boundary().is_empty());
    }

    #[test]
    fn ball_lab_degree_one() {
        let eps = 0.1;
        let s = Slice2D::from_fn(
            200,
            [0.0, 0.0],
            1.0,
            |p| Complex64::from_polar((p[0].hypot(p[1]) / eps).tanh(), p[1].atan2(p[0])),
            |_| 1.0,
        );
        let r = ball_construction(&s, eps, 1.0).unwrap();
        assert_eq!(r.balls.iter().map(|b| b.degree).sum::<i64>(), 1);
        assert!(r.measured_energy >= r.bound && r.bound > 0.0);
    }
}
