//! Staggered structured grid over a box containing the sample Ω.
//!
//! Scalars live at cell centers, vector potentials and currents on faces
//! (one lattice per component), fields such as curl A on edges. A face
//! between two cells is a *link*; an edge is pierced by the plaquette of
//! the four cells around it.
//!
//! Two chains of difference operators are provided:
//!
//! * dual: `grad_c` cells→faces, `curl_f` faces→edges, `div_e` edges→nodes
//! * primal: `grad_n` nodes→edges, `curl_e` edges→faces, `div_f` faces→cells
//!
//! with `curl_f = curl_eᵀ`, `grad_c = −div_fᵀ` and `div_e = −grad_nᵀ` on the
//! interior entities. Every composition `div∘curl` and `curl∘grad` vanishes
//! identically because the stencils telescope.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{contract, Result};

/// Description of the sample Ω inside the computational box.
#[derive(Clone, Debug, PartialEq)]
pub enum Omega {
    Ball { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
    /// Signed distance sampled at cell centers, negative inside.
    Samples(Vec<f64>),
}

impl Omega {
    /// Signed distance at an arbitrary point, when it is known analytically.
    pub fn sdf(&self, p: [f64; 3]) -> Option<f64> {
        match self {
            Omega::Ball { center, radius } => Some(norm(sub(p, *center)) - radius),
            Omega::Box { min, max } => {
                let mut outside = 0.0f64;
                let mut inside = f64::NEG_INFINITY;
                for a in 0..3 {
                    let d = (min[a] - p[a]).max(p[a] - max[a]);
                    outside += d.max(0.0).powi(2);
                    inside = inside.max(d);
                }
                Some(if outside > 0.0 { outside.sqrt() } else { inside })
            }
            Omega::Samples(_) => None,
        }
    }

    /// Nearest point of ∂Ω for the analytic descriptors.
    pub fn project_to_boundary(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        match self {
            Omega::Ball { center, radius } => {
                let d = sub(p, *center);
                let r = norm(d);
                if r < 1e-300 {
                    return Some([center[0], center[1], center[2] + radius]);
                }
                Some(add(*center, scale(d, radius / r)))
            }
            Omega::Box { min, max } => {
                let mut q = p;
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for a in 0..3 {
                    q[a] = p[a].clamp(min[a], max[a]);
                    for v in [min[a], max[a]] {
                        let d = (p[a] - v).abs();
                        if d < best.0 {
                            best = (d, a, v);
                        }
                    }
                }
                let inside = (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]);
                if inside {
                    q = p;
                    q[best.1] = best.2;
                }
                Some(q)
            }
            Omega::Samples(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    pub n: [usize; 3],
    pub omega: Omega,
}

impl GridSpec {
    /// Cubic box around a ball; `margin` is box side over ball diameter.
    pub fn ball(radius: f64, margin: f64, n: usize) -> GridSpec {
        let half = radius * margin;
        GridSpec {
            box_min: [-half; 3],
            box_max: [half; 3],
            n: [n; 3],
            omega: Omega::Ball { center: [0.0; 3], radius },
        }
    }
}

/// Lattice on which a sample lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loc {
    Cell,
    Node,
    Face(usize),
    Edge(usize),
}

impl Loc {
    /// Offset of sample 0 from `box_min`, in units of h.
    fn offset(self, axis: usize) -> f64 {
        match self {
            Loc::Cell => 0.5,
            Loc::Node => 0.0,
            Loc::Face(a) => {
                if a == axis {
                    0.0
                } else {
                    0.5
                }
            }
            Loc::Edge(a) => {
                if a == axis {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }
}

/// Link of L_Ω: face index and the cells below and above along the axis.
#[derive(Clone, Copy, Debug)]
pub struct Link {
    pub face: usize,
    pub lo: usize,
    pub hi: usize,
}

#[derive(Debug)]
struct GridData {
    spec: GridSpec,
    h: [f64; 3],
    vol: f64,
    cell_in: Vec<bool>,
    omega_cells: Vec<usize>,
    links: [Vec<Link>; 3],
    link_in: [Vec<bool>; 3],
    edge_in: [Vec<bool>; 3],
    edge_interior: [Vec<bool>; 3],
    node_in: Vec<bool>,
    adm: [Vec<bool>; 3],
    layer: Vec<bool>,
}

/// Shared, immutable grid with its Ω masks.
#[derive(Clone, Debug)]
pub struct Grid(Arc<GridData>);

impl PartialEq for Grid {
    fn eq(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

#[inline]
pub fn idx3(d: [usize; 3], i: usize, j: usize, k: usize) -> usize {
    i + d[0] * (j + d[1] * k)
}

#[inline]
pub fn ijk3(d: [usize; 3], id: usize) -> [usize; 3] {
    [id % d[0], (id / d[0]) % d[1], id / (d[0] * d[1])]
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Grid> {
        let n = spec.n;
        let mut h = [0.0; 3];
        for a in 0..3 {
            h[a] = (spec.box_max[a] - spec.box_min[a]) / n[a] as f64;
            if !(h[a] > 0.0) || !h[a].is_finite() || n[a] < 5 {
                return contract(format!("axis {a}: need positive spacing and at least 5 cells"));
            }
        }
        let ncell = n[0] * n[1] * n[2];
        let mut cell_in = vec![false; ncell];
        match &spec.omega {
            Omega::Samples(s) => {
                if s.len() != ncell {
                    return contract("signed-distance samples must match the cell count");
                }
                for c in 0..ncell {
                    cell_in[c] = s[c] < 0.0;
                }
            }
            om => {
                for k in 0..n[2] {
                    for j in 0..n[1] {
                        for i in 0..n[0] {
                            let p = [
                                spec.box_min[0] + (i as f64 + 0.5) * h[0],
                                spec.box_min[1] + (j as f64 + 0.5) * h[1],
                                spec.box_min[2] + (k as f64 + 0.5) * h[2],
                            ];
                            cell_in[idx3(n, i, j, k)] = om.sdf(p).unwrap() < 0.0;
                        }
                    }
                }
            }
        }
        let mut layer = vec![false; ncell];
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let c = idx3(n, i, j, k);
                    let ijk = [i, j, k];
                    let outer = (0..3).any(|a| ijk[a] < 2 || ijk[a] + 2 >= n[a]);
                    if outer && cell_in[c] {
                        return contract("Ω must keep two exterior cell layers from the box boundary");
                    }
                    layer[c] = (0..3).any(|a| ijk[a] == 0 || ijk[a] + 1 == n[a]);
                }
            }
        }
        let omega_cells: Vec<usize> = (0..ncell).filter(|&c| cell_in[c]).collect();
        if omega_cells.is_empty() {
            return contract("Ω contains no cell centers");
        }

        let mut links: [Vec<Link>; 3] = Default::default();
        let mut link_in: [Vec<bool>; 3] = Default::default();
        let mut adm: [Vec<bool>; 3] = Default::default();
        let mut edge_in: [Vec<bool>; 3] = Default::default();
        let mut edge_interior: [Vec<bool>; 3] = Default::default();
        for a in 0..3 {
            let fd = face_dims(n, a);
            let nf = fd[0] * fd[1] * fd[2];
            link_in[a] = vec![false; nf];
            adm[a] = vec![false; nf];
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let mut p = [i, j, k];
                        if p[a] == 0 || p[a] == n[a] {
                            continue;
                        }
                        let f = idx3(fd, i, j, k);
                        let hi = idx3(n, p[0], p[1], p[2]);
                        p[a] -= 1;
                        let lo = idx3(n, p[0], p[1], p[2]);
                        adm[a][f] = !(layer[lo] && layer[hi]);
                        if cell_in[lo] && cell_in[hi] {
                            link_in[a][f] = true;
                            links[a].push(Link { face: f, lo, hi });
                        }
                    }
                }
            }
            let ed = edge_dims(n, a);
            let ne = ed[0] * ed[1] * ed[2];
            edge_in[a] = vec![false; ne];
            edge_interior[a] = vec![false; ne];
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            for k in 0..ed[2] {
                for j in 0..ed[1] {
                    for i in 0..ed[0] {
                        let p = [i, j, k];
                        if p[b] == 0 || p[b] == n[b] || p[c] == 0 || p[c] == n[c] {
                            continue;
                        }
                        let e = idx3(ed, i, j, k);
                        edge_interior[a][e] = true;
                        let mut all = true;
                        for db in 0..2 {
                            for dc in 0..2 {
                                let mut q = p;
                                q[b] -= db;
                                q[c] -= dc;
                                all &= cell_in[idx3(n, q[0], q[1], q[2])];
                            }
                        }
                        edge_in[a][e] = all;
                    }
                }
            }
        }
        let nd = [n[0] + 1, n[1] + 1, n[2] + 1];
        let mut node_in = vec![false; nd[0] * nd[1] * nd[2]];
        for k in 1..n[2] {
            for j in 1..n[1] {
                for i in 1..n[0] {
                    let mut all = true;
                    for dk in 0..2 {
                        for dj in 0..2 {
                            for di in 0..2 {
                                all &= cell_in[idx3(n, i - di, j - dj, k - dk)];
                            }
                        }
                    }
                    node_in[idx3(nd, i, j, k)] = all;
                }
            }
        }
        Ok(Grid(Arc::new(GridData {
            vol: h[0] * h[1] * h[2],
            spec,
            h,
            cell_in,
            omega_cells,
            links,
            link_in,
            edge_in,
            edge_interior,
            node_in,
            adm,
            layer,
        })))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.0.spec
    }
    pub fn n(&self) -> [usize; 3] {
        self.0.spec.n
    }
    pub fn h(&self) -> [f64; 3] {
        self.0.h
    }
    pub fn hmin(&self) -> f64 {
        self.0.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    pub fn hmax(&self) -> f64 {
        self.0.h.iter().cloned().fold(0.0, f64::max)
    }
    /// Volume weight carried by every lattice sample.
    pub fn vol(&self) -> f64 {
        self.0.vol
    }
    pub fn omega(&self) -> &Omega {
        &self.0.spec.omega
    }

    pub fn dims(&self, loc: Loc) -> [usize; 3] {
        let n = self.n();
        match loc {
            Loc::Cell => n,
            Loc::Node => [n[0] + 1, n[1] + 1, n[2] + 1],
            Loc::Face(a) => face_dims(n, a),
            Loc::Edge(a) => edge_dims(n, a),
        }
    }
    pub fn len(&self, loc: Loc) -> usize {
        let d = self.dims(loc);
        d[0] * d[1] * d[2]
    }
    pub fn pos(&self, loc: Loc, id: usize) -> [f64; 3] {
        let ijk = ijk3(self.dims(loc), id);
        let s = &self.0.spec;
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = s.box_min[a] + (ijk[a] as f64 + loc.offset(a)) * self.0.h[a];
        }
        p
    }

    pub fn cell_in(&self) -> &[bool] {
        &self.0.cell_in
    }
    pub fn omega_cells(&self) -> &[usize] {
        &self.0.omega_cells
    }
    /// Links of L_Ω along `axis`.
    pub fn links(&self, axis: usize) -> &[Link] {
        &self.0.links[axis]
    }
    pub fn link_in(&self, axis: usize) -> &[bool] {
        &self.0.link_in[axis]
    }
    /// Edges whose four surrounding cells lie in Ω.
    pub fn edge_in(&self, axis: usize) -> &[bool] {
        &self.0.edge_in[axis]
    }
    /// Edges not on the box boundary.
    pub fn edge_interior(&self, axis: usize) -> &[bool] {
        &self.0.edge_interior[axis]
    }
    /// Interior nodes whose eight cells lie in Ω.
    pub fn node_in(&self) -> &[bool] {
        &self.0.node_in
    }
    /// Faces where perturbations of the vector potential may live.
    pub fn admissible(&self, axis: usize) -> &[bool] {
        &self.0.adm[axis]
    }
    /// Outermost cell layer of the box.
    pub fn boundary_layer(&self) -> &[bool] {
        &self.0.layer
    }
    /// Cells of Ω with at least one face neighbour outside Ω.
    pub fn omega_boundary_cells(&self) -> Vec<usize> {
        let n = self.n();
        let inn = &self.0.cell_in;
        self.0
            .omega_cells
            .iter()
            .cloned()
            .filter(|&c| {
                let p = ijk3(n, c);
                (0..3).any(|a| {
                    let mut q = p;
                    q[a] -= 1;
                    let lo = idx3(n, q[0], q[1], q[2]);
                    q[a] += 2;
                    let hi = idx3(n, q[0], q[1], q[2]);
                    !inn[lo] || !inn[hi]
                })
            })
            .collect()
    }
    pub fn omega_volume(&self) -> f64 {
        self.0.omega_cells.len() as f64 * self.0.vol
    }

    /// Trilinear interpolation of a lattice at `p`, clamped to the lattice hull.
    pub fn interp(&self, loc: Loc, v: &[f64], p: [f64; 3]) -> f64 {
        let d = self.dims(loc);
        let s = &self.0.spec;
        let mut i0 = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let x = (p[a] - s.box_min[a]) / self.0.h[a] - loc.offset(a);
            if d[a] == 1 {
                continue;
            }
            let xm = x.clamp(0.0, (d[a] - 1) as f64);
            let f = (xm.floor() as usize).min(d[a] - 2);
            i0[a] = f;
            t[a] = xm - f as f64;
        }
        let mut acc = 0.0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = (if di == 1 { t[0] } else { 1.0 - t[0] })
                        * (if dj == 1 { t[1] } else { 1.0 - t[1] })
                        * (if dk == 1 { t[2] } else { 1.0 - t[2] });
                    if w == 0.0 {
                        continue;
                    }
                    acc += w * v[idx3(d, i0[0] + di, i0[1] + dj, i0[2] + dk)];
                }
            }
        }
        acc
    }
}

pub fn face_dims(n: [usize; 3], a: usize) -> [usize; 3] {
    let mut d = n;
    d[a] += 1;
    d
}

pub fn edge_dims(n: [usize; 3], a: usize) -> [usize; 3] {
    let mut d = [n[0] + 1, n[1] + 1, n[2] + 1];
    d[a] -= 1;
    d
}

// ---------------------------------------------------------------- fields

#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid: Grid,
    pub loc: Loc,
    pub v: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VKind {
    Face,
    Edge,
}

impl VKind {
    pub fn loc(self, a: usize) -> Loc {
        match self {
            VKind::Face => Loc::Face(a),
            VKind::Edge => Loc::Edge(a),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VectorField {
    pub grid: Grid,
    pub kind: VKind,
    pub c: [Vec<f64>; 3],
}

#[derive(Clone, Debug)]
pub struct ComplexField {
    pub grid: Grid,
    pub v: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid, loc: Loc) -> ScalarField {
        assert!(matches!(loc, Loc::Cell | Loc::Node));
        ScalarField { v: vec![0.0; grid.len(loc)], grid: grid.clone(), loc }
    }
    pub fn cells(grid: &Grid, v: Vec<f64>) -> Result<ScalarField> {
        if v.len() != grid.len(Loc::Cell) {
            return contract("cell field has the wrong sample count");
        }
        Ok(ScalarField { grid: grid.clone(), loc: Loc::Cell, v })
    }
    pub fn from_fn(grid: &Grid, loc: Loc, mut f: impl FnMut([f64; 3]) -> f64) -> ScalarField {
        let v = (0..grid.len(loc)).map(|i| f(grid.pos(loc, i))).collect();
        ScalarField { grid: grid.clone(), loc, v }
    }
    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }
}

impl VectorField {
    pub fn zeros(grid: &Grid, kind: VKind) -> VectorField {
        let c = [0, 1, 2].map(|a| vec![0.0; grid.len(kind.loc(a))]);
        VectorField { grid: grid.clone(), kind, c }
    }
    pub fn from_fn(grid: &Grid, kind: VKind, f: impl Fn([f64; 3]) -> [f64; 3]) -> VectorField {
        let c = [0, 1, 2].map(|a| {
            let loc = kind.loc(a);
            (0..grid.len(loc)).map(|i| f(grid.pos(loc, i))[a]).collect()
        });
        VectorField { grid: grid.clone(), kind, c }
    }
    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
    pub fn max_abs(&self) -> f64 {
        self.c.iter().flat_map(|v| v.iter()).fold(0.0, |m, x| m.max(x.abs()))
    }
    pub fn scaled(&self, s: f64) -> VectorField {
        let mut out = self.clone();
        out.c.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= s));
        out
    }
    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &VectorField) -> Result<VectorField> {
        same_vec(self, other)?;
        let mut out = self.clone();
        for a in 0..3 {
            for (x, y) in out.c[a].iter_mut().zip(&other.c[a]) {
                *x += s * y;
            }
        }
        Ok(out)
    }
    /// Value of the staggered field at a point (component-wise trilinear).
    pub fn at(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.grid.interp(self.kind.loc(a), &self.c[a], p))
    }
}

impl ComplexField {
    pub fn from_fn(grid: &Grid, mut f: impl FnMut([f64; 3]) -> Complex64) -> ComplexField {
        let v = (0..grid.len(Loc::Cell)).map(|i| f(grid.pos(Loc::Cell, i))).collect();
        ComplexField { grid: grid.clone(), v }
    }
    pub fn constant(grid: &Grid, z: Complex64) -> ComplexField {
        ComplexField { grid: grid.clone(), v: vec![z; grid.len(Loc::Cell)] }
    }
    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return contract("fields live on different grids");
    }
    Ok(())
}

pub(crate) fn same_vec(a: &VectorField, b: &VectorField) -> Result<()> {
    same_grid(&a.grid, &b.grid)?;
    if a.kind != b.kind {
        return contract("vector fields have different staggering");
    }
    Ok(())
}

// ------------------------------------------------------------- operators

/// Cells → faces. Zero on box-boundary faces.
pub fn grad_c(g: &Grid, f: &[f64]) -> [Vec<f64>; 3] {
    let n = g.n();
    let h = g.h();
    [0, 1, 2].map(|a| {
        let fd = face_dims(n, a);
        let mut out = vec![0.0; fd[0] * fd[1] * fd[2]];
        let st = stride(n, a);
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let p = [i, j, k];
                    if p[a] == 0 || p[a] == n[a] {
                        continue;
                    }
                    let hi = idx3(n, i, j, k);
                    out[idx3(fd, i, j, k)] = (f[hi] - f[hi - st]) / h[a];
                }
            }
        }
        out
    })
}

/// Faces → cells.
pub fn div_f(g: &Grid, v: &[Vec<f64>; 3]) -> Vec<f64> {
    let n = g.n();
    let h = g.h();
    let mut out = vec![0.0; n[0] * n[1] * n[2]];
    for a in 0..3 {
        let fd = face_dims(n, a);
        let st = stride(fd, a);
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let f = idx3(fd, i, j, k);
                    out[idx3(n, i, j, k)] += (v[a][f + st] - v[a][f]) / h[a];
                }
            }
        }
    }
    out
}

/// Faces → edges, on interior edges only.
pub fn curl_f(g: &Grid, v: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
    let n = g.n();
    let h = g.h();
    [0, 1, 2].map(|a| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let ed = edge_dims(n, a);
        let (fb, fc) = (face_dims(n, b), face_dims(n, c));
        let (sb, sc) = (stride(fc, b), stride(fb, c));
        let mut out = vec![0.0; ed[0] * ed[1] * ed[2]];
        for k in 0..ed[2] {
            for j in 0..ed[1] {
                for i in 0..ed[0] {
                    let p = [i, j, k];
                    if p[b] == 0 || p[b] == n[b] || p[c] == 0 || p[c] == n[c] {
                        continue;
                    }
                    // ∂_b V_c − ∂_c V_b
                    let ic = idx3(fc, i, j, k);
                    let ib = idx3(fb, i, j, k);
                    out[idx3(ed, i, j, k)] =
                        (v[c][ic] - v[c][ic - sb]) / h[b] - (v[b][ib] - v[b][ib - sc]) / h[c];
                }
            }
        }
        out
    })
}

/// Edges → faces, on every face.
pub fn curl_e(g: &Grid, v: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
    let n = g.n();
    let h = g.h();
    [0, 1, 2].map(|a| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let fd = face_dims(n, a);
        let (eb, ec) = (edge_dims(n, b), edge_dims(n, c));
        let (sb, sc) = (stride(ec, b), stride(eb, c));
        let mut out = vec![0.0; fd[0] * fd[1] * fd[2]];
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let ic = idx3(ec, i, j, k);
                    let ib = idx3(eb, i, j, k);
                    out[idx3(fd, i, j, k)] =
                        (v[c][ic + sb] - v[c][ic]) / h[b] - (v[b][ib + sc] - v[b][ib]) / h[c];
                }
            }
        }
        out
    })
}

/// Nodes → edges.
pub fn grad_n(g: &Grid, f: &[f64]) -> [Vec<f64>; 3] {
    let n = g.n();
    let h = g.h();
    let nd = [n[0] + 1, n[1] + 1, n[2] + 1];
    [0, 1, 2].map(|a| {
        let ed = edge_dims(n, a);
        let st = stride(nd, a);
        let mut out = vec![0.0; ed[0] * ed[1] * ed[2]];
        for k in 0..ed[2] {
            for j in 0..ed[1] {
                for i in 0..ed[0] {
                    let m = idx3(nd, i, j, k);
                    out[idx3(ed, i, j, k)] = (f[m + st] - f[m]) / h[a];
                }
            }
        }
        out
    })
}

/// Edges → nodes, on interior nodes only.
pub fn div_e(g: &Grid, v: &[Vec<f64>; 3]) -> Vec<f64> {
    let n = g.n();
    let h = g.h();
    let nd = [n[0] + 1, n[1] + 1, n[2] + 1];
    let mut out = vec![0.0; nd[0] * nd[1] * nd[2]];
    for a in 0..3 {
        let ed = edge_dims(n, a);
        let st = stride(ed, a);
        for k in 1..n[2] {
            for j in 1..n[1] {
                for i in 1..n[0] {
                    let e = idx3(ed, i, j, k);
                    out[idx3(nd, i, j, k)] += (v[a][e] - v[a][e - st]) / h[a];
                }
            }
        }
    }
    out
}

#[inline]
fn stride(d: [usize; 3], a: usize) -> usize {
    match a {
        0 => 1,
        1 => d[0],
        _ => d[0] * d[1],
    }
}

/// Gradient: cells → faces or nodes → edges.
pub fn grad(f: &ScalarField) -> VectorField {
    match f.loc {
        Loc::Node => VectorField { grid: f.grid.clone(), kind: VKind::Edge, c: grad_n(&f.grid, &f.v) },
        _ => VectorField { grid: f.grid.clone(), kind: VKind::Face, c: grad_c(&f.grid, &f.v) },
    }
}

/// Divergence: faces → cells or edges → nodes.
pub fn div(v: &VectorField) -> ScalarField {
    match v.kind {
        VKind::Face => ScalarField { grid: v.grid.clone(), loc: Loc::Cell, v: div_f(&v.grid, &v.c) },
        VKind::Edge => ScalarField { grid: v.grid.clone(), loc: Loc::Node, v: div_e(&v.grid, &v.c) },
    }
}

/// Curl: faces → edges or edges → faces.
pub fn curl(v: &VectorField) -> VectorField {
    match v.kind {
        VKind::Face => VectorField { grid: v.grid.clone(), kind: VKind::Edge, c: curl_f(&v.grid, &v.c) },
        VKind::Edge => VectorField { grid: v.grid.clone(), kind: VKind::Face, c: curl_e(&v.grid, &v.c) },
    }
}

/// Checked variants that enforce the expected staggering.
pub fn grad_cells(f: &ScalarField) -> Result<VectorField> {
    if f.loc != Loc::Cell {
        return contract("cell gradient needs a cell-centred field");
    }
    Ok(grad(f))
}

pub fn div_faces(v: &VectorField) -> Result<ScalarField> {
    if v.kind != VKind::Face {
        return contract("face divergence needs a face field");
    }
    Ok(div(v))
}

pub fn curl_faces(v: &VectorField) -> Result<VectorField> {
    if v.kind != VKind::Face {
        return contract("face curl needs a face field");
    }
    Ok(curl(v))
}

// ------------------------------------------------------ gauge kinetics

/// Link kinetic density
/// `K = (|ψ'−ψ|² − 2θ·Im(ψ̄ψ') + θ²|ψ||ψ'|)/h²`, θ = h·A.
///
/// Nonnegative; vanishes on `ψ = e^{iαx}`, `A = α` up to O(θ⁴).
#[inline]
pub fn link_kinetic(psi: Complex64, psi2: Complex64, theta: f64, h: f64) -> f64 {
    let d = psi2 - psi;
    let im = (psi.conj() * psi2).im;
    (d.norm_sqr() - 2.0 * theta * im + theta * theta * psi.norm() * psi2.norm()) / (h * h)
}

/// Link supercurrent `(Im(ψ̄ψ') − θ|ψ||ψ'|)/h`, the derivative of −½K in A.
#[inline]
pub fn link_current(psi: Complex64, psi2: Complex64, theta: f64, h: f64) -> f64 {
    ((psi.conj() * psi2).im - theta * psi.norm() * psi2.norm()) / h
}

/// Covariant gradient `∂u − iA·m` on the links of L_Ω, zero elsewhere.
///
/// The link value `m` of u is chosen with `|m|² = |ψ||ψ'|` so that the
/// modulus squared reproduces [`link_kinetic`] exactly.
pub fn covariant_grad(u: &ComplexField, a: &VectorField) -> Result<[Vec<Complex64>; 3]> {
    same_grid(&u.grid, &a.grid)?;
    if a.kind != VKind::Face {
        return contract("vector potential must live on faces");
    }
    let g = &u.grid;
    let h = g.h();
    Ok([0, 1, 2].map(|ax| {
        let mut out = vec![Complex64::new(0.0, 0.0); g.len(Loc::Face(ax))];
        for l in g.links(ax) {
            let (p, q) = (u.v[l.lo], u.v[l.hi]);
            let m = link_mean(p, q);
            out[l.face] = (q - p) / h[ax] - Complex64::i() * a.c[ax][l.face] * m;
        }
        out
    }))
}

fn link_mean(p: Complex64, q: Complex64) -> Complex64 {
    let rr = p.norm() * q.norm();
    if rr == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let d = q - p;
    let dn = d.norm();
    let mid = (p / p.norm() + q / q.norm()).arg();
    if dn == 0.0 {
        return Complex64::from_polar(rr.sqrt(), p.arg());
    }
    // Im(d̄ m) = −Im(p̄ q) with |m| = √(rr)
    let s = (-(p.conj() * q).im / (rr.sqrt() * dn)).clamp(-1.0, 1.0);
    let b1 = d.arg() + s.asin();
    let b2 = d.arg() + std::f64::consts::PI - s.asin();
    let dist = |b: f64| (Complex64::from_polar(1.0, b - mid)).arg().abs();
    let beta = if dist(b1) <= dist(b2) { b1 } else { b2 };
    Complex64::from_polar(rr.sqrt(), beta)
}

// ------------------------------------------------------------ quadrature

/// Region of integration for cell-centred densities.
#[derive(Clone, Debug)]
pub enum Region {
    Omega,
    Box,
    Mask(Vec<bool>),
}

/// Result of a midpoint-rule integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Set when the region contains no cell.
    pub empty: bool,
}

/// Midpoint rule `V·Σ f(c)` over the cells of a region, in index order.
pub fn integrate(density: &ScalarField, region: &Region) -> Result<Integral> {
    if density.loc != Loc::Cell {
        return contract("integrate needs a cell-centred density");
    }
    let g = &density.grid;
    let mut s = 0.0;
    let mut count = 0usize;
    match region {
        Region::Omega => {
            for &c in g.omega_cells() {
                s += density.v[c];
                count += 1;
            }
        }
        Region::Box => {
            for x in &density.v {
                s += x;
                count += 1;
            }
        }
        Region::Mask(m) => {
            if m.len() != density.v.len() {
                return contract("mask length differs from the cell count");
            }
            for (x, &keep) in density.v.iter().zip(m) {
                if keep {
                    s += x;
                    count += 1;
                }
            }
        }
    }
    Ok(Integral { value: s * g.vol(), empty: count == 0 })
}

/// `V·Σ a·b` over the samples of two staggered fields.
pub fn dot(a: &VectorField, b: &VectorField) -> Result<f64> {
    same_vec(a, b)?;
    let mut s = 0.0;
    for ax in 0..3 {
        for (x, y) in a.c[ax].iter().zip(&b.c[ax]) {
            s += x * y;
        }
    }
    Ok(s * a.grid.vol())
}

// ------------------------------------------------------------ small vec

#[inline]
pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}
#[inline]
pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
#[inline]
pub fn norm(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid {
        Grid::new(GridSpec::ball(1.0, 2.0, n)).unwrap()
    }

    fn rand_vec(g: &Grid, kind: VKind, rng: &mut ChaCha8Rng) -> VectorField {
        let mut v = VectorField::zeros(g, kind);
        v.c.iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0)));
        v
    }

    #[test]
    fn linear_gradient_exact() {
        let g = grid(10);
        let f = ScalarField::from_fn(&g, Loc::Cell, |p| p[0]);
        let gf = grad(&f);
        let n = g.n();
        for (id, &x) in gf.c[0].iter().enumerate() {
            let p = ijk3(face_dims(n, 0), id);
            if p[0] > 0 && p[0] < n[0] {
                assert!((x - 1.0).abs() < 1e-12);
            }
        }
        assert!(gf.c[1].iter().chain(&gf.c[2]).all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn rotation_curl_is_two() {
        let g = grid(9);
        let v = VectorField::from_fn(&g, VKind::Face, |p| [-p[1], p[0], 0.0]);
        let c = curl(&v);
        for (e, &inside) in g.edge_interior(2).iter().enumerate() {
            if inside {
                assert!((c.c[2][e] - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compositions_vanish() {
        let g = grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_vec(&g, VKind::Face, &mut rng);
        let b = rand_vec(&g, VKind::Edge, &mut rng);
        let scale = 100.0 * f64::EPSILON / g.hmin().powi(2);
        assert!(div(&curl(&a)).v.iter().all(|x| x.abs() < scale));
        assert!(div(&curl(&b)).v.iter().all(|x| x.abs() < scale));
        let fc = ScalarField::from_fn(&g, Loc::Cell, |p| (3.0 * p[0]).sin() * p[1] + p[2] * p[2]);
        let fnode = ScalarField::from_fn(&g, Loc::Node, |p| p[0] * p[1] * p[2]);
        assert!(curl(&grad(&fc)).max_abs() < scale * 10.0);
        assert!(curl(&grad(&fnode)).max_abs() < scale * 10.0);
    }

    #[test]
    fn adjoint_pairs() {
        let g = grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = rand_vec(&g, VKind::Face, &mut rng);
        let mut b = rand_vec(&g, VKind::Edge, &mut rng);
        for ax in 0..3 {
            for (x, &k) in b.c[ax].iter_mut().zip(g.edge_interior(ax)) {
                if !k {
                    *x = 0.0;
                }
            }
        }
        let lhs = dot(&curl(&b), &a).unwrap();
        let rhs = dot(&b, &curl(&a)).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn covariant_modulus_matches_link_kinetic() {
        let g = grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = ComplexField::from_fn(&g, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let a = rand_vec(&g, VKind::Face, &mut rng);
        let d = covariant_grad(&u, &a).unwrap();
        let h = g.h();
        for ax in 0..3 {
            for l in g.links(ax) {
                let k = link_kinetic(u.v[l.lo], u.v[l.hi], h[ax] * a.c[ax][l.face], h[ax]);
                assert!((d[ax][l.face].norm_sqr() - k).abs() < 1e-9 * (1.0 + k));
            }
        }
    }

    #[test]
    fn integrate_box_and_empty() {
        let g = grid(10);
        let one = ScalarField::from_fn(&g, Loc::Cell, |_| 1.0);
        let side = 4.0;
        let box_int = integrate(&one, &Region::Box).unwrap();
        assert!((box_int.value - side * side * side).abs() < 1e-12);
        let e = integrate(&one, &Region::Mask(vec![false; one.v.len()])).unwrap();
        assert!(e.empty && e.value == 0.0);
    }

    #[test]
    fn interp_reproduces_linear() {
        let g = grid(8);
        let f = ScalarField::from_fn(&g, Loc::Node, |p| 2.0 * p[0] - p[1] + 0.5 * p[2]);
        let p = [0.13, -0.41, 0.77];
        assert!((g.interp(Loc::Node, &f.v, p) - (0.26 + 0.41 + 0.385)).abs() < 1e-12);
    }

    #[test]
    fn rejects_omega_touching_box() {
        assert!(Grid::new(GridSpec::ball(1.0, 0.55, 8)).is_err());
    }
}
