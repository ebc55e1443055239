//! Approximating Meissner configuration.
//!
//! The reduced energy
//! `J(A) = ½ Σ_{L_Ω} V w (A − ∇φ_A)² + ½ Σ_edges V |curl(A − A_{0,ex})|²`
//! is minimized over `A_{0,ex} + W` with W admissible: zero on box-boundary
//! faces and on faces joining two cells of the outermost layer. The link
//! weight is `w = ρρ'`, the geometric mean of ρ² on the two cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::linalg::{pcg, CgOutcome};
use crate::mesh::{
    curl_e, curl_f, div_e, div_f, grad_c, grad_n, ijk3, Grid, Loc, Omega, ScalarField, VKind, VectorField,
};

/// Applied field descriptors with analytic Coulomb-gauge potentials.
#[derive(Clone, Debug)]
pub enum ExternalField {
    /// Uniform field `H`.
    Constant([f64; 3]),
    /// `H = (−y, x, 0)` about the center of Ω; curl H = 2e₃.
    Azimuthal,
    /// `H = ∇(x² − y²)`, curl-free.
    Gradient,
    /// Edge samples of H; a potential is fitted by least squares.
    Sampled(VectorField),
}

/// A_{0,ex} on faces and `H_{0,ex} = curl A_{0,ex}` on edges.
#[derive(Clone, Debug)]
pub struct AppliedField {
    pub a0ex: VectorField,
    pub h0ex: VectorField,
}

pub fn omega_center(grid: &Grid) -> [f64; 3] {
    match grid.omega() {
        Omega::Ball { center, .. } => *center,
        Omega::Box { min, max } => [0, 1, 2].map(|a| 0.5 * (min[a] + max[a])),
        Omega::Samples(_) => {
            let s = grid.spec();
            [0, 1, 2].map(|a| 0.5 * (s.box_min[a] + s.box_max[a]))
        }
    }
}

pub fn applied_field(field: &ExternalField, grid: &Grid) -> Result<AppliedField> {
    let c = omega_center(grid);
    let a0ex = match field {
        ExternalField::Constant(hv) => VectorField::from_fn(grid, VKind::Face, |p| {
            let x = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            [
                0.5 * (hv[1] * x[2] - hv[2] * x[1]),
                0.5 * (hv[2] * x[0] - hv[0] * x[2]),
                0.5 * (hv[0] * x[1] - hv[1] * x[0]),
            ]
        }),
        ExternalField::Azimuthal => VectorField::from_fn(grid, VKind::Face, |p| {
            let (x, y) = (p[0] - c[0], p[1] - c[1]);
            [0.0, 0.0, -0.5 * (x * x + y * y)]
        }),
        ExternalField::Gradient => VectorField::from_fn(grid, VKind::Face, |p| {
            let (x, y) = (p[0] - c[0], p[1] - c[1]);
            [0.0, 0.0, 2.0 * x * y]
        }),
        ExternalField::Sampled(h) => {
            if h.kind != VKind::Edge || h.grid != *grid {
                return contract("sampled field must be an edge field on the run grid");
            }
            fit_potential(h)?
        }
    };
    let h0ex = VectorField { grid: grid.clone(), kind: VKind::Edge, c: curl_f(grid, &a0ex.c) };
    Ok(AppliedField { a0ex, h0ex })
}

/// Coulomb-gauge potential minimizing `‖curl A − H‖² + ‖div A‖²`.
fn fit_potential(h: &VectorField) -> Result<VectorField> {
    let g = &h.grid;
    let n = g.n();
    let interior: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
        (0..g.len(Loc::Face(a)))
            .map(|f| {
                let p = ijk3(g.dims(Loc::Face(a)), f);
                if p[a] == 0 || p[a] == n[a] {
                    0.0
                } else {
                    1.0
                }
            })
            .collect()
    });
    let mask_h: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
        h.c[a].iter().zip(g.edge_interior(a)).map(|(x, &k)| if k { *x } else { 0.0 }).collect()
    });
    let layout = FaceLayout::new(g);
    let apply = |x: &[f64], y: &mut [f64]| {
        let v = layout.split(x);
        let cv = curl_f(g, &v);
        let cc = curl_e(g, &cv);
        let dv = div_f(g, &v);
        let gd = grad_c(g, &dv);
        for a in 0..3 {
            for f in 0..layout.len[a] {
                y[layout.off[a] + f] = interior[a][f] * (cc[a][f] - gd[a][f]);
            }
        }
    };
    let cb = curl_e(g, &mask_h);
    let mut b = vec![0.0; layout.total];
    for a in 0..3 {
        for f in 0..layout.len[a] {
            b[layout.off[a] + f] = interior[a][f] * cb[a][f];
        }
    }
    let hh = g.h();
    let d = 2.0 * (1.0 / (hh[0] * hh[0]) + 1.0 / (hh[1] * hh[1]) + 1.0 / (hh[2] * hh[2]));
    let inv: Vec<f64> = (0..layout.total)
        .map(|i| {
            let (a, f) = layout.locate(i);
            interior[a][f] / d
        })
        .collect();
    let mut x = vec![0.0; layout.total];
    let out = pcg(apply, &b, &mut x, &inv, 1e-12, 20000, None);
    if !out.converged {
        return Err(Error::Solver(format!("potential fit stalled at {:e}", out.rel_residual)));
    }
    Ok(VectorField { grid: g.clone(), kind: VKind::Face, c: layout.split(&x) })
}

/// Packing of the three face lattices into one flat vector.
pub(crate) struct FaceLayout {
    pub len: [usize; 3],
    pub off: [usize; 3],
    pub total: usize,
}

impl FaceLayout {
    pub fn new(g: &Grid) -> FaceLayout {
        Self::with_kind(g, VKind::Face)
    }
    pub fn with_kind(g: &Grid, kind: VKind) -> FaceLayout {
        let len = [0, 1, 2].map(|a| g.len(kind.loc(a)));
        FaceLayout { len, off: [0, len[0], len[0] + len[1]], total: len[0] + len[1] + len[2] }
    }
    pub fn split(&self, x: &[f64]) -> [Vec<f64>; 3] {
        [0, 1, 2].map(|a| x[self.off[a]..self.off[a] + self.len[a]].to_vec())
    }
    pub fn locate(&self, i: usize) -> (usize, usize) {
        if i < self.off[1] {
            (0, i)
        } else if i < self.off[2] {
            (1, i - self.off[1])
        } else {
            (2, i - self.off[2])
        }
    }
    pub fn pack(&self, v: &[Vec<f64>; 3], x: &mut [f64]) {
        for a in 0..3 {
            x[self.off[a]..self.off[a] + self.len[a]].copy_from_slice(&v[a]);
        }
    }
}

/// Link weights `w = ρρ'` on L_Ω (zero on other faces).
pub fn link_weights(rho: &ScalarField) -> [Vec<f64>; 3] {
    let g = &rho.grid;
    [0, 1, 2].map(|a| {
        let mut w = vec![0.0; g.len(Loc::Face(a))];
        for l in g.links(a) {
            w[l.face] = rho.v[l.lo] * rho.v[l.hi];
        }
        w
    })
}

fn remove_mean(g: &Grid, x: &mut [f64]) {
    let cells = g.omega_cells();
    let m = cells.iter().map(|&c| x[c]).sum::<f64>() / cells.len() as f64;
    for &c in cells {
        x[c] -= m;
    }
}

/// Zero-mean φ minimizing `Σ_{L_Ω} w (A − ∇φ)²`.
pub fn solve_phi_weighted(g: &Grid, a: &[Vec<f64>; 3], w: &[Vec<f64>; 3], tol: f64) -> Result<(Vec<f64>, CgOutcome)> {
    let h = g.h();
    let nc = g.len(Loc::Cell);
    let apply = |x: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for ax in 0..3 {
            let ih = 1.0 / h[ax];
            for l in g.links(ax) {
                let t = w[ax][l.face] * (x[l.hi] - x[l.lo]) * ih * ih;
                y[l.hi] += t;
                y[l.lo] -= t;
            }
        }
    };
    let mut b = vec![0.0; nc];
    let mut diag = vec![0.0; nc];
    for ax in 0..3 {
        let ih = 1.0 / h[ax];
        for l in g.links(ax) {
            let t = w[ax][l.face] * a[ax][l.face] * ih;
            b[l.hi] += t;
            b[l.lo] -= t;
            diag[l.hi] += w[ax][l.face] * ih * ih;
            diag[l.lo] += w[ax][l.face] * ih * ih;
        }
    }
    for (ax, wv) in w.iter().enumerate() {
        if g.links(ax).iter().any(|l| !(wv[l.face] > 0.0)) {
            return contract("link weight must be positive on L_Ω");
        }
    }
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let proj = |x: &mut [f64]| remove_mean(g, x);
    remove_mean(g, &mut b);
    let mut x = vec![0.0; nc];
    let out = pcg(apply, &b, &mut x, &inv, tol, 20000, Some(&proj));
    if !out.converged {
        return Err(Error::Solver(format!("weighted Neumann solve stalled at {:e}", out.rel_residual)));
    }
    remove_mean(g, &mut x);
    Ok((x, out))
}

/// Weighted potential of A: `div(ρ²(A − ∇φ)) = 0` in Ω with natural boundary data.
pub fn solve_phi(a: &VectorField, rho2: &ScalarField) -> Result<ScalarField> {
    if a.kind != VKind::Face {
        return contract("solve_phi needs a face field");
    }
    crate::mesh::same_grid(&a.grid, &rho2.grid)?;
    let g = &a.grid;
    let w: [Vec<f64>; 3] = [0, 1, 2].map(|ax| {
        let mut w = vec![0.0; g.len(Loc::Face(ax))];
        for l in g.links(ax) {
            w[l.face] = (rho2.v[l.lo] * rho2.v[l.hi]).sqrt();
        }
        w
    });
    for &c in g.omega_cells() {
        if !(rho2.v[c] > 0.0) {
            return contract("ρ² must be positive on Ω");
        }
    }
    let (phi, _) = solve_phi_weighted(g, &a.c, &w, 1e-13)?;
    Ok(ScalarField { grid: g.clone(), loc: Loc::Cell, v: phi })
}

/// B on Ω-interior edges with `curl B = V` on L_Ω and `div B = 0` at Ω-interior nodes.
///
/// Solved as the least-squares problem `min ‖curl B − V‖² + ‖div B‖²`, whose
/// normal operator is the vector Laplacian with vanishing tangential trace.
pub fn recover_b_from(v: &[Vec<f64>; 3], g: &Grid, tol: f64) -> Result<(VectorField, CgOutcome)> {
    let layout = FaceLayout::with_kind(g, VKind::Edge);
    let mask: Vec<f64> = (0..layout.total)
        .map(|i| {
            let (a, e) = layout.locate(i);
            if g.edge_in(a)[e] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let node_in = g.node_in();
    let vin: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
        v[a].iter().zip(g.link_in(a)).map(|(x, &k)| if k { *x } else { 0.0 }).collect()
    });
    let apply = |x: &[f64], y: &mut [f64]| {
        let b = layout.split(x);
        let cb = curl_e(g, &b);
        let ccb = curl_f(g, &cb);
        let mut db = div_e(g, &b);
        for (d, &k) in db.iter_mut().zip(node_in) {
            if !k {
                *d = 0.0;
            }
        }
        let gd = grad_n(g, &db);
        for a in 0..3 {
            for e in 0..layout.len[a] {
                let i = layout.off[a] + e;
                y[i] = mask[i] * (ccb[a][e] - gd[a][e]);
            }
        }
    };
    let cv = curl_f(g, &vin);
    let mut rhs = vec![0.0; layout.total];
    layout.pack(&cv, &mut rhs);
    for (r, m) in rhs.iter_mut().zip(&mask) {
        *r *= m;
    }
    let h = g.h();
    let d = 2.0 * (1.0 / (h[0] * h[0]) + 1.0 / (h[1] * h[1]) + 1.0 / (h[2] * h[2]));
    let inv: Vec<f64> = mask.iter().map(|m| m / d).collect();
    let mut x = vec![0.0; layout.total];
    let out = pcg(apply, &rhs, &mut x, &inv, tol, 40000, None);
    if !out.converged {
        return Err(Error::Solver(format!("B recovery stalled at {:e}", out.rel_residual)));
    }
    Ok((VectorField { grid: g.clone(), kind: VKind::Edge, c: layout.split(&x) }, out))
}

/// Recover B from `ρ²(A − ∇φ)`; rejects inputs that are not divergence-free.
pub fn recover_b(a: &VectorField, phi: &ScalarField, rho2: &ScalarField) -> Result<VectorField> {
    let g = &a.grid;
    let gp = grad_c(g, &phi.v);
    let v: [Vec<f64>; 3] = [0, 1, 2].map(|ax| {
        let mut out = vec![0.0; g.len(Loc::Face(ax))];
        for l in g.links(ax) {
            let w = (rho2.v[l.lo] * rho2.v[l.hi]).sqrt();
            out[l.face] = w * (a.c[ax][l.face] - gp[ax][l.face]);
        }
        out
    });
    let dv = div_f(g, &v);
    let scale = v.iter().flat_map(|x| x.iter()).fold(0.0f64, |m, x| m.max(x.abs())) / g.hmin();
    let worst = g.omega_cells().iter().fold(0.0f64, |m, &c| m.max(dv[c].abs()));
    if worst > 1e-6 * scale.max(1e-300) {
        return contract(format!("input is not divergence-free: {worst:e}"));
    }
    Ok(recover_b_from(&v, g, 1e-13)?.0)
}

/// Subtract ∇χ, χ = 0 on the outer cell layer, so the face field is
/// divergence-free on every other cell.
pub fn coulomb_project(g: &Grid, w: &[Vec<f64>; 3], tol: f64) -> Result<[Vec<f64>; 3]> {
    let chi = coulomb_potential(g, w, tol)?;
    let gchi = grad_c(g, &chi);
    Ok([0, 1, 2].map(|a| w[a].iter().zip(&gchi[a]).map(|(x, y)| x - y).collect()))
}

/// χ with `div(W − ∇χ) = 0` off the outer cell layer and χ = 0 on it.
pub fn coulomb_potential(g: &Grid, w: &[Vec<f64>; 3], tol: f64) -> Result<Vec<f64>> {
    let layer = g.boundary_layer();
    let nc = g.len(Loc::Cell);
    let free: Vec<f64> = layer.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        let gx = grad_c(g, x);
        let d = div_f(g, &gx);
        for c in 0..nc {
            y[c] = -free[c] * d[c];
        }
    };
    let dw = div_f(g, w);
    let b: Vec<f64> = (0..nc).map(|c| -free[c] * dw[c]).collect();
    let h = g.h();
    let d = 2.0 * (1.0 / (h[0] * h[0]) + 1.0 / (h[1] * h[1]) + 1.0 / (h[2] * h[2]));
    let inv: Vec<f64> = free.iter().map(|f| f / d).collect();
    let mut chi = vec![0.0; nc];
    let out = pcg(apply, &b, &mut chi, &inv, tol, 20000, None);
    if !out.converged {
        return Err(Error::Solver(format!("Coulomb projection stalled at {:e}", out.rel_residual)));
    }
    Ok(chi)
}

#[derive(Clone, Debug)]
pub struct MeissnerState {
    pub rho: ScalarField,
    /// Coulomb-gauge minimizer A⁰.
    pub a0: VectorField,
    /// Zero-mean weighted potential of A⁰, zero outside Ω.
    pub phi0: ScalarField,
    /// `A⁰ − ∇φ⁰`: the gauge in which the Meissner configuration has u ≡ 1.
    pub a0_reduced: VectorField,
    pub b0: VectorField,
    pub h0: VectorField,
    pub j_value: f64,
    pub weights: [Vec<f64>; 3],
    pub applied: AppliedField,
    pub cg_iterations: usize,
}

/// `J(A)` with its optimal potential.
pub fn j_functional(rho: &ScalarField, a: &VectorField, h0ex: &VectorField) -> Result<f64> {
    let g = &a.grid;
    let w = link_weights(rho);
    let (phi, _) = solve_phi_weighted(g, &a.c, &w, 1e-13)?;
    Ok(j_with_phi(g, &w, &a.c, &phi, &h0ex.c))
}

fn j_with_phi(g: &Grid, w: &[Vec<f64>; 3], a: &[Vec<f64>; 3], phi: &[f64], h0ex: &[Vec<f64>; 3]) -> f64 {
    let h = g.h();
    let mut s1 = 0.0;
    for ax in 0..3 {
        for l in g.links(ax) {
            let r = a[ax][l.face] - (phi[l.hi] - phi[l.lo]) / h[ax];
            s1 += w[ax][l.face] * r * r;
        }
    }
    let ca = curl_f(g, a);
    let mut s2 = 0.0;
    for ax in 0..3 {
        for (e, &k) in g.edge_interior(ax).iter().enumerate() {
            if k {
                let d = ca[ax][e] - h0ex[ax][e];
                s2 += d * d;
            }
        }
    }
    0.5 * g.vol() * (s1 + s2)
}

/// Minimize J jointly over the admissible perturbation W and the potential ψ.
pub fn minimize_j(rho: &ScalarField, applied: &AppliedField) -> Result<MeissnerState> {
    let g = rho.grid.clone();
    let a0ex = &applied.a0ex;
    // gauge precondition on A_{0,ex}
    let dv = div_f(&g, &a0ex.c);
    let layer = g.boundary_layer();
    let amax = a0ex.max_abs().max(1e-300);
    let worst = (0..dv.len()).filter(|&c| !layer[c]).fold(0.0f64, |m, c| m.max(dv[c].abs()));
    if worst > 1e-8 * amax / g.hmin() {
        return contract(format!("A_0,ex is not in Coulomb gauge: max |div| = {worst:e}"));
    }
    for &c in g.omega_cells() {
        if !(rho.v[c] > 0.0) {
            return contract("ρ must be positive on Ω");
        }
    }
    let w = link_weights(rho);
    let layout = FaceLayout::new(&g);
    let nc = g.len(Loc::Cell);
    let total = layout.total + nc;
    let h = g.h();
    let adm: Vec<f64> = (0..layout.total)
        .map(|i| {
            let (a, f) = layout.locate(i);
            if g.admissible(a)[f] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    // gradient of the quadratic without the A_{0,ex} source
    let hess = |x: &[f64], y: &mut [f64], src: Option<&[Vec<f64>; 3]>| {
        let wv = layout.split(&x[..layout.total]);
        let psi = &x[layout.total..];
        let cc = curl_e(&g, &curl_f(&g, &wv));
        for a in 0..3 {
            for f in 0..layout.len[a] {
                y[layout.off[a] + f] = cc[a][f];
            }
        }
        y[layout.total..].iter_mut().for_each(|v| *v = 0.0);
        for a in 0..3 {
            let ih = 1.0 / h[a];
            for l in g.links(a) {
                let mut r = wv[a][l.face] - (psi[l.hi] - psi[l.lo]) * ih;
                if let Some(s) = src {
                    r += s[a][l.face];
                }
                let t = w[a][l.face] * r;
                y[layout.off[a] + l.face] += t;
                y[layout.total + l.hi] -= t * ih;
                y[layout.total + l.lo] += t * ih;
            }
        }
        for i in 0..layout.total {
            y[i] *= adm[i];
        }
    };
    let zero = vec![0.0; total];
    let mut b = vec![0.0; total];
    hess(&zero, &mut b, Some(&a0ex.c));
    b.iter_mut().for_each(|v| *v = -*v);
    let mut inv = vec![0.0; total];
    let dcurl = 2.0 * (1.0 / (h[0] * h[0]) + 1.0 / (h[1] * h[1]) + 1.0 / (h[2] * h[2]));
    for i in 0..layout.total {
        let (a, f) = layout.locate(i);
        let dc = dcurl - 2.0 / (h[a] * h[a]);
        inv[i] = adm[i] / (dc + w[a][f]);
    }
    let mut dpsi = vec![0.0; nc];
    for a in 0..3 {
        for l in g.links(a) {
            let t = w[a][l.face] / (h[a] * h[a]);
            dpsi[l.hi] += t;
            dpsi[l.lo] += t;
        }
    }
    for c in 0..nc {
        if dpsi[c] > 0.0 {
            inv[layout.total + c] = 1.0 / dpsi[c];
        }
    }
    let mut x = vec![0.0; total];
    let out = pcg(|x, y| hess(x, y, None), &b, &mut x, &inv, 1e-13, 50000, None);
    if out.rel_residual > 1e-9 {
        return Err(Error::Solver(format!("Meissner CG stalled at {:e}", out.rel_residual)));
    }
    let wsol = layout.split(&x[..layout.total]);
    let wc = coulomb_project(&g, &wsol, 1e-14)?;
    let a0c: [Vec<f64>; 3] = [0, 1, 2].map(|a| a0ex.c[a].iter().zip(&wc[a]).map(|(p, q)| p + q).collect());
    state_from_a0(rho, applied, a0c, &w, out.iterations)
}

fn state_from_a0(
    rho: &ScalarField,
    applied: &AppliedField,
    a0c: [Vec<f64>; 3],
    w: &[Vec<f64>; 3],
    iters: usize,
) -> Result<MeissnerState> {
    let g = rho.grid.clone();
    let (phi, _) = solve_phi_weighted(&g, &a0c, w, 1e-14)?;
    let gp = grad_c(&g, &phi);
    let red: [Vec<f64>; 3] = [0, 1, 2].map(|a| a0c[a].iter().zip(&gp[a]).map(|(p, q)| p - q).collect());
    let v: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
        let mut out = vec![0.0; g.len(Loc::Face(a))];
        for l in g.links(a) {
            out[l.face] = w[a][l.face] * red[a][l.face];
        }
        out
    });
    let (b0, _) = recover_b_from(&v, &g, 1e-14)?;
    let j_value = j_with_phi(&g, w, &a0c, &phi, &applied.h0ex.c);
    let h0 = VectorField { grid: g.clone(), kind: VKind::Edge, c: curl_f(&g, &a0c) };
    Ok(MeissnerState {
        rho: rho.clone(),
        a0: VectorField { grid: g.clone(), kind: VKind::Face, c: a0c },
        phi0: ScalarField { grid: g.clone(), loc: Loc::Cell, v: phi },
        a0_reduced: VectorField { grid: g.clone(), kind: VKind::Face, c: red },
        b0,
        h0,
        j_value,
        weights: w.clone(),
        applied: applied.clone(),
        cg_iterations: iters,
    })
}

/// Fields of the Helmholtz–Hodge splitting `V = curl B + ∇φ` on L_Ω.
#[derive(Clone, Debug)]
pub struct HodgeParts {
    pub curl_part: VectorField,
    pub grad_part: VectorField,
    pub b: VectorField,
    pub phi: ScalarField,
}

pub fn hodge_decompose(v: &VectorField) -> Result<HodgeParts> {
    if v.kind != VKind::Face {
        return contract("Hodge decomposition acts on face fields");
    }
    let g = &v.grid;
    let ones: [Vec<f64>; 3] = [0, 1, 2].map(|a| g.link_in(a).iter().map(|&k| if k { 1.0 } else { 0.0 }).collect());
    let (phi, _) = solve_phi_weighted(g, &v.c, &ones, 1e-14)?;
    let gp = grad_c(g, &phi);
    let mut grad_part = VectorField::zeros(g, VKind::Face);
    let mut rest = VectorField::zeros(g, VKind::Face);
    for a in 0..3 {
        for l in g.links(a) {
            grad_part.c[a][l.face] = gp[a][l.face];
            rest.c[a][l.face] = v.c[a][l.face] - gp[a][l.face];
        }
    }
    let (b, _) = recover_b_from(&rest.c, g, 1e-14)?;
    let curl_part = VectorField { grid: g.clone(), kind: VKind::Face, c: curl_e(g, &b.c) };
    Ok(HodgeParts { curl_part, grad_part, b, phi: ScalarField { grid: g.clone(), loc: Loc::Cell, v: phi } })
}

/// `⟨f, g⟩` over the links of L_Ω.
pub fn dot_links(g: &Grid, f: &[Vec<f64>; 3], h: &[Vec<f64>; 3]) -> f64 {
    let mut s = 0.0;
    for a in 0..3 {
        for l in g.links(a) {
            s += f[a][l.face] * h[a][l.face];
        }
    }
    s * g.vol()
}

/// Random face field supported on links whose surrounding edges are all Ω-interior,
/// so that its curl is a divergence-free test field with zero normal trace.
pub fn interior_test_potential(g: &Grid, rng: &mut ChaCha8Rng) -> [Vec<f64>; 3] {
    let n = g.n();
    [0, 1, 2].map(|a| {
        let fd = g.dims(Loc::Face(a));
        let mut out = vec![0.0; g.len(Loc::Face(a))];
        for l in g.links(a) {
            let p = ijk3(fd, l.face);
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            // the four edges around the face
            let ok = edge_in_at(g, n, c, p, None) && edge_in_at(g, n, c, p, Some(b))
                && edge_in_at(g, n, b, p, None) && edge_in_at(g, n, b, p, Some(c));
            if ok {
                out[l.face] = rng.gen_range(-1.0..1.0);
            }
        }
        out
    })
}

fn edge_in_at(g: &Grid, n: [usize; 3], axis: usize, p: [usize; 3], bump: Option<usize>) -> bool {
    let mut q = p;
    if let Some(b) = bump {
        q[b] += 1;
    }
    let ed = crate::mesh::edge_dims(n, axis);
    if (0..3).any(|i| q[i] >= ed[i]) {
        return false;
    }
    g.edge_in(axis)[crate::mesh::idx3(ed, q[0], q[1], q[2])]
}

/// Normalized residual of the weak equation
/// `⟨curl(curl B⁰/ρ²) + B⁰ − H_{0,ex}, V⟩_Ω = 0` for `V = curl W`.
pub fn variational_residual(state: &MeissnerState, wtest: &[Vec<f64>; 3]) -> f64 {
    let g = &state.rho.grid;
    let cb = curl_e(g, &state.b0.c);
    let q: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
        let mut out = vec![0.0; g.len(Loc::Face(a))];
        for l in g.links(a) {
            out[l.face] = cb[a][l.face] / state.weights[a][l.face];
        }
        out
    });
    let cq = curl_f(g, &q);
    let v = curl_f(g, wtest);
    let mut s = 0.0;
    let mut vv = 0.0;
    let mut hh = 0.0;
    for a in 0..3 {
        for (e, &k) in g.edge_in(a).iter().enumerate() {
            if k {
                s += (cq[a][e] + state.b0.c[a][e] - state.applied.h0ex.c[a][e]) * v[a][e];
                vv += v[a][e] * v[a][e];
                hh += state.applied.h0ex.c[a][e].powi(2);
            }
        }
    }
    let vol = g.vol();
    (s * vol).abs() / ((vv * vol).sqrt() * (hh * vol).sqrt()).max(1e-300)
}

/// Normalized `⟨curl B⁰, ∇ζ⟩_Ω`.
pub fn orthogonality(state: &MeissnerState, zeta: &[f64]) -> f64 {
    let g = &state.rho.grid;
    let cb = curl_e(g, &state.b0.c);
    let gz = grad_c(g, zeta);
    let s = dot_links(g, &cb, &gz);
    let n1 = dot_links(g, &cb, &cb).sqrt();
    let n2 = dot_links(g, &gz, &gz).sqrt();
    s.abs() / (n1 * n2).max(1e-300)
}

/// Discrete regularity diagnostics of B⁰.
#[derive(Clone, Debug)]
pub struct RegularityReport {
    /// (q, ‖B⁰‖_{W^{1,q}(Ω)}) for q = 2, 4, 6.
    pub w1q: Vec<(f64, f64)>,
    /// (γ, max Hölder quotient) for γ = 0.5, 0.9.
    pub holder: Vec<(f64, f64)>,
    pub h0ex_l3: f64,
    /// `‖B⁰‖_{W^{1,6}} / ‖H_{0,ex}‖_{L³(Ω)}`.
    pub ratio: f64,
    /// Max |B⁰| on interior edges outside the Ω-interior set.
    pub tangential_trace: f64,
}

pub fn regularity_report(state: &MeissnerState) -> RegularityReport {
    let g = &state.rho.grid;
    let b = &state.b0;
    let h = g.h();
    let vol = g.vol();
    let mut w1q = Vec::new();
    for q in [2.0f64, 4.0, 6.0] {
        let mut s = 0.0;
        for a in 0..3 {
            let d = g.dims(Loc::Edge(a));
            let ein = g.edge_in(a);
            for (e, &k) in ein.iter().enumerate() {
                if !k {
                    continue;
                }
                s += b.c[a][e].abs().powf(q);
                let p = ijk3(d, e);
                for ax in 0..3 {
                    if p[ax] + 1 < d[ax] {
                        let mut r = p;
                        r[ax] += 1;
                        let e2 = crate::mesh::idx3(d, r[0], r[1], r[2]);
                        if ein[e2] {
                            s += ((b.c[a][e2] - b.c[a][e]) / h[ax]).abs().powf(q);
                        }
                    }
                }
            }
        }
        w1q.push((q, (s * vol).powf(1.0 / q)));
    }
    let mut holder = Vec::new();
    for gamma in [0.5f64, 0.9] {
        let mut best = 0.0f64;
        for a in 0..3 {
            let d = g.dims(Loc::Edge(a));
            let ein = g.edge_in(a);
            for (e, &k) in ein.iter().enumerate() {
                if !k {
                    continue;
                }
                let p = ijk3(d, e);
                for ax in 0..3 {
                    let mut step = 1;
                    while p[ax] + step < d[ax] {
                        let mut r = p;
                        r[ax] += step;
                        let e2 = crate::mesh::idx3(d, r[0], r[1], r[2]);
                        if ein[e2] {
                            let dist = step as f64 * h[ax];
                            best = best.max((b.c[a][e2] - b.c[a][e]).abs() / dist.powf(gamma));
                        }
                        step *= 2;
                    }
                }
            }
        }
        holder.push((gamma, best));
    }
    let mut l3 = 0.0;
    let mut trace = 0.0f64;
    for a in 0..3 {
        for (e, &k) in g.edge_in(a).iter().enumerate() {
            if k {
                l3 += state.applied.h0ex.c[a][e].abs().powi(3);
            } else if g.edge_interior(a)[e] {
                trace = trace.max(b.c[a][e].abs());
            }
        }
    }
    let h0ex_l3 = (l3 * vol).cbrt();
    let ratio = if h0ex_l3 > 0.0 { w1q[2].1 / h0ex_l3 } else { 0.0 };
    RegularityReport { w1q, holder, h0ex_l3, ratio, tangential_trace: trace }
}

/// Max-abs residual of `curl B⁰ = ρ²(A⁰ − ∇φ⁰)` relative to its scale.
pub fn b0_curl_residual(state: &MeissnerState) -> f64 {
    let g = &state.rho.grid;
    let cb = curl_e(g, &state.b0.c);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for a in 0..3 {
        for l in g.links(a) {
            let t = state.weights[a][l.face] * state.a0_reduced.c[a][l.face];
            worst = worst.max((cb[a][l.face] - t).abs());
            scale = scale.max(t.abs());
        }
    }
    worst / scale.max(1e-300)
}

/// Max-abs `div B⁰` at Ω-interior nodes relative to `max|B⁰|/h`.
pub fn b0_div_residual(state: &MeissnerState) -> f64 {
    let g = &state.rho.grid;
    let d = div_e(g, &state.b0.c);
    let worst = d.iter().zip(g.node_in()).filter(|(_, &k)| k).fold(0.0f64, |m, (x, _)| m.max(x.abs()));
    worst * g.hmin() / state.b0.max_abs().max(1e-300)
}

/// Seeded random admissible perturbation direction.
pub fn random_admissible(g: &Grid, seed: u64) -> [Vec<f64>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [0, 1, 2].map(|a| {
        g.admissible(a).iter().map(|&k| if k { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect()
    })
}

pub fn norm_links(g: &Grid, f: &[Vec<f64>; 3]) -> f64 {
    dot_links(g, f, f).sqrt()
}
