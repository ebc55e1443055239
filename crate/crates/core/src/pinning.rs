//! Pinning profiles a_ε and the pinned density ρ_ε.
//!
//! ρ_ε minimizes
//! `E(ρ) = ½ Σ_{L_Ω} V (ρ'−ρ)²/h² + 1/(4ε²) Σ_Ω V (a−ρ²)²`,
//! the natural-boundary discretization of `−Δρ = ρ(a−ρ²)/ε²` with Neumann data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::linalg::pcg;
use crate::mesh::{norm, sub, Grid, Loc, ScalarField};

#[derive(Clone, Debug, PartialEq)]
pub enum PinningKind {
    Constant,
    /// Spherical inclusions where a takes the floor value.
    Inclusions { centers: Vec<[f64; 3]>, radii: Vec<f64> },
    /// a = 1 − (1−b)·sin²(πx/p)sin²(πy/p)sin²(πz/p).
    Periodic { period: f64 },
    /// Cubes of side `cell` with value b or 1 drawn from `seed`.
    RandomCheckerboard { cell: f64, seed: u64 },
    /// a = b for x below `x0`, 1 above.
    SlabStep { x0: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PinningProfile {
    pub kind: PinningKind,
    /// Floor b of a.
    pub b: f64,
    /// Width of the band near ∂Ω where a is forced to 1.
    pub boundary_margin: f64,
}

impl PinningProfile {
    pub fn constant(b: f64) -> PinningProfile {
        PinningProfile { kind: PinningKind::Constant, b, boundary_margin: 0.0 }
    }
}

/// Sample a_ε at cell centers.
///
/// Constant profiles take the value b; the others take values in [b, 1].
pub fn make_pinning(profile: &PinningProfile, grid: &Grid) -> Result<ScalarField> {
    let b = profile.b;
    let constant_ok = matches!(profile.kind, PinningKind::Constant) && b == 1.0;
    if !(b > 0.0 && b < 1.0) && !constant_ok {
        return Err(Error::Config(format!("pinning floor b = {b} must lie in (0,1)")));
    }
    let omega = grid.omega().clone();
    if let PinningKind::Inclusions { centers, radii } = &profile.kind {
        if centers.len() != radii.len() {
            return Err(Error::Config("inclusion centers and radii differ in length".into()));
        }
        for (c, &r) in centers.iter().zip(radii) {
            match omega.sdf(*c) {
                Some(d) if d + r <= 0.0 => {}
                Some(_) => return Err(Error::Config(format!("inclusion at {c:?} escapes Ω"))),
                None => {}
            }
        }
    }
    let checker: Option<(f64, u64)> = match profile.kind {
        PinningKind::RandomCheckerboard { cell, seed } => Some((cell, seed)),
        _ => None,
    };
    let gmin = grid.spec().box_min;
    let cell_value = |p: [f64; 3]| -> f64 {
        match &profile.kind {
            PinningKind::Constant => b,
            PinningKind::Inclusions { centers, radii } => {
                if centers.iter().zip(radii).any(|(c, &r)| norm(sub(p, *c)) < r) {
                    b
                } else {
                    1.0
                }
            }
            PinningKind::Periodic { period } => {
                let s = |x: f64| (std::f64::consts::PI * x / period).sin().powi(2);
                1.0 - (1.0 - b) * s(p[0]) * s(p[1]) * s(p[2])
            }
            PinningKind::RandomCheckerboard { .. } => {
                let (cell, seed) = checker.unwrap();
                let key = |a: usize| ((p[a] - gmin[a]) / cell).floor() as i64;
                let mix = (key(0) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    ^ (key(1) as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
                    ^ (key(2) as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ mix);
                if rng.gen_bool(0.5) {
                    b
                } else {
                    1.0
                }
            }
            PinningKind::SlabStep { x0 } => {
                if p[0] < *x0 {
                    b
                } else {
                    1.0
                }
            }
        }
    };
    let margin = profile.boundary_margin;
    let boundary = if margin > 0.0 { near_boundary_cells(grid, margin) } else { vec![] };
    let mut a = ScalarField::zeros(grid, Loc::Cell);
    for c in 0..a.v.len() {
        let p = grid.pos(Loc::Cell, c);
        a.v[c] = cell_value(p).clamp(b.min(1.0), 1.0);
    }
    for &c in &boundary {
        a.v[c] = 1.0;
    }
    Ok(a)
}

/// Cells of Ω within `margin` of ∂Ω.
fn near_boundary_cells(grid: &Grid, margin: f64) -> Vec<usize> {
    let om = grid.omega();
    let bnd: Vec<[f64; 3]> = grid.omega_boundary_cells().iter().map(|&c| grid.pos(Loc::Cell, c)).collect();
    grid.omega_cells()
        .iter()
        .cloned()
        .filter(|&c| {
            let p = grid.pos(Loc::Cell, c);
            match om.sdf(p) {
                Some(d) => -d <= margin,
                None => bnd.iter().any(|q| norm(sub(p, *q)) <= margin),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DensitySolution {
    pub rho: ScalarField,
    pub epsilon: f64,
    /// Max-abs residual of the discrete Euler-Lagrange equation.
    pub residual_norm: f64,
    pub energy: f64,
    pub iterations: usize,
    /// Energies after each accepted Newton step.
    pub energy_history: Vec<f64>,
}

/// Discrete E_ε(ρ) over Ω.
pub fn density_energy(rho: &[f64], a: &[f64], eps: f64, grid: &Grid) -> f64 {
    let h = grid.h();
    let mut kin = 0.0;
    for ax in 0..3 {
        let ih2 = 1.0 / (h[ax] * h[ax]);
        for l in grid.links(ax) {
            let d = rho[l.hi] - rho[l.lo];
            kin += d * d * ih2;
        }
    }
    let mut pot = 0.0;
    for &c in grid.omega_cells() {
        let t = a[c] - rho[c] * rho[c];
        pot += t * t;
    }
    grid.vol() * (0.5 * kin + 0.25 * pot / (eps * eps))
}

/// `Σ_n (ρ_c − ρ_n)/h² − ρ_c(a_c − ρ_c²)/ε²` on Ω cells, zero elsewhere.
pub fn density_residual(rho: &[f64], a: &[f64], eps: f64, grid: &Grid) -> Vec<f64> {
    let h = grid.h();
    let mut r = vec![0.0; rho.len()];
    for ax in 0..3 {
        let ih2 = 1.0 / (h[ax] * h[ax]);
        for l in grid.links(ax) {
            let d = (rho[l.lo] - rho[l.hi]) * ih2;
            r[l.lo] += d;
            r[l.hi] -= d;
        }
    }
    let ie2 = 1.0 / (eps * eps);
    for &c in grid.omega_cells() {
        r[c] -= rho[c] * (a[c] - rho[c] * rho[c]) * ie2;
    }
    r
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton for ρ_ε with an energy-decrease line search.
pub fn solve_rho(a: &ScalarField, epsilon: f64) -> Result<DensitySolution> {
    let grid = &a.grid;
    if a.loc != Loc::Cell {
        return contract("pinning term must be cell-centred");
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon = {epsilon} must be positive")));
    }
    if epsilon < grid.hmax() / 4.0 {
        return Err(Error::Config(format!(
            "epsilon = {epsilon} is below the resolution guard h/4 = {}",
            grid.hmax() / 4.0
        )));
    }
    let cells = grid.omega_cells();
    let amin = cells.iter().map(|&c| a.v[c]).fold(f64::INFINITY, f64::min);
    let amax = cells.iter().map(|&c| a.v[c]).fold(0.0, f64::max);
    if !(amin > 0.0) || amax > 1.0 {
        return contract("pinning term must take values in (0,1] on Ω");
    }
    let h = grid.h();
    let ie2 = 1.0 / (epsilon * epsilon);

    // √a smoothed by one Jacobi sweep
    let mut rho = vec![0.0; a.v.len()];
    for &c in cells {
        rho[c] = a.v[c].sqrt();
    }
    {
        let mut acc = rho.clone();
        let mut deg = vec![1.0; rho.len()];
        for ax in 0..3 {
            for l in grid.links(ax) {
                acc[l.lo] += rho[l.hi];
                acc[l.hi] += rho[l.lo];
                deg[l.lo] += 1.0;
                deg[l.hi] += 1.0;
            }
        }
        for &c in cells {
            rho[c] = acc[c] / deg[c];
        }
    }

    let scale = ie2.max(1.0);
    let tol = 1e-8 * ie2;
    let mut energy = density_energy(&rho, &a.v, epsilon, grid);
    let mut history = vec![energy];
    let mut res = density_residual(&rho, &a.v, epsilon, grid);
    let mut rnorm = max_abs(&res);
    let mut it = 0;
    let ncell = rho.len();
    let mut diag = vec![0.0; ncell];
    let mut lap_diag = vec![0.0; ncell];
    for ax in 0..3 {
        let ih2 = 1.0 / (h[ax] * h[ax]);
        for l in grid.links(ax) {
            lap_diag[l.lo] += ih2;
            lap_diag[l.hi] += ih2;
        }
    }
    let mut stalled = 0;
    while it < 100 {
        if rnorm <= 1e-14 * scale {
            break;
        }
        it += 1;
        for &c in cells {
            let r2 = rho[c] * rho[c];
            diag[c] = (3.0 * r2 - a.v[c]).max(r2) * ie2;
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            y.iter_mut().for_each(|v| *v = 0.0);
            for ax in 0..3 {
                let ih2 = 1.0 / (h[ax] * h[ax]);
                for l in grid.links(ax) {
                    let d = (x[l.lo] - x[l.hi]) * ih2;
                    y[l.lo] += d;
                    y[l.hi] -= d;
                }
            }
            for &c in cells {
                y[c] += diag[c] * x[c];
            }
        };
        let inv: Vec<f64> = (0..ncell)
            .map(|c| {
                let d = lap_diag[c] + diag[c];
                if d > 0.0 && grid.cell_in()[c] {
                    1.0 / d
                } else {
                    0.0
                }
            })
            .collect();
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let mut step = vec![0.0; ncell];
        pcg(apply, &rhs, &mut step, &inv, 1e-14, 4000, None);

        let mut t = 1.0;
        let slope: f64 = -grid.vol() * res.iter().zip(&step).map(|(r, s)| r * s).sum::<f64>();
        let mut accepted = false;
        let mut trial = rho.clone();
        for _ in 0..40 {
            for &c in cells {
                trial[c] = rho[c] + t * step[c];
            }
            let e_new = density_energy(&trial, &a.v, epsilon, grid);
            let armijo = e_new <= energy - 1e-4 * t * slope.abs();
            let roundoff = e_new <= energy + 1e-15 * energy.abs();
            if armijo || (roundoff && max_abs(&density_residual(&trial, &a.v, epsilon, grid)) < rnorm) {
                energy = e_new.min(energy);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            stalled += 1;
            if rnorm <= tol || stalled > 2 {
                break;
            }
            continue;
        }
        rho.copy_from_slice(&trial);
        history.push(energy);
        let new_res = density_residual(&rho, &a.v, epsilon, grid);
        let new_norm = max_abs(&new_res);
        res = new_res;
        if new_norm >= rnorm && rnorm <= tol {
            rnorm = new_norm.min(rnorm);
            break;
        }
        rnorm = new_norm;
    }
    if !(rnorm <= tol) {
        return Err(Error::Solver(format!("density Newton stalled at residual {rnorm:e} after {it} steps")));
    }
    for &c in cells {
        let lo = amin.sqrt();
        if rho[c] < lo - 1e-8 || rho[c] > 1.0 + 1e-8 {
            return Err(Error::Invariant(format!("ρ = {} leaves [√b, 1] at cell {c}", rho[c])));
        }
    }
    Ok(DensitySolution {
        rho: ScalarField { grid: grid.clone(), loc: Loc::Cell, v: rho },
        epsilon,
        residual_norm: rnorm,
        energy,
        iterations: it,
        energy_history: history,
    })
}

/// Deviation of ρ from √a on Ω ∩ B(center, R).
#[derive(Clone, Debug)]
pub struct LockingReport {
    pub sup_deviation: f64,
    pub cells: usize,
    pub a_value: f64,
}

pub fn check_exponential_locking(
    sol: &DensitySolution,
    a: &ScalarField,
    center: [f64; 3],
    radius: f64,
) -> Result<LockingReport> {
    let grid = &a.grid;
    let mut val: Option<f64> = None;
    let mut sup = 0.0f64;
    let mut count = 0;
    for &c in grid.omega_cells() {
        let p = grid.pos(Loc::Cell, c);
        if norm(sub(p, center)) > radius {
            continue;
        }
        count += 1;
        match val {
            None => val = Some(a.v[c]),
            Some(v) if v != a.v[c] => {
                return contract("pinning term is not constant on the probed ball");
            }
            _ => {}
        }
        sup = sup.max((a.v[c].sqrt() - sol.rho.v[c]).abs());
    }
    if count < 2 {
        return contract("probe ball contains fewer than two cells of Ω");
    }
    Ok(LockingReport { sup_deviation: sup, cells: count, a_value: val.unwrap() })
}

/// Least-squares line `y = α + βx` with its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (alpha, beta, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{GridSpec, Omega};

    fn ball_grid(n: usize) -> Grid {
        Grid::new(GridSpec::ball(1.0, 1.5, n)).unwrap()
    }

    #[test]
    fn constant_profiles() {
        let g = ball_grid(12);
        let a = make_pinning(&PinningProfile::constant(1.0), &g).unwrap();
        let s = solve_rho(&a, 0.2).unwrap();
        assert!(s.rho.v.iter().zip(g.cell_in()).all(|(r, &i)| !i || *r == 1.0));
        assert_eq!(s.energy, 0.0);
        let a = make_pinning(&PinningProfile::constant(0.25), &g).unwrap();
        let s = solve_rho(&a, 0.2).unwrap();
        assert!(g.omega_cells().iter().all(|&c| s.rho.v[c] == 0.5));
    }

    #[test]
    fn inclusion_profile() {
        let g = ball_grid(16);
        let p = PinningProfile {
            kind: PinningKind::Inclusions { centers: vec![[0.0; 3]], radii: vec![0.4] },
            b: 0.25,
            boundary_margin: 0.0,
        };
        let a = make_pinning(&p, &g).unwrap();
        let c0 = g.omega_cells().iter().cloned().min_by(|&x, &y| {
            norm(g.pos(Loc::Cell, x)).partial_cmp(&norm(g.pos(Loc::Cell, y))).unwrap()
        });
        assert_eq!(a.v[c0.unwrap()], 0.25);
        let min = g.omega_cells().iter().map(|&c| a.v[c]).fold(1.0, f64::min);
        assert_eq!(min, 0.25);
        let esc = PinningProfile {
            kind: PinningKind::Inclusions { centers: vec![[0.9, 0.0, 0.0]], radii: vec![0.3] },
            ..p
        };
        assert!(make_pinning(&esc, &g).is_err());
    }

    #[test]
    fn checkerboard_is_deterministic() {
        let g = ball_grid(12);
        let p = PinningProfile {
            kind: PinningKind::RandomCheckerboard { cell: 0.3, seed: 7 },
            b: 0.4,
            boundary_margin: 0.2,
        };
        let a1 = make_pinning(&p, &g).unwrap();
        let a2 = make_pinning(&p, &g).unwrap();
        assert!(a1.v.iter().zip(&a2.v).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_bad_floor() {
        let g = ball_grid(10);
        assert!(make_pinning(&PinningProfile::constant(1.5), &g).is_err());
    }

    #[test]
    fn newton_decreases_energy() {
        let g = Grid::new(GridSpec {
            box_min: [-1.2; 3],
            box_max: [1.2; 3],
            n: [14; 3],
            omega: Omega::Ball { center: [0.0; 3], radius: 0.9 },
        })
        .unwrap();
        let p = PinningProfile {
            kind: PinningKind::Inclusions { centers: vec![[0.1, 0.0, 0.0]], radii: vec![0.45] },
            b: 0.3,
            boundary_margin: 0.0,
        };
        let a = make_pinning(&p, &g).unwrap();
        let s = solve_rho(&a, 0.15).unwrap();
        for w in s.energy_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-14));
        }
        for &c in g.omega_cells() {
            let r2 = s.rho.v[c].powi(2);
            assert!((0.3 - 1e-12..=1.0 + 1e-12).contains(&r2));
        }
    }

    #[test]
    fn resolution_guard() {
        let g = ball_grid(10);
        let a = make_pinning(&PinningProfile::constant(0.5), &g).unwrap();
        assert!(solve_rho(&a, 0.01).is_err());
    }
}
