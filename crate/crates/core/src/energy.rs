//! Energies, vorticity and the energy splitting around the Meissner state.

use num_complex::Complex64;

use crate::error::{contract, Result};
use crate::mesh::{
    curl_e, curl_f, link_current, link_kinetic, same_grid, same_vec, ComplexField, Grid, Loc, ScalarField, VKind,
    VectorField,
};
use crate::meissner::MeissnerState;

/// A pair `(u, A)` with the applied-field intensity.
#[derive(Clone, Debug)]
pub struct Configuration {
    pub u: ComplexField,
    pub a: VectorField,
    pub h_ex: f64,
}

impl Configuration {
    pub fn new(u: ComplexField, a: VectorField, h_ex: f64) -> Result<Configuration> {
        same_grid(&u.grid, &a.grid)?;
        if a.kind != VKind::Face {
            return contract("vector potential must live on faces");
        }
        if !(h_ex >= 0.0) {
            return contract("h_ex must be nonnegative");
        }
        Ok(Configuration { u, a, h_ex })
    }

    pub fn grid(&self) -> &Grid {
        &self.u.grid
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub meissner_term: f64,
    pub free_energy: f64,
    pub exterior_term: f64,
    pub coupling_term: f64,
    pub remainder: f64,
}

impl EnergyBreakdown {
    pub fn rhs(&self) -> f64 {
        self.meissner_term + self.free_energy + self.exterior_term - self.coupling_term + self.remainder
    }
    /// `|total − rhs| / (1 + |total|)`.
    pub fn identity_residual(&self) -> f64 {
        (self.total - self.rhs()).abs() / (1.0 + self.total.abs())
    }
}

fn kinetic_sum(u: &[Complex64], a: &[Vec<f64>; 3], g: &Grid, weight: Option<&[f64]>) -> f64 {
    let h = g.h();
    let mut s = 0.0;
    for ax in 0..3 {
        for l in g.links(ax) {
            let k = link_kinetic(u[l.lo], u[l.hi], h[ax] * a[ax][l.face], h[ax]);
            s += match weight {
                Some(r) => r[l.lo] * r[l.hi] * k,
                None => k,
            };
        }
    }
    s
}

/// Discrete GL functional with applied field `h_ex·hex`.
///
/// `½Σ_{L_Ω} V K + ¼ε⁻² Σ_Ω V (a − |u|²)² + ½Σ_edges V |curl A − h_ex H|²`.
pub fn gl_energy(cfg: &Configuration, a: &ScalarField, eps: f64, hex: &VectorField) -> Result<f64> {
    let g = cfg.grid();
    same_grid(g, &a.grid)?;
    same_grid(g, &hex.grid)?;
    if hex.kind != VKind::Edge || a.loc != Loc::Cell {
        return contract("applied field must be an edge field and a cell field");
    }
    let kin = kinetic_sum(&cfg.u.v, &cfg.a.c, g, None);
    let mut pot = 0.0;
    for &c in g.omega_cells() {
        let t = a.v[c] - cfg.u.v[c].norm_sqr();
        pot += t * t;
    }
    let ca = curl_f(g, &cfg.a.c);
    let mut mag = 0.0;
    for ax in 0..3 {
        for (e, &k) in g.edge_interior(ax).iter().enumerate() {
            if k {
                let d = ca[ax][e] - cfg.h_ex * hex.c[ax][e];
                mag += d * d;
            }
        }
    }
    Ok(g.vol() * (0.5 * kin + 0.25 * pot / (eps * eps) + 0.5 * mag))
}

fn magnetic_split(g: &Grid, a: &[Vec<f64>; 3]) -> (f64, f64) {
    let ca = curl_f(g, a);
    let (mut inner, mut outer) = (0.0, 0.0);
    for ax in 0..3 {
        let ein = g.edge_in(ax);
        for (e, &k) in g.edge_interior(ax).iter().enumerate() {
            if k {
                let t = ca[ax][e] * ca[ax][e];
                if ein[e] {
                    inner += t;
                } else {
                    outer += t;
                }
            }
        }
    }
    (0.5 * g.vol() * inner, 0.5 * g.vol() * outer)
}

/// `F_{ε,ρ}(u,A) = ½Σ V ρρ' K + ¼ε⁻² Σ V ρ⁴ (1 − |u|²)² + ½Σ_{Ω edges} V |curl A|²`.
pub fn free_energy_weighted(u: &ComplexField, a: &VectorField, rho: &ScalarField, eps: f64) -> Result<f64> {
    let g = &u.grid;
    same_grid(g, &a.grid)?;
    same_grid(g, &rho.grid)?;
    let kin = kinetic_sum(&u.v, &a.c, g, Some(&rho.v));
    let mut pot = 0.0;
    for &c in g.omega_cells() {
        let r2 = rho.v[c] * rho.v[c];
        let t = 1.0 - u.v[c].norm_sqr();
        pot += r2 * r2 * t * t;
    }
    let (inner, _) = magnetic_split(g, &a.c);
    Ok(g.vol() * (0.5 * kin + 0.25 * pot / (eps * eps)) + inner)
}

/// Homogeneous `F_ε(u,A)`, the ρ ≡ 1 case.
pub fn free_energy(u: &ComplexField, a: &VectorField, eps: f64) -> Result<f64> {
    let g = &u.grid;
    same_grid(g, &a.grid)?;
    let kin = kinetic_sum(&u.v, &a.c, g, None);
    let mut pot = 0.0;
    for &c in g.omega_cells() {
        let t = 1.0 - u.v[c].norm_sqr();
        pot += t * t;
    }
    let (inner, _) = magnetic_split(g, &a.c);
    Ok(g.vol() * (0.5 * kin + 0.25 * pot / (eps * eps)) + inner)
}

/// Supercurrent `(iu, ∇_A u)` on the links of L_Ω.
pub fn current(u: &ComplexField, a: &VectorField) -> Result<VectorField> {
    let g = &u.grid;
    same_grid(g, &a.grid)?;
    let h = g.h();
    let mut j = VectorField::zeros(g, VKind::Face);
    for ax in 0..3 {
        for l in g.links(ax) {
            j.c[ax][l.face] = link_current(u.v[l.lo], u.v[l.hi], h[ax] * a.c[ax][l.face], h[ax]);
        }
    }
    Ok(j)
}

/// `μ(u,A) = curl((iu, ∇_A u) + A)` on interior edges.
pub fn vorticity(u: &ComplexField, a: &VectorField) -> Result<VectorField> {
    let mut j = current(u, a)?;
    for ax in 0..3 {
        for (x, y) in j.c[ax].iter_mut().zip(&a.c[ax]) {
            *x += y;
        }
    }
    let g = &u.grid;
    Ok(VectorField { grid: g.clone(), kind: VKind::Edge, c: curl_f(g, &j.c) })
}

/// `(ρ, h_ex(A⁰ − ∇φ⁰))`, the Meissner configuration in the gauge where u is real.
pub fn meissner_configuration(state: &MeissnerState, h_ex: f64) -> Configuration {
    let g = &state.rho.grid;
    let u = ComplexField { grid: g.clone(), v: state.rho.v.iter().map(|&r| Complex64::new(r, 0.0)).collect() };
    Configuration { u, a: state.a0_reduced.scaled(h_ex), h_ex }
}

/// Inverse change of variables: `u = 𝐮/ρ`, `A = 𝐀 − h_ex(A⁰ − ∇φ⁰)`.
pub fn to_split(big: &Configuration, state: &MeissnerState) -> Result<(ComplexField, VectorField)> {
    let g = big.grid();
    same_grid(g, &state.rho.grid)?;
    let mut u = ComplexField::constant(g, Complex64::new(0.0, 0.0));
    for &c in g.omega_cells() {
        u.v[c] = big.u.v[c] / state.rho.v[c];
    }
    let a = big.a.axpy(-big.h_ex, &state.a0_reduced)?;
    Ok((u, a))
}

/// Forward change of variables `𝐮 = ρu`, `𝐀 = A + h_ex(A⁰ − ∇φ⁰)`.
pub fn from_split(u: &ComplexField, a: &VectorField, state: &MeissnerState, h_ex: f64) -> Result<Configuration> {
    let g = &u.grid;
    same_grid(g, &state.rho.grid)?;
    let mut big = ComplexField::constant(g, Complex64::new(0.0, 0.0));
    for &c in g.omega_cells() {
        big.v[c] = u.v[c] * state.rho.v[c];
    }
    Configuration::new(big, a.axpy(h_ex, &state.a0_reduced)?, h_ex)
}

/// `(h_ex²/2) Σ_{L_Ω} V |curl B⁰|²/ρρ' (|u||u'| − 1)`.
pub fn remainder_r(u: &ComplexField, state: &MeissnerState, h_ex: f64) -> f64 {
    let g = &u.grid;
    let cb = curl_e(g, &state.b0.c);
    let mut s = 0.0;
    for ax in 0..3 {
        for l in g.links(ax) {
            let q = cb[ax][l.face];
            s += q * q / state.weights[ax][l.face] * (u.v[l.lo].norm() * u.v[l.hi].norm() - 1.0);
        }
    }
    0.5 * h_ex * h_ex * g.vol() * s
}

/// `h_ex Σ_{Ω edges} V μ·B⁰`.
pub fn coupling_term(u: &ComplexField, a: &VectorField, state: &MeissnerState, h_ex: f64) -> Result<f64> {
    let g = &u.grid;
    let mu = vorticity(u, a)?;
    let mut s = 0.0;
    for ax in 0..3 {
        for (e, &k) in g.edge_in(ax).iter().enumerate() {
            if k {
                s += mu.c[ax][e] * state.b0.c[ax][e];
            }
        }
    }
    Ok(h_ex * g.vol() * s)
}

/// Both sides of `∫((iu,∇_A u) + A)·curl B⁰ = ∫ μ·B⁰`.
pub fn coupling_by_parts(u: &ComplexField, a: &VectorField, state: &MeissnerState) -> Result<(f64, f64)> {
    let g = &u.grid;
    let j = current(u, a)?;
    let cb = curl_e(g, &state.b0.c);
    let mut lhs = 0.0;
    for ax in 0..3 {
        for l in g.links(ax) {
            lhs += (j.c[ax][l.face] + a.c[ax][l.face]) * cb[ax][l.face];
        }
    }
    Ok((lhs * g.vol(), coupling_term(u, a, state, 1.0)?))
}

/// Evaluate the splitting of `GL(𝐮,𝐀)` term by term.
pub fn split_energy(big: &Configuration, state: &MeissnerState, a: &ScalarField, eps: f64) -> Result<EnergyBreakdown> {
    let g = big.grid();
    same_grid(g, &a.grid)?;
    let b = g.omega_cells().iter().fold(f64::INFINITY, |m, &c| m.min(a.v[c]));
    let floor = 0.5 * b.max(0.0).sqrt();
    if g.omega_cells().iter().any(|&c| !(state.rho.v[c] >= floor)) {
        return contract("ρ falls below √b/2: state does not match the pinning term");
    }
    let h_ex = big.h_ex;
    let hex = &state.applied.h0ex;
    let total = gl_energy(big, a, eps, hex)?;
    let meissner_term = gl_energy(&meissner_configuration(state, h_ex), a, eps, hex)?;
    let (u, av) = to_split(big, state)?;
    let free = free_energy_weighted(&u, &av, &state.rho, eps)?;
    let (_, exterior_term) = magnetic_split(g, &av.c);
    let coupling = coupling_term(&u, &av, state, h_ex)?;
    let remainder = remainder_r(&u, state, h_ex);
    Ok(EnergyBreakdown { total, meissner_term, free_energy: free, exterior_term, coupling_term: coupling, remainder })
}

/// `|u| ≡ 0` reference value of the potential term, `¼ε⁻² Σ_Ω V a²`.
pub fn normal_state_energy(a: &ScalarField, eps: f64) -> f64 {
    let g = &a.grid;
    g.vol() * 0.25 * g.omega_cells().iter().map(|&c| a.v[c] * a.v[c]).sum::<f64>() / (eps * eps)
}

/// `(u e^{iφ}, A + ∇φ)` for a cell potential φ.
pub fn gauge_transform(u: &ComplexField, a: &VectorField, phi: &[f64]) -> Result<(ComplexField, VectorField)> {
    let g = &u.grid;
    same_grid(g, &a.grid)?;
    let v = u.v.iter().zip(phi).map(|(z, p)| z * Complex64::from_polar(1.0, *p)).collect();
    let gp = crate::mesh::grad_c(g, phi);
    let mut a2 = a.clone();
    for ax in 0..3 {
        for (x, y) in a2.c[ax].iter_mut().zip(&gp[ax]) {
            *x += y;
        }
    }
    same_vec(a, &a2)?;
    Ok((ComplexField { grid: g.clone(), v }, a2))
}

/// Test fixtures: mollified vortex filaments with tanh cores of width ε.
pub mod fixtures {
    use super::*;
    use crate::mesh::{cross, dot3, norm, scale, sub};

    fn frame(dir: [f64; 3]) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let t = scale(dir, 1.0 / norm(dir));
        let seed = if t[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let e1 = {
            let v = sub(seed, scale(t, dot3(seed, t)));
            scale(v, 1.0 / norm(v))
        };
        (t, e1, cross(t, e1))
    }

    /// `tanh(r/ε) e^{iθ}` around the line through `point` along `dir`.
    pub fn vortex_line(g: &Grid, point: [f64; 3], dir: [f64; 3], eps: f64) -> ComplexField {
        let (_, e1, e2) = frame(dir);
        ComplexField::from_fn(g, |p| {
            let d = sub(p, point);
            let (x, y) = (dot3(d, e1), dot3(d, e2));
            let r = x.hypot(y);
            Complex64::from_polar((r / eps).tanh(), y.atan2(x))
        })
    }

    /// Vortex ring of radius `r0` in the plane `z = center[2]`, phase `atan2(z − z₀, r − R₀)`.
    pub fn vortex_ring(g: &Grid, center: [f64; 3], r0: f64, eps: f64) -> ComplexField {
        ComplexField::from_fn(g, |p| {
            let d = sub(p, center);
            let rr = d[0].hypot(d[1]) - r0;
            let dist = rr.hypot(d[2]);
            Complex64::from_polar((dist / eps).tanh(), d[2].atan2(rr))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meissner::{applied_field, minimize_j, ExternalField};
    use crate::mesh::{div_e, GridSpec};
    use crate::pinning::{make_pinning, solve_rho, PinningKind, PinningProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid {
        Grid::new(GridSpec::ball(1.0, 1.6, n)).unwrap()
    }

    #[test]
    fn trivial_energies() {
        let g = grid(12);
        let one = ComplexField::constant(&g, Complex64::new(1.0, 0.0));
        let zero_a = VectorField::zeros(&g, VKind::Face);
        let a = ScalarField::from_fn(&g, Loc::Cell, |_| 1.0);
        let hz = VectorField::zeros(&g, VKind::Edge);
        let cfg = Configuration::new(one.clone(), zero_a.clone(), 0.0).unwrap();
        assert_eq!(gl_energy(&cfg, &a, 0.1, &hz).unwrap(), 0.0);
        assert_eq!(free_energy_weighted(&one, &zero_a, &a, 0.1).unwrap(), 0.0);
        assert_eq!(vorticity(&one, &zero_a).unwrap().max_abs(), 0.0);
        let zero = ComplexField::constant(&g, Complex64::new(0.0, 0.0));
        let cfg0 = Configuration::new(zero, zero_a, 0.0).unwrap();
        let e = gl_energy(&cfg0, &a, 0.1, &hz).unwrap();
        let direct = crate::mesh::integrate(
            &ScalarField::from_fn(&g, Loc::Cell, |_| 0.25 / 0.01),
            &crate::mesh::Region::Omega,
        )
        .unwrap()
        .value;
        assert!((e - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn vorticity_is_divergence_free() {
        let g = grid(12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = ComplexField::from_fn(&g, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut a = VectorField::zeros(&g, VKind::Face);
        a.c.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0)));
        let mu = vorticity(&u, &a).unwrap();
        let d = div_e(&g, &mu.c);
        let scale = mu.max_abs() / g.hmin();
        assert!(d.iter().all(|x| x.abs() < 1e-12 * scale));
    }

    #[test]
    fn weighted_sandwich() {
        let g = grid(12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = ScalarField::from_fn(&g, Loc::Cell, |_| rng.gen_range(0.6..1.0));
        let c2 = g.omega_cells().iter().fold(1.0f64, |m, &c| m.min(rho.v[c] * rho.v[c]));
        for _ in 0..5 {
            let u = ComplexField::from_fn(&g, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let mut a = VectorField::zeros(&g, VKind::Face);
            a.c.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5)));
            let fw = free_energy_weighted(&u, &a, &rho, 0.1).unwrap();
            let f = free_energy(&u, &a, 0.1).unwrap();
            assert!(c2 * c2 * f <= fw && fw <= f);
        }
    }

    #[test]
    fn split_identity_with_inclusion() {
        let g = grid(14);
        let p = PinningProfile {
            kind: PinningKind::Inclusions { centers: vec![[0.1, -0.2, 0.0]], radii: vec![0.4] },
            b: 0.5,
            boundary_margin: 0.0,
        };
        let a = make_pinning(&p, &g).unwrap();
        let eps = 0.15;
        let rho = solve_rho(&a, eps).unwrap().rho;
        let app = applied_field(&ExternalField::Constant([0.0, 0.0, 1.0]), &g).unwrap();
        let st = minimize_j(&rho, &app).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for h_ex in [0.0, 1.0, 5.0] {
            let u = ComplexField::from_fn(&g, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let w = crate::meissner::random_admissible(&g, rng.gen());
            let big = Configuration::new(
                u,
                app.a0ex.scaled(h_ex).axpy(0.3, &VectorField { grid: g.clone(), kind: VKind::Face, c: w }).unwrap(),
                h_ex,
            )
            .unwrap();
            let br = split_energy(&big, &st, &a, eps).unwrap();
            assert!(br.identity_residual() < 1e-7, "{br:?}");
        }
        let m = meissner_configuration(&st, 2.0);
        let br = split_energy(&m, &st, &a, eps).unwrap();
        assert!(br.free_energy.abs() < 1e-20 && br.coupling_term.abs() < 1e-20 && br.remainder.abs() < 1e-20);
        assert!((br.total - br.meissner_term).abs() < 1e-12 * br.total.abs());
    }

    #[test]
    fn vortex_line_flux_is_two_pi() {
        let g = Grid::new(GridSpec::ball(1.0, 1.3, 40)).unwrap();
        let eps = 0.12;
        let u = fixtures::vortex_line(&g, [0.013, -0.007, 0.0], [0.0, 0.0, 1.0], eps);
        let mu = vorticity(&u, &VectorField::zeros(&g, VKind::Face)).unwrap();
        // flux through the disk of radius 0.7 in the plane through the edge layer k
        let d = g.dims(Loc::Edge(2));
        let k = d[2] / 2;
        let mut flux = 0.0;
        for j in 0..d[1] {
            for i in 0..d[0] {
                let e = crate::mesh::idx3(d, i, j, k);
                let p = g.pos(Loc::Edge(2), e);
                if p[0].hypot(p[1]) < 0.7 {
                    flux += mu.c[2][e];
                }
            }
        }
        let h = g.h();
        flux *= h[0] * h[1];
        assert!((flux - 2.0 * std::f64::consts::PI).abs() < 0.02 * 2.0 * std::f64::consts::PI, "{flux}");
    }
}
