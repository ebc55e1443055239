use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pgl3::energy::{self, fixtures, Configuration};
use pgl3::io::{self, ExperimentConfig, Field, FieldSpec, HSchedule};
use pgl3::isoflux::{self, CurrentKind, Neighborhood};
use pgl3::meissner;
use pgl3::minimize::{self, Init, Problem, SweepOptions};
use pgl3::mesh::{Grid, GridSpec, Loc, Omega};
use pgl3::pinning::{make_pinning, solve_rho};
use pgl3::vortex;
use pgl3::{Complex64, ComplexField, Error, PinningKind, PinningProfile, ScalarField, VKind, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::out::{f, run_dir, text, Table};
use crate::{Common, FixtureArg, InitArg};

pub struct Setup {
    pub cfg: ExperimentConfig,
    pub grid: Grid,
    pub a: ScalarField,
}

impl Setup {
    fn dir(&self, name: &str) -> anyhow::Result<PathBuf> {
        run_dir(&self.cfg.output, name)
    }

    fn field(&self) -> pgl3::Result<meissner::ExternalField> {
        self.cfg.field.resolve(&self.grid)
    }

    fn problem(&self, eps: f64) -> pgl3::Result<Problem> {
        Problem::new(&self.a, eps, &self.field()?)
    }
}

fn rescale(spec: &GridSpec, margin: f64) -> GridSpec {
    let (mid, half) = match &spec.omega {
        Omega::Ball { center, radius } => (*center, [*radius; 3]),
        Omega::Box { min, max } => ([0, 1, 2].map(|a| 0.5 * (min[a] + max[a])), [0, 1, 2].map(|a| 0.5 * (max[a] - min[a]))),
        Omega::Samples(_) => return spec.clone(),
    };
    GridSpec {
        box_min: [0, 1, 2].map(|a| mid[a] - margin * half[a]),
        box_max: [0, 1, 2].map(|a| mid[a] + margin * half[a]),
        ..spec.clone()
    }
}

pub fn setup(c: &Common) -> anyhow::Result<Setup> {
    let mut cfg = match &c.config {
        Some(p) => io::parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = c.grid {
        if n < 4 {
            return Err(Error::Config("--grid must be at least 4".into()).into());
        }
        cfg.grid.n = [n; 3];
    }
    if let Some(m) = c.margin {
        if !(m > 1.0) {
            return Err(Error::Config("--margin must exceed 1".into()).into());
        }
        cfg.grid = rescale(&cfg.grid, m);
    }
    if !c.eps.is_empty() {
        if c.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("--eps values must be positive".into()).into());
        }
        cfg.eps = c.eps.clone();
    }
    if let Some(s) = &c.field {
        cfg.field = FieldSpec::parse(s).ok_or_else(|| Error::Config(format!("unknown field `{s}`")))?;
    }
    if let Some(b) = c.b {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::Config(format!("--b {b} must lie in (0, 1]")).into());
        }
        cfg.pinning = if b == 1.0 {
            PinningProfile::constant(1.0)
        } else {
            let (center, radius) = match cfg.grid.omega {
                Omega::Ball { center, radius } => (center, radius),
                _ => ([0, 1, 2].map(|a| 0.5 * (cfg.grid.box_min[a] + cfg.grid.box_max[a])), 1.0),
            };
            PinningProfile {
                kind: PinningKind::Inclusions { centers: vec![center], radii: vec![c.core * radius] },
                b,
                boundary_margin: 0.0,
            }
        };
    }
    if let Some(o) = &c.out {
        cfg.output = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let grid = Grid::new(cfg.grid.clone())?;
    let a = make_pinning(&cfg.pinning, &grid)?;
    Ok(Setup { cfg, grid, a })
}

fn snapshot(dir: &Path, name: &str, field: Field) -> anyhow::Result<()> {
    let p = dir.join(name);
    io::save_field(&p, &field)?;
    println!("wrote {}", p.display());
    Ok(())
}

fn rho2(rho: &ScalarField) -> Vec<f64> {
    rho.v.iter().map(|r| r * r).collect()
}

pub fn rho_solve(c: &Common) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("rho-solve")?;
    let b = s.grid.omega_cells().iter().fold(1.0f64, |m, &k| m.min(s.a.v[k]));
    let mut t = Table::new(&["eps", "iterations", "residual", "energy", "min_rho2", "max_rho2", "b", "bounds_ok"]);
    let mut bad = Vec::new();
    for (i, &eps) in s.cfg.eps.iter().enumerate() {
        let sol = solve_rho(&s.a, eps)?;
        let r2 = rho2(&sol.rho);
        let (lo, hi) = s.grid.omega_cells().iter().fold((f64::INFINITY, 0.0f64), |(l, h), &k| (l.min(r2[k]), h.max(r2[k])));
        let ok = lo >= b * (1.0 - 1e-12) && hi <= 1.0 + 1e-12;
        if !ok {
            bad.push(eps);
        }
        t.row(vec![f(eps), sol.iterations.to_string(), f(sol.residual_norm), f(sol.energy), f(lo), f(hi), f(b), ok.to_string()]);
        if c.save_fields {
            snapshot(&dir, &format!("rho_{i}.pgl3"), Field::Scalar(sol.rho.clone()))?;
        }
        if c.plot_data {
            text(&dir.join(format!("rho_{i}.vtk")), &io::vtk_cells(&s.grid, &[("a", &s.a.v), ("rho", &sol.rho.v)]))?;
        }
    }
    t.write(&dir.join("rho.csv"))?;
    if !bad.is_empty() {
        return Err(Error::Invariant(format!("b ≤ ρ² ≤ 1 violated for ε in {bad:?}")).into());
    }
    Ok(())
}

pub fn meissner(c: &Common, tests: usize) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("meissner")?;
    let applied = meissner::applied_field(&s.field()?, &s.grid)?;
    let mut t = Table::new(&[
        "eps",
        "j_value",
        "j_applied",
        "cg_iterations",
        "b0_l2",
        "h_l2",
        "curl_residual",
        "div_residual",
        "variational_residual",
        "orthogonality",
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(s.cfg.seed);
    let mut bad = Vec::new();
    for (i, &eps) in s.cfg.eps.iter().enumerate() {
        let rho = solve_rho(&s.a, eps)?.rho;
        let st = meissner::minimize_j(&rho, &applied)?;
        let j_applied = meissner::j_functional(&rho, &applied.a0ex, &applied.h0ex)?;
        let var = (0..tests).map(|_| meissner::variational_residual(&st, &meissner::interior_test_potential(&s.grid, &mut rng))).fold(0.0, f64::max);
        let orth = (0..tests)
            .map(|_| {
                let z: Vec<f64> = (0..s.grid.len(Loc::Cell)).map(|_| rng.gen_range(-1.0..1.0)).collect();
                meissner::orthogonality(&st, &z)
            })
            .fold(0.0, f64::max);
        if st.j_value > j_applied * (1.0 + 1e-12) {
            bad.push(eps);
        }
        t.row(vec![
            f(eps),
            f(st.j_value),
            f(j_applied),
            st.cg_iterations.to_string(),
            f(isoflux::edge_l2(&st.b0)),
            f(isoflux::edge_l2(&applied.h0ex)),
            f(meissner::b0_curl_residual(&st)),
            f(meissner::b0_div_residual(&st)),
            f(var),
            f(orth),
        ]);
        if c.save_fields {
            snapshot(&dir, &format!("a0_{i}.pgl3"), Field::Vector(st.a0.clone()))?;
            snapshot(&dir, &format!("b0_{i}.pgl3"), Field::Vector(st.b0.clone()))?;
        }
        if c.plot_data {
            let bm: Vec<f64> = isoflux::cell_average(&st.b0).iter().map(|v| pgl3::mesh::norm(*v)).collect();
            text(&dir.join(format!("b0_{i}.vtk")), &io::vtk_cells(&s.grid, &[("rho", &rho.v), ("b0_norm", &bm)]))?;
        }
    }
    t.write(&dir.join("meissner.csv"))?;
    if !bad.is_empty() {
        return Err(Error::Invariant(format!("J(A⁰) exceeds J(A_0ex) for ε in {bad:?}")).into());
    }
    Ok(())
}

pub fn split_check(c: &Common, trials: usize, hs: &[f64], tol: f64) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("split-check")?;
    let applied = meissner::applied_field(&s.field()?, &s.grid)?;
    let states = s
        .cfg
        .eps
        .iter()
        .map(|&eps| Ok(meissner::minimize_j(&solve_rho(&s.a, eps)?.rho, &applied)?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.cfg.seed);
    let mut t = Table::new(&["trial", "eps", "h_ex", "total", "meissner", "free_energy", "exterior", "coupling", "remainder", "residual"]);
    let mut worst = 0.0f64;
    for k in 0..trials {
        let ei = k % states.len();
        let h = hs[(k / states.len()) % hs.len()];
        let u = ComplexField::from_fn(&s.grid, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let w = VectorField { grid: s.grid.clone(), kind: VKind::Face, c: meissner::random_admissible(&s.grid, rng.gen()) };
        let big = Configuration::new(u, applied.a0ex.scaled(h).axpy(rng.gen_range(0.0..1.0), &w)?, h)?;
        let br = energy::split_energy(&big, &states[ei], &s.a, s.cfg.eps[ei])?;
        let r = br.identity_residual();
        worst = worst.max(r);
        t.row(vec![
            k.to_string(),
            f(s.cfg.eps[ei]),
            f(h),
            f(br.total),
            f(br.meissner_term),
            f(br.free_energy),
            f(br.exterior_term),
            f(br.coupling_term),
            f(br.remainder),
            f(r),
        ]);
    }
    t.note(format!("max residual {worst:e}, tolerance {tol:e}"));
    t.write(&dir.join("split.csv"))?;
    println!("max identity residual {worst:e}");
    if !(worst <= tol) {
        return Err(Error::Invariant(format!("splitting identity residual {worst:e} exceeds {tol:e}")).into());
    }
    Ok(())
}

fn kind_name(k: CurrentKind) -> &'static str {
    match k {
        CurrentKind::Loop => "loop",
        CurrentKind::BoundaryToBoundary => "boundary",
        CurrentKind::Mixed => "mixed",
    }
}

pub fn isoflux(c: &Common, resolution: usize, twenty_six: bool) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("isoflux")?;
    if resolution == 0 {
        return Err(Error::Config("--resolution must be positive".into()).into());
    }
    let nb = if twenty_six { Neighborhood::TwentySix } else { Neighborhood::Six };
    let mut t = Table::new(&[
        "eps",
        "ratio",
        "circulation",
        "weighted_mass",
        "lower_bound_l2",
        "star_ratio",
        "slack",
        "hc1",
        "graph_nodes",
        "current_kind",
        "current_length",
    ]);
    let applied = meissner::applied_field(&s.field()?, &s.grid)?;
    for (i, &eps) in s.cfg.eps.iter().enumerate() {
        let rho = solve_rho(&s.a, eps)?.rho;
        let st = meissner::minimize_j(&rho, &applied)?;
        let eta = ScalarField { grid: s.grid.clone(), loc: Loc::Cell, v: rho2(&rho) };
        let r = isoflux::maximize_ratio(&st.b0, &eta, resolution, nb, Some(eps))?;
        t.row(vec![
            f(eps),
            f(r.ratio),
            f(r.circulation),
            f(r.weighted_mass),
            f(r.lower_bound_l2),
            f(r.star_ratio),
            f(r.slack),
            r.hc1.map(f).unwrap_or_else(|| "inf".into()),
            r.graph_nodes.to_string(),
            kind_name(r.best_current.kind).into(),
            f(r.best_current.mass()),
        ]);
        text(&dir.join(format!("best_current_{i}.txt")), &io::write_current(&r.best_current))?;
        if c.plot_data {
            let bm: Vec<f64> = isoflux::cell_average(&st.b0).iter().map(|v| pgl3::mesh::norm(*v)).collect();
            text(&dir.join(format!("b0_{i}.vtk")), &io::vtk_cells(&s.grid, &[("eta", &eta.v), ("b0_norm", &bm)]))?;
        }
    }
    t.write(&dir.join("isoflux.csv"))?;
    Ok(())
}

pub fn vortex_detect(
    c: &Common,
    input: Option<(PathBuf, PathBuf)>,
    h: f64,
    fixture: FixtureArg,
    delta_cells: Option<f64>,
) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("vortex-detect")?;
    let eps = s.cfg.eps[0];
    let delta = delta_cells.unwrap_or(s.cfg.tol.delta_cells) * s.grid.hmax();
    let (source, u, a, rho) = match input {
        Some((up, ap)) => {
            let (Field::Complex(u), Field::Vector(av)) = (io::load_field(&up)?, io::load_field(&ap)?) else {
                bail!(Error::Config("--input must be a complex cell snapshot and --potential a face snapshot".into()));
            };
            if u.grid.spec() != s.grid.spec() || av.grid.spec() != s.grid.spec() || av.kind != VKind::Face {
                bail!(Error::Config("snapshots do not match the run grid".into()));
            }
            let p = s.problem(eps)?;
            let big = Configuration::new(
                ComplexField { grid: s.grid.clone(), v: u.v },
                VectorField { grid: s.grid.clone(), kind: VKind::Face, c: av.c },
                h,
            )?;
            let (u, a) = energy::to_split(&big, &p.state)?;
            ("input".to_string(), u, a, p.state.rho)
        }
        None => {
            let rho = solve_rho(&s.a, eps)?.rho;
            let ctr = meissner::omega_center(&s.grid);
            let u = match fixture {
                FixtureArg::Line => fixtures::vortex_line(&s.grid, ctr, [0.0, 0.0, 1.0], eps),
                FixtureArg::Ring => fixtures::vortex_ring(&s.grid, ctr, 0.5, eps),
            };
            let name = match fixture {
                FixtureArg::Line => "line",
                FixtureArg::Ring => "ring",
            };
            (name.to_string(), u, VectorField::zeros(&s.grid, VKind::Face), rho)
        }
    };
    let v = vortex::assemble_nu(&u, &a, &rho, eps, delta)?;
    let open = v.interior_boundary(&s.grid);
    let max_sum = v.cube_degree_sums.iter().map(|d| d.abs()).max().unwrap_or(0);
    let mut t = Table::new(&[
        "source",
        "eps",
        "delta",
        "cells_per_cube",
        "offset",
        "cubes",
        "nu_mass",
        "weighted_mass",
        "segments",
        "open_endpoints",
        "max_cube_degree_sum",
        "min_edge_modulus",
        "c_edge",
        "c_face",
    ]);
    let o = v.grid.offset_index;
    t.row(vec![
        source,
        f(eps),
        f(delta),
        v.grid.m[0].to_string(),
        format!("{} {} {}", o[0], o[1], o[2]),
        v.grid.cubes.len().to_string(),
        f(v.mass),
        f(v.weighted_mass),
        v.nu.segments.len().to_string(),
        open.len().to_string(),
        max_sum.to_string(),
        f(v.grid.min_edge_modulus),
        f(v.grid.c_edge),
        f(v.grid.c_face),
    ]);
    t.write(&dir.join("nu.csv"))?;
    text(&dir.join("nu.txt"), &io::write_current(&v.nu))?;
    let mut fv = Table::new(&["x", "y", "z", "degree"]);
    for w in &v.face_vortices {
        fv.row(vec![f(w.centroid[0]), f(w.centroid[1]), f(w.centroid[2]), w.degree.to_string()]);
    }
    fv.write(&dir.join("face_vortices.csv"))?;
    if c.plot_data {
        let m: Vec<f64> = u.v.iter().map(|z| z.norm()).collect();
        text(&dir.join("u.vtk"), &io::vtk_cells(&s.grid, &[("u_norm", &m)]))?;
    }
    if !open.is_empty() || max_sum != 0 {
        return Err(Error::Invariant(format!("ν has {} interior endpoints; max cube degree sum {max_sum}", open.len())).into());
    }
    Ok(())
}

pub fn gl_minimize(c: &Common, h: f64, init: InitArg) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("gl-minimize")?;
    let eps = s.cfg.eps[0];
    let p = s.problem(eps)?;
    let init = match init {
        InitArg::Meissner => Init::Meissner,
        InitArg::Random => Init::Random(s.cfg.seed),
        InitArg::Vortex => {
            let (point, dir) = minimize::seed_line(&p, s.cfg.tol.graph_resolution)?;
            Init::VortexLine { point, dir }
        }
    };
    let out = minimize::minimize_gl(&p, h, &init, &s.cfg.tol.minimize())?;
    let opts = sweep_options(&s);
    let rec = minimize::record_for(&p, &out, matches!(init, Init::VortexLine { .. }), &opts)?;
    let b = &out.breakdown;
    let mut t = Table::new(&[
        "eps",
        "h_ex",
        "init",
        "energy",
        "meissner",
        "free_energy",
        "exterior",
        "coupling",
        "remainder",
        "split_residual",
        "meissner_gap",
        "nu_mass",
        "min_u_over_rho",
        "iterations",
        "converged",
        "gauge_projections",
    ]);
    t.row(vec![
        f(eps),
        f(h),
        (match init {
            Init::Meissner => "meissner",
            Init::Random(_) => "random",
            Init::VortexLine { .. } => "vortex",
        })
        .into(),
        f(out.energy),
        f(b.meissner_term),
        f(b.free_energy),
        f(b.exterior_term),
        f(b.coupling_term),
        f(b.remainder),
        f(rec.split_residual),
        f(rec.meissner_gap),
        f(rec.nu_mass),
        f(rec.min_u_over_rho),
        out.iterations.to_string(),
        out.converged.to_string(),
        out.gauge_projections.to_string(),
    ]);
    t.write(&dir.join("minimize.csv"))?;
    if c.save_fields {
        snapshot(&dir, "u.pgl3", Field::Complex(out.config.u.clone()))?;
        snapshot(&dir, "a.pgl3", Field::Vector(out.config.a.clone()))?;
    }
    if c.plot_data {
        let mut hist = Table::new(&["iteration", "energy"]);
        for (i, e) in out.history.iter().enumerate() {
            hist.row(vec![i.to_string(), f(*e)]);
        }
        hist.write(&dir.join("history.csv"))?;
        let m: Vec<f64> = out.config.u.v.iter().map(|z| z.norm()).collect();
        text(&dir.join("u.vtk"), &io::vtk_cells(&s.grid, &[("u_norm", &m), ("rho", &p.state.rho.v)]))?;
    }
    if !out.converged {
        eprintln!("warning: iteration cap reached before the stopping test");
    }
    Ok(())
}

fn sweep_options(s: &Setup) -> SweepOptions {
    let t = &s.cfg.tol;
    SweepOptions {
        minimize: t.minimize(),
        delta: t.delta_cells * s.grid.hmax(),
        graph_resolution: t.graph_resolution,
        dual_norm_fields: t.dual_norm_fields,
        seed: s.cfg.seed,
    }
}

pub fn sweep(c: &Common, h: Option<&str>) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("sweep")?;
    let schedule = match h {
        Some(x) => HSchedule::parse(x).map_err(|e| Error::Config(format!("--h: {e}")))?,
        None => s.cfg.h.clone(),
    };
    let opts = sweep_options(&s);
    let mut t = Table::new(&[
        "eps",
        "h_ex",
        "h_over_hc1",
        "energy",
        "meissner_energy",
        "meissner_gap",
        "free_energy",
        "nu_mass",
        "min_u_over_rho",
        "dual_norm_mu",
        "iterations",
        "init",
        "split_residual",
        "above_meissner",
    ]);
    for &eps in &s.cfg.eps {
        let p = s.problem(eps)?;
        let iso = p.isoflux(opts.graph_resolution)?;
        let hc1 = isoflux::critical_field(iso.ratio, eps)?;
        let hs = schedule.values(hc1);
        let r = minimize::hex_sweep(&p, &hs, &opts)?;
        for rec in &r.records {
            t.row(vec![
                f(eps),
                f(rec.h_ex),
                f(rec.h_ex / r.hc1),
                f(rec.energy),
                f(rec.meissner_energy),
                f(rec.meissner_gap),
                f(rec.free_energy),
                f(rec.nu_mass),
                f(rec.min_u_over_rho),
                f(rec.dual_norm_mu),
                rec.iterations.to_string(),
                (if rec.vortex_init { "vortex" } else { "meissner" }).into(),
                f(rec.split_residual),
                rec.above_meissner.to_string(),
            ]);
        }
        let line = match r.onset {
            Some(hs) => format!("onset eps={} hc1={} h*={} h*/hc1={}", f(eps), f(r.hc1), f(hs), f(hs / r.hc1)),
            None => format!("onset eps={} hc1={} h*=none", f(eps), f(r.hc1)),
        };
        println!("{line}");
        t.note(line);
    }
    t.write(&dir.join("sweep.csv"))?;
    Ok(())
}

pub fn ball_lab(c: &Common, n: usize, rho2: f64) -> anyhow::Result<()> {
    let s = setup(c)?;
    let dir = s.dir("ball-lab")?;
    if !(rho2 > 0.0 && rho2 <= 1.0) {
        return Err(Error::Config("--rho2 must lie in (0, 1]".into()).into());
    }
    let mut t = Table::new(&["eps", "rho2", "measured_energy", "bound", "ratio", "balls", "total_degree"]);
    let mut bt = Table::new(&["eps", "x", "y", "radius", "degree"]);
    for &eps in &s.cfg.eps {
        let slice = vortex::degree_one_slice(n, eps, rho2);
        let r = vortex::ball_construction(&slice, eps, 1.0).with_context(|| format!("ε = {eps}"))?;
        let ratio = r.measured_energy / (PI * rho2 * (1.0 / eps).ln());
        t.row(vec![
            f(eps),
            f(rho2),
            f(r.measured_energy),
            f(r.bound),
            f(ratio),
            r.balls.len().to_string(),
            r.balls.iter().map(|b| b.degree).sum::<i64>().to_string(),
        ]);
        for b in &r.balls {
            bt.row(vec![f(eps), f(b.center[0]), f(b.center[1]), f(b.radius), b.degree.to_string()]);
        }
        if r.bound > r.measured_energy {
            return Err(Error::Invariant(format!("ball bound {} exceeds measured energy {}", r.bound, r.measured_energy)).into());
        }
    }
    t.write(&dir.join("ball_lab.csv"))?;
    bt.write(&dir.join("balls.csv"))?;
    Ok(())
}
