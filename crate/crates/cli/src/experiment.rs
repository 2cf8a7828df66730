//! Runs a validated experiment and tabulates the result.

use rayon::prelude::*;

use heisen_core::dyson::compute_kernels;
use heisen_core::image::{contract_with_bath, evolve_images_exact};
use heisen_core::markov::{
    check_markov_assumptions, decompose_interaction, evolve_lindblad, spectral_coefficients_at_horizon,
    BohrDecomposition, LindbladGenerator, MarkovCheckOptions, SpectralOptions,
};
use heisen_core::oracle::npoint_reduced_exact;
use heisen_core::superop::{one_point_operator, star_product, OnePointTrajectory, SeriesTruncation};
use heisen_core::{Error, ModelSpec, OdeOptions, Operator, TimeGrid};

use crate::config::{ConfigError, ExperimentConfig, RunKind};
use crate::output::{Cell, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

/// Result table plus, for `validate`, the checks that missed their threshold.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub table: Table,
    pub failures: Vec<String>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let table = match cfg.kind {
        RunKind::OnePoint => one_point(cfg)?,
        RunKind::NPoint => n_point(cfg)?,
        RunKind::ImageExact => image_exact(cfg)?,
        RunKind::Lindblad => lindblad(cfg)?,
        RunKind::MarkovReport => markov_report(cfg)?,
        RunKind::Validate => return validate(cfg),
    };
    Ok(Outcome {
        table,
        failures: Vec::new(),
    })
}

fn collect_tables(run: &str, parts: Vec<Result<Table, Error>>) -> Result<Table, RunError> {
    let mut table = Table::trajectories(run);
    for p in parts {
        table.append(p?);
    }
    Ok(table)
}

fn one_point(cfg: &ExperimentConfig) -> Result<Table, RunError> {
    let m = &cfg.model;
    let ks = compute_kernels(m, cfg.truncation.order, &cfg.grid)?;
    let parts = cfg
        .observables
        .par_iter()
        .map(|ob| {
            let traj = one_point_operator(&ob.op, cfg.truncation, &ks, m.rho_b(), &cfg.grid)?;
            let mut t = Table::trajectories("one_point");
            for (time, v) in cfg.grid.times().iter().zip(&traj.values) {
                t.push_operator(*time, &ob.name, v);
            }
            Ok(t)
        })
        .collect();
    collect_tables("one_point", parts)
}

fn image_exact(cfg: &ExperimentConfig) -> Result<Table, RunError> {
    let m = &cfg.model;
    let d_b = m.dims().bath;
    let parts = cfg
        .observables
        .par_iter()
        .map(|ob| {
            let fams = evolve_images_exact(m, &ob.op, &cfg.grid, &OdeOptions::default())?;
            let mut t = Table::trajectories("image_exact");
            for (time, f) in cfg.grid.times().iter().zip(&fams) {
                t.push_operator(*time, &ob.name, &contract_with_bath(f, m.rho_b())?);
                for a in 0..d_b {
                    for b in 0..d_b {
                        t.push_operator(*time, &format!("{}[{a},{b}]", ob.name), &f.block_op(a, b)?);
                    }
                }
            }
            Ok(t)
        })
        .collect();
    collect_tables("image_exact", parts)
}

fn n_point(cfg: &ExperimentConfig) -> Result<Table, RunError> {
    let m = &cfg.model;
    let grid = TimeGrid::from_points(cfg.factors.iter().flat_map(|f| f.times.iter().copied()))?;
    let ks = compute_kernels(m, cfg.truncation.order, &grid)?;
    let trajs: Vec<OnePointTrajectory> = cfg
        .observables
        .par_iter()
        .map(|ob| one_point_operator(&ob.op, cfg.truncation, &ks, m.rho_b(), &grid))
        .collect::<Result<_, _>>()?;
    let columns = cfg.factors[0].times.len();
    let parts = (0..columns)
        .into_par_iter()
        .map(|k| {
            let placed: Vec<(&OnePointTrajectory, f64)> = cfg
                .factors
                .iter()
                .map(|f| (&trajs[f.observable], f.times[k]))
                .collect();
            let label = cfg
                .factors
                .iter()
                .map(|f| format!("{}@{}", cfg.observables[f.observable].name, f.times[k]))
                .collect::<Vec<_>>()
                .join("*");
            let t_last = placed.last().map_or(0.0, |p| p.1);
            let star = star_product(&placed, &ks, m.rho_b())?;
            let mut t = Table::trajectories("n_point");
            t.push_operator(t_last, &label, &star);
            if let [(a, ta), (b, tb)] = placed[..] {
                let prod = a.value_at(ta)?.mul(b.value_at(tb)?)?;
                t.push_operator(t_last, &format!("irreducible({label})"), &star.sub(&prod)?);
            }
            Ok(t)
        })
        .collect();
    collect_tables("n_point", parts)
}

fn spectral_options(cfg: &ExperimentConfig) -> SpectralOptions {
    SpectralOptions {
        horizon: cfg.markov.horizon,
        tolerance: cfg.markov.tolerance,
        regulator: cfg.markov.regulator,
        extrapolate: cfg.markov.extrapolate,
    }
}

fn lindblad(cfg: &ExperimentConfig) -> Result<Table, RunError> {
    let m = &cfg.model;
    let mut gen = LindbladGenerator::from_model(m, spectral_options(cfg))?;
    gen.form = cfg.markov.form;
    let parts = cfg
        .observables
        .par_iter()
        .map(|ob| {
            let traj = evolve_lindblad(&ob.op, &gen, &cfg.grid, &OdeOptions::default())?;
            let mut t = Table::trajectories("lindblad");
            for (time, v) in cfg.grid.times().iter().zip(&traj) {
                t.push_operator(*time, &ob.name, v);
            }
            Ok(t)
        })
        .collect();
    collect_tables("lindblad", parts)
}

const REPORT_COLUMNS: [&str; 5] = ["quantity", "i", "j", "x", "value"];

fn blank() -> Cell {
    Cell::Text(String::new())
}

fn markov_report(cfg: &ExperimentConfig) -> Result<Table, RunError> {
    let m = &cfg.model;
    let s = &cfg.markov;
    let dec = decompose_interaction(m.hi())?;
    let rep = check_markov_assumptions(
        m,
        &dec,
        MarkovCheckOptions {
            horizon: s.horizon,
            decay_threshold: s.decay_threshold,
            samples: s.samples,
            ..MarkovCheckOptions::default()
        },
    );
    let bohr = BohrDecomposition::new(&dec, m.h0(), m.hbar())?;
    let freqs = bohr.frequencies();
    let sc = spectral_coefficients_at_horizon(m, &dec, &freqs, spectral_options(cfg))?;

    let mut t = Table::new("markov_report", &REPORT_COLUMNS);
    for (i, w) in dec.weights.iter().enumerate() {
        t.push(vec!["coupling_weight".into(), i.into(), blank(), blank(), (*w).into()]);
    }
    for (i, v) in rep.first_moment.iter().enumerate() {
        t.push(vec!["first_moment".into(), i.into(), blank(), blank(), (*v).into()]);
    }
    for (i, v) in rep.first_moment_derivative.iter().enumerate() {
        t.push(vec!["first_moment_derivative".into(), i.into(), blank(), blank(), (*v).into()]);
    }
    let scalar = |t: &mut Table, name: &str, v: Cell| t.push(vec![name.into(), blank(), blank(), blank(), v]);
    scalar(&mut t, "stationarity_defect", rep.stationarity_defect.into());
    scalar(&mut t, "decay_time", rep.decay_time.unwrap_or(f64::INFINITY).into());
    scalar(&mut t, "tail_mass", rep.tail_mass.into());
    scalar(&mut t, "first_moment_ok", rep.first_moment_ok.into());
    scalar(&mut t, "stationary_ok", rep.stationary_ok.into());
    scalar(&mut t, "decays", rep.decays.into());
    scalar(&mut t, "spectral_defect", sc.defect.into());
    for (tau, v) in &rep.decay_profile {
        t.push(vec!["decay_profile".into(), blank(), blank(), (*tau).into(), (*v).into()]);
    }
    for (i, comps) in bohr.terms.iter().enumerate() {
        for (w, a) in comps.frequencies.iter().zip(&comps.coefficients) {
            t.push(vec!["bohr_component_norm".into(), i.into(), blank(), (*w).into(), a.norm().into()]);
        }
    }
    for (i, row) in sc.values.iter().enumerate() {
        for (j, vals) in row.iter().enumerate() {
            for (w, z) in freqs.iter().zip(vals) {
                t.push(vec!["spectral_re".into(), i.into(), j.into(), (*w).into(), z.re.into()]);
                t.push(vec!["spectral_im".into(), i.into(), j.into(), (*w).into(), z.im.into()]);
            }
        }
    }
    Ok(t)
}

const VALIDATE_COLUMNS: [&str; 6] = ["check", "observable", "lambda", "value", "threshold", "pass"];

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        let dx = x.ln() - mx;
        (a + dx * (y.ln() - my), b + dx * dx)
    });
    num / den
}

/// Errors below this fraction of the operator scale are round-off and are
/// left out of slope fits.
const NOISE_FLOOR: f64 = 1e-12;

fn one_point_defect(m: &ModelSpec, o: &Operator, order: usize, grid: &TimeGrid) -> Result<f64, Error> {
    let trunc = SeriesTruncation::new(order, m.lambda())?;
    let ks = compute_kernels(m, order, grid)?;
    let traj = one_point_operator(o, trunc, &ks, m.rho_b(), grid)?;
    let mut worst: f64 = 0.0;
    for (t, v) in grid.times().iter().zip(&traj.values) {
        let exact = npoint_reduced_exact(m, &[(o.clone(), *t)])?;
        worst = worst.max((v.matrix() - exact.matrix()).norm());
    }
    Ok(worst)
}

fn two_point_defect(m: &ModelSpec, o: &Operator, order: usize, t1: f64, t2: f64) -> Result<f64, Error> {
    let trunc = SeriesTruncation::new(order, m.lambda())?;
    let grid = TimeGrid::from_points([t1, t2])?;
    let ks = compute_kernels(m, order, &grid)?;
    let traj = one_point_operator(o, trunc, &ks, m.rho_b(), &grid)?;
    let star = star_product(&[(&traj, t1), (&traj, t2)], &ks, m.rho_b())?;
    let exact = npoint_reduced_exact(m, &[(o.clone(), t1), (o.clone(), t2)])?;
    Ok((star.matrix() - exact.matrix()).norm())
}

fn validate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let order = cfg.truncation.order;
    let times = cfg.grid.times();
    let t2 = *times.last().expect("non-empty grid");
    let t1 = times[times.len() / 2];
    let threshold = order as f64 + 0.8;

    let mut table = Table::new("validate", &VALIDATE_COLUMNS);
    let mut failures = Vec::new();
    for ob in &cfg.observables {
        let scale = 1.0 + ob.op.norm() * ob.op.norm();
        for (check, two) in [("one_point", false), ("two_point", true)] {
            let defects: Vec<f64> = cfg
                .lambdas
                .par_iter()
                .map(|&l| {
                    let m = cfg.model.with_lambda(l);
                    if two {
                        two_point_defect(&m, &ob.op, order, t1, t2)
                    } else {
                        one_point_defect(&m, &ob.op, order, &cfg.grid)
                    }
                })
                .collect::<Result<_, _>>()?;
            for (l, d) in cfg.lambdas.iter().zip(&defects) {
                table.push(vec![format!("{check}_defect").into(), ob.name.as_str().into(), (*l).into(), (*d).into(), blank(), blank()]);
            }
            let pts: Vec<(f64, f64)> = cfg
                .lambdas
                .iter()
                .zip(&defects)
                .filter(|(_, d)| **d > NOISE_FLOOR * scale)
                .map(|(l, d)| (*l, *d))
                .collect();
            // Below the floor everywhere means the truncation is exact here.
            let (slope, pass) = if pts.len() < 2 {
                (f64::INFINITY, pts.is_empty())
            } else {
                let s = loglog_slope(&pts);
                (s, s >= threshold)
            };
            table.push(vec![
                format!("{check}_slope").into(),
                ob.name.as_str().into(),
                blank(),
                slope.into(),
                threshold.into(),
                pass.into(),
            ]);
            if !pass {
                failures.push(format!("{check} slope for {} is {slope:.3}, below {threshold}", ob.name));
            }
        }
    }
    Ok(Outcome { table, failures })
}
