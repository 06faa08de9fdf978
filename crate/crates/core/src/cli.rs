//! Command dispatch and deterministic CSV/JSON emission for the
//! `rt-spectra` binary.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{build_grid, VerticalGrid};
use crate::config::{load_config, Format, InitialData, RunConfig, ScanKind};
use crate::dispersion::{
    classify_periodic, classify_whole_plane, critical_frequency, escape_time, mode_at,
    refine_peak, scan, scan_ray, solve_at, DispersionCurve, StabilityReport, Verdict,
};
use crate::error::{Error, Result};
use crate::evolve::{measure_growth, EvolutionState};
use crate::modes::{build_real_mode, cutoff_norms, growth_inequality_check, random_trials};
use crate::physics::{build_equilibrium, EquilibriumProfile, FluidConfig, Side};
use crate::spectral::{dissipation_rate_bound, viscous_rate_bound, Pencil};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "RT_SPECTRA_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Hydrostatic profile table and residuals.
    Equilibrium,
    /// Growth-rate scan, largest rate and stability verdict.
    Dispersion,
    /// Vertical profiles of one growing mode.
    Mode,
    /// Cutoff norms against their large-n limits.
    Cutoff,
    /// Time integration of one frequency and fitted growth rate.
    Evolve,
    /// Full property suite with a pass/fail line per property.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Equilibrium => "equilibrium",
            Command::Dispersion => "dispersion",
            Command::Mode => "mode",
            Command::Cutoff => "cutoff",
            Command::Evolve => "evolve",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rt-spectra", version, about = "Linear Rayleigh-Taylor growth rates for stratified viscous fluids")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; overridden by RT_SPECTRA_THREADS.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 2,
    NumericalFailure = 3,
    VerificationFailure = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl From<&Error> for ExitStatus {
    fn from(e: &Error) -> Self {
        if e.is_config() {
            ExitStatus::ConfigError
        } else {
            ExitStatus::NumericalFailure
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(x) if x.is_nan() => "nan".into(),
            Cell::Num(x) if *x > 0.0 => "inf".into(),
            Cell::Num(_) => "-inf".into(),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

/// One CSV file: header row plus data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(file: &'static str, header: &[&'static str]) -> Self {
        Table {
            file,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Per-run JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    #[serde(rename = "Lambda")]
    pub lambda: Option<f64>,
    /// Empty when no frequency is unstable.
    pub xi1: Vec<f64>,
    /// `None` stands for an infinite critical frequency.
    pub xi_c: Option<f64>,
    pub c7: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub verdict: Option<Verdict>,
    #[serde(rename = "T_delta")]
    pub t_delta: Option<f64>,
    pub residuals: BTreeMap<String, f64>,
    pub versions: BTreeMap<String, String>,
}

impl Summary {
    fn new(xi_c: f64) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("rt-spectra".to_owned(), env!("CARGO_PKG_VERSION").to_owned());
        versions.insert("summary_schema".to_owned(), "1".to_owned());
        Summary {
            lambda: None,
            xi1: Vec::new(),
            xi_c: xi_c.is_finite().then_some(xi_c),
            c7: None,
            r: None,
            verdict: None,
            t_delta: None,
            residuals: BTreeMap::new(),
            versions,
        }
    }

    fn residual(&mut self, key: &str, value: f64) {
        self.residuals.insert(key.to_owned(), value);
    }

    fn set_curve(&mut self, curve: &DispersionCurve, report: &StabilityReport, cfg: &RunConfig) -> Result<()> {
        self.lambda = Some(curve.lambda_max);
        self.xi1 = curve.xi1.map_or(Vec::new(), |x| x.to_vec());
        self.c7 = curve.c7;
        self.r = report.r;
        self.verdict = Some(report.verdict);
        self.t_delta = match curve.c7 {
            Some(c7) => Some(escape_time(c7, cfg.escape.epsilon, cfg.escape.delta)?),
            None => None,
        };
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    /// Reported without a verdict.
    Logged,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Logged => "LOGGED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub property: String,
    pub value: f64,
    pub threshold: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: Summary,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    fluid: &'a FluidConfig,
    profile: EquilibriumProfile,
    grid: VerticalGrid,
    xi_c: f64,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        let n = cfg.numerics.elements_per_layer;
        let profile = build_equilibrium(&cfg.physics, 4 * n + 1)?;
        let grid = build_grid(&profile, n)?;
        let xi_c = critical_frequency(&cfg.physics, &profile);
        Ok(Ctx {
            cfg,
            fluid: &cfg.physics,
            profile,
            grid,
            xi_c,
        })
    }

    fn lambda_at(&self, xi: [f64; 2]) -> Result<Option<f64>> {
        let (_, out) = solve_at(self.fluid, &self.profile, &self.grid, self.cfg.numerics.tol, xi)?;
        Ok(out.lambda())
    }

    /// Upper end of the frequencies worth sampling.
    fn frequency_cap(&self) -> f64 {
        if self.xi_c.is_finite() {
            self.xi_c
        } else {
            10.0 / self.fluid.h_plus.max(-self.fluid.h_minus)
        }
    }
}

const LATTICE_LIMIT: usize = 4_000_000;

/// Distinct-modulus lattice frequencies of the half plane below `radius`,
/// thinned evenly to at most `count`.
fn lattice_samples(l1: f64, l2: f64, radius: f64, count: usize) -> Result<Vec<[f64; 2]>> {
    let m_max = (radius * l1).ceil() as i64;
    let k_max = (radius * l2).ceil() as i64;
    if ((2 * m_max + 1) * (k_max + 1)) as usize > LATTICE_LIMIT {
        return Err(Error::field(
            "periodic",
            "lattice too fine for enumeration; drop `periodic` to scan the whole plane",
        ));
    }
    let mut pts = Vec::new();
    for k in 0..=k_max {
        for m in -m_max..=m_max {
            if k == 0 && m <= 0 {
                continue;
            }
            let xi = [m as f64 / l1, k as f64 / l2];
            let r = xi[0].hypot(xi[1]);
            if r < radius {
                pts.push((r, xi));
            }
        }
    }
    pts.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1[1].total_cmp(&b.1[1]))
            .then(a.1[0].total_cmp(&b.1[0]))
    });
    pts.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e-12 * a.0);
    if pts.len() > count {
        let last = pts.len() - 1;
        let picks: Vec<usize> = (0..count).map(|i| i * last / (count - 1).max(1)).collect();
        pts = picks.into_iter().map(|i| pts[i]).collect();
    }
    Ok(pts.into_iter().map(|p| p.1).collect())
}

fn half_plane_samples(hi: f64, count: usize) -> Vec<[f64; 2]> {
    let k = (count as f64).sqrt().ceil().max(2.0) as usize;
    let mut out = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            let x1 = -hi + 2.0 * hi * (i as f64 + 0.5) / k as f64;
            let x2 = hi * (j as f64 + 0.5) / k as f64;
            out.push([x1, x2]);
        }
    }
    out
}

/// The configured dispersion scan and stability verdict, as `dispersion` computes them.
pub fn dispersion_scan(cfg: &RunConfig) -> Result<(DispersionCurve, StabilityReport)> {
    cfg.validate()?;
    dispersion_curve(&Ctx::new(cfg)?)
}

fn dispersion_curve(ctx: &Ctx) -> Result<(DispersionCurve, StabilityReport)> {
    let cfg = ctx.cfg;
    let spec = cfg.grid_spec();
    if let Some(p) = cfg.periodic {
        let report = classify_periodic(ctx.fluid, &ctx.profile, p.l1, p.l2)?;
        let radius = cfg.scan.xi_max.unwrap_or(ctx.frequency_cap());
        let xs = lattice_samples(p.l1, p.l2, radius, cfg.scan.samples)?;
        let curve = if xs.is_empty() {
            DispersionCurve::from_samples(Vec::new(), ctx.xi_c)
        } else {
            scan(ctx.fluid, &ctx.profile, &spec, &xs)?
        };
        return Ok((curve, report));
    }
    let curve = match cfg.scan.kind {
        ScanKind::Ray => scan_ray(ctx.fluid, &ctx.profile, &spec, &cfg.ray_spec())?,
        ScanKind::HalfPlane => {
            let hi = cfg.scan.xi_max.unwrap_or(ctx.frequency_cap());
            scan(ctx.fluid, &ctx.profile, &spec, &half_plane_samples(hi, cfg.scan.samples))?
        }
    };
    let report = classify_whole_plane(&curve);
    Ok((curve, report))
}

fn curve_table(curve: &DispersionCurve) -> Table {
    let mut t = Table::new(
        "dispersion.csv",
        &["xi1", "xi2", "xi_norm", "lambda", "alpha_residual", "energy_residual", "iterations"],
    );
    for s in &curve.samples {
        t.push(vec![
            s.xi[0].into(),
            s.xi[1].into(),
            s.xi_norm().into(),
            s.lambda.into(),
            s.alpha_residual.into(),
            s.energy_residual.into(),
            s.iterations.into(),
        ]);
    }
    t
}

fn curve_residuals(summary: &mut Summary, curve: &DispersionCurve, ctx: &Ctx) {
    let growing = curve.samples.iter().filter(|s| s.lambda.is_some());
    let (mut alpha, mut energy, mut iters) = (0.0f64, 0.0f64, 0usize);
    for s in growing {
        alpha = alpha.max(s.alpha_residual);
        energy = energy.max(s.energy_residual);
        iters = iters.max(s.iterations);
    }
    summary.residual("max_alpha_residual", alpha);
    summary.residual("max_energy_residual", energy);
    summary.residual("max_iterations", iters as f64);
    summary.residual("viscous_rate_bound", viscous_rate_bound(ctx.fluid, &ctx.profile));
    if let Some(r) = curve.refinement {
        summary.residual("densified_lambda", r.dense_lambda);
    }
}

/// Frequency for single-mode commands: explicit, or the scan argmax.
fn target_xi(ctx: &Ctx, explicit: Option<[f64; 2]>) -> Result<Option<[f64; 2]>> {
    match explicit {
        Some(x) => Ok(Some(x)),
        None => Ok(dispersion_curve(ctx)?.0.xi1),
    }
}

fn equilibrium(ctx: &Ctx) -> Result<RunOutput> {
    let mut t = Table::new("equilibrium.csv", &["side", "y", "rho", "pprime_rho"]);
    for (side, name) in [(Side::Lower, "lower"), (Side::Upper, "upper")] {
        let l = ctx.profile.layer(side);
        for i in 0..l.y.len() {
            t.push(vec![name.into(), l.y[i].into(), l.rho[i].into(), l.pprime_rho[i].into()]);
        }
    }
    let mut s = Summary::new(ctx.xi_c);
    s.residual("pressure_mismatch", ctx.profile.pressure_mismatch());
    s.residual("hydrostatic_residual", ctx.profile.hydrostatic_residual());
    s.residual("jump_rho", ctx.profile.jump_rho);
    s.residual("min_density", ctx.profile.min_density());
    Ok(RunOutput {
        summary: s,
        tables: vec![t],
        checks: Vec::new(),
    })
}

fn dispersion(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let (curve, report) = dispersion_curve(ctx)?;
    let mut s = Summary::new(ctx.xi_c);
    s.set_curve(&curve, &report, cfg)?;
    curve_residuals(&mut s, &curve, ctx);
    if cfg.periodic.is_none() && cfg.scan.refine_iterations > 0 {
        let best = refine_peak(ctx.fluid, &ctx.profile, &cfg.grid_spec(), &curve, cfg.scan.refine_iterations)?;
        if let Some((_, lam)) = best {
            s.residual("lambda_refined", lam);
        }
    }
    Ok(RunOutput {
        summary: s,
        tables: vec![curve_table(&curve)],
        checks: Vec::new(),
    })
}

fn mode(ctx: &Ctx) -> Result<RunOutput> {
    let mut t = Table::new("mode.csv", &["y", "phi", "theta", "psi"]);
    let mut s = Summary::new(ctx.xi_c);
    s.verdict = Some(Verdict::Stable);
    if let Some(xi) = target_xi(ctx, ctx.cfg.mode.xi)? {
        s.xi1 = xi.to_vec();
        let (_, m) = mode_at(ctx.fluid, &ctx.profile, &ctx.cfg.grid_spec(), xi)?;
        if let Some(m) = m {
            for i in 0..m.y.len() {
                t.push(vec![m.y[i].into(), m.phi[i].into(), m.theta[i].into(), m.psi[i].into()]);
            }
            s.c7 = Some(m.lambda);
            s.verdict = Some(Verdict::Unstable);
            s.residual("energy_identity", m.residual_energy);
            s.residual("strong_form", m.residual_strong);
            s.residual("interface_jump", m.residual_jump);
            s.residual("alpha_residual", m.alpha_residual);
            s.residual("iterations", m.iterations as f64);
            s.residual("psi_interface", m.psi_at_interface(&ctx.grid));
        }
    }
    Ok(RunOutput {
        summary: s,
        tables: vec![t],
        checks: Vec::new(),
    })
}

fn cutoff(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let xi = target_xi(ctx, cfg.cutoff.xi)?
        .ok_or_else(|| Error::Config("cutoff needs an unstable frequency; none was found".into()))?;
    let (_, m) = mode_at(ctx.fluid, &ctx.profile, &cfg.grid_spec(), xi)?;
    let m = m.ok_or_else(|| Error::field("cutoff.xi", "frequency is stable"))?;
    let gm = build_real_mode(&m)?;
    let mut ns = cfg.cutoff.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let res = cfg.numerics.horizontal_resolution;
    let fields = ns
        .par_iter()
        .map(|&n| cutoff_norms(&gm, n as f64, res))
        .collect::<Result<Vec<_>>>()?;

    let mut t = Table::new(
        "cutoff.csv",
        &["n", "norm_name", "value", "extrapolated_limit", "closed_form_limit"],
    );
    for (k, f) in fields.iter().enumerate() {
        for c in &f.norms {
            let extrapolated = k.checked_sub(1).and_then(|p| {
                let prev = fields[p].get(&c.name)?;
                let (n0, n1) = (fields[p].n, f.n);
                Some((n1 * c.value - n0 * prev.value) / (n1 - n0))
            });
            t.push(vec![
                (f.n as usize).into(),
                c.name.as_str().into(),
                c.value.into(),
                extrapolated.into(),
                c.limit.into(),
            ]);
        }
    }

    let mut s = Summary::new(ctx.xi_c);
    s.xi1 = xi.to_vec();
    s.c7 = Some(m.lambda);
    s.verdict = Some(Verdict::Unstable);
    let (first, last) = (&fields[0], &fields[fields.len() - 1]);
    for c in &last.norms {
        if let Some(l) = c.limit {
            s.residual(&format!("sq_ratio_{}", c.name), (c.value / l).powi(2));
        }
    }
    if let (Some(a), Some(b)) = (first.get("u0_dchi_sum"), last.get("u0_dchi_sum")) {
        s.residual("dchi_ratio", b.value / a.value);
    }
    Ok(RunOutput {
        summary: s,
        tables: vec![t],
        checks: Vec::new(),
    })
}

fn random_state(dim: usize, seed: u64) -> EvolutionState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = EvolutionState::zeros(dim);
    for x in st.sigma.iter_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    st
}

fn evolve(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let e = &cfg.evolve;
    let xi = target_xi(ctx, e.xi)?
        .ok_or_else(|| Error::Config("no unstable frequency to evolve; set evolve.xi".into()))?;
    let (forms, m) = mode_at(ctx.fluid, &ctx.profile, &cfg.grid_spec(), xi)?;
    let lam = m.as_ref().map(|m| m.lambda);
    let dt = e.dt.unwrap_or(lam.map_or(1e-2, |l| 1e-2 / l));
    let horizon = e.horizon.unwrap_or(lam.map_or(100.0, |l| e.amplification.ln() / l));
    let ic = match e.initial {
        InitialData::Eigenmode => {
            let m = m.as_ref().ok_or_else(|| {
                Error::field("evolve.initial", "eigenmode data needs an unstable frequency")
            })?;
            EvolutionState::eigenmode(&m.v, m.lambda)
        }
        InitialData::Random => random_state(forms.dim, cfg.numerics.seed),
    };
    let fit = measure_growth(&forms, &ic, dt, horizon)?;

    let mut t = Table::new("trajectory.csv", &["t", "j_norm", "psi0"]);
    for r in &fit.trajectory {
        t.push(vec![r.t.into(), r.j_norm.into(), r.psi0.into()]);
    }
    let mut s = Summary::new(ctx.xi_c);
    s.xi1 = xi.to_vec();
    s.c7 = lam;
    s.verdict = Some(if lam.is_some() { Verdict::Unstable } else { Verdict::Stable });
    s.residual("fitted_rate", fit.rate);
    s.residual("dt", dt);
    s.residual("horizon", horizon);
    if let Some(l) = lam {
        s.residual("lambda", l);
        s.residual("relative_rate_error", (fit.rate - l).abs() / l);
    }
    Ok(RunOutput {
        summary: s,
        tables: vec![t],
        checks: Vec::new(),
    })
}

struct Checks(Vec<Check>);

impl Checks {
    fn at_most(&mut self, property: &str, value: f64, threshold: f64) {
        let status = if value <= threshold { Status::Pass } else { Status::Fail };
        self.0.push(Check {
            property: property.to_owned(),
            value,
            threshold,
            status,
        });
    }

    fn log(&mut self, property: &str, value: f64) {
        self.0.push(Check {
            property: property.to_owned(),
            value,
            threshold: f64::NAN,
            status: Status::Logged,
        });
    }
}

/// Consecutive growing samples whose increment exceeds five times the
/// larger neighbouring increment.
fn continuity_violations(curve: &DispersionCurve) -> usize {
    let mut count = 0;
    let scale = 1e-9 * curve.lambda_max;
    for run in curve.samples.split(|s| s.lambda.is_none()) {
        let lam: Vec<f64> = run.iter().filter_map(|s| s.lambda).collect();
        let d: Vec<f64> = lam.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for k in 0..d.len() {
            let left = k.checked_sub(1).map_or(0.0, |j| d[j]);
            let right = d.get(k + 1).copied().unwrap_or(0.0);
            if (k > 0 || k + 1 < d.len()) && d[k] > 5.0 * left.max(right) + scale {
                count += 1;
            }
        }
    }
    count
}

fn random_frequencies<R: Rng>(rng: &mut R, radius: f64, count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|_| {
            let r = radius * rng.gen_range(0.05..0.95);
            let a = rng.gen_range(0.0..std::f64::consts::PI);
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

fn verify(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let spec = cfg.grid_spec();
    let fluid = ctx.fluid;
    let profile = &ctx.profile;
    let mut checks = Checks(Vec::new());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.numerics.seed);

    let p_int = profile.p_minus.pressure(profile.rho_interface_lower())?;
    checks.at_most("equilibrium_pressure_mismatch", profile.pressure_mismatch(), 1e-10 * p_int.max(1.0));

    let curve = scan_ray(fluid, profile, &spec, &cfg.ray_spec())?;
    let growing: Vec<_> = curve.samples.iter().filter(|s| s.lambda.is_some()).collect();
    let max_energy = growing.iter().map(|s| s.energy_residual).fold(0.0, f64::max);
    let max_iter = growing.iter().map(|s| s.iterations).max().unwrap_or(0);
    checks.at_most("energy_identity", max_energy, 1e-8);
    checks.at_most("bisection_iterations", max_iter as f64, 60.0);

    let bound = viscous_rate_bound(fluid, profile);
    let over = growing.iter().filter(|s| s.lambda.unwrap() > bound).count();
    checks.at_most("viscous_bound_violations", over as f64, 0.0);
    checks.at_most("continuity_violations", continuity_violations(&curve) as f64, 0.0);

    let refined = refine_peak(fluid, profile, &spec, &curve, cfg.scan.refine_iterations.max(1))?;
    let dense = curve.refinement.map_or(0.0, |r| r.dense_lambda);
    let lambda_max = refined.map_or(0.0, |b| b.1).max(curve.lambda_max).max(dense);
    checks.log("lambda_max", lambda_max);

    if let Some(x1) = curve.xi1 {
        let forms = crate::assembly::assemble_forms(profile, &ctx.grid, fluid, x1)?;
        let pencil = Pencil::new(&forms)?;
        let b1 = pencil.min_dissipation();
        let top = 2.0 * dissipation_rate_bound(fluid, x1, b1).max(lambda_max);
        let k = cfg.verify.alpha_grid;
        let alphas: Vec<(f64, f64)> = (1..=k)
            .map(|i| {
                let s = top * i as f64 / k as f64;
                (s, pencil.alpha_value(s))
            })
            .collect();
        let increases = alphas.windows(2).filter(|w| w[1].1 >= w[0].1).count();
        let cap = fluid.g * (x1[0].abs() + x1[1].abs());
        let excess = alphas
            .iter()
            .map(|&(s, a)| a - (cap - s * b1))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.at_most("alpha_monotonicity_violations", increases as f64, 0.0);
        checks.at_most("alpha_upper_bound_excess", excess, 1e-9);
    }

    if ctx.xi_c.is_finite() && lambda_max > 0.0 {
        let xc = ctx.xi_c;
        let low = ctx.lambda_at([cfg.scan.xi_min, 0.0])?.unwrap_or(0.0);
        let high = ctx.lambda_at([0.99 * xc, 0.0])?.unwrap_or(0.0);
        checks.at_most("endpoint_low_ratio", low / lambda_max, 0.1);
        checks.at_most("endpoint_high_ratio", high / lambda_max, 0.1);
        let supercritical = [1.0, 1.01, 1.5, 2.0]
            .par_iter()
            .map(|&f| ctx.lambda_at([f * xc, 0.0]))
            .collect::<Result<Vec<_>>>()?;
        let unstable = supercritical.iter().filter(|l| l.is_some()).count();
        checks.at_most("supercritical_unstable_count", unstable as f64, 0.0);
    }

    let radius = ctx.frequency_cap();
    let pairs = random_frequencies(&mut rng, radius, cfg.verify.symmetry_pairs);
    let sym = pairs
        .par_iter()
        .map(|&xi| {
            let a = ctx.lambda_at(xi)?;
            let b = ctx.lambda_at([-xi[0], -xi[1]])?;
            Ok(match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() / a.abs().max(b.abs()),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    checks.at_most("symmetry_relative_gap", sym.into_iter().fold(0.0, f64::max), 1e-9);

    let xis = random_frequencies(&mut rng, radius, cfg.verify.frequencies);
    let trials = random_trials(&ctx.grid, &xis, cfg.verify.trials_per_frequency, &mut rng);
    let gc = growth_inequality_check(profile, fluid, &ctx.grid, lambda_max, &trials)?;
    checks.at_most("growth_inequality_violation", gc.max_violation, 1e-9);
    checks.log("growth_inequality_violation_alt", gc.max_violation_alt);

    if let Some(x1) = curve.xi1 {
        let (forms, m) = mode_at(fluid, profile, &spec, x1)?;
        let m = m.ok_or_else(|| Error::Numerical("scan argmax is not unstable".into()))?;
        let lam = m.lambda;
        let fit = measure_growth(&forms, &EvolutionState::eigenmode(&m.v, lam), 1e-2 / lam, 1e4f64.ln() / lam)?;
        checks.at_most("evolution_rate_error", (fit.rate - lam).abs() / lam, 0.01);

        let mut thick = fluid.clone();
        thick.mu_plus *= 2.0;
        thick.mu_minus *= 2.0;
        let (_, out) = solve_at(&thick, profile, &ctx.grid, cfg.numerics.tol, x1)?;
        checks.log("viscosity_doubling_rate_ratio", out.lambda().unwrap_or(0.0) / lam);
    }

    let report = match cfg.periodic {
        Some(p) => classify_periodic(fluid, profile, p.l1, p.l2)?,
        None => classify_whole_plane(&curve),
    };

    let mut s = Summary::new(ctx.xi_c);
    s.set_curve(&curve, &report, cfg)?;
    for c in &checks.0 {
        s.residual(&c.property, c.value);
    }
    let mut t = Table::new("verify.csv", &["property", "value", "threshold", "status"]);
    for c in &checks.0 {
        t.push(vec![
            c.property.as_str().into(),
            c.value.into(),
            c.threshold.into(),
            c.status.label().into(),
        ]);
    }
    Ok(RunOutput {
        summary: s,
        tables: vec![t, curve_table(&curve)],
        checks: checks.0,
    })
}

/// Runs one command on a validated configuration, without touching disk.
pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let ctx = Ctx::new(cfg)?;
    match cmd {
        Command::Equilibrium => equilibrium(&ctx),
        Command::Dispersion => dispersion(&ctx),
        Command::Mode => mode(&ctx),
        Command::Cutoff => cutoff(&ctx),
        Command::Evolve => evolve(&ctx),
        Command::Verify => verify(&ctx),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

/// Writes the config echo, the summary, and every table into `dir`.
pub fn write_outputs(out: &RunOutput, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        write_file(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    emit("config.effective.json", cfg.canonical_json().as_bytes())?;
    if cfg.outputs.wants(Format::Json) {
        let mut js = serde_json::to_string_pretty(&out.summary)
            .map_err(|e| Error::Io(format!("summary serialization failed: {e}")))?;
        js.push('\n');
        emit("summary.json", js.as_bytes())?;
    }
    if cfg.outputs.wants(Format::Csv) {
        for t in &out.tables {
            emit(t.file, &t.render()?)?;
        }
    }
    Ok(written)
}

fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::field(THREADS_ENV, format!("not a thread count: {v:?}")))?;
        if n == 0 {
            return Err(Error::field(THREADS_ENV, "must be >= 1"));
        }
        return Ok(Some(n));
    }
    if flag == Some(0) {
        return Err(Error::field("--threads", "must be >= 1"));
    }
    Ok(flag.or(config))
}

fn execute(cli: &Cli) -> Result<RunOutput> {
    let cfg = load_config(&cli.config)?;
    let threads = resolve_threads(cli.threads, cfg.numerics.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    let out = pool.install(|| run_command(cli.command, &cfg))?;
    let dir = cli.out.clone().unwrap_or_else(|| cfg.outputs.directory.clone());
    write_outputs(&out, &cfg, &dir)?;
    Ok(out)
}

/// Runs a parsed command line, reporting to stdout/stderr.
pub fn run(cli: &Cli) -> ExitStatus {
    match execute(cli) {
        Ok(out) => {
            for c in &out.checks {
                println!("{} {} value={:e} threshold={:e}", c.status.label(), c.property, c.value, c.threshold);
            }
            if out.passed() {
                ExitStatus::Success
            } else {
                eprintln!("rt-spectra {}: verification failed", cli.command.name());
                ExitStatus::VerificationFailure
            }
        }
        Err(e) => {
            eprintln!("rt-spectra {}: {e}", cli.command.name());
            ExitStatus::from(&e)
        }
    }
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli).code(),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
