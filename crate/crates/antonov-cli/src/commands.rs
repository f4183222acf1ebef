//! Subcommand implementations.

use std::fs;
use std::sync::Arc;

use antonov::acceptance::{self, AcceptanceConfig};
use antonov::action_angle::{period, ActionAngleChart, ChartOptions};
use antonov::band_structure::BandStructure;
use antonov::dynamics::{self, InitialData, XGrid};
use antonov::operators::{AntonovOperator, EigenClass, EigenReport, GridOptions, ModeGrid, ScanOptions};
use antonov::scattering::{free_collapse_defect, ResidualReport, ScatterOptions, Scattering};
use antonov::steady_state::{
    solve_for_mass, solve_steady_state, AnsatzProfile, DepthRange, SolveOptions, SteadyState,
};
use serde::Serialize;

use crate::artifacts::{steady_cache_path, RunDir};
use crate::config::{Profile, RunConfig};
use crate::error::CliError;

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

fn report_hit(dir: &std::path::Path) {
    println!("cache hit: {}", dir.display());
}

/// Loads the steady state from the cache or solves and caches it; the flag reports a cache hit.
pub fn load_state(cfg: &RunConfig) -> Result<(Arc<SteadyState>, bool), CliError> {
    cfg.validate()?;
    let path = steady_cache_path(cfg);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(st) = SteadyState::from_json(&text) {
            return Ok((Arc::new(st), true));
        }
    }
    let opts = SolveOptions {
        tol: cfg.tol,
        ..Default::default()
    };
    let st = match (cfg.profile, cfg.target_mass) {
        (Profile::Harmonic { omega }, _) => SteadyState::harmonic(omega, 0.0, cfg.depth)?,
        (p, mass) => {
            let ansatz = match p {
                Profile::Polytrope { k } => AnsatzProfile::polytrope(k)?,
                _ => AnsatzProfile::king(),
            };
            match mass {
                Some(m) => solve_for_mass(ansatz, m, opts, DepthRange::default())?,
                None => solve_steady_state(ansatz, cfg.depth, opts)?,
            }
        }
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, st.to_json())?;
    Ok((Arc::new(st), false))
}

fn build_operator(
    cfg: &RunConfig,
    state: Arc<SteadyState>,
) -> Result<(AntonovOperator, EigenReport), CliError> {
    let bands = Arc::new(BandStructure::build(state, cfg.lmax)?);
    let opts = GridOptions {
        lmax: cfg.lmax,
        n_energy: cfg.n_energy,
        delta_rel: cfg.delta_rel,
        ..Default::default()
    };
    let op = AntonovOperator::new(Arc::new(ModeGrid::new(bands, opts)?), 1.0)?;
    let eig = op.eigen()?;
    Ok((op, eig))
}

fn scatter_options(cfg: &RunConfig, n_beta: usize) -> ScatterOptions {
    ScatterOptions {
        n_beta,
        r_excl_spacings: cfg.r_excl_spacings,
        r_embedded_rel: cfg.r_embedded_rel,
        amplification_max: cfg.amplification_max,
        ..Default::default()
    }
}

#[derive(Serialize)]
struct SteadySummary<'a> {
    profile: &'a Profile,
    depth: f64,
    m0: f64,
    r0: f64,
    e0: f64,
    emin: f64,
    tol: f64,
    curvature_at_center: f64,
    period_at_emin: f64,
    period_at_e0: f64,
}

pub fn steady(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    cfg.validate()?;
    let Some(mut run) = RunDir::open(cfg, "steady", force)? else {
        report_hit(&cfg.output_dir.join("steady"));
        return Ok(());
    };
    let (st, _) = load_state(cfg)?;
    let summary = SteadySummary {
        profile: &cfg.profile,
        depth: st.depth,
        m0: st.m0,
        r0: st.r0,
        e0: st.e0,
        emin: st.emin,
        tol: st.tol,
        curvature_at_center: st.curvature_at_center(),
        period_at_emin: antonov::action_angle::period_limit(&st),
        period_at_e0: period(&st, st.e0)?,
    };
    run.write_json("steady.json", &summary)?;
    let chart = ActionAngleChart::uniform(st.clone(), cfg.chart_points, ChartOptions::default())?;
    run.write_csv(
        "chart.csv",
        &[
            ("energy", "particle energy E"),
            ("x_plus", "turning point x+(E)"),
            ("period", "period T(E)"),
            ("period_derivative", "dT/dE"),
        ],
        chart.table().into_iter().map(|r| r.iter().map(|v| num(*v)).collect()),
    )?;
    let n = 201;
    let xs: Vec<f64> = (0..n)
        .map(|i| -1.25 * st.r0 + 2.5 * st.r0 * i as f64 / (n - 1) as f64)
        .collect();
    run.write_csv(
        "profile.csv",
        &[
            ("x", "position"),
            ("u0", "potential U0(x)"),
            ("du0", "field U0'(x)"),
            ("rho0", "density rho0(x)"),
        ],
        xs.iter()
            .map(|&x| vec![num(x), num(st.u0(x)), num(st.du0(x)), num(st.rho0(x))]),
    )?;
    let dir = run.finish(cfg)?;
    println!(
        "steady state: M0 = {:.10}, R0 = {:.10}, E0 = {:.10}, Emin = {:.10}",
        st.m0, st.r0, st.e0, st.emin
    );
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SegmentOut {
    lo: f64,
    hi: f64,
    modes: Vec<usize>,
    gap: bool,
}

#[derive(Serialize)]
struct NoGap {
    holds: bool,
    period_at_emin: f64,
    period_at_e0: f64,
}

#[derive(Serialize)]
struct BandsReport {
    segments: Vec<SegmentOut>,
    gaps: Vec<(f64, f64)>,
    degenerate_modes: Vec<usize>,
    overlapping: bool,
    no_gap_condition: NoGap,
}

pub fn bands(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    cfg.validate()?;
    let Some(mut run) = RunDir::open(cfg, "bands", force)? else {
        report_hit(&cfg.output_dir.join("bands"));
        return Ok(());
    };
    let (st, _) = load_state(cfg)?;
    let b = BandStructure::build(st, cfg.lmax)?;
    let degenerate = |m: &antonov::band_structure::ModeBand| {
        m.beta_max - m.beta_min <= 1e-10 * m.beta_max
    };
    run.write_csv(
        "bands.csv",
        &[
            ("l", "mode index"),
            ("beta_min", "lower band edge (4 pi l / T(E0))^2"),
            ("beta_max", "upper band edge (4 pi l / T(Emin))^2"),
            ("width", "beta_max - beta_min"),
            ("degenerate", "1 when the band is a single point"),
        ],
        b.modes.iter().map(|m| {
            vec![
                m.l.to_string(),
                num(m.beta_min),
                num(m.beta_max),
                num(m.beta_max - m.beta_min),
                u8::from(degenerate(m)).to_string(),
            ]
        }),
    )?;
    let report = BandsReport {
        segments: b
            .segments
            .iter()
            .map(|s| SegmentOut {
                lo: s.lo,
                hi: s.hi,
                modes: s.modes.clone(),
                gap: s.is_gap(),
            })
            .collect(),
        gaps: b.segments.iter().filter(|s| s.is_gap()).map(|s| (s.lo, s.hi)).collect(),
        degenerate_modes: b.modes.iter().filter(|m| degenerate(m)).map(|m| m.l).collect(),
        overlapping: b.segments.iter().any(|s| s.modes.len() > 1),
        no_gap_condition: NoGap {
            holds: b.no_gap_condition(),
            period_at_emin: b.t_min,
            period_at_e0: b.t_max,
        },
    };
    run.write_json("segments.json", &report)?;
    let dir = run.finish(cfg)?;
    println!(
        "no-gap condition T(E0) > 2 T(Emin): {} (T(Emin) = {:.10}, T(E0) = {:.10})",
        report.no_gap_condition.holds, b.t_min, b.t_max
    );
    if !report.degenerate_modes.is_empty() {
        println!("degenerate point bands: {:?}", report.degenerate_modes);
    }
    println!("{} segments, {} gaps", report.segments.len(), report.gaps.len());
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct ModesReport {
    summary: antonov::operators::EigenSummary,
    b_symmetry_defect: f64,
    b_norm: f64,
    scan_points: usize,
}

pub fn modes(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    cfg.validate()?;
    let Some(mut run) = RunDir::open(cfg, "modes", force)? else {
        report_hit(&cfg.output_dir.join("modes"));
        return Ok(());
    };
    let (st, _) = load_state(cfg)?;
    let (op, eig) = build_operator(cfg, st)?;
    let lo = cfg.scan.gamma_min.unwrap_or(f64::NEG_INFINITY);
    let hi = cfg.scan.gamma_max.unwrap_or(f64::INFINITY);
    let gammas: Vec<f64> = op
        .gamma_grid(cfg.scan.points, cfg.edge_margin_rel)
        .into_iter()
        .filter(|g| (lo..=hi).contains(g))
        .collect();
    let scan = op.scan_embedded(
        &gammas,
        ScanOptions {
            threshold: cfg.scan.threshold,
            refine: cfg.scan.refine,
        },
    )?;
    let (sym, b_norm) = op.b_symmetry_defect()?;
    let report = ModesReport {
        summary: op.eigen_summary(&eig, Some(&scan)),
        b_symmetry_defect: sym,
        b_norm,
        scan_points: gammas.len(),
    };
    run.write_json("eigen.json", &report)?;
    let class = |c: EigenClass| match c {
        EigenClass::Discrete => "discrete",
        EigenClass::Unresolved => "unresolved",
        EigenClass::Essential => "essential",
    };
    run.write_csv(
        "eigenvalues.csv",
        &[
            ("index", "position in ascending order"),
            ("eigenvalue", "eigenvalue lambda of the discretized operator"),
            ("frequency", "sqrt(lambda)"),
            ("class", "discrete, unresolved (edge margin) or essential"),
        ],
        eig.values.iter().zip(&eig.classes).enumerate().map(|(i, (v, c))| {
            vec![i.to_string(), num(*v), num(v.sqrt()), class(*c).to_string()]
        }),
    )?;
    run.write_csv(
        "scan.csv",
        &[
            ("gamma", "spectral parameter on the band union"),
            ("dist_plus", "distance of spec((B R0)+(gamma)) to 1"),
            ("dist_minus", "distance of spec((B R0)-(gamma)) to 1"),
        ],
        scan.points
            .iter()
            .map(|p| vec![num(p.gamma), num(p.dist_plus), num(p.dist_minus)]),
    )?;
    let dir = run.finish(cfg)?;
    let s = &report.summary;
    println!(
        "dimension {}, rank(B) {}, min eigenvalue {:.10}, discrete {:?}",
        s.dimension, s.rank_b, s.min_eigenvalue, s.discrete
    );
    println!(
        "embedded candidates: + {:?}, - {:?} ({} gamma points)",
        s.embedded_candidates_plus,
        s.embedded_candidates_minus,
        gammas.len()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct ScatterReport {
    free_collapse: f64,
    residuals: ResidualReport,
    refinement: Option<ResidualReport>,
    /// Per headline residual: whether it decreased under refinement.
    decreasing: Option<[bool; 4]>,
}

pub fn scatter(cfg: &RunConfig, refine: bool, force: bool) -> Result<(), CliError> {
    cfg.validate()?;
    let command = if refine { "scatter-refine" } else { "scatter" };
    let Some(mut run) = RunDir::open(cfg, command, force)? else {
        report_hit(&cfg.output_dir.join(command));
        return Ok(());
    };
    let (st, _) = load_state(cfg)?;
    let (op, eig) = build_operator(cfg, st)?;
    let opts = scatter_options(cfg, cfg.n_beta);
    let free_collapse = free_collapse_defect(op.grid.clone(), opts)?;
    let residuals = Scattering::build(&op, &eig, &[], opts)?.residuals(&op, &eig);
    let refinement = if refine {
        let fine = RunConfig {
            n_energy: 2 * cfg.n_energy,
            ..cfg.clone()
        };
        let (st, _) = load_state(&fine)?;
        let (op2, eig2) = build_operator(&fine, st)?;
        let opts2 = scatter_options(cfg, 2 * cfg.n_beta);
        Some(Scattering::build(&op2, &eig2, &[], opts2)?.residuals(&op2, &eig2))
    } else {
        None
    };
    let decreasing = refinement.as_ref().map(|r| {
        let (a, b) = (residuals.headline(), r.headline());
        std::array::from_fn(|i| b[i] < a[i])
    });
    let report = ScatterReport {
        free_collapse,
        residuals,
        refinement,
        decreasing,
    };
    run.write_json("residuals.json", &report)?;
    let dir = run.finish(cfg)?;
    println!("free collapse {:.3e}", report.free_collapse);
    let names = ["partial isometry", "diagonalization", "intertwining", "sqrt-invariance"];
    let a = report.residuals.headline();
    for (i, name) in names.iter().enumerate() {
        match &report.refinement {
            Some(r) => println!("{name:>18}: {:.3e} -> {:.3e}", a[i], r.headline()[i]),
            None => println!("{name:>18}: {:.3e}", a[i]),
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvolveMetrics {
    initial: InitialData,
    projected: bool,
    eigenvalue: Option<f64>,
    expected_frequency: Option<f64>,
    fft_peak: Option<f64>,
    fft_bin: Option<f64>,
    free_flow_initial: Option<f64>,
    free_flow_late_mean: Option<f64>,
    boundary_defect: f64,
    energy_drift: f64,
    damping: dynamics::DampingReport,
}

pub fn evolve(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    cfg.validate()?;
    let Some(mut run) = RunDir::open(cfg, "evolve", force)? else {
        report_hit(&cfg.output_dir.join("evolve"));
        return Ok(());
    };
    let (st, _) = load_state(cfg)?;
    let (op, eig) = build_operator(cfg, st.clone())?;
    let xg = XGrid::new(&op.grid, cfg.evolve.nx)?;
    let guard = dynamics::recurrence_guard(&op, &eig);
    let horizon = cfg.evolve.horizon.unwrap_or(0.5 * guard);
    if !horizon.is_finite() {
        return Err(CliError::Domain("set an explicit evolution horizon".into()));
    }
    let times = dynamics::time_grid(horizon, cfg.evolve.n_time);
    let initial = cfg.evolve.initial;
    let raw = dynamics::initial_data(&op, &eig, initial)?;
    let spectral = matches!(
        initial,
        InitialData::Eigenvector { .. } | InitialData::QuasiMode { .. }
    );
    let project = cfg.evolve.project_ac && !spectral;
    let (f0, free_flow) = if project {
        let sc = Scattering::build(&op, &eig, &[], scatter_options(cfg, cfg.n_beta))?;
        let f0 = dynamics::project_ac(&sc.ac, &raw)?;
        let d = dynamics::free_flow_comparison(&op, &eig, &sc.waves.plus, &f0, &times)?;
        (f0, Some(d))
    } else {
        (raw, None)
    };
    let res = dynamics::evolve(&op, &eig, &xg, &f0, &times, spectral)?;
    let damping = dynamics::damping_report(&res, st.r0, guard);
    let cesaro = dynamics::cesaro(&res.times, &res.force_dt_norm);
    let eigen_index = match initial {
        InitialData::Eigenvector { index } => Some(index),
        InitialData::QuasiMode { .. } => (0..eig.values.len()).max_by(|&a, &b| {
            let proj = |k: usize| (0..f0.len()).map(|i| f0[i] * eig.vectors[(i, k)]).sum::<f64>().abs();
            proj(a).total_cmp(&proj(b))
        }),
        _ => None,
    };
    let fft = dynamics::dominant_frequency(&res);
    let late_mean = free_flow.as_ref().map(|d| {
        let late: Vec<f64> = times
            .iter()
            .zip(d)
            .filter(|(t, _)| **t >= 0.8 * horizon)
            .map(|(_, v)| *v)
            .collect();
        late.iter().sum::<f64>() / late.len() as f64
    });
    let e0 = res.energy[0];
    let metrics = EvolveMetrics {
        initial,
        projected: project,
        eigenvalue: eigen_index.map(|k| eig.values[k]),
        expected_frequency: eigen_index.map(|k| eig.values[k].sqrt() / (2.0 * std::f64::consts::PI)),
        fft_peak: fft.map(|p| p.0),
        fft_bin: fft.map(|p| p.1),
        free_flow_initial: free_flow.as_ref().map(|d| d[0]),
        free_flow_late_mean: late_mean,
        boundary_defect: res.boundary_defect,
        energy_drift: res
            .energy
            .iter()
            .map(|e| (e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max),
        damping,
    };
    run.write_json("metrics.json", &metrics)?;
    run.write_csv(
        "damping.csv",
        &[
            ("t", "time"),
            ("force_norm", "L2 norm of the induced force F(t)"),
            ("force_dt_norm", "L2 norm of dF/dt"),
            ("potential_sup", "sup norm of the induced potential U(t)"),
            ("energy", "conserved energy of the wave equation"),
            ("cesaro_force_dt", "running time average of force_dt_norm"),
            ("free_flow_distance", "distance to the free-flow asymptote (empty when not computed)"),
        ],
        (0..times.len()).map(|i| {
            vec![
                num(res.times[i]),
                num(res.force_norm[i]),
                num(res.force_dt_norm[i]),
                num(res.potential_sup[i]),
                num(res.energy[i]),
                num(cesaro[i]),
                free_flow.as_ref().map(|d| num(d[i])).unwrap_or_default(),
            ]
        }),
    )?;
    let dir = run.finish(cfg)?;
    let d = &metrics.damping;
    println!(
        "horizon {:.3} (guard {:.3}), late-window ratio {:.4}, Cesaro monotone {}",
        d.horizon, d.recurrence_guard, d.late_window_ratio, d.cesaro_monotone
    );
    if let (Some(p), Some(w), Some(b)) = (metrics.fft_peak, metrics.expected_frequency, metrics.fft_bin) {
        println!("FFT peak {p:.6} vs sqrt(lambda)/(2 pi) = {w:.6} (bin {b:.6})");
    }
    if let (Some(a), Some(b)) = (metrics.free_flow_initial, metrics.free_flow_late_mean) {
        println!("free-flow distance {a:.4e} at t = 0, late-window mean {b:.4e}");
    }
    if let Some(w) = &d.warning {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn accept(cfg: &RunConfig, only: &[u8]) -> Result<(), CliError> {
    cfg.validate()?;
    let acfg = AcceptanceConfig {
        lmax: cfg.lmax,
        n_energy: cfg.n_energy,
        n_beta: cfg.n_beta,
        scan_points: cfg.scan.points,
        n_time: cfg.evolve.n_time,
    };
    let mut results = Vec::new();
    for r in acceptance::run(acfg, only) {
        println!("{}", r.line());
        results.push(r);
    }
    let mut run = RunDir::open(cfg, "accept", true)?.expect("forced run directory");
    run.write_json("acceptance.json", &results)?;
    run.write_csv(
        "acceptance.csv",
        &[
            ("id", "criterion number"),
            ("name", "criterion name"),
            ("passed", "1 when the criterion holds within its runtime limit"),
            ("seconds", "wall-clock runtime"),
            ("detail", "measured values"),
        ],
        results.iter().map(|r| {
            vec![
                r.id.to_string(),
                r.name.clone(),
                u8::from(r.passed).to_string(),
                format!("{:.3}", r.seconds),
                r.detail.clone(),
            ]
        }),
    )?;
    run.finish(cfg)?;
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(format!("acceptance criteria failed: {failed:?}")))
    }
}
