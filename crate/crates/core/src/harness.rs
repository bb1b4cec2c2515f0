//! Manufactured solutions, error norms, EOC tables and convergence studies.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use crate::fem::FeContext;
use crate::forward::{ModelParams, Sampling, SolverSettings, SpaceTimeData, SpaceTimeSolver};
use crate::mesh::SpaceKind;
use crate::optimizer::{ControlData, ControlProblem, OptimizerConfig};
use crate::par::sum_indexed;
use crate::quadrature::{QuadratureRule, TriangleRule};
use crate::time::{SpaceTimeField, TimeFunction, TimeGrid};
use crate::{Error, Result};

/// The linear test case on (0,1)² × (0,1) with
/// φ = sin(πx)sin(πy)eᵗ and d = β/(β+δ)·sin(πx)sin(πy)(eᵗ − e^{−(β/δ)t}).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub params: ModelParams,
}

impl Default for ManufacturedCase {
    fn default() -> Self {
        ManufacturedCase {
            params: ModelParams::default(),
        }
    }
}

fn bump(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

impl ManufacturedCase {
    pub fn phi(&self, t: f64, x: f64, y: f64) -> f64 {
        bump(x, y) * t.exp()
    }

    pub fn d(&self, t: f64, x: f64, y: f64) -> f64 {
        let ModelParams { beta, delta, .. } = self.params;
        beta / (beta + delta) * bump(x, y) * (t.exp() - (-beta / delta * t).exp())
    }

    pub fn l(&self, t: f64, x: f64, y: f64) -> f64 {
        let ModelParams { alpha, beta, .. } = self.params;
        bump(x, y) * t.exp() * (beta + 2.0 * alpha * PI * PI) - beta * self.d(t, x, y)
    }

    pub fn exact_phi(&self) -> TimeFunction {
        let c = *self;
        TimeFunction::new(move |t, x, y| c.phi(t, x, y))
    }

    pub fn exact_d(&self) -> TimeFunction {
        let c = *self;
        TimeFunction::new(move |t, x, y| c.d(t, x, y))
    }

    pub fn source_l(&self) -> TimeFunction {
        let c = *self;
        TimeFunction::new(move |t, x, y| c.l(t, x, y))
    }

    /// ∂t d + (β/δ)(d − φ), with ∂t d analytic.
    pub fn ode_residual(&self, t: f64, x: f64, y: f64) -> f64 {
        let ModelParams { beta, delta, .. } = self.params;
        let r = beta / delta;
        let dt = beta / (beta + delta) * bump(x, y) * (t.exp() + r * (-r * t).exp());
        dt + r * (self.d(t, x, y) - self.phi(t, x, y))
    }

    /// −αΔφ + βφ − βd − l, with Δφ = −2π²φ.
    pub fn elliptic_residual(&self, t: f64, x: f64, y: f64) -> f64 {
        let ModelParams { alpha, beta, .. } = self.params;
        let phi = self.phi(t, x, y);
        2.0 * alpha * PI * PI * phi + beta * phi - beta * self.d(t, x, y) - self.l(t, x, y)
    }

    /// Tracking problem whose optimum is l̄ = l with zero adjoint.
    pub fn control_data(&self) -> ControlData {
        ControlData {
            alpha_l: 1.0,
            desired_phi: SpaceTimeData::Function(self.exact_phi()),
            desired_d: SpaceTimeData::Function(self.exact_d()),
            control_shift: Some(SpaceTimeData::Function(self.source_l())),
            d0: TimeFunction::zero(),
        }
    }
}

fn nodal_of(ctx: &FeContext, field: &SpaceTimeField, m: usize) -> Vec<f64> {
    match field.kind {
        SpaceKind::FreeP1 => field.on(m).to_vec(),
        SpaceKind::DirichletP1 => ctx.embed(field.on(m)),
    }
}

/// ‖u_h − u‖ over Ω for a nodal P1 function, by the given triangle rule.
pub fn space_l2_error_with<F>(ctx: &FeContext, nodal: &[f64], rule: &TriangleRule, exact: F) -> f64
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    let mesh = ctx.mesh();
    sum_indexed(mesh.triangle_count(), |t| {
        let tri = mesh.triangles()[t];
        let v = mesh.vertices(t);
        let area = mesh.signed_area(t).abs();
        let mut acc = 0.0;
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let x = lam[0] * v[0][0] + lam[1] * v[1][0] + lam[2] * v[2][0];
            let y = lam[0] * v[0][1] + lam[1] * v[1][1] + lam[2] * v[2][1];
            let uh = lam[0] * nodal[tri[0]] + lam[1] * nodal[tri[1]] + lam[2] * nodal[tri[2]];
            let e = uh - exact(x, y);
            acc += w * e * e;
        }
        area * acc
    })
    .max(0.0)
    .sqrt()
}

pub fn space_l2_error<F>(ctx: &FeContext, nodal: &[f64], exact: F) -> f64
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    space_l2_error_with(ctx, nodal, ctx.rule(), exact)
}

/// ‖u_τh − u‖_{L²(I×Ω)} by Gauss quadrature in time and the triangle rule in space.
pub fn spacetime_l2_error(
    ctx: &FeContext,
    field: &SpaceTimeField,
    exact: &TimeFunction,
    rule: &QuadratureRule,
) -> f64 {
    let mut total = 0.0;
    for m in 1..=field.intervals() {
        let nodal = nodal_of(ctx, field, m);
        let (a, b) = field.grid.interval(m);
        for (s, w) in rule.time.points.iter().zip(&rule.time.weights) {
            let t = a + s * (b - a);
            let e = space_l2_error_with(ctx, &nodal, &rule.space, |x, y| exact.eval(t, x, y));
            total += (b - a) * w * e * e;
        }
    }
    total.sqrt()
}

/// √(Σ_m τ_m ‖I_h u(t_m) − u_m‖²) with the P1 mass matrix.
pub fn endpoint_l2_error(ctx: &FeContext, field: &SpaceTimeField, exact: &TimeFunction) -> f64 {
    let mut total = 0.0;
    for m in 1..=field.intervals() {
        let t = field.grid.interval(m).1;
        let mut diff = ctx.interpolate(SpaceKind::FreeP1, |x, y| exact.eval(t, x, y));
        let uh = nodal_of(ctx, field, m);
        diff.iter_mut().zip(&uh).for_each(|(d, u)| *d -= u);
        total += field.grid.tau(m) * ctx.mass_x.bilinear(&diff, &diff);
    }
    total.max(0.0).sqrt()
}

/// Error in the norm that matches the solver's sampling scheme.
pub fn measure_error(
    solver: &SpaceTimeSolver,
    field: &SpaceTimeField,
    exact: &TimeFunction,
) -> f64 {
    match solver.settings().sampling {
        Sampling::IntervalAverage => {
            spacetime_l2_error(solver.context(), field, exact, &QuadratureRule::default())
        }
        Sampling::EndpointNodal => endpoint_l2_error(solver.context(), field, exact),
    }
}

/// EOC_i = ln(e_{i−1}/e_i) / ln(r_{i−1}/r_i).
pub fn eoc(errors: &[f64], resolutions: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != resolutions.len() {
        return Err(Error::DimensionMismatch {
            expected: errors.len(),
            found: resolutions.len(),
        });
    }
    if errors.len() < 2 {
        return Err(Error::InvalidArgument(
            "EOC needs at least two entries".into(),
        ));
    }
    for (i, &v) in errors.iter().chain(resolutions).enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositive {
                index: i % errors.len(),
                value: v,
            });
        }
    }
    Ok((1..errors.len())
        .map(|i| (errors[i - 1] / errors[i]).ln() / (resolutions[i - 1] / resolutions[i]).ln())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyMode {
    TimeRefine,
    SpaceRefine,
    OcpTimeRefine,
    OcpSpaceRefine,
}

impl StudyMode {
    pub fn label(&self) -> &'static str {
        match self {
            StudyMode::TimeRefine => "time",
            StudyMode::SpaceRefine => "space",
            StudyMode::OcpTimeRefine => "ocp-time",
            StudyMode::OcpSpaceRefine => "ocp-space",
        }
    }

    pub fn refines_time(&self) -> bool {
        matches!(self, StudyMode::TimeRefine | StudyMode::OcpTimeRefine)
    }

    pub fn is_ocp(&self) -> bool {
        matches!(self, StudyMode::OcpTimeRefine | StudyMode::OcpSpaceRefine)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub mode: StudyMode,
    /// n for time refinement, M for space refinement.
    pub fixed: usize,
    pub sweep: Vec<usize>,
    pub case: ManufacturedCase,
    pub settings: SolverSettings,
    pub optimizer: OptimizerConfig,
}

impl StudyPlan {
    pub fn new(mode: StudyMode, fixed: usize, sweep: Vec<usize>) -> Self {
        StudyPlan {
            mode,
            fixed,
            sweep,
            case: ManufacturedCase::default(),
            settings: SolverSettings::default(),
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed == 0 {
            return Err(Error::InvalidArgument(
                "fixed resolution must be positive".into(),
            ));
        }
        if self.sweep.is_empty()
            || self.sweep[0] == 0
            || self.sweep.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument(
                "sweep must be a nonempty, strictly increasing list of positive values".into(),
            ));
        }
        self.case.params.validate()
    }

    /// (n, M) of each cell.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.sweep
            .iter()
            .map(|&s| {
                if self.mode.refines_time() {
                    (self.fixed, s)
                } else {
                    (s, self.fixed)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyRow {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub h_over_sqrt2: f64,
    pub err_phi: Option<f64>,
    pub eoc_phi: Option<f64>,
    pub err_d: Option<f64>,
    pub eoc_d: Option<f64>,
    pub err_l: Option<f64>,
    pub eoc_l: Option<f64>,
    pub r_vd: Option<f64>,
    pub initial_gradient_norm: Option<f64>,
    pub cg_iters: Option<usize>,
    pub objective: Option<f64>,
    pub seconds: f64,
    /// Smallest per-step stability slack of the (optimal) state.
    pub min_stability_slack: Option<f64>,
    /// Largest observed contraction ratio minus its bound; None without fixed-point steps.
    pub contraction_excess: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub mode: StudyMode,
    pub rows: Vec<StudyRow>,
}

fn run_cell(plan: &StudyPlan, n: usize, m: usize) -> Result<StudyRow> {
    let start = Instant::now();
    let case = plan.case;
    let ctx = Arc::new(FeContext::new(n)?);
    let grid = TimeGrid::uniform(case.params.final_time, m)?;
    let solver = Arc::new(SpaceTimeSolver::new(
        ctx,
        case.params,
        grid.clone(),
        plan.settings.clone(),
    )?);
    let mut row = StudyRow {
        n,
        m,
        tau: grid.max_tau(),
        h_over_sqrt2: 1.0 / n as f64,
        ..StudyRow::default()
    };
    let excess = |recs: &[crate::forward::ContractionRecord]| {
        recs.iter()
            .map(|r| r.max_ratio - r.bound)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            })
    };
    if plan.mode.is_ocp() {
        let problem = ControlProblem::new(Arc::clone(&solver), case.control_data())?;
        let sol = problem.solve(&plan.optimizer)?;
        row.err_phi = Some(measure_error(&solver, &sol.state.phi, &case.exact_phi()));
        row.err_d = Some(measure_error(&solver, &sol.state.d, &case.exact_d()));
        row.err_l = Some(measure_error(&solver, &sol.control, &case.source_l()));
        row.r_vd = Some(sol.history.r_vd);
        row.initial_gradient_norm = Some(sol.history.initial_gradient_norm);
        row.cg_iters = Some(sol.history.iterations);
        row.objective = sol.history.objective.last().copied();
        row.min_stability_slack = Some(sol.history.min_stability_slack);
        let mut recs = sol.state.contraction.clone();
        recs.extend(sol.adjoint.contraction.iter().cloned());
        row.contraction_excess = match (excess(&recs), solver.settings().mode) {
            (_, crate::forward::StepMode::Monolithic) => None,
            (local, _) => Some(
                local
                    .unwrap_or(f64::NEG_INFINITY)
                    .max(sol.history.contraction_excess),
            ),
        };
    } else {
        let sol = solver.solve_state(
            &SpaceTimeData::Function(case.source_l()),
            &TimeFunction::zero(),
            &SpaceTimeData::Zero,
        )?;
        row.err_phi = Some(measure_error(&solver, &sol.phi, &case.exact_phi()));
        row.err_d = Some(measure_error(&solver, &sol.d, &case.exact_d()));
        row.min_stability_slack = Some(solver.stability_report(&sol)?.min_slack());
        row.contraction_excess = excess(&sol.contraction);
    }
    row.seconds = start.elapsed().as_secs_f64();
    Ok(row)
}

/// Runs every cell of the plan (cells in parallel) and fills in EOC columns.
/// A failing cell is recorded in its row and does not abort the sweep.
pub fn run_study(plan: &StudyPlan) -> Result<StudyReport> {
    plan.validate()?;
    let cells = plan.cells();
    let mut rows: Vec<StudyRow> = crate::par::map_collect(cells.len(), |i| {
        let (n, m) = cells[i];
        run_cell(plan, n, m).unwrap_or_else(|e| StudyRow {
            n,
            m,
            tau: plan.case.params.final_time / m as f64,
            h_over_sqrt2: 1.0 / n as f64,
            failure: Some(e.to_string()),
            ..StudyRow::default()
        })
    });
    let resolution = |r: &StudyRow| {
        if plan.mode.refines_time() {
            r.tau
        } else {
            r.h_over_sqrt2
        }
    };
    for i in 1..rows.len() {
        let (prev, cur) = (rows[i - 1].clone(), &mut rows[i]);
        let res = [resolution(&prev), resolution(cur)];
        let rate = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => eoc(&[a, b], &res).ok().map(|v| v[0]),
            _ => None,
        };
        cur.eoc_phi = rate(prev.err_phi, cur.err_phi);
        cur.eoc_d = rate(prev.err_d, cur.err_d);
        cur.eoc_l = rate(prev.err_l, cur.err_l);
    }
    Ok(StudyReport {
        mode: plan.mode,
        rows,
    })
}

/// Six significant digits, fixed notation where readable.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        format!("{:.*}", (5 - exp).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

pub const CSV_HEADER: &str =
    "mode,n,M,tau,h_over_sqrt2,err_phi,eoc_phi,err_d,eoc_d,err_l,eoc_l,r_vd,cg_iters,seconds";

/// CSV text of the report. Wall-clock seconds are written only when requested,
/// so that repeated runs produce identical files.
pub fn report_csv(report: &StudyReport, timings: bool) -> String {
    rows_csv(report.mode.label(), &report.rows, timings)
}

/// CSV text for rows under an arbitrary `mode` label.
pub fn rows_csv(mode: &str, rows: &[StudyRow], timings: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_sig6).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            mode,
            r.n,
            r.m,
            format_sig6(r.tau),
            format_sig6(r.h_over_sqrt2),
            opt(r.err_phi),
            opt(r.eoc_phi),
            opt(r.err_d),
            opt(r.eoc_d),
            opt(r.err_l),
            opt(r.eoc_l),
            opt(r.r_vd),
            r.cg_iters.map(|v| v.to_string()).unwrap_or_default(),
            if timings {
                format_sig6(r.seconds)
            } else {
                String::new()
            },
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisConfig {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
}

impl Default for AxisConfig {
    fn default() -> Self {
        AxisConfig {
            title: String::new(),
            x_label: "resolution".into(),
            y_label: "error".into(),
            width: 640.0,
            height: 480.0,
        }
    }
}

/// Maps data coordinates to pixels on log-log axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFrame {
    pub log_x: (f64, f64),
    pub log_y: (f64, f64),
    pub width: f64,
    pub height: f64,
    pub margin: f64,
}

impl LogLogFrame {
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x.log10() - self.log_x.0) / (self.log_x.1 - self.log_x.0);
        let fy = (y.log10() - self.log_y.0) / (self.log_y.1 - self.log_y.0);
        (
            self.margin + fx * (self.width - 2.0 * self.margin),
            self.height - self.margin - fy * (self.height - 2.0 * self.margin),
        )
    }

    pub fn from_pixel(&self, px: f64, py: f64) -> (f64, f64) {
        let fx = (px - self.margin) / (self.width - 2.0 * self.margin);
        let fy = (self.height - self.margin - py) / (self.height - 2.0 * self.margin);
        (
            10f64.powf(self.log_x.0 + fx * (self.log_x.1 - self.log_x.0)),
            10f64.powf(self.log_y.0 + fy * (self.log_y.1 - self.log_y.0)),
        )
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Frame enclosing every point of every series.
pub fn loglog_frame(series: &[Series], axis: &AxisConfig) -> Result<LogLogFrame> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(Error::NonPositive {
                index: i,
                value: if x > 0.0 { y } else { x },
            });
        }
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LogLogFrame {
        log_x: padded(min(&lx), max(&lx)),
        log_y: padded(min(&ly), max(&ly)),
        width: axis.width,
        height: axis.height,
        margin: 60.0,
    })
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Standalone SVG with one polyline per series and slope-1 / slope-2 guides.
pub fn emit_svg_loglog(series: &[Series], axis: &AxisConfig) -> Result<String> {
    if series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    let frame = loglog_frame(series, axis)?;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = axis.width,
        h = axis.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0) = frame.to_pixel(10f64.powf(frame.log_x.0), 10f64.powf(frame.log_y.0));
    let (x1, y1) = frame.to_pixel(10f64.powf(frame.log_x.1), 10f64.powf(frame.log_y.1));
    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x0,
        y1,
        x1 - x0,
        y0 - y1
    );
    // decade ticks
    for k in frame.log_x.0.ceil() as i32..=frame.log_x.1.floor() as i32 {
        let (px, _) = frame.to_pixel(10f64.powi(k), 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" font-size="12" text-anchor="middle">1e{k}</text>"#,
            y0 + 20.0
        );
    }
    for k in frame.log_y.0.ceil() as i32..=frame.log_y.1.floor() as i32 {
        let (_, py) = frame.to_pixel(1.0, 10f64.powi(k));
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">1e{k}</text>"#,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
        axis.width / 2.0,
        axis.height - 15.0,
        escape(&axis.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
        axis.height / 2.0,
        axis.height / 2.0,
        escape(&axis.y_label)
    );
    if !axis.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="30" font-size="16" text-anchor="middle">{}</text>"#,
            axis.width / 2.0,
            escape(&axis.title)
        );
    }
    // reference slopes through the first point of the first series
    let (ax, ay) = series[0].points[0];
    let xs = (10f64.powf(frame.log_x.0), 10f64.powf(frame.log_x.1));
    for (slope, dash) in [(1.0, "6,4"), (2.0, "2,3")] {
        let ya = ay * (xs.0 / ax).powf(slope);
        let yb = ay * (xs.1 / ax).powf(slope);
        let (pa, pb) = (frame.to_pixel(xs.0, ya), frame.to_pixel(xs.1, yb));
        let _ = writeln!(
            svg,
            r#"<line class="guide" data-slope="{slope}" x1="{:.4}" y1="{:.4}" x2="{:.4}" y2="{:.4}" stroke="gray" stroke-dasharray="{dash}"/>"#,
            pa.0, pa.1, pb.0, pb.1
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = frame.to_pixel(x, y);
                format!("{px:.4},{py:.4}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&s.label),
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{}</text>"#,
            axis.width - frame.margin - 120.0,
            frame.margin + 16.0 * (i as f64 + 1.0),
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Error series of a report against the refined parameter.
pub fn report_series(report: &StudyReport) -> Vec<Series> {
    let res = |r: &StudyRow| {
        if report.mode.refines_time() {
            r.tau
        } else {
            r.h_over_sqrt2
        }
    };
    let pick = |label: &str, f: fn(&StudyRow) -> Option<f64>| Series {
        label: label.into(),
        points: report
            .rows
            .iter()
            .filter_map(|r| f(r).map(|e| (res(r), e)))
            .collect(),
    };
    [
        pick("phi", |r| r.err_phi),
        pick("d", |r| r.err_d),
        pick("l", |r| r.err_l),
    ]
    .into_iter()
    .filter(|s| !s.points.is_empty())
    .collect()
}

pub fn report_svg(report: &StudyReport) -> Result<String> {
    let axis = AxisConfig {
        title: format!("{} refinement", report.mode.label()),
        x_label: if report.mode.refines_time() {
            "tau".into()
        } else {
            "h/sqrt(2)".into()
        },
        y_label: "L2(IxOmega) error".into(),
        ..AxisConfig::default()
    };
    emit_svg_loglog(&report_series(report), &axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn manufactured_residuals_vanish() {
        let case = ManufacturedCase::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (t, x, y) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            assert!(case.ode_residual(t, x, y).abs() < 1e-10);
            assert!(case.elliptic_residual(t, x, y).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_field_error_equals_exact_norm() {
        let ctx = FeContext::new(16).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let zero = SpaceTimeField::zeros(&grid, SpaceKind::FreeP1, ctx.x_dofs());
        let exact = TimeFunction::new(|t, x, y| bump(x, y) * t.exp());
        let e = spacetime_l2_error(&ctx, &zero, &exact, &QuadratureRule::default());
        // ‖exact‖² = ¼(e² − 1)/2 ≈ 0.7986
        let expect = 0.25 * (1f64.exp().powi(2) - 1.0) / 2.0;
        assert!((e * e - 0.7988).abs() < 1e-3);
        assert!((e * e - expect).abs() < 1e-6);
    }

    #[test]
    fn own_extension_has_zero_error() {
        let ctx = FeContext::new(4).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let coeffs: Vec<Vec<f64>> = (0..2)
            .map(|m| (0..25).map(|i| (i + m) as f64 * 0.1).collect())
            .collect();
        let field = SpaceTimeField::from_coeffs(&grid, SpaceKind::FreeP1, coeffs.clone()).unwrap();
        let lookup = Arc::new((ctx.clone(), coeffs));
        let f = {
            let lookup = Arc::clone(&lookup);
            TimeFunction::new(move |t, x, y| {
                let m = if t <= 0.5 { 0 } else { 1 };
                lookup.0.evaluate_nodal(&lookup.1[m], x, y).unwrap()
            })
        };
        assert!(spacetime_l2_error(&ctx, &field, &f, &QuadratureRule::default()) < 1e-12);
        assert!(endpoint_l2_error(&ctx, &field, &f) < 1e-12);
    }

    #[test]
    fn quadrature_orders_agree() {
        let case = ManufacturedCase::default();
        let exact = case.exact_phi();
        let gauss = crate::quadrature::GaussRule::new;
        let fine_space = QuadratureRule {
            space: TriangleRule::collapsed(5),
            time: gauss(3),
        };
        let fine_both = QuadratureRule {
            space: TriangleRule::collapsed(5),
            time: gauss(5),
        };
        for (n, m) in [(8, 4), (32, 8), (64, 8)] {
            let ctx = FeContext::new(n).unwrap();
            let grid = TimeGrid::uniform(1.0, m).unwrap();
            let zero = SpaceTimeField::zeros(&grid, SpaceKind::FreeP1, ctx.x_dofs());
            let a = spacetime_l2_error(&ctx, &zero, &exact, &QuadratureRule::default());
            let b = spacetime_l2_error(&ctx, &zero, &exact, &fine_both);
            assert!((a - b).abs() <= 1e-8 * b);
            if n >= 32 {
                let nodal: Vec<Vec<f64>> = (1..=m)
                    .map(|k| {
                        ctx.interpolate(SpaceKind::FreeP1, |x, y| {
                            case.phi(k as f64 / m as f64, x, y)
                        })
                    })
                    .collect();
                let field = SpaceTimeField::from_coeffs(&grid, SpaceKind::FreeP1, nodal).unwrap();
                let a = spacetime_l2_error(&ctx, &field, &exact, &QuadratureRule::default());
                let b = spacetime_l2_error(&ctx, &field, &exact, &fine_space);
                assert!((a - b).abs() <= 1e-8 * b, "{a} {b}");
            }
        }
    }

    #[test]
    fn eoc_examples() {
        let r = eoc(&[0.033285, 0.010362], &[0.125, 0.03125]).unwrap();
        assert!((r[0] - 0.84).abs() < 0.005);
        let r = eoc(&[1.0, 0.25], &[0.1, 0.05]).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-12);
        // tabulated rate comes from unrounded errors
        let r = eoc(&[0.032623, 0.008523], &[0.125, 0.0625]).unwrap();
        assert!((r[0] - 1.93).abs() < 0.01);
        assert!(eoc(&[1.0], &[1.0]).is_err());
        assert!(eoc(&[1.0, 0.0], &[1.0, 0.5]).is_err());
        assert!(eoc(&[1.0, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_sig6(0.0332852), "0.0332852");
        assert_eq!(format_sig6(0.125), "0.125000");
        assert_eq!(format_sig6(1.0), "1.00000");
        assert_eq!(format_sig6(123456.0), "123456");
        assert_eq!(format_sig6(1.5e-9), "1.50000e-9");
        assert_eq!(format_sig6(0.0), "0");
    }

    #[test]
    fn single_cell_study() {
        let mut plan = StudyPlan::new(StudyMode::TimeRefine, 4, vec![2]);
        plan.settings.sampling = Sampling::EndpointNodal;
        let report = run_study(&plan).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].eoc_phi.is_none());
        let csv = report_csv(&report, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("time,4,2,0.500000,0.250000,"));
        assert!(lines[1].ends_with(",,,,,,"));
    }

    #[test]
    fn plan_validation() {
        assert!(StudyPlan::new(StudyMode::SpaceRefine, 8, vec![])
            .validate()
            .is_err());
        assert!(StudyPlan::new(StudyMode::SpaceRefine, 8, vec![8, 4])
            .validate()
            .is_err());
        assert!(StudyPlan::new(StudyMode::SpaceRefine, 0, vec![4])
            .validate()
            .is_err());
        assert_eq!(
            StudyPlan::new(StudyMode::SpaceRefine, 8, vec![2, 4]).cells(),
            vec![(2, 8), (4, 8)]
        );
    }

    #[test]
    fn failing_cell_is_recorded() {
        let mut plan = StudyPlan::new(StudyMode::TimeRefine, 8, vec![1, 2]);
        plan.settings.pcg = crate::linalg::SolverConfig {
            rel_tol: 1e-300,
            abs_tol: 1e-300,
            max_iter: Some(1),
            preconditioner: crate::linalg::PreconditionerKind::None,
        };
        let report = run_study(&plan).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report
            .rows
            .iter()
            .all(|r| r.failure.is_some() && r.err_phi.is_none()));
    }

    fn polyline(svg: &str) -> Vec<(f64, f64)> {
        let start = svg.find("<polyline").unwrap();
        let rest = &svg[start..];
        let p = rest.find("points=\"").unwrap() + 8;
        let end = rest[p..].find('"').unwrap();
        rest[p..p + end]
            .split_whitespace()
            .map(|pair| {
                let mut it = pair.split(',').map(|v| v.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect()
    }

    #[test]
    fn svg_slope_geometry() {
        let series = vec![Series {
            label: "e".into(),
            points: vec![(1.0, 1.0), (0.5, 0.25)],
        }];
        let axis = AxisConfig::default();
        let svg = emit_svg_loglog(&series, &axis).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("data-slope=\"1\"") && svg.contains("data-slope=\"2\""));
        let frame = loglog_frame(&series, &axis).unwrap();
        let pts: Vec<(f64, f64)> = polyline(&svg)
            .into_iter()
            .map(|(x, y)| frame.from_pixel(x, y))
            .collect();
        let slope = (pts[1].1 / pts[0].1).ln() / (pts[1].0 / pts[0].0).ln();
        assert!((slope - 2.0).abs() < 1e-4);
    }

    #[test]
    fn svg_rejects_bad_data() {
        let axis = AxisConfig::default();
        assert!(emit_svg_loglog(&[], &axis).is_err());
        assert!(emit_svg_loglog(
            &[Series {
                label: "e".into(),
                points: vec![]
            }],
            &axis
        )
        .is_err());
        assert!(emit_svg_loglog(
            &[Series {
                label: "e".into(),
                points: vec![(1.0, 0.0)]
            }],
            &axis
        )
        .is_err());
    }
}
