//! Command execution and CSV serialization.
//!
//! Every file starts with `# manifest_sha256 = <hash>`, where the hash covers
//! the canonical config (minus the output directory) and the code version.
//! Tables are rewritten after every finished point, so an interrupted or
//! failed run leaves the points measured so far plus an `# incomplete` line.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use latticemc_core::dynamics::StepControl;
use latticemc_core::observables::{locate_peak, BunchingResult, ObservableError, SweepRow};
use latticemc_core::geometry::predict_sr;
use latticemc_core::DerivedGeometry;
use sha2::{Digest, Sha256};

use crate::config::{Command, RunSpec};
use crate::pipeline::{self, PeakSummary, Point, RunError};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Hash that ties every output file to the spec that produced it.
pub fn manifest_hash(spec: &RunSpec) -> String {
    let mut hasher = Sha256::new();
    for line in spec.canonical().lines().filter(|l| !l.starts_with("out ")) {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    hasher.update(format!("code_version = {CODE_VERSION}\n").as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A CSV file under construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: String,
    pub rows: Vec<String>,
    pub notes: Vec<String>,
    pub incomplete: Option<String>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&str]) -> Self {
        Self { name, header: columns.join(","), rows: Vec::new(), notes: Vec::new(), incomplete: None }
    }

    pub fn sweep() -> Self {
        Self::new("sweep.csv", &SweepRow::COLUMNS)
    }

    pub fn push(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    }

    pub fn render(&self, hash: &str) -> String {
        let mut text = format!("# manifest_sha256 = {hash}\n");
        for note in &self.notes {
            text += &format!("# warning: {note}\n");
        }
        text += &self.header;
        text.push('\n');
        for row in &self.rows {
            text += row;
            text.push('\n');
        }
        if let Some(reason) = &self.incomplete {
            text += &format!("# incomplete: {reason}\n");
        }
        text
    }
}

/// Serializes tables into the output directory.
pub struct Writer {
    dir: PathBuf,
    hash: String,
}

impl Writer {
    pub fn create(spec: &RunSpec) -> Result<Self, RunError> {
        fs::create_dir_all(&spec.out).map_err(|e| io_error(&spec.out, e))?;
        Ok(Self { dir: spec.out.clone(), hash: manifest_hash(spec) })
    }

    pub fn write(&self, table: &Table) -> Result<(), RunError> {
        let path = self.dir.join(table.name);
        fs::write(&path, table.render(&self.hash)).map_err(|e| io_error(&path, e))
    }

    fn write_manifest(&self, spec: &RunSpec, wall: Option<f64>, status: &str) -> Result<(), RunError> {
        let mut text = format!("# manifest_sha256 = {}\n", self.hash);
        text += &format!("# code_version = {CODE_VERSION}\n");
        text += "# trajectory seeds = splitmix64(seed ^ splitmix64(atom_index))\n";
        text += &spec.canonical();
        text += &format!("# status = {status}\n");
        if let Some(w) = wall {
            text += &format!("# wall_time_s = {w:.3}\n");
        }
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Runs `spec` on a pool of `threads` workers (all cores when `None`) and
/// writes its tables. Returns the final state of every table.
pub fn execute(spec: &RunSpec, threads: Option<usize>) -> Result<Vec<Table>, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| RunError::Io(format!("thread pool: {e}")))?;
    let writer = Writer::create(spec)?;
    writer.write_manifest(spec, None, "running")?;
    let start = Instant::now();
    let mut tables = Vec::new();
    let outcome = pool.install(|| run_command(spec, &writer, &mut tables));
    let status = match &outcome {
        Ok(()) => "complete".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    if let Err(e) = &outcome {
        for table in &mut tables {
            table.incomplete.get_or_insert_with(|| e.to_string());
            writer.write(table)?;
        }
    }
    writer.write_manifest(spec, Some(start.elapsed().as_secs_f64()), &status)?;
    outcome.map(|_| tables)
}

/// Index of a table in `tables`, creating it on first use.
fn slot(tables: &mut Vec<Table>, table: Table) -> usize {
    tables.iter().position(|t| t.name == table.name).unwrap_or_else(|| {
        tables.push(table);
        tables.len() - 1
    })
}

fn record_point(tables: &mut [Table], i: usize, point: &Point) {
    tables[i].push(&point.row.values());
    let gamma0 = point.row.gamma0;
    let delta = point.row.delta;
    tables[i]
        .notes
        .extend(point.warnings.iter().map(|w| format!("gamma0={gamma0} delta={delta}: {w}")));
}

fn run_command(spec: &RunSpec, writer: &Writer, tables: &mut Vec<Table>) -> Result<(), RunError> {
    match spec.command {
        Command::Geometry => geometry(spec, writer, tables),
        Command::Single => single(spec, writer, tables).map(|_| ()),
        Command::Bunching => {
            let point = single(spec, writer, tables)?;
            let bunching = point.bunching.ok_or(ObservableError::ProbeOff)?;
            let h = slot(tables, histogram_table(&bunching, spec));
            writer.write(&tables[h])
        }
        Command::SweepGamma => {
            let rows = gamma_sweep(spec, spec.delta0, &spec.gamma0_grid.clone(), writer, tables)?;
            let s = slot(tables, summary_table());
            let summary = pipeline::gamma_peak(spec, spec.delta0, &rows);
            finish_summary(tables, s, writer, summary)
        }
        Command::SweepDelta => delta_sweep(spec, writer, tables),
        Command::Spectrum => spectrum(spec, writer, tables),
        Command::SrScaling => scaling(spec, writer, tables),
    }
}

fn geometry(spec: &RunSpec, writer: &Writer, tables: &mut Vec<Table>) -> Result<(), RunError> {
    let lattice = spec.lattice();
    let g = DerivedGeometry::new(&lattice);
    let dt = StepControl::choose(&lattice, &g).map_err(|e| RunError::Ensemble(e.into()))?.dt;
    let columns = [
        "delta0", "gamma0", "theta_deg", "probe_ratio", "delta", "omega_x", "k_x", "k_z", "period_x", "period_z",
        "lambda_mod", "v_mod", "mode_velocity_x", "predict_sr", "dt",
    ];
    let mut table = Table::new("geometry.csv", &columns);
    table.push(&[
        lattice.light_shift,
        lattice.pump_rate,
        spec.theta_deg,
        lattice.probe_ratio,
        lattice.probe_detuning,
        g.omega_x,
        g.k_x,
        g.k_z,
        g.period_x(),
        g.period_z(),
        g.lambda_mod,
        g.v_mod,
        g.mode_velocity_x(),
        g.sr_prediction,
        dt,
    ]);
    let i = slot(tables, table);
    writer.write(&tables[i])
}

fn single(spec: &RunSpec, writer: &Writer, tables: &mut Vec<Table>) -> Result<Point, RunError> {
    let i = slot(tables, Table::sweep());
    let point = pipeline::measure_with_reference(spec, &spec.lattice())?;
    record_point(tables, i, &point);
    writer.write(&tables[i])?;
    Ok(point)
}

fn histogram_table(b: &BunchingResult, spec: &RunSpec) -> Table {
    let g = DerivedGeometry::new(&spec.lattice());
    let mut table = Table::new("histogram.csv", &["bin", "u", "counts", "density", "model"]);
    let bins = b.counts.len();
    for (k, &c) in b.counts.iter().enumerate() {
        let u = g.lambda_mod * (k as f64 + 0.5) / bins as f64;
        table.push(&[k as f64, u, c as f64, c as f64 / b.mean_level, b.model(k)]);
    }
    table
}

fn gamma_sweep(
    spec: &RunSpec,
    delta0: f64,
    grid: &[f64],
    writer: &Writer,
    tables: &mut Vec<Table>,
) -> Result<Vec<SweepRow>, RunError> {
    let i = slot(tables, Table::sweep());
    let mut write_error = None;
    let points = pipeline::sweep_gamma(spec, delta0, grid, |p| {
        record_point(tables, i, p);
        if let Err(e) = writer.write(&tables[i]) {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    Ok(points.into_iter().map(|p| p.row).collect())
}

fn summary_table() -> Table {
    Table::new(
        "summary.csv",
        &["observable", "delta0", "gamma0_sr", "gamma0_sr_err", "predict_sr", "vertex_in_window"],
    )
}

fn summary_values(s: &PeakSummary) -> Vec<String> {
    vec![
        s.observable.name().to_string(),
        s.delta0.to_string(),
        s.peak.position.value.to_string(),
        s.peak.position.error.to_string(),
        s.prediction.to_string(),
        s.peak.vertex_in_window.to_string(),
    ]
}

fn finish_summary(
    tables: &mut [Table],
    s: usize,
    writer: &Writer,
    summary: Result<PeakSummary, RunError>,
) -> Result<(), RunError> {
    match summary {
        Ok(summary) => {
            tables[s].rows.push(summary_values(&summary).join(","));
            writer.write(&tables[s])
        }
        Err(e) => {
            tables[s].incomplete = Some(e.to_string());
            writer.write(&tables[s])?;
            Err(e)
        }
    }
}

fn delta_sweep(spec: &RunSpec, writer: &Writer, tables: &mut Vec<Table>) -> Result<(), RunError> {
    let i = slot(tables, Table::sweep());
    let mut write_error = None;
    let points = pipeline::sweep_delta(spec, |p| {
        record_point(tables, i, p);
        if let Err(e) = writer.write(&tables[i]) {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let omega_x = spec.omega_x();
    let rows: Vec<SweepRow> = points.into_iter().map(|p| p.row).collect();
    let s = slot(tables, Table::new("summary.csv", &["observable", "delta_peak", "delta_peak_err", "omega_x", "ratio"]));
    let curve = pipeline::curve(&rows, spec.peak_observable, |r| r.delta);
    match locate_peak(&curve) {
        Ok(peak) => {
            let p = peak.position;
            tables[s].rows.push(format!(
                "{},{},{},{},{}",
                spec.peak_observable.name(),
                p.value,
                p.error,
                omega_x,
                p.value / omega_x
            ));
            writer.write(&tables[s])
        }
        Err(e) => {
            tables[s].incomplete = Some(e.to_string());
            writer.write(&tables[s])?;
            Err(e.into())
        }
    }
}

const FIT_COLUMNS: [&str; 21] = [
    "gamma0", "a_e", "a_e_err", "b_e", "b_e_err", "a_r", "a_r_err", "omega_r", "omega_r_err", "sigma_r",
    "sigma_r_err", "a_b", "a_b_err", "omega_b", "omega_b_err", "sigma_b", "sigma_b_err", "residual_norm",
    "iterations", "converged", "degenerate_lines",
];

fn spectrum(spec: &RunSpec, writer: &Writer, tables: &mut Vec<Table>) -> Result<(), RunError> {
    let points_t = slot(tables, Table::new("spectrum.csv", &["gamma0", "delta", "s", "s_err"]));
    let fit_t = slot(tables, Table::new("fit.csv", &FIT_COLUMNS));
    let sweep_t = slot(tables, Table::sweep());
    let grid = if spec.spectrum_gamma0_grid.is_empty() { vec![spec.gamma0] } else { spec.spectrum_gamma0_grid.clone() };
    let mut rows = Vec::new();
    for &gamma0 in &grid {
        let sp = pipeline::spectrum(spec, gamma0)?;
        for &(d, s, e) in &sp.points {
            tables[points_t].push(&[gamma0, d, s, e]);
        }
        writer.write(&tables[points_t])?;
        let fit = sp.fit.map_err(RunError::from)?;
        let (p, e) = (fit.params, fit.errors);
        tables[fit_t].push(&[
            gamma0,
            p.a_e,
            e.a_e,
            p.b_e,
            e.b_e,
            p.a_r,
            e.a_r,
            p.omega_r,
            e.omega_r,
            p.sigma_r,
            e.sigma_r,
            p.a_b,
            e.a_b,
            p.omega_b,
            e.omega_b,
            p.sigma_b,
            e.sigma_b,
            fit.residual_norm,
            fit.iterations as f64,
            f64::from(u8::from(fit.converged)),
            f64::from(u8::from(fit.degenerate_lines)),
        ]);
        if !fit.converged {
            tables[fit_t].notes.push(format!("gamma0={gamma0}: fit did not converge"));
        }
        if fit.degenerate_lines {
            tables[fit_t].notes.push(format!("gamma0={gamma0}: Raman and Brillouin lines overlap"));
        }
        writer.write(&tables[fit_t])?;
        let row = SweepRow {
            gamma0,
            delta0: spec.delta0,
            delta: p.omega_b,
            probe_ratio: spec.probe_ratio,
            d_x: f64::NAN,
            d_x_err: f64::NAN,
            d_z: f64::NAN,
            d_z_err: f64::NAN,
            xi: f64::NAN,
            xi_err: f64::NAN,
            a: f64::NAN,
            a_err: f64::NAN,
            phi: f64::NAN,
            phi_err: f64::NAN,
            a_b: p.a_b.abs(),
            a_b_err: e.a_b,
            e_k: f64::NAN,
            e_k_err: f64::NAN,
        };
        tables[sweep_t].push(&row.values());
        writer.write(&tables[sweep_t])?;
        rows.push(row);
    }
    if rows.len() >= 5 {
        let s = slot(tables, summary_table());
        let curve: Vec<_> = rows.iter().map(|r| (r.gamma0, r.a_b, r.a_b_err)).collect();
        let prediction = predict_sr(&spec.lattice());
        let summary = locate_peak(&curve).map_err(RunError::from).map(|peak| PeakSummary {
            observable: crate::config::PeakObservable::A,
            delta0: spec.delta0,
            peak,
            prediction,
        });
        match summary {
            Ok(summary) => {
                let mut values = summary_values(&summary);
                values[0] = "a_b".to_string();
                tables[s].rows.push(values.join(","));
                writer.write(&tables[s])?;
            }
            Err(e) => {
                tables[s].incomplete = Some(e.to_string());
                writer.write(&tables[s])?;
                return Err(e);
            }
        }
    }
    Ok(())
}

fn scaling(spec: &RunSpec, writer: &Writer, tables: &mut Vec<Table>) -> Result<(), RunError> {
    let scaling_t = slot(
        tables,
        Table::new("scaling.csv", &["delta0", "sqrt_abs_delta0", "gamma0_sr", "gamma0_sr_err", "predict_sr"]),
    );
    let mut peaks = Vec::new();
    for &delta0 in &spec.delta0_grid {
        let grid = pipeline::scaling_grid(spec, delta0);
        let rows = gamma_sweep(spec, delta0, &grid, writer, tables)?;
        let root = delta0.abs().sqrt();
        let summary = pipeline::gamma_peak(spec, delta0, &rows);
        match &summary {
            Ok(s) => tables[scaling_t].push(&[delta0, root, s.peak.position.value, s.peak.position.error, s.prediction]),
            Err(e) => tables[scaling_t].notes.push(format!("delta0={delta0}: {e}")),
        }
        writer.write(&tables[scaling_t])?;
        let summary = summary.map_err(|e| match e {
            RunError::Observable(o) => Ok(o),
            other => Err(other),
        });
        match summary {
            Ok(s) => peaks.push((delta0, root, Ok(s))),
            Err(Ok(o)) => peaks.push((delta0, root, Err(o))),
            Err(Err(other)) => return Err(other),
        }
    }
    let result = pipeline::scaling_from_peaks(spec, peaks);
    let s = slot(tables, Table::new("summary.csv", &["slope", "slope_err", "predicted_slope", "correlation", "depths"]));
    let located = result.peaks.iter().filter(|p| p.2.is_ok()).count();
    match result.slope {
        Some(slope) => {
            tables[s].push(&[slope.value, slope.error, result.predicted_slope, result.correlation, located as f64]);
            writer.write(&tables[s])?;
            if located < result.peaks.len() {
                return Err(ObservableError::NoInteriorMaximum.into());
            }
            Ok(())
        }
        None => {
            tables[s].incomplete = Some("too few located resonances for a slope".into());
            writer.write(&tables[s])?;
            Err(ObservableError::TooFewPoints { needed: 2, got: located }.into())
        }
    }
}
