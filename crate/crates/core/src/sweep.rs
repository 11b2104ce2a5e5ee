//! Parameter-plane scans with resumable output, audits of the region changes
//! against closed-form phase boundaries, and time-horizon convergence tables.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chern::{self, ChernOptions};
use crate::dynamics::{self, DynamicsConfig, InitialState, TextureKind, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::model::{Family, ModelSpec, Momentum};
use crate::spectral::{eigensystem, mod_pi_diff, Axis, Plane};
use crate::winding::{self, Field, Rational, Source, Status};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub param: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn value(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Invariant {
    #[serde(rename = "dwn-1d")]
    Dwn1d,
    #[serde(rename = "wtotal")]
    Wtotal,
    #[serde(rename = "chern-dwn")]
    ChernDwn,
    #[serde(rename = "chern-oracle")]
    ChernOracle,
}

impl Invariant {
    fn dimension(self) -> usize {
        match self {
            Invariant::Dwn1d | Invariant::Wtotal => 1,
            Invariant::ChernDwn | Invariant::ChernOracle => 2,
        }
    }
}

/// Per-cell compute settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub source: Source,
    pub field: Field,
    /// Loop samples before refinement.
    pub samples: usize,
    pub quadrature: usize,
    pub axis: Axis,
    pub coarse: usize,
    pub radius: f64,
    pub oracle_grid: usize,
    /// Global seed for the per-cell initial states of the dynamic source.
    pub seed: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            source: Source::Analytic,
            field: Field::Auto,
            samples: winding::DEFAULT_SAMPLES,
            quadrature: winding::DEFAULT_QUADRATURE,
            axis: Axis::Y,
            coarse: chern::DEFAULT_COARSE,
            radius: chern::DEFAULT_RADIUS,
            oracle_grid: chern::DEFAULT_ORACLE_GRID,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub family: String,
    /// Full parameter vector; the two swept entries are overwritten per cell.
    pub params: Vec<f64>,
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
    pub invariant: Invariant,
    #[serde(default)]
    pub budget: Budget,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<(Family, usize, usize)> {
        let family = Family::from_name(&self.family)?;
        if self.params.len() != family.param_names().len() {
            return Err(Error::InvalidPlan(format!(
                "family `{}` takes {} parameters, plan gives {}",
                self.family,
                family.param_names().len(),
                self.params.len()
            )));
        }
        if family.dimension() != self.invariant.dimension() {
            return Err(Error::InvalidPlan(format!(
                "invariant needs a {}D family, `{}` is {}D",
                self.invariant.dimension(),
                self.family,
                family.dimension()
            )));
        }
        let mut idx = [0; 2];
        for (n, a) in [&self.axis1, &self.axis2].into_iter().enumerate() {
            if a.count < 2 {
                return Err(Error::InvalidPlan(format!("axis `{}` needs count >= 2", a.param)));
            }
            if !a.min.is_finite() || !a.max.is_finite() || a.min == a.max {
                return Err(Error::InvalidPlan(format!("axis `{}` has an empty or infinite range", a.param)));
            }
            idx[n] = family
                .param_index(&a.param)
                .map_err(|_| Error::InvalidPlan(format!("unknown parameter `{}` for `{}`", a.param, self.family)))?;
        }
        if idx[0] == idx[1] {
            return Err(Error::InvalidPlan("both axes sweep the same parameter".into()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidPlan("fixed parameters must be finite".into()));
        }
        Ok((family, idx[0], idx[1]))
    }

    pub fn cells(&self) -> usize {
        self.axis1.count * self.axis2.count
    }

    /// Parameter vector of cell `(i, j)`.
    pub fn cell_params(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        let (_, a, b) = self.validate()?;
        let mut p = self.params.clone();
        p[a] = self.axis1.value(i);
        p[b] = self.axis2.value(j);
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub i: usize,
    pub j: usize,
    pub axis1: f64,
    pub axis2: f64,
    /// `None` for unresolved or invalid cells.
    pub value: Option<Rational>,
    pub status: Status,
    pub diagnostics: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub plan: SweepPlan,
    /// Row-major in `(i, j)`; only computed cells when incomplete.
    pub cells: Vec<Cell>,
}

impl SweepGrid {
    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.plan.cells()
    }

    pub fn at(&self, i: usize, j: usize) -> Option<&Cell> {
        let idx = i * self.plan.axis2.count + j;
        self.cells.get(idx).filter(|c| c.index == idx)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    pub workers: Option<usize>,
    /// CSV output; diagnostics go to the `.jsonl` file next to it.
    pub output: Option<PathBuf>,
    /// Stop after this many newly computed cells.
    pub limit: Option<usize>,
}

/// Seed of cell `index`: word 0 of ChaCha8 stream `index` keyed by `global`.
pub fn cell_seed(global: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn compute_cell(plan: &SweepPlan, family: Family, index: usize) -> Cell {
    let (i, j) = (index / plan.axis2.count, index % plan.axis2.count);
    let (a1, a2) = (plan.axis1.value(i), plan.axis2.value(j));
    let b = &plan.budget;
    let source = match b.source {
        Source::Analytic => Source::Analytic,
        Source::Dynamic(cfg) => Source::Dynamic(DynamicsConfig {
            init: InitialState::seeded(cell_seed(b.seed, index)),
            ..cfg
        }),
    };
    let outcome = || -> Result<(Option<Rational>, Status, Value)> {
        let params = plan.cell_params(i, j)?;
        let model = family.build(&params)?;
        let opts = ChernOptions {
            coarse: [b.coarse, b.coarse],
            radius: b.radius,
            loop_samples: b.samples,
        };
        Ok(match plan.invariant {
            Invariant::Dwn1d | Invariant::Wtotal => {
                let r = if plan.invariant == Invariant::Dwn1d {
                    winding::dwn(&model, Plane::YX, source, b.field, b.samples)?
                } else {
                    winding::w_total(&model, b.quadrature)?
                };
                let v = r.is_resolved().then_some(r.snapped);
                (v, r.status, serde_json::to_value(&r)?)
            }
            Invariant::ChernDwn | Invariant::ChernOracle => {
                let r = if plan.invariant == Invariant::ChernDwn {
                    chern::chern_dwn(&model, b.axis, source, &opts)
                } else {
                    chern::chern_lattice_oracle(&model, [b.oracle_grid, b.oracle_grid])
                };
                let v = r.is_resolved().then_some(Rational::integer(r.value));
                (v, r.status, serde_json::to_value(&r)?)
            }
        })
    };
    let (value, status, diagnostics) = match outcome() {
        Ok(o) => o,
        // quadrature and dimension errors mark the cell, never the sweep
        Err(e) => (None, Status::Invalid, serde_json::json!({ "error": e.to_string() })),
    };
    Cell {
        index,
        i,
        j,
        axis1: a1,
        axis2: a2,
        value,
        status,
        diagnostics,
    }
}

/// Path of the diagnostics sidecar for a CSV output.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("jsonl")
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    index: usize,
    i: usize,
    j: usize,
    axis1: f64,
    axis2: f64,
    value_num: Option<i64>,
    value_den: Option<i64>,
    status: Status,
}

impl Row {
    fn from_cell(c: &Cell) -> Self {
        Row {
            index: c.index,
            i: c.i,
            j: c.j,
            axis1: c.axis1,
            axis2: c.axis2,
            value_num: c.value.map(|v| v.num),
            value_den: c.value.map(|v| v.den),
            status: c.status,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SidecarEntry {
    index: usize,
    diagnostics: Value,
}

/// Reads complete records from an interrupted run; with `repair` a torn tail
/// is cut from both files.
fn load_existing(plan: &SweepPlan, csv_path: &Path, repair: bool) -> Result<BTreeMap<usize, Cell>> {
    let side = sidecar_path(csv_path);
    let mut diags: BTreeMap<usize, Value> = BTreeMap::new();
    let mut keep = 0u64;
    if let Ok(f) = File::open(&side) {
        let mut reader = BufReader::new(f);
        let mut line = String::new();
        let mut first = true;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                break;
            }
            if first {
                let stored: SweepPlan = serde_json::from_str(&line)
                    .map_err(|e| Error::InvalidPlan(format!("unreadable sidecar header: {e}")))?;
                if &stored != plan {
                    return Err(Error::InvalidPlan(format!(
                        "{} was written by a different plan",
                        csv_path.display()
                    )));
                }
                first = false;
            } else {
                match serde_json::from_str::<SidecarEntry>(&line) {
                    Ok(e) => {
                        diags.insert(e.index, e.diagnostics);
                    }
                    Err(_) => break,
                }
            }
            keep += n as u64;
        }
        if repair {
            OpenOptions::new().write(true).open(&side)?.set_len(keep)?;
        }
    } else {
        return Err(Error::InvalidPlan(format!(
            "{} exists without its sidecar {}",
            csv_path.display(),
            side.display()
        )));
    }
    let mut cells = BTreeMap::new();
    let mut reader = csv::Reader::from_path(csv_path)?;
    let mut good = reader.position().byte();
    let mut record = csv::StringRecord::new();
    let text = fs::read(csv_path)?;
    while let Ok(true) = reader.read_record(&mut record) {
        let end = reader.position().byte();
        let row: Row = match record.deserialize(Some(reader.headers()?)) {
            Ok(r) => r,
            Err(_) => break,
        };
        if text.get(end as usize - 1) != Some(&b'\n') {
            break;
        }
        let value = match (row.value_num, row.value_den) {
            (Some(n), Some(d)) => Some(Rational::new(n, d)),
            _ => None,
        };
        if row.index >= plan.cells() {
            return Err(Error::InvalidPlan(format!("row index {} outside the plan", row.index)));
        }
        cells.insert(
            row.index,
            Cell {
                index: row.index,
                i: row.i,
                j: row.j,
                axis1: row.axis1,
                axis2: row.axis2,
                value,
                status: row.status,
                diagnostics: diags.get(&row.index).cloned().unwrap_or(Value::Null),
            },
        );
        good = end;
    }
    if repair {
        if good == 0 {
            // torn header
            fs::remove_file(csv_path)?;
        } else {
            OpenOptions::new().write(true).open(csv_path)?.set_len(good)?;
        }
    }
    Ok(cells)
}

const HEADER: [&str; 8] = ["index", "i", "j", "axis1", "axis2", "value_num", "value_den", "status"];

/// Reads a sweep written by [`run_sweep`] without modifying it. The plan
/// comes from the first line of the sidecar.
pub fn load_grid(csv_path: &Path) -> Result<SweepGrid> {
    let side = sidecar_path(csv_path);
    let text = fs::read_to_string(&side)?;
    let first = text
        .lines()
        .next()
        .ok_or_else(|| Error::InvalidPlan(format!("{} is empty", side.display())))?;
    let plan: SweepPlan = serde_json::from_str(first)
        .map_err(|e| Error::InvalidPlan(format!("unreadable sidecar header: {e}")))?;
    plan.validate()?;
    let cells = load_existing(&plan, csv_path, false)?;
    Ok(SweepGrid {
        plan,
        cells: cells.into_values().collect(),
    })
}

/// The CSV form of a grid, header included.
pub fn write_csv<W: Write>(grid: &SweepGrid, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for c in &grid.cells {
        w.serialize(Row::from_cell(c))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell of `plan`, resuming from `opts.output` when it exists.
///
/// Cells are computed in parallel and handed to a single writer; per-cell
/// errors become sentinel cells.
pub fn run_sweep(plan: &SweepPlan, opts: &SweepOptions) -> Result<SweepGrid> {
    let (family, _, _) = plan.validate()?;
    let mut done = BTreeMap::new();
    if let Some(path) = &opts.output {
        if path.exists() {
            done = load_existing(plan, path, true)?;
        }
        if !path.exists() {
            let mut side = File::create(sidecar_path(path))?;
            writeln!(side, "{}", serde_json::to_string(plan)?)?;
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(HEADER)?;
            w.flush()?;
        }
    }
    let finished: HashSet<usize> = done.keys().copied().collect();
    let mut pending: Vec<usize> = (0..plan.cells()).filter(|n| !finished.contains(n)).collect();
    if let Some(limit) = opts.limit {
        pending.truncate(limit);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<Cell>();
    let fresh = std::thread::scope(|scope| -> Result<Vec<Cell>> {
        let writer = scope.spawn(|| -> Result<Vec<Cell>> {
            let mut out = Vec::new();
            let mut files = match &opts.output {
                Some(p) => Some((
                    OpenOptions::new().append(true).open(sidecar_path(p))?,
                    csv::WriterBuilder::new()
                        .has_headers(false)
                        .from_writer(OpenOptions::new().append(true).open(p)?),
                )),
                None => None,
            };
            for cell in rx {
                if let Some((side, csvw)) = files.as_mut() {
                    let entry = SidecarEntry {
                        index: cell.index,
                        diagnostics: cell.diagnostics.clone(),
                    };
                    writeln!(side, "{}", serde_json::to_string(&entry)?)?;
                    side.flush()?;
                    csvw.serialize(Row::from_cell(&cell))?;
                    csvw.flush()?;
                }
                out.push(cell);
            }
            Ok(out)
        });
        pool.install(|| {
            pending
                .par_iter()
                .for_each_with(tx, |tx, &idx| {
                    let _ = tx.send(compute_cell(plan, family, idx));
                })
        });
        writer.join().expect("sweep writer panicked")
    })?;
    for c in fresh {
        done.insert(c.index, c);
    }
    Ok(SweepGrid {
        plan: plan.clone(),
        cells: done.into_values().collect(),
    })
}

/// Closed-form phase boundaries, each an implicit curve `g(params) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundarySet {
    /// Band crossings of the 1D families: `J0 ± δ = ∓J1 − J2` and, for
    /// `|J2| > |J1|/2`, `J0 ± δ = J2`.
    Chain1d,
    /// `(|m_z| − J)² + δ² = J²` and `|m_z| = 2J`.
    Qah2dLine,
    /// `(|m_z| − J)² + δ² = J²` and the exceptional-point edge `m_z² + 2δ² = 4J²`.
    Qah2dExact,
}

impl BoundarySet {
    pub fn curves(self, family: Family, p: &[f64]) -> Result<Vec<f64>> {
        match (self, family) {
            (BoundarySet::Chain1d, Family::Chiral1d | Family::Nonchiral1d) => {
                let (j0, j1, j2, d) = (p[0], p[1], p[2], p[3]);
                let mut g = Vec::new();
                for s in [1.0, -1.0] {
                    for t in [1.0, -1.0] {
                        g.push(j0 + s * d + t * j1 + j2);
                    }
                    if j2.abs() > 0.5 * j1.abs() {
                        g.push(j0 + s * d - j2);
                    }
                }
                Ok(g)
            }
            (BoundarySet::Qah2dLine | BoundarySet::Qah2dExact, Family::Qah2d) => {
                let (j, m, d) = (p[0], p[1].abs(), p[2]);
                let circle = (m - j).powi(2) + d * d - j * j;
                let outer = if self == BoundarySet::Qah2dLine {
                    m - 2.0 * j
                } else {
                    m * m + 2.0 * d * d - 4.0 * j * j
                };
                Ok(vec![circle, outer])
            }
            _ => Err(Error::InvalidArgument(format!(
                "boundary set {self:?} does not apply to `{}`",
                family.name()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub a: [usize; 2],
    pub b: [usize; 2],
    pub values: [String; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub boundary: BoundarySet,
    /// Adjacent pairs whose values differ.
    pub changes: usize,
    pub violations: Vec<Violation>,
    /// Cell counts per value label.
    pub histogram: BTreeMap<String, usize>,
}

fn label(c: &Cell) -> String {
    match (c.status, c.value) {
        (Status::Resolved, Some(v)) => v.to_string(),
        (s, _) => format!("{s:?}").to_lowercase(),
    }
}

/// Checks that every change between adjacent cells lies within one cell of
/// a boundary curve: some curve changes sign over the two cells and their
/// neighbours.
pub fn boundary_audit(grid: &SweepGrid, boundary: BoundarySet) -> Result<AuditReport> {
    if !grid.is_complete() {
        return Err(Error::InvalidArgument("boundary audit needs a complete grid".into()));
    }
    let plan = &grid.plan;
    let (family, _, _) = plan.validate()?;
    let (n, m) = (plan.axis1.count, plan.axis2.count);
    let mut g = Vec::with_capacity(n * m);
    for c in &grid.cells {
        g.push(boundary.curves(family, &plan.cell_params(c.i, c.j)?)?);
    }
    let labels: Vec<String> = grid.cells.iter().map(label).collect();
    let mut histogram = BTreeMap::new();
    for l in &labels {
        *histogram.entry(l.clone()).or_insert(0) += 1;
    }
    let crosses = |a: [usize; 2], b: [usize; 2]| {
        let lo = [a[0].min(b[0]).saturating_sub(1), a[1].min(b[1]).saturating_sub(1)];
        let hi = [(a[0].max(b[0]) + 1).min(n - 1), (a[1].max(b[1]) + 1).min(m - 1)];
        (0..g[0].len()).any(|q| {
            let (mut neg, mut pos) = (false, false);
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    let v = g[i * m + j][q];
                    neg |= v <= 0.0;
                    pos |= v >= 0.0;
                }
            }
            neg && pos
        })
    };
    let mut changes = 0;
    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..m {
            for (di, dj) in [(1, 0), (0, 1)] {
                let (i2, j2) = (i + di, j + dj);
                if i2 >= n || j2 >= m {
                    continue;
                }
                let (la, lb) = (&labels[i * m + j], &labels[i2 * m + j2]);
                if la == lb {
                    continue;
                }
                changes += 1;
                if !crosses([i, j], [i2, j2]) {
                    violations.push(Violation {
                        a: [i, j],
                        b: [i2, j2],
                        values: [la.clone(), lb.clone()],
                    });
                }
            }
        }
    }
    Ok(AuditReport {
        boundary,
        changes,
        violations,
        histogram,
    })
}

/// Cell centers of an `n × n` grid over the 2D zone.
pub fn offset_grid(n: usize) -> Vec<Momentum> {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    (0..n * n)
        .map(|idx| {
            let (a, b) = (idx / n, idx % n);
            Momentum::k2(-std::f64::consts::PI + (a as f64 + 0.5) * h, -std::f64::consts::PI + (b as f64 + 0.5) * h)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub horizon: f64,
    pub max_diff: f64,
    pub mean_diff: f64,
    /// Momenta where either angle is undefined.
    pub skipped: usize,
}

/// `max |η − φ|` (mod π) between fixed-horizon LR averages and the
/// equilibrium angle, for each horizon in `ladder`.
pub fn convergence_study(
    model: &ModelSpec,
    ks: &[Momentum],
    ladder: &[f64],
    dt: f64,
    plane: Plane,
    init: &InitialState,
) -> Result<Vec<ConvergenceRow>> {
    ladder
        .iter()
        .map(|&horizon| {
            let diffs: Vec<Option<f64>> = ks
                .par_iter()
                .map(|k| -> Result<Option<f64>> {
                    let h = model.evaluate_h(k)?;
                    let eig = match eigensystem(&h) {
                        Ok(e) => e,
                        Err(_) => return Ok(None),
                    };
                    init.check_admissible(h.is_real(1e-14))?;
                    let phi = match dynamics::analytic_angle(&h, plane, TextureKind::LR) {
                        Ok(a) => a,
                        Err(_) => return Ok(None),
                    };
                    let rep = dynamics::time_average(&eig, init, TextureKind::LR, horizon, dt)?;
                    Ok(dynamics::texture_angle(&rep.mean, plane, TextureKind::LR)
                        .ok()
                        .map(|eta| mod_pi_diff(eta, phi).abs()))
                })
                .collect::<Result<_>>()?;
            let ok: Vec<f64> = diffs.iter().flatten().copied().collect();
            Ok(ConvergenceRow {
                horizon,
                max_diff: ok.iter().copied().fold(0.0, f64::max),
                mean_diff: ok.iter().sum::<f64>() / ok.len().max(1) as f64,
                skipped: diffs.len() - ok.len(),
            })
        })
        .collect()
}
