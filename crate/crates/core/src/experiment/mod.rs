//! Batch experiments: the density x penetration x combination sweep,
//! verification reports and plot-ready CSV output.

mod plot;
mod report;
mod table;

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::energy::{FleetFootprint, FootprintAccumulator, Pollutant};
use crate::par::{self, Execution};
use crate::platoon::StrategyCombo;
use crate::sim::{self, SimConfig};
use crate::{Error, Result};

pub use plot::{emit_plot_data, Metric, PlotOutput, PLOT_DENSITIES};
pub use report::{
    curves_table, default_curve_grid, p_grid, verify_probability_model, verify_stability, ProbabilityReport,
    ProbabilityRow, StabilityReport, StabilityRow,
};
pub use table::{fmt_opt, fmt_sig9, Table};

/// Header of the metrics CSV.
pub const METRICS_HEADER: [&str; 12] = [
    "density",
    "p",
    "combo",
    "mean_speed_mps",
    "nff_g_per_km",
    "co2_g_per_km",
    "nox_g_per_km",
    "voc_g_per_km",
    "pm_g_per_km",
    "violations",
    "combo_id",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub densities: Vec<f64>,
    pub penetrations: Vec<f64>,
    pub combos: Vec<StrategyCombo>,
    pub base: SimConfig,
    pub output_dir: PathBuf,
    /// Worker threads for the cell pool; 0 uses the rayon default.
    pub threads: usize,
    pub replications: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            densities: (1..=20).map(|i| 5.0 * i as f64).collect(),
            penetrations: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            combos: StrategyCombo::ALL.to_vec(),
            base: SimConfig::default(),
            output_dir: PathBuf::from("out"),
            threads: 0,
            replications: 1,
        }
    }
}

impl SweepSpec {
    /// Full grid: 20 densities x 6 penetrations x 10 combinations.
    pub fn full_grid() -> Self {
        SweepSpec::default()
    }

    pub fn cell_count(&self) -> usize {
        self.densities.len() * self.penetrations.len() * self.combos.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.densities.is_empty() || self.penetrations.is_empty() || self.combos.is_empty() {
            return Err(Error::Config(
                "sweep needs at least one density, penetration and combination".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        for cell in self.cells() {
            cell.validate()?;
        }
        Ok(())
    }

    /// Cell configurations in output order: by combination, penetration, density.
    pub fn cells(&self) -> Vec<SimConfig> {
        let mut combos = self.combos.clone();
        combos.sort_by_key(|c| c.id());
        combos.dedup();
        let mut ps = self.penetrations.clone();
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        let mut ds = self.densities.clone();
        ds.sort_by(f64::total_cmp);
        ds.dedup();
        let mut out = Vec::with_capacity(combos.len() * ps.len() * ds.len());
        for &combo in &combos {
            for &p in &ps {
                for &d in &ds {
                    out.push(SimConfig {
                        density: d,
                        penetration: p,
                        combo,
                        seed: cell_seed(self.base.seed, d, p, combo.id()),
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }

    /// Applies a flat key/value config file on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_str(&text)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        let f: SweepFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(v) = f.densities {
            self.densities = v;
        }
        if let Some(v) = f.penetrations {
            self.penetrations = v;
        }
        if let Some(v) = f.combos {
            self.combos = v.iter().map(ComboKey::resolve).collect::<Result<_>>()?;
        }
        let b = &mut self.base;
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = f.$field { $target = v; })*
            };
        }
        set! {
            ring_length => b.ring_length,
            dt => b.dt,
            duration => b.duration,
            warmup => b.warmup,
            v_max => b.v_max,
            a_max => b.a_max,
            a_min => b.a_min,
            max_platoon_size => b.max_platoon_size,
            seed => b.seed,
            record_every => b.record_every,
            threads => self.threads,
            replications => self.replications,
            output_dir => self.output_dir,
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    densities: Option<Vec<f64>>,
    penetrations: Option<Vec<f64>>,
    combos: Option<Vec<ComboKey>>,
    ring_length: Option<f64>,
    dt: Option<f64>,
    duration: Option<f64>,
    warmup: Option<f64>,
    v_max: Option<f64>,
    a_max: Option<f64>,
    a_min: Option<f64>,
    max_platoon_size: Option<usize>,
    seed: Option<u64>,
    record_every: Option<usize>,
    threads: Option<usize>,
    replications: Option<usize>,
    output_dir: Option<PathBuf>,
}

/// A combination given either by id or by name.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ComboKey {
    Id(u8),
    Name(String),
}

impl ComboKey {
    fn resolve(&self) -> Result<StrategyCombo> {
        match self {
            ComboKey::Id(id) => StrategyCombo::from_id(*id),
            ComboKey::Name(name) => name.parse(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cell seed from the base seed and the cell key, independent of
/// execution order.
pub fn cell_seed(base: u64, density: f64, p: f64, combo_id: u8) -> u64 {
    [density.to_bits(), p.to_bits(), combo_id as u64]
        .into_iter()
        .fold(splitmix64(base), |h, x| splitmix64(h ^ x))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    /// Simulated, but the fleet never moved so per-km factors are undefined.
    Stalled,
    Failed(String),
}

impl CellStatus {
    pub fn as_string(&self) -> String {
        match self {
            CellStatus::Ok => "ok".into(),
            CellStatus::Stalled => "stalled".into(),
            CellStatus::Failed(msg) => format!("failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub density: f64,
    pub penetration: f64,
    pub combo: StrategyCombo,
    pub footprint: Option<FleetFootprint>,
    pub violations: usize,
    pub status: CellStatus,
}

impl MetricsRow {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        let f = self.footprint.as_ref()?;
        match m {
            Metric::Nff => f.nff,
            Metric::Pollutant(p) => f.pollutant(p),
        }
    }

    pub fn mean_speed(&self) -> Option<f64> {
        self.footprint.map(|f| f.mean_speed)
    }
}

/// Runs one cell, folding failures into the row status.
pub fn run_cell(config: &SimConfig, replications: usize) -> MetricsRow {
    let mut row = MetricsRow {
        density: config.density,
        penetration: config.penetration,
        combo: config.combo,
        footprint: None,
        violations: 0,
        status: CellStatus::Ok,
    };
    let mut acc = FootprintAccumulator::default();
    for rep in 0..replications.max(1) {
        let cfg = SimConfig {
            seed: config.seed.wrapping_add(rep as u64),
            ..config.clone()
        };
        match sim::run(&cfg) {
            Ok(log) => {
                row.violations += log.violations.len();
                acc.extend(&log.samples);
            }
            Err(e) => {
                row.status = CellStatus::Failed(e.to_string());
                return row;
            }
        }
    }
    match acc.finish() {
        Ok(f) => {
            if f.nff.is_none() {
                row.status = CellStatus::Stalled;
            }
            row.footprint = Some(f);
        }
        Err(e) => row.status = CellStatus::Failed(e.to_string()),
    }
    row
}

/// Runs every cell of the grid; rows come back sorted by
/// (combination, penetration, density).
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    let cells = spec.cells();
    let reps = spec.replications;
    Ok(par::with_threads(spec.threads, || {
        par::map_slice(exec, &cells, |c| run_cell(c, reps))
    }))
}

pub fn metrics_table(rows: &[MetricsRow]) -> Table {
    let mut t = Table::new(METRICS_HEADER);
    for r in rows {
        let f = r.footprint.as_ref();
        let pol = |p: Pollutant| fmt_opt(f.and_then(|f| f.pollutant(p)));
        t.push(vec![
            fmt_sig9(r.density),
            fmt_sig9(r.penetration),
            r.combo.name(),
            fmt_opt(f.map(|f| f.mean_speed)),
            fmt_opt(f.and_then(|f| f.nff)),
            pol(Pollutant::Co2),
            pol(Pollutant::Nox),
            pol(Pollutant::Voc),
            pol(Pollutant::Pm),
            r.violations.to_string(),
            r.combo.id().to_string(),
            r.status.as_string(),
        ]);
    }
    t
}

/// Checks the (combination, penetration, density) ordering of the rows.
fn check_metrics_order(rows: &[MetricsRow], name: &str) -> Result<()> {
    let key = |r: &MetricsRow| (r.combo.id(), r.penetration, r.density);
    for (i, w) in rows.windows(2).enumerate() {
        let (a, b) = (key(&w[0]), key(&w[1]));
        let ordered = a.0 < b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)));
        if !ordered {
            return Err(Error::Schema {
                file: name.to_string(),
                reason: format!("rows {i} and {} are out of (combo, p, density) order", i + 1),
            });
        }
    }
    Ok(())
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    check_metrics_order(rows, &path.display().to_string())?;
    metrics_table(rows).write_path(path)
}

/// Reads a metrics CSV back; per-km fields may be empty.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Schema {
            file: path.display().to_string(),
            reason: format!("unexpected header {header:?}"),
        });
    }
    let num = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Schema {
            file: path.display().to_string(),
            reason: format!("bad number {s:?}"),
        })
    };
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let speed = opt(&rec[3])?;
        let status = match &rec[11] {
            "ok" => CellStatus::Ok,
            "stalled" => CellStatus::Stalled,
            s => CellStatus::Failed(s.trim_start_matches("failed: ").to_string()),
        };
        let footprint = match speed {
            Some(mean_speed) => Some(FleetFootprint {
                mean_speed,
                mean_nfr: f64::NAN,
                nff: opt(&rec[4])?,
                pollutants: [opt(&rec[5])?, opt(&rec[6])?, opt(&rec[7])?, opt(&rec[8])?],
            }),
            None => None,
        };
        rows.push(MetricsRow {
            density: num(&rec[0])?,
            penetration: num(&rec[1])?,
            combo: rec[2].parse()?,
            footprint,
            violations: rec[9].parse().map_err(|_| Error::Schema {
                file: path.display().to_string(),
                reason: "bad violation count".into(),
            })?,
            status,
        });
    }
    Ok(rows)
}
