//! Pivots of the metrics table into plot-ready CSV files.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::energy::Pollutant;
use crate::platoon::StrategyCombo;
use crate::Result;

use super::{fmt_opt, fmt_sig9, MetricsRow, Table};

/// Densities (veh/km) of the metric-vs-penetration family.
pub const PLOT_DENSITIES: [f64; 3] = [15.0, 55.0, 95.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Nff,
    Pollutant(Pollutant),
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Nff,
        Metric::Pollutant(Pollutant::Co2),
        Metric::Pollutant(Pollutant::Nox),
        Metric::Pollutant(Pollutant::Voc),
        Metric::Pollutant(Pollutant::Pm),
    ];

    pub fn slug(self) -> String {
        match self {
            Metric::Nff => "nff".into(),
            Metric::Pollutant(p) => p.as_str().to_ascii_lowercase(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn sorted_unique(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn find(rows: &[MetricsRow], combo: StrategyCombo, p: f64, density: f64) -> Option<&MetricsRow> {
    rows.iter()
        .find(|r| r.combo == combo && r.penetration == p && r.density == density)
}

fn p_label(p: f64) -> String {
    format!("p{}", fmt_sig9(p))
}

fn write(table: &Table, dir: &Path, name: String, out: &mut PlotOutput) -> Result<()> {
    table.check(&name)?;
    table.check_monotone(&name, 0)?;
    let path = dir.join(name);
    table.write_path(&path)?;
    out.files.push(path);
    Ok(())
}

/// Writes two families of files into `dir`:
///
/// * `density_<metric>_<combo id>.csv`: metric against density, one
///   column per penetration rate;
/// * `penetration_<metric>_d<density>.csv`: metric against penetration at
///   15, 55 and 95 veh/km, one column per combination plus the pure human
///   baseline `p0_baseline`.
///
/// An empty table writes nothing and returns a warning.
pub fn emit_plot_data(rows: &[MetricsRow], dir: &Path) -> Result<PlotOutput> {
    let mut out = PlotOutput::default();
    if rows.is_empty() {
        out.warnings.push("metrics table is empty; no plot data written".into());
        return Ok(out);
    }
    std::fs::create_dir_all(dir)?;
    let densities = sorted_unique(rows.iter().map(|r| r.density).collect());
    let ps = sorted_unique(rows.iter().map(|r| r.penetration).collect());
    let mut combos: Vec<StrategyCombo> = rows.iter().map(|r| r.combo).collect();
    combos.sort_by_key(|c| c.id());
    combos.dedup();

    for metric in Metric::ALL {
        for &combo in &combos {
            let mut header = vec!["density".to_string()];
            header.extend(ps.iter().map(|&p| p_label(p)));
            let mut t = Table::new(header);
            for &d in &densities {
                let mut rec = vec![fmt_sig9(d)];
                rec.extend(
                    ps.iter()
                        .map(|&p| fmt_opt(find(rows, combo, p, d).and_then(|r| r.metric(metric)))),
                );
                t.push(rec);
            }
            write(&t, dir, format!("density_{metric}_{:02}.csv", combo.id()), &mut out)?;
        }

        for d in PLOT_DENSITIES {
            if !densities.contains(&d) {
                out.warnings
                    .push(format!("density {d} not in the sweep; skipping its {metric} file"));
                continue;
            }
            let baseline = combos
                .iter()
                .find_map(|&c| find(rows, c, 0.0, d).and_then(|r| r.metric(metric)));
            if baseline.is_none() {
                out.warnings
                    .push(format!("no p=0 cell at density {d}; {metric} baseline left empty"));
            }
            let mut header = vec!["p".to_string()];
            header.extend(combos.iter().map(|c| c.name()));
            header.push("p0_baseline".into());
            let mut t = Table::new(header);
            for &p in &ps {
                let mut rec = vec![fmt_sig9(p)];
                rec.extend(
                    combos
                        .iter()
                        .map(|&c| fmt_opt(find(rows, c, p, d).and_then(|r| r.metric(metric)))),
                );
                rec.push(fmt_opt(baseline));
                t.push(rec);
            }
            write(&t, dir, format!("penetration_{metric}_d{d}.csv"), &mut out)?;
        }
    }
    Ok(out)
}
