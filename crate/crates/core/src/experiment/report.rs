//! Verification reports for the composition model, string stability and
//! the equilibrium fuel/emission curves.

use crate::controllers::{Controller, StrategyParams};
use crate::energy::equilibrium_curves;
use crate::fleet::{
    class_probabilities, empirical_distribution, generate_sequence, goodness_of_fit, FleetSpec, VehicleClass,
};
use crate::par::{self, Execution};
use crate::stability::{equilibrium_partials, stability_region, verdict, RegionPoint};
use crate::Result;

use super::{fmt_sig9, Table};

/// `0.01, 0.02, ..., 0.99` style grid with `n - 1` interior steps.
pub fn p_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (1..n).map(|i| i as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRow {
    pub intensity: f64,
    pub class: VehicleClass,
    pub r_squared: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityReport {
    pub rows: Vec<ProbabilityRow>,
    /// `p,intensity,class,theory,empirical` per grid point.
    pub curves: Table,
    pub notes: Vec<String>,
}

impl ProbabilityReport {
    pub fn row(&self, intensity: f64, class: VehicleClass) -> Option<&ProbabilityRow> {
        self.rows.iter().find(|r| r.intensity == intensity && r.class == class)
    }

    /// `intensity,class,r_squared,rmse`.
    pub fn table(&self) -> Table {
        let mut t = Table::new(["intensity", "class", "r_squared", "rmse"]);
        for r in &self.rows {
            t.push(vec![
                fmt_sig9(r.intensity),
                r.class.to_string(),
                fmt_sig9(r.r_squared),
                fmt_sig9(r.rmse),
            ]);
        }
        t
    }
}

const CAV_CLASSES: [VehicleClass; 3] = [VehicleClass::Lv1, VehicleClass::Lv2, VehicleClass::Pv];

/// Monte-Carlo check of the closed-form class probabilities: for every `p`
/// in the grid and every intensity, `runs` sequences of `n_vehicles` are
/// drawn and the pooled class shares compared with theory.
pub fn verify_probability_model(
    p_values: &[f64],
    intensities: &[f64],
    n_vehicles: usize,
    runs: usize,
    max_platoon_size: usize,
    seed: u64,
    exec: Execution,
) -> Result<ProbabilityReport> {
    let mut rows = Vec::new();
    let mut curves = Table::new(["p", "intensity", "class", "theory", "empirical"]);
    let mut notes = Vec::new();
    if p_values.len() < 2 {
        notes.push(format!(
            "grid has {} penetration value(s); r_squared is degenerate",
            p_values.len()
        ));
    }
    if p_values.is_empty() {
        return Ok(ProbabilityReport { rows, curves, notes });
    }
    for (oi, &o) in intensities.iter().enumerate() {
        let points = par::map_range(exec, p_values.len(), |pi| -> Result<_> {
            let p = p_values[pi];
            let theory = class_probabilities(p, o, max_platoon_size)?;
            let seqs = (0..runs)
                .map(|r| {
                    let s = seed ^ ((oi as u64) << 48) ^ ((pi as u64) << 24) ^ r as u64;
                    generate_sequence(&FleetSpec::new(n_vehicles, p, o, max_platoon_size).with_seed(s))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((theory, empirical_distribution(&seqs)?))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for class in CAV_CLASSES {
            let th: Vec<f64> = points.iter().map(|(t, _)| t.get(class)).collect();
            let em: Vec<f64> = points.iter().map(|(_, e)| e.get(class)).collect();
            let fit = goodness_of_fit(&th, &em)?;
            rows.push(ProbabilityRow {
                intensity: o,
                class,
                r_squared: fit.r_squared,
                rmse: fit.rmse,
            });
            for ((p, t), e) in p_values.iter().zip(&th).zip(&em) {
                curves.push(vec![
                    fmt_sig9(*p),
                    fmt_sig9(o),
                    class.to_string(),
                    fmt_sig9(*t),
                    fmt_sig9(*e),
                ]);
            }
        }
    }
    Ok(ProbabilityReport { rows, curves, notes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub controller: Controller,
    pub v_e: f64,
    pub g_v: f64,
    pub g_dx: f64,
    pub g_dv: f64,
    pub k: f64,
    pub margin: f64,
    pub stable: bool,
    pub caveat: bool,
    pub region: Vec<RegionPoint>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    /// `strategy,v_e,g_v,g_dx,g_dv,k,margin,stable,note`.
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "strategy", "v_e", "g_v", "g_dx", "g_dv", "k", "margin", "stable", "note",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.controller.label().to_string(),
                fmt_sig9(r.v_e),
                fmt_sig9(r.g_v),
                fmt_sig9(r.g_dx),
                fmt_sig9(r.g_dv),
                fmt_sig9(r.k),
                fmt_sig9(r.margin),
                r.stable.to_string(),
                if r.caveat {
                    "leader terms held fixed".into()
                } else {
                    String::new()
                },
            ]);
        }
        t
    }

    /// `strategy,v_e,margin,stable` over the speed grid.
    pub fn region_table(&self, row: &StabilityRow) -> Table {
        let mut t = Table::new(["strategy", "v_e", "margin", "stable"]);
        for pt in &row.region {
            t.push(vec![
                row.controller.label().to_string(),
                fmt_sig9(pt.v_e),
                fmt_sig9(pt.margin),
                pt.stable.to_string(),
            ]);
        }
        t
    }
}

/// One report row per controller at `v_e`, each with its margin over
/// `speeds`.
pub fn verify_stability(
    controllers: &[Controller],
    params: &StrategyParams,
    v_e: f64,
    speeds: &[f64],
) -> Result<StabilityReport> {
    let rows = controllers
        .iter()
        .map(|&c| {
            let p = equilibrium_partials(c, params, v_e)?;
            let s = verdict(&p);
            Ok(StabilityRow {
                controller: c,
                v_e,
                g_v: p.g_v,
                g_dx: p.g_dx,
                g_dv: p.g_dv,
                k: p.k,
                margin: s.margin,
                stable: s.stable,
                caveat: s.caveat,
                region: stability_region(c, params, speeds)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(StabilityReport { rows })
}

/// 0.5 m/s steps from 0.5 to 33 m/s.
pub fn default_curve_grid() -> Vec<f64> {
    (1..=66).map(|i| i as f64 * 0.5).collect()
}

/// Equilibrium fuel and emission factors: `v,nff,co2,nox,voc,pm`.
pub fn curves_table(speeds: &[f64]) -> Result<Table> {
    let mut t = Table::new(["v", "nff", "co2", "nox", "voc", "pm"]);
    for row in equilibrium_curves(speeds)? {
        let mut rec = vec![fmt_sig9(row.v), fmt_sig9(row.nff)];
        rec.extend(row.pollutants.iter().map(|x| fmt_sig9(*x)));
        t.push(rec);
    }
    Ok(t)
}
