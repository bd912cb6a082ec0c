//! Frequency-domain string stability of homogeneous CAV flow.
//!
//! A predecessor-following law `u = g(v, dx, dv) + k * a_pred` linearised at
//! equilibrium gives the speed-disturbance transfer function
//!
//! ```text
//!            k s^2 + g_dv s + g_dx
//! G(s) = ------------------------------
//!        s^2 + (g_dv - g_v) s + g_dx
//! ```
//!
//! and `sup |G(jw)| <= 1` holds iff `0 <= k <= 1` and
//! `g_v^2 - 2 g_v g_dv - 2 (1 - k) g_dx >= 0`.

use crate::controllers::{Controller, StrategyParams, VTG1_SPEED_EPS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPartials {
    /// d(accel)/d(own speed).
    pub g_v: f64,
    /// d(accel)/d(spacing).
    pub g_dx: f64,
    /// d(accel)/d(predecessor speed - own speed).
    pub g_dv: f64,
    /// Feedforward gain on predecessor acceleration.
    pub k: f64,
    pub v_e: f64,
    /// Set when the partials ignore part of the law (CS leader terms).
    pub caveat: bool,
}

/// Closed-form partials of `controller` at equilibrium speed `v_e`, with
/// predecessor speed rewritten as `v + dv` before differentiating.
///
/// For CS the leader's state is held fixed, so the leader speed term
/// contributes to `g_v` while the leader position term is dropped.
pub fn equilibrium_partials(controller: Controller, params: &StrategyParams, v_e: f64) -> Result<EquilibriumPartials> {
    let v_f = params.bdbm.v_free;
    if !(v_e > 0.0 && v_e <= v_f) {
        return Err(Error::Domain(format!("equilibrium speed {v_e} outside (0, {v_f}]")));
    }
    let g = &params.linear;
    let (g_v, g_dx, g_dv, k, caveat) = match controller {
        Controller::Ctg { headway } => (-g.k_e * headway, g.k_e, g.k_v, g.k, false),
        Controller::Vtg1 => {
            let vtg = &params.vtg;
            if v_e < VTG1_SPEED_EPS {
                (-g.k_e * vtg.c1, g.k_e, g.k_v, g.k, false)
            } else {
                (-g.k_e * vtg.c1, g.k_e, g.k_e * vtg.mu + g.k_v, g.k, false)
            }
        }
        Controller::Vtg2 => {
            let vtg = &params.vtg;
            let two_m = 2.0 * vtg.m_speed;
            (
                -g.k_e * vtg.d_vtg2 / two_m * (v_e / two_m).exp(),
                g.k_e,
                g.k_v,
                g.k,
                false,
            )
        }
        Controller::Cs => {
            let c = &params.cs;
            let s = 1.0 + c.q3;
            (
                -(c.q4 + c.q2 * c.q3) / s,
                c.q1 * c.q2 / s,
                (c.q1 + c.q2) / s,
                1.0 / s,
                true,
            )
        }
        Controller::Bdbm | Controller::Idm => {
            return Err(Error::Unsupported(format!(
                "{} does not reduce to a predecessor-only linear law",
                controller.label()
            )))
        }
    };
    Ok(EquilibriumPartials {
        g_v,
        g_dx,
        g_dv,
        k,
        v_e,
        caveat,
    })
}

/// `|G(jw)|` for the homogeneous string.
pub fn transfer_magnitude(p: &EquilibriumPartials, omega: f64) -> f64 {
    let w2 = omega * omega;
    let num = (p.g_dx - p.k * w2).hypot(omega * p.g_dv);
    let den = (p.g_dx - w2).hypot(omega * (p.g_dv - p.g_v));
    if den == 0.0 {
        // Marginal: undamped resonance exactly at this frequency.
        return f64::INFINITY;
    }
    num / den
}

/// Left-hand side of the second stability condition.
pub fn stability_margin(p: &EquilibriumPartials) -> f64 {
    p.g_v * p.g_v - 2.0 * p.g_v * p.g_dv - 2.0 * (1.0 - p.k) * p.g_dx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub k_in_range: bool,
    pub margin: f64,
    pub caveat: bool,
}

pub fn verdict(p: &EquilibriumPartials) -> StabilityVerdict {
    let k_in_range = (0.0..=1.0).contains(&p.k);
    let margin = stability_margin(p);
    StabilityVerdict {
        stable: k_in_range && margin >= 0.0,
        k_in_range,
        margin,
        caveat: p.caveat,
    }
}

pub fn string_stable(controller: Controller, params: &StrategyParams, v_e: f64) -> Result<StabilityVerdict> {
    equilibrium_partials(controller, params, v_e).map(|p| verdict(&p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPoint {
    pub v_e: f64,
    pub margin: f64,
    pub stable: bool,
}

/// Stability margin sampled over equilibrium speeds.
pub fn stability_region(controller: Controller, params: &StrategyParams, speeds: &[f64]) -> Result<Vec<RegionPoint>> {
    speeds
        .iter()
        .map(|&v_e| {
            string_stable(controller, params, v_e).map(|s| RegionPoint {
                v_e,
                margin: s.margin,
                stable: s.stable,
            })
        })
        .collect()
}

/// `n` log-spaced frequencies on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Dense-grid estimate of `sup |G(jw)|` over `(0, 100]` rad/s.
pub fn peak_magnitude(p: &EquilibriumPartials, samples: usize) -> f64 {
    log_grid(1e-4, 100.0, samples)
        .into_iter()
        .map(|w| transfer_magnitude(p, w))
        .fold(0.0, f64::max)
}

/// Region CSV: `strategy,v_e,margin,stable`.
pub fn write_region_csv<W: std::io::Write>(strategy: &str, points: &[RegionPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "v_e", "margin", "stable"])?;
    for pt in points {
        w.write_record([
            strategy.to_string(),
            crate::experiment::fmt_sig9(pt.v_e),
            crate::experiment::fmt_sig9(pt.margin),
            pt.stable.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
