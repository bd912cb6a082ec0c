//! Fuel and pollutant post-processing of trajectories.
//!
//! Fuel follows the vehicle-specific-power (VSP) route to a normalised
//! fuel rate; pollutants use a piecewise quadratic regression in speed and
//! acceleration. Per-distance factors divide the fleet mean rate by the
//! fleet mean speed.

use std::fmt;
use std::str::FromStr;

use crate::controllers::Kinematics;
use crate::sim::TrajectoryLog;
use crate::{Error, Result};

/// Vehicle-specific power on a flat road, kW/ton.
pub fn vsp(v: f64, a: f64) -> f64 {
    v * (1.1 * a + 0.132) + 0.000302 * v * v * v
}

/// Normalised fuel rate (g/s). Negative VSP maps to 1; zero maps to 0
/// (the limit of the power law from above).
pub fn nfr(vsp: f64) -> f64 {
    if vsp < 0.0 {
        1.0
    } else {
        1.71 * vsp.powf(0.42)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pollutant {
    Co2,
    Nox,
    Voc,
    Pm,
}

impl Pollutant {
    pub const ALL: [Pollutant; 4] = [Pollutant::Co2, Pollutant::Nox, Pollutant::Voc, Pollutant::Pm];

    pub fn as_str(self) -> &'static str {
        match self {
            Pollutant::Co2 => "CO2",
            Pollutant::Nox => "NOx",
            Pollutant::Voc => "VOC",
            Pollutant::Pm => "PM",
        }
    }

    /// `(a >= -0.5 row, a < -0.5 row)`; single-row pollutants repeat it.
    pub fn coefficients(self) -> (&'static [f64; 6], &'static [f64; 6]) {
        match self {
            Pollutant::Co2 => (&CO2, &CO2),
            Pollutant::Nox => (&NOX_CRUISE, &NOX_DECEL),
            Pollutant::Voc => (&VOC_CRUISE, &VOC_DECEL),
            Pollutant::Pm => (&PM, &PM),
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CO2" => Ok(Pollutant::Co2),
            "NOX" => Ok(Pollutant::Nox),
            "VOC" => Ok(Pollutant::Voc),
            "PM" => Ok(Pollutant::Pm),
            other => Err(Error::Domain(format!("unknown pollutant {other:?}"))),
        }
    }
}

/// Acceleration at which the deceleration rows take over (exclusive).
pub const DECEL_REGIME: f64 = -0.5;

const CO2: [f64; 6] = [5.53e-01, 1.61e-01, -2.89e-03, 2.66e-01, 5.11e-01, 1.83e-01];
const NOX_CRUISE: [f64; 6] = [6.19e-04, 8.00e-05, -4.03e-06, -4.13e-04, 3.80e-04, 1.77e-04];
const NOX_DECEL: [f64; 6] = [2.17e-04, 0.0, 0.0, 0.0, 0.0, 0.0];
const VOC_CRUISE: [f64; 6] = [4.47e-03, 7.32e-07, -2.87e-08, -3.41e-06, 4.94e-06, 1.66e-06];
const VOC_DECEL: [f64; 6] = [2.63e-03, 0.0, 0.0, 0.0, 0.0, 0.0];
const PM: [f64; 6] = [0.0, 1.57e-05, -9.21e-07, 0.0, 3.75e-05, 1.89e-05];

/// Instantaneous emission rate in g/s.
pub fn emission_rate(v: f64, a: f64, pollutant: Pollutant) -> f64 {
    let (cruise, decel) = pollutant.coefficients();
    let f = if a >= DECEL_REGIME { cruise } else { decel };
    (f[0] + f[1] * v + f[2] * v * v + f[3] * a + f[4] * a * a + f[5] * v * a).max(0.0)
}

/// Running sums over (vehicle, time) samples, every sample weighted equally.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FootprintAccumulator {
    pub samples: u64,
    pub speed_sum: f64,
    pub nfr_sum: f64,
    pub rate_sums: [f64; 4],
}

impl FootprintAccumulator {
    pub fn add(&mut self, s: &Kinematics) {
        self.samples += 1;
        self.speed_sum += s.v;
        self.nfr_sum += nfr(vsp(s.v, s.a));
        for (sum, p) in self.rate_sums.iter_mut().zip(Pollutant::ALL) {
            *sum += emission_rate(s.v, s.a, p);
        }
    }

    pub fn extend<'a>(&mut self, it: impl IntoIterator<Item = &'a Kinematics>) {
        for s in it {
            self.add(s);
        }
    }

    pub fn merge(&mut self, other: &FootprintAccumulator) {
        self.samples += other.samples;
        self.speed_sum += other.speed_sum;
        self.nfr_sum += other.nfr_sum;
        for (a, b) in self.rate_sums.iter_mut().zip(other.rate_sums) {
            *a += b;
        }
    }

    pub fn finish(&self) -> Result<FleetFootprint> {
        if self.samples == 0 {
            return Err(Error::Empty("no trajectory samples to aggregate".into()));
        }
        let n = self.samples as f64;
        let mean_speed = self.speed_sum / n;
        let mean_nfr = self.nfr_sum / n;
        let per_km = |rate: f64| (mean_speed > 0.0).then(|| 3600.0 * rate / (mean_speed * 3.6));
        let mut pollutants = [None; 4];
        for (out, sum) in pollutants.iter_mut().zip(self.rate_sums) {
            *out = per_km(sum / n);
        }
        Ok(FleetFootprint {
            mean_speed,
            mean_nfr,
            nff: per_km(mean_nfr),
            pollutants,
        })
    }
}

/// Fleet-level fuel and emission factors. Per-km figures are `None` when
/// the mean speed is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetFootprint {
    pub mean_speed: f64,
    pub mean_nfr: f64,
    /// Normalised fuel factor, g/km.
    pub nff: Option<f64>,
    /// g/km in [`Pollutant::ALL`] order.
    pub pollutants: [Option<f64>; 4],
}

impl FleetFootprint {
    pub fn pollutant(&self, p: Pollutant) -> Option<f64> {
        self.pollutants[p as usize]
    }
}

pub fn footprint(log: &TrajectoryLog) -> Result<FleetFootprint> {
    let mut acc = FootprintAccumulator::default();
    acc.extend(&log.samples);
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelSummary {
    pub mean_nfr: f64,
    pub mean_speed: f64,
    pub nff: Option<f64>,
}

pub fn fleet_fuel(log: &TrajectoryLog) -> Result<FuelSummary> {
    let f = footprint(log)?;
    Ok(FuelSummary {
        mean_nfr: f.mean_nfr,
        mean_speed: f.mean_speed,
        nff: f.nff,
    })
}

/// Per-pollutant g/km in [`Pollutant::ALL`] order.
pub fn fleet_emissions(log: &TrajectoryLog) -> Result<[Option<f64>; 4]> {
    footprint(log).map(|f| f.pollutants)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub v: f64,
    pub nff: f64,
    /// g/km in [`Pollutant::ALL`] order.
    pub pollutants: [f64; 4],
}

/// Constant-speed, zero-acceleration fuel and emission factors.
pub fn equilibrium_curves(speeds: &[f64]) -> Result<Vec<CurveRow>> {
    speeds
        .iter()
        .map(|&v| {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Domain(format!("equilibrium speed must be positive, got {v}")));
            }
            let mut acc = FootprintAccumulator::default();
            acc.add(&Kinematics::new(0.0, v, 0.0));
            let f = acc.finish()?;
            Ok(CurveRow {
                v,
                nff: f.nff.expect("positive speed"),
                pollutants: f.pollutants.map(|x| x.expect("positive speed")),
            })
        })
        .collect()
}
