//! Longitudinal control laws.
//!
//! Every law returns the *desired* acceleration; clamping to the vehicle's
//! physical limits happens in the engine. Spacing is measured front bumper
//! to front bumper (`spacing = gap + length`), along the ring.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Below this speed the VTG1 time gap falls back to `c1`.
pub const VTG1_SPEED_EPS: f64 = 0.1;
/// Floor for the own gap inside the BDBM/IDM interaction term.
pub const BDBM_GAP_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Kinematics {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

impl Kinematics {
    pub fn new(x: f64, v: f64, a: f64) -> Self {
        Kinematics { x, v, a }
    }
}

/// Platoon leader as seen from a follower (LPF topology).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderInfo {
    pub state: Kinematics,
    /// Forward arc distance from this vehicle's front bumper to the leader's.
    pub distance: f64,
    /// Vehicles between the leader and this vehicle, counting this vehicle.
    pub hops: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlContext {
    pub own: Kinematics,
    pub predecessor: Kinematics,
    /// Bumper-to-bumper distance to the predecessor.
    pub gap: f64,
    pub length: f64,
    pub leader: Option<LeaderInfo>,
    /// Gap behind this vehicle (or behind its platoon, for BS-CS leaders).
    pub follower_gap: Option<f64>,
}

impl ControlContext {
    /// Context with only predecessor information.
    pub fn following(own: Kinematics, predecessor: Kinematics, gap: f64, length: f64) -> Self {
        ControlContext {
            own,
            predecessor,
            gap,
            length,
            leader: None,
            follower_gap: None,
        }
    }

    pub fn with_leader(mut self, leader: LeaderInfo) -> Self {
        self.leader = Some(leader);
        self
    }

    pub fn with_follower_gap(mut self, gap: f64) -> Self {
        self.follower_gap = Some(gap);
        self
    }

    /// Front-to-front distance to the predecessor.
    pub fn spacing(&self) -> f64 {
        self.gap + self.length
    }

    /// Predecessor speed minus own speed.
    pub fn speed_diff(&self) -> f64 {
        self.predecessor.v - self.own.v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsGains {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    /// Pairwise spacing parameter added to `d0`.
    pub d_pair: f64,
    pub d0: f64,
}

impl Default for CsGains {
    fn default() -> Self {
        CsGains {
            q1: 0.4,
            q2: 0.1,
            q3: 0.9,
            q4: 0.6,
            d_pair: 0.0,
            d0: 2.0,
        }
    }
}

/// Gains of the linear feedback law shared by CTG, VTG1 and VTG2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGains {
    pub k_e: f64,
    pub k_v: f64,
    /// Feedforward gain on predecessor acceleration; must lie in `[0, 1]`.
    pub k: f64,
    pub d0: f64,
}

impl Default for LinearGains {
    fn default() -> Self {
        LinearGains {
            k_e: 0.1,
            k_v: 0.98,
            k: 0.7,
            d0: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VtgParams {
    pub c1: f64,
    pub mu: f64,
    /// Engine time constant, only used by [`VtgParams::validate`].
    pub eta: f64,
    pub d_vtg2: f64,
    pub m_speed: f64,
}

impl Default for VtgParams {
    fn default() -> Self {
        VtgParams {
            c1: 0.6,
            mu: 0.1,
            eta: 0.3,
            d_vtg2: 7.0,
            m_speed: 8.83,
        }
    }
}

impl VtgParams {
    /// Checks the admissibility bound `c1 > 2 eta - min(mu, (L + d0) / v_f)`.
    pub fn validate(&self, length: f64, d0: f64, v_free: f64) -> Result<()> {
        let bound = 2.0 * self.eta - self.mu.min((length + d0) / v_free);
        if self.c1 > bound && self.m_speed > 0.0 && self.d_vtg2 > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "VTG parameters inadmissible: c1={} must exceed {bound}",
                self.c1
            )))
        }
    }

    /// VTG2 time headway `d/v * exp(v / 2m)`; infinite at standstill.
    pub fn vtg2_headway(&self, v: f64) -> f64 {
        self.d_vtg2 / v * (v / (2.0 * self.m_speed)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdbmParams {
    pub v_free: f64,
    pub time_headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub d0: f64,
    /// Weight of the front/rear gap balance term.
    pub lambda: f64,
    pub length: f64,
}

impl Default for BdbmParams {
    fn default() -> Self {
        BdbmParams {
            v_free: 33.3,
            time_headway: 2.5,
            a_max: 1.0,
            b_comf: 2.0,
            d0: 2.0,
            lambda: 0.5,
            length: 5.0,
        }
    }
}

impl BdbmParams {
    pub fn without_balance(self) -> Self {
        BdbmParams { lambda: 0.0, ..self }
    }
}

/// Everything a vehicle controller may need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    pub cs: CsGains,
    pub linear: LinearGains,
    pub vtg: VtgParams,
    pub bdbm: BdbmParams,
    pub headway_lv: f64,
    pub headway_pv: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            cs: CsGains::default(),
            linear: LinearGains::default(),
            vtg: VtgParams::default(),
            bdbm: BdbmParams::default(),
            headway_lv: 1.1,
            headway_pv: 0.6,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bdbm;
        if !(0.0..=1.0).contains(&self.linear.k) {
            return Err(Error::Config(format!(
                "feedforward gain k={} outside [0, 1]",
                self.linear.k
            )));
        }
        if !(0.0..=1.0).contains(&b.lambda) {
            return Err(Error::Config(format!("lambda={} outside [0, 1]", b.lambda)));
        }
        let positive = [
            b.v_free,
            b.time_headway,
            b.a_max,
            b.b_comf,
            b.d0,
            b.length,
            self.headway_lv,
            self.headway_pv,
            self.cs.q1,
            self.cs.q2,
            self.cs.q3,
            self.cs.q4,
        ];
        if positive.iter().any(|x| x.is_nan() || *x <= 0.0) || self.cs.d_pair < 0.0 {
            return Err(Error::Config("controller parameters must be positive".into()));
        }
        self.vtg.validate(b.length, self.linear.d0, b.v_free)
    }
}

/// Spacing strategy family, as named in the LV/PV combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Cs,
    Ctg,
    Vtg1,
    Vtg2,
    Bs,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cs => "CS",
            Strategy::Ctg => "CTG",
            Strategy::Vtg1 => "VTG1",
            Strategy::Vtg2 => "VTG2",
            Strategy::Bs => "BS",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CS" => Ok(Strategy::Cs),
            "CTG" => Ok(Strategy::Ctg),
            "VTG1" => Ok(Strategy::Vtg1),
            "VTG2" => Ok(Strategy::Vtg2),
            "BS" | "BDBM" => Ok(Strategy::Bs),
            other => Err(Error::Domain(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Concrete per-vehicle control law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    /// Human driver: IDM, i.e. BDBM without the balance term.
    Idm,
    Cs,
    Ctg {
        headway: f64,
    },
    Vtg1,
    Vtg2,
    Bdbm,
}

impl Controller {
    pub fn label(&self) -> &'static str {
        match self {
            Controller::Idm => "IDM",
            Controller::Cs => "CS",
            Controller::Ctg { .. } => "CTG",
            Controller::Vtg1 => "VTG1",
            Controller::Vtg2 => "VTG2",
            Controller::Bdbm => "BS",
        }
    }

    /// Constant time gap parameter, where the law has one.
    pub fn headway(&self) -> Option<f64> {
        match self {
            Controller::Ctg { headway } => Some(*headway),
            _ => None,
        }
    }

    pub fn accel(&self, ctx: &ControlContext, params: &StrategyParams) -> Result<f64> {
        match *self {
            Controller::Idm => Ok(hv_accel(ctx, &params.bdbm)),
            Controller::Cs => cs_accel(ctx, &params.cs),
            Controller::Ctg { headway } => Ok(ctg_accel(ctx, &params.linear, headway)),
            Controller::Vtg1 => Ok(vtg1_accel(ctx, &params.linear, &params.vtg)),
            Controller::Vtg2 => Ok(vtg2_accel(ctx, &params.linear, &params.vtg)),
            Controller::Bdbm => bdbm_accel(ctx, &params.bdbm),
        }
    }

    /// Desired bumper-to-bumper gap at the context's current speeds.
    pub fn desired_gap(&self, ctx: &ControlContext, params: &StrategyParams) -> f64 {
        let v = ctx.own.v;
        match *self {
            Controller::Cs => params.cs.d_pair + params.cs.d0,
            Controller::Ctg { headway } => v * headway + params.linear.d0,
            Controller::Vtg1 => v * vtg1_headway(v, ctx.predecessor.v, &params.vtg) + params.linear.d0,
            Controller::Vtg2 => params.vtg.d_vtg2 * (v / (2.0 * params.vtg.m_speed)).exp() - ctx.length,
            Controller::Idm => bdbm_desired_gap(ctx, &params.bdbm, 0.0),
            Controller::Bdbm => bdbm_desired_gap(ctx, &params.bdbm, params.bdbm.lambda),
        }
    }
}

/// VTG1 time gap with the low-speed guard.
pub fn vtg1_headway(v: f64, v_pred: f64, vtg: &VtgParams) -> f64 {
    if v < VTG1_SPEED_EPS {
        vtg.c1
    } else {
        vtg.c1 - vtg.mu * (v_pred / v - 1.0)
    }
}

/// Leader-predecessor-follower constant-spacing law.
pub fn cs_accel(ctx: &ControlContext, g: &CsGains) -> Result<f64> {
    let leader = ctx
        .leader
        .ok_or_else(|| Error::Config("CS controller requires a platoon leader reference".into()))?;
    if leader.hops == 0 {
        return Err(Error::Config("CS controller cannot be its own leader".into()));
    }
    let v = ctx.own.v;
    let pair_err = ctx.spacing() - ctx.length - g.d_pair - g.d0;
    let leader_err = leader.distance - leader.hops as f64 * (ctx.length + g.d_pair + g.d0);
    let u = ctx.predecessor.a
        + g.q3 * leader.state.a
        + (g.q1 + g.q2) * (ctx.predecessor.v - v)
        + g.q2 * g.q1 * pair_err
        + (g.q4 + g.q2 * g.q3) * (leader.state.v - v)
        + g.q2 * g.q4 * leader_err;
    Ok(u / (1.0 + g.q3))
}

/// Constant time gap law with headway `h`.
pub fn ctg_accel(ctx: &ControlContext, g: &LinearGains, h: f64) -> f64 {
    let e = ctx.spacing() - ctx.length - ctx.own.v * h - g.d0;
    g.k_e * e + g.k_v * ctx.speed_diff() + g.k * ctx.predecessor.a
}

/// Variable time gap driven by the relative speed of the predecessor.
pub fn vtg1_accel(ctx: &ControlContext, g: &LinearGains, vtg: &VtgParams) -> f64 {
    let v = ctx.own.v;
    let e = if v < VTG1_SPEED_EPS {
        ctx.spacing() - ctx.length - vtg.c1 * v - g.d0
    } else {
        ctx.spacing() - ctx.length - (vtg.c1 + vtg.mu) * v + vtg.mu * ctx.predecessor.v - g.d0
    };
    g.k_e * e + g.k_v * ctx.speed_diff() + g.k * ctx.predecessor.a
}

/// Variable time gap that depends on own speed only (exponential spacing).
pub fn vtg2_accel(ctx: &ControlContext, g: &LinearGains, vtg: &VtgParams) -> f64 {
    let e = ctx.spacing() - vtg.d_vtg2 * (ctx.own.v / (2.0 * vtg.m_speed)).exp();
    g.k_e * e + g.k_v * ctx.speed_diff() + g.k * ctx.predecessor.a
}

fn bdbm_desired_gap(ctx: &ControlContext, p: &BdbmParams, lambda: f64) -> f64 {
    let v = ctx.own.v;
    let mut s = p.d0 + v * p.time_headway - v * ctx.speed_diff() / (2.0 * (p.a_max * p.b_comf).sqrt());
    if lambda != 0.0 {
        if let Some(rear) = ctx.follower_gap {
            s += lambda * (rear - ctx.gap);
        }
    }
    s
}

fn idm_like(ctx: &ControlContext, p: &BdbmParams, desired: f64) -> f64 {
    let gap = ctx.gap.max(BDBM_GAP_FLOOR);
    let ratio = desired.max(0.0) / gap;
    p.a_max * (1.0 - (ctx.own.v / p.v_free).powi(4) - ratio * ratio)
}

/// Bidirectional distance-balanced model. Needs the gap behind the vehicle.
pub fn bdbm_accel(ctx: &ControlContext, p: &BdbmParams) -> Result<f64> {
    if ctx.follower_gap.is_none() {
        return Err(Error::Config("BS controller requires the follower gap".into()));
    }
    Ok(idm_like(ctx, p, bdbm_desired_gap(ctx, p, p.lambda)))
}

/// Human-driver model: the balance-free reduction of [`bdbm_accel`] (IDM).
pub fn hv_accel(ctx: &ControlContext, p: &BdbmParams) -> f64 {
    idm_like(ctx, p, bdbm_desired_gap(ctx, p, 0.0))
}

/// Equilibrium bumper gap of the balance-free model at speed `v`.
pub fn idm_equilibrium_gap(v: f64, p: &BdbmParams) -> f64 {
    (p.d0 + v * p.time_headway) / (1.0 - (v / p.v_free).powi(4)).sqrt()
}
