//! Platoon partitioning and per-vehicle strategy assignment.

use std::fmt;
use std::str::FromStr;

use crate::controllers::{Controller, Strategy, StrategyParams};
use crate::fleet::{platoon_ids, VehicleClass};
use crate::{Error, Result};

/// One of the ten leader/member strategy pairings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrategyCombo {
    id: u8,
    lv: Strategy,
    pv: Strategy,
}

impl StrategyCombo {
    pub const ALL: [StrategyCombo; 10] = [
        StrategyCombo::row(1, Strategy::Ctg, Strategy::Ctg),
        StrategyCombo::row(2, Strategy::Vtg1, Strategy::Vtg1),
        StrategyCombo::row(3, Strategy::Vtg2, Strategy::Vtg2),
        StrategyCombo::row(4, Strategy::Bs, Strategy::Bs),
        StrategyCombo::row(5, Strategy::Ctg, Strategy::Cs),
        StrategyCombo::row(6, Strategy::Vtg1, Strategy::Ctg),
        StrategyCombo::row(7, Strategy::Vtg1, Strategy::Cs),
        StrategyCombo::row(8, Strategy::Vtg2, Strategy::Ctg),
        StrategyCombo::row(9, Strategy::Vtg2, Strategy::Cs),
        StrategyCombo::row(10, Strategy::Bs, Strategy::Cs),
    ];

    const fn row(id: u8, lv: Strategy, pv: Strategy) -> Self {
        StrategyCombo { id, lv, pv }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Domain(format!("strategy combination id {id} not in 1..=10")))
    }

    /// Looks up the combination for a leader/member pair.
    pub fn from_pair(lv: Strategy, pv: Strategy) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.lv == lv && c.pv == pv)
            .ok_or_else(|| Error::Domain(format!("{lv}-{pv} is not a supported combination")))
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn lv(&self) -> Strategy {
        self.lv
    }

    pub fn pv(&self) -> Strategy {
        self.pv
    }

    pub fn is_single(&self) -> bool {
        self.lv == self.pv
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.lv, self.pv)
    }
}

impl fmt::Display for StrategyCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lv, self.pv)
    }
}

impl FromStr for StrategyCombo {
    type Err = Error;

    /// Accepts either the numeric id (`"7"`) or the pair name (`"VTG1-CS"`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(id) = s.parse::<u8>() {
            return Self::from_id(id);
        }
        let (lv, pv) = s
            .split_once('-')
            .ok_or_else(|| Error::Domain(format!("cannot parse strategy combination {s:?}")))?;
        Self::from_pair(lv.parse()?, pv.parse()?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Platoon {
    pub id: usize,
    /// Vehicle indices, leader first, in driving order from front to back.
    pub members: Vec<usize>,
}

impl Platoon {
    pub fn leader(&self) -> usize {
        self.members[0]
    }

    pub fn tail(&self) -> usize {
        *self.members.last().expect("platoon has at least one member")
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Groups the labeled ring into platoons: every LV opens one and the PVs
/// behind it join until the next non-PV.
pub fn form_platoons(labels: &[VehicleClass], max_size: usize) -> Result<Vec<Platoon>> {
    let n = labels.len();
    let ids = platoon_ids(labels)?;
    let mut platoons = Vec::new();
    for (i, c) in labels.iter().enumerate() {
        if !c.is_leader() {
            continue;
        }
        let id = ids[i].expect("leaders always carry an id");
        let mut members = vec![i];
        let mut j = (i + 1) % n;
        while j != i && labels[j] == VehicleClass::Pv {
            members.push(j);
            j = (j + 1) % n;
        }
        if members.len() > max_size.max(1) {
            return Err(Error::Labeling(format!(
                "platoon led by vehicle {i} has {} members, above the cap of {max_size}",
                members.len()
            )));
        }
        platoons.push(Platoon { id, members });
    }
    Ok(platoons)
}

/// Where a BS vehicle reads its rear gap from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RearGap {
    None,
    /// Gap behind the vehicle itself.
    Own,
    /// Gap behind the given vehicle (the platoon tail, "extended vehicle").
    Behind(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub class: VehicleClass,
    pub controller: Controller,
    pub platoon: Option<usize>,
    /// LPF leader index and hop count, set for CS members.
    pub leader: Option<(usize, usize)>,
    pub rear: RearGap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMap {
    pub combo: Option<StrategyCombo>,
    pub platoons: Vec<Platoon>,
    pub assignments: Vec<Assignment>,
}

impl StrategyMap {
    /// Every vehicle is a human driver.
    pub fn all_human(n: usize) -> Self {
        StrategyMap {
            combo: None,
            platoons: Vec::new(),
            assignments: vec![
                Assignment {
                    class: VehicleClass::Hv,
                    controller: Controller::Idm,
                    platoon: None,
                    leader: None,
                    rear: RearGap::None,
                };
                n
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Vehicle strategy map CSV: `vehicle_index,class,platoon_id,strategy,h_param`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vehicle_index", "class", "platoon_id", "strategy", "h_param"])?;
        for (i, a) in self.assignments.iter().enumerate() {
            let pid = a.platoon.map(|p| p as i64).unwrap_or(-1);
            let h = a.controller.headway().map(|h| h.to_string()).unwrap_or_default();
            w.write_record([
                i.to_string(),
                a.class.to_string(),
                pid.to_string(),
                a.controller.label().to_string(),
                h,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn controller_for(strategy: Strategy, headway: f64) -> Controller {
    match strategy {
        Strategy::Cs => Controller::Cs,
        Strategy::Ctg => Controller::Ctg { headway },
        Strategy::Vtg1 => Controller::Vtg1,
        Strategy::Vtg2 => Controller::Vtg2,
        Strategy::Bs => Controller::Bdbm,
    }
}

/// Assigns controllers for `combo`. Platoon membership is fixed for the
/// whole run.
pub fn assign_strategies(
    labels: &[VehicleClass],
    platoons: &[Platoon],
    combo: StrategyCombo,
    params: &StrategyParams,
) -> StrategyMap {
    let mut map = StrategyMap::all_human(labels.len());
    map.combo = Some(combo);
    map.platoons = platoons.to_vec();
    let extended = combo.lv == Strategy::Bs && combo.pv == Strategy::Cs;
    for platoon in platoons {
        for (hops, &i) in platoon.members.iter().enumerate() {
            let a = &mut map.assignments[i];
            a.class = labels[i];
            a.platoon = Some(platoon.id);
            if hops == 0 {
                a.controller = controller_for(combo.lv, params.headway_lv);
                if combo.lv == Strategy::Bs {
                    a.rear = if extended {
                        RearGap::Behind(platoon.tail())
                    } else {
                        RearGap::Own
                    };
                }
            } else {
                a.controller = controller_for(combo.pv, params.headway_pv);
                match combo.pv {
                    Strategy::Cs => a.leader = Some((platoon.leader(), hops)),
                    Strategy::Bs => a.rear = RearGap::Own,
                    _ => {}
                }
            }
        }
    }
    map
}

/// Gap behind the last member of `platoon`, given `gaps[i]` = gap ahead
/// of vehicle `i`. This is the rear distance the BS leader balances against
/// when the platoon acts as one extended vehicle.
pub fn extended_vehicle_follower_gap(platoon: &Platoon, gaps: &[f64]) -> f64 {
    let n = gaps.len();
    gaps[(platoon.tail() + 1) % n]
}
