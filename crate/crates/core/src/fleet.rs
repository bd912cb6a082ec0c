//! Fleet composition: ordered vehicle-class sequences on the ring and the
//! Markov-chain model of their class frequencies.
//!
//! Index convention used across the crate: the vehicle directly ahead of
//! vehicle `i` is `i - 1`, and vehicle `0` follows vehicle `n - 1`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VehicleClass {
    /// Human-driven vehicle.
    Hv,
    /// Platoon leader following an HV.
    Lv1,
    /// Platoon leader following a CAV (created by the size cap).
    Lv2,
    /// Platoon member.
    Pv,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 4] = [Self::Hv, Self::Lv1, Self::Lv2, Self::Pv];

    pub fn is_cav(self) -> bool {
        self != VehicleClass::Hv
    }

    pub fn is_leader(self) -> bool {
        matches!(self, VehicleClass::Lv1 | VehicleClass::Lv2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Hv => "HV",
            VehicleClass::Lv1 => "LV1",
            VehicleClass::Lv2 => "LV2",
            VehicleClass::Pv => "PV",
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "HV" => Ok(VehicleClass::Hv),
            "LV1" => Ok(VehicleClass::Lv1),
            "LV2" => Ok(VehicleClass::Lv2),
            "PV" => Ok(VehicleClass::Pv),
            other => Err(Error::Domain(format!("unknown vehicle class {other:?}"))),
        }
    }
}

/// Class-agnostic vehicle kind, the input of [`label_roles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Hv,
    Cav,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSpec {
    pub n_vehicles: usize,
    /// CAV penetration rate.
    pub penetration: f64,
    /// Platoon intensity: share of CAVs travelling inside platoons.
    pub intensity: f64,
    pub max_platoon_size: usize,
    pub seed: u64,
}

impl FleetSpec {
    pub fn new(n_vehicles: usize, penetration: f64, intensity: f64, max_platoon_size: usize) -> Self {
        FleetSpec {
            n_vehicles,
            penetration,
            intensity,
            max_platoon_size,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vehicles == 0 {
            return Err(Error::Domain("fleet needs at least one vehicle".into()));
        }
        check_fraction("penetration", self.penetration)?;
        check_fraction("intensity", self.intensity)?;
        if self.max_platoon_size == 0 {
            return Err(Error::Domain("max platoon size must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of CAVs for the clustered layout: `p * n` rounded to nearest,
    /// ties up.
    pub fn cav_count(&self) -> usize {
        ((self.penetration * self.n_vehicles as f64).round() as usize).min(self.n_vehicles)
    }
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

/// Successor-type probabilities: `t_ah` is the probability that the vehicle
/// behind a CAV is an HV, and so on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionProbs {
    pub t_ah: f64,
    pub t_aa: f64,
    pub t_ha: f64,
    pub t_hh: f64,
}

pub fn transition_probs(p: f64, intensity: f64) -> Result<TransitionProbs> {
    check_fraction("penetration", p)?;
    check_fraction("intensity", intensity)?;
    let t_ah = (1.0 - intensity) * (1.0 - p);
    let t_ha = (1.0 - intensity) * p;
    Ok(TransitionProbs {
        t_ah,
        t_aa: 1.0 - t_ah,
        t_ha,
        t_hh: 1.0 - t_ha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassDistribution {
    pub hv: f64,
    pub lv1: f64,
    pub lv2: f64,
    pub pv: f64,
}

impl ClassDistribution {
    /// Combined leader share (LV1 + LV2).
    pub fn lv(&self) -> f64 {
        self.lv1 + self.lv2
    }

    pub fn cav(&self) -> f64 {
        self.lv1 + self.lv2 + self.pv
    }

    pub fn get(&self, class: VehicleClass) -> f64 {
        match class {
            VehicleClass::Hv => self.hv,
            VehicleClass::Lv1 => self.lv1,
            VehicleClass::Lv2 => self.lv2,
            VehicleClass::Pv => self.pv,
        }
    }
}

/// Which closed form produced a [`ClassDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityBranch {
    /// All CAVs adjacent (intensity exactly 1).
    Clustered,
    /// Markov-chain form for intensity below 1.
    Markov,
    /// Markov form was singular (`t_aa == 1`, only at p = 1) so the
    /// clustered form was used instead.
    ClusteredFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassModel {
    pub distribution: ClassDistribution,
    pub branch: ProbabilityBranch,
}

/// Closed-form class probabilities for penetration `p`, intensity `o` and
/// maximum platoon size `s`.
pub fn class_probabilities(p: f64, o: f64, s: usize) -> Result<ClassDistribution> {
    class_model(p, o, s).map(|m| m.distribution)
}

pub fn class_model(p: f64, o: f64, s: usize) -> Result<ClassModel> {
    if s == 0 {
        return Err(Error::Domain("max platoon size must be >= 1".into()));
    }
    let t = transition_probs(p, o)?;
    let sf = s as f64;
    let clustered = ClassDistribution {
        hv: 1.0 - p,
        lv1: 0.0,
        lv2: p / sf,
        pv: (sf - 1.0) * p / sf,
    };
    if o == 1.0 {
        return Ok(ClassModel {
            distribution: clustered,
            branch: ProbabilityBranch::Clustered,
        });
    }
    if t.t_ah == 0.0 {
        return Ok(ClassModel {
            distribution: clustered,
            branch: ProbabilityBranch::ClusteredFallback,
        });
    }

    // 1 - t_aa^k evaluated through t_ah to avoid cancellation near t_aa = 1.
    let one_minus_pow = |k: usize| -(k as f64 * (-t.t_ah).ln_1p()).exp_m1();
    let lv1 = (1.0 - p) * t.t_ha;
    let denom = one_minus_pow(s);
    let lv2 = t.t_aa.powi(s as i32) * lv1 / denom;
    let pv = t.t_aa * one_minus_pow(s - 1) * lv1 / (t.t_ah * denom);
    Ok(ClassModel {
        distribution: ClassDistribution {
            hv: 1.0 - p,
            lv1,
            lv2,
            pv,
        },
        branch: ProbabilityBranch::Markov,
    })
}

/// Assigns platoon roles to a circular HV/CAV sequence.
///
/// Inside every maximal CAV run, offset 0 is LV1 when the run sits behind
/// an HV, offsets `s, 2s, ...` are LV2 and everything else is PV. A ring
/// with no HV at all is chunked from index 0 with every chunk start LV2.
pub fn label_roles(kinds: &[Kind], s: usize) -> Vec<VehicleClass> {
    let n = kinds.len();
    let s = s.max(1);
    let mut out = vec![VehicleClass::Hv; n];
    if n == 0 {
        return out;
    }
    if kinds.iter().all(|k| *k == Kind::Cav) {
        for (i, c) in out.iter_mut().enumerate() {
            *c = if i % s == 0 {
                VehicleClass::Lv2
            } else {
                VehicleClass::Pv
            };
        }
        return out;
    }
    for start in 0..n {
        let pred = (start + n - 1) % n;
        if kinds[start] != Kind::Cav || kinds[pred] != Kind::Hv {
            continue;
        }
        let mut offset = 0;
        let mut i = start;
        while kinds[i] == Kind::Cav {
            out[i] = if offset == 0 {
                VehicleClass::Lv1
            } else if offset % s == 0 {
                VehicleClass::Lv2
            } else {
                VehicleClass::Pv
            };
            offset += 1;
            i = (i + 1) % n;
        }
    }
    out
}

/// Generates the labeled class sequence for `spec`.
///
/// Intensity 1 places one contiguous CAV block after all HVs. Lower
/// intensities walk the ring with the Markov transitions, the first
/// vehicle being a CAV with probability `p`; the wrap-around transition is
/// not conditioned.
pub fn generate_sequence(spec: &FleetSpec) -> Result<Vec<VehicleClass>> {
    spec.validate()?;
    let n = spec.n_vehicles;
    let kinds = if spec.intensity == 1.0 {
        let n_cav = spec.cav_count();
        let mut kinds = vec![Kind::Hv; n - n_cav];
        kinds.extend(std::iter::repeat_n(Kind::Cav, n_cav));
        kinds
    } else {
        let t = transition_probs(spec.penetration, spec.intensity)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut kinds = Vec::with_capacity(n);
        let mut cur = if rng.random_bool(spec.penetration) {
            Kind::Cav
        } else {
            Kind::Hv
        };
        kinds.push(cur);
        for _ in 1..n {
            let p_cav = match cur {
                Kind::Cav => t.t_aa,
                Kind::Hv => t.t_ha,
            };
            cur = if rng.random_bool(p_cav.clamp(0.0, 1.0)) {
                Kind::Cav
            } else {
                Kind::Hv
            };
            kinds.push(cur);
        }
        kinds
    };
    Ok(label_roles(&kinds, spec.max_platoon_size))
}

/// Platoon id per vehicle (`None` for HVs). Ids count up from the first
/// leader in index order; PVs inherit the id of the nearest leader ahead.
pub fn platoon_ids(labels: &[VehicleClass]) -> Result<Vec<Option<usize>>> {
    let n = labels.len();
    let mut ids = vec![None; n];
    let mut next = 0;
    for (i, c) in labels.iter().enumerate() {
        if c.is_leader() {
            ids[i] = Some(next);
            next += 1;
        }
    }
    for i in 0..n {
        if labels[i] != VehicleClass::Pv {
            continue;
        }
        let mut j = i;
        let mut found = None;
        for _ in 0..n {
            j = (j + n - 1) % n;
            match labels[j] {
                VehicleClass::Pv => continue,
                c if c.is_leader() => {
                    found = ids[j];
                    break;
                }
                _ => break,
            }
        }
        match found {
            Some(id) => ids[i] = Some(id),
            None => return Err(Error::Labeling(format!("PV at index {i} has no leader ahead of it"))),
        }
    }
    Ok(ids)
}

/// Pooled class frequencies over all vehicles of all sequences.
pub fn empirical_distribution<S: AsRef<[VehicleClass]>>(sequences: &[S]) -> Result<ClassDistribution> {
    let mut counts = [0usize; 4];
    let mut total = 0usize;
    for seq in sequences {
        for c in seq.as_ref() {
            counts[*c as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("no vehicles to count".into()));
    }
    let t = total as f64;
    Ok(ClassDistribution {
        hv: counts[0] as f64 / t,
        lv1: counts[1] as f64 / t,
        lv2: counts[2] as f64 / t,
        pv: counts[3] as f64 / t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub r_squared: f64,
    pub rmse: f64,
}

/// Coefficient of determination of `empirical` against the `theory` curve,
/// plus RMSE. With zero variance in the empirical curve, R² is 1 for an
/// exact match and 0 otherwise.
pub fn goodness_of_fit(theory: &[f64], empirical: &[f64]) -> Result<Fit> {
    if theory.len() != empirical.len() {
        return Err(Error::LengthMismatch {
            left: theory.len(),
            right: empirical.len(),
        });
    }
    if theory.is_empty() {
        return Err(Error::Empty("no samples to compare".into()));
    }
    let n = theory.len() as f64;
    let mean = empirical.iter().sum::<f64>() / n;
    let ss_res: f64 = theory.iter().zip(empirical).map(|(t, e)| (e - t).powi(2)).sum();
    let ss_tot: f64 = empirical.iter().map(|e| (e - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(Fit {
        r_squared,
        rmse: (ss_res / n).sqrt(),
    })
}

/// Writes one row per vehicle: `index,class,platoon_id` (-1 for HVs).
pub fn write_sequence_csv<W: std::io::Write>(labels: &[VehicleClass], out: W) -> Result<()> {
    let ids = platoon_ids(labels)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "class", "platoon_id"])?;
    for (i, (c, id)) in labels.iter().zip(ids).enumerate() {
        let pid = id.map(|x| x as i64).unwrap_or(-1);
        w.write_record([i.to_string(), c.to_string(), pid.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
