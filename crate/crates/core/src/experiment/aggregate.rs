use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::session::TrialRecord;
use crate::error::Result;
use crate::inference::{log_speed, Condition, Observation};

/// Proportion of trials in one `(du, dz)` cell where the speed-varied
/// stimulus was judged faster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub du: f64,
    pub dz: f64,
    pub n: u32,
    pub n_yes: u32,
    pub phat: f64,
}

// Offsets come from a config list, so bit patterns group exactly; the
// total order sorts them numerically.
fn cell_key(du: f64, dz: f64) -> (OrdF64, OrdF64) {
    (OrdF64(du), OrdF64(dz))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Summaries sorted by `(du, dz)`; independent of trial order.
pub fn aggregate(trials: &[TrialRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(OrdF64, OrdF64), (u32, u32)> = BTreeMap::new();
    for t in trials {
        let e = cells.entry(cell_key(t.trial.du, t.trial.dz)).or_default();
        e.0 += 1;
        e.1 += t.chose_speed_varied() as u32;
    }
    cells
        .into_iter()
        .map(|((du, dz), (n, k))| CellSummary {
            du: du.0,
            dz: dz.0,
            n,
            n_yes: k,
            phat: k as f64 / n as f64,
        })
        .collect()
}

pub fn to_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from("du,dz,n,phat\n");
    for c in cells {
        out.push_str(&format!("{},{},{},{}\n", c.du, c.dz, c.n, c.phat));
    }
    out
}

/// Groups cells into one psychometric curve per frequency offset, with
/// abscissa `log_speed(u★ + du) − log_speed(u★)`.
pub fn observations(config: &ExperimentConfig, cells: &[CellSummary]) -> Result<Vec<(Condition, Vec<Observation>)>> {
    let ref_log = log_speed(config.u_star)?;
    let mut by_dz: BTreeMap<OrdF64, Vec<Observation>> = BTreeMap::new();
    for c in cells {
        by_dz.entry(OrdF64(c.dz)).or_default().push(Observation {
            x: log_speed(config.u_star + c.du)? - ref_log,
            n_yes: c.n_yes,
            n: c.n,
        });
    }
    Ok(by_dz
        .into_iter()
        .map(|(dz, obs)| {
            (
                Condition {
                    z: config.z_star + dz.0,
                    z_star: config.z_star,
                    u_star: config.u_star,
                    t_star: config.t_star,
                },
                obs,
            )
        })
        .collect())
}
