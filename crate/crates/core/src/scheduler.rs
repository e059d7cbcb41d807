//! Priority-driven, interference-aware selection of macrocell user groups.

use std::collections::BTreeMap;

use rand::Rng;

use crate::channel::AngularInterval;
use crate::detequiv::LinkGainTable;
use crate::error::{Error, Result};

/// Scheduler state carried across slots of one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    /// Priority `c_g >= 1` of every group.
    pub priorities: Vec<u64>,
    /// Macro groups served in the current slot, in selection order.
    pub selected: Vec<usize>,
    /// Active small cells in the current slot.
    pub active: Vec<usize>,
    /// Offloaded group to the small cell (group index) that absorbs it.
    pub offloaded: BTreeMap<usize, usize>,
}

impl ScheduleState {
    pub fn new(n_groups: usize) -> Self {
        Self {
            priorities: vec![1; n_groups],
            selected: Vec::new(),
            active: Vec::new(),
            offloaded: BTreeMap::new(),
        }
    }

    /// `S = sum of S_g over the selected groups`.
    pub fn total_streams(&self, table: &LinkGainTable) -> usize {
        self.selected.iter().map(|&g| table.streams(g)).sum()
    }

    /// Macro groups that have not been offloaded.
    pub fn schedulable(&self, table: &LinkGainTable) -> Vec<usize> {
        table
            .macro_groups()
            .into_iter()
            .filter(|g| !self.offloaded.contains_key(g))
            .collect()
    }
}

/// True iff the closed intervals do not intersect.
pub fn angular_interval_disjoint(a: &AngularInterval, b: &AngularInterval) -> bool {
    !a.overlaps(b)
}

/// Greedy group selection for one slot.
///
/// Starts from a uniformly random highest-priority candidate, then repeatedly
/// keeps the candidates disjoint from every selected group and adds, among
/// those with the highest priority, the one whose worst-case interference to
/// the selected groups (with the macro power re-divided over the new stream
/// total) is smallest. Ties go to the lowest group index.
pub fn select_user_groups<R: Rng + ?Sized>(
    priorities: &[u64],
    candidates: &[usize],
    g_max: usize,
    table: &LinkGainTable,
    p0: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let top = candidates
        .iter()
        .map(|&g| priorities[g])
        .max()
        .ok_or(Error::NoCandidates)?;
    let mut seeds: Vec<usize> = candidates.iter().copied().filter(|&g| priorities[g] == top).collect();
    seeds.sort_unstable();
    let first = seeds[rng.random_range(0..seeds.len())];
    let mut selected = vec![first];
    let mut s_total = table.streams(first);
    let mut residual: Vec<usize> = candidates.iter().copied().filter(|&g| g != first).collect();
    residual.sort_unstable();
    while selected.len() < g_max {
        let last = table.interval(*selected.last().expect("nonempty"));
        residual.retain(|&g| angular_interval_disjoint(&table.interval(g), &last));
        let Some(c_max) = residual.iter().map(|&g| priorities[g]).max() else {
            break;
        };
        let mut best: Option<(usize, f64)> = None;
        for &cand in residual.iter().filter(|&&g| priorities[g] == c_max) {
            let s_cand = table.streams(cand) as f64;
            let scale = p0 * s_cand / (s_total as f64 + s_cand);
            let i_max = selected
                .iter()
                .map(|&g| scale * table.i_mc(g, cand))
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_none_or(|(_, b)| i_max < b) {
                best = Some((cand, i_max));
            }
        }
        let (chosen, _) = best.expect("c_max is attained");
        selected.push(chosen);
        s_total += table.streams(chosen);
        residual.retain(|&g| g != chosen);
    }
    Ok(selected)
}

/// Adds one to the priority of every schedulable group that was not selected.
pub fn update_priorities(priorities: &mut [u64], schedulable: &[usize], selected: &[usize]) {
    for &g in schedulable {
        if !selected.contains(&g) {
            priorities[g] += 1;
        }
    }
}
