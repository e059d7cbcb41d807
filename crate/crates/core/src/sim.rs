//! Drop and slot driver.
//!
//! A drop samples one layout, builds every deterministic-equivalent gain once
//! and then runs `slots_per_drop` scheduling slots. Per-slot group rates are
//! `streams * log2(1 + SINR)`; small cells split their slot equally among the
//! groups they serve. The long-term rate of a group is its slot average.
//!
//! Randomness: drop `k` of master seed `s` uses ChaCha8 stream `2k` of seed
//! `s` for the layout and stream `2k + 1` for the slots, so all policies see
//! the same layouts and the same scheduler coin flips.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::PathGainMatrix;
use crate::coordination::{
    policy_none, policy_offload, policy_onoff, tdma_groups, tin_condition_holds, tin_select, TinLinkView,
};
use crate::detequiv::{macro_sinr_de, served_sinr_de, LinkGainTable, MacroChannels};
use crate::error::{Error, Result};
use crate::geometry::{assign_small_cells, sample_layout, Deployment, Layout, SimParams};
use crate::scheduler::{select_user_groups, update_priorities, ScheduleState};
use crate::stats::mean_ci;

/// Inter-tier coordination policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    None,
    OnOff,
    Offload,
    Tin,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::None, Policy::OnOff, Policy::Offload, Policy::Tin];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::None => "none",
            Policy::OnOff => "onoff",
            Policy::Offload => "offload",
            Policy::Tin => "tin",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Policy::None),
            "onoff" | "on/off" => Ok(Policy::OnOff),
            "offload" => Ok(Policy::Offload),
            "tin" => Ok(Policy::Tin),
            other => Err(format!("unknown policy `{other}` (none|onoff|offload|tin)")),
        }
    }
}

/// How a group is served over a drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Macro,
    SmallCell,
    Offloaded,
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupKind::Macro => "macro",
            GroupKind::SmallCell => "smallcell",
            GroupKind::Offloaded => "offloaded",
        })
    }
}

/// Schedule and SINRs of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub selected: Vec<usize>,
    pub active: Vec<usize>,
    /// SINR of each selected macro group, aligned with `selected`.
    pub macro_sinr: Vec<f64>,
    /// `(group, host, SINR)` for every small-cell-served group.
    pub sc_sinr: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropResult {
    /// Long-term rate of every group in bit/s/Hz.
    pub rates: Vec<f64>,
    pub kinds: Vec<GroupKind>,
    pub macro_total: f64,
    pub smallcell_total: f64,
    /// Share of macro groups absorbed by a small cell.
    pub offload_fraction: f64,
    pub seed: u64,
    pub index: u64,
    pub config_hash: String,
    /// Filled only by [`DropContext::run_recorded`].
    pub slots: Vec<SlotRecord>,
}

fn drop_rng(master_seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(2 * index + stream);
    rng
}

/// Everything about one drop that does not depend on the policy.
#[derive(Debug, Clone)]
pub struct DropContext {
    pub layout: Layout,
    pub table: LinkGainTable,
    pub seed: u64,
    pub index: u64,
}

impl DropContext {
    /// Samples drop `index` of `master_seed`.
    pub fn sample(params: &SimParams, deployment: Deployment, master_seed: u64, index: u64) -> Result<Self> {
        let mut rng = drop_rng(master_seed, index, 0);
        let layout = sample_layout(params, &mut rng)?;
        let layout = assign_small_cells(&layout, deployment, params.n_small_cells, &mut rng)?;
        let mut ctx = Self::from_layout(layout, params)?;
        ctx.seed = master_seed;
        ctx.index = index;
        Ok(ctx)
    }

    pub fn from_layout(layout: Layout, params: &SimParams) -> Result<Self> {
        let gains = PathGainMatrix::build(&layout, params);
        let channels = MacroChannels::build(&layout, &gains, params)?;
        let table = LinkGainTable::build(&layout, params, &channels, gains)?;
        Ok(Self {
            layout,
            table,
            seed: 0,
            index: 0,
        })
    }

    /// Runs the slots of this drop. Only the per-slot fields of `params`
    /// (`max_groups`, thresholds, `gamma`, `slots_per_drop`) may differ from
    /// the ones the context was built with.
    pub fn run(&self, policy: Policy, params: &SimParams) -> Result<DropResult> {
        self.run_inner(policy, params, None)
    }

    /// Like [`DropContext::run`] and keeps every slot's schedule and SINRs.
    pub fn run_recorded(&self, policy: Policy, params: &SimParams) -> Result<DropResult> {
        let mut slots = Vec::with_capacity(params.slots_per_drop);
        let mut out = self.run_inner(policy, params, Some(&mut slots))?;
        out.slots = slots;
        Ok(out)
    }

    fn run_inner(
        &self,
        policy: Policy,
        params: &SimParams,
        mut record: Option<&mut Vec<SlotRecord>>,
    ) -> Result<DropResult> {
        let table = &self.table;
        let n = table.len();
        let (p0, p1) = (params.macro_power(), params.sc_power());
        let s_bar = table.sc_streams() as f64;
        let mut rng = drop_rng(self.seed, self.index, 1);
        let mut state = ScheduleState::new(n);
        if policy == Policy::Offload {
            state.offloaded = policy_offload(table, params.gamma, p0, p1);
        }
        let tdma = tdma_groups(&state.offloaded, table);
        let schedulable = state.schedulable(table);
        let small: Vec<usize> = table.small_cells().to_vec();
        let mut rate_sum = vec![0.0; n];

        for _ in 0..params.slots_per_drop {
            let (selected, active) = match policy {
                Policy::Tin if !(schedulable.is_empty() && small.is_empty()) => {
                    let (g, f) = tin_select(
                        &state.priorities,
                        &schedulable,
                        &small,
                        table,
                        params.max_groups,
                        p0,
                        p1,
                    )?;
                    assert!(
                        tin_condition_holds(&TinLinkView::induced(table, &g, &f, p0, p1)),
                        "TIN selection violated the pairwise condition"
                    );
                    (g, f)
                }
                Policy::Tin => (Vec::new(), Vec::new()),
                _ => {
                    let selected = if schedulable.is_empty() || params.max_groups == 0 {
                        Vec::new()
                    } else {
                        select_user_groups(&state.priorities, &schedulable, params.max_groups, table, p0, &mut rng)?
                    };
                    let active = match policy {
                        Policy::OnOff => policy_onoff(&selected, table, params.epsilon1, params.epsilon2, p0, p1),
                        _ => policy_none(table),
                    };
                    (selected, active)
                }
            };

            let mut slot = SlotRecord {
                selected: selected.clone(),
                active: active.clone(),
                macro_sinr: Vec::with_capacity(selected.len()),
                sc_sinr: Vec::new(),
            };
            for &g in &selected {
                let sinr = macro_sinr_de(g, &selected, &active, table, p0, p1)?;
                rate_sum[g] += table.streams(g) as f64 * (1.0 + sinr).log2();
                slot.macro_sinr.push(sinr);
            }
            for &f in &active {
                let members = &tdma[&f];
                let share = 1.0 / members.len() as f64;
                for &g in members {
                    let sinr = served_sinr_de(g, f, &selected, &active, table, p0, p1)?;
                    rate_sum[g] += share * s_bar * (1.0 + sinr).log2();
                    slot.sc_sinr.push((g, f, sinr));
                }
            }

            state.selected = selected;
            state.active = active;
            update_priorities(&mut state.priorities, &schedulable, &state.selected);
            if policy == Policy::Tin {
                update_priorities(&mut state.priorities, &small, &state.active);
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(slot);
            }
        }

        let slots = params.slots_per_drop.max(1) as f64;
        let rates: Vec<f64> = rate_sum.iter().map(|r| r / slots).collect();
        let kinds: Vec<GroupKind> = (0..n)
            .map(|g| {
                if !table.is_macro_schedulable(g) {
                    GroupKind::SmallCell
                } else if state.offloaded.contains_key(&g) {
                    GroupKind::Offloaded
                } else {
                    GroupKind::Macro
                }
            })
            .collect();
        let macro_total = (0..n).filter(|&g| kinds[g] == GroupKind::Macro).map(|g| rates[g]).sum();
        let smallcell_total = (0..n).filter(|&g| kinds[g] != GroupKind::Macro).map(|g| rates[g]).sum();
        let n_macro = table.macro_groups().len();
        Ok(DropResult {
            rates,
            kinds,
            macro_total,
            smallcell_total,
            offload_fraction: if n_macro == 0 {
                0.0
            } else {
                state.offloaded.len() as f64 / n_macro as f64
            },
            seed: self.seed,
            index: self.index,
            config_hash: params.digest(),
            slots: Vec::new(),
        })
    }
}

/// Samples drop `index` and runs `policy` on it.
pub fn run_drop(
    params: &SimParams,
    deployment: Deployment,
    policy: Policy,
    master_seed: u64,
    index: u64,
) -> Result<DropResult> {
    params.validate()?;
    DropContext::sample(params, deployment, master_seed, index)?.run(policy, params)
}

/// Sample mean with its 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci: f64,
}

impl Estimate {
    fn of(xs: &[f64]) -> Self {
        let (mean, ci) = mean_ci(xs);
        Self { mean, ci }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub drops: usize,
    pub macro_total: Estimate,
    pub smallcell_total: Estimate,
    pub total: Estimate,
    pub offload_fraction: Estimate,
    /// Pooled per-group rates, sorted by rate (the empirical CDF samples).
    pub cdf: Vec<(GroupKind, f64)>,
}

pub fn aggregate(drops: &[DropResult]) -> Result<Summary> {
    if drops.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let pick = |f: fn(&DropResult) -> f64| drops.iter().map(f).collect::<Vec<f64>>();
    let mut cdf: Vec<(GroupKind, f64)> = drops
        .iter()
        .flat_map(|d| d.kinds.iter().copied().zip(d.rates.iter().copied()))
        .collect();
    cdf.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(Summary {
        drops: drops.len(),
        macro_total: Estimate::of(&pick(|d| d.macro_total)),
        smallcell_total: Estimate::of(&pick(|d| d.smallcell_total)),
        total: Estimate::of(&pick(|d| d.macro_total + d.smallcell_total)),
        offload_fraction: Estimate::of(&pick(|d| d.offload_fraction)),
        cdf,
    })
}

/// Distance of the macro group in the two-group toy layout, in meters.
pub const TOY_MACRO_DISTANCE: f64 = 200.0;

/// Two-group toy layout: a macro group at [`TOY_MACRO_DISTANCE`] and angle
/// `rotation`, and a small-cell group at distance `r` (meters, from the base
/// station) and angle `rotation + theta`.
pub fn toy_layout(params: &SimParams, r: f64, theta: f64, rotation: f64) -> Result<Layout> {
    let polar = |d: f64, a: f64| [d * a.cos(), d * a.sin()];
    Layout::from_positions(
        vec![polar(TOY_MACRO_DISTANCE, rotation), polar(r, rotation + theta)],
        &[1],
        params.scatter_radius,
    )
}

/// `(macro group rate, small-cell group rate)` of the toy layout when both
/// are served without coordination.
pub fn toy_rates(params: &SimParams, r: f64, theta: f64, rotation: f64) -> Result<(f64, f64)> {
    let ctx = DropContext::from_layout(toy_layout(params, r, theta, rotation)?, params)?;
    let (p0, p1) = (params.macro_power(), params.sc_power());
    let t = &ctx.table;
    let mc = macro_sinr_de(0, &[0], &[1], t, p0, p1)?;
    let sc = served_sinr_de(1, 1, &[0], &[1], t, p0, p1)?;
    Ok((
        t.streams(0) as f64 * (1.0 + mc).log2(),
        t.sc_streams() as f64 * (1.0 + sc).log2(),
    ))
}

/// Toy-layout rates averaged over `drops` random rotations of the whole
/// layout in `[-pi/6, pi/6]` around broadside.
pub fn toy_rates_averaged<R: Rng + ?Sized>(
    params: &SimParams,
    r: f64,
    theta: f64,
    drops: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let mut acc = (0.0, 0.0);
    for _ in 0..drops {
        let rot = rng.random_range(-PI / 6.0..PI / 6.0);
        let (m, s) = toy_rates(params, r, theta, rot)?;
        acc.0 += m;
        acc.1 += s;
    }
    Ok((acc.0 / drops as f64, acc.1 / drops as f64))
}
