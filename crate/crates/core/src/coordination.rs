//! Inter-tier coordination: no coordination, ON/OFF, offloading and greedy
//! selection of a link set on which treating interference as noise is
//! optimal.
//!
//! A TIN link is either a macro group (power `P0/S` per stream, direct gain
//! `D_mc`) or a small cell (power `P1/S-bar`, direct gain `D_sc`). Cross gains
//! come straight from the [`LinkGainTable`].

use std::collections::BTreeMap;

use crate::detequiv::LinkGainTable;
use crate::error::{Error, Result};

/// Small cells stay on all the time.
pub fn policy_none(table: &LinkGainTable) -> Vec<usize> {
    table.small_cells().to_vec()
}

/// Small cells that pass both the received- and caused-interference tests
/// against the macro schedule `selected`.
pub fn policy_onoff(
    selected: &[usize],
    table: &LinkGainTable,
    epsilon1: f64,
    epsilon2: f64,
    p0: f64,
    p1: f64,
) -> Vec<usize> {
    let s: usize = selected.iter().map(|&g| table.streams(g)).sum();
    if s == 0 {
        return policy_none(table);
    }
    let per_stream = p0 / s as f64;
    let sc_per_stream = p1 / table.sc_streams() as f64;
    table
        .small_cells()
        .iter()
        .copied()
        .filter(|&f| {
            let received: f64 = selected
                .iter()
                .map(|&g| table.streams(g) as f64 * table.j_mc(f, g))
                .sum();
            per_stream * received <= epsilon1 * table.d_sc(f) * sc_per_stream
                && selected
                    .iter()
                    .all(|&g| table.j_sc(g, f) * p1 <= epsilon2 * table.d_mc(g) * per_stream)
        })
        .collect()
}

/// Strongest small cell of group `g` (ties to the lowest index).
pub fn strongest_small_cell(g: usize, table: &LinkGainTable) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &f in table.small_cells() {
        let a = table.j_sc(g, f);
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((f, a));
        }
    }
    best.map(|(f, _)| f)
}

/// Offload map `group -> host small cell`.
///
/// A macro group moves to its strongest small cell when the isolated small-cell
/// signal beats `gamma` times the isolated macro signal.
pub fn policy_offload(table: &LinkGainTable, gamma: f64, p0: f64, p1: f64) -> BTreeMap<usize, usize> {
    let sc_per_stream = p1 / table.sc_streams() as f64;
    table
        .macro_groups()
        .into_iter()
        .filter_map(|g| {
            let f = strongest_small_cell(g, table)?;
            let alone = table.d_mc(g) * p0 / table.streams(g) as f64;
            (table.d_sc_to(g, f) * sc_per_stream > gamma * alone).then_some((g, f))
        })
        .collect()
}

/// Per small cell, the groups sharing its air time: its own group first,
/// then absorbed groups ascending.
pub fn tdma_groups(offloaded: &BTreeMap<usize, usize>, table: &LinkGainTable) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = table.small_cells().iter().map(|&f| (f, vec![f])).collect();
    for (&g, &f) in offloaded {
        map.entry(f).or_default().push(g);
    }
    map
}

/// A set of transmit/receive pairs with `xi[i * n + j]` the gain from
/// transmitter `i` to receiver `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinLinkView {
    pub direct: Vec<f64>,
    pub power: Vec<f64>,
    pub xi: Vec<f64>,
}

impl TinLinkView {
    pub fn new(direct: Vec<f64>, power: Vec<f64>, xi: Vec<f64>) -> Self {
        let n = direct.len();
        assert!(power.len() == n && xi.len() == n * n);
        debug_assert!(direct.iter().chain(&xi).all(|&x| x >= 0.0));
        Self { direct, power, xi }
    }

    /// Links induced by a macro schedule and an active small-cell set,
    /// macro groups first.
    pub fn induced(table: &LinkGainTable, selected: &[usize], active: &[usize], p0: f64, p1: f64) -> Self {
        let s: usize = selected.iter().map(|&g| table.streams(g)).sum();
        let p = if s == 0 { 0.0 } else { p0 / s as f64 };
        let q = p1 / table.sc_streams() as f64;
        let links: Vec<Link> = selected
            .iter()
            .map(|&g| Link::Macro(g))
            .chain(active.iter().map(|&f| Link::Small(f)))
            .collect();
        let n = links.len();
        let mut xi = vec![0.0; n * n];
        for (i, &tx) in links.iter().enumerate() {
            for (j, &rx) in links.iter().enumerate() {
                if i != j {
                    xi[i * n + j] = cross(table, tx, rx);
                }
            }
        }
        Self::new(
            links.iter().map(|&l| direct(table, l)).collect(),
            links.iter().map(|&l| if l.is_macro() { p } else { q }).collect(),
            xi,
        )
    }

    pub fn len(&self) -> usize {
        self.direct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direct.is_empty()
    }
}

/// Pairwise TIN-optimality test: every link's signal must dominate the
/// product of its strongest caused and strongest received interference.
pub fn tin_condition_holds(links: &TinLinkView) -> bool {
    let n = links.len();
    (0..n).all(|i| {
        let mut caused = 0.0f64;
        let mut received = 0.0f64;
        for j in (0..n).filter(|&j| j != i) {
            caused = caused.max(links.xi[i * n + j] * links.power[i]);
            received = received.max(links.xi[j * n + i] * links.power[j]);
        }
        links.direct[i] * links.power[i] >= caused * received
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    Macro(usize),
    Small(usize),
}

impl Link {
    fn is_macro(self) -> bool {
        matches!(self, Link::Macro(_))
    }
}

fn direct(table: &LinkGainTable, l: Link) -> f64 {
    match l {
        Link::Macro(g) => table.d_mc(g),
        Link::Small(f) => table.d_sc(f),
    }
}

/// Gain from the transmitter of `tx` to the receivers of `rx`.
fn cross(table: &LinkGainTable, tx: Link, rx: Link) -> f64 {
    let victim = match rx {
        Link::Macro(g) | Link::Small(g) => g,
    };
    match tx {
        Link::Macro(g) => table.i_mc(victim, g),
        Link::Small(f) => table.j_sc(victim, f),
    }
}

/// A link already in the TIN set with running interference maxima.
#[derive(Debug, Clone, Copy)]
struct Member {
    link: Link,
    recv_macro: f64,
    recv_small: f64,
    caused: f64,
}

struct TinState<'a> {
    table: &'a LinkGainTable,
    p0: f64,
    q: f64,
    members: Vec<Member>,
    streams: usize,
}

impl<'a> TinState<'a> {
    fn macro_power(&self, extra_streams: usize) -> f64 {
        let s = self.streams + extra_streams;
        if s == 0 {
            0.0
        } else {
            self.p0 / s as f64
        }
    }

    /// Sum of `ln kappa` over every member and the candidate itself, or
    /// `None` if some kappa is at most one. A zero denominator counts as an
    /// infinite kappa.
    fn score(&self, cand: Link) -> Option<f64> {
        let p = self.macro_power(match cand {
            Link::Macro(g) => self.table.streams(g),
            Link::Small(_) => 0,
        });
        let q = self.q;
        let power = |l: Link| if l.is_macro() { p } else { q };
        let pc = power(cand);
        let mut total = 0.0;
        let mut self_recv = 0.0f64;
        let mut self_caused = 0.0f64;
        for m in &self.members {
            let pl = power(m.link);
            let to_member = cross(self.table, cand, m.link);
            let from_member = cross(self.table, m.link, cand);
            let recv = (p * m.recv_macro).max(q * m.recv_small).max(pc * to_member);
            let caused = pl * m.caused.max(from_member);
            total += ln_kappa(direct(self.table, m.link) * pl, recv * caused)?;
            self_recv = self_recv.max(pl * from_member);
            self_caused = self_caused.max(to_member);
        }
        total += ln_kappa(direct(self.table, cand) * pc, self_recv * pc * self_caused)?;
        Some(total)
    }

    fn add(&mut self, cand: Link) {
        let mut fresh = Member {
            link: cand,
            recv_macro: 0.0,
            recv_small: 0.0,
            caused: 0.0,
        };
        for m in &mut self.members {
            let to_member = cross(self.table, cand, m.link);
            let from_member = cross(self.table, m.link, cand);
            if cand.is_macro() {
                m.recv_macro = m.recv_macro.max(to_member);
            } else {
                m.recv_small = m.recv_small.max(to_member);
            }
            m.caused = m.caused.max(from_member);
            if m.link.is_macro() {
                fresh.recv_macro = fresh.recv_macro.max(from_member);
            } else {
                fresh.recv_small = fresh.recv_small.max(from_member);
            }
            fresh.caused = fresh.caused.max(to_member);
        }
        if let Link::Macro(g) = cand {
            self.streams += self.table.streams(g);
        }
        self.members.push(fresh);
    }
}

fn ln_kappa(numerator: f64, denominator: f64) -> Option<f64> {
    if denominator <= 0.0 {
        return Some(f64::INFINITY);
    }
    let kappa = numerator / denominator;
    (kappa > 1.0).then(|| kappa.ln())
}

/// Best candidate of one tier: highest score, ties to the lowest index.
fn best_of(scored: &[(usize, f64)]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &(c, s) in scored {
        if best.is_none_or(|(bc, bs)| s > bs || (s == bs && c < bc)) {
            best = Some((c, s));
        }
    }
    best
}

/// Greedy TIN selection of macro groups and active small cells.
///
/// The seed is the strongest highest-priority link. Each round then adds the
/// highest-priority candidate that keeps the whole set TIN-feasible, breaking
/// priority ties by the product of the kappa margins. A macro candidate wins
/// a cross-tier tie only with a strictly larger product. Returns
/// `(macro groups, active small cells)`, both in selection order.
pub fn tin_select(
    priorities: &[u64],
    macro_candidates: &[usize],
    sc_candidates: &[usize],
    table: &LinkGainTable,
    g_max: usize,
    p0: f64,
    p1: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let q = p1 / table.sc_streams() as f64;
    let macro_pool: &[usize] = if g_max == 0 { &[] } else { macro_candidates };
    let top = macro_pool
        .iter()
        .chain(sc_candidates)
        .map(|&g| priorities[g])
        .max()
        .ok_or(Error::NoCandidates)?;
    let strongest = |pool: &[usize], gain: &dyn Fn(usize) -> f64| {
        let scored: Vec<(usize, f64)> = pool
            .iter()
            .filter(|&&g| priorities[g] == top)
            .map(|&g| (g, gain(g)))
            .collect();
        best_of(&scored)
    };
    let g_seed = strongest(macro_pool, &|g| table.d_mc(g) * p0 / table.streams(g) as f64);
    let f_seed = strongest(sc_candidates, &|f| table.d_sc(f) * q);
    let seed = match (g_seed, f_seed) {
        (Some((g, dg)), Some((_, df))) if dg > df => Link::Macro(g),
        (_, Some((f, _))) => Link::Small(f),
        (Some((g, _)), None) => Link::Macro(g),
        (None, None) => unreachable!("top priority is attained"),
    };

    let mut state = TinState {
        table,
        p0,
        q,
        members: Vec::new(),
        streams: 0,
    };
    state.add(seed);
    let mut macro_left: Vec<usize> = macro_pool.iter().copied().filter(|&g| Link::Macro(g) != seed).collect();
    let mut small_left: Vec<usize> = sc_candidates
        .iter()
        .copied()
        .filter(|&f| Link::Small(f) != seed)
        .collect();
    macro_left.sort_unstable();
    small_left.sort_unstable();

    loop {
        let macro_open = state.members.iter().filter(|m| m.link.is_macro()).count() < g_max;
        let mut levels: Vec<u64> = small_left
            .iter()
            .chain(if macro_open { &macro_left[..] } else { &[] })
            .map(|&g| priorities[g])
            .collect();
        levels.sort_unstable_by(|a, b| b.cmp(a));
        levels.dedup();
        // Candidates are scanned level by level; the first level holding a
        // feasible candidate is the highest priority among feasible ones.
        let mut pick = None;
        for c in levels {
            let score_tier = |pool: &[usize], wrap: fn(usize) -> Link| {
                let scored: Vec<(usize, f64)> = pool
                    .iter()
                    .filter(|&&g| priorities[g] == c)
                    .filter_map(|&g| state.score(wrap(g)).map(|s| (g, s)))
                    .collect();
                best_of(&scored)
            };
            let g_best = if macro_open {
                score_tier(&macro_left, Link::Macro)
            } else {
                None
            };
            let f_best = score_tier(&small_left, Link::Small);
            pick = match (g_best, f_best) {
                (Some((g, sg)), Some((_, sf))) if sg > sf => Some(Link::Macro(g)),
                (_, Some((f, _))) => Some(Link::Small(f)),
                (Some((g, _)), None) => Some(Link::Macro(g)),
                (None, None) => None,
            };
            if pick.is_some() {
                break;
            }
        }
        let Some(link) = pick else {
            break;
        };
        state.add(link);
        match link {
            Link::Macro(g) => macro_left.retain(|&x| x != g),
            Link::Small(f) => small_left.retain(|&x| x != f),
        }
    }

    let mut groups = Vec::new();
    let mut active = Vec::new();
    for m in &state.members {
        match m.link {
            Link::Macro(g) => groups.push(g),
            Link::Small(f) => active.push(f),
        }
    }
    Ok((groups, active))
}

/// Left-out candidates that could join the TIN set without breaking the
/// condition. Empty for a maximal set.
#[allow(clippy::too_many_arguments)]
pub fn tin_extensions(
    selected: &[usize],
    active: &[usize],
    macro_candidates: &[usize],
    sc_candidates: &[usize],
    table: &LinkGainTable,
    g_max: usize,
    p0: f64,
    p1: f64,
) -> Vec<usize> {
    let mut out = Vec::new();
    if selected.len() < g_max {
        for &g in macro_candidates.iter().filter(|g| !selected.contains(g)) {
            let mut grown = selected.to_vec();
            grown.push(g);
            if tin_condition_holds(&TinLinkView::induced(table, &grown, active, p0, p1)) {
                out.push(g);
            }
        }
    }
    for &f in sc_candidates.iter().filter(|f| !active.contains(f)) {
        let mut grown = active.to_vec();
        grown.push(f);
        if tin_condition_holds(&TinLinkView::induced(table, selected, &grown, p0, p1)) {
            out.push(f);
        }
    }
    out
}
