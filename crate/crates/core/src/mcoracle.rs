//! Finite-antenna Monte-Carlo reference for the deterministic equivalents.
//!
//! Users of a macro group are drawn as `h = U Lambda^{1/2} w` with
//! `w ~ CN(0, I)`. Only the projections `B_g^H h` enter any SINR, so the
//! setup stores `A_{g,x} = B_g^H U_x Lambda_x^{1/2}` for every selected group
//! `g` and receiver `x`, and full `M`-dimensional channels are never formed.
//! Small-cell channels are i.i.d. with per-entry variance `a(x, f)`.
//! Precoders are zero-forcing. Macro precoders are scaled by a single factor
//! per group so that `||P_g||_F^2 = S_g`, which gives every stream of a group
//! the same received power; unit-norm columns are available as an
//! alternative. Small-cell precoders always have unit-norm columns.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::PathGainMatrix;
use crate::detequiv::{macro_sinr_de, smallcell_sinr_de, LinkGainTable, MacroChannels};
use crate::error::{Error, Result};
use crate::geometry::{assign_small_cells, sample_layout, Deployment, SimParams};
use crate::linalg::{CMatrix, CVector};
use crate::stats::median;

/// Matrix of i.i.d. `CN(0, variance)` entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMatrix {
    let s = variance.sqrt() * FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// One full channel vector `factor * w`, `factor = U Lambda^{1/2}`.
pub fn draw_user<R: Rng + ?Sized>(factor: &CMatrix, rng: &mut R) -> CVector {
    let w = complex_gaussian(factor.ncols(), 1, 1.0, rng);
    (factor * w).column(0).into_owned()
}

/// Scaling of a zero-forcing precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// One scalar per group, `||P||_F^2` equal to the number of streams.
    #[default]
    Group,
    /// Every column has unit norm.
    Column,
}

/// Zero-forcing precoder `H (H^H H)^{-1}` with unit-norm columns.
pub fn zf_precoder(h: &CMatrix) -> Result<CMatrix> {
    zf_precoder_with(h, Normalization::Column)
}

/// Zero-forcing precoder `H (H^H H)^{-1}` with the given scaling.
pub fn zf_precoder_with(h: &CMatrix, norm: Normalization) -> Result<CMatrix> {
    let gram = h.adjoint() * h;
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let chol = gram.cholesky().ok_or(Error::ResampleUsers)?;
    let l_diag_min = (0..h.ncols())
        .map(|i| chol.l_dirty()[(i, i)].re)
        .fold(f64::INFINITY, f64::min);
    let pivot = l_diag_min * l_diag_min;
    if pivot.is_nan() || pivot <= 1e-12 * scale {
        return Err(Error::ResampleUsers);
    }
    let mut p = h * chol.inverse();
    match norm {
        Normalization::Column => {
            for mut col in p.column_iter_mut() {
                let n = col.norm();
                col /= Complex64::new(n, 0.0);
            }
        }
        Normalization::Group => {
            let scale = (h.ncols() as f64).sqrt() / p.norm();
            p *= Complex64::new(scale, 0.0);
        }
    }
    Ok(p)
}

/// Receiver in a validation slot: a macro-served group or an active small cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Macro(usize),
    SmallCell(usize),
}

impl Receiver {
    pub fn group(self) -> usize {
        match self {
            Receiver::Macro(g) | Receiver::SmallCell(g) => g,
        }
    }
}

/// Second-order data of one slot, reused across fading draws.
#[derive(Debug, Clone)]
pub struct OracleSetup {
    selected: Vec<usize>,
    active: Vec<usize>,
    receivers: Vec<Receiver>,
    users: Vec<usize>,
    /// `KL rank` of each receiver.
    kl_rank: Vec<usize>,
    /// `proj[i][j] = B_{selected i}^H U_j Lambda_j^{1/2}`.
    proj: Vec<Vec<CMatrix>>,
    /// `sc_var[j][a] = a(receiver j, active a)`.
    sc_var: Vec<Vec<f64>>,
    macro_streams: Vec<usize>,
    sc_streams: usize,
    sc_antennas: usize,
    normalization: Normalization,
}

/// One fading realization of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `effective[i][j] = B_{selected i}^H H_j`, one column per user of receiver `j`.
    pub effective: Vec<Vec<CMatrix>>,
    /// Channels from each active small cell to its own users (`L x S-bar`).
    pub sc_direct: Vec<CMatrix>,
    /// `sc_cross[j][a]`: channels from active small cell `a` to the users of
    /// receiver `j`; empty for a receiver's own cell.
    pub sc_cross: Vec<Vec<CMatrix>>,
}

/// Precoders of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    /// `P_g` per selected group (`b_g x S_g`).
    pub macro_zf: Vec<CMatrix>,
    /// `Q_f` per active small cell (`L x S-bar`).
    pub small_cell: Vec<CMatrix>,
}

/// Per-user SINR samples of one realization, indexed like the receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSinr {
    pub per_receiver: Vec<Vec<UserSinr>>,
}

/// Received powers of one user, noise power one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSinr {
    pub signal: f64,
    pub macro_interference: f64,
    pub sc_interference: f64,
}

impl UserSinr {
    pub fn sinr(&self) -> f64 {
        self.signal / (1.0 + self.macro_interference + self.sc_interference)
    }
}

impl OracleSetup {
    pub fn new(
        channels: &MacroChannels,
        table: &LinkGainTable,
        selected: &[usize],
        active: &[usize],
        sc_antennas: usize,
    ) -> Self {
        let receivers: Vec<Receiver> = selected
            .iter()
            .map(|&g| Receiver::Macro(g))
            .chain(active.iter().map(|&f| Receiver::SmallCell(f)))
            .collect();
        let factors: Vec<CMatrix> = receivers
            .iter()
            .map(|r| channels.covariances[r.group()].kl_factor())
            .collect();
        let proj = selected
            .iter()
            .map(|&g| {
                let bh = channels.models[g].u_star.adjoint();
                factors.iter().map(|f| &bh * f).collect()
            })
            .collect();
        let users = receivers
            .iter()
            .map(|r| match r {
                Receiver::Macro(g) => table.streams(*g),
                Receiver::SmallCell(_) => table.sc_streams(),
            })
            .collect();
        let sc_var = receivers
            .iter()
            .map(|r| active.iter().map(|&f| table.j_sc(r.group(), f)).collect())
            .collect();
        Self {
            selected: selected.to_vec(),
            active: active.to_vec(),
            kl_rank: factors.iter().map(|f| f.ncols()).collect(),
            receivers,
            users,
            proj,
            sc_var,
            macro_streams: selected.iter().map(|&g| table.streams(g)).collect(),
            sc_streams: table.sc_streams(),
            sc_antennas,
            normalization: Normalization::default(),
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn receivers(&self) -> &[Receiver] {
        &self.receivers
    }

    /// Draws all channels of the slot.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let n_sel = self.selected.len();
        let mut effective = vec![Vec::with_capacity(self.receivers.len()); n_sel];
        let mut sc_cross = Vec::with_capacity(self.receivers.len());
        for (j, r) in self.receivers.iter().enumerate() {
            let w = complex_gaussian(self.kl_rank[j], self.users[j], 1.0, rng);
            for (i, row) in effective.iter_mut().enumerate() {
                row.push(&self.proj[i][j] * &w);
            }
            let own = match r {
                Receiver::SmallCell(f) => Some(*f),
                Receiver::Macro(_) => None,
            };
            sc_cross.push(
                self.active
                    .iter()
                    .zip(&self.sc_var[j])
                    .map(|(&f, &var)| {
                        if Some(f) == own {
                            CMatrix::zeros(self.sc_antennas, 0)
                        } else {
                            complex_gaussian(self.sc_antennas, self.users[j], var, rng)
                        }
                    })
                    .collect(),
            );
        }
        let sc_direct = self
            .active
            .iter()
            .enumerate()
            .map(|(a, _)| complex_gaussian(self.sc_antennas, self.sc_streams, self.sc_var[n_sel + a][a], rng))
            .collect();
        ChannelRealization {
            effective,
            sc_direct,
            sc_cross,
        }
    }

    /// Zero-forcing precoders for both tiers.
    pub fn precoders(&self, real: &ChannelRealization) -> Result<Precoders> {
        let macro_zf = (0..self.selected.len())
            .map(|i| zf_precoder_with(&real.effective[i][i], self.normalization))
            .collect::<Result<_>>()?;
        let small_cell = real.sc_direct.iter().map(zf_precoder).collect::<Result<_>>()?;
        Ok(Precoders { macro_zf, small_cell })
    }

    /// Per-user SINRs with equal per-stream powers `P0/S` and `P1/S-bar`.
    pub fn empirical_sinr(&self, real: &ChannelRealization, prec: &Precoders, p0: f64, p1: f64) -> EmpiricalSinr {
        let n_sel = self.selected.len();
        let s_total: usize = self.macro_streams.iter().sum();
        let pm = if s_total > 0 { p0 / s_total as f64 } else { 0.0 };
        let ps = p1 / self.sc_streams as f64;
        let per_receiver = (0..self.receivers.len())
            .map(|j| {
                // received power of every macro stream and small-cell stream, per user
                let macro_rx: Vec<CMatrix> = (0..n_sel)
                    .map(|i| real.effective[i][j].adjoint() * &prec.macro_zf[i])
                    .collect();
                let sc_rx: Vec<Option<CMatrix>> = real.sc_cross[j]
                    .iter()
                    .zip(&prec.small_cell)
                    .map(|(h, q)| (h.ncols() > 0).then(|| h.adjoint() * q))
                    .collect();
                let own_sc = (j >= n_sel).then(|| real.sc_direct[j - n_sel].adjoint() * &prec.small_cell[j - n_sel]);
                (0..self.users[j])
                    .map(|k| {
                        let mut macro_int = 0.0;
                        let mut signal = 0.0;
                        for (i, rx) in macro_rx.iter().enumerate() {
                            let row_power: f64 = rx.row(k).iter().map(|z| z.norm_sqr()).sum();
                            if i == j {
                                signal = rx[(k, k)].norm_sqr() * pm;
                                macro_int += (row_power - rx[(k, k)].norm_sqr()) * pm;
                            } else {
                                macro_int += row_power * pm;
                            }
                        }
                        let mut sc_int: f64 = sc_rx
                            .iter()
                            .flatten()
                            .map(|rx| rx.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() * ps)
                            .sum();
                        if let Some(rx) = &own_sc {
                            let row_power: f64 = rx.row(k).iter().map(|z| z.norm_sqr()).sum();
                            signal = rx[(k, k)].norm_sqr() * ps;
                            sc_int += (row_power - rx[(k, k)].norm_sqr()) * ps;
                        }
                        UserSinr {
                            signal,
                            macro_interference: macro_int,
                            sc_interference: sc_int,
                        }
                    })
                    .collect()
            })
            .collect();
        EmpiricalSinr { per_receiver }
    }

    /// Pooled SINR samples over `draws` realizations; singular draws are redrawn.
    pub fn sample<R: Rng + ?Sized>(&self, draws: usize, p0: f64, p1: f64, rng: &mut R) -> Result<Vec<Vec<UserSinr>>> {
        let mut pooled = vec![Vec::new(); self.receivers.len()];
        let mut done = 0;
        let mut failures = 0;
        while done < draws {
            let real = self.draw(rng);
            match self.precoders(&real) {
                Ok(prec) => {
                    let sinr = self.empirical_sinr(&real, &prec, p0, p1);
                    for (acc, s) in pooled.iter_mut().zip(sinr.per_receiver) {
                        acc.extend(s);
                    }
                    done += 1;
                }
                Err(Error::ResampleUsers) if failures < 10 * draws.max(1) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(pooled)
    }
}

/// DE SINR against the empirical median of one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupComparison {
    pub receiver: Receiver,
    pub de: f64,
    pub empirical_median: f64,
}

impl GroupComparison {
    pub fn rel_error(&self) -> f64 {
        (self.de - self.empirical_median).abs() / self.empirical_median
    }
}

/// Compares the DE SINRs of a slot with Monte-Carlo medians over `draws`.
#[allow(clippy::too_many_arguments)]
pub fn compare_de<R: Rng + ?Sized>(
    channels: &MacroChannels,
    table: &LinkGainTable,
    selected: &[usize],
    active: &[usize],
    sc_antennas: usize,
    draws: usize,
    p0: f64,
    p1: f64,
    rng: &mut R,
) -> Result<Vec<GroupComparison>> {
    let setup = OracleSetup::new(channels, table, selected, active, sc_antennas);
    let pooled = setup.sample(draws, p0, p1, rng)?;
    setup
        .receivers()
        .iter()
        .zip(pooled)
        .map(|(&receiver, samples)| {
            let de = match receiver {
                Receiver::Macro(g) => macro_sinr_de(g, selected, active, table, p0, p1)?,
                Receiver::SmallCell(f) => smallcell_sinr_de(f, selected, active, table, p0, p1)?,
            };
            Ok(GroupComparison {
                receiver,
                de,
                empirical_median: median(&samples.iter().map(UserSinr::sinr).collect::<Vec<_>>()),
            })
        })
        .collect()
}

/// Relative errors of one validation layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutValidation {
    pub selected: Vec<usize>,
    pub comparisons: Vec<GroupComparison>,
}

/// Samples `layouts` uniform layouts, serves up to `groups` randomly chosen,
/// interval-disjoint macro groups with every small cell on, and compares DE
/// SINRs with Monte-Carlo medians over `draws` fading draws each.
///
/// Layout `k` uses ChaCha8 stream `k` of `seed`, so a fixed seed gives the
/// same layouts for every antenna count.
pub fn validate_layouts(
    params: &SimParams,
    groups: usize,
    layouts: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<LayoutValidation>> {
    params.validate()?;
    let (p0, p1) = (params.macro_power(), params.sc_power());
    (0..layouts as u64)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let layout = sample_layout(params, &mut rng)?;
            let layout = assign_small_cells(&layout, Deployment::Uniform, params.n_small_cells, &mut rng)?;
            let gains = PathGainMatrix::build(&layout, params);
            let channels = MacroChannels::build(&layout, &gains, params)?;
            let table = LinkGainTable::build(&layout, params, &channels, gains)?;
            let mut order = table.macro_groups();
            order.shuffle(&mut rng);
            let mut selected: Vec<usize> = Vec::new();
            for g in order {
                if selected.len() == groups {
                    break;
                }
                if selected
                    .iter()
                    .all(|&h| !table.interval(h).overlaps(&table.interval(g)))
                {
                    selected.push(g);
                }
            }
            let active = table.small_cells().to_vec();
            let comparisons = compare_de(
                &channels,
                &table,
                &selected,
                &active,
                params.sc_antennas,
                draws,
                p0,
                p1,
                &mut rng,
            )?;
            Ok(LayoutValidation { selected, comparisons })
        })
        .collect()
}
