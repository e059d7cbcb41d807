//! Deterministic equivalents of the direct and cross link gains.
//!
//! For a group `g` with pre-beamformer `B` (`M x b`), covariance `R` and `S`
//! streams, the scalar `m` solves
//!
//! ```text
//! m = (1/b) tr(Phi T(m)^{-1}),   T(m) = I + (S/b) Phi / m,   Phi = B^H R B.
//! ```
//!
//! The solver works in the eigenbasis of `Phi`, where the map is a scalar sum.
//! It takes Newton steps on `f(m) - m`, which is concave with a negative slope
//! at the root, so the iterates decrease monotonically from `tr(Phi)/b`. Plain
//! substitution would contract with factor `F`, which approaches one when
//! `b - S` is small.

use num_complex::Complex64;

use crate::channel::{AngularInterval, GroupChannelModel, PathGainMatrix, RingCovariance};
use crate::error::{Error, Result};
use crate::geometry::{Layout, SimParams};
use crate::linalg::{hermitian_eigen_desc, CMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Converged fixed point of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub m: f64,
    /// `F`, the derivative of the fixed-point map at `m`.
    pub f_load: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Pre-beamforming dimension `b`.
    pub dim: usize,
    pub streams: usize,
    /// Eigenvalues of `Phi`.
    pub phi: Vec<f64>,
    /// Eigenvectors of `Phi` (`b x b`).
    pub basis: CMatrix,
}

impl FixedPointSolution {
    /// Diagonal of `T` in the eigenbasis of `Phi`.
    pub fn t_diag(&self) -> Vec<f64> {
        let load = self.streams as f64 / self.dim as f64;
        self.phi.iter().map(|&p| 1.0 + load * p / self.m).collect()
    }

    /// `T = I + (S/b) Phi / m` in the original coordinates.
    pub fn t_matrix(&self) -> CMatrix {
        let t = self.t_diag();
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            t.len(),
            t.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        &self.basis * d * self.basis.adjoint()
    }

    /// Weights `phi_i / t_i^2 / (b (1 - F))`; the cross gain numerator is
    /// `sum_i w_i u_i^H R_x u_i` with `u_i = B y_i`.
    pub fn cross_weights(&self) -> Result<Vec<f64>> {
        if self.f_load.is_nan() || self.f_load >= 1.0 {
            return Err(Error::InvalidLoading(self.f_load));
        }
        let scale = 1.0 / (self.dim as f64 * (1.0 - self.f_load));
        Ok(self
            .phi
            .iter()
            .zip(self.t_diag())
            .map(|(&p, t)| scale * p / (t * t))
            .collect())
    }

    /// `D = b m`.
    pub fn direct_gain(&self) -> f64 {
        self.dim as f64 * self.m
    }
}

/// Solves the fixed point for a general pre-beamformer `B` and covariance `R`.
pub fn solve_fixed_point(
    b: &CMatrix,
    r: &CMatrix,
    streams: usize,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointSolution> {
    let phi = b.adjoint() * r * b;
    let phi = (&phi + phi.adjoint()) * Complex64::new(0.5, 0.0);
    let (vals, basis) = hermitian_eigen_desc(phi);
    solve_spectrum(vals, basis, streams, tol, max_iter)
}

/// Fixed point when `B` holds leading eigenvectors of `R`, so `Phi` is diagonal.
pub fn solve_model(model: &GroupChannelModel, tol: f64, max_iter: usize) -> Result<FixedPointSolution> {
    let b = model.dim;
    solve_spectrum(
        model.projected_spectrum().to_vec(),
        CMatrix::identity(b, b),
        model.streams,
        tol,
        max_iter,
    )
}

/// Fixed point from the spectrum of `Phi` and its eigenvectors.
pub fn solve_spectrum(
    phi: Vec<f64>,
    basis: CMatrix,
    streams: usize,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointSolution> {
    let b = phi.len();
    if b == 0 {
        return Err(Error::InvalidParam {
            field: "b",
            reason: "empty pre-beamformer".into(),
        });
    }
    let phi: Vec<f64> = phi.into_iter().map(|p| p.max(0.0)).collect();
    let trace: f64 = phi.iter().sum();
    let top = phi.iter().cloned().fold(0.0, f64::max);
    let significant = phi.iter().filter(|&&p| p > 1e-12 * top).count();
    if top <= 0.0 || (streams > 0 && significant <= streams) {
        return Err(Error::DegenerateLoading {
            streams,
            rank: significant,
        });
    }
    let bf = b as f64;
    let load = streams as f64 / bf;
    // f(m) and f'(m)
    let eval = |m: f64| {
        let mut f = 0.0;
        let mut df = 0.0;
        for &p in &phi {
            let t = 1.0 + load * p / m;
            f += p / t;
            df += load * p * p / (t * t * m * m);
        }
        (f / bf, df / bf)
    };
    let mut m = trace / bf;
    for it in 1..=max_iter {
        let (f, df) = eval(m);
        // distance to the root is about |f - m| / (1 - f')
        if (f - m).abs() <= tol * m * (1.0 - df).max(f64::EPSILON) {
            return Ok(FixedPointSolution {
                m,
                f_load: df,
                converged: true,
                iterations: it,
                dim: b,
                streams,
                phi,
                basis,
            });
        }
        let newton = m - (f - m) / (df - 1.0);
        // fall back to a substitution step if round-off breaks monotonicity
        m = if newton > 0.0 && newton < m { newton } else { f };
        if m.is_nan() || m <= 0.0 {
            return Err(Error::DegenerateLoading {
                streams,
                rank: significant,
            });
        }
    }
    Err(Error::FixedPointNoConvergence {
        iterations: max_iter,
        last: m,
    })
}

/// `n(R_x; g)` and the gain `n / m_g` by the dense trace formula.
pub fn intergroup_gain(b: &CMatrix, fp: &FixedPointSolution, r_x: &CMatrix) -> Result<(f64, f64)> {
    let w = fp.cross_weights()?;
    let u = b * &fp.basis;
    let mut n = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let col = u.column(i);
        n += wi * (col.adjoint() * r_x * col)[(0, 0)].re;
    }
    let n = n.max(0.0);
    Ok((n, n / fp.m))
}

/// Weighted lag autocorrelation of the eigenvectors of a group, for fast
/// cross gains against Toeplitz covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossKernel {
    /// `C(k) = sum_i w_i sum_n conj(u_{n+k,i}) u_{n,i}`.
    lags: Vec<Complex64>,
    m: f64,
}

impl CrossKernel {
    pub fn new(b: &CMatrix, fp: &FixedPointSolution) -> Result<Self> {
        let w = fp.cross_weights()?;
        let u = b * &fp.basis;
        let rows = u.nrows();
        let mut lags = vec![Complex64::new(0.0, 0.0); rows];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let col = u.column(i);
            let col = col.as_slice();
            for (k, acc) in lags.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for n in 0..rows - k {
                    s += col[n + k].conj() * col[n];
                }
                *acc += s * wi;
            }
        }
        Ok(Self { lags, m: fp.m })
    }

    /// `n(R_x; g)` for a Toeplitz `R_x` given by its first column.
    pub fn numerator(&self, column: &[Complex64]) -> f64 {
        let mut n = column[0].re * self.lags[0].re;
        for (rho, c) in column.iter().zip(&self.lags).skip(1) {
            n += 2.0 * (rho * c).re;
        }
        n.max(0.0)
    }

    /// `n(R_x; g) / m_g`.
    pub fn gain(&self, column: &[Complex64]) -> f64 {
        self.numerator(column) / self.m
    }
}

/// Covariances, eigen models and fixed points of every group in a layout.
#[derive(Debug, Clone)]
pub struct MacroChannels {
    pub covariances: Vec<RingCovariance>,
    pub models: Vec<GroupChannelModel>,
    /// Present for groups the macrocell may serve.
    pub fixed_points: Vec<Option<FixedPointSolution>>,
}

/// Iteration cap used when building link tables.
pub const TABLE_MAX_ITER: usize = 100_000;

impl MacroChannels {
    pub fn build(layout: &Layout, gains: &PathGainMatrix, params: &SimParams) -> Result<Self> {
        let n = layout.len();
        let mut covariances = Vec::with_capacity(n);
        let mut models = Vec::with_capacity(n);
        let mut fixed_points = Vec::with_capacity(n);
        for g in 0..n {
            let cov = crate::channel::one_ring_covariance(
                layout.theta[g],
                layout.delta[g],
                gains.macro_gain(g),
                params.macro_antennas,
            )?;
            let model = GroupChannelModel::from_ring(&cov, params.loading, params.rank_threshold);
            let fp = if layout.is_small_cell(g) {
                None
            } else {
                Some(solve_model(&model, DEFAULT_TOL, TABLE_MAX_ITER)?)
            };
            covariances.push(cov);
            models.push(model);
            fixed_points.push(fp);
        }
        Ok(Self {
            covariances,
            models,
            fixed_points,
        })
    }
}

/// All deterministic-equivalent gains of one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGainTable {
    n: usize,
    macro_schedulable: Vec<bool>,
    streams: Vec<usize>,
    d_mc: Vec<f64>,
    /// `cross[victim * n + source]`, macrocell beams of `source` received by `victim`.
    cross: Vec<f64>,
    gains: PathGainMatrix,
    sc_streams: usize,
    array_gain: f64,
    intervals: Vec<AngularInterval>,
    small_cells: Vec<usize>,
}

impl LinkGainTable {
    pub fn build(layout: &Layout, params: &SimParams, channels: &MacroChannels, gains: PathGainMatrix) -> Result<Self> {
        let n = layout.len();
        let mut cross = vec![0.0; n * n];
        let mut d_mc = vec![0.0; n];
        let mut streams = vec![0; n];
        for source in 0..n {
            streams[source] = channels.models[source].streams;
            let Some(fp) = &channels.fixed_points[source] else {
                continue;
            };
            d_mc[source] = fp.direct_gain();
            let kernel = CrossKernel::new(&channels.models[source].u_star, fp)?;
            for victim in 0..n {
                if victim != source {
                    cross[victim * n + source] = kernel.gain(channels.covariances[victim].column());
                }
            }
        }
        let sc_streams = params.sc_streams();
        Ok(Self {
            n,
            macro_schedulable: (0..n).map(|g| !layout.is_small_cell(g)).collect(),
            streams,
            d_mc,
            cross,
            gains,
            sc_streams,
            array_gain: (params.sc_antennas - sc_streams + 1) as f64,
            intervals: channels.models.iter().map(|m| m.interval).collect(),
            small_cells: layout.small_cells().to_vec(),
        })
    }

    /// Table from explicit parts; `cross` is row-major `victim x source`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        streams: Vec<usize>,
        d_mc: Vec<f64>,
        cross: Vec<f64>,
        gains: PathGainMatrix,
        small_cells: Vec<usize>,
        sc_streams: usize,
        sc_antennas: usize,
        intervals: Vec<AngularInterval>,
    ) -> Self {
        let n = streams.len();
        assert!(d_mc.len() == n && cross.len() == n * n && gains.len() == n && intervals.len() == n);
        assert!(sc_antennas >= sc_streams);
        let mut macro_schedulable = vec![true; n];
        for &f in &small_cells {
            macro_schedulable[f] = false;
        }
        Self {
            n,
            macro_schedulable,
            streams,
            d_mc,
            cross,
            gains,
            sc_streams,
            array_gain: (sc_antennas - sc_streams + 1) as f64,
            intervals,
            small_cells,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn small_cells(&self) -> &[usize] {
        &self.small_cells
    }

    pub fn macro_groups(&self) -> Vec<usize> {
        (0..self.n).filter(|&g| self.macro_schedulable[g]).collect()
    }

    pub fn is_macro_schedulable(&self, g: usize) -> bool {
        self.macro_schedulable[g]
    }

    /// `S_g`.
    pub fn streams(&self, g: usize) -> usize {
        self.streams[g]
    }

    /// `S-bar`.
    pub fn sc_streams(&self) -> usize {
        self.sc_streams
    }

    /// `L - S-bar + 1`.
    pub fn array_gain(&self) -> f64 {
        self.array_gain
    }

    pub fn interval(&self, g: usize) -> AngularInterval {
        self.intervals[g]
    }

    pub fn path_gains(&self) -> &PathGainMatrix {
        &self.gains
    }

    pub fn d_mc(&self, g: usize) -> f64 {
        self.d_mc[g]
    }

    pub fn d_sc(&self, f: usize) -> f64 {
        self.d_sc_to(f, f)
    }

    /// Direct gain of group `g` if served by the small cell of group `f`.
    pub fn d_sc_to(&self, g: usize, f: usize) -> f64 {
        self.gains.gain(g, f) * self.array_gain
    }

    /// Interference at macro group `victim` from the beams of `source`.
    pub fn i_mc(&self, victim: usize, source: usize) -> f64 {
        self.cross[victim * self.n + source]
    }

    /// Interference at small-cell group `f` from the beams of macro group `g`.
    pub fn j_mc(&self, f: usize, g: usize) -> f64 {
        self.cross[f * self.n + g]
    }

    /// Interference at group `g` from the small cell of `f`.
    pub fn j_sc(&self, g: usize, f: usize) -> f64 {
        self.gains.gain(g, f)
    }

    pub fn i_sc(&self, f: usize, f2: usize) -> f64 {
        self.gains.gain(f, f2)
    }
}

fn total_streams(selected: &[usize], table: &LinkGainTable) -> usize {
    selected.iter().map(|&g| table.streams(g)).sum()
}

/// Deterministic-equivalent SINR of macro group `g` in the schedule `selected`.
pub fn macro_sinr_de(
    g: usize,
    selected: &[usize],
    active: &[usize],
    table: &LinkGainTable,
    p0: f64,
    p1: f64,
) -> Result<f64> {
    let s = total_streams(selected, table);
    if s == 0 {
        return Err(Error::EmptySchedule);
    }
    let per_stream = p0 / s as f64;
    let macro_int: f64 = selected
        .iter()
        .filter(|&&h| h != g)
        .map(|&h| table.i_mc(g, h) * table.streams(h) as f64)
        .sum();
    let sc_int: f64 = active.iter().map(|&f| table.j_sc(g, f)).sum();
    Ok(table.d_mc(g) * per_stream / (1.0 + macro_int * per_stream + sc_int * p1))
}

/// SINR of group `g` served by the small cell of group `host`.
///
/// With `g == host` this is the small-cell SINR; otherwise `g` is a group
/// absorbed by `host`.
pub fn served_sinr_de(
    g: usize,
    host: usize,
    selected: &[usize],
    active: &[usize],
    table: &LinkGainTable,
    p0: f64,
    p1: f64,
) -> Result<f64> {
    if !active.contains(&host) {
        return Err(Error::InactiveSmallCell(host));
    }
    let s = total_streams(selected, table);
    let macro_int = if s == 0 {
        0.0
    } else {
        let per_stream = p0 / s as f64;
        selected
            .iter()
            .map(|&h| table.j_mc(g, h) * table.streams(h) as f64)
            .sum::<f64>()
            * per_stream
    };
    let sc_int: f64 = active.iter().filter(|&&f| f != host).map(|&f| table.i_sc(g, f)).sum();
    let signal = table.d_sc_to(g, host) * p1 / table.sc_streams() as f64;
    Ok(signal / (1.0 + macro_int + sc_int * p1))
}

/// Deterministic-equivalent SINR of the users of small cell `f`.
pub fn smallcell_sinr_de(
    f: usize,
    selected: &[usize],
    active: &[usize],
    table: &LinkGainTable,
    p0: f64,
    p1: f64,
) -> Result<f64> {
    served_sinr_de(f, f, selected, active, table, p0, p1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{eigen_model, one_ring_covariance};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scaled_identity(m: usize, a: f64) -> CMatrix {
        CMatrix::identity(m, m) * Complex64::new(a, 0.0)
    }

    #[test]
    fn isotropic_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m_ant = rng.random_range(2..200usize);
            let s = rng.random_range(1..m_ant);
            let a = 10f64.powf(rng.random_range(-6.0..1.0));
            let fp = solve_fixed_point(
                &CMatrix::identity(m_ant, m_ant),
                &scaled_identity(m_ant, a),
                s,
                DEFAULT_TOL,
                DEFAULT_MAX_ITER,
            )
            .unwrap();
            let expect = a * (1.0 - s as f64 / m_ant as f64);
            assert!((fp.m - expect).abs() <= 1e-10 * expect, "{} vs {expect}", fp.m);
            assert!((fp.direct_gain() - a * (m_ant - s) as f64).abs() <= 1e-9 * a * m_ant as f64);
        }
    }

    #[test]
    fn no_streams_is_one_step() {
        let r = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            [3.0, 1.0, 0.5].map(|x| Complex64::new(x, 0.0)).to_vec(),
        ));
        let fp = solve_fixed_point(&CMatrix::identity(3, 3), &r, 0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(fp.iterations, 1);
        assert!((fp.m - 1.5).abs() < 1e-15);
        assert_eq!(fp.f_load, 0.0);
        assert!((fp.t_matrix() - CMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn overloaded_group_is_degenerate() {
        let r = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            [1.0, 1.0, 0.0, 0.0].map(|x| Complex64::new(x, 0.0)).to_vec(),
        ));
        let err = solve_fixed_point(&CMatrix::identity(4, 4), &r, 2, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert!(matches!(err, Err(Error::DegenerateLoading { .. })));
    }

    #[test]
    fn residual_and_t_are_consistent() {
        let cov = one_ring_covariance(0.3, 0.2, 1e-3, 32).unwrap();
        let model = GroupChannelModel::from_ring(&cov, 0.8, 1e-3);
        let fp = solve_model(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(fp.converged);
        let phi: Vec<f64> = model.projected_spectrum().to_vec();
        let load = model.streams as f64 / model.dim as f64;
        let update: f64 = phi.iter().map(|p| p / (1.0 + load * p / fp.m)).sum::<f64>() / model.dim as f64;
        assert!((update - fp.m).abs() <= DEFAULT_TOL * fp.m);
        assert!(fp.f_load > 0.0 && fp.f_load < 1.0);
        let t = fp.t_matrix();
        assert!(crate::linalg::hermitian_defect(&t) < 1e-14);
        assert!(t
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .all(|&x| x >= 1.0 - 1e-12));
        // general solver on the dense matrices agrees
        let general = solve_fixed_point(
            &model.u_star,
            &cov.to_dense(),
            model.streams,
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert!((general.m - fp.m).abs() < 1e-9 * fp.m);
    }

    #[test]
    fn basis_rotation_leaves_m_unchanged() {
        let cov = one_ring_covariance(-0.7, 0.15, 1.0, 48).unwrap();
        let model = GroupChannelModel::from_ring(&cov, 0.8, 1e-3);
        let r = cov.to_dense();
        let base = solve_fixed_point(&model.u_star, &r, model.streams, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = model.dim;
        let z = CMatrix::from_fn(b, b, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let q = z.qr().q();
        let rotated =
            solve_fixed_point(&(&model.u_star * q), &r, model.streams, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((rotated.m - base.m).abs() < 1e-10 * base.m);
        assert!((rotated.f_load - base.f_load).abs() < 1e-9);
    }

    #[test]
    fn scalar_cross_gain() {
        // b = 1, S = 0: n = lambda^2 / (1 - F) with F = 0, gain = lambda
        let lambda = 2.5;
        let b = CMatrix::identity(1, 1);
        let r = scaled_identity(1, lambda);
        let fp = solve_fixed_point(&b, &r, 0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let (n, gain) = intergroup_gain(&b, &fp, &r).unwrap();
        assert!((n - lambda * lambda).abs() < 1e-12);
        assert!((gain - lambda).abs() < 1e-12);
        // b = 2, S = 1, Phi = diag(l1, l2): hand evaluation of the same formula
        let (l1, l2) = (3.0, 1.0);
        let r = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(l1, 0.0),
            Complex64::new(l2, 0.0),
        ]));
        let b = CMatrix::identity(2, 2);
        let fp = solve_fixed_point(&b, &r, 1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let m = fp.m;
        let (t1, t2) = (1.0 + 0.5 * l1 / m, 1.0 + 0.5 * l2 / m);
        assert!((0.5 * (l1 / t1 + l2 / t2) - m).abs() < 1e-10 * m);
        let f = 0.5 * 0.5 * (l1 * l1 / (t1 * t1) + l2 * l2 / (t2 * t2)) / (m * m);
        assert!((fp.f_load - f).abs() < 1e-12);
        let n_hand = 0.5 * (l1 * l1 / (t1 * t1) + l2 * l2 / (t2 * t2)) / (1.0 - f);
        let (n, gain) = intergroup_gain(&b, &fp, &r).unwrap();
        assert!((n - n_hand).abs() < 1e-12 * n_hand);
        assert!((gain - n_hand / m).abs() < 1e-12 * n_hand / m);
    }

    #[test]
    fn orthogonal_source_gives_zero() {
        let r_g = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            [2.0, 1.0, 0.0, 0.0].map(|x| Complex64::new(x, 0.0)).to_vec(),
        ));
        let r_x = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            [0.0, 0.0, 1.0, 4.0].map(|x| Complex64::new(x, 0.0)).to_vec(),
        ));
        let b = CMatrix::identity(4, 4).columns(0, 2).into_owned();
        let fp = solve_fixed_point(&b, &r_g, 1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let (n, gain) = intergroup_gain(&b, &fp, &r_x).unwrap();
        assert_eq!(n, 0.0);
        assert_eq!(gain, 0.0);
    }

    #[test]
    fn invalid_loading_is_rejected() {
        let mut fp = solve_fixed_point(
            &CMatrix::identity(2, 2),
            &scaled_identity(2, 1.0),
            1,
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        fp.f_load = 1.0;
        assert!(matches!(fp.cross_weights(), Err(Error::InvalidLoading(_))));
    }

    #[test]
    fn toeplitz_kernel_matches_trace_formula() {
        let m_ant = 64;
        let src = one_ring_covariance(0.4, 0.12, 2e-4, m_ant).unwrap();
        let model = GroupChannelModel::from_ring(&src, 0.8, 1e-3);
        let fp = solve_model(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let kernel = CrossKernel::new(&model.u_star, &fp).unwrap();
        for &(theta, delta) in &[(0.45, 0.1), (-1.0, 0.05), (0.4, 0.12), (2.9, 0.3)] {
            let victim = one_ring_covariance(theta, delta, 1e-3, m_ant).unwrap();
            let (n_dense, g_dense) = intergroup_gain(&model.u_star, &fp, &victim.to_dense()).unwrap();
            let n_fast = kernel.numerator(victim.column());
            assert!(
                (n_fast - n_dense).abs() <= 1e-9 * n_dense.max(1e-30) + 1e-20,
                "{n_fast} vs {n_dense}"
            );
            assert!((kernel.gain(victim.column()) - g_dense).abs() <= 1e-9 * g_dense.max(1e-30) + 1e-20);
        }
    }

    fn toy_table(cross: f64, sc_gain: f64) -> LinkGainTable {
        // groups 0, 1 macro; 2, 3 small cells
        let n = 4;
        let mut pair = vec![sc_gain; n * n];
        for g in 0..n {
            pair[g * n + g] = 1.0;
        }
        let gains = PathGainMatrix::from_raw(vec![1e-3; n], pair);
        let mut c = vec![cross; n * n];
        for g in 0..n {
            c[g * n + g] = 0.0;
        }
        LinkGainTable::from_parts(
            vec![4, 6, 3, 3],
            vec![2.0, 3.0, 0.0, 0.0],
            c,
            gains,
            vec![2, 3],
            8,
            10,
            vec![AngularInterval::new(0.0, 0.1); n],
        )
    }

    #[test]
    fn sinr_empty_sums() {
        let t = toy_table(0.5, 0.01);
        let (p0, p1) = (100.0, 1.0);
        let alone = macro_sinr_de(0, &[0], &[], &t, p0, p1).unwrap();
        assert!((alone - 2.0 * p0 / 4.0).abs() < 1e-12);
        let sc = smallcell_sinr_de(2, &[], &[2], &t, p0, p1).unwrap();
        assert!((sc - 3.0 * p1 / 8.0).abs() < 1e-12);
        assert_eq!(t.array_gain(), 3.0);
        assert_eq!(t.sc_streams(), 8);
        assert!(matches!(
            macro_sinr_de(0, &[], &[], &t, p0, p1),
            Err(Error::EmptySchedule)
        ));
        assert!(matches!(
            smallcell_sinr_de(2, &[0], &[3], &t, p0, p1),
            Err(Error::InactiveSmallCell(2))
        ));
    }

    #[test]
    fn sinr_formula_with_interference() {
        let t = toy_table(0.5, 0.01);
        let (p0, p1) = (100.0, 2.0);
        let s = 10.0;
        let expect = 2.0 * p0 / s / (1.0 + 0.5 * 6.0 * p0 / s + 2.0 * 0.01 * p1);
        let got = macro_sinr_de(0, &[0, 1], &[2, 3], &t, p0, p1).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
        let expect = 3.0 * p1 / 8.0 / (1.0 + 0.5 * (4.0 + 6.0) * p0 / s + 0.01 * p1);
        let got = smallcell_sinr_de(2, &[0, 1], &[2, 3], &t, p0, p1).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
        // absorbed group 1 served by small cell 3
        let expect = 0.01 * 3.0 * p1 / 8.0 / (1.0 + 0.5 * 4.0 * p0 / 4.0 + 0.01 * p1);
        let got = served_sinr_de(1, 3, &[0], &[2, 3], &t, p0, p1).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    proptest! {
        #[test]
        fn sinr_monotonicity(cross in 1e-6f64..1.0, sc in 1e-6f64..1.0, p0 in 1.0f64..1e4, p1 in 0.01f64..100.0) {
            let t = toy_table(cross, sc);
            let base = macro_sinr_de(0, &[0, 1], &[2], &t, p0, p1).unwrap();
            let more = macro_sinr_de(0, &[0, 1], &[2, 3], &t, p0, p1).unwrap();
            prop_assert!(more < base);
            let alone = macro_sinr_de(0, &[0], &[2], &t, p0, p1).unwrap();
            prop_assert!(base < alone);
            let scb = smallcell_sinr_de(2, &[0], &[2], &t, p0, p1).unwrap();
            let louder = toy_table(2.0 * cross, sc);
            prop_assert!(smallcell_sinr_de(2, &[0], &[2], &louder, p0, p1).unwrap() < scb);
            prop_assert!(macro_sinr_de(0, &[0, 1], &[2], &louder, p0, p1).unwrap() < base);
            prop_assert!(smallcell_sinr_de(2, &[0], &[2, 3], &t, p0, p1).unwrap() < scb);
            prop_assert!(smallcell_sinr_de(2, &[0], &[2], &t, p0, 2.0 * p1).unwrap() > scb);
            // own power at fixed total: raising P0 raises macro SINR with only small-cell interference
            prop_assert!(macro_sinr_de(0, &[0], &[2], &t, 2.0 * p0, p1).unwrap() > macro_sinr_de(0, &[0], &[2], &t, p0, p1).unwrap());
        }
    }

    #[test]
    fn table_from_layout() {
        let params = SimParams {
            n_groups: 3,
            n_small_cells: 1,
            ..SimParams::default()
        };
        let layout = Layout::from_positions(
            vec![[300.0, 0.0], [0.0, 500.0], [400.0, 50.0]],
            &[2],
            params.scatter_radius,
        )
        .unwrap();
        let gains = PathGainMatrix::build(&layout, &params);
        let channels = MacroChannels::build(&layout, &gains, &params).unwrap();
        assert!(channels.fixed_points[2].is_none());
        let table = LinkGainTable::build(&layout, &params, &channels, gains).unwrap();
        assert_eq!(table.macro_groups(), vec![0, 1]);
        assert_eq!(table.d_sc(2), 3.0);
        assert!(table.d_mc(0) > table.d_mc(1));
        assert!((table.j_sc(0, 2) - table.j_sc(2, 0)).abs() == 0.0);
        // group 2 sits close to the beam of group 0, far from that of group 1
        assert!(table.j_mc(2, 0) > table.j_mc(2, 1));
        // independent dense evaluation of one entry
        let fp = channels.fixed_points[0].as_ref().unwrap();
        let (_, dense) = intergroup_gain(&channels.models[0].u_star, fp, &channels.covariances[2].to_dense()).unwrap();
        assert!((table.j_mc(2, 0) - dense).abs() <= 1e-9 * dense);
        // dense eigen path gives the same direct gain
        let dm = eigen_model(
            &channels.covariances[0].to_dense(),
            0.8,
            1e-3,
            channels.models[0].interval,
        )
        .unwrap();
        let fp_dense = solve_model(&dm, DEFAULT_TOL, TABLE_MAX_ITER).unwrap();
        assert!((fp_dense.direct_gain() - table.d_mc(0)).abs() <= 1e-8 * table.d_mc(0));
    }
}
