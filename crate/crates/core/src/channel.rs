//! Path gains, one-ring covariances and their dominant eigenspaces.
//!
//! The macrocell covariance of a group is Hermitian Toeplitz, so only its
//! first column is stored. The defining angular integral is evaluated with a
//! Gauss-Legendre rule whose order grows with the largest phase excursion
//! `pi (M - 1) (max sin - min sin)`. The same rule gives a rank-`K`
//! factorization `R = V D V^H` that makes the eigen-decomposition a `K x K`
//! problem whenever `K < M`.

use std::f64::consts::{FRAC_PI_2, PI};

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{db_to_linear, Layout, SimParams};
use crate::linalg::{hermitian_defect, hermitian_eigen_desc, trace_re, CMatrix};

/// Entry-wise absolute tolerance of the covariance quadrature (unit gain).
pub const QUADRATURE_TOL: f64 = 1e-9;
const MAX_NODES: usize = 16_384;

/// `w^{n_w} / (1 + (d / d_0)^alpha)` with `w` the linear wall loss (< 1).
pub fn path_gain(distance: f64, walls: u8, params: &SimParams) -> f64 {
    let w = db_to_linear(-params.wall_loss_db);
    w.powi(walls as i32) / (1.0 + (distance / params.cutoff_distance).powf(params.pathloss_exponent))
}

/// Transmitter or receiver endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Macro,
    Group(usize),
}

/// Walls between two endpoints. The macrocell and groups without a small
/// cell count as outdoor endpoints.
pub fn wall_count(a: Node, b: Node, layout: &Layout) -> u8 {
    let indoor = |n: Node| match n {
        Node::Macro => false,
        Node::Group(g) => layout.is_small_cell(g),
    };
    if a == b {
        return 0;
    }
    match (indoor(a), indoor(b)) {
        (true, true) => 2,
        (true, false) | (false, true) => 1,
        (false, false) => 0,
    }
}

/// Symmetric gains between all groups plus the macrocell link of each group.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGainMatrix {
    n: usize,
    to_macro: Vec<f64>,
    pair: Vec<f64>,
    walls: Vec<u8>,
}

impl PathGainMatrix {
    pub fn build(layout: &Layout, params: &SimParams) -> Self {
        let n = layout.len();
        let to_macro = (0..n)
            .map(|g| {
                let walls = wall_count(Node::Macro, Node::Group(g), layout);
                path_gain(layout.dist_macro[g], walls, params)
            })
            .collect();
        let mut pair = vec![0.0; n * n];
        let mut walls = vec![0u8; n * n];
        for g in 0..n {
            for f in g..n {
                let w = wall_count(Node::Group(g), Node::Group(f), layout);
                let a = path_gain(layout.distance(g, f), w, params);
                pair[g * n + f] = a;
                pair[f * n + g] = a;
                walls[g * n + f] = w;
                walls[f * n + g] = w;
            }
        }
        Self {
            n,
            to_macro,
            pair,
            walls,
        }
    }

    /// Builds a matrix from raw gains (row-major `n x n` pair gains).
    pub fn from_raw(to_macro: Vec<f64>, pair: Vec<f64>) -> Self {
        let n = to_macro.len();
        assert_eq!(pair.len(), n * n, "pair gains must be n x n");
        Self {
            n,
            to_macro,
            pair,
            walls: vec![0; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `a(g, 0)`.
    pub fn macro_gain(&self, g: usize) -> f64 {
        self.to_macro[g]
    }

    /// `a(g, f)`.
    pub fn gain(&self, g: usize, f: usize) -> f64 {
        self.pair[g * self.n + f]
    }

    pub fn walls(&self, g: usize, f: usize) -> u8 {
        self.walls[g * self.n + f]
    }
}

/// Closed interval of normalized spatial frequencies occupied by a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AngularInterval {
    /// `[-sin(theta + delta) / 2, -sin(theta - delta) / 2]`, with the sine
    /// range taken over the whole arc so the interval stays well ordered
    /// for back-lobe and end-fire directions.
    pub fn new(theta: f64, delta: f64) -> Self {
        let (s_min, s_max) = sine_range(theta, delta);
        Self {
            lo: -0.5 * s_max,
            hi: -0.5 * s_min,
        }
    }

    /// Closed intervals: touching endpoints count as overlap.
    pub fn overlaps(&self, other: &AngularInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Min and max of `sin` over `[theta - delta, theta + delta]`.
fn sine_range(theta: f64, delta: f64) -> (f64, f64) {
    let (a, b) = (theta - delta, theta + delta);
    let (mut lo, mut hi) = {
        let (x, y) = (a.sin(), b.sin());
        (x.min(y), x.max(y))
    };
    for k in -2..=2 {
        let peak = FRAC_PI_2 + 2.0 * PI * k as f64;
        if (a..=b).contains(&peak) {
            hi = 1.0;
        }
        let trough = -FRAC_PI_2 + 2.0 * PI * k as f64;
        if (a..=b).contains(&trough) {
            lo = -1.0;
        }
    }
    (lo, hi)
}

/// Gauss-Legendre rule on the arc: `sin` of the nodes and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RingQuadrature {
    pub sines: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RingQuadrature {
    fn with_nodes(theta: f64, delta: f64, n: usize) -> Self {
        let rule = GaussLegendre::new(n.max(2)).expect("at least two nodes");
        let (sines, weights) = rule.iter().map(|&(x, w)| ((theta + delta * x).sin(), 0.5 * w)).unzip();
        Self { sines, weights }
    }

    pub fn len(&self) -> usize {
        self.sines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sines.is_empty()
    }

    /// `sum_k w_k exp(-j pi lag s_k)` for lags `0..count`.
    fn lags(&self, count: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); count];
        for (&s, &w) in self.sines.iter().zip(&self.weights) {
            let step = Complex64::from_polar(1.0, -PI * s);
            let mut z = Complex64::new(w, 0.0);
            for (k, acc) in out.iter_mut().enumerate() {
                if k % 32 == 0 {
                    // refresh the recurrence to keep phase drift far below tolerance
                    z = Complex64::from_polar(w, -PI * s * k as f64);
                }
                *acc += z;
                z *= step;
            }
        }
        out
    }
}

/// One-ring covariance `R(theta, delta)` of a ULA with `M` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct RingCovariance {
    pub theta: f64,
    pub delta: f64,
    /// Large-scale gain `a(g, 0)`; the diagonal of `R`.
    pub gain: f64,
    antennas: usize,
    /// `R[k, 0]` for `k = 0..M`.
    column: Vec<Complex64>,
    quadrature: RingQuadrature,
}

/// Builds the one-ring covariance by Gauss-Legendre quadrature.
pub fn one_ring_covariance(theta: f64, delta: f64, gain: f64, antennas: usize) -> Result<RingCovariance> {
    if delta.is_nan() || delta <= 0.0 || antennas == 0 {
        return Err(Error::InvalidParam {
            field: "delta",
            reason: format!("need delta > 0 and M >= 1, got delta = {delta}, M = {antennas}"),
        });
    }
    let (s_min, s_max) = sine_range(theta, delta);
    let phase = PI * (antennas as f64 - 1.0) * (s_max - s_min);
    let mut n = phase.ceil() as usize + 24;
    loop {
        let quadrature = RingQuadrature::with_nodes(theta, delta, n);
        let check = RingQuadrature::with_nodes(theta, delta, n + 16);
        let lags = quadrature.lags(antennas);
        let last = antennas - 1;
        let residual = (lags[last] - check.lags(antennas)[last]).norm();
        if residual <= 0.1 * QUADRATURE_TOL {
            let column = lags.into_iter().map(|z| z * gain).collect();
            return Ok(RingCovariance {
                theta,
                delta,
                gain,
                antennas,
                column,
                quadrature,
            });
        }
        if n >= MAX_NODES {
            return Err(Error::QuadratureNoConvergence { residual });
        }
        n *= 2;
    }
}

impl RingCovariance {
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Entry `(m, n)`; depends only on `m - n`.
    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        if m >= n {
            self.column[m - n]
        } else {
            self.column[n - m].conj()
        }
    }

    /// First column, `R[k, 0]` for `k = 0..M`.
    pub fn column(&self) -> &[Complex64] {
        &self.column
    }

    pub fn quadrature(&self) -> &RingQuadrature {
        &self.quadrature
    }

    pub fn to_dense(&self) -> CMatrix {
        CMatrix::from_fn(self.antennas, self.antennas, |m, n| self.entry(m, n))
    }

    pub fn trace(&self) -> f64 {
        self.antennas as f64 * self.column[0].re
    }

    pub fn interval(&self) -> AngularInterval {
        AngularInterval::new(self.theta, self.delta)
    }

    /// Full spectrum (descending, padded with zeros to `M`) and eigenvectors
    /// of the nonzero part.
    pub fn spectrum(&self) -> (Vec<f64>, CMatrix) {
        let m = self.antennas;
        let k = self.quadrature.len();
        if k >= m {
            let (mut vals, vecs) = hermitian_eigen_desc(self.to_dense());
            vals.iter_mut().for_each(|v| *v = v.max(0.0));
            return (vals, vecs);
        }
        // R = W W^H with W = V D^{1/2}; eigenpairs follow from the K x K Gram matrix.
        let w = CMatrix::from_fn(m, k, |row, col| {
            let d = (self.gain * self.quadrature.weights[col]).sqrt();
            Complex64::from_polar(d, -PI * row as f64 * self.quadrature.sines[col])
        });
        let gram = w.adjoint() * &w;
        let (vals, y) = hermitian_eigen_desc(gram);
        let floor = 1e-14 * self.trace().max(f64::MIN_POSITIVE);
        let keep = vals.iter().take_while(|&&v| v > floor).count();
        let mut vecs = &w * y.columns(0, keep);
        for (c, &v) in vals.iter().take(keep).enumerate() {
            let scale = 1.0 / v.sqrt();
            vecs.column_mut(c).iter_mut().for_each(|z| *z *= scale);
        }
        let mut padded: Vec<f64> = vals.into_iter().take(keep).collect();
        padded.resize(m, 0.0);
        (padded, vecs)
    }

    /// Karhunen-Loeve factor `U Lambda^{1/2}` over eigenvalues above
    /// `1e-12 * trace`; `h = factor * w` with `w ~ CN(0, I)` has covariance `R`.
    pub fn kl_factor(&self) -> CMatrix {
        let (vals, vecs) = self.spectrum();
        let floor = 1e-12 * self.trace();
        let keep = vals.iter().take_while(|&&v| v > floor).count();
        let mut f = vecs.columns(0, keep).into_owned();
        for (c, v) in vals.iter().take(keep).enumerate() {
            let s = v.sqrt();
            f.column_mut(c).iter_mut().for_each(|z| *z *= s);
        }
        f
    }
}

/// Dominant eigenspace and stream budget of one macrocell group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupChannelModel {
    /// Eigenvalues of `R`, descending, length `M`.
    pub eigvals: Vec<f64>,
    /// Pre-beamformer `B = U*`, the `b` leading eigenvectors (`M x b`).
    pub u_star: CMatrix,
    /// Effective rank `r`.
    pub rank: usize,
    /// Pre-beamforming dimension `b`.
    pub dim: usize,
    /// Served users per slot `S = max(1, floor(beta r))`.
    pub streams: usize,
    pub interval: AngularInterval,
}

impl GroupChannelModel {
    /// Builds the model from a ring covariance (fast path for low-rank rings).
    pub fn from_ring(cov: &RingCovariance, beta: f64, rank_threshold: f64) -> Self {
        let (vals, vecs) = cov.spectrum();
        Self::from_spectrum(vals, vecs, beta, rank_threshold, cov.interval())
    }

    fn from_spectrum(
        eigvals: Vec<f64>,
        vecs: CMatrix,
        beta: f64,
        rank_threshold: f64,
        interval: AngularInterval,
    ) -> Self {
        let rank = effective_rank(&eigvals, rank_threshold).min(vecs.ncols()).max(1);
        let streams = ((beta * rank as f64).floor() as usize).max(1);
        // One spare dimension keeps the interference-loaded fixed point
        // away from zero when the rank is one.
        let dim = rank.max(streams + 1).min(vecs.ncols());
        Self {
            u_star: vecs.columns(0, dim).into_owned(),
            eigvals,
            rank,
            dim,
            streams,
            interval,
        }
    }

    /// `B^H R B` restricted to the pre-beamformer, i.e. the leading eigenvalues.
    pub fn projected_spectrum(&self) -> &[f64] {
        &self.eigvals[..self.dim]
    }
}

/// Smallest `k` whose top-`k` eigenvalues hold at least `1 - threshold` of the trace.
pub fn effective_rank(desc_eigvals: &[f64], threshold: f64) -> usize {
    let total: f64 = desc_eigvals.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 0;
    }
    let target = (1.0 - threshold) * total;
    let mut acc = 0.0;
    for (k, v) in desc_eigvals.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= target * (1.0 - 1e-12) {
            return k + 1;
        }
    }
    desc_eigvals.len()
}

/// Dense eigen model of an arbitrary Hermitian covariance.
pub fn eigen_model(
    r: &CMatrix,
    beta: f64,
    rank_threshold: f64,
    interval: AngularInterval,
) -> Result<GroupChannelModel> {
    let defect = hermitian_defect(r);
    if defect > 1e-9 * trace_re(r).abs().max(1.0) {
        return Err(Error::NotHermitian { asymmetry: defect });
    }
    let (mut vals, vecs) = hermitian_eigen_desc(r.clone());
    vals.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(GroupChannelModel::from_spectrum(
        vals,
        vecs,
        beta,
        rank_threshold,
        interval,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use proptest::prelude::*;

    fn params() -> SimParams {
        SimParams::default()
    }

    /// Composite trapezoid on `points` samples, the independent reference.
    fn trapezoid_entry(theta: f64, delta: f64, lag: f64, points: usize) -> Complex64 {
        let h = 2.0 * delta / (points - 1) as f64;
        let f = |a: f64| Complex64::from_polar(1.0, -PI * lag * a.sin());
        let mut s = 0.5 * (f(theta - delta) + f(theta + delta));
        for i in 1..points - 1 {
            s += f(theta - delta + i as f64 * h);
        }
        s * h / (2.0 * delta)
    }

    #[test]
    fn path_gain_values() {
        let p = params();
        assert_eq!(path_gain(0.0, 0, &p), 1.0);
        assert!((path_gain(50.0, 1, &p) - 0.158_113_883_008_419).abs() < 1e-12);
        assert!((path_gain(50.0, 2, &p) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn wall_counts() {
        let layout = Layout::from_positions(vec![[200.0, 0.0], [0.0, 300.0], [-400.0, 0.0]], &[1, 2], 30.0).unwrap();
        assert_eq!(wall_count(Node::Group(1), Node::Group(1), &layout), 0);
        assert_eq!(wall_count(Node::Group(0), Node::Group(1), &layout), 1);
        assert_eq!(wall_count(Node::Group(1), Node::Group(0), &layout), 1);
        assert_eq!(wall_count(Node::Group(1), Node::Group(2), &layout), 2);
        assert_eq!(wall_count(Node::Macro, Node::Group(0), &layout), 0);
        assert_eq!(wall_count(Node::Macro, Node::Group(2), &layout), 1);
        let gains = PathGainMatrix::build(&layout, &params());
        assert_eq!(gains.gain(1, 1), 1.0);
        assert_eq!(gains.gain(0, 2), gains.gain(2, 0));
        assert_eq!(gains.walls(1, 2), 2);
    }

    #[test]
    fn diagonal_equals_gain() {
        let cov = one_ring_covariance(0.7, 0.2, 0.3, 16).unwrap();
        for m in 0..16 {
            assert!((cov.entry(m, m) - Complex64::new(0.3, 0.0)).norm() < 1e-14);
        }
        assert!((cov.trace() - 16.0 * 0.3).abs() < 1e-6 * 4.8);
    }

    #[test]
    fn vanishing_spread_is_a_steering_outer_product() {
        let theta = 0.4;
        let cov = one_ring_covariance(theta, 1e-6, 1.0, 32).unwrap();
        for m in 0..32 {
            for n in 0..32 {
                let expect = Complex64::from_polar(1.0, -PI * (m as f64 - n as f64) * theta.sin());
                assert!((cov.entry(m, n) - expect).norm() < 1e-6);
            }
        }
        let model = GroupChannelModel::from_ring(&cov, 0.8, 1e-3);
        assert_eq!(model.rank, 1);
        assert_eq!(model.streams, 1);
    }

    #[test]
    fn matches_trapezoid_reference() {
        let cov = one_ring_covariance(0.0, PI / 6.0, 1.0, 4).unwrap();
        for lag in 1..4 {
            let reference = trapezoid_entry(0.0, PI / 6.0, lag as f64, 1_000_000);
            assert!(
                (cov.entry(lag, 0) - reference).norm() < 1e-8,
                "lag {lag}: {} vs {}",
                cov.entry(lag, 0),
                reference
            );
        }
    }

    #[test]
    fn oscillatory_entries_match_reference() {
        let cov = one_ring_covariance(0.3, 0.25, 1.0, 256).unwrap();
        for lag in [17usize, 128, 255] {
            let reference = trapezoid_entry(0.3, 0.25, lag as f64, 1_000_000);
            assert!((cov.entry(lag, 0) - reference).norm() < 1e-8, "lag {lag}");
        }
    }

    #[test]
    fn isotropic_rank_is_full() {
        let r = CMatrix::identity(20, 20) * Complex64::new(2.0, 0.0);
        let model = eigen_model(&r, 0.8, 1e-3, AngularInterval::new(0.0, 0.1)).unwrap();
        assert_eq!(model.rank, 20);
        assert_eq!(model.streams, 16);
        assert_eq!(model.dim, 20);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut r = CMatrix::identity(3, 3);
        r[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(matches!(
            eigen_model(&r, 0.8, 1e-3, AngularInterval::new(0.0, 0.1)),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn rank_tracks_angular_support() {
        let (theta, delta, m) = (0.0, PI / 12.0, 64usize);
        let cov = one_ring_covariance(theta, delta, 1.0, m).unwrap();
        let dense = eigen_model(&cov.to_dense(), 0.8, 1e-3, cov.interval()).unwrap();
        let support = m as f64 * ((theta + delta).sin() - (theta - delta).sin()).abs() / 2.0;
        // the 1e-3 energy threshold spills a few modes past the asymptotic support count
        assert!(
            dense.rank as f64 <= support + 6.0,
            "rank {} support {support}",
            dense.rank
        );
        assert!(dense.rank as f64 >= support - 1.0);
    }

    #[test]
    fn factored_spectrum_matches_dense() {
        for &(theta, delta, m) in &[(0.3, 0.05, 100usize), (-1.2, 0.03, 128), (2.5, 0.1, 64)] {
            let cov = one_ring_covariance(theta, delta, 0.01, m).unwrap();
            assert!(cov.quadrature().len() < m, "fast path not taken");
            let fast = GroupChannelModel::from_ring(&cov, 0.8, 1e-3);
            let dense = eigen_model(&cov.to_dense(), 0.8, 1e-3, cov.interval()).unwrap();
            assert_eq!(fast.rank, dense.rank);
            assert_eq!(fast.streams, dense.streams);
            for (a, b) in fast.eigvals.iter().zip(&dense.eigvals) {
                assert!((a - b).abs() < 1e-9 * cov.trace(), "{a} vs {b}");
            }
            // same dominant subspace
            let overlap = fast.u_star.adjoint() * &dense.u_star;
            let sv = overlap.singular_values();
            assert!(sv.iter().all(|&s| s > 1.0 - 1e-6), "{sv:?}");
            let gram = fast.u_star.adjoint() * &fast.u_star;
            assert!((gram - CMatrix::identity(fast.dim, fast.dim)).norm() < 1e-9);
        }
    }

    #[test]
    fn disjoint_supports_are_nearly_orthogonal() {
        let a = one_ring_covariance(0.5, 0.08, 1.0, 256).unwrap();
        let b = one_ring_covariance(-0.4, 0.08, 1.0, 256).unwrap();
        assert!(!a.interval().overlaps(&b.interval()));
        for (x, y) in [(&a, &b), (&a, &one_ring_covariance(0.2, 0.05, 1.0, 256).unwrap())] {
            let (ux, uy) = (x.spectrum().1, y.spectrum().1);
            // asymptotic support dimension M |I|
            let kx = (256.0 * x.interval().width()).floor() as usize;
            let ky = (256.0 * y.interval().width()).floor() as usize;
            let cross = ux.columns(0, kx).adjoint() * uy.columns(0, ky);
            assert!(spectral_norm(&cross) <= 0.1, "{}", spectral_norm(&cross));
        }
    }

    #[test]
    fn interval_is_well_ordered_everywhere() {
        for i in 0..200 {
            let theta = -PI + 2.0 * PI * i as f64 / 200.0;
            let iv = AngularInterval::new(theta, 0.2);
            assert!(iv.lo <= iv.hi);
            assert!(iv.lo >= -0.5 && iv.hi <= 0.5);
        }
        let iv = AngularInterval::new(0.3, 0.1);
        assert!((iv.lo + 0.5 * 0.4f64.sin()).abs() < 1e-15);
        assert!((iv.hi + 0.5 * 0.2f64.sin()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn covariance_is_hermitian_toeplitz_psd(theta in -3.1f64..3.1, delta in 0.01f64..0.5, m in 2usize..48) {
            let cov = one_ring_covariance(theta, delta, 0.5, m).unwrap();
            let r = cov.to_dense();
            prop_assert!(hermitian_defect(&r) < 1e-14);
            for i in 1..m {
                prop_assert_eq!(r[(i, 0)], r[(i - 1 + 1, 1 - 1)]);
                if i + 1 < m {
                    prop_assert_eq!(r[(i + 1, 1)], r[(i, 0)]);
                }
            }
            let (vals, _) = hermitian_eigen_desc(r);
            prop_assert!(vals.iter().all(|&v| v >= -1e-9 * cov.trace()));
            let sum: f64 = vals.iter().sum();
            prop_assert!((sum - m as f64 * 0.5).abs() <= 1e-6 * m as f64 * 0.5);
        }

        #[test]
        fn path_gain_is_monotone(d in 0.0f64..2000.0, step in 0.1f64..500.0, walls in 0u8..2) {
            let p = SimParams::default();
            prop_assert!(path_gain(d + step, walls, &p) < path_gain(d, walls, &p));
            prop_assert!(path_gain(d, walls + 1, &p) < path_gain(d, walls, &p));
            prop_assert!(path_gain(d, walls, &p) <= 1.0);
        }
    }
}
