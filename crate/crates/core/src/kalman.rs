//! Steady-state Kalman filter error covariances for a network with one
//! stochastic input node and per-node sensors (`C = I_n`).

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::DistanceMap;
use crate::linalg;

pub const DEFAULT_CONV_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_SVD_TOL: f64 = 1e-10;
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SensorNoise {
    Zero,
    Covariance(DMatrix<f64>),
}

impl SensorNoise {
    pub fn isotropic(n: usize, variance: f64) -> Self {
        if variance == 0.0 {
            SensorNoise::Zero
        } else {
            SensorNoise::Covariance(DMatrix::identity(n, n) * variance)
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SensorNoise::Zero => true,
            SensorNoise::Covariance(v) => v.iter().all(|&x| x == 0.0),
        }
    }

    fn restricted(&self, support: &[usize]) -> Option<DMatrix<f64>> {
        match self {
            SensorNoise::Zero => None,
            SensorNoise::Covariance(v) => Some(linalg::submatrix(v, support)),
        }
    }
}

/// `x[k+1] = A x[k] + e_{i0} w[k]`, `y[k] = C(mu) x[k] + v[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSystem {
    a: DMatrix<f64>,
    input_node: usize,
    input_variance: f64,
    noise: SensorNoise,
}

impl NetworkSystem {
    pub fn new(
        a: DMatrix<f64>,
        input_node: usize,
        input_variance: f64,
        noise: SensorNoise,
    ) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Shape(format!(
                "dynamics matrix must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("dynamics matrix has non-finite entries".into()));
        }
        if input_node >= n {
            return Err(Error::Index {
                index: input_node,
                len: n,
            });
        }
        if !(input_variance >= 0.0 && input_variance.is_finite()) {
            return Err(Error::Argument(format!(
                "input variance must be finite and nonnegative, got {input_variance}"
            )));
        }
        if let SensorNoise::Covariance(v) = &noise {
            if v.shape() != (n, n) {
                return Err(Error::Shape(format!(
                    "sensor noise covariance must be {n}x{n}, got {}x{}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            let scale = linalg::max_abs(v).max(1.0);
            if linalg::max_abs_diff(v, &v.transpose()) > PSD_TOL * scale {
                return Err(Error::Argument("sensor noise covariance is not symmetric".into()));
            }
            if linalg::min_symmetric_eigenvalue(v) < -PSD_TOL * scale {
                return Err(Error::Argument(
                    "sensor noise covariance is not positive semidefinite".into(),
                ));
            }
        }
        let noise = if noise.is_zero() { SensorNoise::Zero } else { noise };
        Ok(Self {
            a,
            input_node,
            input_variance,
            noise,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn input_node(&self) -> usize {
        self.input_node
    }

    pub fn input_variance(&self) -> f64 {
        self.input_variance
    }

    pub fn noise(&self) -> &SensorNoise {
        &self.noise
    }

    pub fn with_noise(&self, noise: SensorNoise) -> Result<Self> {
        Self::new(self.a.clone(), self.input_node, self.input_variance, noise)
    }

    pub fn without_noise(&self) -> Self {
        Self {
            noise: SensorNoise::Zero,
            ..self.clone()
        }
    }

    /// `sigma_w^2 B B^T`.
    pub fn input_covariance(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n(), self.n());
        w[(self.input_node, self.input_node)] = self.input_variance;
        w
    }
}

/// Binary vector over nodes: sensor placements and attacks alike.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndicatorVector {
    bits: Vec<bool>,
}

impl IndicatorVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            bits: vec![false; n],
        }
    }

    pub fn ones(n: usize) -> Self {
        Self {
            bits: vec![true; n],
        }
    }

    pub fn from_support(n: usize, support: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &j in support {
            if j >= n {
                return Err(Error::Index { index: j, len: n });
            }
            bits[j] = true;
        }
        Ok(Self { bits })
    }

    pub fn from_mask(n: usize, mask: u64) -> Self {
        Self {
            bits: (0..n).map(|j| mask >> j & 1 == 1).collect(),
        }
    }

    pub fn mask(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |m, (j, &b)| if b { m | 1 << j } else { m })
    }

    /// Parses `"0101"` or `"0,1,0,1"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !matches!(c, ',' | ' ' | '[' | ']'))
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Argument(format!(
                    "indicator vectors are made of 0/1, found {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn set(&mut self, j: usize, value: bool) {
        self.bits[j] = value;
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&j| self.bits[j]).collect()
    }

    pub fn support_is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Sensors of `self` not removed by `attack` (`mu \ nu`).
    pub fn without(&self, attack: &Self) -> Self {
        Self {
            bits: self
                .bits
                .iter()
                .zip(&attack.bits)
                .map(|(&m, &v)| m && !v)
                .collect(),
        }
    }

    pub fn cost(&self, costs: &[u64]) -> u64 {
        self.bits
            .iter()
            .zip(costs)
            .filter(|(&b, _)| b)
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| u8::from(b)).collect()
    }
}

impl fmt::Display for IndicatorVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for IndicatorVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.bits.iter().map(|&b| u8::from(b)))
    }
}

/// A covariance trace that may be unbounded. `Infinite` orders above every
/// finite value so min/max over objectives are total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trace {
    Finite(f64),
    Infinite,
}

impl Trace {
    pub fn value(self) -> f64 {
        match self {
            Trace::Finite(v) => v,
            Trace::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Trace::Finite(_))
    }

    /// Equal within `tol`, counting two infinities as equal.
    pub fn approx_eq(self, other: Trace, tol: f64) -> bool {
        match (self, other) {
            (Trace::Finite(a), Trace::Finite(b)) => (a - b).abs() <= tol,
            (Trace::Infinite, Trace::Infinite) => true,
            _ => false,
        }
    }
}

impl Eq for Trace {}

impl PartialOrd for Trace {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trace {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Trace::Finite(a), Trace::Finite(b)) => a.total_cmp(b),
            (Trace::Finite(_), Trace::Infinite) => Ordering::Less,
            (Trace::Infinite, Trace::Finite(_)) => Ordering::Greater,
            (Trace::Infinite, Trace::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trace::Finite(v) => write!(f, "{v}"),
            Trace::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Trace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Trace::Finite(v) => s.serialize_f64(*v),
            Trace::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Steady-state a priori (`Sigma`) and a posteriori (`Sigma*`) covariances.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariancePair {
    Finite {
        priori: DMatrix<f64>,
        posteriori: DMatrix<f64>,
    },
    Infinite,
}

impl CovariancePair {
    pub fn trace_priori(&self) -> Trace {
        match self {
            CovariancePair::Finite { priori, .. } => Trace::Finite(priori.trace()),
            CovariancePair::Infinite => Trace::Infinite,
        }
    }

    pub fn trace_posteriori(&self) -> Trace {
        match self {
            CovariancePair::Finite { posteriori, .. } => Trace::Finite(posteriori.trace()),
            CovariancePair::Infinite => Trace::Infinite,
        }
    }

    pub fn priori(&self) -> Option<&DMatrix<f64>> {
        match self {
            CovariancePair::Finite { priori, .. } => Some(priori),
            CovariancePair::Infinite => None,
        }
    }

    pub fn posteriori(&self) -> Option<&DMatrix<f64>> {
        match self {
            CovariancePair::Finite { posteriori, .. } => Some(posteriori),
            CovariancePair::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, CovariancePair::Infinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DareOptions {
    pub conv_tol: f64,
    pub max_iter: usize,
    pub svd_tol: f64,
    pub rank_tol: f64,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            conv_tol: DEFAULT_CONV_TOL,
            max_iter: DEFAULT_MAX_ITER,
            svd_tol: DEFAULT_SVD_TOL,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Measurement update `Sigma* = Sigma - Sigma C^T (C Sigma C^T + V)^+ C Sigma`.
/// Also returns the gain `Sigma C^T (C Sigma C^T + V)^+`.
fn measurement_update(
    sigma: &DMatrix<f64>,
    support: &[usize],
    noise: Option<&DMatrix<f64>>,
    svd_tol: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sigma.nrows();
    if support.is_empty() {
        return (sigma.clone(), DMatrix::zeros(n, 0));
    }
    let sigma_ct = linalg::columns(sigma, support);
    let mut innovation = linalg::submatrix(sigma, support);
    let inverse = match noise {
        Some(v) => {
            innovation += v;
            match innovation.clone().cholesky() {
                Some(chol) => chol.inverse(),
                None => linalg::pseudo_inverse(&innovation, svd_tol),
            }
        }
        None => linalg::pseudo_inverse(&innovation, svd_tol),
    };
    let gain = &sigma_ct * inverse;
    let mut post = sigma - &gain * sigma_ct.transpose();
    linalg::symmetrize(&mut post);
    (post, gain)
}

/// Fixed-point iteration of the filtering Riccati recursion from
/// `Sigma_0 = sigma_w^2 B B^T`.
///
/// Returns [`CovariancePair::Infinite`] when an unstable mode is excited by
/// the input but not observed (see [`check_reachable_detectable`]). An
/// undetectable pair whose blind unstable modes are never excited still has a
/// finite limit, which is returned.
pub fn dare_solve(
    sys: &NetworkSystem,
    placement: &IndicatorVector,
    opts: &DareOptions,
) -> Result<CovariancePair> {
    let n = sys.n();
    if placement.len() != n {
        return Err(Error::Shape(format!(
            "placement has length {}, system has {n} nodes",
            placement.len()
        )));
    }
    if !(opts.conv_tol > 0.0) {
        return Err(Error::Argument("conv_tol must be positive".into()));
    }
    if !check_detectable(sys.a(), placement, opts.rank_tol)
        && !check_reachable_detectable(sys, placement, opts.rank_tol)
    {
        return Ok(CovariancePair::Infinite);
    }

    let support = placement.support();
    let noise = sys.noise().restricted(&support);
    let a = sys.a();
    let a_t = a.transpose();
    let w = sys.input_covariance();

    let mut sigma = w.clone();
    let mut last_change = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let (post, _) = measurement_update(&sigma, &support, noise.as_ref(), opts.svd_tol);
        let mut next = a * post * &a_t + &w;
        linalg::symmetrize(&mut next);
        if next.iter().any(|x| !x.is_finite()) {
            break;
        }
        last_change = linalg::max_abs_diff(&next, &sigma);
        let scale = linalg::max_abs(&next).max(1.0);
        sigma = next;
        if last_change < opts.conv_tol * scale {
            let (posteriori, _) =
                measurement_update(&sigma, &support, noise.as_ref(), opts.svd_tol);
            return Ok(CovariancePair::Finite {
                priori: sigma,
                posteriori,
            });
        }
    }
    let (posteriori, _) = measurement_update(&sigma, &support, noise.as_ref(), opts.svd_tol);
    Err(Error::Divergence {
        iterations: opts.max_iter,
        last_change,
        last: Box::new(CovariancePair::Finite {
            priori: sigma,
            posteriori,
        }),
    })
}

/// Shortest distance from the input to any sensor of `placement`; `None`
/// when no sensor is reachable.
pub fn zeta(placement: &IndicatorVector, dmap: &DistanceMap) -> Option<usize> {
    placement
        .support()
        .into_iter()
        .filter_map(|j| dmap.get(j).finite())
        .min()
}

/// `sigma_w^2 * sum_{m=0}^{upto} A^m B B^T (A^T)^m`.
pub fn impulse_gramian(sys: &NetworkSystem, upto: Option<usize>) -> DMatrix<f64> {
    let n = sys.n();
    let mut acc = DMatrix::zeros(n, n);
    let Some(upto) = upto else {
        return acc;
    };
    let mut v: DVector<f64> = linalg::basis_vector(n, sys.input_node());
    for m in 0..=upto {
        if m > 0 {
            v = sys.a() * v;
        }
        acc += &v * v.transpose();
    }
    acc * sys.input_variance()
}

/// Closed-form steady-state covariances under zero sensor noise, valid when
/// the detectability and path-weight assumptions hold: only the distance
/// `zeta` from the input to the nearest sensor matters.
pub fn closed_form_covariance(
    sys: &NetworkSystem,
    placement: &IndicatorVector,
    dmap: &DistanceMap,
) -> Result<CovariancePair> {
    if !sys.noise().is_zero() {
        return Err(Error::Argument(
            "closed form requires zero sensor noise".into(),
        ));
    }
    if placement.len() != sys.n() || dmap.len() != sys.n() {
        return Err(Error::Shape("placement/distance map length mismatch".into()));
    }
    if dmap.source() != sys.input_node() {
        return Err(Error::Argument(
            "distance map must be computed from the input node".into(),
        ));
    }
    if placement.support_is_empty() {
        return Err(Error::Argument("placement has no sensors".into()));
    }
    let zeta = zeta(placement, dmap).ok_or_else(|| {
        Error::Argument("no placed sensor is reachable from the input node".into())
    })?;
    Ok(CovariancePair::Finite {
        priori: impulse_gramian(sys, Some(zeta)),
        posteriori: impulse_gramian(sys, zeta.checked_sub(1)),
    })
}

/// PBH detectability of `(A, C(mu))`: every eigenvalue with `|lambda| >= 1`
/// must leave `[A - lambda I; C(mu)]` with full column rank.
pub fn check_detectable(a: &DMatrix<f64>, placement: &IndicatorVector, rank_tol: f64) -> bool {
    let c = linalg::selector(a.nrows(), &placement.support());
    detectable_pair(a, &c, rank_tol)
}

/// Detectability of `(A, C(mu))` on the subspace the input reaches.
///
/// The Riccati iterates start at `sigma_w^2 B B^T` and never leave the
/// reachable subspace, where `(A, B)` is controllable, so this is exactly the
/// condition for the iteration to converge. It differs from
/// [`check_detectable`] only when an unstable mode is both unobserved and
/// never excited.
pub fn check_reachable_detectable(sys: &NetworkSystem, placement: &IndicatorVector, rank_tol: f64) -> bool {
    let a = sys.a();
    let reach = linalg::krylov_basis(a, &sys.input_covariance(), rank_tol);
    if reach.ncols() == 0 {
        return true;
    }
    let a_r = reach.transpose() * a * &reach;
    let c_r = linalg::selector(a.nrows(), &placement.support()) * &reach;
    detectable_pair(&a_r, &c_r, rank_tol)
}

fn detectable_pair(a: &DMatrix<f64>, c: &DMatrix<f64>, rank_tol: f64) -> bool {
    let n = a.nrows();
    pbh_all_unstable(a, |lambda| {
        let mut stacked = DMatrix::<Complex<f64>>::zeros(n + c.nrows(), n);
        for i in 0..n {
            for j in 0..n {
                stacked[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            stacked[(i, i)] -= lambda;
        }
        for r in 0..c.nrows() {
            for j in 0..n {
                stacked[(n + r, j)] = Complex::new(c[(r, j)], 0.0);
            }
        }
        linalg::complex_rank(&stacked, rank_tol) == n
    })
}

/// PBH stabilizability of `(A, B sigma_w)` with `B = e_{input_node}`.
pub fn check_stabilizable(
    a: &DMatrix<f64>,
    input_node: usize,
    input_variance: f64,
    rank_tol: f64,
) -> bool {
    let n = a.nrows();
    let sigma_w = input_variance.max(0.0).sqrt();
    pbh_all_unstable(a, |lambda| {
        let mut stacked = DMatrix::<Complex<f64>>::zeros(n, n + 1);
        for i in 0..n {
            for j in 0..n {
                stacked[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            stacked[(i, i)] -= lambda;
        }
        if input_node < n {
            stacked[(input_node, n)] = Complex::new(sigma_w, 0.0);
        }
        linalg::complex_rank(&stacked, rank_tol) == n
    })
}

fn pbh_all_unstable(a: &DMatrix<f64>, full_rank_at: impl Fn(Complex<f64>) -> bool) -> bool {
    linalg::eigenvalues(a)
        .into_iter()
        .filter(|&l| linalg::is_unstable_mode(l))
        .all(full_rank_at)
}
