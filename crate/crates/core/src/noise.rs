//! Suboptimality bounds for zero-noise placements when sensors are noisy.
//!
//! Running the zero-noise steady gain `K` on a system with sensor noise
//! `V~` gives a suboptimal filter whose a priori covariance is `Sigma + E`,
//! where `E` solves the Lyapunov equation
//! `E = (A - KC) E (A - KC)^T + K V~ K^T`. Since the optimal noisy filter can
//! only do better: `Sigma~ <= Sigma + E`, and a posteriori
//! `Sigma~* <= Sigma* + (I - LC) E (I - LC)^T + L V~ L^T`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kalman::{
    dare_solve, CovariancePair, DareOptions, IndicatorVector, NetworkSystem, SensorNoise,
};
use crate::linalg;

pub const LYAPUNOV_TOL: f64 = 1e-12;
pub const LYAPUNOV_MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseBoundReport {
    #[serde(serialize_with = "ser_matrix")]
    pub e: DMatrix<f64>,
    /// Posterior excess of the zero-noise gain under noise:
    /// `(I - LC) E (I - LC)^T + L V~ L^T`.
    #[serde(serialize_with = "ser_matrix")]
    pub e_post: DMatrix<f64>,
    /// `(I - LC) E`, the posterior excess if the update `(I - LC) P` held
    /// for a non-optimal gain. Not a valid bound in general.
    #[serde(serialize_with = "ser_matrix")]
    pub e_post_product: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub gain_k: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub gain_l: DMatrix<f64>,
    /// Zero-noise steady a priori covariance.
    #[serde(serialize_with = "ser_matrix")]
    pub sigma: DMatrix<f64>,
    /// Zero-noise steady a posteriori covariance.
    #[serde(serialize_with = "ser_matrix")]
    pub sigma_post: DMatrix<f64>,
    pub trace_e: f64,
    pub trace_e_post: f64,
    pub trace_e_post_product: f64,
    pub bound_priori: f64,
    pub bound_posteriori: f64,
    pub closed_loop_radius: f64,
    /// Spectral radius of `A - KC` restricted to the noise-excited subspace.
    pub excited_radius: f64,
    pub lyapunov_iterations: usize,
}

fn ser_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(linalg::to_rows(m))
}

/// Iterates `X <- F X F^T + Q` from `X = 0` until the largest entry change
/// drops below `tol` relative to the largest entry of `X`. Returns the limit and the
/// number of terms summed.
pub fn lyapunov_fixed_point(
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
    max_terms: usize,
) -> Result<(DMatrix<f64>, usize)> {
    let f_t = f.transpose();
    let mut x = DMatrix::zeros(q.nrows(), q.ncols());
    for k in 1..=max_terms {
        let mut next = f * &x * &f_t + q;
        linalg::symmetrize(&mut next);
        let change = linalg::max_abs_diff(&next, &x);
        x = next;
        if !change.is_finite() {
            break;
        }
        if change <= tol * linalg::max_abs(&x) {
            return Ok((x, k));
        }
    }
    Err(Error::Unstable {
        spectral_radius: linalg::spectral_radius(f),
    })
}

/// `sum_{m>=0} F^m Q (F^T)^m` by doubling: after step `k` the partial sum
/// holds `2^k` terms.
pub fn lyapunov_series(f: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let mut power = f.clone();
    let mut sum = q.clone();
    for _ in 0..64 {
        let addition = &power * &sum * power.transpose();
        sum += &addition;
        power = &power * &power;
        if !linalg::max_abs(&sum).is_finite() {
            break;
        }
        if linalg::max_abs(&addition) <= tol * linalg::max_abs(&sum) {
            return Ok(sum);
        }
    }
    Err(Error::Unstable {
        spectral_radius: linalg::spectral_radius(f),
    })
}

/// Bounds for `placement` on a system whose noise covariance is the true
/// `V~`.
///
/// The Lyapunov equation is solved on the smallest `(A - KC)`-invariant
/// subspace containing the range of `K V~ K^T`: modes of `A - KC` the noise
/// never excites do not contribute to `E`, and may be unstable when the
/// zero-noise covariance is finite.
pub fn compute_noise_bound(
    sys: &NetworkSystem,
    placement: &IndicatorVector,
    opts: &DareOptions,
) -> Result<NoiseBoundReport> {
    let n = sys.n();
    let zero_noise = sys.without_noise();
    let (sigma, sigma_post) = match dare_solve(&zero_noise, placement, opts)? {
        CovariancePair::Finite { priori, posteriori } => (priori, posteriori),
        CovariancePair::Infinite => {
            return Err(Error::Argument(format!(
                "placement {placement} does not make the system detectable"
            )))
        }
    };
    let support = placement.support();
    let c = linalg::selector(n, &support);
    let innovation_pinv = linalg::pseudo_inverse(&linalg::submatrix(&sigma, &support), opts.svd_tol);
    let gain_l = linalg::columns(&sigma, &support) * innovation_pinv;
    let gain_k = sys.a() * &gain_l;
    let closed_loop = sys.a() - &gain_k * &c;
    let closed_loop_radius = linalg::spectral_radius(&closed_loop);
    let v_restricted = match sys.noise() {
        SensorNoise::Zero => DMatrix::zeros(support.len(), support.len()),
        SensorNoise::Covariance(v) => linalg::submatrix(v, &support),
    };
    let drive = &gain_k * &v_restricted * gain_k.transpose();

    let basis = linalg::krylov_basis(&closed_loop, &drive, opts.svd_tol);
    let (e, excited_radius, lyapunov_iterations) = if basis.ncols() == 0 {
        (DMatrix::zeros(n, n), 0.0, 0)
    } else {
        let f_r = basis.transpose() * &closed_loop * &basis;
        let q_r = basis.transpose() * &drive * &basis;
        let radius = linalg::spectral_radius(&f_r);
        if radius >= 1.0 - linalg::STABILITY_MARGIN {
            return Err(Error::Unstable {
                spectral_radius: radius,
            });
        }
        let (x, iters) = lyapunov_fixed_point(&f_r, &q_r, LYAPUNOV_TOL, LYAPUNOV_MAX_TERMS)?;
        let mut e = &basis * x * basis.transpose();
        linalg::symmetrize(&mut e);
        (e, radius, iters)
    };

    let i_lc = DMatrix::identity(n, n) - &gain_l * &c;
    let mut e_post = &i_lc * &e * i_lc.transpose() + &gain_l * &v_restricted * gain_l.transpose();
    linalg::symmetrize(&mut e_post);
    let e_post_product = &i_lc * &e;
    let trace_e = e.trace();
    let trace_e_post = e_post.trace();
    Ok(NoiseBoundReport {
        bound_priori: sigma.trace() + trace_e,
        bound_posteriori: sigma_post.trace() + trace_e_post,
        trace_e_post_product: e_post_product.trace(),
        e,
        e_post,
        e_post_product,
        gain_k,
        gain_l,
        sigma,
        sigma_post,
        trace_e,
        trace_e_post,
        closed_loop_radius,
        excited_radius,
        lyapunov_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example1_system;

    /// vec(E) = (I - F (x) F)^{-1} vec(Q), solved directly.
    fn kronecker_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = f.nrows();
        let kron = f.kronecker(f);
        let lhs = DMatrix::identity(n * n, n * n) - kron;
        let rhs = nalgebra::DVector::from_iterator(n * n, q.iter().copied());
        let x = lhs.lu().solve(&rhs).unwrap();
        DMatrix::from_iterator(n, n, x.iter().copied())
    }

    #[test]
    fn lyapunov_routes_agree_with_direct_solve() {
        let f = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, -0.1, 0.3, 0.4, 0.0, 0.6, -0.2]);
        let q = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 0.3]);
        let direct = kronecker_lyapunov(&f, &q);
        let (fixed, _) = lyapunov_fixed_point(&f, &q, LYAPUNOV_TOL, LYAPUNOV_MAX_TERMS).unwrap();
        let series = lyapunov_series(&f, &q, LYAPUNOV_TOL).unwrap();
        assert!(linalg::max_abs_diff(&fixed, &direct) < 1e-10);
        assert!(linalg::max_abs_diff(&series, &direct) < 1e-10);
    }

    #[test]
    fn unstable_lyapunov_is_reported() {
        let f = DMatrix::identity(2, 2) * 1.5;
        let q = DMatrix::identity(2, 2);
        assert!(matches!(
            lyapunov_fixed_point(&f, &q, LYAPUNOV_TOL, 10_000),
            Err(Error::Unstable { .. })
        ));
        assert!(lyapunov_series(&f, &q, LYAPUNOV_TOL).is_err());
    }

    #[test]
    fn zero_noise_bound_collapses() {
        let sys = example1_system();
        let mu = IndicatorVector::from_support(4, &[3]).unwrap();
        let r = compute_noise_bound(&sys, &mu, &DareOptions::default()).unwrap();
        assert_eq!(linalg::max_abs(&r.e), 0.0);
        assert!((r.bound_priori - 9.4438).abs() < 1e-9);
        assert!((r.bound_posteriori - 5.77).abs() < 1e-9);
    }

    #[test]
    fn example_bound_dominates_noisy_covariance() {
        let sys = example1_system()
            .with_noise(SensorNoise::isotropic(4, 0.01))
            .unwrap();
        let mu = IndicatorVector::from_support(4, &[3]).unwrap();
        let opts = DareOptions::default();
        let r = compute_noise_bound(&sys, &mu, &opts).unwrap();
        let noisy = dare_solve(&sys, &mu, &opts).unwrap();
        assert!(noisy.trace_priori().value() <= 9.4438 + r.trace_e + 1e-8);
        let gap = &r.sigma + &r.e - noisy.priori().unwrap();
        assert!(linalg::min_symmetric_eigenvalue(&gap) >= -1e-8);
        let gap_post = &r.sigma_post + &r.e_post - noisy.posteriori().unwrap();
        assert!(linalg::min_symmetric_eigenvalue(&gap_post) >= -1e-8);
    }

    #[test]
    fn undetectable_placement_is_rejected() {
        let sys = example1_system()
            .with_noise(SensorNoise::isotropic(4, 0.1))
            .unwrap();
        assert!(matches!(
            compute_noise_bound(&sys, &IndicatorVector::zeros(4), &DareOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn product_form_can_undershoot() {
        let sys = example1_system()
            .with_noise(SensorNoise::isotropic(4, 0.01))
            .unwrap();
        let mu = IndicatorVector::from_support(4, &[3]).unwrap();
        let opts = DareOptions::default();
        let r = compute_noise_bound(&sys, &mu, &opts).unwrap();
        let noisy = dare_solve(&sys, &mu, &opts).unwrap();
        let gap = &r.sigma_post + &r.e_post_product - noisy.posteriori().unwrap();
        assert!(gap.trace() < -0.1);
        assert!(linalg::min_symmetric_eigenvalue(&gap) < -0.1);
    }

    #[test]
    fn unexcited_unstable_modes_are_ignored() {
        // node 2 is unreachable from the input and grows; the sensor at the
        // input never feeds noise into it
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.3, 0.2, 0.0, 0.0, 0.0, 1.5]);
        let sys = NetworkSystem::new(a, 0, 1.0, SensorNoise::isotropic(3, 0.1)).unwrap();
        let mu = IndicatorVector::from_support(3, &[0, 2]).unwrap();
        let opts = DareOptions::default();
        let r = compute_noise_bound(&sys, &mu, &opts).unwrap();
        let noisy = dare_solve(&sys, &mu, &opts).unwrap();
        let gap = &r.sigma + &r.e - noisy.priori().unwrap();
        assert!(linalg::min_symmetric_eigenvalue(&gap) >= -1e-8);
    }
}
