//! Kernelized movement primitives over the Angle-Axis chart.
//!
//! A reference trajectory of Gaussians `(t_n, μ̂_n, Σ̂_n)` is regressed with
//! `η(t*) = k*(K + λΣ)⁻¹μ`, where every kernel block couples position,
//! velocity and (optionally) acceleration through derivatives of a scalar
//! kernel. Via-points join the reference as extra rows with their own
//! covariances.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3};

use crate::error::{Error, Result};
use crate::gmm::{ReferencePoint, ReferenceTrajectory};
use crate::so3::{exp_map, log_map, project_to_frame, recover_orientation, Rotation};

/// Default step used to turn a via angular velocity into a chart velocity.
pub const DEFAULT_VIA_DELTA: f64 = 1e-3;

/// Two rows closer than this in time are the same row.
pub const MERGE_TOLERANCE: f64 = 1e-9;

/// Half step of the central difference used to recover `ω` from a model.
pub const OMEGA_STEP: f64 = 1e-4;

// Vias must sit this far inside the chart ball.
const VIA_BALL_MARGIN: f64 = 1e-6;

const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    /// Inverse squared length scale of the Gaussian kernel (1/s²).
    pub l: f64,
    pub lambda: f64,
    /// Acceleration weight; `Some` switches the model to acceleration order.
    pub lambda_a: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            l: 0.01,
            lambda: 1.0,
            lambda_a: None,
        }
    }
}

impl KernelConfig {
    pub fn with_acceleration(mut self, lambda_a: f64) -> Self {
        self.lambda_a = Some(lambda_a);
        self
    }

    /// 2 for position-velocity, 3 with acceleration.
    pub fn order(&self) -> usize {
        if self.lambda_a.is_some() {
            3
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::Config(format!(
                "kernel l must be positive, got {}",
                self.l
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if let Some(a) = self.lambda_a {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("lambda_a must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

/// A scalar kernel together with its mixed partial derivatives.
pub trait Kernel {
    /// Entry `(p, q)` is `∂ᵖ_a ∂^q_b k(a, b)` for `p, q < order <= 3`.
    fn derivative_block(&self, a: f64, b: f64, order: usize) -> [[f64; 3]; 3];
}

/// `k(a, b) = exp(-l (a - b)²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianKernel {
    pub l: f64,
}

impl Kernel for GaussianKernel {
    fn derivative_block(&self, a: f64, b: f64, order: usize) -> [[f64; 3]; 3] {
        let l = self.l;
        let r = a - b;
        let r2 = r * r;
        let g = (-l * r2).exp();
        // Derivatives of g(r) up to fourth order.
        let d = [
            g,
            -2.0 * l * r * g,
            (4.0 * l * l * r2 - 2.0 * l) * g,
            (12.0 * l * l * r - 8.0 * l * l * l * r * r2) * g,
            (12.0 * l * l - 48.0 * l * l * l * r2 + 16.0 * l.powi(4) * r2 * r2) * g,
        ];
        let mut out = [[0.0; 3]; 3];
        for (p, row) in out.iter_mut().enumerate().take(order) {
            for (q, v) in row.iter_mut().enumerate().take(order) {
                // ∂/∂b = -∂/∂r.
                let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                *v = sign * d[p + q];
            }
        }
        out
    }
}

/// A desired orientation and world-frame angular velocity at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ViaPointSpec {
    pub t: f64,
    pub rotation: Rotation,
    pub omega: Vector3<f64>,
    /// 6×6, or 9×9 when it carries its own acceleration block.
    pub covariance: DMatrix<f64>,
}

impl ViaPointSpec {
    /// Diagonal covariance from per-axis orientation and velocity variances.
    pub fn with_variances(
        t: f64,
        rotation: Rotation,
        omega: Vector3<f64>,
        orientation: [f64; 3],
        velocity: [f64; 3],
    ) -> Self {
        let diag = DVector::from_iterator(6, orientation.into_iter().chain(velocity));
        ViaPointSpec {
            t,
            rotation,
            omega,
            covariance: DMatrix::from_diagonal(&diag),
        }
    }
}

/// `(t, [ψ̃; ψ̇̃], Σ̃)` of a via-point in the chart of `aux`.
pub fn transform_via_point(
    vp: &ViaPointSpec,
    aux: &Rotation,
    delta_t: f64,
) -> Result<ReferencePoint> {
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "via delta_t must be positive, got {delta_t}"
        )));
    }
    check_covariance(&vp.covariance, &[6, 9], "via-point")?;
    let psi = project_to_frame(&vp.rotation, aux).into_vector();
    if psi.norm() > std::f64::consts::PI - VIA_BALL_MARGIN {
        return Err(Error::InvalidInput(format!(
            "via-point at t = {} sits on the boundary of the auxiliary chart",
            vp.t
        )));
    }
    let body = vp.rotation.transpose().rotate(&vp.omega);
    let ahead = vp.rotation.compose(&exp_map(&(body * delta_t)));
    let psi_ahead = log_map(&aux.between(&ahead)).into_vector();
    let psi_dot = (psi_ahead - psi) / delta_t;
    let mean = DVector::from_iterator(6, psi.iter().chain(psi_dot.iter()).copied());
    Ok(ReferencePoint {
        t: vp.t,
        mean,
        covariance: vp.covariance.clone(),
    })
}

fn check_covariance(c: &DMatrix<f64>, sizes: &[usize], what: &str) -> Result<()> {
    if !c.is_square() || !sizes.contains(&c.nrows()) {
        return Err(Error::InvalidInput(format!(
            "{what} covariance must be one of {sizes:?} square, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    if (c - c.transpose()).amax() > 1e-12 * c.amax().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "{what} covariance is not symmetric"
        )));
    }
    if Cholesky::new(c.clone()).is_none() {
        return Err(Error::InvalidInput(format!(
            "{what} covariance is not positive definite"
        )));
    }
    Ok(())
}

/// Reference rows and via rows, sorted by time.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedReference {
    /// Channels per derivative order (3 for orientation).
    pub dim: usize,
    pub points: Vec<ReferencePoint>,
}

impl ExtendedReference {
    pub fn new(reference: &ReferenceTrajectory, dim: usize) -> Self {
        ExtendedReference {
            dim,
            points: reference.points.clone(),
        }
    }

    /// Merges via rows. A via within [`MERGE_TOLERANCE`] of an existing row
    /// replaces it.
    pub fn with_via_points(mut self, vias: impl IntoIterator<Item = ReferencePoint>) -> Self {
        for via in vias {
            match self
                .points
                .iter()
                .position(|p| (p.t - via.t).abs() < MERGE_TOLERANCE)
            {
                Some(i) => self.points[i] = via,
                None => {
                    let at = self.points.partition_point(|p| p.t < via.t);
                    self.points.insert(at, via);
                }
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pads means with zero accelerations and covariances with `(1/λ_a) I`.
/// Rows that already carry an acceleration block keep it.
pub fn augment_for_acceleration(
    reference: &ExtendedReference,
    lambda_a: f64,
) -> Result<ExtendedReference> {
    if !(lambda_a > 0.0 && lambda_a.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda_a must be positive, got {lambda_a}"
        )));
    }
    let dim = reference.dim;
    let (small, full) = (2 * dim, 3 * dim);
    let points = reference
        .points
        .iter()
        .map(|p| {
            let mut mean = DVector::zeros(full);
            let keep = p.mean.len().min(full);
            mean.rows_mut(0, keep).copy_from(&p.mean.rows(0, keep));
            let covariance = match p.covariance.nrows() {
                n if n == full => p.covariance.clone(),
                n if n == small => {
                    let mut c = DMatrix::zeros(full, full);
                    c.view_mut((0, 0), (small, small)).copy_from(&p.covariance);
                    for i in small..full {
                        c[(i, i)] = 1.0 / lambda_a;
                    }
                    c
                }
                n => {
                    return Err(Error::InvalidInput(format!(
                        "reference row at t = {} has a {n}x{n} covariance",
                        p.t
                    )))
                }
            };
            Ok(ReferencePoint {
                t: p.t,
                mean,
                covariance,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExtendedReference { dim, points })
}

/// A solved regression: `α = (K + λΣ)⁻¹μ` over the training times.
#[derive(Clone, Debug)]
pub struct KmpModel<K = GaussianKernel> {
    times: Vec<f64>,
    alpha: DVector<f64>,
    order: usize,
    dim: usize,
    kernel: K,
}

pub fn build_model(reference: &ExtendedReference, cfg: &KernelConfig) -> Result<KmpModel> {
    cfg.validate()?;
    let model = build_model_with(reference, cfg.lambda, GaussianKernel { l: cfg.l })?;
    if model.order != cfg.order() {
        return Err(Error::InvalidInput(format!(
            "reference rows have order {} but the kernel config asks for {}",
            model.order,
            cfg.order()
        )));
    }
    Ok(model)
}

/// Builds a model with an arbitrary kernel. The order is read off the rows.
pub fn build_model_with<K: Kernel>(
    reference: &ExtendedReference,
    lambda: f64,
    kernel: K,
) -> Result<KmpModel<K>> {
    let dim = reference.dim;
    let first = reference.points.first().ok_or_else(|| {
        Error::InvalidInput("cannot build a model from an empty reference".into())
    })?;
    if dim == 0 || first.mean.len() % dim != 0 {
        return Err(Error::InvalidInput(format!(
            "mean length {} is not a multiple of dim {dim}",
            first.mean.len()
        )));
    }
    let order = first.mean.len() / dim;
    if !(2..=3).contains(&order) {
        return Err(Error::InvalidInput(format!(
            "unsupported derivative order {order}"
        )));
    }
    let width = order * dim;
    for (i, p) in reference.points.iter().enumerate() {
        if p.mean.len() != width || p.covariance.shape() != (width, width) {
            return Err(Error::InvalidInput(format!(
                "reference row {i} (t = {}) does not have width {width}",
                p.t
            )));
        }
        if i > 0 && !(p.t > reference.points[i - 1].t) {
            return Err(Error::InvalidInput(format!(
                "reference times not increasing at row {i}"
            )));
        }
    }

    let n = reference.len();
    let size = n * width;
    let mut gram = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        for j in i..n {
            let block =
                kernel.derivative_block(reference.points[i].t, reference.points[j].t, order);
            for p in 0..order {
                for q in 0..order {
                    let v = block[p][q];
                    for d in 0..dim {
                        let (r, c) = (i * width + p * dim + d, j * width + q * dim + d);
                        gram[(r, c)] = v;
                        gram[(c, r)] = v;
                    }
                }
            }
        }
    }
    let mut mu = DVector::<f64>::zeros(size);
    for (i, p) in reference.points.iter().enumerate() {
        mu.rows_mut(i * width, width).copy_from(&p.mean);
        let mut block = gram.view_mut((i * width, i * width), (width, width));
        block += &p.covariance * lambda;
    }

    let alpha = solve_spd(gram, &mu)?;
    Ok(KmpModel {
        times: reference.points.iter().map(|p| p.t).collect(),
        alpha,
        order,
        dim,
        kernel,
    })
}

fn solve_spd(mut a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let size = a.nrows();
    let mut added = 0.0;
    for jitter in JITTER_LADDER {
        for i in 0..size {
            a[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(chol) = Cholesky::<f64, Dyn>::new(a.clone()) {
            return Ok(chol.solve(b));
        }
    }
    Err(Error::FactorizationFailure { size })
}

impl<K: Kernel> KmpModel<K> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Stacked `[ψ; ψ̇(; ψ̈)]` at `t`.
    pub fn predict(&self, t: f64) -> DVector<f64> {
        let (order, dim) = (self.order, self.dim);
        let width = order * dim;
        let mut out = DVector::zeros(width);
        for (i, &ti) in self.times.iter().enumerate() {
            let block = self.kernel.derivative_block(t, ti, order);
            let a = self.alpha.rows(i * width, width);
            for p in 0..order {
                for q in 0..order {
                    let v = block[p][q];
                    if v == 0.0 {
                        continue;
                    }
                    for d in 0..dim {
                        out[p * dim + d] += v * a[q * dim + d];
                    }
                }
            }
        }
        out
    }

    /// Predicted position channel only.
    pub fn predict_position(&self, t: f64) -> DVector<f64> {
        self.predict(t).rows(0, self.dim).into_owned()
    }
}

/// One sample of an orientation trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationSample {
    pub t: f64,
    /// Chart coordinate the sample was recovered from.
    pub psi: Vector3<f64>,
    pub rotation: Rotation,
    /// World-frame angular velocity.
    pub omega: Vector3<f64>,
}

/// `R(t) = R_aux exp(ψ(t))` with `ω` from a short central difference of the
/// recovered rotations.
pub fn reproduce_orientation_trajectory<K: Kernel>(
    model: &KmpModel<K>,
    aux: &Rotation,
    times: &[f64],
) -> Result<Vec<OrientationSample>> {
    if model.dim != 3 {
        return Err(Error::InvalidInput(format!(
            "orientation recovery needs a 3-channel model, got {}",
            model.dim
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "prediction grid must be strictly increasing".into(),
        ));
    }
    let at = |t: f64| {
        let p = model.predict_position(t);
        Vector3::new(p[0], p[1], p[2])
    };
    Ok(times
        .iter()
        .map(|&t| {
            let psi = at(t);
            let rotation = recover_orientation(&psi, aux);
            let before = recover_orientation(&at(t - OMEGA_STEP), aux);
            let after = recover_orientation(&at(t + OMEGA_STEP), aux);
            let body = log_map(&before.between(&after)).into_vector() / (2.0 * OMEGA_STEP);
            OrientationSample {
                t,
                psi,
                rotation,
                omega: rotation.rotate(&body),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::linspace;
    use crate::so3::{geodesic_distance, rot_x};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(values))
    }

    fn point(t: f64, mean: &[f64], var: f64) -> ReferencePoint {
        ReferencePoint {
            t,
            mean: DVector::from_column_slice(mean),
            covariance: DMatrix::identity(mean.len(), mean.len()) * var,
        }
    }

    fn reference_of(points: Vec<ReferencePoint>, dim: usize) -> ExtendedReference {
        ExtendedReference { dim, points }
    }

    #[test]
    fn gaussian_block_matches_finite_differences() {
        let k = GaussianKernel { l: 0.7 };
        let (a, b, h) = (0.4, -0.3, 1e-4);
        let f = |a: f64, b: f64| k.derivative_block(a, b, 3);
        let blk = f(a, b);
        for p in 0..3 {
            for q in 0..2 {
                let fd = (f(a, b + h)[p][q] - f(a, b - h)[p][q]) / (2.0 * h);
                assert_relative_eq!(blk[p][q + 1], fd, epsilon = 1e-6);
            }
        }
        for q in 0..3 {
            let fd = (f(a + h, b)[1][q] - f(a - h, b)[1][q]) / (2.0 * h);
            assert_relative_eq!(blk[2][q], fd, epsilon = 1e-6);
        }
        assert_relative_eq!(blk[0][0], (-0.7f64 * 0.49).exp(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_block_is_symmetric_under_swap() {
        let k = GaussianKernel { l: 0.01 };
        let x = k.derivative_block(1.3, 4.1, 3);
        let y = k.derivative_block(4.1, 1.3, 3);
        for p in 0..3 {
            for q in 0..3 {
                assert_relative_eq!(x[p][q], y[q][p], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn single_point_closed_form() {
        let k = GaussianKernel { l: 0.01 };
        let mean = [0.3, -0.2, 0.1, 0.05, 0.0, -0.04];
        let covs = [0.5, 0.2, 0.1, 2.0, 1.0, 0.3];
        let reference = reference_of(
            vec![ReferencePoint {
                t: 2.0,
                mean: DVector::from_column_slice(&mean),
                covariance: diag(&covs),
            }],
            3,
        );
        let model = build_model(&reference, &KernelConfig::default()).unwrap();
        let got = model.predict(2.0);
        // At t = t₀ the derivative block is diag(1, 2l), so channels decouple.
        let kb = k.derivative_block(2.0, 2.0, 2);
        assert_eq!(kb[0][1], 0.0);
        for i in 0..6 {
            let kk = if i < 3 { kb[0][0] } else { kb[1][1] };
            assert_relative_eq!(got[i], kk / (kk + covs[i]) * mean[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn prediction_vanishes_far_away() {
        let reference = reference_of(
            (0..5)
                .map(|i| point(i as f64, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0], 0.1))
                .collect(),
            3,
        );
        let model = build_model(&reference, &KernelConfig::default()).unwrap();
        assert!(model.predict(500.0).amax() < 1e-12);
    }

    /// Explicit finite basis: `k(a, b) = φ(a)ᵀφ(b)` with derivative rows.
    struct FeatureKernel {
        centers: Vec<f64>,
        width: f64,
    }

    impl FeatureKernel {
        // φ, φ', φ'' at t.
        fn features(&self, t: f64) -> [DVector<f64>; 3] {
            let w2 = self.width * self.width;
            let n = self.centers.len();
            let mut out = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
            for (j, c) in self.centers.iter().enumerate() {
                let r = t - c;
                let g = (-r * r / (2.0 * w2)).exp();
                out[0][j] = g;
                out[1][j] = -r / w2 * g;
                out[2][j] = (r * r / (w2 * w2) - 1.0 / w2) * g;
            }
            out
        }

        // Θ(t): (basis·dim) × (order·dim).
        fn theta(&self, t: f64, order: usize, dim: usize) -> DMatrix<f64> {
            let f = self.features(t);
            let n = self.centers.len();
            let mut th = DMatrix::zeros(n * dim, order * dim);
            for p in 0..order {
                for j in 0..n {
                    for d in 0..dim {
                        th[(j * dim + d, p * dim + d)] = f[p][j];
                    }
                }
            }
            th
        }
    }

    impl Kernel for FeatureKernel {
        fn derivative_block(&self, a: f64, b: f64, order: usize) -> [[f64; 3]; 3] {
            let (fa, fb) = (self.features(a), self.features(b));
            let mut out = [[0.0; 3]; 3];
            for p in 0..order {
                for q in 0..order {
                    out[p][q] = fa[p].dot(&fb[q]);
                }
            }
            out
        }
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a * a.transpose() + DMatrix::identity(n, n)) * scale
    }

    fn kernel_trick_case(order: usize, seed: u64) {
        let dim = 3;
        let width = order * dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel = FeatureKernel {
            centers: linspace(-1.0, 11.0, 40),
            width: 0.6,
        };
        let points: Vec<ReferencePoint> = linspace(0.0, 10.0, 30)
            .into_iter()
            .map(|t| ReferencePoint {
                t,
                mean: DVector::from_fn(width, |i, _| (t * 0.3 + i as f64).sin()),
                covariance: random_spd(&mut rng, width, 0.05),
            })
            .collect();
        let lambda = 0.7;

        // Parametric minimizer w = (Σ Θ Σ̂⁻¹ Θᵀ + λI)⁻¹ Σ Θ Σ̂⁻¹ μ̂.
        let nb = kernel.centers.len() * dim;
        let mut lhs = DMatrix::<f64>::identity(nb, nb) * lambda;
        let mut rhs = DVector::<f64>::zeros(nb);
        for p in &points {
            let th = kernel.theta(p.t, order, dim);
            let inv = p.covariance.clone().try_inverse().unwrap();
            lhs += &th * &inv * th.transpose();
            rhs += &th * &inv * &p.mean;
        }
        let w = lhs.lu().solve(&rhs).unwrap();

        let reference = reference_of(points, dim);
        let model = build_model_with(&reference, lambda, kernel).unwrap();
        for t in linspace(-0.5, 10.5, 100) {
            let expected = model.kernel.theta(t, order, dim).transpose() * &w;
            let got = model.predict(t);
            assert!((got - expected).amax() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn kernel_trick_matches_feature_space_solution() {
        kernel_trick_case(2, 1);
    }

    #[test]
    fn kernel_trick_matches_feature_space_solution_with_acceleration() {
        kernel_trick_case(3, 2);
    }

    #[test]
    fn via_transform_zero_velocity() {
        let r = exp_map(&Vector3::new(0.4, -0.2, 0.9));
        let vp = ViaPointSpec::with_variances(1.0, r, Vector3::zeros(), [1e-10; 3], [1e-10; 3]);
        let p = transform_via_point(&vp, &rot_x(0.3), DEFAULT_VIA_DELTA).unwrap();
        assert_eq!(p.mean.rows(3, 3).amax(), 0.0);
    }

    #[test]
    fn via_transform_at_chart_origin() {
        let r = exp_map(&Vector3::new(0.4, -0.2, 0.9));
        let omega = Vector3::new(0.0, 0.0, 0.3);
        let vp = ViaPointSpec::with_variances(1.0, r, omega, [1e-10; 3], [1e-10; 3]);
        let body = r.transpose().rotate(&omega);
        for delta in [1e-2, 1e-3, 1e-4] {
            let p = transform_via_point(&vp, &r, delta).unwrap();
            assert!(p.mean.rows(0, 3).amax() < 1e-15);
            let v = Vector3::new(p.mean[3], p.mean[4], p.mean[5]);
            assert_relative_eq!(v, body, epsilon = 1e-12);
        }
    }

    #[test]
    fn via_transform_roundtrip_of_published_triple() {
        let psi = Vector3::new(1.5456, 1.0304, 2.0608);
        let omega = Vector3::new(0.1, 0.1, 0.0);
        let aux = exp_map(&Vector3::new(1.2614, 1.0512, 1.5767));
        let target = recover_orientation(&psi, &Rotation::identity());
        let vp = ViaPointSpec::with_variances(4.0, target, omega, [1e-10; 3], [1e-10; 3]);
        let p = transform_via_point(&vp, &aux, DEFAULT_VIA_DELTA).unwrap();
        let local = Vector3::new(p.mean[0], p.mean[1], p.mean[2]);
        let back = recover_orientation(&local, &aux);
        assert!(geodesic_distance(&back, &target) < 1e-6);
        assert_relative_eq!(log_map(&back).into_vector(), psi, epsilon = 1e-6);
        // Push the chart velocity forward again and read off ω.
        let local_dot = Vector3::new(p.mean[3], p.mean[4], p.mean[5]);
        let h = 1e-6;
        let ahead = recover_orientation(&(local + local_dot * h), &aux);
        let omega_back = back.rotate(&(log_map(&back.between(&ahead)).into_vector() / h));
        assert!((omega_back - omega).norm() < 1e-3);
    }

    #[test]
    fn via_transform_rejects_bad_covariances() {
        let r = Rotation::identity();
        let mut vp = ViaPointSpec::with_variances(0.0, r, Vector3::zeros(), [1.0; 3], [1.0; 3]);
        vp.covariance[(0, 0)] = -1.0;
        assert!(transform_via_point(&vp, &r, 1e-3).is_err());
        vp.covariance = DMatrix::identity(4, 4);
        assert!(transform_via_point(&vp, &r, 1e-3).is_err());
        vp.covariance = DMatrix::identity(6, 6);
        assert!(transform_via_point(&vp, &r, 0.0).is_err());
    }

    #[test]
    fn via_replaces_coincident_reference_row() {
        let reference = ReferenceTrajectory {
            points: (0..4).map(|i| point(i as f64, &[0.0; 6], 1.0)).collect(),
        };
        let ext = ExtendedReference::new(&reference, 3).with_via_points([
            point(2.0 + 1e-12, &[1.0; 6], 1e-10),
            point(2.5, &[2.0; 6], 1e-10),
        ]);
        assert_eq!(ext.len(), 5);
        assert_eq!(ext.points[2].mean[0], 1.0);
        assert_eq!(ext.points[3].t, 2.5);
        assert!(ext.points.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn augmentation_pads_means_and_covariances() {
        let mut via9 = point(1.5, &[1.0; 6], 1e-10);
        via9.mean = DVector::from_element(6, 1.0);
        via9.covariance = DMatrix::identity(9, 9) * 3.0;
        let ext = reference_of(vec![point(1.0, &[1.0; 6], 0.5), via9], 3);
        let aug = augment_for_acceleration(&ext, 1e5).unwrap();
        let p = &aug.points[0];
        assert_eq!(p.mean.len(), 9);
        assert_eq!(p.mean.rows(6, 3).amax(), 0.0);
        assert_relative_eq!(p.covariance[(7, 7)], 1e-5);
        assert_eq!(p.covariance[(2, 2)], 0.5);
        assert_eq!(aug.points[1].covariance[(8, 8)], 3.0);
        assert!(augment_for_acceleration(&ext, 0.0).is_err());
    }

    fn sine_reference(n: usize) -> ExtendedReference {
        reference_of(
            linspace(0.0, 10.0, n)
                .into_iter()
                .map(|t| {
                    let (s, c) = (0.5 * t).sin_cos();
                    point(t, &[s, 0.3 * c, 0.1 * t, 0.5 * c, -0.15 * s, 0.1], 0.01)
                })
                .collect(),
            3,
        )
    }

    #[test]
    fn vanishing_acceleration_weight_recovers_plain_model() {
        let ext = sine_reference(40);
        let cfg = KernelConfig::default();
        let plain = build_model(&ext, &cfg).unwrap();
        let aug = augment_for_acceleration(&ext, 1e-8).unwrap();
        let padded = build_model(&aug, &cfg.with_acceleration(1e-8)).unwrap();
        for t in linspace(0.0, 10.0, 21) {
            let a = plain.predict(t);
            let b = padded.predict(t);
            assert!((a - b.rows(0, 6)).amax() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn velocity_channel_is_derivative_of_position() {
        let ext = sine_reference(50);
        let model = build_model(
            &ext,
            &KernelConfig {
                l: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let h = 1e-3;
        for t in linspace(0.5, 9.5, 37) {
            let fd =
                (model.predict(t + h).rows(0, 3) - model.predict(t - h).rows(0, 3)) / (2.0 * h);
            assert!((fd - model.predict(t).rows(3, 3)).amax() < 1e-4);
        }
    }

    #[test]
    fn tighter_via_covariance_pulls_prediction_closer() {
        let base = sine_reference(50);
        let target = [0.8, -0.4, 0.2, 0.0, 0.0, 0.0];
        let mut errors = Vec::new();
        for eps in [1e-2, 1e-6, 1e-10] {
            let ext = base.clone().with_via_points([point(4.1, &target, eps)]);
            let model = build_model(&ext, &KernelConfig::default()).unwrap();
            let got = model.predict(4.1);
            errors.push((got.rows(0, 3) - DVector::from_column_slice(&target[..3])).norm());
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
        assert!(errors[2] < 1e-3);
    }

    #[test]
    fn build_rejects_mismatched_rows_and_order() {
        let mut ext = sine_reference(5);
        let cfg = KernelConfig::default();
        assert!(build_model(&ext, &cfg.with_acceleration(10.0)).is_err());
        ext.points[2].covariance = DMatrix::identity(9, 9);
        assert!(build_model(&ext, &cfg).is_err());
        assert!(build_model(&reference_of(vec![], 3), &cfg).is_err());
        assert!(KernelConfig { l: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn constant_prediction_has_no_angular_velocity() {
        // A single very tight point far in the past: the regression is nearly flat.
        let ext = reference_of(
            linspace(0.0, 10.0, 11)
                .into_iter()
                .map(|t| point(t, &[0.4, 0.1, -0.2, 0.0, 0.0, 0.0], 1e-6))
                .collect(),
            3,
        );
        let model = build_model(&ext, &KernelConfig::default()).unwrap();
        let aux = rot_x(0.3);
        let traj = reproduce_orientation_trajectory(&model, &aux, &linspace(2.0, 8.0, 7)).unwrap();
        for s in &traj {
            assert!(s.omega.norm() < 1e-4);
            assert!(
                geodesic_distance(
                    &s.rotation,
                    &recover_orientation(&Vector3::new(0.4, 0.1, -0.2), &aux)
                ) < 1e-4
            );
        }
    }

    #[test]
    fn single_axis_velocity_is_recovered_in_world_frame() {
        let w = 0.25;
        let ext = reference_of(
            linspace(0.0, 10.0, 101)
                .into_iter()
                .map(|t| point(t, &[w * t, 0.0, 0.0, w, 0.0, 0.0], 1e-8))
                .collect(),
            3,
        );
        let model = build_model(
            &ext,
            &KernelConfig {
                l: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let traj =
            reproduce_orientation_trajectory(&model, &Rotation::identity(), &linspace(3.0, 7.0, 9))
                .unwrap();
        for s in &traj {
            assert_relative_eq!(s.omega, Vector3::new(w, 0.0, 0.0), epsilon = 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn predictions_are_finite(t in -20.0..30.0f64, scale in 0.1..3.0f64) {
            let mut ext = sine_reference(20);
            for p in &mut ext.points {
                p.mean *= scale;
            }
            let model = build_model(&ext, &KernelConfig::default()).unwrap();
            let y = model.predict(t);
            prop_assert!(y.iter().all(|v| v.is_finite()));
        }
    }
}
