//! Gaussian mixture encoding of projected demonstrations and Gaussian mixture
//! regression of the probabilistic reference trajectory.
//!
//! Data rows are `[t, η]` with time in column 0. The mixture is fitted by EM
//! from a seeded k-means++ start, and GMR conditions every component on time
//! and moment-matches the result into one Gaussian per query time.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::so3::{
    finite_difference_velocity, project_to_frame, unwrap_chart, Rotation, TangentState,
};

/// Relative tolerance for "uniform" sampling of a demonstration.
pub const TIMING_TOLERANCE: f64 = 1e-9;

/// Time-stamped orientations sampled at a uniform step.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    times: Vec<f64>,
    rotations: Vec<Rotation>,
    positions: Option<Vec<Vector3<f64>>>,
}

impl Demonstration {
    pub fn new(times: Vec<f64>, rotations: Vec<Rotation>) -> Result<Self> {
        Self::with_positions(times, rotations, None)
    }

    pub fn with_positions(
        times: Vec<f64>,
        rotations: Vec<Rotation>,
        positions: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self> {
        if times.len() != rotations.len() {
            return Err(Error::InvalidInput(format!(
                "{} timestamps but {} rotations",
                times.len(),
                rotations.len()
            )));
        }
        if let Some(p) = &positions {
            if p.len() != times.len() {
                return Err(Error::InvalidInput(format!(
                    "{} timestamps but {} positions",
                    times.len(),
                    p.len()
                )));
            }
        }
        if times.len() < 2 {
            return Err(Error::SeriesTooShort {
                len: times.len(),
                min: 2,
            });
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::InconsistentTiming(
                "timestamps must be strictly increasing".into(),
            ));
        }
        for (i, w) in times.windows(2).enumerate() {
            let step = w[1] - w[0];
            if !(step > 0.0) {
                return Err(Error::InconsistentTiming(format!(
                    "timestamps not strictly increasing at sample {}",
                    i + 1
                )));
            }
            if (step - dt).abs() > TIMING_TOLERANCE * dt.max(1.0) {
                return Err(Error::InconsistentTiming(format!(
                    "non-uniform step {step} at sample {} (expected {dt})",
                    i + 1
                )));
            }
        }
        Ok(Demonstration {
            times,
            rotations,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn positions(&self) -> Option<&[Vector3<f64>]> {
        self.positions.as_deref()
    }
}

/// A demonstration expressed in the chart of an auxiliary frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedDemonstration {
    pub times: Vec<f64>,
    pub states: Vec<TangentState>,
}

impl ProjectedDemonstration {
    /// `[t, ψ, ψ̇]` rows.
    pub fn rows(&self) -> impl Iterator<Item = [f64; 7]> + '_ {
        self.times.iter().zip(&self.states).map(|(t, s)| {
            let e = s.to_array();
            [*t, e[0], e[1], e[2], e[3], e[4], e[5]]
        })
    }
}

/// `ψ = log(R_auxᵀ R)` per sample, `ψ̇` by finite differences.
pub fn project_demonstrations(
    demos: &[Demonstration],
    aux: &Rotation,
) -> Result<Vec<ProjectedDemonstration>> {
    demos
        .iter()
        .map(|demo| {
            let mut psi: Vec<Vector3<f64>> = demo
                .rotations()
                .iter()
                .map(|r| project_to_frame(r, aux).into_vector())
                .collect();
            unwrap_chart(&mut psi);
            let psi_dot = finite_difference_velocity(&psi, demo.dt())?;
            Ok(ProjectedDemonstration {
                times: demo.times().to_vec(),
                states: psi
                    .into_iter()
                    .zip(psi_dot)
                    .map(|(psi, psi_dot)| TangentState { psi, psi_dot })
                    .collect(),
            })
        })
        .collect()
}

/// Stacks projected demonstrations into an `n × 7` data matrix.
pub fn stack_rows(projected: &[ProjectedDemonstration]) -> DMatrix<f64> {
    let rows: Vec<[f64; 7]> = projected.iter().flat_map(|p| p.rows()).collect();
    DMatrix::from_fn(rows.len(), 7, |i, j| rows[i][j])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub prior: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// A fitted mixture; immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Component>,
}

impl GaussianMixture {
    /// Validates priors (sum to one) and covariances (SPD, consistent sizes).
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidInput(
                "mixture needs at least one component".into(),
            ));
        };
        let dim = first.mean.len();
        if dim < 2 {
            return Err(Error::InvalidInput(
                "mixture dimension must include time plus at least one output".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("priors sum to {total}, not 1")));
        }
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.covariance.shape() != (dim, dim) {
                return Err(Error::InvalidInput(format!(
                    "component {k} has inconsistent size"
                )));
            }
            if !(c.prior >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "component {k} has negative prior"
                )));
            }
            if Cholesky::new(c.covariance.clone()).is_none() {
                return Err(Error::InvalidInput(format!(
                    "component {k} covariance is not positive definite"
                )));
            }
        }
        Ok(GaussianMixture { components })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Mean log-likelihood per row of `data`.
    pub fn mean_log_likelihood(&self, data: &DMatrix<f64>) -> Result<f64> {
        let logp = component_log_densities(&self.components, data)?;
        let n = data.nrows();
        let total: f64 = (0..n)
            .map(|i| log_sum_exp(logp.row(i).iter().copied()))
            .sum();
        Ok(total / n as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmOptions {
    pub components: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop when the relative log-likelihood improvement drops below this.
    pub tolerance: f64,
    /// Added to every covariance diagonal in each M-step.
    pub covariance_floor: f64,
}

impl GmmOptions {
    pub fn new(components: usize) -> Self {
        GmmOptions {
            components,
            seed: 0,
            max_iterations: 500,
            tolerance: 1e-8,
            covariance_floor: 1e-8,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions::new(5)
    }
}

#[derive(Clone, Debug)]
pub struct GmmFit {
    pub mixture: GaussianMixture,
    /// Mean log-likelihood per row, one entry per EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// Expectation-maximization for a full-covariance mixture.
pub fn fit_gmm(data: &DMatrix<f64>, options: &GmmOptions) -> Result<GmmFit> {
    let k = options.components;
    let (n, dim) = data.shape();
    if k == 0 {
        return Err(Error::InvalidInput(
            "component count must be at least 1".into(),
        ));
    }
    if n < 10 * k {
        return Err(Error::DegenerateData(format!(
            "{n} rows are too few for {k} components (need {})",
            10 * k
        )));
    }
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateData(
            "data contains non-finite values".into(),
        ));
    }

    let mut components = initialize(data, k, options)?;
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..options.max_iterations {
        // E-step
        let logp = component_log_densities(&components, data)?;
        let mut resp = DMatrix::<f64>::zeros(n, k);
        let mut total = 0.0;
        for i in 0..n {
            let lse = log_sum_exp(logp.row(i).iter().copied());
            total += lse;
            for j in 0..k {
                resp[(i, j)] = (logp[(i, j)] - lse).exp();
            }
        }
        let ll = total / n as f64;
        if let Some(&prev) = trace.last() {
            let improvement: f64 = ll - prev;
            trace.push(ll);
            if improvement.abs() <= options.tolerance * prev.abs().max(1e-300) {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }

        // M-step
        components = maximize(data, &resp, options.covariance_floor, dim)?;
    }

    Ok(GmmFit {
        mixture: GaussianMixture { components },
        log_likelihood: trace,
        converged,
    })
}

fn maximize(
    data: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    floor: f64,
    dim: usize,
) -> Result<Vec<Component>> {
    let n = data.nrows();
    (0..resp.ncols())
        .map(|j| {
            let weights = resp.column(j);
            let mass: f64 = weights.sum();
            if !(mass > 1e-10 * n as f64) {
                return Err(Error::DegenerateData(format!(
                    "component {j} lost all responsibility mass"
                )));
            }
            let mean = data.tr_mul(&weights) / mass;
            let mut centered = data.clone();
            for mut row in centered.row_iter_mut() {
                row -= mean.transpose();
            }
            let mut weighted = centered.clone();
            for (i, mut row) in weighted.row_iter_mut().enumerate() {
                row *= weights[i];
            }
            let mut covariance = centered.tr_mul(&weighted) / mass;
            covariance = (&covariance + covariance.transpose()) * 0.5;
            for d in 0..dim {
                covariance[(d, d)] += floor;
            }
            Ok(Component {
                prior: mass / n as f64,
                mean,
                covariance,
            })
        })
        .collect()
}

// k-means++ seeding followed by a few Lloyd sweeps.
fn initialize(data: &DMatrix<f64>, k: usize, options: &GmmOptions) -> Result<Vec<Component>> {
    let (n, dim) = data.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let row = |i: usize| data.row(i).transpose();

    let mut centers: Vec<DVector<f64>> = vec![row(rng.random_range(0..n))];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| (row(i) - &centers[0]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min((row(i) - &c).norm_squared());
        }
        centers.push(c);
    }

    let mut labels = vec![0usize; n];
    for _ in 0..20 {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let x = row(i);
            let best = (0..k)
                .min_by(|&a, &b| {
                    (&x - &centers[a])
                        .norm_squared()
                        .total_cmp(&(&x - &centers[b]).norm_squared())
                })
                .unwrap_or(0);
            if best != *label {
                *label = best;
                changed = true;
            }
        }
        for (j, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == j).collect();
            if !members.is_empty() {
                *center =
                    members.iter().map(|&i| row(i)).sum::<DVector<f64>>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let mut resp = DMatrix::<f64>::zeros(n, k);
    for (i, &label) in labels.iter().enumerate() {
        resp[(i, label)] = 1.0;
    }
    // Empty clusters take a uniform share so the first M-step stays defined.
    for j in 0..k {
        if resp.column(j).sum() == 0.0 {
            resp.column_mut(j).fill(1.0 / n as f64);
        }
    }
    let mut components = maximize(data, &resp, options.covariance_floor, dim)?;
    let total: f64 = components.iter().map(|c| c.prior).sum();
    components.iter_mut().for_each(|c| c.prior /= total);
    Ok(components)
}

/// `log πₖ + log N(xᵢ | μₖ, Σₖ)` for every row and component.
fn component_log_densities(components: &[Component], data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, dim) = data.shape();
    let mut out = DMatrix::<f64>::zeros(n, components.len());
    for (j, c) in components.iter().enumerate() {
        let chol = Cholesky::new(c.covariance.clone()).ok_or_else(|| {
            Error::DegenerateData(format!("component {j} covariance is not positive definite"))
        })?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut centered = data.transpose();
        for mut col in centered.column_iter_mut() {
            col -= &c.mean;
        }
        let whitened = l.solve_lower_triangular(&centered).ok_or_else(|| {
            Error::DegenerateData(format!("component {j} covariance is singular"))
        })?;
        let norm = -0.5 * (dim as f64 * (2.0 * PI).ln() + log_det) + c.prior.ln();
        for (i, col) in whitened.column_iter().enumerate() {
            out[(i, j)] = norm - 0.5 * col.norm_squared();
        }
    }
    Ok(out)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Conditional `P(η | t)` of a mixture, moment-matched into one Gaussian.
pub fn gmr_condition(gmm: &GaussianMixture, t: f64) -> (DVector<f64>, DMatrix<f64>) {
    let dim = gmm.dim();
    let out = dim - 1;
    let mut log_h = Vec::with_capacity(gmm.components.len());
    let mut conditionals = Vec::with_capacity(gmm.components.len());

    for c in &gmm.components {
        let mu_t = c.mean[0];
        let var_t = c.covariance[(0, 0)];
        let cross = c.covariance.view((1, 0), (out, 1)).into_owned();
        let dt = t - mu_t;
        log_h.push(c.prior.ln() - 0.5 * ((2.0 * PI * var_t).ln() + dt * dt / var_t));
        let mean = c.mean.rows(1, out) + &cross * (dt / var_t);
        let cov = c.covariance.view((1, 1), (out, out)) - &cross * cross.transpose() / var_t;
        conditionals.push((mean, cov));
    }

    let lse = log_sum_exp(log_h.iter().copied());
    let h: Vec<f64> = log_h.iter().map(|v| (v - lse).exp()).collect();

    let mut mean = DVector::<f64>::zeros(out);
    for (hk, (m, _)) in h.iter().zip(&conditionals) {
        mean += m * *hk;
    }
    let mut cov = DMatrix::<f64>::zeros(out, out);
    for (hk, (m, s)) in h.iter().zip(&conditionals) {
        let d = m - &mean;
        cov += (s + &d * d.transpose()) * *hk;
    }
    cov = (&cov + cov.transpose()) * 0.5;
    (mean, cov)
}

/// One time-indexed Gaussian of a reference trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePoint {
    pub t: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReferenceTrajectory {
    pub points: Vec<ReferencePoint>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn extract_reference(gmm: &GaussianMixture, times: &[f64]) -> Result<ReferenceTrajectory> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "reference times must be strictly increasing".into(),
        ));
    }
    Ok(ReferenceTrajectory {
        points: times
            .iter()
            .map(|&t| {
                let (mean, covariance) = gmr_condition(gmm, t);
                ReferencePoint {
                    t,
                    mean,
                    covariance,
                }
            })
            .collect(),
    })
}

/// `n` evenly spaced points over `[start, end]`.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        end
                    } else {
                        start + step * i as f64
                    }
                })
                .collect()
        }
    }
}
