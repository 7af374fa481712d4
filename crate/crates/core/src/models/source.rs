//! Multi-dipole source model with the dipole moments integrated out.
//!
//! The sampled state is `(d, r_1..r_d, lambda)`. Given it, the moments at each
//! time point are Gaussian with covariance `lambda I`, so the likelihood of the
//! analysis window is a product of Gaussian marginals
//! `N(y(t); 0, lambda G G^T + theta^2 Sigma)`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::models::clg::LinearGaussian;
use crate::models::geometry::{distance, GridConfig, VoxelGrid};
use crate::models::nef::{alpha_of_theta, theta_of_alpha};
use crate::rng::{stream, Purpose, StreamRng};
use crate::smc::mh::mh_accept;
use crate::smc::{Particle, TemperedModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The non-linear block: dipole locations (voxel indices) and the prior
/// variance scale of the dipole moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub locations: Vec<usize>,
    pub lambda: f64,
}

impl SourceConfig {
    pub fn d(&self) -> usize {
        self.locations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePrior {
    pub poisson_rate: f64,
    /// Natural-log range of the uniform prior on `ln lambda`.
    pub log_lambda_range: (f64, f64),
    pub n_voxels: usize,
    pub d_max: usize,
}

impl SourcePrior {
    pub fn new(n_voxels: usize) -> Self {
        Self {
            poisson_rate: 1.0,
            log_lambda_range: (-8.0, -5.0),
            n_voxels,
            d_max: 10,
        }
    }

    fn log_poisson(&self, d: usize) -> f64 {
        let r = self.poisson_rate;
        d as f64 * r.ln() - r - (1..=d).map(|k| (k as f64).ln()).sum::<f64>()
    }

    pub fn sample(&self, rng: &mut StreamRng) -> SourceConfig {
        // inversion of the Poisson cdf, truncated at d_max
        let u: f64 = rng.random();
        let total: f64 = (0..=self.d_max).map(|k| self.log_poisson(k).exp()).sum();
        let mut acc = 0.0;
        let mut d = self.d_max;
        for k in 0..=self.d_max {
            acc += self.log_poisson(k).exp() / total;
            if u < acc {
                d = k;
                break;
            }
        }
        let locations = (0..d).map(|_| rng.random_range(0..self.n_voxels)).collect();
        let (a, b) = self.log_lambda_range;
        let lambda = (a + (b - a) * rng.random::<f64>()).exp();
        SourceConfig { locations, lambda }
    }
}

/// `log Poisson(d) + log U(ln lambda) + sum_i log(1/|Omega|)`, `-inf` outside
/// the support.
pub fn prior_logdensity_source(prior: &SourcePrior, x2: &SourceConfig) -> f64 {
    let d = x2.d();
    let (a, b) = prior.log_lambda_range;
    let ll = x2.lambda.ln();
    if d > prior.d_max || !(ll >= a && ll <= b) || x2.locations.iter().any(|&r| r >= prior.n_voxels) {
        return f64::NEG_INFINITY;
    }
    prior.log_poisson(d) - (b - a).ln() - d as f64 * (prior.n_voxels as f64).ln()
}

/// Target evaluated at one state: prior and likelihood terms kept apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluated {
    pub log_prior: f64,
    pub log_lik: f64,
}

impl Evaluated {
    pub fn total(&self) -> f64 {
        self.log_prior + self.log_lik
    }
}

/// Reversible moves on [`SourceConfig`].
#[derive(Debug, Clone)]
pub struct SourceKernels {
    pub n_voxels: usize,
    pub d_max: usize,
    /// Candidate voxels for the local location move, per voxel.
    pub neighbors: Arc<Vec<Vec<usize>>>,
    pub log_lambda_step: f64,
    pub birth_death: bool,
    pub location: bool,
    pub lambda: bool,
}

impl SourceKernels {
    pub fn new(n_voxels: usize, d_max: usize, neighbors: Arc<Vec<Vec<usize>>>) -> Self {
        Self {
            n_voxels,
            d_max,
            neighbors,
            log_lambda_step: 0.3,
            birth_death: true,
            location: true,
            lambda: true,
        }
    }

    fn step<F>(
        &self,
        x: &mut SourceConfig,
        cur: &mut Evaluated,
        proposal: SourceConfig,
        log_q_correction: f64,
        target: &F,
        rng: &mut StreamRng,
    ) -> Result<bool>
    where
        F: Fn(&SourceConfig) -> Evaluated,
    {
        let e = target(&proposal);
        if e.log_prior == f64::NEG_INFINITY {
            let _: f64 = rng.random();
            return Ok(false);
        }
        if mh_accept(cur.total(), e.total(), log_q_correction, rng)? {
            *x = proposal;
            *cur = e;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Birth or death with probability 1/2 each. A birth inserts a dipole at a
    /// uniform position in the list with a uniform voxel; a death removes a
    /// uniformly chosen dipole.
    pub fn birth_death_move<F>(
        &self,
        x: &mut SourceConfig,
        cur: &mut Evaluated,
        target: &F,
        rng: &mut StreamRng,
    ) -> Result<bool>
    where
        F: Fn(&SourceConfig) -> Evaluated,
    {
        let d = x.d();
        let ln_omega = (self.n_voxels as f64).ln();
        if rng.random::<bool>() {
            if d >= self.d_max {
                return Ok(false);
            }
            let pos = rng.random_range(0..=d);
            let voxel = rng.random_range(0..self.n_voxels);
            let mut prop = x.clone();
            prop.locations.insert(pos, voxel);
            // q(death) = 1/2 * 1/(d+1); q(birth) = 1/2 * 1/(d+1) * 1/|Omega|
            self.step(x, cur, prop, ln_omega, target, rng)
        } else {
            if d == 0 {
                return Ok(false);
            }
            let pos = rng.random_range(0..d);
            let mut prop = x.clone();
            prop.locations.remove(pos);
            self.step(x, cur, prop, -ln_omega, target, rng)
        }
    }

    /// Move dipole `i` to a uniformly chosen voxel of its neighborhood.
    pub fn location_move<F>(
        &self,
        x: &mut SourceConfig,
        i: usize,
        cur: &mut Evaluated,
        target: &F,
        rng: &mut StreamRng,
    ) -> Result<bool>
    where
        F: Fn(&SourceConfig) -> Evaluated,
    {
        let from = x.locations[i];
        let nb = &self.neighbors[from];
        if nb.is_empty() {
            return Ok(false);
        }
        let to = nb[rng.random_range(0..nb.len())];
        let back = self.neighbors[to].len();
        let mut prop = x.clone();
        prop.locations[i] = to;
        let corr = (nb.len() as f64).ln() - (back as f64).ln();
        self.step(x, cur, prop, corr, target, rng)
    }

    /// Gaussian random walk on `ln lambda`.
    pub fn lambda_move<F>(
        &self,
        x: &mut SourceConfig,
        cur: &mut Evaluated,
        step: f64,
        target: &F,
        rng: &mut StreamRng,
    ) -> Result<bool>
    where
        F: Fn(&SourceConfig) -> Evaluated,
    {
        let z: f64 = StandardNormal.sample(rng);
        let mut prop = x.clone();
        prop.lambda = (x.lambda.ln() + step * z).exp();
        self.step(x, cur, prop, 0.0, target, rng)
    }

    /// One sweep: birth/death, a local move of every dipole, then a lambda move.
    pub fn sweep<F>(
        &self,
        x: &mut SourceConfig,
        cur: &mut Evaluated,
        lambda_step: f64,
        target: &F,
        rng: &mut StreamRng,
    ) -> Result<usize>
    where
        F: Fn(&SourceConfig) -> Evaluated,
    {
        let mut accepted = 0;
        if self.birth_death {
            accepted += self.birth_death_move(x, cur, target, rng)? as usize;
        }
        if self.location {
            for i in 0..x.d() {
                accepted += self.location_move(x, i, cur, target, rng)? as usize;
            }
        }
        if self.lambda {
            accepted += self.lambda_move(x, cur, lambda_step, target, rng)? as usize;
        }
        Ok(accepted)
    }
}

/// Synthetic data settings for the source-localization study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClgDataConfig {
    pub grid: GridConfig,
    pub n_dipoles: usize,
    /// Minimum distance between dipoles in cm.
    pub min_separation: f64,
    pub n_times: usize,
    pub peak_time: f64,
    pub bump_width: f64,
    pub amplitude: f64,
    pub theta_true_range: (f64, f64),
    #[serde(default)]
    pub zero_noise: bool,
    pub max_draws: usize,
}

impl Default for ClgDataConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            n_dipoles: 2,
            min_separation: 3.0,
            n_times: 100,
            peak_time: 50.0,
            bump_width: 10.0,
            amplitude: 0.08,
            theta_true_range: (0.05, 0.5),
            zero_noise: false,
            max_draws: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClgTruth {
    pub d: usize,
    pub voxels: Vec<usize>,
    /// Dipole positions in cm.
    pub positions: Vec<[f64; 3]>,
    /// Moment axis (0, 1, 2) per dipole.
    pub axes: Vec<usize>,
    pub amplitude: f64,
    pub theta_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClgDataset {
    pub seed: u64,
    pub grid: GridConfig,
    /// Sensor positions in cm.
    pub sensors: Vec<[f64; 3]>,
    /// Integer time indices `1..=n_times`.
    pub times: Vec<usize>,
    /// `n_sensors x n_times`.
    pub observations: Vec<Vec<f64>>,
}

pub fn time_course(t: f64, config: &ClgDataConfig) -> f64 {
    let z = (t - config.peak_time) / config.bump_width;
    config.amplitude * (-0.5 * z * z).exp()
}

/// Axis whose lead-field column has the largest norm.
pub fn strongest_axis(grid: &VoxelGrid, r: usize) -> Result<usize> {
    let g = grid.lead_field(r)?;
    let norms: Vec<f64> = (0..3)
        .map(|k| (0..grid.n_sensors()).map(|s| g[3 * s + k].powi(2)).sum::<f64>())
        .collect();
    let mut best = 0;
    for k in 1..3 {
        if norms[k] > norms[best] {
            best = k;
        }
    }
    Ok(best)
}

pub fn generate_clg_data(seed: u64, grid: &VoxelGrid, config: &ClgDataConfig) -> Result<(ClgDataset, ClgTruth)> {
    let mut rng = stream(seed, Purpose::Data, 0, 0);
    let n_vox = grid.n_voxels();
    let mut voxels = None;
    for _ in 0..config.max_draws {
        let cand: Vec<usize> = (0..config.n_dipoles).map(|_| rng.random_range(0..n_vox)).collect();
        let ok = cand.iter().enumerate().all(|(i, a)| {
            cand[i + 1..]
                .iter()
                .all(|b| distance(&grid.voxels[*a], &grid.voxels[*b]) > config.min_separation)
        });
        if ok {
            voxels = Some(cand);
            break;
        }
    }
    let voxels = voxels.ok_or_else(|| {
        SmcError::Generation(format!(
            "no dipole placement with separation > {} cm after {} draws",
            config.min_separation, config.max_draws
        ))
    })?;
    let axes = voxels
        .iter()
        .map(|&r| strongest_axis(grid, r))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = config.theta_true_range;
    let theta_true = lo + (hi - lo) * rng.random::<f64>();

    let ns = grid.n_sensors();
    let times: Vec<usize> = (1..=config.n_times).collect();
    let mut obs = vec![vec![0.0; config.n_times]; ns];
    for (j, &t) in times.iter().enumerate() {
        let q = time_course(t as f64, config);
        for (&r, &k) in voxels.iter().zip(&axes) {
            let g = grid.lead_field(r)?;
            for (s, row) in obs.iter_mut().enumerate() {
                row[j] += g[3 * s + k] * q;
            }
        }
    }
    for row in obs.iter_mut() {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            if !config.zero_noise {
                *v += theta_true * z;
            }
        }
    }
    let dataset = ClgDataset {
        seed,
        grid: grid.config.clone(),
        sensors: grid.sensors.clone(),
        times,
        observations: obs,
    };
    let truth = ClgTruth {
        d: voxels.len(),
        positions: voxels.iter().map(|&r| grid.voxels[r]).collect(),
        voxels,
        axes,
        amplitude: config.amplitude,
        theta_true,
    };
    Ok((dataset, truth))
}

/// Options for the Rao-Blackwellized source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClgModelConfig {
    /// Inclusive range of time indices used for inference.
    pub window: (usize, usize),
    pub theta_star: f64,
    pub neighbor_radius: f64,
    pub log_lambda_range: (f64, f64),
    pub d_max: usize,
}

impl Default for ClgModelConfig {
    fn default() -> Self {
        Self {
            window: (40, 60),
            theta_star: 0.025,
            neighbor_radius: 2.0,
            log_lambda_range: (-8.0, -5.0),
            d_max: 10,
        }
    }
}

/// The Rao-Blackwellized source model. Its tempered target at `alpha` is the
/// marginal posterior of `(d, r, lambda)` at noise level `theta_star / sqrt(alpha)`.
#[derive(Debug)]
pub struct ClgModel {
    pub grid: Arc<VoxelGrid>,
    pub prior: SourcePrior,
    pub theta_star: f64,
    pub kernels: SourceKernels,
    /// Noise covariance (known up to `theta^2`).
    pub sigma: DMatrix<f64>,
    /// Window observations, `n_sensors x n_t`, not whitened.
    pub y: DMatrix<f64>,
    n_t: usize,
    log_det_sigma: f64,
    /// Whitened lead field per voxel, row-major `n_sensors x 3`.
    white_lead: Vec<f64>,
    /// `G_v^T y_t` per voxel (whitened), row-major `3 x n_t`.
    projections: Vec<f64>,
    /// Sum over the window of `|y_t|^2` (whitened).
    yy: f64,
    evaluations: AtomicU64,
}

impl ClgModel {
    pub fn new(grid: Arc<VoxelGrid>, data: &ClgDataset, config: &ClgModelConfig) -> Result<Self> {
        Self::with_noise_cov(grid, data, config, None)
    }

    pub fn with_noise_cov(
        grid: Arc<VoxelGrid>,
        data: &ClgDataset,
        config: &ClgModelConfig,
        sigma: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let ns = grid.n_sensors();
        if data.observations.len() != ns {
            return Err(SmcError::InvalidArgument(format!(
                "{} observation rows for {} sensors",
                data.observations.len(),
                ns
            )));
        }
        let (w0, w1) = config.window;
        let cols: Vec<usize> = data
            .times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= w0 && t <= w1)
            .map(|(j, _)| j)
            .collect();
        if cols.is_empty() {
            return Err(SmcError::InvalidArgument("empty analysis window".into()));
        }
        let y = DMatrix::from_fn(ns, cols.len(), |s, j| data.observations[s][cols[j]]);
        let sigma = sigma.unwrap_or_else(|| DMatrix::identity(ns, ns));
        if sigma.shape() != (ns, ns) {
            return Err(SmcError::InvalidArgument("noise covariance shape".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| SmcError::NotPositiveDefinite("noise covariance".into()))?;
        let l = chol.l();
        let log_det_sigma = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let y_white = l.solve_lower_triangular(&y).expect("triangular solve");
        let n_t = cols.len();

        let mut white_lead = Vec::with_capacity(grid.n_voxels() * ns * 3);
        let mut projections = Vec::with_capacity(grid.n_voxels() * 3 * n_t);
        for v in 0..grid.n_voxels() {
            let g = l.solve_lower_triangular(&grid.lead_matrix(v)?).expect("triangular solve");
            for s in 0..ns {
                for k in 0..3 {
                    white_lead.push(g[(s, k)]);
                }
            }
            let p = g.transpose() * &y_white;
            for k in 0..3 {
                for j in 0..n_t {
                    projections.push(p[(k, j)]);
                }
            }
        }
        let yy = y_white.norm_squared();

        let neighbors: Vec<Vec<usize>> = (0..grid.n_voxels())
            .map(|v| grid.neighbors(v, config.neighbor_radius))
            .collect();
        let mut prior = SourcePrior::new(grid.n_voxels());
        prior.log_lambda_range = config.log_lambda_range;
        prior.d_max = config.d_max;
        let kernels = SourceKernels::new(grid.n_voxels(), config.d_max, Arc::new(neighbors));
        Ok(Self {
            grid,
            prior,
            theta_star: config.theta_star,
            kernels,
            sigma,
            y,
            n_t,
            log_det_sigma,
            white_lead,
            projections,
            yy,
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_t
    }

    fn lead(&self, v: usize) -> &[f64] {
        let m = self.grid.n_sensors() * 3;
        &self.white_lead[v * m..(v + 1) * m]
    }

    /// Sum over the window of `log N(y(t); 0, lambda G G^T + theta^2 Sigma)`.
    pub fn marginal_loglik(&self, x2: &SourceConfig, theta: f64) -> Result<f64> {
        if !(theta > 0.0) || !(x2.lambda > 0.0) {
            return Err(SmcError::NotPositiveDefinite(format!(
                "theta = {theta}, lambda = {}",
                x2.lambda
            )));
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let ns = self.grid.n_sensors();
        let nt = self.n_t;
        let th2 = theta * theta;
        let base = nt as f64 * (ns as f64 * (LN_2PI + th2.ln()) + self.log_det_sigma) + self.yy / th2;
        let k = 3 * x2.d();
        if k == 0 {
            return Ok(-0.5 * base);
        }
        let c = x2.lambda / th2;
        // A = I + (lambda / theta^2) G^T G
        let mut a = DMatrix::<f64>::identity(k, k);
        for (i, &ri) in x2.locations.iter().enumerate() {
            let gi = self.lead(ri);
            for (j, &rj) in x2.locations.iter().enumerate().skip(i) {
                let gj = self.lead(rj);
                for p in 0..3 {
                    for q in 0..3 {
                        let mut acc = 0.0;
                        for s in 0..ns {
                            acc += gi[3 * s + p] * gj[3 * s + q];
                        }
                        a[(3 * i + p, 3 * j + q)] += c * acc;
                        if i != j {
                            a[(3 * j + q, 3 * i + p)] += c * acc;
                        }
                    }
                }
            }
        }
        let mut b = DMatrix::<f64>::zeros(k, nt);
        for (i, &ri) in x2.locations.iter().enumerate() {
            let p = &self.projections[ri * 3 * nt..(ri + 1) * 3 * nt];
            for q in 0..3 {
                for j in 0..nt {
                    b[(3 * i + q, j)] = p[q * nt + j];
                }
            }
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| SmcError::NotPositiveDefinite("I + (lambda/theta^2) G^T G".into()))?;
        let log_det_a = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let z = chol.l().solve_lower_triangular(&b).expect("triangular solve");
        let quad = z.norm_squared();
        Ok(-0.5 * (base + nt as f64 * log_det_a - c * quad / th2))
    }

    /// Linear-Gaussian block of one time column, on the original (unwhitened) scale.
    pub fn linear_block(&self, x2: &SourceConfig) -> Result<LinearGaussian> {
        let ns = self.grid.n_sensors();
        let k = 3 * x2.d();
        let mut lead = DMatrix::zeros(ns, k);
        for (i, &r) in x2.locations.iter().enumerate() {
            lead.view_mut((0, 3 * i), (ns, 3)).copy_from(&self.grid.lead_matrix(r)?);
        }
        LinearGaussian::new(
            lead,
            DVector::zeros(k),
            DMatrix::identity(k, k) * x2.lambda,
            self.sigma.clone(),
        )
    }

    /// Dense reference evaluation of [`marginal_loglik`](Self::marginal_loglik).
    pub fn marginal_loglik_dense(&self, x2: &SourceConfig, theta: f64) -> Result<f64> {
        let block = self.linear_block(x2)?;
        (0..self.n_t)
            .map(|j| block.marginal_loglik(&self.y.column(j).into_owned(), theta))
            .sum()
    }

    /// Posterior mean and covariance of the dipole moments at window column `j`.
    pub fn conditional_posterior(&self, x2: &SourceConfig, j: usize, theta: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.linear_block(x2)?
            .conditional_posterior(&self.y.column(j).into_owned(), theta)
    }

    pub fn log_prior_source(&self, x2: &SourceConfig) -> f64 {
        prior_logdensity_source(&self.prior, x2)
    }

    pub fn theta(&self, alpha: f64) -> f64 {
        theta_of_alpha(self.theta_star, alpha).unwrap_or(f64::INFINITY)
    }

    /// Log of the tempered marginal target: the marginal posterior at
    /// `theta_star / sqrt(alpha)`, up to the evidence.
    pub fn rb_tempered_logdensity(&self, x2: &SourceConfig, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SmcError::Domain(format!("alpha = {alpha} outside (0, 1]")));
        }
        let lp = self.log_prior_source(x2);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + self.marginal_loglik(x2, self.theta(alpha))?)
    }

    /// Summed `log l_t` over the window for the marginal of the naively tempered joint.
    pub fn defective_sequence_logconstant(&self, x2: &SourceConfig, alpha: f64) -> Result<f64> {
        let block = self.linear_block(x2)?;
        Ok(self.n_t as f64 * block.defective_log_constant(self.theta_star, alpha)?)
    }

    pub fn with_theta_star(&self, theta_star: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            prior: self.prior.clone(),
            theta_star,
            kernels: self.kernels.clone(),
            sigma: self.sigma.clone(),
            y: self.y.clone(),
            n_t: self.n_t,
            log_det_sigma: self.log_det_sigma,
            white_lead: self.white_lead.clone(),
            projections: self.projections.clone(),
            yy: self.yy,
            evaluations: AtomicU64::new(0),
        }
    }

    /// State from coordinates `[lambda, r_1, ..., r_d]`.
    pub fn decode(&self, coords: &[f64]) -> Result<SourceConfig> {
        let (&lambda, rest) = coords
            .split_first()
            .ok_or_else(|| SmcError::InvalidArgument("empty source coordinates".into()))?;
        let locations = rest
            .iter()
            .map(|&r| {
                if r >= 0.0 && r.fract() == 0.0 && (r as usize) < self.grid.n_voxels() {
                    Ok(r as usize)
                } else {
                    Err(SmcError::InvalidArgument(format!("invalid voxel index {r}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SourceConfig { locations, lambda })
    }
}

pub fn encode_source(x2: &SourceConfig) -> Vec<f64> {
    std::iter::once(x2.lambda)
        .chain(x2.locations.iter().map(|&r| r as f64))
        .collect()
}

/// Step size of the `ln lambda` random walk for the current population.
#[derive(Debug, Clone, Copy)]
pub struct LambdaStep(pub f64);

pub fn lambda_step_from_population(states: impl Iterator<Item = f64>, weights: &[f64]) -> f64 {
    let logs: Vec<f64> = states.map(f64::ln).collect();
    let mean: f64 = logs.iter().zip(weights).map(|(x, w)| x * w).sum();
    let var: f64 = logs.iter().zip(weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
    (2.38 * var.sqrt()).clamp(0.05, 1.0)
}

impl TemperedModel for ClgModel {
    type State = SourceConfig;
    type Tuning = LambdaStep;

    fn id(&self) -> String {
        "clg".into()
    }

    fn theta_of_alpha(&self, alpha: f64) -> Option<f64> {
        (alpha > 0.0).then(|| self.theta(alpha))
    }

    fn alpha_of_theta(&self, theta: f64) -> Option<f64> {
        (theta > 0.0).then(|| alpha_of_theta(self.theta_star, theta))
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> SourceConfig {
        self.prior.sample(rng)
    }

    fn log_prior(&self, x2: &SourceConfig) -> f64 {
        self.log_prior_source(x2)
    }

    fn log_likelihood(&self, x2: &SourceConfig, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return 0.0;
        }
        self.marginal_loglik(x2, self.theta(alpha)).unwrap_or(f64::NAN)
    }

    fn tune(&self, particles: &[Particle<SourceConfig>], weights: &[f64]) -> LambdaStep {
        LambdaStep(lambda_step_from_population(
            particles.iter().map(|p| p.state.lambda),
            weights,
        ))
    }

    fn mcmc_sweep(
        &self,
        p: &mut Particle<SourceConfig>,
        alpha: f64,
        tuning: &LambdaStep,
        rng: &mut StreamRng,
    ) -> Result<usize> {
        let target = |x: &SourceConfig| {
            let log_prior = self.log_prior_source(x);
            let log_lik = if log_prior == f64::NEG_INFINITY {
                0.0
            } else {
                self.log_likelihood(x, alpha)
            };
            Evaluated { log_prior, log_lik }
        };
        let mut cur = Evaluated {
            log_prior: self.log_prior_source(&p.state),
            log_lik: p.log_likelihood,
        };
        let accepted = self.kernels.sweep(&mut p.state, &mut cur, tuning.0, &target, rng)?;
        p.log_likelihood = cur.log_lik;
        Ok(accepted)
    }

    fn coords(&self, x2: &SourceConfig) -> Vec<f64> {
        encode_source(x2)
    }

    fn from_coords(&self, coords: &[f64]) -> Result<SourceConfig> {
        self.decode(coords)
    }

    fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::models::nef::log_gaussian_power_constant;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn fixture(seed: u64) -> (Arc<VoxelGrid>, ClgDataset, ClgTruth) {
        let grid = Arc::new(VoxelGrid::new(GridConfig::default()).unwrap());
        let (data, truth) = generate_clg_data(seed, &grid, &ClgDataConfig::default()).unwrap();
        (grid, data, truth)
    }

    fn configs() -> Vec<SourceConfig> {
        vec![
            SourceConfig { locations: vec![], lambda: (-6.0f64).exp() },
            SourceConfig { locations: vec![17], lambda: (-7.5f64).exp() },
            SourceConfig { locations: vec![3, 555, 912], lambda: (-5.2f64).exp() },
            SourceConfig { locations: vec![444, 444], lambda: (-6.5f64).exp() },
        ]
    }

    #[test]
    fn fast_marginal_matches_dense() {
        let (grid, data, _) = fixture(3);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        for x in configs() {
            for theta in [0.03, 0.2, 1.5] {
                let fast = model.marginal_loglik(&x, theta).unwrap();
                let dense = model.marginal_loglik_dense(&x, theta).unwrap();
                assert!((fast - dense).abs() < 1e-8 * dense.abs().max(1.0), "{x:?} {theta}: {fast} vs {dense}");
            }
        }
    }

    #[test]
    fn fast_marginal_matches_dense_with_correlated_noise() {
        let (grid, data, _) = fixture(4);
        let ns = grid.n_sensors();
        let mut rng = stream(9, Purpose::Aux, 0, 0);
        let b: DMatrix<f64> = DMatrix::from_fn(ns, ns, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); z });
        let sigma = DMatrix::identity(ns, ns) + &b * b.transpose() * (0.3 / ns as f64);
        let model = ClgModel::with_noise_cov(grid, &data, &ClgModelConfig::default(), Some(sigma)).unwrap();
        for x in configs() {
            let fast = model.marginal_loglik(&x, 0.1).unwrap();
            let dense = model.marginal_loglik_dense(&x, 0.1).unwrap();
            assert!((fast - dense).abs() < 1e-8 * dense.abs(), "{fast} vs {dense}");
        }
    }

    #[test]
    fn empty_source_set_is_noise_only() {
        let (grid, data, _) = fixture(5);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        let theta: f64 = 0.3;
        let expect: f64 = model
            .y
            .iter()
            .map(|v| -0.5 * (LN_2PI + 2.0 * theta.ln()) - 0.5 * (v / theta).powi(2))
            .sum();
        let got = model.marginal_loglik(&configs()[0], theta).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect.abs());
    }

    #[test]
    fn non_positive_scales_are_errors() {
        let (grid, data, _) = fixture(5);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        assert!(model.marginal_loglik(&configs()[1], 0.0).is_err());
        let bad = SourceConfig { locations: vec![1], lambda: 0.0 };
        assert!(model.marginal_loglik(&bad, 0.1).is_err());
    }

    #[test]
    fn prior_values() {
        let prior = SourcePrior::new(1000);
        let ln_u = -(3.0f64).ln();
        let x0 = SourceConfig { locations: vec![], lambda: (-6.0f64).exp() };
        assert!((prior_logdensity_source(&prior, &x0) - (-1.0 + ln_u)).abs() < 1e-12);
        let out = SourceConfig { locations: vec![], lambda: (-9.0f64).exp() };
        assert_eq!(prior_logdensity_source(&prior, &out), f64::NEG_INFINITY);
        let x1 = SourceConfig { locations: vec![5], lambda: (-6.0f64).exp() };
        let x2 = SourceConfig { locations: vec![5, 6], lambda: (-6.0f64).exp() };
        // the voxel factor integrates out; the Poisson(1) pmf ratio remains
        let ratio = (prior_logdensity_source(&prior, &x2) - prior_logdensity_source(&prior, &x1) + 1000f64.ln()).exp();
        assert!((ratio - 0.5).abs() < 1e-12);
        let big = SourceConfig { locations: vec![0; 11], lambda: (-6.0f64).exp() };
        assert_eq!(prior_logdensity_source(&prior, &big), f64::NEG_INFINITY);
    }

    #[test]
    fn rb_target_is_posterior_at_theta_of_alpha() {
        let (grid, data, _) = fixture(6);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        let x = &configs()[2];
        let at_one = model.rb_tempered_logdensity(x, 1.0).unwrap();
        let exact = model.log_prior_source(x) + model.marginal_loglik_dense(x, model.theta_star).unwrap();
        assert!((at_one - exact).abs() < 1e-12 * exact.abs().max(1.0) + 1e-9);
        for alpha in [0.5, 0.01, 1e-4] {
            let got = model.rb_tempered_logdensity(x, alpha).unwrap();
            let theta = model.theta_star / alpha.sqrt();
            let expect = model.log_prior_source(x) + model.marginal_loglik(x, theta).unwrap();
            assert_eq!(got, expect);
        }
        assert!(model.rb_tempered_logdensity(x, 0.0).is_err());
    }

    #[test]
    fn rb_target_differs_from_naive_marginal_by_log_l() {
        let (grid, data, _) = fixture(7);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        let alpha = 0.5;
        for x in configs().iter().skip(1) {
            let block = model.linear_block(x).unwrap();
            let naive: f64 = (0..model.n_times())
                .map(|j| {
                    block
                        .tempered_joint_marginal(&model.y.column(j).into_owned(), model.theta_star, alpha)
                        .unwrap()
                })
                .sum::<f64>()
                + model.log_prior_source(x);
            let rb = model.rb_tempered_logdensity(x, alpha).unwrap();
            let log_l = model.defective_sequence_logconstant(x, alpha).unwrap();
            assert!((rb - naive + log_l).abs() < 1e-8 * naive.abs());
        }
    }

    #[test]
    fn log_l_is_constant_in_lambda_without_tempering() {
        let (grid, data, _) = fixture(7);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        let a = SourceConfig { locations: vec![10, 20], lambda: 1e-3 };
        let b = SourceConfig { lambda: 1e-2, ..a.clone() };
        let la = model.defective_sequence_logconstant(&a, 1.0).unwrap();
        let lb = model.defective_sequence_logconstant(&b, 1.0).unwrap();
        assert!((la - lb).abs() < 1e-10);
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn log_l_matches_scalar_quadrature() {
        let (g, theta, alpha, y) = (1.3, 0.4, 0.5, 0.7);
        let n1 = |v: f64, m: f64, var: f64| (-0.5 * (v - m).powi(2) / var).exp() / (2.0 * PI * var).sqrt();
        for gamma in [0.2, 2.0] {
            let quad = simpson(
                |x| n1(x, 0.0, gamma) * n1(y, g * x, theta * theta).powf(alpha),
                -30.0,
                30.0,
                40_000,
            );
            let gauss = n1(y, 0.0, g * g * gamma + theta * theta / alpha);
            let block = LinearGaussian::new(
                DMatrix::from_element(1, 1, g),
                DVector::zeros(1),
                DMatrix::from_element(1, 1, gamma),
                DMatrix::identity(1, 1),
            )
            .unwrap();
            let log_l = block.defective_log_constant(theta, alpha).unwrap();
            assert!(((quad / gauss).ln() - log_l).abs() < 1e-8, "gamma {gamma}");
        }
    }

    #[test]
    fn naive_power_of_marginal_depends_on_lambda() {
        // alpha * log N(y; 0, lambda G G^T + theta*^2) against the proper
        // sequence: the gap moves with lambda, so the naive sequence reshapes
        // the lambda posterior.
        let (grid, data, _) = fixture(8);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        let alpha = 0.5;
        let gap = |lambda: f64| {
            let x = SourceConfig { locations: vec![100, 700], lambda };
            alpha * model.marginal_loglik(&x, model.theta_star).unwrap()
                - model.marginal_loglik(&x, model.theta(alpha)).unwrap()
        };
        assert!((gap(1e-3) - gap(1e-2)).abs() > 1e-3);
    }

    #[test]
    fn generated_data_properties() {
        let grid = VoxelGrid::new(GridConfig::default()).unwrap();
        let cfg = ClgDataConfig { zero_noise: true, ..Default::default() };
        for seed in 0..20 {
            let (data, truth) = generate_clg_data(seed, &grid, &cfg).unwrap();
            assert_eq!(data.observations.len(), 59);
            assert!(data.observations.iter().all(|r| r.len() == 100));
            assert_eq!(truth.d, 2);
            assert!(distance(&truth.positions[0], &truth.positions[1]) >= 3.0);
            assert!((cfg.theta_true_range.0..cfg.theta_true_range.1).contains(&truth.theta_true));
            for (&r, &k) in truth.voxels.iter().zip(&truth.axes) {
                let g = grid.lead_matrix(r).unwrap();
                let norms: Vec<f64> = (0..3).map(|a| g.column(a).norm()).collect();
                assert!(norms.iter().all(|&n| n <= norms[k]));
            }
            let j = 49;
            let q = time_course(50.0, &cfg);
            for s in 0..59 {
                let expect: f64 = truth
                    .voxels
                    .iter()
                    .zip(&truth.axes)
                    .map(|(&r, &k)| grid.lead_field(r).unwrap()[3 * s + k] * q)
                    .sum();
                assert!((data.observations[s][j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let grid = VoxelGrid::new(GridConfig::default()).unwrap();
        let a = generate_clg_data(11, &grid, &ClgDataConfig::default()).unwrap();
        let b = generate_clg_data(11, &grid, &ClgDataConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_clg_data(12, &grid, &ClgDataConfig::default()).unwrap();
        assert_ne!(a.1.theta_true, c.1.theta_true);
    }

    #[test]
    fn generation_fails_on_tiny_grid() {
        let config = GridConfig::default();
        let sensors = crate::models::geometry::sensor_cap(59, 12.0, 110.0);
        let grid = VoxelGrid::from_positions(config, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], sensors).unwrap();
        let err = generate_clg_data(1, &grid, &ClgDataConfig::default()).unwrap_err();
        assert!(matches!(err, SmcError::Generation(_)));
    }

    fn flat(x: &SourceConfig) -> Evaluated {
        let _ = x;
        Evaluated { log_prior: 0.0, log_lik: 0.0 }
    }

    #[test]
    fn death_at_zero_is_rejected() {
        let kernels = SourceKernels::new(4, 10, Arc::new(vec![vec![]; 4]));
        let mut x = SourceConfig { locations: vec![], lambda: 1e-3 };
        let mut cur = flat(&x);
        for i in 0..200 {
            let mut rng = stream(1, Purpose::Aux, i, 0);
            let before = x.clone();
            let moved = kernels.birth_death_move(&mut x, &mut cur, &flat, &mut rng).unwrap();
            if !moved {
                assert_eq!(x, before);
            }
            x = SourceConfig { locations: vec![], lambda: 1e-3 };
        }
    }

    #[test]
    fn location_move_on_two_voxels_is_uniform() {
        let kernels = SourceKernels::new(2, 10, Arc::new(vec![vec![1], vec![0]]));
        let mut x = SourceConfig { locations: vec![0], lambda: 1e-3 };
        let mut cur = flat(&x);
        let mut rng = stream(2, Purpose::Aux, 0, 0);
        let n = 20_000;
        let mut zero = 0usize;
        for _ in 0..n {
            kernels.location_move(&mut x, 0, &mut cur, &flat, &mut rng).unwrap();
            zero += (x.locations[0] == 0) as usize;
        }
        let sd = (n as f64 * 0.25).sqrt();
        assert!((zero as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn birth_death_recovers_poisson_prior() {
        let prior = SourcePrior { n_voxels: 5, ..SourcePrior::new(5) };
        let kernels = SourceKernels::new(5, prior.d_max, Arc::new(vec![vec![]; 5]));
        let target = |x: &SourceConfig| Evaluated { log_prior: prior_logdensity_source(&prior, x), log_lik: 0.0 };
        let chains = 20_000;
        let mut counts = [0usize; 11];
        for c in 0..chains {
            let mut rng = stream(3, Purpose::Aux, c, 0);
            let mut x = SourceConfig { locations: vec![], lambda: (-6.0f64).exp() };
            let mut cur = target(&x);
            for _ in 0..60 {
                kernels.birth_death_move(&mut x, &mut cur, &target, &mut rng).unwrap();
            }
            counts[x.d()] += 1;
        }
        let z: f64 = (0..=10).map(|d| prior.log_poisson(d).exp()).sum();
        let p: Vec<f64> = (0..=10).map(|d| prior.log_poisson(d).exp() / z).collect();
        // pool the tail so that every expected count is at least 5
        let bins = 6;
        let mut obs = vec![0.0; bins];
        let mut exp = vec![0.0; bins];
        for d in 0..=10 {
            let b = d.min(bins - 1);
            obs[b] += counts[d] as f64;
            exp[b] += p[d] * chains as f64;
        }
        let chi2: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
        let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}; counts {counts:?}");
    }

    #[test]
    fn full_sweep_keeps_flat_prior_invariant_in_lambda() {
        let prior = SourcePrior::new(3);
        let kernels = SourceKernels::new(3, prior.d_max, Arc::new(vec![vec![1, 2], vec![0, 2], vec![0, 1]]));
        let target = |x: &SourceConfig| Evaluated { log_prior: prior_logdensity_source(&prior, x), log_lik: 0.0 };
        let chains = 4000;
        let mut mean = 0.0;
        for c in 0..chains {
            let mut rng = stream(4, Purpose::Aux, c, 0);
            let mut x = SourceConfig { locations: vec![0], lambda: (-7.9f64).exp() };
            let mut cur = target(&x);
            for _ in 0..100 {
                kernels.sweep(&mut x, &mut cur, 0.5, &target, &mut rng).unwrap();
            }
            mean += x.lambda.ln() / chains as f64;
        }
        // uniform on [-8, -5]: mean -6.5, sd sqrt(0.75)
        let se = (0.75f64 / chains as f64).sqrt();
        assert!((mean + 6.5).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn sweep_keeps_cached_likelihood_consistent() {
        let (grid, data, _) = fixture(9);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        let mut rng = stream(5, Purpose::Aux, 0, 0);
        let alpha = 0.3;
        for i in 0..20 {
            let state = model.sample_prior(&mut rng);
            let ll = model.log_likelihood(&state, alpha);
            let mut p = Particle { state, log_likelihood: ll };
            let mut r = stream(5, Purpose::Particle, i, 0);
            model.mcmc_sweep(&mut p, alpha, &LambdaStep(0.3), &mut r).unwrap();
            assert_eq!(p.log_likelihood, model.log_likelihood(&p.state, alpha));
        }
    }

    #[test]
    fn coords_round_trip() {
        let (grid, data, _) = fixture(9);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        for x in configs() {
            assert_eq!(model.from_coords(&model.coords(&x)).unwrap(), x);
        }
        assert!(model.decode(&[1e-3, 2.5]).is_err());
        assert!(model.decode(&[]).is_err());
    }

    #[test]
    fn log_l_equals_gaussian_power_constant() {
        let (grid, data, _) = fixture(9);
        let model = ClgModel::new(grid, &data, &ClgModelConfig::default()).unwrap();
        let x = &configs()[1];
        let alpha = 0.5;
        let th2 = model.theta_star.powi(2);
        let per_t = log_gaussian_power_constant(59, 59.0 * th2.ln(), alpha);
        let got = model.defective_sequence_logconstant(x, alpha).unwrap();
        assert!((got - 21.0 * per_t).abs() < 1e-9 * got.abs());
    }
}
