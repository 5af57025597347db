//! Multi-arm Gaussian design: arm estimates `X_i` share a control-group
//! noise term, so the sampling covariance is
//! `S0(J) = (diag(σ_J²) + σ0² 𝟙𝟙') / n` and the prior predictive
//! covariance is `S(J) = Σ_J + S0(J)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::discretize::{factor_psd, McSettings};
use crate::error::{Error, Result};
use crate::mc::{chunked, derive_seed};
use crate::subset::SubsetMask;

pub const MAX_ARMS: usize = 8;
pub const MIN_CALIBRATION_REPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDesign {
    /// Prior mean of the treatment effects.
    pub mu: Vec<f64>,
    /// Prior covariance `Σ` of the treatment effects.
    pub prior_cov: Vec<Vec<f64>>,
    /// Outcome SD in each treatment arm.
    pub arm_sd: Vec<f64>,
    pub control_sd: f64,
    /// Observations per arm.
    pub n_sample: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    /// Exact log marginal-likelihood ratio of prior predictive to null.
    Loglr,
    /// `X_J' S0(J)⁻¹ X_J`.
    Wald,
}

/// Which distribution of the full estimate vector to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    /// `θ = 0`: `N(0, S0)`.
    Null,
    /// Prior predictive: `N(μ, S)`.
    Prior,
}

impl GaussianDesign {
    pub fn arms(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.arms();
        if k == 0 || k > MAX_ARMS {
            return Err(Error::Model(format!("designs have 1..={MAX_ARMS} arms, got {k}")));
        }
        if self.arm_sd.len() != k || self.prior_cov.len() != k {
            return Err(Error::Model("mu, prior_cov and arm_sd must have one entry per arm".into()));
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("prior mean must be finite".into()));
        }
        if self.arm_sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Model("arm SDs must be positive".into()));
        }
        if !(self.control_sd >= 0.0 && self.control_sd.is_finite()) {
            return Err(Error::Model("control SD must be nonnegative".into()));
        }
        if !(self.n_sample > 0.0 && self.n_sample.is_finite()) {
            return Err(Error::Model("n_sample must be positive".into()));
        }
        factor_psd(&self.prior_cov)?;
        Ok(())
    }

    /// Sampling covariance of `X_J`.
    pub fn s0(&self, mask: SubsetMask) -> DMatrix<f64> {
        let idx: Vec<usize> = mask.indices().collect();
        let c = self.control_sd * self.control_sd;
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            let own = if a == b { self.arm_sd[idx[a]].powi(2) } else { 0.0 };
            (own + c) / self.n_sample
        })
    }

    /// Prior predictive covariance of `X_J`.
    pub fn s(&self, mask: SubsetMask) -> DMatrix<f64> {
        let idx: Vec<usize> = mask.indices().collect();
        let s0 = self.s0(mask);
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.prior_cov[idx[a]][idx[b]] + s0[(a, b)])
    }

    pub fn mu_of(&self, mask: SubsetMask) -> Vec<f64> {
        mask.indices().map(|i| self.mu[i]).collect()
    }

    fn full(&self) -> SubsetMask {
        SubsetMask::full(self.arms())
    }

    fn check_mask(&self, mask: SubsetMask) -> Result<()> {
        if mask.is_empty() || !mask.is_subset_of(self.full()) {
            return Err(Error::Usage(format!("{mask} is not a nonempty subset of the {} arms", self.arms())));
        }
        Ok(())
    }
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky().ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Quadratic forms and constants of one subset, precomputed for fast
/// per-draw evaluation.
#[derive(Debug, Clone)]
pub struct SubsetStatistics {
    pub mask: SubsetMask,
    dim: usize,
    /// Row-major inverses.
    s0_inv: Vec<f64>,
    s_inv: Vec<f64>,
    mu: Vec<f64>,
    /// `½ log(det S0 / det S)`.
    half_log_det_ratio: f64,
}

fn quad(inv: &[f64], dim: usize, x: &[f64]) -> f64 {
    let mut q = 0.0;
    for a in 0..dim {
        let row = &inv[a * dim..(a + 1) * dim];
        q += x[a] * row.iter().zip(x).map(|(m, v)| m * v).sum::<f64>();
    }
    q
}

fn row_major_inverse(c: &Cholesky<f64, Dyn>) -> Vec<f64> {
    let inv = c.inverse();
    let d = inv.nrows();
    (0..d * d).map(|k| inv[(k / d, k % d)]).collect()
}

impl SubsetStatistics {
    pub fn new(design: &GaussianDesign, mask: SubsetMask) -> Result<Self> {
        design.check_mask(mask)?;
        let c0 = cholesky(design.s0(mask), "S0")?;
        let cs = cholesky(design.s(mask), "S")?;
        Ok(SubsetStatistics {
            mask,
            dim: mask.len(),
            s0_inv: row_major_inverse(&c0),
            s_inv: row_major_inverse(&cs),
            mu: design.mu_of(mask),
            half_log_det_ratio: 0.5 * (log_det(&c0) - log_det(&cs)),
        })
    }

    /// `x_J` gathered from a full vector into `buf`.
    fn gather<'a>(&self, full: &[f64], buf: &'a mut [f64]) -> &'a [f64] {
        for (b, i) in buf.iter_mut().zip(self.mask.indices()) {
            *b = full[i];
        }
        &buf[..self.dim]
    }

    pub fn wald(&self, x: &[f64]) -> f64 {
        quad(&self.s0_inv, self.dim, x)
    }

    pub fn loglr(&self, x: &[f64]) -> f64 {
        let mut centered = [0.0; MAX_ARMS];
        for ((c, a), m) in centered.iter_mut().zip(x).zip(&self.mu) {
            *c = a - m;
        }
        0.5 * (quad(&self.s0_inv, self.dim, x) - quad(&self.s_inv, self.dim, &centered[..self.dim]))
            + self.half_log_det_ratio
    }

    pub fn eval(&self, statistic: Statistic, x: &[f64]) -> f64 {
        match statistic {
            Statistic::Wald => self.wald(x),
            Statistic::Loglr => self.loglr(x),
        }
    }

    /// Statistic of the restriction of a full-arm vector.
    pub fn eval_full(&self, statistic: Statistic, full: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_ARMS];
        let x = self.gather(full, &mut buf);
        self.eval(statistic, x)
    }
}

fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: DMatrix<f64>) -> Result<f64> {
    let c = cholesky(cov, "covariance")?;
    let d = x - mean;
    let sol = c.solve(&d);
    let k = x.len() as f64;
    Ok(-0.5 * (d.dot(&sol) + log_det(&c) + k * (2.0 * std::f64::consts::PI).ln()))
}

/// `log N(x; μ_J, S(J)) − log N(x; 0, S0(J))`, each density evaluated in
/// full.
pub fn loglr_statistic(design: &GaussianDesign, mask: SubsetMask, x: &[f64]) -> Result<f64> {
    design.check_mask(mask)?;
    if x.len() != mask.len() {
        return Err(Error::Usage(format!("{} values for subset {mask}", x.len())));
    }
    let xv = DVector::from_column_slice(x);
    let alt = gaussian_log_density(&xv, &DVector::from_vec(design.mu_of(mask)), design.s(mask))?;
    let null = gaussian_log_density(&xv, &DVector::zeros(x.len()), design.s0(mask))?;
    Ok(alt - null)
}

pub fn wald_statistic(design: &GaussianDesign, mask: SubsetMask, x: &[f64]) -> Result<f64> {
    if x.len() != mask.len() {
        return Err(Error::Usage(format!("{} values for subset {mask}", x.len())));
    }
    Ok(SubsetStatistics::new(design, mask)?.wald(x))
}

/// Factors used to sample full-arm vectors.
#[derive(Debug, Clone)]
pub struct Sampler {
    k: usize,
    mean: Vec<f64>,
    /// Row-major lower factor.
    factor: Vec<f64>,
}

impl Sampler {
    pub fn new(design: &GaussianDesign, population: Population) -> Result<Self> {
        let full = design.full();
        let (mean, cov) = match population {
            Population::Null => (vec![0.0; design.arms()], design.s0(full)),
            Population::Prior => (design.mu.clone(), design.s(full)),
        };
        let k = design.arms();
        let rows: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect();
        let f = factor_psd(&rows)?.factor;
        Ok(Sampler { k, mean, factor: (0..k * k).map(|p| f[(p / k, p % k)]).collect() })
    }

    pub fn arms(&self) -> usize {
        self.k
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let mut z = [0.0; MAX_ARMS];
        for v in z.iter_mut().take(self.k) {
            *v = StandardNormal.sample(rng);
        }
        for (i, o) in out.iter_mut().enumerate().take(self.k) {
            let row = &self.factor[i * self.k..(i + 1) * self.k];
            *o = self.mean[i] + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `draws` full vectors, row-major, reproducible for `seed`.
    pub fn sample(&self, draws: usize, seed: u64) -> Vec<f64> {
        let k = self.k;
        chunked(draws, seed, |rng, len| {
            let mut out = vec![0.0; len * k];
            for row in out.chunks_exact_mut(k) {
                self.draw(rng, row);
            }
            out
        })
        .concat()
    }
}

/// Index of the order statistic used as the `(1 − α)` quantile.
pub(crate) fn quantile_rank(alpha: f64, reps: usize) -> usize {
    (((1.0 - alpha) * reps as f64).ceil() as usize).clamp(1, reps)
}

/// Empirical `(1 − α)` quantile of the statistic under `N(0, S0(J))`; the
/// test rejects when the statistic exceeds it.
pub fn calibrate_critical(
    design: &GaussianDesign,
    statistic: Statistic,
    mask: SubsetMask,
    alpha: f64,
    mc: McSettings,
) -> Result<f64> {
    design.validate()?;
    if mc.draws < MIN_CALIBRATION_REPS {
        return Err(Error::Usage(format!(
            "calibration needs at least {MIN_CALIBRATION_REPS} draws, got {}",
            mc.draws
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Model(format!("alpha must be in (0, 1], got {alpha}")));
    }
    let stats = SubsetStatistics::new(design, mask)?;
    let sampler = Sampler::new(design, Population::Null)?;
    let k = sampler.arms();
    let draws = sampler.sample(mc.draws, calibration_seed(mc.seed, mask));
    let mut values: Vec<f64> = draws.chunks_exact(k).map(|x| stats.eval_full(statistic, x)).collect();
    let r = quantile_rank(alpha, values.len());
    let (_, v, _) = values.select_nth_unstable_by(r - 1, f64::total_cmp);
    Ok(*v)
}

pub(crate) fn calibration_seed(seed: u64, mask: SubsetMask) -> u64 {
    derive_seed(seed, 0x100 + u64::from(mask.bits()))
}
