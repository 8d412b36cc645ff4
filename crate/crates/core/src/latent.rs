//! Four Gaussian latent factors (valence, arousal, dominance, content),
//! reparameterized sampling, KL terms and the batch-normalized final latent.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{BatchNorm, BatchStats, Linear, Mode, RunningStats};
use crate::params::{Group, Init, ParamStore};
use crate::tensor::Matrix;

/// Log-variance is clamped to this range before exponentiation.
pub const LOG_VAR_RANGE: (f64, f64) = (-30.0, 20.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Valence,
    Arousal,
    Dominance,
    Content,
}

impl Factor {
    /// Concatenation order of `Z`.
    pub const ALL: [Factor; 4] = [Factor::Valence, Factor::Arousal, Factor::Dominance, Factor::Content];
    /// The three factors with lexicon supervision.
    pub const VAD: [Factor; 3] = [Factor::Valence, Factor::Arousal, Factor::Dominance];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short(self) -> &'static str {
        match self {
            Factor::Valence => "V",
            Factor::Arousal => "A",
            Factor::Dominance => "D",
            Factor::Content => "T",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorWidths {
    pub valence: usize,
    pub arousal: usize,
    pub dominance: usize,
    pub content: usize,
}

impl Default for FactorWidths {
    fn default() -> Self {
        Self { valence: 16, arousal: 16, dominance: 16, content: 64 }
    }
}

impl FactorWidths {
    pub fn get(&self, f: Factor) -> usize {
        match f {
            Factor::Valence => self.valence,
            Factor::Arousal => self.arousal,
            Factor::Dominance => self.dominance,
            Factor::Content => self.content,
        }
    }

    pub fn total(&self) -> usize {
        self.valence + self.arousal + self.dominance + self.content
    }

    /// Column offset of a factor inside `Z`.
    pub fn offset(&self, f: Factor) -> usize {
        Factor::ALL[..f.index()].iter().map(|&g| self.get(g)).sum()
    }
}

/// Gaussian parameters of one factor for a batch (`n × d` each).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    pub factor: Factor,
    pub mu: Matrix,
    pub log_var: Matrix,
}

impl FactorParams {
    pub fn sigma(&self) -> Matrix {
        self.log_var.map(|lv| libm::exp(0.5 * lv.clamp(LOG_VAR_RANGE.0, LOG_VAR_RANGE.1)))
    }
}

/// `z = μ + σ ⊙ ε`, elementwise.
pub fn reparameterize(params: &FactorParams, epsilon: &Matrix) -> Result<Matrix> {
    if epsilon.shape() != params.mu.shape() {
        return Err(Error::DimensionMismatch { what: "noise", expected: params.mu.len(), actual: epsilon.len() });
    }
    let sigma = params.sigma();
    let mut z = params.mu.clone();
    for ((zi, s), e) in z.data_mut().iter_mut().zip(sigma.data()).zip(epsilon.data()) {
        *zi += s * e;
    }
    Ok(z)
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))` summed over dimensions, averaged over rows.
pub fn gaussian_kl(params: &FactorParams) -> Result<f64> {
    let rows = params.mu.rows().max(1) as f64;
    let mut total = 0.0;
    for (mu, lv) in params.mu.data().iter().zip(params.log_var.data()) {
        let lv = lv.clamp(LOG_VAR_RANGE.0, LOG_VAR_RANGE.1);
        total += 0.5 * (mu * mu + libm::exp(lv) - 1.0 - lv);
    }
    let kl = total / rows;
    if !kl.is_finite() {
        return Err(Error::NonFinite { term: "kl" });
    }
    Ok(kl)
}

/// Graph form of [`gaussian_kl`].
pub fn gaussian_kl_graph(g: &mut Graph, mu: Var, log_var: Var) -> Var {
    let rows = g.value(mu).rows().max(1) as f64;
    let lv = g.clamp(log_var, LOG_VAR_RANGE.0, LOG_VAR_RANGE.1);
    let mu2 = g.square(mu);
    let var = g.exp(lv);
    let a = g.add(mu2, var);
    let b = g.sub(a, lv);
    let c = g.add_scalar(b, -1.0);
    let s = g.sum(c);
    g.scale(s, 0.5 / rows)
}

/// Graph form of [`reparameterize`] with a constant noise matrix.
pub fn reparameterize_graph(g: &mut Graph, mu: Var, log_var: Var, epsilon: &Matrix) -> Var {
    let lv = g.clamp(log_var, LOG_VAR_RANGE.0, LOG_VAR_RANGE.1);
    let half = g.scale(lv, 0.5);
    let sigma = g.exp(half);
    let eps = g.constant(epsilon.clone());
    let noise = g.mul(sigma, eps);
    g.add(mu, noise)
}

/// One factor's estimator: a tanh hidden layer feeding separate mean and
/// log-variance heads. No weights are shared between factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub factor: Factor,
    pub hidden: Linear,
    pub mu: Linear,
    pub log_var: Linear,
}

impl Estimator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        factor: Factor,
        input: usize,
        width: usize,
        init: Init,
    ) -> Self {
        let name = format!("estimator.{}", factor.short());
        let g = Group::Estimator;
        Self {
            factor,
            hidden: Linear::new(store, rng, &format!("{name}.hidden"), g, input, input, init),
            mu: Linear::new(store, rng, &format!("{name}.mu"), g, input, width, init),
            log_var: Linear::new(store, rng, &format!("{name}.log_var"), g, input, width, init),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> (Var, Var) {
        let h = self.hidden.forward(g, store, x);
        let h = g.tanh(h);
        (self.mu.forward(g, store, h), self.log_var.forward(g, store, h))
    }
}

/// Where reparameterization noise comes from.
pub enum Noise<'a> {
    /// Fresh standard-normal draws, recorded for replay.
    Sample(&'a mut dyn rand::RngCore),
    /// A previously recorded draw.
    Replay(&'a NoiseRecord),
    /// `z = μ` (evaluation).
    Off,
}

/// Per-factor noise matrices of one forward pass, in [`Factor::ALL`] order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub epsilon: Vec<Matrix>,
}

/// Graph handles of one factor after estimation and sampling.
#[derive(Clone, Copy, Debug)]
pub struct FactorVars {
    pub mu: Var,
    pub log_var: Var,
    pub z: Var,
}

/// Graph handles of all factors plus the concatenated `Z`.
#[derive(Clone, Debug)]
pub struct LatentVars {
    pub factors: [FactorVars; 4],
    pub z: Var,
    pub noise: NoiseRecord,
}

impl LatentVars {
    pub fn factor(&self, f: Factor) -> &FactorVars {
        &self.factors[f.index()]
    }

    /// Plain values of everything produced, for inspection and replay.
    pub fn bundle(&self, g: &Graph) -> LatentBundle {
        LatentBundle {
            params: Factor::ALL.map(|f| FactorParams {
                factor: f,
                mu: g.value(self.factor(f).mu).clone(),
                log_var: g.value(self.factor(f).log_var).clone(),
            }),
            samples: Factor::ALL.map(|f| g.value(self.factor(f).z).clone()),
            z: g.value(self.z).clone(),
            noise: self.noise.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentBundle {
    pub params: [FactorParams; 4],
    pub samples: [Matrix; 4],
    pub z: Matrix,
    pub noise: NoiseRecord,
}

/// The four estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentLayer {
    pub estimators: [Estimator; 4],
    pub widths: FactorWidths,
    pub input: usize,
}

impl LatentLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        input: usize,
        widths: FactorWidths,
        init: Init,
    ) -> Self {
        let estimators = Factor::ALL.map(|f| Estimator::new(store, rng, f, input, widths.get(f), init));
        Self { estimators, widths, input }
    }

    /// Estimates `(μ, log σ²)` per factor from `n × D_h` text representations.
    pub fn estimate(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<[(Var, Var); 4]> {
        let width = g.value(x).cols();
        if width != self.input {
            return Err(Error::DimensionMismatch { what: "estimator input", expected: self.input, actual: width });
        }
        Ok(self.estimators.each_ref().map(|e| e.forward(g, store, x)))
    }

    /// Estimates, samples and concatenates `Z = [Z_V; Z_A; Z_D; Z_T]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, noise: Noise<'_>) -> Result<LatentVars> {
        let params = self.estimate(g, store, x)?;
        let rows = g.value(x).rows();
        let mut record = NoiseRecord::default();
        let mut noise = noise;
        let mut factors = Vec::with_capacity(4);
        for (f, (mu, log_var)) in Factor::ALL.into_iter().zip(params) {
            let width = self.widths.get(f);
            let z = match &mut noise {
                Noise::Off => mu,
                Noise::Sample(rng) => {
                    let data = (0..rows * width).map(|_| StandardNormal.sample(&mut **rng)).collect();
                    let eps = Matrix::from_vec(rows, width, data);
                    let z = reparameterize_graph(g, mu, log_var, &eps);
                    record.epsilon.push(eps);
                    z
                }
                Noise::Replay(rec) => {
                    let eps = rec
                        .epsilon
                        .get(f.index())
                        .ok_or_else(|| Error::Data(format!("noise record lacks factor {}", f.short())))?;
                    if eps.shape() != (rows, width) {
                        return Err(Error::DimensionMismatch {
                            what: "replayed noise",
                            expected: rows * width,
                            actual: eps.len(),
                        });
                    }
                    record.epsilon.push(eps.clone());
                    reparameterize_graph(g, mu, log_var, eps)
                }
            };
            factors.push(FactorVars { mu, log_var, z });
        }
        let zs: Vec<Var> = factors.iter().map(|f| f.z).collect();
        let z = g.concat_cols(&zs);
        let factors = [factors[0], factors[1], factors[2], factors[3]];
        Ok(LatentVars { factors, z, noise: record })
    }
}

/// `Ẑ = BatchNorm(Z · W_f + b_f)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalLatent {
    pub projection: Linear,
    pub norm: BatchNorm,
}

impl FinalLatent {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, z_dim: usize, out_dim: usize) -> Self {
        Self {
            projection: Linear::new(store, rng, "final.projection", Group::Projection, z_dim, out_dim, Init::Xavier),
            norm: BatchNorm::new(store, rng, "final.norm", Group::Projection, out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.norm.dim
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        z: Var,
        mode: Mode,
        running: &RunningStats,
    ) -> Result<(Var, Option<BatchStats>)> {
        let width = g.value(z).cols();
        if width != self.projection.in_dim {
            return Err(Error::DimensionMismatch {
                what: "final latent input",
                expected: self.projection.in_dim,
                actual: width,
            });
        }
        let h = self.projection.forward(g, store, z);
        self.norm.forward(g, store, h, mode, running)
    }
}
