//! Nonparametric ICA driven by the (convex) Cauchy-Schwarz divergence.
//!
//! The mixtures are centered and whitened, then a demixing matrix `W` is
//! found by gradient descent on the sample-form divergence between
//!
//! * `P(t) = p_x(x_t) / |det W|`, the joint density of `y_t = W x_t`, with
//!   `p_x` a multivariate Parzen estimate on the whitened data (computed once),
//! * `Q(t) = prod_m p_m(w_m x_t)`, the product of univariate Parzen
//!   estimates of each output channel.
//!
//! The gradient differentiates through the Parzen sample positions as well as
//! the evaluation point, so it is the exact derivative of the sampled contrast.

use serde::{Deserialize, Serialize};

use crate::density::{kernel_uni, silverman_bandwidth, ParzenMultivariate, TRUNCATION_RADIUS};
use crate::divergence::{ConvexityParam, CsSums, Objective};
use crate::error::{Error, Result};
use crate::linalg::{SampleMatrix, SquareMatrix};

/// Demixers with `|det W|` below this are rejected.
pub const SINGULAR_DET: f64 = 1e-12;
/// Covariance eigenvalues below `RANK_TOL * lambda_max` count as rank loss.
pub const RANK_TOL: f64 = 1e-12;
/// A step that raises the divergence by more than this fraction is retried
/// with half the step size.
pub const BACKTRACK_INCREASE: f64 = 0.1;
pub const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    #[default]
    Ccs,
    Cs,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ccs" => Ok(ObjectiveKind::Ccs),
            "cs" => Ok(ObjectiveKind::Cs),
            other => Err(Error::InvalidInput(format!(
                "unknown objective '{other}' (expected ccs or cs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    pub alpha: f64,
    pub objective: ObjectiveKind,
    /// Gradient step size.
    pub gamma: f64,
    pub max_iter: usize,
    /// Stop once `|D_k - D_{k-1}| <= epsilon`.
    pub epsilon: f64,
    /// Parzen bandwidth; `None` uses `1.06 T^{-1/5}`.
    pub bandwidth: Option<f64>,
    pub seed: u64,
    /// Halve the step when the divergence jumps by more than 10%.
    pub backtrack: bool,
    /// Skip kernel terms beyond `TRUNCATION_RADIUS` bandwidths.
    pub truncate_kernel: bool,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            alpha: -0.99999,
            objective: ObjectiveKind::Ccs,
            gamma: 0.3,
            max_iter: 250,
            epsilon: 1e-4,
            bandwidth: None,
            seed: 0,
            backtrack: true,
            truncate_kernel: false,
        }
    }
}

impl IcaConfig {
    pub fn objective(&self) -> Result<Objective> {
        match self.objective {
            ObjectiveKind::Ccs => Ok(Objective::Ccs {
                alpha: ConvexityParam::new(self.alpha)?,
            }),
            ObjectiveKind::Cs => Ok(Objective::Cs),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }

    pub fn bandwidth_for(&self, samples: usize) -> f64 {
        self.bandwidth.unwrap_or_else(|| silverman_bandwidth(samples))
    }
}

/// `x_w = V (x - mean)` with `V = Lambda^{-1/2} E^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningTransform {
    pub mean: Vec<f64>,
    pub matrix: SquareMatrix,
}

impl WhiteningTransform {
    pub fn apply(&self, x: &SampleMatrix) -> Result<SampleMatrix> {
        if x.channels() != self.mean.len() {
            return Err(Error::shape(
                format!("{} channels", self.mean.len()),
                format!("{}", x.channels()),
            ));
        }
        let mut centered = x.clone();
        for (m, mu) in self.mean.iter().enumerate() {
            centered.row_mut(m).iter_mut().for_each(|v| *v -= mu);
        }
        centered.left_mul(&self.matrix)
    }
}

pub fn center_whiten(x: &SampleMatrix) -> Result<(SampleMatrix, WhiteningTransform)> {
    let (m, t) = (x.channels(), x.samples());
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "whitening needs at least 2 channels, got {m}"
        )));
    }
    if t <= m {
        return Err(Error::InvalidInput(format!(
            "whitening needs more samples than channels ({t} <= {m})"
        )));
    }
    let cov = x.covariance();
    let eig = cov.sym_eig()?;
    let lmax = eig.values[0];
    for (i, &l) in eig.values.iter().enumerate() {
        if !(l > RANK_TOL * lmax) {
            return Err(Error::RankDeficient {
                dimension: i,
                eigenvalue: l,
            });
        }
    }
    let mut v = eig.vectors.transpose();
    for (i, &l) in eig.values.iter().enumerate() {
        let s = 1.0 / l.sqrt();
        for j in 0..m {
            v[(i, j)] *= s;
        }
    }
    let transform = WhiteningTransform {
        mean: x.channel_means(),
        matrix: v,
    };
    let white = transform.apply(x)?;
    Ok((white, transform))
}

/// `Y = W X`.
pub fn demix(x_w: &SampleMatrix, w: &SquareMatrix) -> Result<SampleMatrix> {
    x_w.left_mul(w)
}

/// Cauchy-Schwarz sums and their derivatives with respect to every `w_ml`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTerms {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v1p: SquareMatrix,
    pub v2p: SquareMatrix,
    pub v3p: SquareMatrix,
}

impl GradientTerms {
    pub fn divergence(&self) -> f64 {
        CsSums {
            v1: self.v1,
            v2: self.v2,
            v3: self.v3,
        }
        .divergence()
    }

    /// `V1'/V1 + V2'/V2 - 2 V3'/V3`.
    pub fn gradient(&self) -> SquareMatrix {
        let n = self.v1p.dim();
        let mut g = SquareMatrix::zeros(n);
        for m in 0..n {
            for l in 0..n {
                g[(m, l)] = self.v1p[(m, l)] / self.v1 + self.v2p[(m, l)] / self.v2 - 2.0 * self.v3p[(m, l)] / self.v3;
            }
        }
        g
    }
}

/// Univariate Parzen densities of one output channel at its own samples,
/// optionally with `d q(t) / d w_m` (one `M`-vector per sample).
struct ChannelDensity {
    q: Vec<f64>,
    dq: Option<Vec<f64>>,
}

/// Sampled contrast for a fixed whitened data set.
///
/// The joint Parzen density is evaluated once at construction; each call
/// then costs `O(M T^2)` kernel evaluations.
#[derive(Debug, Clone)]
pub struct ContrastModel {
    channels: usize,
    samples: usize,
    /// time-major copy of the data
    points: Vec<f64>,
    bandwidth: f64,
    objective: Objective,
    truncate: bool,
    joint_at_samples: Vec<f64>,
}

impl ContrastModel {
    pub fn new(x_w: &SampleMatrix, cfg: &IcaConfig) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.bandwidth_for(x_w.samples());
        let joint = ParzenMultivariate::new(x_w, h)?.with_truncation(cfg.truncate_kernel);
        Ok(Self {
            channels: x_w.channels(),
            samples: x_w.samples(),
            points: x_w.to_time_major(),
            bandwidth: h,
            objective: cfg.objective()?,
            truncate: cfg.truncate_kernel,
            joint_at_samples: joint.pdf_at_samples(),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn check(&self, w: &SquareMatrix) -> Result<f64> {
        if w.dim() != self.channels {
            return Err(Error::shape(
                format!("{0}x{0} demixer", self.channels),
                format!("{0}x{0}", w.dim()),
            ));
        }
        let det = w.determinant();
        if !(det.abs() >= SINGULAR_DET) {
            return Err(Error::SingularDemixer { det });
        }
        Ok(det)
    }

    fn channel_density(&self, w_row: &[f64], with_deriv: bool) -> ChannelDensity {
        let (n, m) = (self.samples, self.channels);
        let h = self.bandwidth;
        let y: Vec<f64> = self
            .points
            .chunks_exact(m)
            .map(|x| x.iter().zip(w_row).map(|(a, b)| a * b).sum())
            .collect();
        let self_term = kernel_uni(0.0);
        let mut q = vec![self_term; n];
        let mut dq = with_deriv.then(|| vec![0.0; n * m]);
        for t in 0..n {
            for i in t + 1..n {
                let u = (y[t] - y[i]) / h;
                if self.truncate && u.abs() > TRUNCATION_RADIUS {
                    continue;
                }
                let k = kernel_uni(u);
                q[t] += k;
                q[i] += k;
                if let Some(dq) = dq.as_mut() {
                    // phi'(u_ti)(x_t - x_i) is symmetric in (t, i)
                    let c = -u * k;
                    let xt = &self.points[t * m..(t + 1) * m];
                    let xi = &self.points[i * m..(i + 1) * m];
                    for l in 0..m {
                        let d = c * (xt[l] - xi[l]);
                        dq[t * m + l] += d;
                        dq[i * m + l] += d;
                    }
                }
            }
        }
        let norm = 1.0 / (n as f64 * h);
        q.iter_mut().for_each(|v| *v *= norm);
        if let Some(dq) = dq.as_mut() {
            let dnorm = norm / h;
            dq.iter_mut().for_each(|v| *v *= dnorm);
        }
        ChannelDensity { q, dq }
    }

    /// `(P, Q)` density vectors at every sample for demixer `w`.
    pub fn densities(&self, w: &SquareMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let det = self.check(w)?;
        let pj = self.joint_at_samples.iter().map(|p| p / det.abs()).collect();
        let mut qm = vec![1.0; self.samples];
        for m in 0..self.channels {
            let c = self.channel_density(w.row(m), false);
            qm.iter_mut().zip(&c.q).for_each(|(a, b)| *a *= b);
        }
        Ok((pj, qm))
    }

    pub fn value(&self, w: &SquareMatrix) -> Result<f64> {
        if self.samples == 1 {
            self.check(w)?;
            return Ok(0.0);
        }
        let (pj, qm) = self.densities(w)?;
        let fp: Vec<f64> = pj.iter().map(|&p| self.objective.transform(p)).collect();
        let fq: Vec<f64> = qm.iter().map(|&q| self.objective.transform(q)).collect();
        Ok(CsSums::from_transformed(&fp, &fq).divergence())
    }

    pub fn terms(&self, w: &SquareMatrix) -> Result<GradientTerms> {
        let det = self.check(w)?;
        let (n, dim) = (self.samples, self.channels);
        let obj = self.objective;
        let channels: Vec<ChannelDensity> = (0..dim).map(|m| self.channel_density(w.row(m), true)).collect();

        let pj: Vec<f64> = self.joint_at_samples.iter().map(|p| p / det.abs()).collect();
        let qm: Vec<f64> = (0..n).map(|t| channels.iter().map(|c| c.q[t]).product()).collect();

        let mut sums = CsSums {
            v1: 0.0,
            v2: 0.0,
            v3: 0.0,
        };
        // P-side: dP/dw_ml = -P * cof_ml / det, so the t-sum factors out
        let mut a1 = 0.0;
        let mut a3 = 0.0;
        let mut v2p = SquareMatrix::zeros(dim);
        let mut v3p = SquareMatrix::zeros(dim);
        for t in 0..n {
            let (p, q) = (pj[t], qm[t]);
            let (fp, fq) = (obj.transform(p), obj.transform(q));
            let (dfp, dfq) = (obj.transform_deriv(p), obj.transform_deriv(q));
            sums.v1 += fp * fp;
            sums.v2 += fq * fq;
            sums.v3 += fp * fq;
            a1 += 2.0 * fp * dfp * p;
            a3 += dfp * fq * p;
            let c2 = 2.0 * fq * dfq;
            let c3 = fp * dfq;
            for m in 0..dim {
                let others: f64 = channels
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != m)
                    .map(|(_, c)| c.q[t])
                    .product();
                let dq = channels[m].dq.as_ref().expect("derivatives requested");
                for l in 0..dim {
                    let qp = others * dq[t * dim + l];
                    v2p[(m, l)] += c2 * qp;
                    v3p[(m, l)] += c3 * qp;
                }
            }
        }
        let cof = w.cofactor_matrix();
        let mut v1p = SquareMatrix::zeros(dim);
        for m in 0..dim {
            for l in 0..dim {
                let s = -cof[(m, l)] / det;
                v1p[(m, l)] = s * a1;
                v3p[(m, l)] += s * a3;
            }
        }
        Ok(GradientTerms {
            v1: sums.v1,
            v2: sums.v2,
            v3: sums.v3,
            v1p,
            v2p,
            v3p,
        })
    }

    pub fn gradient(&self, w: &SquareMatrix) -> Result<SquareMatrix> {
        Ok(self.terms(w)?.gradient())
    }
}

/// Contrast of `W` on whitened data. Builds the joint density cache on
/// every call; use [`ContrastModel`] for repeated evaluation.
pub fn contrast(x_w: &SampleMatrix, w: &SquareMatrix, cfg: &IcaConfig) -> Result<f64> {
    ContrastModel::new(x_w, cfg)?.value(w)
}

pub fn gradient(x_w: &SampleMatrix, w: &SquareMatrix, cfg: &IcaConfig) -> Result<SquareMatrix> {
    ContrastModel::new(x_w, cfg)?.gradient(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaState {
    pub w: SquareMatrix,
    /// Gradient steps taken.
    pub iteration: usize,
    /// Divergence before the first step followed by one entry per step.
    pub divergence_trace: Vec<f64>,
    pub converged: bool,
    /// Total number of step halvings made by backtracking.
    pub step_halvings: usize,
}

impl IcaState {
    pub fn final_divergence(&self) -> f64 {
        *self.divergence_trace.last().expect("trace holds the initial value")
    }
}

#[derive(Debug, Clone)]
pub struct IcaRun {
    pub state: IcaState,
    pub whitening: WhiteningTransform,
    pub bandwidth: f64,
    /// `W V (x - mean)`.
    pub demixed: SampleMatrix,
}

impl IcaRun {
    /// Full unmixing `W V` mapping centered mixtures to outputs.
    pub fn unmixing(&self) -> SquareMatrix {
        self.state
            .w
            .matmul(&self.whitening.matrix)
            .expect("dimensions agree by construction")
    }
}

/// Whiten `x` and minimize the contrast from `W = I`.
pub fn run(x: &SampleMatrix, cfg: &IcaConfig) -> Result<IcaRun> {
    cfg.validate()?;
    let (x_w, whitening) = center_whiten(x)?;
    let model = ContrastModel::new(&x_w, cfg)?;
    let state = descend(&model, SquareMatrix::identity(x.channels()), cfg)?;
    let demixed = demix(&x_w, &state.w)?;
    Ok(IcaRun {
        state,
        whitening,
        bandwidth: model.bandwidth(),
        demixed,
    })
}

/// Gradient descent with row renormalization from a given start.
pub fn descend(model: &ContrastModel, w0: SquareMatrix, cfg: &IcaConfig) -> Result<IcaState> {
    let mut w = w0;
    let mut current = model.value(&w)?;
    if !current.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut state = IcaState {
        w: w.clone(),
        iteration: 0,
        divergence_trace: vec![current],
        converged: false,
        step_halvings: 0,
    };
    for iteration in 1..=cfg.max_iter {
        let grad = model.gradient(&w)?;
        if !grad.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        let (next_w, next) = take_step(model, &w, &grad, current, cfg, iteration, &mut state.step_halvings)?;
        let change = (next - current).abs();
        w = next_w;
        current = next;
        state.iteration = iteration;
        state.divergence_trace.push(current);
        if change <= cfg.epsilon {
            state.converged = true;
            break;
        }
    }
    state.w = w;
    Ok(state)
}

fn take_step(
    model: &ContrastModel,
    w: &SquareMatrix,
    grad: &SquareMatrix,
    current: f64,
    cfg: &IcaConfig,
    iteration: usize,
    halvings: &mut usize,
) -> Result<(SquareMatrix, f64)> {
    let mut step = cfg.gamma;
    let mut fallback = None;
    for attempt in 0..=MAX_HALVINGS {
        let candidate = w
            .sub_scaled(grad, step)
            .normalize_rows()
            .and_then(|c| model.value(&c).map(|v| (c, v)));
        if !cfg.backtrack {
            let (c, v) = candidate?;
            if !v.is_finite() {
                return Err(Error::NonFinite { iteration });
            }
            return Ok((c, v));
        }
        if let Ok((c, v)) = candidate {
            if v.is_finite() {
                if v <= current + BACKTRACK_INCREASE * current.abs() {
                    return Ok((c, v));
                }
                fallback = Some((c, v));
            }
        }
        if attempt < MAX_HALVINGS {
            step *= 0.5;
            *halvings += 1;
        }
    }
    // out of halvings: keep the smallest finite step
    fallback.ok_or(Error::NonFinite { iteration })
}
