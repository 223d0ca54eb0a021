//! Convex Cauchy-Schwarz divergence.
//!
//! The divergence compares two densities `P` (joint) and `Q` (product of
//! marginals) through the Cauchy-Schwarz ratio of `f(P)` and `f(Q)`, where
//! `f` is the alpha-parametrized convex function
//!
//! ```text
//! f(t) = 4/(1-a^2) [ (1-a)/2 + (1+a)/2 t - t^{(1+a)/2} ]
//! ```
//!
//! At `a = +1` and `a = -1` the expression is 0/0; those points use the
//! analytic limits `t ln t - t + 1` and `t - 1 - ln t`. Both limits are
//! nonnegative, so `f >= 0` everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Density arguments are clamped to this floor before `f` is applied.
pub const T_FLOOR: f64 = 1e-300;

/// `|alpha -+ 1|` below this routes to the limit forms.
pub const LIMIT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Generic,
    /// alpha -> +1: `t ln t - t + 1`
    PlusOne,
    /// alpha -> -1: `t - 1 - ln t`
    MinusOne,
}

/// The convexity parameter alpha of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConvexityParam(f64);

impl ConvexityParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidInput(format!("alpha must be finite, got {alpha}")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    fn branch(self) -> Branch {
        if (self.0 - 1.0).abs() < LIMIT_THRESHOLD {
            Branch::PlusOne
        } else if (self.0 + 1.0).abs() < LIMIT_THRESHOLD {
            Branch::MinusOne
        } else {
            Branch::Generic
        }
    }

    /// `true` when alpha is close enough to +-1 to use a limit form.
    pub fn is_limit(self) -> bool {
        self.branch() != Branch::Generic
    }

    /// `f(t)` with `t` clamped to [`T_FLOOR`]. Callers guarantee `t >= 0`.
    #[inline]
    pub fn f(self, t: f64) -> f64 {
        let t = t.max(T_FLOOR);
        let a = self.0;
        match self.branch() {
            Branch::PlusOne => t * t.ln() - t + 1.0,
            Branch::MinusOne => t - 1.0 - t.ln(),
            Branch::Generic => 4.0 / (1.0 - a * a) * ((1.0 - a) / 2.0 + (1.0 + a) / 2.0 * t - t.powf((1.0 + a) / 2.0)),
        }
    }

    /// `f'(t) = 2/(1-a) [1 - t^{(a-1)/2}]`, with `t` clamped to [`T_FLOOR`].
    #[inline]
    pub fn f_deriv(self, t: f64) -> f64 {
        let t = t.max(T_FLOOR);
        let a = self.0;
        match self.branch() {
            Branch::PlusOne => t.ln(),
            Branch::MinusOne => 1.0 - 1.0 / t,
            Branch::Generic => 2.0 / (1.0 - a) * (1.0 - t.powf((a - 1.0) / 2.0)),
        }
    }
}

impl Default for ConvexityParam {
    fn default() -> Self {
        Self(-0.99999)
    }
}

/// Checked form of [`ConvexityParam::f`].
pub fn f_convex(t: f64, alpha: ConvexityParam) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("f(t) needs t >= 0, got {t}")));
    }
    Ok(alpha.f(t))
}

/// Checked form of [`ConvexityParam::f_deriv`].
pub fn f_deriv(t: f64, alpha: ConvexityParam) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("f'(t) needs t > 0, got {t}")));
    }
    Ok(alpha.f_deriv(t))
}

/// Which Cauchy-Schwarz ratio to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Objective {
    /// Convex CS divergence with the given alpha.
    Ccs { alpha: ConvexityParam },
    /// Plain CS divergence (`f` = identity).
    Cs,
}

impl Objective {
    pub fn ccs(alpha: f64) -> Result<Self> {
        Ok(Objective::Ccs {
            alpha: ConvexityParam::new(alpha)?,
        })
    }

    #[inline]
    pub fn transform(self, t: f64) -> f64 {
        match self {
            Objective::Ccs { alpha } => alpha.f(t),
            Objective::Cs => t,
        }
    }

    #[inline]
    pub fn transform_deriv(self, t: f64) -> f64 {
        match self {
            Objective::Ccs { alpha } => alpha.f_deriv(t),
            Objective::Cs => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Ccs { .. } => "ccs",
            Objective::Cs => "cs",
        }
    }
}

/// The three Cauchy-Schwarz sums `V1 = <fP,fP>`, `V2 = <fQ,fQ>`, `V3 = <fP,fQ>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsSums {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl CsSums {
    pub fn from_transformed(fp: &[f64], fq: &[f64]) -> Self {
        let mut s = CsSums {
            v1: 0.0,
            v2: 0.0,
            v3: 0.0,
        };
        for (&a, &b) in fp.iter().zip(fq) {
            s.v1 += a * a;
            s.v2 += b * b;
            s.v3 += a * b;
        }
        s
    }

    /// `log V1 + log V2 - 2 log V3`, clamped at 0 against rounding.
    ///
    /// All-zero sums (both vectors vanish) give 0; an orthogonal pair gives
    /// `+inf` so a line search can reject the point.
    pub fn divergence(&self) -> f64 {
        if self.v1 == 0.0 && self.v2 == 0.0 {
            return 0.0;
        }
        if self.v3 <= 0.0 {
            return f64::INFINITY;
        }
        (self.v1.ln() + self.v2.ln() - 2.0 * self.v3.ln()).max(0.0)
    }
}

fn check_pair(pj: &[f64], qm: &[f64]) -> Result<()> {
    if pj.len() != qm.len() {
        return Err(Error::shape(
            format!("{} values", pj.len()),
            format!("{} values", qm.len()),
        ));
    }
    if pj.is_empty() {
        return Err(Error::InvalidInput("divergence needs at least one value".into()));
    }
    if let Some(v) = pj.iter().chain(qm).find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("densities must be finite and >= 0, got {v}")));
    }
    Ok(())
}

pub fn sums(pj: &[f64], qm: &[f64], objective: Objective) -> Result<CsSums> {
    check_pair(pj, qm)?;
    let fp: Vec<f64> = pj.iter().map(|&p| objective.transform(p)).collect();
    let fq: Vec<f64> = qm.iter().map(|&q| objective.transform(q)).collect();
    Ok(CsSums::from_transformed(&fp, &fq))
}

/// Sample-form CCS divergence of two density vectors.
pub fn ccs_div_samples(pj: &[f64], qm: &[f64], alpha: ConvexityParam) -> Result<f64> {
    if pj.len() == 1 && qm.len() == 1 {
        check_pair(pj, qm)?;
        return Ok(0.0);
    }
    Ok(sums(pj, qm, Objective::Ccs { alpha })?.divergence())
}

/// Sample-form CS divergence (`f` = identity).
pub fn cs_div_samples(pj: &[f64], qm: &[f64]) -> Result<f64> {
    if pj.len() == 1 && qm.len() == 1 {
        check_pair(pj, qm)?;
        return Ok(0.0);
    }
    Ok(sums(pj, qm, Objective::Cs)?.divergence())
}

pub fn divergence_samples(pj: &[f64], qm: &[f64], objective: Objective) -> Result<f64> {
    match objective {
        Objective::Ccs { alpha } => ccs_div_samples(pj, qm, alpha),
        Objective::Cs => cs_div_samples(pj, qm),
    }
}

/// Cauchy-Schwarz terms of a divergence and the angle between the
/// transformed vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceGeometry {
    pub v_jj: f64,
    pub v_mm: f64,
    pub v_cc: f64,
    /// Radians in `[0, pi/2]`.
    pub angle: f64,
}

impl DivergenceGeometry {
    pub fn divergence(&self) -> f64 {
        CsSums {
            v1: self.v_jj,
            v2: self.v_mm,
            v3: self.v_cc,
        }
        .divergence()
    }
}

pub fn divergence_geometry(pj: &[f64], qm: &[f64], objective: Objective) -> Result<DivergenceGeometry> {
    let s = sums(pj, qm, objective)?;
    let cos = if s.v1 > 0.0 && s.v2 > 0.0 {
        (s.v3 / (s.v1.sqrt() * s.v2.sqrt())).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(DivergenceGeometry {
        v_jj: s.v1,
        v_mm: s.v2,
        v_cc: s.v3,
        angle: cos.acos(),
    })
}

/// Joint distribution of two discrete variables on an `n x n` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJointDist {
    n: usize,
    joint: Vec<f64>,
}

impl DiscreteJointDist {
    /// `rows[i][j] = P(y1 = i, y2 = j)`.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(
                "joint distribution must be a non-empty square table".into(),
            ));
        }
        let joint: Vec<f64> = rows.iter().flatten().copied().collect();
        if let Some(v) = joint.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("probabilities must be >= 0, got {v}")));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { n, joint })
    }

    /// Outer product of two marginals.
    pub fn independent(p1: &[f64], p2: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = p1.iter().map(|a| p2.iter().map(|b| a * b).collect()).collect();
        Self::new(&rows)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.joint[i * self.n + j]
    }

    /// Row sums: distribution of the first variable.
    pub fn marginal_first(&self) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).sum()).collect()
    }

    /// Column sums: distribution of the second variable.
    pub fn marginal_second(&self) -> Vec<f64> {
        (0..self.n).map(|j| (0..self.n).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut joint = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                joint[j * n + i] = self.get(i, j);
            }
        }
        Self { n, joint }
    }

    /// Cell-by-cell `(joint, product of marginals)` vectors.
    pub fn cells(&self) -> (Vec<f64>, Vec<f64>) {
        let m1 = self.marginal_first();
        let m2 = self.marginal_second();
        let mut prod = Vec::with_capacity(self.n * self.n);
        for a in &m1 {
            for b in &m2 {
                prod.push(a * b);
            }
        }
        (self.joint.clone(), prod)
    }
}

/// CCS divergence between a discrete joint and the product of its marginals.
pub fn ccs_div_discrete(d: &DiscreteJointDist, alpha: ConvexityParam) -> f64 {
    discrete_divergence(d, Objective::Ccs { alpha })
}

pub fn discrete_divergence(d: &DiscreteJointDist, objective: Objective) -> f64 {
    let (pj, qm) = d.cells();
    let fp: Vec<f64> = pj.iter().map(|&p| objective.transform(p)).collect();
    let fq: Vec<f64> = qm.iter().map(|&q| objective.transform(q)).collect();
    CsSums::from_transformed(&fp, &fq).divergence()
}

/// One point of the two-binary-variable sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub p_aa: f64,
    pub alpha: f64,
    pub divergence: f64,
}

/// Joint of two binary variables whose marginals are fixed at
/// `P(y1=A) = 0.7` and `P(y2=A) = 0.5`, parametrized by `P(A,A)`.
///
/// Returns `None` where some cell would be negative (`P(A,A)` outside
/// `[0.2, 0.5]`).
pub fn binary_joint(p_aa: f64) -> Option<DiscreteJointDist> {
    const P1A: f64 = 0.7;
    const P2A: f64 = 0.5;
    let p_ab = P1A - p_aa;
    let p_ba = P2A - p_aa;
    let p_bb = 1.0 - p_aa - p_ab - p_ba;
    let cells = [p_aa, p_ab, p_ba, p_bb];
    if cells.iter().any(|&c| c < 0.0) {
        return None;
    }
    // exact normalization so the constructor's mass check never trips on rounding
    let total: f64 = cells.iter().sum();
    let rows = vec![vec![p_aa / total, p_ab / total], vec![p_ba / total, p_bb / total]];
    DiscreteJointDist::new(&rows).ok()
}

/// Sweeps `P(A,A)` over `k * 0.7 / steps` for `k = 1..steps` and evaluates
/// the divergence for every alpha. Infeasible grid points are skipped.
pub fn binary_sweep(alphas: &[ConvexityParam], steps: usize) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &alpha in alphas {
        for k in 1..steps {
            let p_aa = 0.7 * k as f64 / steps as f64;
            if let Some(d) = binary_joint(p_aa) {
                out.push(SweepPoint {
                    p_aa,
                    alpha: alpha.alpha(),
                    divergence: ccs_div_discrete(&d, alpha),
                });
            }
        }
    }
    out
}
