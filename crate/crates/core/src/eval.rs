//! Separation quality metrics and divergence landscapes.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::Objective;
use crate::error::{Error, Result};
use crate::ica::{ContrastModel, IcaConfig, ObjectiveKind, SINGULAR_DET};
use crate::linalg::{SampleMatrix, SquareMatrix};

/// SIR reported when the error energy vanishes.
pub const SIR_CAP_DB: f64 = 300.0;

/// Excess kurtosis `E[s^4] / E[s^2]^2 - 3` of the centered samples.
pub fn kurtosis(s: &[f64]) -> Result<f64> {
    if s.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "kurtosis needs at least 4 samples, got {}",
            s.len()
        )));
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let (m2, m4) = s.iter().fold((0.0, 0.0), |(a, b), &v| {
        let d = (v - mean) * (v - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if !(m2 > 0.0) {
        return Err(Error::ZeroVariance { channel: 0 });
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Output channel `permutation[m]` matches source `m` after scaling by `gains[m]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    pub permutation: Vec<usize>,
    pub gains: Vec<f64>,
}

impl Alignment {
    pub fn apply(&self, y: &SampleMatrix) -> Result<SampleMatrix> {
        if y.channels() != self.permutation.len() {
            return Err(Error::shape(
                format!("{} channels", self.permutation.len()),
                format!("{}", y.channels()),
            ));
        }
        let rows: Vec<Vec<f64>> = self
            .permutation
            .iter()
            .zip(&self.gains)
            .map(|(&k, &g)| y.row(k).iter().map(|v| g * v).collect())
            .collect();
        SampleMatrix::from_rows(&rows)
    }
}

fn check_same_shape(a: &SampleMatrix, b: &SampleMatrix) -> Result<()> {
    if a.channels() != b.channels() || a.samples() != b.samples() {
        return Err(Error::shape(
            format!("{}x{}", a.channels(), a.samples()),
            format!("{}x{}", b.channels(), b.samples()),
        ));
    }
    Ok(())
}

fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).abs()
}

fn has_zero_variance(v: &[f64]) -> bool {
    let first = v[0];
    v.iter().all(|&x| x == first)
}

/// Greedy absolute-correlation matching, largest pair first, then a
/// least-squares gain per matched pair.
pub fn align(s: &SampleMatrix, y: &SampleMatrix) -> Result<Alignment> {
    check_same_shape(s, y)?;
    let n = s.channels();
    if s.samples() < 2 {
        return Err(Error::InvalidInput("alignment needs at least 2 samples".into()));
    }
    for m in 0..n {
        if has_zero_variance(s.row(m)) {
            return Err(Error::ZeroVariance { channel: m });
        }
        if has_zero_variance(y.row(m)) {
            return Err(Error::ZeroVariance { channel: m });
        }
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for m in 0..n {
        for k in 0..n {
            pairs.push((abs_correlation(s.row(m), y.row(k)), m, k));
        }
    }
    // descending by correlation; index order breaks ties
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut permutation = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, m, k) in pairs {
        if permutation[m] == usize::MAX && !taken[k] {
            permutation[m] = k;
            taken[k] = true;
        }
    }
    let gains = permutation
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            let yk = y.row(k);
            let num: f64 = yk.iter().zip(s.row(m)).map(|(a, b)| a * b).sum();
            let den: f64 = yk.iter().map(|a| a * a).sum();
            num / den
        })
        .collect();
    Ok(Alignment { permutation, gains })
}

fn sir_from_energies(signal: f64, error: f64) -> Result<f64> {
    if !(signal > 0.0) {
        return Err(Error::InvalidInput("source signal has zero energy".into()));
    }
    if error < 1e-30 * signal {
        return Ok(SIR_CAP_DB);
    }
    Ok((10.0 * (signal / error).log10()).min(SIR_CAP_DB))
}

/// `10 log10( sum ||s||^2 / sum ||y - s||^2 )` over all sources and samples.
pub fn sir_db(s: &SampleMatrix, y_aligned: &SampleMatrix) -> Result<f64> {
    check_same_shape(s, y_aligned)?;
    let signal = s.energy();
    let error: f64 = s
        .as_slice()
        .iter()
        .zip(y_aligned.as_slice())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    sir_from_energies(signal, error)
}

/// SIR of each source channel separately.
pub fn sir_per_channel(s: &SampleMatrix, y_aligned: &SampleMatrix) -> Result<Vec<f64>> {
    check_same_shape(s, y_aligned)?;
    s.rows()
        .zip(y_aligned.rows())
        .map(|(a, b)| {
            let signal: f64 = a.iter().map(|v| v * v).sum();
            let error: f64 = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum();
            sir_from_energies(signal, error)
        })
        .collect()
}

fn centered(x: &SampleMatrix) -> SampleMatrix {
    let mut out = x.clone();
    for (m, mu) in x.channel_means().into_iter().enumerate() {
        out.row_mut(m).iter_mut().for_each(|v| *v -= mu);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub alignment: Alignment,
    pub sir_db: Vec<f64>,
    pub total_sir_db: f64,
    /// Excess kurtosis of each output channel; `None` for a constant channel.
    pub kurtosis: Vec<Option<f64>>,
}

/// Centers both blocks (separation cannot recover means), aligns the
/// estimates to the sources and scores them.
pub fn evaluate(s: &SampleMatrix, y: &SampleMatrix) -> Result<SeparationReport> {
    check_same_shape(s, y)?;
    let (s, y) = (centered(s), centered(y));
    let kurt = y.rows().map(|r| kurtosis(r).ok()).collect();
    let alignment = match align(&s, &y) {
        Ok(a) => a,
        // an all-zero estimate carries no information: score it against zeros
        Err(Error::ZeroVariance { .. }) if y.energy() == 0.0 => Alignment {
            permutation: (0..s.channels()).collect(),
            gains: vec![0.0; s.channels()],
        },
        Err(e) => return Err(e),
    };
    let ya = alignment.apply(&y)?;
    Ok(SeparationReport {
        sir_db: sir_per_channel(&s, &ya)?,
        total_sir_db: sir_db(&s, &ya)?,
        kurtosis: kurt,
        alignment,
    })
}

/// `W = [cos t1, sin t1; cos t2, sin t2]`.
pub fn polar_demixer(theta1: f64, theta2: f64) -> SquareMatrix {
    SquareMatrix::from_row_major(2, vec![theta1.cos(), theta1.sin(), theta2.cos(), theta2.sin()])
        .expect("finite angles")
}

/// Divergence over the polar demixer family on `[0, pi]^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeGrid {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    /// Row-major over `(theta1, theta2)`; `+inf` where the demixer is singular.
    pub values: Vec<f64>,
}

impl LandscapeGrid {
    pub fn resolution(&self) -> usize {
        self.theta1.len()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.theta2.len() + j]
    }

    pub fn is_singular(&self, i: usize, j: usize) -> bool {
        self.value(i, j).is_infinite()
    }

    /// Grid indices of the `k` smallest finite values, ascending.
    pub fn lowest(&self, k: usize) -> Vec<(usize, usize)> {
        let n2 = self.theta2.len();
        let mut idx: Vec<usize> = (0..self.values.len()).filter(|&i| self.values[i].is_finite()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (i / n2, i % n2)).collect()
    }

    /// Discrete Laplacian (sum of the second differences along both angles)
    /// at a grid point. Angles wrap with period pi, which maps `W` to a
    /// row-sign flip and leaves the contrast unchanged.
    pub fn second_difference(&self, i: usize, j: usize) -> f64 {
        let n = self.resolution();
        let prev = |k: usize| if k == 0 { n - 2 } else { k - 1 };
        let next = |k: usize| if k == n - 1 { 1 } else { k + 1 };
        let c = self.value(i, j);
        (self.value(prev(i), j) + self.value(next(i), j) - 2.0 * c)
            + (self.value(i, prev(j)) + self.value(i, next(j)) - 2.0 * c)
    }

    /// CSV with header `theta1,theta2,divergence`, row-major.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "theta1,theta2,divergence")?;
        for (i, t1) in self.theta1.iter().enumerate() {
            for (j, t2) in self.theta2.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{}",
                    fmt_sig9(*t1),
                    fmt_sig9(*t2),
                    fmt_sig9(self.value(i, j))
                )?;
            }
        }
        Ok(())
    }
}

/// Shortest decimal form of `v` rounded to 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeOptions {
    pub objective: Objective,
    /// Points per angle axis, including both ends of `[0, pi]`.
    pub resolution: usize,
    pub bandwidth: Option<f64>,
    pub truncate_kernel: bool,
    pub parallel: bool,
}

impl LandscapeOptions {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            resolution: 65,
            bandwidth: None,
            truncate_kernel: false,
            parallel: false,
        }
    }
}

/// Evaluates the contrast at every `(theta1, theta2)` pair. The data is used
/// as given (the experiments feed unmixed sources, so no whitening here).
pub fn landscape(data: &SampleMatrix, opts: &LandscapeOptions) -> Result<LandscapeGrid> {
    if data.channels() != 2 {
        return Err(Error::shape("2 channels", format!("{}", data.channels())));
    }
    if opts.resolution < 3 {
        return Err(Error::InvalidInput("landscape resolution must be at least 3".into()));
    }
    let (objective, alpha) = match opts.objective {
        Objective::Ccs { alpha } => (ObjectiveKind::Ccs, alpha.alpha()),
        Objective::Cs => (ObjectiveKind::Cs, 0.0),
    };
    let cfg = IcaConfig {
        alpha,
        objective,
        bandwidth: opts.bandwidth,
        truncate_kernel: opts.truncate_kernel,
        ..IcaConfig::default()
    };
    let model = ContrastModel::new(data, &cfg)?;
    let n = opts.resolution;
    let grid: Vec<f64> = (0..n)
        .map(|k| std::f64::consts::PI * k as f64 / (n - 1) as f64)
        .collect();
    let eval = |idx: usize| -> Result<f64> {
        let w = polar_demixer(grid[idx / n], grid[idx % n]);
        if w.determinant().abs() < SINGULAR_DET {
            return Ok(f64::INFINITY);
        }
        model.value(&w)
    };
    let values: Vec<f64> = if opts.parallel {
        (0..n * n).into_par_iter().map(eval).collect::<Result<_>>()?
    } else {
        (0..n * n).map(eval).collect::<Result<_>>()?
    };
    Ok(LandscapeGrid {
        theta1: grid.clone(),
        theta2: grid,
        values,
    })
}
