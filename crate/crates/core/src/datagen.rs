//! Seeded synthetic sources and mixing.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`; a given seed
//! yields the same samples on every platform.

use rand::distributions::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SampleMatrix, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceSpec {
    /// Uniform on `(-tau, tau)`; sub-Gaussian, excess kurtosis -1.2.
    Uniform { tau: f64 },
    /// Density `exp(-|s|/tau) / (2 tau)`; super-Gaussian, excess kurtosis 3.
    Laplacian { tau: f64 },
}

impl SourceSpec {
    pub fn tau(&self) -> f64 {
        match *self {
            SourceSpec::Uniform { tau } | SourceSpec::Laplacian { tau } => tau,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            SourceSpec::Uniform { tau } => {
                let u: f64 = rng.gen();
                tau * (2.0 * u - 1.0)
            }
            SourceSpec::Laplacian { tau } => {
                let u: f64 = Open01.sample(rng);
                let c = u - 0.5;
                -tau * c.signum() * (1.0 - 2.0 * c.abs()).ln()
            }
        }
    }
}

impl std::str::FromStr for SourceSpec {
    type Err = Error;

    /// `uniform:3` or `laplacian:1`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, tau) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("source '{s}' must look like kind:tau")))?;
        let tau: f64 = tau
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad tau in '{s}'")))?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be positive in '{s}'")));
        }
        match kind.trim().to_ascii_lowercase().as_str() {
            "uniform" | "u" => Ok(SourceSpec::Uniform { tau }),
            "laplacian" | "laplace" | "l" => Ok(SourceSpec::Laplacian { tau }),
            other => Err(Error::InvalidInput(format!("unknown source kind '{other}'"))),
        }
    }
}

/// One row per spec, each drawn i.i.d. from a single seeded stream.
pub fn gen_sources(specs: &[SourceSpec], samples: usize, seed: u64) -> Result<SampleMatrix> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if specs.is_empty() {
        return Err(Error::InvalidInput("need at least one source".into()));
    }
    if let Some(s) = specs.iter().find(|s| !(s.tau() > 0.0 && s.tau().is_finite())) {
        return Err(Error::InvalidInput(format!("tau must be positive: {s:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = specs
        .iter()
        .map(|spec| (0..samples).map(|_| spec.sample(&mut rng)).collect())
        .collect();
    SampleMatrix::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub matrix: SquareMatrix,
    /// `None` for a noiseless mixture.
    pub snr_db: Option<f64>,
}

impl MixSpec {
    pub fn new(matrix: SquareMatrix, snr_db: Option<f64>) -> Result<Self> {
        if matrix.determinant().abs() < 1e-300 {
            return Err(Error::InvalidInput("mixing matrix is singular".into()));
        }
        if let Some(snr) = snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidInput("SNR must be finite".into()));
            }
        }
        Ok(Self { matrix, snr_db })
    }

    pub fn with_snr(mut self, snr_db: Option<f64>) -> Self {
        self.snr_db = snr_db;
        self
    }
}

/// Two-source mixing matrix with columns `(0.5, 0.6)` and `(0.3, 0.4)`; det 0.02.
pub fn preset_2x2() -> MixSpec {
    let a = SquareMatrix::from_columns(&[vec![0.5, 0.6], vec![0.3, 0.4]]).expect("static preset");
    MixSpec {
        matrix: a,
        snr_db: None,
    }
}

/// Three-source mixing matrix with columns `(0.8, 0.3, -0.3)`,
/// `(0.2, -0.8, 0.7)` and `(0.3, 0.2, 0.3)`. The noisy experiment uses the
/// same matrix.
pub fn preset_3x3() -> MixSpec {
    let a = SquareMatrix::from_columns(&[vec![0.8, 0.3, -0.3], vec![0.2, -0.8, 0.7], vec![0.3, 0.2, 0.3]])
        .expect("static preset");
    MixSpec {
        matrix: a,
        snr_db: None,
    }
}

/// Sources for the two-channel experiments: uniform (tau 3) and Laplacian (tau 1).
pub fn sources_2() -> Vec<SourceSpec> {
    vec![SourceSpec::Uniform { tau: 3.0 }, SourceSpec::Laplacian { tau: 1.0 }]
}

/// Sources for the three-channel experiments.
pub fn sources_3() -> Vec<SourceSpec> {
    vec![
        SourceSpec::Uniform { tau: 3.0 },
        SourceSpec::Laplacian { tau: 1.0 },
        SourceSpec::Laplacian { tau: 0.5 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub signals: SampleMatrix,
    /// Standard deviation of the added noise, if any.
    pub noise_sigma: Option<f64>,
}

/// `X = A S (+ v)`, with `v ~ N(0, sigma^2 I)` scaled so that
/// `10 log10(||A S||^2 / (M T sigma^2)) = snr_db`.
pub fn mix(sources: &SampleMatrix, spec: &MixSpec, seed: u64) -> Result<Mixture> {
    if spec.matrix.determinant().abs() < 1e-300 {
        return Err(Error::InvalidInput("mixing matrix is singular".into()));
    }
    let mut x = sources.left_mul(&spec.matrix)?;
    let Some(snr_db) = spec.snr_db else {
        return Ok(Mixture {
            signals: x,
            noise_sigma: None,
        });
    };
    let n = (x.channels() * x.samples()) as f64;
    let sigma = (x.energy() / (n * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in 0..x.channels() {
        for v in x.row_mut(m) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    Ok(Mixture {
        signals: x,
        noise_sigma: Some(sigma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::kurtosis;

    fn variance(v: &[f64]) -> f64 {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn source_moments() {
        let s = gen_sources(&sources_2(), 100_000, 5).unwrap();
        assert!((variance(s.row(0)) - 3.0).abs() < 0.06);
        assert!((variance(s.row(1)) - 2.0).abs() < 0.04);
        assert!((kurtosis(s.row(1)).unwrap() - 3.0).abs() < 0.3);
        assert!(s.row(0).iter().all(|v| v.abs() < 3.0));
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = gen_sources(&sources_3(), 500, 77).unwrap();
        let b = gen_sources(&sources_3(), 500, 77).unwrap();
        let c = gen_sources(&sources_3(), 500, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let ma = mix(&a, &preset_3x3().with_snr(Some(20.0)), 1).unwrap();
        let mb = mix(&b, &preset_3x3().with_snr(Some(20.0)), 1).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn kurtosis_signs() {
        for seed in 0..5 {
            let s = gen_sources(&sources_2(), 1000, seed).unwrap();
            assert!(kurtosis(s.row(0)).unwrap() < 0.0);
            assert!(kurtosis(s.row(1)).unwrap() > 0.0);
        }
    }

    #[test]
    fn presets() {
        let a = preset_2x2().matrix;
        assert!((a.determinant() - 0.02).abs() < 1e-15);
        assert_eq!(a.row(0), &[0.5, 0.3]);
        assert_eq!(a.row(1), &[0.6, 0.4]);
        let ata = a.transpose().matmul(&a).unwrap();
        let e = ata.sym_eig().unwrap();
        let cond = (e.values[0] / e.values[1]).sqrt();
        assert!(cond.is_finite() && cond > 1.0);

        let b = preset_3x3().matrix;
        assert_eq!(b.row(0), &[0.8, 0.2, 0.3]);
        assert_eq!(b.row(1), &[0.3, -0.8, 0.2]);
        assert_eq!(b.row(2), &[-0.3, 0.7, 0.3]);
        assert!((b.determinant() - (-0.343)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_mix_and_inverse() {
        let s = gen_sources(&sources_3(), 400, 3).unwrap();
        let spec = preset_3x3();
        let x = mix(&s, &spec, 0).unwrap();
        assert!(x.noise_sigma.is_none());
        assert_eq!(x.signals, s.left_mul(&spec.matrix).unwrap());
        let back = x.signals.left_mul(&spec.matrix.inverse().unwrap()).unwrap();
        for (a, b) in back.as_slice().iter().zip(s.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        let ident = MixSpec::new(SquareMatrix::identity(3), None).unwrap();
        assert_eq!(mix(&s, &ident, 0).unwrap().signals, s);
    }

    #[test]
    fn noisy_mix_hits_target_snr() {
        let s = gen_sources(&sources_3(), 5000, 9).unwrap();
        let spec = preset_3x3().with_snr(Some(20.0));
        let clean = s.left_mul(&spec.matrix).unwrap();
        let noisy = mix(&s, &spec, 4).unwrap();
        let noise_energy: f64 = noisy
            .signals
            .as_slice()
            .iter()
            .zip(clean.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let snr = 10.0 * (clean.energy() / noise_energy).log10();
        assert!((snr - 20.0).abs() < 0.2, "{snr}");
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "uniform:3".parse::<SourceSpec>().unwrap(),
            SourceSpec::Uniform { tau: 3.0 }
        );
        assert_eq!(
            "laplacian:1".parse::<SourceSpec>().unwrap(),
            SourceSpec::Laplacian { tau: 1.0 }
        );
        assert!("gauss:1".parse::<SourceSpec>().is_err());
        assert!("uniform:-1".parse::<SourceSpec>().is_err());
    }
}
