//! Monte Carlo spectra of finite-`N` ensembles.
//!
//! Each replica draws from its own ChaCha8 stream: the key is derived from the
//! seed and the stream number is the replica index, so a replica's entries depend
//! only on `(seed, replica_index)` and on their position in the fill order.

use crate::dyson::{CovarianceModel, EntryLaw};
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::measures::SpectralMeasure;
use crate::model::Model;
use crate::wigner::DeformedWignerModel;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::Write;

/// Largest `n * m` a single sample may allocate.
pub const MAX_ENTRIES: usize = 40_000_000;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// One Monte Carlo draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    pub n: usize,
    pub m: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_max: f64,
    pub seed: u64,
    pub replica_index: u64,
}

/// `d_i = Q_rho((i - 1/2) / m)`, ascending and inside `[l(rho), r(rho)]`.
pub fn build_gamma(rho: &SpectralMeasure, m: usize) -> Vec<f64> {
    let (l, r) = rho.edges();
    (1..=m)
        .map(|i| rho.quantile((i as f64 - 0.5) / m as f64).clamp(l, r))
        .collect()
}

fn rng_for(seed: u64, replica_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica_index);
    rng
}

fn real_entry(law: EntryLaw, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        EntryLaw::Gaussian | EntryLaw::ComplexGaussian => rng.sample(StandardNormal),
        EntryLaw::Rademacher | EntryLaw::ComplexRademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        EntryLaw::UniformSqrt3 => SQRT3 * (2.0 * rng.random::<f64>() - 1.0),
    }
}

/// Complex entry with independent real and imaginary parts of variance 1/2.
/// Complex Rademacher takes the four values `(+-1 +- i) / sqrt 2`.
fn complex_entry(law: EntryLaw, rng: &mut ChaCha8Rng) -> Complex64 {
    let re = real_entry(law, rng);
    let im = real_entry(law, rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn ascending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn check_size(n: usize, m: usize) -> Result<()> {
    let entries = n.saturating_mul(m);
    if entries > MAX_ENTRIES {
        return Err(Error::TooLarge {
            entries,
            cap: MAX_ENTRIES,
        });
    }
    Ok(())
}

/// `m = round(alpha n)`.
pub fn sample_rows(model: &CovarianceModel, n: usize) -> usize {
    (model.alpha * n as f64).round() as usize
}

fn covariance_spectrum(model: &CovarianceModel, gamma: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = gamma.len();
    let inv_m = 1.0 / m as f64;
    if model.entry_law.is_complex() {
        let z = DMatrix::from_fn(m, n, |_, _| complex_entry(model.entry_law, rng));
        let mut y = z.clone();
        for (i, &d) in gamma.iter().enumerate() {
            y.row_mut(i).scale_mut(d);
        }
        let h = z.ad_mul(&y) * Complex64::new(inv_m, 0.0);
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        ascending(h.symmetric_eigenvalues().iter().copied().collect())
    } else {
        let z = DMatrix::from_fn(m, n, |_, _| real_entry(model.entry_law, rng));
        let mut y = z.clone();
        for (i, &d) in gamma.iter().enumerate() {
            y.row_mut(i).scale_mut(d);
        }
        let h = z.tr_mul(&y) * inv_m;
        let h = (&h + h.transpose()) * 0.5;
        ascending(h.symmetric_eigenvalues().iter().copied().collect())
    }
}

fn wigner_spectrum(model: &DeformedWignerModel, diag: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = diag.len();
    let s = 1.0 / (n as f64).sqrt();
    if model.entry_law.is_complex() {
        let mut x = DMatrix::<Complex64>::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                if i == j {
                    x[(i, i)] = Complex64::new(real_entry(model.entry_law, rng) * s + diag[i], 0.0);
                } else {
                    let w = complex_entry(model.entry_law, rng) * s;
                    x[(i, j)] = w;
                    x[(j, i)] = w.conj();
                }
            }
        }
        ascending(x.symmetric_eigenvalues().iter().copied().collect())
    } else {
        let mut x = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let w = real_entry(model.entry_law, rng) * s;
                if i == j {
                    x[(i, i)] = w + diag[i];
                } else {
                    x[(i, j)] = w;
                    x[(j, i)] = w;
                }
            }
        }
        ascending(x.symmetric_eigenvalues().iter().copied().collect())
    }
}

/// Spectrum of `(1/M) Z^T Gamma Z` (or `Z^* Gamma Z`), or of `W/sqrt(N) + D` for
/// deformed Wigner models. Deterministic in `(seed, replica_index)`.
pub fn sample_spectrum(model: &Model, n: usize, seed: u64, replica_index: u64) -> Result<SpectrumSample> {
    let gamma = match model {
        Model::Covariance(m) => build_gamma(&m.rho, sample_rows(m, n)),
        Model::DeformedWigner(m) => build_gamma(&m.mu_d, n),
    };
    sample_with_gamma(model, &gamma, n, seed, replica_index)
}

fn sample_with_gamma(model: &Model, gamma: &[f64], n: usize, seed: u64, replica_index: u64) -> Result<SpectrumSample> {
    if n < 2 {
        return Err(crate::error::domain("n", n as f64, ">= 2"));
    }
    let m = gamma.len();
    if m < 1 {
        return Err(crate::error::domain("m", 0.0, "round(alpha n) >= 1"));
    }
    check_size(n, m)?;
    let mut rng = rng_for(seed, replica_index);
    let eigenvalues = match model {
        Model::Covariance(c) => covariance_spectrum(c, gamma, n, &mut rng),
        Model::DeformedWigner(w) => wigner_spectrum(w, gamma, &mut rng),
    };
    let lambda_max = *eigenvalues.last().expect("n >= 2 eigenvalues");
    Ok(SpectrumSample {
        n,
        m,
        eigenvalues,
        lambda_max,
        seed,
        replica_index,
    })
}

/// Replicas `0..replicas` in index order, computed in parallel.
pub fn sample_replicas(model: &Model, n: usize, replicas: usize, seed: u64) -> Result<Vec<SpectrumSample>> {
    let gamma = match model {
        Model::Covariance(m) => build_gamma(&m.rho, sample_rows(m, n)),
        Model::DeformedWigner(m) => build_gamma(&m.mu_d, n),
    };
    (0..replicas as u64)
        .into_par_iter()
        .map(|k| sample_with_gamma(model, &gamma, n, seed, k))
        .collect()
}

/// Summary of `lambda_max` over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub mean_lambda_max: f64,
    pub sd: f64,
    /// `(p, quantile)` for `p` in 0.05, 0.25, 0.5, 0.75, 0.95.
    pub quantiles: Vec<(f64, f64)>,
    pub lambda_max: Vec<f64>,
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let k = h.floor() as usize;
    let t = h - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] + t * (sorted[k + 1] - sorted[k])
    } else {
        sorted[k]
    }
}

pub fn edge_stats(model: &Model, n: usize, replicas: usize, seed: u64) -> Result<EdgeStats> {
    if replicas == 0 {
        return Err(crate::error::domain("replicas", 0.0, ">= 1"));
    }
    let lmax: Vec<f64> = sample_replicas(model, n, replicas, seed)?
        .into_iter()
        .map(|s| s.lambda_max)
        .collect();
    let k = lmax.len() as f64;
    let mean = lmax.iter().sum::<f64>() / k;
    let var = if lmax.len() > 1 {
        lmax.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let sorted = ascending(lmax.clone());
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|&p| (p, empirical_quantile(&sorted, p)))
        .collect();
    Ok(EdgeStats {
        mean_lambda_max: mean,
        sd: var.sqrt(),
        quantiles,
        lambda_max: lmax,
    })
}

/// Kolmogorov–Smirnov and Wasserstein-1 distances between an empirical spectrum
/// and a reference law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub d_ks: f64,
    pub w1: f64,
}

/// Distances from the empirical measure of `eigenvalues` (ascending) to `law`.
/// `d_KS` is exact at the jump points; `W1 = int |F_n - F|` uses the jump points
/// merged with `grid` extra points across the joint range.
pub fn spectral_distances(eigenvalues: &[f64], law: &SpectralMeasure, grid: usize) -> Distances {
    let n = eigenvalues.len() as f64;
    let jump = |x: f64| -> f64 {
        law.atoms()
            .iter()
            .filter(|a| a.location == x)
            .map(|a| a.weight)
            .sum()
    };
    let (l, r) = law.edges();
    let a = l.min(eigenvalues[0]);
    let b = r.max(eigenvalues[eigenvalues.len() - 1]);
    let mut xs: Vec<f64> = eigenvalues.to_vec();
    xs.extend((0..=grid).map(|k| a + (b - a) * k as f64 / grid.max(1) as f64));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let f = law.cdf_sorted(&xs);
    let mut d_ks = 0.0f64;
    let mut w1 = 0.0;
    let mut count = 0usize;
    for (k, &x) in xs.iter().enumerate() {
        let below = count;
        while count < eigenvalues.len() && eigenvalues[count] <= x {
            count += 1;
        }
        let (fe_left, fe) = (below as f64 / n, count as f64 / n);
        let f_left = f[k] - jump(x);
        d_ks = d_ks.max((fe - f[k]).abs()).max((fe_left - f_left).abs());
        if k + 1 < xs.len() {
            let next_left = f[k + 1] - jump(xs[k + 1]);
            w1 += 0.5 * ((fe - f[k]).abs() + (fe - next_left).abs()) * (xs[k + 1] - x);
        }
    }
    Distances { d_ks: d_ks.min(1.0), w1 }
}

/// Distances of one replica's spectrum to `law` (typically `sigma`).
pub fn distance_stats(model: &Model, law: &SpectralMeasure, n: usize, seed: u64, replica_index: u64) -> Result<Distances> {
    let s = sample_spectrum(model, n, seed, replica_index)?;
    Ok(spectral_distances(&s.eigenvalues, law, 2000))
}

/// Tail estimate `-(1/n) log P(lambda_max >= x)` at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub n: usize,
    pub hits: usize,
    pub replicas: usize,
    /// Point estimate; with zero hits this is a lower bound.
    pub estimate: f64,
    pub lower_bound_only: bool,
    /// 95% Wilson interval transformed to the rate scale.
    pub ci: (f64, Extended),
}

fn wilson(hits: usize, total: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let nf = total as f64;
    let p = hits as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Empirical `-(1/n) log` frequency of `{lambda_max >= x}` for each `n`.
pub fn tail_curve(model: &Model, x: f64, n_list: &[usize], replicas: usize, seed: u64) -> Result<Vec<TailPoint>> {
    n_list
        .iter()
        .map(|&n| {
            let hits = sample_replicas(model, n, replicas, seed)?
                .iter()
                .filter(|s| s.lambda_max >= x)
                .count();
            let (plo, phi) = wilson(hits, replicas);
            let nf = n as f64;
            let to_rate = |p: f64| -p.ln() / nf;
            let (estimate, lower_bound_only) = if hits == 0 {
                (to_rate(phi), true)
            } else {
                (to_rate(hits as f64 / replicas as f64), false)
            };
            let upper = if plo > 0.0 {
                Extended::Finite(to_rate(plo))
            } else {
                Extended::PosInf
            };
            Ok(TailPoint {
                n,
                hits,
                replicas,
                estimate,
                lower_bound_only,
                ci: (to_rate(phi), upper),
            })
        })
        .collect()
}

/// CSV `replica,n,m,lambda_max`.
pub fn write_mc_csv<W: Write>(samples: &[SpectrumSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "replica,n,m,lambda_max")?;
    for s in samples {
        writeln!(w, "{},{},{},{:.16e}", s.replica_index, s.n, s.m, s.lambda_max)?;
    }
    Ok(())
}

/// Full spectra as little-endian `f64`, one row of `n` values per replica.
pub fn write_spectra_binary<W: Write>(samples: &[SpectrumSample], mut w: W) -> std::io::Result<()> {
    for s in samples {
        for v in &s.eigenvalues {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
