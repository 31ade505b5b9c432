//! Deformed Wigner matrices `X_N = W_N / sqrt(N) + D_N`: the function
//! `H(y) = y + K_{mu_D}(y)` (capped at `y + r(mu_D)`), its minimum (the right edge
//! of `rho_sc ⊞ mu_D`), both inverse branches, the rate function, and the density
//! of the free convolution.
//!
//! On the uncapped piece every `y` is `G_{mu_D}(lambda)` for a unique
//! `lambda > r(mu_D)`, so `H = lambda + G_{mu_D}(lambda)` is evaluated without
//! inverting `G_{mu_D}`; each branch then needs a single bisection in `lambda`.

use crate::dyson::{damped_newton, eta_continuation, support_intervals, EntryLaw};
use crate::error::{domain, Error, Result};
use crate::extended::Extended;
use crate::measures::{DensityInput, DensityKind, Edges, SpectralMeasure};
use crate::quad::integrate;
use crate::rate::j_fn;
use crate::roots::{bisect, golden_max};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Deformation limit `mu_D`, symmetry class and entry law of `W_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedWignerModel {
    pub mu_d: SpectralMeasure,
    pub beta: u8,
    pub entry_law: EntryLaw,
}

impl DeformedWignerModel {
    pub fn new(mu_d: SpectralMeasure, beta: u8, entry_law: EntryLaw) -> Result<Self> {
        match beta {
            1 if entry_law.is_complex() => Err(Error::InvalidModel("beta = 1 needs a real entry law".into())),
            2 if !entry_law.is_complex() => Err(Error::InvalidModel("beta = 2 needs a complex entry law".into())),
            1 | 2 => Ok(DeformedWignerModel { mu_d, beta, entry_law }),
            b => Err(Error::InvalidModel(format!("beta = {b}; expected 1 or 2"))),
        }
    }

    /// Real Gaussian (GOE) noise.
    pub fn real(mu_d: SpectralMeasure) -> Self {
        DeformedWignerModel {
            mu_d,
            beta: 1,
            entry_law: EntryLaw::Gaussian,
        }
    }

    fn r(&self) -> f64 {
        self.mu_d.right()
    }

    fn g(&self, lambda: f64) -> f64 {
        self.mu_d.integrate(|u| 1.0 / (lambda - u))
    }

    fn g_prime(&self, lambda: f64) -> f64 {
        -self.mu_d.integrate(|u| 1.0 / ((lambda - u) * (lambda - u)))
    }
}

/// Edge quantities of `rho_sc ⊞ mu_D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DWEdgeData {
    /// Minimizer of `H`.
    pub y_c: f64,
    /// `H(y_c)`, the right edge of the free convolution.
    pub r_edge: f64,
    /// `r(mu_D) + G_{mu_D}(r(mu_D))`.
    pub x_c_dw: Extended,
    /// `G_{mu_D}(r(mu_D))`.
    pub g_edge_mu_d: Extended,
    /// `K_{mu_D}(y_c)`, equal to `r(mu_D)` when the minimum sits on the cap.
    pub lambda_c: f64,
}

/// `K_mu(y) = G_mu^{-1}(y)` for `y` in the range of `G_mu` on `(r(mu), inf)`.
pub fn k_transform(mu: &SpectralMeasure, y: f64) -> Result<f64> {
    mu.inverse_stieltjes(y)
}

/// `H(y) = y + K_{mu_D}(y)` for `y < G_{mu_D}(r)`, `y + r(mu_D)` beyond.
pub fn dw_h(model: &DeformedWignerModel, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(domain("y", y, "> 0"));
    }
    let g_edge = model.mu_d.stieltjes_at_or_above_edge(model.r())?;
    if y >= g_edge.to_f64() {
        Ok(y + model.r())
    } else {
        Ok(y + k_transform(&model.mu_d, y)?)
    }
}

/// Minimizes `H` through `G'_{mu_D}(lambda_c) = -1`, falling back to the cap when
/// the derivative never reaches `-1` above the edge.
pub fn dw_edge(model: &DeformedWignerModel) -> Result<DWEdgeData> {
    let r = model.r();
    let g_edge = model.mu_d.stieltjes_at_or_above_edge(r)?;
    let x_c_dw = match g_edge {
        Extended::Finite(g) => Extended::Finite(r + g),
        Extended::PosInf => Extended::PosInf,
    };
    let on_cap = match g_edge {
        Extended::PosInf => false,
        Extended::Finite(_) => {
            let span = (r - model.mu_d.left()).max(1.0);
            model.g_prime(r + 1e-12 * span) >= -1.0
        }
    };
    let (lambda_c, y_c) = if on_cap {
        (r, g_edge.to_f64())
    } else {
        // |G'(r + 1)| <= 1, so the root lies in (r, r + 1].
        let l = bisect(|l| model.g_prime(l) + 1.0, r, r + 1.0, true, 0.0);
        (l, model.g(l))
    };
    Ok(DWEdgeData {
        y_c,
        r_edge: lambda_c + y_c,
        x_c_dw,
        g_edge_mu_d: g_edge,
        lambda_c,
    })
}

/// `(G, Gbar)`: the roots of `H(w) = x` below and above `y_c`.
pub fn dw_branches(model: &DeformedWignerModel, edge: &DWEdgeData, x: f64) -> Result<(f64, f64)> {
    if x.is_nan() || x < edge.r_edge {
        return Err(domain("x", x, format!(">= r_edge = {}", edge.r_edge)));
    }
    if x == edge.r_edge {
        return Ok((edge.y_c, edge.y_c));
    }
    let r = model.r();
    let lc = edge.lambda_c;
    // Small branch: lambda + G(lambda) = x with lambda in (lambda_c, x).
    let lam = bisect(|l| l + model.g(l) - x, lc, x, true, 0.0);
    let g_small = x - lam;
    let g_bar = match edge.x_c_dw {
        Extended::Finite(xc) if x >= xc => x - r,
        _ if lc == r => x - r,
        _ => {
            let lam = bisect(|l| l + model.g(l) - x, r, lc, false, 0.0);
            x - lam
        }
    };
    Ok((g_small, g_bar))
}

/// `beta/2 int_{r_edge}^x (Gbar - G)`, `+inf` below the edge.
pub fn dw_rate(model: &DeformedWignerModel, x: f64) -> Result<Extended> {
    let edge = dw_edge(model)?;
    dw_rate_with_edge(model, &edge, x)
}

/// [`dw_rate`] with precomputed edge data.
pub fn dw_rate_with_edge(model: &DeformedWignerModel, edge: &DWEdgeData, x: f64) -> Result<Extended> {
    if x.is_nan() {
        return Err(domain("x", x, "a number"));
    }
    let r = edge.r_edge;
    if x < r {
        return Ok(Extended::PosInf);
    }
    let mut cuts = vec![0.0];
    if let Extended::Finite(xc) = edge.x_c_dw {
        if xc > r && xc < x {
            cuts.push((xc - r).sqrt());
        }
    }
    cuts.push((x - r).sqrt());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let failure = std::cell::Cell::new(None);
        let res = integrate(
            |s| {
                let u = (r + s * s).min(x);
                match dw_branches(model, edge, u) {
                    Ok((g, gb)) => 2.0 * s * (gb - g),
                    Err(_) => {
                        failure.set(Some(u));
                        f64::NAN
                    }
                }
            },
            w[0],
            w[1],
            crate::rate::RATE_ABS_TOL,
            1e-13,
        );
        if let Some(u) = failure.get() {
            return Err(domain("x", u, "inside the branch domain"));
        }
        total += res?.value;
    }
    Ok(Extended::Finite(f64::from(model.beta) * 0.5 * total))
}

fn free_conv_residual(model: &DeformedWignerModel, z: Complex64, g: Complex64) -> (Complex64, Complex64) {
    // F(g) = g - G_D(z - g), F'(g) = 1 + G_D'(z - g) with G_D' = -int 1/(w - u)^2.
    let w = z - g;
    let mut gd = Complex64::new(0.0, 0.0);
    let mut dgd = Complex64::new(0.0, 0.0);
    let mut add = |u: f64, wt: f64| {
        let d = (w - u).inv();
        gd += d * wt;
        dgd -= d * d * wt;
    };
    for a in model.mu_d.atoms() {
        add(a.location, a.weight);
    }
    if let Some(d) = model.mu_d.density() {
        for (&u, &wt) in d.nodes().iter().zip(d.weights()) {
            add(u, wt);
        }
    }
    (g - gd, Complex64::new(1.0, 0.0) + dgd)
}

/// Stieltjes transform of `rho_sc ⊞ mu_D` at `x + i eta` from the subordination
/// fixed point `G = G_{mu_D}(z - G)`: a few damped fixed-point sweeps at each
/// continuation stage, then a Newton polish.
pub fn free_convolution_stieltjes(model: &DeformedWignerModel, x: f64, eta: f64) -> Result<Complex64> {
    let (l, r) = model.mu_d.edges();
    let scale = 3.0 + x.abs() + l.abs().max(r.abs());
    eta_continuation(
        x,
        eta,
        scale,
        |z, seed| {
            let mut g = seed;
            for _ in 0..5 {
                let next = g - free_conv_residual(model, z, g).0 * 0.5;
                if next.im <= 0.0 && next.im.is_finite() {
                    g = next;
                }
            }
            damped_newton(|g| free_conv_residual(model, z, g), z, g)
        },
        |z, g| free_conv_residual(model, z, g).0.norm(),
    )
}

/// Density of `rho_sc ⊞ mu_D` smoothed at scale `eta`.
pub fn free_convolution_density(model: &DeformedWignerModel, x: f64, eta: f64) -> Result<f64> {
    let g = free_convolution_stieltjes(model, x, eta)?;
    Ok((-g.im / std::f64::consts::PI).max(0.0))
}

/// `rho_sc ⊞ mu_D` discretized on its detected support.
#[derive(Debug, Clone)]
pub struct FreeConvolutionMeasure {
    pub measure: SpectralMeasure,
    pub mass_defect: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Discretizes the free convolution on `points` nodes. Edges come from
/// [`dw_edge`] on `mu_D` and on its reflection.
pub fn free_convolution_measure(model: &DeformedWignerModel, points: usize) -> Result<FreeConvolutionMeasure> {
    let right = dw_edge(model)?.r_edge;
    let reflected = DeformedWignerModel {
        mu_d: model.mu_d.pushforward_scale(-1.0)?,
        ..model.clone()
    };
    let left = -dw_edge(&reflected)?.r_edge;
    let eta = 1e-12 * (right - left);
    let shared = Arc::new(model.clone());
    let m = shared.clone();
    let density = move |x: f64| free_convolution_density(&m, x, eta);
    let intervals = support_intervals(&density, left, right, 400)?;
    let per = (points / intervals.len()).max(16);
    let input = DensityInput {
        kind: DensityKind::Custom {
            label: "free convolution with the semicircle".into(),
        },
        evaluator: Arc::new(move |x| free_convolution_density(&shared, x, eta).unwrap_or(0.0)),
        intervals: intervals.clone(),
        nodes_per_interval: per,
        edges: Edges::INTEGRABLE,
    };
    let measure = SpectralMeasure::mixture(&[], &[], Some(input))?;
    let raw = measure.quadrature_report().map_or(0.0, |r| r.raw_mass);
    Ok(FreeConvolutionMeasure {
        measure,
        mass_defect: (raw - 1.0).abs(),
        intervals,
    })
}

/// `I(x, theta) = J(rho_sc ⊞ mu_D, theta, x) - theta^2 - J(mu_D, theta, r(mu_D))`,
/// scaled by `beta`.
pub fn dw_rate_at_theta(model: &DeformedWignerModel, conv: &SpectralMeasure, x: f64, theta: f64) -> Result<f64> {
    let j1 = j_fn(conv, theta, x)?;
    let j2 = j_fn(&model.mu_d, theta, model.r())?;
    Ok(f64::from(model.beta) * (j1 - theta * theta - j2))
}

/// Outcome of [`dw_rate_variational`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DWVariational {
    pub value: f64,
    pub theta_x: f64,
    pub scan_max: f64,
    pub mass_defect: f64,
}

/// Variational form at `theta_x = Gbar(x) / 2`, checked against a logarithmic
/// scan over `theta` refined by golden-section search.
pub fn dw_rate_variational(
    model: &DeformedWignerModel,
    edge: &DWEdgeData,
    conv: &FreeConvolutionMeasure,
    x: f64,
) -> Result<DWVariational> {
    if conv.mass_defect > crate::rate::MAX_MASS_DEFECT {
        return Err(Error::GridQuality {
            defect: conv.mass_defect,
            limit: crate::rate::MAX_MASS_DEFECT,
        });
    }
    let (_, gbar) = dw_branches(model, edge, x)?;
    let theta_x = 0.5 * gbar;
    let mu = &conv.measure;
    let at = |t: f64| dw_rate_at_theta(model, mu, x, t);
    let value = at(theta_x)?;
    let (lo, hi) = (theta_x * 1e-3, theta_x * 1e3);
    let n = 50;
    let grid: Vec<f64> = (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect();
    let mut best = (theta_x, value);
    let mut best_k = None;
    for (k, &t) in grid.iter().enumerate() {
        let v = at(t)?;
        if v > best.1 {
            best = (t, v);
            best_k = Some(k);
        }
    }
    if let Some(k) = best_k {
        let (t, v) = golden_max(
            |t| at(t).unwrap_or(f64::NEG_INFINITY),
            grid[k.saturating_sub(1)],
            grid[(k + 1).min(n - 1)],
            60,
        );
        if v > best.1 {
            best = (t, v);
        }
    }
    let tol = crate::rate::SUPREMUM_TOL * value.abs().max(1.0);
    if best.1 > value + tol {
        return Err(Error::SupremumViolation {
            theta: best.0,
            scan: best.1,
            value,
            tol,
        });
    }
    Ok(DWVariational {
        value,
        theta_x,
        scan_max: best.1,
        mass_defect: conv.mass_defect,
    })
}

/// Caps the deformation: mass of `mu_D` within `eps` of its right edge is moved
/// onto an atom at the edge.
pub fn dw_epsilon_cap(model: &DeformedWignerModel, eps: f64) -> Result<DeformedWignerModel> {
    Ok(DeformedWignerModel {
        mu_d: model.mu_d.epsilon_truncate(eps)?.measure,
        ..model.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn wigner_rate(x: f64) -> f64 {
        let s = (x * x - 4.0).sqrt();
        0.5 * (0.5 * x * s - 2.0 * ((x + s) / 2.0).ln())
    }

    fn d0() -> DeformedWignerModel {
        DeformedWignerModel::real(SpectralMeasure::dirac(0.0))
    }

    fn sc_def() -> DeformedWignerModel {
        DeformedWignerModel::real(SpectralMeasure::semicircle(0.0, 1.0, 512).unwrap())
    }

    #[test]
    fn k_examples() {
        let d = SpectralMeasure::dirac(0.0);
        assert_abs_diff_eq!(k_transform(&d, 0.5).unwrap(), 2.0, epsilon = 1e-14);
        for y in [0.1, 0.7, 3.0] {
            assert_abs_diff_eq!(k_transform(&d, y).unwrap() - 1.0 / y, 0.0, epsilon = 1e-12);
        }
        let sc = SpectralMeasure::semicircle(0.0, 1.0, 512).unwrap();
        let k = k_transform(&sc, 1.0).unwrap();
        assert_abs_diff_eq!(k, 0.25 + 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sc.stieltjes(k).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn h_examples() {
        assert_abs_diff_eq!(dw_h(&d0(), 1.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(dw_h(&d0(), 3.0).unwrap(), 3.0 + 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(dw_h(&sc_def(), 3.0).unwrap(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn edge_examples() {
        let e = dw_edge(&d0()).unwrap();
        assert_abs_diff_eq!(e.y_c, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.r_edge, 2.0, epsilon = 1e-12);
        assert_eq!(e.x_c_dw, Extended::PosInf);
        let e = dw_edge(&sc_def()).unwrap();
        assert_abs_diff_eq!(e.x_c_dw.to_f64(), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn branch_examples() {
        let m = d0();
        let e = dw_edge(&m).unwrap();
        let (g, gb) = dw_branches(&m, &e, 3.0).unwrap();
        assert_abs_diff_eq!(g, (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gb, (3.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
        let (g, gb) = dw_branches(&m, &e, 2.0).unwrap();
        assert_eq!((g, gb), (e.y_c, e.y_c));
    }

    #[test]
    fn rate_examples() {
        let m = d0();
        assert_abs_diff_eq!(dw_rate(&m, 3.0).unwrap().to_f64(), 0.7146273, epsilon = 1e-6);
        assert_abs_diff_eq!(dw_rate(&m, 3.0).unwrap().to_f64(), wigner_rate(3.0), epsilon = 1e-9);
        assert_eq!(dw_rate(&m, 2.0).unwrap(), Extended::Finite(0.0));
        assert_eq!(dw_rate(&m, 1.9).unwrap(), Extended::PosInf);
        let i50 = dw_rate(&m, 50.0).unwrap().to_f64();
        assert!((i50 / (2500.0 / 4.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn semicircle_density() {
        let m = d0();
        assert_abs_diff_eq!(free_convolution_density(&m, 0.0, 1e-4).unwrap(), 1.0 / std::f64::consts::PI, epsilon = 1e-3);
        assert!(free_convolution_density(&m, 3.0, 1e-4).unwrap() <= 1e-3);
        let two = DeformedWignerModel::real(SpectralMeasure::from_atoms(&[-1.0, 1.0], &[0.5, 0.5]).unwrap());
        for x in [0.3, 1.1, 2.0] {
            let a = free_convolution_density(&two, x, 1e-4).unwrap();
            let b = free_convolution_density(&two, -x, 1e-4).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn variational_agrees() {
        let m = d0();
        let e = dw_edge(&m).unwrap();
        let conv = free_convolution_measure(&m, 2000).unwrap();
        for x in [2.0, 2.5, 3.0] {
            let v = dw_rate_variational(&m, &e, &conv, x).unwrap();
            let p = dw_rate_with_edge(&m, &e, x).unwrap().to_f64();
            assert!((v.value - p).abs() <= 2e-3, "x={x}: {} vs {p}", v.value);
        }
    }

    #[test]
    fn cap_example() {
        let capped = dw_epsilon_cap(&sc_def(), 0.25).unwrap();
        assert!(capped.mu_d.atom_mass(1.0) > 0.0);
        assert_eq!(dw_edge(&capped).unwrap().x_c_dw, Extended::PosInf);
    }
}
