//! The Dyson equation `H_rho(G_sigma(x)) = x` for `H_N = (1/M) Z^T Gamma Z`:
//! the function `H_rho`, the thresholds `theta_max` and `x_c`, the right edge of the
//! limiting spectrum `sigma`, both real inverse branches, and the density of `sigma`
//! recovered by Stieltjes inversion.

use crate::error::{domain, Error, Result};
use crate::extended::Extended;
use crate::measures::{DensityInput, DensityKind, EdgeBehavior, Edges, SpectralMeasure};
use crate::roots::bisect;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Law of the entries of `Z`. Complex laws have independent real and imaginary
/// parts of variance 1/2 each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    #[default]
    Gaussian,
    Rademacher,
    UniformSqrt3,
    ComplexGaussian,
    ComplexRademacher,
}

impl EntryLaw {
    pub fn is_complex(self) -> bool {
        matches!(self, EntryLaw::ComplexGaussian | EntryLaw::ComplexRademacher)
    }

    pub fn is_gaussian(self) -> bool {
        matches!(self, EntryLaw::Gaussian | EntryLaw::ComplexGaussian)
    }
}

/// The ensemble `(rho, alpha, beta, entry law)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub rho: SpectralMeasure,
    pub alpha: f64,
    pub beta: u8,
    pub entry_law: EntryLaw,
}

impl CovarianceModel {
    pub fn new(rho: SpectralMeasure, alpha: f64, beta: u8, entry_law: EntryLaw) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidModel(format!("alpha = {alpha} must be positive and finite")));
        }
        match beta {
            1 if entry_law.is_complex() => {
                return Err(Error::InvalidModel("beta = 1 needs a real entry law".into()))
            }
            2 if !entry_law.is_complex() => {
                return Err(Error::InvalidModel("beta = 2 needs a complex entry law".into()))
            }
            1 | 2 => {}
            b => return Err(Error::InvalidModel(format!("beta = {b}; expected 1 or 2"))),
        }
        if !entry_law.is_gaussian() && rho.left() < 0.0 {
            return Err(Error::InvalidModel(format!(
                "non-Gaussian entries need rho supported in [0, inf); left edge is {}",
                rho.left()
            )));
        }
        Ok(CovarianceModel {
            rho,
            alpha,
            beta,
            entry_law,
        })
    }

    /// Real Gaussian model, the common case in tests and examples.
    pub fn real(rho: SpectralMeasure, alpha: f64) -> Result<Self> {
        Self::new(rho, alpha, 1, EntryLaw::Gaussian)
    }

    /// Same model with `rho` replaced by its reflection `u -> -u`. Its spectrum is
    /// the reflection of this model's spectrum.
    pub fn reflected(&self) -> Result<Self> {
        Ok(CovarianceModel {
            rho: self.rho.pushforward_scale(-1.0)?,
            alpha: self.alpha,
            beta: self.beta,
            entry_law: if self.entry_law.is_complex() {
                EntryLaw::ComplexGaussian
            } else {
                EntryLaw::Gaussian
            },
        })
    }

    fn r(&self) -> f64 {
        self.rho.right()
    }

    /// `alpha (1 - rho({0}))`: the effective aspect ratio after discarding null
    /// directions of `Gamma`.
    pub fn effective_alpha(&self) -> f64 {
        self.alpha * (1.0 - self.rho.atom_mass(0.0))
    }
}

/// Which of the three regimes of the second branch applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    PosEdgeInfiniteXc,
    PosEdgeFiniteXc,
    NonposEdge,
}

/// Solved edge quantities. For degenerate models only `theta_max` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeData {
    pub theta_max: Extended,
    pub x_c: Option<Extended>,
    pub theta_c: Option<f64>,
    pub r_sigma: Option<f64>,
    pub degenerate: bool,
    pub case_tag: Option<CaseTag>,
}

impl EdgeData {
    pub fn r_sigma(&self) -> Result<f64> {
        self.r_sigma.ok_or(Error::Degenerate)
    }
    pub fn theta_c(&self) -> Result<f64> {
        self.theta_c.ok_or(Error::Degenerate)
    }
    pub fn x_c(&self) -> Result<Extended> {
        self.x_c.ok_or(Error::Degenerate)
    }
}

/// `theta_max = alpha / r(rho)` when `r(rho) > 0`, else `+inf`.
pub fn theta_max(model: &CovarianceModel) -> Extended {
    let r = model.r();
    if r > 0.0 {
        Extended::Finite(model.alpha / r)
    } else {
        Extended::PosInf
    }
}

fn check_theta(model: &CovarianceModel, theta: f64, allow_endpoint: bool) -> Result<()> {
    let tm = theta_max(model).to_f64();
    let ok = theta > 0.0 && (theta < tm || (allow_endpoint && theta == tm));
    if ok {
        Ok(())
    } else {
        Err(domain("theta", theta, format!("in (0, {tm})")))
    }
}

fn h_sum(model: &CovarianceModel, theta: f64) -> f64 {
    let a = model.alpha;
    1.0 / theta + model.rho.integrate(|u| a * u / (a - theta * u))
}

/// `H_rho(theta) = 1/theta + int alpha u / (alpha - theta u) rho(du)` on
/// `(0, theta_max)`; also at `theta_max` when that value (`x_c`) is finite.
pub fn h_rho(model: &CovarianceModel, theta: f64) -> Result<f64> {
    let endpoint_ok = matches!(thresholds(model)?.x_c, Extended::Finite(_));
    check_theta(model, theta, endpoint_ok)?;
    Ok(h_sum(model, theta))
}

/// `f_rho(theta) = theta^2 H_rho'(theta) = -1 + alpha int u^2 theta^2 / (alpha - u theta)^2`.
pub fn f_rho(model: &CovarianceModel, theta: f64) -> Result<f64> {
    check_theta(model, theta, false)?;
    Ok(f_sum(model, theta))
}

fn f_sum(model: &CovarianceModel, theta: f64) -> f64 {
    let a = model.alpha;
    -1.0 + a * model.rho.integrate(|u| {
        let q = u * theta / (a - u * theta);
        q * q
    })
}

/// `theta_max` and `x_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub theta_max: Extended,
    pub x_c: Extended,
}

/// Computes `x_c = r^2 G_rho(r) + (1/alpha - 1) r` and cross-checks it against the
/// limit `H_rho(theta_max)` whenever it is finite.
pub fn thresholds(model: &CovarianceModel) -> Result<Thresholds> {
    let tm = theta_max(model);
    let r = model.r();
    let x_c = match tm {
        Extended::PosInf => Extended::PosInf,
        Extended::Finite(t) => match model.rho.stieltjes_at_or_above_edge(r)? {
            Extended::PosInf => Extended::PosInf,
            Extended::Finite(g) => {
                let formula = r * r * g + (1.0 / model.alpha - 1.0) * r;
                let limit = h_sum(model, t);
                if (formula - limit).abs() > 1e-8 * formula.abs().max(1.0) {
                    return Err(Error::EdgeIntegrability(format!(
                        "x_c formula gives {formula} but H(theta_max) gives {limit}"
                    )));
                }
                Extended::Finite(formula)
            }
        },
    };
    Ok(Thresholds { theta_max: tm, x_c })
}

/// True iff `r(rho) <= 0` and `alpha (1 - rho({0})) <= 1`.
pub fn detect_degenerate(model: &CovarianceModel) -> bool {
    model.r() <= 0.0 && model.effective_alpha() <= 1.0
}

/// Solves for `theta_c` (the minimizer of `H_rho` on `(0, theta_max)`) and
/// `r(sigma) = H_rho(theta_c)`.
pub fn edge_solve(model: &CovarianceModel) -> Result<EdgeData> {
    let th = thresholds(model)?;
    if detect_degenerate(model) {
        return Ok(EdgeData {
            theta_max: th.theta_max,
            x_c: None,
            theta_c: None,
            r_sigma: None,
            degenerate: true,
            case_tag: None,
        });
    }
    let f = |t: f64| f_sum(model, t);
    let (theta_c, case_tag) = match th.theta_max {
        Extended::Finite(tm) => {
            let finite_xc = th.x_c.is_finite();
            let near = tm * (1.0 - 1e-12);
            let tag = if finite_xc {
                CaseTag::PosEdgeFiniteXc
            } else {
                CaseTag::PosEdgeInfiniteXc
            };
            if finite_xc && f(near) < 0.0 {
                (tm, tag)
            } else {
                (bisect(f, 0.0, tm, true, 0.0), tag)
            }
        }
        Extended::PosInf => {
            let mut hi = 1.0 / model.alpha.max(1.0);
            let mut samples = Vec::new();
            let mut found = false;
            for _ in 0..200 {
                let v = f(hi);
                samples.push((hi, v));
                if v > 0.0 {
                    found = true;
                    break;
                }
                hi *= 2.0;
            }
            if !found {
                return Err(Error::Bracketing {
                    what: "f_rho root (theta_c)",
                    samples,
                });
            }
            (bisect(f, 0.0, hi, true, 0.0), CaseTag::NonposEdge)
        }
    };
    let r_sigma = if theta_c == th.theta_max.to_f64() {
        th.x_c.to_f64()
    } else {
        h_sum(model, theta_c)
    };
    Ok(EdgeData {
        theta_max: th.theta_max,
        x_c: Some(th.x_c),
        theta_c: Some(theta_c),
        r_sigma: Some(r_sigma),
        degenerate: false,
        case_tag: Some(case_tag),
    })
}

/// `G_sigma(x)`: the root of `H_rho(y) = x` in `(0, theta_c]`, for `x >= r(sigma)`.
pub fn g_sigma(edge: &EdgeData, model: &CovarianceModel, x: f64) -> Result<f64> {
    let r_sigma = edge.r_sigma()?;
    let theta_c = edge.theta_c()?;
    if x.is_nan() || x < r_sigma {
        return Err(domain("x", x, format!(">= r(sigma) = {r_sigma}")));
    }
    if x == r_sigma {
        return Ok(theta_c);
    }
    Ok(bisect(|y| h_sum(model, y) - x, 0.0, theta_c, false, 0.0))
}

/// The second branch `Gbar_sigma(x)`: root of `H_rho(y) = x` in `[theta_c, theta_max)`,
/// capped at `theta_max` for `x >= x_c`. When `r(rho) <= 0` the domain is
/// `[r(sigma), 0)` and the branch diverges as `x -> 0`.
pub fn g_bar_sigma(edge: &EdgeData, model: &CovarianceModel, x: f64) -> Result<f64> {
    let r_sigma = edge.r_sigma()?;
    let theta_c = edge.theta_c()?;
    let x_c = edge.x_c()?;
    let nonpos = edge.case_tag == Some(CaseTag::NonposEdge);
    if x.is_nan() || x < r_sigma || (nonpos && x >= 0.0) {
        let expected = if nonpos {
            format!("in [{r_sigma}, 0)")
        } else {
            format!(">= r(sigma) = {r_sigma}")
        };
        return Err(domain("x", x, expected));
    }
    if x == r_sigma {
        return Ok(theta_c);
    }
    match (edge.theta_max, x_c) {
        (Extended::Finite(tm), Extended::Finite(xc)) if x >= xc => Ok(tm),
        (Extended::Finite(tm), _) => Ok(bisect(|y| h_sum(model, y) - x, theta_c, tm, true, 0.0)),
        (Extended::PosInf, _) => {
            let mut hi = 2.0 * theta_c;
            let mut samples = Vec::new();
            loop {
                let v = h_sum(model, hi) - x;
                samples.push((hi, v));
                if v > 0.0 {
                    break;
                }
                if samples.len() > 1100 || !hi.is_finite() {
                    return Err(Error::Bracketing {
                        what: "second branch upper bracket",
                        samples,
                    });
                }
                hi *= 2.0;
            }
            Ok(bisect(|y| h_sum(model, y) - x, theta_c, hi, true, 0.0))
        }
    }
}

// --- Density of sigma ------------------------------------------------------

fn h_complex(model: &CovarianceModel, g: Complex64) -> (Complex64, Complex64) {
    let a = model.alpha;
    let mut h = g.inv();
    let mut dh = -(g * g).inv();
    let mut add = |u: f64, w: f64| {
        let d = (Complex64::new(a, 0.0) - g * u).inv();
        h += d * (a * u * w);
        dh += d * d * (a * u * u * w);
    };
    for atom in model.rho.atoms() {
        add(atom.location, atom.weight);
    }
    if let Some(d) = model.rho.density() {
        for (&u, &w) in d.nodes().iter().zip(d.weights()) {
            add(u, w);
        }
    }
    (h, dh)
}

/// Damped Newton for `F(g) = 0` restricted to the closed lower half-plane, where
/// `fun` returns `(F(g), F'(g))`. Steps are halved until `|F|` decreases.
pub(crate) fn damped_newton<F>(fun: F, z: Complex64, mut g: Complex64) -> Result<Complex64>
where
    F: Fn(Complex64) -> (Complex64, Complex64),
{
    let fail = |reason: &str| Error::NewtonDivergence {
        x: z.re,
        eta: z.im,
        reason: reason.into(),
    };
    let (mut val, mut der) = fun(g);
    let mut res = val.norm();
    for _ in 0..100 {
        if !res.is_finite() || der.norm() == 0.0 {
            return Err(fail("non-finite residual or derivative"));
        }
        let step = val / der;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = g - step * t;
            if cand.im <= 0.0 && cand.im.is_finite() {
                let (vc, dc) = fun(cand);
                let rc = vc.norm();
                if rc < res || rc <= 1e-15 * z.norm().max(1.0) {
                    g = cand;
                    val = vc;
                    der = dc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || (step * t).norm() <= 1e-15 * g.norm() {
            return Ok(g);
        }
    }
    Ok(g)
}

/// Tracks a Stieltjes transform from `x + 10 i scale`, where `G ~ 1/z` selects the
/// right root, down to `x + i eta`, halving the imaginary part at each stage.
/// `solve(z, seed)` refines the root at `z`; `residual(z, g)` measures it.
pub(crate) fn eta_continuation<S, R>(x: f64, eta: f64, scale: f64, solve: S, residual: R) -> Result<Complex64>
where
    S: Fn(Complex64, Complex64) -> Result<Complex64>,
    R: Fn(Complex64, Complex64) -> f64,
{
    if !(eta > 0.0) {
        return Err(domain("eta", eta, "> 0"));
    }
    let mut e = 10.0 * scale;
    let z0 = Complex64::new(x, e);
    let mut g = solve(z0, z0.inv())?;
    while e > eta {
        e = (e * 0.5).max(eta);
        g = solve(Complex64::new(x, e), g)?;
    }
    let z = Complex64::new(x, eta);
    let res = residual(z, g);
    if g.im > 0.0 || !(res <= 1e-8 * z.norm().max(1.0)) {
        return Err(Error::NewtonDivergence {
            x,
            eta,
            reason: format!("residual {res:e} after continuation"),
        });
    }
    Ok(g)
}

/// Stieltjes transform of `sigma` at `x + i eta`, solving `H_rho(g) = z`.
pub fn sigma_stieltjes(model: &CovarianceModel, x: f64, eta: f64) -> Result<Complex64> {
    let (l, r) = model.rho.edges();
    let scale = 1.0 + x.abs() + l.abs().max(r.abs()) * (1.0 + 1.0 / model.alpha);
    eta_continuation(
        x,
        eta,
        scale,
        |z, seed| {
            damped_newton(
                |g| {
                    let (h, dh) = h_complex(model, g);
                    (h - z, dh)
                },
                z,
                seed,
            )
        },
        |z, g| (h_complex(model, g).0 - z).norm(),
    )
}

/// Density of `sigma` smoothed at scale `eta`: `-Im G_sigma(x + i eta) / pi`.
pub fn sigma_density(model: &CovarianceModel, x: f64, eta: f64) -> Result<f64> {
    let g = sigma_stieltjes(model, x, eta)?;
    Ok((-g.im / std::f64::consts::PI).max(0.0))
}

/// Atom of `sigma` at 0: `max(0, 1 - alpha (1 - rho({0})))`.
pub fn sigma_zero_atom(model: &CovarianceModel) -> f64 {
    (1.0 - model.effective_alpha()).max(0.0)
}

/// Support edges `(l(sigma), r(sigma))` of the limiting spectrum.
pub fn sigma_edges(model: &CovarianceModel) -> Result<(f64, f64)> {
    let edge = edge_solve(model)?;
    let r = edge.r_sigma()?;
    let refl = model.reflected()?;
    let left = match edge_solve(&refl)? {
        e if e.degenerate => 0.0,
        e => -e.r_sigma()?,
    };
    Ok((left.min(r), r))
}

/// Parameters of the grid used by [`sigma_measure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaGrid {
    /// Total number of quadrature nodes across the support intervals.
    pub points: usize,
    /// Smoothing scale relative to the support span.
    pub eta_rel: f64,
    /// Samples used to detect gaps in the support.
    pub gap_samples: usize,
}

impl Default for SigmaGrid {
    fn default() -> Self {
        SigmaGrid {
            points: 2000,
            eta_rel: 1e-12,
            gap_samples: 400,
        }
    }
}

/// `sigma` as a [`SpectralMeasure`] together with the raw mass defect of its grid.
#[derive(Debug, Clone)]
pub struct SigmaMeasure {
    pub measure: SpectralMeasure,
    /// `|raw grid mass + atom mass - 1|` before renormalization.
    pub mass_defect: f64,
    pub intervals: Vec<(f64, f64)>,
    pub eta: f64,
}

/// Discretizes `sigma` on its support: the atom at 0 (if any) plus a density on the
/// detected support intervals, renormalized to total mass 1.
pub fn sigma_measure(model: &CovarianceModel, grid: SigmaGrid) -> Result<SigmaMeasure> {
    if detect_degenerate(model) {
        return Err(Error::Degenerate);
    }
    let (left, right) = sigma_edges(model)?;
    let span = right - left;
    if !(span > 0.0) {
        return Err(Error::GridQuality {
            defect: 1.0,
            limit: 1e-3,
        });
    }
    let eta = grid.eta_rel * span;
    let atom = sigma_zero_atom(model);
    let shared = Arc::new(model.clone());
    let m = shared.clone();
    let density = move |x: f64| -> Result<f64> {
        let g = sigma_stieltjes(&m, x, eta)?;
        // Remove the zero atom's Lorentzian so it cannot leak into the continuous part.
        let z = Complex64::new(x, eta);
        let cont = g - z.inv() * atom;
        Ok((-cont.im / std::f64::consts::PI).max(0.0))
    };

    let intervals = support_intervals(&density, left, right, grid.gap_samples)?;
    let hard_left = atom == 0.0 && left == 0.0 && model.effective_alpha() == 1.0;
    let per = (grid.points / intervals.len()).max(16);
    let eval_model = shared;
    let input = DensityInput {
        kind: DensityKind::Custom {
            label: "limiting spectral density".into(),
        },
        evaluator: Arc::new(move |x| {
            let g = sigma_stieltjes(&eval_model, x, eta).unwrap_or(Complex64::new(0.0, 0.0));
            let z = Complex64::new(x, eta);
            (-(g - z.inv() * atom).im / std::f64::consts::PI).max(0.0)
        }),
        intervals: intervals.clone(),
        nodes_per_interval: per,
        edges: Edges {
            left: if hard_left {
                EdgeBehavior::Divergent
            } else {
                EdgeBehavior::Integrable
            },
            right: EdgeBehavior::Integrable,
        },
    };
    let (locs, ws): (Vec<f64>, Vec<f64>) = if atom > 1e-14 { (vec![0.0], vec![atom]) } else { (vec![], vec![]) };
    let measure = SpectralMeasure::mixture(&locs, &ws, Some(input))?;
    let raw = measure.quadrature_report().map_or(0.0, |r| r.raw_mass);
    let mass_defect = (raw + if atom > 1e-14 { atom } else { 0.0 } - 1.0).abs();
    Ok(SigmaMeasure {
        measure,
        mass_defect,
        intervals,
        eta,
    })
}

/// Splits `[left, right]` into the intervals where `density` is positive. The
/// density is sampled at `samples` midpoints; runs below `1e-6` of the peak are
/// gaps, and each inner boundary is refined by bisection.
pub(crate) fn support_intervals<F>(density: &F, left: f64, right: f64, samples: usize) -> Result<Vec<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64>,
{
    let span = right - left;
    let ns = samples.max(8);
    let xs: Vec<f64> = (0..ns).map(|i| left + span * (i as f64 + 0.5) / ns as f64).collect();
    let mut vals = Vec::with_capacity(ns);
    for &x in &xs {
        vals.push(density(x)?);
    }
    let peak = vals.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::GridQuality {
            defect: 1.0,
            limit: 1e-3,
        });
    }
    let thr = 1e-6 * peak;
    let refine = |mut inside: f64, mut outside: f64| -> Result<f64> {
        for _ in 0..60 {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if density(mid)? > thr {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(0.5 * (inside + outside))
    };
    let mut intervals = Vec::new();
    let mut i = 0;
    while i < ns {
        if vals[i] <= thr {
            i += 1;
            continue;
        }
        let start = if i == 0 { left } else { refine(xs[i], xs[i - 1])? };
        let mut j = i;
        while j + 1 < ns && vals[j + 1] > thr {
            j += 1;
        }
        let end = if j == ns - 1 { right } else { refine(xs[j], xs[j + 1])? };
        intervals.push((start, end));
        i = j + 1;
    }
    Ok(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn atom_model(loc: f64, alpha: f64) -> CovarianceModel {
        CovarianceModel::real(SpectralMeasure::dirac(loc), alpha).unwrap()
    }

    fn semicircle_model() -> CovarianceModel {
        CovarianceModel::real(SpectralMeasure::semicircle(2.0, 1.0, 512).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn model_validation() {
        let d = SpectralMeasure::dirac(-1.0);
        assert!(CovarianceModel::real(d.clone(), 0.0).is_err());
        assert!(CovarianceModel::new(d.clone(), 1.0, 1, EntryLaw::Rademacher).is_err());
        assert!(CovarianceModel::new(d.clone(), 1.0, 2, EntryLaw::Gaussian).is_err());
        assert!(CovarianceModel::new(d.clone(), 1.0, 1, EntryLaw::ComplexGaussian).is_err());
        assert!(CovarianceModel::new(d, 1.0, 2, EntryLaw::ComplexGaussian).is_ok());
    }

    #[test]
    fn h_examples() {
        assert_abs_diff_eq!(h_rho(&atom_model(1.0, 1.0), 0.5).unwrap(), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h_rho(&atom_model(-1.0, 2.0), 1.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let sc = semicircle_model();
        assert_abs_diff_eq!(h_rho(&sc, 1.0 / 3.0).unwrap(), 18.0, epsilon = 1e-4);
        assert_abs_diff_eq!(h_rho(&sc, 1.0 / 3.0 - 1e-13).unwrap(), 18.0, epsilon = 1e-4);
        assert!(h_rho(&atom_model(1.0, 1.0), 1.0).is_err());
        assert!(h_rho(&atom_model(1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let t = thresholds(&atom_model(1.0, 2.0)).unwrap();
        assert_eq!(t.theta_max, Extended::Finite(2.0));
        assert_eq!(t.x_c, Extended::PosInf);
        let t = thresholds(&atom_model(-1.0, 1.0)).unwrap();
        assert_eq!(t.theta_max, Extended::PosInf);
        assert_eq!(t.x_c, Extended::PosInf);
        let t = thresholds(&semicircle_model()).unwrap();
        assert_abs_diff_eq!(t.theta_max.to_f64(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.x_c.to_f64(), 18.0, epsilon = 1e-4);
    }

    #[test]
    fn degeneracy_examples() {
        assert!(detect_degenerate(&atom_model(-1.0, 0.5)));
        assert!(!detect_degenerate(&atom_model(-1.0, 2.0)));
        assert!(!detect_degenerate(&atom_model(1.0, 0.5)));
        let e = edge_solve(&atom_model(-1.0, 0.5)).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.r_sigma, None);
        assert_eq!(e.theta_max, Extended::PosInf);
    }

    #[test]
    fn edge_examples() {
        let e = edge_solve(&atom_model(1.0, 1.0)).unwrap();
        assert_eq!(e.theta_c, Some(0.5));
        assert_eq!(e.r_sigma, Some(4.0));
        assert_eq!(e.case_tag, Some(CaseTag::PosEdgeInfiniteXc));
        let e = edge_solve(&atom_model(1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(e.r_sigma.unwrap(), (1.0 + 0.5f64.sqrt()).powi(2), epsilon = 1e-12);
        let e = edge_solve(&atom_model(-1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(e.theta_c.unwrap(), 2.0 * (1.0 + 2f64.sqrt()), epsilon = 1e-10);
        assert_abs_diff_eq!(e.r_sigma.unwrap(), -(1.0 - 0.5f64.sqrt()).powi(2), epsilon = 1e-12);
        assert_eq!(e.case_tag, Some(CaseTag::NonposEdge));
    }

    #[test]
    fn branch_examples() {
        let m = atom_model(1.0, 1.0);
        let e = edge_solve(&m).unwrap();
        assert_eq!(g_sigma(&e, &m, 4.0).unwrap(), 0.5);
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(g_sigma(&e, &m, 5.0).unwrap(), (5.0 - s5) / 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g_bar_sigma(&e, &m, 5.0).unwrap(), (5.0 + s5) / 10.0, epsilon = 1e-12);
        let g100 = g_sigma(&e, &m, 100.0).unwrap();
        assert!((g100 * 100.0 - 1.0).abs() < 0.02);
        assert!(g_sigma(&e, &m, 3.9).is_err());

        let sc = semicircle_model();
        let e = edge_solve(&sc).unwrap();
        assert_eq!(g_bar_sigma(&e, &sc, 25.0).unwrap(), 1.0 / 3.0);

        let neg = atom_model(-1.0, 2.0);
        let e = edge_solve(&neg).unwrap();
        let a = g_bar_sigma(&e, &neg, -0.05).unwrap();
        let b = g_bar_sigma(&e, &neg, -0.01).unwrap();
        assert!(a > e.theta_c.unwrap() && b > a);
        assert!(g_bar_sigma(&e, &neg, 0.0).is_err());
    }

    #[test]
    fn mp_density() {
        let m = atom_model(1.0, 1.0);
        let d = sigma_density(&m, 2.0, 1e-4).unwrap();
        assert_abs_diff_eq!(d, 1.0 / (2.0 * std::f64::consts::PI), epsilon = 1e-3);
        assert!(sigma_density(&m, 5.0, 1e-4).unwrap() <= 1e-3);
        assert!(sigma_density(&m, 2.0, 0.0).is_err());
    }

    #[test]
    fn mp_sigma_measure() {
        let m = atom_model(1.0, 1.0);
        let s = sigma_measure(&m, SigmaGrid::default()).unwrap();
        assert!(s.mass_defect < 1e-3, "defect {}", s.mass_defect);
        assert_abs_diff_eq!(s.measure.total_mass(), 1.0, epsilon = 1e-12);
        assert_eq!(s.intervals.len(), 1);
        // alpha = 2: support [(1 - 1/sqrt 2)^2, (1 + 1/sqrt 2)^2], no atom.
        let m = atom_model(1.0, 2.0);
        let s = sigma_measure(&m, SigmaGrid::default()).unwrap();
        assert_abs_diff_eq!(s.intervals[0].0, (1.0 - 0.5f64.sqrt()).powi(2), epsilon = 1e-10);
        assert!(s.mass_defect < 1e-6);
        // alpha = 1/2: atom 1/2 at 0 and a gap up to (1 - sqrt 2)^2.
        let m = atom_model(1.0, 0.5);
        let s = sigma_measure(&m, SigmaGrid::default()).unwrap();
        assert_abs_diff_eq!(s.measure.atom_mass(0.0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.intervals[0].0, (1.0 - 2f64.sqrt()).powi(2), epsilon = 1e-8);
        assert!(s.mass_defect < 1e-6, "defect {}", s.mass_defect);
    }
}
