//! Rate functions for the largest eigenvalue: the primal integral of the gap
//! between the two Stieltjes branches, its variational form through `J` and `F`,
//! the degenerate 0/inf rate, and the edge-truncation approximation.

use crate::dyson::{edge_solve, g_bar_sigma, g_sigma, CaseTag, CovarianceModel, EdgeData, SigmaMeasure};
use crate::error::{domain, Error, Result};
use crate::extended::Extended;
use crate::measures::SpectralMeasure;
use crate::quad::integrate;
use crate::roots::golden_max;
use rayon::prelude::*;
use std::io::Write;

/// Absolute tolerance of the adaptive quadrature for `I`.
pub const RATE_ABS_TOL: f64 = 1e-11;
const RATE_REL_TOL: f64 = 1e-13;

fn beta_factor(model: &CovarianceModel) -> f64 {
    f64::from(model.beta) / 2.0
}

/// `Gbar_sigma(x) - G_sigma(x)`.
pub fn branch_gap(edge: &EdgeData, model: &CovarianceModel, x: f64) -> Result<f64> {
    Ok(g_bar_sigma(edge, model, x)? - g_sigma(edge, model, x)?)
}

/// `int_{a}^{b} (Gbar - G)` for `r(sigma) <= a <= b`, computed in the variable
/// `s = sqrt(u - r(sigma))` so the square-root onset at the edge becomes linear,
/// and split at `x_c` where `Gbar` has a kink.
fn gap_integral(edge: &EdgeData, model: &CovarianceModel, a: f64, b: f64) -> Result<f64> {
    let r = edge.r_sigma()?;
    if b <= a {
        return Ok(0.0);
    }
    let sa = (a - r).max(0.0).sqrt();
    let sb = (b - r).max(0.0).sqrt();
    let mut cuts = vec![sa];
    if let Some(Extended::Finite(xc)) = edge.x_c {
        if xc > a && xc < b {
            cuts.push((xc - r).sqrt());
        }
    }
    cuts.push(sb);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let mut failure = None;
        let res = integrate(
            |s| {
                let u = (r + s * s).min(b).max(a);
                match branch_gap(edge, model, u) {
                    Ok(v) => 2.0 * s * v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            w[0],
            w[1],
            RATE_ABS_TOL,
            RATE_REL_TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        total += res?.value;
    }
    Ok(total)
}

/// `I_sigma(x) = (beta/2) int_{r(sigma)}^x (Gbar_sigma - G_sigma)`, `+inf` outside
/// the domain.
pub fn rate(model: &CovarianceModel, x: f64) -> Result<Extended> {
    let edge = edge_solve(model)?;
    rate_with_edge(model, &edge, x)
}

/// [`rate`] with a precomputed [`EdgeData`].
pub fn rate_with_edge(model: &CovarianceModel, edge: &EdgeData, x: f64) -> Result<Extended> {
    if edge.degenerate {
        return Err(Error::Degenerate);
    }
    let r = edge.r_sigma()?;
    if x.is_nan() {
        return Err(domain("x", x, "a number"));
    }
    if x < r || (edge.case_tag == Some(CaseTag::NonposEdge) && x >= 0.0) {
        return Ok(Extended::PosInf);
    }
    Ok(Extended::Finite(beta_factor(model) * gap_integral(edge, model, r, x)?))
}

/// Rate of a degenerate model: 0 at `x = 0`, `+inf` elsewhere.
pub fn rate_degenerate(x: f64) -> Extended {
    if x == 0.0 {
        Extended::Finite(0.0)
    } else {
        Extended::PosInf
    }
}

/// The auxiliary `v(mu, theta, lambda)`.
pub fn v_fn(mu: &SpectralMeasure, theta: f64, lambda: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(domain("theta", theta, "> 0"));
    }
    if lambda < mu.right() {
        return Err(domain("lambda", lambda, format!(">= r(mu) = {}", mu.right())));
    }
    let g = mu.stieltjes_at_or_above_edge(lambda)?;
    let two = 2.0 * theta;
    if g.to_f64() <= two {
        Ok(lambda - 1.0 / two)
    } else {
        let k = mu.inverse_stieltjes(two)?;
        assert!(k >= lambda, "G^-1(2 theta) = {k} must lie at or beyond lambda = {lambda}");
        Ok(k - 1.0 / two)
    }
}

/// `J(mu, theta, lambda) = theta v - (1/2) int log(1 + 2 theta v - 2 theta y) mu(dy)`.
pub fn j_fn(mu: &SpectralMeasure, theta: f64, lambda: f64) -> Result<f64> {
    if theta == 0.0 {
        if lambda < mu.right() {
            return Err(domain("lambda", lambda, format!(">= r(mu) = {}", mu.right())));
        }
        return Ok(0.0);
    }
    let v = v_fn(mu, theta, lambda)?;
    let two = 2.0 * theta;
    let bad = std::cell::Cell::new(None);
    let s = mu.integrate(|y| {
        let arg = 1.0 + two * v - two * y;
        if !(arg > 0.0) && bad.get().is_none() {
            bad.set(Some((y, arg)));
        }
        arg.ln()
    });
    if let Some((node, value)) = bad.get() {
        return Err(Error::LogArgument { node, value });
    }
    Ok(theta * v - 0.5 * s)
}

/// `F(rho, theta) = -(alpha/2) int log(1 - theta t / alpha) rho(dt)` for
/// `0 <= theta < theta_max`.
pub fn f_fn(model: &CovarianceModel, theta: f64) -> Result<f64> {
    let tm = crate::dyson::theta_max(model).to_f64();
    if !(theta >= 0.0 && theta < tm) {
        return Err(domain("theta", theta, format!("in [0, {tm})")));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let a = model.alpha;
    Ok(-0.5 * a * model.rho.integrate(|t| (-theta * t / a).ln_1p()))
}

/// `I_sigma(x, theta) = J(sigma, theta/2, x) - F(rho, theta)`, times `beta/2 * 2`
/// for complex models.
pub fn rate_at_theta(model: &CovarianceModel, sigma: &SpectralMeasure, x: f64, theta: f64) -> Result<f64> {
    let j = j_fn(sigma, theta / 2.0, x)?;
    let f = f_fn(model, theta)?;
    Ok(f64::from(model.beta) * (j - f))
}

/// Outcome of [`rate_variational`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variational {
    /// `I_sigma(x, theta_x)`.
    pub value: f64,
    /// The optimizer `Gbar_sigma(x)`.
    pub theta_x: f64,
    /// Largest value found by the scan.
    pub scan_max: f64,
    /// Where the scan found it.
    pub scan_argmax: f64,
    /// Raw mass defect of the `sigma` grid.
    pub mass_defect: f64,
}

/// Grid mass defect above which the variational form is refused.
pub const MAX_MASS_DEFECT: f64 = 1e-3;
/// Slack allowed between the scanned supremum and the value at the optimizer.
pub const SUPREMUM_TOL: f64 = 1e-4;

/// Evaluates the variational form at `theta_x = Gbar_sigma(x)` and checks with a
/// 50-point logarithmic scan plus golden-section refinement that no other `theta`
/// gives a larger value.
pub fn rate_variational(
    model: &CovarianceModel,
    edge: &EdgeData,
    sigma: &SigmaMeasure,
    x: f64,
) -> Result<Variational> {
    if sigma.mass_defect > MAX_MASS_DEFECT {
        return Err(Error::GridQuality {
            defect: sigma.mass_defect,
            limit: MAX_MASS_DEFECT,
        });
    }
    let r = edge.r_sigma()?;
    if x < r {
        return Err(domain("x", x, format!(">= r(sigma) = {r}")));
    }
    let theta_x = g_bar_sigma(edge, model, x)?;
    let mu = &sigma.measure;
    let tm = edge.theta_max.to_f64();
    let at = |t: f64| rate_at_theta(model, mu, x, t);
    let value = if theta_x >= tm {
        // Capped branch: approach theta_max from below.
        at(tm * (1.0 - 1e-12))?
    } else {
        at(theta_x)?
    };
    let lo = theta_x * 1e-3;
    let hi = if tm.is_finite() { tm * (1.0 - 1e-9) } else { theta_x * 1e3 };
    let n = 50;
    let grid: Vec<f64> = (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect();
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
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(n - 1)];
        let (t, v) = golden_max(|t| at(t).unwrap_or(f64::NEG_INFINITY), a, b, 60);
        if v > best.1 {
            best = (t, v);
        }
    }
    let tol = SUPREMUM_TOL * value.abs().max(1.0);
    if best.1 > value + tol {
        return Err(Error::SupremumViolation {
            theta: best.0,
            scan: best.1,
            value,
            tol,
        });
    }
    Ok(Variational {
        value,
        theta_x,
        scan_max: best.1,
        scan_argmax: best.0,
        mass_defect: sigma.mass_defect,
    })
}

/// Tabulated `(x, G, Gbar, I)` on an evenly spaced grid starting at `r(sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub gbar: Vec<f64>,
    pub i: Vec<f64>,
    pub beta: u8,
    pub edge: EdgeData,
}

/// Rate table on `points` evenly spaced points of `[r(sigma), x_max]`.
pub fn rate_table(model: &CovarianceModel, x_max: f64, points: usize) -> Result<RateTable> {
    let edge = edge_solve(model)?;
    let r = edge.r_sigma()?;
    if !(x_max > r) {
        return Err(domain("x_max", x_max, format!("> r(sigma) = {r}")));
    }
    if edge.case_tag == Some(CaseTag::NonposEdge) && x_max >= 0.0 {
        return Err(domain("x_max", x_max, "< 0 (the rate is infinite from 0 on)"));
    }
    if points < 2 {
        return Err(domain("points", points as f64, ">= 2"));
    }
    let x: Vec<f64> = (0..points)
        .map(|k| if k == points - 1 { x_max } else { r + (x_max - r) * k as f64 / (points - 1) as f64 })
        .collect();
    rate_table_on(model, &edge, &x)
}

/// Rate table on a caller-supplied increasing grid with `x[0] >= r(sigma)`.
pub fn rate_table_on(model: &CovarianceModel, edge: &EdgeData, x: &[f64]) -> Result<RateTable> {
    let r = edge.r_sigma()?;
    if x.is_empty() || x[0] < r || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("grid", x.first().copied().unwrap_or(f64::NAN), format!("increasing, starting at or above {r}")));
    }
    let bf = beta_factor(model);
    let cells: Vec<f64> = std::iter::once((r, x[0]))
        .chain(x.windows(2).map(|w| (w[0], w[1])))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(a, b)| gap_integral(edge, model, a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut i = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for c in cells {
        acc += c;
        i.push(bf * acc);
    }
    let branches: Vec<(f64, f64)> = x
        .par_iter()
        .map(|&u| Ok((g_sigma(edge, model, u)?, g_bar_sigma(edge, model, u)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable {
        x: x.to_vec(),
        g: branches.iter().map(|b| b.0).collect(),
        gbar: branches.iter().map(|b| b.1).collect(),
        i,
        beta: model.beta,
        edge: *edge,
    })
}

impl RateTable {
    /// Monotone cubic interpolation of `I` using the exact slopes
    /// `(beta/2)(Gbar - G)`, limited so the interpolant never leaves the
    /// range of neighbouring values.
    pub fn interpolate(&self, x: f64) -> Extended {
        let n = self.x.len();
        if x < self.x[0] || x > self.x[n - 1] || x.is_nan() {
            return Extended::PosInf;
        }
        let k = self.x.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let (y0, y1) = (self.i[k - 1], self.i[k]);
        let h = x1 - x0;
        let bf = f64::from(self.beta) / 2.0;
        let delta = (y1 - y0) / h;
        let mut m0 = bf * (self.gbar[k - 1] - self.g[k - 1]);
        let mut m1 = bf * (self.gbar[k] - self.g[k]);
        if delta <= 0.0 {
            m0 = 0.0;
            m1 = 0.0;
        } else {
            let a = m0 / delta;
            let b = m1 / delta;
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m0 = t * a * delta;
                m1 = t * b * delta;
            }
        }
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        Extended::Finite(
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + t) * h * m0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * h * m1,
        )
    }

    /// CSV with header `x,G,Gbar,I`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,G,Gbar,I")?;
        for k in 0..self.x.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.x[k], self.g[k], self.gbar[k], self.i[k]
            )?;
        }
        Ok(())
    }
}

/// Model with `rho` replaced by its edge truncation.
pub fn truncated_model(model: &CovarianceModel, eps: f64) -> Result<(CovarianceModel, f64, bool)> {
    let t = model.rho.epsilon_truncate(eps)?;
    let m = CovarianceModel {
        rho: t.measure,
        ..model.clone()
    };
    Ok((m, t.epsilon, t.nudged))
}

/// One truncation level of an [`ApproxSweep`].
#[derive(Debug, Clone)]
pub struct ApproxLevel {
    /// Requested truncation width.
    pub eps: f64,
    /// Width actually used after atom avoidance.
    pub eps_used: f64,
    pub nudged: bool,
    pub r_sigma: f64,
    /// `I^eps` on the sweep grid; `+inf` below `r(sigma^eps)`.
    pub rate: Vec<Extended>,
    /// `sup |I^eps - I|` over the grid.
    pub sup_error: Extended,
    /// `max (I^eps - I)` over grid points where `I^eps` is finite.
    pub max_excess: f64,
}

/// Truncated rate functions compared against the untruncated one.
#[derive(Debug, Clone)]
pub struct ApproxSweep {
    pub x: Vec<f64>,
    pub rate: Vec<f64>,
    pub r_sigma: f64,
    pub levels: Vec<ApproxLevel>,
}

fn rate_on_grid(model: &CovarianceModel, edge: &EdgeData, x: &[f64]) -> Result<Vec<Extended>> {
    let r = edge.r_sigma()?;
    let first = x.partition_point(|&v| v < r);
    let mut out = vec![Extended::PosInf; first];
    if first < x.len() {
        let t = rate_table_on(model, edge, &x[first..])?;
        out.extend(t.i.into_iter().map(Extended::Finite));
    }
    Ok(out)
}

/// Computes `I^eps` for each truncation level on `x_grid` and compares with `I`.
pub fn approx_sweep(model: &CovarianceModel, eps_list: &[f64], x_grid: &[f64]) -> Result<ApproxSweep> {
    let edge = edge_solve(model)?;
    let r = edge.r_sigma()?;
    let exact = rate_on_grid(model, &edge, x_grid)?;
    let exact: Vec<f64> = exact
        .iter()
        .map(|v| v.finite().ok_or_else(|| domain("x_grid", x_grid[0], format!(">= r(sigma) = {r}"))))
        .collect::<Result<_>>()?;
    let mut levels = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let (m, eps_used, nudged) = truncated_model(model, eps)?;
        let e = edge_solve(&m)?;
        let rate = rate_on_grid(&m, &e, x_grid)?;
        let mut sup = 0.0f64;
        let mut excess = f64::NEG_INFINITY;
        let mut infinite = false;
        for (a, &b) in rate.iter().zip(&exact) {
            match a {
                Extended::Finite(v) => {
                    sup = sup.max((v - b).abs());
                    excess = excess.max(v - b);
                }
                Extended::PosInf => infinite = true,
            }
        }
        levels.push(ApproxLevel {
            eps,
            eps_used,
            nudged,
            r_sigma: e.r_sigma()?,
            rate,
            sup_error: if infinite { Extended::PosInf } else { Extended::Finite(sup) },
            max_excess: excess,
        });
    }
    Ok(ApproxSweep {
        x: x_grid.to_vec(),
        rate: exact,
        r_sigma: r,
        levels,
    })
}

impl ApproxSweep {
    /// CSV with header `eps,r_sigma_eps,sup_error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eps,r_sigma_eps,sup_error")?;
        for l in &self.levels {
            let sup = match l.sup_error {
                Extended::Finite(v) => format!("{v:.16e}"),
                Extended::PosInf => "inf".into(),
            };
            writeln!(w, "{:.16e},{:.16e},{}", l.eps_used, l.r_sigma, sup)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyson::{sigma_measure, SigmaGrid};
    use approx::assert_abs_diff_eq;

    fn wishart(alpha: f64) -> CovarianceModel {
        CovarianceModel::real(SpectralMeasure::dirac(1.0), alpha).unwrap()
    }

    /// Closed form for the single-atom model with alpha = 1: half of
    /// `int_4^x sqrt(1 - 4/u) du = 4t/(1 - t^2) - 4 atanh(t)`, `t = sqrt(1 - 4/x)`.
    fn mp_rate(x: f64) -> f64 {
        let t = (1.0 - 4.0 / x).sqrt();
        2.0 * t / (1.0 - t * t) - 2.0 * t.atanh()
    }

    #[test]
    fn rate_examples() {
        let m = wishart(1.0);
        assert_eq!(rate(&m, 4.0).unwrap(), Extended::Finite(0.0));
        assert_abs_diff_eq!(rate(&m, 5.0).unwrap().to_f64(), 0.1556103, epsilon = 1e-6);
        assert_abs_diff_eq!(rate(&m, 5.0).unwrap().to_f64(), mp_rate(5.0), epsilon = 1e-9);
        assert_eq!(rate(&m, 3.0).unwrap(), Extended::PosInf);
        let c = CovarianceModel::new(SpectralMeasure::dirac(1.0), 1.0, 2, crate::EntryLaw::ComplexGaussian).unwrap();
        assert_eq!(rate(&c, 5.0).unwrap().to_f64(), 2.0 * rate(&m, 5.0).unwrap().to_f64());
    }

    #[test]
    fn degenerate_rate() {
        assert_eq!(rate_degenerate(0.0), Extended::Finite(0.0));
        assert_eq!(rate_degenerate(0.3), Extended::PosInf);
        assert_eq!(rate_degenerate(-0.3), Extended::PosInf);
        let m = CovarianceModel::real(SpectralMeasure::dirac(-1.0), 0.5).unwrap();
        assert!(matches!(rate(&m, -0.1), Err(Error::Degenerate)));
    }

    #[test]
    fn j_examples() {
        let d0 = SpectralMeasure::dirac(0.0);
        assert_eq!(j_fn(&d0, 0.0, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(j_fn(&d0, 1.0, 2.0).unwrap(), 1.5 - 0.5 * 4f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(v_fn(&d0, 0.2, 2.0).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn f_examples() {
        assert_abs_diff_eq!(f_fn(&wishart(1.0), 0.5).unwrap(), -0.5 * 0.5f64.ln(), epsilon = 1e-15);
        assert_eq!(f_fn(&wishart(1.0), 0.0).unwrap(), 0.0);
        let neg = CovarianceModel::real(SpectralMeasure::dirac(-1.0), 2.0).unwrap();
        assert_abs_diff_eq!(f_fn(&neg, 1.0).unwrap(), -(1.5f64.ln()), epsilon = 1e-15);
        assert!(f_fn(&wishart(1.0), 1.0).is_err());
    }

    #[test]
    fn variational_matches_primal() {
        let m = wishart(1.0);
        let e = edge_solve(&m).unwrap();
        let s = sigma_measure(&m, SigmaGrid::default()).unwrap();
        let v4 = rate_variational(&m, &e, &s, 4.0).unwrap();
        assert!(v4.value.abs() < 2e-3, "{v4:?}");
        let v5 = rate_variational(&m, &e, &s, 5.0).unwrap();
        assert!((v5.value - 0.15561).abs() < 2e-3, "{v5:?}");
    }

    #[test]
    fn table_invariants() {
        let m = wishart(1.0);
        let t = rate_table(&m, 6.0, 100).unwrap();
        assert_eq!(t.i[0], 0.0);
        assert_eq!(t.x[0], 4.0);
        for w in t.i.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
        }
        assert_abs_diff_eq!(t.interpolate(5.0).to_f64(), mp_rate(5.0), epsilon = 1e-6);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,G,Gbar,I\n"));
        assert_eq!(text.lines().count(), 101);
    }

    #[test]
    fn truncation_noop_for_atoms() {
        let m = wishart(1.0);
        let grid: Vec<f64> = (0..5).map(|k| 4.5 + k as f64).collect();
        let sweep = approx_sweep(&m, &[0.3], &grid).unwrap();
        assert_eq!(sweep.levels[0].sup_error, Extended::Finite(0.0));
    }
}
