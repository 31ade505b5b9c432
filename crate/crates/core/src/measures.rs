//! Compactly supported probability measures on the real line: finitely many atoms
//! plus an optional absolutely continuous part stored as fixed quadrature nodes.
//!
//! The continuous part keeps its density evaluator (for exact CDFs and quantiles)
//! alongside a node/weight discretization used for every integral transform. Nodes
//! come from [`graded_cos_rule`], which clusters them at the support edges.

use crate::error::{domain, Error, Result};
use crate::extended::Extended;
use crate::quad::{graded_cos_rule, Rule};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Mass tolerance for constructor outputs.
pub const MASS_TOL: f64 = 1e-12;
/// Relative distance under which two atom locations are merged.
pub const MERGE_TOL: f64 = 1e-14;
/// Raw quadrature mass deviations above this are reported as renormalizations.
pub const RENORMALIZATION_REPORT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Whether `int p(u) / |edge - u| du` is finite at a support endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeBehavior {
    Integrable,
    Divergent,
}

impl EdgeBehavior {
    fn from_flag(integrable: bool) -> Self {
        if integrable {
            EdgeBehavior::Integrable
        } else {
            EdgeBehavior::Divergent
        }
    }
}

/// Declared integrability at the two ends of a density's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edges {
    pub left: EdgeBehavior,
    pub right: EdgeBehavior,
}

impl Edges {
    pub const INTEGRABLE: Edges = Edges {
        left: EdgeBehavior::Integrable,
        right: EdgeBehavior::Integrable,
    };
    pub const DIVERGENT: Edges = Edges {
        left: EdgeBehavior::Divergent,
        right: EdgeBehavior::Divergent,
    };
}

/// Where a continuous part came from. All kinds except `Custom` serialize.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    /// `(2 / (pi R^2)) sqrt(R^2 - (u - c)^2)` on `[c - R, c + R]`.
    Semicircle { center: f64, radius: f64 },
    /// Constant density on the support.
    Uniform,
    /// Piecewise-linear interpolation of samples `(x_i, y_i)`.
    Table { x: Vec<f64>, y: Vec<f64> },
    /// Arbitrary evaluator; not serializable.
    Custom { label: String },
}

impl DensityKind {
    /// Analytic edge behavior per kind. Tables and custom densities carry the
    /// user's declaration instead.
    fn natural_edges(&self) -> Option<Edges> {
        match self {
            DensityKind::Semicircle { .. } => Some(Edges::INTEGRABLE),
            DensityKind::Uniform => Some(Edges::DIVERGENT),
            _ => None,
        }
    }

    /// Unnormalized shape evaluator for serializable kinds.
    fn shape(&self) -> Option<Evaluator> {
        match self.clone() {
            DensityKind::Semicircle { center, radius } => Some(Arc::new(move |u: f64| {
                let d = radius * radius - (u - center) * (u - center);
                if d > 0.0 {
                    2.0 / (PI * radius * radius) * d.sqrt()
                } else {
                    0.0
                }
            })),
            DensityKind::Uniform => Some(Arc::new(|_| 1.0)),
            DensityKind::Table { x, y } => Some(Arc::new(move |u: f64| interp(&x, &y, u))),
            DensityKind::Custom { .. } => None,
        }
    }

    fn pushforward(&self, s: f64) -> DensityKind {
        match self {
            DensityKind::Semicircle { center, radius } => DensityKind::Semicircle {
                center: center * s,
                radius: radius * s.abs(),
            },
            DensityKind::Uniform => DensityKind::Uniform,
            DensityKind::Table { x, y } => {
                let mut pairs: Vec<(f64, f64)> =
                    x.iter().zip(y).map(|(&a, &b)| (a * s, b / s.abs())).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                DensityKind::Table {
                    x: pairs.iter().map(|p| p.0).collect(),
                    y: pairs.iter().map(|p| p.1).collect(),
                }
            }
            DensityKind::Custom { label } => DensityKind::Custom {
                label: format!("{label} scaled by {s}"),
            },
        }
    }
}

fn interp(x: &[f64], y: &[f64], u: f64) -> f64 {
    if x.is_empty() || u < x[0] || u > x[x.len() - 1] {
        return 0.0;
    }
    let k = x.partition_point(|&v| v <= u);
    if k == 0 {
        return y[0];
    }
    if k == x.len() {
        return y[x.len() - 1];
    }
    let (x0, x1) = (x[k - 1], x[k]);
    let t = if x1 > x0 { (u - x0) / (x1 - x0) } else { 0.0 };
    y[k - 1] + t * (y[k] - y[k - 1])
}

pub type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The absolutely continuous part of a [`SpectralMeasure`].
#[derive(Clone)]
pub struct DensityPart {
    kind: DensityKind,
    eval: Evaluator,
    scale: f64,
    intervals: Vec<(f64, f64)>,
    interval_mass: Vec<f64>,
    nodes_per_interval: usize,
    fine: Rule,
    coarse: Rule,
    edges: Edges,
}

impl fmt::Debug for DensityPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityPart")
            .field("kind", &self.kind)
            .field("intervals", &self.intervals)
            .field("mass", &self.mass())
            .field("nodes_per_interval", &self.nodes_per_interval)
            .field("edges", &self.edges)
            .finish()
    }
}

impl PartialEq for DensityPart {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.intervals == other.intervals
            && self.nodes_per_interval == other.nodes_per_interval
            && self.edges == other.edges
            && self.fine == other.fine
    }
}

impl DensityPart {
    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }
    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }
    pub fn nodes_per_interval(&self) -> usize {
        self.nodes_per_interval
    }
    pub fn edges(&self) -> Edges {
        self.edges
    }
    pub fn mass(&self) -> f64 {
        self.interval_mass.iter().sum()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.fine.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.fine.weights
    }
    /// Density value (already scaled to this part's mass).
    pub fn density(&self, u: f64) -> f64 {
        if self.intervals.iter().any(|&(a, b)| u >= a && u <= b) {
            self.scale * (self.eval)(u)
        } else {
            0.0
        }
    }

    fn mass_below(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (&(a, b), &m) in self.intervals.iter().zip(&self.interval_mass) {
            if x >= b {
                acc += m;
            } else if x > a {
                // Integrate the shorter side so the endpoint value stays consistent.
                if x - a <= b - x {
                    acc += self.integrate_density(a, x);
                } else {
                    acc += m - self.integrate_density(x, b);
                }
            }
        }
        acc.max(0.0)
    }

    /// `mass_below` at every point of an ascending list. Each interval is cut at
    /// the query points; the two end pieces use the graded rule, interior pieces
    /// a short Gauss–Legendre rule, and the pieces are rescaled to the interval
    /// mass so the result is monotone and reaches it exactly.
    fn mass_below_sorted(&self, xs: &[f64]) -> Vec<f64> {
        let (gl_x, gl_w) = crate::quad::gauss_legendre(6);
        let mut out = vec![0.0; xs.len()];
        for (&(a, b), &m) in self.intervals.iter().zip(&self.interval_mass) {
            let lo = xs.partition_point(|&x| x <= a);
            let hi = xs.partition_point(|&x| x < b);
            for v in &mut out[hi..] {
                *v += m;
            }
            if lo == hi {
                continue;
            }
            let mut cuts = Vec::with_capacity(hi - lo + 2);
            cuts.push(a);
            cuts.extend(xs[lo..hi].iter().copied().filter(|&x| x > a));
            cuts.push(b);
            cuts.dedup();
            let last = cuts.len() - 2;
            let pieces: Vec<f64> = cuts
                .windows(2)
                .enumerate()
                .map(|(k, w)| {
                    if k == 0 || k == last {
                        self.integrate_density(w[0], w[1])
                    } else {
                        let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                        gl_x.iter().zip(&gl_w).map(|(&t, &wt)| wt * (self.eval)(c + h * t)).sum::<f64>()
                            * h
                            * self.scale
                    }
                })
                .collect();
            let total: f64 = pieces.iter().sum();
            let factor = if total > 0.0 { m / total } else { 0.0 };
            let mut acc = 0.0;
            let mut piece = 0;
            for (k, v) in out[lo..hi].iter_mut().enumerate() {
                let x = xs[lo + k];
                while piece < pieces.len() && cuts[piece + 1] <= x {
                    acc += pieces[piece] * factor;
                    piece += 1;
                }
                *v += acc.min(m);
            }
        }
        out
    }

    fn integrate_density(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let (rule, _) = graded_cos_rule(a, b, 64);
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&u, &w)| w * (self.eval)(u))
            .sum::<f64>()
            * self.scale
    }
}

/// Outcome of discretizing a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureReport {
    /// Mass of the evaluator as integrated by the fine rule, before rescaling.
    pub raw_mass: f64,
    /// `target / raw_mass`, present when it differs from 1 by more than 1e-6.
    pub renormalization: Option<f64>,
    /// Fine-vs-coarse discrepancy in the total mass.
    pub mass_error_estimate: f64,
}

/// A compactly supported probability measure. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    atoms: Vec<Atom>,
    density: Option<DensityPart>,
    left: f64,
    right: f64,
    report: Option<QuadratureReport>,
}

/// Input for the continuous part of a mixture.
#[derive(Clone)]
pub struct DensityInput {
    pub kind: DensityKind,
    pub evaluator: Evaluator,
    pub intervals: Vec<(f64, f64)>,
    pub nodes_per_interval: usize,
    pub edges: Edges,
}

impl DensityInput {
    /// Density of a serializable kind on `support`, with the kind's edge behavior
    /// (tables must state theirs through [`DensityInput::table`]).
    pub fn of_kind(kind: DensityKind, support: (f64, f64), nodes: usize) -> Result<Self> {
        let edges = kind
            .natural_edges()
            .ok_or_else(|| Error::InvalidMeasure("kind has no analytic edge behavior".into()))?;
        let evaluator = kind
            .shape()
            .ok_or_else(|| Error::InvalidMeasure("custom densities need an evaluator".into()))?;
        Ok(DensityInput {
            kind,
            evaluator,
            intervals: vec![support],
            nodes_per_interval: nodes,
            edges,
        })
    }

    pub fn table(x: Vec<f64>, y: Vec<f64>, support: (f64, f64), nodes: usize, edges: Edges) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::InvalidMeasure("table needs at least two (x, y) samples of equal length".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMeasure("table x values must be strictly increasing".into()));
        }
        let kind = DensityKind::Table { x, y };
        let evaluator = kind.shape().expect("tables always have a shape");
        Ok(DensityInput {
            kind,
            evaluator,
            intervals: vec![support],
            nodes_per_interval: nodes,
            edges,
        })
    }
}

fn same_location(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= MERGE_TOL * a.abs().max(b.abs())
}

fn normalize_atoms(locations: &[f64], weights: &[f64]) -> Result<Vec<Atom>> {
    if locations.len() != weights.len() {
        return Err(Error::InvalidMeasure(format!(
            "{} locations but {} weights",
            locations.len(),
            weights.len()
        )));
    }
    let mut atoms = Vec::with_capacity(locations.len());
    for (&location, &weight) in locations.iter().zip(weights) {
        if !location.is_finite() {
            return Err(Error::InvalidMeasure(format!("non-finite atom location {location}")));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidMeasure(format!("atom weight {weight} is not positive")));
        }
        atoms.push(Atom { location, weight });
    }
    atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match merged.last_mut() {
            Some(last) if same_location(last.location, a.location) => last.weight += a.weight,
            _ => merged.push(a),
        }
    }
    Ok(merged)
}

fn build_density(input: DensityInput, target_mass: Option<f64>) -> Result<(DensityPart, QuadratureReport)> {
    let DensityInput {
        kind,
        evaluator,
        mut intervals,
        nodes_per_interval,
        edges,
    } = input;
    if nodes_per_interval < 2 {
        return Err(Error::InvalidMeasure("need at least 2 nodes per interval".into()));
    }
    if intervals.is_empty() {
        return Err(Error::InvalidMeasure("density part has no support interval".into()));
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in intervals.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::InvalidMeasure("support intervals overlap".into()));
        }
    }
    let mut fine = Rule::default();
    let mut coarse = Rule::default();
    let mut interval_mass = Vec::with_capacity(intervals.len());
    let mut coarse_mass = 0.0;
    for &(a, b) in &intervals {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidMeasure(format!("bad support interval [{a}, {b}]")));
        }
        let (f, c) = graded_cos_rule(a, b, nodes_per_interval);
        let mut m = 0.0;
        for (&u, &w) in f.nodes.iter().zip(&f.weights) {
            let p = evaluator(u);
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidMeasure(format!("density is {p} at {u}")));
            }
            fine.nodes.push(u);
            fine.weights.push(w * p);
            m += w * p;
        }
        for (&u, &w) in c.nodes.iter().zip(&c.weights) {
            coarse.nodes.push(u);
            coarse.weights.push(w * evaluator(u).max(0.0));
            coarse_mass += w * evaluator(u).max(0.0);
        }
        interval_mass.push(m);
    }
    let raw_mass: f64 = interval_mass.iter().sum();
    if !(raw_mass > 0.0) {
        return Err(Error::InvalidMeasure("density has zero total mass".into()));
    }
    let target = target_mass.unwrap_or(raw_mass);
    let scale = target / raw_mass;
    for w in fine.weights.iter_mut().chain(coarse.weights.iter_mut()) {
        *w *= scale;
    }
    for m in interval_mass.iter_mut() {
        *m *= scale;
    }
    let report = QuadratureReport {
        raw_mass,
        renormalization: ((scale - 1.0).abs() > RENORMALIZATION_REPORT).then_some(scale),
        mass_error_estimate: (coarse_mass - raw_mass).abs() * scale,
    };
    Ok((
        DensityPart {
            kind,
            eval: evaluator,
            scale,
            intervals,
            interval_mass,
            nodes_per_interval,
            fine,
            coarse,
            edges,
        },
        report,
    ))
}

impl SpectralMeasure {
    /// Discrete measure. Duplicate locations are merged by adding weights.
    pub fn from_atoms(locations: &[f64], weights: &[f64]) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidMeasure("empty atom list".into()));
        }
        let mut atoms = normalize_atoms(locations, weights)?;
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("atom weights sum to {total}, not 1")));
        }
        for a in atoms.iter_mut() {
            a.weight /= total;
        }
        Ok(Self::assemble(atoms, None, None))
    }

    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self::from_atoms(&[x], &[1.0]).expect("a single atom is always valid")
    }

    /// Continuous measure from an arbitrary density evaluator on `support`,
    /// renormalized to mass 1. `edges` declares integrability at the endpoints.
    pub fn from_density<F>(density: F, support: (f64, f64), nodes_per_interval: usize, edges: Edges) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let input = DensityInput {
            kind: DensityKind::Custom {
                label: "evaluator".into(),
            },
            evaluator: Arc::new(density),
            intervals: vec![support],
            nodes_per_interval,
            edges,
        };
        Self::mixture(&[], &[], Some(input))
    }

    /// Semicircle law with the given center and radius.
    pub fn semicircle(center: f64, radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidMeasure(format!("semicircle radius {radius} must be positive")));
        }
        let input = DensityInput::of_kind(
            DensityKind::Semicircle { center, radius },
            (center - radius, center + radius),
            nodes,
        )?;
        Self::mixture(&[], &[], Some(input))
    }

    /// Uniform law on `[a, b]`.
    pub fn uniform(a: f64, b: f64, nodes: usize) -> Result<Self> {
        let input = DensityInput::of_kind(DensityKind::Uniform, (a, b), nodes)?;
        Self::mixture(&[], &[], Some(input))
    }

    /// Atoms plus an optional continuous part carrying the remaining mass.
    pub fn mixture(locations: &[f64], weights: &[f64], density: Option<DensityInput>) -> Result<Self> {
        let atoms = normalize_atoms(locations, weights)?;
        let atom_mass: f64 = atoms.iter().map(|a| a.weight).sum();
        match density {
            None => Self::from_atoms(locations, weights),
            Some(input) => {
                let rest = 1.0 - atom_mass;
                if !(rest > MASS_TOL) {
                    return Err(Error::InvalidMeasure(format!(
                        "atoms carry mass {atom_mass}; nothing left for the density part"
                    )));
                }
                let (part, report) = build_density(input, Some(rest))?;
                Ok(Self::assemble(atoms, Some(part), Some(report)))
            }
        }
    }

    fn assemble(atoms: Vec<Atom>, density: Option<DensityPart>, report: Option<QuadratureReport>) -> Self {
        let mut left = f64::INFINITY;
        let mut right = f64::NEG_INFINITY;
        if let (Some(f), Some(l)) = (atoms.first(), atoms.last()) {
            left = left.min(f.location);
            right = right.max(l.location);
        }
        if let Some(d) = &density {
            left = left.min(d.intervals[0].0);
            right = right.max(d.intervals[d.intervals.len() - 1].1);
        }
        SpectralMeasure {
            atoms,
            density,
            left,
            right,
            report,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&DensityPart> {
        self.density.as_ref()
    }

    pub fn quadrature_report(&self) -> Option<QuadratureReport> {
        self.report
    }

    /// `(l, r)`: exact for atoms, declared interval endpoints for densities.
    pub fn edges(&self) -> (f64, f64) {
        (self.left, self.right)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    /// Mass of the atom at `x` (0 if `x` is not an atom).
    pub fn atom_mass(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .find(|a| same_location(a.location, x))
            .map_or(0.0, |a| a.weight)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum::<f64>() + self.density.as_ref().map_or(0.0, |d| d.mass())
    }

    pub fn is_discrete(&self) -> bool {
        self.density.is_none()
    }

    /// `sum_atoms w f(a) + sum_nodes w f(u)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let mut s = 0.0;
        for a in &self.atoms {
            s += a.weight * f(a.location);
        }
        if let Some(d) = &self.density {
            for (&u, &w) in d.fine.nodes.iter().zip(&d.fine.weights) {
                s += w * f(u);
            }
        }
        s
    }

    fn integrate_coarse<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let mut s = 0.0;
        for a in &self.atoms {
            s += a.weight * f(a.location);
        }
        if let Some(d) = &self.density {
            for (&u, &w) in d.coarse.nodes.iter().zip(&d.coarse.weights) {
                s += w * f(u);
            }
        }
        s
    }

    pub fn integrate_complex<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for a in &self.atoms {
            s += f(a.location) * a.weight;
        }
        if let Some(d) = &self.density {
            for (&u, &w) in d.fine.nodes.iter().zip(&d.fine.weights) {
                s += f(u) * w;
            }
        }
        s
    }

    /// `G(z) = int mu(dl) / (z - l)` for real `z` outside `[l, r]`.
    pub fn stieltjes(&self, z: f64) -> Result<f64> {
        if z <= self.right && z >= self.left {
            return Err(domain("z", z, format!("real z outside [{}, {}]", self.left, self.right)));
        }
        Ok(self.integrate(|u| 1.0 / (z - u)))
    }

    /// Fine value and a fine-vs-coarse error estimate of the real Stieltjes transform.
    pub fn stieltjes_with_error(&self, z: f64) -> Result<(f64, f64)> {
        let v = self.stieltjes(z)?;
        let c = self.integrate_coarse(|u| 1.0 / (z - u));
        Ok((v, (v - c).abs()))
    }

    pub fn stieltjes_complex(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 {
            return self
                .stieltjes(z.re)
                .map(|v| Complex64::new(v, 0.0));
        }
        Ok(self.integrate_complex(|u| (z - u).inv()))
    }

    /// `G'(z) = -int mu(dl) / (z - l)^2` for real `z > r`.
    pub fn stieltjes_derivative(&self, z: f64) -> Result<f64> {
        if z <= self.right {
            return Err(domain("z", z, format!("z > {}", self.right)));
        }
        Ok(-self.integrate(|u| 1.0 / ((z - u) * (z - u))))
    }

    /// `G(lambda)` for `lambda >= r` as an extended real: `+inf` at the right edge
    /// when an atom sits there or the density's edge is declared divergent.
    pub fn stieltjes_at_or_above_edge(&self, lambda: f64) -> Result<Extended> {
        if lambda > self.right {
            return self.stieltjes(lambda).map(Extended::Finite);
        }
        if lambda < self.right {
            return Err(domain("lambda", lambda, format!(">= r = {}", self.right)));
        }
        if self.atom_mass(lambda) > 0.0 {
            return Ok(Extended::PosInf);
        }
        if let Some(d) = &self.density {
            let top = d.intervals[d.intervals.len() - 1].1;
            if top == lambda && d.edges.right == EdgeBehavior::Divergent {
                return Ok(Extended::PosInf);
            }
        }
        // Nodes sit strictly inside the support, so the sum is finite.
        Ok(Extended::Finite(self.integrate(|u| 1.0 / (lambda - u))))
    }

    /// Inverse Stieltjes transform `K(y)` for `0 < y < G(r)`: the unique `z > r`
    /// with `G(z) = y`.
    pub fn inverse_stieltjes(&self, y: f64) -> Result<f64> {
        let r = self.right;
        if !(y > 0.0) {
            return Err(domain("y", y, "> 0"));
        }
        let g_edge = self.stieltjes_at_or_above_edge(r)?;
        if y >= g_edge.to_f64() {
            return Err(domain("y", y, format!("< G(r) = {g_edge}")));
        }
        // G(z) <= 1/(z - r), so z = r + 1/y already lies past the root.
        let hi = r + 1.0 / y;
        Ok(crate::roots::bisect(
            |z| self.integrate(|u| 1.0 / (z - u)) - y,
            r,
            hi,
            false,
            0.0,
        ))
    }

    /// `mu((-inf, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let a: f64 = self
            .atoms
            .iter()
            .take_while(|a| a.location <= x)
            .map(|a| a.weight)
            .sum();
        let d = self.density.as_ref().map_or(0.0, |d| d.mass_below(x));
        (a + d).min(1.0)
    }

    /// `mu((-inf, x))`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        let a: f64 = self
            .atoms
            .iter()
            .take_while(|a| a.location < x)
            .map(|a| a.weight)
            .sum();
        let d = self.density.as_ref().map_or(0.0, |d| d.mass_below(x));
        (a + d).min(1.0)
    }

    /// `mu((-inf, x])` at every point of an ascending list, at the cost of one
    /// quadrature pass over the support.
    pub fn cdf_sorted(&self, xs: &[f64]) -> Vec<f64> {
        debug_assert!(xs.windows(2).all(|w| w[0] <= w[1]));
        let mut out = match &self.density {
            Some(d) => d.mass_below_sorted(xs),
            None => vec![0.0; xs.len()],
        };
        let mut k = 0;
        let mut acc = 0.0;
        for (x, v) in xs.iter().zip(out.iter_mut()) {
            while k < self.atoms.len() && self.atoms[k].location <= *x {
                acc += self.atoms[k].weight;
                k += 1;
            }
            *v = (*v + acc).min(1.0);
        }
        out
    }

    /// Generalized inverse `inf { x : F(x) >= p }`, clamped to `[l, r]`.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.left;
        }
        if p >= 1.0 {
            return self.right;
        }
        // Atoms first: exact jumps.
        let mut lo = self.left;
        let mut hi = self.right;
        if self.cdf(lo) >= p {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // Snap onto an atom if the jump sits there.
        if let Some(a) = self
            .atoms
            .iter()
            .find(|a| (a.location - hi).abs() <= 4.0 * f64::EPSILON * a.location.abs().max(1.0))
        {
            return a.location;
        }
        hi
    }

    /// Push-forward under `u -> s u` (`s != 0`), keeping the discretization.
    pub fn pushforward_scale(&self, s: f64) -> Result<Self> {
        if s == 0.0 || !s.is_finite() {
            return Err(domain("scale", s, "nonzero finite"));
        }
        let mut atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: a.location * s,
                weight: a.weight,
            })
            .collect();
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        let density = self.density.as_ref().map(|d| scale_density(d, s, 1.0));
        Ok(Self::assemble(atoms, density, self.report))
    }

    /// Removes the atom at 0 and rescales locations by `1 - w0`, returning the
    /// new measure and `alpha (1 - w0)`. The function `H` of the pair is unchanged.
    pub fn remove_zero_atom(&self, alpha: f64) -> Result<(SpectralMeasure, f64)> {
        if !(alpha > 0.0) {
            return Err(domain("alpha", alpha, "> 0"));
        }
        let w0 = self.atom_mass(0.0);
        if w0 == 0.0 {
            return Ok((self.clone(), alpha));
        }
        let keep = 1.0 - w0;
        if keep <= MASS_TOL {
            return Err(Error::InvalidMeasure("measure is delta_0: nothing remains after removing the zero atom".into()));
        }
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .filter(|a| !same_location(a.location, 0.0))
            .map(|a| Atom {
                location: a.location * keep,
                weight: a.weight / keep,
            })
            .collect();
        let density = self.density.as_ref().map(|d| scale_density(d, keep, 1.0 / keep));
        Ok((Self::assemble(atoms, density, self.report), alpha * keep))
    }

    /// Collapses all mass in `(r - eps, r]` onto an atom at `r`. If `r - eps` hits
    /// an atom, `eps` is nudged upward by `1e-9 (r - l)`. A point mass is returned
    /// unchanged for every `eps > 0`.
    pub fn epsilon_truncate(&self, eps: f64) -> Result<Truncation> {
        let span = self.right - self.left;
        if span == 0.0 && eps > 0.0 {
            // A single atom is already concentrated at its edge.
            return Ok(Truncation {
                measure: self.clone(),
                epsilon: eps,
                nudged: false,
            });
        }
        if !(eps > 0.0 && eps < span) {
            return Err(domain("eps", eps, format!("in (0, {span})")));
        }
        let mut eps_used = eps;
        let mut nudged = false;
        while self
            .atoms
            .iter()
            .any(|a| (a.location - (self.right - eps_used)).abs() <= 1e-12)
        {
            eps_used += 1e-9 * span;
            nudged = true;
        }
        let cut = self.right - eps_used;
        let mut atoms: Vec<Atom> = self.atoms.iter().filter(|a| a.location <= cut).copied().collect();
        let density = match &self.density {
            None => None,
            Some(d) => {
                let clipped: Vec<(f64, f64)> = d
                    .intervals
                    .iter()
                    .filter(|iv| iv.0 < cut)
                    .map(|&(a, b)| (a, b.min(cut)))
                    .collect();
                if clipped.is_empty() {
                    None
                } else {
                    let touches_cut = clipped.last().map(|iv| iv.1) == Some(cut);
                    let edges = Edges {
                        left: d.edges.left,
                        right: if touches_cut { EdgeBehavior::Divergent } else { d.edges.right },
                    };
                    let scale = d.scale;
                    let eval = d.eval.clone();
                    let input = DensityInput {
                        kind: d.kind.clone(),
                        evaluator: Arc::new(move |u| scale * eval(u)),
                        intervals: clipped,
                        nodes_per_interval: d.nodes_per_interval,
                        edges,
                    };
                    Some(build_density(input, None)?.0)
                }
            }
        };
        let kept = atoms.iter().map(|a| a.weight).sum::<f64>() + density.as_ref().map_or(0.0, |d| d.mass());
        let tail = 1.0 - kept;
        if tail > 0.0 {
            match atoms.last_mut() {
                Some(last) if last.location == self.right => last.weight += tail,
                _ => atoms.push(Atom {
                    location: self.right,
                    weight: tail,
                }),
            }
        }
        let measure = Self::assemble(atoms, density, self.report);
        Ok(Truncation {
            measure,
            epsilon: eps_used,
            nudged,
        })
    }
}

/// Result of [`SpectralMeasure::epsilon_truncate`].
#[derive(Debug, Clone)]
pub struct Truncation {
    pub measure: SpectralMeasure,
    /// The cut actually used (differs from the request when nudged).
    pub epsilon: f64,
    pub nudged: bool,
}

fn scale_density(d: &DensityPart, s: f64, mass_factor: f64) -> DensityPart {
    let eval = d.eval.clone();
    let abs = s.abs();
    let mut intervals: Vec<(f64, f64)> = d
        .intervals
        .iter()
        .map(|&(a, b)| if s > 0.0 { (a * s, b * s) } else { (b * s, a * s) })
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut interval_mass: Vec<f64> = d.interval_mass.iter().map(|m| m * mass_factor).collect();
    if s < 0.0 {
        interval_mass.reverse();
    }
    let map_rule = |r: &Rule| {
        let mut pairs: Vec<(f64, f64)> = r
            .nodes
            .iter()
            .zip(&r.weights)
            .map(|(&u, &w)| (u * s, w * mass_factor))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    };
    let edges = if s > 0.0 {
        d.edges
    } else {
        Edges {
            left: d.edges.right,
            right: d.edges.left,
        }
    };
    DensityPart {
        kind: d.kind.pushforward(s),
        eval: Arc::new(move |u| eval(u / s) / abs),
        scale: d.scale * mass_factor,
        intervals,
        interval_mass,
        nodes_per_interval: d.nodes_per_interval,
        fine: map_rule(&d.fine),
        coarse: map_rule(&d.coarse),
        edges,
    }
}

// --- JSON schema -----------------------------------------------------------

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// `{"atoms": [[loc, weight], ...], "density": {...} | null}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MeasureJson {
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Option<DensityJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensityJson {
    pub kind: String,
    #[serde(default)]
    pub params: Value,
    pub support: Value,
    pub nodes: usize,
}

/// Default node count when a JSON density omits `nodes`.
pub const DEFAULT_NODES: usize = 512;

fn parse_support(v: &Value) -> Result<Vec<(f64, f64)>> {
    let bad = || Error::InvalidMeasure(format!("support must be [a, b] or [[a, b], ...], got {v}"));
    let arr = v.as_array().ok_or_else(bad)?;
    if arr.len() == 2 && arr.iter().all(Value::is_number) {
        return Ok(vec![(arr[0].as_f64().ok_or_else(bad)?, arr[1].as_f64().ok_or_else(bad)?)]);
    }
    arr.iter()
        .map(|iv| {
            let p = iv.as_array().ok_or_else(bad)?;
            if p.len() != 2 {
                return Err(bad());
            }
            Ok((p[0].as_f64().ok_or_else(bad)?, p[1].as_f64().ok_or_else(bad)?))
        })
        .collect()
}

impl SpectralMeasure {
    pub fn from_json(json: &MeasureJson) -> Result<Self> {
        let locs: Vec<f64> = json.atoms.iter().map(|a| a[0]).collect();
        let ws: Vec<f64> = json.atoms.iter().map(|a| a[1]).collect();
        let Some(d) = &json.density else {
            return Self::from_atoms(&locs, &ws);
        };
        let intervals = parse_support(&d.support)?;
        let nodes = if d.nodes == 0 { DEFAULT_NODES } else { d.nodes };
        let p = &d.params;
        let num = |key: &str| -> Result<f64> {
            p.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidMeasure(format!("{} density needs numeric param '{key}'", d.kind)))
        };
        let input = match d.kind.as_str() {
            "semicircle" => {
                let kind = DensityKind::Semicircle {
                    center: num("center")?,
                    radius: num("radius")?,
                };
                let mut input = DensityInput::of_kind(kind, intervals[0], nodes)?;
                input.intervals = intervals;
                input
            }
            "uniform" => {
                let mut input = DensityInput::of_kind(DensityKind::Uniform, intervals[0], nodes)?;
                input.intervals = intervals;
                input
            }
            "table" => {
                let vec = |key: &str| -> Result<Vec<f64>> {
                    p.get(key)
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::InvalidMeasure(format!("table density needs array '{key}'")))?
                        .iter()
                        .map(|v| v.as_f64().ok_or_else(|| Error::InvalidMeasure(format!("non-numeric entry in '{key}'"))))
                        .collect()
                };
                let right = p.get("edge_integrable").and_then(Value::as_bool).ok_or_else(|| {
                    Error::EdgeIntegrability("table densities must declare 'edge_integrable'".into())
                })?;
                let left = p.get("left_edge_integrable").and_then(Value::as_bool).unwrap_or(false);
                let edges = Edges {
                    left: EdgeBehavior::from_flag(left),
                    right: EdgeBehavior::from_flag(right),
                };
                let mut input = DensityInput::table(vec("x")?, vec("y")?, intervals[0], nodes, edges)?;
                input.intervals = intervals;
                input
            }
            other => return Err(Error::InvalidMeasure(format!("unknown density kind '{other}'"))),
        };
        Self::mixture(&locs, &ws, Some(input))
    }

    pub fn to_json(&self) -> Result<MeasureJson> {
        let atoms = self.atoms.iter().map(|a| [a.location, a.weight]).collect();
        let density = match &self.density {
            None => None,
            Some(d) => {
                let (kind, params) = match &d.kind {
                    DensityKind::Semicircle { center, radius } => (
                        "semicircle",
                        serde_json::json!({"center": center, "radius": radius}),
                    ),
                    DensityKind::Uniform => ("uniform", Value::Null),
                    DensityKind::Table { x, y } => (
                        "table",
                        serde_json::json!({
                            "x": x,
                            "y": y,
                            "edge_integrable": d.edges.right == EdgeBehavior::Integrable,
                            "left_edge_integrable": d.edges.left == EdgeBehavior::Integrable,
                        }),
                    ),
                    DensityKind::Custom { label } => {
                        return Err(Error::InvalidMeasure(format!("custom density '{label}' cannot be serialized")))
                    }
                };
                let support = if d.intervals.len() == 1 {
                    serde_json::json!([d.intervals[0].0, d.intervals[0].1])
                } else {
                    serde_json::json!(d.intervals.iter().map(|iv| [iv.0, iv.1]).collect::<Vec<_>>())
                };
                Some(DensityJson {
                    kind: kind.into(),
                    params,
                    support,
                    nodes: d.nodes_per_interval,
                })
            }
        };
        Ok(MeasureJson { atoms, density })
    }
}
