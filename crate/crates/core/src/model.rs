//! Reward distributions, initial beliefs on the relay count, and the
//! conditional order-statistic kernels of uniformly spread wake-up times.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::quadrature::GaussLegendre;

/// Cells used when tabulating a reward cdf.
pub const DEFAULT_TABLE_CELLS: usize = 10_000;

/// Relay wake-up process: each relay wakes once, uniformly in `(0, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WakeModel {
    t: f64,
}

impl WakeModel {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(domain(format!("cycle duration must be positive, got {t}")));
        }
        Ok(Self { t })
    }

    pub fn period(&self) -> f64 {
        self.t
    }

    /// Density of the next wake-up gap `u` at stage `k` given the current
    /// time `w` and `n` relays in total.
    pub fn order_stat_cond_pdf(&self, u: f64, w: f64, n: usize, k: usize) -> Result<f64> {
        self.check_time(w)?;
        if k >= n {
            return Err(domain(format!("need k < n, got k={k} n={n}")));
        }
        let span = self.t - w;
        if !(0.0..span).contains(&u) {
            return Ok(0.0);
        }
        let left = (n - k) as f64;
        Ok(left * ((span - u) / span).powf(left - 1.0) / span)
    }

    /// Natural log of [`Self::order_stat_cond_pdf`] with `ln(T - w - u)` and
    /// `ln(T - w)` supplied by the caller. Used by the belief update, which
    /// evaluates many `n` at the same `(w, u)`.
    #[inline]
    pub(crate) fn log_cond_pdf(remaining: usize, ln_rest: f64, ln_span: f64) -> f64 {
        let l = remaining as f64;
        l.ln() + (l - 1.0) * ln_rest - l * ln_span
    }

    /// Mean gap to the next wake-up; `T - w` once every relay has woken.
    pub fn expected_next_wake(&self, w: f64, n: usize, k: usize) -> Result<f64> {
        self.check_time(w)?;
        if k > n {
            return Err(domain(format!("need k <= n, got k={k} n={n}")));
        }
        let span = self.t - w;
        Ok(if k == n { span } else { span / (n - k + 1) as f64 })
    }

    fn check_time(&self, w: f64) -> Result<()> {
        if !(w >= 0.0 && w < self.t) {
            return Err(domain(format!("wake time {w} outside [0, {})", self.t)));
        }
        Ok(())
    }
}

/// Area of the forwarding region: points within `r_c` of the source that are
/// strictly closer than `d` to the sink, with source and sink `d` apart.
pub fn forwarding_area(d: f64, r_c: f64) -> Result<f64> {
    if !(r_c > 0.0 && r_c < d && d.is_finite()) {
        return Err(domain(format!("forwarding area needs 0 < r_c < d, got r_c={r_c} d={d}")));
    }
    Ok(lens_area(d, r_c, d))
}

/// Intersection area of two discs of radii `r1`, `r2` whose centers are `sep` apart.
fn lens_area(sep: f64, r1: f64, r2: f64) -> f64 {
    let a1 = ((sep * sep + r1 * r1 - r2 * r2) / (2.0 * sep * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((sep * sep + r2 * r2 - r1 * r1) / (2.0 * sep * r2)).clamp(-1.0, 1.0).acos();
    let k = (-sep + r1 + r2) * (sep + r1 - r2) * (sep - r1 + r2) * (sep + r1 + r2);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.max(0.0).sqrt()
}

/// Unnormalized progress density: arc length at sink distance `d - r` inside the radio disc.
fn progress_arc(d: f64, r_c: f64, r: f64) -> f64 {
    let rho = d - r;
    let cos = ((d * d + rho * rho - r_c * r_c) / (2.0 * d * rho)).clamp(-1.0, 1.0);
    2.0 * rho * cos.acos()
}

/// Piecewise-linear cdf on a uniform grid over `[0, r_max]`, with the running
/// integral of the cdf for closed-form expectations of `max{b, R}`.
#[derive(Debug, Clone)]
pub struct CdfTable {
    r_max: f64,
    h: f64,
    cdf: Vec<f64>,
    prefix: Vec<f64>,
}

impl CdfTable {
    /// Tabulate from a density. Returns the table and the raw mass before
    /// renormalization.
    pub fn from_pdf(r_max: f64, cells: usize, pdf: impl Fn(f64) -> f64) -> (Self, f64) {
        let gl = GaussLegendre::new(5);
        let h = r_max / cells as f64;
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            let a = i as f64 * h;
            acc += gl.integrate(a, a + h, |x| pdf(x).max(0.0));
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        (Self::from_cdf_nodes(r_max, cdf), total)
    }

    /// Histogram of weighted point masses, spread uniformly inside each cell.
    pub fn from_points(r_max: f64, cells: usize, points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let h = r_max / cells as f64;
        let mut mass = vec![0.0; cells];
        for (x, w) in points {
            let i = ((x / h) as usize).min(cells - 1);
            mass[i] += w;
        }
        let total: f64 = mass.iter().sum();
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for m in mass {
            acc += m;
            cdf.push(acc / total);
        }
        Self::from_cdf_nodes(r_max, cdf)
    }

    fn from_cdf_nodes(r_max: f64, mut cdf: Vec<f64>) -> Self {
        let cells = cdf.len() - 1;
        let h = r_max / cells as f64;
        for i in 1..cdf.len() {
            cdf[i] = cdf[i].clamp(cdf[i - 1], 1.0);
        }
        cdf[0] = 0.0;
        cdf[cells] = 1.0;
        let mut prefix = Vec::with_capacity(cells + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            acc += 0.5 * h * (cdf[i] + cdf[i + 1]);
            prefix.push(acc);
        }
        Self { r_max, h, cdf, prefix }
    }

    pub fn support_max(&self) -> f64 {
        self.r_max
    }

    pub fn cells(&self) -> usize {
        self.cdf.len() - 1
    }

    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let x = x.clamp(0.0, self.r_max);
        let i = ((x / self.h) as usize).min(self.cells() - 1);
        (i, x - i as f64 * self.h)
    }

    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.r_max {
            return 1.0;
        }
        let (i, dx) = self.locate(x);
        self.cdf[i] + (self.cdf[i + 1] - self.cdf[i]) * dx / self.h
    }

    /// Piecewise-constant density implied by the table.
    pub fn pdf(&self, x: f64) -> f64 {
        let (i, _) = self.locate(x);
        (self.cdf[i + 1] - self.cdf[i]) / self.h
    }

    /// `int_0^x F(r) dr`, exact for the piecewise-linear cdf.
    #[inline]
    pub fn cdf_integral_to(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.r_max {
            return self.prefix[self.cells()] + (x - self.r_max);
        }
        let (i, dx) = self.locate(x);
        let slope = (self.cdf[i + 1] - self.cdf[i]) / self.h;
        self.prefix[i] + dx * self.cdf[i] + 0.5 * dx * dx * slope
    }

    /// `int_a^b F(r) dr`.
    pub fn cdf_integral(&self, a: f64, b: f64) -> f64 {
        self.cdf_integral_to(b) - self.cdf_integral_to(a)
    }

    /// Smallest `x` with `F(x) >= u`, linear inside a cell.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self.cdf.partition_point(|&c| c < u);
        if i == 0 {
            return 0.0;
        }
        let i = i.min(self.cells());
        let (lo, hi) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        ((i - 1) as f64 + frac) * self.h
    }

    /// `E[R]`.
    pub fn mean(&self) -> f64 {
        self.r_max - self.cdf_integral_to(self.r_max)
    }

    /// `E[max{b, R}] = R_max - int_b^R_max F`.
    #[inline]
    pub fn expected_max_with(&self, b: f64) -> f64 {
        let b = b.clamp(0.0, self.r_max);
        self.r_max - (self.prefix[self.cells()] - self.cdf_integral_to(b))
    }
}

/// Family of a reward distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardKind {
    /// Progress toward the sink of a relay placed uniformly in the forwarding region.
    ProgressGeometric { d: f64, r_c: f64 },
    /// `a1 * Z * ln(a2 / Z)` of progress `Z`: penalizes both short and long hops.
    ProgressPenalized { d: f64, r_c: f64, a1: f64, a2: f64 },
    /// `c1 * Z + c2 * H`, with a discrete rate `H` that degrades with progress:
    /// `P(H = h | Z = z)` proportional to `h * exp(-decay * z * h)`.
    ProgressPlusRate { d: f64, r_c: f64, c1: f64, c2: f64, decay: f64 },
    Uniform { max: f64 },
    TruncatedGaussian { mean: f64, variance: f64, max: f64 },
    /// Piecewise-linear density through `(grid, pdf)` pairs.
    Tabulated { grid: Vec<f64>, pdf: Vec<f64> },
}

/// Rate levels of [`RewardKind::ProgressPlusRate`].
pub const RATE_LEVELS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// An iid reward law on `[0, R_max]` with a precomputed cdf table.
#[derive(Debug, Clone)]
pub struct RewardDistribution {
    kind: RewardKind,
    r_max: f64,
    /// Mass of the analytic density before renormalization, when there is one.
    raw_mass: Option<f64>,
    table: Arc<CdfTable>,
}

impl RewardDistribution {
    pub fn new(kind: RewardKind) -> Result<Self> {
        Self::with_cells(kind, DEFAULT_TABLE_CELLS)
    }

    pub fn with_cells(kind: RewardKind, cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(domain("cdf table needs at least 2 cells"));
        }
        let r_max = support_max(&kind)?;
        let (table, raw_mass) = match &kind {
            RewardKind::ProgressPenalized { d, r_c, a1, a2 } => {
                let (d, r_c, a1, a2) = (*d, *r_c, *a1, *a2);
                let pts = progress_points(d, r_c, 20_000)?
                    .into_iter()
                    .map(move |(z, w)| (penalized(z, a1, a2), w));
                (CdfTable::from_points(r_max, cells, pts), None)
            }
            RewardKind::ProgressPlusRate { d, r_c, c1, c2, decay } => {
                let (c1, c2, decay) = (*c1, *c2, *decay);
                let mut pts = Vec::new();
                for (z, w) in progress_points(*d, *r_c, 20_000)? {
                    let probs = rate_probs(z, decay);
                    for (h, p) in RATE_LEVELS.iter().zip(probs) {
                        pts.push((c1 * z + c2 * h, w * p));
                    }
                }
                (CdfTable::from_points(r_max, cells, pts), None)
            }
            _ => {
                let (t, mass) = CdfTable::from_pdf(r_max, cells, |r| analytic_pdf(&kind, r));
                (t, Some(mass))
            }
        };
        Ok(Self { kind, r_max, raw_mass, table: Arc::new(table) })
    }

    /// Named configuration presets.
    ///
    /// `progress10`, `example1`..`example4`, `uniform01`, and
    /// `truncnorm(<mean>,<variance>)` on `[0, 1]`.
    pub fn preset(name: &str) -> Result<Self> {
        let name = name.trim();
        let kind = match name {
            "progress10" => RewardKind::ProgressGeometric { d: 10.0, r_c: 1.0 },
            "example1" => RewardKind::ProgressPenalized { d: 10.0, r_c: 1.0, a1: 2.5, a2: 0.4 * E },
            "example2" => {
                RewardKind::ProgressPlusRate { d: 10.0, r_c: 1.0, c1: 0.5, c2: 0.5, decay: 10.0 }
            }
            "example3" | "uniform01" => RewardKind::Uniform { max: 1.0 },
            "example4" => RewardKind::TruncatedGaussian { mean: 0.5, variance: 1.0, max: 1.0 },
            other => {
                if let Some(args) = other.strip_prefix("truncnorm(").and_then(|s| s.strip_suffix(')')) {
                    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                    let parsed: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
                    if parsed.len() != 2 || parts.len() != 2 {
                        return Err(Error::Config(format!("bad truncnorm preset `{other}`")));
                    }
                    RewardKind::TruncatedGaussian { mean: parsed[0], variance: parsed[1], max: 1.0 }
                } else {
                    return Err(Error::Config(format!(
                        "unknown reward preset `{other}`; expected one of progress10, example1, \
                         example2, example3, example4, uniform01, truncnorm(m,v)"
                    )));
                }
            }
        };
        Self::new(kind)
    }

    /// Progress distribution for a forwarder at distance `d` from the sink.
    pub fn progress(d: f64, r_c: f64) -> Result<Self> {
        Self::new(RewardKind::ProgressGeometric { d, r_c })
    }

    pub fn kind(&self) -> &RewardKind {
        &self.kind
    }

    pub fn support_max(&self) -> f64 {
        self.r_max
    }

    pub fn table(&self) -> &CdfTable {
        &self.table
    }

    pub fn raw_mass(&self) -> Option<f64> {
        self.raw_mass
    }

    /// `f_R(r)`. Analytic when the family has a closed form, otherwise the
    /// tabulated density.
    pub fn pdf(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0 && r <= self.r_max) {
            return Err(domain(format!("reward {r} outside [0, {}]", self.r_max)));
        }
        Ok(match self.kind {
            RewardKind::ProgressPenalized { .. } | RewardKind::ProgressPlusRate { .. } => {
                self.table.pdf(r)
            }
            _ => analytic_pdf(&self.kind, r) / self.raw_mass.unwrap_or(1.0),
        })
    }

    pub fn cdf(&self, r: f64) -> f64 {
        self.table.cdf(r)
    }

    pub fn mean(&self) -> f64 {
        self.table.mean()
    }

    pub fn expected_max_with(&self, b: f64) -> f64 {
        self.table.expected_max_with(b)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.table.quantile(rng.random::<f64>())
    }

    /// Integral of the density over its support by adaptive-free composite
    /// Gauss-Legendre. The upper half uses `r = R_max - s^2` so a square-root
    /// edge (progress law) is integrated smoothly.
    pub fn pdf_mass(&self) -> f64 {
        let gl = GaussLegendre::new(10);
        let r_max = self.r_max;
        let f = |r: f64| self.pdf(r.clamp(0.0, r_max)).unwrap_or(0.0);
        match self.kind {
            RewardKind::ProgressPenalized { .. } | RewardKind::ProgressPlusRate { .. } => {
                // piecewise constant: exact cell sums
                let t = &self.table;
                let h = r_max / t.cells() as f64;
                (0..t.cells()).map(|i| t.pdf((i as f64 + 0.5) * h) * h).sum()
            }
            _ => {
                let half = 0.5 * r_max;
                let lower = gl.integrate_composite(0.0, half, 200, f);
                let upper = gl.integrate_composite(0.0, half.sqrt(), 200, |s| 2.0 * s * f(r_max - s * s));
                lower + upper
            }
        }
    }
}

fn support_max(kind: &RewardKind) -> Result<f64> {
    let check_geom = |d: f64, r_c: f64| -> Result<()> {
        if !(r_c > 0.0 && r_c < d) {
            return Err(domain(format!("progress law needs 0 < r_c < d, got r_c={r_c} d={d}")));
        }
        Ok(())
    };
    match kind {
        RewardKind::ProgressGeometric { d, r_c } => {
            check_geom(*d, *r_c)?;
            Ok(*r_c)
        }
        RewardKind::ProgressPenalized { d, r_c, a1, a2 } => {
            check_geom(*d, *r_c)?;
            if !(*a1 > 0.0 && *a2 >= *r_c) {
                return Err(domain("penalized progress needs a1 > 0 and a2 >= r_c"));
            }
            let peak = (a2 / E).min(*r_c);
            Ok(penalized(peak, *a1, *a2))
        }
        RewardKind::ProgressPlusRate { d, r_c, c1, c2, decay } => {
            check_geom(*d, *r_c)?;
            if !(*c1 >= 0.0 && *c2 >= 0.0 && c1 + c2 > 0.0 && *decay >= 0.0) {
                return Err(domain("progress-plus-rate needs nonnegative weights"));
            }
            Ok(c1 * r_c + c2 * RATE_LEVELS[RATE_LEVELS.len() - 1])
        }
        RewardKind::Uniform { max } | RewardKind::TruncatedGaussian { max, .. } => {
            if !(*max > 0.0) {
                return Err(domain("support must be positive"));
            }
            if let RewardKind::TruncatedGaussian { variance, .. } = kind {
                if !(*variance > 0.0) {
                    return Err(domain("variance must be positive"));
                }
            }
            Ok(*max)
        }
        RewardKind::Tabulated { grid, pdf } => {
            if grid.len() < 2 || grid.len() != pdf.len() {
                return Err(domain("tabulated density needs matching grid and pdf of length >= 2"));
            }
            if grid[0] != 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) || pdf.iter().any(|&p| p < 0.0) {
                return Err(domain("tabulated grid must start at 0, increase strictly, pdf >= 0"));
            }
            Ok(grid[grid.len() - 1])
        }
    }
}

fn analytic_pdf(kind: &RewardKind, r: f64) -> f64 {
    match kind {
        RewardKind::ProgressGeometric { d, r_c } => {
            progress_arc(*d, *r_c, r) / lens_area(*d, *r_c, *d)
        }
        RewardKind::Uniform { max } => 1.0 / max,
        RewardKind::TruncatedGaussian { mean, variance, .. } => {
            (-(r - mean).powi(2) / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
        }
        RewardKind::Tabulated { grid, pdf } => {
            let i = grid.partition_point(|&g| g <= r).clamp(1, grid.len() - 1);
            let (x0, x1) = (grid[i - 1], grid[i]);
            let t = ((r - x0) / (x1 - x0)).clamp(0.0, 1.0);
            pdf[i - 1] + t * (pdf[i] - pdf[i - 1])
        }
        RewardKind::ProgressPenalized { .. } | RewardKind::ProgressPlusRate { .. } => {
            unreachable!("tabulated by pushforward")
        }
    }
}

fn penalized(z: f64, a1: f64, a2: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        (-a1 * z * (z / a2).ln()).max(0.0)
    }
}

fn rate_probs(z: f64, decay: f64) -> [f64; 5] {
    let mut p = RATE_LEVELS.map(|h| h * (-decay * z * h).exp());
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    p
}

/// Quadrature point masses `(z, weight)` of the progress law.
fn progress_points(d: f64, r_c: f64, cells: usize) -> Result<Vec<(f64, f64)>> {
    let area = forwarding_area(d, r_c)?;
    let gl = GaussLegendre::new(4);
    let h = r_c / cells as f64;
    let mut pts = Vec::with_capacity(cells * 4);
    for i in 0..cells {
        let mid = (i as f64 + 0.5) * h;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let z = mid + 0.5 * h * x;
            pts.push((z, 0.5 * h * w * progress_arc(d, r_c, z) / area));
        }
    }
    Ok(pts)
}

/// Family of an initial belief on the relay count.
#[derive(Debug, Clone, PartialEq)]
pub enum BeliefKind {
    TruncatedPoisson { lambda: f64 },
    /// `P(N = n)` proportional to `C(K, n) q^n (1 - q)^(K - n)` for `n >= 1`.
    Binomial { q: f64 },
    Uniform,
    PointMass { n: usize },
    Custom,
}

/// Prior pmf of the number of relays on `{1, ..., K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBelief {
    kind: BeliefKind,
    /// `pmf[n]`, with `pmf[0] = 0`.
    pmf: Vec<f64>,
}

impl InitialBelief {
    pub fn new(kind: BeliefKind, k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(domain("relay bound K must be at least 1"));
        }
        let log_w: Vec<f64> = match &kind {
            BeliefKind::TruncatedPoisson { lambda } => {
                if !(*lambda > 0.0) {
                    return Err(domain("Poisson parameter must be positive"));
                }
                let mut lf = 0.0;
                (1..=k_max)
                    .map(|n| {
                        lf += (n as f64).ln();
                        n as f64 * lambda.ln() - lf
                    })
                    .collect()
            }
            BeliefKind::Binomial { q } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(domain("binomial parameter must be in (0, 1)"));
                }
                (1..=k_max)
                    .map(|n| ln_choose(k_max, n) + n as f64 * q.ln() + (k_max - n) as f64 * (1.0 - q).ln())
                    .collect()
            }
            BeliefKind::Uniform => vec![0.0; k_max],
            BeliefKind::PointMass { n } => {
                if !(1..=k_max).contains(n) {
                    return Err(domain(format!("point mass at {n} outside 1..={k_max}")));
                }
                (1..=k_max).map(|m| if m == *n { 0.0 } else { f64::NEG_INFINITY }).collect()
            }
            BeliefKind::Custom => return Err(domain("use InitialBelief::custom for explicit pmfs")),
        };
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut pmf = vec![0.0];
        pmf.extend(log_w.iter().map(|l| (l - top).exp()));
        normalize(&mut pmf);
        Ok(Self { kind, pmf })
    }

    /// Explicit pmf over `{1, ..., K}` given as `weights[n - 1]`.
    pub fn custom(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(domain("custom belief needs nonnegative weights with positive sum"));
        }
        let mut pmf = vec![0.0];
        pmf.extend_from_slice(weights);
        normalize(&mut pmf);
        Ok(Self { kind: BeliefKind::Custom, pmf })
    }

    pub fn kind(&self) -> &BeliefKind {
        &self.kind
    }

    pub fn max_relays(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `P(N = n)`, zero outside `{1, ..., K}`.
    pub fn pmf(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or(0.0)
    }

    /// Pmf indexed by `n = 0..=K`.
    pub fn masses(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (n, p) in self.pmf.iter().enumerate().skip(1) {
            acc += p;
            if u < acc {
                return n;
            }
        }
        // rounding in the cumulative sum: take the last supported count
        self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(1)
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let lf = |m: usize| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
    lf(n) - lf(k) - lf(n - k)
}

/// One realization of the relay population.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Sorted wake-up times, all in `(0, T)`.
    pub wake: Vec<f64>,
    /// Reward of the relay waking at `wake[i]`.
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn relays(&self) -> usize {
        self.wake.len()
    }
}

/// Draw the relay count, sorted wake-up times and rewards.
pub fn sample_episode<R: Rng + ?Sized>(
    model: &WakeModel,
    dist: &RewardDistribution,
    belief: &InitialBelief,
    rng: &mut R,
) -> Episode {
    let n = belief.sample(rng);
    let mut wake: Vec<f64> = Vec::with_capacity(n);
    // the continuous model has no simultaneous wake-ups: redraw exact ties
    loop {
        wake.clear();
        wake.extend((0..n).map(|_| loop {
            let x = rng.random::<f64>() * model.period();
            if x > 0.0 {
                break x;
            }
        }));
        wake.sort_by(f64::total_cmp);
        if wake.windows(2).all(|p| p[0] < p[1]) {
            break;
        }
    }
    let rewards = (0..n).map(|_| dist.sample(rng)).collect();
    Episode { wake, rewards }
}
