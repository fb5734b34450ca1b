//! Backward induction of the known-count thresholds `phi_l(w, b)`: the value,
//! in reward units, of continuing with `l` relays still to wake.
//!
//! `phi_0 = 0` and
//! `phi_l(w, b) = E[max{b, R, phi_{l-1}(w + U, max{b, R})}] - E[U] / eta`
//! where `U` is the smallest of `l` uniform gaps on `(0, T - w)`.
//!
//! The `u` expectation integrates the piecewise-linear interpolant in `w`
//! exactly against the law of `U`; the `r` expectation integrates the
//! piecewise-linear interpolant in `r` exactly against the tabulated cdf.
//! Both rules are positive and reproduce linear functions, so the discrete
//! tables keep `phi_l >= b - (T - w) / eta` and monotonicity in `b`.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::belief::HopObservation;
use crate::error::{domain, Error, Result};
use crate::model::{RewardDistribution, WakeModel};
use crate::policy::Action;
use crate::quadrature::min_uniform_hat_weights;

/// Denominators of `delta_l` at or below this are treated as zero.
pub const DELTA_ZERO: f64 = 1e-12;
/// Negative denominators beyond this mean the solver broke its invariant.
pub const DELTA_NEGATIVE_TOL: f64 = -1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SolverGrid {
    pub w_points: usize,
    pub b_points: usize,
}

impl Default for SolverGrid {
    fn default() -> Self {
        Self { w_points: 100, b_points: 100 }
    }
}

impl SolverGrid {
    pub fn new(w_points: usize, b_points: usize) -> Result<Self> {
        if w_points < 2 || b_points < 2 {
            return Err(domain("solver grid needs at least 2 points per axis"));
        }
        Ok(Self { w_points, b_points })
    }
}

/// Tables `phi_l` for `l = 0..K-1` on a uniform `(w, b)` lattice.
#[derive(Debug)]
pub struct ThresholdGrid {
    eta: f64,
    t: f64,
    r_max: f64,
    nw: usize,
    nb: usize,
    levels: usize,
    /// `tables[(l * nw + i) * nb + j] = phi_l(w_i, b_j)`.
    tables: Vec<f64>,
    clamps: AtomicU64,
}

impl Clone for ThresholdGrid {
    fn clone(&self) -> Self {
        Self {
            eta: self.eta,
            t: self.t,
            r_max: self.r_max,
            nw: self.nw,
            nb: self.nb,
            levels: self.levels,
            tables: self.tables.clone(),
            clamps: AtomicU64::new(self.clamps.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for ThresholdGrid {
    fn eq(&self, o: &Self) -> bool {
        self.eta == o.eta
            && self.t == o.t
            && self.r_max == o.r_max
            && self.nw == o.nw
            && self.nb == o.nb
            && self.levels == o.levels
            && self.tables == o.tables
    }
}

/// Bilinear interpolation weights for one `(w, b)`, reusable across `l`.
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    i: usize,
    j: usize,
    fw: f64,
    fb: f64,
}

/// Solve `phi_0..phi_{K-1}` for multiplier `eta`.
pub fn solve_phi(
    grid: SolverGrid,
    dist: &RewardDistribution,
    model: &WakeModel,
    eta: f64,
    k_max: usize,
) -> Result<ThresholdGrid> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(domain(format!("eta must be positive, got {eta}")));
    }
    if k_max < 1 {
        return Err(domain("K must be at least 1"));
    }
    let SolverGrid { w_points: nw, b_points: nb } = SolverGrid::new(grid.w_points, grid.b_points)?;
    let t = model.period();
    let r_max = dist.support_max();
    let hw = t / (nw - 1) as f64;
    let hb = r_max / (nb - 1) as f64;
    let b_at = |j: usize| if j + 1 == nb { r_max } else { j as f64 * hb };
    let w_at = |i: usize| if i + 1 == nw { t } else { i as f64 * hw };

    // E[g(max{b_j, R})] = cdf_j g_j + sum_{m >= j} (lo_m g_m + hi_m g_{m+1})
    let table = dist.table();
    let cdf: Vec<f64> = (0..nb).map(|j| table.cdf(b_at(j))).collect();
    let mut lo = vec![0.0; nb - 1];
    let mut hi = vec![0.0; nb - 1];
    for m in 0..nb - 1 {
        let (a, b) = (b_at(m), b_at(m + 1));
        let avg = table.cdf_integral(a, b) / (b - a);
        hi[m] = (cdf[m + 1] - avg).max(0.0);
        lo[m] = (avg - cdf[m]).max(0.0);
    }

    let plane = nw * nb;
    let mut tables = vec![0.0; k_max * plane];
    let mut g = vec![0.0; plane];
    for l in 1..k_max {
        let (done, rest) = tables.split_at_mut(l * plane);
        let prev = &done[(l - 1) * plane..];
        let cur = &mut rest[..plane];

        g.par_chunks_mut(nb).enumerate().for_each(|(i, g_row)| {
            let row = &prev[i * nb..(i + 1) * nb];
            let h = |j: usize| b_at(j).max(row[j]);
            let mut suffix = 0.0;
            g_row[nb - 1] = h(nb - 1);
            for j in (0..nb - 1).rev() {
                suffix += lo[j] * h(j) + hi[j] * h(j + 1);
                g_row[j] = cdf[j] * h(j) + suffix;
            }
        });

        let g = &g;
        let eta_l = (l as f64 + 1.0) * eta;
        cur.par_chunks_mut(nb).enumerate().for_each(|(i, out)| {
            let weights = min_uniform_hat_weights(l, nw - 1 - i);
            out.fill(0.0);
            for (m, wm) in weights.iter().enumerate() {
                if *wm == 0.0 {
                    continue;
                }
                let src = &g[(i + m) * nb..(i + m + 1) * nb];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += wm * s;
                }
            }
            let wait = (t - w_at(i)) / eta_l;
            for o in out.iter_mut() {
                *o -= wait;
            }
        });
    }

    Ok(ThresholdGrid { eta, t, r_max, nw, nb, levels: k_max, tables, clamps: AtomicU64::new(0) })
}

impl ThresholdGrid {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn period(&self) -> f64 {
        self.t
    }

    pub fn support_max(&self) -> f64 {
        self.r_max
    }

    /// Number of tables, `K`; valid `l` is `0..levels()`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn grid(&self) -> SolverGrid {
        SolverGrid { w_points: self.nw, b_points: self.nb }
    }

    pub fn w_node(&self, i: usize) -> f64 {
        if i + 1 == self.nw {
            self.t
        } else {
            i as f64 * self.t / (self.nw - 1) as f64
        }
    }

    pub fn b_node(&self, j: usize) -> f64 {
        if j + 1 == self.nb {
            self.r_max
        } else {
            j as f64 * self.r_max / (self.nb - 1) as f64
        }
    }

    /// Stored value at node `(i, j)` of table `l`.
    pub fn node(&self, l: usize, i: usize, j: usize) -> f64 {
        self.tables[(l * self.nw + i) * self.nb + j]
    }

    /// Number of lookups that fell outside the grid and were clamped.
    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    #[inline]
    pub fn locate(&self, w: f64, b: f64) -> GridPoint {
        const SLACK: f64 = 1e-12;
        if w < -SLACK || w > self.t + SLACK || b < -SLACK || b > self.r_max + SLACK || w.is_nan() || b.is_nan() {
            self.clamps.fetch_add(1, Ordering::Relaxed);
        }
        let x = (w.clamp(0.0, self.t) / self.t) * (self.nw - 1) as f64;
        let y = (b.clamp(0.0, self.r_max) / self.r_max) * (self.nb - 1) as f64;
        let i = (x as usize).min(self.nw - 2);
        let j = (y as usize).min(self.nb - 2);
        GridPoint { i, j, fw: x - i as f64, fb: y - j as f64 }
    }

    #[inline]
    pub fn phi_at(&self, l: usize, p: &GridPoint) -> f64 {
        assert!(l < self.levels, "threshold level {l} beyond solved range 0..{}", self.levels);
        let base = (l * self.nw + p.i) * self.nb + p.j;
        let v00 = self.tables[base];
        let v01 = self.tables[base + 1];
        let v10 = self.tables[base + self.nb];
        let v11 = self.tables[base + self.nb + 1];
        let a = v00 + p.fb * (v01 - v00);
        let c = v10 + p.fb * (v11 - v10);
        a + p.fw * (c - a)
    }

    /// Bilinear `phi_l(w, b)`; off-grid arguments clamp and are counted.
    pub fn phi(&self, l: usize, w: f64, b: f64) -> f64 {
        let p = self.locate(w, b);
        self.phi_at(l, &p)
    }

    /// `delta_l` for `l = 1..=K-k` at stage `k`; `+inf` stands for an edge on
    /// which stopping is optimal everywhere.
    pub fn delta_thresholds(&self, k: usize, w: f64, b: f64) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.fill_deltas(k, w, b, &mut out)?;
        Ok(out)
    }

    /// Buffer-reusing form of [`Self::delta_thresholds`].
    pub fn fill_deltas(&self, k: usize, w: f64, b: f64, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let span = self.t - w;
        if !(span > 0.0) {
            return Err(domain(format!("delta thresholds need w < T, got {w}")));
        }
        let top = self.levels.saturating_sub(k.max(1));
        let p = self.locate(w, b);
        for l in 1..=top {
            out.push(edge_threshold(span, self.eta, b, self.phi_at(l, &p))?);
        }
        Ok(())
    }

    /// Known-count rule: stop iff `b >= phi_{n-k}(w, b)`.
    pub fn comdp_decision(&self, n: usize, obs: &HopObservation) -> Action {
        if obs.stage >= n || obs.w >= self.t {
            return Action::Stop;
        }
        if obs.b >= self.phi(n - obs.stage, obs.w, obs.b) {
            Action::Stop
        } else {
            Action::Continue
        }
    }

    const MAGIC: &'static [u8; 8] = b"RSPHI001";

    /// Little-endian binary dump: magic, shape, parameters, table values.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(Self::MAGIC)?;
        for v in [self.nw as u64, self.nb as u64, self.levels as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in [self.eta, self.t, self.r_max] {
            out.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.tables.len() * 8);
        for v in &self.tables {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Cache(m.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(bad("not a threshold table file"));
        }
        let mut word = [0u8; 8];
        let mut next = |input: &mut dyn Read| -> Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let nw = u64::from_le_bytes(next(&mut input)?) as usize;
        let nb = u64::from_le_bytes(next(&mut input)?) as usize;
        let levels = u64::from_le_bytes(next(&mut input)?) as usize;
        let eta = f64::from_le_bytes(next(&mut input)?);
        let t = f64::from_le_bytes(next(&mut input)?);
        let r_max = f64::from_le_bytes(next(&mut input)?);
        if nw < 2 || nb < 2 || levels < 1 || nw * nb * levels > 1 << 28 {
            return Err(bad("implausible table shape"));
        }
        let mut raw = vec![0u8; nw * nb * levels * 8];
        input.read_exact(&mut raw).map_err(|_| bad("truncated table"))?;
        let tables = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { eta, t, r_max, nw, nb, levels, tables, clamps: AtomicU64::new(0) })
    }
}

/// `delta = (T - w) / (T - w - eta (b - phi))` for span `T - w`.
pub fn edge_threshold(span: f64, eta: f64, b: f64, phi: f64) -> Result<f64> {
    let den = span - eta * (b - phi);
    if den < DELTA_NEGATIVE_TOL {
        return Err(Error::Consistency(format!(
            "phi below b - (T - w)/eta: span={span} eta={eta} b={b} phi={phi}"
        )));
    }
    Ok(if den <= DELTA_ZERO { f64::INFINITY } else { span / den })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RewardDistribution;

    fn uniform() -> RewardDistribution {
        RewardDistribution::preset("uniform01").unwrap()
    }

    fn unit() -> WakeModel {
        WakeModel::new(1.0).unwrap()
    }

    #[test]
    fn phi_zero_vanishes_and_phi_one_has_closed_form() {
        let d = uniform();
        for eta in [0.5, 1.0, 7.0] {
            let tg = solve_phi(SolverGrid::default(), &d, &unit(), eta, 4).unwrap();
            for i in 0..100 {
                for j in 0..100 {
                    assert_eq!(tg.node(0, i, j), 0.0);
                    let (w, b) = (tg.w_node(i), tg.b_node(j));
                    let closed = d.expected_max_with(b) - (1.0 - w) / (2.0 * eta);
                    assert!((tg.node(1, i, j) - closed).abs() < 1e-12, "{eta} {i} {j}");
                }
            }
        }
        let tg = solve_phi(SolverGrid::default(), &d, &unit(), 1.0, 2).unwrap();
        assert!(tg.phi(1, 0.0, 0.0).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_and_monotonicity() {
        let d = RewardDistribution::preset("progress10").unwrap();
        for eta in [0.1, 1.0, 10.0, 1000.0] {
            let tg = solve_phi(SolverGrid::default(), &d, &unit(), eta, 20).unwrap();
            for l in 1..20 {
                for i in 0..100 {
                    let w = tg.w_node(i);
                    for j in 0..100 {
                        let b = tg.b_node(j);
                        let v = tg.node(l, i, j);
                        assert!(-eta * v <= 1.0 - w - eta * b + 1e-9 * eta.max(1.0), "eta={eta} l={l} i={i} j={j} v={v} b={b} w={w}");
                        if j > 0 {
                            assert!(v >= tg.node(l, i, j - 1) - 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn phi_at_top_reward_stays_below_top() {
        let tg = solve_phi(SolverGrid::default(), &uniform(), &unit(), 1000.0, 10).unwrap();
        for l in 0..10 {
            for i in 0..100 {
                assert!(tg.node(l, i, 99) <= 1.0 + 1e-12);
            }
        }
        let obs = HopObservation { stage: 1, w: 0.3, b: 1.0 };
        assert_eq!(tg.comdp_decision(8, &obs), Action::Stop);
    }

    #[test]
    fn lookup_contract() {
        let tg = solve_phi(SolverGrid::new(11, 21).unwrap(), &uniform(), &unit(), 2.0, 5).unwrap();
        assert_eq!(tg.phi(3, tg.w_node(4), tg.b_node(7)), tg.node(3, 4, 7));
        assert_eq!(tg.phi(0, 0.37, 0.81), 0.0);
        let (w, b) = (0.5 * (tg.w_node(2) + tg.w_node(3)), 0.5 * (tg.b_node(5) + tg.b_node(6)));
        let avg = (tg.node(2, 2, 5) + tg.node(2, 2, 6) + tg.node(2, 3, 5) + tg.node(2, 3, 6)) / 4.0;
        assert!((tg.phi(2, w, b) - avg).abs() < 1e-14);
        assert_eq!(tg.clamp_count(), 0);
        let _ = tg.phi(2, 1.5, 0.5);
        assert_eq!(tg.clamp_count(), 1);
        assert_eq!(tg.phi(2, 1.5, 0.5), tg.phi(2, 1.0, 0.5));
    }

    #[test]
    fn edge_threshold_examples() {
        assert_eq!(edge_threshold(0.5, 1.0, 0.3, 0.3).unwrap(), 1.0);
        assert!((edge_threshold(0.5, 1.0, 0.2, 0.1).unwrap() - 1.25).abs() < 1e-12);
        assert!(edge_threshold(0.5, 1.0, 0.4, 0.1).unwrap() > 1.0);
        assert_eq!(edge_threshold(0.5, 1.0, 0.6, 0.1).unwrap(), f64::INFINITY);
        assert!(matches!(edge_threshold(0.5, 1.0, 0.7, 0.1), Err(Error::Consistency(_))));
    }

    #[test]
    fn deltas_have_one_entry_per_remaining_level() {
        let tg = solve_phi(SolverGrid::default(), &uniform(), &unit(), 3.0, 6).unwrap();
        let d = tg.delta_thresholds(2, 0.4, 0.3).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|&x| x > 0.0));
        assert!(tg.delta_thresholds(6, 0.4, 0.3).unwrap().is_empty());
        assert!(tg.delta_thresholds(1, 1.0, 0.3).is_err());
    }

    #[test]
    fn comdp_rule() {
        let tg = solve_phi(SolverGrid::default(), &uniform(), &unit(), 1000.0, 3).unwrap();
        let last = HopObservation { stage: 2, w: 0.5, b: 0.0 };
        assert_eq!(tg.comdp_decision(2, &last), Action::Stop);
        let first = HopObservation { stage: 1, w: 0.0, b: 0.0 };
        assert_eq!(tg.comdp_decision(3, &first), Action::Continue);
    }

    #[test]
    fn binary_roundtrip() {
        let tg = solve_phi(SolverGrid::new(7, 9).unwrap(), &uniform(), &unit(), 2.5, 4).unwrap();
        let mut buf = Vec::new();
        tg.write_to(&mut buf).unwrap();
        let back = ThresholdGrid::read_from(buf.as_slice()).unwrap();
        assert_eq!(tg, back);
        assert!(ThresholdGrid::read_from(&buf[..20]).is_err());
        assert!(ThresholdGrid::read_from(&b"garbage!garbage!"[..]).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_phi(SolverGrid::default(), &uniform(), &unit(), 0.0, 3).is_err());
        assert!(solve_phi(SolverGrid::default(), &uniform(), &unit(), 1.0, 0).is_err());
        assert!(SolverGrid::new(1, 10).is_err());
    }
}
