//! Posterior on the relay count and the observable hop state.

use crate::error::{domain, Error, Result};
use crate::model::{InitialBelief, WakeModel};

/// Pmf over the total relay count `n` in `{stage, ..., K}` after `stage`
/// relays have woken. Stage 0 is the prior, whose mass at `n = 0` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    stage: usize,
    k_max: usize,
    /// `mass[i] = P(N = stage + i)`.
    mass: Vec<f64>,
}

impl BeliefState {
    /// Build from explicit masses on `{stage, ..., K}`; renormalizes.
    pub fn new(stage: usize, k_max: usize, mass: Vec<f64>) -> Result<Self> {
        if stage > k_max || mass.len() != k_max - stage + 1 {
            return Err(domain(format!(
                "belief at stage {stage} with K={k_max} needs {} entries, got {}",
                (k_max + 1).saturating_sub(stage),
                mass.len()
            )));
        }
        if mass.iter().any(|&p| !(p >= 0.0)) {
            return Err(domain("belief entries must be nonnegative"));
        }
        let s: f64 = mass.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(domain("belief needs positive total mass"));
        }
        Ok(Self { stage, k_max, mass: mass.into_iter().map(|p| p / s).collect() })
    }

    /// Prior before any relay has woken.
    pub fn prior(p0: &InitialBelief) -> Self {
        Self { stage: 0, k_max: p0.max_relays(), mass: p0.masses().to_vec() }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn max_relays(&self) -> usize {
        self.k_max
    }

    /// `P(N = n)`; zero outside `{stage, ..., K}`.
    pub fn prob(&self, n: usize) -> f64 {
        if n < self.stage {
            return 0.0;
        }
        self.mass.get(n - self.stage).copied().unwrap_or(0.0)
    }

    /// Masses on `{stage, ..., K}`.
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(i, p)| (self.stage + i) as f64 * p).sum()
    }

    /// Bayes update after the next relay wakes `u` after time `w`.
    pub fn update(&self, model: &WakeModel, w: f64, u: f64) -> Result<Self> {
        let mut out = self.clone();
        out.update_in_place(model, w, u)?;
        Ok(out)
    }

    /// In-place variant of [`Self::update`] for simulation loops.
    pub fn update_in_place(&mut self, model: &WakeModel, w: f64, u: f64) -> Result<()> {
        let k = self.stage;
        if k >= self.k_max {
            return Err(Error::InvalidTransition(format!("no relay can wake after stage K={}", self.k_max)));
        }
        let t = model.period();
        let span = t - w;
        if !(w >= 0.0 && span > 0.0) {
            return Err(domain(format!("wake time {w} outside [0, {t})")));
        }
        if !(u > 0.0 && u < span) {
            return Err(domain(format!("gap {u} outside (0, {span})")));
        }
        let ln_rest = (span - u).ln();
        let ln_span = span.ln();
        let mut top = f64::NEG_INFINITY;
        let mut logs = Vec::with_capacity(self.mass.len() - 1);
        for (i, &p) in self.mass.iter().enumerate().skip(1) {
            let l = if p > 0.0 { p.ln() + WakeModel::log_cond_pdf(i, ln_rest, ln_span) } else { f64::NEG_INFINITY };
            top = top.max(l);
            logs.push(l);
        }
        if top == f64::NEG_INFINITY {
            return Err(Error::InvalidTransition(format!(
                "belief at stage {k} has no mass above {k}; no further relay can wake"
            )));
        }
        let mut s = 0.0;
        for l in &mut logs {
            *l = (*l - top).exp();
            s += *l;
        }
        for l in &mut logs {
            *l /= s;
        }
        self.mass = logs;
        self.stage = k + 1;
        Ok(())
    }

    /// Point mass on `n` at `stage`.
    pub fn corner(stage: usize, n: usize, k_max: usize) -> Result<Self> {
        if n < stage || n > k_max {
            return Err(domain(format!("corner n={n} outside {stage}..={k_max}")));
        }
        let mut mass = vec![0.0; k_max - stage + 1];
        mass[n - stage] = 1.0;
        Ok(Self { stage, k_max, mass })
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.mass.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// Observable part of the hop state: stage, wake time of the latest relay
/// and best reward so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopObservation {
    pub stage: usize,
    pub w: f64,
    pub b: f64,
}

impl HopObservation {
    pub fn start() -> Self {
        Self { stage: 0, w: 0.0, b: 0.0 }
    }

    /// Next stage after a gap `u` and a new reward `r`. A gap reaching past
    /// `T` means no relay is left: the time clamps to `T` and the reward is 0.
    pub fn advance(&self, u: f64, r: f64, t: f64) -> Self {
        let w = self.w + u;
        if w >= t {
            return Self { stage: self.stage + 1, w: t, b: self.b };
        }
        Self { stage: self.stage + 1, w, b: self.b.max(r) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BeliefKind;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit() -> WakeModel {
        WakeModel::new(1.0).unwrap()
    }

    #[test]
    fn hand_bayes_example() {
        let p = BeliefState::new(1, 3, vec![0.0, 0.5, 0.5]).unwrap();
        let q = p.update(&unit(), 0.0, 0.25).unwrap();
        assert_eq!(q.stage(), 2);
        assert!((q.prob(2) - 0.4).abs() < 1e-12);
        assert!((q.prob(3) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn point_mass_is_preserved() {
        let p = BeliefState::corner(1, 4, 6).unwrap();
        let q = p.update(&unit(), 0.1, 0.3).unwrap();
        assert_eq!(q.prob(4), 1.0);
        let r = q.update(&unit(), 0.4, 0.2).unwrap();
        assert_eq!(r.stage(), 3);
        assert_eq!(r.prob(4), 1.0);
    }

    #[test]
    fn no_mass_above_stage_is_invalid() {
        let p = BeliefState::corner(2, 2, 4).unwrap();
        assert!(matches!(p.update(&unit(), 0.1, 0.2), Err(Error::InvalidTransition(_))));
        let top = BeliefState::corner(4, 4, 4).unwrap();
        assert!(matches!(top.update(&unit(), 0.1, 0.2), Err(Error::InvalidTransition(_))));
    }

    #[test]
    fn prior_update_starts_at_stage_one() {
        let p0 = InitialBelief::new(BeliefKind::TruncatedPoisson { lambda: 10.0 }, 50).unwrap();
        let b = BeliefState::prior(&p0).update(&unit(), 0.0, 0.05).unwrap();
        assert_eq!(b.stage(), 1);
        assert_eq!(b.masses().len(), 50);
        assert!((b.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survives_gaps_near_the_horizon() {
        let p0 = InitialBelief::new(BeliefKind::Uniform, 50).unwrap();
        let b = BeliefState::prior(&p0).update(&unit(), 0.0, 1.0 - 1e-9).unwrap();
        assert!(b.prob(1) > 0.999);
        assert!(b.masses().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn corners() {
        let c = BeliefState::corner(2, 2, 4).unwrap();
        assert_eq!(c.masses(), &[1.0, 0.0, 0.0]);
        let c = BeliefState::corner(2, 4, 4).unwrap();
        assert_eq!(c.masses(), &[0.0, 0.0, 1.0]);
        assert_eq!(c.entropy(), 0.0);
        assert!(BeliefState::corner(3, 2, 4).is_err());
    }

    #[test]
    fn advance_observation() {
        let o = HopObservation { stage: 1, w: 0.3, b: 0.5 };
        let a = o.advance(0.2, 0.4, 1.0);
        assert_eq!((a.stage, a.b), (2, 0.5));
        assert!((a.w - 0.5).abs() < 1e-15);
        assert_eq!(o.advance(0.2, 0.9, 1.0).b, 0.9);
        let end = o.advance(0.7, 0.0, 1.0);
        assert_eq!((end.w, end.b), (1.0, 0.5));
        let over = o.advance(0.9, 0.95, 1.0);
        assert_eq!((over.w, over.b), (1.0, 0.5));
    }

    #[test]
    fn early_wake_shifts_mass_up() {
        let mut rng = stream_rng(21, 0);
        let model = unit();
        for _ in 0..100 {
            let k_max = rng.random_range(3..20usize);
            let k = rng.random_range(1..k_max);
            let mass: Vec<f64> = (k..=k_max).map(|_| rng.random::<f64>() + 1e-3).collect();
            let p = BeliefState::new(k, k_max, mass).unwrap();
            let w = rng.random::<f64>() * 0.9;
            let u = (1.0 - w) * 0.01 * rng.random::<f64>().max(1e-6);
            let q = p.update(&model, w, u).unwrap();
            let upper: f64 = (k + 1..=k_max).map(|n| p.prob(n)).sum();
            let prior_mean: f64 = (k + 1..=k_max).map(|n| n as f64 * p.prob(n)).sum::<f64>() / upper;
            assert!(q.mean() >= prior_mean - 1e-12);
        }
    }

    proptest! {
        #[test]
        fn update_is_normalized(
            k_max in 2usize..40,
            stage_frac in 0.0f64..1.0,
            seed in any::<u64>(),
            w in 0.0f64..0.999,
            u_frac in 1e-6f64..0.999_999,
        ) {
            let k = ((k_max - 1) as f64 * stage_frac) as usize;
            let mut rng = stream_rng(seed, 0);
            let mass: Vec<f64> = (k..=k_max).map(|_| rng.random::<f64>()).collect();
            prop_assume!(mass[1..].iter().sum::<f64>() > 0.0);
            let p = BeliefState::new(k, k_max, mass).unwrap();
            let q = p.update(&unit(), w, (1.0 - w) * u_frac).unwrap();
            prop_assert_eq!(q.masses().len(), k_max - k);
            prop_assert!((q.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(q.masses().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn point_masses_close_under_updates(
            n in 3usize..30, u1 in 0.01f64..0.4, u2 in 0.01f64..0.4,
        ) {
            let p = BeliefState::corner(1, n, 30).unwrap();
            let q = p.update(&unit(), 0.1, u1).unwrap().update(&unit(), 0.1 + u1, u2).unwrap();
            prop_assert_eq!(q, BeliefState::corner(3, n, 30).unwrap());
        }
    }
}
