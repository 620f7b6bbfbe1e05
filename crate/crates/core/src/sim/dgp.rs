//! Synthetic data generating processes with known CATEs.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Observation, PanelDataset};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpKind {
    /// `Y = D·X·β + X·γ + U`, CATE `β·X`.
    Dgp1,
    /// `Y = −D·X·β + X·γ + U`, CATE `−β·X`.
    Dgp2,
    /// Seven-quarter earnings panel with a benefit-cliff shaped effect.
    Kink,
    /// Censored baseline plus an additive effect `c + η`.
    Shift,
}

impl DgpKind {
    pub fn label(self) -> &'static str {
        match self {
            DgpKind::Dgp1 => "dgp1",
            DgpKind::Dgp2 => "dgp2",
            DgpKind::Kink => "kink",
            DgpKind::Shift => "shift",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dgp1" => Ok(DgpKind::Dgp1),
            "dgp2" => Ok(DgpKind::Dgp2),
            "kink" => Ok(DgpKind::Kink),
            "shift" => Ok(DgpKind::Shift),
            other => Err(Error::Config(format!("unknown DGP `{other}`"))),
        }
    }
}

/// Effect schedule of the KINK process.
///
/// With proxy earnings `P` and threshold `F`, the effect before censoring is
/// `g(r)` at `r = P − F`, piecewise linear through `knots` given as
/// `(r / F, g)` and flat beyond the outer knots.
#[derive(Debug, Clone, PartialEq)]
pub struct KinkParams {
    pub threshold: f64,
    pub knots: Vec<(f64, f64)>,
    /// Share of individuals with no prior earnings.
    pub zero_prior_share: f64,
    /// Half-width of the multiplicative noise on baseline earnings.
    pub noise_half_width: f64,
    pub periods: usize,
}

impl Default for KinkParams {
    fn default() -> Self {
        Self {
            threshold: 3000.0,
            knots: vec![(-1.0, 800.0), (-0.25, 0.0), (0.0, -400.0), (1.0, 0.0)],
            zero_prior_share: 0.3,
            noise_half_width: 0.1,
            periods: 7,
        }
    }
}

impl KinkParams {
    /// `g(r)` in currency units.
    pub fn effect(&self, r: f64) -> f64 {
        let z = r / self.threshold;
        let k = &self.knots;
        if z <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if z <= x1 {
                return y0 + (y1 - y0) * (z - x0) / (x1 - x0);
            }
        }
        k[k.len() - 1].1
    }

    /// Checks the three sign regions: positive where proxy earnings are
    /// non-positive, both signs strictly between zero and the threshold, and
    /// non-positive at or above the threshold.
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::Config("KINK threshold must be positive".into()));
        }
        if self.knots.len() < 2 || self.knots.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("KINK needs at least two finite knots".into()));
        }
        if self.knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("KINK knots must be strictly increasing".into()));
        }
        if !(0.0..1.0).contains(&self.zero_prior_share) || !(0.0..1.0).contains(&self.noise_half_width) {
            return Err(Error::Config("KINK shares must lie in [0, 1)".into()));
        }
        if self.periods == 0 {
            return Err(Error::Config("KINK needs at least one period".into()));
        }
        let f = self.threshold;
        let g = |z: f64| self.effect(z * f);
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        let low: Vec<f64> = std::iter::once(first.1)
            .chain(self.knots.iter().filter(|k| k.0 <= -1.0).map(|k| k.1))
            .chain([g(-1.0)])
            .collect();
        if low.iter().any(|&v| v <= 0.0) {
            return Err(Error::Config(
                "KINK effect must be positive at or below zero earnings".into(),
            ));
        }
        let mid: Vec<f64> = [g(-1.0), g(0.0)]
            .into_iter()
            .chain(self.knots.iter().filter(|k| k.0 > -1.0 && k.0 < 0.0).map(|k| k.1))
            .collect();
        if !(mid.iter().any(|&v| v > 0.0) && mid.iter().any(|&v| v < 0.0)) {
            return Err(Error::Config("KINK effect must change sign below the threshold".into()));
        }
        let high: Vec<f64> = [g(0.0), last.1]
            .into_iter()
            .chain(self.knots.iter().filter(|k| k.0 >= 0.0).map(|k| k.1))
            .collect();
        if high.iter().any(|&v| v > 0.0) {
            return Err(Error::Config(
                "KINK effect must be non-positive at or above the threshold".into(),
            ));
        }
        Ok(())
    }

    /// Proxy earnings of one individual-period.
    fn proxy(&self, c: &KinkCovariates, period: usize) -> f64 {
        self.threshold
            * (-0.55
                + c.prior / self.threshold
                + 0.05 * (period as f64 - 1.0)
                + 0.1 * c.z1
                + 0.04 * (c.children - 2.5)
                + 0.004 * (c.age - 30.0))
    }

    /// `E[max(0, Y₀ + g) − Y₀]` over the multiplicative noise, given the proxy.
    pub fn true_cate(&self, proxy: f64) -> f64 {
        let g = self.effect(proxy - self.threshold);
        let base = proxy.max(0.0);
        let a = self.noise_half_width;
        let lo = base * (1.0 - a) + g;
        let hi = base * (1.0 + a) + g;
        let e_pos = if lo >= 0.0 {
            0.5 * (lo + hi)
        } else if hi <= 0.0 {
            0.0
        } else {
            hi * hi / (2.0 * (hi - lo))
        };
        e_pos - base
    }
}

struct KinkCovariates {
    prior: f64,
    children: f64,
    age: f64,
    z1: f64,
    z2: f64,
}

/// Parameters of the SHIFT process: `Y(0) = max(0, a + b·x + ε)`,
/// `Y(1) = Y(0) + c + η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftParams {
    pub intercept: f64,
    pub slope: f64,
    pub noise_sd: f64,
    pub effect: f64,
    /// Standard deviation of the idiosyncratic effect η; zero makes the
    /// effect homogeneous.
    pub effect_noise_sd: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            intercept: 0.0,
            slope: 2000.0,
            noise_sd: 1000.0,
            effect: 300.0,
            effect_noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub kind: DgpKind,
    /// Individuals.
    pub n: usize,
    pub beta: f64,
    pub gamma: f64,
    pub noise_sd: f64,
    pub p_treat: f64,
    pub kink: KinkParams,
    pub shift: ShiftParams,
}

impl DgpConfig {
    pub fn new(kind: DgpKind, n: usize) -> Self {
        Self {
            kind,
            n,
            beta: 1.0,
            gamma: 1.0,
            noise_sd: 4.0,
            p_treat: 0.5,
            kink: KinkParams::default(),
            shift: ShiftParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("a DGP needs at least 2 individuals".into()));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(Error::Config(format!(
                "treatment probability {} outside (0, 1)",
                self.p_treat
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config("noise sd must be positive".into()));
        }
        if !(self.beta.is_finite() && self.gamma.is_finite()) {
            return Err(Error::Config("beta and gamma must be finite".into()));
        }
        match self.kind {
            DgpKind::Kink => self.kink.validate(),
            DgpKind::Shift => {
                let s = &self.shift;
                if !(s.noise_sd >= 0.0 && s.effect_noise_sd >= 0.0) {
                    return Err(Error::Config("shift noise sds must be non-negative".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    /// `E[Y(1) − Y(0) | X]` per row.
    pub true_cate: Vec<T>,
    /// Population ATE where it has a closed form; the sample mean of
    /// `true_cate` for KINK.
    pub true_ate: T,
}

pub const KINK_COVARIATES: [&str; 6] = ["prior_earnings", "children", "age", "z1", "z2", "quarter"];

/// Draws one dataset. All randomness comes from `stream(seed, "dgp", 0)`.
pub fn generate<T: Scalar>(cfg: &DgpConfig, seed: u64) -> Result<(PanelDataset<T>, GroundTruth<T>)> {
    cfg.validate()?;
    let mut rng = stream(seed, "dgp", 0);
    let mut records = Vec::new();
    let mut cate = Vec::new();
    let (names, ate): (Vec<String>, Option<f64>) = match cfg.kind {
        DgpKind::Dgp1 | DgpKind::Dgp2 => {
            let sign = if cfg.kind == DgpKind::Dgp1 { 1.0 } else { -1.0 };
            let normal = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
            for i in 0..cfg.n {
                let x: f64 = rng.random();
                let d = rng.random::<f64>() < cfg.p_treat;
                let u = normal.sample(&mut rng);
                let dv = if d { 1.0 } else { 0.0 };
                let y = sign * dv * x * cfg.beta + x * cfg.gamma + u;
                records.push(obs(i, 1, d, y, vec![x]));
                cate.push(sign * cfg.beta * x);
            }
            (vec!["x".into()], Some(sign * cfg.beta * 0.5))
        }
        DgpKind::Shift => {
            let s = cfg.shift;
            for i in 0..cfg.n {
                let x: f64 = rng.random();
                let d = rng.random::<f64>() < cfg.p_treat;
                let e = s.noise_sd * standard_normal(&mut rng);
                let eta = s.effect_noise_sd * standard_normal(&mut rng);
                let y0 = (s.intercept + s.slope * x + e).max(0.0);
                let y = if d { y0 + s.effect + eta } else { y0 };
                records.push(obs(i, 1, d, y, vec![x]));
                cate.push(s.effect);
            }
            (vec!["x".into()], Some(s.effect))
        }
        DgpKind::Kink => {
            let k = &cfg.kink;
            let f = k.threshold;
            for i in 0..cfg.n {
                let zero = rng.random::<f64>() < k.zero_prior_share;
                let s: f64 = 0.25 + 1.35 * rng.random::<f64>().sqrt();
                let c = KinkCovariates {
                    prior: if zero { 0.0 } else { s * f },
                    children: f64::from(rng.random_range(1..=4u8)),
                    age: rng.random_range(18.0..42.0),
                    z1: rng.random_range(-1.0..1.0),
                    z2: standard_normal(&mut rng),
                };
                let d = rng.random::<f64>() < cfg.p_treat;
                for t in 1..=k.periods {
                    let p = k.proxy(&c, t);
                    let u = rng.random_range(-k.noise_half_width..=k.noise_half_width);
                    let y0 = p.max(0.0) * (1.0 + u);
                    let y = if d { (y0 + k.effect(p - f)).max(0.0) } else { y0 };
                    let x = vec![c.prior, c.children, c.age, c.z1, c.z2, t as f64];
                    records.push(obs(i, t as i64, d, y, x));
                    cate.push(k.true_cate(p));
                }
            }
            (KINK_COVARIATES.iter().map(|s| s.to_string()).collect(), None)
        }
    };
    let records: Vec<Observation<T>> = records
        .into_iter()
        .map(|o: Observation<f64>| Observation {
            individual_id: o.individual_id,
            period: o.period,
            treated: o.treated,
            outcome: T::lit(o.outcome),
            covariates: o.covariates.into_iter().map(T::lit).collect(),
        })
        .collect();
    let ds = PanelDataset::new(records, names)?;
    let true_ate = ate.unwrap_or_else(|| cate.iter().sum::<f64>() / cate.len() as f64);
    Ok((
        ds,
        GroundTruth {
            true_cate: cate.into_iter().map(T::lit).collect(),
            true_ate: T::lit(true_ate),
        },
    ))
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

fn obs(i: usize, period: i64, treated: bool, y: f64, covariates: Vec<f64>) -> Observation<f64> {
    Observation {
        individual_id: i.to_string(),
        period,
        treated,
        outcome: y,
        covariates,
    }
}
