//! Synthetic choice data with known ground truth: Gumbel-error utility
//! maximization over linear terms (optionally with normally distributed
//! person-level coefficients) plus optional nonlinear response terms.

use alloc::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::prelude::*;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dist {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl Dist {
    fn sample(&self, r: &mut rng::Rng) -> f64 {
        match *self {
            Dist::Uniform { lo, hi } => lo + (hi - lo) * r.random::<f64>(),
            Dist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(r);
                mean + sd * z
            }
            Dist::Bernoulli { p } => f64::from(u8::from(r.random::<f64>() < p)),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Dist::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            Dist::Bernoulli { p } => (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid distribution {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGen {
    pub name: String,
    pub dist: Dist,
    /// Alternatives carrying their own draw of this attribute. Empty means
    /// an individual-level feature, identical across alternatives.
    #[serde(default)]
    pub alts: Vec<String>,
    /// Draw once per person instead of once per occasion.
    #[serde(default)]
    pub per_person: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermTruth {
    pub feature: String,
    pub alts: Vec<String>,
    pub coef: String,
    pub beta: f64,
    /// Standard deviation of a person-level normal coefficient.
    #[serde(default)]
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearTerm {
    /// `beta * clamp(x, lo, hi)` on one alternative: flat outside `[lo, hi]`.
    Clamp { feature: String, alt: String, lo: f64, hi: f64, beta: f64 },
    /// `beta * x_a * x_b` on one alternative.
    Interaction { a: String, b: String, alt: String, beta: f64 },
    /// `beta * 1[x > threshold]` on one alternative.
    Step { feature: String, alt: String, threshold: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub alternatives: Vec<String>,
    pub n_individuals: usize,
    pub n_occasions: usize,
    pub features: Vec<FeatureGen>,
    #[serde(default)]
    pub terms: Vec<TermTruth>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub nonlinear: Vec<NonlinearTerm>,
    /// Multiplies every systematic utility (inverse Gumbel scale).
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// What the generator used; written next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    pub seed: u64,
    pub n_obs: usize,
    pub observed_shares: Vec<f64>,
    /// Share of choices that would be made without the Gumbel errors.
    pub deterministic_agreement: f64,
}

impl GeneratorConfig {
    fn alt(&self, name: &str) -> Result<usize> {
        self.alternatives
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::arg(format!("unknown alternative `{name}`")))
    }

    fn feature(&self, name: &str) -> Result<usize> {
        self.features.iter().position(|f| f.name == name).ok_or_else(|| Error::arg(format!("unknown feature `{name}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.alternatives.len() < 2 {
            return Err(Error::arg("at least two alternatives are required"));
        }
        if self.n_individuals == 0 || self.n_occasions == 0 {
            return Err(Error::arg("individual and occasion counts must be positive"));
        }
        if self.features.is_empty() {
            return Err(Error::arg("at least one feature is required"));
        }
        for f in &self.features {
            f.dist.validate()?;
            for a in &f.alts {
                self.alt(a)?;
            }
        }
        for t in &self.terms {
            self.feature(&t.feature)?;
            for a in &t.alts {
                self.alt(a)?;
            }
            if !(t.sd >= 0.0) || !t.beta.is_finite() {
                return Err(Error::arg(format!("term `{}` has an invalid beta or sd", t.coef)));
            }
        }
        for a in self.constants.keys() {
            self.alt(a)?;
        }
        for n in &self.nonlinear {
            match n {
                NonlinearTerm::Clamp { feature, alt, lo, hi, .. } => {
                    self.feature(feature)?;
                    self.alt(alt)?;
                    if lo > hi {
                        return Err(Error::arg("clamp bounds are reversed"));
                    }
                }
                NonlinearTerm::Interaction { a, b, alt, .. } => {
                    self.feature(a)?;
                    self.feature(b)?;
                    self.alt(alt)?;
                }
                NonlinearTerm::Step { feature, alt, .. } => {
                    self.feature(feature)?;
                    self.alt(alt)?;
                }
            }
        }
        Ok(())
    }
}

/// Simulates the configured population. Person `n` makes `n_occasions`
/// choices with one coefficient draw; each choice maximizes
/// `scale * V + Gumbel`.
pub fn generate(cfg: &GeneratorConfig, seed: u64) -> Result<(ChoiceDataset, GroundTruth)> {
    cfg.validate()?;
    let k = cfg.alternatives.len();
    let p = cfg.features.len();
    let n = cfg.n_individuals * cfg.n_occasions;

    let feat_alts: Vec<Vec<usize>> = cfg
        .features
        .iter()
        .map(|f| f.alts.iter().map(|a| cfg.alt(a)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut applies = vec![false; p * k];
    for (f, alts) in feat_alts.iter().enumerate() {
        for a in 0..k {
            applies[f * k + a] = alts.is_empty() || alts.contains(&a);
        }
    }
    let term_idx: Vec<(usize, Vec<usize>)> = cfg
        .terms
        .iter()
        .map(|t| Ok((cfg.feature(&t.feature)?, t.alts.iter().map(|a| cfg.alt(a)).collect::<Result<Vec<_>>>()?)))
        .collect::<Result<_>>()?;
    let constants: Vec<f64> = cfg.alternatives.iter().map(|a| *cfg.constants.get(a).unwrap_or(&0.0)).collect();

    let mut x = vec![0.0; n * k * p];
    let mut chosen = vec![0; n];
    let mut obs_ids = Vec::with_capacity(n);
    let mut person_ids = Vec::with_capacity(n);
    let mut agree = 0usize;

    for person in 0..cfg.n_individuals {
        let mut r = rng::stream(seed, &[person as u64]);
        let betas: Vec<f64> = cfg
            .terms
            .iter()
            .map(|t| if t.sd > 0.0 { Normal::new(t.beta, t.sd).unwrap().sample(&mut r) } else { t.beta })
            .collect();
        let person_vals: Vec<Vec<f64>> =
            cfg.features.iter().map(|f| (0..k).map(|_| f.dist.sample(&mut r)).collect()).collect();
        for occ in 0..cfg.n_occasions {
            let i = person * cfg.n_occasions + occ;
            obs_ids.push(i as u64);
            person_ids.push(person as u64);
            for (f, gen) in cfg.features.iter().enumerate() {
                let shared = if gen.per_person { person_vals[f][0] } else { gen.dist.sample(&mut r) };
                for a in 0..k {
                    if !applies[f * k + a] {
                        continue;
                    }
                    let v = if feat_alts[f].is_empty() {
                        shared
                    } else if gen.per_person {
                        person_vals[f][a]
                    } else {
                        gen.dist.sample(&mut r)
                    };
                    x[(i * k + a) * p + f] = v;
                }
            }
            let block = &x[i * k * p..(i + 1) * k * p];
            let mut v = constants.clone();
            for ((f, alts), b) in term_idx.iter().zip(&betas) {
                for &a in alts {
                    v[a] += b * block[a * p + f];
                }
            }
            for nl in &cfg.nonlinear {
                match nl {
                    NonlinearTerm::Clamp { feature, alt, lo, hi, beta } => {
                        let (f, a) = (cfg.feature(feature)?, cfg.alt(alt)?);
                        v[a] += beta * block[a * p + f].clamp(*lo, *hi);
                    }
                    NonlinearTerm::Interaction { a: fa, b: fb, alt, beta } => {
                        let (fa, fb, a) = (cfg.feature(fa)?, cfg.feature(fb)?, cfg.alt(alt)?);
                        v[a] += beta * block[a * p + fa] * block[a * p + fb];
                    }
                    NonlinearTerm::Step { feature, alt, threshold, beta } => {
                        let (f, a) = (cfg.feature(feature)?, cfg.alt(alt)?);
                        if block[a * p + f] > *threshold {
                            v[a] += beta;
                        }
                    }
                }
            }
            let noisy: Vec<f64> = v
                .iter()
                .map(|u| {
                    let e: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
                    cfg.scale * u - (-e.ln()).ln()
                })
                .collect();
            chosen[i] = argmax(&noisy);
            if chosen[i] == argmax(&v) {
                agree += 1;
            }
        }
    }
    let feature_names = cfg.features.iter().map(|f| f.name.clone()).collect();
    let ds = ChoiceDataset::new(
        cfg.alternatives.clone(),
        feature_names,
        obs_ids,
        person_ids,
        x,
        chosen,
        None,
        Some(applies),
    )?;
    let truth = GroundTruth {
        config: cfg.clone(),
        seed,
        n_obs: n,
        observed_shares: ds.observed_shares(),
        deterministic_agreement: agree as f64 / n as f64,
    };
    Ok((ds, truth))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn alt_names(k: usize) -> Vec<String> {
    (0..k).map(|a| format!("alt{a}")).collect()
}

/// `n` independent observations over `k` alternatives with one generic
/// coefficient per entry of `beta`; features `x0, x1, ...` ~ U(-2, 2).
pub fn mnl_fixture(n: usize, k: usize, beta: &[f64], seed: u64) -> ChoiceDataset {
    let alts = alt_names(k);
    let cfg = GeneratorConfig {
        alternatives: alts.clone(),
        n_individuals: n,
        n_occasions: 1,
        features: (0..beta.len())
            .map(|f| FeatureGen {
                name: format!("x{f}"),
                dist: Dist::Uniform { lo: -2.0, hi: 2.0 },
                alts: alts.clone(),
                per_person: false,
            })
            .collect(),
        terms: beta
            .iter()
            .enumerate()
            .map(|(f, b)| TermTruth {
                feature: format!("x{f}"),
                alts: alts.clone(),
                coef: format!("b{f}"),
                beta: *b,
                sd: 0.0,
            })
            .collect(),
        constants: BTreeMap::new(),
        nonlinear: Vec::new(),
        scale: 1.0,
    };
    generate(&cfg, seed).expect("valid fixture").0
}

pub struct PanelFixture {
    pub ds: ChoiceDataset,
    pub truth: GroundTruth,
}

/// Three alternatives, `x ~ U(-2, 2)` with a `Normal(mean, sd)` person-level
/// coefficient, `z ~ U(-2, 2)` with coefficient 0.5, and a constant of 0.2
/// on `alt1`.
pub fn panel_config(n_individuals: usize, n_occasions: usize, mean: f64, sd: f64) -> GeneratorConfig {
    let alts = alt_names(3);
    let mut constants = BTreeMap::new();
    constants.insert("alt1".to_string(), 0.2);
    GeneratorConfig {
        alternatives: alts.clone(),
        n_individuals,
        n_occasions,
        features: ["x", "z"]
            .iter()
            .map(|nm| FeatureGen {
                name: nm.to_string(),
                dist: Dist::Uniform { lo: -2.0, hi: 2.0 },
                alts: alts.clone(),
                per_person: false,
            })
            .collect(),
        terms: vec![
            TermTruth { feature: "x".into(), alts: alts.clone(), coef: "b_x".into(), beta: mean, sd },
            TermTruth { feature: "z".into(), alts: alts.clone(), coef: "b_z".into(), beta: 0.5, sd: 0.0 },
        ],
        constants,
        nonlinear: Vec::new(),
        scale: 1.0,
    }
}

pub fn panel_fixture(n_individuals: usize, n_occasions: usize, mean: f64, sd: f64, seed: u64) -> PanelFixture {
    let (ds, truth) = generate(&panel_config(n_individuals, n_occasions, mean, sd), seed).expect("valid fixture");
    PanelFixture { ds, truth }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_utilities_give_equal_shares() {
        let ds = mnl_fixture(4000, 4, &[0.0], 1);
        let tol = 3.0 / (4000f64).sqrt();
        for s in ds.observed_shares() {
            assert!((s - 0.25).abs() < tol, "{s}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = panel_fixture(20, 3, -1.0, 0.5, 4).ds;
        let b = panel_fixture(20, 3, -1.0, 0.5, 4).ds;
        let c = panel_fixture(20, 3, -1.0, 0.5, 5).ds;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.n_persons(), 20);
        assert_eq!(a.n_obs(), 60);
    }

    #[test]
    fn individual_level_feature_is_shared_across_alternatives() {
        let cfg = GeneratorConfig {
            alternatives: alt_names(3),
            n_individuals: 5,
            n_occasions: 2,
            features: vec![FeatureGen {
                name: "inc".into(),
                dist: Dist::Normal { mean: 0.0, sd: 1.0 },
                alts: vec![],
                per_person: true,
            }],
            terms: vec![],
            constants: BTreeMap::new(),
            nonlinear: vec![],
            scale: 1.0,
        };
        let (ds, _) = generate(&cfg, 0).unwrap();
        for i in 0..ds.n_obs() {
            assert_eq!(ds.value(i, 0, 0), ds.value(i, 2, 0));
        }
        assert_eq!(ds.value(0, 0, 0), ds.value(1, 0, 0));
    }

    #[test]
    fn unknown_names_are_rejected() {
        let mut cfg = panel_config(2, 1, 0.0, 0.0);
        cfg.terms[0].feature = "nope".into();
        assert!(generate(&cfg, 0).is_err());
    }
}
