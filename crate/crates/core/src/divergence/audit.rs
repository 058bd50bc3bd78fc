//! Empirical check of the claimed bounds `MDD ≤ Jeffreys(P, Q)` and
//! `MDD ≤ 4 δ²(P, Q)` on random distributions over a one-hot alphabet.
//!
//! The audit counts how often each inequality holds and summarizes
//! `MDD(P, P)`; it never asserts the bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{jeffreys_kl, mdd_population, total_variation, FiniteDist, PairNorm};
use crate::error::{Error, Result};

/// How audit distributions are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditFamily {
    /// Uniform on the probability simplex.
    #[default]
    Dirichlet,
    /// A single random symbol carries all mass.
    PointMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaAuditReport {
    pub trials: usize,
    /// Fraction of trials with `MDD(P, Q) ≤ Jeffreys(P, Q)`.
    pub frac_lemma1: f64,
    /// Fraction of trials with `MDD(P, Q) ≤ 4 δ²(P, Q)`.
    pub frac_lemma2: f64,
    /// Largest amount by which either bound was exceeded, 0 if never.
    pub max_violation: f64,
    pub mdd_pp_mean: f64,
    pub mdd_pp_max: f64,
    /// Smallest MDD seen over all evaluated pairs.
    #[serde(skip)]
    pub mdd_min: f64,
}

impl LemmaAuditReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn sample_dist(rng: &mut ChaCha8Rng, k: usize, family: AuditFamily) -> Result<FiniteDist> {
    match family {
        AuditFamily::Dirichlet => {
            let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = raw.iter().sum();
            let mut probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // Push the rounding residue onto the largest entry.
            let residue = 1.0 - probs.iter().sum::<f64>();
            let big = (0..k)
                .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
                .unwrap_or(0);
            probs[big] += residue;
            FiniteDist::one_hot(probs)
        }
        AuditFamily::PointMass => FiniteDist::point_mass(k, rng.random_range(0..k)),
    }
}

/// Audits explicit `(P, Q)` pairs and the distributions used for `MDD(P, P)`.
pub fn audit_pairs<I, J>(pairs: I, selves: J) -> Result<LemmaAuditReport>
where
    I: IntoIterator<Item = (FiniteDist, FiniteDist)>,
    J: IntoIterator<Item = FiniteDist>,
{
    let mut trials = 0usize;
    let (mut hold1, mut hold2) = (0usize, 0usize);
    let mut max_violation: f64 = 0.0;
    let mut mdd_min = f64::INFINITY;
    for (p, q) in pairs {
        trials += 1;
        let mdd = mdd_population(&p, &q, PairNorm::SquaredL2)?;
        mdd_min = mdd_min.min(mdd);
        let jeffreys = jeffreys_kl(&p, &q)?;
        let tv = total_variation(&p, &q)?;
        let tv_bound = 4.0 * tv * tv;
        if mdd <= jeffreys {
            hold1 += 1;
        } else {
            max_violation = max_violation.max(mdd - jeffreys);
        }
        if mdd <= tv_bound {
            hold2 += 1;
        } else {
            max_violation = max_violation.max(mdd - tv_bound);
        }
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("audit needs at least one trial".into()));
    }
    let mut pp_sum = 0.0;
    let mut pp_max: f64 = 0.0;
    let mut pp_count = 0usize;
    for p in selves {
        let mdd = mdd_population(&p, &p, PairNorm::SquaredL2)?;
        mdd_min = mdd_min.min(mdd);
        pp_sum += mdd;
        pp_max = pp_max.max(mdd);
        pp_count += 1;
    }
    Ok(LemmaAuditReport {
        trials,
        frac_lemma1: hold1 as f64 / trials as f64,
        frac_lemma2: hold2 as f64 / trials as f64,
        max_violation,
        mdd_pp_mean: if pp_count > 0 {
            pp_sum / pp_count as f64
        } else {
            0.0
        },
        mdd_pp_max: pp_max,
        mdd_min,
    })
}

/// Runs `trials` random audits with simplex-uniform distributions.
pub fn lemma_audit(trials: usize, alphabet_size: usize, seed: u64) -> Result<LemmaAuditReport> {
    lemma_audit_with(trials, alphabet_size, seed, AuditFamily::Dirichlet)
}

pub fn lemma_audit_with(
    trials: usize,
    alphabet_size: usize,
    seed: u64,
    family: AuditFamily,
) -> Result<LemmaAuditReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if !(2..=16).contains(&alphabet_size) {
        return Err(Error::InvalidArgument(format!(
            "alphabet size must be in [2, 16], got {alphabet_size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(trials);
    let mut selves = Vec::with_capacity(trials);
    for _ in 0..trials {
        let p = sample_dist(&mut rng, alphabet_size, family)?;
        let q = sample_dist(&mut rng, alphabet_size, family)?;
        pairs.push((p, q));
        selves.push(sample_dist(&mut rng, alphabet_size, family)?);
    }
    audit_pairs(pairs, selves)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_point_masses_hold() {
        let p = FiniteDist::point_mass(3, 1).unwrap();
        let r = audit_pairs([(p.clone(), p.clone())], [p]).unwrap();
        assert_eq!(r.trials, 1);
        assert_eq!(r.frac_lemma1, 1.0);
        assert_eq!(r.frac_lemma2, 1.0);
        assert_eq!(r.max_violation, 0.0);
        assert_eq!(r.mdd_pp_max, 0.0);
        assert_eq!(r.mdd_min, 0.0);
    }

    #[test]
    fn uniform_self_pair_violates_jeffreys_bound() {
        let u = FiniteDist::uniform(2).unwrap();
        let r = audit_pairs([(u.clone(), u.clone())], [u]).unwrap();
        assert_eq!(r.frac_lemma1, 0.0);
        assert_eq!(r.frac_lemma2, 0.0);
        assert_eq!(r.max_violation, 3.0);
        assert_eq!(r.mdd_pp_mean, 3.0);
    }

    #[test]
    fn parameter_bounds() {
        assert!(lemma_audit(0, 4, 0).is_err());
        assert!(lemma_audit(10, 1, 0).is_err());
        assert!(lemma_audit(10, 17, 0).is_err());
    }

    #[test]
    fn seeded_runs_reproduce() {
        let a = lemma_audit(200, 5, 7).unwrap();
        let b = lemma_audit(200, 5, 7).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(a.mdd_pp_mean > 0.0);
    }

    #[test]
    fn point_mass_family_always_holds() {
        let r = lemma_audit_with(50, 4, 3, AuditFamily::PointMass).unwrap();
        assert_eq!(r.frac_lemma1, 1.0);
        assert_eq!(r.frac_lemma2, 1.0);
        assert_eq!(r.mdd_pp_max, 0.0);
    }

    #[test]
    fn json_keys() {
        let r = lemma_audit(3, 2, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for key in [
            "trials",
            "frac_lemma1",
            "frac_lemma2",
            "max_violation",
            "mdd_pp_mean",
            "mdd_pp_max",
        ] {
            assert!(keys.contains(&key), "{key} missing");
        }
        assert_eq!(keys.len(), 6);
    }
}
