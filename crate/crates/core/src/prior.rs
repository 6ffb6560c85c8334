//! Reliability priors, their moments, and the local worker factor
//! `f(c, r) = E[p^c (1 - p)^(r - c)]`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::math::{exp, ln, ln_beta, log_sum_exp, xlogy};

const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub p: f64,
    pub weight: f64,
}

/// Distribution of a worker's probability of answering correctly.
#[derive(Clone, Debug, PartialEq)]
pub enum ReliabilityPrior {
    /// Finite mixture of point masses.
    Atoms(Vec<Atom>),
    /// Beta(alpha, beta) density on [0, 1].
    Beta { alpha: f64, beta: f64 },
}

impl ReliabilityPrior {
    pub fn atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let atoms: Vec<Atom> = atoms.into_iter().map(|(p, weight)| Atom { p, weight }).collect();
        if atoms.is_empty() {
            return Err(Error::param("a discrete prior needs at least one atom"));
        }
        for a in &atoms {
            if !(0.0..=1.0).contains(&a.p) {
                return Err(Error::param(format!("atom location {} outside [0, 1]", a.p)));
            }
            if !(a.weight > 0.0) {
                return Err(Error::param(format!("atom weight {} must be positive", a.weight)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::param(format!("atom weights sum to {total}, not 1")));
        }
        Ok(ReliabilityPrior::Atoms(atoms))
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::param(format!(
                "beta shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(ReliabilityPrior::Beta { alpha, beta })
    }

    pub fn point(p: f64) -> Result<Self> {
        Self::atoms([(p, 1.0)])
    }

    /// Spammer-hammer: half random guessers, half workers correct w.p. 0.9.
    pub fn spammer_hammer() -> Self {
        ReliabilityPrior::Atoms(alloc::vec![Atom { p: 0.5, weight: 0.5 }, Atom { p: 0.9, weight: 0.5 }])
    }

    /// Adversary-spammer-hammer: `{0.1: 1/4, 0.5: 1/4, 0.9: 1/2}`.
    pub fn adversary_spammer_hammer() -> Self {
        ReliabilityPrior::Atoms(alloc::vec![
            Atom { p: 0.1, weight: 0.25 },
            Atom { p: 0.5, weight: 0.25 },
            Atom { p: 0.9, weight: 0.5 },
        ])
    }

    /// One atom per estimate with weight 1/|W|; equal values are merged.
    pub fn empirical(estimates: &[f64]) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::param("empirical prior needs at least one estimate"));
        }
        if let Some(p) = estimates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(format!("estimate {p} outside [0, 1]")));
        }
        let mut sorted = estimates.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total = sorted.len() as f64;
        let mut atoms: Vec<Atom> = Vec::new();
        let mut start = 0;
        while start < sorted.len() {
            let p = sorted[start];
            let end = start + sorted[start..].iter().take_while(|&&x| x == p).count();
            atoms.push(Atom {
                p,
                weight: (end - start) as f64 / total,
            });
            start = end;
        }
        Ok(ReliabilityPrior::Atoms(atoms))
    }

    /// `(mu, q) = (E[2p - 1], E[(2p - 1)^2])`.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            ReliabilityPrior::Atoms(atoms) => atoms.iter().fold((0.0, 0.0), |(mu, q), a| {
                let theta = 2.0 * a.p - 1.0;
                (mu + a.weight * theta, q + a.weight * theta * theta)
            }),
            &ReliabilityPrior::Beta { alpha, beta } => {
                let s = alpha + beta;
                let m1 = alpha / s;
                let m2 = alpha * (alpha + 1.0) / (s * (s + 1.0));
                (2.0 * m1 - 1.0, 4.0 * m2 - 4.0 * m1 + 1.0)
            }
        }
    }

    /// `ln E[p^c (1 - p)^(r - c)]`; `-inf` when the expectation is exactly 0.
    pub fn log_factor(&self, c: usize, r: usize) -> Result<f64> {
        if c > r {
            return Err(Error::param(format!("match count {c} exceeds answer count {r}")));
        }
        let (c, m) = (c as f64, (r as f64) - (c as f64));
        Ok(match self {
            ReliabilityPrior::Atoms(atoms) => {
                log_sum_exp(atoms.iter().map(|a| ln(a.weight) + xlogy(c, a.p) + xlogy(m, 1.0 - a.p)))
            }
            &ReliabilityPrior::Beta { alpha, beta } => ln_beta(alpha + c, beta + m) - ln_beta(alpha, beta),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ReliabilityPrior::Atoms(atoms) => {
                let mut x = rng.random::<f64>();
                for a in atoms {
                    if x < a.weight {
                        return a.p;
                    }
                    x -= a.weight;
                }
                atoms[atoms.len() - 1].p
            }
            &ReliabilityPrior::Beta { alpha, beta } => {
                // parameters were validated on construction
                Beta::new(alpha, beta).expect("valid beta parameters").sample(rng)
            }
        }
    }
}

impl fmt::Display for ReliabilityPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReliabilityPrior::Atoms(atoms) => {
                f.write_str("atoms:")?;
                for (k, a) in atoms.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}={}", a.p, a.weight)?;
                }
                Ok(())
            }
            ReliabilityPrior::Beta { alpha, beta } => write!(f, "beta:{alpha},{beta}"),
        }
    }
}

/// Accepts `sh`, `ash`, `beta:A,B` and `atoms:p1=w1,p2=w2,...`.
impl FromStr for ReliabilityPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let number = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::param(format!("not a number: {t:?} in prior {s:?}")))
        };
        match s {
            "sh" => return Ok(Self::spammer_hammer()),
            "ash" => return Ok(Self::adversary_spammer_hammer()),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("beta:") {
            let (a, b) = rest
                .split_once(',')
                .ok_or_else(|| Error::param(format!("expected beta:A,B, got {s:?}")))?;
            return Self::beta(number(a)?, number(b)?);
        }
        if let Some(rest) = s.strip_prefix("atoms:") {
            let atoms = rest
                .split(',')
                .map(|item| {
                    let (p, w) = item
                        .split_once('=')
                        .ok_or_else(|| Error::param(format!("expected p=w, got {item:?}")))?;
                    Ok((number(p)?, number(w)?))
                })
                .collect::<Result<Vec<_>>>()?;
            return Self::atoms(atoms);
        }
        Err(Error::Parameter(
            "unknown prior ".to_string() + s + "; expected sh, ash, beta:A,B or atoms:p=w,...",
        ))
    }
}

/// `ln f(c, r)` for all `0 <= c <= r <= r_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorTable {
    r_max: usize,
    values: Vec<f64>,
}

impl FactorTable {
    pub fn new(prior: &ReliabilityPrior, r_max: usize) -> Self {
        let mut values = Vec::with_capacity((r_max + 1) * (r_max + 2) / 2);
        for r in 0..=r_max {
            for c in 0..=r {
                values.push(prior.log_factor(c, r).expect("c <= r"));
            }
        }
        Self { r_max, values }
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    /// Log factor for `c` matches out of `r` answers.
    pub fn get(&self, c: usize, r: usize) -> f64 {
        debug_assert!(c <= r && r <= self.r_max);
        self.values[r * (r + 1) / 2 + c]
    }
}

/// A prior prepared for message passing: the factor table plus, for discrete
/// priors, `(ln weight, 2p - 1)` per atom.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerFactor {
    prior: ReliabilityPrior,
    table: FactorTable,
    atoms: Option<Vec<(f64, f64)>>,
}

impl WorkerFactor {
    pub fn new(prior: &ReliabilityPrior, r_max: usize) -> Self {
        let atoms = match prior {
            ReliabilityPrior::Atoms(atoms) => Some(atoms.iter().map(|a| (ln(a.weight), 2.0 * a.p - 1.0)).collect()),
            ReliabilityPrior::Beta { .. } => None,
        };
        Self {
            prior: prior.clone(),
            table: FactorTable::new(prior, r_max),
            atoms,
        }
    }

    pub fn prior(&self) -> &ReliabilityPrior {
        &self.prior
    }

    pub fn table(&self) -> &FactorTable {
        &self.table
    }

    pub(crate) fn log_atoms(&self) -> Option<&[(f64, f64)]> {
        self.atoms.as_deref()
    }

    pub fn factor(&self, c: usize, r: usize) -> f64 {
        exp(self.table.get(c, r))
    }
}
