//! Sparse multivariate polynomials, the declarative form of vector fields
//! and payoffs in model configs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    /// One exponent per variable; shorter lists are padded with zeros.
    #[serde(default)]
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: f64) -> Self {
        Polynomial {
            terms: vec![Monomial { coef: c, powers: vec![] }],
        }
    }

    /// The coordinate `x_j`.
    pub fn variable(j: usize) -> Self {
        let mut powers = vec![0; j + 1];
        powers[j] = 1;
        Polynomial {
            terms: vec![Monomial { coef: 1.0, powers }],
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        for t in &mut self.terms {
            t.coef *= c;
        }
        self
    }

    pub fn add(mut self, other: &Polynomial) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let n = a.powers.len().max(b.powers.len());
                let powers = (0..n)
                    .map(|k| a.powers.get(k).copied().unwrap_or(0) + b.powers.get(k).copied().unwrap_or(0))
                    .collect();
                terms.push(Monomial {
                    coef: a.coef * b.coef,
                    powers,
                });
            }
        }
        Polynomial { terms }
    }

    /// Highest variable index mentioned plus one.
    pub fn arity(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.powers.iter().rposition(|p| *p > 0).map_or(0, |k| k + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let mut v = t.coef;
            for (k, p) in t.powers.iter().enumerate() {
                if *p > 0 {
                    v *= x[k].powi(*p as i32);
                }
            }
            total += v;
        }
        total
    }

    /// `∂/∂x_j`.
    pub fn derivative(&self, j: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.powers.get(j).copied().unwrap_or(0) > 0 && t.coef != 0.0)
            .map(|t| {
                let mut powers = t.powers.clone();
                let p = powers[j];
                powers[j] = p - 1;
                Monomial {
                    coef: t.coef * p as f64,
                    powers,
                }
            })
            .collect();
        Polynomial { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coef == 0.0)
    }

    pub fn check_arity(&self, d: usize, field: &str) -> Result<()> {
        if self.arity() > d {
            return Err(Error::config(
                field,
                format!("polynomial uses variable {} but the state has dimension {d}", self.arity()),
            ));
        }
        if self.terms.iter().any(|t| !t.coef.is_finite()) {
            return Err(Error::config(field, "non-finite coefficient"));
        }
        Ok(())
    }
}
