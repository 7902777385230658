use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::spline::NaturalSpline;
use crate::error::{Error, Result};

/// A time column of a marker's basis: `time` for the linear basis, `nsJ`
/// (1-based) for natural-spline columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeTerm {
    Linear,
    Spline(usize),
}

/// One column of a longitudinal design row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Intercept,
    Time(TimeTerm),
    Covariate(String),
    Interaction(String, TimeTerm),
}

impl TimeTerm {
    fn parse(s: &str) -> Option<Self> {
        if s == "time" || s == "t" {
            return Some(TimeTerm::Linear);
        }
        let j: usize = s.strip_prefix("ns")?.parse().ok()?;
        (j >= 1).then(|| TimeTerm::Spline(j - 1))
    }
}

impl fmt::Display for TimeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeTerm::Linear => f.write_str("time"),
            TimeTerm::Spline(j) => write!(f, "ns{}", j + 1),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::spec("term", "empty term"));
        }
        if s == "intercept" || s == "1" {
            return Ok(Term::Intercept);
        }
        if let Some(t) = TimeTerm::parse(s) {
            return Ok(Term::Time(t));
        }
        if let Some((a, b)) = s.split_once(':') {
            let (a, b) = (a.trim(), b.trim());
            return match (TimeTerm::parse(a), TimeTerm::parse(b)) {
                (None, Some(t)) if valid_name(a) => Ok(Term::Interaction(a.to_string(), t)),
                (Some(t), None) if valid_name(b) => Ok(Term::Interaction(b.to_string(), t)),
                _ => Err(Error::spec("term", format!("`{s}`: interactions are covariate:time"))),
            };
        }
        if valid_name(s) {
            Ok(Term::Covariate(s.to_string()))
        } else {
            Err(Error::spec("term", format!("`{s}` is not a valid covariate name")))
        }
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("intercept"),
            Term::Time(t) => write!(f, "{t}"),
            Term::Covariate(x) => f.write_str(x),
            Term::Interaction(x, t) => write!(f, "{x}:{t}"),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Term {
    pub fn covariate(&self) -> Option<&str> {
        match self {
            Term::Covariate(x) | Term::Interaction(x, _) => Some(x),
            _ => None,
        }
    }

    pub fn time_term(&self) -> Option<TimeTerm> {
        match self {
            Term::Time(t) | Term::Interaction(_, t) => Some(*t),
            _ => None,
        }
    }
}

/// Time basis of a longitudinal submodel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeBasis {
    Linear,
    NaturalSpline {
        interior_knots: Vec<f64>,
        boundary_knots: [f64; 2],
    },
}

impl Default for TimeBasis {
    fn default() -> Self {
        TimeBasis::Linear
    }
}

/// A time basis ready for evaluation.
#[derive(Debug, Clone)]
pub enum BasisEval {
    Linear,
    Spline(NaturalSpline),
}

impl BasisEval {
    pub fn new(basis: &TimeBasis) -> Result<Self> {
        Ok(match basis {
            TimeBasis::Linear => BasisEval::Linear,
            TimeBasis::NaturalSpline {
                interior_knots,
                boundary_knots,
            } => BasisEval::Spline(NaturalSpline::new(interior_knots, *boundary_knots)?),
        })
    }

    pub fn accepts(&self, t: TimeTerm) -> bool {
        match (self, t) {
            (BasisEval::Linear, TimeTerm::Linear) => true,
            (BasisEval::Spline(s), TimeTerm::Spline(j)) => j < s.n_basis(),
            _ => false,
        }
    }

    /// Values and time derivatives of every time column at `t`.
    pub fn columns(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            BasisEval::Linear => (vec![t], vec![1.0]),
            BasisEval::Spline(s) => s.eval(t),
        }
    }
}

/// Evaluates design columns and their time derivatives at `t`.
///
/// `covariate` resolves covariate names for the subject at hand.
pub fn design_row<F>(
    terms: &[Term],
    basis: &BasisEval,
    t: f64,
    mut covariate: F,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&str) -> Option<f64>,
{
    let (tv, td) = basis.columns(t);
    let col = |tt: TimeTerm| match tt {
        TimeTerm::Linear => 0,
        TimeTerm::Spline(j) => j,
    };
    let mut vals = Vec::with_capacity(terms.len());
    let mut ders = Vec::with_capacity(terms.len());
    for term in terms {
        let (v, d) = match term {
            Term::Intercept => (1.0, 0.0),
            Term::Time(tt) => (tv[col(*tt)], td[col(*tt)]),
            Term::Covariate(x) => (lookup(&mut covariate, x)?, 0.0),
            Term::Interaction(x, tt) => {
                let xv = lookup(&mut covariate, x)?;
                (xv * tv[col(*tt)], xv * td[col(*tt)])
            }
        };
        vals.push(v);
        ders.push(d);
    }
    Ok((vals, ders))
}

fn lookup<F: FnMut(&str) -> Option<f64>>(f: &mut F, name: &str) -> Result<f64> {
    f(name).ok_or_else(|| Error::Validation(format!("covariate `{name}` is not available")))
}
