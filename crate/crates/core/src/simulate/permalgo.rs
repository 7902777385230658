//! Permutational assignment of event and censoring times to subjects.

use rand::Rng;

use crate::error::{Error, Result};

/// One draw from the marginal time distributions before assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub time: f64,
    /// Cause of the event, 0 for a censoring time.
    pub cause: usize,
}

/// Observed outcome of one subject after assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub time: f64,
    pub event: usize,
}

/// Assigns the candidate times to `n_subjects` subjects.
///
/// Candidates are processed in ascending time. An event of cause `m` at
/// time `t` goes to a subject of the current risk set with probability
/// proportional to `exp(log_weight(i, m, t))`; censoring times are assigned
/// uniformly. Assigned subjects leave the risk set.
pub fn permalgo<R, F>(candidates: &[Candidate], n_subjects: usize, log_weight: F, rng: &mut R) -> Result<Vec<Outcome>>
where
    R: Rng + ?Sized,
    F: Fn(usize, usize, f64) -> f64,
{
    if candidates.len() > n_subjects {
        return Err(Error::RiskSetExhausted {
            events: candidates.len(),
            subjects: n_subjects,
        });
    }
    if candidates.len() < n_subjects {
        return Err(Error::Validation(format!(
            "{} candidate times for {n_subjects} subjects",
            candidates.len()
        )));
    }
    let mut order: Vec<Candidate> = candidates.to_vec();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut risk: Vec<usize> = (0..n_subjects).collect();
    let mut out = vec![None; n_subjects];
    let mut logw = Vec::with_capacity(n_subjects);
    for c in order {
        let pos = if c.cause == 0 {
            rng.gen_range(0..risk.len())
        } else {
            logw.clear();
            logw.extend(risk.iter().map(|&i| log_weight(i, c.cause, c.time)));
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !top.is_finite() {
                return Err(Error::Validation(format!("non-finite assignment weight at time {}", c.time)));
            }
            let total: f64 = logw.iter().map(|l| (l - top).exp()).sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = risk.len() - 1;
            for (j, l) in logw.iter().enumerate() {
                u -= (l - top).exp();
                if u < 0.0 {
                    pick = j;
                    break;
                }
            }
            pick
        };
        let subject = risk.swap_remove(pos);
        out[subject] = Some(Outcome {
            time: c.time,
            event: c.cause,
        });
    }
    Ok(out.into_iter().map(|o| o.expect("every subject assigned")).collect())
}
