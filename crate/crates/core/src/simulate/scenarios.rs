//! Generating parameters of the benchmark scenarios.

use super::{CauseTruth, MarkerTruth, ScenarioConfig};
use crate::error::{Error, Result};
use crate::modelspec::Family;

const GAUSS_BETA: [f64; 4] = [0.2, -0.1, 0.1, -0.2];
const BINARY_BETA: [f64; 4] = [1.0, -1.0, 1.0, -1.0];
const SIGMA_EPS: f64 = 0.4;

fn marker(k: usize, family: Family, beta: [f64; 4]) -> MarkerTruth {
    MarkerTruth {
        id: format!("y{}", k + 1),
        family,
        beta,
        sigma_eps: (family == Family::Gaussian).then_some(SIGMA_EPS),
        random_slope: family != Family::Binomial,
        visit_step: if family == Family::Binomial { 0.25 } else { 1.0 },
    }
}

/// Random-effect labels are `b{k}{j}` with `k` the 1-based marker and `j`
/// 0 for the intercept, 1 for the slope.
fn covariance(labels: &[&str], vars: &[f64], covs: &[(&str, &str, f64)]) -> Vec<Vec<f64>> {
    let n = labels.len();
    let at = |l: &str| labels.iter().position(|&x| x == l).expect("known label");
    let mut s = vec![vec![0.0; n]; n];
    for (i, v) in vars.iter().enumerate() {
        s[i][i] = *v;
    }
    for &(a, b, c) in covs {
        let (i, j) = (at(a), at(b));
        s[i][j] = c;
        s[j][i] = c;
    }
    s
}

fn single_cause(phi: &[f64]) -> Vec<CauseTruth> {
    vec![CauseTruth {
        cause: 1,
        phi: phi.to_vec(),
        rate_share: 1.0,
    }]
}

fn config(id: u32, name: &str, markers: Vec<MarkerTruth>, re_cov: Vec<Vec<f64>>, causes: Vec<CauseTruth>) -> ScenarioConfig {
    ScenarioConfig {
        id,
        name: name.into(),
        markers,
        re_cov,
        causes,
        n_subjects: 500,
        horizon: 10.0,
        dropout_max: Some(20.0),
        target_event_fraction: 0.4,
        baseline_bins: 15,
    }
}

const L2: [&str; 2] = ["b10", "b11"];
const L4: [&str; 4] = ["b10", "b11", "b20", "b21"];
const L6: [&str; 6] = ["b10", "b11", "b20", "b21", "b30", "b31"];

/// Scenarios 1–9 combine one to three gaussian, poisson or binary markers,
/// 10 mixes the three families and 11 is a two-cause smoke scenario.
pub fn scenario_presets(id: u32) -> Result<ScenarioConfig> {
    use Family::*;
    let poisson_beta = |b0: f64| [b0, -0.1, 0.1, -0.2];
    let cfg = match id {
        1 => config(
            1,
            "K=1 gaussian",
            vec![marker(0, Gaussian, GAUSS_BETA)],
            covariance(&L2, &[0.16, 0.16], &[("b10", "b11", 0.08)]),
            single_cause(&[0.5]),
        ),
        2 => config(
            2,
            "K=2 gaussian",
            (0..2).map(|k| marker(k, Gaussian, GAUSS_BETA)).collect(),
            covariance(
                &L4,
                &[0.16, 0.16, 0.25, 0.25],
                &[
                    ("b10", "b11", 0.08),
                    ("b10", "b20", 0.02),
                    ("b10", "b21", 0.04),
                    ("b11", "b20", 0.04),
                    ("b11", "b21", 0.0),
                    ("b20", "b21", 0.1),
                ],
            ),
            single_cause(&[0.5, -0.5]),
        ),
        3 => config(
            3,
            "K=3 gaussian",
            (0..3).map(|k| marker(k, Gaussian, GAUSS_BETA)).collect(),
            covariance(
                &L6,
                &[0.16, 0.16, 0.25, 0.25, 0.25, 0.16],
                &[
                    ("b10", "b11", 0.08),
                    ("b10", "b20", 0.02),
                    ("b10", "b21", 0.04),
                    ("b10", "b30", 0.0),
                    ("b10", "b31", -0.04),
                    ("b11", "b20", 0.04),
                    ("b11", "b21", 0.0),
                    ("b11", "b30", -0.08),
                    ("b11", "b31", -0.08),
                    ("b20", "b21", 0.1),
                    ("b20", "b30", 0.05),
                    ("b20", "b31", 0.02),
                    ("b21", "b30", 0.05),
                    ("b21", "b31", -0.04),
                    ("b30", "b31", 0.1),
                ],
            ),
            single_cause(&[0.5, -0.5, 0.5]),
        ),
        4 => config(
            4,
            "K=1 poisson",
            vec![marker(0, Poisson, poisson_beta(4.0))],
            covariance(&L2, &[0.16, 0.09], &[("b10", "b11", 0.06)]),
            single_cause(&[0.2]),
        ),
        5 => config(
            5,
            "K=2 poisson",
            vec![marker(0, Poisson, poisson_beta(4.0)), marker(1, Poisson, poisson_beta(2.0))],
            covariance(
                &L4,
                &[0.16, 0.09, 0.25, 0.16],
                &[
                    ("b10", "b11", 0.06),
                    ("b10", "b20", 0.02),
                    ("b10", "b21", 0.04),
                    ("b11", "b20", 0.03),
                    ("b11", "b21", 0.0),
                    ("b20", "b21", 0.08),
                ],
            ),
            single_cause(&[0.2, -0.2]),
        ),
        6 => config(
            6,
            "K=3 poisson",
            vec![
                marker(0, Poisson, poisson_beta(4.0)),
                marker(1, Poisson, poisson_beta(2.0)),
                marker(2, Poisson, poisson_beta(2.0)),
            ],
            covariance(
                &L6,
                &[0.16, 0.09, 0.25, 0.16, 0.25, 0.16],
                &[
                    ("b10", "b11", 0.06),
                    ("b10", "b20", 0.02),
                    ("b10", "b21", 0.04),
                    ("b10", "b30", 0.0),
                    ("b10", "b31", -0.04),
                    ("b11", "b20", 0.03),
                    ("b11", "b21", 0.0),
                    ("b11", "b30", -0.06),
                    ("b11", "b31", 0.0),
                    ("b20", "b21", 0.08),
                    ("b20", "b30", 0.05),
                    ("b20", "b31", 0.04),
                    ("b21", "b30", 0.04),
                    ("b21", "b31", -0.04),
                    ("b30", "b31", 0.12),
                ],
            ),
            single_cause(&[0.2, -0.2, 0.2]),
        ),
        7 => config(
            7,
            "K=1 binary",
            vec![marker(0, Binomial, BINARY_BETA)],
            vec![vec![0.25]],
            single_cause(&[0.3]),
        ),
        8 => config(
            8,
            "K=2 binary",
            (0..2).map(|k| marker(k, Binomial, BINARY_BETA)).collect(),
            covariance(&["b10", "b20"], &[0.25, 0.25], &[("b10", "b20", 0.15)]),
            single_cause(&[0.3, -0.3]),
        ),
        9 => config(
            9,
            "K=3 binary",
            (0..3).map(|k| marker(k, Binomial, BINARY_BETA)).collect(),
            covariance(
                &["b10", "b20", "b30"],
                &[0.16, 0.25, 0.25],
                &[("b10", "b20", 0.02), ("b10", "b30", 0.12), ("b20", "b30", 0.05)],
            ),
            single_cause(&[0.3, -0.3, 0.3]),
        ),
        10 => config(
            10,
            "mixed gaussian/poisson/binary",
            vec![
                marker(0, Gaussian, GAUSS_BETA),
                marker(1, Poisson, poisson_beta(3.0)),
                marker(2, Binomial, BINARY_BETA),
            ],
            covariance(
                &["b10", "b11", "b20", "b21", "b30"],
                &[0.16, 0.09, 0.25, 0.16, 0.25],
                &[
                    ("b10", "b11", 0.03),
                    ("b10", "b20", 0.02),
                    ("b10", "b21", 0.04),
                    ("b10", "b30", 0.0),
                    ("b11", "b20", 0.03),
                    ("b11", "b21", 0.0),
                    ("b11", "b30", -0.06),
                    ("b20", "b21", 0.08),
                    ("b20", "b30", 0.05),
                    ("b21", "b30", 0.04),
                ],
            ),
            single_cause(&[0.5, -0.2, 0.3]),
        ),
        11 => config(
            11,
            "two-cause smoke",
            vec![marker(0, Gaussian, GAUSS_BETA)],
            covariance(&L2, &[0.16, 0.16], &[("b10", "b11", 0.08)]),
            vec![
                CauseTruth {
                    cause: 1,
                    phi: vec![0.5],
                    rate_share: 1.0,
                },
                CauseTruth {
                    cause: 2,
                    phi: vec![-0.3],
                    rate_share: 0.5,
                },
            ],
        ),
        _ => return Err(Error::UnknownScenario(id)),
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for id in 1..=11 {
            let cfg = scenario_presets(id).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("scenario {id}: {e}"));
        }
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert!(matches!(scenario_presets(0), Err(Error::UnknownScenario(0))));
        assert!(matches!(scenario_presets(99), Err(Error::UnknownScenario(99))));
    }

    #[test]
    fn scenario_one_truth() {
        let c = scenario_presets(1).unwrap();
        assert_eq!(c.markers.len(), 1);
        assert_eq!(c.markers[0].beta, [0.2, -0.1, 0.1, -0.2]);
        assert_eq!(c.markers[0].sigma_eps, Some(0.4));
        assert_eq!(c.re_cov, vec![vec![0.16, 0.08], vec![0.08, 0.16]]);
        assert_eq!(c.causes[0].phi, vec![0.5]);
    }

    #[test]
    fn poisson_and_mixed_truths() {
        let c = scenario_presets(4).unwrap();
        assert_eq!(c.markers[0].family, Family::Poisson);
        assert_eq!(c.markers[0].beta, [4.0, -0.1, 0.1, -0.2]);
        assert_eq!(c.causes[0].phi, vec![0.2]);
        let m = scenario_presets(10).unwrap();
        let fams: Vec<Family> = m.markers.iter().map(|k| k.family).collect();
        assert_eq!(fams, vec![Family::Gaussian, Family::Poisson, Family::Binomial]);
        assert_eq!(m.causes[0].phi, vec![0.5, -0.2, 0.3]);
    }

    #[test]
    fn binary_markers_have_no_random_slope() {
        for id in [7, 8, 9, 10] {
            let c = scenario_presets(id).unwrap();
            for k in c.markers.iter().filter(|k| k.family == Family::Binomial) {
                assert!(!k.random_slope);
            }
            assert_eq!(c.re_dim(), c.re_cov.len());
        }
    }
}
