//! Closed-form recurrences for cascaded amplification of a single-photon
//! mixture (SPS) and of a single-photon entangled mixture (SPE).
//!
//! One stage maps the one-photon weight `η` to
//!
//! ```text
//! η' = (1 − t) η / (η (1 − t) + (1 − η) t)
//! ```
//!
//! for both flavors. Stage success probabilities differ:
//! `η (1 − t) + (1 − η) t` for SPS and `η t (1 − t) + (1 − η) t²` for SPE, where both
//! parties must herald at once.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, NlaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// Single photon mixed with vacuum in one mode.
    Sps,
    /// One photon shared by two parties, mixed with two-mode vacuum.
    Spe,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Sps => "sps",
            Flavor::Spe => "spe",
        })
    }
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sps" => Ok(Flavor::Sps),
            "spe" => Ok(Flavor::Spe),
            other => Err(format!("unknown flavor `{other}` (expected sps or spe)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlaStageResult {
    /// 1-based stage number.
    pub stage_index: usize,
    pub eta: f64,
    /// `eta / eta_prev` for this stage.
    pub gain: f64,
    pub stage_probability: f64,
    pub cumulative_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub initial_eta: f64,
    pub transmittances: Vec<f64>,
    pub stages: Vec<NlaStageResult>,
    pub flavor: Flavor,
}

impl CascadeTrace {
    pub fn final_eta(&self) -> f64 {
        self.stages.last().map_or(self.initial_eta, |s| s.eta)
    }

    pub fn cumulative_probability(&self) -> f64 {
        self.stages.last().map_or(1.0, |s| s.cumulative_probability)
    }

    pub fn etas(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.eta).collect()
    }

    /// Product of the per-stage gains.
    pub fn gain_product(&self) -> f64 {
        self.stages.iter().map(|s| s.gain).product()
    }

    pub fn total_gain(&self) -> Result<f64> {
        total_gain(self)
    }
}

fn check_step_inputs(eta: f64, t: f64) -> Result<f64> {
    check_unit_interval("eta", eta)?;
    check_unit_interval("transmittance", t)?;
    // Convex-combination form: exact at t = 1/2 and at eta ∈ {0, 1}.
    let denom = eta * (1.0 - t) + (1.0 - eta) * t;
    if denom <= 0.0 {
        return Err(NlaError::Degenerate(format!(
            "t + eta - 2 eta t vanishes at eta = {eta}, t = {t}: heralding is impossible"
        )));
    }
    Ok(denom)
}

/// One single-photon amplification stage: returns `(eta_out, success_probability)`.
pub fn nla_step_sps(eta: f64, t: f64) -> Result<(f64, f64)> {
    let denom = check_step_inputs(eta, t)?;
    Ok(((1.0 - t) * eta / denom, denom))
}

/// One two-party stage on the entangled mixture: returns `(eta_out, success_probability)`.
pub fn nla_step_spe(eta: f64, t: f64) -> Result<(f64, f64)> {
    let denom = check_step_inputs(eta, t)?;
    let p = eta * t * (1.0 - t) + (1.0 - eta) * t * t;
    if p <= 0.0 {
        return Err(NlaError::Degenerate(format!(
            "joint heralding probability vanishes at eta = {eta}, t = {t}"
        )));
    }
    Ok(((1.0 - t) * eta / denom, p))
}

pub fn nla_step(flavor: Flavor, eta: f64, t: f64) -> Result<(f64, f64)> {
    match flavor {
        Flavor::Sps => nla_step_sps(eta, t),
        Flavor::Spe => nla_step_spe(eta, t),
    }
}

/// Amplification factor `(1 − t) / (η − 2ηt + t)`; above one exactly when `t < 1/2`.
pub fn gain(eta: f64, t: f64) -> Result<f64> {
    let denom = check_step_inputs(eta, t)?;
    Ok((1.0 - t) / denom)
}

pub fn cascade(flavor: Flavor, eta0: f64, ts: &[f64]) -> Result<CascadeTrace> {
    check_unit_interval("eta", eta0)?;
    let mut stages = Vec::with_capacity(ts.len());
    let mut eta = eta0;
    let mut cumulative = 1.0;
    for (i, &t) in ts.iter().enumerate() {
        let (next, p) = nla_step(flavor, eta, t)?;
        let g = gain(eta, t)?;
        cumulative *= p;
        stages.push(NlaStageResult {
            stage_index: i + 1,
            eta: next,
            gain: g,
            stage_probability: p,
            cumulative_probability: cumulative,
        });
        eta = next;
    }
    Ok(CascadeTrace {
        initial_eta: eta0,
        transmittances: ts.to_vec(),
        stages,
        flavor,
    })
}

/// Iterates [`nla_step_sps`]; the transmittance may differ per stage.
pub fn cascade_sps(eta0: f64, ts: &[f64]) -> Result<CascadeTrace> {
    cascade(Flavor::Sps, eta0, ts)
}

/// Iterates [`nla_step_spe`]; the transmittance may differ per stage.
pub fn cascade_spe(eta0: f64, ts: &[f64]) -> Result<CascadeTrace> {
    cascade(Flavor::Spe, eta0, ts)
}

/// `eta_N / eta_0`. Undefined for a vanishing initial fidelity.
pub fn total_gain(trace: &CascadeTrace) -> Result<f64> {
    if trace.initial_eta <= 0.0 {
        return Err(NlaError::Degenerate("total gain is undefined for eta = 0".into()));
    }
    Ok(trace.final_eta() / trace.initial_eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Odds form of the cascade: each stage multiplies η/(1−η) by (1−t)/t.
    fn odds_eta(eta0: f64, ts: &[f64]) -> f64 {
        let keep: f64 = ts.iter().map(|t| 1.0 - t).product();
        let flip: f64 = ts.iter().product();
        eta0 * keep / (eta0 * keep + (1.0 - eta0) * flip)
    }

    /// The cumulative probability is the unnormalized weight of the surviving branches.
    fn odds_probability(flavor: Flavor, eta0: f64, ts: &[f64]) -> f64 {
        match flavor {
            Flavor::Sps => {
                eta0 * ts.iter().map(|t| 1.0 - t).product::<f64>()
                    + (1.0 - eta0) * ts.iter().product::<f64>()
            }
            Flavor::Spe => {
                eta0 * ts.iter().map(|t| t * (1.0 - t)).product::<f64>()
                    + (1.0 - eta0) * ts.iter().map(|t| t * t).product::<f64>()
            }
        }
    }

    #[test]
    fn single_stage_examples() {
        let (e, p) = nla_step_sps(0.2, 0.2).unwrap();
        assert!((e - 0.5).abs() < 1e-12 && (p - 0.32).abs() < 1e-12);
        let (e, _) = nla_step_sps(0.2, 0.1).unwrap();
        assert!((e - 0.692_307_692_307_692_3).abs() < 1e-12);
        let (e, p) = nla_step_sps(0.37, 0.5).unwrap();
        assert_eq!((e, p), (0.37, 0.5));
        let (e, p) = nla_step_sps(1.0, 0.3).unwrap();
        assert_eq!(e, 1.0);
        assert!((p - 0.7).abs() < 1e-15);
    }

    #[test]
    fn degenerate_endpoints() {
        assert!(matches!(nla_step_sps(0.0, 0.0), Err(NlaError::Degenerate(_))));
        assert!(matches!(nla_step_sps(1.0, 1.0), Err(NlaError::Degenerate(_))));
        assert!(matches!(gain(0.0, 0.0), Err(NlaError::Degenerate(_))));
        // Endpoints with a nonzero denominator are fine.
        assert_eq!(nla_step_sps(0.3, 0.0).unwrap(), (1.0, 0.3));
        assert_eq!(nla_step_sps(0.3, 1.0).unwrap().0, 0.0);
        assert!(nla_step_sps(1.2, 0.3).is_err());
        assert!(nla_step_sps(0.3, -0.1).is_err());
    }

    #[test]
    fn gain_examples() {
        assert!((gain(0.2, 0.2).unwrap() - 2.5).abs() < 1e-12);
        assert!((gain(0.42, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let g = gain(0.2, 0.6).unwrap();
        // (1 − 0.6) / 0.56
        assert!((g - 0.4 / 0.56).abs() < 1e-12 && g < 1.0);
    }

    #[test]
    fn five_stage_sps_cascade() {
        let trace = cascade_sps(0.2, &[0.2; 5]).unwrap();
        // Frozen from exact rational iteration; η₅ = 256/257.
        let expected = [0.5, 0.8, 16.0 / 17.0, 64.0 / 65.0, 256.0 / 257.0];
        for (s, e) in trace.stages.iter().zip(expected) {
            assert!((s.eta - e).abs() < 1e-12, "{} vs {}", s.eta, e);
        }
        assert!((trace.final_eta() - 0.996).abs() < 1e-3);
        let probs = [0.32, 0.5, 0.68, 13.0 / 17.0, 0.790_769_230_769_230_8];
        for (s, p) in trace.stages.iter().zip(probs) {
            assert!((s.stage_probability - p).abs() < 1e-12);
        }
        assert!((trace.cumulative_probability() - 0.065_792).abs() < 1e-12);
    }

    #[test]
    fn small_transmittance_single_stage() {
        let trace = cascade_sps(0.2, &[0.01]).unwrap();
        assert!((trace.final_eta() - 0.961_165_048_543_689_3).abs() < 1e-12);
    }

    #[test]
    fn two_stage_matches_closed_form() {
        let (eta, t) = (0.2_f64, 0.2_f64);
        let closed = eta * (1.0 - t).powi(2) / (t * t + eta - 2.0 * eta * t);
        let trace = cascade_sps(eta, &[t, t]).unwrap();
        assert!((trace.final_eta() - closed).abs() < 1e-12);
        assert!((closed - 0.8).abs() < 1e-12);
    }

    #[test]
    fn total_gain_examples() {
        let trace = cascade_sps(0.2, &[0.2, 0.2]).unwrap();
        assert!((total_gain(&trace).unwrap() - 4.0).abs() < 1e-12);
        assert!((trace.stages[0].gain - 2.5).abs() < 1e-12);
        assert!((trace.stages[1].gain - 1.6).abs() < 1e-12);

        let empty = cascade_sps(0.2, &[]).unwrap();
        assert!(empty.stages.is_empty());
        assert_eq!(total_gain(&empty).unwrap(), 1.0);
        assert_eq!(empty.cumulative_probability(), 1.0);

        let flat = cascade_sps(0.3, &[0.5; 4]).unwrap();
        assert_eq!(total_gain(&flat).unwrap(), 1.0);

        let zero = cascade_sps(0.0, &[0.2]).unwrap();
        assert!(total_gain(&zero).is_err());
    }

    #[test]
    fn spe_examples() {
        let (e, p) = nla_step_spe(0.2, 0.2).unwrap();
        assert!((e - 0.5).abs() < 1e-12 && (p - 0.064).abs() < 1e-12);
        for eta in [0.0, 0.1, 0.5, 0.77, 1.0] {
            let (e, p) = nla_step_spe(eta, 0.5).unwrap();
            assert_eq!(e, eta);
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert_eq!(nla_step_spe(1.0, 0.3).unwrap().0, 1.0);
        assert!(matches!(nla_step_spe(0.4, 0.0), Err(NlaError::Degenerate(_))));

        let one = cascade_spe(0.2, &[0.2]).unwrap();
        assert!((one.cumulative_probability() - 0.064).abs() < 1e-12);
        let two = cascade_spe(0.2, &[0.2, 0.2]).unwrap();
        assert!((two.cumulative_probability() - 0.0064).abs() < 1e-12);
        let five = cascade_spe(0.2, &[0.2; 5]).unwrap();
        assert!((five.final_eta() - 256.0 / 257.0).abs() < 1e-12);
    }

    #[test]
    fn matches_odds_oracle_on_grid() {
        for flavor in [Flavor::Sps, Flavor::Spe] {
            for i in 1..20 {
                let eta0 = i as f64 * 0.05;
                for j in 1..20 {
                    let t = j as f64 * 0.05;
                    for n in 1..=6 {
                        let ts = vec![t; n];
                        let trace = cascade(flavor, eta0, &ts).unwrap();
                        assert!((trace.final_eta() - odds_eta(eta0, &ts)).abs() < 1e-12);
                        let p = odds_probability(flavor, eta0, &ts);
                        assert!((trace.cumulative_probability() - p).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn flavor_parsing() {
        assert_eq!("SPS".parse::<Flavor>().unwrap(), Flavor::Sps);
        assert_eq!("spe".parse::<Flavor>().unwrap(), Flavor::Spe);
        assert!("x".parse::<Flavor>().is_err());
    }

    #[test]
    fn convergence_ratio() {
        for t in [0.1, 0.2, 0.3, 0.4, 0.45] {
            for eta0 in [0.05, 0.2, 0.6] {
                let trace = cascade_sps(eta0, &vec![t; 200]).unwrap();
                let etas = trace.etas();
                for w in etas.windows(2).filter(|w| w[0] < 1.0 - 1e-12) {
                    assert!(w[1] > w[0]);
                }
                // Ratio of successive deficits near the end of the cascade.
                let gaps: Vec<f64> = etas.iter().map(|e| 1.0 - e).collect();
                let k = gaps.iter().rposition(|g| *g > 1e-9).unwrap();
                let ratio = gaps[k] / gaps[k - 1];
                assert!((ratio - t / (1.0 - t)).abs() < 1e-3, "t = {t}, ratio = {ratio}");
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_in_direction_of_half(eta in 0.001f64..0.999, t in 0.001f64..0.999) {
            let (out, _) = nla_step_sps(eta, t).unwrap();
            if t < 0.5 {
                prop_assert!(out > eta);
            } else if t > 0.5 {
                prop_assert!(out < eta);
            }
            let (half, _) = nla_step_sps(eta, 0.5).unwrap();
            prop_assert_eq!(half, eta);
        }

        #[test]
        fn fixed_points(t in 0.001f64..0.999) {
            for flavor in [Flavor::Sps, Flavor::Spe] {
                prop_assert_eq!(nla_step(flavor, 0.0, t).unwrap().0, 0.0);
                prop_assert_eq!(nla_step(flavor, 1.0, t).unwrap().0, 1.0);
            }
        }

        #[test]
        fn gain_product_identity(
            eta0 in 0.001f64..1.0,
            ts in proptest::collection::vec(0.01f64..0.99, 0..12),
        ) {
            let trace = cascade_sps(eta0, &ts).unwrap();
            let g = total_gain(&trace).unwrap();
            prop_assert!((g - trace.gain_product()).abs() <= 1e-12 * g.max(1.0));
        }

        #[test]
        fn sps_and_spe_share_fidelities(
            eta0 in 0.0f64..=1.0,
            ts in proptest::collection::vec(0.01f64..0.99, 0..8),
        ) {
            let a = cascade_sps(eta0, &ts).unwrap();
            let b = cascade_spe(eta0, &ts).unwrap();
            prop_assert_eq!(a.etas(), b.etas());
        }

        #[test]
        fn cumulative_probability_decreases(
            eta0 in 0.01f64..0.99,
            ts in proptest::collection::vec(0.01f64..0.99, 1..10),
        ) {
            for flavor in [Flavor::Sps, Flavor::Spe] {
                let trace = cascade(flavor, eta0, &ts).unwrap();
                let mut prev = 1.0;
                for s in &trace.stages {
                    prop_assert!(s.stage_probability < 1.0);
                    prop_assert!(s.cumulative_probability < prev);
                    prop_assert!((s.cumulative_probability - prev * s.stage_probability).abs() < 1e-15);
                    prev = s.cumulative_probability;
                }
            }
        }
    }
}
