//! Optical elements with fixed sign conventions and photon-number-resolving
//! heralding.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, NlaError, Result};
use crate::fock::{Ensemble, Mat2, ModeLabel, PureState};

/// Heralding probabilities below this are treated as "never succeeds".
pub const MIN_HERALD_PROBABILITY: f64 = 1e-15;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Variable beam splitter `[[√t, √(1−t)], [√(1−t), −√t]]`.
///
/// A photon entering the first port leaves with amplitude `√t` in the first
/// (transmitted) output and `√(1−t)` in the second (reflected) output.
pub fn vbs_matrix(t: f64) -> Result<Mat2> {
    check_unit_interval("transmittance", t)?;
    let (tt, rr) = (t.sqrt(), (1.0 - t).sqrt());
    Ok([[re(tt), re(rr)], [re(rr), re(-tt)]])
}

/// Balanced beam splitter `(1/√2)[[1, 1], [1, −1]]`.
pub fn bs_matrix() -> Mat2 {
    let h = FRAC_1_SQRT_2;
    [[re(h), re(h)], [re(h), re(-h)]]
}

/// Two-in two-out splitter with transmittance `t`; `t = 1/2` is the balanced splitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterElement {
    pub in_modes: (ModeLabel, ModeLabel),
    pub out_modes: (ModeLabel, ModeLabel),
    transmittance: f64,
}

impl BeamSplitterElement {
    pub fn new(
        in_modes: (ModeLabel, ModeLabel),
        out_modes: (ModeLabel, ModeLabel),
        transmittance: f64,
    ) -> Result<Self> {
        check_unit_interval("transmittance", transmittance)?;
        if in_modes.0 == in_modes.1 {
            return Err(NlaError::ModeCollision(in_modes.0.to_string()));
        }
        if out_modes.0 == out_modes.1 {
            return Err(NlaError::ModeCollision(out_modes.0.to_string()));
        }
        Ok(BeamSplitterElement {
            in_modes,
            out_modes,
            transmittance,
        })
    }

    pub fn balanced(in_modes: (ModeLabel, ModeLabel), out_modes: (ModeLabel, ModeLabel)) -> Result<Self> {
        Self::new(in_modes, out_modes, 0.5)
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn matrix(&self) -> Mat2 {
        if self.transmittance == 0.5 {
            bs_matrix()
        } else {
            vbs_matrix(self.transmittance).expect("validated on construction")
        }
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        let (i0, i1) = &self.in_modes;
        let (o0, o1) = &self.out_modes;
        let mixed = state.apply_two_mode_unitary(i0, i1, &self.matrix())?;
        // Go through scratch labels so that out_modes may reuse either input label.
        let s0 = ModeLabel::new("\u{0}bs-out-0");
        let s1 = ModeLabel::new("\u{0}bs-out-1");
        mixed
            .rename_mode(i0, &s0)?
            .rename_mode(i1, &s1)?
            .rename_mode(&s0, o0)?
            .rename_mode(&s1, o1)
    }
}

/// Predicate on the total photon count seen by a group of detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Acceptance {
    Exactly(u32),
    NotExactly(u32),
    AtLeast(u32),
    Below(u32),
}

impl Acceptance {
    pub fn accepts(&self, count: u32) -> bool {
        match *self {
            Acceptance::Exactly(n) => count == n,
            Acceptance::NotExactly(n) => count != n,
            Acceptance::AtLeast(n) => count >= n,
            Acceptance::Below(n) => count < n,
        }
    }

    pub fn complement(&self) -> Self {
        match *self {
            Acceptance::Exactly(n) => Acceptance::NotExactly(n),
            Acceptance::NotExactly(n) => Acceptance::Exactly(n),
            Acceptance::AtLeast(n) => Acceptance::Below(n),
            Acceptance::Below(n) => Acceptance::AtLeast(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRule {
    pub detector_modes: Vec<ModeLabel>,
    pub accept: Acceptance,
}

impl DetectionRule {
    pub fn new(detector_modes: Vec<ModeLabel>, accept: Acceptance) -> Self {
        DetectionRule {
            detector_modes,
            accept,
        }
    }

    /// Accept when the detectors register exactly one photon in total.
    pub fn exactly_one(detector_modes: Vec<ModeLabel>) -> Self {
        Self::new(detector_modes, Acceptance::Exactly(1))
    }

    pub fn complement(&self) -> Self {
        Self::new(self.detector_modes.clone(), self.accept.complement())
    }
}

/// Conditional π phase on `target` when `trigger` registers an odd count.
///
/// Undoes the detector-dependent sign that the balanced splitter imprints on
/// the single-photon term of a heralded superposition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseFeedForward {
    pub trigger: ModeLabel,
    pub target: ModeLabel,
}

#[derive(Clone, Debug)]
pub struct HeraldOutcome {
    pub success_probability: f64,
    pub out: Ensemble,
}

fn detector_modes(rules: &[DetectionRule]) -> Result<Vec<ModeLabel>> {
    let mut modes: Vec<ModeLabel> = Vec::new();
    let mut seen = BTreeSet::new();
    for rule in rules {
        for m in &rule.detector_modes {
            if !seen.insert(m.clone()) {
                return Err(NlaError::InvalidCircuit(format!(
                    "detector mode `{m}` appears in more than one rule"
                )));
            }
            modes.push(m.clone());
        }
    }
    Ok(modes)
}

/// Every detection outcome of one pure state: `(projected residual, accepted)`.
/// The residual's squared norm is the outcome probability; feed-forward has
/// already been applied to it.
pub fn detection_branches(
    state: &PureState,
    rules: &[DetectionRule],
    feed_forward: &[PhaseFeedForward],
) -> Result<Vec<(PureState, bool)>> {
    let modes = detector_modes(rules)?;
    let mut branches = Vec::new();
    for outcome in state.measure_modes(&modes)? {
        if outcome.probability == 0.0 {
            continue;
        }
        let accepted = rules.iter().all(|rule| {
            let count: u32 = rule.detector_modes.iter().map(|m| outcome.pattern[m]).sum();
            rule.accept.accepts(count)
        });
        let mut residual = outcome.residual;
        for ff in feed_forward {
            let fired = outcome
                .pattern
                .get(&ff.trigger)
                .ok_or_else(|| NlaError::UnknownMode(ff.trigger.to_string()))?;
            if fired % 2 == 1 {
                residual = residual.phase_flip(&ff.target)?;
            }
        }
        branches.push((residual, accepted));
    }
    Ok(branches)
}

/// Accepted branches of a mixture as `(component weight, projected residual)`.
fn accepted_branches(
    e: &Ensemble,
    rules: &[DetectionRule],
    feed_forward: &[PhaseFeedForward],
) -> Result<Vec<(f64, PureState)>> {
    let mut kept = Vec::new();
    for (w, state) in e.components() {
        for (residual, ok) in detection_branches(state, rules, feed_forward)? {
            if ok {
                kept.push((*w, residual));
            }
        }
    }
    Ok(kept)
}

/// Probability that every rule accepts. Zero is a valid answer here.
pub fn acceptance_probability(e: &Ensemble, rules: &[DetectionRule]) -> Result<f64> {
    let total = e.total_weight();
    let kept: f64 = accepted_branches(e, rules, &[])?
        .iter()
        .map(|(w, s)| w * s.weight())
        .sum();
    Ok(kept / total)
}

/// Post-selects on a single detection rule.
pub fn herald(e: &Ensemble, rule: &DetectionRule) -> Result<HeraldOutcome> {
    herald_joint(e, std::slice::from_ref(rule), &[])
}

/// Post-selects on all `rules` accepting simultaneously, applying phase
/// feed-forward to the surviving modes.
pub fn herald_joint(
    e: &Ensemble,
    rules: &[DetectionRule],
    feed_forward: &[PhaseFeedForward],
) -> Result<HeraldOutcome> {
    let total = e.total_weight();
    let kept = accepted_branches(e, rules, feed_forward)?;
    let success: f64 = kept.iter().map(|(w, s)| w * s.weight()).sum::<f64>() / total;
    if success.is_nan() || success < MIN_HERALD_PROBABILITY {
        return Err(NlaError::NeverHeralds { probability: success });
    }
    let out = Ensemble::new(kept)?.normalized()?.compact();
    Ok(HeraldOutcome {
        success_probability: success,
        out,
    })
}

/// Measures `modes` and forgets the result, leaving a mixture over the rest.
pub fn discard(e: &Ensemble, modes: &[ModeLabel]) -> Result<Ensemble> {
    let mut parts = Vec::new();
    for (w, state) in e.components() {
        for outcome in state.measure_modes(modes)? {
            if outcome.probability > 0.0 {
                parts.push((*w, outcome.residual));
            }
        }
    }
    Ok(Ensemble::new(parts)?.compact())
}
