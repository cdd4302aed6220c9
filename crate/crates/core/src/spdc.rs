//! Down-conversion source and the two-stage single-photon amplification
//! experiment it feeds.
//!
//! Two passes of the pump through the crystal emit pairs into `(a1, b1)` and
//! `(a2, b2)`. Keeping the four-fold coincidence leaves one photon in each
//! mode: `a1` is the target, `b1` heralds it, and `b2`, `a2` are the ancillas
//! of the first and second amplifier stage.

use num_complex::Complex64;
use serde::Serialize;

use crate::analytic;
use crate::circuit::{run, CircuitSpec, Element};
use crate::error::{check_open_unit_interval, NlaError, Result};
use crate::fock::{Ensemble, FockBasisState, ModeLabel, PureState};
use crate::optics::{BeamSplitterElement, DetectionRule, PhaseFeedForward};

/// Source modes in register order.
pub const SOURCE_MODES: [&str; 4] = ["a1", "b1", "a2", "b2"];

/// Unnormalized perturbative pair-source state, truncated at `order` pairs.
#[derive(Clone, Debug)]
pub struct SpdcExpansion {
    pub pump_amplitude: f64,
    pub order: u32,
    pub terms: PureState,
}

impl SpdcExpansion {
    pub fn amplitude(&self, basis: &FockBasisState) -> Complex64 {
        self.terms.amplitude(basis)
    }
}

fn basis(counts: [u32; 4]) -> FockBasisState {
    FockBasisState::new(SOURCE_MODES.iter().copied().zip(counts))
}

/// Expands the pair source to `order ≤ 2` in the pump amplitude `p`:
///
/// ```text
/// |0⟩ + p(|1100⟩ + |0011⟩) + p²(|1111⟩ + 2|2200⟩ + 2|0022⟩)
/// ```
///
/// in `(a1, b1, a2, b2)` order. A doubled pair `(a†b†)²|0⟩ = 2|22⟩` picks up
/// `√2` per doubly occupied mode.
pub fn spdc_expansion(p: f64, order: u32) -> Result<SpdcExpansion> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(NlaError::OutOfRange {
            name: "pump amplitude",
            value: p,
            range: "[0, ∞)",
        });
    }
    if order > 2 {
        return Err(NlaError::Unsupported(format!(
            "pair expansion is truncated at second order, got order {order}"
        )));
    }
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut terms = vec![(basis([0, 0, 0, 0]), c(1.0))];
    if order >= 1 {
        terms.push((basis([1, 1, 0, 0]), c(p)));
        terms.push((basis([0, 0, 1, 1]), c(p)));
    }
    if order >= 2 {
        let p2 = p * p;
        terms.push((basis([1, 1, 1, 1]), c(p2)));
        terms.push((basis([2, 2, 0, 0]), c(2.0 * p2)));
        terms.push((basis([0, 0, 2, 2]), c(2.0 * p2)));
    }
    Ok(SpdcExpansion {
        pump_amplitude: p,
        order,
        terms: PureState::from_terms(SOURCE_MODES, terms)?,
    })
}

#[derive(Clone, Debug)]
pub struct CoincidenceSelection {
    /// Normalized `|1111⟩`.
    pub state: PureState,
    /// Squared amplitude of the four-fold term before normalization.
    pub selection_weight: f64,
}

/// Keeps the one-photon-per-mode component, as a four-fold coincidence would.
pub fn coincidence_select(e: &SpdcExpansion) -> Result<CoincidenceSelection> {
    let target = basis([1, 1, 1, 1]);
    let amp = e.amplitude(&target);
    let weight = amp.norm_sqr();
    if weight == 0.0 {
        return Err(NlaError::Degenerate(format!(
            "no four-photon component at p = {}, order {}",
            e.pump_amplitude, e.order
        )));
    }
    let state = PureState::from_terms(SOURCE_MODES, [(target, amp / amp.norm())])?;
    Ok(CoincidenceSelection {
        state,
        selection_weight: weight,
    })
}

/// VBS settings of the two-stage experiment: `t1` prepares the lossy input,
/// `t2` and `t3` are the first and second amplifier stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fig8Config {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Fig8Config {
    /// Amplifying settings: `t1 ∈ (0, 1)`, `t2, t3 ∈ (0, 1/2)`.
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        check_open_unit_interval("t1", t1)?;
        for (name, t) in [("t2", t2), ("t3", t3)] {
            if !(t.is_finite() && t > 0.0 && t < 0.5) {
                return Err(NlaError::OutOfRange {
                    name,
                    value: t,
                    range: "(0, 1/2); amplification needs transmittance below one half",
                });
            }
        }
        Ok(Fig8Config { t1, t2, t3 })
    }

    /// Any transmittances in `(0, 1)`, including non-amplifying stages.
    pub fn unconstrained(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        check_open_unit_interval("t1", t1)?;
        check_open_unit_interval("t2", t2)?;
        check_open_unit_interval("t3", t3)?;
        Ok(Fig8Config { t1, t2, t3 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig8Result {
    /// One-photon weight in `a3` after the loss splitter.
    pub prepared_eta: f64,
    /// One-photon weight in the final output mode `a5`.
    pub final_eta: f64,
    /// Joint heralding probability of both amplifier stages.
    pub success_prob: f64,
    pub stage_probs: Vec<f64>,
    /// Probability that `b1` registers its photon (one for the coincidence term).
    pub herald_prob: f64,
}

fn ml(s: &str) -> ModeLabel {
    ModeLabel::from(s)
}

/// Target herald and loss: detect `b1`, send `a1` through VBS₁ into `(a3, a4)`
/// and discard `a4`.
pub fn fig8_preparation(t1: f64) -> Result<CircuitSpec> {
    CircuitSpec::new(
        SOURCE_MODES.iter().map(|&m| ml(m)).collect(),
        vec![ml("a3"), ml("a2"), ml("b2")],
        vec![
            Element::Detect {
                rules: vec![DetectionRule::exactly_one(vec![ml("b1")])],
                feed_forward: vec![],
            },
            Element::AddVacuum { mode: ml("v1") },
            Element::BeamSplitter(BeamSplitterElement::new(
                (ml("a1"), ml("v1")),
                (ml("a3"), ml("a4")),
                t1,
            )?),
            Element::Discard {
                modes: vec![ml("a4")],
            },
        ],
    )
}

/// Stage one: ancilla `b2` through VBS₂ into `(b4, b3)`, BS₁ on `(a3, b4)` onto
/// detectors `d1, d2`. Stage two: ancilla `a2` through VBS₃ into `(a6, a5)`,
/// BS₂ on `(b3, a6)` onto `d3, d4`. The output is `a5`.
pub fn fig8_amplifier(t2: f64, t3: f64) -> Result<CircuitSpec> {
    let stage = |signal: &str, ancilla: &str, vac: &str, to_bs: &str, out: &str, d: (&str, &str), t: f64| {
        Ok::<_, NlaError>(vec![
            Element::AddVacuum { mode: ml(vac) },
            Element::BeamSplitter(BeamSplitterElement::new(
                (ml(ancilla), ml(vac)),
                (ml(to_bs), ml(out)),
                t,
            )?),
            Element::BeamSplitter(BeamSplitterElement::balanced(
                (ml(signal), ml(to_bs)),
                (ml(d.0), ml(d.1)),
            )?),
            Element::Detect {
                rules: vec![DetectionRule::exactly_one(vec![ml(d.0), ml(d.1)])],
                feed_forward: vec![PhaseFeedForward {
                    trigger: ml(d.1),
                    target: ml(out),
                }],
            },
        ])
    };
    let mut elements = stage("a3", "b2", "v2", "b4", "b3", ("d1", "d2"), t2)?;
    elements.extend(stage("b3", "a2", "v3", "a6", "a5", ("d3", "d4"), t3)?);
    CircuitSpec::new(vec![ml("a3"), ml("a2"), ml("b2")], vec![ml("a5")], elements)
}

/// Runs the full pipeline from the coincidence-selected source state.
pub fn simulate_fig8(cfg: &Fig8Config) -> Result<Fig8Result> {
    // Any p > 0 gives the same selected state.
    let source = coincidence_select(&spdc_expansion(1.0, 2)?)?;
    let prep = run(&fig8_preparation(cfg.t1)?, &Ensemble::pure(source.state)?)?;
    let prepared_eta = prep.output.single_rail_fidelity(&ml("a3"))?;
    let amp = run(&fig8_amplifier(cfg.t2, cfg.t3)?, &prep.output)?;
    Ok(Fig8Result {
        prepared_eta,
        final_eta: amp.output.single_rail_fidelity(&ml("a5"))?,
        success_prob: amp.success_probability,
        stage_probs: amp.per_stage_probs,
        herald_prob: prep.success_probability,
    })
}

/// Closed-form two-stage values `(eta_2, P_2)` for the same settings.
pub fn fig8_analytic(cfg: &Fig8Config) -> Result<(f64, f64)> {
    let trace = analytic::cascade_sps(cfg.t1, &[cfg.t2, cfg.t3])?;
    Ok((trace.final_eta(), trace.cumulative_probability()))
}
