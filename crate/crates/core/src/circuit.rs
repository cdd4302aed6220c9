//! Amplifier circuits assembled from optical elements, and a brute-force
//! Fock-space runner used as an oracle for the closed-form recurrences.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{self, Flavor};
use crate::error::{check_open_unit_interval, check_unit_interval, NlaError, Result};
use crate::fock::{Ensemble, FockBasisState, ModeLabel, PureState, PROB_TOL};
use crate::optics::{
    detection_branches, discard, herald_joint, BeamSplitterElement, DetectionRule,
    PhaseFeedForward, MIN_HERALD_PROBABILITY,
};

/// Deviation budget for oracle/analytic agreement.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    /// A single photon enters the first port of a VBS(t) whose second port is
    /// empty. The two outputs, transmitted then reflected, become live modes.
    InjectAncilla {
        modes: (ModeLabel, ModeLabel),
        transmittance: f64,
    },
    /// Brings an empty mode into the circuit, e.g. the open port of a lossy splitter.
    AddVacuum { mode: ModeLabel },
    BeamSplitter(BeamSplitterElement),
    /// Photon counting on every rule's modes; the run survives only if all
    /// rules accept. One `Detect` is one heralding stage.
    Detect {
        rules: Vec<DetectionRule>,
        feed_forward: Vec<PhaseFeedForward>,
    },
    /// Measures and forgets, leaving a mixture on the remaining modes.
    Discard { modes: Vec<ModeLabel> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    pub inputs: Vec<ModeLabel>,
    pub outputs: Vec<ModeLabel>,
    pub elements: Vec<Element>,
}

impl CircuitSpec {
    pub fn new(inputs: Vec<ModeLabel>, outputs: Vec<ModeLabel>, elements: Vec<Element>) -> Result<Self> {
        let spec = CircuitSpec {
            inputs,
            outputs,
            elements,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks mode bookkeeping: every referenced mode is live when used, fresh
    /// modes are never reused, and the outputs survive to the end.
    pub fn validate(&self) -> Result<()> {
        let mut live: BTreeSet<ModeLabel> = BTreeSet::new();
        let mut used: BTreeSet<ModeLabel> = BTreeSet::new();
        for m in &self.inputs {
            if !live.insert(m.clone()) {
                return Err(NlaError::ModeCollision(m.to_string()));
            }
            used.insert(m.clone());
        }
        let fresh = |m: &ModeLabel, live: &mut BTreeSet<ModeLabel>, used: &mut BTreeSet<ModeLabel>| {
            if !used.insert(m.clone()) {
                return Err(NlaError::ModeCollision(m.to_string()));
            }
            live.insert(m.clone());
            Ok(())
        };
        let consume = |m: &ModeLabel, live: &mut BTreeSet<ModeLabel>| {
            if live.remove(m) {
                Ok(())
            } else {
                Err(NlaError::InvalidCircuit(format!("mode `{m}` is not live here")))
            }
        };

        for el in &self.elements {
            match el {
                Element::InjectAncilla {
                    modes,
                    transmittance,
                } => {
                    check_unit_interval("transmittance", *transmittance)?;
                    if modes.0 == modes.1 {
                        return Err(NlaError::ModeCollision(modes.0.to_string()));
                    }
                    fresh(&modes.0, &mut live, &mut used)?;
                    fresh(&modes.1, &mut live, &mut used)?;
                }
                Element::AddVacuum { mode } => fresh(mode, &mut live, &mut used)?,
                Element::BeamSplitter(bs) => {
                    let (i0, i1) = &bs.in_modes;
                    consume(i0, &mut live)?;
                    consume(i1, &mut live)?;
                    for o in [&bs.out_modes.0, &bs.out_modes.1] {
                        if o == i0 || o == i1 {
                            live.insert(o.clone());
                        } else {
                            fresh(o, &mut live, &mut used)?;
                        }
                    }
                }
                Element::Detect {
                    rules,
                    feed_forward,
                } => {
                    let mut detected = BTreeSet::new();
                    for rule in rules {
                        for m in &rule.detector_modes {
                            if !detected.insert(m.clone()) {
                                return Err(NlaError::InvalidCircuit(format!(
                                    "mode `{m}` is detected twice"
                                )));
                            }
                            consume(m, &mut live)?;
                        }
                    }
                    for ff in feed_forward {
                        if !detected.contains(&ff.trigger) {
                            return Err(NlaError::InvalidCircuit(format!(
                                "feed-forward trigger `{}` is not a detector",
                                ff.trigger
                            )));
                        }
                        if !live.contains(&ff.target) {
                            return Err(NlaError::InvalidCircuit(format!(
                                "feed-forward target `{}` is not live",
                                ff.target
                            )));
                        }
                    }
                }
                Element::Discard { modes } => {
                    for m in modes {
                        consume(m, &mut live)?;
                    }
                }
            }
        }
        for m in &self.outputs {
            if !live.contains(m) {
                return Err(NlaError::InvalidCircuit(format!("output `{m}` does not survive")));
            }
        }
        Ok(())
    }

    /// Sequential composition; the next circuit's inputs must be live outputs of this one.
    pub fn then(&self, next: &CircuitSpec) -> Result<CircuitSpec> {
        for m in &next.inputs {
            if !self.outputs.contains(m) {
                return Err(NlaError::InvalidCircuit(format!(
                    "input `{m}` of the next circuit is not an output of this one"
                )));
            }
        }
        let mut elements = self.elements.clone();
        elements.extend(next.elements.iter().cloned());
        let mut outputs: Vec<ModeLabel> = self
            .outputs
            .iter()
            .filter(|m| !next.inputs.contains(m))
            .cloned()
            .collect();
        outputs.extend(next.outputs.iter().cloned());
        CircuitSpec::new(self.inputs.clone(), outputs, elements)
    }

    pub fn stage_count(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| matches!(e, Element::Detect { .. }))
            .count()
    }
}

fn tagged(prefix: &str, tag: &str) -> ModeLabel {
    ModeLabel::new(format!("{prefix}_{tag}"))
}

/// Elements of one amplifier unit acting on `input`, plus its detection rule,
/// feed-forward and output mode.
fn unit_parts(
    input: &ModeLabel,
    t: f64,
    tag: &str,
) -> Result<(Vec<Element>, DetectionRule, PhaseFeedForward, ModeLabel)> {
    check_open_unit_interval("transmittance", t)?;
    let (b1, b2, c1, c2) = (
        tagged("b1", tag),
        tagged("b2", tag),
        tagged("c1", tag),
        tagged("c2", tag),
    );
    let elements = vec![
        Element::InjectAncilla {
            modes: (b1.clone(), b2.clone()),
            transmittance: t,
        },
        Element::BeamSplitter(BeamSplitterElement::balanced(
            (input.clone(), b1),
            (c1.clone(), c2.clone()),
        )?),
    ];
    let rule = DetectionRule::exactly_one(vec![c1, c2.clone()]);
    let ff = PhaseFeedForward {
        trigger: c2,
        target: b2.clone(),
    };
    Ok((elements, rule, ff, b2))
}

/// One amplifier unit: ancilla through VBS(t) into `b1_tag`/`b2_tag`, balanced
/// splitter on `(input, b1_tag) → (c1_tag, c2_tag)`, herald on exactly one
/// photon across `c1_tag, c2_tag`. The output is `b2_tag`.
pub fn build_nla_unit(input_mode: &ModeLabel, t: f64, stage_tag: &str) -> Result<CircuitSpec> {
    let (mut elements, rule, ff, out) = unit_parts(input_mode, t, stage_tag)?;
    elements.push(Element::Detect {
        rules: vec![rule],
        feed_forward: vec![ff],
    });
    CircuitSpec::new(vec![input_mode.clone()], vec![out], elements)
}

/// Input mode of the single-photon cascade.
pub fn sps_input_mode() -> ModeLabel {
    ModeLabel::from("a1")
}

/// Chains one unit per transmittance, tagged `s1, s2, …`.
pub fn build_sps_cascade(ts: &[f64]) -> Result<CircuitSpec> {
    let mut spec = CircuitSpec::new(vec![sps_input_mode()], vec![sps_input_mode()], vec![])?;
    for (i, &t) in ts.iter().enumerate() {
        let input = spec.outputs[0].clone();
        spec = spec.then(&build_nla_unit(&input, t, &format!("s{}", i + 1))?)?;
    }
    Ok(spec)
}

/// Input modes of the two parties sharing the entangled photon.
pub fn spe_input_modes() -> (ModeLabel, ModeLabel) {
    (ModeLabel::from("A"), ModeLabel::from("B"))
}

/// Both parties run a unit at the same transmittance; the stage succeeds only
/// when both herald.
pub fn build_spe_stage(alice: &ModeLabel, bob: &ModeLabel, t: f64, stage: usize) -> Result<CircuitSpec> {
    let (mut elements, rule_a, ff_a, out_a) = unit_parts(alice, t, &format!("A{stage}"))?;
    let (elements_b, rule_b, ff_b, out_b) = unit_parts(bob, t, &format!("B{stage}"))?;
    elements.extend(elements_b);
    elements.push(Element::Detect {
        rules: vec![rule_a, rule_b],
        feed_forward: vec![ff_a, ff_b],
    });
    CircuitSpec::new(vec![alice.clone(), bob.clone()], vec![out_a, out_b], elements)
}

pub fn build_spe_cascade(ts: &[f64]) -> Result<CircuitSpec> {
    let (a, b) = spe_input_modes();
    let mut spec = CircuitSpec::new(vec![a.clone(), b.clone()], vec![a, b], vec![])?;
    for (i, &t) in ts.iter().enumerate() {
        let (a, b) = (spec.outputs[0].clone(), spec.outputs[1].clone());
        spec = spec.then(&build_spe_stage(&a, &b, t, i + 1)?)?;
    }
    Ok(spec)
}

/// When post-selection is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeraldMode {
    /// Each `Detect` keeps only accepted outcomes and renormalizes.
    #[default]
    StageWise,
    /// Every outcome is carried to the end, tagged with whether all detections
    /// so far accepted; selection happens once after the last element.
    EndOfLine,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub success_probability: f64,
    pub output: Ensemble,
    pub per_stage_probs: Vec<f64>,
    /// Normalized heralded state after each `Detect`.
    pub stage_outputs: Vec<Ensemble>,
}

fn apply_element(el: &Element, state: &PureState) -> Result<PureState> {
    match el {
        Element::InjectAncilla {
            modes,
            transmittance,
        } => {
            let anc = PureState::fock([(modes.0.clone(), 1), (modes.1.clone(), 0)])?
                .with_cutoff(state.cutoff())?;
            let vbs = BeamSplitterElement::new(modes.clone(), modes.clone(), *transmittance)?;
            state.tensor(&vbs.apply(&anc)?)
        }
        Element::AddVacuum { mode } => state.with_vacuum_modes([mode.clone()]),
        Element::BeamSplitter(bs) => bs.apply(state),
        Element::Detect { .. } | Element::Discard { .. } => {
            unreachable!("measurements are handled by the runner")
        }
    }
}

fn check_input_register(spec: &CircuitSpec, input: &Ensemble) -> Result<()> {
    let mut expected = spec.inputs.clone();
    expected.sort();
    if input.register() != expected.as_slice() {
        return Err(NlaError::RegisterMismatch {
            left: input.register().iter().map(|m| m.to_string()).collect(),
            right: expected.iter().map(|m| m.to_string()).collect(),
        });
    }
    Ok(())
}

pub fn run(spec: &CircuitSpec, input: &Ensemble) -> Result<OracleResult> {
    run_with(spec, input, HeraldMode::StageWise)
}

pub fn run_with(spec: &CircuitSpec, input: &Ensemble, mode: HeraldMode) -> Result<OracleResult> {
    spec.validate()?;
    check_input_register(spec, input)?;
    match mode {
        HeraldMode::StageWise => run_stage_wise(spec, input),
        HeraldMode::EndOfLine => run_end_of_line(spec, input),
    }
}

fn run_stage_wise(spec: &CircuitSpec, input: &Ensemble) -> Result<OracleResult> {
    let mut current = input.normalized()?;
    let mut per_stage_probs = Vec::new();
    let mut stage_outputs = Vec::new();
    for el in &spec.elements {
        current = match el {
            Element::Detect {
                rules,
                feed_forward,
            } => {
                let h = herald_joint(&current, rules, feed_forward)?;
                per_stage_probs.push(h.success_probability);
                stage_outputs.push(h.out.clone());
                h.out
            }
            Element::Discard { modes } => discard(&current, modes)?,
            other => current.try_map(|s| apply_element(other, s))?,
        };
    }
    Ok(OracleResult {
        success_probability: per_stage_probs.iter().product(),
        output: current,
        per_stage_probs,
        stage_outputs,
    })
}

#[derive(Clone)]
struct Branch {
    weight: f64,
    state: PureState,
    accepted: bool,
}

fn merge_branches(branches: Vec<Branch>) -> Vec<Branch> {
    let mut merged: Vec<Branch> = Vec::new();
    for b in branches {
        if b.weight == 0.0 {
            continue;
        }
        match merged
            .iter_mut()
            .find(|m| m.accepted == b.accepted && m.state.approx_eq_up_to_phase(&b.state, PROB_TOL))
        {
            Some(m) => m.weight += b.weight,
            None => merged.push(b),
        }
    }
    merged
}

fn accepted_ensemble(branches: &[Branch]) -> Result<Option<(f64, Ensemble)>> {
    let kept: Vec<(f64, PureState)> = branches
        .iter()
        .filter(|b| b.accepted)
        .map(|b| (b.weight, b.state.clone()))
        .collect();
    let weight: f64 = kept.iter().map(|(w, _)| w).sum();
    if kept.is_empty() || weight <= 0.0 {
        return Ok(None);
    }
    Ok(Some((weight, Ensemble::new(kept)?.normalized()?.compact())))
}

fn run_end_of_line(spec: &CircuitSpec, input: &Ensemble) -> Result<OracleResult> {
    let mut branches: Vec<Branch> = input
        .normalized()?
        .components()
        .iter()
        .map(|(w, s)| Branch {
            weight: *w,
            state: s.clone(),
            accepted: true,
        })
        .collect();
    let mut accepted_weights = Vec::new();
    let mut snapshots = Vec::new();

    for el in &spec.elements {
        let mut next = Vec::with_capacity(branches.len() * 2);
        match el {
            Element::Detect {
                rules,
                feed_forward,
            } => {
                for b in &branches {
                    for (residual, ok) in detection_branches(&b.state, rules, feed_forward)? {
                        next.push(Branch {
                            weight: b.weight * residual.weight(),
                            state: residual.normalized()?,
                            accepted: b.accepted && ok,
                        });
                    }
                }
            }
            Element::Discard { modes } => {
                for b in &branches {
                    for outcome in b.state.measure_modes(modes)? {
                        if outcome.probability > 0.0 {
                            next.push(Branch {
                                weight: b.weight * outcome.probability,
                                state: outcome.residual.normalized()?,
                                accepted: b.accepted,
                            });
                        }
                    }
                }
            }
            other => {
                for b in &branches {
                    next.push(Branch {
                        weight: b.weight,
                        state: apply_element(other, &b.state)?,
                        accepted: b.accepted,
                    });
                }
            }
        }
        branches = merge_branches(next);
        if matches!(el, Element::Detect { .. }) {
            let snapshot = accepted_ensemble(&branches)?;
            accepted_weights.push(snapshot.as_ref().map_or(0.0, |(w, _)| *w));
            snapshots.push(snapshot.map(|(_, e)| e));
        }
    }

    let total: f64 = branches.iter().map(|b| b.weight).sum();
    let (kept, output) = match accepted_ensemble(&branches)? {
        Some(found) => found,
        None => return Err(NlaError::NeverHeralds { probability: 0.0 }),
    };
    let success_probability = kept / total;
    if success_probability.is_nan() || success_probability < MIN_HERALD_PROBABILITY {
        return Err(NlaError::NeverHeralds {
            probability: success_probability,
        });
    }
    let mut per_stage_probs = Vec::with_capacity(accepted_weights.len());
    let mut prev = 1.0;
    for w in &accepted_weights {
        per_stage_probs.push(w / prev);
        prev = *w;
    }
    let stage_outputs = snapshots
        .into_iter()
        .map(|s| s.ok_or(NlaError::NeverHeralds { probability: 0.0 }))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleResult {
        success_probability,
        output,
        per_stage_probs,
        stage_outputs,
    })
}

/// Input mixture `η|1⟩⟨1| + (1 − η)|0⟩⟨0|` on `mode`.
pub fn single_photon_mixture(mode: &ModeLabel, eta: f64) -> Result<Ensemble> {
    check_unit_interval("eta", eta)?;
    Ensemble::new(vec![
        (eta, PureState::fock([(mode.clone(), 1)])?),
        (1.0 - eta, PureState::vacuum([mode.clone()])?),
    ])
}

/// `(|10⟩ + |01⟩)/√2` over the two given modes.
pub fn entangled_target(a: &ModeLabel, b: &ModeLabel) -> Result<PureState> {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    PureState::from_terms(
        [a.clone(), b.clone()],
        [
            (FockBasisState::new([(a.clone(), 1)]), h),
            (FockBasisState::new([(b.clone(), 1)]), h),
        ],
    )
}

/// Input mixture `η|φ⟩⟨φ| + (1 − η)|vac⟩⟨vac|` on two modes.
pub fn entangled_mixture(a: &ModeLabel, b: &ModeLabel, eta: f64) -> Result<Ensemble> {
    check_unit_interval("eta", eta)?;
    Ensemble::new(vec![
        (eta, entangled_target(a, b)?),
        (1.0 - eta, PureState::vacuum([a.clone(), b.clone()])?),
    ])
}

#[derive(Clone, Debug)]
pub struct SpsOracleRun {
    pub result: OracleResult,
    pub output_mode: ModeLabel,
    pub fidelity: f64,
    pub stage_fidelities: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SpeOracleRun {
    pub result: OracleResult,
    pub output_modes: (ModeLabel, ModeLabel),
    pub entangled_fidelity: f64,
    pub stage_fidelities: Vec<f64>,
    /// Overlap of the heralded one-photon part with `(|10⟩ + |01⟩)/√2` after each stage.
    pub stage_coherence: Vec<f64>,
}

fn check_oracle_transmittances(ts: &[f64]) -> Result<()> {
    ts.iter()
        .try_for_each(|&t| check_open_unit_interval("transmittance", t))
}

pub fn run_sps_cascade_circuit(eta0: f64, ts: &[f64]) -> Result<SpsOracleRun> {
    run_sps_cascade_circuit_with(eta0, ts, HeraldMode::StageWise)
}

pub fn run_sps_cascade_circuit_with(eta0: f64, ts: &[f64], mode: HeraldMode) -> Result<SpsOracleRun> {
    check_oracle_transmittances(ts)?;
    let spec = build_sps_cascade(ts)?;
    let input = single_photon_mixture(&sps_input_mode(), eta0)?;
    let result = run_with(&spec, &input, mode)?;
    let output_mode = spec.outputs[0].clone();
    let fidelity = result.output.single_rail_fidelity(&output_mode)?;
    let stage_fidelities = result
        .stage_outputs
        .iter()
        .enumerate()
        .map(|(i, e)| e.single_rail_fidelity(&tagged("b2", &format!("s{}", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpsOracleRun {
        result,
        output_mode,
        fidelity,
        stage_fidelities,
    })
}

/// Weighted overlap of the one-photon part of `e` with `target`, normalized by
/// the one-photon weight. One means the entangled coherence survived intact.
pub fn one_photon_coherence(e: &Ensemble, target: &PureState) -> Result<f64> {
    let mut overlap = 0.0;
    let mut weight = 0.0;
    for (w, s) in e.components() {
        let one = s.project_photon_number(1);
        weight += w * one.weight();
        overlap += w * target.inner(&one)?.norm_sqr();
    }
    if weight <= 0.0 {
        return Err(NlaError::Degenerate("no one-photon component".into()));
    }
    Ok(overlap / (weight * target.weight()))
}

pub fn run_spe_cascade_circuit(eta0: f64, ts: &[f64]) -> Result<SpeOracleRun> {
    run_spe_cascade_circuit_with(eta0, ts, HeraldMode::StageWise)
}

pub fn run_spe_cascade_circuit_with(eta0: f64, ts: &[f64], mode: HeraldMode) -> Result<SpeOracleRun> {
    check_oracle_transmittances(ts)?;
    let spec = build_spe_cascade(ts)?;
    let (a, b) = spe_input_modes();
    let input = entangled_mixture(&a, &b, eta0)?;
    let result = run_with(&spec, &input, mode)?;
    let output_modes = (spec.outputs[0].clone(), spec.outputs[1].clone());
    let entangled_fidelity = result
        .output
        .fidelity_with(&entangled_target(&output_modes.0, &output_modes.1)?)?;

    let mut stage_fidelities = Vec::with_capacity(ts.len());
    let mut stage_coherence = Vec::with_capacity(ts.len());
    for (i, e) in result.stage_outputs.iter().enumerate() {
        let n = i + 1;
        let target = entangled_target(&tagged("b2", &format!("A{n}")), &tagged("b2", &format!("B{n}")))?;
        stage_fidelities.push(e.fidelity_with(&target)?);
        stage_coherence.push(if eta0 > 0.0 {
            one_photon_coherence(e, &target)?
        } else {
            f64::NAN
        });
    }
    Ok(SpeOracleRun {
        result,
        output_modes,
        entangled_fidelity,
        stage_fidelities,
        stage_coherence,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub eta: f64,
    pub t: f64,
    pub n: usize,
}

/// `(eta, t, n)` for every combination, eta major.
pub fn grid(etas: &[f64], ts: &[f64], ns: &[usize]) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(etas.len() * ts.len() * ns.len());
    for &eta in etas {
        for &t in ts {
            for &n in ns {
                out.push(GridPoint { eta, t, n });
            }
        }
    }
    out
}

/// η ∈ {0.05, …, 0.95} × t ∈ {0.10, …, 0.45} × N ∈ {1, …, 5}.
pub fn default_verification_grid() -> Vec<GridPoint> {
    let etas: Vec<f64> = (1..=19).map(|k| k as f64 / 20.0).collect();
    let ts: Vec<f64> = (2..=9).map(|k| k as f64 / 20.0).collect();
    grid(&etas, &ts, &[1, 2, 3, 4, 5])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointDeviation {
    pub eta: f64,
    pub t: f64,
    pub n: usize,
    pub fidelity_oracle: f64,
    pub fidelity_analytic: f64,
    pub probability_oracle: f64,
    pub probability_analytic: f64,
    pub fidelity_deviation: f64,
    pub probability_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointFailure {
    pub eta: f64,
    pub t: f64,
    pub n: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationReport {
    pub flavor: Flavor,
    pub points: usize,
    pub tolerance: f64,
    pub max_fidelity_deviation: f64,
    pub max_probability_deviation: f64,
    pub worst_fidelity: Option<PointDeviation>,
    pub worst_probability: Option<PointDeviation>,
    pub failures: Vec<PointFailure>,
    pub passed: bool,
}

/// Runs the circuit oracle and the closed form at one point.
pub fn compare_point(point: GridPoint, flavor: Flavor) -> Result<PointDeviation> {
    let ts = vec![point.t; point.n];
    let (fidelity_oracle, probability_oracle) = match flavor {
        Flavor::Sps => {
            let run = run_sps_cascade_circuit(point.eta, &ts)?;
            (run.fidelity, run.result.success_probability)
        }
        Flavor::Spe => {
            let run = run_spe_cascade_circuit(point.eta, &ts)?;
            (run.entangled_fidelity, run.result.success_probability)
        }
    };
    let trace = analytic::cascade(flavor, point.eta, &ts)?;
    let (fidelity_analytic, probability_analytic) = (trace.final_eta(), trace.cumulative_probability());
    Ok(PointDeviation {
        eta: point.eta,
        t: point.t,
        n: point.n,
        fidelity_oracle,
        fidelity_analytic,
        probability_oracle,
        probability_analytic,
        fidelity_deviation: (fidelity_oracle - fidelity_analytic).abs(),
        probability_deviation: (probability_oracle - probability_analytic).abs(),
    })
}

/// Evaluates every grid point both ways. Per-point errors are collected in
/// the report, and the report passes only when there are none and both
/// maximum deviations are below [`ORACLE_TOLERANCE`].
pub fn compare_oracle_vs_analytic(points: &[GridPoint], flavor: Flavor) -> Result<DeviationReport> {
    if points.is_empty() {
        return Err(NlaError::InvalidCircuit("verification grid is empty".into()));
    }
    let outcomes: Vec<(GridPoint, Result<PointDeviation>)> = points
        .par_iter()
        .map(|&p| (p, compare_point(p, flavor)))
        .collect();

    let mut report = DeviationReport {
        flavor,
        points: points.len(),
        tolerance: ORACLE_TOLERANCE,
        max_fidelity_deviation: 0.0,
        max_probability_deviation: 0.0,
        worst_fidelity: None,
        worst_probability: None,
        failures: Vec::new(),
        passed: false,
    };
    for (p, outcome) in outcomes {
        match outcome {
            Ok(d) => {
                if report.worst_fidelity.is_none() || d.fidelity_deviation > report.max_fidelity_deviation {
                    report.max_fidelity_deviation = d.fidelity_deviation;
                    report.worst_fidelity = Some(d.clone());
                }
                if report.worst_probability.is_none()
                    || d.probability_deviation > report.max_probability_deviation
                {
                    report.max_probability_deviation = d.probability_deviation;
                    report.worst_probability = Some(d);
                }
            }
            Err(e) => report.failures.push(PointFailure {
                eta: p.eta,
                t: p.t,
                n: p.n,
                error: e.to_string(),
            }),
        }
    }
    report.passed = report.failures.is_empty()
        && report.max_fidelity_deviation < ORACLE_TOLERANCE
        && report.max_probability_deviation < ORACLE_TOLERANCE;
    Ok(report)
}
