//! Truncated Fock-space states over labelled optical modes.
//!
//! Pure states are sparse maps from occupation vectors to complex amplitudes.
//! A pure state may be sub-normalized; its squared norm is its weight, which
//! is how post-selection probabilities are carried from one step to the next.
//! Classical mixtures are [`Ensemble`]s of pure states.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NlaError, Result};

/// Photon-number cutoff used when none is configured.
pub const DEFAULT_CUTOFF: u32 = 4;

/// Absolute tolerance for normalization and unitarity checks.
pub const NORM_TOL: f64 = 1e-10;

/// Absolute tolerance for comparing probabilities.
pub const PROB_TOL: f64 = 1e-12;

// Amplitudes whose squared magnitude falls below this are exact cancellations
// up to rounding and are removed from the sparse map.
const DROP_NORM_SQR: f64 = 1e-32;

/// 2×2 complex matrix, row-major. Column `j` gives the image of input mode `j`.
pub type Mat2 = [[Complex64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeLabel(String);

impl ModeLabel {
    pub fn new(name: impl Into<String>) -> Self {
        ModeLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ModeLabel {
    fn from(s: &str) -> Self {
        ModeLabel(s.to_owned())
    }
}

impl From<String> for ModeLabel {
    fn from(s: String) -> Self {
        ModeLabel(s)
    }
}

impl From<&ModeLabel> for ModeLabel {
    fn from(m: &ModeLabel) -> Self {
        m.clone()
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Occupation numbers keyed by mode. Modes that are absent hold zero photons.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockBasisState {
    occupations: BTreeMap<ModeLabel, u32>,
}

impl FockBasisState {
    pub fn new<I, L>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (L, u32)>,
        L: Into<ModeLabel>,
    {
        let occupations = pairs
            .into_iter()
            .map(|(l, n)| (l.into(), n))
            .filter(|(_, n)| *n > 0)
            .collect();
        FockBasisState { occupations }
    }

    pub fn count(&self, mode: &ModeLabel) -> u32 {
        self.occupations.get(mode).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.occupations.values().sum()
    }

    /// Non-zero occupations only.
    pub fn occupations(&self) -> &BTreeMap<ModeLabel, u32> {
        &self.occupations
    }
}

impl fmt::Display for FockBasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, (m, n)) in self.occupations.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}:{n}")?;
        }
        write!(f, "⟩")
    }
}

/// Sparse superposition of Fock basis states over a sorted mode register.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    register: Vec<ModeLabel>,
    amplitudes: BTreeMap<Vec<u32>, Complex64>,
    cutoff: u32,
}

/// One outcome of a photon-counting measurement.
#[derive(Clone, Debug)]
pub struct MeasurementOutcome {
    /// Photon count seen on every measured mode (zeros included).
    pub pattern: BTreeMap<ModeLabel, u32>,
    pub probability: f64,
    /// Projected state on the unmeasured modes; its weight equals `probability`.
    pub residual: PureState,
}

impl MeasurementOutcome {
    pub fn total_count(&self) -> u32 {
        self.pattern.values().sum()
    }
}

fn sorted_register<I, L>(modes: I) -> Result<Vec<ModeLabel>>
where
    I: IntoIterator<Item = L>,
    L: Into<ModeLabel>,
{
    let mut register: Vec<ModeLabel> = modes.into_iter().map(Into::into).collect();
    register.sort();
    for pair in register.windows(2) {
        if pair[0] == pair[1] {
            return Err(NlaError::ModeCollision(pair[0].to_string()));
        }
    }
    Ok(register)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn pow(z: Complex64, n: u32) -> Complex64 {
    (0..n).fold(Complex64::new(1.0, 0.0), |acc, _| acc * z)
}

/// Largest entry of |U†U − I|.
pub fn unitarity_deviation(u: &Mat2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let s: Complex64 = u.iter().map(|row| row[i].conj() * row[j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).norm());
        }
    }
    worst
}

impl PureState {
    /// Vacuum on the given modes, with unit amplitude.
    pub fn vacuum<I, L>(modes: I) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: Into<ModeLabel>,
    {
        let register = sorted_register(modes)?;
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(vec![0; register.len()], Complex64::new(1.0, 0.0));
        Ok(PureState {
            register,
            amplitudes,
            cutoff: DEFAULT_CUTOFF,
        })
    }

    /// A single Fock basis state; every listed mode is part of the register.
    pub fn fock<I, L>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (L, u32)>,
        L: Into<ModeLabel>,
    {
        let pairs: Vec<(ModeLabel, u32)> = pairs.into_iter().map(|(l, n)| (l.into(), n)).collect();
        let register = pairs.iter().map(|(l, _)| l.clone());
        let basis = FockBasisState::new(pairs.iter().cloned());
        PureState::from_terms(register, [(basis, Complex64::new(1.0, 0.0))])
    }

    /// Builds a superposition. Repeated basis states accumulate.
    pub fn from_terms<M, L, T>(modes: M, terms: T) -> Result<Self>
    where
        M: IntoIterator<Item = L>,
        L: Into<ModeLabel>,
        T: IntoIterator<Item = (FockBasisState, Complex64)>,
    {
        PureState::from_terms_with_cutoff(modes, terms, DEFAULT_CUTOFF)
    }

    pub fn from_terms_with_cutoff<M, L, T>(modes: M, terms: T, cutoff: u32) -> Result<Self>
    where
        M: IntoIterator<Item = L>,
        L: Into<ModeLabel>,
        T: IntoIterator<Item = (FockBasisState, Complex64)>,
    {
        let register = sorted_register(modes)?;
        let mut amplitudes: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (basis, amp) in terms {
            for mode in basis.occupations.keys() {
                if register.binary_search(mode).is_err() {
                    return Err(NlaError::UnknownMode(mode.to_string()));
                }
            }
            let key: Vec<u32> = register.iter().map(|m| basis.count(m)).collect();
            let photons: u32 = key.iter().sum();
            if photons > cutoff {
                return Err(NlaError::CutoffExceeded { photons, cutoff });
            }
            *amplitudes.entry(key).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        amplitudes.retain(|_, a| a.norm_sqr() > DROP_NORM_SQR);
        Ok(PureState {
            register,
            amplitudes,
            cutoff,
        })
    }

    /// Returns the same state with a different cutoff; fails if a term no longer fits.
    pub fn with_cutoff(mut self, cutoff: u32) -> Result<Self> {
        if let Some(photons) = self.max_photons().filter(|&p| p > cutoff) {
            return Err(NlaError::CutoffExceeded { photons, cutoff });
        }
        self.cutoff = cutoff;
        Ok(self)
    }

    pub fn register(&self) -> &[ModeLabel] {
        &self.register
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn contains_mode(&self, mode: &ModeLabel) -> bool {
        self.register.binary_search(mode).is_ok()
    }

    fn index_of(&self, mode: &ModeLabel) -> Result<usize> {
        self.register
            .binary_search(mode)
            .map_err(|_| NlaError::UnknownMode(mode.to_string()))
    }

    fn basis_of(&self, key: &[u32]) -> FockBasisState {
        FockBasisState::new(self.register.iter().cloned().zip(key.iter().copied()))
    }

    pub fn amplitude(&self, basis: &FockBasisState) -> Complex64 {
        if basis.occupations.keys().any(|m| !self.contains_mode(m)) {
            return Complex64::new(0.0, 0.0);
        }
        let key: Vec<u32> = self.register.iter().map(|m| basis.count(m)).collect();
        self.amplitudes
            .get(&key)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Non-zero terms in basis order.
    pub fn terms(&self) -> impl Iterator<Item = (FockBasisState, Complex64)> + '_ {
        self.amplitudes.iter().map(|(k, a)| (self.basis_of(k), *a))
    }

    pub fn num_terms(&self) -> usize {
        self.amplitudes.len()
    }

    /// Squared norm.
    pub fn weight(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn max_photons(&self) -> Option<u32> {
        self.amplitudes.keys().map(|k| k.iter().sum()).max()
    }

    pub fn normalized(&self) -> Result<Self> {
        let w = self.weight();
        if w <= DROP_NORM_SQR {
            return Err(NlaError::Degenerate("cannot normalize a zero state".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / w.sqrt(), 0.0)))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        for a in out.amplitudes.values_mut() {
            *a *= factor;
        }
        out.amplitudes.retain(|_, a| a.norm_sqr() > DROP_NORM_SQR);
        out
    }

    /// Tensor product over the union of two disjoint registers.
    pub fn tensor(&self, other: &PureState) -> Result<Self> {
        if let Some(m) = self.register.iter().find(|m| other.contains_mode(m)) {
            return Err(NlaError::ModeCollision(m.to_string()));
        }
        let cutoff = self.cutoff.max(other.cutoff);
        let register =
            sorted_register(self.register.iter().chain(other.register.iter()).cloned())?;
        let from_self: Vec<Option<usize>> =
            register.iter().map(|m| self.register.binary_search(m).ok()).collect();
        let from_other: Vec<Option<usize>> =
            register.iter().map(|m| other.register.binary_search(m).ok()).collect();

        let mut amplitudes = BTreeMap::new();
        for (ka, a) in &self.amplitudes {
            for (kb, b) in &other.amplitudes {
                let key: Vec<u32> = (0..register.len())
                    .map(|i| match (from_self[i], from_other[i]) {
                        (Some(j), _) => ka[j],
                        (None, Some(j)) => kb[j],
                        (None, None) => unreachable!(),
                    })
                    .collect();
                let photons: u32 = key.iter().sum();
                if photons > cutoff {
                    return Err(NlaError::CutoffExceeded { photons, cutoff });
                }
                amplitudes.insert(key, a * b);
            }
        }
        Ok(PureState {
            register,
            amplitudes,
            cutoff,
        })
    }

    /// Appends vacuum modes to the register.
    pub fn with_vacuum_modes<I, L>(&self, modes: I) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: Into<ModeLabel>,
    {
        let vac = PureState::vacuum(modes)?;
        self.tensor(&vac.with_cutoff(self.cutoff)?)
    }

    /// Applies a passive two-mode transformation. Creation operators map as
    /// `a_j† → Σ_k u[k][j] a_k†`, with `m1` as index 0 and `m2` as index 1.
    pub fn apply_two_mode_unitary(&self, m1: &ModeLabel, m2: &ModeLabel, u: &Mat2) -> Result<Self> {
        let deviation = unitarity_deviation(u);
        if deviation.is_nan() || deviation > NORM_TOL {
            return Err(NlaError::NotUnitary { deviation });
        }
        if m1 == m2 {
            return Err(NlaError::ModeCollision(m1.to_string()));
        }
        let i1 = self.index_of(m1)?;
        let i2 = self.index_of(m2)?;

        let mut amplitudes: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (key, &alpha) in &self.amplitudes {
            let (n1, n2) = (key[i1], key[i2]);
            let prefactor = alpha / (factorial(n1) * factorial(n2)).sqrt();
            for i in 0..=n1 {
                let first = pow(u[0][0], i) * pow(u[1][0], n1 - i) * binomial(n1, i);
                for j in 0..=n2 {
                    let second = pow(u[0][1], j) * pow(u[1][1], n2 - j) * binomial(n2, j);
                    let k1 = i + j;
                    let k2 = n1 + n2 - k1;
                    let coeff = prefactor * first * second * (factorial(k1) * factorial(k2)).sqrt();
                    let mut out = key.clone();
                    out[i1] = k1;
                    out[i2] = k2;
                    *amplitudes.entry(out).or_insert(Complex64::new(0.0, 0.0)) += coeff;
                }
            }
        }
        amplitudes.retain(|_, a| a.norm_sqr() > DROP_NORM_SQR);
        if let Some(photons) = amplitudes.keys().map(|k| k.iter().sum::<u32>()).max() {
            if photons > self.cutoff {
                return Err(NlaError::CutoffExceeded {
                    photons,
                    cutoff: self.cutoff,
                });
            }
        }
        Ok(PureState {
            register: self.register.clone(),
            amplitudes,
            cutoff: self.cutoff,
        })
    }

    pub fn rename_mode(&self, from: &ModeLabel, to: &ModeLabel) -> Result<Self> {
        let idx = self.index_of(from)?;
        if from == to {
            return Ok(self.clone());
        }
        if self.contains_mode(to) {
            return Err(NlaError::ModeCollision(to.to_string()));
        }
        let mut labels = self.register.clone();
        labels[idx] = to.clone();
        let register = sorted_register(labels.iter().cloned())?;
        let source: Vec<usize> = register
            .iter()
            .map(|m| labels.iter().position(|l| l == m).expect("label present"))
            .collect();
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(k, a)| (source.iter().map(|&s| k[s]).collect(), *a))
            .collect();
        Ok(PureState {
            register,
            amplitudes,
            cutoff: self.cutoff,
        })
    }

    /// Keeps only the terms with exactly `photons` photons in total.
    pub fn project_photon_number(&self, photons: u32) -> Self {
        let mut out = self.clone();
        out.amplitudes.retain(|k, _| k.iter().sum::<u32>() == photons);
        out
    }

    /// Multiplies each term by `(-1)^n`, `n` the occupation of `mode`.
    pub fn phase_flip(&self, mode: &ModeLabel) -> Result<Self> {
        let idx = self.index_of(mode)?;
        let mut out = self.clone();
        for (k, a) in out.amplitudes.iter_mut() {
            if k[idx] % 2 == 1 {
                *a = -*a;
            }
        }
        Ok(out)
    }

    /// Enumerates every photon-counting outcome on `modes`, in pattern order.
    pub fn measure_modes(&self, modes: &[ModeLabel]) -> Result<Vec<MeasurementOutcome>> {
        let mut measured: Vec<usize> = modes.iter().map(|m| self.index_of(m)).collect::<Result<_>>()?;
        measured.sort_unstable();
        measured.dedup();
        if measured.is_empty() {
            return Ok(vec![MeasurementOutcome {
                pattern: BTreeMap::new(),
                probability: self.weight(),
                residual: self.clone(),
            }]);
        }
        let kept: Vec<usize> = (0..self.register.len())
            .filter(|i| measured.binary_search(i).is_err())
            .collect();
        let residual_register: Vec<ModeLabel> = kept.iter().map(|&i| self.register[i].clone()).collect();

        let mut groups: BTreeMap<Vec<u32>, BTreeMap<Vec<u32>, Complex64>> = BTreeMap::new();
        for (key, a) in &self.amplitudes {
            let pattern: Vec<u32> = measured.iter().map(|&i| key[i]).collect();
            let rest: Vec<u32> = kept.iter().map(|&i| key[i]).collect();
            *groups
                .entry(pattern)
                .or_default()
                .entry(rest)
                .or_insert(Complex64::new(0.0, 0.0)) += a;
        }

        Ok(groups
            .into_iter()
            .map(|(pattern, amplitudes)| {
                let residual = PureState {
                    register: residual_register.clone(),
                    amplitudes,
                    cutoff: self.cutoff,
                };
                MeasurementOutcome {
                    pattern: measured
                        .iter()
                        .map(|&i| self.register[i].clone())
                        .zip(pattern)
                        .collect(),
                    probability: residual.weight(),
                    residual,
                }
            })
            .collect())
    }

    fn check_same_register(&self, other: &PureState) -> Result<()> {
        if self.register != other.register {
            return Err(NlaError::RegisterMismatch {
                left: self.register.iter().map(|m| m.to_string()).collect(),
                right: other.register.iter().map(|m| m.to_string()).collect(),
            });
        }
        Ok(())
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        self.check_same_register(other)?;
        Ok(self
            .amplitudes
            .iter()
            .filter_map(|(k, a)| other.amplitudes.get(k).map(|b| a.conj() * b))
            .sum())
    }

    /// |⟨self|other⟩|² for the normalized versions of both states.
    pub fn fidelity_with(&self, other: &PureState) -> Result<f64> {
        let overlap = self.inner(other)?.norm_sqr();
        let norms = self.weight() * other.weight();
        if norms <= DROP_NORM_SQR {
            return Err(NlaError::Degenerate("overlap with a zero state".into()));
        }
        Ok(overlap / norms)
    }

    /// Equality up to a global phase: `min_θ ‖self − e^{iθ} other‖ ≤ tol`.
    pub fn approx_eq_up_to_phase(&self, other: &PureState, tol: f64) -> bool {
        match self.inner(other) {
            Ok(overlap) => {
                let dist_sqr = self.weight() + other.weight() - 2.0 * overlap.norm();
                dist_sqr <= tol * tol
            }
            Err(_) => false,
        }
    }

    /// Reduced density matrix of a single mode, as a sparse map `(n, n') → ρ[n, n']`.
    pub fn reduced_density(&self, mode: &ModeLabel) -> Result<BTreeMap<(u32, u32), Complex64>> {
        let idx = self.index_of(mode)?;
        let mut by_rest: BTreeMap<Vec<u32>, Vec<(u32, Complex64)>> = BTreeMap::new();
        for (k, a) in &self.amplitudes {
            let mut rest = k.clone();
            let n = rest.remove(idx);
            by_rest.entry(rest).or_default().push((n, *a));
        }
        let mut rho: BTreeMap<(u32, u32), Complex64> = BTreeMap::new();
        for column in by_rest.values() {
            for &(n, a) in column {
                for &(m, b) in column {
                    *rho.entry((n, m)).or_insert(Complex64::new(0.0, 0.0)) += a * b.conj();
                }
            }
        }
        Ok(rho)
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.amplitudes.is_empty() {
            return write!(f, "0");
        }
        for (i, (basis, a)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i){}", a.re, a.im, basis)?;
        }
        Ok(())
    }
}

/// Classical mixture of normalized pure states over a common register.
#[derive(Clone, Debug)]
pub struct Ensemble {
    components: Vec<(f64, PureState)>,
}

impl Ensemble {
    /// Component states are normalized; their squared norm is folded into the weight.
    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let mut out = Vec::with_capacity(components.len());
        for (w, state) in components {
            if !(w.is_finite() && w >= 0.0) {
                return Err(NlaError::InvalidEnsemble(format!("weight {w} is not a probability")));
            }
            if let Some((_, first)) = out.first() {
                let first: &PureState = first;
                if first.register != state.register {
                    return Err(NlaError::InvalidEnsemble("components use different mode registers".into()));
                }
            }
            let norm = state.weight();
            if norm <= DROP_NORM_SQR {
                if w > 0.0 {
                    return Err(NlaError::InvalidEnsemble("zero state with positive weight".into()));
                }
                continue;
            }
            out.push((w * norm, state.normalized()?));
        }
        if out.is_empty() {
            return Err(NlaError::InvalidEnsemble("no components".into()));
        }
        Ok(Ensemble { components: out })
    }

    pub fn pure(state: PureState) -> Result<Self> {
        Ensemble::new(vec![(1.0, state)])
    }

    pub fn components(&self) -> &[(f64, PureState)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn register(&self) -> &[ModeLabel] {
        self.components[0].1.register()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|(w, _)| w).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(NlaError::Degenerate("ensemble has zero total weight".into()));
        }
        Ok(Ensemble {
            components: self.components.iter().map(|(w, s)| (w / total, s.clone())).collect(),
        })
    }

    /// Applies a fallible state map component-wise. The map may change the register
    /// but must do so uniformly; sub-normalized results fold into the weights.
    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&PureState) -> Result<PureState>,
    {
        let mapped = self
            .components
            .iter()
            .map(|(w, s)| Ok((*w, f(s)?)))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(mapped)
    }

    /// Merges components that are equal up to global phase and drops zero weights.
    pub fn compact(&self) -> Self {
        let mut merged: Vec<(f64, PureState)> = Vec::new();
        for (w, s) in &self.components {
            if *w == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(_, m)| m.approx_eq_up_to_phase(s, PROB_TOL)) {
                Some(slot) => slot.0 += w,
                None => merged.push((*w, s.clone())),
            }
        }
        if merged.is_empty() {
            merged.push(self.components[0].clone());
        }
        Ensemble { components: merged }
    }

    /// Weight of the one-photon component of `mode`, after tracing out every other
    /// mode. Every component must reduce to a diagonal state on {|0⟩, |1⟩}.
    pub fn single_rail_fidelity(&self, mode: &ModeLabel) -> Result<f64> {
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(NlaError::Degenerate("ensemble has zero total weight".into()));
        }
        let mut one = 0.0;
        for (w, state) in &self.components {
            let rho = state.reduced_density(mode)?;
            for (&(n, m), value) in &rho {
                let reject = |reason: String| NlaError::NotSingleRail {
                    mode: mode.to_string(),
                    reason,
                };
                if n != m && value.norm() > NORM_TOL {
                    return Err(reject(format!("coherence ρ[{n},{m}] = {value}")));
                }
                if n == m && n >= 2 && value.re > NORM_TOL {
                    return Err(reject(format!("{n}-photon population {}", value.re)));
                }
            }
            one += w * rho.get(&(1, 1)).map_or(0.0, |v| v.re);
        }
        Ok(one / total)
    }

    /// ⟨φ|ρ|φ⟩ with `target` normalized and ρ the normalized mixture.
    pub fn fidelity_with(&self, target: &PureState) -> Result<f64> {
        let target = target.normalized()?;
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(NlaError::Degenerate("ensemble has zero total weight".into()));
        }
        let mut f = 0.0;
        for (w, state) in &self.components {
            f += w * target.inner(state)?.norm_sqr();
        }
        Ok(f / total)
    }

    /// Dense density-matrix entries `ρ[i, j]` over the basis states in the support.
    pub fn density_elements(&self) -> BTreeMap<(FockBasisState, FockBasisState), Complex64> {
        let mut rho = BTreeMap::new();
        for (w, state) in &self.components {
            let terms: Vec<_> = state.terms().collect();
            for (bi, ai) in &terms {
                for (bj, aj) in &terms {
                    *rho.entry((bi.clone(), bj.clone()))
                        .or_insert(Complex64::new(0.0, 0.0)) += ai * aj.conj() * *w;
                }
            }
        }
        rho
    }
}

/// Free-function form of [`Ensemble::single_rail_fidelity`].
pub fn single_rail_fidelity(e: &Ensemble, mode: &ModeLabel) -> Result<f64> {
    e.single_rail_fidelity(mode)
}
