//! Cross-checks the sparse ensemble simulation against a dense state-vector
//! model that builds each splitter from the matrix exponential of its mode
//! coupling generator instead of expanding creation operators.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use nla_cascade::circuit::{run_sps_cascade_circuit, run_spe_cascade_circuit};
use nla_cascade::fock::{FockBasisState, ModeLabel};

/// Photon numbers 0..DIM per mode. Circuits here never hold more than three
/// photons, so every block the generator couples fits inside the truncation.
const DIM: usize = 4;

type Op = Vec<Vec<f64>>;
type Rho = BTreeMap<(Vec<usize>, Vec<usize>), f64>;

fn matmul(a: &Op, b: &Op) -> Op {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0.0 {
                for j in 0..n {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

/// `exp(θ (a₂†a₁ − a₁†a₂)) · (−1)^{n₂}` on two truncated modes, indexed
/// `n₁·DIM + n₂`. Maps `a₁† → cos θ a₁† + sin θ a₂†` and `a₂† → sin θ a₁† − cos θ a₂†`.
fn splitter(theta: f64) -> Op {
    let n = DIM * DIM;
    let idx = |n1: usize, n2: usize| n1 * DIM + n2;
    let mut k = vec![vec![0.0; n]; n];
    for n1 in 0..DIM {
        for n2 in 0..DIM {
            if n1 >= 1 && n2 + 1 < DIM {
                // a₂†a₁
                k[idx(n1 - 1, n2 + 1)][idx(n1, n2)] += ((n1 * (n2 + 1)) as f64).sqrt();
            }
            if n2 >= 1 && n1 + 1 < DIM {
                // −a₁†a₂
                k[idx(n1 + 1, n2 - 1)][idx(n1, n2)] -= ((n2 * (n1 + 1)) as f64).sqrt();
            }
        }
    }
    let mut exp = vec![vec![0.0; n]; n];
    let mut term: Op = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for order in 1..80 {
        for i in 0..n {
            for j in 0..n {
                exp[i][j] += term[i][j];
            }
        }
        term = matmul(&term, &k);
        let scale = theta / order as f64;
        term.iter_mut().flatten().for_each(|x| *x *= scale);
    }
    for row in exp.iter_mut() {
        for (j, x) in row.iter_mut().enumerate() {
            if (j % DIM) % 2 == 1 {
                *x = -*x;
            }
        }
    }
    exp
}

#[derive(Clone)]
struct Dense {
    modes: usize,
    amps: Vec<f64>,
}

impl Dense {
    fn vacuum(modes: usize) -> Self {
        let mut amps = vec![0.0; DIM.pow(modes as u32)];
        amps[0] = 1.0;
        Dense { modes, amps }
    }

    fn stride(&self, m: usize) -> usize {
        DIM.pow((self.modes - 1 - m) as u32)
    }

    fn digit(&self, idx: usize, m: usize) -> usize {
        (idx / self.stride(m)) % DIM
    }

    fn create(&mut self, m: usize) {
        let s = self.stride(m);
        let mut out = vec![0.0; self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            let n = self.digit(i, m);
            if a != 0.0 && n + 1 < DIM {
                out[i + s] += a * ((n + 1) as f64).sqrt();
            }
        }
        self.amps = out;
    }

    fn apply(&mut self, op: &Op, m1: usize, m2: usize) {
        let (s1, s2) = (self.stride(m1), self.stride(m2));
        let mut out = vec![0.0; self.amps.len()];
        for base in 0..self.amps.len() {
            if self.digit(base, m1) != 0 || self.digit(base, m2) != 0 {
                continue;
            }
            for n1 in 0..DIM {
                for n2 in 0..DIM {
                    let a = self.amps[base + n1 * s1 + n2 * s2];
                    if a == 0.0 {
                        continue;
                    }
                    let col = n1 * DIM + n2;
                    for o1 in 0..DIM {
                        for o2 in 0..DIM {
                            out[base + o1 * s1 + o2 * s2] += op[o1 * DIM + o2][col] * a;
                        }
                    }
                }
            }
        }
        self.amps = out;
    }

    /// Projects onto the given occupations of `(m1, m2)` and resets both to vacuum.
    fn project_and_clear(&self, m1: usize, m2: usize, n1: usize, n2: usize) -> Dense {
        let (s1, s2) = (self.stride(m1), self.stride(m2));
        let mut out = vec![0.0; self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            if a != 0.0 && self.digit(i, m1) == n1 && self.digit(i, m2) == n2 {
                out[i - n1 * s1 - n2 * s2] += a;
            }
        }
        Dense { modes: self.modes, amps: out }
    }

    fn flip_if_odd(&mut self, trigger_count: usize, target: usize) {
        if trigger_count % 2 == 1 {
            for i in 0..self.amps.len() {
                if self.digit(i, target) % 2 == 1 {
                    self.amps[i] = -self.amps[i];
                }
            }
        }
    }

    fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum()
    }
}

/// One amplifier on `signal` using vacuum modes `(p, q)`; returns every
/// accepted branch and the new signal mode.
fn dense_unit(branches: Vec<Dense>, signal: usize, p: usize, q: usize, t: f64) -> Vec<Dense> {
    let vbs = splitter(t.sqrt().acos());
    let bs = splitter(FRAC_PI_4);
    branches
        .into_iter()
        .flat_map(|mut s| {
            s.create(p);
            s.apply(&vbs, p, q);
            s.apply(&bs, signal, p);
            [(1, 0), (0, 1)].map(|(c1, c2)| {
                let mut b = s.project_and_clear(signal, p, c1, c2);
                b.flip_if_odd(c2, q);
                b
            })
        })
        .collect()
}

/// Weighted dense components; the weight is folded into the amplitudes.
fn weighted(d: Dense, w: f64) -> Dense {
    Dense {
        modes: d.modes,
        amps: d.amps.into_iter().map(|a| a * w.sqrt()).collect(),
    }
}

/// Reduced density matrix over `outputs` (all other modes must be vacuum),
/// keyed by photon numbers, unnormalized.
fn reduced(branches: &[Dense], outputs: &[usize]) -> Rho {
    let mut rho = BTreeMap::new();
    for b in branches {
        let support: Vec<(Vec<usize>, f64)> = b
            .amps
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(i, &a)| {
                for m in 0..b.modes {
                    if !outputs.contains(&m) {
                        assert_eq!(b.digit(i, m), 0, "non-output mode {m} is occupied");
                    }
                }
                (outputs.iter().map(|&m| b.digit(i, m)).collect(), a)
            })
            .collect();
        for (ki, ai) in &support {
            for (kj, aj) in &support {
                *rho.entry((ki.clone(), kj.clone())).or_insert(0.0) += ai * aj;
            }
        }
    }
    rho
}

fn sparse_rho(
    elements: BTreeMap<(FockBasisState, FockBasisState), num_complex::Complex64>,
    outputs: &[ModeLabel],
) -> Rho {
    let key = |b: &FockBasisState| -> Vec<usize> {
        assert!(b.occupations().keys().all(|m| outputs.contains(m)), "stray occupied mode in {b:?}");
        outputs.iter().map(|m| b.count(m) as usize).collect()
    };
    elements
        .into_iter()
        .map(|((i, j), v)| {
            assert!(v.im.abs() < 1e-14, "complex density entry {v}");
            ((key(&i), key(&j)), v.re)
        })
        .collect()
}

fn assert_rho_close(a: &Rho, b: &Rho, tol: f64) {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    for k in keys {
        let x = a.get(k).copied().unwrap_or(0.0);
        let y = b.get(k).copied().unwrap_or(0.0);
        assert!((x - y).abs() < tol, "rho{k:?}: dense {x} vs sparse {y}");
    }
}

fn dense_sps(eta: f64, ts: &[f64]) -> (Rho, f64) {
    let mut one = Dense::vacuum(3);
    one.create(0);
    let mut branches = vec![weighted(one, eta), weighted(Dense::vacuum(3), 1.0 - eta)];
    // Detected modes are back in vacuum after each stage, so three modes rotate.
    let mut signal = 0;
    for &t in ts {
        let (p, q) = ((signal + 1) % 3, (signal + 2) % 3);
        branches = dense_unit(branches, signal, p, q, t);
        signal = q;
    }
    let rho = reduced(&branches, &[signal]);
    let success: f64 = branches.iter().map(Dense::norm_sqr).sum();
    (rho, success)
}

fn dense_spe(eta: f64, ts: &[f64]) -> (Rho, f64) {
    // Alice uses modes 0..3, Bob 3..6.
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = Dense::vacuum(6);
    a.create(0);
    let mut b = Dense::vacuum(6);
    b.create(3);
    let entangled = Dense {
        modes: 6,
        amps: a.amps.iter().zip(&b.amps).map(|(x, y)| h * (x + y)).collect(),
    };
    let mut branches = vec![weighted(entangled, eta), weighted(Dense::vacuum(6), 1.0 - eta)];
    let (mut sa, mut sb) = (0, 3);
    for &t in ts {
        let (pa, qa) = ((sa + 1) % 3, (sa + 2) % 3);
        let (pb, qb) = (3 + (sb + 1) % 3, 3 + (sb + 2) % 3);
        branches = dense_unit(branches, sa, pa, qa, t);
        branches = dense_unit(branches, sb, pb, qb, t);
        sa = qa;
        sb = qb;
    }
    let rho = reduced(&branches, &[sa, sb]);
    let success: f64 = branches.iter().map(Dense::norm_sqr).sum();
    (rho, success)
}

fn normalize(rho: &mut Rho, by: f64) {
    rho.values_mut().for_each(|v| *v /= by);
}

#[test]
fn splitter_generator_is_unitary_on_low_photon_blocks() {
    let u = splitter(0.7);
    for i in 0..DIM * DIM {
        for j in 0..DIM * DIM {
            if (i / DIM + i % DIM) > 3 || (j / DIM + j % DIM) > 3 {
                continue;
            }
            let dot: f64 = (0..DIM * DIM).map(|k| u[k][i] * u[k][j]).sum();
            assert!((dot - f64::from(i == j)).abs() < 1e-13);
        }
    }
}

#[test]
fn sps_density_matrix_matches_dense_model() {
    for eta in [0.0, 0.2, 0.55, 0.9, 1.0] {
        for ts in [vec![0.2], vec![0.35, 0.1], vec![0.45, 0.25, 0.15], vec![0.5, 0.5]] {
            let (mut rho, success) = dense_sps(eta, &ts);
            normalize(&mut rho, success);
            let run = run_sps_cascade_circuit(eta, &ts).unwrap();
            assert!((run.result.success_probability - success).abs() < 1e-12, "eta={eta} ts={ts:?}");
            let sparse = sparse_rho(run.result.output.density_elements(), std::slice::from_ref(&run.output_mode));
            assert_rho_close(&rho, &sparse, 1e-12);
            let one = rho.get(&(vec![1], vec![1])).copied().unwrap_or(0.0);
            assert!((run.fidelity - one).abs() < 1e-12);
        }
    }
}

#[test]
fn spe_density_matrix_matches_dense_model() {
    for eta in [0.0, 0.3, 0.8] {
        for ts in [vec![0.2], vec![0.4, 0.15]] {
            let (mut rho, success) = dense_spe(eta, &ts);
            normalize(&mut rho, success);
            let run = run_spe_cascade_circuit(eta, &ts).unwrap();
            assert!((run.result.success_probability - success).abs() < 1e-12, "eta={eta} ts={ts:?}");
            let (a, b) = run.output_modes.clone();
            let sparse = sparse_rho(run.result.output.density_elements(), &[a, b]);
            assert_rho_close(&rho, &sparse, 1e-12);

            let get = |i: [usize; 2], j: [usize; 2]| rho.get(&(i.to_vec(), j.to_vec())).copied().unwrap_or(0.0);
            let phi = 0.5 * (get([1, 0], [1, 0]) + get([0, 1], [0, 1]) + get([1, 0], [0, 1]) + get([0, 1], [1, 0]));
            assert!((run.entangled_fidelity - phi).abs() < 1e-12);
        }
    }
}
