//! Gate-by-gate simulation of the auxiliary-qubit circuits.
//!
//! Three procedures are simulated and cross-checked against their analytic
//! amplitudes: the entangled-history preparation with Bell-basis erasure,
//! the rotation-undo run for a single product chain, and the post-selected
//! run that realizes the entangled z-history. Register qubits are indexed
//! 0 = system, 1 = first auxiliary, 2 = second auxiliary.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::history::{entangled_zz_history, proj_amplitude, Scenario};
use crate::qstate::{
    apply, chi, chi_perp, inner, project_factor, project_pair, tensor, BlochAngles, Ket, Unitary,
    NORM_TOL,
};

/// A circuit element. The two projection variants are non-unitary by
/// design: they model the measurement outcomes the procedures condition on.
#[derive(Debug, Clone)]
pub enum Gate {
    Cnot {
        control: usize,
        target: usize,
    },
    /// Applies the rotation `from0 → to0` to the target qubit when the
    /// control is |0⟩, and `from1 → to1` when it is |1⟩. The action on the
    /// orthogonal complement of each `from` state is a free completion
    /// choice and does not affect any run probability.
    ControlledRotate {
        control: usize,
        target: usize,
        from0: Ket,
        to0: Ket,
        from1: Ket,
        to1: Ket,
    },
    SingleRotate {
        target: usize,
        from: Ket,
        to: Ket,
    },
    ProjectFactor {
        target: usize,
        onto: Ket,
    },
    ProjectPair {
        targets: (usize, usize),
        onto: Ket,
    },
}

impl Gate {
    pub fn is_projection(&self) -> bool {
        matches!(self, Gate::ProjectFactor { .. } | Gate::ProjectPair { .. })
    }

    /// Short human-readable label for step logs.
    pub fn label(&self) -> String {
        match self {
            Gate::Cnot { control, target } => format!("cnot(control={control}, target={target})"),
            Gate::ControlledRotate { control, target, .. } => {
                format!("controlled-rotate(control={control}, target={target})")
            }
            Gate::SingleRotate { target, .. } => format!("rotate(target={target})"),
            Gate::ProjectFactor { target, .. } => format!("project(target={target})"),
            Gate::ProjectPair { targets, .. } => {
                format!("project-pair(targets=({}, {}))", targets.0, targets.1)
            }
        }
    }

    /// The full register matrix of a unitary gate. Projection gates are
    /// rejected: they have no unitary representation.
    pub fn unitary(&self, num_qubits: usize) -> Result<Unitary> {
        let dim = 1usize << num_qubits;
        let check_index = |q: usize| -> Result<()> {
            if q < num_qubits {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "qubit index {q} out of range for a {num_qubits}-qubit register"
                )))
            }
        };
        match self {
            Gate::Cnot { control, target } => {
                check_index(*control)?;
                check_index(*target)?;
                if control == target {
                    return Err(Error::InvalidArgument(
                        "cnot control and target coincide".into(),
                    ));
                }
                let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
                let cshift = num_qubits - 1 - control;
                let tshift = num_qubits - 1 - target;
                for j in 0..dim {
                    let i = if (j >> cshift) & 1 == 1 {
                        j ^ (1 << tshift)
                    } else {
                        j
                    };
                    entries[i * dim + j] = C64::new(1.0, 0.0);
                }
                Unitary::new(dim, entries)
            }
            Gate::ControlledRotate {
                control,
                target,
                from0,
                to0,
                from1,
                to1,
            } => {
                check_index(*control)?;
                check_index(*target)?;
                if control == target {
                    return Err(Error::InvalidArgument(
                        "controlled rotation control and target coincide".into(),
                    ));
                }
                let u0 = Unitary::rotation_sending(from0, to0)?;
                let u1 = Unitary::rotation_sending(from1, to1)?;
                let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
                let cshift = num_qubits - 1 - control;
                let tshift = num_qubits - 1 - target;
                for j in 0..dim {
                    let u = if (j >> cshift) & 1 == 1 { &u1 } else { &u0 };
                    let tbit = (j >> tshift) & 1;
                    for row in 0..2 {
                        let i = (j & !(1 << tshift)) | (row << tshift);
                        entries[i * dim + j] = u.entry(row, tbit);
                    }
                }
                Unitary::new(dim, entries)
            }
            Gate::SingleRotate { target, from, to } => {
                check_index(*target)?;
                let u = Unitary::rotation_sending(from, to)?;
                let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
                let tshift = num_qubits - 1 - target;
                for j in 0..dim {
                    let tbit = (j >> tshift) & 1;
                    for row in 0..2 {
                        let i = (j & !(1 << tshift)) | (row << tshift);
                        entries[i * dim + j] = u.entry(row, tbit);
                    }
                }
                Unitary::new(dim, entries)
            }
            Gate::ProjectFactor { .. } | Gate::ProjectPair { .. } => Err(Error::InvalidArgument(
                "projection gates are not unitary".into(),
            )),
        }
    }

    /// Applies the gate to an (possibly un-normalized) register state.
    /// Returns the new state and the step's outcome probability: 1 for
    /// unitary gates, the conditional projection probability otherwise.
    pub fn apply_to(&self, state: &Ket) -> Result<(Ket, f64)> {
        match self {
            Gate::ProjectFactor { target, onto } => {
                let residual = project_factor(state, *target, onto)?;
                let p = conditional_probability(state, &residual);
                Ok((residual, p))
            }
            Gate::ProjectPair { targets, onto } => {
                let residual = project_pair(state, *targets, onto)?;
                let p = conditional_probability(state, &residual);
                Ok((residual, p))
            }
            _ => {
                let u = self.unitary(state.num_qubits())?;
                Ok((apply(&u, state)?, 1.0))
            }
        }
    }
}

fn conditional_probability(before: &Ket, after: &Ket) -> f64 {
    let in_norm = before.norm_sqr();
    if in_norm < NORM_TOL * NORM_TOL {
        0.0
    } else {
        after.norm_sqr() / in_norm
    }
}

/// One executed gate with its outcome probability.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub gate: Gate,
    pub probability: f64,
}

/// The outcome of a simulated run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// The surviving state, normalized; `None` when a projection
    /// annihilated the run.
    pub final_state: Option<Ket>,
    /// Product of all step outcome probabilities.
    pub joint_probability: f64,
    /// The run's chain amplitude after the procedure's post-selection
    /// renormalization (factor 1 for the rotation-undo run, √2 for the
    /// Bell-post-selected run).
    pub renormalized_amplitude: C64,
    pub steps: Vec<StepRecord>,
}

fn run_gates(initial: &Ket, gates: Vec<Gate>) -> Result<(Ket, Vec<StepRecord>, f64)> {
    let mut state = initial.clone();
    let mut steps = Vec::with_capacity(gates.len());
    let mut joint = 1.0;
    for gate in gates {
        let (next, probability) = gate.apply_to(&state)?;
        joint *= probability;
        steps.push(StepRecord { gate, probability });
        state = next;
    }
    Ok((state, steps, joint))
}

/// The four Bell states of the auxiliary pair, in the fixed output order
/// [Φ⁺, Φ⁻, Ψ⁺, Ψ⁻].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            BellState::PhiPlus => "phi+",
            BellState::PhiMinus => "phi-",
            BellState::PsiPlus => "psi+",
            BellState::PsiMinus => "psi-",
        }
    }

    pub fn ket(&self) -> Ket {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b, sign) = match self {
            BellState::PhiPlus => (0, 3, 1.0),
            BellState::PhiMinus => (0, 3, -1.0),
            BellState::PsiPlus => (1, 2, 1.0),
            BellState::PsiMinus => (1, 2, -1.0),
        };
        let mut amp = vec![C64::new(0.0, 0.0); 4];
        amp[a] = C64::new(h, 0.0);
        amp[b] = C64::new(sign * h, 0.0);
        Ket::normalized(amp).expect("static state")
    }
}

/// A Bell-basis measurement outcome on the auxiliary pair.
#[derive(Debug, Clone)]
pub struct BellOutcome {
    pub bell: BellState,
    pub probability: f64,
    /// The conditional (normalized) system state; `None` for outcomes of
    /// zero probability.
    pub system_state: Option<Ket>,
}

/// Runs the preparation circuit: |x⁺⟩|00⟩, CNOT(system→aux1),
/// CNOT(system→aux2). The result is (|z⁺⟩|00⟩ + |z⁻⟩|11⟩)/√2.
pub fn prepare_entangled_history() -> Ket {
    let aux0 = tensor(&Ket::z_plus(), &Ket::z_plus()).expect("two qubits");
    let initial = tensor(&Ket::x_plus(), &aux0).expect("three qubits");
    let gates = vec![
        Gate::Cnot {
            control: 0,
            target: 1,
        },
        Gate::Cnot {
            control: 0,
            target: 2,
        },
    ];
    let (state, _, _) = run_gates(&initial, gates).expect("static circuit");
    state
}

/// Projects the auxiliary pair onto each Bell state and reports the outcome
/// probability and conditional system state, in the order
/// [Φ⁺, Φ⁻, Ψ⁺, Ψ⁻].
pub fn erase_in_bell_basis(psi: &Ket) -> Result<Vec<BellOutcome>> {
    if psi.dim() != 8 {
        return Err(Error::InvalidArgument(
            "Bell-basis erasure needs a three-qubit register".into(),
        ));
    }
    if !psi.is_normalized() {
        return Err(Error::InvalidArgument(
            "Bell-basis erasure needs a normalized state".into(),
        ));
    }
    BellState::ALL
        .iter()
        .map(|&bell| {
            let contraction = crate::qstate::contract_pair(psi, (1, 2), &bell.ket())?;
            let probability = contraction.norm_sqr();
            let system_state = contraction.renormalized().ok();
            Ok(BellOutcome {
                bell,
                probability,
                system_state,
            })
        })
        .collect()
}

fn selected(angles: BlochAngles, perp: bool) -> Ket {
    if perp {
        chi_perp(angles)
    } else {
        chi(angles)
    }
}

/// The rotation-undo run for the single chain [z⁺]⊙[z⁺]: prepare |z⁺⟩,
/// project onto c₁, rotate c₁ back to |z⁺⟩, project onto c₂. The joint
/// probability is |⟨c₂|z⁺⟩⟨c₁|z⁺⟩|².
///
/// A zero-probability projection yields a zero-probability record, not an
/// error, so correlator sums over all flag combinations never abort.
pub fn run_undo_protocol(
    a: BlochAngles,
    b: BlochAngles,
    perp_t1: bool,
    perp_t2: bool,
) -> RunRecord {
    let c1 = selected(a, perp_t1);
    let c2 = selected(b, perp_t2);
    let gates = vec![
        Gate::ProjectFactor {
            target: 0,
            onto: c1.clone(),
        },
        Gate::SingleRotate {
            target: 0,
            from: c1,
            to: Ket::z_plus(),
        },
        Gate::ProjectFactor {
            target: 0,
            onto: c2.clone(),
        },
    ];
    let (state, steps, joint) = run_gates(&Ket::z_plus(), gates).expect("static circuit shape");
    let raw = inner(&c2, &state).expect("single qubit");
    RunRecord {
        final_state: state.renormalized().ok(),
        joint_probability: joint,
        renormalized_amplitude: raw,
        steps,
    }
}

/// The full post-selected run realizing the entangled z-history, with the
/// auxiliary pair post-selected onto `bell`. The √2 renormalization
/// convention is applied uniformly to every Bell outcome.
pub fn run_postselected_protocol_onto(
    a: BlochAngles,
    b: BlochAngles,
    perp_t1: bool,
    perp_t2: bool,
    bell: BellState,
) -> RunRecord {
    let c1 = selected(a, perp_t1);
    let c2 = selected(b, perp_t2);
    let aux0 = tensor(&Ket::z_plus(), &Ket::z_plus()).expect("two qubits");
    let initial = tensor(&Ket::x_plus(), &aux0).expect("three qubits");
    let gates = vec![
        Gate::Cnot {
            control: 0,
            target: 1,
        },
        Gate::ProjectFactor {
            target: 0,
            onto: c1.clone(),
        },
        Gate::ControlledRotate {
            control: 1,
            target: 0,
            from0: c1.clone(),
            to0: Ket::z_plus(),
            from1: c1,
            to1: Ket::z_minus(),
        },
        Gate::Cnot {
            control: 0,
            target: 2,
        },
        Gate::ProjectPair {
            targets: (1, 2),
            onto: bell.ket(),
        },
        Gate::ProjectFactor {
            target: 0,
            onto: c2.clone(),
        },
    ];
    let (state, steps, joint) = run_gates(&initial, gates).expect("static circuit shape");
    let survivor = tensor(&c2, &bell.ket()).expect("three qubits");
    let raw = inner(&survivor, &state).expect("matching registers");
    RunRecord {
        final_state: state.renormalized().ok(),
        joint_probability: joint,
        renormalized_amplitude: raw * std::f64::consts::SQRT_2,
        steps,
    }
}

/// [`run_postselected_protocol_onto`] with the Φ⁺ post-selection of the
/// original procedure; the renormalized amplitude squared reproduces the
/// analytic two-term interference probability.
pub fn run_postselected_protocol(
    a: BlochAngles,
    b: BlochAngles,
    perp_t1: bool,
    perp_t2: bool,
) -> RunRecord {
    run_postselected_protocol_onto(a, b, perp_t1, perp_t2, BellState::PhiPlus)
}

/// The temporal correlator Ẽ(a, b) assembled from four post-selected runs
/// (one per χ/χ⊥ flag combination), using renormalized probabilities with
/// the signed pattern χχ − χ⊥χ − χχ⊥ + χ⊥χ⊥.
pub fn temporal_correlator_via_circuit(a: BlochAngles, b: BlochAngles) -> f64 {
    let p = |perp_t1: bool, perp_t2: bool| {
        run_postselected_protocol(a, b, perp_t1, perp_t2)
            .renormalized_amplitude
            .norm_sqr()
    };
    p(false, false) - p(true, false) - p(false, true) + p(true, true)
}

/// The analytic counterpart of [`temporal_correlator_via_circuit`],
/// evaluated from the entangled z-history's projection amplitudes.
pub fn temporal_correlator_analytic(a: BlochAngles, b: BlochAngles) -> f64 {
    crate::chsh::correlator_temporal(&Scenario::history(entangled_zz_history()), a, b)
}

/// The analytic renormalized probability the circuit must reproduce for a
/// given flag combination.
pub fn postselected_probability_analytic(
    a: BlochAngles,
    b: BlochAngles,
    perp_t1: bool,
    perp_t2: bool,
) -> f64 {
    proj_amplitude(
        &Scenario::history(entangled_zz_history()),
        a,
        b,
        perp_t1,
        perp_t2,
    )
    .norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::BlochAngles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    fn angles(theta: f64, phi: f64) -> BlochAngles {
        BlochAngles::new(theta, phi).unwrap()
    }

    fn random_angles(rng: &mut ChaCha8Rng) -> BlochAngles {
        angles(rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI))
    }

    #[test]
    fn preparation_reproduces_displayed_states() {
        // After the first CNOT: amplitudes 1/√2 at indices 0 and 6.
        let aux0 = tensor(&Ket::z_plus(), &Ket::z_plus()).unwrap();
        let initial = tensor(&Ket::x_plus(), &aux0).unwrap();
        let first = Gate::Cnot {
            control: 0,
            target: 1,
        };
        let (mid, p) = first.apply_to(&initial).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(mid.amplitude(0).re, FRAC_1_SQRT_2);
        assert_eq!(mid.amplitude(6).re, FRAC_1_SQRT_2);
        for i in [1, 2, 3, 4, 5, 7] {
            assert_eq!(mid.amplitude(i).norm_sqr(), 0.0);
        }

        // After both CNOTs: amplitudes 1/√2 at indices 0 and 7.
        let state = prepare_entangled_history();
        assert_eq!(state.amplitude(0).re, FRAC_1_SQRT_2);
        assert_eq!(state.amplitude(7).re, FRAC_1_SQRT_2);
        for i in 1..7 {
            assert_eq!(state.amplitude(i).norm_sqr(), 0.0);
        }
        assert!((state.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bell_erasure_outcomes() {
        let outcomes = erase_in_bell_basis(&prepare_entangled_history()).unwrap();
        assert_eq!(outcomes.len(), 4);
        assert_eq!(outcomes[0].bell, BellState::PhiPlus);
        assert!((outcomes[0].probability - 0.5).abs() < 1e-12);
        assert!(outcomes[0]
            .system_state
            .as_ref()
            .unwrap()
            .approx_eq(&Ket::x_plus(), 1e-12));

        assert_eq!(outcomes[1].bell, BellState::PhiMinus);
        assert!((outcomes[1].probability - 0.5).abs() < 1e-12);
        assert!(outcomes[1]
            .system_state
            .as_ref()
            .unwrap()
            .approx_eq(&Ket::x_minus(), 1e-12));

        for outcome in &outcomes[2..] {
            assert!(outcome.probability < 1e-12);
            assert!(outcome.system_state.is_none());
        }
    }

    #[test]
    fn undo_protocol_probabilities() {
        let r = run_undo_protocol(angles(0.0, 0.0), angles(0.0, 0.0), false, false);
        assert!((r.joint_probability - 1.0).abs() < 1e-12);

        let r = run_undo_protocol(angles(FRAC_PI_4, 0.0), angles(0.0, 0.0), false, false);
        assert!((r.joint_probability - 0.5).abs() < 1e-12);

        let r = run_undo_protocol(angles(FRAC_PI_4, 0.0), angles(FRAC_PI_4, 0.0), false, false);
        assert!((r.joint_probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn undo_protocol_matches_chain_amplitude_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..500 {
            let a = random_angles(&mut rng);
            let b = random_angles(&mut rng);
            let perp_t1 = rng.gen_bool(0.5);
            let perp_t2 = rng.gen_bool(0.5);
            let r = run_undo_protocol(a, b, perp_t1, perp_t2);
            let c1 = selected(a, perp_t1);
            let c2 = selected(b, perp_t2);
            let expected = inner(&c2, &Ket::z_plus()).unwrap().norm_sqr()
                * inner(&c1, &Ket::z_plus()).unwrap().norm_sqr();
            assert!((r.joint_probability - expected).abs() < 1e-12);
            assert!((r.renormalized_amplitude.norm_sqr() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn undo_protocol_survives_dead_branches() {
        // χ⊥(0,0) = |z⁻⟩ is orthogonal to the prepared |z⁺⟩.
        let r = run_undo_protocol(angles(0.0, 0.0), angles(0.0, 0.0), true, false);
        assert_eq!(r.joint_probability, 0.0);
        assert!(r.final_state.is_none());
        assert_eq!(r.renormalized_amplitude.norm_sqr(), 0.0);
    }

    #[test]
    fn postselected_protocol_reference_points() {
        let r = run_postselected_protocol(angles(0.0, 0.0), angles(0.0, 0.0), false, false);
        assert!((r.renormalized_amplitude.norm_sqr() - 0.5).abs() < 1e-12);
        // Cumulative probability through the Bell projection step is 1/4.
        let through_bell: f64 = r.steps[..5].iter().map(|s| s.probability).product();
        assert!((through_bell - 0.25).abs() < 1e-12);

        let r = run_postselected_protocol(angles(0.0, 0.0), angles(0.0, 0.0), false, true);
        assert!(r.renormalized_amplitude.norm_sqr() < 1e-15);

        let r = run_postselected_protocol(
            angles(FRAC_PI_4, 0.0),
            angles(FRAC_PI_4, 0.0),
            false,
            false,
        );
        assert!((r.renormalized_amplitude.norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn circuit_matches_analytic_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for _ in 0..10_000 {
            let a = random_angles(&mut rng);
            let b = random_angles(&mut rng);
            let perp_t1 = rng.gen_bool(0.5);
            let perp_t2 = rng.gen_bool(0.5);
            let r = run_postselected_protocol(a, b, perp_t1, perp_t2);
            let expected = postselected_probability_analytic(a, b, perp_t1, perp_t2);
            assert!(
                (r.renormalized_amplitude.norm_sqr() - expected).abs() < 1e-12,
                "circuit {} vs analytic {expected}",
                r.renormalized_amplitude.norm_sqr()
            );
        }
    }

    #[test]
    fn renormalized_probabilities_are_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..200 {
            let a = random_angles(&mut rng);
            let b = random_angles(&mut rng);
            let total: f64 = [(false, false), (true, false), (false, true), (true, true)]
                .iter()
                .map(|&(p1, p2)| {
                    run_postselected_protocol(a, b, p1, p2)
                        .renormalized_amplitude
                        .norm_sqr()
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn circuit_correlator_matches_analytic_correlator() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        assert!(
            (temporal_correlator_via_circuit(angles(0.0, 0.0), angles(0.0, 0.0)) - 1.0).abs()
                < 1e-10
        );
        assert!(
            (temporal_correlator_via_circuit(angles(0.0, 0.0), angles(PI / 8.0, 0.0))
                - std::f64::consts::SQRT_2 / 2.0)
                .abs()
                < 1e-10
        );
        for _ in 0..200 {
            let a = random_angles(&mut rng);
            let b = random_angles(&mut rng);
            let circuit = temporal_correlator_via_circuit(a, b);
            let analytic = temporal_correlator_analytic(a, b);
            assert!((circuit - analytic).abs() < 1e-10);
        }
    }

    #[test]
    fn completion_choice_does_not_change_probabilities() {
        // The controlled rotation is pinned only on c₁ (|0⟩ branch: c₁→z⁺,
        // |1⟩ branch: c₁→z⁻); its action on c₁⊥ is a free completion. An
        // alternative completion is the standard gate left-composed with a
        // controlled diagonal that phases only the complement outputs
        // (z⁻ on the |0⟩ branch, z⁺ on the |1⟩ branch). Because the system
        // is exactly in c₁ when the gate acts, every probability must be
        // unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..200 {
            let a = random_angles(&mut rng);
            let b = random_angles(&mut rng);
            let perp_t1 = rng.gen_bool(0.5);
            let perp_t2 = rng.gen_bool(0.5);

            let c1 = selected(a, perp_t1);
            let c2 = selected(b, perp_t2);
            let standard = run_postselected_protocol(a, b, perp_t1, perp_t2);

            let cr = Gate::ControlledRotate {
                control: 1,
                target: 0,
                from0: c1.clone(),
                to0: Ket::z_plus(),
                from1: c1.clone(),
                to1: Ket::z_minus(),
            };
            let phase0 = C64::from_polar(1.0, rng.gen_range(0.1..2.0 * PI));
            let phase1 = C64::from_polar(1.0, rng.gen_range(0.1..2.0 * PI));
            let mut diag = vec![C64::new(0.0, 0.0); 64];
            for idx in 0..8 {
                let system = (idx >> 2) & 1;
                let aux1 = (idx >> 1) & 1;
                diag[idx * 8 + idx] = match (aux1, system) {
                    (0, 1) => phase0,
                    (1, 0) => phase1,
                    _ => C64::new(1.0, 0.0),
                };
            }
            let completion_twist = Unitary::new(8, diag).unwrap();
            let alternative = completion_twist.compose(&cr.unitary(3).unwrap()).unwrap();

            let aux0 = tensor(&Ket::z_plus(), &Ket::z_plus()).unwrap();
            let initial = tensor(&Ket::x_plus(), &aux0).unwrap();
            let prefix = vec![
                Gate::Cnot {
                    control: 0,
                    target: 1,
                },
                Gate::ProjectFactor {
                    target: 0,
                    onto: c1.clone(),
                },
            ];
            let (state, _, joint_prefix) = run_gates(&initial, prefix).unwrap();
            let state = apply(&alternative, &state).unwrap();
            let suffix = vec![
                Gate::Cnot {
                    control: 0,
                    target: 2,
                },
                Gate::ProjectPair {
                    targets: (1, 2),
                    onto: BellState::PhiPlus.ket(),
                },
                Gate::ProjectFactor {
                    target: 0,
                    onto: c2.clone(),
                },
            ];
            let (state, _, joint_suffix) = run_gates(&state, suffix).unwrap();
            let joint = joint_prefix * joint_suffix;
            let survivor = tensor(&c2, &BellState::PhiPlus.ket()).unwrap();
            let raw = inner(&survivor, &state).unwrap();
            let renorm_sqr = raw.norm_sqr() * 2.0;

            assert!((joint - standard.joint_probability).abs() < 1e-12);
            assert!((renorm_sqr - standard.renormalized_amplitude.norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_matrices_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..100 {
            let c1 = chi(random_angles(&mut rng));
            let gates = [
                Gate::Cnot {
                    control: 0,
                    target: 1,
                },
                Gate::Cnot {
                    control: 0,
                    target: 2,
                },
                Gate::ControlledRotate {
                    control: 1,
                    target: 0,
                    from0: c1.clone(),
                    to0: Ket::z_plus(),
                    from1: c1.clone(),
                    to1: Ket::z_minus(),
                },
                Gate::SingleRotate {
                    target: 0,
                    from: c1.clone(),
                    to: Ket::z_plus(),
                },
            ];
            for gate in &gates {
                // Unitary::new validates U†U = 1 entrywise at construction.
                assert!(gate.unitary(3).is_ok());
            }
        }
        let projection = Gate::ProjectFactor {
            target: 0,
            onto: Ket::z_plus(),
        };
        assert!(projection.unitary(3).is_err());
    }

    #[test]
    fn joint_probability_is_product_of_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..200 {
            let a = random_angles(&mut rng);
            let b = random_angles(&mut rng);
            let r = run_postselected_protocol(a, b, rng.gen_bool(0.5), rng.gen_bool(0.5));
            let product: f64 = r.steps.iter().map(|s| s.probability).product();
            assert!((r.joint_probability - product).abs() < 1e-12);
        }
    }
}
