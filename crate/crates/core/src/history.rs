//! Two-time history states and the projection-amplitude functional.
//!
//! A history state is a complex-weighted sum of chains [ψ_t2]⊙[ψ_t1]
//! ("the particle was in ψ_t1 at t₁ and ψ_t2 at t₂"). Time evolution
//! between the two slices of a chain is trivial throughout this module.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qstate::{chi, chi_perp, BlochAngles, Ket, Unitary, NORM_TOL};

/// Minimum overlap |⟨ψ_t2|ψ_t1⟩| below which a product history is rejected
/// as null.
pub const NULL_HISTORY_TOL: f64 = 1e-9;

/// One summand α · [ψ_t2]⊙[ψ_t1] of a history state.
#[derive(Debug, Clone)]
pub struct HistoryTerm {
    weight: C64,
    ket_t1: Ket,
    ket_t2: Ket,
}

impl HistoryTerm {
    /// Both endpoint states must be normalized single-qubit kets.
    pub fn new(weight: C64, ket_t1: Ket, ket_t2: Ket) -> Result<Self> {
        if ket_t1.dim() != 2 || ket_t2.dim() != 2 {
            return Err(Error::InvalidArgument(
                "history terms are single-qubit chains".into(),
            ));
        }
        if !ket_t1.is_normalized() || !ket_t2.is_normalized() {
            return Err(Error::InvalidArgument(
                "history term endpoints must be normalized".into(),
            ));
        }
        if !weight.re.is_finite() || !weight.im.is_finite() {
            return Err(Error::InvalidArgument("non-finite history weight".into()));
        }
        Ok(Self {
            weight,
            ket_t1,
            ket_t2,
        })
    }

    pub fn weight(&self) -> C64 {
        self.weight
    }

    pub fn ket_t1(&self) -> &Ket {
        &self.ket_t1
    }

    pub fn ket_t2(&self) -> &Ket {
        &self.ket_t2
    }
}

/// A complex-weighted sum of two-time projector chains.
#[derive(Debug, Clone)]
pub struct HistoryState {
    terms: Vec<HistoryTerm>,
}

impl HistoryState {
    /// At least one term with a nonzero weight is required.
    pub fn new(terms: Vec<HistoryTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty history state".into()));
        }
        if terms.iter().all(|t| t.weight.norm() < NORM_TOL) {
            return Err(Error::InvalidArgument(
                "history state has no nonzero weight".into(),
            ));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[HistoryTerm] {
        &self.terms
    }
}

/// The three objects compared throughout: a fixed initial state evolving
/// under a bridging operator, or a history state (product or entangled).
#[derive(Debug, Clone)]
pub enum Scenario {
    EvolvedInitial { psi_t1: Ket, bridging: Unitary },
    History(HistoryState),
}

impl Scenario {
    /// A fixed initial state with an arbitrary bridging operator.
    pub fn evolved_initial(psi_t1: Ket, bridging: Unitary) -> Result<Self> {
        if psi_t1.dim() != 2 {
            return Err(Error::InvalidArgument(
                "the evolving particle is a single qubit".into(),
            ));
        }
        if !psi_t1.is_normalized() {
            return Err(Error::InvalidArgument(
                "the initial state must be normalized".into(),
            ));
        }
        if bridging.dim() != 2 {
            return Err(Error::InvalidArgument(
                "the bridging operator acts on a single qubit".into(),
            ));
        }
        Ok(Self::EvolvedInitial { psi_t1, bridging })
    }

    /// A fixed initial state with trivial evolution (T = 1).
    pub fn trivially_evolved(psi_t1: Ket) -> Result<Self> {
        Self::evolved_initial(psi_t1, Unitary::identity(2)?)
    }

    pub fn history(state: HistoryState) -> Self {
        Self::History(state)
    }
}

/// The normalized single-chain history [ψ_t2]⊙[ψ_t1], weighted by
/// 1/|⟨ψ_t2|ψ_t1⟩|.
///
/// Orthogonal endpoints leave a chain of zero norm for which no
/// normalization exists, so they are rejected as [`Error::NullHistory`].
pub fn product_history(psi_t1: &Ket, psi_t2: &Ket) -> Result<HistoryState> {
    if psi_t1.dim() != 2 || psi_t2.dim() != 2 {
        return Err(Error::InvalidArgument(
            "product histories are single-qubit chains".into(),
        ));
    }
    let overlap = crate::qstate::inner(psi_t2, psi_t1)?.norm();
    if overlap <= NULL_HISTORY_TOL {
        return Err(Error::NullHistory { overlap });
    }
    HistoryState::new(vec![HistoryTerm::new(
        C64::new(1.0 / overlap, 0.0),
        psi_t1.clone(),
        psi_t2.clone(),
    )?])
}

/// The entangled history ([z⁺]⊙[z⁺] + [z⁻]⊙[z⁻])/√2 produced by the
/// Bell-basis erasure protocol.
pub fn entangled_zz_history() -> HistoryState {
    let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    HistoryState::new(vec![
        HistoryTerm::new(w, Ket::z_plus(), Ket::z_plus()).expect("static term"),
        HistoryTerm::new(w, Ket::z_minus(), Ket::z_minus()).expect("static term"),
    ])
    .expect("static state")
}

fn dot2(bra: &Ket, ket: &Ket) -> C64 {
    bra.amplitude(0).conj() * ket.amplitude(0) + bra.amplitude(1).conj() * ket.amplitude(1)
}

/// The amplitude for a scenario to pass a projection onto c₁ at t₁ and c₂
/// at t₂, where c is χ(θ, φ) or, when the corresponding `perp` flag is set,
/// χ⊥(θ, φ).
///
/// For an evolved initial state this is ⟨c₂|T|c₁⟩·⟨c₁|Ψ(t₁)⟩. For a history
/// state it is Σᵢ αᵢ·⟨c₁|ψᵢ,t1⟩·⟨c₂|ψᵢ,t2⟩·⟨ψᵢ,t2|ψᵢ,t1⟩ — the t₁ and t₂
/// factors enter un-conjugated, and each chain carries its own t₂←t₁
/// contraction so that a normalized product history yields the same outcome
/// statistics as the rotation-undo procedure that realizes it. For chains
/// with equal endpoints the contraction factor is 1 and the sum reduces to
/// the circuit-derived two-term amplitude of the entangled z-history.
pub fn proj_amplitude(
    scenario: &Scenario,
    at_t1: BlochAngles,
    at_t2: BlochAngles,
    perp_t1: bool,
    perp_t2: bool,
) -> C64 {
    let c1 = if perp_t1 { chi_perp(at_t1) } else { chi(at_t1) };
    let c2 = if perp_t2 { chi_perp(at_t2) } else { chi(at_t2) };
    match scenario {
        Scenario::EvolvedInitial { psi_t1, bridging } => {
            let evolved = crate::qstate::apply(bridging, &c1).expect("dimension 2 by construction");
            dot2(&c2, &evolved) * dot2(&c1, psi_t1)
        }
        Scenario::History(state) => state
            .terms()
            .iter()
            .map(|term| {
                term.weight()
                    * dot2(&c1, term.ket_t1())
                    * dot2(&c2, term.ket_t2())
                    * dot2(term.ket_t2(), term.ket_t1())
            })
            .sum(),
    }
}
