//! Spatial and temporal CHSH quantities and violation search.
//!
//! The spatial quantity S is built from joint projection probabilities of a
//! two-qubit state; the temporal quantity S̃ replaces them with two-time
//! projection probabilities of a single qubit (an evolved initial state or a
//! history state). Classical (hidden-variable) systems obey |S| ≤ 2; quantum
//! mechanics allows up to 2√2.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::history::{proj_amplitude, Scenario};
use crate::qstate::{chi, chi_perp, inner, tensor, BlochAngles, Ket};

/// Upper bound on |S| for classical (hidden-variable) correlations.
pub const CLASSICAL_BOUND: f64 = 2.0;

/// Upper bound on |S| for quantum correlations.
pub const TSIRELSON_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;

/// The four measurement settings (θ₁,φ₁)…(θ₄,φ₄) entering S and S̃.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleQuad {
    pub a1: BlochAngles,
    pub a2: BlochAngles,
    pub a3: BlochAngles,
    pub a4: BlochAngles,
}

impl AngleQuad {
    pub fn new(a1: BlochAngles, a2: BlochAngles, a3: BlochAngles, a4: BlochAngles) -> Self {
        Self { a1, a2, a3, a4 }
    }

    /// Flat (θ₁, φ₁, …, θ₄, φ₄) representation.
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.a1.theta(),
            self.a1.phi(),
            self.a2.theta(),
            self.a2.phi(),
            self.a3.theta(),
            self.a3.phi(),
            self.a4.theta(),
            self.a4.phi(),
        ]
    }

    pub fn from_array(x: [f64; 8]) -> Result<Self> {
        Ok(Self {
            a1: BlochAngles::new(x[0], x[1])?,
            a2: BlochAngles::new(x[2], x[3])?,
            a3: BlochAngles::new(x[4], x[5])?,
            a4: BlochAngles::new(x[6], x[7])?,
        })
    }
}

/// A normalized two-qubit state, the object of the spatial CHSH test.
#[derive(Debug, Clone)]
pub struct TwoQubitKet(Ket);

impl TwoQubitKet {
    pub fn new(amp: [C64; 4]) -> Result<Self> {
        Ok(Self(Ket::normalized(amp.to_vec())?))
    }

    /// Φ⁺ = (|z⁺z⁺⟩ + |z⁻z⁻⟩)/√2.
    pub fn bell_phi_plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::new([
            C64::new(h, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(h, 0.0),
        ])
        .expect("static state")
    }

    /// The product state |z⁺z⁺⟩.
    pub fn product_zz() -> Self {
        Self::new([
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ])
        .expect("static state")
    }

    pub fn as_ket(&self) -> &Ket {
        &self.0
    }
}

fn joint_amplitude(psi: &TwoQubitKet, c1: &Ket, c2: &Ket) -> C64 {
    let bra = tensor(c1, c2).expect("two single qubits");
    inner(&bra, psi.as_ket()).expect("dimension 4")
}

/// The correlator E(a, b): the signed sum of the four joint projection
/// probabilities onto (χ/χ⊥)(a) ⊗ (χ/χ⊥)(b). Lies in [−1, 1].
pub fn correlator_spatial(psi: &TwoQubitKet, a: BlochAngles, b: BlochAngles) -> f64 {
    let (ca, cpa) = (chi(a), chi_perp(a));
    let (cb, cpb) = (chi(b), chi_perp(b));
    joint_amplitude(psi, &ca, &cb).norm_sqr() - joint_amplitude(psi, &cpa, &cb).norm_sqr()
        - joint_amplitude(psi, &ca, &cpb).norm_sqr()
        + joint_amplitude(psi, &cpa, &cpb).norm_sqr()
}

/// S = E(a1,a2) − E(a1,a4) + E(a3,a2) + E(a3,a4).
pub fn s_spatial(psi: &TwoQubitKet, q: &AngleQuad) -> f64 {
    correlator_spatial(psi, q.a1, q.a2) - correlator_spatial(psi, q.a1, q.a4)
        + correlator_spatial(psi, q.a3, q.a2)
        + correlator_spatial(psi, q.a3, q.a4)
}

/// The temporal correlator Ẽ(a, b): the signed sum of the four two-time
/// projection probabilities with the flag pattern χχ − χ⊥χ − χχ⊥ + χ⊥χ⊥.
pub fn correlator_temporal(scenario: &Scenario, a: BlochAngles, b: BlochAngles) -> f64 {
    proj_amplitude(scenario, a, b, false, false).norm_sqr()
        - proj_amplitude(scenario, a, b, true, false).norm_sqr()
        - proj_amplitude(scenario, a, b, false, true).norm_sqr()
        + proj_amplitude(scenario, a, b, true, true).norm_sqr()
}

/// S̃ = Ẽ(a1,a2) − Ẽ(a1,a4) + Ẽ(a3,a2) + Ẽ(a3,a4).
pub fn s_temporal(scenario: &Scenario, q: &AngleQuad) -> f64 {
    correlator_temporal(scenario, q.a1, q.a2) - correlator_temporal(scenario, q.a1, q.a4)
        + correlator_temporal(scenario, q.a3, q.a2)
        + correlator_temporal(scenario, q.a3, q.a4)
}

const GOLDEN_RATIO_CONJ: f64 = 0.618_033_988_749_894_9;
const COARSE_SCAN_POINTS: usize = 32;
const MAX_SWEEPS: usize = 64;

/// Maximizes f over one coordinate (period 2π): a coarse scan locates the
/// basin, golden-section narrows it. Returns the best value found.
fn maximize_coordinate<F: Fn(&[f64; 8]) -> f64>(f: &F, x: &mut [f64; 8], i: usize) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let step = tau / COARSE_SCAN_POINTS as f64;

    let mut best_t = x[i];
    let mut best_v = f(x);
    for k in 0..COARSE_SCAN_POINTS {
        let t = k as f64 * step;
        x[i] = t;
        let v = f(x);
        if v > best_v {
            best_v = v;
            best_t = t;
        }
    }

    let mut lo = best_t - step;
    let mut hi = best_t + step;
    let mut m1 = hi - GOLDEN_RATIO_CONJ * (hi - lo);
    let mut m2 = lo + GOLDEN_RATIO_CONJ * (hi - lo);
    x[i] = m1;
    let mut f1 = f(x);
    x[i] = m2;
    let mut f2 = f(x);
    while hi - lo > 1e-10 {
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + GOLDEN_RATIO_CONJ * (hi - lo);
            x[i] = m2;
            f2 = f(x);
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - GOLDEN_RATIO_CONJ * (hi - lo);
            x[i] = m1;
            f1 = f(x);
        }
    }
    let mid = 0.5 * (lo + hi);
    x[i] = mid;
    let v_mid = f(x);
    if v_mid >= best_v {
        v_mid
    } else {
        x[i] = best_t;
        best_v
    }
}

fn local_search<F: Fn(&[f64; 8]) -> f64>(f: &F, mut x: [f64; 8], tol: f64) -> ([f64; 8], f64) {
    let mut value = f(&x);
    for _ in 0..MAX_SWEEPS {
        let before = value;
        for i in 0..8 {
            value = maximize_coordinate(f, &mut x, i);
        }
        if value - before < tol {
            break;
        }
    }
    (x, value)
}

fn lex_less(a: &[f64; 8], b: &[f64; 8]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Searches for the angle quad maximizing |S̃| by multi-start coordinate
/// descent with golden-section refinement.
///
/// Restarts draw their starting quads from a deterministic per-restart
/// stream, so the result depends only on `(scenario, restarts, tol, seed)`
/// and not on the number of worker threads. Ties between restarts are broken
/// toward the lexicographically smallest angle tuple.
pub fn maximize_violation(
    scenario: &Scenario,
    restarts: u32,
    tol: f64,
    seed: u64,
) -> Result<(AngleQuad, f64)> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let objective = |x: &[f64; 8]| {
        let q = AngleQuad::from_array(*x).expect("finite search coordinates");
        s_temporal(scenario, &q).abs()
    };
    let tau = 2.0 * std::f64::consts::PI;
    let results: Vec<([f64; 8], f64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_add(u64::from(r).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let mut x = [0.0; 8];
            for xi in &mut x {
                *xi = rng.gen_range(0.0..tau);
            }
            local_search(&objective, x, tol)
        })
        .collect();

    let mut best = results[0];
    for candidate in &results[1..] {
        if candidate.1 > best.1 || (candidate.1 == best.1 && lex_less(&candidate.0, &best.0)) {
            best = *candidate;
        }
    }
    Ok((AngleQuad::from_array(best.0)?, best.1))
}
