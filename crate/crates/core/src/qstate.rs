//! Complex linear algebra for 1–3 qubit registers.
//!
//! Everything here is an immutable value and every operation is a pure
//! function, so the module is safe to use from any number of threads.
//!
//! Register layout: tensor factors are ordered system ⊗ aux1 ⊗ aux2 with
//! big-endian index encoding, so `|z⁻⟩|10⟩` sits at index 6 (binary 110).

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance for normalization and unitarity checks.
pub const NORM_TOL: f64 = 1e-12;

/// Register dimensions supported by the crate.
pub const SUPPORTED_DIMS: [usize; 3] = [2, 4, 8];

fn check_finite(values: &[C64]) -> Result<()> {
    if values.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "non-finite amplitude component".into(),
        ))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if SUPPORTED_DIMS.contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

/// The (θ, φ) pair parametrizing the measurement states χ(θ, φ) and
/// χ⊥(θ, φ). Angles are radians; there is no range restriction because the
/// witnesses integrate both angles over the full [0, 2π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochAngles {
    theta: f64,
    phi: f64,
}

impl BlochAngles {
    /// Both angles must be finite.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if theta.is_finite() && phi.is_finite() {
            Ok(Self { theta, phi })
        } else {
            Err(Error::InvalidArgument(format!(
                "non-finite Bloch angles ({theta}, {phi})"
            )))
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// A complex amplitude vector over 1–3 qubits.
///
/// Kets constructed through [`Ket::normalized`] carry a `normalized` tag and
/// satisfy Σ|amp|² = 1 within [`NORM_TOL`]. Post-projection residuals are
/// un-normalized and keep the tag false; renormalization is a deliberate,
/// explicit step via [`Ket::renormalized`].
#[derive(Debug, Clone)]
pub struct Ket {
    amp: Vec<C64>,
    normalized: bool,
}

impl Ket {
    /// Builds a normalized ket. Fails if the dimension is unsupported, any
    /// component is non-finite, or the norm deviates from 1 beyond
    /// [`NORM_TOL`].
    pub fn normalized(amp: Vec<C64>) -> Result<Self> {
        check_dim(amp.len())?;
        check_finite(&amp)?;
        let norm_sqr: f64 = amp.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "ket is not normalized: |psi|^2 = {norm_sqr}"
            )));
        }
        Ok(Self {
            amp,
            normalized: true,
        })
    }

    /// Builds an explicitly un-normalized ket (e.g. a projection residual).
    pub fn unnormalized(amp: Vec<C64>) -> Result<Self> {
        check_dim(amp.len())?;
        check_finite(&amp)?;
        Ok(Self {
            amp,
            normalized: false,
        })
    }

    /// The computational basis state |index⟩.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        check_dim(dim)?;
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amp = vec![C64::new(0.0, 0.0); dim];
        amp[index] = C64::new(1.0, 0.0);
        Ok(Self {
            amp,
            normalized: true,
        })
    }

    /// |z⁺⟩ = (1, 0).
    pub fn z_plus() -> Self {
        Self::basis(2, 0).expect("static state")
    }

    /// |z⁻⟩ = (0, 1).
    pub fn z_minus() -> Self {
        Self::basis(2, 1).expect("static state")
    }

    /// |x⁺⟩ = (|z⁺⟩ + |z⁻⟩)/√2.
    pub fn x_plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp: vec![C64::new(h, 0.0), C64::new(h, 0.0)],
            normalized: true,
        }
    }

    /// |x⁻⟩ = (|z⁺⟩ − |z⁻⟩)/√2.
    pub fn x_minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp: vec![C64::new(h, 0.0), C64::new(-h, 0.0)],
            normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    /// Number of qubits in the register (1, 2 or 3).
    pub fn num_qubits(&self) -> usize {
        self.amp.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amp
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amp[index]
    }

    /// Whether this ket is tagged as normalized.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Rescales to unit norm. Fails on (numerically) zero vectors.
    pub fn renormalized(&self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm < NORM_TOL {
            return Err(Error::InvalidArgument(
                "cannot renormalize a zero vector".into(),
            ));
        }
        let amp = self.amp.iter().map(|c| c / norm).collect();
        Ok(Self {
            amp,
            normalized: true,
        })
    }

    /// Componentwise comparison within `tol`.
    pub fn approx_eq(&self, other: &Ket, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .amp
                .iter()
                .zip(&other.amp)
                .all(|(a, b)| (a - b).norm() <= tol)
    }

    /// Comparison up to a global phase: checks |⟨self|other⟩|² against the
    /// product of the squared norms.
    pub fn approx_eq_up_to_phase(&self, other: &Ket, tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let overlap: C64 = self
            .amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| a.conj() * b)
            .sum();
        (overlap.norm_sqr() - self.norm_sqr() * other.norm_sqr()).abs() <= tol
    }
}

/// χ(θ, φ) = (cos θ, e^{iφ} sin θ) in the {|z⁺⟩, |z⁻⟩} basis.
pub fn chi(angles: BlochAngles) -> Ket {
    let (theta, phi) = (angles.theta(), angles.phi());
    Ket {
        amp: vec![
            C64::new(theta.cos(), 0.0),
            C64::from_polar(1.0, phi) * theta.sin(),
        ],
        normalized: true,
    }
}

/// χ⊥(θ, φ) = (−e^{−iφ} sin θ, cos θ); orthogonal to [`chi`] at the same
/// angles.
pub fn chi_perp(angles: BlochAngles) -> Ket {
    let (theta, phi) = (angles.theta(), angles.phi());
    Ket {
        amp: vec![
            C64::from_polar(1.0, -phi) * (-theta.sin()),
            C64::new(theta.cos(), 0.0),
        ],
        normalized: true,
    }
}

/// The canonical orthogonal complement of a single-qubit ket:
/// (a, b) ↦ (−b̄, ā). For χ(θ, φ) this reproduces χ⊥(θ, φ).
pub fn orthogonal(ket: &Ket) -> Result<Ket> {
    if ket.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "orthogonal complement needs a single qubit, got dimension {}",
            ket.dim()
        )));
    }
    Ok(Ket {
        amp: vec![-ket.amp[1].conj(), ket.amp[0].conj()],
        normalized: ket.normalized,
    })
}

/// ⟨bra|ket⟩ = Σ conj(braᵢ)·ketᵢ; conjugate-linear in the first argument.
pub fn inner(bra: &Ket, ket: &Ket) -> Result<C64> {
    if bra.dim() != ket.dim() {
        return Err(Error::InvalidArgument(format!(
            "inner product dimension mismatch: {} vs {}",
            bra.dim(),
            ket.dim()
        )));
    }
    Ok(dot(&bra.amp, &ket.amp))
}

fn dot(bra: &[C64], ket: &[C64]) -> C64 {
    bra.iter().zip(ket).map(|(b, k)| b.conj() * k).sum()
}

/// Kronecker product a ⊗ b; the left factor is the most significant.
pub fn tensor(a: &Ket, b: &Ket) -> Result<Ket> {
    let dim = a.dim() * b.dim();
    check_dim(dim)?;
    let mut amp = Vec::with_capacity(dim);
    for ai in &a.amp {
        for bj in &b.amp {
            amp.push(ai * bj);
        }
    }
    Ok(Ket {
        amp,
        normalized: a.normalized && b.normalized,
    })
}

/// A dim×dim matrix with U†U = 1 within [`NORM_TOL`], stored row-major.
#[derive(Debug, Clone)]
pub struct Unitary {
    dim: usize,
    entries: Vec<C64>,
}

impl Unitary {
    /// Validates finiteness and unitarity entrywise.
    pub fn new(dim: usize, entries: Vec<C64>) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "matrix needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        check_finite(&entries)?;
        let u = Self { dim, entries };
        for i in 0..dim {
            for j in 0..dim {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..dim {
                    s += u.entry(k, i).conj() * u.entry(k, j);
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                if (s - expected).norm() > NORM_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not unitary: (U†U)[{i}][{j}] = {s}"
                    )));
                }
            }
        }
        Ok(u)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = C64::new(1.0, 0.0);
        }
        Ok(Self { dim, entries })
    }

    /// The single-qubit rotation |to⟩⟨from| + |to⊥⟩⟨from⊥| sending
    /// `from` to `to`. The action on the orthogonal complement is a free
    /// completion choice.
    pub fn rotation_sending(from: &Ket, to: &Ket) -> Result<Self> {
        if from.dim() != 2 || to.dim() != 2 {
            return Err(Error::InvalidArgument(
                "rotation_sending needs single-qubit states".into(),
            ));
        }
        if !from.is_normalized() || !to.is_normalized() {
            return Err(Error::InvalidArgument(
                "rotation_sending needs normalized states".into(),
            ));
        }
        let fp = orthogonal(from)?;
        let tp = orthogonal(to)?;
        let mut entries = vec![C64::new(0.0, 0.0); 4];
        for i in 0..2 {
            for j in 0..2 {
                entries[i * 2 + j] =
                    to.amp[i] * from.amp[j].conj() + tp.amp[i] * fp.amp[j].conj();
            }
        }
        Self::new(2, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| {
                let expected = if i == j { 1.0 } else { 0.0 };
                (self.entry(i, j) - expected).norm() <= tol
            })
        })
    }

    /// Matrix product self·rhs.
    pub fn compose(&self, rhs: &Unitary) -> Result<Unitary> {
        if self.dim != rhs.dim {
            return Err(Error::InvalidArgument(format!(
                "composition dimension mismatch: {} vs {}",
                self.dim, rhs.dim
            )));
        }
        let d = self.dim;
        let mut entries = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..d {
                    s += self.entry(i, k) * rhs.entry(k, j);
                }
                entries[i * d + j] = s;
            }
        }
        Ok(Unitary { dim: d, entries })
    }
}

/// Matrix–vector product U|ψ⟩; preserves the normalization tag.
pub fn apply(u: &Unitary, psi: &Ket) -> Result<Ket> {
    if u.dim() != psi.dim() {
        return Err(Error::InvalidArgument(format!(
            "apply dimension mismatch: {} vs {}",
            u.dim(),
            psi.dim()
        )));
    }
    let d = psi.dim();
    let mut amp = vec![C64::new(0.0, 0.0); d];
    for (i, out) in amp.iter_mut().enumerate() {
        for j in 0..d {
            *out += u.entry(i, j) * psi.amp[j];
        }
    }
    Ok(Ket {
        amp,
        normalized: psi.normalized,
    })
}

/// Full-register projection |target⟩⟨target|ψ⟩.
///
/// Returns the un-normalized residual and the amplitude ⟨target|ψ⟩; the
/// outcome probability of the projection is the squared norm of the residual
/// (for a normalized input).
pub fn project(psi: &Ket, target: &Ket) -> Result<(Ket, C64)> {
    if psi.dim() != target.dim() {
        return Err(Error::InvalidArgument(format!(
            "projection dimension mismatch: {} vs {}",
            psi.dim(),
            target.dim()
        )));
    }
    if !target.is_normalized() {
        return Err(Error::InvalidArgument(
            "projection target must be normalized".into(),
        ));
    }
    let amplitude = dot(&target.amp, &psi.amp);
    let amp = target.amp.iter().map(|t| t * amplitude).collect();
    Ok((
        Ket {
            amp,
            normalized: false,
        },
        amplitude,
    ))
}

/// Bit of `qubit` in basis index `index` for an n-qubit register
/// (qubit 0 is the most significant factor).
fn bit(index: usize, qubit: usize, num_qubits: usize) -> usize {
    (index >> (num_qubits - 1 - qubit)) & 1
}

/// Projection of a single tensor factor: (1 ⊗ |target⟩⟨target| ⊗ 1)|ψ⟩.
///
/// The residual is un-normalized; its squared norm is the outcome
/// probability for a normalized input.
pub fn project_factor(psi: &Ket, qubit: usize, target: &Ket) -> Result<Ket> {
    if target.dim() != 2 {
        return Err(Error::InvalidArgument(
            "factor projection target must be a single qubit".into(),
        ));
    }
    if !target.is_normalized() {
        return Err(Error::InvalidArgument(
            "projection target must be normalized".into(),
        ));
    }
    let n = psi.num_qubits();
    if qubit >= n {
        return Err(Error::InvalidArgument(format!(
            "qubit index {qubit} out of range for a {n}-qubit register"
        )));
    }
    if psi.dim() == 2 {
        return Ok(project(psi, target)?.0);
    }
    let d = psi.dim();
    let shift = n - 1 - qubit;
    let mut amp = vec![C64::new(0.0, 0.0); d];
    // Pair up indices that differ only in the target qubit and apply the
    // 2x2 projector |t⟩⟨t| to each pair.
    for i in 0..d {
        if bit(i, qubit, n) != 0 {
            continue;
        }
        let j = i | (1 << shift);
        let contraction = target.amp[0].conj() * psi.amp[i] + target.amp[1].conj() * psi.amp[j];
        amp[i] = target.amp[0] * contraction;
        amp[j] = target.amp[1] * contraction;
    }
    Ok(Ket {
        amp,
        normalized: false,
    })
}

/// Full-register projection of a qubit pair: (|onto⟩⟨onto|_{pair} ⊗ 1)|ψ⟩.
///
/// The residual keeps the register dimension; its squared norm is the
/// outcome probability for a normalized input.
pub fn project_pair(psi: &Ket, targets: (usize, usize), onto: &Ket) -> Result<Ket> {
    let contraction = contract_pair(psi, targets, onto)?;
    let n = 3;
    let (q1, q2) = targets;
    let rest = 3 - q1 - q2;
    let mut amp = vec![C64::new(0.0, 0.0); psi.dim()];
    for (i, out) in amp.iter_mut().enumerate() {
        let p = bit(i, q1, n) * 2 + bit(i, q2, n);
        let r = bit(i, rest, n);
        *out = onto.amp[p] * contraction.amp[r];
    }
    Ok(Ket {
        amp,
        normalized: false,
    })
}

/// Contracts a pair of qubits against a two-qubit state: ⟨onto|_{pair} |ψ⟩.
///
/// For a three-qubit ψ this returns the un-normalized single-qubit residual
/// of the remaining factor; its squared norm is the outcome probability of
/// projecting the pair onto `onto`.
pub fn contract_pair(psi: &Ket, targets: (usize, usize), onto: &Ket) -> Result<Ket> {
    if onto.dim() != 4 {
        return Err(Error::InvalidArgument(
            "pair contraction target must be a two-qubit state".into(),
        ));
    }
    if !onto.is_normalized() {
        return Err(Error::InvalidArgument(
            "projection target must be normalized".into(),
        ));
    }
    if psi.dim() != 8 {
        return Err(Error::InvalidArgument(format!(
            "pair contraction needs a three-qubit register, got dimension {}",
            psi.dim()
        )));
    }
    let n = 3;
    let (q1, q2) = targets;
    if q1 >= n || q2 >= n || q1 == q2 {
        return Err(Error::InvalidArgument(format!(
            "bad qubit pair ({q1}, {q2}) for a {n}-qubit register"
        )));
    }
    let rest = 3 - q1 - q2;
    let mut amp = vec![C64::new(0.0, 0.0); 2];
    for i in 0..psi.dim() {
        let p = bit(i, q1, n) * 2 + bit(i, q2, n);
        let r = bit(i, rest, n);
        amp[r] += onto.amp[p].conj() * psi.amp[i];
    }
    Ok(Ket {
        amp,
        normalized: false,
    })
}
