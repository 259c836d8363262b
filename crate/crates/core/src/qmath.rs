//! Exact 2×2 complex linear algebra for single-qubit states and operators.
//!
//! Everything here is closed form: eigenvalues come from the quadratic
//! formula on the characteristic polynomial, never from an iterative solver.

use std::ops::{Add, Mul, Neg, Sub};

pub use num_complex::Complex64;

use crate::error::{QpqError, Result};

/// Tolerance for structural checks: Hermiticity, normalisation, PSD.
pub const STRUCT_TOL: f64 = 1e-12;
/// Tolerance for derived numerical identities.
pub const NUMERIC_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A normalised single-qubit state `amp0|0⟩ + amp1|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState {
    amp0: Complex64,
    amp1: Complex64,
}

impl PureState {
    /// Builds a state, rejecting amplitudes that are non-finite or not
    /// normalised within [`STRUCT_TOL`].
    pub fn new(amp0: Complex64, amp1: Complex64) -> Result<Self> {
        if !(amp0.is_finite() && amp1.is_finite()) {
            return Err(QpqError::ContractViolation("non-finite amplitude".into()));
        }
        let norm = amp0.norm_sqr() + amp1.norm_sqr();
        if (norm - 1.0).abs() > STRUCT_TOL {
            return Err(QpqError::ContractViolation(format!(
                "state not normalised: |a0|^2 + |a1|^2 = {norm}"
            )));
        }
        Ok(Self { amp0, amp1 })
    }

    /// Normalises an arbitrary non-zero vector.
    pub fn normalized(amp0: Complex64, amp1: Complex64) -> Result<Self> {
        let norm = (amp0.norm_sqr() + amp1.norm_sqr()).sqrt();
        if !norm.is_finite() || norm < STRUCT_TOL {
            return Err(QpqError::Degenerate("cannot normalise a zero vector".into()));
        }
        Self::new(amp0 / norm, amp1 / norm)
    }

    pub fn real(c0: f64, c1: f64) -> Result<Self> {
        Self::new(Complex64::new(c0, 0.0), Complex64::new(c1, 0.0))
    }

    /// `cos φ|0⟩ + sin φ|1⟩`.
    pub fn rotated(phi: f64) -> Self {
        Self {
            amp0: Complex64::new(phi.cos(), 0.0),
            amp1: Complex64::new(phi.sin(), 0.0),
        }
    }

    pub fn zero() -> Self {
        Self { amp0: ONE, amp1: ZERO }
    }

    pub fn one() -> Self {
        Self { amp0: ZERO, amp1: ONE }
    }

    pub fn plus() -> Self {
        Self::rotated(std::f64::consts::FRAC_PI_4)
    }

    pub fn minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp0: Complex64::new(h, 0.0),
            amp1: Complex64::new(-h, 0.0),
        }
    }

    pub fn amp0(&self) -> Complex64 {
        self.amp0
    }

    pub fn amp1(&self) -> Complex64 {
        self.amp1
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amp0.conj() * other.amp0 + self.amp1.conj() * other.amp1
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> Operator2 {
        Operator2::outer(self, self)
    }

    pub fn is_real(&self) -> bool {
        self.amp0.im.abs() <= STRUCT_TOL && self.amp1.im.abs() <= STRUCT_TOL
    }

    fn check_normalized(&self) -> Result<()> {
        let norm = self.amp0.norm_sqr() + self.amp1.norm_sqr();
        if (norm - 1.0).abs() > STRUCT_TOL {
            return Err(QpqError::ContractViolation(format!(
                "state not normalised: {norm}"
            )));
        }
        Ok(())
    }
}

/// A 2×2 complex matrix. Row-major: `m01` is row 0, column 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operator2 {
    pub m00: Complex64,
    pub m01: Complex64,
    pub m10: Complex64,
    pub m11: Complex64,
}

/// Spectral decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone, Copy)]
pub struct Eigen2 {
    pub values: (f64, f64),
    pub vectors: (PureState, PureState),
}

impl Operator2 {
    pub fn new(m00: Complex64, m01: Complex64, m10: Complex64, m11: Complex64) -> Self {
        Self { m00, m01, m10, m11 }
    }

    pub fn from_real(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Self::new(
            Complex64::new(m00, 0.0),
            Complex64::new(m01, 0.0),
            Complex64::new(m10, 0.0),
            Complex64::new(m11, 0.0),
        )
    }

    pub fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    /// `|a⟩⟨b|`.
    pub fn outer(a: &PureState, b: &PureState) -> Self {
        Self::new(
            a.amp0 * b.amp0.conj(),
            a.amp0 * b.amp1.conj(),
            a.amp1 * b.amp0.conj(),
            a.amp1 * b.amp1.conj(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.m00 * s, self.m01 * s, self.m10 * s, self.m11 * s)
    }

    pub fn trace(&self) -> Complex64 {
        self.m00 + self.m11
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.m00.conj(), self.m10.conj(), self.m01.conj(), self.m11.conj())
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Operator2) -> f64 {
        let d = *self - *other;
        [d.m00, d.m01, d.m10, d.m11]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.m00.is_finite() && self.m01.is_finite() && self.m10.is_finite() && self.m11.is_finite()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_finite()
            && self.m00.im.abs() <= tol
            && self.m11.im.abs() <= tol
            && (self.m01 - self.m10.conj()).norm() <= tol
    }

    /// Hermitian, unit trace and PSD, all within `tol`.
    pub fn is_density(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) || (self.trace().re - 1.0).abs() > tol {
            return false;
        }
        let (lo, _) = hermitian_roots(self);
        lo >= -tol
    }

    /// `⟨ψ|M|ψ⟩`, real part. For a Hermitian `M` the imaginary part vanishes.
    pub fn expectation(&self, state: &PureState) -> f64 {
        let (a0, a1) = (state.amp0, state.amp1);
        let v0 = self.m00 * a0 + self.m01 * a1;
        let v1 = self.m10 * a0 + self.m11 * a1;
        (a0.conj() * v0 + a1.conj() * v1).re
    }

    /// Eigenvalues and orthonormal eigenvectors of a Hermitian operator.
    pub fn eigh(&self) -> Result<Eigen2> {
        self.require_hermitian()?;
        let (lo, hi) = hermitian_roots(self);
        let v_lo = eigenvector(self, lo);
        // The second vector is the orthogonal complement, which keeps the
        // pair exactly orthonormal even for degenerate spectra.
        let v_hi = PureState {
            amp0: -v_lo.amp1.conj(),
            amp1: v_lo.amp0.conj(),
        };
        Ok(Eigen2 {
            values: (lo, hi),
            vectors: (v_lo, v_hi),
        })
    }

    fn require_hermitian(&self) -> Result<()> {
        if self.is_hermitian(STRUCT_TOL) {
            Ok(())
        } else {
            Err(QpqError::ContractViolation(format!(
                "operator is not Hermitian: {self:?}"
            )))
        }
    }

    fn require_density(&self) -> Result<()> {
        if self.is_density(STRUCT_TOL) {
            Ok(())
        } else {
            Err(QpqError::ContractViolation(format!(
                "operator is not a density matrix: {self:?}"
            )))
        }
    }
}

impl Add for Operator2 {
    type Output = Operator2;
    fn add(self, o: Operator2) -> Operator2 {
        Operator2::new(self.m00 + o.m00, self.m01 + o.m01, self.m10 + o.m10, self.m11 + o.m11)
    }
}

impl Sub for Operator2 {
    type Output = Operator2;
    fn sub(self, o: Operator2) -> Operator2 {
        Operator2::new(self.m00 - o.m00, self.m01 - o.m01, self.m10 - o.m10, self.m11 - o.m11)
    }
}

impl Neg for Operator2 {
    type Output = Operator2;
    fn neg(self) -> Operator2 {
        self.scale(-1.0)
    }
}

impl Mul for Operator2 {
    type Output = Operator2;
    fn mul(self, o: Operator2) -> Operator2 {
        Operator2::new(
            self.m00 * o.m00 + self.m01 * o.m10,
            self.m00 * o.m01 + self.m01 * o.m11,
            self.m10 * o.m00 + self.m11 * o.m10,
            self.m10 * o.m01 + self.m11 * o.m11,
        )
    }
}

/// Roots of `λ² − tr·λ + det` for a Hermitian matrix `[[a, b], [b̄, d]]`:
/// `(a+d)/2 ∓ sqrt(((a−d)/2)² + |b|²)`.
fn hermitian_roots(op: &Operator2) -> (f64, f64) {
    let a = op.m00.re;
    let d = op.m11.re;
    let mean = 0.5 * (a + d);
    let radius = (0.5 * (a - d)).hypot(op.m01.norm());
    (mean - radius, mean + radius)
}

fn eigenvector(op: &Operator2, lambda: f64) -> PureState {
    // Null vectors of the two rows of (M − λI); take the better conditioned.
    let from_row0 = (op.m01, Complex64::new(lambda, 0.0) - op.m00);
    let from_row1 = (Complex64::new(lambda, 0.0) - op.m11, op.m10);
    let n0 = from_row0.0.norm_sqr() + from_row0.1.norm_sqr();
    let n1 = from_row1.0.norm_sqr() + from_row1.1.norm_sqr();
    let (v, n) = if n0 >= n1 { (from_row0, n0) } else { (from_row1, n1) };
    if n < 1e-30 {
        // Scalar matrix: every vector is an eigenvector.
        return PureState::zero();
    }
    let norm = n.sqrt();
    PureState {
        amp0: v.0 / norm,
        amp1: v.1 / norm,
    }
}

/// The two real eigenvalues of a Hermitian operator, ascending.
pub fn eigenvalues_hermitian(op: &Operator2) -> Result<(f64, f64)> {
    op.require_hermitian()?;
    Ok(hermitian_roots(op))
}

/// `‖M‖₁ = Tr|M|`, the sum of absolute eigenvalues.
pub fn trace_norm(op: &Operator2) -> Result<f64> {
    let (lo, hi) = eigenvalues_hermitian(op)?;
    Ok(lo.abs() + hi.abs())
}

/// `|⟨a|b⟩|²`, clamped to `[0, 1]`.
pub fn fidelity_pure(a: &PureState, b: &PureState) -> Result<f64> {
    a.check_normalized()?;
    b.check_normalized()?;
    Ok(a.inner(b).norm_sqr().clamp(0.0, 1.0))
}

/// Optimal probability of telling `rho` from `sigma` when each is prepared
/// with probability ½: `½(1 + ½‖ρ − σ‖₁)`.
pub fn helstrom_guess_probability(rho: &Operator2, sigma: &Operator2) -> Result<f64> {
    rho.require_density()?;
    sigma.require_density()?;
    let tn = trace_norm(&(*rho - *sigma))?;
    Ok((0.5 * (1.0 + 0.5 * tn)).clamp(0.5, 1.0))
}

/// Projective measurement attaining [`helstrom_guess_probability`].
///
/// Returns `(guess_rho, guess_sigma)`: the eigenvectors of `ρ − σ` for its
/// larger and smaller eigenvalue. Observing the first means "guess ρ".
pub fn helstrom_measurement(rho: &Operator2, sigma: &Operator2) -> Result<(PureState, PureState)> {
    rho.require_density()?;
    sigma.require_density()?;
    let diff = *rho - *sigma;
    if trace_norm(&diff)? < STRUCT_TOL {
        return Err(QpqError::Degenerate(
            "rho and sigma coincide; no measurement beats a coin flip".into(),
        ));
    }
    let eig = diff.eigh()?;
    Ok((eig.vectors.1, eig.vectors.0))
}
