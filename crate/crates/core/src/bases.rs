//! Measurement bases and three-outcome POVMs used by the protocol, plus exact
//! Born-rule sampling on shared EPR pairs `(|00⟩ + |11⟩)/√2`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, QpqError, Result};
use crate::qmath::{eigenvalues_hermitian, Operator2, PureState, STRUCT_TOL};

/// The key-basis tilt angle, restricted to `(0, π/2]`.
///
/// At exactly `π/2` the cached cosine is snapped to `0` so that endpoint
/// quantities come out exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Theta {
    radians: f64,
    cos: f64,
    sin: f64,
}

impl Theta {
    pub fn new(radians: f64) -> Result<Self, ConfigError> {
        if !(radians.is_finite() && radians > 0.0 && radians <= FRAC_PI_2) {
            return Err(ConfigError::Theta(radians));
        }
        let (sin, cos) = if radians == FRAC_PI_2 {
            (1.0, 0.0)
        } else {
            radians.sin_cos()
        };
        Ok(Self { radians, cos, sin })
    }

    pub fn radians(&self) -> f64 {
        self.radians
    }

    pub fn cos(&self) -> f64 {
        self.cos
    }

    pub fn sin(&self) -> f64 {
        self.sin
    }

    /// `1 − cos θ`, evaluated as `2 sin²(θ/2)` to keep precision near 0.
    pub fn one_minus_cos(&self) -> f64 {
        if self.cos == 0.0 {
            return 1.0;
        }
        let h = (0.5 * self.radians).sin();
        2.0 * h * h
    }
}

impl TryFrom<f64> for Theta {
    type Error = ConfigError;
    fn try_from(value: f64) -> Result<Self, ConfigError> {
        Theta::new(value)
    }
}

impl From<Theta> for f64 {
    fn from(t: Theta) -> f64 {
        t.radians
    }
}

/// An orthonormal measurement basis; `v0` yields outcome 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasBasis {
    v0: PureState,
    v1: PureState,
}

impl MeasBasis {
    pub fn new(v0: PureState, v1: PureState) -> Result<Self> {
        if v0.inner(&v1).norm() > STRUCT_TOL {
            return Err(QpqError::ContractViolation(
                "basis vectors are not orthogonal".into(),
            ));
        }
        Ok(Self { v0, v1 })
    }

    pub fn computational() -> Self {
        Self {
            v0: PureState::zero(),
            v1: PureState::one(),
        }
    }

    pub fn hadamard() -> Self {
        Self {
            v0: PureState::plus(),
            v1: PureState::minus(),
        }
    }

    /// `{cos φ|0⟩ + sin φ|1⟩, sin φ|0⟩ − cos φ|1⟩}`.
    pub fn reflected(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self {
            v0: PureState::real(c, s).expect("unit vector"),
            v1: PureState::real(s, -c).expect("unit vector"),
        }
    }

    pub fn v0(&self) -> PureState {
        self.v0
    }

    pub fn v1(&self) -> PureState {
        self.v1
    }

    pub fn vector(&self, outcome: u8) -> PureState {
        if outcome == 0 {
            self.v0
        } else {
            self.v1
        }
    }

    pub fn is_real(&self) -> bool {
        self.v0.is_real() && self.v1.is_real()
    }

    /// Probability of outcome 0 on `state`, clamped to `[0, 1]`.
    pub fn prob_zero(&self, state: &PureState) -> f64 {
        self.v0.inner(state).norm_sqr().clamp(0.0, 1.0)
    }

    pub fn measure<R: Rng + ?Sized>(&self, state: &PureState, rng: &mut R) -> u8 {
        u8::from(rng.random::<f64>() >= self.prob_zero(state))
    }
}

/// A three-outcome POVM labelled (conclusive-0, conclusive-1, inconclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Povm3 {
    elements: [Operator2; 3],
}

impl Povm3 {
    /// Validates completeness and positivity within [`STRUCT_TOL`].
    pub fn new(elements: [Operator2; 3]) -> Result<Self> {
        for (i, e) in elements.iter().enumerate() {
            let (lo, _) = eigenvalues_hermitian(e)?;
            if lo < -STRUCT_TOL {
                return Err(QpqError::ContractViolation(format!(
                    "POVM element {i} has negative eigenvalue {lo}"
                )));
            }
        }
        let sum = elements[0] + elements[1] + elements[2];
        let gap = sum.max_abs_diff(&Operator2::identity());
        if gap > STRUCT_TOL {
            return Err(QpqError::ContractViolation(format!(
                "POVM elements do not sum to identity (gap {gap})"
            )));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[Operator2; 3] {
        &self.elements
    }

    pub fn is_real(&self) -> bool {
        self.elements.iter().all(|e| {
            e.m00.im.abs() <= STRUCT_TOL
                && e.m01.im.abs() <= STRUCT_TOL
                && e.m10.im.abs() <= STRUCT_TOL
                && e.m11.im.abs() <= STRUCT_TOL
        })
    }

    pub fn measure<R: Rng + ?Sized>(&self, state: &PureState, rng: &mut R) -> u8 {
        let [p0, p1, _] = outcome_distribution(self, state);
        let u = rng.random::<f64>();
        if u < p0 {
            0
        } else if u < p0 + p1 {
            1
        } else {
            2
        }
    }
}

/// Bob's key-measurement basis for raw key bit `bit`: `{|0⟩, |1⟩}` for 0,
/// `{|0'⟩, |1'⟩}` with `|0'⟩ = cos θ|0⟩ + sin θ|1⟩` for 1.
pub fn key_basis(bit: u8, theta: Theta) -> MeasBasis {
    if bit == 0 {
        MeasBasis::computational()
    } else {
        let (c, s) = (theta.cos(), theta.sin());
        MeasBasis {
            v0: PureState::real(c, s).expect("unit vector"),
            v1: PureState::real(s, -c).expect("unit vector"),
        }
    }
}

/// The basis halfway between the two key bases, `{|0''⟩, |1''⟩}` with
/// `|0''⟩ = cos(θ/2)|0⟩ + sin(θ/2)|1⟩`.
pub fn middle_basis(theta: Theta) -> MeasBasis {
    MeasBasis::reflected(0.5 * theta.radians())
}

/// The three candidate elements for announcement `announced` and scale
/// `alpha`, without any validity check:
///
/// * `a = 0`: `α|1'⟩⟨1'|`, `α|1⟩⟨1|`, remainder
/// * `a = 1`: `α|0'⟩⟨0'|`, `α|0⟩⟨0|`, remainder
///
/// Each conclusive element is orthogonal to the state it rules out.
pub fn povm_elements(announced: u8, theta: Theta, alpha: f64) -> [Operator2; 3] {
    let key = key_basis(1, theta);
    let (e0, e1) = if announced == 0 {
        (key.v1().projector(), PureState::one().projector())
    } else {
        (key.v0().projector(), PureState::zero().projector())
    };
    let e0 = e0.scale(alpha);
    let e1 = e1.scale(alpha);
    [e0, e1, Operator2::identity() - e0 - e1]
}

/// Alice's decoding POVM for announcement `announced` at the optimal scale
/// [`optimal_alpha`].
pub fn build_povm(announced: u8, theta: Theta) -> Result<Povm3> {
    if announced > 1 {
        return Err(QpqError::Domain(format!("announced bit must be 0 or 1, got {announced}")));
    }
    Povm3::new(povm_elements(announced, theta, optimal_alpha(theta)))
}

/// Born-rule outcome probabilities `⟨ψ|E_j|ψ⟩`, with floating-point dust
/// below zero clamped away.
pub fn outcome_distribution(povm: &Povm3, state: &PureState) -> [f64; 3] {
    let mut p = povm.elements.map(|e| e.expectation(state).clamp(0.0, 1.0));
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|x| *x /= total);
    }
    p
}

/// Largest scale keeping the third POVM element PSD: `1/(1 + cos θ)`.
pub fn optimal_alpha(theta: Theta) -> f64 {
    1.0 / (1.0 + theta.cos())
}

/// Probability of the inconclusive outcome at the optimal scale, `cos θ`.
pub fn inconclusive_probability(theta: Theta) -> f64 {
    theta.cos()
}

/// What Alice does with her half of a pair.
#[derive(Debug, Clone, Copy)]
pub enum AliceAction<'a> {
    Basis(&'a MeasBasis),
    Povm(&'a Povm3),
}

/// Outcome of measuring both halves of one EPR pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EprOutcome {
    pub bob: u8,
    /// 0/1 for a basis, 0/1/2 for a POVM.
    pub alice: u8,
}

/// Bob measures his half of `|φ⁺⟩` in `basis`. For a real basis
/// `(⟨v|⊗I)|φ⁺⟩ = |v⟩/√2`, so each outcome has probability ½ and Alice's
/// qubit collapses onto the vector Bob observed.
pub fn measure_bob_half<R: Rng + ?Sized>(basis: &MeasBasis, rng: &mut R) -> Result<(u8, PureState)> {
    if !basis.is_real() {
        return Err(QpqError::Unsupported(
            "EPR collapse sampling requires real-amplitude bases".into(),
        ));
    }
    let bit = u8::from(rng.random_bool(0.5));
    Ok((bit, basis.vector(bit)))
}

/// Samples a joint outcome on a fresh EPR pair, Bob measuring first.
pub fn sample_epr<R: Rng + ?Sized>(
    bob_basis: &MeasBasis,
    alice: AliceAction<'_>,
    rng: &mut R,
) -> Result<EprOutcome> {
    let alice_real = match alice {
        AliceAction::Basis(b) => b.is_real(),
        AliceAction::Povm(p) => p.is_real(),
    };
    if !alice_real {
        return Err(QpqError::Unsupported(
            "EPR collapse sampling requires real-amplitude measurements".into(),
        ));
    }
    let (bob, collapsed) = measure_bob_half(bob_basis, rng)?;
    let alice = match alice {
        AliceAction::Basis(b) => b.measure(&collapsed, rng),
        AliceAction::Povm(p) => p.measure(&collapsed, rng),
    };
    Ok(EprOutcome { bob, alice })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::Complex64;
    use crate::rng::StreamSeed;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};

    fn th(x: f64) -> Theta {
        Theta::new(x).unwrap()
    }

    fn grid(n: usize) -> impl Iterator<Item = Theta> {
        (1..=n).map(move |i| th(i as f64 * FRAC_PI_2 / n as f64))
    }

    fn same_ray(a: &PureState, b: &PureState) -> bool {
        (a.inner(b).norm_sqr() - 1.0).abs() < 1e-12
    }

    #[test]
    fn theta_domain() {
        assert!(Theta::new(0.0).is_err());
        assert!(Theta::new(-0.1).is_err());
        assert!(Theta::new(FRAC_PI_2 + 1e-9).is_err());
        assert!(Theta::new(f64::NAN).is_err());
        let t = th(FRAC_PI_2);
        assert_eq!((t.cos(), t.sin(), t.one_minus_cos()), (0.0, 1.0, 1.0));
        let t = th(FRAC_PI_3);
        assert!((t.one_minus_cos() - (1.0 - FRAC_PI_3.cos())).abs() < 1e-15);
    }

    #[test]
    fn key_bases() {
        for t in grid(10) {
            assert_eq!(key_basis(0, t), MeasBasis::computational());
        }
        let b = key_basis(1, th(FRAC_PI_2));
        assert!(same_ray(&b.v0(), &PureState::one()));
        assert!(same_ray(&b.v1(), &PureState::zero()));
        let b = key_basis(1, th(FRAC_PI_3));
        assert!((b.v0().amp0().re - 0.5).abs() < 1e-12);
        assert!((b.v0().amp1().re - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn middle_bases() {
        let m = middle_basis(th(FRAC_PI_2));
        assert!(same_ray(&m.v0(), &PureState::plus()));
        assert!(same_ray(&m.v1(), &PureState::minus()));
        let m = middle_basis(th(FRAC_PI_3));
        assert!((m.v0().amp0().re - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((m.v0().amp1().re - 0.5).abs() < 1e-12);
        let mut rng = StreamSeed::new(1).rng();
        for _ in 0..100 {
            let t = th(rng.random_range(1e-6..=FRAC_PI_2));
            let m = middle_basis(t);
            assert!(MeasBasis::new(m.v0(), m.v1()).is_ok());
            assert!((m.v0().inner(&m.v0()).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn povm_table_matches_closed_form() {
        for t in grid(50) {
            let (c, omc) = (t.cos(), 1.0 - t.cos());
            let d = build_povm(0, t).unwrap();
            let k1 = key_basis(1, t);
            let p = outcome_distribution(&d, &PureState::zero());
            assert!((p[0] - omc).abs() < 1e-10 && p[1].abs() < 1e-12 && (p[2] - c).abs() < 1e-10);
            let p = outcome_distribution(&d, &k1.v0());
            assert!(p[0].abs() < 1e-12 && (p[1] - omc).abs() < 1e-10 && (p[2] - c).abs() < 1e-10);

            let dp = build_povm(1, t).unwrap();
            let p = outcome_distribution(&dp, &PureState::one());
            assert!((p[0] - omc).abs() < 1e-10 && p[1].abs() < 1e-12 && (p[2] - c).abs() < 1e-10);
            let p = outcome_distribution(&dp, &k1.v1());
            assert!(p[0].abs() < 1e-12 && (p[1] - omc).abs() < 1e-10 && (p[2] - c).abs() < 1e-10);
        }
    }

    #[test]
    fn povm_point_values() {
        let t = th(FRAC_PI_3);
        let d = build_povm(0, t).unwrap();
        assert!((d.elements()[0].expectation(&PureState::zero()) - 0.5).abs() < 1e-12);
        assert!(d.elements()[0].expectation(&key_basis(1, t).v0()).abs() < 1e-12);
        assert!(d.elements()[1].expectation(&PureState::zero()).abs() < 1e-12);
        let dp = build_povm(1, t).unwrap();
        let mid = middle_basis(t).v0();
        assert!(dp.elements()[2].expectation(&mid).abs() < 1e-12);
        assert!(build_povm(2, t).is_err());
    }

    #[test]
    fn middle_state_splits_evenly() {
        for t in grid(50) {
            let m = middle_basis(t);
            let p = outcome_distribution(&build_povm(1, t).unwrap(), &m.v0());
            assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12 && p[2].abs() < 1e-12);
            let p = outcome_distribution(&build_povm(0, t).unwrap(), &m.v1());
            assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12 && p[2].abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_alpha_values() {
        assert!((optimal_alpha(th(FRAC_PI_2)) - 1.0).abs() < 1e-15);
        assert!((optimal_alpha(th(FRAC_PI_3)) - 2.0 / 3.0).abs() < 1e-12);
        for t in grid(50) {
            let [_, _, e2] = povm_elements(0, t, optimal_alpha(t));
            let (lo, _) = eigenvalues_hermitian(&e2).unwrap();
            assert!(lo.abs() < 1e-10);
        }
    }

    #[test]
    fn inconclusive_probability_values() {
        assert_eq!(inconclusive_probability(th(FRAC_PI_2)), 0.0);
        assert!((inconclusive_probability(th(FRAC_PI_3)) - 0.5).abs() < 1e-12);
        assert!(inconclusive_probability(th(1e-9)) > 1.0 - 1e-15);
        for t in grid(50) {
            let p = outcome_distribution(&build_povm(0, t).unwrap(), &PureState::zero());
            assert!((p[2] - inconclusive_probability(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn povm_rejects_invalid_elements() {
        let t = th(FRAC_PI_4);
        assert!(Povm3::new(povm_elements(0, t, 1.5 * optimal_alpha(t))).is_err());
        let mut els = povm_elements(0, t, optimal_alpha(t));
        els[2] = els[2].scale(0.5);
        assert!(Povm3::new(els).is_err());
    }

    #[test]
    fn complex_basis_is_unsupported() {
        let i = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let b = MeasBasis::new(PureState::new(h, i).unwrap(), PureState::new(h, -i).unwrap()).unwrap();
        let mut rng = StreamSeed::new(0).rng();
        let z = MeasBasis::computational();
        assert!(matches!(
            sample_epr(&b, AliceAction::Basis(&z), &mut rng),
            Err(QpqError::Unsupported(_))
        ));
        assert!(matches!(
            sample_epr(&z, AliceAction::Basis(&b), &mut rng),
            Err(QpqError::Unsupported(_))
        ));
    }

    #[test]
    fn epr_correlations() {
        let mut rng = StreamSeed::new(11).rng();
        let n = 100_000;
        let t = th(FRAC_PI_3);
        for basis in [MeasBasis::computational(), key_basis(1, t)] {
            let mut ones = 0usize;
            for _ in 0..n {
                let o = sample_epr(&basis, AliceAction::Basis(&basis), &mut rng).unwrap();
                assert_eq!(o.bob, o.alice);
                ones += o.bob as usize;
            }
            assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn epr_povm_distribution_after_zero() {
        let mut rng = StreamSeed::new(12).rng();
        let t = th(FRAC_PI_3);
        let d = build_povm(0, t).unwrap();
        let z = MeasBasis::computational();
        let mut counts = [0usize; 3];
        let mut kept = 0usize;
        while kept < 100_000 {
            let o = sample_epr(&z, AliceAction::Povm(&d), &mut rng).unwrap();
            if o.bob == 0 {
                counts[o.alice as usize] += 1;
                kept += 1;
            }
        }
        let f = counts.map(|c| c as f64 / kept as f64);
        assert!((f[0] - (1.0 - t.cos())).abs() < 0.01);
        assert_eq!(counts[1], 0);
        assert!((f[2] - t.cos()).abs() < 0.01);
    }

    #[test]
    fn conclusive_outcomes_never_wrong() {
        let mut rng = StreamSeed::new(13).rng();
        for t in [th(PI / 6.0), th(FRAC_PI_4), th(FRAC_PI_3), th(FRAC_PI_2)] {
            let povms = [build_povm(0, t).unwrap(), build_povm(1, t).unwrap()];
            let mut conclusive = [[0usize; 2]; 2];
            let mut totals = [[0usize; 2]; 2];
            for _ in 0..100_000 {
                let r: u8 = rng.random_range(0..=1);
                let (a, state) = measure_bob_half(&key_basis(r, t), &mut rng).unwrap();
                let out = povms[a as usize].measure(&state, &mut rng);
                totals[r as usize][a as usize] += 1;
                if out < 2 {
                    assert_eq!(out, r, "wrong conclusive outcome at θ={}", t.radians());
                    conclusive[r as usize][a as usize] += 1;
                }
            }
            for r in 0..2 {
                for a in 0..2 {
                    let m = totals[r][a] as f64;
                    let p = t.one_minus_cos();
                    let sigma = (p * (1.0 - p) / m).sqrt();
                    let f = conclusive[r][a] as f64 / m;
                    assert!((f - p).abs() <= 4.0 * sigma + 1e-12, "R={r} a={a} f={f} p={p}");
                }
            }
        }
    }
}
