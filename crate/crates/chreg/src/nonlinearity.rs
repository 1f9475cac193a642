//! The maximal monotone graph catalog β with potentials, scalar resolvents,
//! Yosida approximations and generalized derivatives, plus the anti-monotone
//! perturbation π_ε used by the regularized system.
//!
//! Catalog members:
//!
//! * `Power { q }` — β(r) = |r|^{q-1} r, the porous-media (q > 1) and fast
//!   diffusion (0 < q < 1) nonlinearity;
//! * `Stefan { .. }` — the enthalpy-temperature law of the two-phase Stefan
//!   problem, with conductivities k_s, k_l and latent-heat plateau [0, L];
//! * `Linear` — β(r) = r, the plain heat equation, useful as an exact oracle.
//!
//! All members satisfy β(0) = 0 with convex nonnegative primitive β̂; these
//! facts are re-checked numerically by [`validate_conditions`].

use crate::sampling::SplitMix64;
use thiserror::Error;

/// Default cap on the generalized derivative, used where β' blows up
/// (fast diffusion near the origin).
pub const DEFAULT_DERIVATIVE_CAP: f64 = 1e8;

/// Accuracy of the scalar resolvent solve: |r + λβ(r) - x| <= RESOLVENT_TOL * (1 + |x|).
pub const RESOLVENT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NonlinearityError {
    #[error("invalid parameter {key}: {message}")]
    InvalidParameter { key: &'static str, message: String },
}

/// A single-valued maximal monotone function on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonotoneGraph {
    Power {
        q: f64,
    },
    Stefan {
        k_solid: f64,
        k_liquid: f64,
        latent: f64,
    },
    Linear,
}

impl MonotoneGraph {
    pub fn power(q: f64) -> Result<Self, NonlinearityError> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(NonlinearityError::InvalidParameter {
                key: "model.beta.q",
                message: format!("exponent must be positive and finite, got {q}"),
            });
        }
        Ok(Self::Power { q })
    }

    pub fn stefan(k_solid: f64, k_liquid: f64, latent: f64) -> Result<Self, NonlinearityError> {
        for (key, v) in [
            ("model.beta.ks", k_solid),
            ("model.beta.kl", k_liquid),
            ("model.beta.latent", latent),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(NonlinearityError::InvalidParameter {
                    key,
                    message: format!("must be positive and finite, got {v}"),
                });
            }
        }
        Ok(Self::Stefan {
            k_solid,
            k_liquid,
            latent,
        })
    }

    pub fn linear() -> Self {
        Self::Linear
    }

    /// β(r).
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            // the r = 0 case avoids 0^{q-1} = inf for q < 1
            Self::Power { q } => {
                if r == 0.0 {
                    0.0
                } else {
                    r.abs().powf(q - 1.0) * r
                }
            }
            Self::Stefan {
                k_solid,
                k_liquid,
                latent,
            } => {
                if r < 0.0 {
                    k_solid * r
                } else if r <= latent {
                    0.0
                } else {
                    k_liquid * (r - latent)
                }
            }
            Self::Linear => r,
        }
    }

    /// Convex primitive β̂(r) = ∫_0^r β(s) ds, nonnegative with β̂(0) = 0.
    pub fn potential(&self, r: f64) -> f64 {
        match *self {
            Self::Power { q } => r.abs().powf(q + 1.0) / (q + 1.0),
            Self::Stefan {
                k_solid,
                k_liquid,
                latent,
            } => {
                if r < 0.0 {
                    0.5 * k_solid * r * r
                } else if r <= latent {
                    0.0
                } else {
                    0.5 * k_liquid * (r - latent) * (r - latent)
                }
            }
            Self::Linear => 0.5 * r * r,
        }
    }

    /// Generalized derivative selection, capped at `cap`. At Stefan kinks the
    /// left limit is selected so Newton linearizations are deterministic.
    pub fn derivative(&self, r: f64, cap: f64) -> f64 {
        let d = match *self {
            Self::Power { q } => {
                if r == 0.0 && q == 1.0 {
                    1.0
                } else {
                    q * r.abs().powf(q - 1.0)
                }
            }
            Self::Stefan {
                k_solid,
                k_liquid,
                latent,
            } => {
                if r <= 0.0 {
                    k_solid
                } else if r <= latent {
                    0.0
                } else {
                    k_liquid
                }
            }
            Self::Linear => 1.0,
        };
        if !d.is_finite() || d > cap {
            cap
        } else {
            d
        }
    }

    /// Resolvent J_λ(x): the unique r with r + λβ(r) = x.
    pub fn resolvent(&self, lambda: f64, x: f64) -> f64 {
        assert!(lambda > 0.0, "resolvent needs lambda > 0");
        match *self {
            Self::Linear => x / (1.0 + lambda),
            Self::Stefan {
                k_solid,
                k_liquid,
                latent,
            } => {
                if x < 0.0 {
                    x / (1.0 + lambda * k_solid)
                } else if x <= latent {
                    x
                } else {
                    (x + lambda * k_liquid * latent) / (1.0 + lambda * k_liquid)
                }
            }
            Self::Power { q } => {
                if x == 0.0 {
                    return 0.0;
                }
                let sign = x.signum();
                let y = x.abs();
                sign * resolve_power(q, lambda, y)
            }
        }
    }

    /// Yosida approximation β_λ(x) = (x - J_λ x)/λ.
    pub fn yosida(&self, lambda: f64, x: f64) -> f64 {
        (x - self.resolvent(lambda, x)) / lambda
    }

    /// Derivative of the Yosida approximation, β'(J_λ x) / (1 + λ β'(J_λ x)),
    /// bounded by 1/λ. Used for Jacobian smoothing.
    pub fn yosida_derivative(&self, lambda: f64, x: f64, cap: f64) -> f64 {
        let d = self.derivative(self.resolvent(lambda, x), cap);
        d / (1.0 + lambda * d)
    }

    /// Sampling kinks to exclude from finite-difference consistency checks.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Self::Power { .. } => vec![0.0],
            Self::Stefan { latent, .. } => vec![0.0, latent],
            Self::Linear => Vec::new(),
        }
    }
}

/// Monotone solve of r + λ r^q = y for y > 0: safeguarded Newton inside the
/// bracket [0, y].
fn resolve_power(q: f64, lambda: f64, y: f64) -> f64 {
    let tol = RESOLVENT_TOL * (1.0 + y);
    let mut lo = 0.0f64;
    let mut hi = y;
    let mut r = y / (1.0 + lambda); // underestimates the λ r^q pull for q < 1, fine as a seed
    if !(lo..=hi).contains(&r) {
        r = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = r + lambda * r.powf(q) - y;
        if f.abs() <= tol {
            return r;
        }
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let df = 1.0 + lambda * q * r.powf(q - 1.0);
        let newton = r - f / df;
        r = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    debug_assert!(
        (lo - hi).abs() <= tol.max(1e-300),
        "power resolvent bracket failed to close: q={q} lambda={lambda} y={y}"
    );
    0.5 * (lo + hi)
}

/// The anti-monotone Cahn–Hilliard perturbation π_ε(r) = -(ε/2) r with
/// modulus σ(ε) = ε and constant c_1 = 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    epsilon: f64,
}

impl Perturbation {
    pub fn new(epsilon: f64) -> Result<Self, NonlinearityError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(NonlinearityError::InvalidParameter {
                key: "model.epsilon",
                message: format!("epsilon must lie in (0, 1], got {epsilon}"),
            });
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// π_ε(r) = -(ε/2) r.
    pub fn eval(&self, r: f64) -> f64 {
        -0.5 * self.epsilon * r
    }

    /// π̂_ε(r) = -(ε/4) r².
    pub fn primitive(&self, r: f64) -> f64 {
        -0.25 * self.epsilon * r * r
    }

    /// π'_ε, constant in r.
    pub fn derivative(&self) -> f64 {
        -0.5 * self.epsilon
    }

    /// Global Lipschitz constant ε/2 = c_1 σ(ε).
    pub fn lipschitz(&self) -> f64 {
        0.5 * self.epsilon
    }

    /// The modulus σ(ε) = ε.
    pub fn sigma(&self) -> f64 {
        self.epsilon
    }

    /// The constant c_1 = 1/2 in |π'_ε| <= c_1 σ(ε) < ε.
    pub fn c1(&self) -> f64 {
        0.5
    }
}

/// Outcome of a single model-contract check.
#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub condition: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail report of the sampled model-contract checks.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Check the model contracts on the given catalog member and perturbation:
/// β(0) = 0 with nonnegative convex primitive, sampled monotonicity, the
/// Lipschitz certificate for π_ε, and convexity of (ε/2)r² + π̂_ε.
pub fn validate_conditions(graph: &MonotoneGraph, p: &Perturbation) -> ConditionReport {
    check_conditions_impl(&|r| graph.eval(r), &|r| graph.potential(r), p)
}

fn check_conditions_impl(
    beta: &dyn Fn(f64) -> f64,
    beta_hat: &dyn Fn(f64) -> f64,
    p: &Perturbation,
) -> ConditionReport {
    let mut rng = SplitMix64::new(0x5EED_C0DE);
    let samples: Vec<f64> = (0..2000).map(|_| rng.uniform(-10.0, 10.0)).collect();
    let mut checks = Vec::new();

    let b0 = beta(0.0);
    let bh0 = beta_hat(0.0);
    checks.push(ConditionCheck {
        condition: "beta(0) = 0 and beta_hat(0) = 0",
        passed: b0 == 0.0 && bh0 == 0.0,
        detail: format!("beta(0) = {b0:e}, beta_hat(0) = {bh0:e}"),
    });

    let min_pot = samples
        .iter()
        .map(|&r| beta_hat(r))
        .fold(f64::INFINITY, f64::min);
    checks.push(ConditionCheck {
        condition: "beta_hat nonnegative",
        passed: min_pot >= 0.0,
        detail: format!("min sampled beta_hat = {min_pot:e}"),
    });

    let mut mono_violation = 0.0f64;
    let mut convex_violation = 0.0f64;
    for pair in samples.chunks_exact(2) {
        let (r, s) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        mono_violation = mono_violation.max(beta(r) - beta(s));
        let scale = 1.0 + beta_hat(r).abs() + beta_hat(s).abs();
        let midgap = beta_hat(0.5 * (r + s)) - 0.5 * (beta_hat(r) + beta_hat(s));
        convex_violation = convex_violation.max(midgap / scale);
    }
    checks.push(ConditionCheck {
        condition: "beta nondecreasing on sampled pairs",
        passed: mono_violation <= 0.0,
        detail: format!("max beta(r) - beta(s) over r < s: {mono_violation:e}"),
    });
    checks.push(ConditionCheck {
        condition: "beta_hat midpoint-convex on sampled pairs",
        passed: convex_violation <= 1e-12,
        detail: format!("max relative midpoint excess: {convex_violation:e}"),
    });

    let eps = p.epsilon();
    let cert = p.c1() * p.sigma();
    checks.push(ConditionCheck {
        condition: "pi_eps(0) = 0 and c1*sigma(eps) < eps",
        passed: p.eval(0.0) == 0.0 && cert < eps,
        detail: format!("c1*sigma(eps) = {cert:e} vs eps = {eps:e}"),
    });

    let mut lip_violation = 0.0f64;
    for pair in samples.chunks_exact(2) {
        let (r, s) = (pair[0], pair[1]);
        if r != s {
            let ratio = (p.eval(r) - p.eval(s)).abs() / (r - s).abs();
            lip_violation = lip_violation.max(ratio - cert);
        }
    }
    checks.push(ConditionCheck {
        condition: "pi_eps Lipschitz with constant c1*sigma(eps)",
        passed: lip_violation <= 1e-12,
        detail: format!("max Lipschitz excess: {lip_violation:e}"),
    });

    // convexity modulus of r -> (eps/2) r^2 + pi_hat(r); analytically eps/2 >= 0
    let mut modulus_violation = 0.0f64;
    for pair in samples.chunks_exact(2) {
        let (r, s) = (pair[0], pair[1]);
        let f = |t: f64| 0.5 * eps * t * t + p.primitive(t);
        let midgap = f(0.5 * (r + s)) - 0.5 * (f(r) + f(s));
        modulus_violation = modulus_violation.max(midgap);
    }
    checks.push(ConditionCheck {
        condition: "(eps/2) r^2 + pi_hat_eps convex",
        passed: modulus_violation <= 1e-10,
        detail: format!("max midpoint excess: {modulus_violation:e}"),
    });

    ConditionReport { checks }
}
