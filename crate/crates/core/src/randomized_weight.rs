//! Gamma-randomised time horizon.
//!
//! A killed time integral `∫_0^T φ(s) e^{-as} ds` equals
//! `E[1_{G ≤ Tθ} φ(G/θ) (√π/θ) √G e^{-(a/θ-1)G}]` with `G ~ Γ(1/2, 1)`.
//! `G` is drawn as `N²/2` from a single standard normal.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;

/// How strictly `0 < θ < a` is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaMode {
    #[default]
    Strict,
    /// Accepts `θ >= a` and raises [`RandomizerConfig::beyond_proven_range`].
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizerConfig {
    theta: f64,
    a: f64,
    beyond_proven_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDraw {
    pub g: f64,
    pub s: f64,
    pub weight: f64,
}

impl RandomizerConfig {
    pub fn new(theta: f64, a: f64, mode: ThetaMode) -> Result<Self> {
        if !(theta > 0.0) || !(a > 0.0) || !theta.is_finite() || !a.is_finite() {
            return Err(Error::InvalidTheta { theta, a });
        }
        let beyond = theta >= a;
        if beyond && mode == ThetaMode::Strict {
            return Err(Error::InvalidTheta { theta, a });
        }
        Ok(Self {
            theta,
            a,
            beyond_proven_range: beyond,
        })
    }

    /// `θ = 0.9 a`.
    pub fn default_for(a: f64) -> Result<Self> {
        Self::new(0.9 * a, a, ThetaMode::Strict)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// True when `θ >= a`: unbiasedness still holds but no variance bound is known.
    pub fn beyond_proven_range(&self) -> bool {
        self.beyond_proven_range
    }

    /// `(√π/θ) √g e^{-(a/θ-1) g}`.
    pub fn weight(&self, g: f64) -> f64 {
        std::f64::consts::PI.sqrt() / self.theta * g.sqrt() * (-(self.a / self.theta - 1.0) * g).exp()
    }

    pub fn draw_time<R: Rng + ?Sized>(&self, rng: &mut R) -> TimeDraw {
        let g = loop {
            let n: f64 = rng.sample(StandardNormal);
            let g = 0.5 * n * n;
            if g > 0.0 {
                break g;
            }
        };
        TimeDraw {
            g,
            s: g / self.theta,
            weight: self.weight(g),
        }
    }

    /// Monte-Carlo value of the randomised form next to a deterministic
    /// quadrature of `∫_0^T φ(s) e^{-as} ds`. `horizon = None` means `T = ∞`.
    pub fn expectation_identity_check<R: Rng + ?Sized>(
        &self,
        phi: &dyn Fn(f64) -> f64,
        horizon: Option<f64>,
        n_mc: usize,
        rng: &mut R,
    ) -> Result<IdentityCheck> {
        let cutoff = horizon.map(|t| t * self.theta);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_mc {
            let draw = self.draw_time(rng);
            let value = match cutoff {
                Some(c) if draw.g > c => 0.0,
                _ => draw.weight * phi(draw.s),
            };
            sum += value;
            sum_sq += value * value;
        }
        let n = n_mc as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);

        let a = self.a;
        let quadrature = match horizon {
            // s = -ln(1-τ)/a maps [0, ∞) to [0, 1) and e^{-as} ds to dτ/a
            None => integrate_adaptive(
                &|tau: f64| phi(-(-tau).ln_1p() / a) / a,
                0.0,
                1.0,
                1e-11,
            )?,
            Some(t) => integrate_adaptive(&|s: f64| phi(s) * (-a * s).exp(), 0.0, t, 1e-11)?,
        };
        Ok(IdentityCheck {
            mc_estimate: mean,
            mc_std_error: (var / n).sqrt(),
            quadrature,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    pub quadrature: f64,
}
