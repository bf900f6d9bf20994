//! Equilibrium distribution functions: the 1D Maxwellian used by the
//! electrostatic solver and the magnetized spin-dependent Maxwellian used
//! by the linear theory.
//!
//! Conventions (fixed here, consumed everywhere):
//!
//! * momentum measure `d^3p`, spin measure `d^2s = sin(theta_s) dtheta_s dphi_s`
//!   over the unit sphere (no 1/4pi);
//! * the spin Maxwellian is renormalized numerically so that the integral
//!   over the full measure is exactly 1 -- closed-form normalization
//!   prefactors are treated as indicative only;
//! * polarization is recovered with the factor 3: `<sigma_z> = 3 int s_z f`.

use crate::error::{QkinError, Result};
use crate::quadrature::{GaussHermite, GaussLegendre};

/// Half-width of the momentum support in thermal units used by quadratures
/// and grids; `exp(-8^2) ~ 1.6e-28` is far below every tolerance used here.
pub const SUPPORT_SIGMAS: f64 = 8.0;

/// Normalized 1D Maxwellian `f(p) = exp(-p^2/p_t^2) / (sqrt(pi) p_t)`.
///
/// `p_t = m v_t` is the thermal momentum; with `m = c = 1` the same type
/// serves the nondimensional solver.
#[derive(Debug, Clone, Copy)]
pub struct Equilibrium1D {
    /// Thermal momentum scale m v_t.
    pub p_t: f64,
    /// Normalization amplitude 1 / (sqrt(pi) p_t).
    pub amplitude: f64,
}

impl Equilibrium1D {
    pub fn new(p_t: f64) -> Result<Self> {
        if !(p_t.is_finite() && p_t > 0.0) {
            return Err(QkinError::InvalidInput(format!(
                "thermal momentum must be positive, got {p_t}"
            )));
        }
        Ok(Self {
            p_t,
            amplitude: 1.0 / (std::f64::consts::PI.sqrt() * p_t),
        })
    }

    /// Density value at momentum `p_z`.
    pub fn value(&self, p_z: f64) -> f64 {
        let t = p_z / self.p_t;
        self.amplitude * (-t * t).exp()
    }

    /// d f / d p_z.
    pub fn d_dpz(&self, p_z: f64) -> f64 {
        -2.0 * p_z / (self.p_t * self.p_t) * self.value(p_z)
    }

    /// Exact second moment `<p_z^2> = p_t^2 / 2`.
    pub fn pz2_moment(&self) -> f64 {
        0.5 * self.p_t * self.p_t
    }
}

/// Magnetized spin Maxwellian
/// `f = exp(-p^2/p_t^2) [e^a (1 + cos t) + e^-a (1 - cos t)] / norm`
/// with `a = mu B0 / k_B T` and `norm` fixed numerically so that the
/// integral over `d^3p d^2s` is 1.
#[derive(Debug, Clone)]
pub struct EquilibriumSpin {
    /// Thermal momentum scale m v_t.
    pub p_t: f64,
    /// Spin polarization argument mu B0 / k_B T (signed).
    pub a: f64,
    /// Numerically determined normalization divisor.
    pub norm: f64,
    quad_err: f64,
}

impl EquilibriumSpin {
    pub fn new(p_t: f64, a: f64) -> Result<Self> {
        if !(p_t.is_finite() && p_t > 0.0) || !a.is_finite() {
            return Err(QkinError::InvalidInput(format!(
                "spin Maxwellian needs finite p_t > 0 and finite a, got p_t={p_t}, a={a}"
            )));
        }
        let mut eq = Self {
            p_t,
            a,
            norm: 1.0,
            quad_err: 0.0,
        };
        let (norm, err) = eq.raw_total()?;
        eq.norm = norm;
        eq.quad_err = err;
        Ok(eq)
    }

    fn bracket(&self, cos_t: f64) -> f64 {
        // e^a (1 + c) + e^-a (1 - c) = 2 cosh a + 2 sinh a c; factoring out
        // cosh a keeps large |a| finite.
        2.0 * (1.0 + self.a.tanh() * cos_t)
    }

    fn bracket_scale(&self) -> f64 {
        // cosh(a) factored out of `bracket`; folded into the norm.
        self.a.cosh()
    }

    fn gaussian(&self, p_perp: f64, p_z: f64) -> f64 {
        let r2 = (p_perp * p_perp + p_z * p_z) / (self.p_t * self.p_t);
        (-r2).exp()
    }

    /// Density value at cylindrical momentum (p_perp, p_z) and spin polar
    /// angle theta_s. Rejects theta_s outside [0, pi].
    pub fn value(&self, p_perp: f64, p_z: f64, theta_s: f64) -> Result<f64> {
        if !(0.0..=std::f64::consts::PI).contains(&theta_s) {
            return Err(QkinError::InvalidInput(format!(
                "theta_s must lie in [0, pi], got {theta_s}"
            )));
        }
        Ok(self.value_at_cos(p_perp, p_z, theta_s.cos()))
    }

    /// Same as [`Self::value`] with cos(theta_s) passed directly (quadrature
    /// nodes live in cos theta).
    pub fn value_at_cos(&self, p_perp: f64, p_z: f64, cos_t: f64) -> f64 {
        self.gaussian(p_perp, p_z) * self.bracket(cos_t) * self.bracket_scale() / self.norm
    }

    /// d f / d p_z.
    pub fn d_dpz(&self, p_perp: f64, p_z: f64, cos_t: f64) -> f64 {
        -2.0 * p_z / (self.p_t * self.p_t) * self.value_at_cos(p_perp, p_z, cos_t)
    }

    /// d f / d p_perp.
    pub fn d_dpperp(&self, p_perp: f64, p_z: f64, cos_t: f64) -> f64 {
        -2.0 * p_perp / (self.p_t * self.p_t) * self.value_at_cos(p_perp, p_z, cos_t)
    }

    /// d f / d theta_s.
    pub fn d_dtheta(&self, p_perp: f64, p_z: f64, cos_t: f64) -> f64 {
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        -2.0 * self.a.tanh() * sin_t
            * self.gaussian(p_perp, p_z)
            * self.bracket_scale()
            * 2.0
            / (2.0 * self.norm)
    }

    /// (sin t + cos t d/dt) applied to f; the angular structure the
    /// spin-orbit drive produces. Equals 2 cosh(a) sin(t) * gaussian / norm.
    pub fn theta_structure(&self, p_perp: f64, p_z: f64, cos_t: f64) -> f64 {
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let g = self.gaussian(p_perp, p_z) * self.bracket_scale() / self.norm;
        // sin t * (2 + 2 tanh a cos t) + cos t * (-2 tanh a sin t) = 2 sin t
        2.0 * sin_t * g
    }

    /// (sin t + cos t d/dt) d f / d p_z.
    pub fn theta_structure_dpz(&self, p_perp: f64, p_z: f64, cos_t: f64) -> f64 {
        -2.0 * p_z / (self.p_t * self.p_t) * self.theta_structure(p_perp, p_z, cos_t)
    }

    /// (sin t + cos t d/dt) d f / d p_perp.
    pub fn theta_structure_dpperp(&self, p_perp: f64, p_z: f64, cos_t: f64) -> f64 {
        -2.0 * p_perp / (self.p_t * self.p_t) * self.theta_structure(p_perp, p_z, cos_t)
    }

    /// Integral of the unnormalized shape over d^3p d^2s, with a crude
    /// error estimate from node doubling.
    fn raw_total(&self) -> Result<(f64, f64)> {
        let coarse = self.raw_total_with(48, 24)?;
        let fine = self.raw_total_with(96, 48)?;
        let err = ((fine - coarse) / fine).abs();
        if err > 1e-12 {
            return Err(QkinError::QuadratureNonConvergence {
                achieved: err,
                target: 1e-12,
            });
        }
        Ok((fine, err))
    }

    fn raw_total_with(&self, n_radial: usize, n_theta: usize) -> Result<f64> {
        let rules = SpinQuadrature::new(64, n_radial, n_theta, self.p_t);
        Ok(rules.integrate(|pp, pz, c| {
            self.gaussian(pp, pz) * self.bracket(c) * self.bracket_scale()
        }))
    }

    /// Achieved normalization error estimate.
    pub fn normalization_error(&self) -> f64 {
        self.quad_err
    }
}

/// Equilibrium selected by name in run configurations.
#[derive(Debug, Clone)]
pub enum Equilibrium {
    Maxwellian1D(Equilibrium1D),
    SpinMaxwellian(EquilibriumSpin),
}

/// Product quadrature over (p_z, p_perp, cos theta_s) against the plain
/// measure `2 pi dphi_p * 2 pi dphi_s * p_perp dp_perp dp_z sin t dt`
/// for phi-independent integrands. The (2 pi)^2 from the angles is included.
pub struct SpinQuadrature {
    gh: GaussHermite,
    gl_radial: GaussLegendre,
    gl_theta: GaussLegendre,
    p_t: f64,
}

impl SpinQuadrature {
    pub fn new(n_pz: usize, n_radial: usize, n_theta: usize, p_t: f64) -> Self {
        Self {
            gh: GaussHermite::new(n_pz),
            gl_radial: GaussLegendre::new(n_radial),
            gl_theta: GaussLegendre::new(n_theta),
            p_t,
        }
    }

    /// Integrates `f(p_perp, p_z, cos theta) * exp(-(p_perp^2+p_z^2)/p_t^2)`
    /// over the full measure. The Gaussian must NOT be included in `f`
    /// (it is carried by the Hermite weight and a radial factor).
    pub fn integrate_factored<F>(&self, mut f: F) -> f64
    where
        F: FnMut(f64, f64, f64) -> f64,
    {
        let two_pi_sq = (2.0 * std::f64::consts::PI).powi(2);
        let pmax = SUPPORT_SIGMAS * self.p_t;
        let pt = self.p_t;
        let mut total = 0.0;
        for (&tz, &wz) in self.gh.nodes().iter().zip(self.gh.weights()) {
            let pz = pt * tz;
            // radial: int_0^pmax p f e^{-p^2/pt^2} dp
            let radial = self.gl_radial.integrate(0.0, pmax, |pp| {
                let gauss_r = (-(pp * pp) / (pt * pt)).exp();
                let theta: f64 = self
                    .gl_theta
                    .sum(|c| f(pp, pz, c));
                pp * gauss_r * theta
            });
            total += wz * pt * radial;
        }
        two_pi_sq * total
    }

    /// Integrates a full integrand `f(p_perp, p_z, cos theta)` (including
    /// its own Gaussian decay) over the measure. Less accurate than
    /// [`Self::integrate_factored`]; used where the integrand is opaque.
    pub fn integrate<F>(&self, mut f: F) -> f64
    where
        F: FnMut(f64, f64, f64) -> f64,
    {
        let pt = self.p_t;
        self.integrate_factored(|pp, pz, c| {
            let gauss = (-((pp * pp + pz * pz) / (pt * pt))).exp();
            f(pp, pz, c) / gauss
        })
    }
}

/// Normalization and low moments of an equilibrium, via quadrature.
/// Returns `(norm, <p_z^2>, <s_z>)` where `norm` is the integral of the
/// *normalized* distribution (1 up to quadrature error), `<s_z>` carries
/// the factor-3 polarization rule.
pub fn normalize_and_moments(eq: &Equilibrium) -> Result<(f64, f64, f64)> {
    match eq {
        Equilibrium::Maxwellian1D(m) => {
            let gh = GaussHermite::new(96);
            let norm: f64 = gh.sum(|_t| 1.0) / std::f64::consts::PI.sqrt();
            let pz2: f64 =
                gh.sum(|t| (m.p_t * t).powi(2)) / std::f64::consts::PI.sqrt();
            Ok((norm, pz2, 0.0))
        }
        Equilibrium::SpinMaxwellian(s) => {
            let quad = SpinQuadrature::new(96, 64, 32, s.p_t);
            let tanh_a = s.a.tanh();
            let scale = s.bracket_scale() / s.norm;
            let norm = quad.integrate_factored(|_, _, c| 2.0 * (1.0 + tanh_a * c) * scale);
            let pz2 = quad
                .integrate_factored(|_, pz, c| pz * pz * 2.0 * (1.0 + tanh_a * c) * scale);
            // factor-3 polarization rule: <sigma_z> = 3 int s_z f
            let sz = 3.0
                * quad.integrate_factored(|_, _, c| c * 2.0 * (1.0 + tanh_a * c) * scale);
            Ok((norm, pz2, sz))
        }
    }
}
