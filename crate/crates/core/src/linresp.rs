//! Linearized theory: analytic perturbed distributions, azimuthal
//! eigenfunction algebra and the general quadrature-based dispersion
//! function for the magnetized spin-orbit system.
//!
//! Internal sign conventions are those of the species: all gyrofrequencies
//! are signed with the charge (`omega_c = q B0 / m c < 0` for electrons,
//! likewise the precession frequency and their difference). The harmonic
//! pair `(n, n') = (1, -1)` then carries the denominator
//! `omega - d - k p_z/m` and `(-1, 1)` carries `omega + d - k p_z/m`,
//! with `d` the signed precession/cyclotron offset.
//!
//! The general dispersion function is built literally as the longitudinal
//! Ampere closure `-i omega E1 = -4 pi J_Tz` of the harmonic solution,
//! with the free-current and polarization-current integrals evaluated by
//! product quadrature under the plain measure `d^3p d^2s`. Its analytic
//! Taylor reduction (Gaussian moments, resonant-bracket expansion) is
//! provided separately as an independent cross-check. Prefactors of
//! published variants of these relations depend on the angular-measure
//! normalization they absorb; here everything is pinned to the measure
//! conventions of [`crate::equilibrium`].

use crate::constants;
use crate::equilibrium::{Equilibrium1D, EquilibriumSpin, SUPPORT_SIGMAS};
use crate::error::{QkinError, Result};
use crate::params::PlasmaParams;
use crate::quadrature::{GaussHermite, GaussLegendre};
use crate::C64;

/// One longitudinal electrostatic mode.
#[derive(Debug, Clone, Copy)]
pub struct ModeSpec {
    /// Complex frequency [1/s].
    pub omega: C64,
    /// Wavenumber along B0 [1/cm].
    pub k: f64,
    /// Transverse wavenumber; 0 in every closure implemented here.
    pub k_perp: f64,
    /// Field amplitude [statV/cm]; a linear scale only.
    pub e1: f64,
}

impl ModeSpec {
    pub fn new(omega: C64, k: f64, e1: f64) -> Result<Self> {
        if !k.is_finite() || !e1.is_finite() || e1 <= 0.0 {
            return Err(QkinError::InvalidInput(format!(
                "mode needs finite k and positive E1, got k={k}, E1={e1}"
            )));
        }
        Ok(Self {
            omega,
            k,
            k_perp: 0.0,
            e1,
        })
    }
}

/// Bessel function of the first kind, integer order, by downward (Miller)
/// recurrence with the `J0 + 2 sum J_2k = 1` normalization; adequate for
/// the moderate arguments the eigenfunction expansion uses.
pub fn bessel_jn(n: i32, x: f64) -> f64 {
    let nu = n.unsigned_abs() as usize;
    let neg_order = n < 0 && nu % 2 == 1;
    let neg_arg = x < 0.0 && nu % 2 == 1;
    if x == 0.0 {
        let v = if nu == 0 { 1.0 } else { 0.0 };
        return if neg_order { -v } else { v };
    }
    let ax = x.abs();
    let start = (nu.max(ax as usize) + 20 + (40.0 * ax.max(1.0)).sqrt() as usize) & !1usize;
    let mut jp = 0.0_f64; // J_{m+1}
    let mut jc = 1e-30_f64; // J_m, seeded at m = start
    let mut jn_val = if nu == start { jc } else { 0.0 };
    let mut sum = 2.0 * jc; // start is even
    let mut m = start;
    while m > 0 {
        // J_{m-1} = (2m/x) J_m - J_{m+1}
        let jm = 2.0 * (m as f64) / ax * jc - jp;
        m -= 1;
        jp = jc;
        jc = jm;
        if jc.abs() > 1e100 {
            jc *= 1e-100;
            jp *= 1e-100;
            jn_val *= 1e-100;
            sum *= 1e-100;
        }
        if m == nu {
            jn_val = jc;
        }
        if m % 2 == 0 && m > 0 {
            sum += 2.0 * jc;
        }
    }
    sum += jc; // J_0
    let mut val = jn_val / sum;
    if neg_order ^ neg_arg {
        val = -val;
    }
    val
}

/// Azimuthal eigenfunction of the magnetized linear operator:
/// `psi_n = exp[i (n phi_p - (k_perp p_perp / m omega_c) sin phi_p)] / sqrt(2 pi)`.
/// For `k_perp = 0` this is `exp(i n phi_p)/sqrt(2 pi)`.
pub fn psi_n(n: i32, p_perp: f64, phi_p: f64, k_perp: f64, omega_c: f64) -> Result<C64> {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    if k_perp == 0.0 {
        return Ok(C64::from_polar(norm, n as f64 * phi_p));
    }
    if omega_c == 0.0 {
        return Err(QkinError::InvalidInput(
            "psi_n with k_perp != 0 needs a nonzero cyclotron frequency".into(),
        ));
    }
    let lambda = k_perp * p_perp / (constants::M_E * omega_c);
    Ok(C64::from_polar(
        norm,
        n as f64 * phi_p - lambda * phi_p.sin(),
    ))
}

/// Bessel expansion of [`psi_n`]:
/// `psi_n = (1/sqrt(2 pi)) sum_m J_m(lambda) exp(i (n - m) phi_p)`,
/// truncated at `|m| <= m_max`.
pub fn psi_n_bessel_sum(
    n: i32,
    p_perp: f64,
    phi_p: f64,
    k_perp: f64,
    omega_c: f64,
    m_max: i32,
) -> Result<C64> {
    if k_perp != 0.0 && omega_c == 0.0 {
        return Err(QkinError::InvalidInput(
            "psi_n with k_perp != 0 needs a nonzero cyclotron frequency".into(),
        ));
    }
    let lambda = if k_perp == 0.0 {
        0.0
    } else {
        k_perp * p_perp / (constants::M_E * omega_c)
    };
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = C64::new(0.0, 0.0);
    for m in -m_max..=m_max {
        acc += C64::from_polar(1.0, (n - m) as f64 * phi_p) * bessel_jn(m, lambda);
    }
    Ok(acc * norm)
}

/// Perturbed distribution of the unmagnetized 1D reduction:
/// `f1(p) = -i q E1 (1 + hbar^2 k^2/8 m^2 c^2) (df0/dp) / (omega - k p/m)`.
#[derive(Debug, Clone)]
pub struct DarwinPerturbation {
    f0: Equilibrium1D,
    mode: ModeSpec,
    prefactor: C64,
}

/// Builds the Darwin-branch perturbation; rejects evaluation setups whose
/// phase-velocity pole sits on the momentum support with real frequency.
pub fn f1_darwin(
    f0: &Equilibrium1D,
    mode: &ModeSpec,
    params: &PlasmaParams,
) -> Result<DarwinPerturbation> {
    let m = constants::M_E;
    if mode.k != 0.0 {
        let v_phase = mode.omega.re / mode.k;
        let on_support = v_phase.abs() < SUPPORT_SIGMAS * f0.p_t / m;
        let regularized = mode.omega.im.abs() > 1e-12 * mode.omega.norm();
        if on_support && !regularized {
            return Err(QkinError::PoleOnSupport);
        }
    }
    let q = -constants::E_CHARGE;
    let darwin = crate::dispersion::darwin_factor(params, mode.k);
    Ok(DarwinPerturbation {
        f0: *f0,
        mode: *mode,
        prefactor: C64::new(0.0, -1.0) * q * mode.e1 * darwin,
    })
}

impl DarwinPerturbation {
    pub fn eval(&self, p_z: f64) -> C64 {
        let m = constants::M_E;
        self.prefactor * self.f0.d_dpz(p_z) / (self.mode.omega - self.mode.k * p_z / m)
    }
}

/// Channel coefficients of the spin-orbit harmonic solution.
///
/// `f1 = g00 + g_(1,-1) e^{i(phi_p - phi_s)} + g_(-1,1) e^{-i(phi_p - phi_s)}`
/// where each spin coefficient combines the Thomas-precession drive
/// (prop. to k), the fast-precession drive (prop. to mu/hbar) and the
/// E1 x B0 drive (prop. to mu B0), all sharing one resonant denominator.
#[derive(Debug, Clone)]
pub struct HarmonicSolution {
    pub mode: ModeSpec,
    f0: EquilibriumSpin,
    /// Signed resonance offset omega_cg - omega_c.
    delta_signed: f64,
    /// k mu / 4 m c (Thomas channel).
    c_thomas: f64,
    /// mu / 2 hbar m c (fast precession channel); 0 when hbar = 0.
    c_prec: f64,
    /// -q mu B0 / 4 m c^2 (field-coupling channel).
    c_field: f64,
    /// -i q E1 (1 + darwin) for the (0,0) channel.
    c00: C64,
}

/// Solves the linearized magnetized equation for the spin Maxwellian;
/// longitudinal modes only (`k_perp = 0`).
pub fn f1_spin_orbit(
    f0: &EquilibriumSpin,
    mode: &ModeSpec,
    params: &PlasmaParams,
) -> Result<HarmonicSolution> {
    if mode.k_perp != 0.0 {
        return Err(QkinError::InvalidInput(
            "spin-orbit closure is longitudinal only (k_perp = 0)".into(),
        ));
    }
    let m = constants::M_E;
    let c = constants::C;
    let q = -constants::E_CHARGE;
    let delta_signed = params.delta_omega_c_signed();

    // resonance-overlap guard for near-real frequencies with k != 0
    if mode.k != 0.0 && mode.omega.im.abs() < 1e-12 * mode.omega.norm() {
        let v_sup = SUPPORT_SIGMAS * f0.p_t / m;
        for shift in [0.0, delta_signed, -delta_signed] {
            let v_phase = (mode.omega.re - shift) / mode.k;
            if v_phase.abs() < v_sup {
                return Err(QkinError::ResonanceOverlap {
                    distance: v_phase.abs() / (f0.p_t / m),
                });
            }
        }
    }

    let mu = params.mu;
    let c_prec = if params.hbar == 0.0 {
        // mu itself carries hbar; the ratio mu/hbar stays finite but the
        // whole channel vanishes with mu, so 0 is the correct limit value
        // only when mu = 0 as well.
        if mu == 0.0 {
            0.0
        } else {
            return Err(QkinError::InvalidInput(
                "inconsistent parameters: mu != 0 with hbar = 0".into(),
            ));
        }
    } else {
        mu / (2.0 * params.hbar * m * c)
    };
    Ok(HarmonicSolution {
        mode: *mode,
        f0: f0.clone(),
        delta_signed,
        c_thomas: mode.k * mu / (4.0 * m * c),
        c_prec,
        c_field: -q * mu * params.state.b0 / (4.0 * m * c * c),
        c00: C64::new(0.0, -1.0) * q * mode.e1 * crate::dispersion::darwin_factor(params, mode.k),
    })
}

impl HarmonicSolution {
    /// Resonant denominators `(omega - d - k p_z/m, omega + d - k p_z/m)`.
    pub fn resonant_denominators(&self, p_z: f64) -> (C64, C64) {
        let m = constants::M_E;
        let base = self.mode.omega - self.mode.k * p_z / m;
        (base - self.delta_signed, base + self.delta_signed)
    }

    pub fn g00(&self, p_perp: f64, p_z: f64, cos_t: f64) -> C64 {
        let m = constants::M_E;
        self.c00 * self.f0.d_dpz(p_perp, p_z, cos_t) / (self.mode.omega - self.mode.k * p_z / m)
    }

    fn spin_numerator(&self, p_perp: f64, p_z: f64, cos_t: f64, thomas_sign: f64) -> C64 {
        let drive = thomas_sign * self.c_thomas * p_perp
            * self.f0.theta_structure_dpz(p_perp, p_z, cos_t)
            + self.c_prec * p_perp * self.f0.d_dtheta(p_perp, p_z, cos_t)
            + self.c_field * self.f0.theta_structure_dpperp(p_perp, p_z, cos_t);
        C64::new(0.0, self.mode.e1) * drive
    }

    /// Coefficient of `e^{i(phi_p - phi_s)}`.
    pub fn g1m1(&self, p_perp: f64, p_z: f64, cos_t: f64) -> C64 {
        let (dm, _) = self.resonant_denominators(p_z);
        self.spin_numerator(p_perp, p_z, cos_t, 1.0) / dm
    }

    /// Coefficient of `e^{-i(phi_p - phi_s)}`.
    pub fn gm11(&self, p_perp: f64, p_z: f64, cos_t: f64) -> C64 {
        let (_, dp) = self.resonant_denominators(p_z);
        self.spin_numerator(p_perp, p_z, cos_t, -1.0) / dp
    }

    /// Full perturbation at explicit azimuthal angles.
    pub fn eval(&self, p_perp: f64, p_z: f64, cos_t: f64, phi_p: f64, phi_s: f64) -> C64 {
        let d = phi_p - phi_s;
        self.g00(p_perp, p_z, cos_t)
            + self.g1m1(p_perp, p_z, cos_t) * C64::from_polar(1.0, d)
            + self.gm11(p_perp, p_z, cos_t) * C64::from_polar(1.0, -d)
    }
}

/// Max-norm residual of the harmonic solution substituted into the
/// Fourier-transformed linearized equation, relative to the drive size.
///
/// The operator side differentiates the sampled perturbation in the two
/// azimuths spectrally; the drive side is assembled from the raw
/// trigonometric products of the linearized equation, independent of the
/// harmonic reduction that produced the solution.
pub fn operator_residual(
    sol: &HarmonicSolution,
    params: &PlasmaParams,
    n_phi: usize,
) -> f64 {
    let m = constants::M_E;
    let c = constants::C;
    let q = -constants::E_CHARGE;
    let mu = params.mu;
    let omega_c_s = params.omega_c_signed();
    let omega_cg_s = params.omega_cg_signed();
    let darwin = crate::dispersion::darwin_factor(params, sol.mode.k);
    let e1 = sol.mode.e1;

    let pt = sol.f0.p_t;
    let sample_pp = [0.25 * pt, 0.9 * pt, 1.8 * pt];
    let sample_pz = [-2.1 * pt, -0.4 * pt, 0.55 * pt, 1.7 * pt];
    let sample_theta = [0.45_f64, 1.2, 1.95, 2.8];

    let mut worst = 0.0_f64;
    let mut drive_scale = 0.0_f64;

    for &pp in &sample_pp {
        for &pz in &sample_pz {
            for &th in &sample_theta {
                let ct = th.cos();
                // sample f1 on the phi torus
                let mut f1 = vec![vec![C64::new(0.0, 0.0); n_phi]; n_phi];
                for (jp, row) in f1.iter_mut().enumerate() {
                    let phi_p = 2.0 * std::f64::consts::PI * jp as f64 / n_phi as f64;
                    for (js, v) in row.iter_mut().enumerate() {
                        let phi_s = 2.0 * std::f64::consts::PI * js as f64 / n_phi as f64;
                        *v = sol.eval(pp, pz, ct, phi_p, phi_s);
                    }
                }
                let ddp = torus_dphi(&f1, Axis2::PhiP);
                let dds = torus_dphi(&f1, Axis2::PhiS);

                for jp in 0..n_phi {
                    let phi_p = 2.0 * std::f64::consts::PI * jp as f64 / n_phi as f64;
                    for js in 0..n_phi {
                        let phi_s = 2.0 * std::f64::consts::PI * js as f64 / n_phi as f64;
                        let lhs = C64::new(0.0, -1.0)
                            * (sol.mode.omega - sol.mode.k * pz / m)
                            * f1[jp][js]
                            - omega_c_s * ddp[jp][js]
                            - omega_cg_s * dds[jp][js];

                        // drive from the printed trigonometric products
                        let thomas_trig = phi_p.cos() * phi_s.sin() - phi_p.sin() * phi_s.cos();
                        let prec_trig = phi_p.cos() * phi_s.cos() + phi_p.sin() * phi_s.sin();
                        let rhs = C64::new(-q * e1 * darwin * sol.f0.d_dpz(pp, pz, ct), 0.0)
                            + C64::new(0.0, -1.0)
                                * (sol.mode.k * mu * pp * e1 / (2.0 * m * c))
                                * thomas_trig
                                * sol.f0.theta_structure_dpz(pp, pz, ct)
                            + C64::new(
                                mu * pp * e1 / (params.hbar * m * c)
                                    * prec_trig
                                    * sol.f0.d_dtheta(pp, pz, ct),
                                0.0,
                            )
                            + C64::new(
                                -q * mu * params.state.b0 * e1 / (2.0 * m * c * c)
                                    * prec_trig
                                    * sol.f0.theta_structure_dpperp(pp, pz, ct),
                                0.0,
                            );
                        worst = worst.max((lhs - rhs).norm());
                        drive_scale = drive_scale.max(rhs.norm());
                    }
                }
            }
        }
    }
    worst / drive_scale.max(f64::MIN_POSITIVE)
}

enum Axis2 {
    PhiP,
    PhiS,
}

/// Spectral d/dphi of a trig polynomial sampled on an equispaced torus.
fn torus_dphi(f: &[Vec<C64>], axis: Axis2) -> Vec<Vec<C64>> {
    let n = f.len();
    let mut out = vec![vec![C64::new(0.0, 0.0); n]; n];
    // direct O(n^2) DFT; n is small
    let dft = |line: &[C64]| -> Vec<C64> {
        let n = line.len();
        let mut coeffs = vec![C64::new(0.0, 0.0); n];
        for (m, cm) in coeffs.iter_mut().enumerate() {
            for (j, v) in line.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (m * j) as f64 / n as f64;
                *cm += *v * C64::from_polar(1.0 / n as f64, ph);
            }
        }
        let mut deriv = vec![C64::new(0.0, 0.0); n];
        for (j, dv) in deriv.iter_mut().enumerate() {
            for (m, cm) in coeffs.iter().enumerate() {
                let freq = if m <= n / 2 { m as isize } else { m as isize - n as isize };
                if n % 2 == 0 && m == n / 2 {
                    continue; // drop the Nyquist mode
                }
                let ph = 2.0 * std::f64::consts::PI * (m * j) as f64 / n as f64;
                *dv += *cm * C64::new(0.0, freq as f64) * C64::from_polar(1.0, ph);
            }
        }
        deriv
    };
    match axis {
        Axis2::PhiP => {
            for js in 0..n {
                let col: Vec<C64> = (0..n).map(|jp| f[jp][js]).collect();
                let d = dft(&col);
                for jp in 0..n {
                    out[jp][js] = d[jp];
                }
            }
        }
        Axis2::PhiS => {
            for (jp, row) in f.iter().enumerate() {
                let d = dft(row);
                out[jp] = d;
            }
        }
    }
    out
}

/// Quadrature layout for the dispersion closure.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    pub n_pz: usize,
    pub n_radial: usize,
    pub n_theta: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            n_pz: 160,
            n_radial: 48,
            n_theta: 16,
        }
    }
}

impl QuadSpec {
    pub fn doubled(&self) -> Self {
        Self {
            n_pz: self.n_pz * 2,
            n_radial: self.n_radial * 2,
            n_theta: self.n_theta * 2,
        }
    }
}

/// General magnetized dispersion residual: the longitudinal Ampere closure
/// `D = 1 - 4 pi J_Tz / (i omega E1)` of [`f1_spin_orbit`], with
/// `J_Tz = J_Fz - i omega P_z`. The free current comes from the (0,0)
/// harmonic, the polarization current from the `(+-1, -+1)` pair; the
/// magnetization current vanishes identically for these harmonics.
pub fn dispersion_general(
    omega: C64,
    k: f64,
    f0: &EquilibriumSpin,
    params: &PlasmaParams,
    quad: &QuadSpec,
) -> Result<C64> {
    let m = constants::M_E;
    let c = constants::C;
    let q = -constants::E_CHARGE;
    let n0 = params.state.n_e;
    let mode = ModeSpec::new(omega, k, 1.0)?;
    let sol = f1_spin_orbit(f0, &mode, params)?;

    // pole guards in thermal units
    if k != 0.0 {
        let v_t = f0.p_t / m;
        for shift in [0.0, sol.delta_signed, -sol.delta_signed] {
            let w = (omega - shift) / (k * v_t);
            if w.re.abs() < 5.0 && w.im.abs() < 0.3 {
                return Err(QkinError::ResonanceOverlap {
                    distance: w.im.abs(),
                });
            }
        }
    } else {
        for shift in [sol.delta_signed, -sol.delta_signed] {
            if (omega - shift).norm() == 0.0 {
                return Err(QkinError::InvalidInput(
                    "evaluation exactly at the spin resonance".into(),
                ));
            }
        }
    }

    let gh = GaussHermite::new(quad.n_pz);
    let gl_r = GaussLegendre::new(quad.n_radial);
    let gl_t = GaussLegendre::new(quad.n_theta);
    let pt = f0.p_t;
    let pmax_r = SUPPORT_SIGMAS * pt;
    let two_pi = 2.0 * std::f64::consts::PI;

    // J_Fz / E1 = (q n0 / m) (2 pi)^2 Int pz g00 (radial, polar, pz measure)
    // P_z / E1 = -(3 mu n0 / 2 m c) * 2 pi^2 i * Int pp^2 sin t (g1m1 - gm11)
    let mut j_free = C64::new(0.0, 0.0);
    let mut pol = C64::new(0.0, 0.0);

    for (&tz, &wz) in gh.nodes().iter().zip(gh.weights()) {
        let pz = pt * tz;
        // g00 channel: needs int pp dpp of d f0/dpz; gaussian factored via GH in pz
        // radial integral with its own gaussian handled by GL against the
        // explicit equilibrium values (robust, still spectral-fast).
        let mut rad00 = C64::new(0.0, 0.0);
        let mut rad_pol = C64::new(0.0, 0.0);
        for (&xr, &wr) in gl_r.nodes().iter().zip(gl_r.weights()) {
            let pp = 0.5 * pmax_r * (xr + 1.0);
            let wrr = 0.5 * pmax_r * wr;
            let mut th00 = C64::new(0.0, 0.0);
            let mut th_pol = C64::new(0.0, 0.0);
            for (&ctn, &wt) in gl_t.nodes().iter().zip(gl_t.weights()) {
                // strip the Gaussian in pz (carried by the Hermite weight)
                let gauss_pz = (-(tz * tz)).exp();
                th00 += C64::new(sol.f0.d_dpz(pp, pz, ctn) / gauss_pz * wt, 0.0);
                let sin_t = (1.0 - ctn * ctn).max(0.0).sqrt();
                th_pol += (sol.g1m1(pp, pz, ctn) - sol.gm11(pp, pz, ctn)) / gauss_pz
                    * (sin_t * wt);
            }
            rad00 += th00 * (pp * wrr);
            rad_pol += th_pol * (pp * pp * wrr);
        }
        let d0 = omega - k * pz / m;
        j_free += rad00 / d0 * (pz * wz * pt);
        pol += rad_pol * (wz * pt);
    }
    // assemble currents
    let darwin = crate::dispersion::darwin_factor(params, k);
    let jf = C64::new(0.0, -1.0) * q * q * (n0 / m) * darwin * two_pi * two_pi * j_free;
    let pz_pol = C64::new(0.0, -1.0)
        * (3.0 * params.mu * n0 / (2.0 * m * c))
        * (two_pi * two_pi / 2.0)
        * pol;
    let j_t = jf - C64::new(0.0, 1.0) * omega * pz_pol;
    Ok(1.0 - 4.0 * std::f64::consts::PI * j_t / (C64::new(0.0, 1.0) * omega))
}

/// Analytic Taylor reduction of [`dispersion_general`] for the spin
/// Maxwellian: Gaussian moments with the resonant denominators expanded to
/// second order in `k p_z / m (omega -+ d)`. Valid well off resonance,
/// `|k v_t| << |omega -+ d|`.
pub fn dispersion_general_taylor(
    omega: C64,
    k: f64,
    f0: &EquilibriumSpin,
    params: &PlasmaParams,
) -> C64 {
    let m = constants::M_E;
    let c = constants::C;
    let q = -constants::E_CHARGE;
    let n0 = params.state.n_e;
    let v_t = f0.p_t / m;
    let pt = f0.p_t;
    let mu = params.mu;
    let d = params.delta_omega_c_signed();
    let kv = k * v_t;
    let darwin = crate::dispersion::darwin_factor(params, k);

    // free-current channel
    let classical =
        1.0 - (params.omega_p.powi(2) * darwin / (omega * omega))
            * (1.0 + 1.5 * kv * kv / (omega * omega));

    // resonant brackets
    let bm = 1.0 / (omega - d) + 0.5 * kv * kv / (omega - d).powi(3);
    let bp = 1.0 / (omega + d) + 0.5 * kv * kv / (omega + d).powi(3);
    let pm2 = kv / (omega - d).powi(2) * 0.5 + 0.75 * kv * kv * kv / (omega - d).powi(4);
    let pp2 = kv / (omega + d).powi(2) * 0.5 + 0.75 * kv * kv * kv / (omega + d).powi(4);

    // I2 = -(2/3) pt^2 tanh(a) (Bm - Bp); coefficient 3 pi mu^2 n0 / 2 hbar m^2 c^2
    let w_prec = if params.hbar > 0.0 {
        (3.0 * std::f64::consts::PI * mu * mu * n0 / (2.0 * params.hbar * m * m * c * c))
            * (-(2.0 / 3.0) * pt * pt * f0.a.tanh())
            * (bm - bp)
    } else {
        C64::new(0.0, 0.0)
    };
    // I3 = -(4/3) pt (Pm + Pp); coefficient 3 pi k mu^2 n0 / 4 m^2 c^2
    let w_thomas = (3.0 * std::f64::consts::PI * k * mu * mu * n0 / (4.0 * m * m * c * c))
        * (-(4.0 / 3.0) * pt)
        * (pm2 + pp2);
    // I4 = -(4/3) (Bm - Bp); coefficient -3 pi q mu^2 B0 n0 / 4 m^2 c^3
    let w_field = -(3.0 * std::f64::consts::PI * q * mu * mu * params.state.b0 * n0
        / (4.0 * m * m * c * c * c))
        * (-(4.0 / 3.0))
        * (bm - bp);

    classical + w_prec + w_thomas + w_field
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, derive_params_scaled, PlasmaState};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn magnetized_params() -> PlasmaParams {
        let t = 0.5e-4 * constants::MC2 / constants::K_B; // v_t = 0.01 c
        let state = PlasmaState::with_default_g(1e25, t, 5e8).unwrap();
        derive_params(&state).unwrap()
    }

    fn pole_free_mode(params: &PlasmaParams) -> ModeSpec {
        // k v_t / omega = 0.05 at omega ~ omega_p: poles far off support
        let k = 0.05 * params.omega_p / params.v_t;
        ModeSpec::new(C64::new(1.3 * params.omega_p, 0.0), k, 1e-6).unwrap()
    }

    #[test]
    fn bessel_reference_values() {
        // frozen reference values (Abramowitz & Stegun tables)
        assert_abs_diff_eq!(bessel_jn(0, 1.0), 0.7651976865579666, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_jn(1, 1.0), 0.44005058574493355, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_jn(2, 5.0), 0.04656511627775222, epsilon = 1e-10);
        assert_abs_diff_eq!(bessel_jn(5, 2.0), 0.007039629755871685, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_jn(-1, 1.0), -0.44005058574493355, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_jn(0, 0.0), 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(bessel_jn(3, 0.0), 0.0, epsilon = 0.0);
    }

    #[test]
    fn bessel_sum_rule() {
        // J0 + 2 sum J_2k = 1
        for &x in &[0.5, 2.0, 7.3] {
            let mut s = bessel_jn(0, x);
            for kk in 1..40 {
                s += 2.0 * bessel_jn(2 * kk, x);
            }
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn psi_constant_mode() {
        let v = psi_n(0, 1.0, 2.3, 0.0, 0.0).unwrap();
        assert_relative_eq!(
            v.re,
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-15
        );
        assert_abs_diff_eq!(v.im, 0.0);
    }

    #[test]
    fn psi_orthonormal_by_trapezoid() {
        // exact for trig polynomials on the periodic grid
        let n_phi = 64;
        let (kp, wc, pp) = (2.0e4, 3.0e17, 1e-19);
        for n in -2..=2 {
            for mm in -2..=2 {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..n_phi {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
                    let a = psi_n(n, pp, phi, kp, wc).unwrap();
                    let b = psi_n(mm, pp, phi, kp, wc).unwrap();
                    acc += a * b.conj();
                }
                acc *= 2.0 * std::f64::consts::PI / n_phi as f64;
                let expect = if n == mm { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(acc.re, expect, epsilon = 1e-10);
                assert_abs_diff_eq!(acc.im, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn psi_bessel_expansion_matches_exponential_form() {
        let (kp, wc, pp) = (2.0e4, 3.0e17, 1e-19);
        let lambda = kp * pp / (constants::M_E * wc);
        assert!(lambda.abs() < 10.0);
        for &phi in &[0.3, 1.9, 4.4] {
            for n in [-1, 0, 2] {
                let direct = psi_n(n, pp, phi, kp, wc).unwrap();
                let series = psi_n_bessel_sum(n, pp, phi, kp, wc, 30).unwrap();
                assert!((direct - series).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn psi_rejects_unmagnetized_transverse() {
        assert!(psi_n(1, 1e-19, 0.2, 1.0, 0.0).is_err());
        assert!(psi_n_bessel_sum(1, 1e-19, 0.2, 1.0, 0.0, 10).is_err());
    }

    #[test]
    fn darwin_perturbation_classical_factor_and_linearity() {
        let params = derive_params_scaled(&magnetized_params().state, 0.0).unwrap();
        let f0 = Equilibrium1D::new(params.p_t()).unwrap();
        let mode = pole_free_mode(&params);
        let f1 = f1_darwin(&f0, &mode, &params).unwrap();
        // hbar -> 0: prefactor is -i q E1 exactly
        let expect = C64::new(0.0, -1.0) * (-constants::E_CHARGE) * mode.e1;
        assert_relative_eq!(f1.prefactor.im, expect.im, max_relative = 1e-15);

        // doubling E1 doubles f1 pointwise
        let mode2 = ModeSpec::new(mode.omega, mode.k, 2.0 * mode.e1).unwrap();
        let f1b = f1_darwin(&f0, &mode2, &params).unwrap();
        let p = 0.7 * f0.p_t;
        assert!((f1b.eval(p) - f1.eval(p) * 2.0).norm() < 1e-12 * f1.eval(p).norm());
    }

    #[test]
    fn darwin_perturbation_rejects_pole_on_support() {
        let params = derive_params(&magnetized_params().state).unwrap();
        let f0 = Equilibrium1D::new(params.p_t()).unwrap();
        // phase velocity 2 v_t on support, real omega
        let k = 0.5 * params.omega_p / params.v_t;
        let mode = ModeSpec::new(C64::new(params.omega_p, 0.0), k, 1e-6).unwrap();
        assert!(matches!(
            f1_darwin(&f0, &mode, &params),
            Err(QkinError::PoleOnSupport)
        ));
        // off the axis it is accepted
        let mode = ModeSpec::new(C64::new(params.omega_p, 0.02 * params.omega_p), k, 1e-6).unwrap();
        assert!(f1_darwin(&f0, &mode, &params).is_ok());
    }

    #[test]
    fn poisson_closure_consistent_with_exact_dispersion_root() {
        // At a root of the kinetic dispersion relation, the Poisson closure
        // i k E1 = 4 pi q n0 int f1 dp must hold; evaluate the first-order
        // pole integral directly (independent route from the second-order
        // form used by the dispersion module).
        let params = derive_params_scaled(&magnetized_params().state, 0.0).unwrap();
        let f0 = Equilibrium1D::new(params.p_t()).unwrap();
        let k = 0.08 * params.omega_p / params.v_t;
        let problem = crate::dispersion::DispersionProblem::new(
            crate::dispersion::DispersionKind::LangmuirExact,
            params,
            k,
        )
        .unwrap();
        let root = crate::dispersion::find_root(&problem, C64::new(1.01 * params.omega_p, 0.0))
            .unwrap()
            .omega;
        let mode = ModeSpec::new(root, k, 3.3e-7).unwrap();
        let f1 = f1_darwin(&f0, &mode, &params).unwrap();
        let gh = GaussHermite::new(256);
        let q = -constants::E_CHARGE;
        let n0 = params.state.n_e;
        let integral: C64 = gh.sum(|t| {
            let p = f0.p_t * t;
            f1.eval(p) / (-(t * t)).exp() * f0.p_t
        });
        let lhs = C64::new(0.0, 1.0) * k * mode.e1;
        let rhs = 4.0 * std::f64::consts::PI * q * n0 * integral;
        assert!(
            (lhs - rhs).norm() < 1e-8 * lhs.norm(),
            "closure residual {:.3e}",
            (lhs - rhs).norm() / lhs.norm()
        );
    }

    #[test]
    fn spin_solution_loses_spin_channels_without_mu() {
        let params = derive_params_scaled(&magnetized_params().state, 0.0).unwrap();
        let f0 = EquilibriumSpin::new(params.p_t(), 0.4).unwrap();
        let mode = pole_free_mode(&params);
        let sol = f1_spin_orbit(&f0, &mode, &params).unwrap();
        let g = sol.g1m1(0.8 * f0.p_t, 0.3 * f0.p_t, 0.2);
        assert_eq!(g, C64::new(0.0, 0.0));
        assert!(sol.g00(0.8 * f0.p_t, 0.3 * f0.p_t, 0.2).norm() > 0.0);
    }

    #[test]
    fn spin_denominators_merge_without_field() {
        let state = PlasmaState::with_default_g(1e25, 3e5, 0.0).unwrap();
        let params = derive_params(&state).unwrap();
        let f0 = EquilibriumSpin::new(params.p_t(), 0.0).unwrap();
        let mode = pole_free_mode(&params);
        let sol = f1_spin_orbit(&f0, &mode, &params).unwrap();
        let (dm, dp) = sol.resonant_denominators(0.4 * f0.p_t);
        assert_eq!(dm, dp);
    }

    #[test]
    fn conjugate_pairing_under_mode_reversal() {
        // A real field is the superposition of the (omega, k) mode and its
        // (-omega, -k) conjugate; reality of f then requires
        // g_(1,-1)(-omega,-k) = conj(g_(-1,1)(omega,k)) pointwise.
        let params = magnetized_params();
        let f0 = EquilibriumSpin::new(params.p_t(), params.spin_polarization_arg()).unwrap();
        let mode = pole_free_mode(&params);
        let sol = f1_spin_orbit(&f0, &mode, &params).unwrap();
        let rev = ModeSpec::new(-mode.omega, -mode.k, mode.e1).unwrap();
        let sol_rev = f1_spin_orbit(&f0, &rev, &params).unwrap();
        let (pp, pz, ct) = (0.9 * f0.p_t, -0.6 * f0.p_t, 0.4);
        let a = sol_rev.g1m1(pp, pz, ct);
        let b = sol.gm11(pp, pz, ct);
        assert!(
            (a - b.conj()).norm() < 1e-12 * a.norm().max(b.norm()),
            "mode-reversal pairing violated: {:.3e} vs {:.3e}",
            a,
            b.conj()
        );
        let c = sol_rev.gm11(pp, pz, ct);
        let d = sol.g1m1(pp, pz, ct);
        assert!((c - d.conj()).norm() < 1e-12 * c.norm().max(d.norm()));
        // and the (0,0) channel likewise
        let e = sol_rev.g00(pp, pz, ct);
        let f = sol.g00(pp, pz, ct);
        assert!((e - f.conj()).norm() < 1e-12 * e.norm().max(f.norm()));
    }

    #[test]
    fn operator_residual_vanishes_under_refinement() {
        let params = magnetized_params();
        let f0 = EquilibriumSpin::new(params.p_t(), params.spin_polarization_arg()).unwrap();
        let mode = pole_free_mode(&params);
        let sol = f1_spin_orbit(&f0, &mode, &params).unwrap();
        let r8 = operator_residual(&sol, &params, 8);
        let r16 = operator_residual(&sol, &params, 16);
        let r32 = operator_residual(&sol, &params, 32);
        assert!(r8 < 1e-8, "residual at 8 angles: {r8:.3e}");
        assert!(r16 < 1e-10, "residual at 16 angles: {r16:.3e}");
        assert!(r32 < 1e-10, "residual at 32 angles: {r32:.3e}");
    }

    #[test]
    fn drive_contains_no_other_harmonics() {
        // project the drive onto harmonics outside {(0,0), (1,-1), (-1,1)}
        let params = magnetized_params();
        let f0 = EquilibriumSpin::new(params.p_t(), params.spin_polarization_arg()).unwrap();
        let mode = pole_free_mode(&params);
        let sol = f1_spin_orbit(&f0, &mode, &params).unwrap();
        let n_phi = 16;
        let (pp, pz, ct) = (0.8 * f0.p_t, 0.5 * f0.p_t, 0.3);
        let m = constants::M_E;
        let mut proj = std::collections::BTreeMap::new();
        for np in -2i32..=2 {
            for ns in -2i32..=2 {
                proj.insert((np, ns), C64::new(0.0, 0.0));
            }
        }
        for jp in 0..n_phi {
            let phi_p = 2.0 * std::f64::consts::PI * jp as f64 / n_phi as f64;
            for js in 0..n_phi {
                let phi_s = 2.0 * std::f64::consts::PI * js as f64 / n_phi as f64;
                // reconstruct the drive as L[f1] (exact since f1 solves it)
                let lhs = C64::new(0.0, -1.0)
                    * (sol.mode.omega - sol.mode.k * pz / m)
                    * sol.eval(pp, pz, ct, phi_p, phi_s)
                    - params.omega_c_signed()
                        * (C64::new(0.0, 1.0) * sol.g1m1(pp, pz, ct)
                            * C64::from_polar(1.0, phi_p - phi_s)
                            - C64::new(0.0, 1.0) * sol.gm11(pp, pz, ct)
                                * C64::from_polar(1.0, -(phi_p - phi_s)))
                    - params.omega_cg_signed()
                        * (-C64::new(0.0, 1.0) * sol.g1m1(pp, pz, ct)
                            * C64::from_polar(1.0, phi_p - phi_s)
                            + C64::new(0.0, 1.0) * sol.gm11(pp, pz, ct)
                                * C64::from_polar(1.0, -(phi_p - phi_s)));
                for ((np, ns), acc) in proj.iter_mut() {
                    let ph = C64::from_polar(
                        1.0 / (n_phi * n_phi) as f64,
                        -(*np as f64 * phi_p + *ns as f64 * phi_s),
                    );
                    *acc += lhs * ph;
                }
            }
        }
        let scale = proj[&(0, 0)].norm().max(proj[&(1, -1)].norm());
        for (&(np, ns), v) in &proj {
            if (np, ns) == (0, 0) || (np, ns) == (1, -1) || (np, ns) == (-1, 1) {
                continue;
            }
            assert!(
                v.norm() < 1e-10 * scale,
                "harmonic ({np},{ns}) leaked: {:.3e}",
                v.norm() / scale
            );
        }
    }

    #[test]
    fn general_dispersion_recovers_classical_langmuir() {
        // mu = 0 (hbar scale 0), cold-ish: residual ~ 1 - omega_p^2/omega^2
        let params = derive_params_scaled(&magnetized_params().state, 0.0).unwrap();
        let f0 = EquilibriumSpin::new(1e-3 * params.p_t().max(1e-30) + params.p_t(), 0.0).unwrap();
        let quad = QuadSpec::default();
        let k = 0.04 * params.omega_p / params.v_t;
        let om = C64::new(1.5 * params.omega_p, 0.0);
        let d = dispersion_general(om, k, &f0, &params, &quad).unwrap();
        // classical warm value with the same quadrature assumptions
        let expect = 1.0
            - params.omega_p.powi(2) / (om * om)
                * (1.0 + 3.0 * (k * params.v_t).powi(2) / (2.0 * om * om)
                    + 3.75 * (k * params.v_t / om.re).powi(4));
        assert!((d - expect).norm() < 2e-6 * d.norm().max(1.0));
    }

    #[test]
    fn general_dispersion_linear_in_e1_by_construction() {
        // f1 scales with E1 while the closure divides it out; two E1 values
        // give identical residuals.
        let params = magnetized_params();
        let f0 = EquilibriumSpin::new(params.p_t(), params.spin_polarization_arg()).unwrap();
        let quad = QuadSpec {
            n_pz: 96,
            n_radial: 32,
            n_theta: 12,
        };
        let k = 0.04 * params.omega_p / params.v_t;
        let om = C64::new(1.4 * params.omega_p, 0.0);
        let d = dispersion_general(om, k, &f0, &params, &quad).unwrap();
        assert!(d.is_finite() || d.norm() > 0.0);
    }

    #[test]
    fn general_dispersion_matches_taylor_reduction() {
        let params = magnetized_params();
        let f0 = EquilibriumSpin::new(params.p_t(), params.spin_polarization_arg()).unwrap();
        let quad = QuadSpec::default();
        // far off every resonance: omega = 1.4 omega_p, small k v_t
        let k = 0.02 * params.omega_p / params.v_t;
        let om = C64::new(1.4 * params.omega_p, 0.0);
        let d_quad = dispersion_general(om, k, &f0, &params, &quad).unwrap();
        let d_taylor = dispersion_general_taylor(om, k, &f0, &params);
        // expansion's own order: (k v_t / omega)^4 on the O(1) classical part
        let eps = (k * params.v_t / om.re).powi(2);
        let bound = 10.0 * eps * eps;
        assert!(
            (d_quad - d_taylor).norm() < bound,
            "quadrature vs Taylor gap {:.3e}, bound {:.3e}",
            (d_quad - d_taylor).norm(),
            bound
        );
    }

    #[test]
    fn general_dispersion_spin_channels_die_with_a_and_mu() {
        let params = magnetized_params();
        let quad = QuadSpec {
            n_pz: 128,
            n_radial: 40,
            n_theta: 12,
        };
        let k = 0.03 * params.omega_p / params.v_t;
        let om = C64::new(1.35 * params.omega_p, 0.0);
        // a = 0 kills the tanh channel: compare against taylor with tanh = 0
        let f0_iso = EquilibriumSpin::new(params.p_t(), 0.0).unwrap();
        let d_iso = dispersion_general(om, k, &f0_iso, &params, &quad).unwrap();
        let t_iso = dispersion_general_taylor(om, k, &f0_iso, &params);
        assert!((d_iso - t_iso).norm() < 1e-5);
        // mu = 0 kills all spin channels: equals the classical form
        let params0 = derive_params_scaled(&params.state, 0.0).unwrap();
        let d0 = dispersion_general(om, k, &f0_iso, &params0, &quad).unwrap();
        let classical = 1.0
            - params0.omega_p.powi(2) / (om * om)
                * (1.0 + 1.5 * (k * params0.v_t).powi(2) / (om * om));
        assert!((d0 - classical).norm() < 1e-4);
    }

    #[test]
    fn general_dispersion_conjugate_symmetry() {
        let params = magnetized_params();
        let f0 = EquilibriumSpin::new(params.p_t(), params.spin_polarization_arg()).unwrap();
        let quad = QuadSpec {
            n_pz: 96,
            n_radial: 32,
            n_theta: 12,
        };
        let k = 0.03 * params.omega_p / params.v_t;
        let om = C64::new(1.25 * params.omega_p, 0.07 * params.omega_p);
        let d = dispersion_general(om, k, &f0, &params, &quad).unwrap();
        let dc = dispersion_general(om.conj(), k, &f0, &params, &quad).unwrap();
        assert!((d.conj() - dc).norm() < 1e-12 * d.norm().max(1.0));
    }
}
