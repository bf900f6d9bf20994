//! Moment closures and conservation audits.
//!
//! Two layers live here:
//!
//! * dimensional moments of a [`DistributionField`] (free charge/current,
//!   magnetization, polarization, totals) under the measure conventions of
//!   [`crate::phasespace`];
//! * solver-unit audits over snapshot series from [`crate::kinetic`]:
//!   charge continuity `d rho/dt + dJ/dz` and the energy law. The audited
//!   energy is the exact invariant of the reduced model, which carries a
//!   field-gradient term `eta (dE/dz)^2 / 2` alongside `E^2/2` whenever
//!   the Darwin force is active; its flux picks up `eta (dE/dz) J`.
//!
//! Time derivatives in the audits use a centered five-point (fourth-order)
//! stencil so the residual converges at the same order as the RK4
//! integrator; endpoints are skipped.

use crate::constants;
use crate::error::{QkinError, Result};
use crate::kinetic::{charge_density, current_density, Snapshot, SolverConfig};
use crate::phasespace::DistributionField;
use crate::C64;
use ndarray::{Array1, Array2, IxDyn};

/// Charge/mass/moment context for dimensional moment evaluation.
#[derive(Debug, Clone, Copy)]
pub struct MomentScales {
    /// Charge (signed) [statC].
    pub q: f64,
    /// Mass [g].
    pub m: f64,
    /// Speed of light [cm/s].
    pub c: f64,
    /// Magnetic moment (signed) [erg/G].
    pub mu: f64,
}

impl MomentScales {
    pub fn electron(params: &crate::params::PlasmaParams) -> Self {
        Self {
            q: -constants::E_CHARGE,
            m: constants::M_E,
            c: constants::C,
            mu: params.mu,
        }
    }
}

/// z-profiles of a vector field.
#[derive(Debug, Clone)]
pub struct Vec3Field {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
    pub z: Array1<f64>,
}

impl Vec3Field {
    fn zeros(nz: usize) -> Self {
        Self {
            x: Array1::zeros(nz),
            y: Array1::zeros(nz),
            z: Array1::zeros(nz),
        }
    }
}

/// Moments of one distribution snapshot.
///
/// `j_t` as produced by [`compute_moments`] contains the free current plus
/// the resolvable curl of the magnetization (`-dM_y/dz`, `dM_x/dz`, `0`);
/// the `dP/dt` part needs a time series and is added by
/// [`add_polarization_current`].
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub rho_f: Array1<f64>,
    pub j_f: Vec3Field,
    pub magnetization: Vec3Field,
    pub polarization: Vec3Field,
    pub rho_t: Array1<f64>,
    pub j_t: Vec3Field,
    /// Energy density: field + kinetic + dipole.
    pub energy_density: Array1<f64>,
    /// Kinetic + dipole energy flux along z.
    pub energy_flux_z: Array1<f64>,
}

/// Spectral d/dz on a uniform periodic grid.
fn ddz_periodic(f: &Array1<f64>, length: f64) -> Array1<f64> {
    let n = f.len();
    let mut buf: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let base = 2.0 * std::f64::consts::PI / length;
    for (i, b) in buf.iter_mut().enumerate() {
        let m = if i <= n / 2 { i as isize } else { i as isize - n as isize };
        let k = if n % 2 == 0 && i == n / 2 { 0.0 } else { base * m as f64 };
        *b *= C64::new(0.0, k / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Array1::from_iter(buf.iter().map(|c| c.re))
}

/// Angular integral of `exp(i n phi_p + i n' phi_s)` against simple
/// azimuthal kernels; everything else vanishes for the retained harmonics.
fn angular_sin_phip_minus_phis(n: i32, np: i32) -> C64 {
    // int int sin(phi_p - phi_s) e^{i(n phi_p + n' phi_s)} = 2 pi^2 i n
    // restricted to n' = -n, |n| = 1
    if np == -n && n.abs() == 1 {
        C64::new(0.0, 2.0 * std::f64::consts::PI.powi(2) * n as f64)
    } else {
        C64::new(0.0, 0.0)
    }
}

/// Reduction over the momentum/spin axes with a kernel in
/// (p_z, p_perp, cos theta): returns the z-profile. The caller supplies
/// the angular factor per harmonic.
fn reduce_with_kernel<K, A>(f: &DistributionField, kernel: K, angular: A) -> Array1<f64>
where
    K: Fn(f64, f64, f64) -> f64,
    A: Fn(i32, i32) -> C64,
{
    let g = &f.grid;
    let pz_nodes = g.pz_nodes();
    let dpz = g.dpz();
    let mut out = Array1::zeros(g.nz);

    // (0,0) harmonic
    let a00 = angular(0, 0);
    if a00.norm() > 0.0 {
        for iz in 0..g.nz {
            let mut acc = 0.0;
            match (&g.pperp, &g.theta) {
                (None, None) => {
                    for (ip, &pv) in pz_nodes.iter().enumerate() {
                        acc += kernel(pv, 0.0, 0.0) * f.g00()[IxDyn(&[iz, ip])];
                    }
                }
                (Some(pp), None) => {
                    for (ip, &pv) in pz_nodes.iter().enumerate() {
                        for (ir, (&pr, &wr)) in pp.nodes.iter().zip(&pp.weights).enumerate() {
                            acc += kernel(pv, pr, 0.0) * f.g00()[IxDyn(&[iz, ip, ir])] * wr;
                        }
                    }
                }
                (None, Some(th)) => {
                    for (ip, &pv) in pz_nodes.iter().enumerate() {
                        for (it, (&ct, &wt)) in th.nodes.iter().zip(&th.weights).enumerate() {
                            acc += kernel(pv, 0.0, ct) * f.g00()[IxDyn(&[iz, ip, it])] * wt;
                        }
                    }
                }
                (Some(pp), Some(th)) => {
                    for (ip, &pv) in pz_nodes.iter().enumerate() {
                        for (ir, (&pr, &wr)) in pp.nodes.iter().zip(&pp.weights).enumerate() {
                            for (it, (&ct, &wt)) in th.nodes.iter().zip(&th.weights).enumerate() {
                                acc += kernel(pv, pr, ct)
                                    * f.g00()[IxDyn(&[iz, ip, ir, it])]
                                    * wr
                                    * wt;
                            }
                        }
                    }
                }
            }
            out[iz] += acc * dpz * a00.re;
        }
    }

    // retained complex harmonics
    for &key in f.grid.harmonics.iter() {
        if key == (0, 0) {
            continue;
        }
        let Some(arr) = f.harmonic(key) else { continue };
        let afac = angular(key.0, key.1);
        if afac.norm() == 0.0 {
            continue;
        }
        for iz in 0..g.nz {
            let mut acc = C64::new(0.0, 0.0);
            match (&g.pperp, &g.theta) {
                (Some(pp), Some(th)) => {
                    for (ip, &pv) in pz_nodes.iter().enumerate() {
                        for (ir, (&pr, &wr)) in pp.nodes.iter().zip(&pp.weights).enumerate() {
                            for (it, (&ct, &wt)) in th.nodes.iter().zip(&th.weights).enumerate() {
                                acc += arr[IxDyn(&[iz, ip, ir, it])]
                                    * (kernel(pv, pr, ct) * wr * wt);
                            }
                        }
                    }
                }
                _ => {
                    // harmonics other than (0,0) need both azimuths resolved
                }
            }
            out[iz] += (acc * afac).re * dpz;
        }
    }
    out
}

/// Computes the moment closure of one snapshot (dimensional units).
///
/// `e_z` is the longitudinal field profile, `b0` the static axial field.
pub fn compute_moments(
    f: &DistributionField,
    e_z: &Array1<f64>,
    b0: f64,
    scales: &MomentScales,
) -> Result<MomentSet> {
    let g = &f.grid;
    if e_z.len() != g.nz {
        return Err(QkinError::GridMismatch(format!(
            "E has {} nodes, grid has {}",
            e_z.len(),
            g.nz
        )));
    }
    let nz = g.nz;
    let two_pi = 2.0 * std::f64::consts::PI;
    // bare angular measures for phi-independent kernels
    let iso = |n: i32, np: i32| -> C64 {
        if n == 0 && np == 0 {
            let mut v = 1.0;
            if g.pperp.is_some() {
                v *= two_pi;
            }
            if g.theta.is_some() {
                v *= two_pi;
            }
            C64::new(v, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    };

    let rho_f = {
        let mut r = reduce_with_kernel(f, |_, _, _| 1.0, iso);
        r.mapv_inplace(|v| v * scales.q);
        r
    };

    // free current: q p_z/m moment (the E x s drift integrates to zero for
    // the retained harmonics since s_x, s_y carry (0, +-1))
    let j_fz = {
        let mut r = reduce_with_kernel(f, |pz, _, _| pz, iso);
        r.mapv_inplace(|v| v * scales.q / scales.m);
        r
    };
    let j_f = Vec3Field {
        z: j_fz,
        ..Vec3Field::zeros(nz)
    };

    // magnetization: 3 mu int s f; only M_z survives the retained set
    let m_z = {
        let mut r = reduce_with_kernel(f, |_, _, ct| ct, iso);
        r.mapv_inplace(|v| v * 3.0 * scales.mu);
        r
    };
    let magnetization = Vec3Field {
        z: m_z,
        ..Vec3Field::zeros(nz)
    };

    // polarization: -3 mu/(2 m c) int (s x p) f; only P_z survives,
    // carried by the (+-1, -+1) harmonics through sin(phi_p - phi_s)
    let p_z = {
        let mut r = reduce_with_kernel(
            f,
            |_pz, pperp, ct| pperp * (1.0 - ct * ct).max(0.0).sqrt(),
            angular_sin_phip_minus_phis,
        );
        r.mapv_inplace(|v| v * (-3.0 * scales.mu / (2.0 * scales.m * scales.c)));
        r
    };
    let polarization = Vec3Field {
        z: p_z,
        ..Vec3Field::zeros(nz)
    };

    // totals (dP/dt joins later from a series)
    let rho_t = &rho_f + &ddz_periodic(&polarization.z, g.length);
    let j_t = Vec3Field {
        x: &j_f.x - &ddz_periodic(&magnetization.y, g.length),
        y: &j_f.y + &ddz_periodic(&magnetization.x, g.length),
        z: j_f.z.clone(),
    };

    // energy density: (E^2 + B^2)/8 pi + int (p^2/2m - 3 mu s.B) f
    let kinetic = reduce_with_kernel(f, |pz, pperp, _| pz * pz + pperp * pperp, iso);
    let dipole = reduce_with_kernel(f, |_, _, ct| ct, iso);
    let mut energy_density = Array1::zeros(nz);
    for iz in 0..nz {
        energy_density[iz] = (e_z[iz] * e_z[iz] + b0 * b0) / (8.0 * std::f64::consts::PI)
            + kinetic[iz] / (2.0 * scales.m)
            - 3.0 * scales.mu * b0 * dipole[iz];
    }

    // energy flux along z: kinetic transport + dipole transport
    // (p^2/2m + 3 mu (B - (p x E)/2mc) . s) v_z with v_z = p_z/m
    let kin_flux = reduce_with_kernel(f, |pz, pperp, _| (pz * pz + pperp * pperp) * pz, iso);
    let dip_flux = reduce_with_kernel(f, |pz, _, ct| ct * pz, iso);
    // Thomas part of the dipole flux: -(3 mu/2mc) (p x E).s v_z with
    // (p x E).s = E_z p_perp sin t sin(phi_p - phi_s)
    let thomas_flux_kernel = reduce_with_kernel(
        f,
        |pz, pperp, ct| pperp * (1.0 - ct * ct).max(0.0).sqrt() * pz,
        angular_sin_phip_minus_phis,
    );
    let mut energy_flux_z = Array1::zeros(nz);
    for iz in 0..nz {
        energy_flux_z[iz] = kin_flux[iz] / (2.0 * scales.m * scales.m)
            + 3.0 * scales.mu * b0 * dip_flux[iz] / scales.m
            - 3.0 * scales.mu / (2.0 * scales.m * scales.c)
                * e_z[iz]
                * thomas_flux_kernel[iz]
                / scales.m;
    }

    Ok(MomentSet {
        rho_f,
        j_f,
        magnetization,
        polarization,
        rho_t,
        j_t,
        energy_density,
        energy_flux_z,
    })
}

/// Adds the polarization current `dP/dt` to `j_t` across a time series of
/// moment sets (centered differences inside, one-sided second order at the
/// ends).
pub fn add_polarization_current(sets: &mut [MomentSet], times: &[f64]) -> Result<()> {
    let n = sets.len();
    if n != times.len() || n < 3 {
        return Err(QkinError::TooFewSnapshots { needed: 3, got: n });
    }
    let dt = times[1] - times[0];
    let nz = sets[0].polarization.z.len();
    let mut dpdt: Vec<Array1<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut d = Array1::zeros(nz);
        for iz in 0..nz {
            d[iz] = if i == 0 {
                (-3.0 * sets[0].polarization.z[iz] + 4.0 * sets[1].polarization.z[iz]
                    - sets[2].polarization.z[iz])
                    / (2.0 * dt)
            } else if i == n - 1 {
                (3.0 * sets[n - 1].polarization.z[iz] - 4.0 * sets[n - 2].polarization.z[iz]
                    + sets[n - 3].polarization.z[iz])
                    / (2.0 * dt)
            } else {
                (sets[i + 1].polarization.z[iz] - sets[i - 1].polarization.z[iz]) / (2.0 * dt)
            };
        }
        dpdt.push(d);
    }
    for (s, d) in sets.iter_mut().zip(dpdt) {
        s.j_t.z = &s.j_t.z + &d;
    }
    Ok(())
}

/// Pointwise continuity residual `d rho/dt + dJ/dz` over a uniformly
/// sampled snapshot series, with a five-point fourth-order time stencil.
/// Returns the max norm and the residual field over (z, interior times).
pub fn continuity_residual(
    series: &[Snapshot],
    config: &SolverConfig,
) -> Result<(f64, Array2<f64>)> {
    if series.len() < 5 {
        return Err(QkinError::TooFewSnapshots {
            needed: 5,
            got: series.len(),
        });
    }
    let dt = series[1].time - series[0].time;
    for w in series.windows(2) {
        if ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt {
            return Err(QkinError::InvalidInput(
                "continuity audit needs uniform snapshot spacing".into(),
            ));
        }
    }
    let nz = config.nz;
    let dpz = config.dpz();
    let pz: Vec<f64> = (0..config.npz)
        .map(|j| -config.pmax + j as f64 * dpz)
        .collect();
    let rho: Vec<Array1<f64>> = series
        .iter()
        .map(|s| charge_density(&s.f, dpz, config.background_density))
        .collect();
    let jz: Vec<Array1<f64>> = series
        .iter()
        .map(|s| current_density(&s.f, &pz, dpz))
        .collect();

    let nt = series.len();
    let mut res = Array2::zeros((nz, nt - 4));
    let mut max_norm = 0.0_f64;
    for it in 2..nt - 2 {
        let djdz = ddz_periodic(&jz[it], config.length);
        for iz in 0..nz {
            let drho = (-rho[it + 2][iz] + 8.0 * rho[it + 1][iz] - 8.0 * rho[it - 1][iz]
                + rho[it - 2][iz])
                / (12.0 * dt);
            let r = drho + djdz[iz];
            res[(iz, it - 2)] = r;
            max_norm = max_norm.max(r.abs());
        }
    }
    Ok((max_norm, res))
}

/// Energy audit of a snapshot series in solver units. Returns the total
/// energy per time, the relative drift `max |W(t) - W(0)| / W(0)`, and the
/// worst pointwise flux imbalance `|dW/dt + dK/dz|` normalized by the
/// largest `|dW/dt|` over the series.
pub struct EnergyAudit {
    pub times: Vec<f64>,
    pub w_total: Vec<f64>,
    pub drift: f64,
    pub flux_imbalance: f64,
}

pub fn energy_audit(series: &[Snapshot], config: &SolverConfig) -> Result<EnergyAudit> {
    if series.len() < 5 {
        return Err(QkinError::TooFewSnapshots {
            needed: 5,
            got: series.len(),
        });
    }
    let eta = config.eta();
    let dz = config.dz();
    let dpz = config.dpz();
    let nz = config.nz;
    let pz: Vec<f64> = (0..config.npz)
        .map(|j| -config.pmax + j as f64 * dpz)
        .collect();

    // energy density and flux per snapshot
    let mut w_fields: Vec<Array1<f64>> = Vec::with_capacity(series.len());
    let mut k_fields: Vec<Array1<f64>> = Vec::with_capacity(series.len());
    let mut w_total = Vec::with_capacity(series.len());
    let mut times = Vec::with_capacity(series.len());
    for snap in series {
        let de = ddz_periodic(&snap.e_z, config.length);
        let j = current_density(&snap.f, &pz, dpz);
        let mut w = Array1::zeros(nz);
        let mut kf = Array1::zeros(nz);
        for iz in 0..nz {
            let mut kin = 0.0;
            let mut kin_flux = 0.0;
            for (ip, &p) in pz.iter().enumerate() {
                let f = snap.f[(iz, ip)];
                kin += 0.5 * p * p * f;
                kin_flux += 0.5 * p * p * p * f;
            }
            w[iz] = 0.5 * snap.e_z[iz] * snap.e_z[iz] + 0.5 * eta * de[iz] * de[iz]
                + kin * dpz;
            kf[iz] = kin_flux * dpz + eta * de[iz] * j[iz];
        }
        w_total.push(w.sum() * dz);
        times.push(snap.time);
        w_fields.push(w);
        k_fields.push(kf);
    }

    let w0 = w_total[0];
    let drift = w_total
        .iter()
        .map(|w| (w - w0).abs())
        .fold(0.0_f64, f64::max)
        / w0.abs().max(f64::MIN_POSITIVE);

    // pointwise flux balance on interior times
    let dt = times[1] - times[0];
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for it in 2..series.len() - 2 {
        let dkdz = ddz_periodic(&k_fields[it], config.length);
        for iz in 0..nz {
            let dwdt = (-w_fields[it + 2][iz] + 8.0 * w_fields[it + 1][iz]
                - 8.0 * w_fields[it - 1][iz]
                + w_fields[it - 2][iz])
                / (12.0 * dt);
            worst = worst.max((dwdt + dkdz[iz]).abs());
            scale = scale.max(dwdt.abs());
        }
    }
    Ok(EnergyAudit {
        times,
        w_total,
        drift,
        flux_imbalance: worst / scale.max(f64::MIN_POSITIVE),
    })
}
