//! Nonlinear electrostatic Vlasov-Poisson evolution in (z, p_z) with the
//! electric-field-gradient (Darwin) correction, plus mode measurement.
//!
//! Everything here is nondimensional: time in `1/omega_p`, length in
//! `c/omega_p`, momentum in `m c`, and the electric field as
//! `E_hat = q E / (m c omega_p)` (the charge sign is absorbed, so the
//! force term is `+E_hat d/dp`). In these units the system is
//!
//! `dF/dt + p dF/dz + (E - eta d2E/dz2) dF/dp = 0`,
//! `dE/dz = int F dp - n_background`,  `eta = eps_q^2 / 8`,
//!
//! with `eps_q = hbar omega_p / m c^2`. The exact energy invariant of this
//! system, including the field-gradient term, is
//!
//! `W = int dz [ E^2/2 + eta (dE/dz)^2/2 ] + int dz dp p^2 F / 2`.
//!
//! Spatial and momentum derivatives are Fourier-spectral; the momentum
//! grid is treated as periodic, which is exact to machine precision while
//! the distribution stays negligible at the cutoff (monitored, warned).

use crate::error::{QkinError, Result};
use crate::phasespace::{DistributionField, PhaseGrid};
use crate::C64;
use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Electrostatic field state on the periodic z grid plus the static
/// background field (inert in this reduced geometry; carried as metadata).
#[derive(Debug, Clone)]
pub struct FieldState {
    /// Normalized longitudinal field `q E / (m c omega_p)`.
    pub e_z: Array1<f64>,
    /// Static uniform field [G].
    pub b0: f64,
}

/// Run setup for the reduced solver, all in solver units.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub nz: usize,
    pub npz: usize,
    /// Domain length [c/omega_p]; usually `2 pi m / k` for mode m.
    pub length: f64,
    /// Timestep [1/omega_p].
    pub dt: f64,
    /// End time [1/omega_p].
    pub t_end: f64,
    /// Darwin term on/off.
    pub quantum: bool,
    /// Multiplier on hbar for limit studies.
    pub hbar_scale: f64,
    /// hbar omega_p / m c^2 of the physical state.
    pub eps_q: f64,
    /// Thermal speed v_t / c of the equilibrium.
    pub v_t: f64,
    /// Momentum cutoff [m c]; defaults to 6 m v_t.
    pub pmax: f64,
    /// Perturbation: spatial mode number and relative density amplitude.
    pub perturb_mode: usize,
    pub perturb_amplitude: f64,
    /// Neutralizing ion density [n_0].
    pub background_density: f64,
    /// Relativistic momentum correction p -> p (1 + p^2/2) in the
    /// advection speed; off by default and excluded from verification runs.
    pub mass_velocity_correction: bool,
    /// Steps between stored full snapshots (0 stores only first/last).
    pub snapshot_stride: usize,
}

impl SolverConfig {
    /// Config for one Langmuir mode: `k v_t / omega_p = k_vt`, density
    /// perturbation `amp` on mode 1.
    pub fn langmuir(nz: usize, npz: usize, v_t: f64, k_vt: f64, amp: f64) -> Self {
        let k = k_vt / v_t;
        Self {
            nz,
            npz,
            length: 2.0 * std::f64::consts::PI / k,
            dt: 0.02,
            t_end: 40.0 * 2.0 * std::f64::consts::PI,
            quantum: false,
            hbar_scale: 1.0,
            eps_q: 0.0,
            v_t,
            pmax: 6.0 * v_t,
            perturb_mode: 1,
            perturb_amplitude: amp,
            background_density: 1.0,
            mass_velocity_correction: false,
            snapshot_stride: 0,
        }
    }

    /// Effective Darwin coefficient `eta = (eps_q hbar_scale)^2 / 8`,
    /// zero when the quantum toggle is off.
    pub fn eta(&self) -> f64 {
        if self.quantum {
            let h = self.eps_q * self.hbar_scale;
            h * h / 8.0
        } else {
            0.0
        }
    }

    pub fn dz(&self) -> f64 {
        self.length / self.nz as f64
    }

    pub fn dpz(&self) -> f64 {
        2.0 * self.pmax / self.npz as f64
    }

    /// Wavenumber of the perturbed mode.
    pub fn k_mode(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.perturb_mode as f64 / self.length
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz < 4 || self.npz < 8 {
            return Err(QkinError::InvalidInput("grid too small".into()));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !(self.length > 0.0) || !(self.pmax > 0.0) {
            return Err(QkinError::InvalidInput(
                "dt, t_end, length, pmax must be positive".into(),
            ));
        }
        if self.perturb_amplitude.abs() >= 0.5 {
            return Err(QkinError::InvalidInput(
                "perturbation amplitude must stay well below the background".into(),
            ));
        }
        let vmax = if self.mass_velocity_correction {
            self.pmax * (1.0 + 0.5 * self.pmax * self.pmax)
        } else {
            self.pmax
        };
        let ratio = self.dt * vmax / self.dz();
        if ratio >= 1.0 {
            return Err(QkinError::CflViolation { ratio });
        }
        Ok(())
    }
}

/// Stored state of one instant of a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    /// F(z, p) [nz x npz].
    pub f: Array2<f64>,
    pub e_z: Array1<f64>,
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SolverConfig,
    /// Time at every step (including t = 0).
    pub times: Vec<f64>,
    /// Complex amplitude of the perturbed mode of E at every step.
    pub mode_series: Vec<C64>,
    pub snapshots: Vec<Snapshot>,
    pub warnings: Vec<String>,
}

/// Spectral workspace: cached FFT plans and wavenumber tables.
struct Spectral {
    nz: usize,
    npz: usize,
    kz: Vec<f64>,
    kp: Vec<f64>,
    fft_z: Arc<dyn Fft<f64>>,
    ifft_z: Arc<dyn Fft<f64>>,
    fft_p: Arc<dyn Fft<f64>>,
    ifft_p: Arc<dyn Fft<f64>>,
    buf_z: Vec<C64>,
    buf_p: Vec<C64>,
}

fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as isize } else { i as isize - n as isize };
            base * m as f64
        })
        .collect()
}

impl Spectral {
    fn new(cfg: &SolverConfig) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nz: cfg.nz,
            npz: cfg.npz,
            kz: wavenumbers(cfg.nz, cfg.length),
            kp: wavenumbers(cfg.npz, 2.0 * cfg.pmax),
            fft_z: planner.plan_fft_forward(cfg.nz),
            ifft_z: planner.plan_fft_inverse(cfg.nz),
            fft_p: planner.plan_fft_forward(cfg.npz),
            ifft_p: planner.plan_fft_inverse(cfg.npz),
            buf_z: vec![C64::new(0.0, 0.0); cfg.nz],
            buf_p: vec![C64::new(0.0, 0.0); cfg.npz],
        }
    }

    /// d/dz of every momentum column of `f`, written into `out`.
    fn ddz(&mut self, f: &Array2<f64>, out: &mut Array2<f64>) {
        let n = self.nz as f64;
        for ip in 0..self.npz {
            for iz in 0..self.nz {
                self.buf_z[iz] = C64::new(f[(iz, ip)], 0.0);
            }
            self.fft_z.process(&mut self.buf_z);
            for (iz, b) in self.buf_z.iter_mut().enumerate() {
                // zero the Nyquist mode of odd derivatives
                let k = if self.nz % 2 == 0 && iz == self.nz / 2 {
                    0.0
                } else {
                    self.kz[iz]
                };
                *b *= C64::new(0.0, k / n);
            }
            self.ifft_z.process(&mut self.buf_z);
            for iz in 0..self.nz {
                out[(iz, ip)] = self.buf_z[iz].re;
            }
        }
    }

    /// d/dp of every spatial row of `f`, written into `out`.
    fn ddp(&mut self, f: &Array2<f64>, out: &mut Array2<f64>) {
        let n = self.npz as f64;
        for iz in 0..self.nz {
            for ip in 0..self.npz {
                self.buf_p[ip] = C64::new(f[(iz, ip)], 0.0);
            }
            self.fft_p.process(&mut self.buf_p);
            for (ip, b) in self.buf_p.iter_mut().enumerate() {
                let k = if self.npz % 2 == 0 && ip == self.npz / 2 {
                    0.0
                } else {
                    self.kp[ip]
                };
                *b *= C64::new(0.0, k / n);
            }
            self.ifft_p.process(&mut self.buf_p);
            for ip in 0..self.npz {
                out[(iz, ip)] = self.buf_p[ip].re;
            }
        }
    }

    /// d/dz of a 1D periodic field.
    fn ddz_1d(&mut self, f: &Array1<f64>) -> Array1<f64> {
        let n = self.nz as f64;
        for iz in 0..self.nz {
            self.buf_z[iz] = C64::new(f[iz], 0.0);
        }
        self.fft_z.process(&mut self.buf_z);
        for (iz, b) in self.buf_z.iter_mut().enumerate() {
            let k = if self.nz % 2 == 0 && iz == self.nz / 2 {
                0.0
            } else {
                self.kz[iz]
            };
            *b *= C64::new(0.0, k / n);
        }
        self.ifft_z.process(&mut self.buf_z);
        Array1::from_iter(self.buf_z.iter().map(|c| c.re))
    }

    /// Solves `dE/dz = rho` on the periodic domain in the zero-mean gauge;
    /// also returns `d2E/dz2` (which is `d rho/dz` spectrally).
    fn poisson(&mut self, rho: &Array1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let n = self.nz as f64;
        let mean: f64 = rho.iter().sum::<f64>() / n;
        let scale = rho.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if mean.abs() > 1e-8 * scale.max(1e-30) && mean.abs() > 1e-14 {
            return Err(QkinError::NetCharge { mean });
        }
        for iz in 0..self.nz {
            self.buf_z[iz] = C64::new(rho[iz], 0.0);
        }
        self.fft_z.process(&mut self.buf_z);
        let mut e_hat = self.buf_z.clone();
        let mut de_hat = self.buf_z.clone();
        for iz in 0..self.nz {
            let k = self.kz[iz];
            if iz == 0 {
                e_hat[0] = C64::new(0.0, 0.0);
                de_hat[0] = C64::new(0.0, 0.0);
            } else {
                let kk = if self.nz % 2 == 0 && iz == self.nz / 2 {
                    // Nyquist: E would be imaginary; drop for the gradient,
                    // keep rho's Nyquist in dE/dz = rho identically.
                    0.0
                } else {
                    k
                };
                if kk == 0.0 {
                    e_hat[iz] = C64::new(0.0, 0.0);
                } else {
                    e_hat[iz] /= C64::new(0.0, kk);
                }
                de_hat[iz] *= C64::new(0.0, kk / 1.0); // d(rho)/dz hat (pre-normalized below)
            }
        }
        self.buf_z.copy_from_slice(&e_hat);
        for b in self.buf_z.iter_mut() {
            *b /= n;
        }
        self.ifft_z.process(&mut self.buf_z);
        let e = Array1::from_iter(self.buf_z.iter().map(|c| c.re));
        self.buf_z.copy_from_slice(&de_hat);
        for b in self.buf_z.iter_mut() {
            *b /= n;
        }
        self.ifft_z.process(&mut self.buf_z);
        let d2e = Array1::from_iter(self.buf_z.iter().map(|c| c.re));
        Ok((e, d2e))
    }
}

/// Density `int F dp` minus the neutralizing background.
pub fn charge_density(f: &Array2<f64>, dpz: f64, background: f64) -> Array1<f64> {
    let (nz, npz) = f.dim();
    let mut rho = Array1::zeros(nz);
    for iz in 0..nz {
        let mut acc = 0.0;
        for ip in 0..npz {
            acc += f[(iz, ip)];
        }
        rho[iz] = acc * dpz - background;
    }
    rho
}

/// Current density `int p F dp`.
pub fn current_density(f: &Array2<f64>, pz: &[f64], dpz: f64) -> Array1<f64> {
    let (nz, npz) = f.dim();
    let mut j = Array1::zeros(nz);
    for iz in 0..nz {
        let mut acc = 0.0;
        for ip in 0..npz {
            acc += pz[ip] * f[(iz, ip)];
        }
        j[iz] = acc * dpz;
    }
    j
}

/// The semi-discrete right-hand side
/// `dF/dt = -p dF/dz - (E - eta d2E/dz2) dF/dp`
/// with the field solved self-consistently from `f`.
/// Standalone entry point; [`run`] uses the same internals with reused
/// buffers.
pub fn rhs_1d(f: &DistributionField, field: &FieldState, config: &SolverConfig) -> Result<DistributionField> {
    let grid = &f.grid;
    if grid.nz != config.nz || grid.npz != config.npz {
        return Err(QkinError::GridMismatch(format!(
            "field grid {}x{} vs config {}x{}",
            grid.nz, grid.npz, config.nz, config.npz
        )));
    }
    if field.e_z.len() != config.nz {
        return Err(QkinError::GridMismatch("E grid size mismatch".into()));
    }
    let f2 = g00_as_2d(f)?;
    let mut ws = Spectral::new(config);
    let pz = grid.pz_nodes();
    let mut out = Array2::zeros((config.nz, config.npz));
    rhs_into(&f2, &pz, config, &mut ws, &mut out, Some(&field.e_z))?;
    let mut arr = ArrayD::zeros(IxDyn(&grid.shape()));
    for ((iz, ip), v) in out.indexed_iter() {
        arr[IxDyn(&[iz, ip])] = *v;
    }
    DistributionField::from_g00(grid.clone(), arr, f.time)
}

fn g00_as_2d(f: &DistributionField) -> Result<Array2<f64>> {
    let grid = &f.grid;
    if grid.pperp.is_some() || grid.theta.is_some() {
        return Err(QkinError::GridMismatch(
            "reduced solver needs a (z, p_z) grid".into(),
        ));
    }
    let mut out = Array2::zeros((grid.nz, grid.npz));
    for iz in 0..grid.nz {
        for ip in 0..grid.npz {
            out[(iz, ip)] = f.g00()[IxDyn(&[iz, ip])];
        }
    }
    Ok(out)
}

/// Core rhs: if `e_override` is given it is used as the field (for the
/// public [`rhs_1d`]); otherwise the field is refreshed from `f`.
fn rhs_into(
    f: &Array2<f64>,
    pz: &[f64],
    cfg: &SolverConfig,
    ws: &mut Spectral,
    out: &mut Array2<f64>,
    e_override: Option<&Array1<f64>>,
) -> Result<()> {
    let eta = cfg.eta();
    let (e, d2e) = match e_override {
        Some(e) => {
            let d2 = {
                let de = ws.ddz_1d(e);
                ws.ddz_1d(&de)
            };
            (e.clone(), d2)
        }
        None => {
            let rho = charge_density(f, cfg.dpz(), cfg.background_density);
            ws.poisson(&rho)?
        }
    };
    // force per z node; the quantum branch is skipped entirely when off
    let mut force = Array1::zeros(cfg.nz);
    if eta != 0.0 {
        for iz in 0..cfg.nz {
            force[iz] = e[iz] - eta * d2e[iz];
        }
    } else {
        force.assign(&e);
    }
    let mut dfdz = Array2::zeros((cfg.nz, cfg.npz));
    ws.ddz(f, &mut dfdz);
    let mut dfdp = Array2::zeros((cfg.nz, cfg.npz));
    ws.ddp(f, &mut dfdp);
    for iz in 0..cfg.nz {
        for ip in 0..cfg.npz {
            let v = if cfg.mass_velocity_correction {
                pz[ip] * (1.0 + 0.5 * pz[ip] * pz[ip])
            } else {
                pz[ip]
            };
            out[(iz, ip)] = -v * dfdz[(iz, ip)] - force[iz] * dfdp[(iz, ip)];
        }
    }
    Ok(())
}

/// Solves the Poisson equation for a reduced snapshot in the zero-mean
/// gauge: `dE/dz = int F dp - background`.
pub fn poisson_1d(rho: &Array1<f64>, length: f64) -> Result<Array1<f64>> {
    let nz = rho.len();
    let cfg = SolverConfig {
        nz,
        npz: 8,
        length,
        dt: 1e-3,
        t_end: 1.0,
        quantum: false,
        hbar_scale: 1.0,
        eps_q: 0.0,
        v_t: 1e-2,
        pmax: 6e-2,
        perturb_mode: 1,
        perturb_amplitude: 0.0,
        background_density: 1.0,
        mass_velocity_correction: false,
        snapshot_stride: 0,
    };
    let mut ws = Spectral::new(&cfg);
    Ok(ws.poisson(rho)?.0)
}

/// Advances one RK4 step and refreshes the field from the new state.
pub fn advance(
    f: &DistributionField,
    _field: &FieldState,
    config: &SolverConfig,
) -> Result<(DistributionField, FieldState)> {
    config.validate()?;
    let grid = &f.grid;
    let f2 = g00_as_2d(f)?;
    let mut ws = Spectral::new(config);
    let pz = grid.pz_nodes();
    let stepper = |state: &Array2<f64>, ws: &mut Spectral| -> Result<Array2<f64>> {
        rk4_step(state, &pz, config, ws)
    };
    let next = stepper(&f2, &mut ws)?;
    let rho = charge_density(&next, config.dpz(), config.background_density);
    let (e, _) = ws.poisson(&rho)?;
    let mut arr = ArrayD::zeros(IxDyn(&grid.shape()));
    for ((iz, ip), v) in next.indexed_iter() {
        arr[IxDyn(&[iz, ip])] = *v;
    }
    let fd = DistributionField::from_g00(grid.clone(), arr, f.time + config.dt)?;
    Ok((
        fd,
        FieldState {
            e_z: e,
            b0: _field.b0,
        },
    ))
}

fn rk4_step(
    f: &Array2<f64>,
    pz: &[f64],
    cfg: &SolverConfig,
    ws: &mut Spectral,
) -> Result<Array2<f64>> {
    let dt = cfg.dt;
    let dim = f.raw_dim();
    let mut k1 = Array2::zeros(dim);
    rhs_into(f, pz, cfg, ws, &mut k1, None)?;
    let mut stage = f + &(&k1 * (dt / 2.0));
    let mut k2 = Array2::zeros(dim);
    rhs_into(&stage, pz, cfg, ws, &mut k2, None)?;
    stage = f + &(&k2 * (dt / 2.0));
    let mut k3 = Array2::zeros(dim);
    rhs_into(&stage, pz, cfg, ws, &mut k3, None)?;
    stage = f + &(&k3 * dt);
    let mut k4 = Array2::zeros(dim);
    rhs_into(&stage, pz, cfg, ws, &mut k4, None)?;
    Ok(f + &(&(&(&k1 + &(&k2 * 2.0)) + &(&(&k3 * 2.0) + &k4)) * (dt / 6.0)))
}

/// Full run: initializes `F = f_hat0(p) (1 + amp cos(k z))`, advances to
/// `t_end`, records the perturbed-mode field amplitude every step and full
/// snapshots at the configured stride.
pub fn run(config: &SolverConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut ws = Spectral::new(config);
    let dz = config.dz();
    let dpz = config.dpz();
    let pz: Vec<f64> = (0..config.npz)
        .map(|j| -config.pmax + j as f64 * dpz)
        .collect();

    // initial state; the equilibrium is renormalized on the discrete grid
    // so the truncated tail cannot break charge neutrality
    let eq = crate::equilibrium::Equilibrium1D::new(config.v_t)?;
    let discrete_norm: f64 = pz.iter().map(|&p| eq.value(p)).sum::<f64>() * dpz;
    let k = config.k_mode();
    let mut f = Array2::zeros((config.nz, config.npz));
    for iz in 0..config.nz {
        let z = iz as f64 * dz;
        let modulation =
            (1.0 + config.perturb_amplitude * (k * z).cos()) * config.background_density
                / discrete_norm;
        for ip in 0..config.npz {
            f[(iz, ip)] = modulation * eq.value(pz[ip]);
        }
    }

    let n_steps = (config.t_end / config.dt).round() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut mode_series = Vec::with_capacity(n_steps + 1);
    let mut snapshots = Vec::new();
    let mut warnings = Vec::new();

    let project = |e: &Array1<f64>| -> C64 {
        let nz = e.len();
        let mut acc = C64::new(0.0, 0.0);
        for iz in 0..nz {
            let phase = -2.0 * std::f64::consts::PI * (config.perturb_mode * iz) as f64 / nz as f64;
            acc += C64::from_polar(e[iz] / nz as f64, phase);
        }
        acc
    };

    let mut boundary_warned = false;
    let check_boundary = |f: &Array2<f64>, warnings: &mut Vec<String>, t: f64, flag: &mut bool| {
        if *flag {
            return;
        }
        let peak = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut edge = 0.0_f64;
        for iz in 0..config.nz {
            edge = edge.max(f[(iz, 0)].abs());
            edge = edge.max(f[(iz, config.npz - 1)].abs());
        }
        if edge > 1e-14 * peak {
            warnings.push(format!(
                "distribution reaches the momentum cutoff at t = {t:.3e} (edge/peak = {:.2e}); enlarge pmax",
                edge / peak
            ));
            *flag = true;
        }
    };

    let store = |f: &Array2<f64>, e: &Array1<f64>, t: f64, snaps: &mut Vec<Snapshot>| {
        snaps.push(Snapshot {
            time: t,
            f: f.clone(),
            e_z: e.clone(),
        });
    };

    let rho0 = charge_density(&f, dpz, config.background_density);
    let (mut e, _) = ws.poisson(&rho0)?;
    times.push(0.0);
    mode_series.push(project(&e));
    store(&f, &e, 0.0, &mut snapshots);
    check_boundary(&f, &mut warnings, 0.0, &mut boundary_warned);

    for step in 1..=n_steps {
        f = rk4_step(&f, &pz, config, &mut ws)?;
        let t = step as f64 * config.dt;
        let rho = charge_density(&f, dpz, config.background_density);
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(QkinError::NanDetected { step, time: t });
        }
        let (e_new, _) = ws.poisson(&rho)?;
        e = e_new;
        times.push(t);
        mode_series.push(project(&e));
        if config.snapshot_stride > 0 && step % config.snapshot_stride == 0 {
            store(&f, &e, t, &mut snapshots);
        }
        if step % 256 == 0 {
            check_boundary(&f, &mut warnings, t, &mut boundary_warned);
        }
    }
    check_boundary(&f, &mut warnings, config.t_end, &mut boundary_warned);
    if config.snapshot_stride == 0 || n_steps % config.snapshot_stride != 0 {
        store(&f, &e, n_steps as f64 * config.dt, &mut snapshots);
    }

    Ok(RunOutput {
        config: config.clone(),
        times,
        mode_series,
        snapshots,
        warnings,
    })
}

/// Result of a two-exponential mode fit.
#[derive(Debug, Clone, Copy)]
pub struct ModeFit {
    /// Oscillation frequency [omega_p] (positive representative).
    pub omega: f64,
    /// Growth rate [omega_p].
    pub gamma: f64,
    /// Least-squares frequency uncertainty estimate.
    pub uncertainty: f64,
    /// Relative rms misfit of the two-mode model.
    pub residual: f64,
}

/// Fits `y(t) = A e^{(gamma - i omega) t} + B e^{(gamma + i omega) t}` to a
/// uniformly sampled complex series by linear prediction (order-2 Prony),
/// then recovers amplitudes and a residual-based uncertainty. The window
/// `skip_fraction` drops the leading transient.
pub fn fit_two_mode(times: &[f64], series: &[C64], skip_fraction: f64) -> Result<ModeFit> {
    if times.len() != series.len() || times.len() < 16 {
        return Err(QkinError::InsufficientSignal(
            "need at least 16 uniform samples".into(),
        ));
    }
    let start = ((times.len() as f64) * skip_fraction) as usize;
    let y = &series[start..];
    let t = &times[start..];
    let n = y.len();
    if n < 16 {
        return Err(QkinError::InsufficientSignal("fit window too short".into()));
    }
    let dt = t[1] - t[0];
    let scale = y.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return Err(QkinError::InsufficientSignal("signal is identically zero".into()));
    }

    // least squares for y[i+2] = c1 y[i+1] + c0 y[i]
    let mut a11 = C64::new(0.0, 0.0);
    let mut a12 = C64::new(0.0, 0.0);
    let mut a22 = C64::new(0.0, 0.0);
    let mut b1 = C64::new(0.0, 0.0);
    let mut b2 = C64::new(0.0, 0.0);
    for i in 0..n - 2 {
        let (y0, y1, y2) = (y[i], y[i + 1], y[i + 2]);
        a11 += y1.conj() * y1;
        a12 += y1.conj() * y0;
        a22 += y0.conj() * y0;
        b1 += y1.conj() * y2;
        b2 += y0.conj() * y2;
    }
    let det = a11 * a22 - a12 * a12.conj();
    let (z1, z2) = if det.norm() > 1e-10 * (a11 * a22).norm() {
        let c1 = (b1 * a22 - a12 * b2) / det;
        let c0 = (a11 * b2 - a12.conj() * b1) / det;
        // roots of z^2 - c1 z - c0
        let disc = (c1 * c1 + 4.0 * c0).sqrt();
        ((c1 + disc) / 2.0, (c1 - disc) / 2.0)
    } else {
        // single-exponential signal: order-1 linear prediction
        let mut num = C64::new(0.0, 0.0);
        let mut den = C64::new(0.0, 0.0);
        for i in 0..n - 1 {
            num += y[i].conj() * y[i + 1];
            den += y[i].conj() * y[i];
        }
        let z = num / den;
        (z, z)
    };
    let freq = |z: C64| -> (f64, f64) {
        let omega = z.arg().abs() / dt;
        let gamma = z.norm().ln() / dt;
        (omega, gamma)
    };
    let (w1, g1) = freq(z1);
    let (w2, g2) = freq(z2);
    let omega = 0.5 * (w1 + w2);
    let gamma = 0.5 * (g1 + g2);

    // amplitudes by linear least squares
    let degenerate = (z1 - z2).norm() < 1e-9 * z1.norm().max(z2.norm());
    let mut m11 = C64::new(0.0, 0.0);
    let mut m12 = C64::new(0.0, 0.0);
    let mut m22 = C64::new(0.0, 0.0);
    let mut r1 = C64::new(0.0, 0.0);
    let mut r2 = C64::new(0.0, 0.0);
    let mut pow1 = C64::new(1.0, 0.0);
    let mut pow2 = C64::new(1.0, 0.0);
    let mut basis = Vec::with_capacity(n);
    for i in 0..n {
        basis.push((pow1, pow2));
        m11 += pow1.conj() * pow1;
        m12 += pow1.conj() * pow2;
        m22 += pow2.conj() * pow2;
        r1 += pow1.conj() * y[i];
        r2 += pow2.conj() * y[i];
        pow1 *= z1;
        pow2 *= z2;
    }
    let (amp1, amp2) = if degenerate {
        (r1 / m11, C64::new(0.0, 0.0))
    } else {
        let detm = m11 * m22 - m12 * m12.conj();
        (
            (r1 * m22 - m12 * r2) / detm,
            (m11 * r2 - m12.conj() * r1) / detm,
        )
    };

    let mut ss = 0.0;
    let mut sy = 0.0;
    let mut d_domega_sq = 0.0;
    for (i, &(p1, p2)) in basis.iter().enumerate() {
        let model = amp1 * p1 + amp2 * p2;
        ss += (y[i] - model).norm_sqr();
        sy += y[i].norm_sqr();
        // d model / d omega = -i t A z1^t + i t B z2^t (per unit omega)
        let ti = (i as f64) * dt;
        let dm = C64::new(0.0, -ti) * amp1 * p1 + C64::new(0.0, ti) * amp2 * p2;
        d_domega_sq += dm.norm_sqr();
    }
    let residual = (ss / sy).sqrt();
    let dof = (2 * n).saturating_sub(6).max(1) as f64;
    let sigma_omega = (ss / dof).sqrt() / d_domega_sq.sqrt().max(f64::MIN_POSITIVE);

    if residual > 0.5 {
        return Err(QkinError::InsufficientSignal(format!(
            "two-mode model misfit {residual:.2e}"
        )));
    }
    Ok(ModeFit {
        omega,
        gamma,
        uncertainty: sigma_omega,
        residual,
    })
}

/// Fits the recorded mode amplitude of a run; flags runs shorter than ten
/// oscillation periods of the fitted frequency.
pub fn measure_mode(output: &RunOutput) -> Result<ModeFit> {
    let fit = fit_two_mode(&output.times, &output.mode_series, 0.4)?;
    let span = output.times.last().unwrap() - output.times.first().unwrap();
    if fit.omega * span < 10.0 * 2.0 * std::f64::consts::PI {
        return Err(QkinError::InsufficientSignal(format!(
            "run covers only {:.1} oscillation periods (need >= 10)",
            fit.omega * span / (2.0 * std::f64::consts::PI)
        )));
    }
    Ok(fit)
}

/// Mode amplitude (|E_k|) averaged over the fit window; used by linearity
/// checks.
pub fn mean_mode_amplitude(output: &RunOutput, skip_fraction: f64) -> f64 {
    let start = (output.mode_series.len() as f64 * skip_fraction) as usize;
    let tail = &output.mode_series[start..];
    tail.iter().map(|c| c.norm()).sum::<f64>() / tail.len() as f64
}

/// Builds a reduced [`DistributionField`] + [`FieldState`] pair from a
/// snapshot (for the moment and marginal machinery).
pub fn snapshot_to_field(
    snap: &Snapshot,
    config: &SolverConfig,
) -> Result<(DistributionField, FieldState)> {
    let grid = PhaseGrid::reduced_1d(config.nz, config.length, config.npz, config.pmax)?;
    let mut arr = ArrayD::zeros(IxDyn(&grid.shape()));
    for ((iz, ip), v) in snap.f.indexed_iter() {
        arr[IxDyn(&[iz, ip])] = *v;
    }
    let f = DistributionField::from_g00(grid, arr, snap.time)?;
    Ok((
        f,
        FieldState {
            e_z: snap.e_z.clone(),
            b0: 0.0,
        },
    ))
}
