//! Serialization: binary snapshot layout, CSV writers and residual
//! landscape dumps.
//!
//! # Binary field layout (version 1, little endian)
//!
//! ```text
//! magic    b"QKSN"
//! version  u32
//! nz, npz  u32, u32
//! n_pperp, n_theta  u32, u32      (0 when the axis is absent)
//! length, pmax      f64, f64
//! time              f64
//! n_harmonics       u32           (complex harmonics beyond (0,0))
//! pperp nodes+weights  2 * n_pperp * f64
//! theta nodes+weights  2 * n_theta * f64
//! g00 payload          prod(shape) * f64, row-major [z, pz, pperp, theta]
//! per harmonic: n i32, n' i32, payload re/im interleaved f64
//! ```
//!
//! # Run-series layout (version 1, little endian)
//!
//! ```text
//! magic    b"QKSR"
//! version  u32
//! nz, npz  u32, u32
//! length, pmax, v_t, eta, background  5 * f64
//! n_snapshots u32
//! per snapshot: time f64, e_z [nz]*f64, f [nz*npz]*f64 (z-major)
//! ```

use crate::dispersion::BranchPoint;
use crate::error::{QkinError, Result};
use crate::kinetic::{Snapshot, SolverConfig};
use crate::phasespace::{DistributionField, PhaseGrid, WeightedAxis};
use crate::C64;
use ndarray::{Array1, Array2, ArrayD, IxDyn};
use std::io::{Read, Write};

const FIELD_MAGIC: &[u8; 4] = b"QKSN";
const RUN_MAGIC: &[u8; 4] = b"QKSR";
const VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_i32<W: Write>(w: &mut W, v: i32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32<R: Read>(r: &mut R) -> Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Writes a [`DistributionField`] in the documented binary layout.
pub fn write_field<W: Write>(field: &DistributionField, mut out: W) -> Result<()> {
    let g = &field.grid;
    out.write_all(FIELD_MAGIC)?;
    write_u32(&mut out, VERSION)?;
    write_u32(&mut out, g.nz as u32)?;
    write_u32(&mut out, g.npz as u32)?;
    let n_pperp = g.pperp.as_ref().map_or(0, |a| a.nodes.len());
    let n_theta = g.theta.as_ref().map_or(0, |a| a.nodes.len());
    write_u32(&mut out, n_pperp as u32)?;
    write_u32(&mut out, n_theta as u32)?;
    write_f64(&mut out, g.length)?;
    write_f64(&mut out, g.pmax)?;
    write_f64(&mut out, field.time)?;
    let harmonics: Vec<(i32, i32)> = field.harmonic_keys().cloned().collect();
    write_u32(&mut out, harmonics.len() as u32)?;
    for axis in [&g.pperp, &g.theta].into_iter().flatten() {
        for v in axis.nodes.iter().chain(axis.weights.iter()) {
            write_f64(&mut out, *v)?;
        }
    }
    for v in field.g00().iter() {
        write_f64(&mut out, *v)?;
    }
    for key in &harmonics {
        write_i32(&mut out, key.0)?;
        write_i32(&mut out, key.1)?;
        for v in field.harmonic(*key).unwrap().iter() {
            write_f64(&mut out, v.re)?;
            write_f64(&mut out, v.im)?;
        }
    }
    Ok(())
}

/// Reads a [`DistributionField`] written by [`write_field`].
pub fn read_field<R: Read>(mut input: R) -> Result<DistributionField> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(QkinError::InvalidInput("not a field snapshot file".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(QkinError::InvalidInput(format!(
            "unsupported snapshot version {version}"
        )));
    }
    let nz = read_u32(&mut input)? as usize;
    let npz = read_u32(&mut input)? as usize;
    let n_pperp = read_u32(&mut input)? as usize;
    let n_theta = read_u32(&mut input)? as usize;
    let length = read_f64(&mut input)?;
    let pmax = read_f64(&mut input)?;
    let time = read_f64(&mut input)?;
    let n_harm = read_u32(&mut input)? as usize;

    let mut grid = PhaseGrid::reduced_1d(nz, length, npz, pmax)?;
    let read_axis = |r: &mut R, n: usize| -> Result<WeightedAxis> {
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(read_f64(r)?);
        }
        for _ in 0..n {
            weights.push(read_f64(r)?);
        }
        Ok(WeightedAxis { nodes, weights })
    };
    if n_pperp > 0 {
        grid.pperp = Some(read_axis(&mut input, n_pperp)?);
    }
    if n_theta > 0 {
        grid.theta = Some(read_axis(&mut input, n_theta)?);
    }
    if n_pperp > 0 || n_theta > 0 {
        grid.harmonics = vec![(0, 0), (1, -1), (-1, 1)];
    }

    let shape = grid.shape();
    let count: usize = shape.iter().product();
    let mut g00 = ArrayD::zeros(IxDyn(&shape));
    for v in g00.iter_mut() {
        *v = read_f64(&mut input)?;
    }
    let _ = count;
    let mut field = DistributionField::from_g00(grid.clone(), g00, time)?;
    for _ in 0..n_harm {
        let n = read_i32(&mut input)?;
        let np = read_i32(&mut input)?;
        if !grid.harmonics.contains(&(n, np)) {
            grid.harmonics.push((n, np));
            field.grid.harmonics.push((n, np));
        }
        let mut arr = ArrayD::<C64>::zeros(IxDyn(&shape));
        for v in arr.iter_mut() {
            let re = read_f64(&mut input)?;
            let im = read_f64(&mut input)?;
            *v = C64::new(re, im);
        }
        field.set_harmonic((n, np), arr)?;
    }
    Ok(field)
}

/// Writes a run's snapshot series in the documented binary layout.
pub fn write_run_series<W: Write>(
    snapshots: &[Snapshot],
    config: &SolverConfig,
    mut out: W,
) -> Result<()> {
    out.write_all(RUN_MAGIC)?;
    write_u32(&mut out, VERSION)?;
    write_u32(&mut out, config.nz as u32)?;
    write_u32(&mut out, config.npz as u32)?;
    write_f64(&mut out, config.length)?;
    write_f64(&mut out, config.pmax)?;
    write_f64(&mut out, config.v_t)?;
    write_f64(&mut out, config.eta())?;
    write_f64(&mut out, config.background_density)?;
    write_u32(&mut out, snapshots.len() as u32)?;
    for s in snapshots {
        write_f64(&mut out, s.time)?;
        for v in s.e_z.iter() {
            write_f64(&mut out, *v)?;
        }
        for v in s.f.iter() {
            write_f64(&mut out, *v)?;
        }
    }
    Ok(())
}

/// A loaded run series: snapshots plus a config carrying the grid metadata
/// the audits need (dt and t_end are recovered from the snapshot times).
pub fn read_run_series<R: Read>(mut input: R) -> Result<(Vec<Snapshot>, SolverConfig)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != RUN_MAGIC {
        return Err(QkinError::InvalidInput("not a run series file".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(QkinError::InvalidInput(format!(
            "unsupported run series version {version}"
        )));
    }
    let nz = read_u32(&mut input)? as usize;
    let npz = read_u32(&mut input)? as usize;
    let length = read_f64(&mut input)?;
    let pmax = read_f64(&mut input)?;
    let v_t = read_f64(&mut input)?;
    let eta = read_f64(&mut input)?;
    let background = read_f64(&mut input)?;
    let n_snaps = read_u32(&mut input)? as usize;
    let mut snapshots = Vec::with_capacity(n_snaps);
    for _ in 0..n_snaps {
        let time = read_f64(&mut input)?;
        let mut e_z = Array1::zeros(nz);
        for v in e_z.iter_mut() {
            *v = read_f64(&mut input)?;
        }
        let mut f = Array2::zeros((nz, npz));
        for v in f.iter_mut() {
            *v = read_f64(&mut input)?;
        }
        snapshots.push(Snapshot { time, f, e_z });
    }
    let dt = if snapshots.len() >= 2 {
        snapshots[1].time - snapshots[0].time
    } else {
        1.0
    };
    let config = SolverConfig {
        nz,
        npz,
        length,
        dt,
        t_end: snapshots.last().map_or(1.0, |s| s.time.max(dt)),
        quantum: eta != 0.0,
        hbar_scale: 1.0,
        eps_q: (8.0 * eta).sqrt(),
        v_t,
        pmax,
        perturb_mode: 1,
        perturb_amplitude: 0.0,
        background_density: background,
        mass_velocity_correction: false,
        snapshot_stride: 1,
    };
    Ok((snapshots, config))
}

/// CSV of a reduced snapshot (small grids): columns `z,pz,f`.
pub fn write_snapshot_csv<W: Write>(snap: &Snapshot, config: &SolverConfig, mut out: W) -> Result<()> {
    writeln!(out, "z,pz,f")?;
    let dz = config.dz();
    let dpz = config.dpz();
    for iz in 0..config.nz {
        for ip in 0..config.npz {
            let z = iz as f64 * dz;
            let p = -config.pmax + ip as f64 * dpz;
            writeln!(out, "{z},{p},{}", snap.f[(iz, ip)])?;
        }
    }
    Ok(())
}

/// Branch table CSV: `k,re_omega,im_omega,residual,branch_id`.
pub fn write_branch_csv<W: Write>(table: &[BranchPoint], mut out: W) -> Result<()> {
    writeln!(out, "k,re_omega,im_omega,residual,branch_id")?;
    for p in table {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.k, p.omega.re, p.omega.im, p.residual, p.branch_id
        )?;
    }
    Ok(())
}

/// Mode time-series CSV: `t,re_Ek,im_Ek`.
pub fn write_mode_series_csv<W: Write>(times: &[f64], series: &[C64], mut out: W) -> Result<()> {
    writeln!(out, "t,re_Ek,im_Ek")?;
    for (t, v) in times.iter().zip(series) {
        writeln!(out, "{t},{},{}", v.re, v.im)?;
    }
    Ok(())
}

/// Audit CSV with the command-line column contract:
/// `t,W_total,drift,continuity_max`.
pub fn write_audit_csv<W: Write>(
    times: &[f64],
    w_total: &[f64],
    drift: f64,
    continuity_max: f64,
    mut out: W,
) -> Result<()> {
    writeln!(out, "t,W_total,drift,continuity_max")?;
    for (t, w) in times.iter().zip(w_total) {
        writeln!(out, "{t},{w},{drift},{continuity_max}")?;
    }
    Ok(())
}

/// Extended audit report CSV:
/// `t,W_total,drift,max_continuity_residual,max_flux_imbalance`.
pub fn write_audit_report_csv<W: Write>(
    times: &[f64],
    w_total: &[f64],
    drift: f64,
    continuity_max: f64,
    flux_imbalance: f64,
    mut out: W,
) -> Result<()> {
    writeln!(
        out,
        "t,W_total,drift,max_continuity_residual,max_flux_imbalance"
    )?;
    for (t, w) in times.iter().zip(w_total) {
        writeln!(out, "{t},{w},{drift},{continuity_max},{flux_imbalance}")?;
    }
    Ok(())
}

/// Residual landscape over a complex-omega rectangle:
/// `re_omega,im_omega,abs_residual`. Evaluation failures are recorded as
/// empty residual cells.
pub fn write_residual_landscape<W: Write, F>(
    re_range: (f64, f64),
    im_range: (f64, f64),
    n_re: usize,
    n_im: usize,
    mut eval: F,
    mut out: W,
) -> Result<()>
where
    F: FnMut(C64) -> Result<C64>,
{
    writeln!(out, "re_omega,im_omega,abs_residual")?;
    for i in 0..n_re {
        let re = re_range.0 + (re_range.1 - re_range.0) * i as f64 / (n_re - 1).max(1) as f64;
        for j in 0..n_im {
            let im = im_range.0 + (im_range.1 - im_range.0) * j as f64 / (n_im - 1).max(1) as f64;
            match eval(C64::new(re, im)) {
                Ok(v) => writeln!(out, "{re},{im},{}", v.norm())?,
                Err(_) => writeln!(out, "{re},{im},")?,
            }
        }
    }
    Ok(())
}
