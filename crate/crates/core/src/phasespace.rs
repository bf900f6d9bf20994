//! Reduced extended-phase-space grids, the scalar distribution field and
//! the kinematic velocity/spin relations.
//!
//! Geometry: 1D space `z` (uniform, periodic), momentum `p_z` on a
//! symmetric bounded grid, optional radial momentum `p_perp` and optional
//! spin polar angle `theta_s`. The azimuthal angles `(phi_p, phi_s)` are
//! truncated to an explicit harmonic set `H`; the field is
//!
//! `f = sum_(n,n') v_(n,n')(z, p_z, p_perp, theta) exp(i n phi_p + i n' phi_s)`
//!
//! with plain Fourier coefficients. Reality requires
//! `v_(-n,-n') = conj(v_(n,n'))` whenever both are retained.
//!
//! Measure conventions: axes that are absent have been integrated out of
//! the stored values. When `p_perp` is present, `d^3p = p_perp dp_perp
//! dphi_p dp_z` and phi_p integrals keep only the `n = 0` harmonics with a
//! factor `2 pi`; when `theta_s` is present, `d^2s = sin(theta) dtheta
//! dphi_s` works the same way in `n'`. The stored radial weights already
//! include the `p_perp` factor; the theta weights are Gauss-Legendre in
//! `cos(theta)`.

use crate::constants;
use crate::error::{QkinError, Result};
use crate::quadrature::GaussLegendre;
use crate::C64;
use ndarray::{ArrayD, Dimension, IxDyn};
use std::collections::BTreeMap;

/// Spin direction as spherical angles; unit length by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinVector {
    pub theta_s: f64,
    pub phi_s: f64,
}

impl SpinVector {
    pub fn new(theta_s: f64, phi_s: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta_s) || !phi_s.is_finite() {
            return Err(QkinError::InvalidInput(format!(
                "spin angles out of range: theta_s={theta_s}, phi_s={phi_s}"
            )));
        }
        Ok(Self { theta_s, phi_s })
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta_s.sin_cos();
        let (sp, cp) = self.phi_s.sin_cos();
        [st * cp, st * sp, ct]
    }
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Velocity from momentum, spin and electric field (Gaussian CGS):
/// `v = p/m + (3 mu / 2 m c) E x s`, with `mu` signed. Reduces to `p/m`
/// for `E = 0`.
pub fn velocity_of(p: [f64; 3], s: [f64; 3], e_field: [f64; 3], mu: f64) -> [f64; 3] {
    let m = constants::M_E;
    let coef = 3.0 * mu / (2.0 * m * constants::C);
    let exs = cross(e_field, s);
    [
        p[0] / m + coef * exs[0],
        p[1] / m + coef * exs[1],
        p[2] / m + coef * exs[2],
    ]
}

/// Spatial part of the spin four-vector for rest-frame spin `s` and
/// velocity `v`: `S = s + [gamma^2/(gamma+1)] (v.s) v / c^2`.
pub fn lab_frame_spin(s: [f64; 3], v: [f64; 3]) -> Result<[f64; 3]> {
    let beta2 = dot(v, v) / (constants::C * constants::C);
    if beta2 >= 1.0 {
        return Err(QkinError::InvalidInput(format!(
            "|v| must be below c, got |v|/c = {}",
            beta2.sqrt()
        )));
    }
    let gamma = 1.0 / (1.0 - beta2).sqrt();
    let coef = gamma * gamma / (gamma + 1.0) * dot(v, s) / (constants::C * constants::C);
    Ok([s[0] + coef * v[0], s[1] + coef * v[1], s[2] + coef * v[2]])
}

/// Radial or polar auxiliary axis: explicit nodes with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAxis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Reduced extended-phase-space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    /// Number of spatial nodes.
    pub nz: usize,
    /// Periodic domain length.
    pub length: f64,
    /// Number of momentum nodes.
    pub npz: usize,
    /// Momentum half-width; nodes span [-pmax, pmax).
    pub pmax: f64,
    /// Optional radial momentum axis; weights include the radial factor
    /// `p_perp`, so plain weighted sums integrate `p_perp dp_perp`.
    pub pperp: Option<WeightedAxis>,
    /// Optional spin polar axis: nodes are `cos(theta)`, weights integrate
    /// `sin(theta) dtheta`.
    pub theta: Option<WeightedAxis>,
    /// Retained azimuthal harmonics (n, n'); always contains (0, 0).
    pub harmonics: Vec<(i32, i32)>,
}

impl PhaseGrid {
    /// Purely electrostatic 1D1V grid: (z, p_z) only, harmonic (0,0).
    pub fn reduced_1d(nz: usize, length: f64, npz: usize, pmax: f64) -> Result<Self> {
        if nz == 0 || npz == 0 || !(length > 0.0) || !(pmax > 0.0) {
            return Err(QkinError::InvalidInput(
                "grid sizes and extents must be positive".into(),
            ));
        }
        Ok(Self {
            nz,
            length,
            npz,
            pmax,
            pperp: None,
            theta: None,
            harmonics: vec![(0, 0)],
        })
    }

    /// Grid with radial momentum and spin polar axes for spin kinetics.
    /// Default harmonics are the set the linear theory needs.
    pub fn spin_cylindrical(
        nz: usize,
        length: f64,
        npz: usize,
        pmax: f64,
        n_pperp: usize,
        pperp_max: f64,
        n_theta: usize,
    ) -> Result<Self> {
        let mut grid = Self::reduced_1d(nz, length, npz, pmax)?;
        if n_pperp == 0 || n_theta == 0 || !(pperp_max > 0.0) {
            return Err(QkinError::InvalidInput(
                "auxiliary axes need positive sizes".into(),
            ));
        }
        let gl = GaussLegendre::new(n_pperp);
        let half = 0.5 * pperp_max;
        let nodes: Vec<f64> = gl.nodes().iter().map(|x| half * (x + 1.0)).collect();
        let weights: Vec<f64> = gl
            .weights()
            .iter()
            .zip(&nodes)
            .map(|(w, p)| w * half * p)
            .collect();
        grid.pperp = Some(WeightedAxis { nodes, weights });

        let glt = GaussLegendre::new(n_theta);
        grid.theta = Some(WeightedAxis {
            nodes: glt.nodes().to_vec(),
            weights: glt.weights().to_vec(),
        });
        grid.harmonics = vec![(0, 0), (1, -1), (-1, 1)];
        Ok(grid)
    }

    pub fn dz(&self) -> f64 {
        self.length / self.nz as f64
    }

    pub fn dpz(&self) -> f64 {
        2.0 * self.pmax / self.npz as f64
    }

    pub fn z_nodes(&self) -> Vec<f64> {
        (0..self.nz).map(|i| i as f64 * self.dz()).collect()
    }

    pub fn pz_nodes(&self) -> Vec<f64> {
        (0..self.npz)
            .map(|j| -self.pmax + j as f64 * self.dpz())
            .collect()
    }

    /// Shape of one harmonic's value array, in axis order
    /// `[z, pz, pperp?, theta?]`.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.nz, self.npz];
        if let Some(ax) = &self.pperp {
            s.push(ax.nodes.len());
        }
        if let Some(ax) = &self.theta {
            s.push(ax.nodes.len());
        }
        s
    }

    /// `2 pi` for each azimuthal angle that is resolved by this grid.
    pub fn angular_measure(&self) -> f64 {
        let mut m = 1.0;
        if self.pperp.is_some() {
            m *= 2.0 * std::f64::consts::PI;
        }
        if self.theta.is_some() {
            m *= 2.0 * std::f64::consts::PI;
        }
        m
    }
}

/// Scalar distribution field over a [`PhaseGrid`].
///
/// The (0,0) harmonic is real; all other retained harmonics are complex
/// with conjugate pairing enforced when both members of a pair are set.
#[derive(Debug, Clone)]
pub struct DistributionField {
    pub grid: PhaseGrid,
    g00: ArrayD<f64>,
    others: BTreeMap<(i32, i32), ArrayD<C64>>,
    pub time: f64,
}

impl DistributionField {
    pub fn from_g00(grid: PhaseGrid, g00: ArrayD<f64>, time: f64) -> Result<Self> {
        if g00.shape() != grid.shape().as_slice() {
            return Err(QkinError::GridMismatch(format!(
                "g00 shape {:?} does not match grid shape {:?}",
                g00.shape(),
                grid.shape()
            )));
        }
        if g00.iter().any(|v| !v.is_finite()) {
            return Err(QkinError::InvalidInput("non-finite value in g00".into()));
        }
        Ok(Self {
            grid,
            g00,
            others: BTreeMap::new(),
            time,
        })
    }

    /// Zero field on a grid.
    pub fn zeros(grid: PhaseGrid, time: f64) -> Self {
        let shape = IxDyn(&grid.shape());
        let g00 = ArrayD::zeros(shape);
        Self {
            grid,
            g00,
            others: BTreeMap::new(),
            time,
        }
    }

    pub fn g00(&self) -> &ArrayD<f64> {
        &self.g00
    }

    pub fn g00_mut(&mut self) -> &mut ArrayD<f64> {
        &mut self.g00
    }

    pub fn harmonic(&self, key: (i32, i32)) -> Option<&ArrayD<C64>> {
        self.others.get(&key)
    }

    pub fn harmonic_keys(&self) -> impl Iterator<Item = &(i32, i32)> {
        self.others.keys()
    }

    /// Inserts a non-(0,0) harmonic. If the conjugate partner is retained,
    /// the pairing `v_(-n,-n') = conj(v_(n,n'))` is checked.
    pub fn set_harmonic(&mut self, key: (i32, i32), values: ArrayD<C64>) -> Result<()> {
        if key == (0, 0) {
            return Err(QkinError::InvalidInput(
                "the (0,0) harmonic is the real array; use g00_mut".into(),
            ));
        }
        if !self.grid.harmonics.contains(&key) {
            return Err(QkinError::InvalidInput(format!(
                "harmonic {key:?} is not retained by the grid"
            )));
        }
        if values.shape() != self.grid.shape().as_slice() {
            return Err(QkinError::GridMismatch(format!(
                "harmonic {key:?} shape {:?} does not match grid {:?}",
                values.shape(),
                self.grid.shape()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QkinError::InvalidInput("non-finite harmonic value".into()));
        }
        let mirror = (-key.0, -key.1);
        if let Some(partner) = self.others.get(&mirror) {
            let scale = partner
                .iter()
                .map(|v| v.norm())
                .fold(0.0_f64, f64::max)
                .max(1e-300);
            let worst = partner
                .iter()
                .zip(values.iter())
                .map(|(a, b)| (a.conj() - *b).norm())
                .fold(0.0_f64, f64::max);
            if worst > 1e-10 * scale {
                return Err(QkinError::InvalidInput(format!(
                    "conjugate pairing violated for {key:?}: max deviation {worst:.3e}"
                )));
            }
        }
        self.others.insert(key, values);
        Ok(())
    }

    /// Value of the field at grid indices and azimuthal angles.
    pub fn eval(&self, idx: &[usize], phi_p: f64, phi_s: f64) -> f64 {
        let mut v = self.g00[IxDyn(idx)];
        for (&(n, np), arr) in &self.others {
            let phase = C64::from_polar(1.0, n as f64 * phi_p + np as f64 * phi_s);
            v += (arr[IxDyn(idx)] * phase).re;
        }
        v
    }

    /// Integral over the whole phase space (momentum, spin and z).
    pub fn total(&self) -> f64 {
        let g = &self.grid;
        let dz = g.dz();
        let dpz = g.dpz();
        let mut acc = 0.0;
        let sh = self.g00.shape().to_vec();
        match (&g.pperp, &g.theta) {
            (None, None) => {
                for v in self.g00.iter() {
                    acc += v;
                }
            }
            (Some(pp), None) => {
                for iz in 0..sh[0] {
                    for ip in 0..sh[1] {
                        for (ir, wr) in pp.weights.iter().enumerate() {
                            acc += self.g00[IxDyn(&[iz, ip, ir])] * wr;
                        }
                    }
                }
            }
            (None, Some(th)) => {
                for iz in 0..sh[0] {
                    for ip in 0..sh[1] {
                        for (it, wt) in th.weights.iter().enumerate() {
                            acc += self.g00[IxDyn(&[iz, ip, it])] * wt;
                        }
                    }
                }
            }
            (Some(pp), Some(th)) => {
                for iz in 0..sh[0] {
                    for ip in 0..sh[1] {
                        for (ir, wr) in pp.weights.iter().enumerate() {
                            for (it, wt) in th.weights.iter().enumerate() {
                                acc += self.g00[IxDyn(&[iz, ip, ir, it])] * wr * wt;
                            }
                        }
                    }
                }
            }
        }
        acc * dz * dpz * g.angular_measure()
    }

    /// Marginal over all momentum axes: probability density over position
    /// and spin direction. Only `n = 0` harmonics survive the `phi_p`
    /// integral; for grids without a spin axis the result is isotropic in
    /// `s` and reported as density per unit spin solid angle.
    pub fn marginal_position_spin(&self) -> PositionSpinMarginal {
        let g = &self.grid;
        let dpz = g.dpz();
        let phi_p_factor = if g.pperp.is_some() {
            2.0 * std::f64::consts::PI
        } else {
            1.0
        };
        let ntheta = g.theta.as_ref().map_or(1, |t| t.nodes.len());
        let spin_norm = if g.theta.is_some() {
            1.0
        } else {
            1.0 / (4.0 * std::f64::consts::PI)
        };
        let mut coeffs: BTreeMap<i32, ndarray::Array2<C64>> = BTreeMap::new();

        let mut c0 = ndarray::Array2::<C64>::zeros((g.nz, ntheta));
        self.reduce_momentum_real(&self.g00, &mut c0);
        c0.mapv_inplace(|v| v * dpz * phi_p_factor * spin_norm);
        coeffs.insert(0, c0);

        for (&(n, np), arr) in &self.others {
            if n != 0 {
                continue;
            }
            let mut c = ndarray::Array2::<C64>::zeros((g.nz, ntheta));
            self.reduce_momentum_complex(arr, &mut c);
            c.mapv_inplace(|v| v * dpz * phi_p_factor * spin_norm);
            let entry = coeffs
                .entry(np)
                .or_insert_with(|| ndarray::Array2::zeros((g.nz, ntheta)));
            *entry = &*entry + &c;
        }

        PositionSpinMarginal {
            z_nodes: g.z_nodes(),
            z_weight: g.dz(),
            theta: g.theta.clone(),
            coeffs,
        }
    }

    /// Marginal over z: the same field with the spatial axis collapsed.
    /// Values are integrated over the domain, so a uniform field maps to
    /// `L` times its (p, s) slice once the collapsed-axis weight is divided
    /// out; `total()` of the marginal equals `total()` of the source.
    pub fn marginal_momentum_spin(&self) -> Result<DistributionField> {
        let g = &self.grid;
        let dz = g.dz();
        let mut grid1 = g.clone();
        grid1.nz = 1;
        grid1.length = g.length;

        let mut shape1 = g.shape();
        shape1[0] = 1;
        let mut g00 = ArrayD::<f64>::zeros(IxDyn(&shape1));
        for (idx, v) in self.g00.indexed_iter() {
            let mut tgt: Vec<usize> = idx.slice().to_vec();
            tgt[0] = 0;
            g00[IxDyn(&tgt)] += v * dz;
        }
        let w1 = grid1.dz();
        g00.mapv_inplace(|v| v / w1);
        let mut out = DistributionField::from_g00(grid1, g00, self.time)?;
        for (&key, arr) in &self.others {
            let mut shape1 = g.shape();
            shape1[0] = 1;
            let mut red = ArrayD::<C64>::zeros(IxDyn(&shape1));
            for (idx, v) in arr.indexed_iter() {
                let mut tgt: Vec<usize> = idx.slice().to_vec();
                tgt[0] = 0;
                red[IxDyn(&tgt)] += *v * dz;
            }
            red.mapv_inplace(|v| v / w1);
            out.set_harmonic(key, red)?;
        }
        Ok(out)
    }

    fn reduce_momentum_real(&self, src: &ArrayD<f64>, out: &mut ndarray::Array2<C64>) {
        let g = &self.grid;
        match (&g.pperp, &g.theta) {
            (None, None) => {
                for iz in 0..g.nz {
                    let mut acc = 0.0;
                    for ip in 0..g.npz {
                        acc += src[IxDyn(&[iz, ip])];
                    }
                    out[(iz, 0)] = C64::new(acc, 0.0);
                }
            }
            (None, Some(th)) => {
                for iz in 0..g.nz {
                    for it in 0..th.nodes.len() {
                        let mut acc = 0.0;
                        for ip in 0..g.npz {
                            acc += src[IxDyn(&[iz, ip, it])];
                        }
                        out[(iz, it)] = C64::new(acc, 0.0);
                    }
                }
            }
            (Some(pp), None) => {
                for iz in 0..g.nz {
                    let mut acc = 0.0;
                    for ip in 0..g.npz {
                        for (ir, wr) in pp.weights.iter().enumerate() {
                            acc += src[IxDyn(&[iz, ip, ir])] * wr;
                        }
                    }
                    out[(iz, 0)] = C64::new(acc, 0.0);
                }
            }
            (Some(pp), Some(th)) => {
                for iz in 0..g.nz {
                    for it in 0..th.nodes.len() {
                        let mut acc = 0.0;
                        for ip in 0..g.npz {
                            for (ir, wr) in pp.weights.iter().enumerate() {
                                acc += src[IxDyn(&[iz, ip, ir, it])] * wr;
                            }
                        }
                        out[(iz, it)] = C64::new(acc, 0.0);
                    }
                }
            }
        }
    }

    fn reduce_momentum_complex(&self, src: &ArrayD<C64>, out: &mut ndarray::Array2<C64>) {
        let g = &self.grid;
        let ntheta = g.theta.as_ref().map_or(1, |t| t.nodes.len());
        for iz in 0..g.nz {
            for it in 0..ntheta {
                let mut acc = C64::new(0.0, 0.0);
                match &g.pperp {
                    None => {
                        for ip in 0..g.npz {
                            let idx = if g.theta.is_some() {
                                IxDyn(&[iz, ip, it])
                            } else {
                                IxDyn(&[iz, ip])
                            };
                            acc += src[idx];
                        }
                    }
                    Some(pp) => {
                        for ip in 0..g.npz {
                            for (ir, wr) in pp.weights.iter().enumerate() {
                                let idx = if g.theta.is_some() {
                                    IxDyn(&[iz, ip, ir, it])
                                } else {
                                    IxDyn(&[iz, ip, ir])
                                };
                                acc += src[idx] * *wr;
                            }
                        }
                    }
                }
                out[(iz, it)] = acc;
            }
        }
    }
}

/// Probability density over (z, s) produced by
/// [`DistributionField::marginal_position_spin`].
#[derive(Debug, Clone)]
pub struct PositionSpinMarginal {
    pub z_nodes: Vec<f64>,
    pub z_weight: f64,
    /// Spin polar axis (cos nodes, weights); `None` for spin-integrated
    /// grids, where the density is isotropic in `s`.
    pub theta: Option<WeightedAxis>,
    /// phi_s harmonic coefficients over (z, theta).
    pub coeffs: BTreeMap<i32, ndarray::Array2<C64>>,
}

impl PositionSpinMarginal {
    /// Density at a z node, theta node and azimuth phi_s.
    pub fn value(&self, iz: usize, itheta: usize, phi_s: f64) -> f64 {
        let mut v = 0.0;
        for (&np, arr) in &self.coeffs {
            let phase = C64::from_polar(1.0, np as f64 * phi_s);
            v += (arr[(iz, itheta)] * phase).re;
        }
        v
    }

    /// Integral over dz d^2s.
    pub fn integrate(&self) -> f64 {
        let c0 = &self.coeffs[&0];
        let mut acc = 0.0;
        match &self.theta {
            Some(th) => {
                for iz in 0..self.z_nodes.len() {
                    for (it, wt) in th.weights.iter().enumerate() {
                        acc += c0[(iz, it)].re * wt;
                    }
                }
                acc * self.z_weight * 2.0 * std::f64::consts::PI
            }
            None => {
                for iz in 0..self.z_nodes.len() {
                    acc += c0[(iz, 0)].re;
                }
                acc * self.z_weight * 4.0 * std::f64::consts::PI
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::Equilibrium1D;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn uniform_reduced_field(nz: usize, npz: usize) -> DistributionField {
        let grid = PhaseGrid::reduced_1d(nz, 2.0, npz, 3.0).unwrap();
        let eq = Equilibrium1D::new(0.5).unwrap();
        let pz = grid.pz_nodes();
        let mut g00 = ArrayD::zeros(IxDyn(&grid.shape()));
        for iz in 0..nz {
            for (ip, &p) in pz.iter().enumerate() {
                g00[IxDyn(&[iz, ip])] = eq.value(p);
            }
        }
        DistributionField::from_g00(grid, g00, 0.0).unwrap()
    }

    #[test]
    fn uniform_marginal_is_constant_in_z() {
        let f = uniform_reduced_field(16, 128);
        let m = f.marginal_position_spin();
        let v0 = m.value(0, 0, 0.0);
        for iz in 1..16 {
            assert_relative_eq!(m.value(iz, 0, 0.3), v0, max_relative = 1e-13);
        }
        assert!(v0 > 0.0);
    }

    #[test]
    fn marginal_totals_agree_two_paths() {
        let f = uniform_reduced_field(8, 64);
        let direct = f.total();
        let via_position = f.marginal_position_spin().integrate();
        let via_momentum = f.marginal_momentum_spin().unwrap().total();
        assert_relative_eq!(via_position, direct, max_relative = 1e-10);
        assert_relative_eq!(via_momentum, direct, max_relative = 1e-10);
    }

    #[test]
    fn delta_field_reproduces_node_weight() {
        let grid = PhaseGrid::reduced_1d(4, 1.0, 8, 2.0).unwrap();
        let mut g00 = ArrayD::zeros(IxDyn(&grid.shape()));
        g00[IxDyn(&[2, 5])] = 1.0;
        let f = DistributionField::from_g00(grid.clone(), g00, 0.0).unwrap();
        let m = f.marginal_position_spin();
        let expect = grid.dpz() / (4.0 * std::f64::consts::PI);
        assert_relative_eq!(m.value(2, 0, 0.0), expect, max_relative = 1e-14);
        assert_abs_diff_eq!(m.value(1, 0, 0.0), 0.0);
    }

    #[test]
    fn uniform_field_momentum_marginal_scales_with_length() {
        let f = uniform_reduced_field(16, 32);
        let m = f.marginal_momentum_spin().unwrap();
        let expected = f.g00()[IxDyn(&[0, 10])] * f.grid.length / m.grid.dz();
        assert_relative_eq!(m.g00()[IxDyn(&[0, 10])], expected, max_relative = 1e-13);
    }

    #[test]
    fn z_average_matches_fourier_zero_mode() {
        let grid = PhaseGrid::reduced_1d(16, 2.0, 4, 1.0).unwrap();
        let mut g00 = ArrayD::zeros(IxDyn(&grid.shape()));
        for iz in 0..16 {
            let z = iz as f64 * grid.dz();
            for ip in 0..4 {
                g00[IxDyn(&[iz, ip])] =
                    1.0 + 0.3 * (2.0 * std::f64::consts::PI * z / grid.length).cos();
            }
        }
        let f = DistributionField::from_g00(grid.clone(), g00, 0.0).unwrap();
        // direct z sum: the cosine averages to zero on the uniform grid
        let direct: f64 = (0..16).map(|iz| f.g00()[IxDyn(&[iz, 0])]).sum::<f64>() / 16.0;
        assert_relative_eq!(direct, 1.0, max_relative = 1e-13);
        let m = f.marginal_momentum_spin().unwrap();
        assert_relative_eq!(
            m.g00()[IxDyn(&[0, 0])] * m.grid.dz() / f.grid.length,
            1.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn nonnegative_marginal_for_nonnegative_field() {
        let f = uniform_reduced_field(8, 32);
        let m = f.marginal_position_spin();
        for iz in 0..8 {
            assert!(m.value(iz, 0, 1.0) >= 0.0);
        }
    }

    #[test]
    fn conjugate_pairing_enforced() {
        let grid = PhaseGrid::spin_cylindrical(2, 1.0, 4, 2.0, 3, 3.0, 4).unwrap();
        let mut f = DistributionField::zeros(grid.clone(), 0.0);
        let mut a = ArrayD::<C64>::zeros(IxDyn(&grid.shape()));
        a.fill(C64::new(0.5, 0.25));
        f.set_harmonic((1, -1), a.clone()).unwrap();
        let good = a.mapv(|v| v.conj());
        assert!(f.clone().set_harmonic((-1, 1), good).is_ok());
        assert!(f.set_harmonic((-1, 1), a).is_err());
    }

    #[test]
    fn velocity_reduces_to_classical_limit() {
        let p = [1e-20, -2e-20, 3e-20];
        let v = velocity_of(p, [0.0, 0.0, 1.0], [0.0, 0.0, 0.0], -9e-21);
        for i in 0..3 {
            assert_relative_eq!(v[i], p[i] / constants::M_E, max_relative = 1e-15);
        }
    }

    #[test]
    fn velocity_cross_term_direction_and_magnitude() {
        // p = 0, E along z, s along x: v along E x s = y, sign set by q < 0.
        let mu = crate::params::derive_params(
            &crate::params::PlasmaState::with_default_g(1e20, 1e4, 0.0).unwrap(),
        )
        .unwrap()
        .mu;
        assert!(mu < 0.0);
        let e1 = 3.2e-5;
        let v = velocity_of([0.0; 3], [1.0, 0.0, 0.0], [0.0, 0.0, e1], mu);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[2], 0.0);
        let expect = 3.0 * mu * e1 / (2.0 * constants::M_E * constants::C);
        assert_relative_eq!(v[1], expect, max_relative = 1e-15);
        assert!(v[1] < 0.0);
    }

    #[test]
    fn velocity_perturbation_norm_follows_sine() {
        let mu = -9.3e-21;
        let e_mag = 2.0e-4;
        for &theta in &[0.3_f64, 1.1, 2.0] {
            let s = [theta.sin(), 0.0, theta.cos()];
            let e = [0.0, 0.0, e_mag];
            let p = [4e-21, 0.0, -1e-21];
            let v = velocity_of(p, s, e, mu);
            let dv = [
                v[0] - p[0] / constants::M_E,
                v[1] - p[1] / constants::M_E,
                v[2] - p[2] / constants::M_E,
            ];
            let expect = (3.0 * mu.abs() / (2.0 * constants::M_E * constants::C))
                * e_mag
                * theta.sin().abs();
            assert_relative_eq!(norm(dv), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn velocity_linear_in_field() {
        let mu = -5e-21;
        let p = [1e-21, 2e-21, -3e-21];
        let s = [0.6, 0.0, 0.8];
        let e = [1e-5, -2e-5, 3e-5];
        let v1 = velocity_of(p, s, e, mu);
        let e2 = [2.0 * e[0], 2.0 * e[1], 2.0 * e[2]];
        let v2 = velocity_of(p, s, e2, mu);
        for i in 0..3 {
            let d1 = v1[i] - p[i] / constants::M_E;
            let d2 = v2[i] - p[i] / constants::M_E;
            assert_relative_eq!(d2, 2.0 * d1, max_relative = 1e-12);
        }
    }

    #[test]
    fn lab_spin_identity_cases() {
        let s = [0.0, 0.6, 0.8];
        let r = lab_frame_spin(s, [0.0; 3]).unwrap();
        assert_eq!(r, s);
        // v perpendicular to s
        let v = [0.1 * constants::C, 0.0, 0.0];
        let r = lab_frame_spin(s, v).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(r[i], s[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn lab_spin_parallel_boost_matches_formula() {
        let s = [0.0, 0.0, 1.0];
        let v = [0.0, 0.0, 0.1 * constants::C];
        let r = lab_frame_spin(s, v).unwrap();
        let gamma = 1.0 / (1.0_f64 - 0.01).sqrt();
        let expect = 1.0 + gamma * gamma / (gamma + 1.0) * 0.01;
        assert_relative_eq!(r[2], expect, max_relative = 1e-14);
    }

    #[test]
    fn lab_spin_rejects_superluminal() {
        assert!(lab_frame_spin([1.0, 0.0, 0.0], [constants::C, 0.0, 0.0]).is_err());
    }

    #[test]
    fn lab_spin_correction_vanishes_quadratically() {
        // Richardson slope ~ 2 for |S - s| as |v| -> 0 with v parallel s.
        let s = [0.0, 0.0, 1.0];
        let mut deltas = Vec::new();
        for &beta in &[0.02, 0.01, 0.005] {
            let v = [0.0, 0.0, beta * constants::C];
            let r = lab_frame_spin(s, v).unwrap();
            deltas.push(r[2] - 1.0);
        }
        let slope1 = (deltas[0] / deltas[1]).log2();
        let slope2 = (deltas[1] / deltas[2]).log2();
        assert_abs_diff_eq!(slope1, 2.0, epsilon = 0.01);
        assert_abs_diff_eq!(slope2, 2.0, epsilon = 0.01);
    }

    #[test]
    fn spin_vector_unit_length() {
        let s = SpinVector::new(1.1, 2.7).unwrap();
        assert_relative_eq!(norm(s.unit_vector()), 1.0, max_relative = 1e-15);
        assert!(SpinVector::new(-0.1, 0.0).is_err());
        assert!(SpinVector::new(3.5, 0.0).is_err());
    }
}
