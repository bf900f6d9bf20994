//! Physical constants in Gaussian CGS units.
//!
//! All values are pinned so that derived quantities and test expectations
//! are bit-reproducible. Temperatures are in kelvin, energies in erg,
//! magnetic fields in gauss.

use std::io::Write;

/// Speed of light [cm/s].
pub const C: f64 = 2.99792458e10;

/// Elementary charge [statC]. The electron charge is `-E_CHARGE`.
pub const E_CHARGE: f64 = 4.80320425e-10;

/// Electron mass [g].
pub const M_E: f64 = 9.1093837015e-28;

/// Reduced Planck constant [erg s].
pub const HBAR: f64 = 1.054571817e-27;

/// Boltzmann constant [erg/K].
pub const K_B: f64 = 1.380649e-16;

/// QED-corrected electron spin g-factor.
pub const G_FACTOR: f64 = 2.00232;

/// Electron rest energy m c^2 [erg].
pub const MC2: f64 = M_E * C * C;

/// One electronvolt [erg].
pub const EV: f64 = 1.602176634e-12;

/// Kelvin per electronvolt.
pub const KELVIN_PER_EV: f64 = EV / K_B;

/// Writes the constant table as a documented text file.
pub fn write_table<W: Write>(mut out: W) -> std::io::Result<()> {
    writeln!(out, "# Physical constants (Gaussian CGS), pinned values")?;
    writeln!(out, "# name\tvalue\tunit\tdescription")?;
    writeln!(out, "c\t{C:.9e}\tcm/s\tspeed of light")?;
    writeln!(out, "e\t{E_CHARGE:.9e}\tstatC\telementary charge")?;
    writeln!(out, "m_e\t{M_E:.10e}\tg\telectron mass")?;
    writeln!(out, "hbar\t{HBAR:.9e}\terg*s\treduced Planck constant")?;
    writeln!(out, "k_B\t{K_B:.6e}\terg/K\tBoltzmann constant")?;
    writeln!(out, "g\t{G_FACTOR:.5}\t1\telectron spin g-factor (QED corrected)")?;
    writeln!(out, "m_e*c^2\t{MC2:.9e}\terg\telectron rest energy")?;
    writeln!(out, "eV\t{EV:.9e}\terg\telectronvolt")?;
    Ok(())
}
