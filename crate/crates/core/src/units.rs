//! Fixed conversion constants between atomic units and the interface units.

/// Hartree energy in cm⁻¹.
pub const HARTREE_IN_CM: f64 = 219_474.631_363_2;

/// Atomic unit of time in femtoseconds.
pub const AU_TIME_IN_FS: f64 = 0.024_188_843_265_857;

/// Boltzmann constant in Hartree per kelvin.
pub const KB_HARTREE_PER_K: f64 = 3.166_811_563_455_5e-6;

pub fn cm_to_au(e_cm: f64) -> f64 {
    e_cm / HARTREE_IN_CM
}

pub fn au_to_cm(e_au: f64) -> f64 {
    e_au * HARTREE_IN_CM
}

pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs / AU_TIME_IN_FS
}

pub fn au_to_fs(t_au: f64) -> f64 {
    t_au * AU_TIME_IN_FS
}

/// Inverse temperature β = 1/(k_B T) in Hartree⁻¹.
pub fn beta_from_kelvin(temperature: f64) -> f64 {
    1.0 / (KB_HARTREE_PER_K * temperature)
}

/// Bose-Einstein occupation n(ω) = 1/(e^{βω} − 1).
pub fn bose(beta: f64, omega: f64) -> f64 {
    1.0 / (beta * omega).exp_m1()
}
