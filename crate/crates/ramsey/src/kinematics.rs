//! Dimensionless problem parameters and the spectral data derived from them.
//!
//! Everything in this crate works in units with `hbar = m = 1`, so energies
//! are `k^2 / 2` for a wavenumber `k` and the detuning / Rabi frequency enter
//! the coupled equations directly as potentials.  The two internal states of
//! the atom form two scattering channels: the ground channel propagates with
//! the incident wavenumber `k`, the excited channel with
//! `q = sqrt(k^2 + 2 delta)`.  Inside a laser barrier the dressed
//! superpositions propagate with `k_plus` and `k_minus`.
//!
//! Negative detunings below the critical value `delta_cr = -k^2 / 2` close
//! the excited channel: `q` becomes imaginary and the outgoing excited wave
//! is evanescent.

use num_complex::Complex64;

use crate::error::Error;

/// The five dimensionless numbers that define one scattering problem.
///
/// * `k` — incident wavenumber of the ground-state atom (`k > 0`),
/// * `omega` — Rabi frequency of the laser coupling (`omega >= 0`),
/// * `delta` — detuning of the laser from the atomic transition,
/// * `width` — width `l` of each laser barrier (`width > 0`),
/// * `gap` — field-free distance `L` between the two barriers (`gap >= 0`).
///
/// The first barrier occupies `[0, l]`, the second `[l + L, 2l + L]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub k: f64,
    pub omega: f64,
    pub delta: f64,
    pub width: f64,
    pub gap: f64,
}

impl PhysicalParams {
    pub fn new(k: f64, omega: f64, delta: f64, width: f64, gap: f64) -> Result<Self, Error> {
        let p = Self { k, omega, delta, width, gap };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let all_finite = [self.k, self.omega, self.delta, self.width, self.gap]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.k <= 0.0 {
            return Err(Error::InvalidParams(format!("k must be positive, got {}", self.k)));
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidParams(format!(
                "omega must be non-negative, got {}",
                self.omega
            )));
        }
        if self.width <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "barrier width must be positive, got {}",
                self.width
            )));
        }
        if self.gap < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gap must be non-negative, got {}",
                self.gap
            )));
        }
        Ok(())
    }

    /// Position of the left edge of the second barrier, `l + L`.
    pub fn second_barrier_start(&self) -> f64 {
        self.width + self.gap
    }

    /// Right edge of the whole structure, `2l + L`.
    pub fn structure_end(&self) -> f64 {
        2.0 * self.width + self.gap
    }

    /// Critical detuning `-k^2 / 2` below which the excited channel closes.
    pub fn delta_cr(&self) -> f64 {
        -0.5 * self.k * self.k
    }

    /// Derived spectral data for these parameters.
    pub fn kinematics(&self) -> ChannelKinematics {
        channel_kinematics(self)
    }

    /// Same parameters with a different detuning.
    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }

    /// Same parameters with a different incident wavenumber.
    pub fn with_k(&self, k: f64) -> Self {
        Self { k, ..*self }
    }
}

/// Spectral data derived from [`PhysicalParams`]: effective Rabi frequency,
/// dressed eigenvalues and the (possibly evanescent) channel wavenumbers.
///
/// Branch convention: every wavenumber is either real and non-negative or
/// purely imaginary with positive imaginary part, so `exp(i q x)` decays for
/// `x -> +inf` whenever the channel is closed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelKinematics {
    /// Effective Rabi frequency `sqrt(omega^2 + delta^2)`.
    pub omega_eff: f64,
    /// Upper dressed eigenvalue `(-delta + omega_eff) / 2`.
    pub lambda_plus: f64,
    /// Lower dressed eigenvalue `(-delta - omega_eff) / 2`.
    pub lambda_minus: f64,
    /// Excited-channel wavenumber `sqrt(k^2 + 2 delta)`.
    pub q: Complex64,
    /// Barrier wavenumber of the upper dressed wave, `sqrt(k^2 - 2 lambda_plus)`.
    pub k_plus: Complex64,
    /// Barrier wavenumber of the lower dressed wave, `sqrt(k^2 - 2 lambda_minus)`.
    pub k_minus: Complex64,
    /// Critical detuning `-k^2 / 2`.
    pub delta_cr: f64,
    /// Incident wavenumber, kept for convenience.
    pub k: f64,
}

impl ChannelKinematics {
    /// True when the excited channel propagates (`delta > delta_cr`).
    pub fn excited_open(&self) -> bool {
        self.q.im == 0.0 && self.q.re > 0.0
    }
}

/// `sqrt(omega^2 + delta^2)`, the dressed-state splitting scale.
pub fn effective_rabi(omega: f64, delta: f64) -> f64 {
    omega.hypot(delta)
}

/// Dressed eigenvalues `lambda_pm = (-delta +- omega_eff) / 2`, returned as
/// `(lambda_plus, lambda_minus)` with `lambda_plus >= lambda_minus`.
///
/// The smaller-magnitude eigenvalue is computed cancellation-free (via the
/// product identity `lambda_plus * lambda_minus = -omega^2 / 4`) so both
/// identities survive even for `omega` many orders of magnitude below
/// `|delta|`.
pub fn dressed_eigenvalues(omega: f64, delta: f64) -> (f64, f64) {
    if omega == 0.0 {
        return ((-delta).max(0.0), (-delta).min(0.0));
    }
    let omega_eff = effective_rabi(omega, delta);
    if delta >= 0.0 {
        let lambda_minus = -0.5 * (delta + omega_eff);
        let lambda_plus = 0.5 * omega * omega / (omega_eff + delta);
        (lambda_plus, lambda_minus)
    } else {
        let lambda_plus = 0.5 * (omega_eff - delta);
        let lambda_minus = -0.5 * omega * omega / (omega_eff - delta);
        (lambda_plus, lambda_minus)
    }
}

/// Square root of a real number mapped to the decaying branch:
/// non-negative real for `x >= 0`, positive imaginary for `x < 0`.
pub fn branch_sqrt(x: f64) -> Complex64 {
    if x >= 0.0 {
        Complex64::new(x.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-x).sqrt())
    }
}

/// All channel wavenumbers and dressed data for one parameter set.
pub fn channel_kinematics(params: &PhysicalParams) -> ChannelKinematics {
    let k = params.k;
    let omega_eff = effective_rabi(params.omega, params.delta);
    let (lambda_plus, lambda_minus) = dressed_eigenvalues(params.omega, params.delta);
    ChannelKinematics {
        omega_eff,
        lambda_plus,
        lambda_minus,
        q: branch_sqrt(k * k + 2.0 * params.delta),
        k_plus: branch_sqrt(k * k - 2.0 * lambda_plus),
        k_minus: branch_sqrt(k * k - 2.0 * lambda_minus),
        delta_cr: params.delta_cr(),
        k,
    }
}
