//! Analytic formulas: the semiclassical fringe pattern, the exact
//! composition of double-barrier transmission from single-barrier
//! amplitudes, its direct-scattering and ultracold truncations, resonance
//! position estimates and crossing-time diagnostics.
//!
//! The composition formulas take two [`ScatteringSet`]s that must belong to
//! the same physical parameters with the first barrier at offset `0` and the
//! second at `l + L`; [`crate::barrier::barrier_pair`] builds exactly that.
//!
//! None of the approximations enforce their validity regime: each formula is
//! evaluated wherever it is finite, and regime appropriateness is the
//! caller's concern.

use num_complex::Complex64;

use crate::barrier::{barrier_pair, ScatteringSet};
use crate::error::Error;
use crate::kinematics::PhysicalParams;

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Which length enters the detuning phase of the second sine term in the
/// semiclassical fringe formula.  The barrier width is the reference form;
/// the gap-length variant is retained for side-by-side investigation only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SemiclassicalVariant {
    BarrierDetuningPhase,
    GapDetuningPhase,
}

/// Semiclassical Ramsey fringe probability for an atom crossing two
/// barriers of width `l` separated by `L` at velocity `k` (units
/// `hbar = m = 1`):
///
/// ```text
/// P = (4 W^2 / W'^2) sin^2(W' l / 2k)
///     [ cos(D L / 2k) cos(W' l / 2k) - (D / W') sin(D l / 2k) sin(W' l / 2k) ]^2
/// ```
///
/// with `W = omega`, `D = delta`, `W' = sqrt(W^2 + D^2)`.
pub fn p12_semiclassical(params: &PhysicalParams) -> f64 {
    p12_semiclassical_variant(params, SemiclassicalVariant::BarrierDetuningPhase)
}

/// [`p12_semiclassical`] with an explicit choice of detuning-phase length.
pub fn p12_semiclassical_variant(params: &PhysicalParams, variant: SemiclassicalVariant) -> f64 {
    let omega = params.omega;
    let delta = params.delta;
    let omega_eff = omega.hypot(delta);
    if omega_eff == 0.0 {
        return 0.0;
    }
    let k = params.k;
    let pulse = omega_eff * params.width / (2.0 * k);
    let gap_phase = delta * params.gap / (2.0 * k);
    let sine_len = match variant {
        SemiclassicalVariant::BarrierDetuningPhase => params.width,
        SemiclassicalVariant::GapDetuningPhase => params.gap,
    };
    let det_phase = delta * sine_len / (2.0 * k);
    let envelope = 4.0 * omega * omega / (omega_eff * omega_eff) * pulse.sin().powi(2);
    let bracket = gap_phase.cos() * pulse.cos() - delta / omega_eff * det_phase.sin() * pulse.sin();
    envelope * bracket * bracket
}

/// Exact double-barrier `T12` composed from the sixteen single-barrier
/// amplitudes through the two-channel multiple-scattering resummation:
///
/// ```text
/// T12 = [ t12 t~22 + t11 t~12
///         - (rr12 t11 - rr11 t12)(r~21 t~12 - r~11 t~22)
///         - (rr22 t11 - rr21 t12)(r~22 t~12 - r~12 t~22) ]
///     / [ 1 - rr12 r~21 - rr22 r~22 - rr11 r~11 - rr21 r~12
///         + (rr11 rr22 - rr12 rr21)(r~11 r~22 - r~21 r~12) ]
/// ```
///
/// where unadorned amplitudes belong to the first barrier (`rr` = right
/// incidence) and `~` marks the second.  This is an identity, not an
/// approximation: the tests hold it equal to the direct solver at 1e-10.
pub fn t12_composed(first: &ScatteringSet, second: &ScatteringSet) -> Result<C64, Error> {
    let t1 = &first.t_left;
    let rr1 = &first.r_right;
    let t2 = &second.t_left;
    let rl2 = &second.r_left;

    let num = t1[0][1] * t2[1][1] + t1[0][0] * t2[0][1]
        - (rr1[0][1] * t1[0][0] - rr1[0][0] * t1[0][1])
            * (rl2[1][0] * t2[0][1] - rl2[0][0] * t2[1][1])
        - (rr1[1][1] * t1[0][0] - rr1[1][0] * t1[0][1])
            * (rl2[1][1] * t2[0][1] - rl2[0][1] * t2[1][1]);
    let den = ONE
        - rr1[0][1] * rl2[1][0]
        - rr1[1][1] * rl2[1][1]
        - rr1[0][0] * rl2[0][0]
        - rr1[1][0] * rl2[0][1]
        + (rr1[0][0] * rr1[1][1] - rr1[0][1] * rr1[1][0])
            * (rl2[0][0] * rl2[1][1] - rl2[1][0] * rl2[0][1]);
    if den.norm() == 0.0 {
        return Err(Error::VanishingDenominator("double-barrier composition"));
    }
    Ok(num / den)
}

/// The two direct scattering paths only: excited at the first barrier or at
/// the second, no intermediate reflections.
pub fn direct_leading_order(first: &ScatteringSet, second: &ScatteringSet) -> C64 {
    first.t_left[0][0] * second.t_left[0][1] + first.t_left[0][1] * second.t_left[1][1]
}

/// Direct paths plus every path with exactly one double reflection in the
/// gap: the first-order truncation of the multiple-scattering expansion of
/// [`t12_composed`] in powers of the reflection amplitudes.
pub fn direct_first_order(first: &ScatteringSet, second: &ScatteringSet) -> C64 {
    let t1 = &first.t_left;
    let rr1 = &first.r_right;
    let t2 = &second.t_left;
    let rl2 = &second.r_left;
    let double_reflections = t1[0][1] * (rl2[1][0] * rr1[0][0] + rl2[1][1] * rr1[1][0]) * t2[0][1]
        + t1[0][0] * (rl2[0][0] * rr1[0][1] + rl2[0][1] * rr1[1][1]) * t2[1][1]
        + t1[0][1] * (rl2[1][0] * rr1[0][1] + rl2[1][1] * rr1[1][1]) * t2[1][1]
        + t1[0][0] * (rl2[0][0] * rr1[0][0] + rl2[0][1] * rr1[1][0]) * t2[0][1];
    direct_leading_order(first, second) + double_reflections
}

/// Two-path interference formula for the fast-atom regime
/// (`E_k >> hbar omega`), from the first barrier's amplitudes alone:
///
/// ```text
/// P12 = (q / k) |t12|^2 |t22 + t11 exp(i (k - q)(l + L))|^2
/// ```
///
/// Zero at and below the cutoff detuning.
pub fn p12_direct(params: &PhysicalParams) -> Result<f64, Error> {
    params.validate()?;
    let kin = params.kinematics();
    if !kin.excited_open() {
        return Ok(0.0);
    }
    let set = crate::barrier::barrier_scattering(0.0, params)?;
    let t = &set.t_left;
    let phase = (I * (kin.k - kin.q.re) * params.second_barrier_start()).exp();
    let two_path = t[1][1] + t[0][0] * phase;
    Ok(kin.q.re / kin.k * t[0][1].norm_sqr() * two_path.norm_sqr())
}

/// Coherent sum of the two resonating families for the ultracold regime
/// (`E_k << hbar omega`):
///
/// ```text
/// P12 = (q / k) | t12 t22 / (1 - r22^2 e^{2iqL})
///              + t11 t12 e^{i(k-q)(l+L)} / (1 - r11^2 e^{2ikL}) |^2
/// ```
///
/// using the symmetric-barrier relations `rr_22 = r_22 e^{-2iql}`,
/// `rr_11 = r_11 e^{-2ikl}`.  Zero at and below the cutoff detuning.
pub fn p12_ultracold(params: &PhysicalParams) -> Result<f64, Error> {
    let (first, second) = ultracold_terms(params)?;
    let kin = params.kinematics();
    if !kin.excited_open() {
        return Ok(0.0);
    }
    Ok(kin.q.re / kin.k * (first + second).norm_sqr())
}

/// The two terms of the ultracold formula before squaring, in order
/// (excited-channel resonances, ground-channel resonances).  Both are zero
/// below the cutoff.
pub fn ultracold_terms(params: &PhysicalParams) -> Result<(C64, C64), Error> {
    params.validate()?;
    let kin = params.kinematics();
    if !kin.excited_open() {
        return Ok((C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
    }
    let set = crate::barrier::barrier_scattering(0.0, params)?;
    let t = &set.t_left;
    let r = &set.r_left;
    let k = C64::new(kin.k, 0.0);
    let q = kin.q;
    let gap = params.gap;

    let den_excited = ONE - r[1][1] * r[1][1] * (2.0 * I * q * gap).exp();
    let den_ground = ONE - r[0][0] * r[0][0] * (2.0 * I * k * gap).exp();
    if den_excited.norm() == 0.0 || den_ground.norm() == 0.0 {
        return Err(Error::VanishingDenominator("ultracold resonance factor"));
    }
    let phase = (I * (k - q) * params.second_barrier_start()).exp();
    Ok((
        t[0][1] * t[1][1] / den_excited,
        t[0][0] * t[0][1] * phase / den_ground,
    ))
}

/// The four leading terms of the expansion of [`t12_composed`] in powers of
/// the small amplitudes of the ultracold regime: two second-power terms
/// (the resonating families) and two third-power terms (one inter-channel
/// reflection).
pub fn ultracold_series_terms(
    first: &ScatteringSet,
    second: &ScatteringSet,
) -> Result<[C64; 4], Error> {
    let t1 = &first.t_left;
    let rr1 = &first.r_right;
    let t2 = &second.t_left;
    let rl2 = &second.r_left;

    let d_ground = ONE - rr1[0][0] * rl2[0][0];
    let d_excited = ONE - rr1[1][1] * rl2[1][1];
    if d_ground.norm() == 0.0 || d_excited.norm() == 0.0 {
        return Err(Error::VanishingDenominator("ultracold series"));
    }
    Ok([
        t1[0][1] * t2[1][1] / d_excited,
        t1[0][0] * t2[0][1] / d_ground,
        t1[0][0] * t2[1][1] * (rr1[0][1] * rl2[0][0] + rr1[1][1] * rl2[0][1])
            / (d_ground * d_excited),
        t1[0][1] * t2[0][1] * (rr1[0][0] * rl2[1][0] + rr1[1][0] * rl2[1][1])
            / (d_ground * d_excited),
    ])
}

/// Estimated detuning of the `n`-th inter-barrier resonance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonanceEstimate {
    pub n: u32,
    pub delta_n: f64,
}

/// Peak detuning estimates `delta_n = ((n pi / L)^2 - k^2) / 2` from the
/// zeros of `1 - exp(2iqL)` with perfectly reflecting barriers.  Indices
/// with `k = n pi / L` (where the estimate degenerates to the open-channel
/// threshold of the ground channel itself) are skipped.
pub fn resonance_estimates(k: f64, gap: f64, n_max: u32) -> Vec<ResonanceEstimate> {
    let mut out = Vec::new();
    if !(k > 0.0) || !(gap > 0.0) {
        return out;
    }
    for n in 1..=n_max {
        let kn = n as f64 * std::f64::consts::PI / gap;
        if (k - kn).abs() <= 1e-12 * kn {
            continue;
        }
        out.push(ResonanceEstimate { n, delta_n: 0.5 * (kn * kn - k * k) });
    }
    out
}

/// Classical and effective times for crossing the gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingTimes {
    /// `L / k`: crossing time at the incident velocity.
    pub semiclassical: f64,
    /// `L / q`: crossing time at the excited-channel velocity, which
    /// diverges at the cutoff detuning.
    pub effective: f64,
}

/// Gap crossing times; only defined while the excited channel is open.
pub fn crossing_times(params: &PhysicalParams) -> Result<CrossingTimes, Error> {
    params.validate()?;
    let kin = params.kinematics();
    if !kin.excited_open() {
        return Err(Error::ClosedChannel { delta_cr: kin.delta_cr });
    }
    Ok(CrossingTimes {
        semiclassical: params.gap / params.k,
        effective: params.gap / kin.q.re,
    })
}

/// Convenience: composed `T12` for given parameters (builds both barrier
/// amplitude sets internally).
pub fn t12_composed_for(params: &PhysicalParams) -> Result<C64, Error> {
    let (first, second) = barrier_pair(params)?;
    t12_composed(&first, &second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::barrier_scattering;
    use crate::double_barrier::double_barrier_solve;
    use crate::presets;
    use std::f64::consts::PI;

    fn cdist(a: C64, b: C64) -> f64 {
        (a - b).norm()
    }

    #[test]
    fn semiclassical_examples() {
        // Resonant pi/2 pulses transfer everything.
        let p = PhysicalParams::new(1.0, PI / 2.0, 0.0, 1.0, 25.0).unwrap();
        assert!((p12_semiclassical(&p) - 1.0).abs() < 1e-12);

        let p = PhysicalParams::new(1.0, 0.0, 0.5, 1.0, 25.0).unwrap();
        assert_eq!(p12_semiclassical(&p), 0.0);

        // sin^2(pi/20) at resonance.
        let p = presets::direct_regime(0.0);
        let expected = (PI / 20.0_f64).sin().powi(2);
        assert!((p12_semiclassical(&p) - expected).abs() < 1e-12);
        assert!((expected - 0.024472).abs() < 1e-6);

        // The variants only differ off resonance.
        let p = presets::direct_regime(0.8);
        let a = p12_semiclassical_variant(&p, SemiclassicalVariant::BarrierDetuningPhase);
        let b = p12_semiclassical_variant(&p, SemiclassicalVariant::GapDetuningPhase);
        assert_ne!(a, b);
        assert_eq!(p12_semiclassical(&p), a);
    }

    #[test]
    fn composition_reproduces_exact_transmission() {
        let cases = [
            presets::direct_regime(0.5),
            presets::direct_regime(-0.35),
            presets::ultracold_regime(0.0028957),
            presets::ultracold_regime(0.1),
            PhysicalParams::new(2.0, 5.0, -1.5, 0.7, 3.0).unwrap(),
        ];
        for p in cases {
            let exact = double_barrier_solve(&p).unwrap();
            let composed = t12_composed_for(&p).unwrap();
            let scale = exact.t12.norm().max(1.0);
            assert!(
                cdist(composed, exact.t12) < 1e-10 * scale,
                "{composed} vs {} at {p:?}",
                exact.t12
            );
        }
    }

    #[test]
    fn composition_vanishes_without_coupling() {
        let p = PhysicalParams::new(1.0, 1e-9, 0.4, 1.0, 25.0).unwrap();
        assert!(t12_composed_for(&p).unwrap().norm() < 1e-8);
        let p0 = PhysicalParams::new(1.0, 0.0, 0.4, 1.0, 25.0).unwrap();
        assert_eq!(t12_composed_for(&p0).unwrap().norm(), 0.0);
    }

    #[test]
    fn first_order_truncation_consistency() {
        let p = presets::direct_regime(0.6);
        let (first, second) = barrier_pair(&p).unwrap();

        // With all reflections removed the first-order result is exactly the
        // leading bracket.
        let zero = C64::new(0.0, 0.0);
        let mut nf = first;
        nf.r_left = [[zero; 2]; 2];
        nf.r_right = [[zero; 2]; 2];
        let mut ns = second;
        ns.r_left = [[zero; 2]; 2];
        ns.r_right = [[zero; 2]; 2];
        assert_eq!(direct_first_order(&nf, &ns), direct_leading_order(&nf, &ns));

        // Adding the double-reflection bracket moves the truncation toward
        // the full resummation across the fringe pattern.
        for delta in [0.15, 0.45, 0.8, 1.3, 2.1] {
            let p = presets::direct_regime(delta);
            let (first, second) = barrier_pair(&p).unwrap();
            let full = t12_composed(&first, &second).unwrap();
            let leading = direct_leading_order(&first, &second);
            let first_order = direct_first_order(&first, &second);
            assert!(
                (first_order - full).norm() < (leading - full).norm(),
                "no improvement at delta = {delta}"
            );
        }
    }

    #[test]
    fn direct_formula_zero_cases() {
        let p = PhysicalParams::new(1.0, 0.0, 0.4, 1.0, 25.0).unwrap();
        assert_eq!(p12_direct(&p).unwrap(), 0.0);
        // Below cutoff.
        assert_eq!(p12_direct(&presets::direct_regime(-0.7)).unwrap(), 0.0);
        assert_eq!(p12_ultracold(&presets::ultracold_regime(-0.4)).unwrap(), 0.0);
    }

    #[test]
    fn direct_formula_tracks_exact_result_in_its_regime() {
        for delta in [0.1, 0.5, 1.0, 2.0] {
            let p = presets::direct_regime(delta);
            let exact = crate::double_barrier::p12_exact(&p).unwrap();
            let approx = p12_direct(&p).unwrap();
            assert!((exact - approx).abs() < 0.02, "delta = {delta}: {exact} vs {approx}");
        }
    }

    #[test]
    fn ultracold_series_reduces_to_composition_without_cross_reflections() {
        // Zeroing the inter-channel reflections on both barriers makes the
        // two leading series terms an exact resummation of the composition.
        // This is the consistency check that pins the composition's signs.
        let p = presets::ultracold_regime(0.05);
        let (mut first, mut second) = barrier_pair(&p).unwrap();
        for set in [&mut first, &mut second] {
            let zero = C64::new(0.0, 0.0);
            set.r_left[0][1] = zero;
            set.r_left[1][0] = zero;
            set.r_right[0][1] = zero;
            set.r_right[1][0] = zero;
        }
        let terms = ultracold_series_terms(&first, &second).unwrap();
        let composed = t12_composed(&first, &second).unwrap();
        assert!(cdist(terms[0] + terms[1], composed) < 1e-12 * composed.norm().max(1.0));
    }

    #[test]
    fn ultracold_series_improves_with_third_power_terms() {
        for delta in [0.001, 0.0028957, 0.01, 0.05] {
            let p = presets::ultracold_regime(delta);
            let (first, second) = barrier_pair(&p).unwrap();
            let full = t12_composed(&first, &second).unwrap();
            let terms = ultracold_series_terms(&first, &second).unwrap();
            let two = terms[0] + terms[1];
            let four = two + terms[2] + terms[3];
            assert!(
                (four - full).norm() <= (two - full).norm(),
                "no improvement at delta = {delta}"
            );
        }
    }

    #[test]
    fn ultracold_formula_matches_exact_on_resonance_demo() {
        // Pointwise agreement on the resonance flanks; the sweep-level RMS
        // comparison lives in the acceptance suite.  On-peak heights are the
        // worst case for the truncation (the resonance denominator is
        // smallest there), so the pointwise tolerance is looser than the
        // sweep RMS one.
        for est in resonance_estimates(0.1, 25.0, 5) {
            let p = presets::ultracold_regime(est.delta_n);
            let exact = crate::double_barrier::p12_exact(&p).unwrap();
            let approx = p12_ultracold(&p).unwrap();
            assert!(exact > 0.0);
            assert!(
                (exact - approx).abs() < 0.1 * exact.max(approx),
                "n = {}: {exact} vs {approx}",
                est.n
            );
        }
    }

    #[test]
    fn small_amplitude_scaling_with_kinetic_energy() {
        // In the deep ultracold regime the inter-channel transmission scales
        // as sqrt(E_k): halving the kinetic energy scales |t12| by 1/sqrt(2).
        let base = presets::ultracold_regime(0.0).with_k(0.097);
        let halved = base.with_k(base.k / 2.0_f64.sqrt());
        assert!(base.k * base.k / (2.0 * base.omega) <= 1e-4);
        let t_base = barrier_scattering(0.0, &base).unwrap().t_left[0][1].norm();
        let t_half = barrier_scattering(0.0, &halved).unwrap().t_left[0][1].norm();
        let ratio = t_half / t_base;
        let expected = 1.0 / 2.0_f64.sqrt();
        assert!(
            (ratio - expected).abs() < 0.1 * expected,
            "ratio {ratio} vs {expected}"
        );
    }

    #[test]
    fn resonance_estimate_values() {
        let est = resonance_estimates(0.1, 25.0, 2);
        assert_eq!(est.len(), 2);
        assert_eq!(est[0].n, 1);
        assert!((est[0].delta_n - 0.0028957).abs() < 1e-6);
        assert!((est[1].delta_n - 0.0265827).abs() < 1e-6);

        // Exclusion rule: k exactly at the first zero.
        let est = resonance_estimates(PI / 25.0, 25.0, 3);
        assert_eq!(est.first().unwrap().n, 2);
    }

    #[test]
    fn crossing_time_examples() {
        let p = presets::direct_regime(0.0);
        let t = crossing_times(&p).unwrap();
        assert_eq!(t.semiclassical, 25.0);
        assert_eq!(t.effective, 25.0);

        let p = presets::direct_regime(1.5);
        let t = crossing_times(&p).unwrap();
        assert_eq!(t.effective, 12.5); // q = sqrt(1 + 3) = 2

        // Diverges toward the cutoff and is undefined past it.
        let p = presets::direct_regime(-0.5 + 1e-9);
        assert!(crossing_times(&p).unwrap().effective > 1e3);
        assert!(crossing_times(&presets::direct_regime(-0.6)).is_err());
    }
}
