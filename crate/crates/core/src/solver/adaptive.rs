use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::grad::project_ball;

/// Radius used to project `z` before an adaptive step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RadiusChoice {
    /// `C_F = C_f C_g`
    CF,
    /// `L_f`
    LF,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "kebab-case"))]
#[derive(Default)]
pub enum AdaptiveMode {
    #[default]
    Off,
    /// `h = h'`
    Adam {
        #[cfg_attr(feature = "serde", serde(default = "default_delta"))]
        delta: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_beta_prime"))]
        beta_prime: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_radius"))]
        radius: RadiusChoice,
    },
    /// `h = max(h_prev, h')`
    Amsgrad {
        #[cfg_attr(feature = "serde", serde(default = "default_delta"))]
        delta: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_beta_prime"))]
        beta_prime: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_radius"))]
        radius: RadiusChoice,
    },
}

#[cfg(feature = "serde")]
fn default_delta() -> f64 {
    1e-8
}

/// Weight of the newest `z^2`.
#[cfg(feature = "serde")]
fn default_beta_prime() -> f64 {
    1e-3
}

#[cfg(feature = "serde")]
fn default_radius() -> RadiusChoice {
    RadiusChoice::CF
}


impl AdaptiveMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AdaptiveMode::Off => Ok(()),
            AdaptiveMode::Adam { delta, beta_prime, .. } | AdaptiveMode::Amsgrad { delta, beta_prime, .. } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(Error::Config("adaptive delta must be positive".into()));
                }
                if !(0.0..=1.0).contains(&beta_prime) {
                    return Err(Error::Config("adaptive beta' must lie in [0, 1]".into()));
                }
                Ok(())
            }
        }
    }

    pub fn radius(&self) -> Option<RadiusChoice> {
        match *self {
            AdaptiveMode::Off => None,
            AdaptiveMode::Adam { radius, .. } | AdaptiveMode::Amsgrad { radius, .. } => Some(radius),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveState {
    pub h_prime: Vec<f64>,
    pub h: Vec<f64>,
    pub delta: f64,
    pub beta_prime: f64,
    pub amsgrad: bool,
}

impl AdaptiveState {
    pub fn new(mode: &AdaptiveMode, dim: usize) -> Result<Option<Self>> {
        mode.validate()?;
        Ok(match *mode {
            AdaptiveMode::Off => None,
            AdaptiveMode::Adam { delta, beta_prime, .. } => Some(AdaptiveState {
                h_prime: vec![0.0; dim],
                h: vec![0.0; dim],
                delta,
                beta_prime,
                amsgrad: false,
            }),
            AdaptiveMode::Amsgrad { delta, beta_prime, .. } => Some(AdaptiveState {
                h_prime: vec![0.0; dim],
                h: vec![0.0; dim],
                delta,
                beta_prime,
                amsgrad: true,
            }),
        })
    }
}

/// `h' <- (1 - b') h' + b' v^2`, `h <- h'` or `max(h, h')`,
/// `w <- w - eta / (sqrt(h) + delta) * v` with `v = P_radius[z] + extra`.
///
/// `extra` carries any direct (non-nested) gradient term and is not
/// projected.
pub fn adaptive_step(
    w: &mut [f64],
    z: &[f64],
    extra: Option<&[f64]>,
    state: &mut AdaptiveState,
    eta: f64,
    radius: Option<f64>,
) -> Result<()> {
    check_len("adaptive_step", w.len(), z.len())?;
    check_len("adaptive_step", w.len(), state.h.len())?;
    if !(state.delta > 0.0) {
        return Err(Error::Config("adaptive delta must be positive".into()));
    }
    let mut v = match radius {
        Some(r) => project_ball(z, r),
        None => z.to_vec(),
    };
    if let Some(d) = extra {
        check_len("adaptive_step", w.len(), d.len())?;
        for (vk, dk) in v.iter_mut().zip(d) {
            *vk += dk;
        }
    }
    let bp = state.beta_prime;
    for k in 0..w.len() {
        let hp = (1.0 - bp) * state.h_prime[k] + bp * v[k] * v[k];
        state.h_prime[k] = hp;
        state.h[k] = if state.amsgrad { state.h[k].max(hp) } else { hp };
        w[k] -= eta / (libm::sqrt(state.h[k]) + state.delta) * v[k];
    }
    Ok(())
}
