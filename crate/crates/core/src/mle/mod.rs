//! Iterative maximum-likelihood path estimation.
//!
//! Each round picks the strongest periodogram peak of the residual, refines
//! all paths jointly with damped Gauss-Newton and keeps the new path only if
//! its weight is reliable relative to the Cramer-Rao bound.

mod crb;
mod fit;

pub use crb::{crb_weight_variance, fisher_information};
pub use fit::{
    gauss_newton_refine, model_jacobian, model_response, refine_with_trace, solve_weights,
    Refinement,
};

use std::f64::consts::LN_2;

use num_complex::Complex64;

use crate::cfar::log_parabolic_offset;
use crate::error::{Error, Result};
use crate::signal_model::{delay_steering, doppler_steering, ChannelFrame, PathParams};
use crate::spectrum::{background_subtract, periodogram};

/// Residual energy below this fraction of the input energy ends the search.
const RESIDUAL_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleConfig {
    pub p_max: usize,
    pub n_grad_max: usize,
    /// Relative parameter change (bin units) that ends Gauss-Newton.
    pub step_tol: f64,
    /// Minimum `|gamma|^2 / var(|gamma|)` in dB for a path to be kept.
    pub validity_snr_db: f64,
    pub damping_init: f64,
    pub background_subtraction: bool,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            p_max: 25,
            n_grad_max: 50,
            step_tol: 1e-10,
            validity_snr_db: 17.0,
            damping_init: 1e-3,
            background_subtraction: true,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_max == 0 {
            return Err(Error::Config("mle.p_max must be >= 1".into()));
        }
        if self.n_grad_max == 0 {
            return Err(Error::Config("mle.n_grad_max must be >= 1".into()));
        }
        if !(self.step_tol > 0.0 && self.step_tol.is_finite()) {
            return Err(Error::Config("mle.step_tol must be positive".into()));
        }
        if !(self.damping_init >= 0.0 && self.damping_init.is_finite()) {
            return Err(Error::Config("mle.damping_init must be >= 0".into()));
        }
        if !self.validity_snr_db.is_finite() {
            return Err(Error::Config("mle.validity_snr_db must be finite".into()));
        }
        Ok(())
    }

    fn snr_threshold(&self) -> f64 {
        10f64.powf(self.validity_snr_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedPath {
    pub params: PathParams,
    /// Cramer-Rao variance of `|gamma|`.
    pub weight_variance: f64,
    pub accepted: bool,
}

impl EstimatedPath {
    /// `|gamma|^2 / weight_variance` in dB.
    pub fn weight_snr_db(&self) -> f64 {
        10.0 * (self.params.weight.norm_sqr() / self.weight_variance).log10()
    }
}

/// Full result of [`estimate_detailed`].
#[derive(Debug, Clone)]
pub struct MleOutcome {
    /// Accepted paths in detection order, followed by the rejected candidate
    /// that ended the search, if any.
    pub paths: Vec<EstimatedPath>,
    /// Preprocessed frame minus the equally preprocessed model of the
    /// accepted paths.
    pub residual: ChannelFrame,
    /// Noise variance used for the final validity test.
    pub noise_var: f64,
    /// Residual energy before the first path and after each accepted one.
    pub residual_energies: Vec<f64>,
}

impl MleOutcome {
    pub fn accepted(&self) -> impl Iterator<Item = &EstimatedPath> {
        self.paths.iter().filter(|p| p.accepted)
    }
}

/// Strongest peak of the 2x zero-padded residual periodogram, refined by a
/// log-power parabola per axis, with the one-atom least-squares weight.
/// `None` for an all-zero residual.
pub fn initial_candidate(residual: &ChannelFrame) -> Result<Option<PathParams>> {
    if residual
        .data()
        .iter()
        .all(|z| *z == Complex64::new(0.0, 0.0))
    {
        return Ok(None);
    }
    let spectrum = periodogram(residual, 2, 2)?;
    let (i, j) = spectrum.argmax();
    let (i, j) = (i as isize, j as isize);
    let s0 = spectrum.get_wrapped(i, j);
    let di = log_parabolic_offset(
        spectrum.get_wrapped(i - 1, j),
        s0,
        spectrum.get_wrapped(i + 1, j),
    );
    let dj = log_parabolic_offset(
        spectrum.get_wrapped(i, j - 1),
        s0,
        spectrum.get_wrapped(i, j + 1),
    );
    let (delay, doppler) =
        spectrum.bin_to_params(i as f64 + di.unwrap_or(0.0), j as f64 + dj.unwrap_or(0.0));
    let grid = residual.grid();
    let a = delay_steering(grid, delay);
    let b = doppler_steering(grid, doppler);
    let l_len = grid.symbols();
    let proj: Complex64 = residual
        .data()
        .iter()
        .enumerate()
        .map(|(idx, h)| (a[idx / l_len] * b[idx % l_len]).conj() * h)
        .sum();
    Ok(Some(PathParams::new(
        proj / grid.len() as f64,
        delay,
        doppler,
    )))
}

/// Noise variance from the median of the unpadded periodogram: each noise bin
/// is exponential with mean `K L sigma^2`, whose median is `ln 2` times that.
pub fn estimate_noise_variance(residual: &ChannelFrame) -> Result<f64> {
    let spectrum = periodogram(residual, 1, 1)?;
    let mut p = spectrum.power().to_vec();
    let mid = p.len() / 2;
    let (_, median, _) = p.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*median / (LN_2 * residual.grid().len() as f64))
}

/// `frame - model`, with the model background-subtracted when `project` is set.
fn residual_of(frame: &ChannelFrame, paths: &[PathParams], project: bool) -> Result<ChannelFrame> {
    let model = model_response(paths, frame.grid())?;
    if project {
        frame.sub(&background_subtract(&model))
    } else {
        frame.sub(&model)
    }
}

/// Successive detection, joint refinement and CRB validity testing.
pub fn estimate_detailed(frame: &ChannelFrame, config: &MleConfig) -> Result<MleOutcome> {
    config.validate()?;
    let input = if config.background_subtraction {
        background_subtract(frame)
    } else {
        frame.clone()
    };
    let grid = *input.grid();
    let total = input.energy();
    // Keeps the CRB finite on noiseless frames.
    let noise_floor = (total * 1e-30 / grid.len() as f64).max(f64::MIN_POSITIVE);
    let threshold = config.snr_threshold();

    let mut accepted: Vec<PathParams> = Vec::new();
    let mut variances: Vec<f64> = Vec::new();
    let mut residual = input.clone();
    let mut noise_var = estimate_noise_variance(&residual)?.max(noise_floor);
    let mut rejected = None;
    let mut residual_energies = vec![residual.energy()];

    while accepted.len() < config.p_max {
        if residual.energy() <= RESIDUAL_FLOOR * total {
            break;
        }
        noise_var = estimate_noise_variance(&residual)?.max(noise_floor);
        let Some(candidate) = initial_candidate(&residual)? else {
            break;
        };
        let mut trial = accepted.clone();
        trial.push(candidate);
        let refined = match gauss_newton_refine(&trial, &input, config) {
            Ok(r) => r,
            // The candidate collapsed onto an existing path.
            Err(Error::IllConditioned { .. }) => break,
            Err(e) => return Err(e),
        };
        let vars =
            match crb::crb_projected(&refined, &grid, noise_var, config.background_subtraction) {
                Ok(v) => v,
                Err(Error::SingularFisher { .. }) => {
                    rejected = Some(EstimatedPath {
                        params: refined[refined.len() - 1],
                        weight_variance: f64::INFINITY,
                        accepted: false,
                    });
                    break;
                }
                Err(e) => return Err(e),
            };
        let reliable = refined
            .iter()
            .zip(&vars)
            .all(|(p, v)| p.weight.norm_sqr() >= threshold * v);
        if !reliable {
            rejected = Some(EstimatedPath {
                params: refined[refined.len() - 1],
                weight_variance: vars[vars.len() - 1],
                accepted: false,
            });
            break;
        }
        residual = residual_of(&input, &refined, config.background_subtraction)?;
        accepted = refined;
        variances = vars;
        residual_energies.push(residual.energy());
    }

    let mut paths: Vec<EstimatedPath> = accepted
        .into_iter()
        .zip(variances)
        .map(|(params, weight_variance)| EstimatedPath {
            params,
            weight_variance,
            accepted: true,
        })
        .collect();
    paths.extend(rejected);
    Ok(MleOutcome {
        paths,
        residual,
        noise_var,
        residual_energies,
    })
}

/// Accepted paths followed by the rejected candidate that ended the search.
pub fn estimate(frame: &ChannelFrame, config: &MleConfig) -> Result<Vec<EstimatedPath>> {
    estimate_detailed(frame, config).map(|o| o.paths)
}
