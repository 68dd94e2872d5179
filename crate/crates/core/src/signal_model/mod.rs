//! Parametric channel model and synthetic frame generation.
//!
//! A frame is the complex baseband transfer function sampled on `K`
//! subcarriers (spacing `delta_f`) and `L` symbols (interval `delta_t`):
//!
//! ```text
//! H[k][l] = sum_p  gamma_p * exp(-j 2pi k tau_p delta_f) * exp(+j 2pi l alpha_p delta_t)  +  N[k][l]
//! ```
//!
//! Every atom is separable into a delay steering vector over `k` and a
//! Doppler steering vector over `l`; the estimators rely on that.

mod scene;

pub use scene::{frame_mid_time, GroundTruth, Scene, SphereTruth, SPEED_OF_LIGHT};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Sampling geometry of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarGrid {
    k: usize,
    l: usize,
    delta_f: f64,
    delta_t: f64,
}

impl RadarGrid {
    pub fn new(k: usize, l: usize, delta_f: f64, delta_t: f64) -> Result<Self> {
        if k < 2 || l < 2 {
            return Err(Error::Validation(format!(
                "grid needs K >= 2 and L >= 2, got K={k}, L={l}"
            )));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(Error::Validation(format!(
                "subcarrier spacing must be positive, got {delta_f}"
            )));
        }
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(Error::Validation(format!(
                "symbol interval must be positive, got {delta_t}"
            )));
        }
        Ok(Self {
            k,
            l,
            delta_f,
            delta_t,
        })
    }

    /// 1024 subcarriers at 156.25 kHz, 100 symbols at 64 us: 6.25 ns delay
    /// and 156.25 Hz Doppler resolution.
    pub fn default_measurement() -> Self {
        Self {
            k: 1024,
            l: 100,
            delta_f: 156_250.0,
            delta_t: 64e-6,
        }
    }

    pub fn subcarriers(&self) -> usize {
        self.k
    }

    pub fn symbols(&self) -> usize {
        self.l
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn len(&self) -> usize {
        self.k * self.l
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Delay resolution `1 / (K delta_f)` in seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.k as f64 * self.delta_f)
    }

    /// Doppler resolution `1 / (L delta_t)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.l as f64 * self.delta_t)
    }

    /// Exclusive upper bound of the unambiguous delay range, `1 / delta_f`.
    pub fn max_delay(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Exclusive bound on `|alpha|`, `1 / (2 delta_t)`.
    pub fn max_doppler(&self) -> f64 {
        0.5 / self.delta_t
    }

    /// Duration of one frame, `L delta_t`.
    pub fn frame_duration(&self) -> f64 {
        self.l as f64 * self.delta_t
    }
}

/// One specular path: complex weight, delay (s) and Doppler shift (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub weight: Complex64,
    pub delay: f64,
    pub doppler: f64,
}

impl PathParams {
    pub fn new(weight: Complex64, delay: f64, doppler: f64) -> Self {
        Self {
            weight,
            delay,
            doppler,
        }
    }

    /// Checks finiteness and the unambiguous ranges of `grid`.
    pub fn validate(&self, grid: &RadarGrid) -> Result<()> {
        self.validate_indexed(grid, None)
    }

    pub(crate) fn validate_indexed(&self, grid: &RadarGrid, index: Option<usize>) -> Result<()> {
        if !(self.weight.re.is_finite() && self.weight.im.is_finite()) {
            return Err(Error::Validation(format!(
                "path weight {} is not finite",
                self.weight
            )));
        }
        if !(self.delay.is_finite() && self.delay >= 0.0 && self.delay < grid.max_delay()) {
            return Err(Error::Range {
                index,
                reason: format!("delay {} s outside [0, {}) s", self.delay, grid.max_delay()),
            });
        }
        if !(self.doppler.is_finite() && self.doppler.abs() < grid.max_doppler()) {
            return Err(Error::Range {
                index,
                reason: format!(
                    "Doppler {} Hz outside (-{m}, {m}) Hz",
                    self.doppler,
                    m = grid.max_doppler()
                ),
            });
        }
        Ok(())
    }
}

/// Complex `K x L` observation, stored subcarrier-major (`k * L + l`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFrame {
    grid: RadarGrid,
    data: Vec<Complex64>,
}

impl ChannelFrame {
    pub fn new(grid: RadarGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Validation(format!(
                "frame holds {} samples, grid needs {}x{}",
                data.len(),
                grid.subcarriers(),
                grid.symbols()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::Validation(format!(
                "non-finite sample at k={}, l={}",
                i / grid.symbols(),
                i % grid.symbols()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: RadarGrid) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Internal constructor for data already known to be finite.
    pub(crate) fn from_raw(grid: RadarGrid, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &RadarGrid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[k * self.grid.symbols() + l]
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Element-wise difference `self - other`.
    pub fn sub(&self, other: &ChannelFrame) -> Result<ChannelFrame> {
        if self.grid != other.grid {
            return Err(Error::Validation("frames live on different grids".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_raw(self.grid, data))
    }
}

/// `exp(-j 2pi k tau delta_f)` for `k = 0..K`.
pub fn delay_steering(grid: &RadarGrid, delay: f64) -> Vec<Complex64> {
    let w = -2.0 * PI * delay * grid.delta_f();
    (0..grid.subcarriers())
        .map(|k| Complex64::from_polar(1.0, w * k as f64))
        .collect()
}

/// `exp(+j 2pi l alpha delta_t)` for `l = 0..L`.
pub fn doppler_steering(grid: &RadarGrid, doppler: f64) -> Vec<Complex64> {
    let w = 2.0 * PI * doppler * grid.delta_t();
    (0..grid.symbols())
        .map(|l| Complex64::from_polar(1.0, w * l as f64))
        .collect()
}

/// Noiseless superposition of `paths` without range checks.
pub(crate) fn superpose(paths: &[PathParams], grid: &RadarGrid) -> Vec<Complex64> {
    let (k_len, l_len) = (grid.subcarriers(), grid.symbols());
    let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
    for p in paths {
        let a = delay_steering(grid, p.delay);
        let b = doppler_steering(grid, p.doppler);
        for k in 0..k_len {
            let ga = p.weight * a[k];
            let row = &mut data[k * l_len..(k + 1) * l_len];
            for (z, bl) in row.iter_mut().zip(&b) {
                *z += ga * bl;
            }
        }
    }
    data
}

pub(crate) fn validate_paths(paths: &[PathParams], grid: &RadarGrid) -> Result<()> {
    paths
        .iter()
        .enumerate()
        .try_for_each(|(i, p)| p.validate_indexed(grid, Some(i)))
}

/// Generates one frame from `paths` plus circularly symmetric complex
/// Gaussian noise with `E|N|^2 = noise_std^2`. Deterministic in `rng_seed`.
pub fn synthesize_frame(
    paths: &[PathParams],
    grid: &RadarGrid,
    noise_std: f64,
    rng_seed: u64,
) -> Result<ChannelFrame> {
    validate_paths(paths, grid)?;
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::Validation(format!(
            "noise_std must be finite and >= 0, got {noise_std}"
        )));
    }
    let mut data = superpose(paths, grid);
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let scale = noise_std / std::f64::consts::SQRT_2;
        for z in data.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += Complex64::new(scale * re, scale * im);
        }
    }
    Ok(ChannelFrame::from_raw(*grid, data))
}

/// Noise standard deviation giving `snr_db` per sample for a path of
/// magnitude `weight_magnitude`.
pub fn noise_std_for_snr(snr_db: f64, weight_magnitude: f64) -> f64 {
    weight_magnitude * 10f64.powf(-snr_db / 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_entry(paths: &[PathParams], grid: &RadarGrid, k: usize, l: usize) -> Complex64 {
        paths
            .iter()
            .map(|p| {
                p.weight
                    * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * p.delay * grid.delta_f())
                    * Complex64::from_polar(1.0, 2.0 * PI * l as f64 * p.doppler * grid.delta_t())
            })
            .sum()
    }

    #[test]
    fn grid_resolutions_match_measurement_defaults() {
        let g = RadarGrid::default_measurement();
        assert!((g.delay_resolution() - 6.25e-9).abs() < 1e-20);
        assert!((g.doppler_resolution() - 156.25).abs() < 1e-9);
    }

    #[test]
    fn grid_rejects_degenerate_sizes() {
        assert!(RadarGrid::new(1, 4, 1.0, 1.0).is_err());
        assert!(RadarGrid::new(4, 0, 1.0, 1.0).is_err());
        assert!(RadarGrid::new(4, 4, 0.0, 1.0).is_err());
        assert!(RadarGrid::new(4, 4, 1.0, -1.0).is_err());
    }

    #[test]
    fn static_zero_delay_path_is_all_ones() {
        let g = RadarGrid::new(8, 4, 1e5, 1e-4).unwrap();
        let p = PathParams::new(Complex64::new(1.0, 0.0), 0.0, 0.0);
        let f = synthesize_frame(&[p], &g, 0.0, 1).unwrap();
        assert!(f.data().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn four_bin_delay_matches_direct_evaluation() {
        let g = RadarGrid::new(8, 4, 1e5, 1e-4).unwrap();
        let p = PathParams::new(Complex64::new(1.0, 0.0), 4.0 * g.delay_resolution(), 0.0);
        let f = synthesize_frame(&[p], &g, 0.0, 1).unwrap();
        for k in 0..8 {
            let expect = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * 4.0 / 8.0);
            for l in 0..4 {
                assert!((f.get(k, l) - expect).norm() < 1e-12);
            }
        }
        for k in 0..8 {
            for l in 0..4 {
                assert!((f.get(k, l) - naive_entry(&[p], &g, k, l)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn synthesis_is_linear_in_paths() {
        let g = RadarGrid::new(12, 10, 2e5, 5e-5).unwrap();
        let a = [PathParams::new(Complex64::new(0.3, -1.2), 1.3e-6, 410.0)];
        let b = [
            PathParams::new(Complex64::new(-2.0, 0.5), 0.4e-6, -1300.0),
            PathParams::new(Complex64::new(0.1, 0.1), 3.9e-6, 77.0),
        ];
        let all: Vec<_> = a.iter().chain(&b).copied().collect();
        let fa = synthesize_frame(&a, &g, 0.0, 0).unwrap();
        let fb = synthesize_frame(&b, &g, 0.0, 0).unwrap();
        let fab = synthesize_frame(&all, &g, 0.0, 0).unwrap();
        for i in 0..g.len() {
            assert!((fab.data()[i] - fa.data()[i] - fb.data()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_paths_are_rejected() {
        let g = RadarGrid::new(8, 8, 1e5, 1e-4).unwrap();
        let late = PathParams::new(Complex64::new(1.0, 0.0), g.max_delay(), 0.0);
        assert!(matches!(
            synthesize_frame(&[late], &g, 0.0, 0),
            Err(Error::Range { index: Some(0), .. })
        ));
        let fast = PathParams::new(Complex64::new(1.0, 0.0), 0.0, -g.max_doppler());
        assert!(matches!(
            synthesize_frame(&[fast], &g, 0.0, 0),
            Err(Error::Range { .. })
        ));
        let nan = PathParams::new(Complex64::new(f64::NAN, 0.0), 0.0, 0.0);
        assert!(matches!(
            synthesize_frame(&[nan], &g, 0.0, 0),
            Err(Error::Validation(_))
        ));
        assert!(synthesize_frame(&[], &g, -1.0, 0).is_err());
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let g = RadarGrid::new(16, 16, 1e5, 1e-4).unwrap();
        let a = synthesize_frame(&[], &g, 0.7, 42).unwrap();
        let b = synthesize_frame(&[], &g, 0.7, 42).unwrap();
        let c = synthesize_frame(&[], &g, 0.7, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_statistics_match_requested_variance() {
        // 2^17 samples; standard error of the variance estimate is ~sigma^2/sqrt(n).
        let g = RadarGrid::new(512, 256, 1e5, 1e-4).unwrap();
        let sigma = 1.7;
        let f = synthesize_frame(&[], &g, sigma, 9).unwrap();
        let n = g.len() as f64;
        let mean: Complex64 = f.data().iter().sum::<Complex64>() / n;
        let var = f.data().iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        let s2 = sigma * sigma;
        // E|z|^2 = s2, Var|z|^2 = s2^2 for circular Gaussian.
        assert!((var - s2).abs() < 3.0 * s2 / n.sqrt(), "var {var}");
        // Mean of each component has std sqrt(s2/2/n).
        let se = (s2 / 2.0 / n).sqrt();
        assert!(mean.re.abs() < 3.0 * se && mean.im.abs() < 3.0 * se);
        let re_var = f
            .data()
            .iter()
            .map(|z| (z.re - mean.re).powi(2))
            .sum::<f64>()
            / n;
        assert!((re_var - s2 / 2.0).abs() < 3.0 * (s2 / 2.0) * (2.0 / n).sqrt());
    }

    #[test]
    fn snr_helper_inverts_db() {
        assert!((noise_std_for_snr(20.0, 1.0) - 0.1).abs() < 1e-15);
        assert!((noise_std_for_snr(0.0, 2.0) - 2.0).abs() < 1e-15);
    }
}
