//! Frame preprocessing and the delay-Doppler power spectrum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal_model::{ChannelFrame, RadarGrid};

/// Magnitude-squared 2D DFT of a frame, `(K * pad_delay) x (L * pad_doppler)`,
/// stored delay-major.
///
/// Delay bin `i` maps to `i * delay_bin_width()`. Doppler bin `j` maps to
/// `wrap(j) * doppler_bin_width()` where bins in the upper half wrap to
/// negative Doppler.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerSpectrum {
    grid: RadarGrid,
    pad_delay: usize,
    pad_doppler: usize,
    power: Vec<f64>,
}

impl DelayDopplerSpectrum {
    /// Wraps an externally computed power map. Entries must be finite and
    /// non-negative.
    pub fn from_power(
        grid: RadarGrid,
        pad_delay: usize,
        pad_doppler: usize,
        power: Vec<f64>,
    ) -> Result<Self> {
        if pad_delay == 0 || pad_doppler == 0 {
            return Err(Error::Validation(
                "zero-padding factors must be >= 1".into(),
            ));
        }
        let expect = grid.len() * pad_delay * pad_doppler;
        if power.len() != expect {
            return Err(Error::Validation(format!(
                "power map holds {} bins, expected {expect}",
                power.len()
            )));
        }
        if power.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Validation(
                "power entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            grid,
            pad_delay,
            pad_doppler,
            power,
        })
    }

    pub fn grid(&self) -> &RadarGrid {
        &self.grid
    }

    pub fn delay_bins(&self) -> usize {
        self.grid.subcarriers() * self.pad_delay
    }

    pub fn doppler_bins(&self) -> usize {
        self.grid.symbols() * self.pad_doppler
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn get(&self, delay_bin: usize, doppler_bin: usize) -> f64 {
        self.power[delay_bin * self.doppler_bins() + doppler_bin]
    }

    /// Power with toroidal wrap on both axes.
    pub fn get_wrapped(&self, delay_bin: isize, doppler_bin: isize) -> f64 {
        let i = delay_bin.rem_euclid(self.delay_bins() as isize) as usize;
        let j = doppler_bin.rem_euclid(self.doppler_bins() as isize) as usize;
        self.get(i, j)
    }

    pub fn delay_bin_width(&self) -> f64 {
        self.grid.delay_resolution() / self.pad_delay as f64
    }

    pub fn doppler_bin_width(&self) -> f64 {
        self.grid.doppler_resolution() / self.pad_doppler as f64
    }

    /// Signed Doppler bin index for `j`.
    pub fn wrap_doppler(&self, doppler_bin: f64) -> f64 {
        let n = self.doppler_bins() as f64;
        let j = doppler_bin.rem_euclid(n);
        if j >= n / 2.0 {
            j - n
        } else {
            j
        }
    }

    /// Physical `(delay, doppler)` at fractional bin coordinates.
    pub fn bin_to_params(&self, delay_bin: f64, doppler_bin: f64) -> (f64, f64) {
        let i = delay_bin.rem_euclid(self.delay_bins() as f64);
        (
            i * self.delay_bin_width(),
            self.wrap_doppler(doppler_bin) * self.doppler_bin_width(),
        )
    }

    /// Nearest bin to `(delay, doppler)`.
    pub fn params_to_bin(&self, delay: f64, doppler: f64) -> (usize, usize) {
        let i = (delay / self.delay_bin_width()).round() as i64;
        let j = (doppler / self.doppler_bin_width()).round() as i64;
        (
            i.rem_euclid(self.delay_bins() as i64) as usize,
            j.rem_euclid(self.doppler_bins() as i64) as usize,
        )
    }

    /// Bin coordinates of the largest entry (first one on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (idx, p) in self.power.iter().enumerate() {
            if *p > self.power[best] {
                best = idx;
            }
        }
        (best / self.doppler_bins(), best % self.doppler_bins())
    }
}

/// Removes the per-subcarrier temporal mean, i.e. projects out the
/// zero-Doppler subspace.
pub fn background_subtract(frame: &ChannelFrame) -> ChannelFrame {
    let l_len = frame.grid().symbols();
    let mut data = frame.data().to_vec();
    for row in data.chunks_exact_mut(l_len) {
        let mean = row.iter().sum::<Complex64>() / l_len as f64;
        row.iter_mut().for_each(|z| *z -= mean);
    }
    ChannelFrame::from_raw(*frame.grid(), data)
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi n / (N - 1))`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

/// Separable 2D Hamming taper over subcarriers and symbols.
pub fn hamming_window(frame: &ChannelFrame) -> ChannelFrame {
    let grid = frame.grid();
    let wk = hamming(grid.subcarriers());
    let wl = hamming(grid.symbols());
    let l_len = grid.symbols();
    let data = frame
        .data()
        .iter()
        .enumerate()
        .map(|(idx, z)| z * (wk[idx / l_len] * wl[idx % l_len]))
        .collect();
    ChannelFrame::from_raw(*grid, data)
}

/// Zero-padded delay-Doppler periodogram.
///
/// `power[i][j] = |sum_{k,l} H[k][l] exp(+j2pi k i / (K pd)) exp(-j2pi l j / (L pv))|^2`,
/// so a path at `(tau, alpha)` peaks at delay bin `tau / delta_tau * pd` and
/// Doppler bin `alpha / delta_alpha * pv` (mod `L pv`).
pub fn periodogram(
    frame: &ChannelFrame,
    zero_pad_delay: usize,
    zero_pad_doppler: usize,
) -> Result<DelayDopplerSpectrum> {
    if zero_pad_delay == 0 || zero_pad_doppler == 0 {
        return Err(Error::Validation(
            "zero-padding factors must be >= 1".into(),
        ));
    }
    let grid = *frame.grid();
    let (k_len, l_len) = (grid.subcarriers(), grid.symbols());
    let nd = k_len * zero_pad_delay;
    let nv = l_len * zero_pad_doppler;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nv);
    let inv = planner.plan_fft_inverse(nd);

    // Doppler axis first: only the K populated rows need transforming.
    let mut rows = vec![Complex64::new(0.0, 0.0); k_len * nv];
    for (k, row) in rows.chunks_exact_mut(nv).enumerate() {
        row[..l_len].copy_from_slice(&frame.data()[k * l_len..(k + 1) * l_len]);
    }
    fwd.process(&mut rows);

    // Delay axis, column by column.
    let mut power = vec![0.0; nd * nv];
    let mut col = vec![Complex64::new(0.0, 0.0); nd];
    let mut scratch = vec![Complex64::new(0.0, 0.0); inv.get_inplace_scratch_len()];
    for j in 0..nv {
        col.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for k in 0..k_len {
            col[k] = rows[k * nv + j];
        }
        inv.process_with_scratch(&mut col, &mut scratch);
        for (i, z) in col.iter().enumerate() {
            power[i * nv + j] = z.norm_sqr();
        }
    }

    Ok(DelayDopplerSpectrum {
        grid,
        pad_delay: zero_pad_delay,
        pad_doppler: zero_pad_doppler,
        power,
    })
}
