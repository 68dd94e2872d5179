//! Scoring estimates against ground truth and bistatic-angle sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cfar::{cfar_pipeline, CfarConfig, Detection};
use crate::error::{Error, Result};
use crate::mle::{estimate, MleConfig};
use crate::signal_model::{
    frame_mid_time, synthesize_frame, ChannelFrame, PathParams, RadarGrid, Scene, SphereTruth,
};
use crate::spectrum::hamming;

/// Identification box of `fraction` times the native resolution per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchBoundary {
    fraction: f64,
}

impl Default for MatchBoundary {
    fn default() -> Self {
        Self { fraction: 0.5 }
    }
}

impl MatchBoundary {
    pub fn new(fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!(
                "boundary fraction must lie in (0, 1], got {fraction}"
            )));
        }
        Ok(Self { fraction })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }
}

/// Outcome for one ground-truth sphere in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereOutcome {
    /// Index into the frame's estimate list.
    pub estimate: Option<usize>,
    /// `tau_hat - tau_gt` (s), present iff matched.
    pub tau_err: Option<f64>,
    /// `alpha_hat - alpha_gt` (Hz), present iff matched.
    pub alpha_err: Option<f64>,
}

impl SphereOutcome {
    pub fn matched(&self) -> bool {
        self.estimate.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: usize,
    pub spheres: Vec<SphereOutcome>,
    pub false_detections: usize,
    pub runtime_s: f64,
    /// Set when the estimator failed on this frame; it then counts as all misses.
    pub failed: bool,
}

impl FrameResult {
    pub fn matches(&self) -> usize {
        self.spheres.iter().filter(|s| s.matched()).count()
    }
}

/// Greedy one-to-one matching by normalised distance inside the boundary box.
///
/// Pairs are taken in ascending order of
/// `sqrt((d_tau / delta_tau)^2 + (d_alpha / delta_alpha)^2)`, ties broken by
/// estimate then sphere index; unmatched estimates are false detections.
pub fn assign_targets(
    estimates: &[PathParams],
    truth: &[SphereTruth],
    boundary: MatchBoundary,
    grid: &RadarGrid,
) -> FrameResult {
    let (dt, da) = (grid.delay_resolution(), grid.doppler_resolution());
    let mut pairs = Vec::new();
    for (e, est) in estimates.iter().enumerate() {
        for (s, gt) in truth.iter().enumerate() {
            let u = (est.delay - gt.delay) / dt;
            let v = (est.doppler - gt.doppler) / da;
            if u.abs() <= boundary.fraction && v.abs() <= boundary.fraction {
                pairs.push((u.hypot(v), e, s));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut spheres = vec![
        SphereOutcome {
            estimate: None,
            tau_err: None,
            alpha_err: None,
        };
        truth.len()
    ];
    let mut used = vec![false; estimates.len()];
    for (_, e, s) in pairs {
        if used[e] || spheres[s].matched() {
            continue;
        }
        used[e] = true;
        spheres[s] = SphereOutcome {
            estimate: Some(e),
            tau_err: Some(estimates[e].delay - truth[s].delay),
            alpha_err: Some(estimates[e].doppler - truth[s].doppler),
        };
    }
    let matched = used.iter().filter(|u| **u).count();
    FrameResult {
        frame: 0,
        spheres,
        false_detections: estimates.len() - matched,
        runtime_s: 0.0,
        failed: false,
    }
}

/// Matched (frame, sphere) pairs over all pairs.
pub fn detection_probability(results: &[FrameResult]) -> Result<f64> {
    let total: usize = results.iter().map(|r| r.spheres.len()).sum();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "detection probability of an empty result set".into(),
        ));
    }
    let hits: usize = results.iter().map(FrameResult::matches).sum();
    Ok(hits as f64 / total as f64)
}

/// Detection probability of sphere `sphere` alone.
pub fn sphere_detection_probability(results: &[FrameResult], sphere: usize) -> Result<f64> {
    let outcomes: Vec<&SphereOutcome> = results
        .iter()
        .filter_map(|r| r.spheres.get(sphere))
        .collect();
    if outcomes.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "no results for sphere {sphere}"
        )));
    }
    Ok(outcomes.iter().filter(|o| o.matched()).count() as f64 / outcomes.len() as f64)
}

/// `(delay RMSE s, Doppler RMSE Hz)` over matched spheres only.
pub fn rmse(results: &[FrameResult]) -> Result<(f64, f64)> {
    let (mut n, mut st, mut sa) = (0usize, 0.0, 0.0);
    for s in results.iter().flat_map(|r| &r.spheres) {
        if let (Some(t), Some(a)) = (s.tau_err, s.alpha_err) {
            n += 1;
            st += t * t;
            sa += a * a;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("RMSE without any match".into()));
    }
    Ok(((st / n as f64).sqrt(), (sa / n as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Cfar,
    Mle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Cfar, Algorithm::Mle];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Cfar => "cfar",
            Algorithm::Mle => "mle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfar" => Ok(Algorithm::Cfar),
            "mle" => Ok(Algorithm::Mle),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?}, expected one of: cfar, mle"
            ))),
        }
    }
}

/// CFAR detection as a path. The spectrum keeps no phase, so the weight is the
/// real magnitude `sqrt(power)` divided by the coherent gain of the 2D window.
pub fn detection_to_path(d: &Detection, grid: &RadarGrid) -> PathParams {
    let gain: f64 = hamming(grid.subcarriers()).iter().sum::<f64>()
        * hamming(grid.symbols()).iter().sum::<f64>();
    PathParams::new(
        Complex64::new(d.power.sqrt() / gain, 0.0),
        d.tau_hat,
        d.alpha_hat,
    )
}

/// Runs one estimator on one frame and returns its target list.
pub fn run_estimator(
    algorithm: Algorithm,
    frame: &ChannelFrame,
    cfar: &CfarConfig,
    mle: &MleConfig,
) -> Result<Vec<PathParams>> {
    match algorithm {
        Algorithm::Cfar => Ok(cfar_pipeline(frame, cfar)?
            .iter()
            .map(|d| detection_to_path(d, frame.grid()))
            .collect()),
        Algorithm::Mle => Ok(estimate(frame, mle)?
            .into_iter()
            .filter(|p| p.accepted)
            .map(|p| p.params)
            .collect()),
    }
}

/// LOS gain as a function of bistatic angle: a raised-cosine bump of height
/// `peak_db` and half-width `half_width_deg` around 0 and 180 degrees on top
/// of `floor_db`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosProfile {
    pub peak_db: f64,
    pub floor_db: f64,
    pub half_width_deg: f64,
}

impl Default for LosProfile {
    fn default() -> Self {
        Self {
            peak_db: 40.0,
            floor_db: 0.0,
            half_width_deg: 20.0,
        }
    }
}

impl LosProfile {
    /// The same gain at every angle.
    pub fn constant(gain_db: f64) -> Self {
        Self {
            peak_db: gain_db,
            floor_db: gain_db,
            half_width_deg: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_db.is_finite() && self.floor_db.is_finite()) {
            return Err(Error::Config("LOS profile gains must be finite".into()));
        }
        if !(self.half_width_deg > 0.0 && self.half_width_deg <= 90.0) {
            return Err(Error::Config(format!(
                "LOS half-width must lie in (0, 90] degrees, got {}",
                self.half_width_deg
            )));
        }
        Ok(())
    }

    pub fn gain_db(&self, angle_deg: f64) -> f64 {
        let a = angle_deg.rem_euclid(360.0);
        let a = if a > 180.0 { 360.0 - a } else { a };
        let d = a.min(180.0 - a);
        if d >= self.half_width_deg {
            return self.floor_db;
        }
        let bump = 0.5 * (1.0 + (std::f64::consts::PI * d / self.half_width_deg).cos());
        self.floor_db + (self.peak_db - self.floor_db) * bump
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub scene: Scene,
    pub grid: RadarGrid,
    pub angles_deg: Vec<f64>,
    pub frames_per_angle: usize,
    pub seed: u64,
    pub boundary: MatchBoundary,
    pub los_profile: LosProfile,
    pub cfar: CfarConfig,
    pub mle: MleConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.los_profile.validate()?;
        self.cfar.validate()?;
        self.mle.validate()?;
        if self.frames_per_angle == 0 {
            return Err(Error::Config("frames per angle must be >= 1".into()));
        }
        if self.angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("angles must be finite".into()));
        }
        Ok(())
    }

    /// Scene at angle `angle_deg` with the profile's LOS gain.
    pub fn scene_at(&self, angle_deg: f64) -> Scene {
        let mut scene = self.scene.with_bistatic_angle(angle_deg);
        scene.los_gain_db = self.los_profile.gain_db(angle_deg);
        scene
    }
}

/// Aggregated metrics for one (angle, algorithm) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub angle_deg: f64,
    pub algorithm: Algorithm,
    pub det_prob: f64,
    pub det_prob_per_sphere: Vec<f64>,
    /// `None` without any match.
    pub rmse: Option<(f64, f64)>,
    pub mean_runtime_s: f64,
    pub los_gain_db: f64,
    pub frames: usize,
    pub matches: usize,
    pub false_detections: usize,
    pub failed_frames: usize,
}

pub const RESULTS_HEADER: &str = "angle_deg,algorithm,det_prob,delay_rmse_s,doppler_rmse_hz,\
mean_runtime_s,los_gain_db,frames,matches,false_detections,det_prob_sphere1,det_prob_sphere2";

pub const DETAIL_HEADER: &str = "frame,sphere,matched,tau_err_s,alpha_err_hz";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepRow {
    /// Aggregates per-frame results; probabilities need at least one frame.
    pub fn from_results(
        angle_deg: f64,
        algorithm: Algorithm,
        los_gain_db: f64,
        results: &[FrameResult],
    ) -> Result<Self> {
        let spheres = results.iter().map(|r| r.spheres.len()).max().unwrap_or(0);
        Ok(Self {
            angle_deg,
            algorithm,
            det_prob: detection_probability(results)?,
            det_prob_per_sphere: (0..spheres)
                .map(|s| sphere_detection_probability(results, s))
                .collect::<Result<_>>()?,
            rmse: rmse(results).ok(),
            mean_runtime_s: results.iter().map(|r| r.runtime_s).sum::<f64>() / results.len() as f64,
            los_gain_db,
            frames: results.len(),
            matches: results.iter().map(FrameResult::matches).sum(),
            false_detections: results.iter().map(|r| r.false_detections).sum(),
            failed_frames: results.iter().filter(|r| r.failed).count(),
        })
    }

    /// One line matching [`RESULTS_HEADER`]. Without `timing` the runtime
    /// field is left empty so that repeated runs are byte-identical.
    pub fn csv_line(&self, timing: bool) -> String {
        let per_sphere: Vec<String> = (0..2)
            .map(|s| opt(self.det_prob_per_sphere.get(s).copied()))
            .collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.angle_deg,
            self.algorithm,
            self.det_prob,
            opt(self.rmse.map(|r| r.0)),
            opt(self.rmse.map(|r| r.1)),
            if timing {
                self.mean_runtime_s.to_string()
            } else {
                String::new()
            },
            self.los_gain_db,
            self.frames,
            self.matches,
            self.false_detections,
            per_sphere[0],
            per_sphere[1],
        )
    }
}

/// Lines matching [`DETAIL_HEADER`] for one frame.
pub fn detail_lines(result: &FrameResult) -> Vec<String> {
    result
        .spheres
        .iter()
        .enumerate()
        .map(|(s, o)| {
            format!(
                "{},{},{},{},{}",
                result.frame,
                s,
                u8::from(o.matched()),
                opt(o.tau_err),
                opt(o.alpha_err)
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per row, the per-frame results in frame order.
    pub frames: Vec<Vec<FrameResult>>,
}

/// Seed of global frame `index`: `seed + index`.
pub fn frame_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}

/// Synthesises frame `n` of the sweep cell at `angle_index` and its truth.
pub fn sweep_frame(
    config: &SweepConfig,
    scene: &Scene,
    angle_index: usize,
    n: usize,
) -> Result<(ChannelFrame, [SphereTruth; 2])> {
    let global = (angle_index * config.frames_per_angle + n) as u64;
    let seed = frame_seed(config.seed, global);
    let t = frame_mid_time(n, &config.grid);
    let truth = scene.ground_truth(t)?;
    let paths = scene.scene_paths(t, &config.grid, seed)?;
    let frame = synthesize_frame(&paths, &config.grid, scene.noise_std, seed)?;
    Ok((frame, truth))
}

/// Runs every algorithm at every angle. Frames are processed in parallel on
/// the current rayon pool; results do not depend on the pool size. Runtime is
/// measured around the estimator call only.
pub fn run_sweep(config: &SweepConfig, algorithms: &[Algorithm]) -> Result<SweepReport> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut frames = Vec::new();
    for (ai, &angle) in config.angles_deg.iter().enumerate() {
        let scene = config.scene_at(angle);
        let data: Vec<(ChannelFrame, [SphereTruth; 2])> = (0..config.frames_per_angle)
            .into_par_iter()
            .map(|n| sweep_frame(config, &scene, ai, n))
            .collect::<Result<_>>()?;
        for &alg in algorithms {
            let results: Vec<FrameResult> = data
                .par_iter()
                .enumerate()
                .map(|(n, (frame, truth))| {
                    let start = Instant::now();
                    let est = run_estimator(alg, frame, &config.cfar, &config.mle);
                    let runtime_s = start.elapsed().as_secs_f64();
                    let mut r = match est {
                        Ok(est) => assign_targets(&est, truth, config.boundary, &config.grid),
                        Err(_) => FrameResult {
                            frame: 0,
                            spheres: vec![
                                SphereOutcome {
                                    estimate: None,
                                    tau_err: None,
                                    alpha_err: None,
                                };
                                truth.len()
                            ],
                            false_detections: 0,
                            runtime_s: 0.0,
                            failed: true,
                        },
                    };
                    r.frame = n;
                    r.runtime_s = runtime_s;
                    r
                })
                .collect();
            rows.push(SweepRow::from_results(
                angle,
                alg,
                scene.los_gain_db,
                &results,
            )?);
            frames.push(results);
        }
    }
    Ok(SweepReport { rows, frames })
}
