//! Flat `section.key = value` configuration.
//!
//! Every value is parsed on entry and stored in canonical form, so the echoed
//! config and its hash do not depend on how a number was spelled.

use std::collections::BTreeMap;
use std::path::Path;

use delay_doppler::cfar::CfarConfig;
use delay_doppler::eval::{Algorithm, LosProfile, MatchBoundary, SweepConfig};
use delay_doppler::mle::MleConfig;
use delay_doppler::signal_model::{noise_std_for_snr, RadarGrid, Scene, SPEED_OF_LIGHT};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy)]
enum Kind {
    Usize,
    U64,
    F64,
    Bool,
    F64List,
    Algorithm,
    AlgorithmList,
}

const KEYS: &[(&str, Kind, &str)] = &[
    ("bench.frames", Kind::Usize, "5"),
    ("cfar.alpha_os", Kind::F64, "11.39"),
    ("cfar.background_subtraction", Kind::Bool, "true"),
    ("cfar.guard_delay", Kind::Usize, "1"),
    ("cfar.guard_doppler", Kind::Usize, "1"),
    ("cfar.m_ref", Kind::Usize, "15"),
    ("cfar.n_ref", Kind::Usize, "7"),
    ("cfar.rank", Kind::Usize, "79"),
    ("eval.boundary", Kind::F64, "0.5"),
    ("general.seed", Kind::U64, "0"),
    ("grid.delta_f", Kind::F64, "156250"),
    ("grid.delta_t", Kind::F64, "0.000064"),
    ("grid.k", Kind::Usize, "1024"),
    ("grid.l", Kind::Usize, "100"),
    ("los.floor_db", Kind::F64, "0"),
    ("los.half_width_deg", Kind::F64, "20"),
    ("los.peak_db", Kind::F64, "40"),
    ("mle.background_subtraction", Kind::Bool, "true"),
    ("mle.damping_init", Kind::F64, "0.001"),
    ("mle.n_grad_max", Kind::Usize, "50"),
    ("mle.p_max", Kind::Usize, "25"),
    ("mle.step_tol", Kind::F64, "1e-10"),
    ("mle.validity_snr_db", Kind::F64, "17"),
    ("output.timing", Kind::Bool, "false"),
    ("run.algorithm", Kind::Algorithm, "mle"),
    ("scene.bistatic_angle_deg", Kind::F64, "20"),
    ("scene.carrier_hz", Kind::F64, "5.9e9"),
    ("scene.distance_m", Kind::F64, "3"),
    ("scene.los_gain_db", Kind::F64, "0"),
    ("scene.phase1_rad", Kind::F64, "0"),
    ("scene.phase2_rad", Kind::F64, "3.141592653589793"),
    ("scene.radius1_m", Kind::F64, "0.5"),
    ("scene.radius2_m", Kind::F64, "0.35"),
    ("scene.rotation_rate_rad_s", Kind::F64, "25.132741228718345"),
    ("scene.snr_db", Kind::F64, "20"),
    ("sweep.algorithms", Kind::AlgorithmList, "cfar,mle"),
    ("sweep.angles_deg", Kind::F64List, "0,20,90,180"),
    ("sweep.frames", Kind::Usize, "50"),
    ("synth.frames", Kind::Usize, "10"),
];

fn parse_f64(key: &str, s: &str) -> CliResult<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: expected a number, got {s:?}")))?;
    if !v.is_finite() {
        return Err(CliError::Usage(format!(
            "{key}: value must be finite, got {s:?}"
        )));
    }
    Ok(v)
}

fn canonical(key: &str, kind: Kind, raw: &str) -> CliResult<String> {
    let s = raw.trim();
    let bad = |what: &str| CliError::Usage(format!("{key}: expected {what}, got {s:?}"));
    Ok(match kind {
        Kind::Usize => s
            .parse::<usize>()
            .map_err(|_| bad("a non-negative integer"))?
            .to_string(),
        Kind::U64 => s
            .parse::<u64>()
            .map_err(|_| bad("a non-negative integer"))?
            .to_string(),
        Kind::F64 => parse_f64(key, s)?.to_string(),
        Kind::Bool => s
            .parse::<bool>()
            .map_err(|_| bad("true or false"))?
            .to_string(),
        Kind::F64List => s
            .split(',')
            .map(|x| parse_f64(key, x.trim()).map(|v| v.to_string()))
            .collect::<CliResult<Vec<_>>>()?
            .join(","),
        Kind::Algorithm => s
            .parse::<Algorithm>()
            .map_err(|e| CliError::Usage(format!("{key}: {e}")))?
            .to_string(),
        Kind::AlgorithmList => s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<Algorithm>()
                    .map(|a| a.to_string())
                    .map_err(|e| CliError::Usage(format!("{key}: {e}")))
            })
            .collect::<CliResult<Vec<_>>>()?
            .join(","),
    })
}

/// Effective configuration of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|&(k, kind, v)| (k, canonical(k, kind, v).expect("default parses")))
            .collect();
        Self { values }
    }
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|k| k.0)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let &(k, kind, _) = KEYS
            .iter()
            .find(|e| e.0 == key.trim())
            .ok_or_else(|| CliError::Usage(format!("unknown config key {:?}", key.trim())))?;
        self.values.insert(k, canonical(k, kind, value)?);
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Applies one `key=value` assignment.
    pub fn set_assignment(&mut self, assignment: &str) -> CliResult<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.set_assignment(line)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Sorted `key = value` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &str)> {
        self.values.iter().map(|(k, v)| (*k, v.as_str()))
    }

    /// SHA-256 over the canonical `key = value\n` listing.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            h.update(format!("{k} = {v}\n").as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn usize(&self, key: &str) -> usize {
        self.get(key).parse().expect("canonical usize")
    }

    fn f64(&self, key: &str) -> f64 {
        self.get(key).parse().expect("canonical f64")
    }

    fn bool(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    pub fn seed(&self) -> u64 {
        self.get("general.seed").parse().expect("canonical u64")
    }

    pub fn timing(&self) -> bool {
        self.bool("output.timing")
    }

    pub fn frames(&self, section: &str) -> usize {
        self.usize(&format!("{section}.frames"))
    }

    pub fn algorithm(&self) -> Algorithm {
        self.get("run.algorithm")
            .parse()
            .expect("canonical algorithm")
    }

    pub fn sweep_algorithms(&self) -> Vec<Algorithm> {
        self.get("sweep.algorithms")
            .split(',')
            .map(|a| a.parse().expect("canonical algorithm"))
            .collect()
    }

    pub fn sweep_angles(&self) -> Vec<f64> {
        self.get("sweep.angles_deg")
            .split(',')
            .map(|a| a.parse().expect("canonical f64"))
            .collect()
    }

    pub fn grid(&self) -> CliResult<RadarGrid> {
        Ok(RadarGrid::new(
            self.usize("grid.k"),
            self.usize("grid.l"),
            self.f64("grid.delta_f"),
            self.f64("grid.delta_t"),
        )?)
    }

    /// Scene at `scene.bistatic_angle_deg` with `scene.los_gain_db`.
    pub fn scene(&self) -> CliResult<Scene> {
        let d = self.f64("scene.distance_m");
        let base = Scene {
            tx_pos: [d, 0.0, 0.0],
            rx_pos: [d, 0.0, 0.0],
            turntable_center: [0.0; 3],
            sphere_radii: [self.f64("scene.radius1_m"), self.f64("scene.radius2_m")],
            initial_phases: [self.f64("scene.phase1_rad"), self.f64("scene.phase2_rad")],
            rotation_rate: self.f64("scene.rotation_rate_rad_s"),
            wavelength: SPEED_OF_LIGHT / self.f64("scene.carrier_hz"),
            los_gain_db: self.f64("scene.los_gain_db"),
            static_clutter: Vec::new(),
            noise_std: noise_std_for_snr(self.f64("scene.snr_db"), 1.0),
        };
        let scene = base.with_bistatic_angle(self.f64("scene.bistatic_angle_deg"));
        scene.validate()?;
        Ok(scene)
    }

    pub fn los_profile(&self) -> LosProfile {
        LosProfile {
            peak_db: self.f64("los.peak_db"),
            floor_db: self.f64("los.floor_db"),
            half_width_deg: self.f64("los.half_width_deg"),
        }
    }

    pub fn boundary(&self) -> CliResult<MatchBoundary> {
        Ok(MatchBoundary::new(self.f64("eval.boundary"))?)
    }

    pub fn cfar(&self) -> CliResult<CfarConfig> {
        let c = CfarConfig {
            m_ref: self.usize("cfar.m_ref"),
            n_ref: self.usize("cfar.n_ref"),
            guard_delay: self.usize("cfar.guard_delay"),
            guard_doppler: self.usize("cfar.guard_doppler"),
            rank: self.usize("cfar.rank"),
            alpha_os: self.f64("cfar.alpha_os"),
            background_subtraction: self.bool("cfar.background_subtraction"),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn mle(&self) -> CliResult<MleConfig> {
        let c = MleConfig {
            p_max: self.usize("mle.p_max"),
            n_grad_max: self.usize("mle.n_grad_max"),
            step_tol: self.f64("mle.step_tol"),
            validity_snr_db: self.f64("mle.validity_snr_db"),
            damping_init: self.f64("mle.damping_init"),
            background_subtraction: self.bool("mle.background_subtraction"),
        };
        c.validate()?;
        Ok(c)
    }

    /// Sweep over `angles` with `frames` frames each. The LOS gain follows
    /// the `los.*` profile.
    pub fn sweep_config(&self, angles: Vec<f64>, frames: usize) -> CliResult<SweepConfig> {
        let c = SweepConfig {
            scene: self.scene()?,
            grid: self.grid()?,
            angles_deg: angles,
            frames_per_angle: frames,
            seed: self.seed(),
            boundary: self.boundary()?,
            los_profile: self.los_profile(),
            cfar: self.cfar()?,
            mle: self.mle()?,
        };
        c.validate()?;
        Ok(c)
    }

    /// Single-angle sweep reproducing the `scene.*` settings exactly, used to
    /// synthesise datasets.
    pub fn synth_config(&self, frames: usize) -> CliResult<SweepConfig> {
        let mut c = self.sweep_config(vec![self.f64("scene.bistatic_angle_deg")], frames)?;
        c.los_profile = LosProfile::constant(self.f64("scene.los_gain_db"));
        c.validate()?;
        Ok(c)
    }

    pub fn angle_deg(&self) -> f64 {
        self.f64("scene.bistatic_angle_deg")
    }

    pub fn los_gain_db(&self) -> f64 {
        self.f64("scene.los_gain_db")
    }
}
