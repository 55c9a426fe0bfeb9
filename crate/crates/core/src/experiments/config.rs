//! Experiment configuration: a JSON document deep-merged over a built-in
//! profile, then validated as a whole.

use crate::error::{Error, Result};
use crate::ground_truth::{make_ground_truth, GroundTruth, TruthMode};
use crate::sensing::{EnsembleKind, EnsembleSpec, MeasurementEnsemble};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Environment variable that overrides `outputs.dir`.
pub const OUT_DIR_ENV: &str = "MSENSE_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile `{other}` (expected desk or paper)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub d: usize,
    pub r_star: usize,
    pub mode: TruthMode,
    /// Required in orthogonalized mode, ignored in gaussian mode.
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunGrid {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub r_hat: Vec<usize>,
    pub t_max: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Ranks `s` for which `Z_s^*` is solved.
    pub ranks: Vec<usize>,
    pub restarts: usize,
    pub max_iters: usize,
    /// Gradient tolerance; `null` selects `1e-9 ‖X‖³`.
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipSpec {
    /// Probed rank; `null` selects `min(2 r_star + 1, d)`.
    #[serde(default)]
    pub rank: Option<usize>,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
    pub stride: usize,
    pub plots: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Samples per RSI sweep.
    pub samples: usize,
    /// Random pairs for the Procrustes oracle and the lower-bound sweep.
    pub pairs: usize,
    /// Multiplier on the RSI radii; above 1 the sweeps are reported but not
    /// asserted.
    pub rsi_radius_scale: f64,
    pub probes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ground_truth: TruthSpec,
    pub ensemble: EnsembleSpec,
    pub grid: RunGrid,
    pub references: ReferenceSpec,
    pub rip: RipSpec,
    pub outputs: OutputSpec,
    pub verify: VerifySpec,
}

impl Profile {
    pub fn defaults(self) -> ExperimentConfig {
        let verify = VerifySpec {
            samples: 1000,
            pairs: 100,
            rsi_radius_scale: 1.0,
            probes: 200,
            seed: 7,
        };
        match self {
            Profile::Desk => {
                let r2 = 2f64.sqrt();
                ExperimentConfig {
                    ground_truth: TruthSpec {
                        d: 30,
                        r_star: 4,
                        mode: TruthMode::Orthogonalized,
                        sigmas: Some(vec![2.0 * r2, 2.0, r2, 1.0]),
                        seed: 1,
                    },
                    ensemble: EnsembleSpec {
                        kind: EnsembleKind::Gaussian,
                        m: 1500,
                        seed: 2,
                    },
                    grid: RunGrid {
                        alpha: vec![1e-3],
                        mu: vec![0.005],
                        r_hat: vec![30],
                        t_max: vec![4000],
                        seeds: vec![0],
                    },
                    references: ReferenceSpec {
                        ranks: vec![1, 2, 3, 4],
                        restarts: 3,
                        max_iters: 200_000,
                        tol: None,
                    },
                    rip: RipSpec {
                        rank: None,
                        samples: 200,
                        seed: 3,
                    },
                    outputs: OutputSpec {
                        dir: "out".into(),
                        stride: 10,
                        plots: true,
                    },
                    verify,
                }
            }
            Profile::Paper => ExperimentConfig {
                ground_truth: TruthSpec {
                    d: 50,
                    r_star: 5,
                    mode: TruthMode::Gaussian,
                    sigmas: None,
                    seed: 1,
                },
                ensemble: EnsembleSpec {
                    kind: EnsembleKind::Gaussian,
                    m: 1000,
                    seed: 2,
                },
                grid: RunGrid {
                    alpha: vec![1e-3],
                    mu: vec![0.005],
                    r_hat: vec![50],
                    t_max: vec![10_000],
                    seeds: vec![0],
                },
                references: ReferenceSpec {
                    ranks: vec![1, 2, 3, 4, 5],
                    restarts: 3,
                    max_iters: 400_000,
                    tol: None,
                },
                rip: RipSpec {
                    rank: None,
                    samples: 200,
                    seed: 3,
                },
                outputs: OutputSpec {
                    dir: "out".into(),
                    stride: 10,
                    plots: true,
                },
                verify,
            },
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Parses `text` as a partial config over the profile defaults. A
    /// top-level `"profile"` key selects the profile when `profile` is
    /// `None`.
    pub fn from_json_str(text: &str, profile: Option<Profile>) -> Result<Self> {
        let mut patch: Value = serde_json::from_str(text)?;
        let named = match patch.as_object_mut().and_then(|o| o.remove("profile")) {
            Some(Value::String(s)) => Some(s.parse::<Profile>().map_err(|e| Error::Config(vec![format!("profile: {e}")]))?),
            Some(other) => return Err(Error::Config(vec![format!("profile: expected a string, got {other}")])),
            None => None,
        };
        let profile = profile.or(named).unwrap_or(Profile::Desk);
        let mut base = serde_json::to_value(profile.defaults())?;
        merge(&mut base, patch);
        let cfg: ExperimentConfig =
            serde_json::from_value(base).map_err(|e| Error::Config(vec![format!("config: {e}")]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile: Option<Profile>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, profile)
    }

    /// Reports every failing field at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let gt = &self.ground_truth;
        if gt.d == 0 {
            errs.push("ground_truth.d: must be at least 1".to_string());
        }
        if gt.r_star == 0 || gt.r_star > gt.d {
            errs.push(format!("ground_truth.r_star: must lie in 1..={}, got {}", gt.d, gt.r_star));
        }
        if gt.mode == TruthMode::Orthogonalized {
            match &gt.sigmas {
                None => errs.push("ground_truth.sigmas: required in orthogonalized mode".into()),
                Some(s) if s.len() != gt.r_star => errs.push(format!(
                    "ground_truth.sigmas: expected {} values, got {}",
                    gt.r_star,
                    s.len()
                )),
                Some(s) => {
                    if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                        errs.push("ground_truth.sigmas: values must be finite and positive".into());
                    }
                    if s.windows(2).any(|w| w[0] <= w[1]) {
                        errs.push("ground_truth.sigmas: must be strictly decreasing".into());
                    }
                }
            }
        }
        match self.ensemble.kind {
            EnsembleKind::Gaussian if self.ensemble.m == 0 => errs.push("ensemble.m: must be at least 1".into()),
            EnsembleKind::Explicit => errs.push("ensemble.kind: explicit ensembles cannot be configured".into()),
            _ => {}
        }
        let g = &self.grid;
        for (name, empty) in [
            ("alpha", g.alpha.is_empty()),
            ("mu", g.mu.is_empty()),
            ("r_hat", g.r_hat.is_empty()),
            ("t_max", g.t_max.is_empty()),
            ("seeds", g.seeds.is_empty()),
        ] {
            if empty {
                errs.push(format!("grid.{name}: must not be empty"));
            }
        }
        for a in &g.alpha {
            if !(a.is_finite() && *a >= 0.0) {
                errs.push(format!("grid.alpha: {a} is not a finite non-negative scale"));
            }
        }
        for m in &g.mu {
            if !(m.is_finite() && *m > 0.0) {
                errs.push(format!("grid.mu: {m} is not a finite positive step"));
            }
        }
        for r in &g.r_hat {
            if *r == 0 || *r > gt.d {
                errs.push(format!("grid.r_hat: {r} outside 1..={}", gt.d));
            }
        }
        let refs = &self.references;
        for s in &refs.ranks {
            if *s == 0 || *s > gt.r_star {
                errs.push(format!("references.ranks: {s} outside 1..={}", gt.r_star));
            }
        }
        if refs.restarts < 2 {
            errs.push("references.restarts: at least 2 are required".into());
        }
        if let Some(t) = refs.tol {
            if !(t.is_finite() && t > 0.0) {
                errs.push(format!("references.tol: {t} is not a positive tolerance"));
            }
        }
        if let Some(r) = self.rip.rank {
            if r == 0 || r > gt.d {
                errs.push(format!("rip.rank: {r} outside 1..={}", gt.d));
            }
        }
        if self.rip.samples == 0 {
            errs.push("rip.samples: must be at least 1".into());
        }
        if self.outputs.stride == 0 {
            errs.push("outputs.stride: must be at least 1".into());
        }
        if self.outputs.dir.is_empty() {
            errs.push("outputs.dir: must not be empty".into());
        }
        let v = &self.verify;
        if !(v.rsi_radius_scale.is_finite() && v.rsi_radius_scale > 0.0) {
            errs.push("verify.rsi_radius_scale: must be finite and positive".into());
        }
        for (name, n) in [("samples", v.samples), ("pairs", v.pairs), ("probes", v.probes)] {
            if n == 0 {
                errs.push(format!("verify.{name}: must be at least 1"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Canonical serialization of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `outputs.dir`, unless the override variable is set.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.outputs.dir),
        }
    }

    pub fn build_ground_truth(&self) -> Result<GroundTruth> {
        let gt = &self.ground_truth;
        match gt.mode {
            TruthMode::Orthogonalized => make_ground_truth(
                gt.d,
                gt.sigmas.as_deref().unwrap_or_default(),
                TruthMode::Orthogonalized,
                gt.seed,
            ),
            TruthMode::Gaussian => GroundTruth::gaussian(gt.d, gt.r_star, gt.seed),
        }
    }

    pub fn build_ensemble(&self) -> Result<MeasurementEnsemble> {
        self.ensemble.build(self.ground_truth.d)
    }

    pub fn rip_rank(&self) -> usize {
        self.rip
            .rank
            .unwrap_or((2 * self.ground_truth.r_star + 1).min(self.ground_truth.d))
    }
}
