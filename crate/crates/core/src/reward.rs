//! Dynamic reward shaping: `R_total = R1 + λ·R2`, with λ adjusted once per
//! episode by a clipped proportional controller
//! `λ ← clip(λ + α·(R_target − R_episode), λ_min, λ_max)`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub lambda0: f64,
    pub alpha: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Defaults to `tn_val × episode_length` when absent.
    pub r_target: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            lambda0: 1.0,
            alpha: 0.01,
            lambda_min: 0.0,
            lambda_max: 10.0,
            r_target: None,
        }
    }
}

/// One completed episode as seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecord {
    pub episode: usize,
    /// Coefficient in effect during the episode.
    pub lambda: f64,
    pub episode_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaController {
    lambda: f64,
    alpha: f64,
    r_target: f64,
    lambda_min: f64,
    lambda_max: f64,
    history: Vec<LambdaRecord>,
}

impl LambdaController {
    pub fn new(lambda0: f64, alpha: f64, r_target: f64, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min <= lambda_max) {
            return Err(Error::Config(format!(
                "lambda_min {lambda_min} exceeds lambda_max {lambda_max}"
            )));
        }
        if !(lambda_min..=lambda_max).contains(&lambda0) {
            return Err(Error::Config(format!(
                "lambda0 {lambda0} lies outside [{lambda_min}, {lambda_max}]"
            )));
        }
        if ![alpha, r_target].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("alpha and r_target must be finite".into()));
        }
        Ok(LambdaController {
            lambda: lambda0,
            alpha,
            r_target,
            lambda_min,
            lambda_max,
            history: Vec::new(),
        })
    }

    pub fn from_config(config: &ControllerConfig, default_target: f64) -> Result<Self> {
        LambdaController::new(
            config.lambda0,
            config.alpha,
            config.r_target.unwrap_or(default_target),
            config.lambda_min,
            config.lambda_max,
        )
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r_target(&self) -> f64 {
        self.r_target
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lambda_min, self.lambda_max)
    }

    pub fn history(&self) -> &[LambdaRecord] {
        &self.history
    }

    /// `r1 + λ·r2` with the current coefficient.
    pub fn total_reward(&self, r1: f64, r2: f64) -> Result<f64> {
        if !(r2 >= 0.0) {
            return Err(Error::Contract(format!(
                "reconstruction error must be non-negative, got {r2}"
            )));
        }
        Ok(r1 + self.lambda * r2)
    }

    /// Closes an episode: records it and moves λ toward the target reward.
    pub fn update(&mut self, episode_reward: f64) -> f64 {
        self.history.push(LambdaRecord {
            episode: self.history.len(),
            lambda: self.lambda,
            episode_reward,
        });
        let proposed = self.lambda + self.alpha * (self.r_target - episode_reward);
        // NaN rewards leave λ where it was.
        if !proposed.is_nan() {
            self.lambda = proposed.clamp(self.lambda_min, self.lambda_max);
        }
        self.lambda
    }
}

/// Writes `lambda.csv` (`episode,lambda`) and `reward.csv`
/// (`episode,reward`) into `dir` and returns their paths.
pub fn emit_curves(controller: &LambdaController, reward_log: &[f64], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let history = controller.history();
    if history.is_empty() {
        return Err(Error::Contract("no completed episodes to write".into()));
    }
    let mut lambda_csv = String::from("episode,lambda\n");
    for r in history {
        writeln!(lambda_csv, "{},{:.15e}", r.episode, r.lambda).expect("string write");
    }
    let mut reward_csv = String::from("episode,reward\n");
    for (episode, reward) in reward_log.iter().enumerate() {
        writeln!(reward_csv, "{episode},{reward:.15e}").expect("string write");
    }
    let lambda_path = dir.join("lambda.csv");
    let reward_path = dir.join("reward.csv");
    std::fs::write(&lambda_path, lambda_csv).map_err(|e| Error::io(&lambda_path, e))?;
    std::fs::write(&reward_path, reward_csv).map_err(|e| Error::io(&reward_path, e))?;
    Ok((lambda_path, reward_path))
}

/// Reads a two-column curve file written by [`emit_curves`].
pub fn read_curve(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Parse {
            line: n + 1,
            message: format!("malformed curve row `{line}`"),
        };
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        rows.push((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    Ok(rows)
}

/// Result of checking that λ stops growing once episodes beat the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    /// First episode whose reward exceeded the target.
    pub first_exceeding: Option<usize>,
    /// Episode after which a bound was reached and checking stopped.
    pub bound_hit: Option<usize>,
    /// First episode at which λ increased within the checked range.
    pub violation: Option<usize>,
}

impl TrendCheck {
    pub fn holds(&self) -> bool {
        self.first_exceeding.is_some() && self.violation.is_none()
    }
}

/// Checks that the λ sequence is non-increasing from the first episode with
/// `reward > r_target` until λ reaches one of `bounds`.
pub fn check_lambda_trend(lambdas: &[f64], rewards: &[f64], r_target: f64, bounds: (f64, f64)) -> TrendCheck {
    let first = rewards.iter().position(|&r| r > r_target);
    let mut check = TrendCheck {
        first_exceeding: first,
        bound_hit: None,
        violation: None,
    };
    let Some(start) = first else {
        return check;
    };
    for e in start + 1..lambdas.len() {
        if lambdas[e] > lambdas[e - 1] {
            check.violation = Some(e);
            break;
        }
        if lambdas[e] <= bounds.0 || lambdas[e] >= bounds.1 {
            check.bound_hit = Some(e);
            break;
        }
    }
    check
}
