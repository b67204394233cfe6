//! Flat `key = value` scenario configuration with dotted sections.
//!
//! The format is deliberately plain: one assignment per line, `#` starts
//! a comment, vectors are comma-separated numbers. Unknown keys are
//! errors, and every parse failure carries its line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DVector;

use robust_cbf::constraint::{GainPair, ParameterEstimate};
use robust_cbf::model::{barrier_by_name, dynamics_by_name, AgentState, ScenarioModel};
use robust_cbf::sdp::SolverOptions;
use robust_cbf::sim::{EstimatorMode, Scenario};

/// Every key the format accepts, with a short description for error
/// messages and the README.
pub const KNOWN_KEYS: &[(&str, &str)] = &[
    ("model.name", "dynamics model: linear | attract-repel | drift"),
    ("model.dim", "state dimension n (default 2)"),
    ("model.goal", "goal point for attract-repel and drift"),
    ("model.drift_gain", "drift gain k for the drift model"),
    ("barrier.name", "barrier: disk | ring"),
    ("barrier.center", "barrier center (default origin)"),
    ("barrier.radius", "barrier radius"),
    ("gains.alpha", "invariance gain alpha (default 2)"),
    ("gains.beta", "invariance gain beta (default 1)"),
    ("estimate.theta_hat", "parameter estimate center"),
    ("estimate.eta", "parameter uncertainty radius"),
    ("state.xa", "human position"),
    ("state.xr", "robot position"),
    ("sim.theta_true", "true parameter driving the simulation"),
    ("sim.dt", "integration step in seconds (default 0.01)"),
    ("sim.duration", "simulated horizon in seconds (default 5)"),
    ("sim.estimator", "estimator mode: static | set-membership (default static)"),
    ("sim.estimator_period", "steps between estimator updates (default 10)"),
    ("sim.slack_mode", "relax infeasible solves: true | false (default false)"),
    ("sim.seed", "PRNG seed (default 0)"),
    ("solver.tol", "barrier gap tolerance (default 1e-8)"),
    ("solver.max_iter", "Newton budget per solve phase (default 200)"),
    ("solver.initial_weight", "initial barrier weight (default 1)"),
    ("solver.barrier_factor", "barrier weight growth factor (default 10)"),
    ("solver.phase1_margin", "Phase-I interior margin (default 1e-6)"),
];

#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

/// Parsed configuration: keys in file order with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, (usize, String)>,
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(Some(line_no), format!("expected `key = value`, got `{line}`")));
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.iter().any(|(k, _)| *k == key) {
                return Err(err(Some(line_no), format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(Some(line_no), format!("empty value for `{key}`")));
            }
            if values.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                return Err(err(Some(line_no), format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(None, format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Canonical re-serialization: known-key order, one assignment per
    /// line. Parsing the output yields an equivalent configuration.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (key, _) in KNOWN_KEYS {
            if let Some((_, value)) = self.values.get(*key) {
                out.push_str(key);
                out.push_str(" = ");
                out.push_str(value);
                out.push('\n');
            }
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        assert!(
            KNOWN_KEYS.iter().any(|(k, _)| *k == key),
            "unknown config key `{key}`"
        );
        self.values.insert(key.to_string(), (0, value.into()));
    }

    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.values.get(key).map(|(line, v)| (*line, v.as_str()))
    }

    fn require(&self, key: &str) -> Result<(usize, &str), ConfigError> {
        self.get(key)
            .ok_or_else(|| err(None, format!("missing required key `{key}`")))
    }

    fn scalar(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| err(Some(line), format!("`{key}` expects a number, got `{v}`"))),
        }
    }

    fn scalar_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.scalar(key)?.unwrap_or(default))
    }

    fn required_scalar(&self, key: &str) -> Result<f64, ConfigError> {
        self.require(key)?;
        Ok(self.scalar(key)?.expect("key present"))
    }

    fn integer_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse::<u64>()
                .map_err(|_| err(Some(line), format!("`{key}` expects an integer, got `{v}`"))),
        }
    }

    fn boolean_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some((_, "true")) => Ok(true),
            Some((_, "false")) => Ok(false),
            Some((line, v)) => Err(err(
                Some(line),
                format!("`{key}` expects true or false, got `{v}`"),
            )),
        }
    }

    fn vector(&self, key: &str) -> Result<Option<DVector<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => {
                let parts: Result<Vec<f64>, _> =
                    v.split(',').map(|p| p.trim().parse::<f64>()).collect();
                parts.map(|p| Some(DVector::from_vec(p))).map_err(|_| {
                    err(
                        Some(line),
                        format!("`{key}` expects comma-separated numbers, got `{v}`"),
                    )
                })
            }
        }
    }

    fn required_vector(&self, key: &str) -> Result<DVector<f64>, ConfigError> {
        self.require(key)?;
        Ok(self.vector(key)?.expect("key present"))
    }

    /// State dimension: explicit `model.dim` or inferred from `state.xa`.
    fn dim(&self) -> Result<usize, ConfigError> {
        if let Some((line, v)) = self.get("model.dim") {
            return v
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| err(Some(line), format!("`model.dim` expects a positive integer, got `{v}`")));
        }
        Ok(self.vector("state.xa")?.map_or(2, |v| v.len()))
    }

    pub fn model(&self) -> Result<ScenarioModel, ConfigError> {
        let n = self.dim()?;
        let (name_line, model_name) = self.require("model.name")?;
        let goal = self.vector("model.goal")?;
        let gain = self.scalar("model.drift_gain")?;
        let dynamics = dynamics_by_name(model_name, n, goal.as_ref(), gain)
            .map_err(|e| err(Some(name_line), e.to_string()))?;

        let (barrier_line, barrier_name) = self.require("barrier.name")?;
        let center = self
            .vector("barrier.center")?
            .unwrap_or_else(|| DVector::zeros(n));
        let radius = self.required_scalar("barrier.radius")?;
        let barrier = barrier_by_name(barrier_name, center, radius)
            .map_err(|e| err(Some(barrier_line), e.to_string()))?;

        ScenarioModel::new(format!("{model_name}/{barrier_name}"), dynamics, barrier)
            .map_err(|e| err(None, e.to_string()))
    }

    pub fn gains(&self) -> Result<GainPair, ConfigError> {
        GainPair::new(
            self.scalar_or("gains.alpha", 2.0)?,
            self.scalar_or("gains.beta", 1.0)?,
        )
        .map_err(|e| err(None, e.to_string()))
    }

    pub fn estimate(&self) -> Result<ParameterEstimate, ConfigError> {
        ParameterEstimate::new(
            self.required_vector("estimate.theta_hat")?,
            self.required_scalar("estimate.eta")?,
        )
        .map_err(|e| err(None, e.to_string()))
    }

    pub fn state(&self) -> Result<AgentState, ConfigError> {
        AgentState::new(
            self.required_vector("state.xa")?,
            self.required_vector("state.xr")?,
        )
        .map_err(|e| err(None, e.to_string()))
    }

    pub fn solver_options(&self) -> Result<SolverOptions, ConfigError> {
        let opts = SolverOptions {
            tol: self.scalar_or("solver.tol", 1e-8)?,
            max_iter: self.integer_or("solver.max_iter", 200)? as usize,
            initial_weight: self.scalar_or("solver.initial_weight", 1.0)?,
            barrier_factor: self.scalar_or("solver.barrier_factor", 10.0)?,
            phase1_margin: self.scalar_or("solver.phase1_margin", 1e-6)?,
        };
        opts.validate().map_err(|e| err(None, e.to_string()))?;
        Ok(opts)
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.integer_or("sim.seed", 0)
    }

    pub fn slack_mode(&self) -> Result<bool, ConfigError> {
        self.boolean_or("sim.slack_mode", false)
    }

    /// Full simulation scenario; requires `sim.theta_true`.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let estimator = match self.get("sim.estimator") {
            None => EstimatorMode::Static,
            Some((_, "static")) => EstimatorMode::Static,
            Some((_, "set-membership")) => EstimatorMode::SetMembership,
            Some((line, v)) => {
                return Err(err(
                    Some(line),
                    format!("`sim.estimator` expects static or set-membership, got `{v}`"),
                ))
            }
        };
        Ok(Scenario {
            model: self.model()?,
            initial_state: self.state()?,
            theta_true: self.required_vector("sim.theta_true")?,
            initial_estimate: self.estimate()?,
            gains: self.gains()?,
            dt: self.scalar_or("sim.dt", 0.01)?,
            duration: self.scalar_or("sim.duration", 5.0)?,
            estimator,
            estimator_period: self.integer_or("sim.estimator_period", 10)?.max(1) as usize,
            solver: self.solver_options()?,
            slack_mode: self.slack_mode()?,
            seed: self.seed()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample scenario
model.name = linear
barrier.name = disk
barrier.center = 0, 0
barrier.radius = 2.0
gains.alpha = 2.0
gains.beta = 1.0
estimate.theta_hat = 0.4
estimate.eta = 0
state.xa = 1, 0
state.xr = 1.6, 0.5
sim.theta_true = 0.4
sim.dt = 0.01
sim.duration = 5
sim.estimator = set-membership
sim.seed = 7
";

    #[test]
    fn parses_and_builds_scenario() {
        let cfg = RunConfig::parse_str(SAMPLE).unwrap();
        let sc = cfg.scenario().unwrap();
        assert_eq!(sc.model.state_dim(), 2);
        assert_eq!(sc.model.param_dim(), 1);
        assert_eq!(sc.theta_true[0], 0.4);
        assert_eq!(sc.estimator, EstimatorMode::SetMembership);
        sc.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_an_error_naming_it() {
        let text = format!("{SAMPLE}alpha_gain = 3\n");
        let e = RunConfig::parse_str(&text).unwrap_err();
        assert!(e.to_string().contains("alpha_gain"), "{e}");
        assert!(e.to_string().contains("line 17"), "{e}");
    }

    #[test]
    fn malformed_line_is_anchored() {
        let e = RunConfig::parse_str("model.name linear\n").unwrap_err();
        assert!(e.to_string().starts_with("line 1:"), "{e}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let e = RunConfig::parse_str("barrier.radius = 1\nbarrier.radius = 2\n").unwrap_err();
        assert!(e.to_string().contains("duplicate"), "{e}");
    }

    #[test]
    fn bad_number_is_anchored() {
        let text = SAMPLE.replace("barrier.radius = 2.0", "barrier.radius = huge");
        let cfg = RunConfig::parse_str(&text).unwrap();
        let e = cfg.scenario().unwrap_err();
        assert!(e.to_string().contains("barrier.radius"), "{e}");
        assert!(e.to_string().contains("line"), "{e}");
    }

    #[test]
    fn round_trip_is_equivalent() {
        let cfg = RunConfig::parse_str(SAMPLE).unwrap();
        let text = cfg.serialize();
        let again = RunConfig::parse_str(&text).unwrap();
        // Values survive; line numbers may differ.
        for (key, (_, value)) in &cfg.values {
            assert_eq!(&again.values[key].1, value, "key {key}");
        }
        assert_eq!(cfg.values.len(), again.values.len());
        assert_eq!(text, again.serialize());
    }

    #[test]
    fn missing_required_key_is_reported() {
        let text = SAMPLE.replace("barrier.radius = 2.0\n", "");
        let cfg = RunConfig::parse_str(&text).unwrap();
        let e = cfg.scenario().unwrap_err();
        assert!(e.to_string().contains("barrier.radius"), "{e}");
    }

    #[test]
    fn drift_model_needs_its_parameters() {
        let text = SAMPLE.replace("model.name = linear", "model.name = drift");
        let cfg = RunConfig::parse_str(&text).unwrap();
        let e = cfg.model().unwrap_err();
        assert!(e.to_string().contains("goal"), "{e}");
    }
}
