use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DepthProfile, FailureSchedule, FeatureField, LoopOracleConfig, MissionPlan, Pattern,
    QuadrantBias, Region, SensorModels,
};
use crate::error::{Error, Result};

pub const BUILTIN_SCENARIOS: [&str; 3] = ["reef_lawnmower", "wreck_lawnmower", "reef_squares"];

/// A complete mission description, stored as TOML with `[plan]`, `[field]`,
/// `[models]`, `[schedule]` and `[loop_closure]` tables. The last three fall
/// back to defaults when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub plan: MissionPlan,
    pub field: FeatureField,
    #[serde(default)]
    pub models: SensorModels,
    #[serde(default = "FailureSchedule::none")]
    pub schedule: FailureSchedule,
    #[serde(default)]
    pub loop_closure: LoopOracleConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.field.validate()?;
        self.models.validate()?;
        self.schedule.validate(self.plan.duration())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.models.seed = seed;
        self
    }

    pub fn with_schedule(mut self, schedule: FailureSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(config_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("scenario", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "reef_lawnmower" => Ok(reef_lawnmower()),
            "wreck_lawnmower" => Ok(wreck_lawnmower()),
            "reef_squares" => Ok(reef_squares()),
            other => Err(Error::config(
                "scenario",
                format!("unknown scenario `{other}`; built-ins are {BUILTIN_SCENARIOS:?}"),
            )),
        }
    }
}

/// Pulls the offending key out of a deserialisation error.
fn config_error(e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let key = ["missing field `", "unknown field `", "unknown variant `"]
        .iter()
        .find_map(|prefix| {
            let rest = message.split(prefix).nth(1)?;
            Some(rest.split('`').next()?.to_string())
        })
        .unwrap_or_else(|| "scenario".into());
    Error::Config { key, message }
}

/// 314 s, ~108 m coral-reef survey with uniformly rich texture.
fn reef_lawnmower() -> Scenario {
    Scenario {
        name: "reef_lawnmower".into(),
        plan: MissionPlan {
            pattern: Pattern::Lawnmower {
                leg_length: 18.2,
                n_legs: 6,
                spacing: 3.0,
            },
            speed: 0.3956,
            depth: DepthProfile::constant(5.0),
            dt: 0.01,
        },
        field: FeatureField::uniform(200.0),
        models: SensorModels::default(),
        schedule: FailureSchedule::none(),
        loop_closure: LoopOracleConfig::default(),
    }
}

/// The five degradation schedules of the reef survey.
pub fn reef_schedules() -> Vec<FailureSchedule> {
    vec![
        FailureSchedule::evenly("1x60", &[120.0], 60.0),
        FailureSchedule::evenly("3x15", &[60.0, 150.0, 240.0], 15.0),
        FailureSchedule::evenly("3x30", &[50.0, 140.0, 230.0], 30.0),
        FailureSchedule::evenly("3x45", &[40.0, 130.0, 220.0], 45.0),
        FailureSchedule::evenly("5x20", &[30.0, 90.0, 150.0, 210.0, 270.0], 20.0),
    ]
}

/// Survey over a wreck whose starboard edge (x = 22 m) drops to open water.
fn wreck_lawnmower() -> Scenario {
    Scenario {
        name: "wreck_lawnmower".into(),
        plan: MissionPlan {
            pattern: Pattern::Lawnmower {
                leg_length: 26.0,
                n_legs: 4,
                spacing: 2.0,
            },
            speed: 0.4,
            depth: DepthProfile::constant(8.0),
            dt: 0.01,
        },
        field: FeatureField {
            base_density: 200.0,
            quadrant_bias: QuadrantBias::None,
            regions: vec![
                // side rail: fewer features, all below the horizon
                Region {
                    min: [19.0, -1000.0],
                    max: [22.0, 1000.0],
                    multiplier: 0.4,
                    bias: Some(QuadrantBias::BottomOnly),
                },
                Region {
                    min: [22.0, -1000.0],
                    max: [1000.0, 1000.0],
                    multiplier: 0.0,
                    bias: None,
                },
            ],
        },
        models: SensorModels::default(),
        schedule: FailureSchedule::none(),
        loop_closure: LoopOracleConfig::default(),
    }
}

/// Three squares over sand with coral along the first side only.
fn reef_squares() -> Scenario {
    Scenario {
        name: "reef_squares".into(),
        plan: MissionPlan {
            pattern: Pattern::Squares {
                side: 5.09,
                n_loops: 3,
            },
            speed: 0.3,
            depth: DepthProfile::constant(6.0),
            dt: 0.01,
        },
        field: FeatureField {
            base_density: 10.0,
            quadrant_bias: QuadrantBias::None,
            regions: vec![Region {
                min: [-1.0, -1.0],
                max: [6.5, 1.6],
                multiplier: 20.0,
                bias: None,
            }],
        },
        models: SensorModels {
            current: [0.01, 0.005, 0.0],
            ..SensorModels::default()
        },
        schedule: FailureSchedule::none(),
        loop_closure: LoopOracleConfig::default(),
    }
}
