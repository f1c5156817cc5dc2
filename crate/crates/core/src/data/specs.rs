//! Model specifications shared by every estimator.

use serde::{Deserialize, Serialize};

use super::{ControlSpec, ModeratorSpec, DEFAULT_EPSILON};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NumeratorSpec {
    /// Treatment frequency among training records, within strata of the
    /// listed columns (marginal when empty).
    EmpiricalMean {
        #[serde(default)]
        strata: Vec<String>,
    },
    Constant { value: f64 },
    /// Logistic regression of A on an intercept and the listed columns.
    LogisticOn { columns: Vec<String> },
}

impl Default for NumeratorSpec {
    fn default() -> Self {
        NumeratorSpec::EmpiricalMean { strata: Vec::new() }
    }
}

/// Small-sample adjustment of the sandwich meat.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallSample {
    #[default]
    None,
    ManclDerouen,
}

/// Moderators f_t(S_t), controls g_t(H_t), the numerator p̃ and the
/// probability clipping bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Specs {
    pub moderator: ModeratorSpec,
    pub controls: ControlSpec,
    pub numerator: NumeratorSpec,
    pub small_sample: SmallSample,
    pub epsilon: f64,
    /// Weight observed records by 1 / p̂(R = 1 | H) instead of refusing
    /// missing outcomes (WCLS and R-WCLS only).
    pub ipw_missing: bool,
}

impl Specs {
    pub fn new(moderator: ModeratorSpec, controls: ControlSpec) -> Self {
        Self {
            moderator,
            controls,
            numerator: NumeratorSpec::default(),
            small_sample: SmallSample::None,
            epsilon: DEFAULT_EPSILON,
            ipw_missing: false,
        }
    }

    /// Marginal effect with intercept-only moderator and controls.
    pub fn marginal() -> Self {
        Self::new(ModeratorSpec::intercept(), ControlSpec::intercept())
    }

    pub fn with_numerator(mut self, numerator: NumeratorSpec) -> Self {
        self.numerator = numerator;
        self
    }

    pub fn with_small_sample(mut self, mode: SmallSample) -> Self {
        self.small_sample = mode;
        self
    }
}
