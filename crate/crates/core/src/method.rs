//! Method tags, decisions, and a single entry point over all learners.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{bonferroni_run, hcpi_run, BaselineTrace};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::policy::PolicyRef;
use crate::snpl::{snpl_run, InLoopBound, SnplConfig, SnplTrace};
use crate::spec::{Hyperparams, Mode, SafetySpec};

/// Trace/config schema version written into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "snpl")]
    Snpl,
    #[serde(rename = "ds-25")]
    Ds25,
    #[serde(rename = "ds-50")]
    Ds50,
    #[serde(rename = "ds-75")]
    Ds75,
    #[serde(rename = "bonferroni")]
    Bonferroni,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ds25, Method::Ds50, Method::Ds75, Method::Bonferroni, Method::Snpl];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Snpl => "snpl",
            Method::Ds25 => "ds-25",
            Method::Ds50 => "ds-50",
            Method::Ds75 => "ds-75",
            Method::Bonferroni => "bonferroni",
        }
    }

    /// Learning fraction for the data-splitting variants.
    pub fn split_fraction(self) -> Option<f64> {
        match self {
            Method::Ds25 => Some(0.25),
            Method::Ds50 => Some(0.5),
            Method::Ds75 => Some(0.75),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// The returned policy. `class_index` is `None` when falling back to the baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub policy_id: String,
    pub class_index: Option<usize>,
}

impl Decision {
    pub fn baseline(id: &str) -> Self {
        Self {
            policy_id: id.to_string(),
            class_index: None,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.class_index.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Trace {
    Snpl(Box<SnplTrace>),
    Baseline(Box<BaselineTrace>),
}

impl Trace {
    pub fn decision(&self) -> &Decision {
        match self {
            Trace::Snpl(t) => &t.decision,
            Trace::Baseline(t) => &t.decision,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }
}

/// Runs one method end to end.
#[allow(clippy::too_many_arguments)]
pub fn run_method(
    method: Method,
    ds: &Dataset,
    class: &[PolicyRef],
    baseline: &PolicyRef,
    spec: &SafetySpec,
    mode: Mode,
    in_loop: InLoopBound,
    hyper: &Hyperparams,
) -> Result<Trace> {
    Ok(match method {
        Method::Snpl => {
            let cfg = SnplConfig {
                spec: spec.clone(),
                hyper: hyper.clone(),
                mode,
                in_loop,
                baseline: baseline.clone(),
            };
            Trace::Snpl(Box::new(snpl_run(ds, class, &cfg)?))
        }
        Method::Bonferroni => Trace::Baseline(Box::new(bonferroni_run(ds, class, baseline, spec, mode, hyper)?)),
        m => {
            let rho = m.split_fraction().expect("split method");
            Trace::Baseline(Box::new(hcpi_run(ds, class, baseline, spec, rho, mode, hyper, m)?))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.tag()));
        }
        assert!(matches!("ds-10".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }
}
