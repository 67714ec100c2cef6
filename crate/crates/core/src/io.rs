//! Instance files and table output.
//!
//! An instance file is a TOML document whose top-level `kind` key selects
//! the problem type (`explicit`, `scored`, `sequential` or `supervised`);
//! the remaining keys are the fields of the matching struct. Floats are
//! written in shortest round-trip form, so any decimal literal with at most
//! 17 significant digits survives load and save unchanged.
//!
//! ```toml
//! kind = "scored"
//! policy_labels = ["pi0", "pi1"]
//! bound = 1.0
//! star = 0
//!
//! [[models]]
//! loss_row = [0.0, 1.0]
//! rel_log_lik = 0.0
//!
//! [[models]]
//! loss_row = [1.0, 0.0]
//! rel_log_lik = -2.5
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dmof::{ExplicitDmof, ScoredDmof};
use crate::error::{Error, Result};
use crate::sequential::{RateRow, TabularMsp};
use crate::supervised::SlInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Instance {
    Explicit(ExplicitDmof),
    Scored(ScoredDmof),
    Sequential(TabularMsp),
    Supervised(SlInstance),
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Explicit(p) => p.validate(),
            Instance::Scored(p) => p.validate(),
            Instance::Sequential(p) => p.validate(),
            Instance::Supervised(p) => p.validate(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Explicit(_) => "explicit",
            Instance::Scored(_) => "scored",
            Instance::Sequential(_) => "sequential",
            Instance::Supervised(_) => "supervised",
        }
    }

    /// Parses and validates an instance document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let inst: Instance = toml::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Writes the instance, replacing any existing file.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }
}

impl From<ExplicitDmof> for Instance {
    fn from(p: ExplicitDmof) -> Self {
        Instance::Explicit(p)
    }
}

impl From<ScoredDmof> for Instance {
    fn from(p: ScoredDmof) -> Self {
        Instance::Scored(p)
    }
}

impl From<TabularMsp> for Instance {
    fn from(p: TabularMsp) -> Self {
        Instance::Sequential(p)
    }
}

impl From<SlInstance> for Instance {
    fn from(p: SlInstance) -> Self {
        Instance::Supervised(p)
    }
}

/// A float with 17 significant digits, enough to recover the exact value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub const RATE_CSV_HEADER: &str = "N,trial,lambda,edd_loss,bound,violated";

/// Rate-sweep rows as CSV with LF line endings.
pub fn rate_rows_csv(rows: &[RateRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(RATE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            r.trial,
            fmt_f64(r.lambda),
            fmt_f64(r.edd_loss),
            fmt_f64(r.bound),
            r.violated
        );
    }
    out
}
