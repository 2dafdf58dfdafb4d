//! Machine-readable analysis report and the composite verdict logic.
//!
//! The verdict is four-valued on purpose: the rank criterion is
//! sufficient only, so a failed test is "inconclusive", never
//! "unidentifiable". Every random draw's seed and every tolerance is
//! echoed so the report can be recomputed externally.

use serde::Serialize;

use crate::coeff::CoeffMapReport;
use crate::config::{AnalysisConfig, RankConfig, SimConfig, StructuralConfig};
use crate::equilibrium::{SolverConfig, StartFailure};
use crate::linearize::LinearDelayModelDump;
use crate::model::{EquilibriumPoint, ModelSpec, ParameterPoint, Violation};
use crate::rank::RankVerdict;
use crate::sim::ScalingReport;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "identifiable (structural, sampled)")]
    Identifiable,
    #[serde(rename = "locally identifiable")]
    LocallyIdentifiable,
    #[serde(rename = "inconclusive")]
    Inconclusive,
    #[serde(rename = "unsupported")]
    Unsupported,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Identifiable => "identifiable (structural, sampled)",
            Verdict::LocallyIdentifiable => "locally identifiable",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Unsupported => "unsupported",
        };
        f.write_str(s)
    }
}

/// Outcome of the pipeline at one parameter point, reduced to what the
/// verdict needs.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    /// Some equilibrium reached full Kalman rank.
    pub rank_pass: bool,
    /// Injectivity at that equilibrium; `None` when p = 0.
    pub injective: Option<bool>,
}

/// Pure verdict function; everything random or numeric happens upstream.
///
/// A parameter-free model that passes the rank test at the nominal point
/// and at every structural redraw is "identifiable (structural, sampled)".
/// With structural parameters the numeric injectivity test certifies a
/// local statement only, so the best verdict is "locally identifiable".
pub fn composite_verdict(
    violations: &[Violation],
    p: usize,
    nominal: Option<&PointOutcome>,
    draws: &[PointOutcome],
) -> Verdict {
    if !violations.is_empty() {
        return Verdict::Unsupported;
    }
    let Some(nominal) = nominal else {
        return Verdict::Inconclusive; // no equilibrium, nothing to test
    };
    let pass = |o: &PointOutcome| o.rank_pass && o.injective.unwrap_or(true);
    if !pass(nominal) || !draws.iter().all(pass) {
        return Verdict::Inconclusive;
    }
    if p == 0 {
        Verdict::Identifiable
    } else {
        Verdict::LocallyIdentifiable
    }
}

/// One analyzed equilibrium of the nominal point.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumBlock {
    pub index: usize,
    pub equilibrium: EquilibriumPoint,
    pub linear_model: LinearDelayModelDump,
    pub rank: RankVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeff: Option<CoeffMapReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingReport>,
}

/// Summary of one structural parameter redraw.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralDraw {
    pub index: usize,
    pub point: ParameterPoint,
    pub n_equilibria: usize,
    pub rank_pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub injective: Option<bool>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Dimensions {
    pub states: usize,
    pub inputs: usize,
    pub params: usize,
    pub state_delays: usize,
    pub input_delays: usize,
}

impl Dimensions {
    pub fn of(spec: &ModelSpec) -> Self {
        Dimensions {
            states: spec.n(),
            inputs: spec.k(),
            params: spec.p(),
            state_delays: spec.l(),
            input_delays: spec.r(),
        }
    }
}

/// Full configuration echo, resolved point included.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub point: ParameterPoint,
    pub solver: SolverConfig,
    pub rank: RankConfig,
    pub structural: StructuralConfig,
    pub sim: SimConfig,
}

impl ConfigEcho {
    pub fn new(cfg: &AnalysisConfig, point: ParameterPoint) -> Self {
        ConfigEcho {
            point,
            solver: cfg.solver.clone(),
            rank: cfg.rank.clone(),
            structural: cfg.structural.clone(),
            sim: cfg.sim.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub tool: &'static str,
    pub version: &'static str,
    /// RFC 3339 UTC; the only field allowed to differ between reruns.
    pub timestamp: String,
    pub model_sha256: String,
    pub dimensions: Dimensions,
    pub config: ConfigEcho,
    pub violations: Vec<Violation>,
    pub solver_failures: Vec<StartFailure>,
    pub equilibria: Vec<EquilibriumBlock>,
    pub structural_draws: Vec<StructuralDraw>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// JSON with the timestamp blanked; byte-identical across reruns with
    /// the same config and seeds.
    pub fn canonical_json(&self) -> String {
        let mut clone = self.clone();
        clone.timestamp = String::new();
        serde_json::to_string_pretty(&clone).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(data))
}

/// Current UTC time as RFC 3339, no external clock crate needed.
pub fn utc_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    // civil-from-days (Howard Hinnant's algorithm)
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (h, m, s) = (rem / 3600, (rem % 3600) / 60, rem % 60);
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let mo = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = if mo <= 2 { y + 1 } else { y };
    format!("{y:04}-{mo:02}-{d:02}T{h:02}:{m:02}:{s:02}Z")
}
