//! End-to-end orchestration: validate → equilibria → linearize → rank →
//! injectivity → optional simulation validation, assembled into a report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coeff::probe_injectivity;
use crate::config::AnalysisConfig;
use crate::equilibrium::find_equilibria;
use crate::linearize::{linearize, LinearDelayModel, LinearDelayModelDump};
use crate::model::{validate, ModelSpec, ParameterPoint};
use crate::rank::{default_z_samples, sweep_rank};
use crate::report::{
    AnalysisReport, ConfigEcho, Dimensions, EquilibriumBlock, PointOutcome, StructuralDraw,
    Verdict, composite_verdict, sha256_hex, utc_timestamp,
};
use crate::signal::make_square_pulse;
use crate::sim::{scaling_experiment, ScalingReport, SimError};

/// Run the eps-scaling validation for one linearized equilibrium using the
/// default square-pulse perturbation.
pub fn run_scaling(
    spec: &ModelSpec,
    point: &ParameterPoint,
    model: &LinearDelayModel,
    sim: &crate::config::SimConfig,
) -> Result<ScalingReport, SimError> {
    let nu_bar = make_square_pulse(spec.k(), sim.t_end, sim.amplitude);
    scaling_experiment(spec, point, model, &nu_bar, &sim.eps, sim.t_end, sim.h)
}

/// Draw a random structural point: parameters and delays uniform in the
/// structural box, delays sorted into strictly increasing slot order,
/// constant input level kept from the nominal point.
fn draw_point(nominal: &ParameterPoint, spec: &ModelSpec, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> ParameterPoint {
    let draw_sorted = |count: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..count).map(|_| rng.gen_range(lo..hi)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // strictness: nudge ties apart (measure-zero event, but cheap)
        for i in 1..v.len() {
            if v[i] <= v[i - 1] {
                v[i] = v[i - 1] * (1.0 + 1e-9) + 1e-12;
            }
        }
        v
    };
    ParameterPoint {
        p_s: (0..spec.p()).map(|_| rng.gen_range(lo..hi)).collect(),
        tau: draw_sorted(spec.l(), rng),
        nu: draw_sorted(spec.r(), rng),
        u_bar: nominal.u_bar.clone(),
    }
}

/// Analyze one parameter point: all equilibria, rank sweep at each,
/// injectivity when the model has structural parameters.
fn analyze_point(
    spec: &ModelSpec,
    point: &ParameterPoint,
    cfg: &AnalysisConfig,
    with_scaling: bool,
    notes: &mut Vec<String>,
) -> (Vec<EquilibriumBlock>, Vec<crate::equilibrium::StartFailure>, Option<PointOutcome>) {
    let res = find_equilibria(spec, point, &cfg.solver);
    let z_samples = default_z_samples(cfg.rank.seed, cfg.rank.samples, &cfg.rank.z_user);

    let mut blocks = Vec::new();
    let mut best: Option<PointOutcome> = None;
    for (index, eq) in res.equilibria.iter().enumerate() {
        let model = match linearize(spec, point, eq) {
            Ok(m) => m,
            Err(e) => {
                notes.push(format!("equilibrium {index}: linearization failed: {e}"));
                continue;
            }
        };
        let rank = sweep_rank(&model, &z_samples, cfg.rank.rel_tol);
        let coeff = if spec.p() > 0 {
            match probe_injectivity(spec, point, eq, &cfg.solver, cfg.rank.rel_tol) {
                Ok(r) => Some(r),
                Err(e) => {
                    notes.push(format!("equilibrium {index}: injectivity probe failed: {e}"));
                    None
                }
            }
        } else {
            None
        };

        let outcome = PointOutcome {
            rank_pass: rank.identifiable,
            injective: coeff.as_ref().map(|c| c.locally_injective),
        };
        let better = |a: &PointOutcome| a.rank_pass && a.injective.unwrap_or(true);
        if best.as_ref().map_or(true, |b| !better(b) && better(&outcome)) {
            best = Some(outcome);
        }

        let scaling = if with_scaling && rank.identifiable {
            match run_scaling(spec, point, &model, &cfg.sim) {
                Ok(r) => Some(r),
                Err(e) => {
                    notes.push(format!("equilibrium {index}: scaling experiment failed: {e}"));
                    None
                }
            }
        } else {
            None
        };

        blocks.push(EquilibriumBlock {
            index,
            equilibrium: eq.clone(),
            linear_model: LinearDelayModelDump::from(&model),
            rank,
            coeff,
            scaling,
        });
    }
    (blocks, res.failures, best)
}

/// Full analysis of a parsed model under a configuration.
pub fn analyze(spec: &ModelSpec, model_source: &str, cfg: &AnalysisConfig) -> AnalysisReport {
    let point = cfg.resolve_point(spec);
    let mut notes = Vec::new();
    let violations = validate(spec, &point);

    let mut report = AnalysisReport {
        tool: crate::report::TOOL_NAME,
        version: crate::report::TOOL_VERSION,
        timestamp: utc_timestamp(),
        model_sha256: sha256_hex(model_source.as_bytes()),
        dimensions: Dimensions::of(spec),
        config: ConfigEcho::new(cfg, point.clone()),
        violations: violations.clone(),
        solver_failures: Vec::new(),
        equilibria: Vec::new(),
        structural_draws: Vec::new(),
        verdict: Verdict::Unsupported,
        notes: Vec::new(),
    };
    if !violations.is_empty() {
        report.notes.push(
            "model/point pair rejected by validation; see violations".into(),
        );
        return report;
    }

    let (blocks, failures, nominal) =
        analyze_point(spec, &point, cfg, cfg.sim.scaling, &mut notes);
    report.solver_failures = failures;
    report.equilibria = blocks;
    if nominal.is_none() {
        notes.push("no equilibrium found at the nominal point".into());
    }

    // structural redraws only make sense once the nominal point passes
    let mut draws = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.structural.seed);
    if nominal.as_ref().map_or(false, |o| o.rank_pass) {
        for index in 0..cfg.structural.draws {
            let dp = draw_point(&point, spec, cfg.structural.box_lo, cfg.structural.box_hi, &mut rng);
            let mut draw_notes = Vec::new();
            let (dblocks, _, outcome) = analyze_point(spec, &dp, cfg, false, &mut draw_notes);
            let outcome = outcome.unwrap_or(PointOutcome {
                rank_pass: false,
                injective: None,
            });
            if dblocks.is_empty() {
                draw_notes.push("no equilibrium found".into());
            }
            draws.push((outcome.clone(), StructuralDraw {
                index,
                point: dp,
                n_equilibria: dblocks.len(),
                rank_pass: outcome.rank_pass,
                injective: outcome.injective,
                notes: draw_notes,
            }));
        }
    }
    let outcomes: Vec<PointOutcome> = draws.iter().map(|(o, _)| o.clone()).collect();
    report.structural_draws = draws.into_iter().map(|(_, d)| d).collect();

    report.verdict = composite_verdict(&violations, spec.p(), nominal.as_ref(), &outcomes);
    match report.verdict {
        Verdict::LocallyIdentifiable => notes.push(
            "verdict is local: the numeric injectivity test certifies local \
             injectivity of the coefficient map only, so any symbolic global \
             claim is downgraded to a local one"
                .into(),
        ),
        Verdict::Inconclusive => notes.push(
            "the rank criterion is sufficient only; a failed test does not \
             establish unidentifiability"
                .into(),
        ),
        _ => {}
    }
    report.notes = notes;
    report
}

/// Outcome of the `linearize` command: matrices per equilibrium, or a
/// structured no-equilibrium result.
#[derive(Debug, Clone, Serialize)]
pub struct LinearizeOutcome {
    pub model_sha256: String,
    pub point: ParameterPoint,
    pub violations: Vec<crate::model::Violation>,
    pub equilibria: Vec<LinearDelayModelDump>,
    pub outcome: String,
}

pub fn linearize_only(spec: &ModelSpec, model_source: &str, cfg: &AnalysisConfig) -> LinearizeOutcome {
    let point = cfg.resolve_point(spec);
    let violations = validate(spec, &point);
    let mut equilibria = Vec::new();
    let outcome;
    if !violations.is_empty() {
        outcome = "unsupported".to_string();
    } else {
        let res = find_equilibria(spec, &point, &cfg.solver);
        for eq in &res.equilibria {
            if let Ok(m) = linearize(spec, &point, eq) {
                equilibria.push(LinearDelayModelDump::from(&m));
            }
        }
        outcome = if equilibria.is_empty() {
            "no equilibrium found".to_string()
        } else {
            format!("{} equilibrium point(s) linearized", equilibria.len())
        };
    }
    LinearizeOutcome {
        model_sha256: sha256_hex(model_source.as_bytes()),
        point,
        violations,
        equilibria,
        outcome,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_model;

    fn eq16_cfg() -> AnalysisConfig {
        let mut cfg = AnalysisConfig::default();
        cfg.point.tau = Some(vec![0.5, 1.0, 1.5, 2.0]);
        cfg.point.u_bar = Some(vec![1.0, 0.0]);
        cfg
    }

    #[test]
    fn eq16_is_structurally_identifiable() {
        let src = include_str!("../../../models/eq16.model");
        let spec = parse_model(src).unwrap();
        let report = analyze(&spec, src, &eq16_cfg());
        assert_eq!(report.verdict, Verdict::Identifiable);
        assert_eq!(report.structural_draws.len(), 5);
        let block = &report.equilibria[0];
        assert!(block.rank.identifiable);
        assert_eq!(block.rank.z_witness, Some((2.0, 0.0)));
    }

    #[test]
    fn b_zero_model_is_inconclusive() {
        let src = include_str!("../../../models/b_zero.model");
        let spec = parse_model(src).unwrap();
        let report = analyze(&spec, src, &AnalysisConfig::default());
        assert_eq!(report.verdict, Verdict::Inconclusive);
        let serialized = report.to_json();
        assert!(!serialized.contains("unidentifiable"));
    }

    #[test]
    fn product_model_fails_injectivity() {
        let src = include_str!("../../../models/product.model");
        let spec = parse_model(src).unwrap();
        let mut cfg = AnalysisConfig::default();
        cfg.point.p_s = Some(vec![2.0, -1.5]);
        let report = analyze(&spec, src, &cfg);
        assert_eq!(report.verdict, Verdict::Inconclusive);
        let coeff = report.equilibria[0].coeff.as_ref().unwrap();
        assert!(!coeff.locally_injective);
        assert!(coeff.entangled.contains(&"p1".to_string()));
        assert!(coeff.entangled.contains(&"p2".to_string()));
    }

    #[test]
    fn no_equilibrium_is_reported_structurally() {
        // x' = x^2 + 1 has no real equilibrium
        let src = "[states]\nx\n[inputs]\nu\n[equations]\ndx = x^2 + 1 + 0*u\n";
        let spec = parse_model(src).unwrap();
        let out = linearize_only(&spec, src, &AnalysisConfig::default());
        assert_eq!(out.outcome, "no equilibrium found");
        assert!(out.equilibria.is_empty());

        let report = analyze(&spec, src, &AnalysisConfig::default());
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn reports_are_deterministic_modulo_timestamp() {
        let src = include_str!("../../../models/eq16.model");
        let spec = parse_model(src).unwrap();
        let a = analyze(&spec, src, &eq16_cfg()).canonical_json();
        let b = analyze(&spec, src, &eq16_cfg()).canonical_json();
        assert_eq!(a, b);
    }
}
