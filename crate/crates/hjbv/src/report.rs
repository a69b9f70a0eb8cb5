//! JSON sidecars and the markdown verification report.

use std::fmt::Write as _;
use std::path::Path;

use hjbv_core::hjb::{ApproximationLadder, GradientDiagnostics, ResidualReport};
use hjbv_core::problem::HypothesisReport;
use hjbv_core::verify::{Certificate, CostEstimate, IdentityReport};
use serde::Serialize;

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Common wrapper: every JSON output carries the toolkit version and the
/// resolved configuration.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a str,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, command: &str, config: &str, body: T) -> Result<()> {
    let env = Envelope {
        version: VERSION,
        command,
        config,
        body,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub check: String,
    pub detail: String,
}

impl Failure {
    pub fn new(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            detail: detail.into(),
        }
    }
}

/// A gated numerical check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct HypothesesJson {
    pub lipschitz_f0_estimate: f64,
    pub lipschitz_f1_estimate: f64,
    pub ellipticity_lambda0_estimate: f64,
    /// `null` when unbounded.
    pub girsanov_sup_estimate: Option<f64>,
    pub samples_used: usize,
}

impl From<&HypothesisReport> for HypothesesJson {
    fn from(h: &HypothesisReport) -> Self {
        Self {
            lipschitz_f0_estimate: h.lipschitz_f0_estimate,
            lipschitz_f1_estimate: h.lipschitz_f1_estimate,
            ellipticity_lambda0_estimate: h.ellipticity_lambda0_estimate,
            girsanov_sup_estimate: h
                .girsanov_sup_estimate
                .is_finite()
                .then_some(h.girsanov_sup_estimate),
            samples_used: h.samples_used,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ResidualJson {
    pub sup_interior_residual: f64,
    pub excluded_nodes: Vec<usize>,
}

impl From<&ResidualReport> for ResidualJson {
    fn from(r: &ResidualReport) -> Self {
        Self {
            sup_interior_residual: r.sup_interior_residual,
            excluded_nodes: r.excluded_nodes.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LadderJson {
    pub nx: Vec<usize>,
    pub nt: Vec<usize>,
    pub value_distances: Vec<f64>,
    pub gradient_distances: Vec<f64>,
    pub last_ratio: Option<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl From<&ApproximationLadder> for LadderJson {
    fn from(l: &ApproximationLadder) -> Self {
        Self {
            nx: l.grids.iter().map(|g| g.nx).collect(),
            nt: l.grids.iter().map(|g| g.nt).collect(),
            value_distances: l.value_distances.clone(),
            gradient_distances: l.gradient_distances.clone(),
            last_ratio: l.last_ratio(),
            passed: l.passed,
            notes: l.notes.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct KinkJson {
    pub kink: f64,
    pub time: f64,
    pub exponent: f64,
    pub max_second_difference: f64,
}

#[derive(Debug, Serialize)]
pub struct GradientJson {
    pub weighted_gradient_sup: f64,
    pub kinks: Vec<KinkJson>,
}

impl From<&GradientDiagnostics> for GradientJson {
    fn from(d: &GradientDiagnostics) -> Self {
        Self {
            weighted_gradient_sup: d.weighted_gradient_sup,
            kinks: d
                .kinks
                .iter()
                .map(|k| KinkJson {
                    kink: k.kink,
                    time: k.time,
                    exponent: k.exponent,
                    max_second_difference: k.max_second_difference,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Default, Serialize)]
pub struct FieldDiagnosticsJson {
    pub provenance: String,
    pub spatial_step: f64,
    pub residual: Option<ResidualJson>,
    pub ladder: Option<LadderJson>,
    pub gradient: Option<GradientJson>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct EstimateJson {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub discarded_diverged: usize,
}

impl From<&CostEstimate> for EstimateJson {
    fn from(c: &CostEstimate) -> Self {
        Self {
            mean: c.mean,
            std_error: c.std_error,
            n_paths: c.n_paths,
            discarded_diverged: c.discarded_diverged,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TailJson {
    pub truncation: f64,
    pub estimate: f64,
    pub bound: f64,
}

#[derive(Debug, Serialize)]
pub struct IdentityJson {
    pub sense: &'static str,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub v_at_start: f64,
    pub cost: EstimateJson,
    pub gap_integral: EstimateJson,
    pub identity_defect: f64,
    pub combined_std_error: f64,
    pub tolerance_used: f64,
    pub allowance_statistical: f64,
    pub allowance_spatial: f64,
    pub allowance_temporal: f64,
    pub absolute_override: bool,
    pub passed: bool,
    pub min_unclamped_gap: f64,
    pub positive_gap_steps: u64,
    pub total_steps: u64,
    pub escaped_paths: usize,
    pub dt: f64,
    pub tail: Option<TailJson>,
    pub inconclusive_reason: Option<String>,
    pub notes: Vec<String>,
}

impl From<&IdentityReport> for IdentityJson {
    fn from(r: &IdentityReport) -> Self {
        Self {
            sense: match r.sense {
                hjbv_core::Sense::Minimize => "minimize",
                hjbv_core::Sense::Maximize => "maximize",
            },
            t0: r.t0,
            x0: r.x0.clone(),
            v_at_start: r.v_at_start,
            cost: (&r.cost).into(),
            gap_integral: (&r.gap_integral).into(),
            identity_defect: r.identity_defect,
            combined_std_error: r.combined_std_error,
            tolerance_used: r.tolerance_used,
            allowance_statistical: r.allowance.statistical,
            allowance_spatial: r.allowance.spatial,
            allowance_temporal: r.allowance.temporal,
            absolute_override: r.allowance.absolute_override,
            passed: r.passed,
            min_unclamped_gap: r.min_unclamped_gap,
            positive_gap_steps: r.positive_gap_steps,
            total_steps: r.total_steps,
            escaped_paths: r.escaped_paths,
            dt: r.dt,
            tail: r.tail.map(|t| TailJson {
                truncation: t.truncation,
                estimate: t.estimate,
                bound: t.bound,
            }),
            inconclusive_reason: r.inconclusive_reason.clone(),
            notes: r.notes.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct NecessityJson {
    pub label: &'static str,
    pub positive_gap_fraction: f64,
    pub steps_checked: u64,
}

#[derive(Debug, Serialize)]
pub struct CertificateJson {
    pub verdict: &'static str,
    pub optimality_margin: f64,
    pub lower_bound_note: Option<String>,
    pub necessity: Option<NecessityJson>,
}

impl From<&Certificate> for CertificateJson {
    fn from(c: &Certificate) -> Self {
        Self {
            verdict: c.verdict.as_str(),
            optimality_margin: c.optimality_margin,
            lower_bound_note: c.lower_bound_note.clone(),
            necessity: c.necessity.as_ref().map(|n| NecessityJson {
                label: n.label,
                positive_gap_fraction: n.positive_gap_fraction,
                steps_checked: n.steps_checked,
            }),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyJson {
    pub problem: String,
    pub policy: String,
    pub hypotheses: HypothesesJson,
    pub field: FieldDiagnosticsJson,
    pub identity: IdentityJson,
    pub certificate: CertificateJson,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "unbounded".into(), |v| format!("{v:.6e}"))
}

/// Human-readable report. Contains no timestamp; the first line is the only
/// place one may be added.
pub fn markdown(v: &VerifyJson, config: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Verification report (hjbv {VERSION})");
    let _ = writeln!(s);
    let _ = writeln!(s, "Problem `{}`, policy `{}`.", v.problem, v.policy);

    let h = &v.hypotheses;
    let _ = writeln!(s, "\n## Hypotheses\n");
    let _ = writeln!(
        s,
        "Sampled estimates over {} probe pairs.\n",
        h.samples_used
    );
    let _ = writeln!(s, "| quantity | estimate |\n|---|---|");
    let _ = writeln!(
        s,
        "| Lipschitz constant of F0 | {:.6e} |",
        h.lipschitz_f0_estimate
    );
    let _ = writeln!(
        s,
        "| Lipschitz constant of F1 (K) | {:.6e} |",
        h.lipschitz_f1_estimate
    );
    let _ = writeln!(
        s,
        "| ellipticity lambda0 | {:.6e} |",
        h.ellipticity_lambda0_estimate
    );
    let _ = writeln!(s, "| sup of B^-1 F1 | {} |", opt(h.girsanov_sup_estimate));

    let f = &v.field;
    let _ = writeln!(s, "\n## Field diagnostics\n");
    let _ = writeln!(
        s,
        "Provenance `{}`, spatial step {:.6e}.",
        f.provenance, f.spatial_step
    );
    if let Some(r) = &f.residual {
        let _ = writeln!(
            s,
            "\nHJB residual: sup over interior nodes {:.6e} ({} nodes excluded).",
            r.sup_interior_residual,
            r.excluded_nodes.len()
        );
    }
    if let Some(l) = &f.ladder {
        let _ = writeln!(
            s,
            "\nRefinement ladder ({}):\n",
            if l.passed { "passed" } else { "failed" }
        );
        let _ = writeln!(
            s,
            "| step | nx | nt | value distance | gradient distance |\n|---|---|---|---|---|"
        );
        for (k, (dv, dg)) in l
            .value_distances
            .iter()
            .zip(&l.gradient_distances)
            .enumerate()
        {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {dv:.6e} | {dg:.6e} |",
                k + 1,
                l.nx[k + 1],
                l.nt[k + 1]
            );
        }
        for n in &l.notes {
            let _ = writeln!(s, "\n- {n}");
        }
    }
    if let Some(g) = &f.gradient {
        let _ = writeln!(
            s,
            "\nWeighted gradient sup of sqrt(T - t)|dv/dx|: {:.6e}.",
            g.weighted_gradient_sup
        );
        for k in &g.kinks {
            let _ = writeln!(
                s,
                "\nKink at x = {} (t = {}): second differences scale with exponent {:.4}.",
                k.kink, k.time, k.exponent
            );
        }
    }
    for n in &f.notes {
        let _ = writeln!(s, "\n- {n}");
    }

    let i = &v.identity;
    let _ = writeln!(s, "\n## Identity table\n");
    let _ = writeln!(s, "| quantity | value |\n|---|---|");
    let _ = writeln!(s, "| sense | {} |", i.sense);
    let _ = writeln!(s, "| v(t0, x0) | {:.6e} |", i.v_at_start);
    let _ = writeln!(
        s,
        "| J estimate | {:.6e} ± {:.3e} |",
        i.cost.mean, i.cost.std_error
    );
    let _ = writeln!(
        s,
        "| E integral of gap | {:.6e} ± {:.3e} |",
        i.gap_integral.mean, i.gap_integral.std_error
    );
    let _ = writeln!(s, "| identity defect | {:.6e} |", i.identity_defect);
    let _ = writeln!(s, "| combined SE | {:.6e} |", i.combined_std_error);
    let _ = writeln!(s, "| tolerance | {:.6e} |", i.tolerance_used);
    let _ = writeln!(s, "| paths kept | {} |", i.cost.n_paths);
    let _ = writeln!(s, "| dt | {:.3e} |", i.dt);
    if let Some(t) = &i.tail {
        let _ = writeln!(
            s,
            "| tail at T1 = {} | {:.6e} (bound {:.6e}) |",
            t.truncation, t.estimate, t.bound
        );
    }
    let _ = writeln!(s, "| identity holds | {} |", i.passed);
    for n in &i.notes {
        let _ = writeln!(s, "\n- {n}");
    }

    let c = &v.certificate;
    let _ = writeln!(s, "\n## Certificate\n");
    let _ = writeln!(s, "Verdict: **{}**\n", c.verdict);
    let _ = writeln!(s, "Optimality margin: {:.6e}", c.optimality_margin);
    if let Some(r) = &i.inconclusive_reason {
        let _ = writeln!(s, "\nReason: {r}");
    }
    if let Some(n) = &c.lower_bound_note {
        let _ = writeln!(s, "\nBound: {n}");
    }
    if let Some(n) = &c.necessity {
        let _ = writeln!(
            s,
            "\nNecessity scan ({}): positive gap on {:.3e} of {} steps.",
            n.label, n.positive_gap_fraction, n.steps_checked
        );
    }
    let _ = writeln!(s, "\n## Configuration\n\n```ini\n{}```", config);
    s
}
