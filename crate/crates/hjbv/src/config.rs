//! Run configuration: a flat `[section]` / `key = value` text format.
//!
//! Every key has a default that depends on the problem kind. [`RunConfig::echo`]
//! writes the fully resolved configuration; parsing the echo gives back the
//! same configuration, so the echo is a fixed point.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use hjbv_core::benchmarks::{
    make_advertising_problem, make_discounted_demo, make_exit_demo, AdvertisingParams, ExitDemo,
};
use hjbv_core::sde::ExitRule;
use hjbv_core::ControlProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn line(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitVariant {
    /// l ≡ 1, ψ = φ ≡ 0.
    ExitTime {
        horizon: f64,
    },
    /// l ≡ 0, ψ = φ ≡ value.
    Constant {
        value: f64,
    },
    Controlled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemSection {
    Advertising {
        eta: f64,
        alpha: f64,
        beta: f64,
        horizon: f64,
    },
    ExitDemo(ExitVariant),
    Discounted {
        rate: f64,
        cost: f64,
    },
}

impl ProblemSection {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSection::Advertising { .. } => "advertising",
            ProblemSection::ExitDemo(_) => "exit_demo",
            ProblemSection::Discounted { .. } => "discounted_demo",
        }
    }

    pub fn advertising_params(&self) -> Option<hjbv_core::Result<AdvertisingParams>> {
        match *self {
            ProblemSection::Advertising {
                eta,
                alpha,
                beta,
                horizon,
            } => Some(AdvertisingParams::new(eta, alpha, beta, horizon)),
            _ => None,
        }
    }

    pub fn build(&self) -> hjbv_core::Result<ControlProblem> {
        match *self {
            ProblemSection::Advertising { .. } => {
                make_advertising_problem(&self.advertising_params().unwrap()?)
            }
            ProblemSection::ExitDemo(v) => make_exit_demo(match v {
                ExitVariant::ExitTime { horizon } => ExitDemo::ExpectedExitTime { horizon },
                ExitVariant::Constant { value } => ExitDemo::Constant(value),
                ExitVariant::Controlled => ExitDemo::Controlled,
            }),
            ProblemSection::Discounted { rate, cost } => make_discounted_demo(rate, cost),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySpec {
    /// Dirichlet data from the closed-form value (advertising only).
    ClosedForm,
    LinearExtrapolation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
    pub boundary: BoundarySpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSection {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub exit_rule: ExitRule,
    /// Keep every `stride`-th step in path dumps.
    pub stride: usize,
    /// Number of paths written to the paths CSV.
    pub dump_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    /// Pointwise argmin of the Hamiltonian at the field's gradient.
    Feedback,
    Zero,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSpec {
    ClosedForm,
    Solved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySection {
    pub policy: PolicySpec,
    pub field: FieldSpec,
    pub t0: f64,
    pub x0: f64,
    pub se_multiplier: f64,
    pub c_dx: f64,
    pub c_dt: f64,
    /// Absolute tolerance override; `None` prints as `auto`.
    pub tolerance: Option<f64>,
    pub truncation_t1: f64,
    pub common_random_numbers: bool,
    pub necessity: bool,
    /// Refinement levels of the ladder diagnostic for solved fields (0 = skip).
    pub ladder_levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub mc: McSection,
    pub verify: VerifySection,
}

impl RunConfig {
    /// Defaults for a problem kind.
    pub fn defaults(problem: ProblemSection) -> Self {
        let verify = VerifySection {
            policy: PolicySpec::Feedback,
            field: FieldSpec::ClosedForm,
            t0: 0.0,
            x0: 0.0,
            se_multiplier: 3.0,
            c_dx: 1.0,
            c_dt: 1.0,
            tolerance: None,
            truncation_t1: 20.0,
            common_random_numbers: true,
            necessity: true,
            ladder_levels: 0,
        };
        let mc = McSection {
            paths: 100_000,
            dt: 1e-3,
            seed: 1,
            exit_rule: ExitRule::GridCrossing,
            stride: 10,
            dump_paths: 16,
        };
        match problem {
            ProblemSection::Advertising { .. } => Self {
                problem,
                grid: GridSection {
                    x_min: 0.1,
                    x_max: 5.0,
                    nx: 401,
                    nt: 1000,
                    boundary: BoundarySpec::ClosedForm,
                },
                mc,
                verify: VerifySection { x0: 2.0, ..verify },
            },
            ProblemSection::ExitDemo(v) => Self {
                problem,
                grid: GridSection {
                    x_min: 0.0,
                    x_max: 1.0,
                    nx: 201,
                    nt: 5000,
                    boundary: BoundarySpec::LinearExtrapolation,
                },
                mc: McSection {
                    paths: 20_000,
                    exit_rule: ExitRule::BrownianBridge,
                    ..mc
                },
                verify: VerifySection {
                    x0: 0.5,
                    field: match v {
                        ExitVariant::Constant { .. } => FieldSpec::ClosedForm,
                        _ => FieldSpec::Solved,
                    },
                    ..verify
                },
            },
            ProblemSection::Discounted { .. } => Self {
                problem,
                grid: GridSection {
                    x_min: -5.0,
                    x_max: 5.0,
                    nx: 201,
                    nt: 1000,
                    boundary: BoundarySpec::LinearExtrapolation,
                },
                mc: McSection {
                    paths: 2_000,
                    dt: 1e-2,
                    ..mc
                },
                verify,
            },
        }
    }

    /// Parses a configuration text; absent keys take the defaults of the
    /// problem kind (advertising when `[problem]` has no `kind`).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::read(text)?;
        let problem = parse_problem(&mut raw)?;
        let mut cfg = RunConfig::defaults(problem);

        let g = &mut cfg.grid;
        raw.take_parsed("grid", "x_min", &mut g.x_min)?;
        raw.take_parsed("grid", "x_max", &mut g.x_max)?;
        raw.take_parsed("grid", "nx", &mut g.nx)?;
        raw.take_parsed("grid", "nt", &mut g.nt)?;
        raw.take_with("grid", "boundary", &mut g.boundary, |s| match s {
            "closed_form" => Ok(BoundarySpec::ClosedForm),
            "linear_extrapolation" => Ok(BoundarySpec::LinearExtrapolation),
            _ => Err("expected closed_form or linear_extrapolation".into()),
        })?;

        let m = &mut cfg.mc;
        raw.take_parsed("mc", "paths", &mut m.paths)?;
        raw.take_parsed("mc", "dt", &mut m.dt)?;
        raw.take_parsed("mc", "seed", &mut m.seed)?;
        raw.take_with("mc", "exit_rule", &mut m.exit_rule, |s| match s {
            "grid_crossing" => Ok(ExitRule::GridCrossing),
            "brownian_bridge" => Ok(ExitRule::BrownianBridge),
            _ => Err("expected grid_crossing or brownian_bridge".into()),
        })?;
        raw.take_parsed("mc", "stride", &mut m.stride)?;
        raw.take_parsed("mc", "dump_paths", &mut m.dump_paths)?;

        let v = &mut cfg.verify;
        raw.take_with("verify", "policy", &mut v.policy, parse_policy)?;
        raw.take_with("verify", "field", &mut v.field, |s| match s {
            "closed_form" => Ok(FieldSpec::ClosedForm),
            "solved" => Ok(FieldSpec::Solved),
            _ => Err("expected closed_form or solved".into()),
        })?;
        raw.take_parsed("verify", "t0", &mut v.t0)?;
        raw.take_parsed("verify", "x0", &mut v.x0)?;
        raw.take_parsed("verify", "se_multiplier", &mut v.se_multiplier)?;
        raw.take_parsed("verify", "c_dx", &mut v.c_dx)?;
        raw.take_parsed("verify", "c_dt", &mut v.c_dt)?;
        raw.take_with("verify", "tolerance", &mut v.tolerance, |s| match s {
            "auto" => Ok(None),
            _ => parse_float(s).map(Some),
        })?;
        raw.take_parsed("verify", "truncation_T1", &mut v.truncation_t1)?;
        raw.take_parsed(
            "verify",
            "common_random_numbers",
            &mut v.common_random_numbers,
        )?;
        raw.take_parsed("verify", "necessity", &mut v.necessity)?;
        raw.take_parsed("verify", "ladder_levels", &mut v.ladder_levels)?;

        raw.reject_leftovers()?;
        Ok(cfg)
    }

    /// The resolved configuration, every key spelled out.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("[problem]\nkind", self.problem.kind().to_string());
        match self.problem {
            ProblemSection::Advertising {
                eta,
                alpha,
                beta,
                horizon,
            } => {
                put("eta", num(eta));
                put("alpha", num(alpha));
                put("beta", num(beta));
                put("horizon", num(horizon));
            }
            ProblemSection::ExitDemo(v) => match v {
                ExitVariant::ExitTime { horizon } => {
                    put("variant", "exit_time".into());
                    put("horizon", num(horizon));
                }
                ExitVariant::Constant { value } => {
                    put("variant", "constant".into());
                    put("value", num(value));
                }
                ExitVariant::Controlled => put("variant", "controlled".into()),
            },
            ProblemSection::Discounted { rate, cost } => {
                put("rate", num(rate));
                put("cost", num(cost));
            }
        }
        let g = &self.grid;
        put("\n[grid]\nx_min", num(g.x_min));
        put("x_max", num(g.x_max));
        put("nx", g.nx.to_string());
        put("nt", g.nt.to_string());
        put(
            "boundary",
            match g.boundary {
                BoundarySpec::ClosedForm => "closed_form",
                BoundarySpec::LinearExtrapolation => "linear_extrapolation",
            }
            .into(),
        );
        let m = &self.mc;
        put("\n[mc]\npaths", m.paths.to_string());
        put("dt", num(m.dt));
        put("seed", m.seed.to_string());
        put("exit_rule", m.exit_rule.as_str().into());
        put("stride", m.stride.to_string());
        put("dump_paths", m.dump_paths.to_string());
        let v = &self.verify;
        put(
            "\n[verify]\npolicy",
            match v.policy {
                PolicySpec::Feedback => "feedback".into(),
                PolicySpec::Zero => "zero".into(),
                PolicySpec::Constant(z) => format!("constant:{}", num(z)),
            },
        );
        put(
            "field",
            match v.field {
                FieldSpec::ClosedForm => "closed_form",
                FieldSpec::Solved => "solved",
            }
            .into(),
        );
        put("t0", num(v.t0));
        put("x0", num(v.x0));
        put("se_multiplier", num(v.se_multiplier));
        put("c_dx", num(v.c_dx));
        put("c_dt", num(v.c_dt));
        put("tolerance", v.tolerance.map_or_else(|| "auto".into(), num));
        put("truncation_T1", num(v.truncation_t1));
        put("common_random_numbers", v.common_random_numbers.to_string());
        put("necessity", v.necessity.to_string());
        put("ladder_levels", v.ladder_levels.to_string());
        s
    }
}

/// Shortest round-trip representation (`1.0`, `0.001`, `1e-12`).
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn parse_float(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_policy(s: &str) -> Result<PolicySpec, String> {
    match s {
        "feedback" => Ok(PolicySpec::Feedback),
        "zero" => Ok(PolicySpec::Zero),
        _ => match s.strip_prefix("constant:") {
            Some(z) => parse_float(z.trim()).map(PolicySpec::Constant),
            None => Err("expected feedback, zero or constant:<z>".into()),
        },
    }
}

fn parse_problem(raw: &mut RawConfig) -> Result<ProblemSection, ConfigError> {
    let mut kind = String::from("advertising");
    let kind_line = raw.line_of("problem", "kind");
    raw.take_with("problem", "kind", &mut kind, |s| Ok(s.to_string()))?;
    match kind.as_str() {
        "advertising" => {
            let p = AdvertisingParams::reference();
            let (mut eta, mut alpha, mut beta, mut horizon) = (p.eta, p.alpha, p.beta, p.horizon);
            raw.take_parsed("problem", "eta", &mut eta)?;
            raw.take_parsed("problem", "alpha", &mut alpha)?;
            raw.take_parsed("problem", "beta", &mut beta)?;
            raw.take_parsed("problem", "horizon", &mut horizon)?;
            Ok(ProblemSection::Advertising { eta, alpha, beta, horizon })
        }
        "exit_demo" => {
            let mut variant = String::from("exit_time");
            let line = raw.line_of("problem", "variant");
            raw.take_with("problem", "variant", &mut variant, |s| Ok(s.to_string()))?;
            match variant.as_str() {
                "exit_time" => {
                    let mut horizon = 5.0;
                    raw.take_parsed("problem", "horizon", &mut horizon)?;
                    Ok(ProblemSection::ExitDemo(ExitVariant::ExitTime { horizon }))
                }
                "constant" => {
                    let mut value = 1.0;
                    raw.take_parsed("problem", "value", &mut value)?;
                    Ok(ProblemSection::ExitDemo(ExitVariant::Constant { value }))
                }
                "controlled" => Ok(ProblemSection::ExitDemo(ExitVariant::Controlled)),
                other => Err(ConfigError::at(
                    line.unwrap_or(0),
                    "variant",
                    format!("unknown exit_demo variant `{other}` (expected exit_time, constant or controlled)"),
                )),
            }
        }
        "discounted_demo" => {
            let (mut rate, mut cost) = (1.0, 1.0);
            raw.take_parsed("problem", "rate", &mut rate)?;
            raw.take_parsed("problem", "cost", &mut cost)?;
            Ok(ProblemSection::Discounted { rate, cost })
        }
        other => Err(ConfigError::at(
            kind_line.unwrap_or(0),
            "kind",
            format!("unknown problem kind `{other}` (expected advertising, exit_demo or discounted_demo)"),
        )),
    }
}

const SECTIONS: [&str; 4] = ["problem", "grid", "mc", "verify"];

struct RawValue {
    value: String,
    line: usize,
}

/// Section → key → value, with source line numbers.
struct RawConfig {
    sections: BTreeMap<&'static str, BTreeMap<String, RawValue>>,
}

impl RawConfig {
    fn read(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<&'static str, BTreeMap<String, RawValue>> = BTreeMap::new();
        let mut current: Option<&'static str> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            // comments run from `#` or `;` to the end of the line
            let t = raw_line.split(['#', ';']).next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::line(line, "unterminated section header"))?
                    .trim();
                let known = SECTIONS.iter().find(|s| **s == name).ok_or_else(|| {
                    ConfigError::line(
                        line,
                        format!("unknown section [{name}] (expected problem, grid, mc or verify)"),
                    )
                })?;
                current = Some(known);
                sections.entry(known).or_default();
                continue;
            }
            let (key, value) = t
                .split_once('=')
                .ok_or_else(|| ConfigError::line(line, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError::line(line, "empty key"));
            }
            let section = current
                .ok_or_else(|| ConfigError::at(line, key, "key appears before any [section]"))?;
            let entries = sections.entry(section).or_default();
            if let Some(prev) = entries.get(key) {
                return Err(ConfigError::at(
                    line,
                    key,
                    format!("duplicate key (first set on line {})", prev.line),
                ));
            }
            entries.insert(
                key.to_string(),
                RawValue {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self { sections })
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|v| v.line)
    }

    fn take_with<T>(
        &mut self,
        section: &str,
        key: &str,
        slot: &mut T,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = self.sections.get_mut(section).and_then(|s| s.remove(key)) {
            *slot = parse(&v.value).map_err(|m| ConfigError::at(v.line, key, m))?;
        }
        Ok(())
    }

    fn take_parsed<T: FromStr + ParseKind>(
        &mut self,
        section: &str,
        key: &str,
        slot: &mut T,
    ) -> Result<(), ConfigError> {
        self.take_with(section, key, slot, T::parse_value)
    }

    fn reject_leftovers(&self) -> Result<(), ConfigError> {
        let mut first: Option<(&str, &str, usize)> = None;
        for (section, entries) in &self.sections {
            for (k, v) in entries {
                if first.is_none_or(|(_, _, l)| v.line < l) {
                    first = Some((section, k, v.line));
                }
            }
        }
        match first {
            Some((section, key, line)) => Err(ConfigError::at(
                line,
                key,
                format!("unknown key in [{section}] for this problem kind"),
            )),
            None => Ok(()),
        }
    }
}

trait ParseKind: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
}

impl ParseKind for f64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        parse_float(s)
    }
}

impl ParseKind for usize {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse()
            .map_err(|_| format!("`{s}` is not a nonnegative integer"))
    }
}

impl ParseKind for u64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse()
            .map_err(|_| format!("`{s}` is not a nonnegative integer"))
    }
}

impl ParseKind for bool {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("`{s}` is not true or false")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_advertising_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.problem.kind(), "advertising");
        assert_eq!(cfg.verify.x0, 2.0);
        assert_eq!(cfg.mc.paths, 100_000);
    }

    #[test]
    fn echo_is_a_fixed_point() {
        let texts = [
            "",
            "[problem]\nkind = exit_demo\nvariant = constant\nvalue = 2.5\n[mc]\ndt = 1e-4\n",
            "[problem]\nkind = discounted_demo\nrate = 0.5\n[verify]\ntolerance = 0.001\npolicy = constant:-0.25\n",
            "[problem]\nkind = exit_demo\nvariant = controlled\n[verify]\nnecessity = false\n",
        ];
        for text in texts {
            let cfg = RunConfig::parse(text).unwrap();
            let echo = cfg.echo();
            let again = RunConfig::parse(&echo).unwrap();
            assert_eq!(again, cfg);
            assert_eq!(again.echo(), echo);
        }
    }

    #[test]
    fn errors_cite_line_and_key() {
        let e =
            RunConfig::parse("[problem]\nkind = advertising\n\n[mc]\npaths = many\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert_eq!(e.key.as_deref(), Some("paths"));
        assert!(e.to_string().starts_with("line 5, key `paths`"));

        let e = RunConfig::parse("[grid]\nnx = 3\nnx = 4\n").unwrap_err();
        assert_eq!(e.line, Some(3));

        let e = RunConfig::parse("[problem]\nkind = advertising\nvalue = 1\n").unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(3), Some("value")));

        let e = RunConfig::parse("[solver]\n").unwrap_err();
        assert_eq!(e.line, Some(1));

        let e = RunConfig::parse("paths = 3\n").unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn comments_are_ignored() {
        let cfg = RunConfig::parse("# run\n[mc] ; section\npaths = 10   # few\n").unwrap();
        assert_eq!(cfg.mc.paths, 10);
    }

    #[test]
    fn parses_policies_and_tolerance() {
        assert_eq!(parse_policy("constant: 0.5"), Ok(PolicySpec::Constant(0.5)));
        assert!(parse_policy("greedy").is_err());
        let cfg = RunConfig::parse("[verify]\ntolerance = 0\n").unwrap();
        assert_eq!(cfg.verify.tolerance, Some(0.0));
        assert!(cfg.echo().contains("tolerance = 0.0\n"));
    }
}
