//! Method strings: `name` or `name(key=value, …)`.
//!
//! * `tcs`: `tau_d`, `tau_n`, `b` (number, `uniform`, `uniform-δ`, `large`),
//!   `gamma` (number or `auto`), `line_search` (`off` or `armijo`), `c`,
//!   `beta`, `gamma_init`, `max_iters`, `eval_every`.
//! * `sgd`, `sag`, `svrg`: `stepsize` (number, `1/L` or `k/L`),
//!   `inner_loop` (SVRG only), `max_passes`, `eval_every`.

use std::fmt;

use snr_core::baselines::{BaselineConfig, BaselineMethod};
use snr_core::data_io::DatasetReport;
use snr_core::tcs::{default_gamma, BernoulliPreset, LineSearch, TcsConfig};
use snr_core::GlmDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSpec {
    Value(f64),
    /// `k/L` with the dataset's smoothness constant `L`.
    OverL(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TcsParams {
    pub tau_d: Option<usize>,
    pub tau_n: Option<usize>,
    pub b: Option<BernoulliPreset>,
    /// `None` picks the stepsize from the condition number.
    pub gamma: Option<f64>,
    pub armijo: Option<(f64, f64, f64)>,
    pub max_iters: Option<usize>,
    pub eval_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub method: BaselineMethod,
    pub stepsize: Option<StepSpec>,
    pub inner_loop: Option<usize>,
    pub max_passes: Option<f64>,
    pub eval_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Tcs(TcsParams),
    Baseline(BaselineParams),
}

/// Experiment-wide settings a method falls back on.
#[derive(Debug, Clone, Copy)]
pub struct RunDefaults {
    pub tol: f64,
    pub time_budget_s: Option<f64>,
    pub max_passes: f64,
    pub eval_every: Option<usize>,
}

const ARMIJO_C: f64 = 0.09;
const ARMIJO_BETA: f64 = 0.9;

fn parse_num(key: &str, v: &str) -> Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("`{key}` expects a number, got \"{v}\""))
}

fn parse_count(key: &str, v: &str) -> Result<usize, String> {
    match v.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("`{key}` expects a positive integer, got \"{v}\"")),
        Ok(x) => Ok(x),
    }
}

/// Parses a coin probability: a number in `(0, 1)` or a preset name.
pub fn parse_b(v: &str) -> Result<BernoulliPreset, String> {
    let v = v.trim();
    match v {
        "uniform" => Ok(BernoulliPreset::Uniform),
        "large" => Ok(BernoulliPreset::LargeData),
        "default" => Ok(BernoulliPreset::default()),
        _ => {
            if let Some(delta) = v.strip_prefix("uniform-") {
                return Ok(BernoulliPreset::UniformMinus(parse_num("b", delta)?));
            }
            let b = parse_num("b", v)?;
            if b > 0.0 && b < 1.0 {
                Ok(BernoulliPreset::Fixed(b))
            } else {
                Err(format!("`b` must lie in (0, 1), got {b}"))
            }
        }
    }
}

fn parse_step(v: &str) -> Result<StepSpec, String> {
    if let Some(k) = v.strip_suffix("/L") {
        let k = if k.is_empty() { 1.0 } else { parse_num("stepsize", k)? };
        return if k > 0.0 {
            Ok(StepSpec::OverL(k))
        } else {
            Err(format!("`stepsize` must be positive, got {v}"))
        };
    }
    match parse_num("stepsize", v)? {
        x if x > 0.0 => Ok(StepSpec::Value(x)),
        x => Err(format!("`stepsize` must be positive, got {x}")),
    }
}

fn split_call(text: &str) -> Result<(String, Vec<(String, String)>), String> {
    let text: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let (name, args) = match text.find('(') {
        Some(open) => {
            let inner = text[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| format!("unbalanced parentheses in \"{text}\""))?;
            (&text[..open], inner)
        }
        None => (text.as_str(), ""),
    };
    if name.is_empty() {
        return Err("empty method name".into());
    }
    let mut pairs = Vec::new();
    for part in args.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got \"{part}\""))?;
        if pairs.iter().any(|(seen, _): &(String, String)| seen == k) {
            return Err(format!("`{k}` given twice"));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok((name.to_ascii_lowercase(), pairs))
}

impl MethodSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let (name, args) = split_call(text)?;
        match name.as_str() {
            "tcs" => {
                let mut p = TcsParams::default();
                let mut line_search = false;
                let (mut c, mut beta, mut gamma_init) = (None, None, None);
                for (k, v) in &args {
                    match k.as_str() {
                        "tau_d" => p.tau_d = Some(parse_count(k, v)?),
                        "tau_n" => p.tau_n = Some(parse_count(k, v)?),
                        "b" => p.b = Some(parse_b(v)?),
                        "gamma" if v == "auto" => p.gamma = None,
                        "gamma" => p.gamma = Some(parse_num(k, v)?),
                        "line_search" => {
                            line_search = match v.as_str() {
                                "armijo" => true,
                                "off" => false,
                                _ => return Err(format!("`line_search` is `off` or `armijo`, got \"{v}\"")),
                            }
                        }
                        "c" => c = Some(parse_num(k, v)?),
                        "beta" => beta = Some(parse_num(k, v)?),
                        "gamma_init" => gamma_init = Some(parse_num(k, v)?),
                        "max_iters" => p.max_iters = Some(parse_count(k, v)?),
                        "eval_every" => p.eval_every = Some(parse_count(k, v)?),
                        _ => return Err(format!("unknown tcs parameter `{k}`")),
                    }
                }
                if line_search {
                    p.armijo = Some((c.unwrap_or(ARMIJO_C), beta.unwrap_or(ARMIJO_BETA), gamma_init.unwrap_or(1.0)));
                } else if c.or(beta).or(gamma_init).is_some() {
                    return Err("`c`, `beta` and `gamma_init` need line_search=armijo".into());
                }
                Ok(MethodSpec::Tcs(p))
            }
            "sgd" | "sag" | "svrg" => {
                let method = match name.as_str() {
                    "sgd" => BaselineMethod::Sgd,
                    "sag" => BaselineMethod::Sag,
                    _ => BaselineMethod::Svrg,
                };
                let mut p = BaselineParams {
                    method,
                    stepsize: None,
                    inner_loop: None,
                    max_passes: None,
                    eval_every: None,
                };
                for (k, v) in &args {
                    match k.as_str() {
                        "stepsize" => p.stepsize = Some(parse_step(v)?),
                        "inner_loop" if method == BaselineMethod::Svrg => p.inner_loop = Some(parse_count(k, v)?),
                        "max_passes" => {
                            let x = parse_num(k, v)?;
                            if x <= 0.0 {
                                return Err(format!("`max_passes` must be positive, got {x}"));
                            }
                            p.max_passes = Some(x);
                        }
                        "eval_every" => p.eval_every = Some(parse_count(k, v)?),
                        _ => return Err(format!("unknown {name} parameter `{k}`")),
                    }
                }
                Ok(MethodSpec::Baseline(p))
            }
            other => Err(format!("unknown method `{other}` (expected tcs, sgd, sag or svrg)")),
        }
    }

    /// Bare method name, used in file names.
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Tcs(p) if p.armijo.is_some() => "tcs-armijo",
            MethodSpec::Tcs(_) => "tcs",
            MethodSpec::Baseline(p) => p.method.as_str(),
        }
    }

    pub fn needs_report(&self) -> bool {
        match self {
            MethodSpec::Tcs(p) => p.gamma.is_none(),
            MethodSpec::Baseline(p) => !matches!(p.stepsize, Some(StepSpec::Value(_))),
        }
    }
}

impl fmt::Display for StepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSpec::Value(x) => write!(f, "{x}"),
            StepSpec::OverL(k) => write!(f, "{k}/L"),
        }
    }
}

fn fmt_b(b: &BernoulliPreset) -> String {
    match b {
        BernoulliPreset::Uniform => "uniform".into(),
        BernoulliPreset::UniformMinus(d) => format!("uniform-{d}"),
        BernoulliPreset::LargeData => "large".into(),
        BernoulliPreset::Fixed(b) => b.to_string(),
    }
}

impl fmt::Display for MethodSpec {
    /// Canonical form; parsing it gives back an equal spec.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut args: Vec<String> = Vec::new();
        let name = match self {
            MethodSpec::Tcs(p) => {
                if let Some(t) = p.tau_d {
                    args.push(format!("tau_d={t}"));
                }
                if let Some(t) = p.tau_n {
                    args.push(format!("tau_n={t}"));
                }
                if let Some(b) = &p.b {
                    args.push(format!("b={}", fmt_b(b)));
                }
                if let Some(g) = p.gamma {
                    args.push(format!("gamma={g}"));
                }
                if let Some((c, beta, g0)) = p.armijo {
                    args.push(format!("line_search=armijo,c={c},beta={beta},gamma_init={g0}"));
                }
                if let Some(m) = p.max_iters {
                    args.push(format!("max_iters={m}"));
                }
                if let Some(e) = p.eval_every {
                    args.push(format!("eval_every={e}"));
                }
                "tcs"
            }
            MethodSpec::Baseline(p) => {
                if let Some(s) = p.stepsize {
                    args.push(format!("stepsize={s}"));
                }
                if let Some(m) = p.inner_loop {
                    args.push(format!("inner_loop={m}"));
                }
                if let Some(m) = p.max_passes {
                    args.push(format!("max_passes={m}"));
                }
                if let Some(e) = p.eval_every {
                    args.push(format!("eval_every={e}"));
                }
                p.method.as_str()
            }
        };
        if args.is_empty() {
            write!(f, "{name}")
        } else {
            write!(f, "{name}({})", args.join(","))
        }
    }
}

impl TcsParams {
    /// Solver config for one run. `report` is required when `gamma` is unset.
    pub fn build(&self, ds: &GlmDataset, report: Option<&DatasetReport>, defaults: &RunDefaults, seed: u64) -> TcsConfig {
        let (d, n) = (ds.d().max(1), ds.n().max(1));
        let tau_d = self.tau_d.unwrap_or(d);
        let tau_n = self.tau_n.unwrap_or(150.min(n));
        let b = self.b.unwrap_or_default().resolve(tau_d.min(d), tau_n.min(n), d, n);
        let gamma = self
            .gamma
            .unwrap_or_else(|| report.map_or(1.0, |r| default_gamma(r.condition_number)));
        let line_search = match self.armijo {
            Some((c, beta, gamma_init)) => LineSearch::Armijo { c, beta, gamma_init },
            None => LineSearch::Off,
        };
        TcsConfig {
            tau_d,
            tau_n,
            b,
            gamma,
            tol: defaults.tol,
            max_iters: self.max_iters.unwrap_or(1_000_000),
            eval_every: self.eval_every.or(defaults.eval_every).unwrap_or(1000),
            seed,
            time_budget_s: defaults.time_budget_s,
            line_search,
        }
        .clamped(d, n)
    }
}

impl BaselineParams {
    pub fn build(&self, report: Option<&DatasetReport>, defaults: &RunDefaults, seed: u64) -> BaselineConfig {
        let mut cfg = BaselineConfig::new(self.method);
        cfg.stepsize = match (self.stepsize, report) {
            (Some(StepSpec::Value(x)), _) => Some(x),
            (Some(StepSpec::OverL(k)), Some(r)) => Some(k / r.smoothness_l),
            (None, Some(r)) => Some(1.0 / r.smoothness_l),
            // Left to the solver, which computes `1/L` itself.
            (Some(StepSpec::OverL(_)), None) | (None, None) => None,
        };
        cfg.inner_loop = self.inner_loop;
        cfg.max_passes = self.max_passes.unwrap_or(defaults.max_passes);
        cfg.tol = defaults.tol;
        cfg.eval_every = self.eval_every.or(defaults.eval_every);
        cfg.seed = seed;
        cfg.time_budget_s = defaults.time_budget_s;
        cfg
    }
}
