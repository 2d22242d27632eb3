use std::path::Path;

use proptest::prelude::*;
use snr_core::tcs::BernoulliPreset;
use snr_harness::config::{DataSource, LambdaSpec};
use snr_harness::methods::{StepSpec, TcsParams};
use snr_harness::{ConfigError, ExperimentConfig, MethodSpec};

fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    ExperimentConfig::from_toml_str(text, Path::new("/cfg"))
}

fn key_of(text: &str) -> String {
    parse(text).unwrap_err().key_path().expect("error names a key").to_string()
}

#[test]
fn defaults_of_a_minimal_config() {
    let cfg = parse(r#"methods = ["tcs"]"#).unwrap();
    assert_eq!(
        cfg.data,
        DataSource::Artificial {
            n: 2000,
            d: 20,
            c: 0.9,
            seed: 1
        }
    );
    assert_eq!(cfg.lambda, LambdaSpec::InverseN);
    assert_eq!(cfg.repeats, 10);
    assert_eq!(cfg.tol, 1e-5);
    assert_eq!(cfg.time_budget_s, Some(60.0));
    assert_eq!(cfg.output_dir, Path::new("/cfg/runs"));
    assert_eq!(cfg.seed, 0);
    assert!(cfg.grid.is_none());
}

#[test]
fn every_key_is_read() {
    let cfg = parse(
        r#"
data = "sets/a9a"
lambda = 0.001
scale = true
methods = ["tcs(tau_n=50, b=uniform-0.03, gamma=1.5)", "svrg(stepsize=0.5/L, inner_loop=100)"]
repeats = 4
tol = 1e-6
time_budget_s = 30
max_passes = 50
eval_every = 25
output_dir = "out"
seed = 9
grid_b = [0.9, "large"]
grid_gamma = [1, 1.8]
grid_repeats = 2
grid_method = "tcs(tau_n=300)"
"#,
    )
    .unwrap();
    assert_eq!(cfg.data, DataSource::Libsvm("/cfg/sets/a9a".into()));
    assert_eq!(cfg.lambda, LambdaSpec::Value(0.001));
    assert!(cfg.scale);
    assert_eq!(cfg.methods.len(), 2);
    assert_eq!(cfg.methods[1].to_string(), "svrg(stepsize=0.5/L,inner_loop=100)");
    assert_eq!((cfg.repeats, cfg.tol, cfg.time_budget_s, cfg.max_passes), (4, 1e-6, Some(30.0), 50.0));
    assert_eq!(cfg.eval_every, Some(25));
    assert_eq!(cfg.output_dir, Path::new("/cfg/out"));
    assert_eq!(cfg.seed, 9);
    let grid = cfg.grid.unwrap();
    assert_eq!(grid.b, vec![BernoulliPreset::Fixed(0.9), BernoulliPreset::LargeData]);
    assert_eq!(grid.gamma, vec![1.0, 1.8]);
    assert_eq!(grid.repeats, 2);
    assert_eq!(grid.base.tau_n, Some(300));
}

#[test]
fn errors_name_the_offending_key() {
    let cases = [
        (r#"methods = ["tcs"]
colour = 1"#, "colour"),
        ("repeats = 3", "methods"),
        ("methods = []", "methods"),
        (r#"methods = ["tcs", "newton"]"#, "methods[1]"),
        (r#"methods = ["tcs", "sgd(stepsize=-1)"]"#, "methods[1]"),
        (r#"methods = ["tcs(tau_n=0)"]"#, "methods[0]"),
        (r#"methods = ["tcs"]
repeats = 0"#, "repeats"),
        (r#"methods = ["tcs"]
tol = "small""#, "tol"),
        (r#"methods = ["tcs"]
lambda = "1/d""#, "lambda"),
        (r#"methods = ["tcs"]
lambda = -1"#, "lambda"),
        (r#"methods = ["tcs"]
artificial_c = 1.0"#, "artificial_c"),
        (r#"methods = ["tcs"]
data = "x"
artificial_n = 5"#, "artificial_n"),
        (r#"methods = ["tcs"]
scale = 1"#, "scale"),
        (r#"grid_b = [0.5, 1.5]
grid_gamma = [1]"#, "grid_b[1]"),
        (r#"grid_b = [0.5]
grid_gamma = [1, 0]"#, "grid_gamma[1]"),
        ("grid_gamma = [1]", "grid_b"),
        (r#"grid_b = [0.5]"#, "grid_gamma"),
        (r#"grid_b = []
grid_gamma = [1]"#, "grid_b"),
        (r#"methods = ["tcs"]
grid_repeats = 2"#, "grid_repeats"),
        (r#"grid_b = [0.5]
grid_gamma = [1]
grid_method = "sag""#, "grid_method"),
        (r#"methods = ["tcs"]
seed = -3"#, "seed"),
    ];
    for (text, key) in cases {
        assert_eq!(key_of(text), key, "config:\n{text}");
    }
}

#[test]
fn syntax_and_io_errors() {
    assert!(matches!(parse("methods = [").unwrap_err(), ConfigError::Syntax(_)));
    let err = ExperimentConfig::from_file("/nonexistent/dir/bench.toml").unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
    assert!(err.to_string().contains("bench.toml"));
}

#[test]
fn grid_only_config_needs_no_methods() {
    let cfg = parse(
        r#"
grid_b = ["uniform"]
grid_gamma = [1.0]
"#,
    )
    .unwrap();
    assert!(cfg.methods.is_empty());
    assert_eq!(cfg.grid.unwrap().base, TcsParams::default());
}

#[test]
fn method_strings() {
    let m = MethodSpec::parse("TCS( tau_d = 5, tau_n=150, b=large, line_search=armijo )").unwrap();
    let MethodSpec::Tcs(p) = &m else { panic!() };
    assert_eq!((p.tau_d, p.tau_n, p.b), (Some(5), Some(150), Some(BernoulliPreset::LargeData)));
    assert_eq!(p.armijo, Some((0.09, 0.9, 1.0)));
    assert_eq!(m.name(), "tcs-armijo");

    let MethodSpec::Baseline(p) = MethodSpec::parse("sgd(stepsize=1/L)").unwrap() else { panic!() };
    assert_eq!(p.stepsize, Some(StepSpec::OverL(1.0)));
    let MethodSpec::Baseline(p) = MethodSpec::parse("sag(stepsize=0.02)").unwrap() else { panic!() };
    assert_eq!(p.stepsize, Some(StepSpec::Value(0.02)));

    for bad in [
        "tcs(",
        "tcs(gamma)",
        "tcs(tau_n=1,tau_n=2)",
        "tcs(c=0.1)",
        "tcs(b=1)",
        "tcs(line_search=wolfe)",
        "sgd(inner_loop=5)",
        "sag(stepsize=0/L)",
        "svrg(max_passes=0)",
        "lbfgs",
        "",
    ] {
        assert!(MethodSpec::parse(bad).is_err(), "{bad} should be rejected");
    }
}

fn arb_b() -> impl Strategy<Value = BernoulliPreset> {
    prop_oneof![
        Just(BernoulliPreset::Uniform),
        Just(BernoulliPreset::LargeData),
        (0.0..0.5f64).prop_map(BernoulliPreset::UniformMinus),
        (0.001..0.999f64).prop_map(BernoulliPreset::Fixed),
    ]
}

fn arb_method() -> impl Strategy<Value = MethodSpec> {
    let tcs = (
        proptest::option::of(1..500usize),
        proptest::option::of(1..500usize),
        proptest::option::of(arb_b()),
        proptest::option::of(0.1..1.99f64),
        proptest::option::of((0.01..0.5f64, 0.1..0.99f64, 0.5..8.0f64)),
        proptest::option::of(1..100_000usize),
        proptest::option::of(1..5000usize),
    )
        .prop_map(|(tau_d, tau_n, b, gamma, armijo, max_iters, eval_every)| {
            MethodSpec::Tcs(TcsParams {
                tau_d,
                tau_n,
                b,
                gamma,
                armijo,
                max_iters,
                eval_every,
            })
        });
    let baseline = (
        0..3usize,
        proptest::option::of(prop_oneof![
            (1e-4..10.0f64).prop_map(StepSpec::Value),
            (0.01..4.0f64).prop_map(StepSpec::OverL)
        ]),
        proptest::option::of(1..10_000usize),
        proptest::option::of(0.5..500.0f64),
        proptest::option::of(1..5000usize),
    )
        .prop_map(|(k, stepsize, inner, max_passes, eval_every)| {
            let name = ["sgd", "sag", "svrg"][k];
            let MethodSpec::Baseline(mut p) = MethodSpec::parse(name).unwrap() else { unreachable!() };
            p.stepsize = stepsize;
            p.inner_loop = if name == "svrg" { inner } else { None };
            p.max_passes = max_passes;
            p.eval_every = eval_every;
            MethodSpec::Baseline(p)
        });
    prop_oneof![tcs, baseline]
}

proptest! {
    #[test]
    fn canonical_method_string_round_trips(m in arb_method()) {
        let text = m.to_string();
        prop_assert_eq!(MethodSpec::parse(&text).unwrap(), m, "{}", text);
    }
}
