use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;

use rcident_cli::config::{
    BetaConfig, ModelConfig, RecoveryBlock, RouteKind, ScenarioConfig, VariantConfig,
};
use rcident_cli::report::{fmt_num, Num};
use rcident_cli::{execute, RunStatus};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

fn rcident(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcident"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn bundled_mixture_succeeds_with_all_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rcident(&scenario_path("logit_k2_mixture"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    for f in [
        "moments_order1.csv",
        "moments_order2.csv",
        "moments_order3.csv",
        "v_derivs.csv",
        "diagnostics.csv",
        "welfare.csv",
        "summary.json",
        "run_meta.json",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let m2 = std::fs::read_to_string(tmp.path().join("moments_order2.csv")).unwrap();
    let mut lines = m2.lines();
    assert_eq!(
        lines.next(),
        Some("index,recovered,true,abs_err,rel_err,route")
    );
    let truths: Vec<f64> = lines
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(truths, vec![1.0, 2.0, 5.0]);
    let s = summary(tmp.path());
    assert_eq!(s["status"], "ok");
    assert_eq!(s["exit_code"], 0);
}

#[test]
fn zero_slopes_exit_two_with_failure_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rcident(&scenario_path("beta_zero"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(tmp.path());
    assert_eq!(s["status"], "identification_failure");
    let f = &s["failures"][0];
    assert_eq!(f["class"], "relevance");
    assert_eq!(f["order"], 1);
    assert!(!tmp.path().join("moments_order1.csv").exists());
    assert!(tmp.path().join("diagnostics.csv").exists());
}

#[test]
fn malformed_config_exits_one_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{ \"name\": \"broken\", ");
    let out = rcident(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid configuration"), "{err}");
    assert!(!tmp.path().join("out").join("summary.json").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let text = std::fs::read_to_string(scenario_path("logit_k2_mixture")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["recovery"]["tolerance"] = serde_json::json!(1e-3);
    let e = ScenarioConfig::parse(&v.to_string())
        .unwrap_err()
        .to_string();
    assert!(e.contains("unknown field"), "{e}");

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &v.to_string());
    assert_eq!(
        rcident(&cfg, &tmp.path().join("out"), &[]).status.code(),
        Some(1)
    );
}

#[test]
fn cross_field_validation() {
    let base: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_path("logit_k2_mixture")).unwrap())
            .unwrap();
    let bad = |f: &dyn Fn(&mut serde_json::Value)| {
        let mut v = base.clone();
        f(&mut v);
        ScenarioConfig::parse(&v.to_string())
            .unwrap_err()
            .to_string()
    };
    assert!(
        bad(&|v| v["recovery"]["known_scale"] = serde_json::json!([1.0])).contains("known_scale")
    );
    assert!(
        bad(&|v| v["recovery"]["route"] = serde_json::json!("independence")).contains("abs_mean")
    );
    assert!(bad(&|v| v["recovery"]["max_order"] = serde_json::json!(0)).contains("max_order"));
    assert!(
        bad(&|v| v["model"]["nonnegative_domain"] = serde_json::json!(true)).contains("forward")
    );
    assert!(
        bad(&|v| v["beta"]["discrete"]["support"] = serde_json::json!([[1.0]]))
            .contains("dimension")
    );
    assert!(bad(&|v| v["welfare"]["points"] = serde_json::json!([[0.1]])).contains("coordinates"));
}

#[test]
fn config_echo_round_trips_for_every_bundled_scenario() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ScenarioConfig::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let report = execute(&cfg).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&rcident_cli::report::summary_json(&report)).unwrap();
        let echoed: ScenarioConfig = serde_json::from_value(json["config"].clone()).unwrap();
        assert_eq!(echoed, cfg, "{}", path.display());
    }
}

#[test]
fn flags_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rcident(
        &scenario_path("logit_k2_mixture"),
        tmp.path(),
        &[
            "--max-order",
            "1",
            "--route",
            "vknown",
            "--scheme",
            "forward",
            "--seed",
            "9",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("moments_order1.csv").exists());
    assert!(!tmp.path().join("moments_order2.csv").exists());
    let m1 = std::fs::read_to_string(tmp.path().join("moments_order1.csv")).unwrap();
    assert!(m1.lines().skip(1).all(|l| l.ends_with(",vknown")));
    let s = summary(tmp.path());
    assert_eq!(s["config"]["seed"], 9);
    assert_eq!(s["config"]["fd"]["scheme"], "forward");
    assert_eq!(s["derivatives"]["scheme"], "forward");
}

#[test]
fn monte_carlo_depends_only_on_the_seed() {
    let mut cfg =
        ScenarioConfig::parse(&std::fs::read_to_string(scenario_path("logit_k2_mixture")).unwrap())
            .unwrap();
    cfg.evaluation = rcident_cli::config::EvaluationConfig::MonteCarlo { draws: 500 };
    cfg.recovery.max_order = 1;
    cfg.welfare = None;
    let level = |seed: u64| {
        let mut c = cfg.clone();
        c.seed = seed;
        execute(&c).unwrap().table.unwrap().level().to_vec()
    };
    assert_eq!(level(3), level(3));
    assert_ne!(level(3), level(4));
}

#[test]
fn independence_scenarios_report_mirrored_signs() {
    for (name, sign) in [("independence_pos", "+"), ("independence_neg", "-")] {
        let cfg =
            ScenarioConfig::parse(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap();
        let r = execute(&cfg).unwrap();
        assert_eq!(r.status, RunStatus::Success);
        assert_eq!(r.diagnostics.unwrap().sign_beta11.symbol(), sign);
    }
}

#[test]
fn one_good_scenario_reports_monotone_map() {
    let cfg = ScenarioConfig::parse(
        &std::fs::read_to_string(scenario_path("logit_k1_rearrangement")).unwrap(),
    )
    .unwrap();
    let r = execute(&cfg).unwrap();
    let map = r.welfare[0]
        .quantile_map
        .as_ref()
        .unwrap()
        .as_ref()
        .unwrap();
    assert!(map.windows(2).all(|w| w[1].1 >= w[0].1));
}

#[test]
fn numbers_render_with_seventeen_digits() {
    assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt_num(-2.5), "-2.5000000000000000e0");
    assert_eq!(fmt_num(f64::NAN), "nan");
    assert_eq!(serde_json::to_string(&Num(f64::INFINITY)).unwrap(), "null");
}

fn logit_config(alphas: Vec<f64>, support: Vec<Vec<f64>>, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "generated".into(),
        model: ModelConfig {
            dims: vec![1; alphas.len()],
            variant: VariantConfig::AnalyticLogit {
                alphas,
                outside_good: true,
            },
            center: None,
            index_form: Default::default(),
            nonnegative_domain: false,
        },
        beta: BetaConfig::Discrete {
            support,
            weights: None,
        },
        fd: Default::default(),
        recovery: RecoveryBlock {
            route: RouteKind::Scale,
            max_order: 2,
            known_scale: Some(vec![1.0, 1.0]),
            abs_mean: None,
            v_derivs: None,
            relevance: None,
        },
        welfare: None,
        diagnostics: Default::default(),
        evaluation: Default::default(),
        seed,
    }
}

proptest! {
    #[test]
    fn rendered_numbers_parse_back_exactly(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let back: f64 = fmt_num(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
        let json: f64 = serde_json::from_str(&serde_json::to_string(&Num(v)).unwrap()).unwrap();
        prop_assert_eq!(json, v);
    }

    #[test]
    fn generated_configs_round_trip(
        a in -1.0f64..1.0,
        b in -1.0f64..1.0,
        pts in proptest::collection::vec((0.1f64..3.0, 0.1f64..3.0), 1..4),
        seed in any::<u64>(),
    ) {
        let support = pts.into_iter().map(|(x, y)| vec![x, y]).collect();
        let cfg = logit_config(vec![a, b], support, seed);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        prop_assert_eq!(ScenarioConfig::parse(&text).unwrap(), cfg);
    }
}
