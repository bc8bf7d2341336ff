#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sizer_core::evaluation::{MatrixEntry, Scenario, TacticMatrix};
use sizer_core::experiment::{SamplingPlan, TacticConfig};
use sizer_core::simulator::ConvergenceRange;
use sizer_core::sizing::SizingOptions;
use sizer_core::{
    json, Bound, Domain, ExpDecay, FunctionSpec, GoalSpec, GroundTruth, GroundTruthEntry, Operator,
    PlatformConfig, QualityKind, SystemUnderConfiguration, WorkloadModel,
};

pub const CURVE: ExpDecay = ExpDecay::new(1000.0, 0.002, 200.0);

pub fn domain() -> Domain {
    Domain::values((1..=16).map(|i| i * 128).collect::<Vec<u32>>())
}

pub fn suc() -> SystemUnderConfiguration {
    SystemUnderConfiguration::chain(
        "pipeline",
        vec![
            FunctionSpec::with_memory("resize", domain()),
            FunctionSpec::with_memory("classify", domain()),
        ],
    )
}

pub fn ground_truth() -> GroundTruth {
    GroundTruth::new(vec![
        GroundTruthEntry::new("resize", "*", CURVE).with_noise(0.05),
        GroundTruthEntry::new("classify", "*", ExpDecay::new(2000.0, 0.001, 100.0))
            .with_noise(0.05),
    ])
}

pub fn platform() -> PlatformConfig {
    PlatformConfig {
        deployment_convergence: ConvergenceRange {
            min: 1000,
            max: 1000,
        },
        ..PlatformConfig::default()
    }
}

pub fn goal() -> GoalSpec {
    GoalSpec::weighted([(QualityKind::RLat, 0.5), (QualityKind::ECost, 0.5)])
}

pub fn workload() -> WorkloadModel {
    WorkloadModel::single("default", 1.0)
}

pub fn matrix() -> TacticMatrix {
    let single = SystemUnderConfiguration::single(FunctionSpec::with_memory("resize", domain()));
    let config = |name: &str, tactics: TacticConfig| MatrixEntry {
        name: name.into(),
        tactics,
    };
    TacticMatrix {
        scenario: Scenario {
            suc: single,
            ground_truth: GroundTruth::new(vec![
                GroundTruthEntry::new("resize", "*", CURVE).with_noise(0.05)
            ]),
            platform: platform(),
            goal: goal(),
            workload: workload(),
        },
        configs: vec![
            config("baseline", TacticConfig::default()),
            config(
                "manifold",
                TacticConfig {
                    manifold_testbeds: true,
                    ..TacticConfig::default()
                },
            ),
            config(
                "isolated",
                TacticConfig {
                    isolate_executions: true,
                    ..TacticConfig::default()
                },
            ),
            config(
                "pruned",
                TacticConfig {
                    monotonic_prune: Some(Bound::new(QualityKind::ELat, Operator::Le, 700.0)),
                    ..TacticConfig::default()
                },
            ),
            config(
                "reuse",
                TacticConfig {
                    reuse_model: Some("any".into()),
                    ..TacticConfig::default()
                },
            ),
        ],
        seeds: vec![0, 1],
        options: SizingOptions {
            runs_per_size: 5,
            ..SizingOptions::default()
        },
    }
}

/// Input files of every verb, written into `dir`.
pub struct Fixtures {
    pub dir: PathBuf,
    pub files: BTreeMap<&'static str, PathBuf>,
}

impl Fixtures {
    pub fn write(dir: &Path) -> Self {
        let mut files = BTreeMap::new();
        let mut put = |name: &'static str, value: serde_json::Value| {
            let path = dir.join(format!("{name}.json"));
            json::write(&path, &value).unwrap();
            files.insert(name, path);
        };
        let v = |x: &dyn erased::Ser| x.value();
        put("suc", v(&suc()));
        put("ground_truth", v(&ground_truth()));
        put("platform", v(&platform()));
        put("goal", v(&goal()));
        put(
            "goal_infeasible",
            v(&goal().with_bound(Bound::new(QualityKind::RLat, Operator::Le, 10.0))),
        );
        put(
            "goal_bad_weights",
            v(&GoalSpec::weighted([
                (QualityKind::RLat, 0.6),
                (QualityKind::ECost, 0.5),
            ])),
        );
        put("workload", v(&workload()));
        put(
            "plan",
            v(&SamplingPlan::new("resize", vec![128, 512, 1024, 2048]).with_runs(5)),
        );
        put(
            "options",
            v(&SizingOptions {
                runs_per_size: 5,
                ..SizingOptions::default()
            }),
        );
        put(
            "reuse",
            v(&TacticConfig {
                reuse_model: Some("any".into()),
                ..TacticConfig::default()
            }),
        );
        put("matrix", v(&matrix()));
        Fixtures {
            dir: dir.to_path_buf(),
            files,
        }
    }

    pub fn path(&self, name: &str) -> String {
        self.files[name].display().to_string()
    }

    pub fn out(&self, name: &str) -> String {
        self.dir.join(name).display().to_string()
    }

    pub fn models(&self) -> String {
        self.dir.join("models").display().to_string()
    }

    /// `--suc --ground-truth --platform` for verbs that drive the simulator.
    pub fn platform_args(&self) -> Vec<String> {
        vec![
            "--suc".into(),
            self.path("suc"),
            "--ground-truth".into(),
            self.path("ground_truth"),
            "--platform".into(),
            self.path("platform"),
        ]
    }
}

mod erased {
    pub trait Ser {
        fn value(&self) -> serde_json::Value;
    }
    impl<T: serde::Serialize> Ser for T {
        fn value(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap()
        }
    }
}

pub struct Output {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

pub fn sizer<S: AsRef<str>>(args: &[S]) -> Output {
    let mut argv = vec!["sizer".to_string()];
    argv.extend(args.iter().map(|s| s.as_ref().to_string()));
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = sizer_cli::run(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// `size` over the fixtures with the given goal file and extra flags.
pub fn size_args(fx: &Fixtures, goal: &str, out: &str, extra: &[&str]) -> Vec<String> {
    let mut a = vec!["size".to_string()];
    a.extend(fx.platform_args());
    a.extend(
        [
            "--goal",
            &fx.path(goal),
            "--workload",
            &fx.path("workload"),
            "--options",
            &fx.path("options"),
            "--model-dir",
            &fx.models(),
            "--out",
            &fx.out(out),
        ]
        .map(String::from),
    );
    a.extend(extra.iter().map(|s| s.to_string()));
    a
}

/// Every regular file under `dir`, relative path to contents.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Every verb that writes artifacts, in an order where each input exists.
pub fn verb_script(fx: &Fixtures) -> Vec<Vec<String>> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<String>>();
    let mut exp = s(&["experiment", "run"]);
    exp.extend(fx.platform_args());
    exp.extend(s(&[
        "--plan",
        &fx.path("plan"),
        "--workload",
        &fx.path("workload"),
        "--seed",
        "7",
        "--out",
        &fx.out("report.json"),
        "--telemetry",
        &fx.out("telemetry.jsonl"),
    ]));
    let mut fit = s(&["model", "fit"]);
    fit.extend(fx.platform_args());
    fit.extend(s(&[
        "--report",
        &fx.out("report.json"),
        "--model-dir",
        &fx.models(),
        "--out",
        &fx.out("fitted.json"),
    ]));
    vec![
        s(&["suc", "validate", "--suc", &fx.path("suc")]),
        exp,
        fit,
        s(&["model", "list", "--model-dir", &fx.models()]),
        s(&[
            "model",
            "show",
            "resize/default",
            "--model-dir",
            &fx.models(),
        ]),
        size_args(fx, "goal", "result.json", &["--seed", "3"]),
        size_args(
            fx,
            "goal",
            "result_table.json",
            &["--seed", "3", "--format", "table"],
        ),
        s(&[
            "eval",
            "tactics",
            "--matrix",
            &fx.path("matrix"),
            "--out",
            &fx.out("eval"),
        ]),
    ]
}
