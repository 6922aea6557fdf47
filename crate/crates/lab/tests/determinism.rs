use alloc_lab::config::{ColourDoc, ExperimentConfig, FamilyRef, Kind, Plan, ScheduleDoc, SchemeDoc, TargetDoc};
use alloc_lab::harness::{run, RunOptions};

fn lil_config(theta: Option<f64>, strategy: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Kind::Lil);
    c.scheme = Some(SchemeDoc {
        colours: vec![ColourDoc {
            family: FamilyRef::Name("poisson".into()),
            n: 64,
            theta,
        }],
        boxes: 64,
    });
    c.s = Some(TargetDoc::Vector(vec![0]));
    c.alpha = Some(vec![1.0]);
    c.schedule = Some(ScheduleDoc::Spec("pow2:5..8".into()));
    c.replications = 6;
    c.master_seed = 42;
    c.sampler = Some(strategy.into());
    c
}

fn statistics(c: &ExperimentConfig) -> Vec<(u64, u64, String)> {
    let report = run(&Plan::resolve(c).unwrap(), RunOptions { workers: 2 }).unwrap();
    report
        .records
        .iter()
        .map(|r| (r.mu, r.seed, format!("{:.12e}", r.statistic)))
        .collect()
}

#[test]
fn ratio_trajectories_ignore_theta_override() {
    for strategy in ["auto", "table"] {
        let fitted = statistics(&lil_config(None, strategy));
        for theta in [0.25, 4.0] {
            assert_eq!(fitted, statistics(&lil_config(Some(theta), strategy)), "{strategy} theta={theta}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let c = lil_config(None, "rejection");
    let plan = Plan::resolve(&c).unwrap();
    let a = run(&plan, RunOptions { workers: 1 }).unwrap().to_csv().unwrap();
    let b = run(&plan, RunOptions { workers: 3 }).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
    let json_a = run(&plan, RunOptions { workers: 1 }).unwrap().to_json();
    let json_b = run(&plan, RunOptions { workers: 2 }).unwrap().to_json();
    assert_eq!(json_a, json_b);
}
