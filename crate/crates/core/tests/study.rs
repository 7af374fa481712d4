use std::fs;

use hypersmc::experiments::study::TraceOutput;
use hypersmc::experiments::{run_study, Method, SmcSettings, StudyModel, StudySpec};

fn small_toy(seed: u64, n: usize) -> StudySpec {
    let mut spec = StudySpec::new(StudyModel::Toy, n, seed);
    spec.smc = Some(SmcSettings { iterations: 100, ..SmcSettings::toy() });
    spec
}

#[test]
fn toy_study_is_reproducible_and_parallel_safe() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (i, dir) in dirs.iter().enumerate() {
        let mut spec = small_toy(5, 2);
        spec.jobs = if i == 2 { 2 } else { 1 };
        run_study(&spec).unwrap().write(dir.path()).unwrap();
    }
    for name in ["replicates.csv", "summary.csv"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        assert_eq!(a, fs::read(dirs[1].path().join(name)).unwrap(), "{name}");
        assert_eq!(a, fs::read(dirs[2].path().join(name)).unwrap(), "{name} with 2 jobs");
    }
    assert_eq!(
        fs::read(dirs[0].path().join("spec.json")).unwrap(),
        fs::read(dirs[1].path().join("spec.json")).unwrap()
    );
}

#[test]
fn toy_study_schema() {
    let out = run_study(&small_toy(6, 1)).unwrap();
    assert_eq!(out.rows.len(), 4);
    let methods: Vec<Method> = out.rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, Method::ALL.to_vec());
    assert!(out.rows.iter().all(|r| r.status == "ok"));
    // one dataset per replicate, shared by every method
    assert!(out.rows.iter().all(|r| r.theta_true == out.rows[0].theta_true && r.seed == out.rows[0].seed));

    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 16);
    assert!(header.contains(&"BaselineEB_mu_map_err"));
    let d = &out.diagnostics[0];
    assert_eq!(d.analysis_evaluations, 0);
    assert!(d.recycled_samples > d.final_particles);
}

#[test]
fn traces_are_written_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_toy(7, 1);
    spec.output_dir = Some(dir.path().to_path_buf());
    spec.traces = TraceOutput::Gzip;
    spec.methods = Some(vec![Method::PropFB, Method::BaselineFB]);
    let out = run_study(&spec).unwrap();
    assert_eq!(out.rows.len(), 2);
    let mut names: Vec<String> = fs::read_dir(dir.path().join("traces"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["rep0000_BaselineFB.json.gz", "rep0000_PropFB.json.gz"]);
}

#[test]
fn clg_study_runs_the_three_methods() {
    let mut spec = StudySpec::new(StudyModel::Clg, 1, 3);
    spec.smc = Some(SmcSettings { iterations: 20, n_particles: 20, ..SmcSettings::clg() });
    let out = run_study(&spec).unwrap();
    let methods: Vec<Method> = out.rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, [Method::PropEB, Method::PropFB, Method::BaselineFB]);
    for r in &out.rows {
        assert_eq!(r.status, "ok");
        assert_eq!(r.d_true, Some(2));
        assert!(r.param_map_err.unwrap() >= 0.0);
    }
    let mut bad = spec.clone();
    bad.methods = Some(vec![Method::BaselineEB]);
    assert!(bad.validate().is_err());
}
