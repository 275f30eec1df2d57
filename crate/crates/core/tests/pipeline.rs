use std::fs;
use std::path::Path;

use twistop::cli_io::{parse_config, run_pipeline, RunPaths, Stage};
use twistop::Error;

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn doubling_benchmark_summary() {
    let cfg = parse_config(r#"{"map":"doubling","resolution":[256],"monte_carlo":{"samples":5000,"clt_samples":5000}}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = run_pipeline(&cfg, &Stage::ALL, &RunPaths::new(dir.path())).unwrap();
    assert!((s.sigma2.unwrap() - 0.25).abs() <= 1e-8);
    let c = s.rate_points.iter().find(|p| p.eps == 0.1).unwrap().c;
    assert!((c - 0.0201355).abs() <= 1e-6, "{c}");
    assert_eq!(s.lambda1, Some(1.0));
    assert_eq!(s.stages, Stage::ALL);
    assert_eq!(s.timings.len(), Stage::ALL.len());
    for file in s.artifacts.values() {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn reruns_reproduce_csv_bytes() {
    let cfg = parse_config(r#"{"map":"beta-2.5","resolution":[128],"monte_carlo":{"samples":4000,"clt_samples":2000,"seed":5}}"#).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, &Stage::ALL, &RunPaths::new(a.path())).unwrap();
    run_pipeline(&cfg, &Stage::ALL, &RunPaths::new(b.path())).unwrap();
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 5);
    assert_eq!(fa, fb);
}

#[test]
fn check_only_computes_nothing_else() {
    let cfg = parse_config(r#"{"map":"triple-2d","resolution":[64,64]}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = run_pipeline(&cfg, &[Stage::Check], &RunPaths::new(dir.path())).unwrap();
    assert_eq!(s.stages, [Stage::Check]);
    assert!(s.regularity.is_some() && s.lambda1.is_none() && s.sigma2.is_none());
    let mut names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["regularity.json", "summary.json"]);
}

#[test]
fn identity_map_is_refused_at_spectrum() {
    let cfg = parse_config(r#"{"map":"identity","resolution":[32]}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&cfg, &Stage::ALL, &RunPaths::new(dir.path())).unwrap_err();
    assert!(err.is_refusal());
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "spectrum"));
    assert!(matches!(err.root(), Error::NotMixing { .. }));
    // The non-expanding fixture is only a warning at the check stage.
    assert!(dir.path().join("regularity.json").exists());
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn coboundary_refusal_leaves_no_curves() {
    let cfg = parse_config(r#"{"map":"doubling","resolution":[256],"observable":{"coboundary":{"cells":{"shape":[2],"values":[1,0]}}}}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&cfg, &[Stage::Ldp], &RunPaths::new(dir.path())).unwrap_err();
    assert!(matches!(err.root(), Error::ZeroVariance { .. }), "{err}");
    assert!(!dir.path().join("lambda_curve.csv").exists());
    assert!(!dir.path().join("rate_function.csv").exists());
}

#[test]
fn tails_outside_the_window_are_an_epsilon_mismatch() {
    let cfg = parse_config(r#"{"map":"doubling","resolution":[64],"monte_carlo":{"eps":[0.45],"samples":1000,"clt_samples":1000}}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&cfg, &[Stage::Compare], &RunPaths::new(dir.path())).unwrap_err();
    assert!(matches!(err.root(), Error::EpsilonMismatch { .. }), "{err}");
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "compare"));
}

#[test]
fn explicit_two_dimensional_map_runs() {
    let doc = r#"{"map":{"name":"skew","phase_space":{"lower":[0,0],"upper":[1,1]},"branches":[
        {"domain":{"lower":[0,0],"upper":[0.5,1]},"linear":[2,0,0,3],"offset":[0,0],"wrap":[false,true]},
        {"domain":{"lower":[0.5,0],"upper":[1,1]},"linear":[2,0,0,3],"offset":[-1,0],"wrap":[false,true]}]},
        "resolution":[32,27],"observable":{"expr":"x + y - 1"},
        "monte_carlo":{"samples":2000,"clt_samples":2000,"eps":[0.05]}}"#;
    let cfg = parse_config(doc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = run_pipeline(&cfg, &Stage::ALL, &RunPaths::new(dir.path())).unwrap();
    assert!(s.sigma2.unwrap() > 0.0);
    assert!(s.regularity.as_ref().unwrap().s < 1.0);
}
