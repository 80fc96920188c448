use gridmon::cli::{main_with_args, EXIT_OK, EXIT_VALIDATION};

const SMALL: &str = "train_repetitions = 1\n\
    [[axes]]\ntarget = \"load\"\nmin_pct = 10.0\nmax_pct = 100.0\nstep_pct = 45.0\nnoise_sd_pct = 10.0\n\
    [[axes]]\ntarget = \"wec\"\nmin_pct = 0.0\nmax_pct = 100.0\nstep_pct = 50.0\nnoise_sd_pct = 25.0\n\
    [[axes]]\ntarget = \"pv\"\nmin_pct = 0.0\nmax_pct = 90.0\nstep_pct = 90.0\nnoise_sd_pct = 25.0\n";

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("gridmon").chain(args.iter().copied()))
}

#[test]
fn unknown_case_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["evaluate", "--cases", "Z9", "--out", out]), EXIT_VALIDATION);
    assert_eq!(run(&["evaluate", "--methods", "kalman", "--out", out]), EXIT_VALIDATION);
}

#[test]
fn wls_evaluation_writes_starred_rows_with_correction() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("out");
    let args = [
        "evaluate",
        "--cases",
        "M4,F1",
        "--methods",
        "wls",
        "--v-correction",
        "on",
        "--out",
        out.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ];
    assert_eq!(run(&args), EXIT_OK);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let ids: Vec<&str> = summary.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["M4*", "F1*"], "{summary}");
    assert!(summary.lines().skip(2).all(|l| l.contains(",wls,")), "{summary}");
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, format!("seed = 9\n{SMALL}")).unwrap();
    let out = dir.path().join("out");
    let args = ["generate", "--seed", "4", "--out", out.to_str().unwrap(), "--config", config.to_str().unwrap()];
    assert_eq!(run(&args), EXIT_OK);
    let first = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().ends_with(".csv"))
        .expect("scenario csv written");
    let head = std::fs::read_to_string(first.path()).unwrap();
    assert!(head.lines().next().unwrap().contains("seed=9"), "{}", head.lines().next().unwrap());
}
