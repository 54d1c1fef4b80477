use std::path::Path;
use std::process::{Command, Output};

fn addonsite(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_addonsite"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, seed: &str) {
    ok(addonsite(
        &[
            "synth",
            "--out",
            "sites.csv",
            "--seed",
            seed,
            "--n-active",
            "40",
            "--n-candidates",
            "30",
            "--clustered",
        ],
        dir,
    ));
}

const SMALL: &[&str] = &[
    "--cv-repeats",
    "2",
    "--cv-folds",
    "4",
    "--families",
    "ols,radial_svr",
    "--c-values",
    "1,16",
    "--epsilon-values",
    "0.2,0.5",
    "--gamma-values",
    "1e-3,1e-2",
    "--permutations",
    "99",
    "--draws",
    "2",
    "--k-max",
    "4",
    "--k",
    "3",
    "--svr-max-iter",
    "20000",
];

#[test]
fn seed_is_required_for_run_and_experiment() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    let run = addonsite(&["run", "--sites", "sites.csv"], dir.path());
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("--seed"));
    ok(addonsite(
        &["fit", "--sites", "sites.csv", "--family", "ols", "--out", "m"],
        dir.path(),
    ));
    let exp = addonsite(
        &["experiment", "--sites", "sites.csv", "--model", "m/model.json"],
        dir.path(),
    );
    assert!(!exp.status.success());
    assert!(String::from_utf8_lossy(&exp.stderr).contains("--seed"));
}

#[test]
fn run_is_byte_reproducible_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2");
    std::fs::write(
        dir.path().join("run.toml"),
        "sites = \"sites.csv\"\nregion = \"test\"\nk = 9\nout = \"from_config\"\n",
    )
    .unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["run", "--config", "run.toml", "--seed", "5", "--out", out];
        args.extend_from_slice(SMALL);
        ok(addonsite(&args, dir.path()));
    }
    assert!(!dir.path().join("from_config").exists());
    let mut csvs = 0;
    for entry in std::fs::read_dir(dir.path().join("a")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            csvs += 1;
            let other = dir.path().join("b").join(path.file_name().unwrap());
            assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(other).unwrap(),
                "{}",
                path.display()
            );
        }
    }
    assert!(csvs >= 6);
    let expansion = std::fs::read_to_string(dir.path().join("a/expansion.csv")).unwrap();
    assert_eq!(expansion.lines().filter(|l| l.contains(",true,")).count(), 3);
    assert!(std::fs::read_to_string(dir.path().join("a/manifest.json"))
        .unwrap()
        .contains("\"test\""));
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "3");
    let moran = ok(addonsite(&["moran", "--sites", "sites.csv", "--permutations", "99"], d));
    assert!(moran.starts_with("test,variable,method"));

    let mut select = vec!["select", "--sites", "sites.csv", "--seed", "1", "--out", "sel"];
    select.extend_from_slice(SMALL);
    assert!(ok(addonsite(&select, d)).contains("selected"));
    assert!(d.join("sel/model.json").is_file() && d.join("sel/cv.csv").is_file());

    let mut cv = vec!["cv", "--sites", "sites.csv", "--features", "3", "--out", "cv"];
    cv.extend_from_slice(SMALL);
    ok(addonsite(&cv, d));
    let table = std::fs::read_to_string(d.join("cv/cv.csv")).unwrap();
    assert!(table.starts_with("statistic,features,ols,radial_svr"));

    ok(addonsite(
        &[
            "fit",
            "--sites",
            "sites.csv",
            "--family",
            "ols",
            "--features",
            "4",
            "--out",
            "fit",
        ],
        d,
    ));
    let stdout = ok(addonsite(
        &[
            "optimize",
            "--sites",
            "sites.csv",
            "--model",
            "fit/model.json",
            "--k",
            "4",
            "--solver",
            "exact",
            "--out",
            "opt",
        ],
        d,
    ));
    assert!(stdout.contains("optimal: true"));
    for name in ["solution.json", "expansion.csv", "map.svg"] {
        assert!(d.join("opt").join(name).is_file(), "{name}");
    }

    ok(addonsite(
        &[
            "fit",
            "--sites",
            "sites.csv",
            "--family",
            "linear_svr",
            "--c",
            "4",
            "--out",
            "alt",
        ],
        d,
    ));
    ok(addonsite(
        &[
            "experiment",
            "--sites",
            "sites.csv",
            "--model",
            "fit/model.json",
            "--alt-models",
            "alt/model.json",
            "--seed",
            "8",
            "--draws",
            "2",
            "--k-max",
            "3",
            "--s-values",
            "2,6",
            "--out",
            "exp",
        ],
        d,
    ));
    let gains = std::fs::read_to_string(d.join("exp/gains.csv")).unwrap();
    assert!(gains.starts_with("k,s=2,s=6"));
    assert_eq!(gains.lines().count(), 4);
    assert!(d.join("exp/robustness_model.csv").is_file());

    ok(addonsite(
        &[
            "map",
            "--sites",
            "sites.csv",
            "--solution",
            "opt/solution.json",
            "--out",
            "m.svg",
        ],
        d,
    ));
    let svg = std::fs::read_to_string(d.join("m.svg")).unwrap();
    assert!(svg.contains("4 chosen of 30"));
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.csv"),
        "id,lat,lon,status,base_sales,addon_sales,income,population\nA,35,-80,active,10,,1,1\n",
    )
    .unwrap();
    let out = addonsite(&["moran", "--sites", "bad.csv"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("addon_sales"), "{err}");
    let unknown = addonsite(&["run", "--seed", "1", "--colour", "red"], dir.path());
    assert!(!unknown.status.success());
}
