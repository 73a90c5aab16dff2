mod common;

use std::collections::BTreeSet;
use std::fs;

use adoptminer::fight::FightMode;
use adoptminer::pipeline::{self, emit_plot_data, run_analyze, RunConfig, OUTPUT_FILES};

#[test]
fn fixture_matches_hand_oracles() {
    let bundle = common::fixture_bundle();
    for (name, want) in common::fixture_oracles() {
        let got = bundle.get(&name).unwrap_or_else(|| panic!("{name} missing"));
        assert_eq!(String::from_utf8_lossy(got), String::from_utf8_lossy(&want), "{name}");
    }
}

#[test]
fn fixture_summary_headlines() {
    let s = common::fixture_bundle().summary;
    assert_eq!((s.projects, s.commits, s.adoptions), (3, 11, 3));
    assert_eq!((s.so_posts, s.so_malformed_rows), (4, 1));
    let t = s.adoption_stats;
    assert_eq!(t.avg_loc, Some(18.0));
    assert_eq!(t.median_loc, Some(10.0));
    assert!((t.avg_inserted_loc.unwrap() - 67.0 / 9.0).abs() < 1e-12);
    assert!((t.avg_deleted_loc.unwrap() - 13.0 / 9.0).abs() < 1e-12);
    assert_eq!(s.fights.len(), 2);
    for f in &s.fights {
        assert_eq!(f.fights, 1);
        assert!((f.fight_rate_per_100k_commits.unwrap() - 100_000.0 / 11.0).abs() < 1e-9);
        assert_eq!(f.deleter_win_fraction, Some(1.0));
        assert_eq!(f.adopter_win_fraction, Some(0.0));
        assert_eq!(f.experienced_win_fraction, Some(1.0));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_analyze(&common::fixture_config(a.path())).unwrap();
    let mut cfg = common::fixture_config(b.path());
    cfg.threads = Some(3);
    run_analyze(&cfg).unwrap();
    for f in OUTPUT_FILES {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn every_adoption_has_a_growth_series() {
    let bundle = common::fixture_bundle();
    let adoptions = csv::Reader::from_reader(bundle.get("adoptions.csv").unwrap())
        .records()
        .count() as u64;
    let mut so_at_zero = 0;
    let mut team_at_zero = 0;
    for r in csv::Reader::from_reader(bundle.get("growth.csv").unwrap()).records() {
        let r = r.unwrap();
        if &r[1] == "0" {
            let v: u64 = r[5].parse().unwrap();
            if r[0].starts_with("so:") {
                so_at_zero += v;
            } else {
                team_at_zero += v;
            }
        }
    }
    assert_eq!(so_at_zero, adoptions);
    assert_eq!(team_at_zero, adoptions);
}

#[test]
fn as_printed_inequality_is_selectable() {
    let mut cfg = common::fixture_config("unused".as_ref());
    cfg.mode = FightMode::AsPrinted;
    let bundle = pipeline::analyze(&cfg).unwrap();
    let rows: BTreeSet<String> = csv::Reader::from_reader(bundle.get("fights.csv").unwrap())
        .records()
        .map(|r| {
            let r = r.unwrap();
            format!("{} {} {}", &r[0], &r[2], &r[3])
        })
        .collect();
    let want: BTreeSet<String> = ["beta 0.2 1", "beta 0.5 1", "gamma 0.2 1", "gamma 0.5 1"]
        .into_iter()
        .map(String::from)
        .collect();
    assert_eq!(rows, want);
}

#[test]
fn plot_data_passes_values_through() {
    let dir = tempfile::tempdir().unwrap();
    run_analyze(&common::fixture_config(dir.path())).unwrap();
    assert_eq!(
        emit_plot_data(dir.path(), "7").unwrap(),
        "epsilon,round,mean_net_loc\n0.2,0,10.000000\n0.2,1,-2.000000\n0.2,2,4.000000\n0.2,3,-8.000000\n\
         0.5,0,10.000000\n0.5,1,-2.000000\n0.5,2,4.000000\n0.5,3,-8.000000\n"
    );
    assert_eq!(
        emit_plot_data(dir.path(), "4").unwrap().lines().nth(5).unwrap(),
        "\"[1,100)\",0,1.000000,1.000000,1.000000,2"
    );
    assert_eq!(
        emit_plot_data(dir.path(), "3").unwrap(),
        "class,posts,users,a,b,r2\nBuiltin,2.000000,2,,,\nPyPI,1.000000,2,,,\nPyPI,0.000000,1,,,\n\
         Builtin,,,,,\nPyPI,,,,,\nLocal,,,,,\n"
    );
}

#[test]
fn empty_input_directory_is_rejected() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = run_analyze(&RunConfig::new(vec![input.path().to_path_buf()], out.path())).unwrap_err();
    assert_eq!(err.to_string(), "no commit streams found");
    assert_eq!(fs::read_dir(out.path()).unwrap().count(), 0);
}

#[test]
fn failed_write_removes_partial_outputs() {
    let out = tempfile::tempdir().unwrap();
    // A directory where a report file should go makes that write fail.
    fs::create_dir(out.path().join("growth.csv")).unwrap();
    let err = run_analyze(&common::fixture_config(out.path())).unwrap_err();
    assert!(err.to_string().contains("growth.csv"), "{err}");
    let left: Vec<_> = fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(left, ["growth.csv"]);
}

#[test]
fn cyclic_history_aborts_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("s.jsonl");
    fs::write(
        &stream,
        "{\"repo_id\":\"r\",\"hash\":\"a\",\"parents\":[\"b\"],\"author_id\":\"u\",\"timestamp\":1,\"deltas\":[]}\n\
         {\"repo_id\":\"r\",\"hash\":\"b\",\"parents\":[\"a\"],\"author_id\":\"u\",\"timestamp\":2,\"deltas\":[]}\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let err = run_analyze(&RunConfig::new(vec![stream], &out)).unwrap_err();
    assert!(err.to_string().contains("cycle"), "{err}");
    assert!(!out.exists());
}
