use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn perfpred(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perfpred"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NLPERF_DATA")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn ted_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data")
}

const MT_FEATURES: [&str; 15] = [
    "dataset_size",
    "src_word_vocab",
    "src_avg_sent_len",
    "src_ttr",
    "tgt_word_vocab",
    "tgt_avg_sent_len",
    "tgt_ttr",
    "word_overlap",
    "ttr_distance",
    "dist_geographic",
    "dist_genetic",
    "dist_inventory",
    "dist_syntactic",
    "dist_phonological",
    "dist_featural",
];

fn write_mt_fixture(dir: &Path) {
    let names: Vec<String> = MT_FEATURES.iter().map(|n| format!("\"{n}\"")).collect();
    fs::write(
        dir.join("mt.json"),
        format!(
            r#"{{"task_id":"mt","metric_name":"BLEU","language_roles":["source","target"],"feature_names":[{}]}}"#,
            names.join(",")
        ),
    )
    .unwrap();
    fs::write(
        dir.join("settings.csv"),
        "task,model,src_lang,tgt_lang,dataset,score\nmt,tfm,tur,eng,wiki,\n",
    )
    .unwrap();
    fs::write(dir.join("tur.txt"), "bir iki üç\niki dört\n").unwrap();
    fs::write(dir.join("eng.txt"), "one two three\ntwo four four\n").unwrap();
    fs::write(
        dir.join("corpora.csv"),
        "lang,dataset,kind,path\ntur,wiki,text,tur.txt\neng,wiki,text,eng.txt\n",
    )
    .unwrap();
    fs::write(
        dir.join("dist.csv"),
        "lang_a,lang_b,geographic,genetic,inventory,syntactic,phonological,featural\neng,tur,0.3,1,0.5,0.6,0.4,0.55\n",
    )
    .unwrap();
}

#[test]
fn features_fill_fifteen_mt_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_mt_fixture(d);
    let base = [
        "features",
        "--records",
        "settings.csv",
        "--schema",
        "mt.json",
        "--corpora",
        "corpora.csv",
    ];

    let mut args = base.to_vec();
    args.extend(["--distances", "dist.csv", "--out", "a.csv"]);
    ok(&perfpred(&args, d));
    let text = fs::read_to_string(d.join("a.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let row: Vec<String> = rdr
        .records()
        .next()
        .unwrap()
        .unwrap()
        .iter()
        .map(String::from)
        .collect();
    for name in MT_FEATURES {
        let i = header.iter().position(|h| h == name).unwrap();
        assert!(!row[i].is_empty(), "{name} is empty");
    }
    let at = |n: &str| row[header.iter().position(|h| h == n).unwrap()].clone();
    assert_eq!(at("dataset_size"), "2");
    assert_eq!(at("dist_genetic"), "1");

    // rerun is byte-identical
    args.pop();
    args.push("b.csv");
    ok(&perfpred(&args, d));
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );

    // without a distance table the distance columns stay empty
    let mut args = base.to_vec();
    args.extend(["--out", "c.csv"]);
    ok(&perfpred(&args, d));
    let text = fs::read_to_string(d.join("c.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let row: Vec<String> = rdr
        .records()
        .next()
        .unwrap()
        .unwrap()
        .iter()
        .map(String::from)
        .collect();
    for (h, v) in header.iter().zip(&row) {
        if h.starts_with("dist_") {
            assert!(v.is_empty());
        }
    }
}

#[test]
fn evaluate_orders_predictor_below_mean() {
    let dir = tempfile::tempdir().unwrap();
    let data = ted_dir();
    let records = data.join("ted_mt.csv");
    let schema = data.join("ted_mt.schema.json");
    let mut finals = Vec::new();
    for kind in ["mean", "nlperf_sm"] {
        let out = dir.path().join(format!("{kind}.json"));
        ok(&perfpred(
            &[
                "evaluate",
                "--records",
                records.to_str().unwrap(),
                "--schema",
                schema.to_str().unwrap(),
                "--kind",
                kind,
                "--runs",
                "3",
                "--out",
                out.to_str().unwrap(),
            ],
            dir.path(),
        ));
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
        assert_eq!(report["fold_rmse"].as_array().unwrap().len(), 3);
        finals.push(report["final_rmse"].as_f64().unwrap());
    }
    assert!(finals[1] < finals[0], "{finals:?}");

    let bad = perfpred(
        &[
            "evaluate",
            "--records",
            records.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--kind",
            "model_wise",
            "--out",
            "x.json",
        ],
        dir.path(),
    );
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("single model"));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn data_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_perfpred"))
        .args([
            "evaluate",
            "--records",
            "ted_mt.csv",
            "--schema",
            "ted_mt.schema.json",
            "--kind",
            "mean",
            "--runs",
            "1",
            "--out",
            "m.json",
        ])
        .current_dir(dir.path())
        .env("NLPERF_DATA", ted_dir())
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("m.json").exists());
}

fn write_small_task(dir: &Path, scores: &[&str]) {
    fs::write(
        dir.join("s.json"),
        r#"{"task_id":"t","metric_name":"accuracy","language_roles":["source"],"feature_names":["x"]}"#,
    )
    .unwrap();
    let mut csv = String::from("task,model,src_lang,x,score\n");
    for (i, s) in scores.iter().enumerate() {
        csv.push_str(&format!("t,m,l{i},{i},{s}\n"));
    }
    fs::write(dir.join("r.csv"), csv).unwrap();
}

#[test]
fn fill_without_blanks_only_adds_flags() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path(), &["1", "2.5", "4"]);
    ok(&perfpred(
        &[
            "fill",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--out",
            "f.csv",
        ],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].ends_with(",score,predicted"));
    assert_eq!(lines[1], "t,m,l0,,,,0,1,false");
    assert_eq!(lines[2], "t,m,l1,,,,1,2.5,false");
}

#[test]
fn fill_with_one_scored_row_predicts_it_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path(), &["", "7.5", "", ""]);
    ok(&perfpred(
        &[
            "fill",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--out",
            "f.csv",
        ],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        let flag = if i == 1 { "false" } else { "true" };
        assert!(row.ends_with(&format!(",7.5,{flag}")), "{row}");
    }

    write_small_task(dir.path(), &["", ""]);
    let out = perfpred(
        &[
            "fill",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--out",
            "g.csv",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn subsets_max_direction_and_job_count_independence() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path(), &["10", "12", "30", "31", "50", "52"]);
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out = format!("s{jobs}.json");
        let csv = format!("s{jobs}.csv");
        ok(&perfpred(
            &[
                "subsets",
                "--records",
                "r.csv",
                "--schema",
                "s.json",
                "--max-size",
                "3",
                "--direction",
                "max",
                "--trees",
                "10",
                "--jobs",
                jobs,
                "--out",
                &out,
                "--csv",
                &csv,
                "--random-runs",
                "3",
            ],
            dir.path(),
        ));
        outputs.push((
            fs::read(dir.path().join(&out)).unwrap(),
            fs::read(dir.path().join(&csv)).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let json: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(json["beam"]["direction"], "max");
    let levels = json["beam"]["levels"].as_array().unwrap();
    let objs: Vec<f64> = levels[0]["ranked"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["objective"].as_f64().unwrap())
        .collect();
    assert!(objs.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(
        json["random"]["mean_objective"].as_array().unwrap().len(),
        2
    );
}

#[test]
fn newmodel_refuses_single_model_task() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path(), &["1", "2", "3", "4"]);
    let out = perfpred(
        &[
            "newmodel",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--model",
            "m",
            "--out",
            "n.json",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(!dir.path().join("n.json").exists());
}

#[test]
fn newmodel_writes_curve_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.json"),
        r#"{"task_id":"t","metric_name":"F1","language_roles":["target"],"feature_names":["x"],"multi_model":true}"#,
    )
    .unwrap();
    let mut csv = String::from("task,model,tgt_lang,x,score\n");
    for i in 0..8 {
        csv.push_str(&format!(
            "t,a,l{i},{i},{}\nt,b,l{i},{i},{}\n",
            10 + i,
            20 + i
        ));
    }
    fs::write(dir.path().join("r.csv"), csv).unwrap();
    ok(&perfpred(
        &[
            "newmodel",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--model",
            "b",
            "--n-max",
            "2",
            "--splits",
            "2",
            "--samples",
            "3",
            "--trees",
            "10",
            "--out",
            "n.json",
            "--csv",
            "n.csv",
        ],
        dir.path(),
    ));
    let curve: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("n.json")).unwrap()).unwrap();
    assert_eq!(curve["mean"].as_array().unwrap().len(), 3);
    let text = fs::read_to_string(dir.path().join("n.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("n,repetition,rmse,baseline"));
    assert_eq!(text.lines().count(), 1 + 3 * 6);
}

#[test]
fn sweep_writes_one_prediction_per_grid_row() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path(), &["1", "2", "3", "4", "5", "6"]);
    fs::write(dir.path().join("grid.csv"), "x\n0\n2.5\n5\n").unwrap();
    ok(&perfpred(
        &[
            "sweep",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--base",
            "2",
            "--grid",
            "grid.csv",
            "--exclude-base",
            "--out",
            "w.csv",
        ],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,prediction");
    assert_eq!(lines.len(), 4);
    let preds: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(preds.windows(2).all(|w| w[1] >= w[0]), "{preds:?}");

    fs::write(dir.path().join("bad.csv"), "nope\n1\n").unwrap();
    let out = perfpred(
        &[
            "sweep",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--base",
            "0",
            "--grid",
            "bad.csv",
            "--out",
            "v.csv",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn importance_of_zero_tree_model_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("m.json"),
        r#"{"base_score":3.0,"trees":[],"feature_names":["a","b"],
            "params":{"learning_rate":0.1,"num_trees":100,"max_depth":10,"lambda":1.0,"gamma":0.0,"min_child_weight":1.0,"seed":0}}"#,
    )
    .unwrap();
    ok(&perfpred(
        &["importance", "--model-in", "m.json", "--out", "i.csv"],
        dir.path(),
    ));
    assert_eq!(
        fs::read_to_string(dir.path().join("i.csv")).unwrap(),
        "feature,gain,share\n"
    );
}

#[test]
fn importance_after_training_round_trips_the_model() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path(), &["1", "2", "3", "14", "15", "16"]);
    ok(&perfpred(
        &[
            "importance",
            "--records",
            "r.csv",
            "--schema",
            "s.json",
            "--model-out",
            "m.json",
            "--out",
            "a.csv",
        ],
        dir.path(),
    ));
    ok(&perfpred(
        &["importance", "--model-in", "m.json", "--out", "b.csv"],
        dir.path(),
    ));
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert!(a.lines().nth(1).unwrap().starts_with("x,"));
}
