use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depablate::cli::{read_sweep, SWEEP_SUMMARY};
use depablate::conllu::write_conllu;
use depablate::synthetic::SuffixLanguage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXE: &str = env!("CARGO_BIN_EXE_depablate");

fn run(args: &[&str]) -> Output {
    Command::new(EXE).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
    train: PathBuf,
    dev: PathBuf,
    embeddings: PathBuf,
}

fn corpus() -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lang = SuffixLanguage::new(10, 10, &mut rng);
    let train = root.join("toy-train.conllu");
    let dev = root.join("toy-dev.conllu");
    fs::write(&train, write_conllu(&lang.treebank(12, false, &mut rng))).unwrap();
    fs::write(&dev, write_conllu(&lang.treebank(4, true, &mut rng))).unwrap();
    let pretrained = lang.pretrained(100, 0.3, &mut rng);
    let mut text = format!("{} 100\n", pretrained.len());
    for (form, v) in &pretrained.vectors {
        let values: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        text += &format!("{form} {}\n", values.join(" "));
    }
    let embeddings = root.join("vectors.txt");
    fs::write(&embeddings, text).unwrap();
    Corpus {
        _dir: dir,
        root,
        train,
        dev,
        embeddings,
    }
}

fn small_config(c: &Corpus, out: &Path) -> PathBuf {
    let path = c.root.join(format!("{}.toml", out.file_name().unwrap().to_str().unwrap()));
    let text = format!(
        "train = {:?}\ndev = {:?}\nembeddings = {:?}\ntags = \"gold\"\nout = {:?}\n\
         char_size = 24\nepochs = 1\nseeds = [1]\nbest_epochs = 1\n\
         lstm_layers = 1\nlstm_hidden = 8\nmlp_hidden = 8\n",
        c.train, c.dev, c.embeddings, out
    );
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let c = corpus();
    let out = run(&["eval", "--gold", s(&c.dev), "--predicted", s(&c.dev)]);
    assert_eq!(stdout(&out).trim(), "100.00");
}

#[test]
fn pos_system_without_tags_fails_before_training() {
    let c = corpus();
    let out_dir = c.root.join("never");
    let out = run(&[
        "train", "--train", s(&c.train), "--dev", s(&c.dev), "--system", "+pos", "--out", s(&out_dir),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error:") && stderr.contains("--tags"), "{stderr}");
    assert!(!out_dir.exists());
}

#[test]
fn ext_system_without_embeddings_fails() {
    let c = corpus();
    let out = run(&["train", "--train", s(&c.train), "--dev", s(&c.dev), "--system", "+ext", "--out", s(&c.root.join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("--embeddings"));
}

#[test]
fn sweep_covers_every_system_and_resumes() {
    let c = corpus();
    let out_dir = c.root.join("sweep");
    let config = small_config(&c, &out_dir);
    stdout(&run(&["sweep", "--config", s(&config)]));
    let rows = read_sweep(&out_dir.join(SWEEP_SUMMARY)).unwrap();
    let mut systems: Vec<&str> = rows.iter().map(|r| r.system.as_str()).collect();
    systems.sort();
    assert_eq!(systems, ["+char", "+ext", "+pos", "-char", "-ext", "-pos", "baseline", "combined"]);
    assert!(rows.iter().all(|r| r.char_size == 24 && r.language == "toy" && r.seeds == "1"));
    for r in &rows {
        assert!(out_dir.join(format!("{}_char24", r.system)).join("epochs.jsonl").exists());
    }

    let again = run(&["sweep", "--config", s(&config)]);
    let stderr = String::from_utf8(again.stderr.clone()).unwrap();
    stdout(&again);
    assert_eq!(stderr.matches("(already done)").count(), 8, "{stderr}");
    assert!(!stderr.contains("epoch"), "{stderr}");
    assert_eq!(read_sweep(&out_dir.join(SWEEP_SUMMARY)).unwrap(), rows);
}

#[test]
fn train_parse_eval_round_trip() {
    let c = corpus();
    let out_dir = c.root.join("run");
    let config = small_config(&c, &out_dir);
    stdout(&run(&["train", "--config", s(&config), "--system", "+pos", "--epochs", "2"]));
    assert!(out_dir.join("summary.json").exists());
    let ckpt = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .expect("a checkpoint is kept");

    let no_tags = run(&["parse", "--model", s(&ckpt), "--input", s(&c.dev)]);
    assert!(!no_tags.status.success());

    let parsed = c.root.join("toy-pred.conllu");
    stdout(&run(&[
        "parse", "--model", s(&ckpt), "--input", s(&c.dev), "--tags", "gold", "--output", s(&parsed),
    ]));
    let score: f64 = stdout(&run(&["eval", "--gold", s(&c.dev), "--predicted", s(&parsed)]))
        .trim()
        .parse()
        .unwrap();
    assert!((0.0..=100.0).contains(&score));
}

#[test]
fn flags_override_the_config_file() {
    let c = corpus();
    let config = small_config(&c, &c.root.join("from_file"));
    let out_dir = c.root.join("from_flag");
    stdout(&run(&[
        "train", "--config", s(&config), "--system", "-ext", "--epochs", "2", "--out", s(&out_dir),
    ]));
    assert!(!c.root.join("from_file").exists());
    let log = fs::read_to_string(out_dir.join("epochs.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["run"]["system"], "-ext");
    assert_eq!(summary["run"]["char_size"], 24);
}

fn conllu(rows: &[(&str, usize, &str)]) -> String {
    let mut text = String::new();
    for (i, (form, head, rel)) in rows.iter().enumerate() {
        text += &format!("{}\t{form}\t{form}\tX\t_\t_\t{head}\t{rel}\t_\t_\n", i + 1);
    }
    text + "\n"
}

#[test]
fn frequency_analysis_matches_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("t-train.conllu");
    let mut rows: Vec<(&str, usize, &str)> = vec![("x", 0, "root")];
    rows.extend(std::iter::repeat_n(("x", 1, "dep"), 8));
    rows.push(("y", 1, "dep"));
    fs::write(&train, conllu(&rows)).unwrap();
    let gold = dir.path().join("t-gold.conllu");
    fs::write(&gold, conllu(&[("x", 0, "root"), ("y", 1, "obj"), ("z", 1, "nsubj"), ("x", 3, "amod")])).unwrap();
    let pred = dir.path().join("t-pred.conllu");
    fs::write(&pred, conllu(&[("x", 0, "root"), ("y", 1, "obj"), ("z", 1, "nsubj"), ("x", 2, "amod")])).unwrap();
    let csv_path = dir.path().join("freq.csv");
    stdout(&run(&[
        "analyze", "--gold", s(&gold), "--predicted", s(&pred), "--train", s(&train), "--axis", "frequency",
        "--system", "toy", "--out", s(&csv_path),
    ]));

    // ten training tokens: x (9) and y (1) fall in class -1, unseen z in -2.
    // The misattached x breaks itself, its gold head z and its wrong head y.
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let got: Vec<(String, String, usize, f64, String)> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(got.len(), 2);
    assert_eq!((got[0].0.as_str(), got[0].1.as_str(), got[0].2), ("frequency", "-1", 3));
    assert!((got[0].3 - 100.0 / 3.0).abs() < 1e-9);
    assert_eq!((got[1].1.as_str(), got[1].2, got[1].3), ("-2", 1, 0.0));
    assert!(got.iter().all(|r| r.4 == "toy"));
}

#[test]
fn stats_reports_counts() {
    let c = corpus();
    let text = stdout(&run(&["stats", "--train", s(&c.train), "--dev", s(&c.dev)]));
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&fields[..2], ["12", "4"]);
}
