mod common;

use common::{fixture, manifest_value, pacc, trained_checkpoint, Fixture};
use pacc_cli::{CliError, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn read(p: &std::path::Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(pacc(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(pacc(&[]), EXIT_USAGE);
    let err = pacc_cli::run(common::argv(&["frobnicate"])).unwrap_err();
    assert!(matches!(&err, CliError::Usage(m) if m.contains("Usage:")), "{err:?}");
}

#[test]
fn strict_split_is_byte_identical_across_runs() {
    let f = fixture(30, 30, 24, 1);
    let resp = Fixture::s(&f.responses);
    let (a, b) = (f.out("a"), f.out("b"));
    for out in [&a, &b] {
        assert_eq!(pacc(&["split", "--protocol", "strict", "--seed", "7", "--responses", &resp, "--out", &Fixture::s(out)]), EXIT_OK);
    }
    let plan = read(&a.join("split_plan.txt"));
    assert_eq!(plan, read(&b.join("split_plan.txt")));
    assert!(plan.contains("protocol\tstrict") && plan.contains("seed\t7"));
    assert_eq!(manifest_value(&a, "seed").as_deref(), Some("7"));
    assert_eq!(manifest_value(&a, "config_sha256"), manifest_value(&b, "config_sha256"));
    assert!(manifest_value(&a, "pacc_threads").is_some());

    let c = f.out("c");
    assert_eq!(pacc(&["split", "--protocol", "strict", "--seed", "8", "--responses", &resp, "--out", &Fixture::s(&c)]), EXIT_OK);
    assert_ne!(plan, read(&c.join("split_plan.txt")));
    assert_ne!(manifest_value(&a, "config_sha256"), manifest_value(&c, "config_sha256"));
}

#[test]
fn augment_defaults_to_32_strings() {
    let f = fixture(4, 2, 24, 2);
    let out = f.out("aug");
    assert_eq!(pacc(&["augment", "--drugs", &Fixture::s(&f.drugs), "--out", &Fixture::s(&out)]), EXIT_OK);
    let text = read(&out.join("augmented.tsv"));
    let aspirin = text.lines().filter(|l| l.starts_with("D02\t")).count();
    assert_eq!(aspirin, 32);
    assert!(text.lines().skip(1).all(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap() < 32));
    assert!(read(&out.join("manifest.tsv")).contains("config\tn = 32"));
}

#[test]
fn usage_errors_name_the_flag_and_write_nothing() {
    let f = fixture(4, 2, 24, 3);
    let out = f.out("never");
    let missing = Fixture::s(&f.out("missing.tsv"));
    let err = pacc_cli::run(common::argv(&["tokenize", "--drugs", &missing, "--out", &Fixture::s(&out)])).unwrap_err();
    assert!(matches!(&err, CliError::Usage(m) if m.contains("--drugs")), "{err:?}");
    assert_eq!(err.exit_code(), EXIT_USAGE);
    assert!(!out.exists());

    let err = pacc_cli::run(common::argv(&["augment", "--drugs", &Fixture::s(&f.drugs), "--n", "zero", "--out", &Fixture::s(&out)]))
        .unwrap_err();
    assert!(matches!(&err, CliError::Usage(m) if m.contains("--n")), "{err:?}");
    let err = pacc_cli::run(common::argv(&["augment", "--bogus", "1"])).unwrap_err();
    assert!(matches!(&err, CliError::Usage(m) if m.contains("--bogus")), "{err:?}");
    assert!(!out.exists());
}

#[test]
fn data_errors_exit_2() {
    let f = fixture(4, 2, 24, 4);
    let bad = f.out("bad.tsv");
    std::fs::write(&bad, "drug_id\tsmiles\nX\tC1CC\n").unwrap();
    assert_eq!(pacc(&["tokenize", "--drugs", &Fixture::s(&bad), "--out", &Fixture::s(&f.out("t"))]), EXIT_OK);
    let out = f.out("fp");
    assert_eq!(pacc(&["fingerprint", "--drugs", &Fixture::s(&bad), "--out", &Fixture::s(&out)]), EXIT_DATA);
    assert!(!out.exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = fixture(30, 30, 24, 5);
    let cfg = f.out("run.conf");
    std::fs::write(&cfg, format!("# shared settings\nseed = 3\nprotocol = lenient\nresponses = {}\nkind = CA\n", f.responses.display())).unwrap();
    let out = f.out("cfg");
    assert_eq!(pacc(&["split", "--config", &Fixture::s(&cfg), "--seed", "5", "--out", &Fixture::s(&out)]), EXIT_OK);
    assert_eq!(manifest_value(&out, "seed").as_deref(), Some("5"));
    assert!(read(&out.join("split_plan.txt")).contains("protocol\tlenient"));
    // keys for other subcommands are accepted but do not enter this run's config
    assert!(!read(&out.join("manifest.tsv")).contains("kind = CA"));

    std::fs::write(&cfg, "sede = 3\n").unwrap();
    let err = pacc_cli::run(common::argv(&["split", "--config", &Fixture::s(&cfg)])).unwrap_err();
    assert!(matches!(&err, CliError::Usage(m) if m.contains("--config") && m.contains("sede")), "{err:?}");
}

#[test]
fn propagate_tokenize_fingerprint_outputs() {
    let f = fixture(6, 2, 24, 6);
    let out = f.out("prop");
    let args = ["propagate", "--ppi", &Fixture::s(&f.ppi), "--targets", &Fixture::s(&f.targets), "--k", "3", "--out", &Fixture::s(&out)];
    assert_eq!(pacc(&args), EXIT_OK);
    let panel: Vec<String> = read(&out.join("panel.txt")).lines().map(str::to_string).collect();
    assert!(!panel.is_empty() && panel.len() <= 18);
    assert!(panel.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(read(&out.join("per_drug_topk.tsv")).lines().count(), 7);

    let tok = f.out("tok");
    assert_eq!(pacc(&["tokenize", "--drugs", &Fixture::s(&f.drugs), "--out", &Fixture::s(&tok)]), EXIT_OK);
    let tokens = read(&tok.join("tokens.tsv"));
    let aspirin = tokens.lines().find(|l| l.starts_with("D02\t")).unwrap();
    assert_eq!(aspirin.split('\t').nth(2).unwrap().replace(' ', ""), "CC(=O)Oc1ccccc1C(=O)O");
    assert!(read(&tok.join("vocab.tsv")).starts_with("0\t"));

    let fp = f.out("fp");
    assert_eq!(pacc(&["fingerprint", "--drugs", &Fixture::s(&f.drugs), "--width", "64", "--out", &Fixture::s(&fp)]), EXIT_OK);
    let row = read(&fp.join("fingerprints.tsv")).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split('\t').nth(2).unwrap().len(), 16);
}

#[test]
fn train_predict_evaluate_attention_end_to_end() {
    let f = fixture(12, 10, 24, 7);
    let ckpt = trained_checkpoint(&f, &[]);
    let train_dir = ckpt.parent().unwrap().parent().unwrap().to_path_buf();
    assert!(train_dir.join("fold_00/checkpoint_01.pacc").exists());
    assert_eq!(read(&train_dir.join("fold_00/history.csv")).lines().next(), Some("step,train_loss,val_rmse"));
    assert!(read(&train_dir.join("cv_report.tsv")).lines().any(|l| l.starts_with("0\tvalidation\t")));
    assert!(read(&train_dir.join("model.txt")).contains("kind = MCA"));

    // same seed, same bytes
    let again = f.out("train2");
    let ck = Fixture::s(&ckpt);
    let (drugs, expr, resp) = (Fixture::s(&f.drugs), Fixture::s(&f.expression), Fixture::s(&f.responses));
    let mut args = vec![
        "train", "--drugs", &drugs, "--expression", &expr, "--responses", &resp, "--protocol", "lenient", "--folds", "0", "--max-steps",
        "40", "--batch-size", "32", "--eval-interval", "20", "--checkpoint-keep", "2", "--variants", "2", "--seed", "3",
    ];
    args.extend_from_slice(common::SMALL_MCA);
    let again_s = Fixture::s(&again);
    args.extend_from_slice(&["--out", &again_s]);
    assert_eq!(pacc(&args), EXIT_OK);
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(again.join("fold_00/checkpoint_00.pacc")).unwrap());

    let pred = f.out("pred");
    assert_eq!(pacc(&["predict", "--checkpoint", &ck, "--drugs", &drugs, "--expression", &expr, "--out", &Fixture::s(&pred)]), EXIT_OK);
    let table = read(&pred.join("predictions.tsv"));
    assert_eq!(table.lines().count(), 1 + 12 * 10);
    assert!(table.lines().skip(1).all(|l| l.split('\t').nth(2).unwrap().parse::<f64>().unwrap().is_finite()));

    let ens = f.out("ens");
    let dir = Fixture::s(&train_dir.join("fold_00"));
    let args = ["predict", "--checkpoint", &dir, "--drugs", &drugs, "--expression", &expr, "--responses", &resp, "--out", &Fixture::s(&ens)];
    assert_eq!(pacc(&args), EXIT_OK);
    assert!(read(&ens.join("predictions.tsv")).lines().nth(1).unwrap().split('\t').nth(3).unwrap().parse::<f64>().is_ok());

    let ev = f.out("eval");
    let plan = Fixture::s(&train_dir.join("split_plan.txt"));
    let args =
        ["evaluate", "--checkpoint", &ck, "--drugs", &drugs, "--expression", &expr, "--responses", &resp, "--plan", &plan, "--out", &Fixture::s(&ev)];
    assert_eq!(pacc(&args), EXIT_OK);
    let metrics = read(&ev.join("metrics.tsv"));
    assert!(metrics.contains("count\t12"), "{metrics}");

    for analysis in ["profiles", "correlation", "genes", "enrich"] {
        let out = f.out(analysis);
        let sets = Fixture::s(&f.gene_sets);
        let args = ["attention", analysis, "--checkpoint", &ck, "--drugs", &drugs, "--expression", &expr, "--gene-sets", &sets, "--out", &Fixture::s(&out)];
        assert_eq!(pacc(&args), EXIT_OK, "{analysis}");
    }
    let corr = read(&f.out("correlation").join("structure_pairs.tsv"));
    assert_eq!(corr.lines().count(), 1 + 144);
    let enrich = read(&f.out("enrich").join("enrichment.tsv"));
    assert_eq!(enrich.lines().count(), 5);

    let q = f.out("query");
    let args = ["predict", "--checkpoint", &ck, "--expression", &expr, "--query", "CC(=O)Oc1ccccc1C(=O)O", "--cell-id", "C03", "--out", &Fixture::s(&q)];
    assert_eq!(pacc(&args), EXIT_OK);
    let resp: pacc_cli::query::PredictResponse = serde_json::from_slice(&std::fs::read(q.join("prediction.json")).unwrap()).unwrap();
    assert_eq!(resp.gene_attention.len(), 10);
    let joined: String = resp.token_attention.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(joined, "CC(=O)Oc1ccccc1C(=O)O");

    let missing = f.out("q404");
    let args = ["predict", "--checkpoint", &ck, "--expression", &expr, "--query", "CCO", "--cell-id", "nope", "--out", &Fixture::s(&missing)];
    assert_eq!(pacc(&args), EXIT_DATA);
    assert!(!missing.exists());
}

#[test]
fn fingerprint_model_trains_and_predicts() {
    let f = fixture(12, 10, 24, 8);
    let ckpt = trained_checkpoint(&f, &["--kind", "DNN", "--model", "dense=8,4", "--model", "fingerprint_width=64"]);
    let out = f.out("pred");
    let args = [
        "predict", "--checkpoint", &Fixture::s(&ckpt), "--drugs", &Fixture::s(&f.drugs), "--expression", &Fixture::s(&f.expression), "--out",
        &Fixture::s(&out),
    ];
    assert_eq!(pacc(&args), EXIT_OK);
    let out = f.out("att");
    let args = [
        "attention", "genes", "--checkpoint", &Fixture::s(&ckpt), "--drugs", &Fixture::s(&f.drugs), "--expression", &Fixture::s(&f.expression),
        "--out", &Fixture::s(&out),
    ];
    assert_eq!(pacc(&args), EXIT_DATA);
}
