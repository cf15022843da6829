use std::path::Path;

use softcrowd::args::{AgainstArg, PoolArg, SplitArg};
use softcrowd::client::Embedded;
use softcrowd::commands::simulate::{self, SimulateConfig, VoteSet};
use softcrowd::commands::{aggregate, analyze, compare, eval, gen, train};
use softcrowd::io::{self, Corpus};
use softcrowd::CliError;
use softcrowd_core::aggregation::{read_count_table, CountRow};
use softcrowd_core::evalstat::{evaluate_predictions, TTestVariant};
use softcrowd_core::synthgen::{AmbiguityMix, CampaignConfig, CorpusConfig};
use softcrowd_core::trainer::{Architecture, Dense, LabelMode, ModelParams, TrainConfig};
use softcrowd_core::{EmotionClass, LabelCountVector};

const CAFE: &str = include_str!("../../core/tests/data/table1_cafe.csv");

fn small_gen(seed: u64, mix: AmbiguityMix, pure_mass: f64) -> gen::GenConfig {
    gen::GenConfig {
        corpus: CorpusConfig {
            n_subjects: 6,
            items_per_subject: 21,
            subject_item_counts: None,
            held_out_subjects: 2,
            mix,
            pure_mass,
            seed,
            ..CorpusConfig::default()
        },
        crowd: CampaignConfig { n_workers: 40, votes_per_item: 30, ..CampaignConfig::default() },
        ..gen::GenConfig::default()
    }
}

fn pure_mix() -> AmbiguityMix {
    AmbiguityMix { pure: 1.0, ambiguous_pair: 0.0, compound: 0.0 }
}

fn corpus(dir: &Path, cfg: &gen::GenConfig) -> Corpus {
    gen::run(cfg, dir).unwrap();
    Corpus::open(dir).unwrap()
}

#[test]
fn gen_writes_config_product_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_gen(1, AmbiguityMix::default(), 0.94);
    let c = corpus(dir.path(), &cfg);
    assert_eq!(c.manifest.len(), 6 * 21);
    assert_eq!(c.split.n_train + c.split.n_test, 126);
    assert_eq!(c.split.held_out_subjects, ["SYN-05", "SYN-06"]);
    let counts = c.counts().unwrap();
    assert!(counts.values().all(|v| v.total() == 30));
    assert_eq!(c.synthetic_items().unwrap().len(), 126);
}

#[test]
fn gen_rejects_zero_subjects() {
    let mut cfg = gen::GenConfig::default();
    cfg.corpus.n_subjects = 0;
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(gen::run(&cfg, dir.path()), Err(CliError::InvalidConfig(_))));
}

#[test]
fn default_corpus_matches_split_shape() {
    let cfg = gen::GenConfig::default();
    assert_eq!(cfg.corpus.total_items(), 1192);
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &cfg);
    let (train, test) = c.partition().unwrap();
    assert_eq!((train.len(), test.len()), (1141, 51));
}

fn rows(csv: &str) -> Vec<CountRow> {
    read_count_table(csv.as_bytes()).unwrap()
}

#[test]
fn analyze_table1_histograms_and_agreement() {
    let table = rows(CAFE);
    let truth = analyze::ground_truth(&table, None).expect("ids carry posed labels");
    let a = analyze::analyze(&table, &[0.8, 0.9], Some(&truth)).unwrap();
    assert_eq!(a.histograms[0].bins, [6, 4, 2, 0, 0, 0, 0]);
    assert_eq!(a.histograms[1].bins, [2, 5, 3, 2, 0, 0, 0]);
    assert!(a.histograms[1].count(1) <= a.histograms[0].count(1));
    let agreement = a.agreement.unwrap();
    // posed anger rows: 9990 goes to disgust, 10108 to fear
    assert_eq!(agreement.row("anger").unwrap().n_agreeing, 0);
    assert_eq!(agreement.row("happy").unwrap().rate, Some(1.0));
    let merged = a.merged_agreement.unwrap();
    // 9990 merges to 67 and agrees, 10108 loses 35 to 40, both disgust rows agree
    assert_eq!(merged.row("anger+disgust").map(|r| r.n_agreeing), Some(3));
}

#[test]
fn analyze_one_hot_rows() {
    let table: Vec<CountRow> = (0..9)
        .map(|i| CountRow { item_id: format!("x{i}"), counts: LabelCountVector::one_hot(EmotionClass::ALL[i % 7], 5) })
        .collect();
    let a = analyze::analyze(&table, &[0.8, 0.9], None).unwrap();
    for h in &a.histograms {
        assert_eq!(h.bins, [9, 0, 0, 0, 0, 0, 0]);
    }
    assert!(a.agreement.is_none());
    assert!(analyze::ground_truth(&table, None).is_none());
}

#[test]
fn analyze_run_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    std::fs::write(&counts, CAFE).unwrap();
    let out = dir.path().join("out");
    let (_, outcome) = analyze::run(&counts, &[0.8, 0.9], None, &out).unwrap();
    for name in &outcome.outputs {
        assert!(out.join(name).exists(), "{name}");
    }
    let hist = std::fs::read_to_string(out.join("coverage_0.80.csv")).unwrap();
    assert!(hist.starts_with("n,items\n1,6\n2,4\n3,2\n"));
    assert!(analyze::analyze(&[], &[0.8], None).is_err());
    assert!(matches!(analyze::analyze(&rows(CAFE), &[1.5], None), Err(CliError::Usage(_))));
}

fn quick(mode: LabelMode, seed: u64) -> TrainConfig {
    TrainConfig { label_mode: mode, seed, epochs: 30, ..TrainConfig::default() }
}

#[test]
fn soft_training_on_pure_corpus_is_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(&dir.path().join("gen"), &small_gen(2, pure_mix(), 0.94));
    let (summary, _) = train::run(&c.root, None, &quick(LabelMode::Soft, 1), &dir.path().join("train")).unwrap();
    assert_eq!(summary.n_train, 84);
    let model = eval::load_model(&dir.path().join("train/model.json")).unwrap();
    let items = eval::eval_items(&c, SplitArg::Test, AgainstArg::Truth, None).unwrap();
    let e = eval::evaluate(&model, &items).unwrap();
    let correct = items.iter().zip(&e.predictions).filter(|(it, q)| q.argmax() == it.posed).count();
    assert!(correct as f64 / items.len() as f64 > 0.9, "{correct}/{}", items.len());
}

#[test]
fn hard_and_soft_share_augmentation_stream() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &small_gen(3, AmbiguityMix::default(), 0.94));
    let (train_m, _) = c.partition().unwrap();
    let data = train::samples(&c, &train_m, &c.counts().unwrap()).unwrap();
    let cfg = |mode| TrainConfig { epochs: 3, ..quick(mode, 9) };
    let hard = train::fit(&data, &cfg(LabelMode::Hard)).unwrap();
    let soft = train::fit(&data, &cfg(LabelMode::Soft)).unwrap();
    assert_eq!(hard.augmentation_digest, soft.augmentation_digest);
    assert_ne!(hard.model, soft.model);
}

#[test]
fn train_missing_corpus_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = train::run(&dir.path().join("nope"), None, &TrainConfig::default(), dir.path()).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn eval_oracle_and_uniform_stubs() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(&dir.path().join("gen"), &small_gen(4, pure_mix(), 1.0));
    let items = eval::eval_items(&c, SplitArg::All, AgainstArg::Truth, None).unwrap();

    // perfect oracle: predict the truth itself
    let targets: Vec<_> = items.iter().map(|it| it.target).collect();
    let posed: Vec<_> = items.iter().map(|it| it.posed).collect();
    let r = evaluate_predictions(&targets, &targets, &posed).unwrap();
    assert_eq!(r.mean_l1, 0.0);
    assert_eq!(r.macro_f1, 1.0);

    // zero weights predict the uniform distribution; L1 to a one-hot is 12/7
    let dim = 24 * 24;
    let model = ModelParams::<f64>::from_layers(Architecture::SoftmaxLinear, dim, vec![Dense::zeros(dim, 7)]).unwrap();
    let model_path = dir.path().join("uniform.json");
    std::fs::write(&model_path, model.to_json()).unwrap();
    let (report, _) =
        eval::run(&model_path, &c.root, AgainstArg::Truth, SplitArg::All, None, &dir.path().join("eval")).unwrap();
    assert!((report.mean_l1 - 12.0 / 7.0).abs() < 1e-12, "{}", report.mean_l1);
    assert!(report.l1_values.iter().all(|v| (v - 12.0 / 7.0).abs() < 1e-12));

    let first = std::fs::read(dir.path().join("eval/metrics.json")).unwrap();
    eval::run(&model_path, &c.root, AgainstArg::Truth, SplitArg::All, None, &dir.path().join("eval")).unwrap();
    assert_eq!(first, std::fs::read(dir.path().join("eval/metrics.json")).unwrap());
    let l1 = std::fs::read_to_string(dir.path().join("eval/l1.csv")).unwrap();
    assert_eq!(l1.lines().count(), items.len() + 1);
}

#[test]
fn compare_reports_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(&dir.path().join("gen"), &small_gen(5, AmbiguityMix::default(), 0.94));
    let (train_m, _) = c.partition().unwrap();
    let data = train::samples(&c, &train_m, &c.counts().unwrap()).unwrap();
    let test = eval::eval_items(&c, SplitArg::Test, AgainstArg::Counts, None).unwrap();
    let model = train::fit(&data, &quick(LabelMode::Soft, 1)).unwrap().model;
    let report = eval::evaluate(&model, &test).unwrap().report;

    let same = compare::compare_reports(&report, &report, TTestVariant::Pooled).unwrap();
    assert_eq!(same.test.t, 0.0);
    assert!((same.test.p_two_tailed - 1.0).abs() < 1e-12);
    assert_eq!(same.closer, compare::Closer::Tie);

    let mut other = report.clone();
    other.item_ids.reverse();
    assert!(matches!(
        compare::compare_reports(&report, &other, TTestVariant::Pooled),
        Err(CliError::MismatchedTestSets(_))
    ));
    other.l1_values.pop();
    assert!(matches!(
        compare::compare_reports(&report, &other, TTestVariant::Pooled),
        Err(CliError::MismatchedTestSets(_))
    ));

    let reported = compare::compare_summaries(
        compare::parse_summary("0.6078,0.4143,51").unwrap(),
        compare::parse_summary(" 0.3727, 0.3000, 51").unwrap(),
        TTestVariant::Pooled,
    )
    .unwrap();
    assert!((reported.test.t - 3.2827).abs() <= 0.002);
    assert!((reported.test.p_two_tailed - 0.0014).abs() <= 0.0002);
    assert_eq!(reported.closer, compare::Closer::B);
    assert!(reported.lines().contains("B is distribution-closer"));
    assert!(matches!(compare::parse_summary("1,2"), Err(CliError::Usage(_))));
}

#[test]
fn simulate_and_aggregate_agree_with_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(&dir.path().join("gen"), &small_gen(6, AmbiguityMix::default(), 0.94));
    let items = c.synthetic_items().unwrap();
    let cfg = SimulateConfig {
        crowd: CampaignConfig::mixed_crowd(40, 15),
        review_fraction: 0.5,
        seed: 11,
        ..SimulateConfig::default()
    };
    let service_dir = dir.path().join("sim/service");
    let service = cfg.service.open(&service_dir).unwrap();
    let mut backend = Embedded { service: &service };
    let sim = simulate::simulate(&mut backend, &c.manifest_path(), &items, &cfg).unwrap();
    assert_eq!(sim.report.n_labels, 126 * 15);
    assert!(sim.counts[&VoteSet::Raw].iter().all(|r| r.counts.total() == 15));
    let outputs = simulate::write_outputs(&sim, &mut backend, &dir.path().join("sim")).unwrap();
    assert!(outputs.contains(&"counts_filtered.csv".to_string()));
    drop(service);

    let log = service_dir.join("events.jsonl");
    for (pool, set) in [(PoolArg::Raw, VoteSet::Raw), (PoolArg::All, VoteSet::All), (PoolArg::Filtered, VoteSet::Filtered)] {
        let from_log = aggregate::rows_from_log(&log, None, pool).unwrap();
        assert_eq!(from_log, sim.counts[&set], "{pool:?}");
    }
    assert!(matches!(aggregate::rows_from_log(&log, Some("c9"), PoolArg::All), Err(CliError::Service { .. })));

    let out = dir.path().join("agg");
    aggregate::run(Some(&log), None, None, PoolArg::Raw, &out).unwrap();
    let soft = std::fs::read_to_string(out.join("soft_targets.csv")).unwrap();
    assert_eq!(soft.lines().count(), 127);
    let consensus = std::fs::read_to_string(out.join("consensus.csv")).unwrap();
    assert!(consensus.starts_with("item_id,consensus,tie,winning_count,n_votes\n"));
    assert_eq!(io::read_counts(&out.join("counts.csv")).unwrap(), sim.counts[&VoteSet::Raw]);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(&dir.path().join("gen"), &small_gen(7, AmbiguityMix::default(), 0.94));
    let items = c.synthetic_items().unwrap();
    let cfg = SimulateConfig { crowd: CampaignConfig::mixed_crowd(30, 10), seed: 5, ..SimulateConfig::default() };
    let run = |name: &str| {
        let service = cfg.service.open(&dir.path().join(name)).unwrap();
        simulate::simulate(&mut Embedded { service: &service }, &c.manifest_path(), &items, &cfg).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.report, b.report);
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.final_pools, b.final_pools);
}
