use std::path::Path;

use softcrowd_core::aggregation::to_soft_target;
use softcrowd_core::evalstat::{evaluate_items, EvalItem, Evaluation};
use softcrowd_core::{EmotionClass, ModelParamsF64, MetricsReportF64, NUM_CLASSES};

use crate::args::{AgainstArg, SplitArg};
use crate::error::{CliError, Result};
use crate::io::{self, fmt_f64, Corpus};
use crate::run_manifest::Outcome;

pub const METRICS_FILE: &str = "metrics.json";
pub const L1_FILE: &str = "l1.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// Items of `split` paired with the distribution they are scored against.
pub fn eval_items(
    corpus: &Corpus,
    split: SplitArg,
    against: AgainstArg,
    counts: Option<&Path>,
) -> Result<Vec<EvalItem<f64>>> {
    let (train, test) = corpus.partition()?;
    let manifest = match split {
        SplitArg::Test => test,
        SplitArg::Train => train,
        SplitArg::All => corpus.manifest.clone(),
    };
    let truth = match against {
        AgainstArg::Truth => Some(corpus.truth()?),
        AgainstArg::Counts => None,
    };
    let counts = match (against, counts) {
        (AgainstArg::Counts, Some(p)) => Some(io::counts_by_item(io::read_counts(p)?)),
        (AgainstArg::Counts, None) => Some(corpus.counts()?),
        (AgainstArg::Truth, _) => None,
    };
    manifest
        .items()
        .iter()
        .map(|it| {
            let target = if let Some(truth) = &truth {
                *truth.get(&it.item_id).ok_or_else(|| CliError::Format(format!("no truth for item {}", it.item_id)))?
            } else {
                let c = counts
                    .as_ref()
                    .and_then(|c| c.get(&it.item_id))
                    .ok_or_else(|| CliError::Format(format!("no counts for item {}", it.item_id)))?;
                to_soft_target(c).map_err(|e| CliError::Format(format!("item {}: {e}", it.item_id)))?
            };
            Ok(EvalItem { item_id: it.item_id.clone(), raster: corpus.raster(it)?, target, posed: it.posed_emotion })
        })
        .collect()
}

pub fn evaluate(model: &ModelParamsF64, items: &[EvalItem<f64>]) -> Result<Evaluation<f64>> {
    evaluate_items(model, items).map_err(|e| CliError::Format(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<ModelParamsF64> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    ModelParamsF64::from_json(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn load_report(path: &Path) -> Result<MetricsReportF64> {
    io::read_json(path)
}

pub fn write_outputs(eval: &Evaluation<f64>, items: &[EvalItem<f64>], out: &Path) -> Result<Vec<String>> {
    io::create_dir(out)?;
    io::write_json(&out.join(METRICS_FILE), &eval.report)?;
    let mut l1 = Vec::new();
    eval.report.write_l1_csv(&mut l1).expect("in-memory write");
    io::write_bytes(&out.join(L1_FILE), &l1)?;

    let mut header = vec!["item_id", "posed", "predicted"];
    header.extend(EmotionClass::ALL.iter().map(|c| c.name()));
    let rows = items.iter().zip(&eval.predictions).map(|(it, q)| {
        let mut row = vec![it.item_id.clone(), it.posed.name().to_string(), q.argmax().name().to_string()];
        row.extend(q.probs().iter().map(|p| fmt_f64(*p)));
        debug_assert_eq!(row.len(), 3 + NUM_CLASSES);
        row
    });
    io::write_csv(&out.join(PREDICTIONS_FILE), &header, rows)?;
    Ok(vec![METRICS_FILE.into(), L1_FILE.into(), PREDICTIONS_FILE.into()])
}

pub fn run(
    model_path: &Path,
    corpus_dir: &Path,
    against: AgainstArg,
    split: SplitArg,
    counts: Option<&Path>,
    out: &Path,
) -> Result<(MetricsReportF64, Outcome)> {
    let model = load_model(model_path)?;
    let corpus = Corpus::open(corpus_dir)?;
    let items = eval_items(&corpus, split, against, counts)?;
    let eval = evaluate(&model, &items)?;
    let outputs = write_outputs(&eval, &items, out)?;
    let mut inputs = vec![model_path.to_path_buf(), corpus_dir.to_path_buf()];
    inputs.extend(counts.map(Path::to_path_buf));
    let config = serde_json::json!({
        "against": format!("{against:?}").to_lowercase(),
        "split": format!("{split:?}").to_lowercase(),
    });
    Ok((eval.report, Outcome { config, seed: None, inputs, outputs, partial_failure: None }))
}
