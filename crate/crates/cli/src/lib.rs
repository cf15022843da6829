//! `softcrowd`: generate synthetic corpora, run and simulate annotation
//! campaigns, aggregate votes into soft targets, train hard- and soft-label
//! classifiers, evaluate them and compare their L1 distances.

pub mod args;
pub mod client;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod run_manifest;

use std::path::Path;
use std::time::{Instant, SystemTime};

use softcrowd_core::evalstat::TTestVariant;
use softcrowd_core::trainer::LabelMode;

use crate::args::{Cli, Command, ModeArg, VariantArg};
use crate::client::{Embedded, Http};
use crate::commands::{aggregate, analyze, compare, eval, gen, review, serve, simulate, train};
pub use crate::error::{CliError, Result};
use crate::run_manifest::{Outcome, RunManifest};

fn refuse_existing_log(dir: &Path) -> Result<()> {
    let log = dir.join(softcrowd_service::store::LOG_FILE);
    if std::fs::metadata(&log).map(|m| m.len() > 0).unwrap_or(false) {
        return Err(CliError::Usage(format!("{} already holds a campaign log; pick a fresh --out", log.display())));
    }
    Ok(())
}

fn dispatch(cli: &Cli, out: &Path) -> Result<Outcome> {
    let config = cli.config.as_deref();
    let corpus_or_default = |p: &Option<std::path::PathBuf>| p.clone().unwrap_or_else(|| cli.data_root.join("gen"));
    Ok(match &cli.command {
        Command::Gen => {
            let mut cfg: gen::GenConfig = config::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.corpus.seed = seed;
            }
            let outcome = gen::run(&cfg, out)?;
            println!("wrote {} items to {}", cfg.corpus.total_items(), out.display());
            outcome
        }
        Command::Serve(a) => {
            let cfg: serve::ServeConfig = config::load(config)?;
            serve::run(&cfg, out, &a.addr, a.assets.as_deref())?
        }
        Command::Simulate(a) => {
            let mut cfg: simulate::SimulateConfig = config::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let corpus = corpus_or_default(&a.corpus);
            let (report, outcome) = match &a.url {
                Some(url) => simulate::run(&mut Http::new(url), &corpus, &cfg, out)?,
                None => {
                    let dir = out.join(simulate::SERVICE_DIR);
                    refuse_existing_log(&dir)?;
                    let service = cfg.service.open(&dir)?;
                    simulate::run(&mut Embedded { service: &service }, &corpus, &cfg, out)?
                }
            };
            println!("{} labels, {} reviews over {} rounds", report.n_labels, report.n_reviews, report.n_rounds);
            for a in &report.pure_agreement {
                let rate = a.rate.map(|r| format!("{:.1}%", 100.0 * r)).unwrap_or_else(|| "n/a".into());
                println!("pure-item agreement {:?}: {rate} ({} items)", a.votes, a.n_items);
            }
            outcome
        }
        Command::Aggregate(a) => aggregate::run(a.log.as_deref(), a.counts.as_deref(), a.campaign.as_deref(), a.pool, out)?,
        Command::Analyze(a) => analyze::run(&a.counts, &a.thresholds, a.manifest.as_deref(), out)?.1,
        Command::Train(a) => {
            let mut file: train::TrainFile = config::load(config)?;
            if let Some(mode) = a.mode {
                file.train.label_mode = match mode {
                    ModeArg::Hard => LabelMode::Hard,
                    ModeArg::Soft => LabelMode::Soft,
                };
            }
            if let Some(seed) = cli.seed {
                file.train.seed = seed;
            }
            let (summary, outcome) = train::run(&corpus_or_default(&a.corpus), a.counts.as_deref(), &file.train, out)?;
            println!(
                "trained {:?} model on {} items; augmentation digest {}",
                summary.label_mode, summary.n_train, summary.augmentation_digest
            );
            outcome
        }
        Command::Eval(a) => {
            let (report, outcome) =
                eval::run(&a.model, &corpus_or_default(&a.corpus), a.against, a.split, a.counts.as_deref(), out)?;
            println!("{} items: mean L1 {:.4}, macro F1 {:.4}", report.n_items, report.mean_l1, report.macro_f1);
            outcome
        }
        Command::Compare(a) => {
            let variant = match a.variant {
                VariantArg::Pooled => TTestVariant::Pooled,
                VariantArg::Welch => TTestVariant::Welch,
            };
            let (cmp, outcome) = if !a.summary.is_empty() {
                compare::run_summaries(&a.summary, variant, out)?
            } else {
                match (&a.report_a, &a.report_b) {
                    (Some(ra), Some(rb)) => compare::run_reports(ra, rb, variant, out)?,
                    _ => return Err(CliError::Usage("give two metrics reports or --summary twice".into())),
                }
            };
            print!("{}", cmp.lines());
            outcome
        }
        Command::Review(a) => match &a.url {
            Some(url) => review::run(&mut Http::new(url), &a.reviews, url, out)?.1,
            None => {
                let dir = a.service_dir.clone().unwrap_or_else(|| cli.data_root.join("serve"));
                let cfg: serve::ServeConfig = config::load(config)?;
                let service = cfg.service.open(&dir)?;
                review::run(&mut Embedded { service: &service }, &a.reviews, &dir.display().to_string(), out)?.1
            }
        },
    })
}

/// Runs one command and writes its run manifest into the output directory.
pub fn run(cli: &Cli) -> Result<()> {
    let name = cli.command.name();
    let out = cli.out.clone().unwrap_or_else(|| cli.data_root.join(name));
    let started = SystemTime::now();
    let clock = Instant::now();
    let outcome = dispatch(cli, &out)?;
    let failure = outcome.partial_failure.clone();
    RunManifest::new(name, outcome, started, clock.elapsed()).write(&out)?;
    match failure {
        Some(message) => Err(CliError::Format(message)),
        None => Ok(()),
    }
}
