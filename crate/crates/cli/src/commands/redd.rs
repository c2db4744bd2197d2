use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use redd_core::corpus::{EmbeddingField, PageRecord, Split};
use redd_core::pipeline::{write_scores, ScoreRecord};
use redd_core::redd::{gradient_check, predict_pages, train_detailed, ReddModel, TrainConfig};
use redd_core::util::{derive_seed, seeded_rng};
use serde_json::json;

use super::{corpus_arg, input, parse_architecture, read_config, write, CliError, CmdResult};
use crate::args::{ReddCmd, TrainFlags};
use crate::output::Output;

/// Config file (if any) with flag overrides applied.
pub(crate) fn train_config(flags: &TrainFlags) -> Result<TrainConfig, CliError> {
    let mut cfg: TrainConfig = match &flags.config {
        Some(path) => read_config(path, "config")?,
        None => TrainConfig::default(),
    };
    if let Some(a) = &flags.architecture {
        cfg.architecture = parse_architecture(a)?;
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = &flags.hidden_dims {
        cfg.hidden_dims = v.clone();
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cmd: ReddCmd) -> CmdResult {
    match cmd {
        ReddCmd::Train {
            corpus,
            train,
            version,
            out,
        } => {
            let cfg = train_config(&train)?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let pages: Vec<&PageRecord> = corpus
                .records()
                .iter()
                .filter(|p| p.split == Split::Train && p.label.is_some())
                .collect();
            let outcome = train_detailed(&pages, &cfg)?;
            let mut model = outcome.model;
            model.version = version;
            model.save(&out)?;
            let meta = model
                .training
                .clone()
                .expect("trained model carries metadata");
            Ok(Output::new(
                format!(
                    "trained version {version} on {} pages\nepochs_run {}\ninitial_loss {}\nfinal_loss {}\n",
                    meta.n_train, meta.epochs_run, meta.initial_train_loss, meta.final_train_loss
                ),
                json!({"version": version, "training": meta, "epoch_losses": outcome.epoch_losses}),
            ))
        }
        ReddCmd::Predict { model, corpus, out } => {
            let model = ReddModel::load(input(&model, "model")?)?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let pages: Vec<&PageRecord> = corpus
                .records()
                .iter()
                .filter(|p| p.embedding(EmbeddingField::Reduced).is_some())
                .collect();
            let scores = predict_pages(&model, pages.iter().copied())?;
            let records: Vec<ScoreRecord> = pages
                .iter()
                .zip(&scores)
                .map(|(p, (_, s))| ScoreRecord {
                    page_id: p.page_id.clone(),
                    domain: p.domain.clone(),
                    score: *s,
                    label: p.label,
                    split: p.split.as_str().into(),
                })
                .collect();
            write(&out, write_scores(&records))?;
            Ok(Output::new(
                format!(
                    "scored {} pages with model version {}\n",
                    records.len(),
                    model.version
                ),
                json!({"pages": records.len(), "model_version": model.version}),
            ))
        }
        ReddCmd::Gradcheck {
            architecture,
            dim,
            hidden_dims,
            rows,
            seed,
        } => {
            let arch = parse_architecture(&architecture)?;
            let model = ReddModel::init(arch, dim, &hidden_dims, seed)?;
            let mut rng = seeded_rng(derive_seed(seed, b"gradcheck-batch"));
            let batch =
                Array2::from_shape_simple_fn((rows, dim), || rng.sample::<f64, _>(StandardNormal));
            let labels: Vec<f64> = (0..rows).map(|i| (i % 2) as f64).collect();
            let report = gradient_check(&model, batch.view(), &labels)?;
            Ok(Output::new(
                format!(
                    "max_relative_error {}\nparams {}\n",
                    report.max_relative_error, report.n_params
                ),
                &report,
            ))
        }
    }
}
