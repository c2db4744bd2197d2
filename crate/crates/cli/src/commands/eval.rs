use std::collections::HashMap;
use std::fmt::Write as _;

use redd_core::corpus::{EmbeddingField, Label};
use redd_core::eval::experiments::{
    run_language_confound, run_synthetic_ablation, AblationConfig, ConfoundSpec,
};
use redd_core::eval::{
    auc_roc, language_score_table, psamecat, LanguageScored, MetricsDoc, PSameCatConfig,
};
use redd_core::pipeline::{majority_language, parse_scores, ScoreRecord};
use redd_core::redd::TrainConfig;
use redd_core::triage::{evaluate_queue, DecisionLog, ReviewQueue};
use serde_json::json;

use super::{
    config_err, corpus_arg, input, read_config, read_input, split_matches, CliError, CmdResult,
};
use crate::args::{EvalCmd, SplitArg};
use crate::output::Output;

/// Labeled score lines in the selected split.
pub(crate) fn labeled_scores(
    path: &std::path::Path,
    split: SplitArg,
) -> Result<Vec<ScoreRecord>, CliError> {
    let records = parse_scores(&read_input(path, "scores")?)?;
    Ok(records
        .into_iter()
        .filter(|r| {
            r.label.is_some() && split_matches(split, r.split().expect("validated on parse"))
        })
        .collect())
}

pub(crate) fn load_queue(path: &std::path::Path) -> Result<ReviewQueue, CliError> {
    Ok(ReviewQueue::from_json(&read_input(path, "queue")?)?)
}

pub(crate) fn load_decisions(
    path: &std::path::Path,
) -> Result<Vec<redd_core::triage::ReviewDecision>, CliError> {
    Ok(DecisionLog::read(input(path, "decisions")?)?)
}

pub fn run(cmd: EvalCmd) -> CmdResult {
    match cmd {
        EvalCmd::Psamecat { corpus, field, k } => {
            let field: EmbeddingField = field
                .parse()
                .map_err(|e: redd_core::Error| config_err("field", e.to_string()))?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let report = psamecat(corpus.records(), field, &PSameCatConfig { k_neighbors: k })?;
            Ok(Output::new(format!("{}\n", report.score), &report))
        }
        EvalCmd::Auc { scores, split } => {
            let records = labeled_scores(&scores, split)?;
            let s: Vec<f64> = records.iter().map(|r| r.score).collect();
            let y: Vec<bool> = records
                .iter()
                .map(|r| r.label == Some(Label::Disinformation))
                .collect();
            let auc = auc_roc(&s, &y)?;
            let n_pos = y.iter().filter(|&&b| b).count();
            Ok(Output::new(
                format!("{auc}\n"),
                json!({"auc": auc, "n_positive": n_pos, "n_negative": y.len() - n_pos}),
            ))
        }
        EvalCmd::PAtK {
            queue,
            decisions,
            k,
        } => {
            let queue = load_queue(&queue)?;
            let decisions = load_decisions(&decisions)?;
            let ev = evaluate_queue(&queue, &decisions, k, queue.len().max(1))?;
            Ok(Output::new(
                format!("{}\n", ev.precision_at_k),
                json!({"k": k, "precision_at_k": ev.precision_at_k, "baseline": ev.baseline, "n_positives": ev.n_positives}),
            ))
        }
        EvalCmd::Langtable {
            scores,
            corpus,
            focus,
            split,
        } => {
            let records = labeled_scores(&scores, split)?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let languages: HashMap<&str, &str> = corpus
                .records()
                .iter()
                .map(|p| (p.page_id.as_str(), p.language.as_str()))
                .collect();
            let scored = records
                .iter()
                .map(|r| {
                    let lang = languages
                        .get(r.page_id.as_str())
                        .ok_or_else(|| config_err("corpus", format!("no page `{}`", r.page_id)))?;
                    Ok(LanguageScored {
                        score: r.score,
                        label: r.label.expect("filtered to labeled"),
                        language: lang.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, redd_core::Error>>()?;
            let focus = match focus {
                Some(f) => f,
                None => majority_language(records.iter().filter_map(|r| corpus.get(&r.page_id)))
                    .ok_or_else(|| config_err("scores", "no labeled pages selected"))?,
            };
            let table = language_score_table(&scored, &focus)?;
            let mut text = format!("focus {focus}\n");
            text.push_str(&crate::output::metrics_text(&table.to_metrics("")));
            Ok(Output::new(text, &table))
        }
        EvalCmd::Ablation {
            config,
            seed,
            seeds,
            epochs,
        } => {
            let mut cfg: AblationConfig = match config {
                Some(path) => read_config(&path, "config")?,
                None => AblationConfig::default(),
            };
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let mut doc = MetricsDoc::new();
            let mut results = Vec::new();
            let mut text = String::new();
            for s in seed..seed + seeds.max(1) {
                let r = run_synthetic_ablation(&cfg, s)?;
                if seeds <= 1 {
                    doc.extend(r.to_metrics());
                } else {
                    for (k, v) in r.to_metrics() {
                        doc.insert(format!("seed{s}.{k}"), v);
                    }
                }
                let _ = writeln!(
                    text,
                    "seed {s} filtered {} unfiltered {} gap {}",
                    r.auc_filtered_train,
                    r.auc_unfiltered_train,
                    r.gap()
                );
                results.push(json!({"seed": s, "result": r, "gap": r.gap()}));
            }
            if seeds <= 1 {
                return Ok(Output::metrics(&doc));
            }
            Ok(Output::new(text, json!({"runs": results, "metrics": doc})))
        }
        EvalCmd::Confound {
            config,
            seed,
            epochs,
        } => {
            let spec: ConfoundSpec = match config {
                Some(path) => read_config(&path, "config")?,
                None => ConfoundSpec::default(),
            };
            let mut train = TrainConfig::default();
            if let Some(e) = epochs {
                train.epochs = e;
            }
            let r = run_language_confound(&spec, &train, seed)?;
            let doc = r.to_metrics();
            let mut text = format!("largest_other_language {}\n", r.largest_other_language);
            text.push_str(&crate::output::metrics_text(&doc));
            Ok(Output::new(
                text,
                json!({"largest_other_language": r.largest_other_language, "metrics": doc}),
            ))
        }
    }
}
