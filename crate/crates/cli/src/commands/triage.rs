use std::collections::HashSet;
use std::fmt::Write as _;

use redd_core::corpus::save_corpus;
use redd_core::pipeline::parse_scores;
use redd_core::topic::{filter_on_topic, TopicModel};
use redd_core::triage::{
    aggregate_domains_with, build_queue, evaluate_queue, merge_decisions, Aggregated, Aggregation,
    LabelPolicy, PageScore, QueueMeta,
};
use serde_json::json;

use super::eval::{load_decisions, load_queue};
use super::{
    config_err, corpus_arg, input, read_config, read_input, read_json, write, CliError, CmdResult,
};
use crate::args::TriageCmd;
use crate::output::Output;

pub(crate) fn parse_aggregation(s: &str) -> Result<Aggregation, CliError> {
    match s.split_once(':') {
        None if s == "mean" => Ok(Aggregation::Mean),
        None if s == "median" => Ok(Aggregation::Median),
        Some(("trimmed", f)) => f
            .parse()
            .map(|fraction| Aggregation::Trimmed { fraction })
            .map_err(|_| config_err("aggregation", format!("bad trim fraction `{f}`")).into()),
        _ => Err(config_err(
            "aggregation",
            format!("expected mean, median or trimmed:<fraction>, got `{s}`"),
        )
        .into()),
    }
}

pub fn run(cmd: TriageCmd) -> CmdResult {
    match cmd {
        TriageCmd::Aggregate {
            scores,
            min_pages,
            aggregation,
            model_version,
            out,
        } => {
            let aggregation = parse_aggregation(&aggregation)?;
            let scores: Vec<PageScore> = parse_scores(&read_input(&scores, "scores")?)?
                .into_iter()
                .map(|r| PageScore {
                    page_id: r.page_id,
                    domain: r.domain,
                    score: r.score,
                })
                .collect();
            let agg = aggregate_domains_with(&scores, min_pages, model_version, aggregation)?;
            if let Some(path) = out {
                write(
                    &path,
                    serde_json::to_string_pretty(&agg).expect("aggregate"),
                )?;
            }
            let mut text = String::new();
            for d in &agg.domains {
                let _ = writeln!(
                    text,
                    "{} {} {} {}",
                    d.domain, d.mean_score, d.page_count, d.score_std
                );
            }
            let _ = writeln!(
                text,
                "domains {} excluded {}",
                agg.domains.len(),
                agg.excluded.len()
            );
            Ok(Output::new(text, &agg))
        }
        TriageCmd::Queue {
            domains,
            cutoff,
            queue_id,
            topic_id,
            created_at,
            out,
        } => {
            let agg: Aggregated = read_json(&domains, "domains")?;
            let model_version = agg.domains.first().map_or(1, |d| d.model_version);
            let queue = build_queue(
                &agg.domains,
                cutoff,
                QueueMeta {
                    queue_id,
                    topic_id,
                    model_version,
                    created_at,
                },
            )?;
            write(&out, queue.to_json())?;
            let mut text = String::new();
            for (i, d) in queue.entries.iter().enumerate() {
                let _ = writeln!(text, "{} {} {}", i + 1, d.domain, d.mean_score);
            }
            Ok(Output::new(text, &queue))
        }
        TriageCmd::Evaluate {
            queue,
            decisions,
            k,
            bin,
        } => {
            let queue = load_queue(&queue)?;
            let decisions = load_decisions(&decisions)?;
            let ev = evaluate_queue(&queue, &decisions, k, bin)?;
            let mut text = format!(
                "precision_at_{k} {}\nbaseline {}\npositives {} of {}\n",
                ev.precision_at_k, ev.baseline, ev.n_positives, ev.queue_len
            );
            for b in &ev.rank_histogram {
                let _ = writeln!(text, "ranks {}-{} {}", b.start, b.end, b.count);
            }
            Ok(Output::new(text, &ev))
        }
        TriageCmd::Merge {
            corpus,
            decisions,
            topic,
            policy,
            out,
        } => {
            let corpus = corpus_arg(&corpus, "corpus")?;
            let decisions = load_decisions(&decisions)?;
            let policy: LabelPolicy = match policy {
                Some(p) => read_config(&p, "policy")?,
                None => LabelPolicy::default(),
            };
            let scope: Option<HashSet<String>> = match topic {
                Some(path) => {
                    let topic = TopicModel::load(input(&path, "topic")?)?;
                    Some(
                        filter_on_topic(&topic, corpus.records())?
                            .into_iter()
                            .map(|p| p.page_id)
                            .collect(),
                    )
                }
                None => None,
            };
            let merged = merge_decisions(&corpus, &decisions, &policy, scope.as_ref())?;
            save_corpus(&merged.corpus, &out)?;
            Ok(Output::new(
                format!(
                    "changed {}\nlabeled_by_decisions {}\nunknown_domains {}\n",
                    merged.changed,
                    merged.audit.len(),
                    merged.unknown_domains.len()
                ),
                json!({
                    "changed": merged.changed,
                    "audit": merged.audit,
                    "unknown_domains": merged.unknown_domains,
                }),
            ))
        }
    }
}
