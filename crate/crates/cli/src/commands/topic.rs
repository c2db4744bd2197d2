use std::fmt::Write as _;

use redd_core::corpus::{save_corpus, Corpus, PageRecord};
use redd_core::eval::experiments::sample_examples;
use redd_core::topic::{
    bucket_report, build_topic, calibrate_with_categories, filter_on_topic, score_pages,
    select_threshold, BucketReport, TopicModel,
};
use serde_json::json;

use super::{config_err, corpus_arg, input, read_json, write, CliError, CmdResult};
use crate::args::TopicCmd;
use crate::output::Output;

fn load_topic(path: &std::path::Path) -> Result<TopicModel, CliError> {
    Ok(TopicModel::load(input(path, "topic")?)?)
}

fn topic_output(topic: &TopicModel) -> Output {
    let threshold = topic
        .threshold
        .map_or("unset".to_string(), |t| t.to_string());
    Output::new(
        format!(
            "topic {}\nexamples {}\ndim {}\nthreshold {threshold}\n",
            topic.topic_id,
            topic.example_page_ids.len(),
            topic.centroid.len()
        ),
        topic,
    )
}

fn report_text(report: &BucketReport) -> String {
    let mut s = String::new();
    for b in &report.buckets {
        let rel = b.relevance.map_or("-".to_string(), |r| r.to_string());
        let _ = writeln!(
            s,
            "[{}, {}) count {} sampled {} relevance {rel}",
            b.lower,
            b.upper,
            b.count,
            b.sample.len()
        );
    }
    let _ = writeln!(s, "out_of_range {}", report.out_of_range);
    s
}

pub fn run(cmd: TopicCmd) -> CmdResult {
    match cmd {
        TopicCmd::Build {
            corpus,
            id,
            category,
            examples,
            n_examples,
            edges,
            threshold,
            seed,
            created_at,
            out,
        } => {
            let corpus = corpus_arg(&corpus, "corpus")?;
            let picked: Vec<&PageRecord> = match category {
                Some(cat) => sample_examples(&corpus, &cat, n_examples, seed)?,
                None => examples
                    .iter()
                    .map(|id| {
                        corpus
                            .get(id)
                            .ok_or_else(|| config_err("examples", format!("no page `{id}`")))
                    })
                    .collect::<Result<_, _>>()?,
            };
            let mut topic = build_topic(id, &picked, created_at)?;
            if !edges.is_empty() {
                topic = topic.with_edges(edges)?;
            }
            if let Some(t) = threshold {
                topic.set_threshold(t)?;
            }
            topic.save(&out)?;
            Ok(topic_output(&topic))
        }
        TopicCmd::Buckets {
            topic,
            corpus,
            sample_size,
            seed,
            out,
        } => {
            let topic = load_topic(&topic)?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let scored = score_pages(&topic, corpus.records())?;
            let report = bucket_report(&topic, &scored, sample_size, seed)?;
            if let Some(path) = out {
                write(
                    &path,
                    serde_json::to_string_pretty(&report).expect("report"),
                )?;
            }
            Ok(Output::new(report_text(&report), &report))
        }
        TopicCmd::SelectThreshold { report } => {
            let report: BucketReport = read_json(&report, "report")?;
            let t = select_threshold(&report)?;
            Ok(Output::new(format!("{t}\n"), json!({"threshold": t})))
        }
        TopicCmd::Calibrate {
            topic,
            corpus,
            category,
            sample_size,
            seed,
            out,
            report_out,
        } => {
            let mut topic = load_topic(&topic)?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let report = calibrate_with_categories(
                &mut topic,
                corpus.records(),
                &category,
                sample_size,
                seed,
            )?;
            topic.save(&out)?;
            if let Some(path) = report_out {
                write(
                    &path,
                    serde_json::to_string_pretty(&report).expect("report"),
                )?;
            }
            let threshold = topic.threshold.expect("calibration sets a threshold");
            Ok(Output::new(
                format!("{}threshold {threshold}\n", report_text(&report)),
                json!({"threshold": threshold, "report": report}),
            ))
        }
        TopicCmd::Filter { topic, corpus, out } => {
            let topic = load_topic(&topic)?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let kept = filter_on_topic(&topic, corpus.records())?;
            let n_kept = kept.len();
            let m = corpus.manifest();
            let filtered = Corpus::new(corpus.name(), m.d_full, m.d_red, kept)?;
            save_corpus(&filtered, &out)?;
            Ok(Output::new(
                format!("kept {n_kept} of {} pages\n", corpus.len()),
                json!({"kept": n_kept, "total": corpus.len()}),
            ))
        }
    }
}
