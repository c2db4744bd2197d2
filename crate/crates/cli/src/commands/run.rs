use std::fmt::Write as _;
use std::path::PathBuf;

use redd_core::pipeline::{run_pipeline, PipelineConfig};

use super::{input, parse_architecture, CliError, CmdResult};
use crate::args::RunArgs;
use crate::output::Output;

/// Config file or synthetic default, with flags applied on top.
pub(crate) fn pipeline_config(args: &RunArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(input(path, "config")?)?,
        None => PipelineConfig::synthetic_default(PathBuf::from("runs/synthetic")),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &args.corpus {
        cfg.corpus.path = Some(v.clone());
        cfg.corpus.synthetic = None;
    }
    if let Some(v) = args.d_red {
        cfg.d_red = v;
    }
    if let Some(v) = args.projection_seed {
        cfg.projection_seed = Some(v);
    }
    if let Some(v) = args.train_seed {
        cfg.train_seed = Some(v);
    }
    if let Some(v) = args.threshold {
        cfg.topic.threshold = Some(v);
    }
    if let Some(v) = &args.architecture {
        cfg.train.architecture = parse_architecture(v)?;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.cutoff {
        cfg.triage.cutoff = v;
    }
    if let Some(v) = args.k {
        cfg.triage.k = v;
    }
    if let Some(v) = &args.decision_log {
        cfg.decision_log = Some(v.clone());
    }
    if let Some(v) = &args.model {
        cfg.model = Some(v.clone());
    }
    Ok(cfg)
}

pub fn run(args: RunArgs) -> CmdResult {
    let cfg = pipeline_config(&args)?;
    cfg.validate()?;
    let report = run_pipeline(&cfg)?;
    let mut text = format!(
        "output_dir {}\nstages {}\n",
        cfg.output_dir.display(),
        report.stages.join(",")
    );
    for (k, v) in &report.metrics {
        let _ = writeln!(text, "{k} {v}");
    }
    Ok(Output::new(text, &report))
}
