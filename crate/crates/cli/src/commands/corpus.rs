use std::fmt::Write as _;

use redd_core::corpus::{
    generate_synthetic_corpus, import_embeddings, save_corpus, Corpus, CorpusManifest,
    EmbeddingField, SyntheticSpec, DEFAULT_D_RED,
};
use redd_core::eval::fixtures;

use super::{config_err, corpus_arg, read_config, read_input, CmdResult};
use crate::args::{CorpusCmd, Preset};
use crate::output::Output;

pub fn run(cmd: CorpusCmd) -> CmdResult {
    match cmd {
        CorpusCmd::Generate {
            preset,
            spec,
            seed,
            out,
        } => {
            let spec: SyntheticSpec = match (preset, spec) {
                (Some(Preset::Ablation), _) => fixtures::ablation_spec(),
                (Some(Preset::Clustered), _) => {
                    fixtures::clustered_spec(5, 120, 768, fixtures::CLUSTERED_NOISE_STD)
                }
                (None, Some(path)) => read_config(&path, "spec")?,
                (None, None) => return Err(config_err("preset", "give --preset or --spec").into()),
            };
            let records = generate_synthetic_corpus(&spec, seed)?;
            let corpus = Corpus::new(
                spec.name.clone(),
                spec.d_full,
                DEFAULT_D_RED.min(spec.d_full),
                records,
            )?;
            save_corpus(&corpus, &out)?;
            Ok(manifest_output(corpus.manifest()))
        }
        CorpusCmd::Validate { corpus } => {
            Ok(manifest_output(corpus_arg(&corpus, "corpus")?.manifest()))
        }
        CorpusCmd::ImportEmbeddings {
            corpus,
            embeddings,
            field,
            out,
        } => {
            let field: EmbeddingField = field
                .parse()
                .map_err(|e: redd_core::Error| config_err("field", e.to_string()))?;
            let corpus = corpus_arg(&corpus, "corpus")?;
            let text = read_input(&embeddings, "embeddings")?;
            let updated = import_embeddings(&corpus, &text, field)?;
            save_corpus(&updated, &out)?;
            Ok(manifest_output(updated.manifest()))
        }
    }
}

fn manifest_output(m: &CorpusManifest) -> Output {
    let mut text = String::new();
    let _ = writeln!(text, "name {}", m.name);
    let _ = writeln!(text, "records {}", m.n_records);
    let _ = writeln!(text, "positive {}", m.n_positive);
    let _ = writeln!(text, "d_full {}", m.d_full);
    let _ = writeln!(text, "d_red {}", m.d_red);
    for (lang, n) in &m.languages {
        let _ = writeln!(text, "language.{lang} {n}");
    }
    for (split, n) in &m.split_counts {
        let _ = writeln!(text, "split.{split} {n}");
    }
    Output::new(text, m)
}
