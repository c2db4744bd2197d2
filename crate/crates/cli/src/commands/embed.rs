use redd_core::corpus::save_corpus;
use redd_core::embed::{embed_corpus, make_projection, SyntheticEmbedder};
use serde_json::json;

use super::{corpus_arg, CmdResult};
use crate::args::EmbedCmd;
use crate::output::Output;

pub fn run(cmd: EmbedCmd) -> CmdResult {
    match cmd {
        EmbedCmd::Text {
            corpus,
            dim,
            lang_weight,
            seed,
            out,
        } => {
            let corpus = corpus_arg(&corpus, "corpus")?;
            let embedder = SyntheticEmbedder::new(dim, seed, lang_weight)?;
            let embedded = embed_corpus(&corpus, &embedder)?;
            save_corpus(&embedded, &out)?;
            Ok(Output::new(
                format!("embedded {} pages into {dim} dimensions\n", embedded.len()),
                json!({"pages": embedded.len(), "dim": dim}),
            ))
        }
        EmbedCmd::Project {
            corpus,
            d_red,
            seed,
            out,
            matrix_out,
        } => {
            let corpus = corpus_arg(&corpus, "corpus")?;
            let projection = make_projection(corpus.manifest().d_full, d_red, seed)?;
            let projected = projection.project_corpus(&corpus)?;
            save_corpus(&projected, &out)?;
            if let Some(path) = matrix_out {
                projection.save(&path)?;
            }
            Ok(Output::new(
                format!(
                    "projected {} pages from {} to {d_red} dimensions\n",
                    projected.len(),
                    corpus.manifest().d_full
                ),
                json!({"pages": projected.len(), "d_full": corpus.manifest().d_full, "d_red": d_red, "seed": seed}),
            ))
        }
    }
}
