use redd_service::{bootstrap_from_run, Service, ServiceConfig};
use serde_json::json;

use super::{config_err, input, CliError, CmdResult};
use crate::args::ServeArgs;
use crate::output::Output;

pub fn run(args: ServeArgs) -> CmdResult {
    let mut cfg = match &args.config {
        Some(path) => ServiceConfig::load(input(path, "config")?)?,
        None => ServiceConfig::default(),
    };
    if let Some(dir) = args.data_dir {
        cfg.data_dir = dir;
    }
    if let Some(listen) = args.listen {
        cfg.listen = listen;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(run_dir) = &args.init_from {
        if !run_dir.is_dir() {
            return Err(config_err(
                "init_from",
                format!("{} is not a directory", run_dir.display()),
            )
            .into());
        }
        bootstrap_from_run(&cfg.data_dir, run_dir)?;
    }
    let service = Service::open(cfg)?;
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Runtime(format!("tokio runtime: {e}")))?;
    runtime
        .block_on(redd_service::serve(service))
        .map_err(|e| CliError::Runtime(format!("server: {e}")))?;
    Ok(Output::new("stopped\n", json!({"stopped": true})))
}
