//! Serves a built-in model over the wire protocol, so the external adapters
//! can be exercised against a real separate process.

use std::io::{BufReader, Write};

use anyhow::{bail, Result};
use clap::Args;
use wcam::model::wire::{handle_message, serve_lines};
use wcam::wavelet::Family;
use wcam::{ScoreFn, WaveletSpec, WcamConfig};

use crate::models::ModelSpec;
use crate::parse_enum;

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: ModelSpec,
    /// Image side the cell model expects.
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    #[arg(long = "grid-size", alias = "grid", default_value_t = 8)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, value_parser = parse_enum::<Family>, default_value = "haar")]
    pub family: Family,
    #[arg(long, default_value_t = wcam::model::CellEnergyModel::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Listen for POST /score on this address instead of using stdio;
    /// port 0 picks a free port. The bound address is printed on stdout.
    #[arg(long, value_name = "ADDR")]
    pub http: Option<String>,
}

pub fn run(args: ServeArgs) -> Result<()> {
    if args.model.is_external() {
        bail!("serve only exposes built-in models");
    }
    let config = WcamConfig {
        grid_size: args.grid_size,
        spec: WaveletSpec {
            family: args.family,
            levels: args.levels,
            ..WaveletSpec::default()
        },
        ..WcamConfig::default()
    };
    let model = args.model.builtin(args.side, &config, args.alpha)?;
    match &args.http {
        None => {
            let stdin = std::io::stdin();
            let handled = serve_lines(BufReader::new(stdin.lock()), std::io::stdout().lock(), model.as_ref())?;
            log::info!("answered {handled} requests");
            Ok(())
        }
        Some(addr) => serve_http(addr, model.as_ref()),
    }
}

fn serve_http(addr: &str, model: &dyn ScoreFn) -> Result<()> {
    let server = tiny_http::Server::http(addr).map_err(|e| anyhow::anyhow!("binding {addr}: {e}"))?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| anyhow::anyhow!("server is not bound to an IP address"))?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "listening on http://{bound}")?;
    stdout.flush()?;
    let json = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    for mut request in server.incoming_requests() {
        if request.url() != "/score" || *request.method() != tiny_http::Method::Post {
            request.respond(tiny_http::Response::from_string("not found").with_status_code(404))?;
            continue;
        }
        let mut body = String::new();
        let response = match request.as_reader().read_to_string(&mut body) {
            Ok(_) => handle_message(&body, model),
            Err(e) => wcam::model::wire::ScoreResponse::error(String::new(), format!("unreadable body: {e}")),
        };
        let text = serde_json::to_string(&response)?;
        request.respond(tiny_http::Response::from_string(text).with_header(json.clone()))?;
    }
    Ok(())
}
