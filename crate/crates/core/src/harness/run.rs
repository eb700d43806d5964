//! Seed fan-out, output files, and the TCP worker loop.

use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use super::config::{experiment_text, parse_config, RunConfig, Transport};
use super::metrics::{MetricsRow, MetricsWriter};
use super::summary::{build_id, summarize, write_summary, RunManifest, Summary};
use crate::error::{Error, Result};
use crate::orchestrator::{inproc_links, run_with_links, serve_client, ClientLink, TcpLink, World};
use crate::transport::{connect, Server, HANDSHAKE_TIMEOUT};

/// How long the server waits for all TCP clients to say hello.
pub const JOIN_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
}

/// Runs every seed and writes `manifest.json`, `metrics.csv`, and `summary.json`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::file(&cfg.out, e))?;
    let manifest = RunManifest {
        build_id: build_id(),
        config_text: experiment_text(&cfg.experiment),
        experiment: cfg.experiment.clone(),
        seeds: cfg.seeds.clone(),
        out_dir: cfg.out.clone(),
        transport: match cfg.transport {
            Transport::InProc => "inproc",
            Transport::Tcp => "tcp",
        }
        .into(),
    };
    manifest.save(&cfg.out)?;
    let mut writer = MetricsWriter::create(&cfg.out.join("metrics.csv"))?;
    let mut rows = Vec::new();
    let mut sink = |config: &crate::orchestrator::ExperimentConfig, r: &crate::orchestrator::RoundReport| {
        let row = MetricsRow::from_report(config, r);
        writer.write(&row)?;
        rows.push(row);
        Ok(())
    };
    match cfg.transport {
        Transport::InProc => {
            for &seed in &cfg.seeds {
                let exp = cfg.for_seed(seed);
                log::info!("seed {seed}: {} for {} rounds", exp.strategy.name(), exp.rounds);
                let world = World::build(&exp)?;
                let mut links = inproc_links(&world)?;
                run_with_links(&world, &mut links, cfg.record_wall_time, |r| sink(&exp, r))?;
            }
        }
        Transport::Tcp => run_tcp(cfg, &mut sink)?,
    }
    drop(writer);
    let summary = summarize(&rows)?;
    write_summary(&cfg.out, &summary)?;
    Ok(RunOutcome { out_dir: cfg.out.clone(), rows, summary })
}

type Sink<'a> = dyn FnMut(&crate::orchestrator::ExperimentConfig, &crate::orchestrator::RoundReport) -> Result<()> + 'a;

fn run_tcp(cfg: &RunConfig, sink: &mut Sink<'_>) -> Result<()> {
    let server = Server::bind(cfg.listen.as_deref().unwrap_or("127.0.0.1:0"))?;
    let addr = server.local_addr()?.to_string();
    let workers: Vec<thread::JoinHandle<Result<()>>> = if cfg.listen.is_none() {
        (0..cfg.experiment.num_clients)
            .map(|id| {
                let addr = addr.clone();
                thread::spawn(move || run_client(&addr, id as u16, HANDSHAKE_TIMEOUT))
            })
            .collect()
    } else {
        log::info!("listening on {addr} for {} clients", cfg.experiment.num_clients);
        Vec::new()
    };
    let result = serve_seeds(cfg, &server, sink);
    for h in workers {
        match h.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) if result.is_ok() => return Err(e),
            Ok(Err(e)) => log::debug!("loopback client after failure: {e}"),
            Err(_) => return Err(Error::Connection("loopback client panicked".into())),
        }
    }
    result
}

fn serve_seeds(cfg: &RunConfig, server: &Server, sink: &mut Sink<'_>) -> Result<()> {
    let first = cfg.for_seed(cfg.seeds[0]);
    let conns = server.accept_clients(first.num_clients, &experiment_text(&first), JOIN_TIMEOUT)?;
    let mut links: Vec<Box<dyn ClientLink>> =
        conns.into_iter().enumerate().map(|(id, c)| Box::new(TcpLink::new(id, c)) as Box<dyn ClientLink>).collect();
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let exp = cfg.for_seed(seed);
        log::info!("seed {seed}: {} over tcp for {} rounds", exp.strategy.name(), exp.rounds);
        let world = World::build(&exp)?;
        let outcome = run_with_links(&world, &mut links, cfg.record_wall_time, |r| sink(&exp, r));
        let next = match (&outcome, cfg.seeds.get(i + 1)) {
            (Ok(_), Some(&s)) => Some(experiment_text(&cfg.for_seed(s))),
            _ => None,
        };
        for link in &mut links {
            if let Err(e) = link.finish(next.as_deref()) {
                log::warn!("closing client {}: {e}", link.client_id());
            }
        }
        outcome?;
    }
    Ok(())
}

/// TCP worker: joins the server as `client_id` and trains whatever
/// configurations the server sends until it says `BYE`.
pub fn run_client(address: &str, client_id: u16, timeout: Duration) -> Result<()> {
    let (mut conn, mut text) = connect(address, client_id, timeout)?;
    loop {
        let exp = parse_config(&text, &[], None)?.experiment;
        let world = World::build(&exp)?;
        let mut worker = world.worker(client_id as usize)?;
        log::debug!("client {client_id}: seed {}, shard of {}", exp.seed, worker.shard().len());
        match serve_client(&mut conn, &mut worker, exp.rounds, |t| exp.is_eval_round(t), &world.test.inputs)? {
            Some(next) => text = next,
            None => return Ok(()),
        }
    }
}
