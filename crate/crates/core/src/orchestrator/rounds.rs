use std::mem;
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, streams, ExperimentConfig, GdaMode, StrategyKind};
use super::fedavg::fedavg;
use super::links::{ClientLink, InProcLink};
use super::report::RoundReport;
use super::world::World;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gda::{run_gda, run_gda_random};
use crate::geometry::{flatten, pairwise_mean_deviation, unflatten, GradientVector};
use crate::lgi::{leader_gradient, run_lgi_with, LgiState};
use crate::nn::{
    accuracy, backward_server, forward_client, forward_server, server_logits, ClientModel, Dense, Matrix, ServerModel,
    Sgd,
};

/// The client model handed from client to client in vanilla SL.
#[derive(Debug, Clone)]
struct Relay {
    model: ClientModel<f32>,
    opt: Sgd<f32>,
    lineage: u64,
}

/// Owns the shared server model and all coordination state of a run.
pub struct Coordinator {
    config: ExperimentConfig,
    server: ServerModel<f32>,
    opt: Sgd<f32>,
    lgi: LgiState<f64>,
    rng: ChaCha8Rng,
    test: Arc<Dataset<f32>>,
    shard_sizes: Vec<usize>,
    epochs_per_round: f64,
    relay: Option<Relay>,
    /// Fill `wall_ms`; off by default so that outputs stay reproducible.
    pub record_wall_time: bool,
}

impl Coordinator {
    pub fn new(world: &World) -> Result<Self> {
        let config = world.config.clone();
        let server = world.init.server.clone();
        let opt = Sgd::new(config.lr_server as f32, config.momentum as f32, &server.layers)?;
        let relay = match config.strategy.kind {
            StrategyKind::VanillaSl => {
                let model = world.init.client.clone();
                let opt = Sgd::new(config.lr_client as f32, config.momentum as f32, &model.layers)?;
                Some(Relay { model, opt, lineage: config.seed })
            }
            _ => None,
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::ABLATION)),
            lgi: LgiState::new(),
            shard_sizes: world.partition.sizes(),
            epochs_per_round: world.epochs_per_round(),
            test: Arc::clone(&world.test),
            config,
            server,
            opt,
            relay,
            record_wall_time: false,
        })
    }

    pub fn server(&self) -> &ServerModel<f32> {
        &self.server
    }

    pub fn lgi_state(&self) -> &LgiState<f64> {
        &self.lgi
    }

    /// The relayed client model of a vanilla SL run.
    pub fn relayed_model(&self) -> Option<&ClientModel<f32>> {
        self.relay.as_ref().map(|r| &r.model)
    }

    /// Runs round `round` (1-based). `links` must hold clients `0..S` in id order.
    pub fn run_round(&mut self, round: u32, links: &mut [Box<dyn ClientLink>]) -> Result<RoundReport> {
        if links.len() != self.shard_sizes.len() || links.iter().enumerate().any(|(i, l)| l.client_id() != i) {
            return Err(Error::Config(format!("expected clients 0..{} in id order", self.shard_sizes.len())));
        }
        let start = Instant::now();
        let mut report = match self.config.strategy.kind {
            StrategyKind::VanillaSl => self.vanilla_round(round, links)?,
            _ => self.parallel_round(round, links)?,
        };
        if self.config.is_eval_round(round) {
            report.accuracy = Some(self.evaluate(round, links).map_err(|e| e.in_round(round, None, "evaluation"))?);
        }
        if self.record_wall_time {
            report.wall_ms = start.elapsed().as_millis() as u64;
        }
        Ok(report)
    }

    fn server_pass(
        &self,
        round: u32,
        id: usize,
        act: &Matrix<f32>,
        labels: &[usize],
    ) -> Result<(f64, Vec<Dense<f32>>, Matrix<f32>)> {
        let fwd = forward_server(&self.server, act, labels).map_err(|e| e.in_round(round, Some(id), "server forward"))?;
        let (grads, dact) =
            backward_server(&self.server, &fwd.cache).map_err(|e| e.in_round(round, Some(id), "server backward"))?;
        Ok((fwd.mean_loss as f64, grads, dact))
    }

    fn apply_server_update(&mut self, round: u32, values: &[f64]) -> Result<()> {
        let values: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        let grads = unflatten(&values, &self.server.layers).map_err(|e| e.in_round(round, None, "server update"))?;
        self.opt.step(&mut self.server.layers, &grads).map_err(|e| e.in_round(round, None, "server update"))
    }

    /// GAPSL, PSL, and SFL: every client trains against the same server snapshot.
    fn parallel_round(&mut self, round: u32, links: &mut [Box<dyn ClientLink>]) -> Result<RoundReport> {
        let mut batches = Vec::with_capacity(links.len());
        for link in links.iter_mut() {
            let id = link.client_id();
            batches.push(link.forward(round).map_err(|e| e.in_round(round, Some(id), "client forward"))?);
        }
        let ids: Vec<usize> = (0..links.len()).collect();
        let mut losses = Vec::with_capacity(links.len());
        let mut cohort = Vec::with_capacity(links.len());
        let mut dacts = Vec::with_capacity(links.len());
        for (id, (act, labels)) in batches.iter().enumerate() {
            let (loss, grads, dact) = self.server_pass(round, id, act, labels)?;
            losses.push(loss);
            cohort.push(GradientVector::new(id, round, flatten(&grads).into_iter().map(f64::from).collect()));
            dacts.push(dact);
        }
        let mut report = RoundReport::new(round, round as f64 * self.epochs_per_round, ids.clone(), losses.clone());
        report.pairwise_dev = pairwise_mean_deviation(&cohort);
        let update = match self.config.strategy.kind {
            StrategyKind::Gapsl => self.coordinate(round, &cohort, &losses, &mut report),
            _ => cohort_mean(&cohort),
        };
        self.apply_server_update(round, &update)?;
        if self.config.withhold_excluded {
            if let (Some(survivors), false) = (&report.survivors, report.fallback) {
                for (id, d) in dacts.iter_mut().enumerate() {
                    if !survivors.contains(&id) {
                        *d = Matrix::zeros(d.rows(), d.cols());
                    }
                }
            }
        }
        for (link, dact) in links.iter_mut().zip(&dacts) {
            let id = link.client_id();
            link.backward(round, dact).map_err(|e| e.in_round(round, Some(id), "client backward"))?;
        }
        if self.config.strategy.kind == StrategyKind::Sfl && round.is_multiple_of(self.config.sfl_interval) {
            self.aggregate(links).map_err(|e| e.in_round(round, None, "client aggregation"))?;
        }
        Ok(report)
    }

    /// Leader identification then alignment; returns the server update direction.
    fn coordinate(
        &mut self,
        round: u32,
        cohort: &[GradientVector<f64>],
        losses: &[f64],
        report: &mut RoundReport,
    ) -> Vec<f64> {
        let strategy = self.config.strategy;
        self.lgi.begin_round(round);
        let lgi = match run_lgi_with(cohort, &mut self.lgi, &self.config.lgi, strategy.lgi, &mut self.rng) {
            Ok(o) => o,
            Err(reason) => {
                log::debug!("round {round}: coordination skipped: {reason}");
                report.skipped = Some(reason);
                return cohort_mean(cohort);
            }
        };
        report.k_t = Some(lgi.k_t);
        report.selected = Some(lgi.selected.clone());
        let gda = match strategy.gda {
            GdaMode::Off => return lgi.leader.values,
            GdaMode::Threshold => run_gda(cohort, losses, &lgi.leader, &self.config.gda),
            GdaMode::Random => run_gda_random(cohort, losses, &lgi.leader, &self.config.gda, &mut self.rng),
        };
        let gda = match gda {
            Ok(o) => o,
            Err(reason) => {
                log::debug!("round {round}: alignment skipped: {reason}");
                report.skipped = Some(reason);
                return cohort_mean(cohort);
            }
        };
        report.theta_th = Some(gda.threshold);
        report.global_loss = Some(gda.global_loss);
        report.regularized_losses.clone_from(&gda.regularized_losses);
        report.survivors = Some(gda.survivors.clone());
        if gda.fallback {
            report.fallback = true;
            return lgi.leader.values;
        }
        leader_gradient(&gda.corrected, &gda.survivors).expect("survivors present").values
    }

    fn aggregate(&mut self, links: &mut [Box<dyn ClientLink>]) -> Result<()> {
        let mut models = Vec::with_capacity(links.len());
        for link in links.iter_mut() {
            let w = link
                .worker_mut()
                .ok_or_else(|| Error::Config("client aggregation needs in-process clients".into()))?;
            models.push(w.model.layers.clone());
        }
        let refs: Vec<&[Dense<f32>]> = models.iter().map(Vec::as_slice).collect();
        let weights: Vec<f64> = self.shard_sizes.iter().map(|&n| n as f64).collect();
        let merged = fedavg(&refs, &weights)?;
        for link in links.iter_mut() {
            link.worker_mut().expect("checked above").model.layers.clone_from(&merged);
        }
        Ok(())
    }

    /// One client at a time trains the relayed client model, then hands it on.
    fn vanilla_round(&mut self, round: u32, links: &mut [Box<dyn ClientLink>]) -> Result<RoundReport> {
        let mut relay = self.relay.take().ok_or_else(|| Error::Config("no relayed model".into()))?;
        let result = self.relay_through(round, links, &mut relay);
        self.relay = Some(relay);
        result
    }

    fn relay_through(&mut self, round: u32, links: &mut [Box<dyn ClientLink>], relay: &mut Relay) -> Result<RoundReport> {
        let mut losses = Vec::with_capacity(links.len());
        let mut cohort = Vec::with_capacity(links.len());
        for link in links.iter_mut() {
            let id = link.client_id();
            let w = link
                .worker_mut()
                .ok_or_else(|| Error::Config("vanilla SL needs in-process clients".into()))?;
            mem::swap(&mut w.model, &mut relay.model);
            mem::swap(&mut w.opt, &mut relay.opt);
            w.lineage = Some(relay.lineage);
            let step = (|| {
                let (act, labels) = w.forward().map_err(|e| e.in_round(round, Some(id), "client forward"))?;
                let (loss, grads, dact) = self.server_pass(round, id, &act, &labels)?;
                self.opt.step(&mut self.server.layers, &grads).map_err(|e| e.in_round(round, Some(id), "server update"))?;
                w.backward(&dact).map_err(|e| e.in_round(round, Some(id), "client backward"))?;
                Ok::<_, Error>((loss, grads))
            })();
            mem::swap(&mut w.model, &mut relay.model);
            mem::swap(&mut w.opt, &mut relay.opt);
            let (loss, grads) = step?;
            losses.push(loss);
            cohort.push(GradientVector::new(id, round, flatten(&grads).into_iter().map(f64::from).collect()));
        }
        let ids = (0..links.len()).collect();
        let mut report = RoundReport::new(round, round as f64 * self.epochs_per_round, ids, losses);
        report.pairwise_dev = pairwise_mean_deviation(&cohort);
        Ok(report)
    }

    /// Mean over clients of the accuracy of (client model + shared server) on the test set.
    fn evaluate(&mut self, round: u32, links: &mut [Box<dyn ClientLink>]) -> Result<f64> {
        let test = Arc::clone(&self.test);
        if let Some(relay) = &self.relay {
            let (act, _) = forward_client(&relay.model, &test.inputs)?;
            return Ok(accuracy(&server_logits(&self.server, &act), &test.labels));
        }
        let mut total = 0.0;
        for link in links.iter_mut() {
            let id = link.client_id();
            let act = link.evaluate(round, &test.inputs).map_err(|e| e.in_round(round, Some(id), "evaluation"))?;
            total += accuracy(&server_logits(&self.server, &act), &test.labels);
        }
        Ok(total / links.len() as f64)
    }
}

fn cohort_mean(cohort: &[GradientVector<f64>]) -> Vec<f64> {
    let ids: Vec<usize> = cohort.iter().map(|g| g.client_id).collect();
    leader_gradient(cohort, &ids).expect("non-empty cohort").values
}

/// In-process links for every client of `world`.
pub fn inproc_links(world: &World) -> Result<Vec<Box<dyn ClientLink>>> {
    (0..world.num_clients())
        .map(|id| Ok(Box::new(InProcLink::new(world.worker(id)?)) as Box<dyn ClientLink>))
        .collect()
}

/// Runs all rounds, handing each report to `sink` as soon as it exists.
pub fn run_with_links(
    world: &World,
    links: &mut [Box<dyn ClientLink>],
    record_wall_time: bool,
    mut sink: impl FnMut(&RoundReport) -> Result<()>,
) -> Result<Vec<RoundReport>> {
    let mut coord = Coordinator::new(world)?;
    coord.record_wall_time = record_wall_time;
    let mut reports = Vec::with_capacity(world.config.rounds as usize);
    for t in 1..=world.config.rounds {
        let r = coord.run_round(t, links)?;
        sink(&r)?;
        reports.push(r);
    }
    Ok(reports)
}

/// Builds the world and runs the experiment with in-process clients.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RoundReport>> {
    let world = World::build(config)?;
    let mut links = inproc_links(&world)?;
    run_with_links(&world, &mut links, false, |_| Ok(()))
}
