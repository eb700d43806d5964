use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, streams, DatasetSpec, ExperimentConfig};
use crate::data::{dirichlet_partition, iid_partition, load_idx, synth_gaussian_mixture, Dataset, Partition};
use crate::error::{Error, Result};
use crate::nn::{backward_client, forward_client, split_model, ClientCache, ClientModel, Matrix, Sgd, SplitModel};

/// Data, partition, and initial weights shared by both sides of a run.
///
/// Every process that builds a world from the same configuration gets the
/// same one, which is what lets a TCP client rebuild its shard locally.
#[derive(Debug, Clone)]
pub struct World {
    pub config: ExperimentConfig,
    pub train: Arc<Dataset<f32>>,
    pub test: Arc<Dataset<f32>>,
    pub partition: Partition,
    pub init: SplitModel<f32>,
}

impl World {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let (train, test) = match &config.dataset {
            DatasetSpec::Gaussian { classes, dim, samples_per_class, spread } => {
                synth_gaussian_mixture(*classes, *dim, *samples_per_class, *spread, derive_seed(seed, streams::DATA))?
            }
            DatasetSpec::Idx { train_images, train_labels, test_images, test_labels } => {
                (load_idx(train_images, train_labels)?, load_idx(test_images, test_labels)?)
            }
        };
        if train.dim() != config.model.input_dim() || train.num_classes > config.model.num_classes() {
            return Err(Error::Config(format!(
                "dataset ({} features, {} classes) does not fit the model ({} inputs, {} outputs)",
                train.dim(),
                train.num_classes,
                config.model.input_dim(),
                config.model.num_classes()
            )));
        }
        let part_seed = derive_seed(seed, streams::PARTITION);
        let partition = match config.alpha {
            Some(a) => dirichlet_partition(&train.labels, config.num_clients, a, part_seed)?,
            None => iid_partition(&train.labels, config.num_clients, part_seed)?,
        };
        let init = split_model(&config.model, config.cut_index, derive_seed(seed, streams::INIT))?;
        Ok(Self { config: config.clone(), train: Arc::new(train), test: Arc::new(test), partition, init })
    }

    pub fn num_clients(&self) -> usize {
        self.partition.num_clients()
    }

    /// A fresh worker for `client_id`, holding the initial client weights.
    pub fn worker(&self, client_id: usize) -> Result<ClientWorker> {
        let shard = self
            .partition
            .client_indices
            .get(client_id)
            .ok_or_else(|| Error::Config(format!("client id {client_id} outside [0, {})", self.num_clients())))?
            .clone();
        ClientWorker::new(client_id, self.init.client.clone(), &self.config, shard, Arc::clone(&self.train))
    }

    /// Mean local batch size over training-set size: epochs covered per round.
    pub fn epochs_per_round(&self) -> f64 {
        let b = self.config.batch_size;
        let seen: usize = self.partition.client_indices.iter().map(|s| s.len().min(b)).sum();
        seen as f64 / self.train.len() as f64
    }
}

/// One client's half of the model together with its data cursor.
#[derive(Debug, Clone)]
pub struct ClientWorker {
    pub client_id: usize,
    pub model: ClientModel<f32>,
    pub opt: Sgd<f32>,
    /// Identity of the relayed model currently held (vanilla SL only).
    pub lineage: Option<u64>,
    shard: Vec<usize>,
    train: Arc<Dataset<f32>>,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    cache: Option<ClientCache<f32>>,
    epochs: u64,
}

impl ClientWorker {
    pub fn new(
        client_id: usize,
        model: ClientModel<f32>,
        config: &ExperimentConfig,
        shard: Vec<usize>,
        train: Arc<Dataset<f32>>,
    ) -> Result<Self> {
        if shard.is_empty() {
            return Err(Error::Data(format!("client {client_id} has an empty shard")));
        }
        let opt = Sgd::new(config.lr_client as f32, config.momentum as f32, &model.layers)?;
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::CLIENT_BASE + client_id as u64));
        let batch_size = config.batch_size.min(shard.len());
        let mut w = Self {
            client_id,
            model,
            opt,
            lineage: None,
            order: shard.clone(),
            shard,
            train,
            cursor: 0,
            batch_size,
            rng,
            cache: None,
            epochs: 0,
        };
        w.reshuffle();
        Ok(w)
    }

    fn reshuffle(&mut self) {
        self.order.clone_from(&self.shard);
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    pub fn shard(&self) -> &[usize] {
        &self.shard
    }

    /// Completed passes over the local shard.
    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    /// Next `min(batch_size, shard)` indices; the shard is reshuffled whenever it runs out.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            if self.cursor == self.order.len() {
                self.epochs += 1;
                self.reshuffle();
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    /// Forward pass on the next batch: cut-layer activations and their labels.
    pub fn forward(&mut self) -> Result<(Matrix<f32>, Vec<usize>)> {
        let batch = self.next_batch();
        let (x, y) = self.train.gather(&batch);
        let (act, cache) = forward_client(&self.model, &x)?;
        self.cache = Some(cache);
        Ok((act, y))
    }

    /// Back-propagates the activation gradients of the last forward pass and steps the optimizer.
    pub fn backward(&mut self, activation_grads: &Matrix<f32>) -> Result<()> {
        let cache = self.cache.take().ok_or_else(|| Error::Protocol("activation gradients without a forward pass".into()))?;
        let grads = backward_client(&self.model, &cache, activation_grads)?;
        self.opt.step(&mut self.model.layers, &grads)
    }

    /// Cut-layer activations of an evaluation set.
    pub fn activations(&self, inputs: &Matrix<f32>) -> Result<Matrix<f32>> {
        Ok(forward_client(&self.model, inputs)?.0)
    }
}
