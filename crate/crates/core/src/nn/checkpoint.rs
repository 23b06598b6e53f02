//! Trained network + optimizer state, persisted in the `ADVD` container.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::network::Network;
use super::spec::NetworkSpec;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub dataset: String,
    pub epochs_completed: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub adam: AdamState,
    pub meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    spec: NetworkSpec,
    train_meta: TrainMeta,
    adam_step: u64,
}

const KIND: &str = "checkpoint";

impl Checkpoint {
    pub fn fresh(network: Network, meta: TrainMeta) -> Self {
        let adam = AdamState::for_params(network.params());
        Self { network, adam, meta }
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.network.spec()
    }

    pub fn is_trained(&self) -> bool {
        self.meta.epochs_completed > 0
    }

    pub fn to_container(&self) -> Container {
        let header = Header {
            kind: KIND.into(),
            spec: self.network.spec().clone(),
            train_meta: self.meta.clone(),
            adam_step: self.adam.step,
        };
        let mut c = Container::new(serde_json::to_value(header).expect("header serializes"));
        for (name, t) in self.network.params() {
            c.push(name.clone(), t.clone());
        }
        for (name, t) in &self.adam.first {
            c.push(format!("adam.m.{name}"), t.clone());
        }
        for (name, t) in &self.adam.second {
            c.push(format!("adam.v.{name}"), t.clone());
        }
        c
    }

    pub fn from_container(c: Container, origin: &Path) -> Result<Self> {
        let header: Header = serde_json::from_value(c.meta)
            .map_err(|e| Error::format(origin, format!("checkpoint header: {e}")))?;
        if header.kind != KIND {
            return Err(Error::format(origin, format!("not a checkpoint ({})", header.kind)));
        }
        let mut weights = BTreeMap::new();
        let mut first = BTreeMap::new();
        let mut second = BTreeMap::new();
        for (name, t) in c.tensors {
            if let Some(n) = name.strip_prefix("adam.m.") {
                first.insert(n.to_string(), t);
            } else if let Some(n) = name.strip_prefix("adam.v.") {
                second.insert(n.to_string(), t);
            } else {
                weights.insert(name, t);
            }
        }
        let network = Network::new(header.spec, weights)?;
        for moments in [&first, &second] {
            for (name, t) in moments {
                let w: &Tensor = network
                    .param(name)
                    .ok_or_else(|| Error::format(origin, format!("optimizer state for unknown {name}")))?;
                if w.shape() != t.shape() {
                    return Err(Error::format(origin, format!("optimizer state shape for {name}")));
                }
            }
        }
        Ok(Self {
            network,
            adam: AdamState {
                step: header.adam_step,
                first,
                second,
            },
            meta: header.train_meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_container(Container::read(path)?, path)
    }
}
