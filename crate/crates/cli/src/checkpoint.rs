//! TSNet checkpoints as JSON. `f64` values are written in shortest
//! round-trip form, so save then load is bit-exact.

use std::path::Path;

use dentvox_core::neural::{ParamSet, RunningStats, StatsSet, Tensor, Tsnet, TsnetConfig};
use serde::{Deserialize, Serialize};

use crate::dto::{read_json, write_json};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDto {
    pub name: String,
    pub shape: [usize; 5],
    pub decay: bool,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsDto {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub widths: [usize; 4],
    pub in_channels: usize,
    pub groups: usize,
    pub relu_head: bool,
    pub params: Vec<TensorDto>,
    pub running_stats: Vec<StatsDto>,
}

impl Checkpoint {
    pub fn of(net: &Tsnet) -> Self {
        let c = net.config;
        Self {
            widths: c.widths,
            in_channels: c.in_channels,
            groups: c.groups,
            relu_head: c.relu_head,
            params: net
                .params
                .iter()
                .map(|p| TensorDto {
                    name: p.name.clone(),
                    shape: p.value.shape(),
                    decay: p.decay,
                    data: p.value.data().to_vec(),
                })
                .collect(),
            running_stats: net
                .stats
                .iter()
                .map(|s| StatsDto { name: s.name.clone(), mean: s.mean.clone(), var: s.var.clone() })
                .collect(),
        }
    }

    pub fn into_net(self) -> Result<Tsnet> {
        let config = TsnetConfig {
            widths: self.widths,
            in_channels: self.in_channels,
            groups: self.groups,
            relu_head: self.relu_head,
        };
        let mut params = ParamSet::new();
        for t in self.params {
            params.push(t.name, Tensor::from_vec(t.shape, t.data)?, t.decay);
        }
        let mut stats = StatsSet::default();
        for s in self.running_stats {
            stats.push(RunningStats { name: s.name, mean: s.mean, var: s.var });
        }
        Ok(Tsnet::from_parts(config, params, stats)?)
    }
}

pub fn save(path: &Path, net: &Tsnet) -> Result<()> {
    write_json(path, &Checkpoint::of(net))
}

pub fn load(path: &Path) -> Result<Tsnet> {
    read_json::<Checkpoint>(path)?.into_net()
}
