//! JSON adapter checkpoints. Matrices are flat row-major arrays whose shapes
//! follow from the header fields: `down` is rank×d_m, `up` is d_ff×rank and
//! `w_g` is d_m×n.

use serde::{Deserialize, Serialize};

use super::{AdaptedFfn, FrozenFfn, LoraExpert, MoralLayer, RouterNetwork};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertJson {
    pub down: Vec<f64>,
    pub up: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterJson {
    pub w_g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerJson {
    pub n: usize,
    pub k: usize,
    pub rank: usize,
    pub alpha: f64,
    pub d_m: usize,
    pub d_ff: usize,
    pub experts: Vec<ExpertJson>,
    pub router: RouterJson,
}

/// One [`LayerJson`] per decorated FFN, in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterCheckpoint {
    pub layers: Vec<LayerJson>,
}

impl LayerJson {
    pub fn from_layer(layer: &MoralLayer) -> Self {
        let first = &layer.experts()[0];
        LayerJson {
            n: layer.n_experts(),
            k: layer.top_k(),
            rank: first.rank(),
            alpha: first.alpha(),
            d_m: layer.base().d_m(),
            d_ff: layer.base().d_ff(),
            experts: layer
                .experts()
                .iter()
                .map(|e| ExpertJson {
                    down: e.down().as_slice().to_vec(),
                    up: e.up().as_slice().to_vec(),
                })
                .collect(),
            router: RouterJson {
                w_g: layer.router().weights().as_slice().to_vec(),
            },
        }
    }

    /// Rebuilds the layer around its frozen base.
    pub fn into_layer(self, base: FrozenFfn) -> Result<MoralLayer> {
        if base.d_m() != self.d_m || base.d_ff() != self.d_ff {
            return Err(Error::Config(format!(
                "adapter dims {}×{} do not match base FFN {}×{}",
                self.d_m,
                self.d_ff,
                base.d_m(),
                base.d_ff()
            )));
        }
        if self.experts.len() != self.n {
            return Err(Error::Config(format!(
                "header says n = {} but {} experts are stored",
                self.n,
                self.experts.len()
            )));
        }
        let experts = self
            .experts
            .into_iter()
            .map(|e| {
                let down = Matrix::from_vec(self.rank, self.d_m, e.down)?;
                let up = Matrix::from_vec(self.d_ff, self.rank, e.up)?;
                LoraExpert::from_parts(down, up, self.alpha)
            })
            .collect::<Result<Vec<_>>>()?;
        let router = RouterNetwork::new(Matrix::from_vec(self.d_m, self.n, self.router.w_g)?)?;
        MoralLayer::new(base, experts, router, self.k)
    }
}

impl AdapterCheckpoint {
    pub fn from_layers<'a>(layers: impl IntoIterator<Item = &'a MoralLayer>) -> Self {
        AdapterCheckpoint {
            layers: layers.into_iter().map(LayerJson::from_layer).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
