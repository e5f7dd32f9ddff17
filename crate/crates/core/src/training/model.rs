use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::TrainError;
use crate::codec::{
    to_grid_order, AutoEncoder, BLOCK_VOXELS, CODE_DIM, DECODER_GROUP, ENCODER_GROUP,
    FULL_RESOLUTION, NUM_BLOCKS,
};
use crate::geometry::{DepthMap, DEFAULT_DEPTH_SIZE};
use crate::nn::{Conv2dSpec, Network, NetworkBuilder, DEFAULT_LEAKY_SLOPE};
use crate::tensor::Tensor;

pub const LOW_RESOLUTION: usize = 10;
pub const HIDDEN_DIM: usize = 480;
pub const LOW_RES_OUTPUT_GROUP: &str = "fc_out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    HighResStacked,
    LowResDirect,
    AutoEncoder,
}

impl ModelVariant {
    pub fn code(self) -> u8 {
        match self {
            ModelVariant::HighResStacked => 0,
            ModelVariant::LowResDirect => 1,
            ModelVariant::AutoEncoder => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModelVariant::HighResStacked),
            1 => Some(ModelVariant::LowResDirect),
            2 => Some(ModelVariant::AutoEncoder),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::HighResStacked => "high_res_stacked",
            ModelVariant::LowResDirect => "low_res_direct",
            ModelVariant::AutoEncoder => "autoencoder",
        }
    }

    /// Edge length of the predicted grid.
    pub fn output_resolution(self) -> usize {
        match self {
            ModelVariant::HighResStacked => FULL_RESOLUTION,
            ModelVariant::LowResDirect | ModelVariant::AutoEncoder => LOW_RESOLUTION,
        }
    }

    /// Layer chain of the variant.
    pub fn builder(self) -> NetworkBuilder {
        if self == ModelVariant::AutoEncoder {
            return NetworkBuilder::new(&[BLOCK_VOXELS])
                .fully_connected(ENCODER_GROUP, BLOCK_VOXELS, CODE_DIM)
                .leaky_relu(DEFAULT_LEAKY_SLOPE)
                .fully_connected(DECODER_GROUP, CODE_DIM, BLOCK_VOXELS)
                .sigmoid();
        }
        let conv = |name, i, o, k, p| {
            (
                name,
                Conv2dSpec {
                    in_channels: i,
                    out_channels: o,
                    kernel_size: k,
                    stride: 2,
                    padding: p,
                },
            )
        };
        let mut b = NetworkBuilder::new(&[1, DEFAULT_DEPTH_SIZE, DEFAULT_DEPTH_SIZE]);
        for (name, spec) in [
            conv("conv1", 1, 16, 5, 2),
            conv("conv2", 16, 32, 5, 2),
            conv("conv3", 32, 64, 3, 1),
        ] {
            b = b.conv2d(name, spec).leaky_relu(DEFAULT_LEAKY_SLOPE);
        }
        b = b
            .fully_connected("fc1", 64 * 8 * 8, HIDDEN_DIM)
            .leaky_relu(DEFAULT_LEAKY_SLOPE);
        match self {
            ModelVariant::HighResStacked => b
                .fully_connected("fc2", HIDDEN_DIM, NUM_BLOCKS * CODE_DIM)
                .leaky_relu(DEFAULT_LEAKY_SLOPE)
                .fully_connected(DECODER_GROUP, CODE_DIM, BLOCK_VOXELS)
                .sigmoid(),
            _ => b
                .fully_connected(LOW_RES_OUTPUT_GROUP, HIDDEN_DIM, LOW_RESOLUTION.pow(3))
                .sigmoid(),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ModelVariant::HighResStacked,
            ModelVariant::LowResDirect,
            ModelVariant::AutoEncoder,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| format!("unknown model variant `{s}`"))
    }
}

/// Depth-map to occupancy-probability network.
///
/// The stacked variant emits its 27 000 outputs in block order; [`Self::predict`]
/// returns grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionModel {
    variant: ModelVariant,
    net: Network<f32>,
}

impl CompletionModel {
    pub fn new<R: Rng + ?Sized>(variant: ModelVariant, rng: &mut R) -> Result<Self, TrainError> {
        check_completion(variant)?;
        Ok(Self {
            variant,
            net: variant.builder().build(rng)?,
        })
    }

    pub fn zeroed(variant: ModelVariant) -> Result<Self, TrainError> {
        check_completion(variant)?;
        Ok(Self {
            variant,
            net: variant.builder().build_zeroed()?,
        })
    }

    pub(crate) fn from_network(variant: ModelVariant, net: Network<f32>) -> Result<Self, TrainError> {
        check_completion(variant)?;
        Ok(Self { variant, net })
    }

    /// Stacked model whose decoder is copied from a trained auto-encoder.
    pub fn stacked_with_decoder<R: Rng + ?Sized>(
        ae: &AutoEncoder,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        let mut m = Self::new(ModelVariant::HighResStacked, rng)?;
        let (w, b) = ae.decoder_weights();
        let g = m
            .net
            .params_mut()
            .get_mut(DECODER_GROUP)
            .expect("stacked model has a decoder");
        g.weight = w.clone();
        g.bias = b.clone();
        Ok(m)
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn into_network(self) -> Network<f32> {
        self.net
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn output_resolution(&self) -> usize {
        self.variant.output_resolution()
    }

    /// Raw network output for a batch of depth maps, in the network's own order.
    pub fn forward_raw(&self, depths: &[&DepthMap]) -> Result<Tensor<f32>, TrainError> {
        let x = depth_batch(depths)?;
        Ok(self.net.forward(&x)?)
    }

    /// Grid-order probabilities, one `Vec` per depth map.
    pub fn predict_batch(&self, depths: &[&DepthMap]) -> Result<Vec<Vec<f32>>, TrainError> {
        let out = self.forward_raw(depths)?;
        let per = self.output_resolution().pow(3);
        Ok(out
            .data()
            .chunks_exact(per)
            .map(|c| match self.variant {
                ModelVariant::HighResStacked => to_grid_order(c),
                _ => c.to_vec(),
            })
            .collect())
    }

    pub fn predict(&self, depth: &DepthMap) -> Result<Vec<f32>, TrainError> {
        Ok(self.predict_batch(&[depth])?.pop().expect("one output"))
    }
}

fn check_completion(variant: ModelVariant) -> Result<(), TrainError> {
    if variant == ModelVariant::AutoEncoder {
        return Err(TrainError::Variant {
            expected: "a completion model",
            found: variant,
        });
    }
    Ok(())
}

/// Stacks depth maps into a `[B, 1, H, W]` tensor.
pub fn depth_batch(depths: &[&DepthMap]) -> Result<Tensor<f32>, TrainError> {
    let size = DEFAULT_DEPTH_SIZE;
    let mut data = Vec::with_capacity(depths.len() * size * size);
    for d in depths {
        if d.width() != size || d.height() != size {
            return Err(TrainError::Argument(format!(
                "depth maps must be {size}x{size}, got {}x{}",
                d.width(),
                d.height()
            )));
        }
        data.extend_from_slice(d.values());
    }
    Ok(Tensor::from_vec(&[depths.len(), 1, size, size], data)?)
}
