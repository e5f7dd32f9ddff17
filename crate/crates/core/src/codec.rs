//! Sub-region compression of 30^3 grids.
//!
//! A full grid is cut into a 3x3x3 arrangement of 10^3 blocks. Each block
//! is compressed to a 150-dimensional code by one auto-encoder whose weights
//! are shared across all 27 positions, so the stored representation holds
//! `27 * 150 = 4050` values for `27000` voxels.

use rand::Rng;
use thiserror::Error;

use crate::geometry::VoxelGrid;
use crate::nn::{Network, NetworkBuilder, NnError, DEFAULT_LEAKY_SLOPE};
use crate::tensor::Tensor;

pub const FULL_RESOLUTION: usize = 30;
pub const BLOCK_RESOLUTION: usize = 10;
pub const BLOCKS_PER_AXIS: usize = 3;
pub const NUM_BLOCKS: usize = 27;
pub const BLOCK_VOXELS: usize = 1000;
pub const CODE_DIM: usize = 150;

pub const ENCODER_GROUP: &str = "encoder";
pub const DECODER_GROUP: &str = "decoder";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("expected a {expected}^3 grid, got {found}^3")]
    Resolution { expected: usize, found: usize },
    #[error("bad block set: {0}")]
    Shape(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// The 27 blocks of a 30^3 grid, ordered with the x block index slowest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubRegionSet {
    blocks: Vec<VoxelGrid>,
}

impl SubRegionSet {
    pub fn from_blocks(blocks: Vec<VoxelGrid>) -> Result<Self, CodecError> {
        if blocks.len() != NUM_BLOCKS {
            return Err(CodecError::Shape(format!(
                "{} blocks, expected {NUM_BLOCKS}",
                blocks.len()
            )));
        }
        if let Some(b) = blocks.iter().find(|b| b.resolution() != BLOCK_RESOLUTION) {
            return Err(CodecError::Shape(format!(
                "block of resolution {}, expected {BLOCK_RESOLUTION}",
                b.resolution()
            )));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[VoxelGrid] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<VoxelGrid> {
        self.blocks
    }

    pub fn occupied_count(&self) -> usize {
        self.blocks.iter().map(VoxelGrid::occupied_count).sum()
    }
}

/// Position of block `b` (in partition order) as `(bi, bj, bk)`.
pub fn block_coords(b: usize) -> (usize, usize, usize) {
    (b / 9, (b / 3) % 3, b % 3)
}

/// Flat grid index of local voxel `l` inside block `b`.
#[inline]
fn grid_index(b: usize, l: usize) -> usize {
    let (bi, bj, bk) = block_coords(b);
    let (li, lj, lk) = (l / 100, (l / 10) % 10, l % 10);
    let (gi, gj, gk) = (
        BLOCK_RESOLUTION * bi + li,
        BLOCK_RESOLUTION * bj + lj,
        BLOCK_RESOLUTION * bk + lk,
    );
    (gi * FULL_RESOLUTION + gj) * FULL_RESOLUTION + gk
}

pub fn partition(grid: &VoxelGrid) -> Result<SubRegionSet, CodecError> {
    if grid.resolution() != FULL_RESOLUTION {
        return Err(CodecError::Resolution {
            expected: FULL_RESOLUTION,
            found: grid.resolution(),
        });
    }
    let occ = grid.occupancy();
    let blocks = (0..NUM_BLOCKS)
        .map(|b| {
            let local = (0..BLOCK_VOXELS).map(|l| occ[grid_index(b, l)]).collect();
            VoxelGrid::from_occupancy(BLOCK_RESOLUTION, local).expect("block size")
        })
        .collect();
    Ok(SubRegionSet { blocks })
}

pub fn assemble(set: &SubRegionSet) -> Result<VoxelGrid, CodecError> {
    // Re-validate: the set may have been assembled by hand.
    let set = SubRegionSet::from_blocks(set.blocks.clone())?;
    let mut occ = vec![false; FULL_RESOLUTION.pow(3)];
    for (b, block) in set.blocks.iter().enumerate() {
        for (l, &v) in block.occupancy().iter().enumerate() {
            occ[grid_index(b, l)] = v;
        }
    }
    Ok(VoxelGrid::from_occupancy(FULL_RESOLUTION, occ).expect("grid size"))
}

/// Reorders per-voxel values from grid order into block order.
pub fn to_block_order<T: Copy>(grid_values: &[T]) -> Vec<T> {
    assert_eq!(grid_values.len(), NUM_BLOCKS * BLOCK_VOXELS);
    (0..NUM_BLOCKS)
        .flat_map(|b| (0..BLOCK_VOXELS).map(move |l| grid_values[grid_index(b, l)]))
        .collect()
}

/// Inverse of [`to_block_order`].
pub fn to_grid_order<T: Copy + Default>(block_values: &[T]) -> Vec<T> {
    assert_eq!(block_values.len(), NUM_BLOCKS * BLOCK_VOXELS);
    let mut out = vec![T::default(); block_values.len()];
    for (idx, &v) in block_values.iter().enumerate() {
        out[grid_index(idx / BLOCK_VOXELS, idx % BLOCK_VOXELS)] = v;
    }
    out
}

/// Stored fraction of the voxel count for a given code size.
pub fn compression_ratio(code_dim: usize) -> f64 {
    (NUM_BLOCKS * code_dim) as f64 / (NUM_BLOCKS * BLOCK_VOXELS) as f64
}

/// Shared-weight block auto-encoder: `1000 -> 150` (leaky ReLU) and
/// `150 -> 1000` (sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder {
    net: Network<f32>,
}

impl AutoEncoder {
    fn builder() -> NetworkBuilder {
        NetworkBuilder::new(&[BLOCK_VOXELS])
            .fully_connected(ENCODER_GROUP, BLOCK_VOXELS, CODE_DIM)
            .leaky_relu(DEFAULT_LEAKY_SLOPE)
            .fully_connected(DECODER_GROUP, CODE_DIM, BLOCK_VOXELS)
            .sigmoid()
    }

    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            net: Self::builder().build(rng).expect("static architecture"),
        }
    }

    pub fn zeroed() -> Self {
        Self {
            net: Self::builder().build_zeroed().expect("static architecture"),
        }
    }

    /// Wraps a network after checking it has the auto-encoder architecture.
    pub fn from_network(net: Network<f32>) -> Result<Self, CodecError> {
        let reference = Self::zeroed();
        let same_layers = net.specs().eq(reference.net.specs())
            && net.input_shape() == reference.net.input_shape();
        let same_groups = net.params().groups().len() == reference.net.params().groups().len()
            && net
                .params()
                .groups()
                .iter()
                .zip(reference.net.params().groups())
                .all(|(a, b)| {
                    a.name == b.name
                        && a.weight.shape() == b.weight.shape()
                        && a.bias.shape() == b.bias.shape()
                });
        if !(same_layers && same_groups) {
            return Err(CodecError::Shape(
                "network is not a 1000-150-1000 auto-encoder".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn encoder_param_count(&self) -> usize {
        self.net.params().get(ENCODER_GROUP).map_or(0, |g| g.numel())
    }

    pub fn decoder_param_count(&self) -> usize {
        self.net.params().get(DECODER_GROUP).map_or(0, |g| g.numel())
    }

    fn group(&self, name: &str) -> (&Tensor<f32>, &Tensor<f32>) {
        let g = self.net.params().get(name).expect("fixed groups");
        (&g.weight, &g.bias)
    }

    pub fn decoder_weights(&self) -> (&Tensor<f32>, &Tensor<f32>) {
        self.group(DECODER_GROUP)
    }

    /// `leaky_relu(W_enc x + b_enc)` for each 1000-value block in `blocks`.
    pub fn encode(&self, blocks: &[f32]) -> Result<Vec<f32>, CodecError> {
        let (w, b) = self.group(ENCODER_GROUP);
        run_fc(blocks, BLOCK_VOXELS, w, b, |z| {
            if z > 0.0 {
                z
            } else {
                DEFAULT_LEAKY_SLOPE as f32 * z
            }
        })
    }

    /// `sigmoid(W_dec c + b_dec)` for each 150-value code in `codes`.
    pub fn decode(&self, codes: &[f32]) -> Result<Vec<f32>, CodecError> {
        let (w, b) = self.group(DECODER_GROUP);
        let probs = run_fc(codes, CODE_DIM, w, b, |z| z)?;
        let t = Tensor::from_vec(&[probs.len()], probs)?;
        Ok(crate::nn::sigmoid(&t).into_data())
    }

    /// Round trip through code space.
    pub fn reconstruct(&self, blocks: &[f32]) -> Result<Vec<f32>, CodecError> {
        self.decode(&self.encode(blocks)?)
    }
}

fn run_fc(
    x: &[f32],
    in_dim: usize,
    w: &Tensor<f32>,
    b: &Tensor<f32>,
    act: impl Fn(f32) -> f32,
) -> Result<Vec<f32>, CodecError> {
    if x.is_empty() || !x.len().is_multiple_of(in_dim) {
        return Err(NnError::Dimension {
            op: "codec",
            axis: "in_dim",
            expected: in_dim,
            found: x.len(),
        }
        .into());
    }
    let xt = Tensor::from_vec(&[x.len() / in_dim, in_dim], x.to_vec())?;
    let y = crate::nn::fc_forward(&xt, w, b)?;
    Ok(y.into_data().into_iter().map(act).collect())
}

pub fn encode_block(block: &VoxelGrid, ae: &AutoEncoder) -> Result<Vec<f32>, CodecError> {
    if block.resolution() != BLOCK_RESOLUTION {
        return Err(CodecError::Resolution {
            expected: BLOCK_RESOLUTION,
            found: block.resolution(),
        });
    }
    ae.encode(&block.to_values::<f32>())
}

pub fn decode_block(code: &[f32], ae: &AutoEncoder) -> Result<Vec<f32>, CodecError> {
    if code.len() != CODE_DIM {
        return Err(NnError::Dimension {
            op: "decode_block",
            axis: "code_dim",
            expected: CODE_DIM,
            found: code.len(),
        }
        .into());
    }
    ae.decode(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_grid(seed: u64, p: f64) -> VoxelGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let occ = (0..27000).map(|_| rng.gen_bool(p)).collect();
        VoxelGrid::from_occupancy(30, occ).unwrap()
    }

    #[test]
    fn single_voxel_lands_in_expected_block() {
        let mut g = VoxelGrid::empty(30);
        g.set(12, 17, 29, true);
        let set = partition(&g).unwrap();
        for (b, block) in set.blocks().iter().enumerate() {
            if block_coords(b) == (1, 1, 2) {
                assert_eq!(block.occupied_count(), 1);
                assert!(block.get(2, 7, 9));
            } else {
                assert_eq!(block.occupied_count(), 0);
            }
        }
    }

    #[test]
    fn round_trip_and_conservation() {
        let g = random_grid(3, 0.2);
        let set = partition(&g).unwrap();
        assert_eq!(set.occupied_count(), g.occupied_count());
        assert_eq!(assemble(&set).unwrap(), g);
        assert_eq!(partition(&assemble(&set).unwrap()).unwrap(), set);
    }

    #[test]
    fn empty_and_full_grids() {
        let set = partition(&VoxelGrid::empty(30)).unwrap();
        assert!(set.blocks().iter().all(|b| b.occupied_count() == 0));
        let full = SubRegionSet::from_blocks(
            (0..27)
                .map(|_| VoxelGrid::from_occupancy(10, vec![true; 1000]).unwrap())
                .collect(),
        )
        .unwrap();
        assert_eq!(assemble(&full).unwrap().occupied_count(), 27000);
    }

    #[test]
    fn wrong_resolution_and_shape() {
        assert_eq!(
            partition(&VoxelGrid::empty(10)).unwrap_err(),
            CodecError::Resolution {
                expected: 30,
                found: 10
            }
        );
        let few = (0..26).map(|_| VoxelGrid::empty(10)).collect();
        assert!(matches!(
            SubRegionSet::from_blocks(few),
            Err(CodecError::Shape(_))
        ));
        let mut wrong: Vec<VoxelGrid> = (0..27).map(|_| VoxelGrid::empty(10)).collect();
        wrong[4] = VoxelGrid::empty(9);
        assert!(SubRegionSet::from_blocks(wrong).is_err());
    }

    #[test]
    fn value_reordering_matches_partition() {
        let g = random_grid(5, 0.3);
        let blocks: Vec<u8> = to_block_order(&g.to_values::<u8>());
        let expect: Vec<u8> = partition(&g)
            .unwrap()
            .blocks()
            .iter()
            .flat_map(|b| b.to_values::<u8>())
            .collect();
        assert_eq!(blocks, expect);
        assert_eq!(to_grid_order(&blocks), g.to_values::<u8>());
    }

    #[test]
    fn compression_ratios() {
        assert_eq!(compression_ratio(150), 0.15);
        assert_eq!(compression_ratio(1000), 1.0);
        assert_eq!(compression_ratio(1), 0.001);
    }

    #[test]
    fn autoencoder_shapes_and_zero_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ae = AutoEncoder::new(&mut rng);
        assert_eq!(ae.encoder_param_count(), 150_150);
        assert_eq!(ae.decoder_param_count(), 151_000);
        for g in ae.network_mut().params_mut().groups_mut() {
            g.bias = Tensor::from_fn(g.bias.shape(), |i| (i as f32 * 0.7).sin());
        }
        let code = encode_block(&VoxelGrid::empty(10), &ae).unwrap();
        assert_eq!(code.len(), 150);
        let (_, b_enc) = ae.group(ENCODER_GROUP);
        for (c, &b) in code.iter().zip(b_enc.data()) {
            let want = if b > 0.0 { b } else { 0.01 * b };
            assert!((c - want).abs() < 1e-7);
        }
        let probs = decode_block(&[0.0; 150], &ae).unwrap();
        assert_eq!(probs.len(), 1000);
        let (_, b_dec) = ae.decoder_weights();
        for (p, &b) in probs.iter().zip(b_dec.data()) {
            assert!((p - 1.0 / (1.0 + (-b).exp())).abs() < 1e-6);
        }
        let g = random_grid(1, 0.1);
        let set = partition(&g).unwrap();
        let c1 = encode_block(&set.blocks()[4], &ae).unwrap();
        let c2 = encode_block(&set.blocks()[4].clone(), &ae).unwrap();
        assert_eq!(c1, c2);
        assert!(decode_block(&[0.0; 149], &ae).is_err());
    }

    #[test]
    fn decoding_is_equivariant_under_block_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ae = AutoEncoder::new(&mut rng);
        let codes: Vec<f32> = (0..27 * 150).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let decoded = ae.decode(&codes).unwrap();
        let perm: Vec<usize> = (0..27).rev().collect();
        let permuted: Vec<f32> = perm
            .iter()
            .flat_map(|&b| codes[b * 150..(b + 1) * 150].to_vec())
            .collect();
        let decoded_perm = ae.decode(&permuted).unwrap();
        for (slot, &b) in perm.iter().enumerate() {
            assert_eq!(
                &decoded_perm[slot * 1000..(slot + 1) * 1000],
                &decoded[b * 1000..(b + 1) * 1000]
            );
        }
    }
}
