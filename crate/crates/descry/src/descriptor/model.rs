//! Model parameters, forward pass, and the exact backward pass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::imaging::{Keypoint, PatchTensor};

use super::DescriptorError;

/// Weights of the two-layer embedding `y = W2 tanh(W1 x + b1) + b2`,
/// row-major, with the descriptor being `y / |y|`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub patch_side: usize,
    pub hidden: usize,
    pub dim: usize,
    /// `hidden x patch_side^2`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `dim x hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ModelParams {
    pub fn input_len(&self) -> usize {
        self.patch_side * self.patch_side
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Unit-norm descriptors for one crop, with the keypoints they came from.
#[derive(Clone, Debug)]
pub struct DescriptorSet {
    dim: usize,
    rows: Vec<f64>,
    keypoints: Vec<Keypoint>,
    image_id: u32,
}

impl DescriptorSet {
    pub fn new(dim: usize, rows: Vec<f64>, keypoints: Vec<Keypoint>, image_id: u32) -> Self {
        assert_eq!(rows.len(), dim * keypoints.len());
        Self {
            dim,
            rows,
            keypoints,
            image_id,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.keypoints.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn image_id(&self) -> u32 {
        self.image_id
    }
}

/// Intermediate activations of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub count: usize,
    /// `count x input_len` flattened patches.
    pub inputs: Vec<f64>,
    /// Pre-activations `W1 x + b1`.
    pub z1: Vec<f64>,
    /// `tanh(z1)`.
    pub a1: Vec<f64>,
    /// Pre-normalization outputs `W2 a1 + b2`.
    pub y: Vec<f64>,
    /// Euclidean norms of `y`, all above the collapse floor.
    pub norms: Vec<f64>,
}

/// Parameter gradients, same shapes as [`ModelParams`].
#[derive(Clone, Debug)]
pub struct GradBuffer {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }
}

const NORM_FLOOR: f64 = 1e-12;

/// Xavier-uniform initialization: weights uniform in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(...)]`, biases zero. Draw order is W1
/// row-major then W2 row-major, so a seed pins every weight.
pub fn init_params(
    patch_side: usize,
    hidden: usize,
    dim: usize,
    seed: u64,
) -> Result<ModelParams, DescriptorError> {
    if !matches!(patch_side, 8 | 16 | 32) {
        return Err(DescriptorError::BadPatchSide(patch_side));
    }
    if dim < 8 {
        return Err(DescriptorError::DimTooSmall(dim));
    }
    if hidden < dim {
        return Err(DescriptorError::HiddenTooSmall { hidden, dim });
    }
    let input_len = patch_side * patch_side;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let bound1 = (6.0 / (input_len + hidden) as f64).sqrt();
    let mut w1 = Vec::with_capacity(hidden * input_len);
    for _ in 0..hidden * input_len {
        w1.push(rng.random_range(-bound1..=bound1));
    }
    let bound2 = (6.0 / (hidden + dim) as f64).sqrt();
    let mut w2 = Vec::with_capacity(dim * hidden);
    for _ in 0..dim * hidden {
        w2.push(rng.random_range(-bound2..=bound2));
    }
    Ok(ModelParams {
        patch_side,
        hidden,
        dim,
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: vec![0.0; dim],
    })
}

struct RowOutput {
    z1: Vec<f64>,
    a1: Vec<f64>,
    y: Vec<f64>,
    norm: f64,
    desc: Vec<f64>,
}

fn embed_row(params: &ModelParams, input: &[f64]) -> Result<RowOutput, f64> {
    let (hidden, dim, in_len) = (params.hidden, params.dim, params.input_len());
    let mut z1 = Vec::with_capacity(hidden);
    for r in 0..hidden {
        let wrow = &params.w1[r * in_len..(r + 1) * in_len];
        let mut acc = params.b1[r];
        for (w, x) in wrow.iter().zip(input) {
            acc += w * x;
        }
        z1.push(acc);
    }
    let a1: Vec<f64> = z1.iter().map(|v| v.tanh()).collect();
    let mut y = Vec::with_capacity(dim);
    for r in 0..dim {
        let wrow = &params.w2[r * hidden..(r + 1) * hidden];
        let mut acc = params.b2[r];
        for (w, a) in wrow.iter().zip(&a1) {
            acc += w * a;
        }
        y.push(acc);
    }
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < NORM_FLOOR {
        return Err(norm);
    }
    let desc = y.iter().map(|v| v / norm).collect();
    Ok(RowOutput {
        z1,
        a1,
        y,
        norm,
        desc,
    })
}

/// Embeds a batch of patches into a flat `count x dim` descriptor matrix
/// plus the cache the backward pass needs. Rows are independent, so the
/// batch is mapped in parallel; outputs are position-stable and therefore
/// identical whatever the thread count.
pub fn forward_rows(
    params: &ModelParams,
    patches: &[PatchTensor],
) -> Result<(Vec<f64>, ForwardCache), DescriptorError> {
    let in_len = params.input_len();
    for (index, p) in patches.iter().enumerate() {
        if p.side() != params.patch_side {
            return Err(DescriptorError::PatchSideMismatch {
                index,
                got: p.side(),
                want: params.patch_side,
            });
        }
    }
    let results: Vec<Result<RowOutput, (usize, f64)>> = patches
        .par_iter()
        .enumerate()
        .map(|(i, p)| embed_row(params, p.values()).map_err(|norm| (i, norm)))
        .collect();

    let n = patches.len();
    let mut cache = ForwardCache {
        count: n,
        inputs: Vec::with_capacity(n * in_len),
        z1: Vec::with_capacity(n * params.hidden),
        a1: Vec::with_capacity(n * params.hidden),
        y: Vec::with_capacity(n * params.dim),
        norms: Vec::with_capacity(n),
    };
    let mut rows = Vec::with_capacity(n * params.dim);
    for (i, res) in results.into_iter().enumerate() {
        let out = res.map_err(|(index, norm)| DescriptorError::DegenerateEmbedding {
            index,
            norm,
        })?;
        cache.inputs.extend_from_slice(patches[i].values());
        cache.z1.extend(out.z1);
        cache.a1.extend(out.a1);
        cache.y.extend(out.y);
        cache.norms.push(out.norm);
        rows.extend(out.desc);
    }
    Ok((rows, cache))
}

/// Embeds the patches of one crop into a [`DescriptorSet`] carrying its
/// keypoints and source image id.
pub fn forward(
    params: &ModelParams,
    patches: &[PatchTensor],
    keypoints: &[Keypoint],
    image_id: u32,
) -> Result<(DescriptorSet, ForwardCache), DescriptorError> {
    if keypoints.len() != patches.len() {
        return Err(DescriptorError::ProvenanceMismatch {
            got: keypoints.len(),
            want: patches.len(),
        });
    }
    let (rows, cache) = forward_rows(params, patches)?;
    Ok((
        DescriptorSet::new(params.dim, rows, keypoints.to_vec(), image_id),
        cache,
    ))
}

/// Accumulates parameter gradients for `d loss / d descriptors`.
///
/// Per row with unit descriptor `u = y/|y|`, the normalization Jacobian
/// gives `g_y = (g_u - (g_u . u) u) / |y|`; the rest is the ordinary affine
/// and tanh chain rule. Rows are processed in fixed 64-row chunks that are
/// summed in chunk order, so results do not depend on the thread count.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    grad_rows: &[f64],
) -> Result<GradBuffer, DescriptorError> {
    let (hidden, dim, in_len) = (params.hidden, params.dim, params.input_len());
    let n = cache.count;
    if grad_rows.len() != n * dim {
        return Err(DescriptorError::GradShapeMismatch {
            got: grad_rows.len(),
            want: n * dim,
        });
    }
    if cache.inputs.len() != n * in_len
        || cache.a1.len() != n * hidden
        || cache.y.len() != n * dim
        || cache.norms.len() != n
    {
        return Err(DescriptorError::CacheMismatch(
            "activation shapes disagree with the parameter shapes",
        ));
    }

    const CHUNK: usize = 64;
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partials: Vec<GradBuffer> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(n);
            let mut g = GradBuffer::zeros_like(params);
            let mut g_y = vec![0.0; dim];
            let mut g_a1 = vec![0.0; hidden];
            for i in start..end {
                let y = &cache.y[i * dim..(i + 1) * dim];
                let a1 = &cache.a1[i * hidden..(i + 1) * hidden];
                let x = &cache.inputs[i * in_len..(i + 1) * in_len];
                let norm = cache.norms[i];
                let g_u = &grad_rows[i * dim..(i + 1) * dim];

                let mut dot = 0.0;
                for k in 0..dim {
                    dot += g_u[k] * y[k] / norm;
                }
                for k in 0..dim {
                    g_y[k] = (g_u[k] - dot * y[k] / norm) / norm;
                }

                for k in 0..dim {
                    g.b2[k] += g_y[k];
                    let wrow = &mut g.w2[k * hidden..(k + 1) * hidden];
                    for (j, a) in a1.iter().enumerate() {
                        wrow[j] += g_y[k] * a;
                    }
                }
                for (j, ga) in g_a1.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in 0..dim {
                        acc += params.w2[k * hidden + j] * g_y[k];
                    }
                    *ga = acc;
                }
                for j in 0..hidden {
                    let g_z = g_a1[j] * (1.0 - a1[j] * a1[j]);
                    g.b1[j] += g_z;
                    let wrow = &mut g.w1[j * in_len..(j + 1) * in_len];
                    for (m, xv) in x.iter().enumerate() {
                        wrow[m] += g_z * xv;
                    }
                }
            }
            g
        })
        .collect();

    let mut total = GradBuffer::zeros_like(params);
    for p in partials {
        add_into(&mut total.w1, &p.w1);
        add_into(&mut total.b1, &p.b1);
        add_into(&mut total.w2, &p.w2);
        add_into(&mut total.b2, &p.b2);
    }
    Ok(total)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
