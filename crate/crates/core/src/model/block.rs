use super::{Bound, ModelError, Sampling, StageConfig};
use crate::engine::{ReduceKind, Tape, Tensor, Var};
use crate::geometry::{farthest_cosine_sampling, farthest_point_sampling, knn, CosineDenominator, Metric, NeighborIndex, Rows, StartRule};

/// Two linear layers with a ReLU between them.
#[derive(Clone, Copy, Debug)]
pub struct MlpParams {
    pub l1_weight: Var,
    pub l1_bias: Var,
    pub l2_weight: Var,
    pub l2_bias: Var,
}

impl MlpParams {
    pub fn bind(params: &Bound, prefix: &str) -> Result<Self, ModelError> {
        Ok(Self {
            l1_weight: params.var(&format!("{prefix}.l1.weight"))?,
            l1_bias: params.var(&format!("{prefix}.l1.bias"))?,
            l2_weight: params.var(&format!("{prefix}.l2.weight"))?,
            l2_bias: params.var(&format!("{prefix}.l2.bias"))?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        let h = tape.linear(x, self.l1_weight, Some(self.l1_bias))?;
        let h = tape.relu(h)?;
        Ok(tape.linear(h, self.l2_weight, Some(self.l2_bias))?)
    }
}

/// Square maps of one vector-attention block plus its position MLP.
#[derive(Clone, Copy, Debug)]
pub struct BlockParams {
    pub w_i: Var,
    pub w_j: Var,
    pub w_q: Var,
    pub w_v: Var,
    pub w_z: Var,
    pub pe: MlpParams,
}

impl BlockParams {
    pub fn bind(params: &Bound, stage: usize) -> Result<Self, ModelError> {
        let p = |n: &str| params.var(&format!("stage{stage}.attn.{n}"));
        Ok(Self {
            w_i: p("w_i")?,
            w_j: p("w_j")?,
            w_q: p("w_q")?,
            w_v: p("w_v")?,
            w_z: p("w_z")?,
            pe: MlpParams::bind(params, &format!("stage{stage}.attn.pe"))?,
        })
    }
}

/// `MLP(p_i - p_j)` applied to a `[.., 3]` tensor of position differences.
pub fn position_encoding(tape: &mut Tape, rel: Tensor, pe: &MlpParams) -> Result<Var, ModelError> {
    let r = tape.constant(rel)?;
    pe.apply(tape, r)
}

#[derive(Clone, Copy, Debug)]
pub struct BlockOutput {
    pub y: Var,
    /// Softmax weights, `[n, k, c]`; each `(i, channel)` column sums to one.
    pub attention: Var,
}

/// Vector self-attention over each point's neighbor list:
///
/// ```text
/// a_ij = W_q (W_i x_i - W_j x_j) + PE(p_i, p_j)
/// z_i  = sum_j softmax_j(a_ij) * (W_v x_j + PE(p_i, p_j))
/// y_i  = x_i + W_z z_i
/// ```
///
/// `W_q` is linear, so it is applied once per point to `W_i x` and `W_j x`
/// and the difference is taken after gathering.
pub fn transformer_block(
    tape: &mut Tape,
    x: Var,
    positions: &[f64],
    neighbors: &NeighborIndex,
    params: &BlockParams,
) -> Result<BlockOutput, ModelError> {
    let n = tape.shape(x)[0];
    if neighbors.len() != n || positions.len() != 3 * n {
        return Err(ModelError::Config(format!(
            "transformer block on {n} points got {} neighbor rows and {} positions",
            neighbors.len(),
            positions.len() / 3
        )));
    }
    let k = neighbors.k;
    let u = tape.linear(x, params.w_i, None)?;
    let v = tape.linear(x, params.w_j, None)?;
    let qu = tape.linear(u, params.w_q, None)?;
    let qv = tape.linear(v, params.w_q, None)?;
    let centers = neighbors.center_rows();
    let qu = tape.gather(qu, &centers, &[n, k])?;
    let qv = tape.gather(qv, &neighbors.neighbors, &[n, k])?;

    let mut rel = Vec::with_capacity(n * k * 3);
    for (&i, &j) in centers.iter().zip(&neighbors.neighbors) {
        for d in 0..3 {
            rel.push(positions[3 * i + d] - positions[3 * j + d]);
        }
    }
    let pe = position_encoding(tape, Tensor::new(vec![n, k, 3], rel)?, &params.pe)?;

    let scores = tape.sub(qu, qv)?;
    let scores = tape.add(scores, pe)?;
    let attention = tape.softmax(scores, 1)?;

    let values = tape.linear(x, params.w_v, None)?;
    let values = tape.gather(values, &neighbors.neighbors, &[n, k])?;
    let values = tape.add(values, pe)?;
    let weighted = tape.mul(attention, values)?;
    let z = tape.reduce(weighted, ReduceKind::Sum, 1)?;
    let update = tape.linear(z, params.w_z, None)?;
    let y = tape.add(x, update)?;
    Ok(BlockOutput { y, attention })
}

#[derive(Clone, Debug)]
pub struct StageOutput {
    /// `[in_points / 4, out_channels]`.
    pub features: Var,
    /// Positions of the kept points, row-major `(px, py, 1)`.
    pub positions: Vec<f64>,
    /// Kept point indices in selection order.
    pub centers: Vec<usize>,
    pub groups: NeighborIndex,
}

/// Keeps a quarter of the points and max-pools an MLP over the Euclidean
/// neighborhood of each kept point.
pub fn abstraction_block(
    tape: &mut Tape,
    x: Var,
    positions: &[f64],
    stage: &StageConfig,
    mlp: &MlpParams,
    sampling: Sampling,
    denominator: CosineDenominator,
) -> Result<StageOutput, ModelError> {
    let n = tape.shape(x)[0];
    if n < 4 || !n.is_multiple_of(4) {
        return Err(ModelError::StagePoints(n));
    }
    let m = n / 4;
    let pos_rows = Rows::new(positions, 3)?;
    let centers = match sampling {
        Sampling::Fcs => {
            let width = tape.shape(x)[1];
            let feats = Rows::new(tape.value(x).data(), width)?;
            farthest_cosine_sampling(feats, m, StartRule::FarthestFromCentroid, denominator)?
        }
        Sampling::Fps => farthest_point_sampling(pos_rows, m)?,
    };
    let k = stage.k_grouping.min(n);
    let groups = knn(pos_rows, &centers, k, Metric::Euclidean)?;
    let h = mlp.apply(tape, x)?;
    let gathered = tape.gather(h, &groups.neighbors, &[m, k])?;
    let features = tape.reduce(gathered, ReduceKind::Max, 1)?;
    let positions = centers.iter().flat_map(|&c| positions[3 * c..3 * c + 3].to_vec()).collect();
    Ok(StageOutput { features, positions, centers, groups })
}
