//! Row-sparse AdamW.
//!
//! Gradient rows that share an index inside a batch are summed first
//! ([`RowGrads::accumulate`]); the optimizer then touches only those rows.
//! Each row keeps its own step counter for bias correction, so a row's
//! update depends only on the batches that indexed it.

use crate::gcp::{Batch, FactorModel, GradSlices};
use crate::matrix::Matrix;
use crate::real::Real;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamW {
    /// One update of a single row. Returns the first column that became
    /// non-finite, leaving the moments updated.
    pub fn step_row<T: Real>(
        &self,
        lr: f64,
        param: &mut [T],
        m: &mut [T],
        v: &mut [T],
        step: &mut u32,
        grad: &[f64],
    ) -> Result<(), usize> {
        *step += 1;
        let t = *step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut bad = None;
        for k in 0..grad.len() {
            let g = grad[k];
            let mk = self.beta1 * m[k].to_f64() + (1.0 - self.beta1) * g;
            let vk = self.beta2 * v[k].to_f64() + (1.0 - self.beta2) * g * g;
            m[k] = T::from_f64(mk);
            v[k] = T::from_f64(vk);
            let theta = param[k].to_f64();
            let m_hat = mk / bc1;
            let v_hat = vk / bc2;
            let next = theta - lr * (m_hat / (v_hat.sqrt() + self.epsilon) + self.weight_decay * theta);
            param[k] = T::from_f64(next);
            if bad.is_none() && !param[k].is_finite() {
                bad = Some(k);
            }
        }
        bad.map_or(Ok(()), Err)
    }
}

/// First/second moments shaped like the factors, plus per-row step counts.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub entity_m: Matrix<T>,
    pub entity_v: Matrix<T>,
    pub relation_m: Matrix<T>,
    pub relation_v: Matrix<T>,
    pub entity_steps: Vec<u32>,
    pub relation_steps: Vec<u32>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(n_e: usize, n_r: usize, rank: usize) -> Self {
        Self {
            entity_m: Matrix::zeros(n_e, rank),
            entity_v: Matrix::zeros(n_e, rank),
            relation_m: Matrix::zeros(n_r, rank),
            relation_v: Matrix::zeros(n_r, rank),
            entity_steps: vec![0; n_e],
            relation_steps: vec![0; n_r],
        }
    }
}

/// Batch gradients reduced to one row per distinct index.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrads {
    pub rank: usize,
    /// Distinct entity rows, ascending.
    pub entity_rows: Vec<u32>,
    /// `entity_rows.len() × rank`, row-major.
    pub entity_grads: Vec<f64>,
    pub relation_rows: Vec<u32>,
    pub relation_grads: Vec<f64>,
}

/// Sorts contribution indices by row and sums each run. Output capacity is
/// sized from the contribution count, not from the number of distinct rows,
/// so the request size depends only on the batch shape.
fn reduce_rows<'g>(
    rank: usize,
    n: usize,
    row_of: impl Fn(usize) -> u32,
    grad_of: impl Fn(usize) -> &'g [f64],
) -> (Vec<u32>, Vec<f64>) {
    let mut order: Vec<(u32, u32)> = (0..n).map(|i| (row_of(i), i as u32)).collect();
    order.sort_unstable();
    let mut rows = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n * rank);
    let mut i = 0;
    while i < order.len() {
        let row = order[i].0;
        let start = grads.len();
        grads.extend_from_slice(grad_of(order[i].1 as usize));
        i += 1;
        while i < order.len() && order[i].0 == row {
            let g = grad_of(order[i].1 as usize);
            for (acc, v) in grads[start..].iter_mut().zip(g) {
                *acc += v;
            }
            i += 1;
        }
        rows.push(row);
    }
    (rows, grads)
}

impl RowGrads {
    /// Sums subject-role and object-role rows on the shared entity matrix,
    /// and relation rows on the relation matrix. Within a row, contributions
    /// are added in batch order, subject roles before object roles.
    pub fn accumulate(batch: &Batch, grads: &GradSlices) -> Self {
        let rank = grads.rank;
        let l = batch.len();
        let (entity_rows, entity_grads) = reduce_rows(
            rank,
            2 * l,
            |i| {
                if i < l {
                    batch.subjects[i].0
                } else {
                    batch.objects[i - l].0
                }
            },
            |i| if i < l { grads.a_row(i) } else { grads.c_row(i - l) },
        );
        let (relation_rows, relation_grads) =
            reduce_rows(rank, l, |i| batch.relations[i].0, |i| grads.b_row(i));
        Self {
            rank,
            entity_rows,
            entity_grads,
            relation_rows,
            relation_grads,
        }
    }

    pub fn entity_grad(&self, j: usize) -> &[f64] {
        &self.entity_grads[j * self.rank..(j + 1) * self.rank]
    }

    pub fn relation_grad(&self, j: usize) -> &[f64] {
        &self.relation_grads[j * self.rank..(j + 1) * self.rank]
    }

    pub fn heap_bytes(&self) -> usize {
        (self.entity_rows.capacity() + self.relation_rows.capacity()) * size_of::<u32>()
            + (self.entity_grads.capacity() + self.relation_grads.capacity()) * size_of::<f64>()
    }
}

/// Accumulates the batch gradients per row and applies one AdamW step to
/// every touched row of `A` and `B`. Untouched rows and their moments are
/// not read or written.
pub fn apply_update<T: Real>(
    model: &mut FactorModel<T>,
    state: &mut OptimizerState<T>,
    batch: &Batch,
    grads: &GradSlices,
    lr: f64,
    adam: &AdamW,
) -> Result<RowGrads, TrainError> {
    let per_role = grads.g_a.len().max(1);
    if let Some(p) = grads
        .g_a
        .iter()
        .chain(&grads.g_b)
        .chain(&grads.g_c)
        .position(|v| !v.is_finite())
    {
        return Err(TrainError::NonFiniteGradient {
            entry: (p % per_role) / grads.rank.max(1),
        });
    }
    let acc = RowGrads::accumulate(batch, grads);
    apply_row_grads(model, state, &acc, lr, adam)?;
    Ok(acc)
}

/// Optimizer half of [`apply_update`].
pub fn apply_row_grads<T: Real>(
    model: &mut FactorModel<T>,
    state: &mut OptimizerState<T>,
    acc: &RowGrads,
    lr: f64,
    adam: &AdamW,
) -> Result<(), TrainError> {
    for (j, &row) in acc.entity_rows.iter().enumerate() {
        let r = row as usize;
        adam.step_row(
            lr,
            model.entities.row_mut(r),
            state.entity_m.row_mut(r),
            state.entity_v.row_mut(r),
            &mut state.entity_steps[r],
            acc.entity_grad(j),
        )
        .map_err(|col| TrainError::NonFiniteParameter {
            matrix: "entity",
            row,
            col,
        })?;
    }
    for (j, &row) in acc.relation_rows.iter().enumerate() {
        let r = row as usize;
        adam.step_row(
            lr,
            model.relations.row_mut(r),
            state.relation_m.row_mut(r),
            state.relation_v.row_mut(r),
            &mut state.relation_steps[r],
            acc.relation_grad(j),
        )
        .map_err(|col| TrainError::NonFiniteParameter {
            matrix: "relation",
            row,
            col,
        })?;
    }
    Ok(())
}
