//! Slow, independent reference implementations used to check the fast paths.
//!
//! Nothing here shares arithmetic with the training or evaluation kernels
//! beyond the elementwise loss functions: gradients are formed by dense
//! unfoldings and Khatri-Rao products, finite differences perturb one
//! parameter at a time, and the brute-force evaluator scores candidates one
//! triple at a time and sorts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::eval::{Directions, EvalReport, Setting};
use crate::gcp::{gcp_grad, predict_entry, Batch, BatchRows, FactorModel, LossFamily};
use crate::matrix::Matrix;
use crate::store::{EntityId, Triple, TripleStore};
use crate::trainer::RowGrads;

/// Dense `I × J × K` tensor, index `(i·J + j)·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Dense3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn add(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] += v;
    }

    /// Mode-`n` unfolding. The remaining two indices form the column in
    /// their natural order, the earlier one varying slowest:
    /// mode 0 → column `j·K + k`, mode 1 → `i·K + k`, mode 2 → `i·J + j`.
    pub fn unfold(&self, mode: usize) -> Matrix<f64> {
        let [ni, nj, nk] = self.dims;
        match mode {
            0 => Matrix::from_fn(ni, nj * nk, |i, c| self.get(i, c / nk, c % nk)),
            1 => Matrix::from_fn(nj, ni * nk, |j, c| self.get(c / nk, j, c % nk)),
            2 => Matrix::from_fn(nk, ni * nj, |k, c| self.get(c / nj, c % nj, k)),
            _ => panic!("mode {mode} out of range for a 3-way tensor"),
        }
    }
}

/// Khatri-Rao product: row `p·Q + q` is `U[p] ∘ V[q]`.
pub fn khatri_rao(u: &Matrix<f64>, v: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(u.cols(), v.cols(), "Khatri-Rao operands need equal column counts");
    let q = v.rows();
    Matrix::from_fn(u.rows() * q, u.cols(), |row, c| u.get(row / q, c) * v.get(row % q, c))
}

pub fn matmul(x: &Matrix<f64>, y: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(x.cols(), y.rows(), "inner dimensions differ");
    let mut out = Matrix::zeros(x.rows(), y.cols());
    for i in 0..x.rows() {
        for p in 0..x.cols() {
            let a = x.get(i, p);
            if a == 0.0 {
                continue;
            }
            for (o, b) in out.row_mut(i).iter_mut().zip(y.row(p)) {
                *o += a * b;
            }
        }
    }
    out
}

fn add_into(acc: &mut Matrix<f64>, other: &Matrix<f64>) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a += b;
    }
}

/// Dense model tensor `M[s,r,o] = Σ_k A[s,k]·B[r,k]·A[o,k]`, summed in
/// the natural factor order.
pub fn reconstruct(model: &FactorModel<f64>) -> Dense3 {
    let (n_e, n_r) = (model.n_entities(), model.n_relations());
    let mut m = Dense3::zeros([n_e, n_r, n_e]);
    for s in 0..n_e {
        for r in 0..n_r {
            for o in 0..n_e {
                let v = (0..model.rank())
                    .map(|k| model.entities.get(s, k) * model.relations.get(r, k) * model.entities.get(o, k))
                    .sum();
                m.add(s, r, o, v);
            }
        }
    }
    m
}

/// Factor gradients of a shared-entity CP model given a dense derivative
/// tensor `Y`:
///
/// ```text
/// G_A = Y_(0) (B ⊙ A) + Y_(2) (A ⊙ B)
/// G_B = Y_(1) (A ⊙ A)
/// ```
pub fn mttkrp_gradient(y: &Dense3, model: &FactorModel<f64>) -> (Matrix<f64>, Matrix<f64>) {
    let a = &model.entities;
    let b = &model.relations;
    let mut g_a = matmul(&y.unfold(0), &khatri_rao(b, a));
    add_into(&mut g_a, &matmul(&y.unfold(2), &khatri_rao(a, b)));
    let g_b = matmul(&y.unfold(1), &khatri_rao(a, a));
    (g_a, g_b)
}

/// Full-tensor gradient restricted to the observed set: `Y` holds `∂f/∂m`
/// at observed coordinates and zero elsewhere.
pub fn dense_gradient(observed: &Batch, model: &FactorModel<f64>, family: LossFamily) -> (Matrix<f64>, Matrix<f64>) {
    let m = reconstruct(model);
    let mut y = Dense3::zeros(m.dims);
    for (t, x) in observed.iter() {
        let (s, r, o) = (t.subject.index(), t.relation.index(), t.object.index());
        y.add(s, r, o, family.deriv(x, m.get(s, r, o)));
    }
    mttkrp_gradient(&y, model)
}

/// Least-squares CP gradient over a fully observed tensor:
/// `Y = 2(M − X)` everywhere.
pub fn least_squares_gradient(x: &Dense3, model: &FactorModel<f64>) -> (Matrix<f64>, Matrix<f64>) {
    let mut y = reconstruct(model);
    for (m, xv) in y.data.iter_mut().zip(&x.data) {
        *m = 2.0 * (*m - xv);
    }
    mttkrp_gradient(&y, model)
}

/// Scatters the fast kernel's per-entry rows into dense gradient matrices.
/// Returns the gradients and the touched row sets.
pub fn batched_gradient(
    observed: &Batch,
    model: &FactorModel<f64>,
    family: LossFamily,
) -> (Matrix<f64>, Matrix<f64>, Vec<u32>, Vec<u32>) {
    let rows = BatchRows::gather(model, observed);
    let grads = gcp_grad(observed, &rows, family).expect("valid oracle instance");
    let acc = RowGrads::accumulate(observed, &grads);
    let rank = model.rank();
    let mut g_a = Matrix::zeros(model.n_entities(), rank);
    let mut g_b = Matrix::zeros(model.n_relations(), rank);
    for (j, &row) in acc.entity_rows.iter().enumerate() {
        g_a.row_mut(row as usize).copy_from_slice(acc.entity_grad(j));
    }
    for (j, &row) in acc.relation_rows.iter().enumerate() {
        g_b.row_mut(row as usize).copy_from_slice(acc.relation_grad(j));
    }
    (g_a, g_b, acc.entity_rows, acc.relation_rows)
}

/// Row sets touched by the observed set: entities in either role, relations.
pub fn touched_rows(observed: &Batch, n_e: usize, n_r: usize) -> (Vec<u32>, Vec<u32>) {
    let mut ent = vec![false; n_e];
    let mut rel = vec![false; n_r];
    for (t, _) in observed.iter() {
        ent[t.subject.index()] = true;
        ent[t.object.index()] = true;
        rel[t.relation.index()] = true;
    }
    let collect = |mask: Vec<bool>| (0..mask.len() as u32).filter(|&i| mask[i as usize]).collect();
    (collect(ent), collect(rel))
}

/// Central finite differences of `F = Σ_Ω f(x_i, m_i)`, one parameter at a
/// time. Each loss term is differenced on its own before summing, so terms
/// not involving the perturbed parameter contribute exactly zero instead of
/// cancellation noise.
pub fn finite_difference_gradient(
    observed: &Batch,
    model: &FactorModel<f64>,
    family: LossFamily,
    h: f64,
) -> (Matrix<f64>, Matrix<f64>) {
    let rank = model.rank();
    let loss_at = |m: &FactorModel<f64>, t: &Triple, x: f64| family.loss(x, m.predict(t));
    let mut work = model.clone();
    let mut g_a = Matrix::zeros(model.n_entities(), rank);
    let mut g_b = Matrix::zeros(model.n_relations(), rank);
    for row in 0..model.n_entities() {
        for k in 0..rank {
            let base = model.entities.get(row, k);
            let mut d = 0.0;
            for (t, x) in observed.iter() {
                if t.subject.index() != row && t.object.index() != row {
                    continue;
                }
                work.entities.set(row, k, base + h);
                let up = loss_at(&work, &t, x);
                work.entities.set(row, k, base - h);
                let down = loss_at(&work, &t, x);
                d += (up - down) / (2.0 * h);
            }
            work.entities.set(row, k, base);
            g_a.set(row, k, d);
        }
    }
    for row in 0..model.n_relations() {
        for k in 0..rank {
            let base = model.relations.get(row, k);
            let mut d = 0.0;
            for (t, x) in observed.iter() {
                if t.relation.index() != row {
                    continue;
                }
                work.relations.set(row, k, base + h);
                let up = loss_at(&work, &t, x);
                work.relations.set(row, k, base - h);
                let down = loss_at(&work, &t, x);
                d += (up - down) / (2.0 * h);
            }
            work.relations.set(row, k, base);
            g_b.set(row, k, d);
        }
    }
    (g_a, g_b)
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_relative_error(x: &Matrix<f64>, y: &Matrix<f64>, floor: f64) -> f64 {
    x.as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&a, &b)| relative_error(a, b, floor))
        .fold(0.0, f64::max)
}

pub fn max_abs_error(x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    x.as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// A random factor model and observed set.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: FactorModel<f64>,
    pub observed: Batch,
}

/// Factors drawn `N(0, 1)`; each coordinate of the `n_e × n_r × n_e`
/// tensor is observed with probability `density` (at least one is always
/// observed). Bernoulli labels are fair coin flips, Gaussian labels `N(0,1)`.
pub fn random_instance(
    n_e: usize,
    n_r: usize,
    rank: usize,
    density: f64,
    family: LossFamily,
    seed: u64,
) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = FactorModel::random_normal(n_e, n_r, rank, 1.0, &mut rng);
    let mut observed = Batch::default();
    let label = |rng: &mut ChaCha8Rng| match family {
        LossFamily::Bernoulli => f64::from(u8::from(rng.random_bool(0.5))),
        LossFamily::Gaussian => StandardNormal.sample(rng),
    };
    for s in 0..n_e {
        for r in 0..n_r {
            for o in 0..n_e {
                if rng.random_bool(density) {
                    let x = label(&mut rng);
                    observed.push(Triple::new(s as u32, r as u32, o as u32), x);
                }
            }
        }
    }
    if observed.is_empty() {
        let t = Triple::new(
            rng.random_range(0..n_e as u32),
            rng.random_range(0..n_r as u32),
            rng.random_range(0..n_e as u32),
        );
        let x = label(&mut rng);
        observed.push(t, x);
    }
    Instance { model, observed }
}

/// Fully observed real tensor `X ~ U(-2, 2)` and `N(0, 1)` factors: the
/// batched Gaussian-family gradient against the classical CP residual
/// gradient. Returns `max |Δ| / max |G|`.
pub fn gaussian_reduction_error(n_e: usize, n_r: usize, rank: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = FactorModel::<f64>::random_normal(n_e, n_r, rank, 1.0, &mut rng);
    let mut x = Dense3::zeros([n_e, n_r, n_e]);
    let mut observed = Batch::with_capacity(n_e * n_r * n_e);
    for s in 0..n_e {
        for r in 0..n_r {
            for o in 0..n_e {
                let v: f64 = rng.random_range(-2.0..2.0);
                x.add(s, r, o, v);
                observed.push(Triple::new(s as u32, r as u32, o as u32), v);
            }
        }
    }
    let (ga, gb, _, _) = batched_gradient(&observed, &model, LossFamily::Gaussian);
    let (la, lb) = least_squares_gradient(&x, &model);
    let scale = la.as_slice().iter().chain(lb.as_slice()).fold(0.0f64, |m, v| m.max(v.abs()));
    max_abs_error(&ga, &la).max(max_abs_error(&gb, &lb)) / scale.max(f64::MIN_POSITIVE)
}

/// Outcome of comparing analytic, dense and finite-difference gradients on
/// one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub n_entities: usize,
    pub n_relations: usize,
    pub rank: usize,
    pub n_observed: usize,
    /// Batched kernel against central finite differences.
    pub max_rel_fd: f64,
    /// Batched kernel against the dense unfolding oracle.
    pub max_abs_dense: f64,
    /// Touched-row sets of the batched kernel equal those of the observed set.
    pub rows_match: bool,
}

pub const FD_STEP: f64 = 1e-6;
pub const REL_FLOOR: f64 = 1e-4;

pub fn gradient_check(inst: &Instance, family: LossFamily) -> GradCheck {
    let model = &inst.model;
    let (ba, bb, ent_rows, rel_rows) = batched_gradient(&inst.observed, model, family);
    let (da, db) = dense_gradient(&inst.observed, model, family);
    let (fa, fb) = finite_difference_gradient(&inst.observed, model, family, FD_STEP);
    let (want_ent, want_rel) = touched_rows(&inst.observed, model.n_entities(), model.n_relations());
    GradCheck {
        n_entities: model.n_entities(),
        n_relations: model.n_relations(),
        rank: model.rank(),
        n_observed: inst.observed.len(),
        max_rel_fd: max_relative_error(&ba, &fa, REL_FLOOR).max(max_relative_error(&bb, &fb, REL_FLOOR)),
        max_abs_dense: max_abs_error(&ba, &da).max(max_abs_error(&bb, &db)),
        rows_match: ent_rows == want_ent && rel_rows == want_rel,
    }
}

/// Ranks by scoring every candidate with a separate single-triple
/// prediction, filtering by linear scan of `known`, and sorting.
/// Ties are broken pessimistically: the true entity goes after every
/// candidate with an equal score.
pub fn brute_force_evaluate(
    model: &FactorModel<f64>,
    test: &TripleStore,
    known: &TripleStore,
    setting: Setting,
    directions: Directions,
) -> EvalReport {
    let a = &model.entities;
    let b = &model.relations;
    let n_e = model.n_entities() as u32;
    let is_known = |t: Triple| known.triples().iter().any(|k| *k == t);
    let rank_among = |truth: u32, candidates: &mut Vec<(f64, u32)>| -> u32 {
        // Descending score; at equal score the true entity sorts last.
        // Numeric comparison, so -0.0 and +0.0 tie as they do in ranking.
        candidates.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .expect("finite scores")
                .then_with(|| (x.1 == truth).cmp(&(y.1 == truth)))
        });
        candidates.iter().position(|c| c.1 == truth).unwrap() as u32 + 1
    };
    let filtered = setting == Setting::Filtered;
    let mut tail = Vec::new();
    let mut head = Vec::new();
    for t in test.triples() {
        let r = t.relation;
        let mut cands: Vec<(f64, u32)> = (0..n_e)
            .map(EntityId)
            .filter(|&e| e == t.object || !filtered || !is_known(Triple { object: e, ..*t }))
            .map(|e| (predict_entry(a.row(t.subject.index()), b.row(r.index()), a.row(e.index())), e.0))
            .collect();
        tail.push(rank_among(t.object.0, &mut cands));
        if directions == Directions::Both {
            let mut cands: Vec<(f64, u32)> = (0..n_e)
                .map(EntityId)
                .filter(|&e| e == t.subject || !filtered || !is_known(Triple { subject: e, ..*t }))
                .map(|e| (predict_entry(a.row(e.index()), b.row(r.index()), a.row(t.object.index())), e.0))
                .collect();
            head.push(rank_among(t.subject.0, &mut cands));
        }
    }
    EvalReport::from_ranks(setting, directions, &tail, &head)
}

/// Filtered ranks when every candidate gets an independent uniform score;
/// the reference point for "better than chance".
pub fn random_score_mrr(test: &TripleStore, known: &TripleStore, directions: Directions, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_e = test.n_entities();
    let mut ranks = Vec::new();
    for t in test.triples() {
        let mut one = |truth: EntityId, excluded: &dyn Fn(EntityId) -> bool| {
            let scores: Vec<f64> = (0..n_e).map(|_| rng.random::<f64>()).collect();
            let target = scores[truth.index()];
            let above = (0..n_e as u32)
                .map(EntityId)
                .filter(|&e| e != truth && !excluded(e) && scores[e.index()] >= target)
                .count();
            ranks.push(above as u32 + 1);
        };
        one(t.object, &|e| known.contains(t.subject, t.relation, e));
        if directions == Directions::Both {
            one(t.subject, &|e| known.contains(e, t.relation, t.object));
        }
    }
    let n = ranks.len().max(1) as f64;
    ranks.iter().map(|&r| 1.0 / f64::from(r)).sum::<f64>() / n
}

/// A random store of `n` distinct triples (fewer if the key space is small).
pub fn random_store(n_e: usize, n_r: usize, n: usize, rng: &mut impl Rng) -> TripleStore {
    let raw: Vec<(u32, u32, u32)> = (0..n)
        .map(|_| {
            (
                rng.random_range(0..n_e as u32),
                rng.random_range(0..n_r as u32),
                rng.random_range(0..n_e as u32),
            )
        })
        .collect();
    TripleStore::build(&raw, n_e, n_r).expect("in-range ids")
}
