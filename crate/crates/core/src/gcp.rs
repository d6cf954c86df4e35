//! Generalized CP loss and analytic factor gradients.
//!
//! The model value of coordinate `(s, r, o)` is the CP reconstruction with
//! an identity core and one entity matrix shared by the subject and object
//! axes:
//!
//! ```text
//! m = Σ_k A[s,k] · B[r,k] · A[o,k]
//! ```
//!
//! The derivative tensor `Y` is zero outside the observed set, so the MTTKRP
//! `Y_(n) · (Khatri-Rao of the other two factors)` reduces to one rank-1 row
//! contribution per observed entry. [`gcp_grad`] returns those rows aligned
//! with the batch; summing rows that share an index is the caller's job.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::real::Real;
use crate::store::{EntityId, RelationId, Triple};

#[derive(Debug, Error, PartialEq)]
pub enum GcpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("entry {index}: label {label} is not binary")]
    NonBinaryLabel { index: usize, label: f64 },
    #[error("entry {index}: id out of range")]
    IdOutOfRange { index: usize },
}

/// Entity matrix `A` (both roles) and relation matrix `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel<T> {
    pub entities: Matrix<T>,
    pub relations: Matrix<T>,
}

impl<T: Real> FactorModel<T> {
    pub fn zeros(n_e: usize, n_r: usize, rank: usize) -> Self {
        Self {
            entities: Matrix::zeros(n_e, rank),
            relations: Matrix::zeros(n_r, rank),
        }
    }

    /// I.i.d. `N(0, scale²)` entries; `A` is drawn first, then `B`.
    pub fn random_normal<R: Rng + ?Sized>(
        n_e: usize,
        n_r: usize,
        rank: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, scale).expect("init scale must be finite and non-negative");
        let entities = Matrix::from_fn(n_e, rank, |_, _| T::from_f64(normal.sample(rng)));
        let relations = Matrix::from_fn(n_r, rank, |_, _| T::from_f64(normal.sample(rng)));
        Self {
            entities,
            relations,
        }
    }

    pub fn from_parts(entities: Matrix<T>, relations: Matrix<T>) -> Self {
        assert_eq!(entities.cols(), relations.cols(), "factor ranks differ");
        Self {
            entities,
            relations,
        }
    }

    pub fn rank(&self) -> usize {
        self.entities.cols()
    }

    pub fn n_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.rows()
    }

    pub fn all_finite(&self) -> bool {
        self.entities.all_finite() && self.relations.all_finite()
    }

    /// Model value for one coordinate.
    pub fn predict(&self, t: &Triple) -> f64 {
        predict_entry(
            self.entities.row(t.subject.index()),
            self.relations.row(t.relation.index()),
            self.entities.row(t.object.index()),
        )
    }

    pub fn cast<U: Real>(&self) -> FactorModel<U> {
        FactorModel {
            entities: self.entities.cast(),
            relations: self.relations.cast(),
        }
    }
}

/// `Σ_k b[k] · (s[k] · o[k])` in `f64`.
///
/// The subject/object product is formed first, so the value is bitwise
/// symmetric in `s` and `o`; every scoring path goes through here.
#[inline]
pub fn predict_entry<T: Real>(subject: &[T], relation: &[T], object: &[T]) -> f64 {
    debug_assert!(subject.len() == relation.len() && relation.len() == object.len());
    subject
        .iter()
        .zip(relation)
        .zip(object)
        .map(|((s, b), o)| b.to_f64() * (s.to_f64() * o.to_f64()))
        .sum()
}

/// `log(1 + e^m) − x·m`, evaluated as `(max(m, 0) − x·m) + log1p(e^{−|m|})`
/// so neither term overflows and the `x = 1, m ≫ 0` tail keeps its digits.
#[inline]
pub fn bernoulli_loss(x: f64, m: f64) -> f64 {
    (m.max(0.0) - x * m) + (-m.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// `∂f/∂m = σ(m) − x`.
#[inline]
pub fn bernoulli_deriv(x: f64, m: f64) -> f64 {
    sigmoid(m) - x
}

/// Elementwise loss family of the generalized CP objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossFamily {
    /// Binary data, logit link.
    #[default]
    Bernoulli,
    /// Squared error; reduces the objective to classical CP.
    Gaussian,
}

impl LossFamily {
    #[inline]
    pub fn loss(self, x: f64, m: f64) -> f64 {
        match self {
            LossFamily::Bernoulli => bernoulli_loss(x, m),
            LossFamily::Gaussian => (x - m) * (x - m),
        }
    }

    #[inline]
    pub fn deriv(self, x: f64, m: f64) -> f64 {
        match self {
            LossFamily::Bernoulli => bernoulli_deriv(x, m),
            LossFamily::Gaussian => 2.0 * (m - x),
        }
    }
}

impl std::str::FromStr for LossFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bernoulli" => Ok(LossFamily::Bernoulli),
            "gaussian" => Ok(LossFamily::Gaussian),
            other => Err(format!("unknown loss family `{other}`")),
        }
    }
}

/// A set of observed coordinates with their data values, in coordinate
/// form. Used both for training micro-batches and for whole observed sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub subjects: Vec<EntityId>,
    pub relations: Vec<RelationId>,
    pub objects: Vec<EntityId>,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            subjects: Vec::with_capacity(n),
            relations: Vec::with_capacity(n),
            objects: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: Triple, label: f64) {
        self.subjects.push(t.subject);
        self.relations.push(t.relation);
        self.objects.push(t.object);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn triple(&self, i: usize) -> Triple {
        Triple {
            subject: self.subjects[i],
            relation: self.relations[i],
            object: self.objects[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Triple, f64)> + '_ {
        (0..self.len()).map(|i| (self.triple(i), self.labels[i]))
    }

    /// Heap bytes held by the index and label arrays.
    pub fn heap_bytes(&self) -> usize {
        (self.subjects.capacity() + self.objects.capacity()) * size_of::<EntityId>()
            + self.relations.capacity() * size_of::<RelationId>()
            + self.labels.capacity() * size_of::<f64>()
    }

    fn check(&self, family: LossFamily, n_e: usize, n_r: usize) -> Result<(), GcpError> {
        let l = self.labels.len();
        if self.subjects.len() != l || self.relations.len() != l || self.objects.len() != l {
            return Err(GcpError::Shape(format!(
                "batch arrays have lengths {}, {}, {}, {}",
                self.subjects.len(),
                self.relations.len(),
                self.objects.len(),
                l
            )));
        }
        for i in 0..l {
            if self.subjects[i].index() >= n_e
                || self.objects[i].index() >= n_e
                || self.relations[i].index() >= n_r
            {
                return Err(GcpError::IdOutOfRange { index: i });
            }
            let x = self.labels[i];
            if family == LossFamily::Bernoulli && x != 0.0 && x != 1.0 {
                return Err(GcpError::NonBinaryLabel { index: i, label: x });
            }
        }
        Ok(())
    }
}

/// Factor rows cut out for a batch, widened to `f64`, each `L × R`
/// row-major and aligned with the batch entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRows {
    pub rank: usize,
    pub subjects: Vec<f64>,
    pub relations: Vec<f64>,
    pub objects: Vec<f64>,
}

impl BatchRows {
    pub fn gather<T: Real>(model: &FactorModel<T>, batch: &Batch) -> Self {
        let rank = model.rank();
        let gather = |m: &Matrix<T>, ids: &mut dyn Iterator<Item = usize>| {
            let mut out = Vec::with_capacity(batch.len() * rank);
            for i in ids {
                out.extend(m.row(i).iter().map(|v| v.to_f64()));
            }
            out
        };
        Self {
            rank,
            subjects: gather(&model.entities, &mut batch.subjects.iter().map(|e| e.index())),
            relations: gather(&model.relations, &mut batch.relations.iter().map(|r| r.index())),
            objects: gather(&model.entities, &mut batch.objects.iter().map(|e| e.index())),
        }
    }

    pub fn heap_bytes(&self) -> usize {
        (self.subjects.capacity() + self.relations.capacity() + self.objects.capacity())
            * size_of::<f64>()
    }
}

/// Loss and per-entry gradient rows for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSlices {
    pub rank: usize,
    /// Subject-role rows of `∂F/∂A`.
    pub g_a: Vec<f64>,
    /// Rows of `∂F/∂B`.
    pub g_b: Vec<f64>,
    /// Object-role rows of `∂F/∂A`.
    pub g_c: Vec<f64>,
    pub loss: f64,
}

impl GradSlices {
    pub fn len(&self) -> usize {
        if self.rank == 0 {
            0
        } else {
            self.g_a.len() / self.rank
        }
    }

    pub fn is_empty(&self) -> bool {
        self.g_a.is_empty()
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.g_a[i * self.rank..(i + 1) * self.rank]
    }

    pub fn b_row(&self, i: usize) -> &[f64] {
        &self.g_b[i * self.rank..(i + 1) * self.rank]
    }

    pub fn c_row(&self, i: usize) -> &[f64] {
        &self.g_c[i * self.rank..(i + 1) * self.rank]
    }

    pub fn all_finite(&self) -> bool {
        self.loss.is_finite()
            && self.g_a.iter().chain(&self.g_b).chain(&self.g_c).all(|v| v.is_finite())
    }

    pub fn heap_bytes(&self) -> usize {
        (self.g_a.capacity() + self.g_b.capacity() + self.g_c.capacity()) * size_of::<f64>()
    }
}

/// Per-entry kernel: writes the three gradient rows and returns `f(x, m)`.
#[inline]
fn entry_grad(
    family: LossFamily,
    x: f64,
    s: &[f64],
    b: &[f64],
    o: &[f64],
    g_a: &mut [f64],
    g_b: &mut [f64],
    g_c: &mut [f64],
) -> f64 {
    let m = predict_entry(s, b, o);
    let y = family.deriv(x, m);
    for k in 0..s.len() {
        g_a[k] = y * (b[k] * o[k]);
        g_b[k] = y * (s[k] * o[k]);
        g_c[k] = y * (s[k] * b[k]);
    }
    family.loss(x, m)
}

fn check_rows(batch: &Batch, rows: &BatchRows) -> Result<(), GcpError> {
    let want = batch.len() * rows.rank;
    if rows.rank == 0 {
        return Err(GcpError::Shape("rank must be at least 1".into()));
    }
    if batch.subjects.len() != batch.len()
        || batch.relations.len() != batch.len()
        || batch.objects.len() != batch.len()
    {
        return Err(GcpError::Shape("batch index arrays differ in length".into()));
    }
    for (name, v) in [
        ("subject", &rows.subjects),
        ("relation", &rows.relations),
        ("object", &rows.objects),
    ] {
        if v.len() != want {
            return Err(GcpError::Shape(format!(
                "{name} rows hold {} values, expected {} x {}",
                v.len(),
                batch.len(),
                rows.rank
            )));
        }
    }
    Ok(())
}

fn check_labels(batch: &Batch, family: LossFamily) -> Result<(), GcpError> {
    if family == LossFamily::Bernoulli {
        if let Some((index, &label)) = batch
            .labels
            .iter()
            .enumerate()
            .find(|(_, &x)| x != 0.0 && x != 1.0)
        {
            return Err(GcpError::NonBinaryLabel { index, label });
        }
    }
    Ok(())
}

/// Loss `F = Σ_i f(x_i, m_i)` and gradient rows for one batch.
///
/// For entry `i` with `y_i = ∂f/∂m` at `(x_i, m_i)`:
///
/// ```text
/// g_a[i] = y_i · (B_r ∘ A_o)
/// g_b[i] = y_i · (A_s ∘ A_o)
/// g_c[i] = y_i · (A_s ∘ B_r)
/// ```
///
/// Transient memory is the three `L × R` output buffers.
pub fn gcp_grad(batch: &Batch, rows: &BatchRows, family: LossFamily) -> Result<GradSlices, GcpError> {
    check_rows(batch, rows)?;
    check_labels(batch, family)?;
    let rank = rows.rank;
    let n = batch.len() * rank;
    let mut g_a = vec![0.0; n];
    let mut g_b = vec![0.0; n];
    let mut g_c = vec![0.0; n];
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let span = i * rank..(i + 1) * rank;
        loss += entry_grad(
            family,
            batch.labels[i],
            &rows.subjects[span.clone()],
            &rows.relations[span.clone()],
            &rows.objects[span.clone()],
            &mut g_a[span.clone()],
            &mut g_b[span.clone()],
            &mut g_c[span],
        );
    }
    Ok(GradSlices {
        rank,
        g_a,
        g_b,
        g_c,
        loss,
    })
}

/// [`gcp_grad`] with entries spread over the rayon pool. Gradient rows are
/// identical; the loss sum may differ in the last bits run to run.
pub fn gcp_grad_parallel(
    batch: &Batch,
    rows: &BatchRows,
    family: LossFamily,
) -> Result<GradSlices, GcpError> {
    check_rows(batch, rows)?;
    check_labels(batch, family)?;
    let rank = rows.rank;
    let n = batch.len() * rank;
    let mut g_a = vec![0.0; n];
    let mut g_b = vec![0.0; n];
    let mut g_c = vec![0.0; n];
    let loss = g_a
        .par_chunks_mut(rank)
        .zip(g_b.par_chunks_mut(rank))
        .zip(g_c.par_chunks_mut(rank))
        .enumerate()
        .map(|(i, ((ga, gb), gc))| {
            let span = i * rank..(i + 1) * rank;
            entry_grad(
                family,
                batch.labels[i],
                &rows.subjects[span.clone()],
                &rows.relations[span.clone()],
                &rows.objects[span],
                ga,
                gb,
                gc,
            )
        })
        .sum();
    Ok(GradSlices {
        rank,
        g_a,
        g_b,
        g_c,
        loss,
    })
}

/// Exact `Σ_{i∈Ω} f(x_i, m_i)` over an observed set.
pub fn full_loss<T: Real>(
    observed: &Batch,
    model: &FactorModel<T>,
    family: LossFamily,
) -> Result<f64, GcpError> {
    observed.check(family, model.n_entities(), model.n_relations())?;
    Ok(observed
        .iter()
        .map(|(t, x)| family.loss(x, model.predict(&t)))
        .sum())
}
