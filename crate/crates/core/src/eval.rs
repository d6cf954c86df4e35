//! Link-prediction evaluation: rank the true entity among all candidates for
//! the open slot of each test triple and report MRR and Hits@{1,3,10}.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gcp::FactorModel;
use crate::real::Real;
use crate::store::{EntityId, RelationId, Triple, TripleStore};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("test split is empty")]
    EmptyTest,
    #[error("model has {model_e} entities / {model_r} relations but the test split uses {store_e} / {store_r}")]
    DimensionMismatch {
        model_e: usize,
        model_r: usize,
        store_e: usize,
        store_r: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Other known completions are removed from the candidate list.
    Filtered,
    Unfiltered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    /// Tail `(s, r, ?)` and head `(?, r, o)` queries.
    Both,
    TailOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Tail,
    Head,
}

impl std::str::FromStr for Setting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "filtered" => Ok(Setting::Filtered),
            "unfiltered" => Ok(Setting::Unfiltered),
            _ => Err(format!("unknown setting `{s}`")),
        }
    }
}

impl std::str::FromStr for Directions {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "both" => Ok(Directions::Both),
            "tail_only" | "tail-only" | "tail" => Ok(Directions::TailOnly),
            _ => Err(format!("unknown directions `{s}`")),
        }
    }
}

/// One ranking problem: the open slot, the entity that belongs there, and
/// the candidates excluded from the ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingQuery<'a> {
    pub direction: Direction,
    /// The entity in the closed slot.
    pub anchor: EntityId,
    pub relation: RelationId,
    pub true_entity: EntityId,
    /// Distinct ids; the true entity is skipped if present.
    pub filter: &'a [EntityId],
}

impl<'a> RankingQuery<'a> {
    pub fn tail(t: &Triple, filter: &'a [EntityId]) -> Self {
        Self {
            direction: Direction::Tail,
            anchor: t.subject,
            relation: t.relation,
            true_entity: t.object,
            filter,
        }
    }

    pub fn head(t: &Triple, filter: &'a [EntityId]) -> Self {
        Self {
            direction: Direction::Head,
            anchor: t.object,
            relation: t.relation,
            true_entity: t.subject,
            filter,
        }
    }
}

/// Model value of every entity placed in the open slot.
///
/// Bitwise equal to calling [`crate::gcp::predict_entry`] on each candidate
/// triple, in O(n_e · R) time and O(n_e) space.
pub fn score_all<T: Real>(model: &FactorModel<T>, query: &RankingQuery<'_>) -> Vec<f64> {
    let b: Vec<f64> = model.relations.row(query.relation.index()).iter().map(|v| v.to_f64()).collect();
    let anchor: Vec<f64> = model.entities.row(query.anchor.index()).iter().map(|v| v.to_f64()).collect();
    (0..model.n_entities())
        .map(|e| {
            model
                .entities
                .row(e)
                .iter()
                .zip(&b)
                .zip(&anchor)
                .map(|((c, b), a)| b * (a * c.to_f64()))
                .sum()
        })
        .collect()
}

/// `1 + #{strictly higher} + #{tied}` over unfiltered candidates other than
/// the true entity. Ties go against the true entity.
pub fn rank_of(scores: &[f64], true_entity: EntityId, filter: &[EntityId]) -> u32 {
    let target = scores[true_entity.index()];
    let at_least = |s: f64| s >= target;
    let mut above = scores.iter().filter(|&&s| at_least(s)).count() - 1;
    for &f in filter {
        if f != true_entity && at_least(scores[f.index()]) {
            above -= 1;
        }
    }
    above as u32 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub n_queries: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl Metrics {
    /// Reciprocal ranks are summed in slice order.
    pub fn from_ranks(ranks: &[u32]) -> Self {
        let n = ranks.len();
        let mut rr = 0.0;
        let mut h = [0usize; 3];
        for &r in ranks {
            rr += 1.0 / r as f64;
            h[0] += (r <= 1) as usize;
            h[1] += (r <= 3) as usize;
            h[2] += (r <= 10) as usize;
        }
        let d = n.max(1) as f64;
        Self {
            n_queries: n,
            mrr: rr / d,
            hits1: h[0] as f64 / d,
            hits3: h[1] as f64 / d,
            hits10: h[2] as f64 / d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub directions: Directions,
    pub n_queries: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub tail: Metrics,
    pub head: Option<Metrics>,
}

impl EvalReport {
    /// The aggregate pools all queries, tail ranks first.
    pub fn from_ranks(setting: Setting, directions: Directions, tail: &[u32], head: &[u32]) -> Self {
        let all: Vec<u32> = tail.iter().chain(head).copied().collect();
        let agg = Metrics::from_ranks(&all);
        Self {
            setting,
            directions,
            n_queries: agg.n_queries,
            mrr: agg.mrr,
            hits1: agg.hits1,
            hits3: agg.hits3,
            hits10: agg.hits10,
            tail: Metrics::from_ranks(tail),
            head: (directions == Directions::Both).then(|| Metrics::from_ranks(head)),
        }
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let setting = match self.setting {
            Setting::Filtered => "filtered",
            Setting::Unfiltered => "unfiltered",
        };
        let directions = match self.directions {
            Directions::Both => "both",
            Directions::TailOnly => "tail_only",
        };
        let _ = writeln!(s, "setting: {setting}");
        let _ = writeln!(s, "directions: {directions}");
        let _ = writeln!(s, "n_queries: {}", self.n_queries);
        let _ = writeln!(s, "mrr: {:.6}", self.mrr);
        let _ = writeln!(s, "hits1: {:.6}", self.hits1);
        let _ = writeln!(s, "hits3: {:.6}", self.hits3);
        let _ = writeln!(s, "hits10: {:.6}", self.hits10);
        let mut part = |name: &str, m: &Metrics| {
            let _ = writeln!(s, "{name}.n_queries: {}", m.n_queries);
            let _ = writeln!(s, "{name}.mrr: {:.6}", m.mrr);
            let _ = writeln!(s, "{name}.hits1: {:.6}", m.hits1);
            let _ = writeln!(s, "{name}.hits3: {:.6}", m.hits3);
            let _ = writeln!(s, "{name}.hits10: {:.6}", m.hits10);
        };
        part("tail", &self.tail);
        if let Some(head) = &self.head {
            part("head", head);
        }
        s
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Ranks every query of `test` against all entities.
///
/// In the filtered setting the exclusion set of a query is every other
/// completion of its (entity, relation) pair found in `known`, which should
/// hold the train, validation and test triples.
pub fn evaluate<T: Real>(
    model: &FactorModel<T>,
    test: &TripleStore,
    known: &TripleStore,
    setting: Setting,
    directions: Directions,
) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    if test.n_entities() > model.n_entities() || test.n_relations() > model.n_relations() {
        return Err(EvalError::DimensionMismatch {
            model_e: model.n_entities(),
            model_r: model.n_relations(),
            store_e: test.n_entities(),
            store_r: test.n_relations(),
        });
    }
    let filtered = setting == Setting::Filtered;
    let tail: Vec<u32> = test
        .triples()
        .par_iter()
        .map(|t| {
            let filter = if filtered { known.objects_of(t.subject, t.relation) } else { &[] };
            let q = RankingQuery::tail(t, filter);
            rank_of(&score_all(model, &q), q.true_entity, q.filter)
        })
        .collect();
    let head: Vec<u32> = match directions {
        Directions::TailOnly => Vec::new(),
        Directions::Both => test
            .triples()
            .par_iter()
            .map(|t| {
                let filter = if filtered { known.subjects_of(t.relation, t.object) } else { &[] };
                let q = RankingQuery::head(t, filter);
                rank_of(&score_all(model, &q), q.true_entity, q.filter)
            })
            .collect(),
    };
    Ok(EvalReport::from_ranks(setting, directions, &tail, &head))
}
