//! Negative sampling and batch assembly.

use rand::Rng;

use crate::gcp::Batch;
use crate::store::{EntityId, Triple, TripleStore};

use super::TrainError;

/// Attempts per corruption before accepting a known triple anyway.
const MAX_REJECTIONS: usize = 64;

/// Corrupts the subject or the object (probability ½ each) with an entity
/// drawn uniformly from the other `n_e − 1` ids. The relation is kept.
#[derive(Debug, Clone, Copy)]
pub struct NegativeSampler<'a> {
    n_e: u32,
    known: Option<&'a TripleStore>,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(n_e: usize) -> Result<Self, TrainError> {
        if n_e < 2 {
            return Err(TrainError::CannotCorrupt { n_e });
        }
        Ok(Self {
            n_e: n_e as u32,
            known: None,
        })
    }

    /// A sampler that is never asked for corruptions (`n_negatives = 0`).
    pub(crate) fn unchecked(n_e: usize) -> Self {
        Self {
            n_e: n_e.max(2) as u32,
            known: None,
        }
    }

    /// Rejection-samples away from triples in `known`.
    pub fn filtered(n_e: usize, known: &'a TripleStore) -> Result<Self, TrainError> {
        let mut s = Self::new(n_e)?;
        s.known = Some(known);
        Ok(s)
    }

    fn corrupt_once<R: Rng + ?Sized>(&self, t: &Triple, rng: &mut R) -> Triple {
        let replace_subject = rng.random_bool(0.5);
        let original = if replace_subject { t.subject } else { t.object };
        let mut draw = rng.random_range(0..self.n_e - 1);
        if draw >= original.0 {
            draw += 1;
        }
        let mut out = *t;
        if replace_subject {
            out.subject = EntityId(draw);
        } else {
            out.object = EntityId(draw);
        }
        out
    }

    pub fn corrupt<R: Rng + ?Sized>(&self, t: &Triple, rng: &mut R) -> Triple {
        let mut out = self.corrupt_once(t, rng);
        if let Some(known) = self.known {
            for _ in 0..MAX_REJECTIONS {
                if !known.contains_triple(&out) {
                    break;
                }
                out = self.corrupt_once(t, rng);
            }
        }
        out
    }

    /// `n` corruptions of `t`, each labelled 0.
    pub fn sample<R: Rng + ?Sized>(&self, t: &Triple, n: usize, rng: &mut R) -> Vec<(Triple, f64)> {
        (0..n).map(|_| (self.corrupt(t, rng), 0.0)).collect()
    }
}

/// Yields batches of up to `batch_size` positives in the given order, each
/// positive immediately followed by its `n_negatives` corruptions.
pub struct Batches<'a, 'r, R: ?Sized> {
    positives: &'a [Triple],
    order: &'a [u32],
    next: usize,
    sampler: NegativeSampler<'a>,
    rng: &'r mut R,
    batch_size: usize,
    n_negatives: usize,
}

/// Batches over `positives` visited in `order` (a permutation of indices).
pub fn make_batches<'a, 'r, R: Rng + ?Sized>(
    positives: &'a [Triple],
    order: &'a [u32],
    sampler: NegativeSampler<'a>,
    rng: &'r mut R,
    batch_size: usize,
    n_negatives: usize,
) -> Batches<'a, 'r, R> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    Batches {
        positives,
        order,
        next: 0,
        sampler,
        rng,
        batch_size,
        n_negatives,
    }
}

impl<R: Rng + ?Sized> Iterator for Batches<'_, '_, R> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let mut batch = Batch::with_capacity((end - self.next) * (1 + self.n_negatives));
        for &idx in &self.order[self.next..end] {
            let t = self.positives[idx as usize];
            batch.push(t, 1.0);
            for _ in 0..self.n_negatives {
                let neg = self.sampler.corrupt(&t, self.rng);
                batch.push(neg, 0.0);
            }
        }
        self.next = end;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_negatives_is_empty() {
        let s = NegativeSampler::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(s.sample(&Triple::new(0, 0, 1), 0, &mut rng).is_empty());
    }

    #[test]
    fn needs_two_entities() {
        assert!(matches!(
            NegativeSampler::new(1),
            Err(TrainError::CannotCorrupt { n_e: 1 })
        ));
    }

    #[test]
    fn corrupts_exactly_one_entity_slot() {
        let s = NegativeSampler::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Triple::new(2, 3, 4);
        let mut subj = 0;
        for (neg, label) in s.sample(&t, 2000, &mut rng) {
            assert_eq!(label, 0.0);
            assert_eq!(neg.relation, t.relation);
            let changed = (neg.subject != t.subject) as u8 + (neg.object != t.object) as u8;
            assert_eq!(changed, 1, "{neg}");
            assert!(neg.subject.0 < 5 && neg.object.0 < 5);
            subj += (neg.subject != t.subject) as usize;
        }
        assert!((850..1150).contains(&subj), "{subj}");
    }

    #[test]
    fn seeded_output_is_reproducible() {
        let s = NegativeSampler::new(100).unwrap();
        let t = Triple::new(0, 0, 1);
        let a = s.sample(&t, 4, &mut ChaCha8Rng::seed_from_u64(42));
        let b = s.sample(&t, 4, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn filtered_sampler_avoids_known_triples() {
        // Everything except (0,0,4) and (4,0,1) is known.
        let mut raw = Vec::new();
        for s in 0..5 {
            for o in 0..5 {
                if (s, o) != (0, 4) && (s, o) != (4, 1) {
                    raw.push((s, 0, o));
                }
            }
        }
        let known = TripleStore::build(&raw, 5, 1).unwrap();
        let s = NegativeSampler::filtered(5, &known).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (neg, _) in s.sample(&Triple::new(0, 0, 1), 200, &mut rng) {
            assert!(!known.contains_triple(&neg), "{neg}");
        }
    }

    #[test]
    fn batch_layout() {
        let positives: Vec<Triple> = (0..10).map(|i| Triple::new(i, 0, (i + 1) % 20)).collect();
        let order: Vec<u32> = (0..10).collect();
        let s = NegativeSampler::new(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches: Vec<_> = make_batches(&positives, &order, s, &mut rng, 156, 6).collect();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 70);
        for (i, chunk) in batches[0].labels.chunks(7).enumerate() {
            assert_eq!(chunk, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
            assert_eq!(batches[0].triple(i * 7), positives[i]);
        }

        let batches: Vec<_> = make_batches(&positives, &order, s, &mut rng, 4, 0).collect();
        assert_eq!(batches.iter().map(Batch::len).collect::<Vec<_>>(), [4, 4, 2]);
        assert!(batches.iter().all(|b| b.labels.iter().all(|&x| x == 1.0)));
    }

    #[test]
    fn each_positive_once_per_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let positives: Vec<Triple> = (0..97)
            .map(|_| Triple::new(rng.random_range(0..30), rng.random_range(0..3), rng.random_range(0..30)))
            .collect();
        let mut order: Vec<u32> = (0..positives.len() as u32).collect();
        order.shuffle(&mut rng);
        let s = NegativeSampler::new(30).unwrap();
        let mut seen: Vec<Triple> = make_batches(&positives, &order, s, &mut rng, 10, 3)
            .flat_map(|b| b.iter().filter(|(_, x)| *x == 1.0).map(|(t, _)| t).collect::<Vec<_>>())
            .collect();
        let mut expect = positives.clone();
        seen.sort();
        expect.sort();
        assert_eq!(seen, expect);
    }
}
