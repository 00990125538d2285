//! Concept vocabularies, exact detectors, derived concepts and the noisy
//! observation model.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub usize);

pub type Detector<S> = Arc<dyn Fn(&S) -> bool + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub concept: ConceptId,
    pub positive: bool,
}

impl Literal {
    pub fn pos(concept: ConceptId) -> Self {
        Self { concept, positive: true }
    }

    pub fn neg(concept: ConceptId) -> Self {
        Self { concept, positive: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Base,
    Negation(ConceptId),
    /// A CNF clause: true iff any literal holds.
    Compound(Vec<Literal>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptInfo {
    pub name: String,
    pub description: String,
    pub provenance: Provenance,
}

/// Named propositional concepts over states of type `S`.
///
/// Only base concepts carry a detector; negations and clauses are computed
/// from base truth values, and may only refer to base concepts.
pub struct Vocabulary<S> {
    concepts: Vec<ConceptInfo>,
    detectors: Vec<Option<Detector<S>>>,
}

impl<S> Clone for Vocabulary<S> {
    fn clone(&self) -> Self {
        Self {
            concepts: self.concepts.clone(),
            detectors: self.detectors.clone(),
        }
    }
}

impl<S> fmt::Debug for Vocabulary<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.concepts.iter().map(|c| &c.name)).finish()
    }
}

impl<S> Default for Vocabulary<S> {
    fn default() -> Self {
        Self {
            concepts: Vec::new(),
            detectors: Vec::new(),
        }
    }
}

impl<S> Vocabulary<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ConceptId> {
        (0..self.len()).map(ConceptId)
    }

    pub fn info(&self, id: ConceptId) -> &ConceptInfo {
        &self.concepts[id.0]
    }

    pub fn name(&self, id: ConceptId) -> &str {
        &self.concepts[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ConceptId> {
        self.concepts.iter().position(|c| c.name == name).map(ConceptId)
    }

    pub fn concepts(&self) -> &[ConceptInfo] {
        &self.concepts
    }

    fn check_unique(&self, name: &str) -> Result<()> {
        if self.find(name).is_some() {
            return Err(Error::Contract(format!("duplicate concept name `{name}`")));
        }
        Ok(())
    }

    pub fn add_base(
        &mut self,
        name: impl Into<String>,
        description: impl Into<String>,
        detector: impl Fn(&S) -> bool + Send + Sync + 'static,
    ) -> Result<ConceptId> {
        self.add_base_arc(name, description, Arc::new(detector))
    }

    pub fn add_base_arc(
        &mut self,
        name: impl Into<String>,
        description: impl Into<String>,
        detector: Detector<S>,
    ) -> Result<ConceptId> {
        let name = name.into();
        self.check_unique(&name)?;
        self.concepts.push(ConceptInfo {
            name,
            description: description.into(),
            provenance: Provenance::Base,
        });
        self.detectors.push(Some(detector));
        Ok(ConceptId(self.len() - 1))
    }

    fn require_base(&self, id: ConceptId) -> Result<()> {
        match self.concepts.get(id.0) {
            Some(c) if c.provenance == Provenance::Base => Ok(()),
            Some(c) => Err(Error::Contract(format!("`{}` is not a base concept", c.name))),
            None => Err(Error::Contract(format!("unknown concept index {}", id.0))),
        }
    }

    pub fn add_negation(&mut self, of: ConceptId) -> Result<ConceptId> {
        self.require_base(of)?;
        let base = &self.concepts[of.0];
        let name = format!("not_{}", base.name);
        let description = format!("not: {}", base.description);
        self.check_unique(&name)?;
        self.concepts.push(ConceptInfo {
            name,
            description,
            provenance: Provenance::Negation(of),
        });
        self.detectors.push(None);
        Ok(ConceptId(self.len() - 1))
    }

    /// Adds a negation for every base concept that does not have one yet.
    pub fn extend_with_negations(mut self) -> Self {
        let bases: Vec<ConceptId> = self
            .ids()
            .filter(|&id| self.concepts[id.0].provenance == Provenance::Base)
            .collect();
        for b in bases {
            let has = self
                .concepts
                .iter()
                .any(|c| c.provenance == Provenance::Negation(b));
            if !has {
                self.add_negation(b).expect("base concept names are unique");
            }
        }
        self
    }

    /// Adds a clause concept that is true iff any of `literals` holds.
    pub fn make_compound_clause(&mut self, literals: &[Literal]) -> Result<ConceptId> {
        if literals.is_empty() {
            return Err(Error::Contract("compound clause needs at least one literal".into()));
        }
        for l in literals {
            self.require_base(l.concept)?;
        }
        let name = literals
            .iter()
            .map(|l| {
                let n = &self.concepts[l.concept.0].name;
                if l.positive {
                    n.clone()
                } else {
                    format!("not_{n}")
                }
            })
            .collect::<Vec<_>>()
            .join("_or_");
        let name = if literals.len() == 1 { format!("any_{name}") } else { name };
        self.add_compound_named(name, literals)
    }

    pub fn add_compound_named(&mut self, name: impl Into<String>, literals: &[Literal]) -> Result<ConceptId> {
        if literals.is_empty() {
            return Err(Error::Contract("compound clause needs at least one literal".into()));
        }
        for l in literals {
            self.require_base(l.concept)?;
        }
        let name = name.into();
        self.check_unique(&name)?;
        let description = format!("any of: {name}");
        self.concepts.push(ConceptInfo {
            name,
            description,
            provenance: Provenance::Compound(literals.to_vec()),
        });
        self.detectors.push(None);
        Ok(ConceptId(self.len() - 1))
    }

    /// Exact concept map of a live state.
    pub fn evaluate(&self, state: &S) -> ConceptVector {
        let mut v = ConceptVector::new(self.len());
        for (i, d) in self.detectors.iter().enumerate() {
            if let Some(d) = d {
                v.set(ConceptId(i), d(state));
            }
        }
        self.fill_derived(&mut v);
        v
    }

    fn fill_derived(&self, v: &mut ConceptVector) {
        for (i, c) in self.concepts.iter().enumerate() {
            match &c.provenance {
                Provenance::Base => {}
                Provenance::Negation(b) => {
                    let t = !v.get(*b);
                    v.set(ConceptId(i), t);
                }
                Provenance::Compound(lits) => {
                    let t = lits.iter().any(|l| v.get(l.concept) == l.positive);
                    v.set(ConceptId(i), t);
                }
            }
        }
    }

    /// Noisy concept map: each concept's exact value is reported through its
    /// detector's observation rates independently.
    pub fn observe<R: Rng + ?Sized>(&self, obs: &ObservationModel, state: &S, rng: &mut R) -> ConceptVector {
        obs.observe(&self.evaluate(state), rng)
    }

    /// Re-targets every base detector through `project`, keeping derived
    /// concepts as they are.
    pub fn lift<T>(&self, project: fn(&T) -> &S) -> Vocabulary<T>
    where
        S: 'static,
        T: 'static,
    {
        let detectors = self
            .detectors
            .iter()
            .map(|d| {
                d.as_ref().map(|d| {
                    let d = Arc::clone(d);
                    Arc::new(move |t: &T| d(project(t))) as Detector<T>
                })
            })
            .collect();
        Vocabulary {
            concepts: self.concepts.clone(),
            detectors,
        }
    }

    /// Copy without the named concepts (and anything derived from them).
    pub fn without(&self, names: &[&str]) -> Vocabulary<S> {
        let mut out = Vocabulary::new();
        let mut remap = vec![None; self.len()];
        for (i, c) in self.concepts.iter().enumerate() {
            if names.contains(&c.name.as_str()) {
                continue;
            }
            let new_id = match &c.provenance {
                Provenance::Base => out
                    .add_base_arc(c.name.clone(), c.description.clone(), self.detectors[i].clone().unwrap())
                    .ok(),
                Provenance::Negation(b) => remap[b.0].and_then(|nb| out.add_negation(nb).ok()),
                Provenance::Compound(lits) => {
                    let mapped: Option<Vec<Literal>> = lits
                        .iter()
                        .map(|l| remap[l.concept.0].map(|c| Literal { concept: c, positive: l.positive }))
                        .collect();
                    mapped.and_then(|m| out.add_compound_named(c.name.clone(), &m).ok())
                }
            };
            remap[i] = new_id;
        }
        out
    }
}

/// Fixed-width truth assignment over a vocabulary.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptVector {
    words: Vec<u64>,
    len: usize,
}

impl fmt::Debug for ConceptVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter_true().map(|c| c.0)).finish()
    }
}

impl ConceptVector {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_ids(len: usize, ids: impl IntoIterator<Item = ConceptId>) -> Self {
        let mut v = Self::new(len);
        for id in ids {
            v.set(id, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, id: ConceptId) -> bool {
        assert!(id.0 < self.len, "concept index out of range");
        self.words[id.0 / 64] >> (id.0 % 64) & 1 == 1
    }

    pub fn set(&mut self, id: ConceptId, value: bool) {
        assert!(id.0 < self.len, "concept index out of range");
        let mask = 1u64 << (id.0 % 64);
        if value {
            self.words[id.0 / 64] |= mask;
        } else {
            self.words[id.0 / 64] &= !mask;
        }
    }

    pub fn count_true(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_true(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.len).map(ConceptId).filter(|&c| self.get(c))
    }

    pub fn iter_false(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.len).map(ConceptId).filter(|&c| !self.get(c))
    }

    pub fn contains_all(&self, subset: &[ConceptId]) -> bool {
        subset.iter().all(|&c| self.get(c))
    }

    pub fn intersect(&self, other: &ConceptVector) -> ConceptVector {
        assert_eq!(self.len, other.len);
        ConceptVector {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRates {
    pub p_true_pos: f64,
    pub p_false_pos: f64,
}

impl ObservationRates {
    pub const EXACT: ObservationRates = ObservationRates {
        p_true_pos: 1.0,
        p_false_pos: 0.0,
    };

    pub fn new(p_true_pos: f64, p_false_pos: f64) -> Result<Self> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(p_true_pos) || !ok(p_false_pos) {
            return Err(Error::Contract(format!(
                "observation rates must lie in [0,1], got ({p_true_pos}, {p_false_pos})"
            )));
        }
        Ok(Self { p_true_pos, p_false_pos })
    }

    pub fn is_exact(&self) -> bool {
        self.p_true_pos == 1.0 && self.p_false_pos == 0.0
    }

    /// Probability of the detector reporting `observed` given presence.
    pub fn likelihood(&self, observed: bool, present: bool) -> f64 {
        let p = if present { self.p_true_pos } else { self.p_false_pos };
        if observed {
            p
        } else {
            1.0 - p
        }
    }
}

/// Per-concept detector noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    rates: Vec<ObservationRates>,
}

impl ObservationModel {
    pub fn exact(len: usize) -> Self {
        Self {
            rates: vec![ObservationRates::EXACT; len],
        }
    }

    pub fn uniform(len: usize, rates: ObservationRates) -> Self {
        Self { rates: vec![rates; len] }
    }

    pub fn from_rates(rates: Vec<ObservationRates>) -> Self {
        Self { rates }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self, id: ConceptId) -> ObservationRates {
        self.rates[id.0]
    }

    pub fn is_exact(&self) -> bool {
        self.rates.iter().all(ObservationRates::is_exact)
    }

    pub fn observe<R: Rng + ?Sized>(&self, truth: &ConceptVector, rng: &mut R) -> ConceptVector {
        assert_eq!(truth.len(), self.rates.len(), "observation model width mismatch");
        let mut out = ConceptVector::new(truth.len());
        for (i, r) in self.rates.iter().enumerate() {
            let id = ConceptId(i);
            let p = if truth.get(id) { r.p_true_pos } else { r.p_false_pos };
            let reported = if p >= 1.0 {
                true
            } else if p <= 0.0 {
                false
            } else {
                rng.gen_bool(p)
            };
            out.set(id, reported);
        }
        out
    }
}

/// Empirical Bernoulli estimates of each concept over a state sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptMarginals {
    pub p: Vec<f64>,
    pub sample_count: usize,
}

impl ConceptMarginals {
    pub fn get(&self, id: ConceptId) -> f64 {
        self.p[id.0]
    }

    pub fn from_vectors<'a>(width: usize, vectors: impl IntoIterator<Item = &'a ConceptVector>) -> Result<Self> {
        let mut counts = vec![0usize; width];
        let mut n = 0usize;
        for v in vectors {
            n += 1;
            for c in v.iter_true() {
                counts[c.0] += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptySamples("concept marginals need at least one state"));
        }
        Ok(Self {
            p: counts.iter().map(|&k| k as f64 / n as f64).collect(),
            sample_count: n,
        })
    }
}

pub fn estimate_marginals<S, I>(vocab: &Vocabulary<S>, states: I) -> Result<ConceptMarginals>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<S>,
{
    use std::borrow::Borrow;
    let vectors: Vec<ConceptVector> = states.into_iter().map(|s| vocab.evaluate(s.borrow())).collect();
    ConceptMarginals::from_vectors(vocab.len(), &vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three() -> Vocabulary<u8> {
        let mut v = Vocabulary::new();
        v.add_base("a", "bit 0", |s: &u8| s & 1 != 0).unwrap();
        v.add_base("b", "bit 1", |s: &u8| s & 2 != 0).unwrap();
        v.add_base("c", "bit 2", |s: &u8| s & 4 != 0).unwrap();
        v
    }

    #[test]
    fn negations_complement_and_double() {
        let v = three().extend_with_negations();
        assert_eq!(v.len(), 6);
        assert_eq!(v.name(ConceptId(3)), "not_a");
        let v2 = v.clone().extend_with_negations();
        assert_eq!(v2.len(), 6);
        for s in 0u8..8 {
            let cv = v.evaluate(&s);
            for b in 0..3 {
                assert_ne!(cv.get(ConceptId(b)), cv.get(ConceptId(b + 3)));
            }
        }
    }

    #[test]
    fn ten_eighteen_thirty_two_base_double() {
        for n in [10usize, 18, 32] {
            let mut v: Vocabulary<u8> = Vocabulary::new();
            for i in 0..n {
                v.add_base(format!("c{i}"), "", |_| true).unwrap();
            }
            assert_eq!(v.extend_with_negations().len(), 2 * n);
        }
    }

    #[test]
    fn negation_of_negation_rejected() {
        let mut v = three().extend_with_negations();
        assert!(v.add_negation(ConceptId(3)).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut v = three();
        assert!(v.add_base("a", "", |_| true).is_err());
    }

    #[test]
    fn single_literal_clause_is_the_concept() {
        let mut v = three();
        let c = v.make_compound_clause(&[Literal::pos(ConceptId(1))]).unwrap();
        for s in 0u8..8 {
            let cv = v.evaluate(&s);
            assert_eq!(cv.get(c), cv.get(ConceptId(1)));
        }
    }

    #[test]
    fn clause_with_negative_literal() {
        let mut v = three();
        let c = v
            .make_compound_clause(&[Literal::neg(ConceptId(0)), Literal::pos(ConceptId(1))])
            .unwrap();
        assert_eq!(v.name(c), "not_a_or_b");
        // a false
        assert!(v.evaluate(&0).get(c));
        // a true, b false
        assert!(!v.evaluate(&1).get(c));
        assert!(v.evaluate(&3).get(c));
    }

    #[test]
    fn empty_clause_rejected() {
        let mut v = three();
        assert!(v.make_compound_clause(&[]).is_err());
    }

    #[test]
    fn cnf_clauses_reproduce_formula_on_all_assignments() {
        // (a -> b) && (b xor c) in CNF: (!a | b) & (b | c) & (!b | !c)
        let formula = |s: u8| {
            let (a, b, c) = (s & 1 != 0, s & 2 != 0, s & 4 != 0);
            (!a || b) && (b ^ c)
        };
        let mut v = three();
        let (a, b, c) = (ConceptId(0), ConceptId(1), ConceptId(2));
        let clauses = [
            v.make_compound_clause(&[Literal::neg(a), Literal::pos(b)]).unwrap(),
            v.make_compound_clause(&[Literal::pos(b), Literal::pos(c)]).unwrap(),
            v.make_compound_clause(&[Literal::neg(b), Literal::neg(c)]).unwrap(),
        ];
        for s in 0u8..8 {
            let cv = v.evaluate(&s);
            assert_eq!(clauses.iter().all(|&k| cv.get(k)), formula(s), "assignment {s:03b}");
        }
    }

    #[test]
    fn exact_observation_matches_evaluation() {
        let v = three().extend_with_negations();
        let obs = ObservationModel::exact(v.len());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0u8..8 {
            assert_eq!(v.observe(&obs, &s, &mut rng), v.evaluate(&s));
        }
    }

    #[test]
    fn noisy_observation_rate_is_calibrated() {
        let v = three();
        let obs = ObservationModel::uniform(3, ObservationRates::new(0.95, 0.05).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let (mut tp, mut fp) = (0, 0);
        for _ in 0..n {
            // state 1: a present, b absent
            let o = v.observe(&obs, &1, &mut rng);
            tp += o.get(ConceptId(0)) as usize;
            fp += o.get(ConceptId(1)) as usize;
        }
        assert!((tp as f64 / n as f64 - 0.95).abs() < 0.01);
        assert!((fp as f64 / n as f64 - 0.05).abs() < 0.01);
    }

    #[test]
    fn rates_validated() {
        assert!(ObservationRates::new(1.1, 0.0).is_err());
        assert!(ObservationRates::new(0.5, -0.1).is_err());
    }

    #[test]
    fn marginals() {
        let v = three();
        assert!(estimate_marginals(&v, Vec::<u8>::new()).is_err());
        let m = estimate_marginals(&v, [7u8, 7, 7]).unwrap();
        assert_eq!(m.p, vec![1.0, 1.0, 1.0]);
        assert_eq!(m.sample_count, 3);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let states: Vec<u8> = (0..10_000).map(|_| rng.gen_bool(0.3) as u8).collect();
        let m = estimate_marginals(&v, &states).unwrap();
        assert!((m.p[0] - 0.3).abs() < 0.01);
        assert_eq!(m.p[1], 0.0);
    }

    #[test]
    fn without_drops_derived() {
        let mut v = three().extend_with_negations();
        v.make_compound_clause(&[Literal::pos(ConceptId(0)), Literal::pos(ConceptId(1))])
            .unwrap();
        let w = v.without(&["a"]);
        let names: Vec<_> = w.concepts().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["b", "c", "not_b", "not_c"]);
        assert!(w.evaluate(&2).get(w.find("b").unwrap()));
    }

    #[test]
    fn lift_projects_states() {
        let v = three().extend_with_negations();
        let lifted: Vocabulary<(u8, u8)> = v.lift(|p: &(u8, u8)| &p.0);
        assert_eq!(lifted.evaluate(&(5, 0)), v.evaluate(&5));
    }
}
