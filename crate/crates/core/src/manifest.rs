//! Vocabulary manifest files.
//!
//! ```text
//! foilscope-vocabulary v1
//! # comments and blank lines are ignored
//! concept switch_on = base
//! concept not_switch_on = not switch_on
//! concept box_left_or_not_wall_left = any box_left, !wall_left
//! describe switch_on = the switch cell has been turned on
//! observe switch_on = 0.95 0.05
//! ```
//!
//! `concept` lines declare concepts in vocabulary order. `not` and `any`
//! refer to base concepts declared earlier; `!` negates a clause literal.
//! `describe` and `observe` attach a description and detector rates
//! (true-positive, false-positive) to a declared concept. Serializing a
//! parsed manifest yields the canonical form, which parses back to the same
//! value.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::concepts::{Detector, Literal, ObservationModel, ObservationRates, Vocabulary};
use crate::{Error, Result};

pub const HEADER: &str = "foilscope-vocabulary v1";

#[derive(Clone, Debug, PartialEq)]
pub enum ManifestKind {
    Base,
    Not(String),
    /// `(name, positive)` literals.
    Any(Vec<(String, bool)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestConcept {
    pub name: String,
    pub kind: ManifestKind,
    pub description: Option<String>,
    pub observation: Option<ObservationRates>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct VocabularyManifest {
    pub concepts: Vec<ManifestConcept>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn split_assignment(rest: &str, line: usize) -> Result<(&str, &str)> {
    let (lhs, rhs) = rest.split_once('=').ok_or_else(|| Error::ManifestParse {
        line,
        message: "expected `name = value`".into(),
    })?;
    let name = lhs.trim();
    if !valid_name(name) {
        return Err(Error::ManifestParse {
            line,
            message: format!("invalid concept name `{name}`"),
        });
    }
    Ok((name, rhs.trim()))
}

impl VocabularyManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = VocabularyManifest::default();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut saw_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            if !saw_header {
                if l != HEADER {
                    return Err(Error::ManifestParse {
                        line,
                        message: format!("expected header `{HEADER}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let err = |message: String| Error::ManifestParse { line, message };
            let (keyword, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
            match keyword {
                "concept" => {
                    let (name, value) = split_assignment(rest, line)?;
                    if index.contains_key(name) {
                        return Err(err(format!("duplicate concept `{name}`")));
                    }
                    let base_ref = |n: &str, index: &HashMap<String, usize>, m: &VocabularyManifest| {
                        match index.get(n) {
                            Some(&k) if m.concepts[k].kind == ManifestKind::Base => Ok(()),
                            Some(_) => Err(err(format!("`{n}` is not a base concept"))),
                            None => Err(err(format!("unknown concept `{n}`"))),
                        }
                    };
                    let kind = if value == "base" {
                        ManifestKind::Base
                    } else if let Some(target) = value.strip_prefix("not ") {
                        let target = target.trim();
                        base_ref(target, &index, &manifest)?;
                        ManifestKind::Not(target.to_string())
                    } else if let Some(lits) = value.strip_prefix("any ") {
                        let mut out = Vec::new();
                        for lit in lits.split(',') {
                            let lit = lit.trim();
                            let (n, positive) = match lit.strip_prefix('!') {
                                Some(n) => (n.trim(), false),
                                None => (lit, true),
                            };
                            base_ref(n, &index, &manifest)?;
                            out.push((n.to_string(), positive));
                        }
                        ManifestKind::Any(out)
                    } else {
                        return Err(err(format!("unknown concept kind `{value}`")));
                    };
                    index.insert(name.to_string(), manifest.concepts.len());
                    manifest.concepts.push(ManifestConcept {
                        name: name.to_string(),
                        kind,
                        description: None,
                        observation: None,
                    });
                }
                "describe" => {
                    let (name, value) = split_assignment(rest, line)?;
                    let k = *index.get(name).ok_or_else(|| err(format!("unknown concept `{name}`")))?;
                    manifest.concepts[k].description = Some(value.to_string());
                }
                "observe" => {
                    let (name, value) = split_assignment(rest, line)?;
                    let k = *index.get(name).ok_or_else(|| err(format!("unknown concept `{name}`")))?;
                    let nums: Vec<&str> = value.split_whitespace().collect();
                    if nums.len() != 2 {
                        return Err(err("observe needs two probabilities".into()));
                    }
                    let parse = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad probability `{s}`")));
                    let rates = ObservationRates::new(parse(nums[0])?, parse(nums[1])?)
                        .map_err(|e| err(e.to_string()))?;
                    manifest.concepts[k].observation = Some(rates);
                }
                other => return Err(err(format!("unknown keyword `{other}`"))),
            }
        }
        if !saw_header {
            return Err(Error::ManifestParse {
                line: 1,
                message: format!("missing header `{HEADER}`"),
            });
        }
        Ok(manifest)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        for c in &self.concepts {
            let kind = match &c.kind {
                ManifestKind::Base => "base".to_string(),
                ManifestKind::Not(n) => format!("not {n}"),
                ManifestKind::Any(lits) => format!(
                    "any {}",
                    lits.iter()
                        .map(|(n, p)| if *p { n.clone() } else { format!("!{n}") })
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            };
            writeln!(out, "concept {} = {kind}", c.name).unwrap();
        }
        for c in &self.concepts {
            if let Some(d) = &c.description {
                writeln!(out, "describe {} = {}", c.name, d.trim()).unwrap();
            }
        }
        for c in &self.concepts {
            if let Some(r) = c.observation {
                writeln!(out, "observe {} = {} {}", c.name, r.p_true_pos, r.p_false_pos).unwrap();
            }
        }
        out
    }

    /// Manifest describing an existing vocabulary, with uniform rates.
    pub fn from_vocabulary<S>(vocab: &Vocabulary<S>, rates: Option<ObservationRates>) -> Self {
        use crate::concepts::Provenance;
        let concepts = vocab
            .concepts()
            .iter()
            .map(|c| ManifestConcept {
                name: c.name.clone(),
                kind: match &c.provenance {
                    Provenance::Base => ManifestKind::Base,
                    Provenance::Negation(b) => ManifestKind::Not(vocab.name(*b).to_string()),
                    Provenance::Compound(lits) => ManifestKind::Any(
                        lits.iter()
                            .map(|l| (vocab.name(l.concept).to_string(), l.positive))
                            .collect(),
                    ),
                },
                description: Some(c.description.clone()).filter(|d| !d.is_empty()),
                observation: rates,
            })
            .collect();
        Self { concepts }
    }

    /// Binds manifest names to detectors. Base concepts must be provided by
    /// `detectors` (name, description, detector). Concepts without `observe`
    /// lines get `default_rates`.
    pub fn build<S>(
        &self,
        detectors: &[(String, String, Detector<S>)],
        default_rates: ObservationRates,
    ) -> Result<(Vocabulary<S>, ObservationModel)> {
        let mut vocab = Vocabulary::new();
        let mut rates = Vec::with_capacity(self.concepts.len());
        for c in &self.concepts {
            let id = match &c.kind {
                ManifestKind::Base => {
                    let (_, desc, det) = detectors
                        .iter()
                        .find(|(n, _, _)| *n == c.name)
                        .ok_or_else(|| Error::Contract(format!("no detector for base concept `{}`", c.name)))?;
                    let desc = c.description.clone().unwrap_or_else(|| desc.clone());
                    vocab.add_base_arc(c.name.clone(), desc, det.clone())?
                }
                ManifestKind::Not(n) => {
                    let b = vocab.find(n).expect("parser checked reference");
                    let id = vocab.add_negation(b)?;
                    if vocab.name(id) != c.name {
                        return Err(Error::Contract(format!(
                            "negation of `{n}` must be named `not_{n}`, found `{}`",
                            c.name
                        )));
                    }
                    id
                }
                ManifestKind::Any(lits) => {
                    let lits: Vec<Literal> = lits
                        .iter()
                        .map(|(n, p)| Literal {
                            concept: vocab.find(n).expect("parser checked reference"),
                            positive: *p,
                        })
                        .collect();
                    vocab.add_compound_named(c.name.clone(), &lits)?
                }
            };
            debug_assert_eq!(id.0, rates.len());
            rates.push(c.observation.unwrap_or(default_rates));
        }
        Ok((vocab, ObservationModel::from_rates(rates)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    const SAMPLE: &str = "\
# sokoban
foilscope-vocabulary v1
concept a = base
concept b = base
concept not_a = not a
concept a_or_not_b = any a, !b
describe a = first   thing
observe a = 0.95 0.05
";

    #[test]
    fn parses_sample() {
        let m = VocabularyManifest::parse(SAMPLE).unwrap();
        assert_eq!(m.concepts.len(), 4);
        assert_eq!(m.concepts[2].kind, ManifestKind::Not("a".into()));
        assert_eq!(
            m.concepts[3].kind,
            ManifestKind::Any(vec![("a".into(), true), ("b".into(), false)])
        );
        assert_eq!(m.concepts[0].description.as_deref(), Some("first   thing"));
        assert_eq!(m.concepts[0].observation, Some(ObservationRates::new(0.95, 0.05).unwrap()));
        assert_eq!(VocabularyManifest::parse(&m.serialize()).unwrap(), m);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "foilscope-vocabulary v1\nconcept a = base\nconcept b = not c\n";
        match VocabularyManifest::parse(bad) {
            Err(Error::ManifestParse { line, .. }) => assert_eq!(line, 3),
            r => panic!("{r:?}"),
        }
        assert!(VocabularyManifest::parse("concept a = base").is_err());
        assert!(VocabularyManifest::parse("").is_err());
        assert!(VocabularyManifest::parse("foilscope-vocabulary v1\nconcept a = base\nconcept a = base").is_err());
        assert!(VocabularyManifest::parse("foilscope-vocabulary v1\nconcept a = base\nobserve a = 2 0").is_err());
        assert!(VocabularyManifest::parse("foilscope-vocabulary v1\nconcept a = base\nconcept n = not not_a").is_err());
    }

    #[test]
    fn builds_vocabulary() {
        let m = VocabularyManifest::parse(SAMPLE).unwrap();
        let dets: Vec<(String, String, Detector<u8>)> = vec![
            ("a".into(), "bit0".into(), Arc::new(|s: &u8| s & 1 != 0)),
            ("b".into(), "bit1".into(), Arc::new(|s: &u8| s & 2 != 0)),
        ];
        let (v, obs) = m.build(&dets, ObservationRates::EXACT).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.info(v.find("a").unwrap()).description, "first   thing");
        assert_eq!(v.info(v.find("b").unwrap()).description, "bit1");
        assert!(!obs.is_exact());
        let cv = v.evaluate(&2);
        assert!(!cv.get(v.find("a_or_not_b").unwrap()));
        // a manifest naming a base concept the environment lacks
        let m2 = VocabularyManifest::parse("foilscope-vocabulary v1\nconcept zz = base\n").unwrap();
        assert!(m2.build(&dets, ObservationRates::EXACT).is_err());
    }

    fn arb_manifest() -> impl Strategy<Value = VocabularyManifest> {
        let rates = (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b)| ObservationRates::new(a, b).unwrap());
        (
            1usize..6,
            prop::collection::vec(prop::option::of("[a-z][a-z ]{0,12}[a-z]"), 12),
            prop::collection::vec(prop::option::of(rates), 12),
            prop::collection::vec(any::<(bool, u8, bool)>(), 0..4),
        )
            .prop_map(|(nbase, descs, obs, compounds)| {
                let mut concepts = Vec::new();
                for i in 0..nbase {
                    concepts.push((format!("c{i}"), ManifestKind::Base));
                }
                for i in 0..nbase {
                    if i % 2 == 0 {
                        concepts.push((format!("not_c{i}"), ManifestKind::Not(format!("c{i}"))));
                    }
                }
                for (j, (p, k, q)) in compounds.into_iter().enumerate() {
                    let a = format!("c{}", k as usize % nbase);
                    let b = format!("c{}", (k as usize / 7) % nbase);
                    concepts.push((format!("k{j}"), ManifestKind::Any(vec![(a, p), (b, q)])));
                }
                VocabularyManifest {
                    concepts: concepts
                        .into_iter()
                        .enumerate()
                        .map(|(i, (name, kind))| ManifestConcept {
                            name,
                            kind,
                            description: descs[i % 12].clone(),
                            observation: obs[i % 12],
                        })
                        .collect(),
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(m in arb_manifest()) {
            let text = m.serialize();
            prop_assert_eq!(VocabularyManifest::parse(&text).unwrap(), m);
        }

        #[test]
        fn parser_never_panics(s in ".{0,200}") {
            let _ = VocabularyManifest::parse(&s);
        }
    }
}
