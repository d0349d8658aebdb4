//! Online Passive-Aggressive training over latent gold structures.
//!
//! For every document the current weights decode a structure; if it does not
//! match gold, the best-scoring gold-consistent structure is decoded and the
//! weights move towards it by `τ = min(C, loss / ||Δ||²)`.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Clustering;
use crate::corpus::Document;
use crate::decoder::{decode, decode_gold, DecodeError, LinearScorer};
use crate::features::{DocumentFeatures, FeatureConfig, FeatureFamily, FeatureVector, WeightVector};
use crate::relgraph::{inferred_graph, is_inferable, loss, matches, RelationGraph, Task};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Passes over the corpus.
    pub iterations: usize,
    /// Cap on the step size; `None` leaves it unbounded.
    pub aggressiveness: Option<f64>,
    pub averaging: bool,
    pub seed: u64,
    /// Reshuffle document order every epoch (seeded).
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20,
            aggressiveness: None,
            averaging: true,
            seed: 0,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.iterations == 0 {
            return Err(TrainError::Config("iterations must be at least 1".into()));
        }
        if let Some(c) = self.aggressiveness {
            if !(c.is_finite() && c > 0.0) {
                return Err(TrainError::Config(format!(
                    "aggressiveness must be a positive number, got {c}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("document `{0}` has no gold annotation")]
    MissingGold(String),
    #[error("document `{doc_id}`: {source}")]
    Decode {
        doc_id: String,
        source: DecodeError,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model file has format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("model was trained for {found}, but {expected} was requested")]
    WrongTask { expected: Task, found: Task },
}

/// Which weight vector to decode with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightChoice {
    #[default]
    Averaged,
    Final,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub task: Task,
    pub config: TrainConfig,
    pub disabled_families: BTreeSet<FeatureFamily>,
    pub weights: WeightVector,
    pub averaged_weights: WeightVector,
}

impl Model {
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig::without(self.disabled_families.iter().copied())
    }

    pub fn weights(&self, choice: WeightChoice) -> &WeightVector {
        match choice {
            WeightChoice::Averaged => &self.averaged_weights,
            WeightChoice::Final => &self.weights,
        }
    }

    pub fn check_task(&self, expected: Task) -> Result<(), ModelError> {
        if self.task == expected {
            Ok(())
        } else {
            Err(ModelError::WrongTask {
                expected,
                found: self.task,
            })
        }
    }

    /// Decodes one document. Sequencing checks use `clusters` as events.
    pub fn decode(&self, doc: &Document, choice: WeightChoice, clusters: &Clustering) -> RelationGraph {
        let features = DocumentFeatures::compute(doc, self.task, &self.feature_config());
        let scorer = LinearScorer {
            features: &features,
            weights: self.weights(choice),
        };
        decode(&scorer, doc.n(), self.task, clusters)
    }
}

/// Φ(gold) − Φ(system), leaving out system arcs that gold lacks but whose
/// relation the gold inferred graph already implies.
pub fn feature_delta(
    gold: &RelationGraph,
    system: &RelationGraph,
    features: &DocumentFeatures,
    clusters: &Clustering,
) -> FeatureVector {
    let inferred = inferred_graph(gold, clusters).ok();
    let mut delta = FeatureVector::new();
    for arc in gold.arcs() {
        delta.add_scaled(features.get(arc), 1.0);
    }
    for arc in system.arcs() {
        let inferable = !gold.contains(arc)
            && inferred
                .as_ref()
                .is_some_and(|inf| is_inferable(arc, inf, clusters));
        if !inferable {
            delta.add_scaled(features.get(arc), -1.0);
        }
    }
    delta
}

/// The gold structure in canonical form, used to test for a match.
pub fn gold_graph(doc: &Document, task: Task) -> Result<RelationGraph, TrainError> {
    if doc.gold.is_none() {
        return Err(TrainError::MissingGold(doc.doc_id.clone()));
    }
    let clusters = doc.gold_clustering();
    Ok(match task {
        Task::Coreference => RelationGraph::coref_chain(doc.n(), &clusters),
        Task::Sequencing => RelationGraph::from_after_pairs(doc.n(), doc.gold_after_pairs())
            .map_err(|e| TrainError::Decode {
                doc_id: doc.doc_id.clone(),
                source: DecodeError::Inconsistent(e.to_string()),
            })?,
    })
}

/// What one update step did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub matched: bool,
    pub loss: usize,
    pub tau: f64,
    pub delta_norm_sq: f64,
    /// Positive loss with an empty feature delta; no update was made.
    pub anomaly: bool,
    /// Change of `w . Δ` caused by the update.
    pub margin_gain: f64,
}

/// A document prepared for repeated training visits.
pub struct TrainingInstance<'a> {
    pub doc: &'a Document,
    pub features: DocumentFeatures,
    pub clusters: Clustering,
    pub gold: RelationGraph,
}

impl<'a> TrainingInstance<'a> {
    pub fn new(doc: &'a Document, task: Task, cfg: &FeatureConfig) -> Result<Self, TrainError> {
        Ok(TrainingInstance {
            gold: gold_graph(doc, task)?,
            features: DocumentFeatures::compute(doc, task, cfg),
            clusters: doc.gold_clustering(),
            doc,
        })
    }
}

/// One Passive-Aggressive step on one document; `step` is the averaging
/// clock (number of document visits before this one).
pub fn pa_step(
    w: &mut WeightVector,
    inst: &TrainingInstance<'_>,
    aggressiveness: Option<f64>,
    step: u64,
) -> Result<StepOutcome, TrainError> {
    let task = inst.features.task();
    let scorer = LinearScorer {
        features: &inst.features,
        weights: w,
    };
    let system = decode(&scorer, inst.doc.n(), task, &inst.clusters);
    if matches(&system, &inst.gold, &inst.clusters) {
        return Ok(StepOutcome {
            matched: true,
            ..StepOutcome::default()
        });
    }
    let latent = decode_gold(inst.doc, &scorer, task, &inst.clusters).map_err(|source| {
        TrainError::Decode {
            doc_id: inst.doc.doc_id.clone(),
            source,
        }
    })?;
    assert!(
        matches(&latent, &inst.gold, &inst.clusters),
        "gold-constrained decode of `{}` does not match gold",
        inst.doc.doc_id
    );

    let delta = feature_delta(&latent, &system, &inst.features, &inst.clusters);
    let loss = loss(&latent, &system, &inst.clusters);
    let norm_sq = delta.norm_sq();
    let mut out = StepOutcome {
        loss,
        delta_norm_sq: norm_sq,
        ..StepOutcome::default()
    };
    if norm_sq == 0.0 {
        out.anomaly = loss > 0;
        return Ok(out);
    }
    let mut tau = loss as f64 / norm_sq;
    if let Some(c) = aggressiveness {
        tau = tau.min(c);
    }
    let before = w.dot(&delta);
    w.update(&delta, tau, step);
    let after = w.dot(&delta);
    let expected = tau * norm_sq;
    let tolerance = 1e-9 * (1.0 + before.abs() + after.abs() + expected);
    assert!(
        (after - before - expected).abs() <= tolerance,
        "update moved w.Δ by {} instead of {expected}",
        after - before
    );
    assert!(after > before, "update did not increase the margin");
    out.tau = tau;
    out.margin_gain = after - before;
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Fraction of documents already matched when visited.
    pub match_rate: f64,
    pub updates: usize,
    pub anomalies: usize,
    pub epoch_loss: usize,
    pub cumulative_loss: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

pub fn train(
    corpus: &[Document],
    task: Task,
    config: &TrainConfig,
    features: &FeatureConfig,
) -> Result<(Model, TrainLog), TrainError> {
    train_with(corpus, task, config, features, |_| {})
}

/// Trains, reporting each finished epoch to `on_epoch`.
pub fn train_with(
    corpus: &[Document],
    task: Task,
    config: &TrainConfig,
    features: &FeatureConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model, TrainLog), TrainError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let instances = corpus
        .iter()
        .map(|d| TrainingInstance::new(d, task, features))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut w = WeightVector::new();
    let mut step = 0u64;
    let mut log = TrainLog::default();
    let mut cumulative = 0;
    for epoch in 1..=config.iterations {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut stats = EpochStats {
            epoch,
            ..EpochStats::default()
        };
        let mut matched = 0;
        for &k in &order {
            let out = pa_step(&mut w, &instances[k], config.aggressiveness, step)?;
            step += 1;
            matched += usize::from(out.matched);
            stats.updates += usize::from(out.tau > 0.0);
            stats.anomalies += usize::from(out.anomaly);
            stats.epoch_loss += out.loss;
        }
        cumulative += stats.epoch_loss;
        stats.cumulative_loss = cumulative;
        stats.match_rate = matched as f64 / instances.len() as f64;
        on_epoch(&stats);
        log.epochs.push(stats);
    }

    let averaged_weights = if config.averaging {
        w.averaged(step)
    } else {
        w.clone()
    };
    let model = Model {
        task,
        config: config.clone(),
        disabled_families: features.disabled.clone(),
        weights: WeightVector::from_map(w.sorted()),
        averaged_weights,
    };
    Ok((model, log))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    task: Task,
    config: TrainConfig,
    disabled_families: Vec<FeatureFamily>,
    weights: BTreeMap<String, f64>,
    averaged_weights: BTreeMap<String, f64>,
}

/// Serialized model text; equal models give identical bytes.
pub fn model_to_string(m: &Model) -> String {
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        task: m.task,
        config: m.config.clone(),
        disabled_families: m.disabled_families.iter().copied().collect(),
        weights: m.weights.sorted(),
        averaged_weights: m.averaged_weights.sorted(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_str(text: &str) -> Result<Model, ModelError> {
    // check the version before the schema so old files get a clear error
    let raw: serde_json::Value = serde_json::from_str(text)?;
    let found = raw
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .unwrap_or(0) as u32;
    if found != MODEL_FORMAT_VERSION {
        return Err(ModelError::Version {
            found,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(raw)?;
    Ok(Model {
        task: file.task,
        config: file.config,
        disabled_families: file.disabled_families.into_iter().collect(),
        weights: WeightVector::from_map(file.weights),
        averaged_weights: WeightVector::from_map(file.averaged_weights),
    })
}

pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, model_to_string(m))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    model_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::simple_doc;
    use crate::corpus::GoldAnnotation;
    use crate::relgraph::{Arc, Label};

    fn doc_with_gold(specs: &[(&str, &str, &str)], coref: &[&[&str]], after: &[(&str, &str)]) -> Document {
        let mut d = simple_doc(specs);
        d.gold = Some(GoldAnnotation {
            coref_clusters: coref
                .iter()
                .map(|c| c.iter().map(|s| s.to_string()).collect())
                .collect(),
            after_links: after
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            subevent_links: vec![],
        });
        d.validate().unwrap();
        d
    }

    #[test]
    fn identical_graphs_have_empty_delta() {
        let d = doc_with_gold(&[("a", "kill", "Life.Die"), ("b", "die", "Life.Die")], &[], &[]);
        let f = DocumentFeatures::compute(&d, Task::Coreference, &FeatureConfig::default());
        let g = RelationGraph::all_root(2, Task::Coreference);
        assert!(feature_delta(&g, &g, &f, &d.gold_clustering()).is_empty());
    }

    #[test]
    fn disjoint_graphs_subtract_arc_features() {
        let d = doc_with_gold(&[("a", "kill", "Life.Die"), ("b", "die", "Life.Die")], &[&["a", "b"]], &[]);
        let f = DocumentFeatures::compute(&d, Task::Coreference, &FeatureConfig::default());
        let c = d.gold_clustering();
        let gold = RelationGraph::coref_chain(2, &c);
        let system = RelationGraph::all_root(2, Task::Coreference);
        let delta = feature_delta(&gold, &system, &f, &c);
        // the shared root of mention 1 cancels
        let mut expected = f.get(&Arc::new(1, 2, Label::Coref)).clone();
        expected.add_scaled(f.get(&Arc::root(2)), -1.0);
        assert_eq!(delta, expected);
    }

    #[test]
    fn inferable_system_arc_is_left_out() {
        // gold chain 1 -> 2 -> 3; the system adds the implied 1 -> 3
        let d = doc_with_gold(
            &[("a", "arrest", "Justice.Arrest-Jail"), ("b", "charge", "Justice.Charge-Indict"), ("c", "convict", "Justice.Convict")],
            &[],
            &[("a", "b"), ("b", "c")],
        );
        let f = DocumentFeatures::compute(&d, Task::Sequencing, &FeatureConfig::default());
        let c = d.gold_clustering();
        let gold = RelationGraph::from_after_pairs(3, [(1, 2), (2, 3)]).unwrap();
        let mut system = gold.clone();
        system.insert(Arc::new(1, 3, Label::AfterForward)).unwrap();
        assert!(feature_delta(&gold, &system, &f, &c).is_empty());
        let mut wrong = gold.clone();
        wrong.insert(Arc::new(1, 3, Label::AfterBackward)).unwrap();
        assert!(!feature_delta(&gold, &wrong, &f, &c).is_empty());
    }

    #[test]
    fn tau_arithmetic() {
        // loss 3 over ||Δ||² = 4
        let delta: FeatureVector = (0..4).map(|k| (format!("k{k}"), 1.0)).collect();
        assert_eq!(delta.norm_sq(), 4.0);
        let mut w = WeightVector::new();
        w.update(&delta, 3.0 / delta.norm_sq(), 0);
        assert_eq!(w.get("k0"), 0.75);
    }

    #[test]
    fn two_mention_document_learned_quickly() {
        let d = doc_with_gold(
            &[("a", "arrest", "Justice.Arrest-Jail"), ("b", "charge", "Justice.Charge-Indict")],
            &[],
            &[("a", "b")],
        );
        let inst = TrainingInstance::new(&d, Task::Sequencing, &FeatureConfig::default()).unwrap();
        let mut w = WeightVector::new();
        let mut steps = 0;
        while !pa_step(&mut w, &inst, None, steps).unwrap().matched {
            steps += 1;
            assert!(steps < 5, "not learned in 5 steps");
        }
        // already-correct document leaves w alone
        let before = w.clone();
        assert!(pa_step(&mut w, &inst, None, steps).unwrap().matched);
        assert_eq!(w, before);
    }

    #[test]
    fn linkless_corpus_gives_zero_weights() {
        let d = doc_with_gold(&[("a", "kill", "Life.Die"), ("b", "pay", "Transaction.Transfer-Money")], &[], &[]);
        let cfg = TrainConfig {
            iterations: 1,
            ..TrainConfig::default()
        };
        for task in [Task::Coreference, Task::Sequencing] {
            let (m, log) = train(std::slice::from_ref(&d), task, &cfg, &FeatureConfig::default()).unwrap();
            match task {
                Task::Sequencing => {
                    assert!(m.weights.is_empty());
                    assert_eq!(log.epochs[0].match_rate, 1.0);
                }
                // zero weights tie every coref arc with the root, and the
                // root loses ties, so the first visit links and is corrected
                Task::Coreference => {
                    assert_eq!(log.epochs[0].match_rate, 0.0);
                    assert!(!m.weights.is_empty());
                }
            }
        }
    }

    #[test]
    fn empty_corpus_and_bad_config_rejected() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&[], Task::Coreference, &cfg, &FeatureConfig::default()),
            Err(TrainError::EmptyCorpus)
        ));
        let bad = TrainConfig {
            iterations: 0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn model_round_trip_and_version_check() {
        let d = doc_with_gold(&[("a", "kill", "Life.Die"), ("b", "die", "Life.Die")], &[&["a", "b"]], &[]);
        let (m, _) = train(
            std::slice::from_ref(&d),
            Task::Coreference,
            &TrainConfig::default(),
            &FeatureConfig::without([FeatureFamily::Frame]),
        )
        .unwrap();
        let text = model_to_string(&m);
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back), text);
        assert!(back.check_task(Task::Sequencing).is_err());
        let old = text.replace("\"version\": 1", "\"version\": 0");
        assert!(matches!(model_from_str(&old), Err(ModelError::Version { found: 0, .. })));
    }
}
