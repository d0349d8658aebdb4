//! Arc-factored decoding: one best antecedent per mention for coreference
//! (LAT), greedy best-first multi-antecedent decoding for sequencing (LAG),
//! and the gold-constrained variants used to pick the latent gold structure
//! during training.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::clustering::Clustering;
use crate::corpus::Document;
use crate::features::{DocumentFeatures, WeightVector};
use crate::relgraph::{
    event_edge, transitive_reduction, Arc, EventDag, Label, RelationGraph, Task,
};

/// Scores a single arc.
pub trait Scorer {
    fn score(&self, arc: &Arc) -> f64;
}

impl<F: Fn(&Arc) -> f64> Scorer for F {
    fn score(&self, arc: &Arc) -> f64 {
        self(arc)
    }
}

/// `w . Φ(arc)` over precomputed document features.
pub struct LinearScorer<'a> {
    pub features: &'a DocumentFeatures,
    pub weights: &'a WeightVector,
}

impl Scorer for LinearScorer<'_> {
    fn score(&self, arc: &Arc) -> f64 {
        self.weights.dot(self.features.get(arc))
    }
}

/// Sum of arc scores.
pub fn graph_score(g: &RelationGraph, scorer: &impl Scorer) -> f64 {
    g.arcs().map(|a| scorer.score(a)).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("document has no gold annotation")]
    MissingGold,
    #[error("gold restriction leaves mention {0} with no candidate antecedent")]
    EmptyCandidates(usize),
    #[error("inconsistent gold annotation: {0}")]
    Inconsistent(String),
}

/// An antecedent (0 is the root) and the labels allowed from it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub antecedent: usize,
    pub labels: Vec<Label>,
}

/// Per-mention candidate antecedents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AntecedentSets {
    task: Task,
    sets: Vec<Vec<Candidate>>,
}

impl AntecedentSets {
    /// Every earlier mention plus the root, with every label of the task.
    pub fn full(n: usize, task: Task) -> Self {
        let labels = match task {
            Task::Coreference => vec![Label::Coref],
            Task::Sequencing => vec![Label::AfterForward, Label::AfterBackward],
        };
        let sets = (1..=n)
            .map(|j| {
                let mut c = vec![root_candidate()];
                c.extend((1..j).map(|i| Candidate {
                    antecedent: i,
                    labels: labels.clone(),
                }));
                c
            })
            .collect();
        AntecedentSets { task, sets }
    }

    /// Earlier gold-coreferent mentions, or only the root if there are none.
    pub fn gold_coref(doc: &Document) -> Result<Self, DecodeError> {
        if doc.gold.is_none() {
            return Err(DecodeError::MissingGold);
        }
        let clusters = doc.gold_clustering();
        let sets = (1..=doc.n())
            .map(|j| {
                let earlier: Vec<Candidate> = clusters
                    .cluster_of(j)
                    .unwrap_or(&[])
                    .iter()
                    .filter(|&&i| i < j)
                    .map(|&i| Candidate {
                        antecedent: i,
                        labels: vec![Label::Coref],
                    })
                    .collect();
                if earlier.is_empty() {
                    vec![root_candidate()]
                } else {
                    earlier
                }
            })
            .collect();
        Ok(AntecedentSets {
            task: Task::Coreference,
            sets,
        })
    }

    /// For each representative, the earlier representatives whose events
    /// share a gold After edge with its event, labelled with the gold
    /// direction. All other mentions get only the root.
    pub fn gold_sequencing(
        doc: &Document,
        clusters: &Clustering,
        representatives: &[usize],
    ) -> Result<Self, DecodeError> {
        let edges = gold_event_edges(doc, clusters)?;
        let reps: BTreeSet<usize> = representatives.iter().copied().collect();
        let mut sets = vec![vec![root_candidate()]; doc.n()];
        for &j in &reps {
            let ej = clusters.representative(j);
            let mut cands = Vec::new();
            for &i in reps.range(..j) {
                let ei = clusters.representative(i);
                let label = if edges.contains(&(ei, ej)) {
                    Label::AfterForward
                } else if edges.contains(&(ej, ei)) {
                    Label::AfterBackward
                } else {
                    continue;
                };
                cands.push(Candidate {
                    antecedent: i,
                    labels: vec![label],
                });
            }
            if !cands.is_empty() {
                sets[j - 1] = cands;
            }
        }
        Ok(AntecedentSets {
            task: Task::Sequencing,
            sets,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    /// Candidates of mention `j` (1-based).
    pub fn get(&self, j: usize) -> &[Candidate] {
        &self.sets[j - 1]
    }

    pub fn allows_root(&self, j: usize) -> bool {
        self.get(j).iter().any(|c| c.antecedent == 0)
    }

    /// Every mention has a candidate and every candidate precedes it.
    fn check(&self) -> Result<(), DecodeError> {
        for j in 1..=self.n() {
            let c = self.get(j);
            if c.is_empty() || c.iter().all(|c| c.labels.is_empty()) {
                return Err(DecodeError::EmptyCandidates(j));
            }
            assert!(
                c.iter().all(|c| c.antecedent < j),
                "candidate of mention {j} does not precede it"
            );
        }
        Ok(())
    }
}

fn root_candidate() -> Candidate {
    Candidate {
        antecedent: 0,
        labels: vec![Label::Root],
    }
}

/// Gold After links lifted to (earlier, later) pairs of cluster
/// representatives.
fn gold_event_edges(
    doc: &Document,
    clusters: &Clustering,
) -> Result<BTreeSet<(usize, usize)>, DecodeError> {
    if doc.gold.is_none() {
        return Err(DecodeError::MissingGold);
    }
    let mut edges = BTreeSet::new();
    for (a, b) in doc.gold_after_pairs() {
        let e = (clusters.representative(a), clusters.representative(b));
        if e.0 == e.1 {
            return Err(DecodeError::Inconsistent(format!(
                "after link between coreferent mentions {a} and {b}"
            )));
        }
        edges.insert(e);
    }
    Ok(edges)
}

/// One arc per mention: the best-scoring candidate, with ties going to the
/// closest antecedent and the root losing every tie.
pub fn decode_coref(scorer: &impl Scorer, candidates: &AntecedentSets) -> RelationGraph {
    let n = candidates.n();
    let mut g = RelationGraph::new(n, Task::Coreference);
    for j in 1..=n {
        let mut best: Option<(f64, Arc)> = None;
        let mut cands: Vec<(usize, Label)> = candidates
            .get(j)
            .iter()
            .flat_map(|c| c.labels.iter().map(move |&l| (c.antecedent, l)))
            .filter(|&(_, l)| l == Label::Coref || l == Label::Root)
            .collect();
        // root first, then antecedents left to right; `>=` hands ties to the
        // later candidate
        cands.sort_by_key(|&(i, _)| i);
        for (i, label) in cands {
            let arc = Arc::new(i, j, label);
            let s = scorer.score(&arc);
            if best.is_none_or(|(b, _)| s >= b) {
                best = Some((s, arc));
            }
        }
        let (_, arc) = best.expect("every mention has a candidate");
        g.insert(arc).expect("candidate arcs are well-formed");
    }
    g
}

/// Event-level reachability maintained during LAG decoding.
#[derive(Clone, Debug, Default)]
pub struct DecoderState {
    /// event -> every event reachable from it through accepted edges
    reach: BTreeMap<usize, BTreeSet<usize>>,
    edges: BTreeSet<(usize, usize)>,
}

impl DecoderState {
    pub fn reaches(&self, a: usize, b: usize) -> bool {
        self.reach.get(&a).is_some_and(|r| r.contains(&b))
    }

    /// Whether edge (a, b) is a self-loop, closes a cycle, or is already
    /// implied.
    pub fn rejects(&self, a: usize, b: usize) -> bool {
        a == b || self.reaches(b, a) || self.reaches(a, b)
    }

    pub fn accept(&mut self, a: usize, b: usize) {
        self.edges.insert((a, b));
        let mut gained = self.reach.get(&b).cloned().unwrap_or_default();
        gained.insert(b);
        let sources: Vec<usize> = self
            .reach
            .iter()
            .filter(|(_, r)| r.contains(&a))
            .map(|(&x, _)| x)
            .chain([a])
            .collect();
        for x in sources {
            self.reach.entry(x).or_default().extend(gained.iter().copied());
        }
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }
}

/// Greedy best-first decoding with multiple antecedents per mention.
///
/// Mentions are visited left to right. For mention j, each antecedent
/// contributes its better label (Forward on ties), and those arcs are tried
/// best first; an arc is skipped when its event edge is a self-loop, closes
/// a cycle or is already implied. The first admissible arc is taken, then
/// every further admissible arc with positive score, and the arcs stand if
/// their total beats the root arc (otherwise j attaches to the root).
/// Mentions without a root candidate take every admissible arc.
///
/// Later arcs can imply earlier ones; a final pass keeps only arcs on the
/// transitive reduction, and a mention whose surviving arcs no longer beat
/// its root falls back to the root.
///
/// `clusters` maps mentions to events for the reachability checks.
pub fn decode_lag(
    scorer: &impl Scorer,
    candidates: &AntecedentSets,
    clusters: &Clustering,
) -> RelationGraph {
    let n = candidates.n();
    let mut state = DecoderState::default();
    let mut accepted: Vec<(Arc, f64)> = Vec::new();
    let mut roots: Vec<Option<f64>> = vec![None; n + 1];
    for j in 1..=n {
        let root = candidates
            .allows_root(j)
            .then(|| scorer.score(&Arc::root(j)));
        roots[j] = root;
        let mut scored: Vec<(f64, Arc)> = candidates
            .get(j)
            .iter()
            .filter(|c| c.antecedent > 0)
            .filter_map(|c| {
                c.labels
                    .iter()
                    .filter(|l| matches!(l, Label::AfterForward | Label::AfterBackward))
                    .map(|&l| {
                        let arc = Arc::new(c.antecedent, j, l);
                        (scorer.score(&arc), arc)
                    })
                    .reduce(|best, x| if x.0 > best.0 { x } else { best })
            })
            .filter(|&(s, _)| root.is_none_or(|r| s > r || s > 0.0))
            .collect();
        scored.sort_by(|x, y| {
            y.0.total_cmp(&x.0)
                .then_with(|| y.1.source.cmp(&x.1.source))
        });

        let mut tentative = state.clone();
        let mut taken: Vec<(Arc, f64)> = Vec::new();
        for (s, arc) in scored {
            if root.is_some() && !taken.is_empty() && s <= 0.0 {
                break;
            }
            let (a, b) = event_edge(&arc, clusters).expect("after arc");
            if tentative.rejects(a, b) {
                continue;
            }
            tentative.accept(a, b);
            taken.push((arc, s));
        }
        let total: f64 = taken.iter().map(|t| t.1).sum();
        if !taken.is_empty() && root.is_none_or(|r| total > r) {
            state = tentative;
            accepted.extend(taken);
        }
    }

    let dag = EventDag::from_edges(state.edges().iter().copied());
    let reduced = transitive_reduction(&dag).edges;
    accepted.retain(|(arc, _)| reduced.contains(&event_edge(arc, clusters).expect("after arc")));
    // dropping edges from a reduced DAG leaves it reduced
    let mut per_target: BTreeMap<usize, f64> = BTreeMap::new();
    for (arc, s) in &accepted {
        *per_target.entry(arc.target).or_insert(0.0) += s;
    }
    accepted.retain(|(arc, _)| roots[arc.target].is_none_or(|r| per_target[&arc.target] > r));

    let mut g = RelationGraph::new(n, Task::Sequencing);
    for (arc, _) in accepted {
        g.insert(arc).expect("candidate arcs are well-formed");
    }
    g.fill_roots();
    debug_assert!(is_minimal(&g, clusters));
    g
}

/// Whether the graph's event-level form is acyclic and transitively reduced,
/// with no two arcs carrying the same event edge.
pub fn is_minimal(g: &RelationGraph, clusters: &Clustering) -> bool {
    let edges: Vec<(usize, usize)> = g.arcs().filter_map(|a| event_edge(a, clusters)).collect();
    let dag = EventDag::from_edges(edges.iter().copied());
    dag.edges.len() == edges.len()
        && dag.is_acyclic()
        && transitive_reduction(&dag).edges == dag.edges
}

/// One representative mention for every event taking part in a gold After
/// link.
///
/// Events are visited in order of their first mention. Each candidate
/// mention is scored by the sum of gold-direction arc scores between it and
/// the representatives already chosen for events it is gold-linked to; the
/// best candidate wins, ties going to the earliest mention.
pub fn select_latent_mentions(
    doc: &Document,
    scorer: &impl Scorer,
    clusters: &Clustering,
) -> Result<Vec<usize>, DecodeError> {
    let edges = gold_event_edges(doc, clusters)?;
    let events: BTreeSet<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    // representatives are cluster minima, so this is discourse order
    let mut chosen: BTreeMap<usize, usize> = BTreeMap::new();
    for &e in &events {
        let members = clusters.cluster_of(e).map_or_else(|| vec![e], <[usize]>::to_vec);
        let mut best: Option<(f64, usize)> = None;
        for &m in &members {
            let mut total = 0.0;
            for (&other, &r) in &chosen {
                let forward = if edges.contains(&(other, e)) {
                    false
                } else if edges.contains(&(e, other)) {
                    true
                } else {
                    continue;
                };
                // `forward`: m's event precedes the other event
                let (i, j) = (m.min(r), m.max(r));
                let m_first = forward;
                let earlier_first = if i == m { m_first } else { !m_first };
                let label = if earlier_first {
                    Label::AfterForward
                } else {
                    Label::AfterBackward
                };
                total += scorer.score(&Arc::new(i, j, label));
            }
            if best.is_none_or(|(b, _)| total > b) {
                best = Some((total, m));
            }
        }
        chosen.insert(e, best.expect("clusters are non-empty").1);
    }
    Ok(chosen.into_values().collect())
}

/// The best-scoring graph among those matching the gold annotation.
///
/// Coreference decodes over the gold-coreferent antecedents. Sequencing
/// first selects one mention per linked event, then links those mentions
/// along the gold After edges; `clusters` should be the gold partition.
pub fn decode_gold(
    doc: &Document,
    scorer: &impl Scorer,
    task: Task,
    clusters: &Clustering,
) -> Result<RelationGraph, DecodeError> {
    match task {
        Task::Coreference => {
            let sets = AntecedentSets::gold_coref(doc)?;
            sets.check()?;
            Ok(decode_coref(scorer, &sets))
        }
        Task::Sequencing => {
            let reps = select_latent_mentions(doc, scorer, clusters)?;
            let sets = AntecedentSets::gold_sequencing(doc, clusters, &reps)?;
            sets.check()?;
            Ok(decode_lag(scorer, &sets, clusters))
        }
    }
}

/// Decodes with full candidate sets.
pub fn decode(scorer: &impl Scorer, n: usize, task: Task, clusters: &Clustering) -> RelationGraph {
    let sets = AntecedentSets::full(n, task);
    match task {
        Task::Coreference => decode_coref(scorer, &sets),
        Task::Sequencing => decode_lag(scorer, &sets, clusters),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::simple_doc;
    use crate::corpus::GoldAnnotation;
    use crate::relgraph::{matches, to_event_dag};
    use std::collections::HashMap;

    fn table(entries: &[(Arc, f64)]) -> impl Fn(&Arc) -> f64 {
        let m: HashMap<Arc, f64> = entries.iter().copied().collect();
        move |a: &Arc| m.get(a).copied().unwrap_or(0.0)
    }

    fn fwd(i: usize, j: usize) -> Arc {
        Arc::new(i, j, Label::AfterForward)
    }

    #[test]
    fn root_dominant_weights_give_singletons() {
        let s = |a: &Arc| if a.label == Label::Root { 1.0 } else { -1.0 };
        let g = decode_coref(&s, &AntecedentSets::full(4, Task::Coreference));
        assert_eq!(g, RelationGraph::all_root(4, Task::Coreference));
    }

    /// Best graph by brute force over every antecedent choice.
    fn coref_oracle(n: usize, s: &impl Scorer) -> BTreeSet<Arc> {
        let mut best = (f64::NEG_INFINITY, BTreeSet::new());
        let total: usize = (1..=n).product();
        for code in 0..total {
            let (mut c, mut arcs, mut score) = (code, BTreeSet::new(), 0.0);
            for j in 1..=n {
                let i = c % j;
                c /= j;
                let arc = if i == 0 { Arc::root(j) } else { Arc::new(i, j, Label::Coref) };
                score += s.score(&arc);
                arcs.insert(arc);
            }
            if score > best.0 {
                best = (score, arcs);
            }
        }
        best.1
    }

    #[test]
    fn same_lemma_links() {
        use crate::features::{DocumentFeatures, FeatureConfig};
        let doc = simple_doc(&[("a", "kill", "Life.Die"), ("b", "go", "Life.Die"), ("c", "kill", "Life.Die")]);
        let feats = DocumentFeatures::compute(&doc, Task::Coreference, &FeatureConfig::default());
        let sets = AntecedentSets::full(3, Task::Coreference);

        let w = WeightVector::from_map([
            ("head|lemma_same=true".to_string(), 1.0),
            ("head|lemma_same=false".to_string(), -1.0),
        ]);
        let scorer = LinearScorer { features: &feats, weights: &w };
        let g = decode_coref(&scorer, &sets);
        let arcs: BTreeSet<Arc> = g.arcs().copied().collect();
        let expected = BTreeSet::from([Arc::root(1), Arc::root(2), Arc::new(1, 3, Label::Coref)]);
        assert_eq!(arcs, expected);
        assert_eq!(coref_oracle(3, &scorer), expected);

        // with no penalty on different lemmas, 1 <- 2 ties its root and the
        // root loses the tie
        let w = WeightVector::from_map([("head|lemma_same=true".to_string(), 1.0)]);
        let scorer = LinearScorer { features: &feats, weights: &w };
        let g = decode_coref(&scorer, &sets);
        assert!(g.contains(&Arc::new(1, 2, Label::Coref)));
        assert!(g.contains(&Arc::new(1, 3, Label::Coref)));
    }

    #[test]
    fn coref_ties_prefer_closest_and_beat_root() {
        let g = decode_coref(&|_: &Arc| 0.0, &AntecedentSets::full(3, Task::Coreference));
        assert!(g.contains(&Arc::new(1, 2, Label::Coref)));
        assert!(g.contains(&Arc::new(2, 3, Label::Coref)));
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn zero_weights_give_root_only_sequencing() {
        let g = decode_lag(
            &|_: &Arc| 0.0,
            &AntecedentSets::full(4, Task::Sequencing),
            &Clustering::singletons(1..=4),
        );
        assert_eq!(g, RelationGraph::all_root(4, Task::Sequencing));
    }

    #[test]
    fn chain_preferred_over_closure_arc() {
        let s = table(&[(fwd(1, 2), 2.0), (fwd(2, 3), 2.0), (fwd(1, 3), 1.0)]);
        let g = decode_lag(
            &s,
            &AntecedentSets::full(3, Task::Sequencing),
            &Clustering::singletons(1..=3),
        );
        let arcs: BTreeSet<Arc> = g.arcs().copied().collect();
        assert_eq!(arcs, BTreeSet::from([Arc::root(1), fwd(1, 2), fwd(2, 3)]));
    }

    #[test]
    fn later_arcs_prune_implied_ones() {
        // 1 -> 2 is accepted at mention 2; at mention 3, 1 -> 3 and 3 -> 2
        // imply it, so the final pass drops it and 2 falls back to the root
        let s = table(&[
            (fwd(1, 2), 1.0),
            (fwd(1, 3), 5.0),
            (Arc::new(2, 3, Label::AfterBackward), 4.0),
        ]);
        let clusters = Clustering::singletons(1..=3);
        let g = decode_lag(&s, &AntecedentSets::full(3, Task::Sequencing), &clusters);
        let arcs: BTreeSet<Arc> = g.arcs().copied().collect();
        assert_eq!(
            arcs,
            BTreeSet::from([
                Arc::root(1),
                Arc::root(2),
                fwd(1, 3),
                Arc::new(2, 3, Label::AfterBackward)
            ])
        );
        assert!(is_minimal(&g, &clusters));
    }

    #[test]
    fn closure_arc_visited_first_is_pruned() {
        // at mention 3 the implied 1 -> 3 outscores 2 -> 3 and is taken
        // first; the adjacent arc is still admissible and the pass drops 1 -> 3
        let s = table(&[(fwd(1, 2), 2.0), (fwd(1, 3), 9.0), (fwd(2, 3), 2.0)]);
        let g = decode_lag(
            &s,
            &AntecedentSets::full(3, Task::Sequencing),
            &Clustering::singletons(1..=3),
        );
        assert!(g.contains(&fwd(1, 2)) && g.contains(&fwd(2, 3)));
        assert!(!g.contains(&fwd(1, 3)));
    }

    #[test]
    fn positive_arcs_below_root_join_a_winning_set() {
        let s = table(&[
            (Arc::root(3), 1.0),
            (fwd(1, 3), 0.7),
            (fwd(2, 3), 0.6),
        ]);
        let g = decode_lag(
            &s,
            &AntecedentSets::full(3, Task::Sequencing),
            &Clustering::singletons(1..=3),
        );
        assert!(g.contains(&fwd(1, 3)) && g.contains(&fwd(2, 3)));
        // a lone arc below the root loses
        let s = table(&[(Arc::root(3), 1.0), (fwd(1, 3), 0.7)]);
        let g = decode_lag(
            &s,
            &AntecedentSets::full(3, Task::Sequencing),
            &Clustering::singletons(1..=3),
        );
        assert!(g.contains(&Arc::root(3)));
    }

    #[test]
    fn negative_root_takes_single_arc() {
        let s = table(&[
            (Arc::root(3), -5.0),
            (fwd(1, 3), -3.0),
            (fwd(2, 3), -3.0),
            (Arc::root(2), 1.0),
        ]);
        let g = decode_lag(
            &s,
            &AntecedentSets::full(3, Task::Sequencing),
            &Clustering::singletons(1..=3),
        );
        assert_eq!(g.arcs_into(3).count(), 1);
        assert!(graph_score(&g, &s) >= graph_score(&RelationGraph::all_root(3, Task::Sequencing), &s));
    }

    #[test]
    fn cluster_level_cycle_rejected() {
        // 1 and 3 corefer, so 1 -> 2 and 2 -> 3 would close a cycle
        let clusters = Clustering::from_clusters([vec![1, 3]], 1..=3);
        let s = table(&[(fwd(1, 2), 3.0), (fwd(2, 3), 2.0)]);
        let g = decode_lag(&s, &AntecedentSets::full(3, Task::Sequencing), &clusters);
        assert!(to_event_dag(&g, &clusters).is_ok());
        assert!(g.contains(&fwd(1, 2)));
        assert!(!g.contains(&fwd(2, 3)));
    }

    fn gold_doc(n: usize, clusters: &[&[&str]], after: &[(&str, &str)]) -> Document {
        let ids: Vec<String> = (1..=n).map(|k| format!("m{k}")).collect();
        let specs: Vec<(&str, &str, &str)> =
            ids.iter().map(|id| (id.as_str(), "go", "Movement.Transport")).collect();
        let mut doc = simple_doc(&specs);
        doc.gold = Some(GoldAnnotation {
            coref_clusters: clusters
                .iter()
                .map(|c| c.iter().map(|s| s.to_string()).collect())
                .collect(),
            after_links: after
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            subevent_links: vec![],
        });
        doc.validate().unwrap();
        doc
    }

    #[test]
    fn singleton_gold_is_all_root() {
        let doc = gold_doc(3, &[], &[]);
        let s = |_: &Arc| 7.0;
        let c = doc.gold_clustering();
        let g = decode_gold(&doc, &s, Task::Coreference, &c).unwrap();
        assert_eq!(g, RelationGraph::all_root(3, Task::Coreference));
        let g = decode_gold(&doc, &s, Task::Sequencing, &c).unwrap();
        assert_eq!(g, RelationGraph::all_root(3, Task::Sequencing));
    }

    #[test]
    fn gold_coref_picks_chain_under_adjacent_weights() {
        let doc = gold_doc(3, &[&["m1", "m2", "m3"]], &[]);
        let s = |a: &Arc| if a.target - a.source == 1 { 1.0 } else { 0.0 };
        let c = doc.gold_clustering();
        let g = decode_gold(&doc, &s, Task::Coreference, &c).unwrap();
        // chain scores 2, star (1<-2, 1<-3) scores 1
        assert!(g.contains(&Arc::new(2, 3, Label::Coref)));
        let gold = RelationGraph::coref_chain(3, &c);
        assert!(matches(&g, &gold, &c));
    }

    #[test]
    fn gold_sequencing_matches_and_follows_direction() {
        let doc = gold_doc(3, &[], &[("m3", "m1"), ("m1", "m2")]);
        let c = doc.gold_clustering();
        let g = decode_gold(&doc, &|_: &Arc| -1.0, Task::Sequencing, &c).unwrap();
        let gold = RelationGraph::from_after_pairs(3, doc.gold_after_pairs()).unwrap();
        assert!(matches(&g, &gold, &c));
        assert!(g.contains(&Arc::new(1, 3, Label::AfterBackward)));
    }

    #[test]
    fn latent_mention_follows_weights() {
        // event A = {m2, m5}, event B = {m1}; B before A
        let doc = gold_doc(5, &[&["m2", "m5"]], &[("m1", "m2")]);
        let c = doc.gold_clustering();
        let s = table(&[(fwd(1, 5), 2.0), (fwd(1, 2), 1.0)]);
        let reps = select_latent_mentions(&doc, &s, &c).unwrap();
        assert_eq!(reps, vec![1, 5]);
        let s = table(&[(fwd(1, 5), 1.0), (fwd(1, 2), 1.0)]);
        assert_eq!(select_latent_mentions(&doc, &s, &c).unwrap(), vec![1, 2]);
        let g = decode_gold(&doc, &table(&[(fwd(1, 5), 2.0)]), Task::Sequencing, &c).unwrap();
        assert!(g.contains(&fwd(1, 5)));
        let gold = RelationGraph::from_after_pairs(5, doc.gold_after_pairs()).unwrap();
        assert!(matches(&g, &gold, &c));
    }

    #[test]
    fn missing_gold_is_an_error() {
        let mut doc = gold_doc(2, &[], &[]);
        doc.gold = None;
        let c = doc.gold_clustering();
        assert_eq!(
            decode_gold(&doc, &|_: &Arc| 0.0, Task::Sequencing, &c),
            Err(DecodeError::MissingGold)
        );
    }
}
