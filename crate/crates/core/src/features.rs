//! Arc-wise feature extraction.
//!
//! Every feature is a binary indicator keyed by a readable string
//! `family|atom...`. Coreference arcs get the pairwise similarity features;
//! sequencing arcs get the cross product of three atom sets (surface script
//! compatibility, discourse script compatibility, event ordering); root arcs
//! get a bias plus the mention's type and realis.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc as Shared;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Sentence};
use crate::relgraph::{Arc, Label, Task};

/// Sparse real-valued vector keyed by feature name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    entries: BTreeMap<String, f64>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn indicator(&mut self, key: impl Into<String>) {
        self.add(key.into(), 1.0);
    }

    pub fn add(&mut self, key: String, value: f64) {
        use std::collections::btree_map::Entry;
        // keep the map free of explicit zeros
        match self.entries.entry(key) {
            Entry::Vacant(e) => {
                if value != 0.0 {
                    e.insert(value);
                }
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += value;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &FeatureVector, scale: f64) {
        for (k, v) in &other.entries {
            let entry = self.entries.entry(k.clone()).or_insert(0.0);
            *entry += scale * v;
        }
        self.entries.retain(|_, v| *v != 0.0);
    }

    pub fn get(&self, key: &str) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum()
    }
}

impl FromIterator<(String, f64)> for FeatureVector {
    fn from_iter<T: IntoIterator<Item = (String, f64)>>(iter: T) -> Self {
        let mut f = FeatureVector::new();
        for (k, v) in iter {
            f.add(k, v);
        }
        f
    }
}

/// Sparse weights with the bookkeeping needed for lazy weight averaging.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightVector {
    weights: HashMap<String, f64>,
    totals: HashMap<String, f64>,
    stamps: HashMap<String, u64>,
}

impl WeightVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(weights: impl IntoIterator<Item = (String, f64)>) -> Self {
        WeightVector {
            weights: weights.into_iter().filter(|(_, v)| *v != 0.0).collect(),
            ..Self::default()
        }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.weights.get(key).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Dot product with a feature vector, summed in key order.
    pub fn dot(&self, f: &FeatureVector) -> f64 {
        f.iter().map(|(k, v)| self.get(k) * v).sum()
    }

    /// `w += scale * delta` during instance `step` (0-based); the new
    /// weights count towards the average from that instance on.
    pub fn update(&mut self, delta: &FeatureVector, scale: f64, step: u64) {
        for (k, v) in delta.iter() {
            let w = self.weights.entry(k.to_string()).or_insert(0.0);
            let stamp = self.stamps.entry(k.to_string()).or_insert(0);
            let total = self.totals.entry(k.to_string()).or_insert(0.0);
            *total += (step - *stamp) as f64 * *w;
            *stamp = step;
            *w += scale * v;
        }
    }

    /// Weights averaged over `steps` steps.
    pub fn averaged(&self, steps: u64) -> WeightVector {
        if steps == 0 {
            return WeightVector::from_map(self.sorted());
        }
        let avg = self.weights.iter().map(|(k, &w)| {
            let stamp = self.stamps.get(k).copied().unwrap_or(0);
            let total = self.totals.get(k).copied().unwrap_or(0.0) + (steps - stamp) as f64 * w;
            (k.clone(), total / steps as f64)
        });
        WeightVector::from_map(avg)
    }

    /// Non-zero weights in key order.
    pub fn sorted(&self) -> BTreeMap<String, f64> {
        self.weights
            .iter()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }
}

/// `w . f`
pub fn arc_score(w: &WeightVector, f: &FeatureVector) -> f64 {
    w.dot(f)
}

/// Feature groups that can be switched off for ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureFamily {
    Head,
    Type,
    Realis,
    Pos,
    ExactMatch,
    Distance,
    Frame,
    Syntactic,
    Schema,
    SharedArgument,
    Dependency,
    FunctionWords,
    MentionType,
    Sentence,
    Temporal,
    Ordering,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 16] = [
        FeatureFamily::Head,
        FeatureFamily::Type,
        FeatureFamily::Realis,
        FeatureFamily::Pos,
        FeatureFamily::ExactMatch,
        FeatureFamily::Distance,
        FeatureFamily::Frame,
        FeatureFamily::Syntactic,
        FeatureFamily::Schema,
        FeatureFamily::SharedArgument,
        FeatureFamily::Dependency,
        FeatureFamily::FunctionWords,
        FeatureFamily::MentionType,
        FeatureFamily::Sentence,
        FeatureFamily::Temporal,
        FeatureFamily::Ordering,
    ];

    /// Key prefix of coreference features in this family.
    pub fn prefix(self) -> &'static str {
        match self {
            FeatureFamily::Head => "head",
            FeatureFamily::Type => "type",
            FeatureFamily::Realis => "realis",
            FeatureFamily::Pos => "pos",
            FeatureFamily::ExactMatch => "exact",
            FeatureFamily::Distance => "distance",
            FeatureFamily::Frame => "frame",
            FeatureFamily::Syntactic => "syntactic",
            FeatureFamily::Schema => "schema",
            FeatureFamily::SharedArgument => "sharedarg",
            FeatureFamily::Dependency => "dep",
            FeatureFamily::FunctionWords => "fw",
            FeatureFamily::MentionType => "mtype",
            FeatureFamily::Sentence => "sent",
            FeatureFamily::Temporal => "tmp",
            FeatureFamily::Ordering => "order",
        }
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for FeatureFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        FeatureFamily::ALL
            .iter()
            .copied()
            .find(|f| format!("{f:?}").to_lowercase() == norm || f.prefix() == norm)
            .ok_or_else(|| format!("unknown feature family `{s}`"))
    }
}

/// Lemma to schema-cluster lookup.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SchemaTable {
    clusters: HashMap<String, String>,
}

const BUNDLED_SCHEMAS: &str = include_str!("../data/schemas.tsv");

impl SchemaTable {
    /// Parses `lemma<TAB>cluster_id` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut clusters = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lemma, cluster) = line
                .split_once('\t')
                .ok_or_else(|| format!("schema table line {}: expected lemma<TAB>cluster", i + 1))?;
            clusters.insert(lemma.to_string(), cluster.to_string());
        }
        Ok(SchemaTable { clusters })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SCHEMAS).expect("bundled schema table is well-formed")
    }

    pub fn cluster(&self, lemma: &str) -> Option<&str> {
        self.clusters.get(lemma).map(String::as_str)
    }
}

/// Which families are active, plus the schema resource.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub disabled: BTreeSet<FeatureFamily>,
    pub schemas: Shared<SchemaTable>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            disabled: BTreeSet::new(),
            schemas: Shared::new(SchemaTable::bundled()),
        }
    }
}

impl FeatureConfig {
    pub fn without(families: impl IntoIterator<Item = FeatureFamily>) -> Self {
        FeatureConfig {
            disabled: families.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn enabled(&self, family: FeatureFamily) -> bool {
        !self.disabled.contains(&family)
    }
}

/// Sentence distance buckets: 0, 1, 2, 3, 4-7, 8+.
pub fn distance_bucket(d: usize) -> &'static str {
    match d {
        0 => "0",
        1 => "1",
        2 => "2",
        3 => "3",
        4..=7 => "4-7",
        _ => "8+",
    }
}

fn is_content_pos(pos: &str) -> bool {
    ["NN", "VB", "JJ", "RB"].iter().any(|p| pos.starts_with(p))
        || matches!(pos, "NOUN" | "PROPN" | "VERB" | "ADJ" | "ADV")
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn head_sentence(doc: &Document, j: usize) -> &Sentence {
    &doc.sentences[doc.mention(j).sentence_index]
}

/// Lowercased texts of the 5-token window centred on the mention head,
/// truncated at document boundaries.
fn head_window(doc: &Document, j: usize) -> Vec<String> {
    let m = doc.mention(j);
    let mut flat = Vec::new();
    let mut centre = 0;
    for s in &doc.sentences {
        for t in &s.tokens {
            if s.index == m.sentence_index && t.index == m.head_token_index {
                centre = flat.len();
            }
            flat.push(t.text.to_lowercase());
        }
    }
    let lo = centre.saturating_sub(2);
    let hi = (centre + 3).min(flat.len());
    flat[lo..hi].to_vec()
}

fn ancestors(heads: &[Option<usize>], mut t: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while let Some(h) = heads[t] {
        out.push(h);
        t = h;
        if out.len() > heads.len() {
            break;
        }
    }
    out
}

fn check_pair(doc: &Document, i: usize, j: usize) {
    assert!(
        1 <= i && i < j && j <= doc.n(),
        "arc ({i}, {j}) out of range for {} mentions",
        doc.n()
    );
}

/// Pairwise coreference features for antecedent `i` and anaphor `j`.
///
/// Panics when `!(1 <= i < j <= n)`.
pub fn coref_features(doc: &Document, i: usize, j: usize, cfg: &FeatureConfig) -> FeatureVector {
    check_pair(doc, i, j);
    let mut f = FeatureVector::new();
    let (mi, mj) = (doc.mention(i), doc.mention(j));
    let (ti, tj) = (doc.head_token(i), doc.head_token(j));
    let (si, sj) = (head_sentence(doc, i), head_sentence(doc, j));

    if cfg.enabled(FeatureFamily::Head) {
        let (a, b) = (ti.text.to_lowercase(), tj.text.to_lowercase());
        f.indicator(format!("head|tok={a}:{b}"));
        f.indicator(format!("head|tok_same={}", yes_no(a == b)));
        f.indicator(format!("head|lemma={}:{}", ti.lemma, tj.lemma));
        f.indicator(format!("head|lemma_same={}", yes_no(ti.lemma == tj.lemma)));
    }
    if cfg.enabled(FeatureFamily::Type) {
        f.indicator(format!("type|pair={}:{}", mi.event_type, mj.event_type));
        f.indicator(format!("type|same={}", yes_no(mi.event_type == mj.event_type)));
    }
    if cfg.enabled(FeatureFamily::Realis) {
        f.indicator(format!("realis|pair={}:{}", mi.realis, mj.realis));
        f.indicator(format!("realis|same={}", yes_no(mi.realis == mj.realis)));
    }
    if cfg.enabled(FeatureFamily::Pos) {
        f.indicator(format!("pos|pair={}:{}", ti.pos, tj.pos));
        f.indicator(format!("pos|same={}", yes_no(ti.pos == tj.pos)));
    }
    if cfg.enabled(FeatureFamily::ExactMatch) {
        let same = head_window(doc, i) == head_window(doc, j);
        f.indicator(format!("exact|window={}", yes_no(same)));
    }
    if cfg.enabled(FeatureFamily::Distance) {
        let d = mj.sentence_index - mi.sentence_index;
        f.indicator(format!("distance|{}", distance_bucket(d)));
    }
    if cfg.enabled(FeatureFamily::Frame) && si.frames.is_some() && sj.frames.is_some() {
        let name = |s: &Sentence, t: usize| s.frame_at(t).map_or("none", |fr| fr.name.as_str()).to_string();
        let (a, b) = (name(si, mi.head_token_index), name(sj, mj.head_token_index));
        f.indicator(format!("frame|pair={a}:{b}"));
        f.indicator(format!("frame|same={}", yes_no(a == b)));
    }
    if cfg.enabled(FeatureFamily::Syntactic) && mi.sentence_index == mj.sentence_index {
        if let Some(heads) = si.heads() {
            let rel = if ancestors(&heads, mj.head_token_index).contains(&mi.head_token_index) {
                "antecedent"
            } else if ancestors(&heads, mi.head_token_index).contains(&mj.head_token_index) {
                "anaphor"
            } else {
                "none"
            };
            f.indicator(format!("syntactic|ancestor={rel}"));
        }
    }
    f
}

/// Direction hypothesised by a sequencing arc.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn of(label: Label) -> Option<Direction> {
        match label {
            Label::AfterForward => Some(Direction::Forward),
            Label::AfterBackward => Some(Direction::Backward),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

const MAX_DEP_PATH: usize = 4;

/// Dependency path between two tokens of a sentence, `<label` for a step
/// up to the head and `>label` for a step down.
fn dependency_path(s: &Sentence, from: usize, to: usize) -> Option<Vec<String>> {
    let deps = s.dependencies.as_ref()?;
    let heads = s.heads()?;
    let label_of = |t: usize| {
        deps.iter()
            .find(|d| d.dependent() == t)
            .map_or("", |d| d.label())
            .to_string()
    };
    let mut up = vec![from];
    up.extend(ancestors(&heads, from));
    let mut down = vec![to];
    down.extend(ancestors(&heads, to));
    let (ui, di) = up
        .iter()
        .enumerate()
        .find_map(|(ui, a)| down.iter().position(|b| b == a).map(|di| (ui, di)))?;
    let mut path: Vec<String> = up[..ui].iter().map(|&t| format!("<{}", label_of(t))).collect();
    path.extend(down[..di].iter().rev().map(|&t| format!(">{}", label_of(t))));
    Some(path)
}

fn joined_atom(prefix: &str, items: &[String], cap: usize) -> String {
    match items.len() {
        0 => format!("{prefix}=none"),
        n if n > cap => format!("{prefix}=many"),
        _ => format!("{prefix}={}", items.join("+")),
    }
}

/// Argument surface strings of the frame evoked at a mention head.
fn frame_args(s: &Sentence, head: usize) -> Vec<(String, (usize, usize))> {
    s.frame_at(head)
        .map(|fr| {
            fr.args
                .iter()
                .map(|a| {
                    let text = s.tokens[a.span.0..a.span.1]
                        .iter()
                        .map(|t| t.text.to_lowercase())
                        .collect::<Vec<_>>()
                        .join(" ");
                    (text, a.span)
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Sequencing features for the arc between antecedent `i` and anaphor `j`
/// under the given direction: one key per element of the cross product of
/// the surface, discourse and ordering atom sets.
///
/// Panics when `!(1 <= i < j <= n)`.
pub fn sequencing_features(
    doc: &Document,
    i: usize,
    j: usize,
    direction: Direction,
    cfg: &FeatureConfig,
) -> FeatureVector {
    check_pair(doc, i, j);
    let (mi, mj) = (doc.mention(i), doc.mention(j));
    let (si, sj) = (head_sentence(doc, i), head_sentence(doc, j));
    // (earlier, later) in the hypothesised script order
    let (first, second) = match direction {
        Direction::Forward => (i, j),
        Direction::Backward => (j, i),
    };
    let on = |fam: FeatureFamily| cfg.enabled(fam);

    let mut surface = Vec::new();
    if on(FeatureFamily::Head) {
        surface.push(format!(
            "head={}:{}",
            doc.head_token(first).lemma,
            doc.head_token(second).lemma
        ));
    }
    if on(FeatureFamily::Type) {
        surface.push(format!(
            "type={}:{}",
            doc.mention(first).event_type,
            doc.mention(second).event_type
        ));
    }
    if on(FeatureFamily::Schema) {
        let a = cfg.schemas.cluster(&doc.head_token(i).lemma);
        let b = cfg.schemas.cluster(&doc.head_token(j).lemma);
        if let (Some(a), Some(b)) = (a, b) {
            surface.push(format!("schema={}", if a == b { "same" } else { "diff" }));
        }
    }
    if on(FeatureFamily::SharedArgument) && si.frames.is_some() && sj.frames.is_some() {
        let args_i = frame_args(si, mi.head_token_index);
        let args_j = frame_args(sj, mj.head_token_index);
        let shared: Vec<_> = args_i
            .iter()
            .filter(|(text, _)| args_j.iter().any(|(t, _)| t == text))
            .collect();
        surface.push(format!("sharedarg={}", yes_no(!shared.is_empty())));
        let names: BTreeSet<&str> = shared
            .iter()
            .flat_map(|(_, (b, e))| {
                si.frames
                    .iter()
                    .flatten()
                    .filter(move |fr| *b <= fr.target && fr.target < *e)
                    .map(|fr| fr.name.as_str())
            })
            .collect();
        surface.extend(names.into_iter().map(|n| format!("sharedarg_frame={n}")));
    }

    let mut discourse = Vec::new();
    if on(FeatureFamily::Dependency) && mi.sentence_index == mj.sentence_index {
        if let Some(path) = dependency_path(si, mi.head_token_index, mj.head_token_index) {
            discourse.push(if path.len() > MAX_DEP_PATH {
                "dep=long".to_string()
            } else if path.is_empty() {
                "dep=self".to_string()
            } else {
                format!("dep={}", path.join(""))
            });
        }
    }
    if on(FeatureFamily::FunctionWords) {
        let mut words = Vec::new();
        for s in &doc.sentences[mi.sentence_index..=mj.sentence_index] {
            for t in &s.tokens {
                let after_i = (s.index, t.index) >= (mi.sentence_index, mi.token_span.1);
                let before_j = (s.index, t.index) < (mj.sentence_index, mj.token_span.0);
                if after_i && before_j && !is_content_pos(&t.pos) {
                    words.push(t.lemma.to_lowercase());
                }
            }
        }
        discourse.push(joined_atom("fw", &words, 3));
    }
    if on(FeatureFamily::MentionType) {
        let between: BTreeSet<&str> = (i + 1..j)
            .map(|k| doc.mention(k).event_type.as_str())
            .collect();
        let types: Vec<String> = between.iter().map(|t| t.to_string()).collect();
        discourse.push(joined_atom("mtype", &types, 2));
        let has_i = between.contains(mi.event_type.as_str());
        let has_j = between.contains(mj.event_type.as_str());
        discourse.push(format!("mtype_match={}", yes_no(has_i || has_j)));
    }
    if on(FeatureFamily::Sentence) {
        discourse.push(format!(
            "sent={}",
            distance_bucket(mj.sentence_index - mi.sentence_index)
        ));
    }
    if on(FeatureFamily::Temporal) {
        if let (Some(a), Some(b)) = (&si.temporal_expressions, &sj.temporal_expressions) {
            discourse.push(format!("tmp={}:{}", yes_no(!a.is_empty()), yes_no(!b.is_empty())));
        }
    }

    let mut ordering = Vec::new();
    if on(FeatureFamily::Ordering) {
        ordering.push(format!("order={}", direction.name()));
    }

    let placeholder = |v: &mut Vec<String>| {
        if v.is_empty() {
            v.push("-".to_string());
        }
    };
    placeholder(&mut surface);
    placeholder(&mut discourse);
    placeholder(&mut ordering);

    let mut f = FeatureVector::new();
    for s in &surface {
        for d in &discourse {
            for o in &ordering {
                f.indicator(format!("seq|{s}|{d}|{o}"));
            }
        }
    }
    f
}

/// Features of the root arc `<0, j>`.
pub fn root_features(doc: &Document, j: usize, _task: Task) -> FeatureVector {
    let m = doc.mention(j);
    let mut f = FeatureVector::new();
    f.indicator("root_bias");
    f.indicator(format!("root|type={}", m.event_type));
    f.indicator(format!("root|realis={}", m.realis));
    f
}

/// Dispatches on the arc label.
pub fn arc_features(doc: &Document, arc: &Arc, task: Task, cfg: &FeatureConfig) -> FeatureVector {
    match arc.label {
        Label::Root => root_features(doc, arc.target, task),
        Label::Coref => coref_features(doc, arc.source, arc.target, cfg),
        Label::AfterForward | Label::AfterBackward => sequencing_features(
            doc,
            arc.source,
            arc.target,
            Direction::of(arc.label).expect("after label"),
            cfg,
        ),
    }
}

/// Features of every arc a document admits for one task, computed once so
/// repeated decodes (training epochs) do not re-extract them.
#[derive(Clone, Debug)]
pub struct DocumentFeatures {
    task: Task,
    arcs: HashMap<Arc, FeatureVector>,
}

impl DocumentFeatures {
    pub fn compute(doc: &Document, task: Task, cfg: &FeatureConfig) -> Self {
        let n = doc.n();
        let mut arcs = HashMap::new();
        for j in 1..=n {
            arcs.insert(Arc::root(j), root_features(doc, j, task));
            for i in 1..j {
                let labels: &[Label] = match task {
                    Task::Coreference => &[Label::Coref],
                    Task::Sequencing => &[Label::AfterForward, Label::AfterBackward],
                };
                for &label in labels {
                    let arc = Arc::new(i, j, label);
                    arcs.insert(arc, arc_features(doc, &arc, task, cfg));
                }
            }
        }
        DocumentFeatures { task, arcs }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Panics on an arc the document does not admit for this task.
    pub fn get(&self, arc: &Arc) -> &FeatureVector {
        self.arcs
            .get(arc)
            .unwrap_or_else(|| panic!("no features for arc {arc} in a {} document", self.task))
    }
}
