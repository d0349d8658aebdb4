//! Seeded synthetic corpora built from a small script grammar.
//!
//! A document narrates one to three script instances. Each instance is a
//! contiguous stretch of a script's event sequence; its events are realized
//! as mentions in (mostly) script order, one sentence per mention. Noise
//! knobs control coreferent repeat mentions, interleaving of instances,
//! unlinked distractor mentions and locally inverted narration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    Dependency, Document, EventMention, Frame, FrameArgument, GoldAnnotation, Realis, Sentence,
    Token,
};
use crate::relgraph::{Arc, Label, RelationGraph, Task};

const DEFAULT_GRAMMAR: &str = include_str!("../data/grammar.toml");
const MAX_REPEATS: usize = 3;
const MAX_INSTANCES: usize = 3;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("grammar file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("grammar file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid grammar: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise {
    /// Probability of each further repeat mention of an event.
    pub coref_repeat: f64,
    /// Probability of switching script instance between two events.
    pub interleave: f64,
    /// Probability, per script event, of adding an unlinked distractor.
    pub distractor_rate: f64,
    /// Probability of swapping the narration order of adjacent events.
    pub inversion: f64,
    /// Filler sentences between mentions are drawn from `0..=max_gap`.
    pub max_gap: usize,
}

impl Default for Noise {
    fn default() -> Self {
        Noise {
            coref_repeat: 0.3,
            interleave: 0.4,
            distractor_rate: 0.25,
            inversion: 0.15,
            max_gap: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub name: String,
    pub events: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptGrammar {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: Noise,
    pub scripts: Vec<Script>,
    pub lexicon: BTreeMap<String, Vec<String>>,
}

impl Default for ScriptGrammar {
    fn default() -> Self {
        Self::parse(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }
}

impl ScriptGrammar {
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let g: ScriptGrammar = toml::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GrammarError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grammar serializes")
    }

    /// The noise-free variant: no interleaving, distractors or inversions,
    /// and repeat mentions always reuse the event's trigger, so every link
    /// is a function of the mention types.
    pub fn separable(mut self) -> Self {
        self.noise.interleave = 0.0;
        self.noise.distractor_rate = 0.0;
        self.noise.inversion = 0.0;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_separable(&self) -> bool {
        self.noise.interleave == 0.0 && self.noise.distractor_rate == 0.0 && self.noise.inversion == 0.0
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        let bad = |m: String| Err(GrammarError::Invalid(m));
        let n = &self.noise;
        for (name, p) in [
            ("coref_repeat", n.coref_repeat),
            ("interleave", n.interleave),
            ("distractor_rate", n.distractor_rate),
            ("inversion", n.inversion),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("noise.{name} = {p} is not a probability"));
            }
        }
        if self.scripts.is_empty() {
            return bad("no scripts".into());
        }
        for s in &self.scripts {
            if s.events.len() < 2 {
                return bad(format!("script `{}` needs at least two events", s.name));
            }
            let distinct: BTreeSet<&String> = s.events.iter().collect();
            if distinct.len() != s.events.len() {
                return bad(format!("script `{}` repeats an event type", s.name));
            }
            for t in &s.events {
                match t.split_once('.') {
                    Some((a, b)) if !a.is_empty() && !b.is_empty() => {}
                    _ => return bad(format!("event type `{t}` is not type.subtype")),
                }
                if self.lexicon.get(t).is_none_or(|l| l.is_empty()) {
                    return bad(format!("event type `{t}` has no lemma"));
                }
            }
        }
        Ok(())
    }

    /// Scripts containing an event type.
    pub fn scripts_of<'a>(&'a self, event_type: &'a str) -> impl Iterator<Item = &'a Script> + 'a {
        self.scripts
            .iter()
            .filter(move |s| s.events.iter().any(|e| e == event_type))
    }

    fn share_script(&self, a: &str, b: &str) -> bool {
        self.scripts_of(a).any(|s| s.events.iter().any(|e| e == b))
    }
}

/// Generation switches that do not belong to the grammar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Emit toy dependency, frame and time-expression layers.
    pub toy_layers: bool,
}

pub fn generate(grammar: &ScriptGrammar, n_docs: usize) -> Vec<Document> {
    generate_with(grammar, n_docs, GenerateOptions::default())
}

/// Document `k` depends only on the grammar (including its seed) and `k`.
pub fn generate_with(grammar: &ScriptGrammar, n_docs: usize, opts: GenerateOptions) -> Vec<Document> {
    (0..n_docs).map(|k| generate_document(grammar, k, opts)).collect()
}

const SUBJECTS: [&str; 8] = [
    "police", "company", "official", "group", "man", "woman", "army", "board",
];
const OBJECTS: [&str; 8] = [
    "suspect", "firm", "office", "city", "deal", "building", "village", "contract",
];
const FILLERS: [[&str; 3]; 4] = [
    ["reports", "continued", "."],
    ["witnesses", "agreed", "."],
    ["details", "emerged", "."],
    ["nothing", "changed", "."],
];

struct Instance {
    protagonist: &'static str,
    /// (event type, trigger lemma) in script order
    events: Vec<(String, String)>,
}

/// One mention to realize, in narration order.
struct Slot {
    /// (instance, event position) or `None` for a distractor
    event: Option<(usize, usize)>,
    event_type: String,
    lemma: String,
    subject: &'static str,
    realis: Realis,
}

fn generate_document(g: &ScriptGrammar, k: usize, opts: GenerateOptions) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    rng.set_stream(k as u64);
    let noise = &g.noise;

    let n_inst = rng.gen_range(1..=MAX_INSTANCES.min(g.scripts.len()));
    let scripts: Vec<&Script> = g.scripts.choose_multiple(&mut rng, n_inst).collect();
    let instances: Vec<Instance> = scripts
        .iter()
        .map(|s| {
            let len = rng.gen_range(2..=s.events.len());
            let start = rng.gen_range(0..=s.events.len() - len);
            Instance {
                protagonist: SUBJECTS.choose(&mut rng).expect("non-empty"),
                events: s.events[start..start + len]
                    .iter()
                    .map(|t| (t.clone(), pick_lemma(g, t, &mut rng)))
                    .collect(),
            }
        })
        .collect();

    // narration order of each instance, with local inversions
    let mut queues: Vec<Vec<usize>> = instances
        .iter()
        .map(|inst| {
            let mut order: Vec<usize> = (0..inst.events.len()).collect();
            let mut p = 0;
            while p + 1 < order.len() {
                if rng.gen_bool(noise.inversion) {
                    order.swap(p, p + 1);
                    p += 2;
                } else {
                    p += 1;
                }
            }
            order.reverse(); // popped from the back
            order
        })
        .collect();

    // merge instances into one stream of first mentions
    let mut stream: Vec<(usize, usize)> = Vec::new();
    let mut current = 0;
    while queues.iter().any(|q| !q.is_empty()) {
        let open: Vec<usize> = (0..queues.len()).filter(|&q| !queues[q].is_empty()).collect();
        if queues[current].is_empty() || (open.len() > 1 && rng.gen_bool(noise.interleave)) {
            let others: Vec<usize> = open.iter().copied().filter(|&q| q != current).collect();
            current = *others.choose(&mut rng).unwrap_or(&open[0]);
        }
        let e = queues[current].pop().expect("open instance");
        stream.push((current, e));
    }

    let first_slot = |(i, e): (usize, usize), rng: &mut ChaCha8Rng| Slot {
        event: Some((i, e)),
        event_type: instances[i].events[e].0.clone(),
        lemma: instances[i].events[e].1.clone(),
        subject: instances[i].protagonist,
        realis: if rng.gen_bool(0.9) { Realis::Actual } else { Realis::Other },
    };
    let mut slots: Vec<Slot> = stream.iter().map(|&ie| first_slot(ie, &mut rng)).collect();

    // coreferent repeats land somewhere after the first mention
    for &(i, e) in &stream {
        let mut repeats = 0;
        while repeats < MAX_REPEATS && rng.gen_bool(noise.coref_repeat) {
            repeats += 1;
        }
        for _ in 0..repeats {
            let first = slots
                .iter()
                .position(|s| s.event == Some((i, e)))
                .expect("first mention placed");
            let at = rng.gen_range(first + 1..=slots.len());
            let (ty, lemma) = &instances[i].events[e];
            let lemma = if g.is_separable() || rng.gen_bool(0.7) {
                lemma.clone()
            } else {
                pick_lemma(g, ty, &mut rng)
            };
            let realis = slots[first].realis;
            slots.insert(
                at,
                Slot {
                    event: Some((i, e)),
                    event_type: ty.clone(),
                    lemma,
                    subject: instances[i].protagonist,
                    realis,
                },
            );
        }
    }

    // distractors reuse the document's script types but stay unlinked
    let script_types: Vec<&String> = scripts.iter().flat_map(|s| s.events.iter()).collect();
    for _ in 0..stream.len() {
        if rng.gen_bool(noise.distractor_rate) {
            let ty = (*script_types.choose(&mut rng).expect("scripts are non-empty")).clone();
            let at = rng.gen_range(0..=slots.len());
            let realis = match rng.gen_range(0..10) {
                0..=3 => Realis::Generic,
                4..=6 => Realis::Other,
                _ => Realis::Actual,
            };
            slots.insert(
                at,
                Slot {
                    event: None,
                    lemma: pick_lemma(g, &ty, &mut rng),
                    event_type: ty,
                    subject: SUBJECTS.choose(&mut rng).expect("non-empty"),
                    realis,
                },
            );
        }
    }

    // realize sentences
    let mut sentences = Vec::new();
    let mut mentions = Vec::new();
    for (m, slot) in slots.iter().enumerate() {
        for _ in 0..rng.gen_range(0..=noise.max_gap) {
            let f = FILLERS.choose(&mut rng).expect("non-empty");
            sentences.push(filler_sentence(sentences.len(), f, opts.toy_layers));
        }
        let object = *OBJECTS.choose(&mut rng).expect("non-empty");
        let with_time = rng.gen_bool(0.25);
        let s = mention_sentence(sentences.len(), slot, object, with_time, opts.toy_layers);
        mentions.push(EventMention {
            id: format!("E{:03}", m + 1),
            sentence_index: s.index,
            token_span: (2, 3),
            head_token_index: 2,
            event_type: slot.event_type.clone(),
            realis: slot.realis,
            discourse_index: m + 1,
        });
        sentences.push(s);
    }

    // gold: clusters from repeats, after links between adjacent script
    // events, each anchored at a random mention of the event
    let mut by_event: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
    for (slot, mention) in slots.iter().zip(&mentions) {
        if let Some(ev) = slot.event {
            by_event.entry(ev).or_default().push(mention.id.clone());
        }
    }
    let coref_clusters: Vec<Vec<String>> = by_event.values().filter(|c| c.len() > 1).cloned().collect();
    let mut after_links = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        for e in 0..inst.events.len() - 1 {
            let src = by_event[&(i, e)].choose(&mut rng).expect("event has a mention").clone();
            let dst = by_event[&(i, e + 1)].choose(&mut rng).expect("event has a mention").clone();
            after_links.push((src, dst));
        }
    }

    Document {
        doc_id: format!("synth-{k:04}"),
        sentences,
        mentions,
        gold: Some(GoldAnnotation {
            coref_clusters,
            after_links,
            subevent_links: Vec::new(),
        }),
    }
}

fn pick_lemma(g: &ScriptGrammar, event_type: &str, rng: &mut ChaCha8Rng) -> String {
    g.lexicon[event_type].choose(rng).expect("validated lexicon").clone()
}

fn token(index: usize, text: &str, pos: &str) -> Token {
    Token {
        index,
        text: text.to_string(),
        lemma: text.to_string(),
        pos: pos.to_string(),
    }
}

fn filler_sentence(index: usize, words: &[&str; 3], layers: bool) -> Sentence {
    let tokens = vec![
        token(0, words[0], "NNS"),
        token(1, words[1], "VBD"),
        token(2, words[2], "."),
    ];
    Sentence {
        index,
        tokens,
        dependencies: layers.then(|| {
            vec![
                Dependency(1, 0, "nsubj".into()),
                Dependency(1, 2, "punct".into()),
            ]
        }),
        frames: layers.then(Vec::new),
        temporal_expressions: layers.then(Vec::new),
    }
}

/// "the <subject> <trigger> the <object> [on monday] ."
fn mention_sentence(index: usize, slot: &Slot, object: &str, with_time: bool, layers: bool) -> Sentence {
    let mut tokens = vec![
        token(0, "the", "DT"),
        token(1, slot.subject, "NN"),
        Token {
            index: 2,
            text: slot.lemma.clone(),
            lemma: slot.lemma.clone(),
            pos: "VBD".into(),
        },
        token(3, "the", "DT"),
        token(4, object, "NN"),
    ];
    if with_time {
        tokens.push(token(5, "on", "IN"));
        tokens.push(token(6, "monday", "NNP"));
    }
    tokens.push(token(tokens.len(), ".", "."));
    let last = tokens.len() - 1;

    let dependencies = layers.then(|| {
        let mut d = vec![
            Dependency(1, 0, "det".into()),
            Dependency(2, 1, "nsubj".into()),
            Dependency(4, 3, "det".into()),
            Dependency(2, 4, "obj".into()),
            Dependency(2, last, "punct".into()),
        ];
        if with_time {
            d.push(Dependency(2, 6, "obl".into()));
            d.push(Dependency(6, 5, "case".into()));
        }
        d
    });
    let frames = layers.then(|| {
        let name = slot
            .event_type
            .split_once('.')
            .map_or(slot.event_type.as_str(), |(_, sub)| sub)
            .to_string();
        vec![Frame {
            name,
            target: 2,
            args: vec![
                FrameArgument {
                    role: "Agent".into(),
                    span: (0, 2),
                },
                FrameArgument {
                    role: "Theme".into(),
                    span: (3, 5),
                },
            ],
        }]
    });
    let temporal_expressions = layers.then(|| if with_time { vec![(5, 7)] } else { Vec::new() });
    Sentence {
        index,
        tokens,
        dependencies,
        frames,
        temporal_expressions,
    }
}

/// Sequencing control: the first mention of each event is linked forward
/// from the nearest earlier first mention of a different event whose type
/// shares a script with it. Events come from the document's gold clusters
/// when present.
pub fn adjacency_baseline(doc: &Document, grammar: &ScriptGrammar) -> RelationGraph {
    let clusters = doc.gold_clustering();
    let firsts: Vec<usize> = (1..=doc.n())
        .filter(|&j| clusters.representative(j) == j)
        .collect();
    let mut g = RelationGraph::new(doc.n(), Task::Sequencing);
    for (p, &j) in firsts.iter().enumerate() {
        let ty = &doc.mention(j).event_type;
        if let Some(&i) = firsts[..p]
            .iter()
            .rev()
            .find(|&&i| grammar.share_script(&doc.mention(i).event_type, ty))
        {
            g.insert(Arc::new(i, j, Label::AfterForward))
                .expect("i < j by construction");
        }
    }
    g.fill_roots();
    g
}
