//! Document model and the line-delimited JSON corpus format.
//!
//! Every line of a corpus file holds one document:
//!
//! ```text
//! {"doc_id": "...",
//!  "sentences": [{"tokens": [{"text","lemma","pos"}, ...],
//!                 "dependencies": [[head, dep, label], ...],      (optional)
//!                 "frames": [{"name","target","args":[{"role","span":[b,e]}]}], (optional)
//!                 "time_spans": [[b, e], ...]}],                   (optional)
//!  "mentions": [{"id","sentence","span":[b,e],"head","type","realis"}, ...],
//!  "coref": [[id, ...], ...], "after": [[src, dst], ...], "subevent": [[parent, child], ...]}
//! ```
//!
//! The three relation fields are optional as a group: a document carries gold
//! annotation when any of them is present.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Clustering;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub text: String,
    pub lemma: String,
    pub pos: String,
}

/// A labelled dependency edge between two token indices of the same sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency(pub usize, pub usize, pub String);

impl Dependency {
    pub fn head(&self) -> usize {
        self.0
    }

    pub fn dependent(&self) -> usize {
        self.1
    }

    pub fn label(&self) -> &str {
        &self.2
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameArgument {
    pub role: String,
    pub span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub name: String,
    pub target: usize,
    pub args: Vec<FrameArgument>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
    pub dependencies: Option<Vec<Dependency>>,
    pub frames: Option<Vec<Frame>>,
    pub temporal_expressions: Option<Vec<(usize, usize)>>,
}

impl Sentence {
    /// Frame evoked by the token at `target`, if the frame layer has one.
    pub fn frame_at(&self, target: usize) -> Option<&Frame> {
        self.frames.as_ref()?.iter().find(|f| f.target == target)
    }

    /// Head of each token according to the dependency layer.
    pub fn heads(&self) -> Option<Vec<Option<usize>>> {
        let deps = self.dependencies.as_ref()?;
        let mut heads = vec![None; self.tokens.len()];
        for d in deps {
            heads[d.dependent()] = Some(d.head());
        }
        Some(heads)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Realis {
    Actual,
    Generic,
    Other,
}

impl fmt::Display for Realis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Realis::Actual => "Actual",
            Realis::Generic => "Generic",
            Realis::Other => "Other",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventMention {
    pub id: String,
    pub sentence_index: usize,
    /// Token span within the sentence, end exclusive.
    pub token_span: (usize, usize),
    pub head_token_index: usize,
    pub event_type: String,
    pub realis: Realis,
    /// Position in discourse order, starting at 1 (0 is the virtual root).
    pub discourse_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldAnnotation {
    pub coref_clusters: Vec<Vec<String>>,
    pub after_links: Vec<(String, String)>,
    pub subevent_links: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<EventMention>,
    pub gold: Option<GoldAnnotation>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: parse error: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: document `{doc_id}`: {violation}")]
    Invalid {
        line: usize,
        doc_id: String,
        violation: Violation,
    },
    #[error("unknown mention id `{0}`")]
    UnknownMention(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A broken document invariant, naming the offending element.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("sentence {sentence} token {token}: empty token text")]
    EmptyTokenText { sentence: usize, token: usize },
    #[error("sentence {sentence}: dependency ({head}, {dependent}) references a missing token")]
    DependencyOutOfRange {
        sentence: usize,
        head: usize,
        dependent: usize,
    },
    #[error("sentence {sentence}: token {token} has more than one dependency head")]
    MultipleHeads { sentence: usize, token: usize },
    #[error("sentence {sentence}: dependency layer contains a cycle through token {token}")]
    DependencyCycle { sentence: usize, token: usize },
    #[error("sentence {sentence}: frame `{frame}` references a missing token")]
    FrameOutOfRange { sentence: usize, frame: String },
    #[error("sentence {sentence}: temporal expression span {span:?} out of range")]
    TimeSpanOutOfRange { sentence: usize, span: (usize, usize) },
    #[error("mention `{0}`: duplicate id")]
    DuplicateMentionId(String),
    #[error("mention `{0}`: empty id")]
    EmptyMentionId(String),
    #[error("mention `{id}`: sentence {sentence} does not exist")]
    MentionSentenceOutOfRange { id: String, sentence: usize },
    #[error("mention `{id}`: span {span:?} is empty or outside its sentence")]
    MentionSpanOutOfRange { id: String, span: (usize, usize) },
    #[error("mention `{id}`: head token {head} lies outside span {span:?}")]
    HeadOutsideSpan {
        id: String,
        head: usize,
        span: (usize, usize),
    },
    #[error("mention `{id}`: not strictly after `{previous}` in discourse order")]
    DiscourseOrder { id: String, previous: String },
    #[error("mention `{id}`: event type `{event_type}` is not of the form type.subtype")]
    BadEventType { id: String, event_type: String },
    #[error("{field}: unknown mention id `{id}`")]
    UnknownMention { field: &'static str, id: String },
    #[error("coref: empty cluster")]
    EmptyCluster,
    #[error("coref: mention `{0}` appears in more than one cluster")]
    OverlappingClusters(String),
    #[error("after: link ({0}, {1}) connects two mentions of the same event")]
    AfterSelfLoop(String, String),
    #[error("after: event-level cycle through links {}", format_links(.0))]
    AfterCycle(Vec<(String, String)>),
}

fn format_links(links: &[(String, String)]) -> String {
    links
        .iter()
        .map(|(a, b)| format!("{a}->{b}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Document {
    /// Number of mentions, i.e. the largest discourse index.
    pub fn n(&self) -> usize {
        self.mentions.len()
    }

    /// Mention at discourse index `j` (1-based).
    pub fn mention(&self, j: usize) -> &EventMention {
        &self.mentions[j - 1]
    }

    pub fn mention_index(&self, id: &str) -> Option<usize> {
        self.mentions.iter().position(|m| m.id == id).map(|p| p + 1)
    }

    pub fn head_token(&self, j: usize) -> &Token {
        let m = self.mention(j);
        &self.sentences[m.sentence_index].tokens[m.head_token_index]
    }

    /// Canonical event id of a mention: the lexicographically smallest
    /// mention id of its gold cluster, or the mention itself.
    pub fn event_of<'a>(&'a self, id: &'a str) -> Result<&'a str, CorpusError> {
        if self.mention_index(id).is_none() {
            return Err(CorpusError::UnknownMention(id.to_string()));
        }
        let cluster = self
            .gold
            .as_ref()
            .and_then(|g| g.coref_clusters.iter().find(|c| c.iter().any(|m| m == id)));
        Ok(match cluster {
            Some(c) => c.iter().min().map(String::as_str).unwrap_or(id),
            None => id,
        })
    }

    /// Gold coreference partition over discourse indices 1..=n, singletons
    /// explicit. Documents without gold annotation yield all singletons.
    pub fn gold_clustering(&self) -> Clustering {
        let mut clusters = Vec::new();
        if let Some(gold) = &self.gold {
            for c in &gold.coref_clusters {
                clusters.push(
                    c.iter()
                        .filter_map(|id| self.mention_index(id))
                        .collect::<Vec<_>>(),
                );
            }
        }
        Clustering::from_clusters(clusters, 1..=self.n())
    }

    /// Gold after links as (earlier-in-script, later-in-script) discourse
    /// index pairs, exactly as annotated at the mention level.
    pub fn gold_after_pairs(&self) -> Vec<(usize, usize)> {
        let Some(gold) = &self.gold else {
            return Vec::new();
        };
        gold.after_links
            .iter()
            .filter_map(|(s, d)| Some((self.mention_index(s)?, self.mention_index(d)?)))
            .collect()
    }

    /// Checks every document invariant.
    pub fn validate(&self) -> Result<(), Violation> {
        for s in &self.sentences {
            validate_sentence(s)?;
        }
        let mut seen = BTreeSet::new();
        let mut previous: Option<&EventMention> = None;
        for (pos, m) in self.mentions.iter().enumerate() {
            if m.id.is_empty() {
                return Err(Violation::EmptyMentionId(m.id.clone()));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Violation::DuplicateMentionId(m.id.clone()));
            }
            let Some(sentence) = self.sentences.get(m.sentence_index) else {
                return Err(Violation::MentionSentenceOutOfRange {
                    id: m.id.clone(),
                    sentence: m.sentence_index,
                });
            };
            let (b, e) = m.token_span;
            if b >= e || e > sentence.tokens.len() {
                return Err(Violation::MentionSpanOutOfRange {
                    id: m.id.clone(),
                    span: m.token_span,
                });
            }
            if m.head_token_index < b || m.head_token_index >= e {
                return Err(Violation::HeadOutsideSpan {
                    id: m.id.clone(),
                    head: m.head_token_index,
                    span: m.token_span,
                });
            }
            if !valid_event_type(&m.event_type) {
                return Err(Violation::BadEventType {
                    id: m.id.clone(),
                    event_type: m.event_type.clone(),
                });
            }
            if let Some(p) = previous {
                if (p.sentence_index, p.token_span.0) >= (m.sentence_index, b) {
                    return Err(Violation::DiscourseOrder {
                        id: m.id.clone(),
                        previous: p.id.clone(),
                    });
                }
            }
            debug_assert_eq!(m.discourse_index, pos + 1);
            previous = Some(m);
        }
        if let Some(gold) = &self.gold {
            self.validate_gold(gold, &seen)?;
        }
        Ok(())
    }

    fn validate_gold(&self, gold: &GoldAnnotation, ids: &BTreeSet<&str>) -> Result<(), Violation> {
        let check = |field: &'static str, id: &String| {
            if ids.contains(id.as_str()) {
                Ok(())
            } else {
                Err(Violation::UnknownMention {
                    field,
                    id: id.clone(),
                })
            }
        };
        let mut event: HashMap<&str, usize> = HashMap::new();
        for (k, cluster) in gold.coref_clusters.iter().enumerate() {
            if cluster.is_empty() {
                return Err(Violation::EmptyCluster);
            }
            for id in cluster {
                check("coref", id)?;
                if event.insert(id.as_str(), k).is_some() {
                    return Err(Violation::OverlappingClusters(id.clone()));
                }
            }
        }
        for (s, d) in &gold.after_links {
            check("after", s)?;
            check("after", d)?;
        }
        for (p, c) in &gold.subevent_links {
            check("subevent", p)?;
            check("subevent", c)?;
        }

        // Event-level after graph: node = cluster number, or an offset
        // discourse index for mentions outside every cluster.
        let offset = gold.coref_clusters.len();
        let node_of = |id: &str| {
            event
                .get(id)
                .copied()
                .unwrap_or_else(|| offset + self.mention_index(id).expect("id checked above"))
        };
        let mut adj: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (link_idx, (s, d)) in gold.after_links.iter().enumerate() {
            let (a, b) = (node_of(s), node_of(d));
            if a == b {
                return Err(Violation::AfterSelfLoop(s.clone(), d.clone()));
            }
            adj.entry(a).or_default().push((b, link_idx));
        }
        if let Some(cycle) = find_cycle(&adj) {
            return Err(Violation::AfterCycle(
                cycle
                    .into_iter()
                    .map(|l| gold.after_links[l].clone())
                    .collect(),
            ));
        }
        Ok(())
    }

}

fn valid_event_type(t: &str) -> bool {
    match t.split_once('.') {
        Some((a, b)) => !a.is_empty() && !b.is_empty() && !b.contains('.'),
        None => false,
    }
}

fn validate_sentence(s: &Sentence) -> Result<(), Violation> {
    let len = s.tokens.len();
    for t in &s.tokens {
        if t.text.is_empty() {
            return Err(Violation::EmptyTokenText {
                sentence: s.index,
                token: t.index,
            });
        }
    }
    if let Some(deps) = &s.dependencies {
        let mut has_head = vec![false; len];
        for d in deps {
            if d.head() >= len || d.dependent() >= len {
                return Err(Violation::DependencyOutOfRange {
                    sentence: s.index,
                    head: d.head(),
                    dependent: d.dependent(),
                });
            }
            if std::mem::replace(&mut has_head[d.dependent()], true) {
                return Err(Violation::MultipleHeads {
                    sentence: s.index,
                    token: d.dependent(),
                });
            }
        }
        let heads = s.heads().expect("layer present");
        for start in 0..len {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = heads[cur] {
                cur = h;
                steps += 1;
                if steps > len {
                    return Err(Violation::DependencyCycle {
                        sentence: s.index,
                        token: start,
                    });
                }
            }
        }
    }
    if let Some(frames) = &s.frames {
        for f in frames {
            let args_ok = f.args.iter().all(|a| a.span.0 < a.span.1 && a.span.1 <= len);
            if f.target >= len || !args_ok {
                return Err(Violation::FrameOutOfRange {
                    sentence: s.index,
                    frame: f.name.clone(),
                });
            }
        }
    }
    if let Some(spans) = &s.temporal_expressions {
        for &span in spans {
            if span.0 >= span.1 || span.1 > len {
                return Err(Violation::TimeSpanOutOfRange {
                    sentence: s.index,
                    span,
                });
            }
        }
    }
    Ok(())
}

/// Depth-first search for a directed cycle; returns the link indices on it.
fn find_cycle(adj: &BTreeMap<usize, Vec<(usize, usize)>>) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit(
        node: usize,
        adj: &BTreeMap<usize, Vec<(usize, usize)>>,
        marks: &mut HashMap<usize, Mark>,
        stack: &mut Vec<(usize, usize)>,
    ) -> Option<Vec<usize>> {
        marks.insert(node, Mark::Open);
        for &(next, link) in adj.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            match marks.get(&next) {
                Some(Mark::Open) => {
                    let start = stack.iter().position(|&(n, _)| n == next).unwrap_or(stack.len());
                    let mut cycle: Vec<usize> = stack[start..].iter().map(|&(_, l)| l).collect();
                    cycle.push(link);
                    return Some(cycle);
                }
                Some(Mark::Done) => {}
                None => {
                    stack.push((node, link));
                    // the entry records the edge leaving `node`
                    let found = visit(next, adj, marks, stack);
                    stack.pop();
                    if found.is_some() {
                        return found;
                    }
                }
            }
        }
        marks.insert(node, Mark::Done);
        None
    }

    let mut marks = HashMap::new();
    for &start in adj.keys() {
        if !marks.contains_key(&start) {
            let mut stack = Vec::new();
            if let Some(c) = visit(start, adj, &mut marks, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

// Wire records.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenRecord {
    text: String,
    lemma: String,
    pos: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    tokens: Vec<TokenRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dependencies: Option<Vec<Dependency>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frames: Option<Vec<Frame>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_spans: Option<Vec<(usize, usize)>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MentionRecord {
    id: String,
    sentence: usize,
    span: (usize, usize),
    head: usize,
    #[serde(rename = "type")]
    event_type: String,
    realis: Realis,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    doc_id: String,
    sentences: Vec<SentenceRecord>,
    mentions: Vec<MentionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coref: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    after: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subevent: Option<Vec<(String, String)>>,
}

impl From<DocumentRecord> for Document {
    fn from(r: DocumentRecord) -> Self {
        let sentences = r
            .sentences
            .into_iter()
            .enumerate()
            .map(|(index, s)| Sentence {
                index,
                tokens: s
                    .tokens
                    .into_iter()
                    .enumerate()
                    .map(|(index, t)| Token {
                        index,
                        text: t.text,
                        lemma: t.lemma,
                        pos: t.pos,
                    })
                    .collect(),
                dependencies: s.dependencies,
                frames: s.frames,
                temporal_expressions: s.time_spans,
            })
            .collect();
        let mentions = r
            .mentions
            .into_iter()
            .enumerate()
            .map(|(pos, m)| EventMention {
                id: m.id,
                sentence_index: m.sentence,
                token_span: m.span,
                head_token_index: m.head,
                event_type: m.event_type,
                realis: m.realis,
                discourse_index: pos + 1,
            })
            .collect();
        let gold = if r.coref.is_some() || r.after.is_some() || r.subevent.is_some() {
            Some(GoldAnnotation {
                coref_clusters: r.coref.unwrap_or_default(),
                after_links: r.after.unwrap_or_default(),
                subevent_links: r.subevent.unwrap_or_default(),
            })
        } else {
            None
        };
        Document {
            doc_id: r.doc_id,
            sentences,
            mentions,
            gold,
        }
    }
}

impl From<&Document> for DocumentRecord {
    fn from(d: &Document) -> Self {
        DocumentRecord {
            doc_id: d.doc_id.clone(),
            sentences: d
                .sentences
                .iter()
                .map(|s| SentenceRecord {
                    tokens: s
                        .tokens
                        .iter()
                        .map(|t| TokenRecord {
                            text: t.text.clone(),
                            lemma: t.lemma.clone(),
                            pos: t.pos.clone(),
                        })
                        .collect(),
                    dependencies: s.dependencies.clone(),
                    frames: s.frames.clone(),
                    time_spans: s.temporal_expressions.clone(),
                })
                .collect(),
            mentions: d
                .mentions
                .iter()
                .map(|m| MentionRecord {
                    id: m.id.clone(),
                    sentence: m.sentence_index,
                    span: m.token_span,
                    head: m.head_token_index,
                    event_type: m.event_type.clone(),
                    realis: m.realis,
                })
                .collect(),
            coref: d.gold.as_ref().map(|g| g.coref_clusters.clone()),
            after: d.gold.as_ref().map(|g| g.after_links.clone()),
            subevent: d.gold.as_ref().map(|g| g.subevent_links.clone()),
        }
    }
}

/// Parses and validates a single corpus line.
pub fn parse_document(line: &str, line_no: usize) -> Result<Document, CorpusError> {
    let record: DocumentRecord = serde_json::from_str(line).map_err(|source| CorpusError::Parse {
        line: line_no,
        source,
    })?;
    let doc = Document::from(record);
    doc.validate().map_err(|violation| CorpusError::Invalid {
        line: line_no,
        doc_id: doc.doc_id.clone(),
        violation,
    })?;
    Ok(doc)
}

pub fn to_line(doc: &Document) -> String {
    serde_json::to_string(&DocumentRecord::from(doc)).expect("document records always serialize")
}

/// Reads a corpus file. Blank lines are skipped; line numbers are 1-based.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_document(&line, i + 1)?);
    }
    Ok(docs)
}

pub fn write_corpus(docs: &[Document], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        writeln!(w, "{}", to_line(d))?;
    }
    w.flush()?;
    Ok(())
}
