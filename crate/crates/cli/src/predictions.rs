//! Predictions file: one JSON object per line carrying the corpus format's
//! relation fields, `{"doc_id", "coref": [[id, ...]], "after": [[src, dst]]}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use eventrel::clustering::Clustering;
use eventrel::corpus::Document;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub doc_id: String,
    #[serde(default)]
    pub coref: Vec<Vec<String>>,
    #[serde(default)]
    pub after: Vec<(String, String)>,
}

impl Prediction {
    pub fn new(doc: &Document, clusters: &Clustering, after: &[(usize, usize)]) -> Self {
        let id = |j: usize| doc.mention(j).id.clone();
        Prediction {
            doc_id: doc.doc_id.clone(),
            coref: clusters
                .clusters()
                .iter()
                .map(|c| c.iter().map(|&j| id(j)).collect())
                .collect(),
            after: after.iter().map(|&(a, b)| (id(a), id(b))).collect(),
        }
    }

    /// Resolves ids against `doc`; omitted mentions become singletons.
    pub fn resolve(&self, doc: &Document) -> Result<(Clustering, Vec<(usize, usize)>)> {
        let index = |id: &str, field: &str| {
            doc.mention_index(id)
                .ok_or_else(|| anyhow!("{field}: unknown mention id `{id}`"))
        };
        let mut seen = BTreeMap::new();
        let mut clusters = Vec::new();
        for (k, c) in self.coref.iter().enumerate() {
            let mut members = Vec::new();
            for id in c {
                let j = index(id, "coref")?;
                if let Some(prev) = seen.insert(j, k) {
                    if prev != k {
                        bail!("coref: mention `{id}` appears in more than one cluster");
                    }
                }
                members.push(j);
            }
            clusters.push(members);
        }
        let after = self
            .after
            .iter()
            .map(|(a, b)| Ok((index(a, "after")?, index(b, "after")?)))
            .collect::<Result<Vec<_>>>()?;
        Ok((Clustering::from_clusters(clusters, 1..=doc.n()), after))
    }
}

pub fn read(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        out.push(p);
    }
    Ok(out)
}

pub fn write(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut text = String::new();
    for p in preds {
        text += &serde_json::to_string(p)?;
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
