//! Coreference metrics (MUC, B³, CEAF-E, BLANC and their average), the
//! TempEval sequencing score, and the Singleton / Matching baselines.
//!
//! Scores are percentages. Every metric is computed from additive counts so
//! corpus-level micro aggregation is a plain sum; 0/0 is 0 unless stated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::corpus::{Document, Realis};
use crate::relgraph::{transitive_closure, transitive_reduction, EventDag};

/// Precision, recall and F1 in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_fractions(p: f64, r: f64) -> Self {
        Prf {
            precision: 100.0 * p,
            recall: 100.0 * r,
            f1: 100.0 * harmonic(p, r),
        }
    }

    fn rounded(self) -> Self {
        Prf {
            precision: round2(self.precision),
            recall: round2(self.recall),
            f1: round2(self.f1),
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean of two scores on any common scale; 0 when both are 0.
pub fn harmonic(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

/// Rounds half away from zero at two decimals, absorbing binary
/// representation error (77.605 is stored as 77.60499…).
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let nudged = scaled + scaled.signum() * 1e-9 * scaled.abs().max(1.0);
    nudged.round() / 100.0
}

/// Numerators and denominators of a precision/recall pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        Prf::from_fractions(ratio(self.p_num, self.p_den), ratio(self.r_num, self.r_den))
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.p_num += o.p_num;
        self.p_den += o.p_den;
        self.r_num += o.r_num;
        self.r_den += o.r_den;
    }
}

fn clusters_of(c: &Clustering) -> Vec<BTreeSet<usize>> {
    c.clusters().iter().map(|k| k.iter().copied().collect()).collect()
}

fn muc_side(key: &Clustering, response: &Clustering) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for k in key.clusters() {
        let parts: BTreeSet<usize> = k.iter().map(|&m| response.representative(m)).collect();
        num += (k.len() - parts.len()) as f64;
        den += (k.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(gold: &Clustering, sys: &Clustering) -> Counts {
    let (r_num, r_den) = muc_side(gold, sys);
    let (p_num, p_den) = muc_side(sys, gold);
    Counts { p_num, p_den, r_num, r_den }
}

/// Link-based MUC. A partition without links has no MUC denominator, so two
/// all-singleton partitions score 0.
pub fn muc(gold: &Clustering, sys: &Clustering) -> Prf {
    muc_counts(gold, sys).prf()
}

pub fn b_cubed_counts(gold: &Clustering, sys: &Clustering) -> Counts {
    let mut c = Counts::default();
    for m in gold.mentions() {
        let g = gold.cluster_of(m).unwrap_or(&[]);
        let s = sys.cluster_of(m).unwrap_or(&[]);
        let overlap = g.iter().filter(|x| s.contains(x)).count() as f64;
        c.p_num += ratio(overlap, s.len() as f64);
        c.r_num += ratio(overlap, g.len() as f64);
        c.p_den += 1.0;
        c.r_den += 1.0;
    }
    c
}

pub fn b_cubed(gold: &Clustering, sys: &Clustering) -> Prf {
    b_cubed_counts(gold, sys).prf()
}

/// φ4 entity similarity.
pub fn phi4(k: &BTreeSet<usize>, r: &BTreeSet<usize>) -> f64 {
    let both = k.intersection(r).count() as f64;
    2.0 * both / (k.len() + r.len()) as f64
}

pub fn ceaf_e_counts(gold: &Clustering, sys: &Clustering) -> Counts {
    let g = clusters_of(gold);
    let s = clusters_of(sys);
    let sim: Vec<Vec<f64>> = g.iter().map(|k| s.iter().map(|r| phi4(k, r)).collect()).collect();
    let best = max_assignment(&sim).1;
    Counts {
        p_num: best,
        p_den: s.len() as f64,
        r_num: best,
        r_den: g.len() as f64,
    }
}

pub fn ceaf_e(gold: &Clustering, sys: &Clustering) -> Prf {
    ceaf_e_counts(gold, sys).prf()
}

/// Maximum-weight one-to-one assignment of rows to columns (Hungarian
/// method with potentials, O(n²m)). Returns the column chosen for each row,
/// `None` for rows left over when there are more rows than columns, and the
/// total weight.
pub fn max_assignment(w: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (vec![None; rows], 0.0);
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| w[i][j]).collect()).collect();
        let (col_to_row, total) = max_assignment(&t);
        let mut out = vec![None; rows];
        for (j, i) in col_to_row.into_iter().enumerate() {
            if let Some(i) = i {
                out[i] = Some(j);
            }
        }
        return (out, total);
    }

    // minimise cost = -weight; 1-based arrays with a sentinel column 0
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = -w[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    let mut total = 0.0;
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
            total += w[p[j] - 1][j - 1];
        }
    }
    (out, total)
}

/// Pair confusion counts: right/wrong coreference links and non-links, from
/// the system's point of view.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlancCounts {
    pub right_coref: u64,
    pub wrong_coref: u64,
    pub wrong_noncoref: u64,
    pub right_noncoref: u64,
}

impl std::ops::AddAssign for BlancCounts {
    fn add_assign(&mut self, o: Self) {
        self.right_coref += o.right_coref;
        self.wrong_coref += o.wrong_coref;
        self.wrong_noncoref += o.wrong_noncoref;
        self.right_noncoref += o.right_noncoref;
    }
}

impl BlancCounts {
    /// Averages the link and non-link components. A component with no
    /// pairs on either side is 100; otherwise 0/0 ratios are 0.
    pub fn prf(&self) -> Prf {
        let c = |right: u64, wrong_sys: u64, wrong_gold: u64| -> (f64, f64, f64) {
            let (sys, gold) = (right + wrong_sys, right + wrong_gold);
            if sys == 0 && gold == 0 {
                return (1.0, 1.0, 1.0);
            }
            let p = ratio(right as f64, sys as f64);
            let r = ratio(right as f64, gold as f64);
            (p, r, harmonic(p, r))
        };
        let (pc, rc, fc) = c(self.right_coref, self.wrong_coref, self.wrong_noncoref);
        let (pn, rn, fn_) = c(self.right_noncoref, self.wrong_noncoref, self.wrong_coref);
        Prf {
            precision: 50.0 * (pc + pn),
            recall: 50.0 * (rc + rn),
            f1: 50.0 * (fc + fn_),
        }
    }
}

pub fn blanc_counts(gold: &Clustering, sys: &Clustering) -> BlancCounts {
    let ms: Vec<usize> = gold.mentions().collect();
    let mut c = BlancCounts::default();
    for (i, &a) in ms.iter().enumerate() {
        for &b in &ms[i + 1..] {
            match (gold.same_cluster(a, b), sys.same_cluster(a, b)) {
                (true, true) => c.right_coref += 1,
                (false, true) => c.wrong_coref += 1,
                (true, false) => c.wrong_noncoref += 1,
                (false, false) => c.right_noncoref += 1,
            }
        }
    }
    c
}

pub fn blanc(gold: &Clustering, sys: &Clustering) -> Prf {
    blanc_counts(gold, sys).prf()
}

/// Unweighted mean of the B³, CEAF-E, MUC and BLANC F1 scores.
pub fn average_f(b_cubed: f64, ceaf_e: f64, muc: f64, blanc: f64) -> f64 {
    (b_cubed + ceaf_e + muc + blanc) / 4.0
}

/// Maps mention-level after pairs onto cluster representatives, dropping
/// pairs inside one cluster.
pub fn event_dag(pairs: impl IntoIterator<Item = (usize, usize)>, clusters: &Clustering) -> EventDag {
    EventDag::from_edges(
        pairs
            .into_iter()
            .map(|(a, b)| (clusters.representative(a), clusters.representative(b)))
            .filter(|(a, b)| a != b),
    )
}

/// TempEval counts over mention pairs: both graphs are closed and reduced at
/// event level and then propagated to every mention pair of the clusters.
pub fn tempeval_counts(gold: &EventDag, sys: &EventDag, clusters: &Clustering) -> Counts {
    let gold_closure = transitive_closure(gold).mention_links(clusters);
    let gold_reduction = transitive_reduction(gold).mention_links(clusters);
    let sys_closure = transitive_closure(sys).mention_links(clusters);
    let sys_reduction = transitive_reduction(sys).mention_links(clusters);
    Counts {
        p_num: sys_reduction.intersection(&gold_closure).count() as f64,
        p_den: sys_reduction.len() as f64,
        r_num: gold_reduction.intersection(&sys_closure).count() as f64,
        r_den: gold_reduction.len() as f64,
    }
}

pub fn tempeval(gold: &EventDag, sys: &EventDag, clusters: &Clustering) -> Prf {
    tempeval_counts(gold, sys, clusters).prf()
}

pub fn baseline_singleton(doc: &Document) -> Clustering {
    Clustering::singletons(1..=doc.n())
}

/// Clusters mentions by identical (event type, realis).
pub fn baseline_matching(doc: &Document) -> Clustering {
    let mut groups: BTreeMap<(&str, Realis), Vec<usize>> = BTreeMap::new();
    for j in 1..=doc.n() {
        let m = doc.mention(j);
        groups.entry((m.event_type.as_str(), m.realis)).or_default().push(j);
    }
    Clustering::from_clusters(groups.into_values(), 1..=doc.n())
}

/// Corpus-level aggregation over documents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// pool counts across documents
    #[default]
    Micro,
    /// average per-document scores
    Macro,
}

impl FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "micro" => Ok(Aggregation::Micro),
            "macro" => Ok(Aggregation::Macro),
            _ => Err(format!("unknown aggregation `{s}` (expected micro or macro)")),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Micro => "micro",
            Aggregation::Macro => "macro",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    #[serde(flatten)]
    pub score: Prf,
}

/// Scores rounded to two decimals, plus the average F1 of the coreference
/// metrics (computed from the rounded values, as reported tables do).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub documents: usize,
    pub aggregation: Aggregation,
    pub metrics: Vec<MetricRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_f1: Option<f64>,
}

impl ScoreReport {
    pub fn get(&self, metric: &str) -> Option<&Prf> {
        self.metrics.iter().find(|r| r.metric == metric).map(|r| &r.score)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:>9} {:>9} {:>9}\n", "metric", "P", "R", "F1");
        for r in &self.metrics {
            out += &format!(
                "{:<8} {:>9.2} {:>9.2} {:>9.2}\n",
                r.metric, r.score.precision, r.score.recall, r.score.f1
            );
        }
        if let Some(avg) = self.average_f1 {
            out += &format!("{:<8} {:>9} {:>9} {:>9.2}\n", "AVG", "", "", avg);
        }
        out += &format!("({} documents, {} aggregation)\n", self.documents, self.aggregation);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn aggregate<C: Copy + Default + std::ops::AddAssign>(
    per_doc: &[C],
    prf: impl Fn(&C) -> Prf,
    mode: Aggregation,
) -> Prf {
    match mode {
        Aggregation::Micro => {
            let mut total = C::default();
            for &c in per_doc {
                total += c;
            }
            prf(&total)
        }
        Aggregation::Macro => {
            if per_doc.is_empty() {
                return Prf::default();
            }
            let k = per_doc.len() as f64;
            let mut sum = Prf::default();
            for c in per_doc {
                let s = prf(c);
                sum.precision += s.precision / k;
                sum.recall += s.recall / k;
                sum.f1 += s.f1 / k;
            }
            sum
        }
    }
}

/// Scores (gold, system) partitions of each document.
pub fn score_coref(docs: &[(Clustering, Clustering)], mode: Aggregation) -> ScoreReport {
    let muc_c: Vec<Counts> = docs.iter().map(|(g, s)| muc_counts(g, s)).collect();
    let b3_c: Vec<Counts> = docs.iter().map(|(g, s)| b_cubed_counts(g, s)).collect();
    let ceaf_c: Vec<Counts> = docs.iter().map(|(g, s)| ceaf_e_counts(g, s)).collect();
    let blanc_c: Vec<BlancCounts> = docs.iter().map(|(g, s)| blanc_counts(g, s)).collect();
    let b3 = aggregate(&b3_c, Counts::prf, mode).rounded();
    let ceaf = aggregate(&ceaf_c, Counts::prf, mode).rounded();
    let muc = aggregate(&muc_c, Counts::prf, mode).rounded();
    let bl = aggregate(&blanc_c, BlancCounts::prf, mode).rounded();
    let row = |m: &str, score: Prf| MetricRow {
        metric: m.to_string(),
        score,
    };
    ScoreReport {
        documents: docs.len(),
        aggregation: mode,
        average_f1: Some(round2(average_f(b3.f1, ceaf.f1, muc.f1, bl.f1))),
        metrics: vec![row("B3", b3), row("CEAF-E", ceaf), row("MUC", muc), row("BLANC", bl)],
    }
}

/// Scores (gold, system) event graphs of each document, both over the
/// document's gold clusters.
pub fn score_sequencing(docs: &[(EventDag, EventDag, Clustering)], mode: Aggregation) -> ScoreReport {
    let c: Vec<Counts> = docs.iter().map(|(g, s, k)| tempeval_counts(g, s, k)).collect();
    ScoreReport {
        documents: docs.len(),
        aggregation: mode,
        metrics: vec![MetricRow {
            metric: "TempEval".into(),
            score: aggregate(&c, Counts::prf, mode).rounded(),
        }],
        average_f1: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(clusters: &[&[usize]]) -> Clustering {
        let n = clusters.iter().flat_map(|c| c.iter()).max().copied().unwrap_or(0);
        Clustering::from_clusters(clusters.iter().map(|c| c.to_vec()), 1..=n)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 0.005
    }

    #[test]
    fn muc_split_cluster() {
        let s = muc(&part(&[&[1, 2, 3]]), &part(&[&[1, 2], &[3]]));
        assert!(close(s.recall, 50.0) && close(s.precision, 100.0) && close(s.f1, 66.67));
    }

    #[test]
    fn muc_singletons_score_zero() {
        let s = muc(&part(&[&[1, 3], &[2]]), &Clustering::singletons(1..=3));
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn b_cubed_examples() {
        let s = b_cubed(&part(&[&[1, 2], &[3]]), &part(&[&[1, 2, 3]]));
        assert!(close(s.recall, 100.0) && close(s.precision, 55.56) && close(s.f1, 71.43));
        let s = b_cubed(&part(&[&[1, 2]]), &Clustering::singletons(1..=2));
        assert!(close(s.precision, 100.0) && close(s.recall, 50.0));
    }

    #[test]
    fn ceaf_e_example() {
        let s = ceaf_e(&part(&[&[1, 2], &[3]]), &Clustering::singletons(1..=3));
        assert!(close(s.recall, 83.33) && close(s.precision, 55.56));
    }

    #[test]
    fn blanc_singleton_system() {
        // pairs 12 (gold link, missed), 13 and 23 (non-links, right):
        // link component P 0/0 -> 0, R 0/1; non-link P 2/3, R 2/2, F 0.8
        let s = blanc(&part(&[&[1, 2], &[3]]), &Clustering::singletons(1..=3));
        assert!(close(s.f1, 40.0), "{s:?}");
        assert!(close(s.precision, 33.33) && close(s.recall, 50.0));
    }

    #[test]
    fn blanc_with_no_links_anywhere_is_perfect() {
        let s = blanc(&Clustering::singletons(1..=4), &Clustering::singletons(1..=4));
        assert_eq!(s.f1, 100.0);
    }

    #[test]
    fn tempeval_closure_arc() {
        let k = Clustering::singletons(1..=3);
        let gold = EventDag::from_edges([(1, 2), (2, 3)]);
        let sys = EventDag::from_edges([(1, 3)]);
        let s = tempeval(&gold, &sys, &k);
        assert_eq!((s.precision, s.recall, s.f1), (100.0, 0.0, 0.0));
    }

    #[test]
    fn tempeval_propagates_through_clusters() {
        // event {1,3} before event {2}: two mention pairs on each side
        let k = part(&[&[1, 3], &[2]]);
        let gold = event_dag([(1, 2)], &k);
        let sys = event_dag([(3, 2)], &k);
        assert_eq!(tempeval_counts(&gold, &sys, &k).p_den, 2.0);
        assert_eq!(tempeval(&gold, &sys, &k).f1, 100.0);
    }

    #[test]
    fn average_and_rounding() {
        assert_eq!(round2(average_f(85.59, 79.65, 67.81, 77.37)), 77.61);
        assert_eq!(round2(average_f(78.10, 68.98, 0.00, 48.88)), 48.99);
        assert_eq!(round2(100.0 * harmonic(0.4621, 0.0872)), 14.67);
        assert_eq!(average_f(42.0, 42.0, 42.0, 42.0), 42.0);
    }

    #[test]
    fn assignment_handles_rectangles() {
        let w = vec![vec![1.0, 0.2], vec![0.9, 0.8], vec![0.0, 0.5]];
        let (a, total) = max_assignment(&w);
        assert_eq!(a, vec![Some(0), Some(1), None]);
        assert!((total - 1.8).abs() < 1e-12);
    }

    #[test]
    fn matching_groups_type_and_realis() {
        use crate::corpus::tests::simple_doc;
        let mut doc = simple_doc(&[
            ("a", "kill", "Life.Die"),
            ("b", "die", "Life.Die"),
            ("c", "die", "Life.Die"),
            ("d", "hurt", "Life.Injure"),
        ]);
        doc.mentions[2].realis = Realis::Other;
        let m = baseline_matching(&doc);
        for a in 1..=doc.n() {
            for b in 1..=doc.n() {
                let (x, y) = (doc.mention(a), doc.mention(b));
                let same = x.event_type == y.event_type && x.realis == y.realis;
                assert_eq!(m.same_cluster(a, b), same);
            }
        }
        assert_eq!(baseline_singleton(&doc), Clustering::singletons(1..=doc.n()));
    }

    #[test]
    fn report_table_and_json() {
        let g = part(&[&[1, 2], &[3]]);
        let r = score_coref(&[(g.clone(), g)], Aggregation::Micro);
        assert_eq!(r.average_f1, Some(100.0));
        assert!(r.to_table().contains("AVG"));
        let back: ScoreReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    fn partition(n: usize) -> impl Strategy<Value = Clustering> {
        prop::collection::vec(0..n, n).prop_map(move |labels| {
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.into_iter().enumerate() {
                groups.entry(l).or_default().push(i + 1);
            }
            Clustering::from_clusters(groups.into_values(), 1..=n)
        })
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_identity(g in partition(7), s in partition(7)) {
            for f in [muc, b_cubed, ceaf_e, blanc] {
                let x = f(&g, &s);
                for v in [x.precision, x.recall, x.f1] {
                    prop_assert!((0.0..=100.0 + 1e-9).contains(&v));
                }
            }
            for f in [b_cubed, ceaf_e, blanc] {
                prop_assert!((f(&g, &g).f1 - 100.0).abs() < 1e-9);
            }
            if g.non_singletons().next().is_some() {
                prop_assert!((muc(&g, &g).f1 - 100.0).abs() < 1e-9);
            }
        }

        #[test]
        fn swapping_sides_swaps_precision_and_recall(g in partition(6), s in partition(6)) {
            for f in [muc, b_cubed, ceaf_e, blanc] {
                let (x, y) = (f(&g, &s), f(&s, &g));
                prop_assert!((x.precision - y.recall).abs() < 1e-9);
                prop_assert!((x.f1 - y.f1).abs() < 1e-9);
            }
        }

        #[test]
        fn micro_of_one_document_is_the_document_score(g in partition(5), s in partition(5)) {
            let r = score_coref(&[(g.clone(), s.clone())], Aggregation::Micro);
            let m = score_coref(&[(g.clone(), s.clone())], Aggregation::Macro);
            prop_assert_eq!(&r.metrics, &m.metrics);
            prop_assert_eq!(r.get("MUC").unwrap().f1, round2(muc(&g, &s).f1));
        }
    }
}
