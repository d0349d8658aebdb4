use std::collections::{BTreeMap, BTreeSet};

/// A partition of mention ids into disjoint clusters, singletons explicit.
///
/// Stored canonically: every cluster is sorted and clusters are ordered by
/// their smallest member, so two partitions are equal iff `==` holds.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Clustering {
    clusters: Vec<Vec<usize>>,
    owner: BTreeMap<usize, usize>,
}

impl Clustering {
    /// Builds a partition of `universe` from possibly partial clusters.
    /// Ids outside the universe are dropped; uncovered ids become singletons.
    /// Overlapping input clusters are merged.
    pub fn from_clusters<I, C>(clusters: I, universe: impl IntoIterator<Item = usize>) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = usize>,
    {
        let universe: BTreeSet<usize> = universe.into_iter().collect();
        let mut uf = UnionFind::new(universe.iter().copied());
        for c in clusters {
            let members: Vec<usize> = c.into_iter().filter(|m| universe.contains(m)).collect();
            for w in members.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        uf.into_clustering()
    }

    pub fn singletons(universe: impl IntoIterator<Item = usize>) -> Self {
        Self::from_clusters(Vec::<Vec<usize>>::new(), universe)
    }

    /// Partition induced by the connected components of undirected links.
    pub fn from_links(
        links: impl IntoIterator<Item = (usize, usize)>,
        universe: impl IntoIterator<Item = usize>,
    ) -> Self {
        Self::from_clusters(links.into_iter().map(|(a, b)| [a, b]), universe)
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn mentions(&self) -> impl Iterator<Item = usize> + '_ {
        self.owner.keys().copied()
    }

    pub fn mention_count(&self) -> usize {
        self.owner.len()
    }

    pub fn cluster_of(&self, m: usize) -> Option<&[usize]> {
        self.owner.get(&m).map(|&k| self.clusters[k].as_slice())
    }

    /// Smallest member of the cluster containing `m`; unknown ids map to
    /// themselves.
    pub fn representative(&self, m: usize) -> usize {
        self.owner.get(&m).map_or(m, |&k| self.clusters[k][0])
    }

    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.representative(a) == self.representative(b)
    }

    /// Clusters with more than one member.
    pub fn non_singletons(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.clusters.iter().filter(|c| c.len() > 1)
    }
}

struct UnionFind {
    parent: BTreeMap<usize, usize>,
}

impl UnionFind {
    fn new(items: impl Iterator<Item = usize>) -> Self {
        UnionFind {
            parent: items.map(|i| (i, i)).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let p = self.parent[&x];
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root);
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent.insert(hi, lo);
        }
    }

    fn into_clustering(mut self) -> Clustering {
        let keys: Vec<usize> = self.parent.keys().copied().collect();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for k in keys {
            let r = self.find(k);
            groups.entry(r).or_default().push(k);
        }
        let clusters: Vec<Vec<usize>> = groups.into_values().collect();
        let owner = clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.iter().map(move |&m| (m, k)))
            .collect();
        Clustering { clusters, owner }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_ignores_input_order() {
        let a = Clustering::from_clusters(vec![vec![3, 1], vec![4]], 1..=4);
        let b = Clustering::from_clusters(vec![vec![1, 3]], [4, 3, 2, 1]);
        assert_eq!(a, b);
        assert_eq!(a.clusters(), &[vec![1, 3], vec![2], vec![4]]);
        assert_eq!(a.representative(3), 1);
        assert_eq!(a.representative(99), 99);
    }

    #[test]
    fn links_are_transitive() {
        let c = Clustering::from_links([(1, 2), (2, 3)], 1..=4);
        assert_eq!(c.clusters(), &[vec![1, 2, 3], vec![4]]);
        assert!(c.same_cluster(1, 3));
        assert_eq!(c.non_singletons().count(), 1);
    }

    #[test]
    fn overlapping_clusters_merge() {
        let c = Clustering::from_clusters(vec![vec![1, 2], vec![2, 3]], 1..=3);
        assert_eq!(c.len(), 1);
    }
}
