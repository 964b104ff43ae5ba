use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::corpus::normalize_title;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

/// Deduplicated titles with their vectors. Ids are dense, assigned in
/// lexicographic title order, and double as the kNN tie-break key.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dimension: usize,
    titles: Vec<String>,
    counts: Vec<usize>,
    data: Vec<f64>,
    ids: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

impl PointSet {
    /// Normalizes and deduplicates `titles`, keeping how often each one
    /// occurred, and encodes each with `table`. Titles that normalize to the
    /// empty string are dropped.
    pub fn from_titles<'a>(titles: impl IntoIterator<Item = &'a str>, table: &EmbeddingTable) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in titles {
            let n = normalize_title(t);
            if !n.is_empty() {
                *counts.entry(n).or_default() += 1;
            }
        }
        let mut set = PointSet::empty(table.dimension());
        for (title, count) in counts {
            let v = table.encode(&title);
            set.push(title, count, &v);
        }
        set
    }

    /// Builds a point set from explicit vectors. Titles must be unique; ids
    /// follow the given order.
    pub fn from_vectors(points: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dimension = points.first().map_or(0, |p| p.1.len());
        let mut set = PointSet::empty(dimension);
        for (title, v) in points {
            if v.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: v.len(),
                });
            }
            if set.ids.contains_key(&title) {
                return Err(Error::Config(format!("duplicate point title `{title}`")));
            }
            set.push(title, 1, &v);
        }
        Ok(set)
    }

    fn empty(dimension: usize) -> Self {
        PointSet {
            dimension,
            titles: Vec::new(),
            counts: Vec::new(),
            data: Vec::new(),
            ids: HashMap::new(),
        }
    }

    fn push(&mut self, title: String, count: usize, v: &[f64]) {
        self.ids.insert(title.clone(), self.titles.len());
        self.titles.push(title);
        self.counts.push(count);
        self.data.extend_from_slice(v);
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn title(&self, id: usize) -> &str {
        &self.titles[id]
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    /// Number of occurrences of the title before deduplication.
    pub fn count(&self, id: usize) -> usize {
        self.counts[id]
    }

    pub fn id_of(&self, title: &str) -> Option<usize> {
        self.ids.get(title).copied()
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.data[id * self.dimension..(id + 1) * self.dimension]
    }
}

fn by_distance_then_id(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id))
}

/// Exact k-nearest-neighbor search by exhaustive scan. Returns
/// `min(k, |points|)` neighbors in ascending distance, ties by lower id.
pub fn knn_query(points: &PointSet, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
    knn_query_excluding(points, query, k, None)
}

/// As [`knn_query`], with one point id left out of the scan.
pub fn knn_query_excluding(
    points: &PointSet,
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Result<Vec<Neighbor>> {
    if points.is_empty() {
        return Err(Error::Empty("kNN over an empty point set"));
    }
    if k == 0 {
        return Err(Error::Config("kNN needs k >= 1".into()));
    }
    if query.len() != points.dimension {
        return Err(Error::DimensionMismatch {
            expected: points.dimension,
            actual: query.len(),
        });
    }
    let mut all: Vec<Neighbor> = (0..points.len())
        .filter(|&id| Some(id) != exclude)
        .map(|id| Neighbor {
            id,
            distance: crate::embeddings::distance(points.vector(id), query)
                .expect("dimensions checked above"),
        })
        .collect();
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, by_distance_then_id);
        all.truncate(k);
    }
    all.sort_by(by_distance_then_id);
    Ok(all)
}

pub fn mean_distance(neighbors: &[Neighbor]) -> f64 {
    if neighbors.is_empty() {
        return 0.0;
    }
    neighbors.iter().map(|n| n.distance).sum::<f64>() / neighbors.len() as f64
}

/// Keeps the neighbors strictly farther than the mean listed distance,
/// in their original order. Near-duplicates of the query fall below the
/// mean and are discarded.
pub fn adaptive_filter(neighbors: &[Neighbor]) -> Vec<usize> {
    let mean = mean_distance(neighbors);
    neighbors
        .iter()
        .filter(|n| n.distance > mean)
        .map(|n| n.id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(points: &[(&str, f64)]) -> PointSet {
        PointSet::from_vectors(points.iter().map(|(t, x)| (t.to_string(), vec![*x])).collect()).unwrap()
    }

    fn n(id: usize, distance: f64) -> Neighbor {
        Neighbor { id, distance }
    }

    /// Independent oracle: full sort of every point.
    fn oracle(points: &[(&str, f64)], q: f64, k: usize) -> Vec<(String, f64)> {
        let mut all: Vec<(usize, f64)> = points.iter().enumerate().map(|(i, p)| (i, (p.1 - q).abs())).collect();
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        all.into_iter().take(k).map(|(i, d)| (points[i].0.to_string(), d)).collect()
    }

    #[test]
    fn one_dimensional_example() {
        let pts = [("A", 0.0), ("B", 1.0), ("C", 2.0), ("D", 5.0)];
        let set = line(&pts);
        let got = knn_query_excluding(&set, &[0.0], 3, Some(0)).unwrap();
        let got: Vec<(String, f64)> = got.iter().map(|x| (set.title(x.id).to_string(), x.distance)).collect();
        let expected = oracle(&pts[1..], 0.0, 3);
        assert_eq!(expected, vec![("B".into(), 1.0), ("C".into(), 2.0), ("D".into(), 5.0)]);
        assert_eq!(got, expected);
    }

    #[test]
    fn k_larger_than_set_returns_everything() {
        let set = line(&[("a", 1.0), ("b", 3.0)]);
        assert_eq!(knn_query(&set, &[0.0], 10).unwrap().len(), 2);
    }

    #[test]
    fn ties_prefer_lower_id() {
        let set = line(&[("a", -1.0), ("b", 1.0)]);
        let got = knn_query(&set, &[0.0], 1).unwrap();
        assert_eq!(got[0].id, 0);
    }

    #[test]
    fn empty_set_is_an_error() {
        let set = PointSet::from_vectors(vec![]).unwrap();
        assert!(knn_query(&set, &[], 1).is_err());
    }

    #[test]
    fn adaptive_filter_examples() {
        assert_eq!(adaptive_filter(&[n(0, 1.0), n(1, 2.0), n(2, 5.0)]), vec![2]);
        assert!(adaptive_filter(&[n(0, 2.0), n(1, 2.0), n(2, 2.0)]).is_empty());
        assert_eq!(adaptive_filter(&[n(4, 1.0), n(9, 3.0)]), vec![9]);
    }

    #[test]
    fn from_titles_dedups_with_counts() {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("cut", &[1.0, 0.0]).unwrap();
        let set = PointSet::from_titles(["Step 1: Cut", "cut", "Sand", "3."], &t);
        assert_eq!(set.titles(), ["cut", "sand"]);
        assert_eq!(set.count(0), 2);
        assert_eq!(set.vector(1), &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn filter_keeps_a_farther_subset(ds in prop::collection::vec(0.0f64..4.0, 1..30)) {
            let neigh: Vec<Neighbor> = ds.iter().enumerate().map(|(i, &d)| n(i, d)).collect();
            let kept = adaptive_filter(&neigh);
            prop_assert!(kept.iter().all(|id| *id < ds.len()));
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            if !kept.is_empty() {
                let kept_mean = kept.iter().map(|&i| ds[i]).sum::<f64>() / kept.len() as f64;
                prop_assert!(kept_mean > mean_distance(&neigh));
            }
        }
    }
}
