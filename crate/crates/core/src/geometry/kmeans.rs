use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embeddings::squared_distance;
use crate::error::{Error, Result};
use crate::rng;

use super::PointSet;

pub const DEFAULT_MAX_ITERS: usize = 100;

/// KMeans centroids plus the cluster of every point of the set the model was
/// fitted on (indexed by point id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRecord", try_from = "ModelRecord")]
pub struct ClusterModel {
    pub k: usize,
    pub dimension: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    k: usize,
    dimension: usize,
    centroids: Vec<Vec<f64>>,
    assignment: Vec<(usize, usize)>,
}

impl From<ClusterModel> for ModelRecord {
    fn from(m: ClusterModel) -> Self {
        ModelRecord {
            k: m.k,
            dimension: m.dimension,
            centroids: m.centroids,
            assignment: m.assignment.into_iter().enumerate().collect(),
        }
    }
}

impl TryFrom<ModelRecord> for ClusterModel {
    type Error = String;

    fn try_from(r: ModelRecord) -> std::result::Result<Self, String> {
        if r.k == 0 || r.centroids.len() != r.k {
            return Err(format!("k = {} but {} centroid rows", r.k, r.centroids.len()));
        }
        if let Some(bad) = r.centroids.iter().find(|c| c.len() != r.dimension) {
            return Err(format!("centroid of length {} under dimension {}", bad.len(), r.dimension));
        }
        let mut assignment = vec![usize::MAX; r.assignment.len()];
        for (id, c) in r.assignment {
            if id >= assignment.len() || c >= r.k || assignment[id] != usize::MAX {
                return Err(format!("bad assignment pair ({id}, {c})"));
            }
            assignment[id] = c;
        }
        Ok(ClusterModel {
            k: r.k,
            dimension: r.dimension,
            centroids: r.centroids,
            assignment,
        })
    }
}

impl ClusterModel {
    pub fn save_file(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    /// Sum of squared distances from each point to its assigned centroid.
    pub fn objective(&self, points: &PointSet) -> f64 {
        objective(points, &self.centroids, &self.assignment)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, squared_distance(&centroids[0], v));
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn kmeans_assign(model: &ClusterModel, v: &[f64]) -> Result<usize> {
    if v.len() != model.dimension {
        return Err(Error::DimensionMismatch {
            expected: model.dimension,
            actual: v.len(),
        });
    }
    Ok(nearest(&model.centroids, v).0)
}

fn objective(points: &PointSet, centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(id, &c)| squared_distance(points.vector(id), &centroids[c]))
        .sum()
}

fn assign_all(points: &PointSet, centroids: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len()).map(|id| nearest(centroids, points.vector(id)).0).collect()
}

/// Farthest-point seeding: a seeded random first centroid, then repeatedly
/// the point farthest from every chosen centroid (ties to the lowest id).
fn init_centroids(points: &PointSet, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, "kmeans-init");
    let first = rng.gen_range(0..points.len());
    let mut centroids = vec![points.vector(first).to_vec()];
    let mut gap: Vec<f64> = (0..points.len())
        .map(|id| squared_distance(points.vector(id), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let mut pick = 0;
        for (id, &g) in gap.iter().enumerate() {
            if g > gap[pick] {
                pick = id;
            }
        }
        let c = points.vector(pick).to_vec();
        for (id, g) in gap.iter_mut().enumerate() {
            *g = g.min(squared_distance(points.vector(id), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn update_centroids(points: &PointSet, centroids: &mut [Vec<f64>], assignment: &[usize]) {
    let d = points.dimension();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut sizes = vec![0usize; k];
    for (id, &c) in assignment.iter().enumerate() {
        sizes[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(points.vector(id)) {
            *s += x;
        }
    }
    // point-to-assigned-centroid distances, used to reseed empty clusters
    let mut gap: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(id, &c)| squared_distance(points.vector(id), &centroids[c]))
        .collect();
    for c in 0..k {
        if sizes[c] > 0 {
            for (dst, s) in centroids[c].iter_mut().zip(&sums[c]) {
                *dst = s / sizes[c] as f64;
            }
        }
    }
    for c in 0..k {
        if sizes[c] == 0 {
            let mut pick = 0;
            for (id, &g) in gap.iter().enumerate() {
                if g > gap[pick] {
                    pick = id;
                }
            }
            centroids[c] = points.vector(pick).to_vec();
            gap[pick] = f64::NEG_INFINITY;
        }
    }
}

pub fn kmeans_fit(points: &PointSet, k: usize, max_iters: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_fit_traced(points, k, max_iters, seed).map(|(m, _)| m)
}

/// Lloyd's algorithm from farthest-point seeding. Stops when assignments
/// stop changing or after `max_iters` updates. Also returns the objective
/// after every assignment step.
pub fn kmeans_fit_traced(
    points: &PointSet,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(ClusterModel, Vec<f64>)> {
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!(
            "KMeans needs 1 <= k <= {} points, got k = {k}",
            points.len()
        )));
    }
    let mut centroids = init_centroids(points, k, seed);
    let mut assignment = assign_all(points, &centroids);
    let mut history = vec![objective(points, &centroids, &assignment)];
    for _ in 0..max_iters {
        update_centroids(points, &mut centroids, &assignment);
        let next = assign_all(points, &centroids);
        history.push(objective(points, &centroids, &next));
        let settled = next == assignment;
        assignment = next;
        if settled {
            break;
        }
    }
    Ok((
        ClusterModel {
            k,
            dimension: points.dimension(),
            centroids,
            assignment,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointSet {
        PointSet::from_vectors(xs.iter().enumerate().map(|(i, x)| (format!("p{i}"), vec![*x])).collect()).unwrap()
    }

    /// Best 2-partition by enumerating every subset.
    fn best_two_partition(xs: &[f64]) -> (f64, Vec<usize>) {
        let n = xs.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let sse = |bit: u32| {
                let members: Vec<f64> = (0..n).filter(|i| (mask >> i) & 1 == bit).map(|i| xs[i]).collect();
                let m = members.iter().sum::<f64>() / members.len() as f64;
                members.iter().map(|x| (x - m).powi(2)).sum::<f64>()
            };
            let total = sse(0) + sse(1);
            if total < best.0 {
                best = (total, (0..n).map(|i| ((mask >> i) & 1) as usize).collect());
            }
        }
        best
    }

    #[test]
    fn two_clusters_on_a_line() {
        let xs = [0.0, 0.1, 10.0, 10.1];
        let (best_sse, best_labels) = best_two_partition(&xs);
        let set = line(&xs);
        let m = kmeans_fit(&set, 2, DEFAULT_MAX_ITERS, 1).unwrap();
        assert!((m.objective(&set) - best_sse).abs() < 1e-12);
        let same = |a: usize, b: usize| m.assignment[a] == m.assignment[b];
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(same(a, b), best_labels[a] == best_labels[b]);
            }
        }
        let mut cents: Vec<f64> = m.centroids.iter().map(|c| c[0]).collect();
        cents.sort_by(f64::total_cmp);
        assert!((cents[0] - 0.05).abs() < 1e-12 && (cents[1] - 10.05).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let set = line(&[1.0, 2.0, 6.0]);
        let m = kmeans_fit(&set, 1, 10, 0).unwrap();
        assert_eq!(m.centroids, vec![vec![3.0]]);
    }

    #[test]
    fn one_cluster_per_point() {
        let set = line(&[1.0, 2.0, 6.0, -3.0]);
        let m = kmeans_fit(&set, 4, 10, 5).unwrap();
        assert_eq!(m.objective(&set), 0.0);
        let mut a = m.assignment.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn k_out_of_range() {
        let set = line(&[1.0, 2.0]);
        assert!(kmeans_fit(&set, 0, 10, 0).is_err());
        assert!(kmeans_fit(&set, 3, 10, 0).is_err());
    }

    #[test]
    fn assign_examples() {
        let m = ClusterModel {
            k: 3,
            dimension: 1,
            centroids: vec![vec![-1.0], vec![1.0], vec![4.0]],
            assignment: vec![],
        };
        assert_eq!(kmeans_assign(&m, &[4.0]).unwrap(), 2);
        assert_eq!(kmeans_assign(&m, &[0.0]).unwrap(), 0);
        assert!(kmeans_assign(&m, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let set = line(&[0.0, 1.0, 2.0, 9.0]);
        let mut cents = vec![vec![0.0], vec![100.0], vec![9.0]];
        update_centroids(&set, &mut cents, &[0, 0, 0, 2]);
        assert_eq!(cents[0], vec![1.0]);
        // the point farthest from its own (old) centroid is p2
        assert_eq!(cents[1], vec![2.0]);
        assert_eq!(cents[2], vec![9.0]);
    }

    #[test]
    fn model_file_round_trip() {
        let set = line(&[0.3, 0.1, 7.25, 1.0 / 3.0, 9.0]);
        let m = kmeans_fit(&set, 2, 10, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save_file(&path).unwrap();
        assert_eq!(ClusterModel::load_file(&path).unwrap(), m);
    }
}
