// Exact nearest-neighbor search over title vectors, the adaptive
// mean-distance filter, and KMeans over the same points.
//
// cargo run --example nearest_titles

use clozebias::geometry::{adaptive_filter, kmeans_assign, kmeans_fit, knn_query, PointSet};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // Unit vectors on a circle; titles name the angle in degrees.
    let points: Vec<(String, Vec<f64>)> = [0.0f64, 10.0, 20.0, 90.0, 100.0, 180.0, 185.0, 270.0]
        .iter()
        .map(|deg| {
            let r = deg.to_radians();
            (format!("{deg}"), vec![r.cos(), r.sin()])
        })
        .collect();
    let set = PointSet::from_vectors(points)?;

    let query = set.vector(0).to_vec();
    let neighbors = knn_query(&set, &query, 6)?;
    for n in &neighbors {
        println!("{:>5} at {:.4}", set.title(n.id), n.distance);
    }
    // The query itself and its close neighbors fall below the mean.
    let kept: Vec<&str> = adaptive_filter(&neighbors).into_iter().map(|i| set.title(i)).collect();
    println!("kept after filter: {kept:?}");

    let model = kmeans_fit(&set, 4, 50, 0)?;
    println!("cluster sizes {:?}, objective {:.4}", model.cluster_sizes(), model.objective(&set));
    println!("45 degrees lands in cluster {}", kmeans_assign(&model, &[std::f64::consts::FRAC_1_SQRT_2; 2])?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
