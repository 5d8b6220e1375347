//! Recovers a weighted path from its distance matrix, and rejects a star.
//!
//! `cargo run --release --example tree_metric`

use superman::treemetric::{four_point_check, reconstruct_path, DistanceMatrix, Tolerance, WeightedPath};

fn main() -> superman::Result<()> {
    let path = WeightedPath::new(vec![3, 0, 4, 1, 2], vec![0.5, 2.0, 1.25, 3.0])?;
    let d = path.distance_matrix();
    let tol = Tolerance::Absolute(1e-9);
    println!("four-point condition: {}", four_point_check(&d, tol).holds);

    d.reset_reads();
    let back = reconstruct_path(&d, tol)?;
    println!("recovered order {:?} weights {:?} ({} reads)", back.order, back.weights, d.reads());

    // Three leaves on unit spokes: a tree metric, but not a path.
    let star = DistanceMatrix::new(
        vec![vec![0.0, 1.0, 1.0, 1.0], vec![1.0, 0.0, 2.0, 2.0], vec![1.0, 2.0, 0.0, 2.0], vec![1.0, 2.0, 2.0, 0.0]],
        tol,
    )?;
    match reconstruct_path(&star, tol) {
        Ok(p) => println!("unexpected path {:?}", p.order),
        Err(e) => println!("star: {e}"),
    }
    Ok(())
}
