//! Pose-graph optimization of a noisy loop against chaining the odometry.
//!
//! `cargo run --release --example pose_graph -- [nodes] [seed]`

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use panorecon::geometry::Pose;
use panorecon::pipeline::eval_trajectory;
use panorecon::posegraph::{graph_loss_with, optimize_edges, EdgeSource, GraphEdge};

fn main() -> panorecon::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("integer argument"));
    let n = args.next().unwrap_or(20) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(args.next().unwrap_or(1));
    let rot = Normal::new(0.0, 2f64.to_radians()).unwrap();
    let shift = Normal::new(0.0, 0.05).unwrap();

    let gt: Vec<Pose> = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            Pose::from_axis_angle(&Vector3::z(), a, Vector3::new(4.0 * a.cos(), 4.0 * a.sin(), 0.0))
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = Vector3::from_fn(|_, _| rot.sample(&mut rng));
            let d = Vector3::from_fn(|_, _| shift.sample(&mut rng));
            let t = Pose::from_rotation_vector(&w, d).compose(&gt[i].inverse().compose(&gt[j]));
            edges.push(GraphEdge::new(i, j, t, 1.0, EdgeSource::Stage1)?);
        }
    }

    let mut chained = vec![Pose::identity()];
    for e in edges.iter().filter(|e| e.j == e.i + 1) {
        chained.push(chained[e.i].compose(&e.transform));
    }
    let p = optimize_edges(n, &edges)?;
    let optimized: Vec<Pose> = p.iter().map(Pose::inverse).collect();

    println!("{} edges, final loss {:.4}", edges.len(), graph_loss_with(&edges, &p));
    for (name, poses) in [("chained", &chained), ("optimized", &optimized)] {
        let (mean, std) = eval_trajectory(poses, &gt)?.e_t_stats();
        println!("{name:10} E_t {mean:.3} +- {std:.3} m");
    }
    Ok(())
}
