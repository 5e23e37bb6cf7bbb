//! Pose algebra: Euler vectors, composition and the trajectory text format.
//!
//! `cargo run --example poses`

use nalgebra::Vector3;
use panorecon::geometry::{Pose, Vec6Pose};
use panorecon::io::{format_trajectory, parse_trajectory};

fn main() -> panorecon::Result<()> {
    let a = Pose::from_vec6(&Vec6Pose::new(1.0, 0.0, 0.5, 0.0, 0.0, 90.0));
    let b = Pose::from_vec6(&Vec6Pose::new(0.0, 2.0, 0.0, 10.0, -5.0, 0.0));
    let ab = a.compose(&b);
    println!("a * b      = {:?}", ab.to_vec6()?);
    println!("a * a^-1   = {:?}", a.compose(&a.inverse()).to_vec6()?);
    println!("rotation   = {:.2} deg", ab.angle().to_degrees());
    println!("b moves    {:?} to {:?}", Vector3::<f64>::x(), b.transform_point(&Vector3::x()));

    let text = format_trajectory(&[Pose::identity(), a, ab]);
    print!("{text}");
    let back = parse_trajectory(&text)?;
    let gap = (back[2].1.to_matrix() - ab.to_matrix()).abs().max();
    println!("round trip through text: {} poses, max entry change {gap:.1e}", back.len());
    Ok(())
}
