//! Lattices, their covolume, dyadic refinement and the two window shapes.

use std::sync::Arc;

use homfield::{Lattice, Window};

fn main() -> homfield::Result<()> {
    let hex = Arc::new(Lattice::new(&[vec![1.0, 0.5], vec![0.0, 3f64.sqrt() / 2.0]])?);
    println!("hexagonal lattice, covolume {:.4}", hex.delta());

    let cube = Window::centered(hex.clone(), 1.0)?;
    println!("[-1, 1]^2 holds {} points:", cube.len());
    for i in 0..cube.len() {
        println!("  k = {:?} -> t = {:?}", cube.coord(i), cube.embedded(i));
    }

    let z = Arc::new(Lattice::integer(1));
    for n in 0..4 {
        let fine = Arc::new(z.refine(n));
        let block = Window::block(fine.clone(), 1.0)?;
        println!("2^-{n} Z: covolume {}, [0, 1] holds {} points", fine.delta(), block.len());
    }
    Ok(())
}
