// Picking a tensor shape for an embedding width.

use ttemb::planner::{optimal_shapes, plan, uniform_storage, ShapePolicy};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // Full prime factorization: the smallest storage at rank 1.
    let p = plan(27, &ShapePolicy::MaxCompression, 1, 0.0)?;
    println!("{p}");
    assert_eq!(p.to_string(), "3,3,3 params 9 eta 2.0");

    let gpt2 = plan(768, &ShapePolicy::MaxCompression, 1, 0.0)?;
    println!("d=768, max: {gpt2}");
    assert_eq!(gpt2.shape, vec![2, 2, 2, 2, 2, 2, 2, 2, 3]);

    // A fixed order picks the most balanced factorization.
    let three = plan(768, &ShapePolicy::TargetOrder(3), 4, 0.0)?;
    println!("d=768, order 3, rank 4: {three}");
    assert_eq!(three.shape, vec![8, 8, 12]);
    assert_eq!(three.predicted_params, 208);

    // Every shape that attains the minimum; ties are kept.
    let (best, shapes) = optimal_shapes(16, 1);
    println!("d=16 at rank 1: {best} params, {} shapes", shapes.len());
    assert!(shapes.contains(&vec![2, 2, 2, 2]));
    assert!(shapes.contains(&vec![4, 4]));

    // At higher rank the balance shifts toward fewer, larger modes.
    assert!(uniform_storage(&[4, 4, 4], 4) < uniform_storage(&[2, 2, 2, 2, 2, 2], 4));

    let custom: ShapePolicy = "shape:16,48".parse()?;
    println!("explicit: {}", plan(768, &custom, 2, 0.0)?);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
