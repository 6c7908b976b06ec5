// Folding a vector into a tensor, unfolding it along a mode, and
// contracting two tensors.

use ttemb::Tensor;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // 0..24 folded into 2 x 3 x 4; the first index runs fastest.
    let x: Vec<f64> = (0..24).map(f64::from).collect();
    let t = Tensor::tensorize(&x, &[2, 3, 4])?;
    assert_eq!(t.get(&[1, 0, 0]), 1.0);
    assert_eq!(t.get(&[0, 1, 0]), 2.0);
    assert_eq!(t.get(&[1, 2, 3]), 23.0);
    assert_eq!(t.vectorize(), x);

    // Mode-1 unfolding: 3 rows, 8 columns.
    let m = t.matricize(1)?;
    println!("mode-1 unfolding is {}x{}", m.rows(), m.cols());
    assert_eq!((m.rows(), m.cols()), (3, 8));

    // Contract mode 2 of t with mode 0 of a 4 x 5 tensor: result 2 x 3 x 5.
    let b = Tensor::new(vec![4, 5], (0..20).map(|v| v as f64 * 0.5).collect())?;
    let c = t.contract(&b, 2, 0)?;
    println!("contracted shape {:?}", c.shape());
    assert_eq!(c.shape(), &[2, 3, 5]);

    let mut by_hand = 0.0;
    for k in 0..4 {
        by_hand += t.get(&[1, 2, k]) * b.get(&[k, 3]);
    }
    assert_eq!(c.get(&[1, 2, 3]), by_hand);

    // Contracting everything leaves a single number.
    let v = Tensor::new(vec![3], vec![1.0, 2.0, 3.0])?;
    let dot = v.contract(&v, 0, 0)?;
    assert_eq!(dot.shape(), &[1]);
    assert_eq!(dot.data()[0], 14.0);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
