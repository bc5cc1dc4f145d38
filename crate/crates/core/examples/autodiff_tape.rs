//! Reverse-mode differentiation with the tape, checked against a central
//! difference.
//!
//! ```text
//! cargo run --example autodiff_tape
//! ```

use plkt::diffcore::{Graph, Tensor};

fn loss(w: &[f64], x: &[f64]) -> plkt::Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let w = g.leaf(Tensor::new(vec![2, 3], w.to_vec())?.with_grad());
    let x = g.leaf(Tensor::new(vec![3, 1], x.to_vec())?);
    let h = g.matmul(w, x)?;
    let h = g.softplus(h)?;
    let h = g.flatten(h)?;
    let p = g.softmax(h)?;
    let lp = g.log(p)?;
    let first = g.gather(lp, &[0])?;
    let total = g.sum(first)?;
    g.backward(total)?;
    Ok((
        g.value(total)[0],
        g.tensor(w).grad().expect("leaf requires grad").to_vec(),
    ))
}

fn main() -> plkt::Result<()> {
    let w = vec![0.2, -0.4, 0.1, 0.7, 0.3, -0.5];
    let x = vec![1.0, 2.0, -1.0];
    let (value, grad) = loss(&w, &x)?;
    println!("loss = {value:.9}");
    let h = 1e-6;
    for i in 0..w.len() {
        let mut up = w.clone();
        let mut down = w.clone();
        up[i] += h;
        down[i] -= h;
        let numeric = (loss(&up, &x)?.0 - loss(&down, &x)?.0) / (2.0 * h);
        println!("dL/dw[{i}] tape {:+.9} numeric {numeric:+.9}", grad[i]);
    }
    Ok(())
}
