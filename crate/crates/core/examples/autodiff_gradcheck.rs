//! Build a small computation on the autodiff graph, backpropagate, and
//! compare every weight gradient with a central difference.
//!
//! ```text
//! cargo run --example autodiff_gradcheck
//! ```

use feast::tensor::{Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Records `mean(log_softmax(relu(x W + b)))`; `W` is a trainable leaf when
/// `track` is set. Returns the graph, the loss and the `W` leaf.
fn build(x: &Tensor, w: &Tensor, b: &Tensor, track: bool) -> feast::Result<(Graph, Var, Var)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = if track { g.param(w.clone()) } else { g.constant(w.clone()) };
    let bv = g.constant(b.clone());
    let h = g.matmul(xv, wv)?;
    let h = g.add_bias(h, bv)?;
    let h = g.relu(h)?;
    let h = g.log_softmax_rows(h)?;
    let loss = g.mean(h)?;
    Ok((g, loss, wv))
}

fn main() -> feast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::uniform(5, 3, 1.0, &mut rng);
    let mut w = Tensor::uniform(3, 4, 1.0, &mut rng);
    let b = Tensor::uniform(1, 4, 1.0, &mut rng);

    let (mut g, loss, wv) = build(&x, &w, &b, true)?;
    g.backward(loss)?;
    let grad = g.grad(wv)?;
    println!("loss {:.6}, {} graph nodes", g.value(loss).item(), g.len());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let orig = w.get(i, j);
            let mut at = |v: f64| -> feast::Result<f64> {
                w.set(i, j, v);
                let (g, l, _) = build(&x, &w, &b, false)?;
                Ok(g.value(l).item())
            };
            let numeric = (at(orig + h)? - at(orig - h)?) / (2.0 * h);
            w.set(i, j, orig);
            worst = worst.max((numeric - grad.get(i, j)).abs());
            println!("dL/dW[{i},{j}]  graph {:+.8}  numeric {numeric:+.8}", grad.get(i, j));
        }
    }
    println!("max abs difference {worst:.2e}");
    Ok(())
}
