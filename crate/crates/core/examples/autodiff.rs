//! Fits a linear model with the tape and AdamW.
use fgp::diffmath::{AdamW, AdamWConfig, Matrix, ParamStore, Tape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // y = 2·x0 − 3·x1 + 0.5
    let xs = Matrix::from_vec(4, 2, vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 2.0, -1.0])?;
    let ys = Matrix::column_vector(vec![-2.5, 2.5, -0.5, 7.5]);

    let mut params = ParamStore::new();
    let w = params.insert("w", Matrix::zeros(2, 1))?;
    let b = params.insert("b", Matrix::zeros(1, 1))?;
    let mut opt = AdamW::new(AdamWConfig { lr: 0.05, weight_decay: 0.0, ..AdamWConfig::default() }, &params)?;

    for step in 0..=2000 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(xs.clone());
        let y = tape.constant(ys.clone());
        let xw = tape.matmul(x, bound.var(w))?;
        let pred = tape.add(xw, bound.var(b))?;
        let err = tape.sub(pred, y)?;
        let sq = tape.square(err);
        let loss = tape.mean(sq);
        if step % 500 == 0 {
            println!("step {step:4} loss {:.6}", tape.value(loss).item());
        }
        let mut grads = tape.backward(loss)?;
        let g = params.collect_grads(&bound, &mut grads);
        opt.step(&mut params, &g)?;
    }
    println!("w = {:?}, b = {:?}", params.get(w).data(), params.get(b).data());
    Ok(())
}
