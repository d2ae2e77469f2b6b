//! Kendall's tau, top-k precision and a 2-D PCA projection.
use fgp::evalmetrics::{kendall_tau, pca_project, precision_at_percent, EvalReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = [0.91, 0.85, 0.72, 0.72, 0.60, 0.41, 0.33, 0.20, 0.15, 0.05];
    let pred = [0.80, 0.88, 0.70, 0.50, 0.65, 0.40, 0.10, 0.30, 0.12, 0.01];
    println!("tau-b {:.4}", kendall_tau(&truth, &pred)?);
    println!("precision@10% {:.2}, @30% {:.2}", precision_at_percent(&truth, &pred, 10.0)?, precision_at_percent(&truth, &pred, 30.0)?);
    println!("{}", serde_json::to_string(&EvalReport::compute(&truth, &pred, &[10.0, 30.0], 0)?)?);

    let points: Vec<Vec<f64>> = (0..20).map(|i| {
        let t = i as f64 / 4.0;
        vec![t, 2.0 * t + 0.1 * (i % 3) as f64, -t]
    }).collect();
    let proj = pca_project(&points, 2)?;
    println!("explained variance ratio {:.4?}", proj.explained_variance_ratio);
    Ok(())
}
