//! Compare backpropagated gradients with finite differences, layer by layer
//! and through a reduced model.

use acpa_eeg::nn::gradcheck::{check_layers, check_model};
use acpa_eeg::nn::{GradCheckConfig, Model, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let per_layer = GradCheckConfig::per_layer();
    for layer in check_layers(&per_layer)? {
        println!("{:<20} {:>4} coords  max rel err {:.2e}", layer.layer, layer.coordinates.len(), layer.max_rel_error());
    }

    let cfg = GradCheckConfig::default();
    let model = Model::new(ModelConfig::reduced(), 0)?;
    let report = check_model(&model, [2, 8, 4, 6], &cfg)?;
    println!(
        "model: {} coords, max rel err {:.2e}, failures at {:.0e}: {}",
        report.coordinates.len(),
        report.max_rel_error(),
        cfg.tolerance,
        report.failures(cfg.tolerance)
    );
    if let Some(w) = report.worst() {
        println!("worst {w:?}");
    }
    Ok(())
}
