//! Design the default 5-18 Hz band-pass and print its magnitude response.

use acpa_eeg::dsp::{design_bandpass, FilterSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = FilterSpec::default();
    let sos = design_bandpass(&spec)?;
    println!(
        "prototype order {}  sections {}  overall order {}  max pole radius {:.4}",
        spec.effective_prototype_order(),
        sos.sections.len(),
        sos.order(),
        sos.max_pole_radius()
    );
    for f in [0.5, 2.0, 4.0, 5.0, 8.0, 10.0, 12.0, 18.0, 20.0, 30.0, 50.0, 100.0] {
        println!("{f:6.1} Hz  {:9.3} dB", sos.magnitude_db(f, spec.fs));
    }
    Ok(())
}
