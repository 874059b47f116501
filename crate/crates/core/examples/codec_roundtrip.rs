//! Encode a sample into a 27-octet ADS1299 frame and decode it back.

use acpa_eeg::codec::{decode_frame, encode_frame, AdcConfig, DecodedSample, RawFrame};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adc = AdcConfig::default();
    println!("lsb = {:.6} uV, full scale = {:.1} uV", adc.lsb_microvolts(), adc.full_scale_microvolts());

    let mut sample = DecodedSample::new([12.5, -3.25, 0.0, 80.0, -80.0, 1e-3, 150.0, -0.7]);
    sample.flags.loff_p[2] = true;
    sample.flags.gpio[0] = true;

    let bytes = encode_frame(&sample, &adc);
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    println!("frame  {hex}");

    let frame = RawFrame::parse(&bytes)?;
    let back = decode_frame(&bytes, &adc)?;
    for ch in 0..8 {
        println!(
            "ch{ch}  in {:>10.4}  out {:>10.4}  err {:+.2e}",
            sample.microvolts[ch],
            back.microvolts[ch],
            back.microvolts[ch] - sample.microvolts[ch]
        );
    }
    println!("lead-off {}  flags preserved {}", frame.flags().any_lead_off(), back.flags == sample.flags);
    Ok(())
}
