//! Stream a short simulated session over UDP on 127.0.0.1 and count what arrives.

use std::net::UdpSocket;
use std::thread;
use std::time::Duration;

use acpa_eeg::codec::AdcConfig;
use acpa_eeg::net::{send_stream, Pacing, Receiver, ReceiverConfig, SendConfig};
use acpa_eeg::sim::{quantize_through_codec, generate_session, EmotionLabel, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::for_class(EmotionLabel::Happiness, 3, 4.0);
    let (signal, _) = generate_session(&cfg);
    let samples = quantize_through_codec(&signal, &AdcConfig::default())?;
    let n_packets = samples.len().div_ceil(10) as u64;

    let rx = Receiver::bind(ReceiverConfig {
        bind: "127.0.0.1:0".parse()?,
        expected_packets: Some(n_packets),
        idle_timeout: Some(Duration::from_secs(1)),
        ..ReceiverConfig::default()
    })?;
    let dest = rx.local_addr()?;
    println!("receiver on {dest}, sending {} samples in {n_packets} packets", samples.len());

    let sender = thread::spawn(move || {
        let sock = UdpSocket::bind("127.0.0.1:0").expect("bind sender");
        let send = SendConfig {
            batch: 10,
            pacing: Pacing::Realtime { fs: cfg.fs },
        };
        send_stream(&sock, dest, &samples, &send).expect("send")
    });
    let mut first = None;
    let stats = rx.run(|p| {
        first.get_or_insert(p.samples[0]);
    })?;
    let sent = sender.join().expect("sender thread");

    println!("sent {} packets, {} bytes in {:.2?}", sent.packets, sent.bytes, sent.elapsed);
    println!("{}", stats.summary());
    println!("first sample {:?}", first.unwrap_or_default());
    Ok(())
}
