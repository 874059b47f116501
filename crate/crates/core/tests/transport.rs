use std::net::UdpSocket;
use std::time::Duration;

use acpa_eeg::net::{send_samples, serialize_packet, Pacing, Receiver, ReceiverConfig, SendConfig, StreamPacket};

fn receiver(expected: u64) -> Receiver {
    Receiver::bind(ReceiverConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        expected_packets: Some(expected),
        idle_timeout: Some(Duration::from_millis(500)),
        ..ReceiverConfig::default()
    })
    .unwrap()
}

#[test]
fn paced_stream_arrives_intact() {
    let samples: Vec<[f32; 8]> = (0..500).map(|i| std::array::from_fn(|c| (i * 8 + c) as f32 * 0.25)).collect();
    let rx = receiver(50);
    let dest = rx.local_addr().unwrap();
    let tx = samples.clone();
    let sender = std::thread::spawn(move || {
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        let cfg = SendConfig {
            batch: 10,
            pacing: Pacing::Realtime { fs: 2500.0 },
        };
        send_samples(&sock, dest, &tx, &cfg).unwrap()
    });
    let mut got = Vec::new();
    let stats = rx.run(|p| got.push((p.seq, p.samples.clone()))).unwrap();
    let sent = sender.join().unwrap();
    assert_eq!(sent.packets, 50);
    assert_eq!((stats.received, stats.lost, stats.duplicated, stats.malformed), (50, 0, 0, 0));
    got.sort_by_key(|g| g.0);
    let flat: Vec<[f32; 8]> = got.into_iter().flat_map(|g| g.1).collect();
    assert_eq!(flat, samples);
}

#[test]
fn gaps_duplicates_and_garbage_are_counted() {
    let rx = receiver(10);
    let dest = rx.local_addr().unwrap();
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    let send = |seq: u32| {
        let bytes = serialize_packet(&StreamPacket::new(seq, 0, vec![[seq as f32; 8]])).unwrap();
        sock.send_to(&bytes, dest).unwrap();
    };
    // 3 and 7 never arrive, 5 arrives twice, 2 arrives late.
    for seq in [0, 1, 4, 2, 5, 5, 6, 8, 9] {
        send(seq);
        std::thread::sleep(Duration::from_millis(2));
    }
    sock.send_to(b"not a packet", dest).unwrap();
    let stats = rx.run(|_| {}).unwrap();
    assert_eq!(stats.received, 8);
    assert_eq!(stats.duplicated, 1);
    assert_eq!(stats.reordered, 1);
    assert_eq!(stats.lost, 2);
    assert_eq!(stats.malformed, 1);
}
