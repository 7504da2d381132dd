//! Host and device exchanging framed observations and actions.

use microgait::wire::{to_hex, DeviceSession, HostSession, Loopback, WireVector};

fn main() -> microgait::Result<()> {
    let mut host = HostSession::new();
    let mut device = DeviceSession::new();
    let mut link = Loopback::new();

    for step in 0..3 {
        let obs = WireVector::Int8((0..24).map(|i| (i * 5 + step * 11 - 60) as i8).collect());
        let up = host.session_step(&obs)?;
        println!("host -> {}", to_hex(&up));
        link.host_send(&up);

        let frame = link.device_recv().expect("frame in flight")?;
        let received = device.receive_observation(&frame)?;
        let act = match received {
            WireVector::Int8(v) => WireVector::Int8(v[..8].iter().map(|x| x.saturating_neg()).collect()),
            WireVector::Fp32(v) => WireVector::Fp32(v[..8].to_vec()),
        };
        let down = device.reply(&act)?;
        println!("dev  <- {}", to_hex(&down));
        link.device_send(&down);

        let frame = link.host_recv().expect("frame in flight")?;
        println!("host got seq {} {:?}\n", frame.seq, host.receive_action(&frame)?);
    }

    // a corrupted byte is caught and the reader resynchronizes
    let mut bad = host.session_step(&WireVector::Int8(vec![1; 24]))?;
    bad[7] ^= 0x40;
    link.host_send(&bad);
    match link.device_recv() {
        Some(Err(e)) => println!("corrupted frame rejected: {e}"),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
