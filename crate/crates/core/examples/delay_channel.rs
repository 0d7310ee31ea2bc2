//! Fixed-step delay channels: zero pre-history, then the sample from
//! exactly `T / dt` steps back.
//!
//! ```bash
//! cargo run --example delay_channel
//! ```

use delay_consensus::delayline::DelayLine;
use nalgebra::DVector;

fn main() {
    let dt = 0.005;
    let mut line = DelayLine::new(0.02, dt, 1).unwrap();
    println!("delay of 0.02 s at dt = {dt} -> {} steps, {} samples held", line.delay_steps(), line.capacity());
    for k in 0..8 {
        let x = DVector::from_element(1, k as f64 + 1.0);
        let out = line.push_and_read(&x);
        println!("step {k}: in {} out {}", x[0], out[0]);
    }
    match DelayLine::new(0.0033, dt, 1) {
        Ok(_) => unreachable!(),
        Err(e) => println!("{e}"),
    }
}
