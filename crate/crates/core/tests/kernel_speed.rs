//! Micro timings of the pieces of one gradient cycle. Informational.

use cfho_core::nn::{Adam, Mlp};
use cfho_core::rng::RngStream;
use std::time::Instant;

#[test]
fn kernel_breakdown() {
    let mut rng = RngStream::new(1, 0);
    let critic = Mlp::xavier(&[135, 64, 64, 1], false, &mut rng);
    let actor = Mlp::xavier(&[108, 64, 64, 54], false, &mut rng);
    let batch = 256;
    let xc: Vec<f64> = (0..batch * 135).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let xa: Vec<f64> = (0..batch * 108).map(|_| rng.uniform_in(-1.0, 1.0)).collect();

    let reps = 200;
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = critic.infer(&xc, batch);
    }
    let fwd_c = t0.elapsed().as_secs_f64() / reps as f64;

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = actor.infer(&xa, batch);
    }
    let fwd_a = t0.elapsed().as_secs_f64() / reps as f64;

    let cache = critic.forward(&xc, batch);
    let dy: Vec<f64> = (0..batch).map(|i| (i % 7) as f64 * 0.1).collect();
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = critic.backward(&cache, &dy);
    }
    let bwd_c = t0.elapsed().as_secs_f64() / reps as f64;

    let cache_a = actor.forward(&xa, batch);
    let dya: Vec<f64> = (0..batch * 54).map(|i| (i % 7) as f64 * 0.01).collect();
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = actor.backward(&cache_a, &dya);
    }
    let bwd_a = t0.elapsed().as_secs_f64() / reps as f64;

    let mut opt = Adam::new(&critic, 1e-4);
    let mut net = critic.clone();
    let (grads, _) = critic.backward(&cache, &dy);
    let t0 = Instant::now();
    for _ in 0..reps {
        opt.step(&mut net, &grads);
    }
    let adam = t0.elapsed().as_secs_f64() / reps as f64;

    println!("critic fwd {:.3} ms  actor fwd {:.3} ms", fwd_c * 1e3, fwd_a * 1e3);
    println!("critic bwd {:.3} ms  actor bwd {:.3} ms", bwd_c * 1e3, bwd_a * 1e3);
    println!("adam step  {:.3} ms", adam * 1e3);
    let mflop_fwd_c = (batch * (135 * 64 + 64 * 64 + 64) * 2) as f64 / 1e6;
    println!("critic fwd GFLOP/s: {:.2}", mflop_fwd_c / fwd_c / 1e3);
}
