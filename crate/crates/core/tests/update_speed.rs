//! Rough timing probe for one SAC gradient cycle at the default network
//! size. Informational; asserts only a very generous ceiling.

use cfho_core::rng::RngStream;
use cfho_core::sac::{SacHyper, SacTrainer, Transition};
use std::time::Instant;

#[test]
fn gradient_cycle_speed() {
    let b = 27;
    let obs_dim = 4 * b;
    let hyper = SacHyper::for_action_dim(b);
    let mut trainer = SacTrainer::new(obs_dim, b, hyper, 1);
    let mut rng = RngStream::new(2, 0);
    for k in 0..512 {
        trainer.observe(Transition {
            obs: (0..obs_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
            action: (0..b).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
            reward: rng.uniform_in(0.0, 20.0),
            next_obs: (0..obs_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
            done: k % 20 == 19,
        });
    }
    // warm
    for _ in 0..5 {
        trainer.update();
    }
    let n = 50;
    let t0 = Instant::now();
    for _ in 0..n {
        trainer.update();
    }
    let per = t0.elapsed().as_secs_f64() / n as f64;
    println!("one gradient cycle at B=27: {:.2} ms", per * 1e3);
    assert!(per < 0.25, "cycle took {per} s");
}
