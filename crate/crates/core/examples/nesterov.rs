//! Two Nesterov momentum steps on f(θ) = θ²/2, then a zero-gradient coast
//! where the step size decays geometrically with the velocity.

use stress_voice::train::sgd_nesterov_step;

fn main() {
    let (lr, mu) = (0.1, 0.9);
    let (mut theta, mut v) = (1.0, 0.0);
    for step in 1..=2 {
        (theta, v) = sgd_nesterov_step(theta, theta, v, lr, mu);
        println!("step {step}: theta {theta:.4} velocity {v:.4}");
    }
    for step in 3..=6 {
        let before = theta;
        (theta, v) = sgd_nesterov_step(theta, 0.0, v, lr, mu);
        println!("coast {step}: moved {:.5}", before - theta);
    }
}
