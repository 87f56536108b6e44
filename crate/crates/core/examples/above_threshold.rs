//! The sparse vector technique answers a stream of threshold queries and
//! stops at the first one that falls below.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use upldp::mech::{AboveThreshold, Answer};

fn main() -> upldp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let queries = [95.0, 90.0, 88.0, 84.0, 81.0, 79.0, 70.0, 60.0];
    for epsilon in [0.5, 2.0, 1e6] {
        let mut gate = AboveThreshold::init(80.0, epsilon, &mut rng)?;
        print!("eps {epsilon:>9}: noisy threshold {:>7.2} |", gate.noisy_threshold());
        for q in queries {
            match gate.query(q, &mut rng)? {
                Answer::Above => print!(" {q}:above"),
                Answer::Below => {
                    print!(" {q}:below, halted");
                    break;
                }
            }
        }
        println!();
    }
    Ok(())
}
