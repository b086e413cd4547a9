//! The steady-state GA on its quadratic test function: run part way,
//! checkpoint, resume, and check the resumed log against a straight run.
//!
//! ```text
//! cargo run --release --example ga_surrogate -- [population] [generations]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use phc_design::ga::{evolve, surrogate, GaConfig, GaState, Genome, DEFAULT_SITES};

fn main() -> phc_design::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("integer argument"));
    let population = args.next().unwrap_or(60);
    let generations = args.next().unwrap_or(50);
    let target = Genome::random(&DEFAULT_SITES, &mut ChaCha8Rng::seed_from_u64(7));
    let f = surrogate(&target);
    let config = GaConfig { population, generations, seed: 3, ..GaConfig::default() };

    let straight = evolve(config.clone(), &DEFAULT_SITES, None, &mut |g| f(g))?;
    for r in straight.log.iter().step_by(5) {
        println!("generation {:>3}  evaluations {:>5}  best {:>12.6e}  mean {:>12.6e}", r.generation, r.evaluations, r.best, r.mean);
    }
    let initial = straight.log[0].mean;
    println!("best / initial mean = {:.4}%", 100.0 * straight.best().fitness / initial);

    let path = std::env::temp_dir().join("ga_surrogate.ckpt");
    let half = evolve(GaConfig { generations: generations / 2, ..config }, &DEFAULT_SITES, None, &mut |g| f(g))?;
    half.save(&path)?;
    let mut resumed = GaState::load(&path)?;
    resumed.config.generations = generations;
    resumed.run(&mut |g| f(g), None, &mut |_| {})?;
    let same = resumed.population == straight.population && resumed.log.iter().zip(&straight.log).all(|(a, b)| a.same_as(b));
    println!("resumed from generation {} matches the straight run: {same}", generations / 2);
    Ok(())
}
