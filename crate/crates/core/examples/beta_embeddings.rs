//! Beta embeddings: difficulty modulation, conjunction and KL distance.
//!
//! ```text
//! cargo run --example beta_embeddings
//! ```

use plkt::betaembed::{beta_kl, conjunction, conjunction_weights, expectation, modulate_difficulty, BetaEmbedding};
use plkt::mlp::Mlp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> plkt::Result<()> {
    let easy = modulate_difficulty(&[0.5, 1.0], &[0.0, -1.0], 0.1, &[1.0, 1.0], &[1.0, 1.0], 1e-4);
    let hard = modulate_difficulty(&[0.5, 1.0], &[0.0, -1.0], 0.9, &[1.0, 1.0], &[1.0, 1.0], 1e-4);
    println!("easy question  α {:?} β {:?}", easy.alpha, easy.beta);
    println!("hard question  α {:?} β {:?}", hard.alpha, hard.beta);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mlp = Mlp::init(4, 4, 2, false, &mut rng);
    let a = BetaEmbedding::new(vec![4.0, 1.0], vec![1.0, 3.0])?;
    let b = BetaEmbedding::new(vec![1.5, 2.0], vec![2.0, 1.0])?;
    let both = conjunction(&[a.clone(), b.clone()], &mlp)?;
    println!("conjunction    α {:?} β {:?}", both.alpha, both.beta);
    println!(
        "weights        {:?}",
        conjunction_weights(&[a.clone(), b.clone()], &mlp)?
    );
    println!("mean of a      {:?}", expectation(&a));

    let beta22 = BetaEmbedding::uniform(1, 2.0, 2.0)?;
    let flat = BetaEmbedding::uniform(1, 1.0, 1.0)?;
    println!("KL(Beta(2,2) ‖ U) = {:.6}", beta_kl(&beta22, &flat)?);
    println!("KL(U ‖ Beta(2,2)) = {:.6}", beta_kl(&flat, &beta22)?);
    println!("KL(a ‖ conj)      = {:.6}", beta_kl(&a, &both)?);
    Ok(())
}
