//! Hard-negative mining over a small random corpus, showing both a kept
//! query and one discarded by the thresholds.

use embedkit::miner::{mine, top_k, EmbeddingMatrix, MineOutcome, MinerConfig};
use embedkit::Embedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Embedding::normalize(v).unwrap().into_inner()
}

fn main() -> embedkit::Result<()> {
    let dim = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ids: Vec<String> = (0..500).map(|i| format!("doc-{i:03}")).collect();
    let data: Vec<f64> = (0..ids.len()).flat_map(|_| unit(&mut rng, dim)).collect();
    let corpus = EmbeddingMatrix::new(ids, dim, data)?;
    let config = MinerConfig::default();

    let query = unit(&mut rng, dim);
    let nearest = top_k(&query, &corpus, 3)?;
    for s in &nearest {
        println!("nearest {} {:.3}", s.id, s.score);
    }

    // Treat the closest document as the positive.
    let positive = nearest[0].index;
    for s_pos in [nearest[0].score, 0.3] {
        let result = mine(&query, s_pos, &corpus, &|i| i == positive, &config)?;
        match result.outcome {
            MineOutcome::Negatives(negs) => {
                let top: Vec<String> = negs
                    .iter()
                    .take(4)
                    .map(|n| format!("{}:{:.3}", n.id, n.score))
                    .collect();
                println!(
                    "positive score {s_pos:.3}: kept {} negatives, first {}",
                    negs.len(),
                    top.join(" ")
                );
            }
            MineOutcome::Discard(reason) => {
                println!("positive score {s_pos:.3}: discarded ({reason:?})")
            }
        }
    }
    Ok(())
}
