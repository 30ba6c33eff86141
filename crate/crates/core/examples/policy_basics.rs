//! Tabular softmax policies: sampling, log-probabilities, exact expectations
//! and the KL to a reference policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use redit::policy::{Dims, ParamTable, DEFAULT_ENUMERATION_CAP};

fn main() -> redit::Result<()> {
    // One prompt, four whole outputs.
    let bandit = ParamTable::from_logits(Dims::bandit(1, 4), vec![2.0, 0.0, 0.0, 0.0])?;
    println!("bandit log pi(0|0) = {:.6}", bandit.logprob(0, &[0])?);

    // Two prompts, length-3 sequences over 4 tokens, conditioned on the previous token.
    let dims = Dims::autoregressive(2, 3, 4, 1);
    let mut params = ParamTable::zeros(dims);
    params.logits_mut()[1] = 1.5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let group = params.sample_group(0, 4, &mut rng)?;
    for t in &group {
        println!("sampled {:?} with log pi = {:.4}", t.output, t.logprob_current);
    }

    let target = [1, 2, 3];
    let j = params.expected_reward(0, DEFAULT_ENUMERATION_CAP, |o| f64::from(o == target))?;
    println!("exact P(o = {target:?}) = {j:.6}");

    let reference = ParamTable::zeros(dims);
    println!("KL(pi || uniform) at prompt 0 = {:.6}", params.kl_divergence(&reference, 0)?);
    let g = params.grad_logprob(0, &target)?;
    println!("||grad log pi(target)|| = {:.6}", g.norm());
    Ok(())
}
