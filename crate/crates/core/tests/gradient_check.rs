//! Analytic gradients of the re-ranking loss against central finite differences.

use menorm::reranker::features::{nil_features, N_FEATURES};
use menorm::reranker::loss::loss_only;
use menorm::reranker::{loss_and_grad, Batch, ScorerParams};
use menorm::rng::SplitMix64;

const TRIPLES: usize = 100;
const STEP: f64 = 1e-6;
const MAX_REL_ERR: f64 = 1e-5;

fn unit(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

fn random_batch(rng: &mut SplitMix64) -> Batch {
    let real = 1 + (rng.next_u64() % 8) as usize;
    let mut b = Batch {
        candidate_ids: Vec::new(),
        features: Vec::new(),
        c: Vec::new(),
        gold: 0,
    };
    for i in 0..real {
        let mut f = [0.0; N_FEATURES];
        for x in f.iter_mut().take(N_FEATURES - 1) {
            *x = uniform(rng, 0.0, 1.0);
        }
        f[3] = (rng.next_u64() % 2) as f64;
        b.candidate_ids.push(format!("C{i}"));
        b.c.push(f[0]);
        b.features.push(f);
    }
    b.candidate_ids.push("NIL".into());
    b.features.push(nil_features());
    b.c.push(0.0);
    b.gold = (rng.next_u64() % b.features.len() as u64) as usize;
    b
}

fn lambda(i: usize, rng: &mut SplitMix64) -> f64 {
    match i % 5 {
        0 => 0.0,
        1 => 0.5,
        2 => 1.0,
        3 => 2.0,
        _ => uniform(rng, 0.0, 5.0),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = SplitMix64::new(20240601);
    let mut worst: f64 = 0.0;
    for i in 0..TRIPLES {
        let theta: Vec<f64> = (0..=N_FEATURES).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let batch = random_batch(&mut rng);
        let lam = lambda(i, &mut rng);
        let (_, analytic) = loss_and_grad(&ScorerParams::from_vec(&theta), &batch, lam).unwrap();

        let numeric: Vec<f64> = (0..theta.len())
            .map(|j| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += STEP;
                down[j] -= STEP;
                let lu = loss_only(&ScorerParams::from_vec(&up), &batch, lam).unwrap().total;
                let ld = loss_only(&ScorerParams::from_vec(&down), &batch, lam).unwrap().total;
                (lu - ld) / (2.0 * STEP)
            })
            .collect();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-7);
        worst = worst.max(rel);
        assert!(rel <= MAX_REL_ERR, "triple {i} (lambda {lam}): relative error {rel:e}");
    }
    println!("worst relative error over {TRIPLES} triples: {worst:e}");
}
