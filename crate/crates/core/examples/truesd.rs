//! Scratch probe: true MC sd of pooled posterior means (across independent
//! refits of one study-two dataset) vs batch-means MCSE at several batch
//! lengths, and a burn-in transient check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dualmark::model::EventLayer;
use dualmark::sampler::run_chains;
use dualmark::simulator::simulate_dataset;
use dualmark::{Chain, Model, SamplerConfig, SimScenario};

fn pooled_mcse(chains: &[Chain], name: &str, batch: usize) -> f64 {
    let mut var_sum = 0.0;
    for chain in chains {
        let x = chain.col(name).unwrap();
        let b = x.len() / batch;
        let x = &x[x.len() - b * batch..];
        let means: Vec<f64> = x
            .chunks_exact(batch)
            .map(|w| w.iter().sum::<f64>() / batch as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / b as f64;
        let ss: f64 = means.iter().map(|&m| (m - grand) * (m - grand)).sum();
        var_sum += ss / (b * (b - 1)) as f64;
    }
    var_sum.sqrt() / chains.len() as f64
}

fn pooled_mean(chains: &[Chain], name: &str) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for chain in chains {
        let x = chain.col(name).unwrap();
        s += x.iter().sum::<f64>();
        n += x.len();
    }
    s / n as f64
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn main() {
    let scenario: SimScenario = SimScenario::study_two();
    let mut rng = ChaCha8Rng::seed_from_u64(700_000);
    let sim = simulate_dataset(&scenario, &mut rng).unwrap();
    let model: Model = Model::new(sim.observed, EventLayer::TwoSided).unwrap();

    let names: Vec<String> = ["phi", "gamma", "lambda"]
        .iter()
        .flat_map(|p| (1..scenario.t).map(move |i| format!("{p}_{i}")))
        .collect();
    let lens = [4_000usize, 8_000, 16_000];
    let refits = 30u64;

    for &burn in &[8_000usize] {
        // means[param][fit], est[len][param][fit]
        let mut means = vec![Vec::new(); names.len()];
        let mut est = vec![vec![Vec::new(); names.len()]; lens.len()];
        for fit in 0..refits {
            let mut cfg = SamplerConfig::new(6_000_000 + 1_000 * burn as u64 + fit);
            cfg.n_chains = 3;
            cfg.burn_in = burn;
            cfg.n_iterations = 160_000;
            let chains = run_chains(&model, &cfg).unwrap();
            for (pi, name) in names.iter().enumerate() {
                means[pi].push(pooled_mean(&chains, name));
                for (li, &len) in lens.iter().enumerate() {
                    est[li][pi].push(pooled_mcse(&chains, name, len));
                }
            }
            eprint!(".");
        }
        eprintln!();
        println!("burn-in {burn}: ratio true-sd / mean-batch-MCSE, median over params per family");
        for (li, &len) in lens.iter().enumerate() {
            print!("  L={len}: ");
            for f in 0..3 {
                let mut ratios: Vec<f64> = (f * 9..(f + 1) * 9)
                    .map(|pi| {
                        let truth = sd(&means[pi]);
                        let avg = est[li][pi].iter().sum::<f64>() / refits as f64;
                        truth / avg
                    })
                    .collect();
                ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
                print!("{:.3} ", ratios[4]);
            }
            println!();
        }
    }
}
