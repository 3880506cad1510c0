//! Scratch probe: z-scores of paired TS/OS mean differences in study two
//! under batch-means MCSE at several batch lengths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dualmark::baselines::{collapse_one_sided, fit_one_sided, Side};
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

fn main() {
    let scenario: SimScenario = SimScenario::study_two();
    let reps = 15u64;
    let iters = 40_000usize;
    let lens = [1_000usize, 2_000, 4_000];
    // zs[l][family] collects z-scores
    let mut zs: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); 3]; lens.len()];

    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(700_000 + rep);
        let sim = simulate_dataset(&scenario, &mut rng).unwrap();

        let mut cfg = SamplerConfig::new(700_000 + 10_000 + rep);
        cfg.n_chains = 3;
        cfg.burn_in = 2_000;
        cfg.n_iterations = iters;

        let model: Model = Model::new(sim.observed.clone(), EventLayer::TwoSided).unwrap();
        let ts = run_chains(&model, &cfg).unwrap();

        let records = || {
            sim.observed
                .histories()
                .iter()
                .zip(sim.observed.counts().iter().copied())
        };
        let left = collapse_one_sided(records(), Side::Left).unwrap();
        let mut cfg_left = cfg.clone();
        cfg_left.seed = 700_000 + 20_000 + rep;
        let os: Vec<Chain> = fit_one_sided(&left, &cfg_left).unwrap();

        for (fi, prefix) in ["phi", "gamma", "lambda"].iter().enumerate() {
            for i in 1..scenario.t {
                let name = format!("{prefix}_{i}");
                let d = pooled_mean(&ts, &name) - pooled_mean(&os, &name);
                for (li, &len) in lens.iter().enumerate() {
                    let sa = pooled_mcse(&ts, &name, len);
                    let sb = pooled_mcse(&os, &name, len);
                    zs[li][fi].push(d / (sa * sa + sb * sb).sqrt());
                }
            }
        }
        eprint!(".");
    }
    eprintln!();

    for (li, &len) in lens.iter().enumerate() {
        let all: Vec<f64> = zs[li].iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let sd = (all.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let agree = all.iter().filter(|z| z.abs() < 2.0).count() as f64 / n;
        print!("L={len}: z mean {mean:+.3} sd {sd:.3} agree {agree:.3} | per family sd ");
        for fi in 0..3 {
            let f = &zs[li][fi];
            let m = f.iter().sum::<f64>() / f.len() as f64;
            let s =
                (f.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / (f.len() - 1) as f64).sqrt();
            print!("{s:.3} ");
        }
        println!();
    }
}
