//! Runs every query scheme over several seeds and prints final returns and goal distances.
//!
//! `cargo run --release -p prefrl-core --example nav_compare -- seeds=5 total_steps=10000`

use std::time::Instant;

use prefrl_core::trainer::{run_scripted, RunConfig, SchemeKind};

fn main() -> prefrl_core::Result<()> {
    let mut seeds = 5u64;
    let mut first_seed = 0u64;
    let mut schemes = vec![SchemeKind::Uniform, SchemeKind::Disagreement, SchemeKind::PolicyAligned];
    let mut overrides = Vec::new();
    for arg in std::env::args().skip(1) {
        if let Some(n) = arg.strip_prefix("seeds=") {
            seeds = n.parse().expect("seed count");
        } else if let Some(n) = arg.strip_prefix("first_seed=") {
            first_seed = n.parse().expect("first seed");
        } else if let Some(list) = arg.strip_prefix("schemes=") {
            schemes = list
                .split(',')
                .map(|name| toml::Value::String(name.into()).try_into().expect("scheme name"))
                .collect();
        } else {
            overrides.push(arg);
        }
    }
    let base = RunConfig::default().with_overrides(&overrides)?;
    for scheme in schemes {
        let mut returns = Vec::new();
        let mut reached = 0;
        let mut diag = (0, 0);
        let mut curves: Vec<Vec<f64>> = Vec::new();
        for seed in first_seed..first_seed + seeds {
            let start = Instant::now();
            let cfg = RunConfig { scheme, seed, ..base.clone() };
            let s = run_scripted(&cfg)?;
            let ret = s.final_evaluation.mean_return;
            let dist = s.final_evaluation.mean_final_distance().unwrap_or(f64::NAN);
            reached += usize::from(dist <= 1.0);
            for x in &s.sessions {
                if let (Some(a), Some(u)) = (x.policy_aligned_log_likelihood, x.uniform_log_likelihood) {
                    diag.0 += usize::from(a > u);
                    diag.1 += 1;
                }
            }
            returns.push(ret);
            curves.push(s.rows.iter().map(|r| r.episode_return).collect());
            println!("{scheme:?} seed {seed}: return {ret:.2} distance {dist:.3} ({:.1}s)", start.elapsed().as_secs_f64());
        }
        let points = curves.iter().map(Vec::len).min().unwrap_or(0);
        let curve: Vec<String> = (0..points)
            .map(|i| format!("{:.1}", curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64))
            .collect();
        println!("{scheme:?} mean curve: {}", curve.join(" "));
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        println!("{scheme:?}: mean {mean:.2}, within 1.0 on {reached}/{seeds}, diagnostic {}/{}", diag.0, diag.1);
    }
    Ok(())
}
