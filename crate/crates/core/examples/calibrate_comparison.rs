//! Repeats the grouped vs per-candidate comparison on the `fig5-regime`
//! generator over many seeds and prints the group-AUC margins, to choose the
//! acceptance threshold before freezing a seed.
//!
//! cargo run --release -p gcm-core --example calibrate_comparison -- --reps 20

use std::time::Instant;

use clap::Parser;
use gcm_core::compare::split_groups;
use gcm_core::eval::evaluate_model;
use gcm_core::io::synth::{generate, GeneratorSpec};
use gcm_core::train::{train, Algorithm, TrainOptions};
use gcm_core::Hyperparams;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 20)]
    reps: u64,
    #[arg(long, default_value_t = 1000)]
    first_seed: u64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// λ for the per-candidate run (defaults to --lambda).
    #[arg(long)]
    flat_lambda: Option<f64>,
    #[arg(long)]
    key_shift: Option<f64>,
    #[arg(long)]
    outlier_shift: Option<f64>,
    #[arg(long)]
    outlier_marker_shift: Option<f64>,
    #[arg(long)]
    n_neg_groups: Option<usize>,
    #[arg(long)]
    clutter_rate: Option<f64>,
    #[arg(long)]
    clutter_shift: Option<f64>,
    #[arg(long)]
    informative_features: Option<usize>,
    /// Print weights and solver terminations.
    #[arg(long)]
    verbose: bool,
    /// Train on the whole generated set and test on an independent one
    /// generated with `seed + test_seed_offset`.
    #[arg(long)]
    test_seed_offset: Option<u64>,
    /// Also run MI-SVM.
    #[arg(long)]
    misvm: bool,
}

fn main() -> gcm_core::Result<()> {
    env_logger::init();
    let args = Args::parse();
    let hp = Hyperparams::new(args.lambda, 1.0, 0.5)?;
    let opts = TrainOptions::default();
    let mut margins = Vec::new();
    println!("seed,gcm_group,nogroup_group,gcm_cand,nogroup_cand,misvm_group,misvm_outer,secs");
    for seed in args.first_seed..args.first_seed + args.reps {
        let mut spec = GeneratorSpec::preset("fig5-regime", seed)?;
        if let Some(v) = args.key_shift {
            spec.key_shift = v;
        }
        if let Some(v) = args.outlier_shift {
            spec.outlier_shift = v;
        }
        if let Some(v) = args.outlier_marker_shift {
            spec.outlier_marker_shift = v;
        }
        if let Some(v) = args.n_neg_groups {
            spec.n_neg_groups = v;
        }
        if let Some(v) = args.clutter_rate {
            spec.clutter_rate = v;
        }
        if let Some(v) = args.clutter_shift {
            spec.clutter_shift = v;
        }
        if let Some(v) = args.informative_features {
            spec.informative_features = v;
        }
        let start = Instant::now();
        let data = generate(&spec)?;
        let (fit, test) = match args.test_seed_offset {
            Some(off) => (data, generate(&GeneratorSpec { seed: seed + off, ..spec.clone() })?),
            None => split_groups(&data, 0.5, seed)?,
        };
        let gcm_run = train(&fit, Algorithm::Gcm, &hp, &opts)?;
        let flat_hp = hp.with_lambda(args.flat_lambda.unwrap_or(args.lambda));
        let flat_run = train(&fit, Algorithm::GcmNoGroup, &flat_hp, &opts)?;
        if args.verbose {
            for (name, r) in [("gcm", &gcm_run), ("nogroup", &flat_run)] {
                let w: Vec<String> = r.model.w.iter().map(|v| format!("{v:.3}")).collect();
                eprintln!(
                    "{name}: {} after {} its, f={:.6}, b={:.3}, w=[{}]",
                    r.trace.termination,
                    r.trace.iterations,
                    r.trace.final_objective(),
                    r.model.b,
                    w.join(" ")
                );
            }
        }
        let gcm = evaluate_model(&gcm_run.model, &test)?.0;
        let flat = evaluate_model(&flat_run.model, &test)?.0;
        let (mi_auc, mi_outer) = if args.misvm {
            let base = Hyperparams::new(args.lambda, 100.0, 0.0)?;
            let r = train(&fit, Algorithm::MiSvm, &base, &opts)?;
            (evaluate_model(&r.model, &test)?.0.group_auc, r.outer_iterations.unwrap_or(0))
        } else {
            (f64::NAN, 0)
        };
        println!(
            "{seed},{:.5},{:.5},{:.5},{:.5},{:.5},{mi_outer},{:.1}",
            gcm.group_auc,
            flat.group_auc,
            gcm.candidate_auc,
            flat.candidate_auc,
            mi_auc,
            start.elapsed().as_secs_f64()
        );
        margins.push((gcm.group_auc - flat.group_auc, flat.candidate_auc - gcm.candidate_auc));
    }
    let n = margins.len() as f64;
    let mean = margins.iter().map(|m| m.0).sum::<f64>() / n;
    let sd = (margins.iter().map(|m| (m.0 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let min = margins.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    let cand_ok = margins.iter().filter(|m| m.1 > 0.0).count();
    println!("# group margin mean {mean:.5} sd {sd:.5} min {min:.5}; candidate direction held {cand_ok}/{}", margins.len());
    Ok(())
}
