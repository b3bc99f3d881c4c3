use std::time::Instant;

use social_processes::datasets::glancing::{
    eval_context_phases, generate_glancing_dataset, EVAL_CONTEXT_PHASES,
};
use social_processes::datasets::Standardization;
use social_processes::evaluation::{add_glancing_metrics, evaluate_tasks, fixed_context_tasks};
use social_processes::models::{ModelConfig, Paths, ProcessModel, Variant};
use social_processes::training::{train, TrainConfig, TrainEvent};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let variant: Variant = args
        .get(1)
        .map(|s| s.as_str())
        .unwrap_or("sp-gru")
        .parse()?;
    let epochs: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(2);
    let lr: f64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(1e-3);
    let wd: f64 = args.get(4).map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let patience: usize = args.get(5).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let seqs = generate_glancing_dataset(0.001)?;
    let samples: Vec<_> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| s.to_sample(i))
        .collect();
    let mut model = ProcessModel::new(ModelConfig::glancing(variant, Paths::Latent), 0)?;
    println!("params {}", model.param_count());
    let mut cfg = TrainConfig::glancing();
    cfg.max_epochs = epochs;
    cfg.learning_rate = lr;
    cfg.weight_decay = wd;
    cfg.patience = patience;
    let start = Instant::now();
    train(&mut model, &samples, &[], &cfg, &mut |e| match e {
        TrainEvent::Step(s) if s.step % 2500 == 0 => println!(
            "step {} loss {:.4} nll {:.4} {:.1}s",
            s.step,
            s.loss,
            s.nll,
            start.elapsed().as_secs_f64()
        ),
        TrainEvent::Epoch(r) => println!(
            "epoch {} train {:.4} nll {:.4} {:.1}s",
            r.epoch,
            r.train_loss,
            r.val_nll,
            start.elapsed().as_secs_f64()
        ),
        _ => {}
    })?;
    let phases = eval_context_phases(seqs.len() / 2, EVAL_CONTEXT_PHASES, 0)?;
    let ctx: Vec<usize> = phases.iter().flat_map(|p| [2 * p, 2 * p + 1]).collect();
    let t0 = Instant::now();
    let mut out = evaluate_tasks(
        &model,
        &samples,
        fixed_context_tasks(samples.len(), &ctx, 128),
        &Standardization::identity(1),
        1,
        0,
    )?;
    add_glancing_metrics(&mut out, &seqs)?;
    for r in &out.summary {
        println!("{} {}", r.metric, r.formatted());
    }
    let curve: Vec<String> = out
        .curves
        .iter()
        .filter(|c| c.metric == "mean_std")
        .map(|c| format!("{:.3}", c.value))
        .collect();
    println!(
        "std curve {curve:?}  eval {:.1}s",
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}
