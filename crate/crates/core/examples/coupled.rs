use std::time::Instant;

use social_processes::datasets::mock::coupled_agents;
use social_processes::models::{
    AblationFlags, FeatureLayout, ModelConfig, Paths, ProcessModel, Variant,
};
use social_processes::training::{train, TrainConfig, TrainEvent};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let n_train: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let train_set = coupled_agents(n_train, 8, 4, 3, 1, "train");
    let val_set = coupled_agents(400, 8, 4, 3, 2, "val");
    for flag in [None, Some("no_pool"), Some("pool_oT")] {
        let v: Variant = "sp-gru".parse()?;
        let mut cfg = ModelConfig::haggling(v, Paths::Latent, 8, 4);
        cfg.layout = FeatureLayout::Generic;
        cfg.data_dim = 1;
        for w in [
            &mut cfg.seq_hidden,
            &mut cfg.pooler_hidden,
            &mut cfg.pooler_out,
            &mut cfg.z_hidden,
            &mut cfg.rep_dim,
        ] {
            *w = 32;
        }
        let mut flags = AblationFlags::default();
        if let Some(f) = flag {
            flags.set(f)?;
        }
        let cfg = cfg.with_flags(flags)?;
        let mut model = ProcessModel::new(cfg, 0)?;
        let mut tc = TrainConfig::glancing();
        tc.batch_size = 64;
        tc.context_fraction_min = 0.2;
        tc.context_fraction_max = 0.8;
        tc.max_epochs = epochs;
        tc.patience = epochs;
        let t0 = Instant::now();
        let rep = train(&mut model, &train_set, &val_set, &tc, &mut |e| {
            if let TrainEvent::Epoch(r) = e {
                println!(
                    "  {flag:?} epoch {} train {:.4} val {:.4}",
                    r.epoch, r.train_loss, r.val_nll
                );
            }
        })?;
        println!(
            "{flag:?}: best {:?} params {} {:.1}s",
            rep.best.iter().map(|b| b.val_nll).collect::<Vec<_>>(),
            model.param_count(),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
