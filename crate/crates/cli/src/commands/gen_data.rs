use std::path::Path;

use stem_core::data::{generate_synthetic, split, write_csv};

use super::write_resolved;
use crate::artifacts::{sparse_and_dense_tasks, write_file, Manifest, MANIFEST};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Writes `train.csv`, `val.csv`, `test.csv` and a manifest of the realised
/// data statistics.
pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let syn = cfg
        .data
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("gen-data needs a [data.synthetic] section".into()))?;
    let generated = generate_synthetic(syn)?;
    let [r_train, r_val, r_test] = cfg.data.split;
    let (train, val, test) = split(&generated.dataset, (r_train, r_val, r_test), cfg.data.split_seed)?;
    for (name, part) in [("train.csv", &train), ("val.csv", &val), ("test.csv", &test)] {
        write_csv(part, &out.join(name))?;
    }

    let all = &generated.dataset;
    let mut m = Manifest::default();
    m.set("seed", syn.seed)
        .set("split_seed", cfg.data.split_seed)
        .set("rho", syn.rho)
        .set("user_mixing", format!("{:?}", syn.user_mixing).to_lowercase())
        .set("num_samples", all.len())
        .set("num_train", train.len())
        .set("num_val", val.len())
        .set("num_test", test.len());
    for t in 0..all.num_tasks() {
        m.set(format!("bias_task{t}"), generated.bias[t]);
        if let Some(target) = &syn.target_positive_ratio {
            m.set(format!("target_positive_ratio_task{t}"), target[t]);
        }
        m.set(format!("positive_ratio_task{t}"), all.positive_ratio(t));
    }
    for a in 0..all.num_tasks() {
        for b in a + 1..all.num_tasks() {
            m.set(
                format!("probability_correlation_task{a}_task{b}"),
                generated.probability_correlation(a, b),
            );
        }
    }
    if all.num_tasks() > 1 {
        let (sparse, dense) = sparse_and_dense_tasks(all);
        m.set(
            format!("contradiction_fraction_task{dense}_above_0.7_task{sparse}_below_0.1"),
            generated.contradiction_fraction(dense, sparse, 0.7, 0.1),
        );
    }
    write_file(&out.join(MANIFEST), m.render())?;
    write_resolved(cfg, out)?;
    println!(
        "wrote {} / {} / {} samples to {}",
        train.len(),
        val.len(),
        test.len(),
        out.display()
    );
    Ok(())
}
