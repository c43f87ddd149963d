use std::collections::BTreeSet;
use std::path::Path;

use stem_core::analysis::{
    candidate_pairs, distance_histogram, histogram_rows, mean_distance, select_contradictory, HISTOGRAM_HEADER,
};
use stem_core::ndcore::Matrix;

use super::{find_task, open_single_task, resolve_focus, write_resolved};
use crate::artifacts::{load_split, write_file, LoadedRun, Manifest, MANIFEST};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// One histogram: a table of one checkpoint.
struct Panel<'a> {
    label: String,
    table: String,
    values: &'a Matrix,
}

fn table_of<'a>(run: &'a LoadedRun, table: &str) -> Result<&'a Matrix> {
    let name = format!("emb.{table}");
    let id = run.params.id(&name).ok_or_else(|| {
        CliError::Config(format!("{} has no embedding table {name}", run.path.display()))
    })?;
    Ok(run.params.value(id))
}

/// Finds pairs far apart under the task-A single-task table and close under
/// the task-B one, then histograms every table's distances for all
/// candidate pairs and for the selected ones.
pub fn analyze(cfg: &RunConfig, out: &Path) -> Result<()> {
    let an = &cfg.analysis;
    let (a, b) = resolve_focus(an.task_a, an.task_b, &cfg.data)?;
    let singles = open_single_task(&an.single_task)?;
    let run_a = find_task(&singles, a, "analysis")?;
    let run_b = find_task(&singles, b, "analysis")?;
    if an.checkpoints.is_empty() {
        return Err(CliError::Config("analysis needs at least one multi-task checkpoint".into()));
    }
    let models: Vec<LoadedRun> = an.checkpoints.iter().map(|p| LoadedRun::open(p)).collect::<Result<_>>()?;
    for run in models.iter().chain([run_a, run_b]) {
        if run.remap != run_a.remap {
            return Err(CliError::Config(format!(
                "{} was trained with a different feature remap than {}",
                run.path.display(),
                run_a.path.display()
            )));
        }
    }

    let data = run_a.remap.apply(&load_split(&cfg.data, an.split)?)?;
    let candidates = candidate_pairs(&data, an.user_field, an.item_field)?;
    let selected = select_contradictory(
        &candidates,
        table_of(run_a, "shared")?,
        table_of(run_b, "shared")?,
        an.top_frac,
        an.bottom_frac,
    )?;

    let mut panels = vec![
        Panel {
            label: format!("single_task{a}"),
            table: "shared".into(),
            values: table_of(run_a, "shared")?,
        },
        Panel {
            label: format!("single_task{b}"),
            table: "shared".into(),
            values: table_of(run_b, "shared")?,
        },
    ];
    let mut labels: BTreeSet<String> = panels.iter().map(|p| p.label.clone()).collect();
    for (i, run) in models.iter().enumerate() {
        let mut label = run.model.variant().name();
        if !labels.insert(label.clone()) {
            label = format!("{label}_{i}");
            labels.insert(label.clone());
        }
        let tables: Vec<String> = match &an.tables {
            Some(list) => list.iter().map(|t| t.trim_start_matches("emb.").to_string()).collect(),
            None => run
                .checkpoint
                .table_names()
                .iter()
                .map(|t| t.trim_start_matches("emb.").to_string())
                .collect(),
        };
        for table in tables {
            panels.push(Panel {
                values: table_of(run, &table)?,
                label: label.clone(),
                table,
            });
        }
    }

    let mut m = Manifest::default();
    m.set("task_a", a)
        .set("task_b", b)
        .set("split", format!("{:?}", an.split).to_lowercase())
        .set("candidate_pairs", selected.num_candidates)
        .set("selected_pairs", selected.pairs.len())
        .set("selected_fraction", selected.fraction())
        .set("top_frac", an.top_frac)
        .set("bottom_frac", an.bottom_frac)
        .set("pairs", "distinct (user, item) rows of the split");
    for p in &panels {
        let bins = distance_histogram(p.values, &candidates, &selected.pairs, an.n_bins)?;
        let name = format!("{}.{}", p.label, p.table);
        let mut text = format!("{HISTOGRAM_HEADER}\n");
        text.push_str(&histogram_rows(&name, &bins));
        write_file(&out.join(format!("hist_{}_{}.csv", p.label, p.table)), text)?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        m.set(format!("mean_distance_selected.{name}"), opt(mean_distance(p.values, &selected.pairs)?));
        m.set(format!("mean_distance_all.{name}"), opt(mean_distance(p.values, &candidates)?));
    }
    write_file(&out.join(MANIFEST), m.render())?;

    let mut resolved = cfg.clone();
    resolved.out_dir = Some(out.to_path_buf());
    resolved.analysis.task_a = Some(a);
    resolved.analysis.task_b = Some(b);
    write_resolved(&resolved, out)?;
    println!(
        "{} of {} candidate pairs selected ({:.4}); {} histograms written",
        selected.pairs.len(),
        selected.num_candidates,
        selected.fraction(),
        panels.len()
    );
    Ok(())
}
