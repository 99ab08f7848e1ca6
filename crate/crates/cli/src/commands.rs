//! Implementations behind the subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cwsynth::classifier::ClassifierBank;
use cwsynth::data::{load_csv, load_csv_with_schema, CategoricalDataset, DatasetSchema};
use cwsynth::error::{Error, Result};
use cwsynth::metrics::{build_report, evaluate, marginal_pmf_table};
use cwsynth::pca::Pca;
use cwsynth::persist;
use cwsynth::prior::{fit_gmm, fit_kde};
use cwsynth::rng::derive_seed;
use cwsynth::synthesis::{generate, GenerateMode};
use cwsynth::trainer::{aggregate_posterior_sample, train_step1};

use crate::config::{FileConfig, PriorKind};
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let header = !cli.no_header;
    match cli.command {
        Command::PretrainClassifiers { data, out } => pretrain(&cfg, &data, &out, header, seed),
        Command::Fit {
            data,
            test,
            classifier_bank,
            out,
            lambda,
            gamma,
            latent_dim,
            no_entropy_reg,
        } => fit(
            &cfg,
            &data,
            test.as_deref(),
            classifier_bank.as_deref(),
            &out,
            FitOverrides {
                lambda,
                gamma,
                latent_dim,
                no_entropy_reg,
            },
            header,
            seed,
        ),
        Command::Sample {
            model,
            prior,
            schema,
            out,
            count,
            argmax,
        } => sample(&model, &prior, &schema, &out, count, argmax, seed),
        Command::Evaluate {
            data,
            test,
            synth,
            out,
            plot_data,
        } => run_evaluate(&cfg, &data, &test, &synth, &out, plot_data, header, seed),
        Command::LatentDump {
            data,
            model,
            schema,
            out,
            draws,
        } => latent_dump(&data, &model, &schema, &out, draws, header, seed),
    }
}

fn load_training_csv(path: &Path, header: bool) -> Result<CategoricalDataset> {
    let (ds, warnings) = load_csv(path, header)?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(ds)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn pretrain(cfg: &FileConfig, data: &Path, out: &Path, header: bool, seed: u64) -> Result<()> {
    let ds = load_training_csv(data, header)?;
    let (epochs, lr) = cfg.classifier_params();
    let mut bank = ClassifierBank::new(Arc::clone(ds.schema()))?;
    bank.pretrain(&ds, epochs, lr, derive_seed(seed, "classifier"))?;
    ensure_dir(out)?;
    persist::save_bank(&bank, &out.join("bank.weights"))?;
    ds.schema().save_json(&out.join("schema.json"))?;
    println!(
        "pre-trained {} classifiers on {} rows -> {}",
        ds.n_columns(),
        ds.n_rows(),
        out.display()
    );
    Ok(())
}

struct FitOverrides {
    lambda: Option<f64>,
    gamma: Option<f64>,
    latent_dim: Option<usize>,
    no_entropy_reg: bool,
}

#[allow(clippy::too_many_arguments)]
fn fit(
    cfg: &FileConfig,
    data: &Path,
    test: Option<&Path>,
    bank_path: Option<&Path>,
    out: &Path,
    overrides: FitOverrides,
    header: bool,
    seed: u64,
) -> Result<()> {
    let ds = load_training_csv(data, header)?;
    let eval_ds = test
        .map(|p| load_csv_with_schema(p, header, Arc::clone(ds.schema())))
        .transpose()?;

    let mut step1 = cfg.step1_config(derive_seed(seed, "step1"))?;
    if let Some(l) = overrides.lambda {
        step1.lambda = l;
    }
    if let Some(g) = overrides.gamma {
        step1.gamma = g;
    }
    if let Some(d) = overrides.latent_dim {
        step1.latent_dim = d;
    }
    if overrides.no_entropy_reg {
        step1.use_entropy_reg = false;
    }
    step1.validate()?;

    let bank = bank_path
        .map(|p| persist::load_bank(p, Arc::clone(ds.schema())))
        .transpose()?;
    if step1.gamma > 0.0 && bank.is_none() {
        return Err(Error::InvalidConfig(
            "gamma > 0 requires --classifier-bank".into(),
        ));
    }

    let (model, report) = train_step1(&ds, eval_ds.as_ref(), bank.as_ref(), &step1)?;

    let latents = aggregate_posterior_sample(&model, &ds, 1, derive_seed(seed, "aggregate"))?;
    let prior = match cfg.prior_kind()? {
        PriorKind::Gmm {
            components,
            max_iters,
            tol,
        } => fit_gmm(
            &latents.z,
            components,
            derive_seed(seed, "prior"),
            max_iters,
            tol,
        )?,
        PriorKind::Kde { bandwidth } => fit_kde(&latents.z, bandwidth)?,
    };
    if let cwsynth::prior::PriorModel::Gmm(g) = &prior {
        for &c in &g.collapsed {
            eprintln!("warning: mixture component {c} hit the variance floor");
        }
    }

    ensure_dir(out)?;
    persist::save_model(&model, ds.n_rows(), &out.join("model.weights"))?;
    persist::save_prior(&prior, ds.schema(), &out.join("prior.weights"))?;
    ds.schema().save_json(&out.join("schema.json"))?;
    write_text(&out.join("train_report.json"), &report.to_json()?)?;
    write_text(&out.join("loss_trace.csv"), &report.trace_csv())?;
    let last = report.epochs.last().expect("at least one epoch");
    println!(
        "fit complete: {} epochs, final recon {:.4}, avg posterior var {:?} -> {}",
        report.epochs.len(),
        last.recon,
        report.avg_posterior_var,
        out.display()
    );
    Ok(())
}

fn sample(
    model_path: &Path,
    prior_path: &Path,
    schema_path: &Path,
    out: &Path,
    count: Option<usize>,
    argmax: bool,
    seed: u64,
) -> Result<()> {
    let schema = Arc::new(DatasetSchema::load_json(schema_path)?);
    let (model, n_train) = persist::load_model(model_path, Arc::clone(&schema))?;
    let prior = persist::load_prior(prior_path, &schema)?;
    let count = count.unwrap_or(n_train);
    if count == 0 {
        return Err(Error::InvalidConfig("count must be >= 1".into()));
    }
    let mode = if argmax {
        GenerateMode::Argmax
    } else {
        GenerateMode::Sample
    };
    let ds = generate(&model, &prior, count, derive_seed(seed, "generate"), mode)?;
    ds.save_csv(out)?;
    println!("wrote {count} synthetic rows -> {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_evaluate(
    cfg: &FileConfig,
    data: &Path,
    test: &Path,
    synths: &[PathBuf],
    out: &Path,
    plot_data: bool,
    header: bool,
    seed: u64,
) -> Result<()> {
    let real_train = load_training_csv(data, header)?;
    let schema = Arc::clone(real_train.schema());
    let real_test = load_csv_with_schema(test, header, Arc::clone(&schema))?;
    let eval_cfg = cfg.evaluate_config(derive_seed(seed, "evaluate"));

    let mut systems = Vec::new();
    for path in synths {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let synth = load_csv_with_schema(path, header, Arc::clone(&schema))?;
        systems.push(evaluate(&name, &real_train, &real_test, &synth, &eval_cfg)?);
    }
    let report = build_report(systems)?;

    ensure_dir(out)?;
    write_text(&out.join("report.json"), &report.to_json()?)?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    if plot_data {
        let mut overlay = String::from("system,column,level,real_prob,synth_prob\n");
        for path in synths {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let synth = load_csv_with_schema(path, header, Arc::clone(&schema))?;
            overlay.push_str(&marginal_pmf_table(&name, &real_train, &synth)?);
        }
        write_text(&out.join("pmf_overlay.csv"), &overlay)?;
    }

    print!("{}", report.to_csv());
    Ok(())
}

fn latent_dump(
    data: &Path,
    model_path: &Path,
    schema_path: &Path,
    out: &Path,
    draws: usize,
    header: bool,
    seed: u64,
) -> Result<()> {
    let schema = Arc::new(DatasetSchema::load_json(schema_path)?);
    let (model, _) = persist::load_model(model_path, Arc::clone(&schema))?;
    let ds = load_csv_with_schema(data, header, schema)?;
    let batch = aggregate_posterior_sample(&model, &ds, draws, derive_seed(seed, "latent"))?;
    let pca = Pca::fit(&batch.z)?;
    let proj = pca.project(&batch.z, 2);
    let mut text = String::from("pc1,pc2\n");
    for i in 0..proj.rows() {
        text.push_str(&format!("{},{}\n", proj[(i, 0)], proj[(i, 1)]));
    }
    write_text(out, &text)?;
    println!(
        "wrote {} projected latent samples -> {}",
        proj.rows(),
        out.display()
    );
    Ok(())
}
