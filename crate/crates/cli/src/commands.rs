use crate::config::{apply_overrides, read_json, set_dotted, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{class_report, read_table, summary_report, Table};
use crate::{Analysis, AnalyzeArgs, EvalArgs, ModelSource, ReportArgs, TrainArgs};
use serde::Serialize;
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use trixlab::epsilon::parse_sweep;
use trixlab::metrics::{classwise_coverage, feature_space_coverage, ovo_ova_min_weights, pca_project, uniform_spacing};
use trixlab::rng::{self, tag};
use trixlab::training::{AttackSpec, EVAL_STEP_DIVISOR};
use trixlab::{evaluate, pgd_attack, train_with, AttackConfig, AttackMode, Dataset64, Epsilon, Mlp64};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub artifacts: Vec<String>,
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// `class,clean_acc,robust_acc` rows; absent classes leave both cells empty.
pub fn class_table_csv(clean: &[Option<f64>], robust: &[Option<f64>]) -> String {
    let mut out = String::from("class,clean_acc,robust_acc\n");
    for (c, (a, r)) in clean.iter().zip(robust).enumerate() {
        out.push_str(&format!("{c},{},{}\n", fmt_cell(*a), fmt_cell(*r)));
    }
    out
}

/// Seed of the evaluation attack for a run seeded with `train_seed`.
pub fn eval_seed(train_seed: u64) -> u64 {
    rng::mix(&[train_seed, tag::EVAL])
}

fn eval_attack(attack: &AttackSpec, seed: u64) -> Option<AttackConfig<f64>> {
    (!attack.epsilon.is_zero()).then(|| attack.build(AttackMode::UntargetedCe, EVAL_STEP_DIVISOR, seed))
}

fn load_run_config(args: &TrainArgs) -> CliResult<RunConfig> {
    let mut value = read_json(&args.config)?;
    apply_overrides(&mut value, &args.overrides)?;
    if let Some(seed) = args.seed {
        set_dotted(&mut value, "train.seed", &seed.to_string())?;
    }
    if let Some(method) = &args.method {
        let m: trixlab::Method = method.parse()?;
        set_dotted(&mut value, "train.method", &serde_json::to_string(&m)?)?;
    }
    if let Some(beta) = args.beta {
        set_dotted(&mut value, "train.beta", &serde_json::to_string(&beta)?)?;
    }
    let mut cfg = RunConfig::from_value(value)?;
    cfg.resolve_paths(&parent_dir(&args.config));
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<PathBuf> {
    let cfg = load_run_config(args)?;
    let base = parent_dir(&args.config);
    let train_set = cfg.train_set(&base)?;
    let test_set = cfg.test_set(&base)?;

    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let run_id = format!("{stamp}-seed{}", cfg.train.seed);
    let dir = args.out.clone().unwrap_or_else(|| Path::new("runs").join(&run_id));
    std::fs::create_dir_all(&dir)?;

    write_text(&dir.join("config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
    let mut log = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
    let outcome = train_with(&train_set, &cfg.train, |rec| {
        let line = serde_json::to_string(rec).map_err(trixlab::Error::from)?;
        writeln!(log, "{line}").and_then(|_| log.flush()).map_err(trixlab::Error::from)
    })?;
    drop(log);
    outcome.model.save_json(dir.join("model.json"))?;

    let attack = eval_attack(&cfg.train.eval_attack, eval_seed(cfg.train.seed));
    let ev = evaluate(&outcome.model, &test_set, attack.as_ref())?;
    write_text(&dir.join("report.csv"), &class_table_csv(&ev.clean_acc, &ev.robust_acc))?;

    let manifest = RunManifest {
        run_id,
        config_hash: cfg.content_hash(),
        config: cfg,
        artifacts: ["config.json", "metrics.jsonl", "model.json", "report.csv"].map(String::from).to_vec(),
    };
    write_text(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(dir)
}

struct Loaded {
    model: Mlp64,
    data: Dataset64,
    config: RunConfig,
}

fn load_source(src: &ModelSource) -> CliResult<Loaded> {
    let (model_path, config_path) = match (&src.run, &src.model, &src.config) {
        (Some(run), model, config) => (
            model.clone().unwrap_or_else(|| run.join("model.json")),
            config.clone().unwrap_or_else(|| run.join("config.json")),
        ),
        (None, Some(model), Some(config)) => (model.clone(), config.clone()),
        _ => return Err(CliError::Input("pass --run DIR, or both --model and --config".into())),
    };
    let model = Mlp64::load_json(&model_path)
        .map_err(|e| CliError::Input(format!("cannot load checkpoint {}: {e}", model_path.display())))?;
    let config = RunConfig::from_value(read_json(&config_path)?)?;
    let mut data = config.test_set(&parent_dir(&config_path))?;
    if let Some(n) = src.limit {
        data = data.head(n)?;
    }
    if model.input_dim() != data.input_dim() || model.num_classes() < data.num_classes() {
        return Err(CliError::Input(format!(
            "checkpoint expects {} inputs and {} classes; dataset has {} inputs and {} classes",
            model.input_dim(),
            model.num_classes(),
            data.input_dim(),
            data.num_classes()
        )));
    }
    Ok(Loaded { model, data, config })
}

fn parse_eps(raw: &str) -> CliResult<Epsilon> {
    raw.parse().map_err(|e: trixlab::Error| CliError::Input(format!("bad radius {raw:?}: {e}")))
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let Loaded { model, data, config } = load_source(&args.source)?;
    let defaults = config.train.eval_attack.clone();
    let radii = match (&args.eps, &args.eps_sweep) {
        (Some(e), _) => vec![parse_eps(e)?],
        (None, Some(s)) => parse_sweep(s)?,
        (None, None) => vec![defaults.epsilon],
    };
    let step_size = args.step_size.as_deref().map(parse_eps).transpose()?;
    let seed = args.seed.unwrap_or_else(|| eval_seed(config.train.seed));

    let mut out = String::from("class,eps,clean_acc,robust_acc\n");
    for eps in radii {
        let attack = AttackSpec {
            epsilon: eps,
            step_size: step_size.or(defaults.step_size.filter(|_| args.eps.is_none() && args.eps_sweep.is_none())),
            num_steps: args.steps.unwrap_or(defaults.num_steps),
            random_start: defaults.random_start,
        };
        let ev = evaluate(&model, &data, eval_attack(&attack, seed).as_ref())?;
        for (c, (a, r)) in ev.clean_acc.iter().zip(&ev.robust_acc).enumerate() {
            out.push_str(&format!("{c},{eps},{},{}\n", fmt_cell(*a), fmt_cell(*r)));
        }
    }
    write_or_print(args.out.as_deref(), &out)
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let report = match read_table(&args.input)? {
        Table::PerClass(table) => {
            let baseline = match &args.baseline {
                Some(b) => match read_table(Path::new(b))? {
                    Table::PerClass(t) => Some(t),
                    Table::Summary(_) => {
                        return Err(CliError::Input("a per-class input needs a per-class baseline".into()))
                    }
                },
                None => None,
            };
            serde_json::to_value(class_report(&table, baseline.as_ref())?)?
        }
        Table::Summary(rows) => {
            let name = args
                .baseline
                .as_deref()
                .ok_or_else(|| CliError::Input("summary input needs --baseline NAME".into()))?;
            serde_json::to_value(summary_report(&rows, name)?)?
        }
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    let out = match &args.out {
        Some(p) if p.is_dir() => Some(p.join("metrics.json")),
        Some(p) => Some(p.clone()),
        None if args.input.is_dir() => Some(args.input.join("metrics.json")),
        None => None,
    };
    write_or_print(out.as_deref(), &text)
}

fn default_out(args: &AnalyzeArgs, file: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| args.source.run.as_deref().unwrap_or(Path::new(".")).join(file))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    if args.which == Analysis::OvoOva {
        let k = args.k.unwrap_or(2);
        let analysis = ovo_ova_min_weights(&uniform_spacing(k, args.spacing), args.r)?;
        let text = serde_json::to_string_pretty(&analysis)? + "\n";
        return write_or_print(args.out.as_deref(), &text);
    }

    let Loaded { model, data, config } = load_source(&args.source)?;
    let inputs = if args.attack {
        match eval_attack(&config.train.eval_attack, eval_seed(config.train.seed)) {
            Some(cfg) => pgd_attack(&model, data.inputs(), data.labels(), &cfg, None, None)?,
            None => data.inputs().clone(),
        }
    } else {
        data.inputs().clone()
    };
    let features = model.forward(&inputs)?.features;

    match args.which {
        Analysis::Pca => {
            let pca = pca_project(&features, args.k.unwrap_or(3))?;
            let k = pca.eigenvalues.len();
            let mut csv = String::from("class");
            (1..=k).for_each(|i| csv.push_str(&format!(",pc{i}")));
            csv.push('\n');
            for (i, &y) in data.labels().iter().enumerate() {
                csv.push_str(&y.to_string());
                pca.coords.row(i).iter().for_each(|v| csv.push_str(&format!(",{v}")));
                csv.push('\n');
            }
            let path = default_out(args, "pca.csv");
            write_text(&path, &csv)?;
            let warning = pca.rank_warning();
            if let Some(w) = &warning {
                eprintln!("warning: {w}");
            }
            let summary = json!({
                "output": path,
                "eigenvalues": pca.eigenvalues,
                "rank": pca.rank,
                "warning": warning,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Analysis::Coverage => {
            let all = feature_space_coverage(&features, args.bins, args.seed)?;
            let per_class = classwise_coverage(&features, data.labels(), model.num_classes(), args.bins, args.seed)?;
            let mut csv = String::from("class,coverage,occupied,bins,samples\n");
            let row = |name: String, c: &trixlab::metrics::Coverage| {
                format!("{name},{},{},{},{}\n", c.fraction, c.occupied, c.num_bins, c.used)
            };
            csv.push_str(&row("all".into(), &all));
            for (c, cov) in per_class.iter().enumerate() {
                match cov {
                    Some(cov) => csv.push_str(&row(c.to_string(), cov)),
                    None => csv.push_str(&format!("{c},,0,{},0\n", args.bins)),
                }
            }
            let path = default_out(args, "coverage.csv");
            write_text(&path, &csv)?;
            println!("{}", serde_json::to_string_pretty(&json!({"output": path, "coverage": all}))?);
        }
        Analysis::OvoOva => unreachable!("handled above"),
    }
    Ok(())
}
