use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use photoguard_core::classifier::remote::serve as serve_remote;
use photoguard_core::classifier::{
    accuracy, confusion_matrix, per_class_accuracy, private_to_public_leak_rate, save_model, train,
    Dataset, FeatureConfig, PhotoClassifier, Split, TrainConfig,
};
use photoguard_core::manifest::analyze_corpus;
use photoguard_core::sim::{parse_scenario, run_scenario};
use photoguard_core::synthetic::{self, SyntheticParams};
use photoguard_core::{ContentStore, PhotoLibrary};
use photoguard_daemon::bench::bench;
use photoguard_daemon::config::DaemonConfig;
use photoguard_daemon::{ClassifierChoice, Daemon};

#[derive(Parser)]
#[command(name = "photoguard", version, about = "Content-aware access control for a photo library")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
#[group(required = false, multiple = false)]
struct ClassifierArgs {
    /// Trained model (JSON) for the built-in classifier.
    #[arg(long)]
    model: Option<PathBuf>,
    /// `<label> <path>` table, for fixtures.
    #[arg(long)]
    stub: Option<PathBuf>,
    /// Address of an out-of-process classifier.
    #[arg(long)]
    remote: Option<String>,
}

impl ClassifierArgs {
    fn choice(&self) -> Option<ClassifierChoice> {
        let abs = |p: &PathBuf| std::path::absolute(p).unwrap_or_else(|_| p.clone());
        if let Some(m) = &self.model {
            Some(ClassifierChoice::Builtin { model: abs(m) })
        } else if let Some(t) = &self.stub {
            Some(ClassifierChoice::Stub { table: abs(t) })
        } else {
            self.remote.as_ref().map(|a| ClassifierChoice::Remote { address: a.clone(), timeout_secs: None })
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Classify a photo directory, write the store and a config file.
    Init {
        dir: PathBuf,
        #[command(flatten)]
        classifier: ClassifierArgs,
        /// Where the store and config go; defaults to <dir>/.photoguard.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Run the daemon: watch the library and serve the API.
    Watch {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classify one file.
    Classify {
        file: PathBuf,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay a scenario script and print the trace.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        classifier: ClassifierArgs,
        /// Directory relative photo paths are resolved against; defaults to the script's directory.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Time cached lookups against synchronous classification.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        photos: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Count apps whose manifests request both storage read and internet.
    AnalyzeManifests {
        dir: PathBuf,
        /// Write per-app JSON lines here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the built-in classifier.
    Train {
        /// Directory with one subdirectory per category label.
        #[arg(long, conflicts_with = "synthetic")]
        fixtures: Option<PathBuf>,
        /// Generate this many synthetic images per category instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve a classifier over the line protocol.
    ServeClassifier {
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long, default_value = "127.0.0.1:7879")]
        listen: SocketAddr,
    },
}

fn build_classifier(args: &ClassifierArgs, config: Option<&Path>) -> Result<Arc<dyn PhotoClassifier>> {
    let choice = match (args.choice(), config) {
        (Some(c), _) => c,
        (None, Some(path)) => DaemonConfig::load(path)?.classifier,
        (None, None) => bail!("pick a classifier with --model, --stub or --remote"),
    };
    Ok(choice.build()?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Init { dir, classifier, state } => {
            let Some(choice) = classifier.choice() else { bail!("pick a classifier with --model, --stub or --remote") };
            let dir = std::path::absolute(&dir)?;
            let state = state.map(std::path::absolute).transpose()?.unwrap_or_else(|| dir.join(".photoguard"));
            std::fs::create_dir_all(&state).with_context(|| format!("creating {}", state.display()))?;
            let config = DaemonConfig::new(&dir, state.join("store"), choice);
            let clf = config.classifier.build()?;
            let store = ContentStore::new(config.extensions.clone());
            let report = store.initialize_scan(&PhotoLibrary::scan(&dir, &config.extensions)?, clf.as_ref());
            store.persist(&config.store_path)?;
            for (path, why) in &report.skipped {
                eprintln!("skipped {}: {why}", path.display());
            }
            let config_path = state.join("photoguard.toml");
            std::fs::write(&config_path, render_config(&config)).with_context(|| format!("writing {}", config_path.display()))?;
            println!("classified {} photos into {}", store.len(), config.store_path.display());
            println!("config written to {}", config_path.display());
        }
        Command::Watch { config } => {
            let config = DaemonConfig::load(&config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let daemon = Daemon::start(config)?;
                let listener = tokio::net::TcpListener::bind(daemon.config.listen).await?;
                log::info!("listening on {}", listener.local_addr()?);
                daemon
                    .serve(listener, async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        Command::Classify { file, classifier, config } => {
            let clf = build_classifier(&classifier, config.as_deref())?;
            let bytes = std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let c = clf.classify(&file, &bytes)?;
            println!("{}", c.category.label());
            for (cat, p) in photoguard_core::ContentCategory::ALL.iter().zip(c.probabilities) {
                println!("  {:<15} {p:.4}", cat.label());
            }
        }
        Command::Simulate { scenario, classifier, base } => {
            let clf: Arc<dyn PhotoClassifier> = match classifier.choice() {
                Some(c) => c.build()?,
                None => Arc::new(photoguard_core::classifier::StubClassifier::new()),
            };
            let text = std::fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let script = parse_scenario(&text)?;
            let base = base.unwrap_or_else(|| scenario.parent().map(Path::to_path_buf).unwrap_or_default());
            let trace = run_scenario(&script, &ContentStore::default(), clf.as_ref(), &base)?;
            print!("{}", trace.render());
            if let Some(line) = trace.failed_at() {
                eprintln!("expectation failed at line {line}");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench { config, photos, trials, seed } => {
            let config = DaemonConfig::load(&config)?;
            let clf = config.classifier.build()?;
            let store = ContentStore::load(&config.store_path, config.extensions.clone())
                .with_context(|| format!("run init first; cannot load {}", config.store_path.display()))?;
            let report = bench(&store, clf.as_ref(), photos, trials, seed)?;
            print!("{}", report.render());
        }
        Command::AnalyzeManifests { dir, report } => {
            let r = analyze_corpus(&dir)?;
            print!("{}", r.render_table());
            for (path, why) in &r.failures {
                eprintln!("unparsable {}: {why}", path.display());
            }
            if let Some(out) = report {
                std::fs::write(&out, r.render_records()).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::Train { fixtures, synthetic: per_class, out, learning_rate, epochs, tolerance, train_fraction, seed } => {
            let features = FeatureConfig::default();
            let data: Dataset<f64> = match (fixtures, per_class) {
                (Some(dir), _) => Dataset::from_fixture_dir(&dir, &features, Split::Train)?,
                (None, Some(n)) => synthetic::dataset(n, &SyntheticParams::default(), &features, seed)?,
                (None, None) => bail!("pass --fixtures <dir> or --synthetic <per-class>"),
            };
            let (train_set, test_set) = data.stratified_split(train_fraction, seed);
            let cfg = TrainConfig { learning_rate, max_epochs: epochs, tolerance, seed };
            let outcome = train(&train_set, features, &cfg)?;
            println!("epochs {}  final loss {:.6}", outcome.epochs_run(), outcome.final_loss());
            if !test_set.is_empty() {
                let cm = confusion_matrix(&outcome.model, &test_set)?;
                println!("held-out accuracy {:.4} on {} samples", accuracy(&outcome.model, &test_set)?, test_set.len());
                for (cat, acc) in per_class_accuracy(&cm).iter() {
                    if let Some(a) = acc {
                        println!("  {:<15} {:.4}", cat.label(), photoguard_core::classifier::ratio_to_f64(a));
                    }
                }
                if let Ok(leak) = private_to_public_leak_rate(&cm) {
                    println!("private predicted public: {}/{}", leak.numer(), leak.denom());
                }
            }
            save_model(&outcome.model, &out)?;
            println!("model written to {}", out.display());
        }
        Command::ServeClassifier { classifier, listen } => {
            let clf = build_classifier(&classifier, None)?;
            let listener = std::net::TcpListener::bind(listen)?;
            log::info!("serving {} on {}", clf.name(), listener.local_addr()?);
            serve_remote(listener, clf)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn render_config(config: &DaemonConfig) -> String {
    let q = |p: &Path| toml_string(&p.to_string_lossy());
    let classifier = match &config.classifier {
        ClassifierChoice::Builtin { model } => format!("kind = \"builtin\"\nmodel = {}\n", q(model)),
        ClassifierChoice::Stub { table } => format!("kind = \"stub\"\ntable = {}\n", q(table)),
        ClassifierChoice::Remote { address, .. } => format!("kind = \"remote\"\naddress = {}\n", toml_string(address)),
    };
    format!(
        "library_root = {}\nstore_path = {}\nprompt_timeout_secs = {}\nwhitelist = []\nlisten = \"{}\"\naudit_log = {}\n\n[classifier]\n{classifier}",
        q(&config.library_root),
        q(&config.store_path),
        config.prompt_timeout_secs,
        config.listen,
        q(&config.store_path.with_file_name("audit.jsonl")),
    )
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendered_config_parses_back() {
        let cfg = DaemonConfig::new("/lib/with \"quotes\"", "/state/store", ClassifierChoice::Builtin { model: "/m.json".into() });
        let parsed = DaemonConfig::parse(&render_config(&cfg), Path::new("/")).unwrap();
        assert_eq!(parsed.library_root, cfg.library_root);
        assert_eq!(parsed.classifier, cfg.classifier);
        assert_eq!(parsed.audit_log, Some(PathBuf::from("/state/audit.jsonl")));
    }
}
