mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use selfadv_core::codec::PersonDescriptor;
use selfadv_core::dataset::{
    default_grid, generate_dataset, load_dataset, load_image, pck_table, schema_for, split_of, write_dataset, Reference, Split,
    ANNOTATION_FILE,
};
use selfadv_core::network::{load_checkpoint, Role};
use selfadv_core::trainer::{evaluate, infer, train_loop, InferSettings, Trainer, LOG_FILE};
use selfadv_core::verify::{all_pass, GradSuite, GradSuiteConfig};
use selfadv_core::{Error, HourglassNet64};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "selfadv", version, about = "Self-adversarial stacked-hourglass pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic stick-figure corpus.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a generator, adversarially unless disabled.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_adversarial: bool,
        #[arg(long)]
        unconditional: bool,
    },
    /// Score a checkpoint on a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Pck)]
        metric: Metric,
        /// Thresholds to report; defaults to 0.02, 0.04, ..., 0.20.
        #[arg(long, value_delimiter = ',')]
        r: Vec<f64>,
        /// Restrict to one split.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
    /// Locate the joints of one person in an image.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Person center as `x,y` in pixels.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        center: Vec<f64>,
        /// Person size in units of 200 pixels.
        #[arg(long)]
        scale: f64,
        #[arg(long)]
        json: bool,
        /// Skip averaging with the mirrored crop.
        #[arg(long)]
        no_flip: bool,
    },
    /// Compare analytic gradients with central finite differences.
    GradCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Pck,
    Pckh,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) => 2,
            Error::TrainingFault { .. } | Error::ControllerFault { .. } => 3,
            _ => 1,
        };
        Failure { code, error }
    }
}

fn config_failure(error: Error) -> Failure {
    match error {
        Error::Contract(m) => Failure { code: 2, error: Error::Config(m) },
        other => Failure { code: 2, error: other },
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out, n, seed } => gen_data(config.as_deref(), out, n, seed),
        Command::Train { config, data, out, no_adversarial, unconditional } => {
            train(config.as_deref(), data, out, no_adversarial, unconditional)
        }
        Command::Eval { checkpoint, data, metric, r, split } => eval(&checkpoint, &data, metric, r, split),
        Command::Infer { checkpoint, image, center, scale, json, no_flip } => {
            infer_cmd(&checkpoint, &image, &center, scale, json, no_flip)
        }
        Command::GradCheck { config, tol } => grad_check(config.as_deref(), tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn gen_data(config: Option<&Path>, out: Option<PathBuf>, n: usize, seed: Option<u64>) -> CmdResult {
    let mut cfg = RunConfig::load_or_default(config).map_err(config_failure)?;
    if let Some(o) = out {
        cfg.out_dir = Some(o);
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.validate(&[]).map_err(config_failure)?;
    let out = cfg.out_dir.clone().ok_or_else(|| config_failure(Error::Config("--out is required".into())))?;
    if n == 0 || cfg.scene.held_out > n {
        return Err(config_failure(Error::Config(format!("cannot hold out {} of {n} scenes", cfg.scene.held_out))));
    }
    let scenes = generate_dataset(&cfg.scene, n, cfg.train.seed)?;
    write_dataset(&out, &scenes)?;
    let hidden: usize = scenes.iter().map(|s| s.record.joints.iter().filter(|j| !j.visible).count()).sum();
    let joints = scenes.len() * cfg.scene.schema.num_joints();
    let test = scenes.iter().filter(|s| s.record.split == Split::Test).count();
    println!("wrote {} images to {}", scenes.len(), out.display());
    println!("annotations: {}", out.join(ANNOTATION_FILE).display());
    println!("split: {} train, {test} test", scenes.len() - test);
    println!("hidden joints: {hidden} of {joints} ({:.1}%)", 100.0 * hidden as f64 / joints as f64);
    Ok(())
}

fn train(config: Option<&Path>, data: Option<PathBuf>, out: Option<PathBuf>, no_adversarial: bool, unconditional: bool) -> CmdResult {
    let mut cfg = RunConfig::load_or_default(config).map_err(config_failure)?;
    if data.is_some() {
        cfg.data_dir = data;
    }
    if out.is_some() {
        cfg.out_dir = out;
    }
    if no_adversarial {
        cfg.train.adversarial = false;
    }
    if unconditional {
        cfg.network.conditional = false;
    }
    cfg.validate(&["data_dir"]).map_err(config_failure)?;
    let out = cfg.out_dir.clone().ok_or_else(|| config_failure(Error::Config("--out is required".into())))?;
    let data_dir = cfg.data_dir.clone().expect("validated");

    let samples = load_dataset::<f64>(&data_dir)?;
    if let Some(s) = samples.first() {
        if s.record.joints.len() != cfg.network.num_joints {
            return Err(config_failure(Error::Config(format!(
                "corpus has {} joints per person but num_joints is {}",
                s.record.joints.len(),
                cfg.network.num_joints
            ))));
        }
    }
    let train_set = split_of(&samples, Split::Train);
    let heldout = split_of(&samples, Split::Test);
    if train_set.len() < cfg.train.batch_size {
        return Err(config_failure(Error::Config(format!(
            "{} training images do not fill a batch of {}",
            train_set.len(),
            cfg.train.batch_size
        ))));
    }
    let pairs = schema_for(cfg.network.num_joints)?.flip_pairs();
    let mut trainer = Trainer::<f64>::new(&cfg.network, &cfg.train).map_err(config_failure)?;

    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    std::fs::write(out.join("config.json"), cfg.to_json()).map_err(|e| Error::Io { path: out.join("config.json"), source: e })?;
    eprintln!("training on {} images, {} held out", train_set.len(), heldout.len());
    train_loop(&mut trainer, &train_set, &heldout, &pairs, Some(&out), |e| {
        let pck = e.heldout.as_ref().and_then(|p| p.total).map_or("n/a".to_string(), |v| format!("{v:.4}"));
        eprintln!("epoch {:>3}  lr {:.2e}  mean l_mse {:.4}  held-out pck {pck}", e.epoch, e.lr, e.mean_l_mse);
    })?;
    eprintln!("log: {}", out.join(LOG_FILE).display());
    if !heldout.is_empty() {
        let settings = InferSettings::new(cfg.network.input_res, pairs);
        let results = evaluate(&mut trainer.generator, &heldout, &settings, &default_grid(), Reference::Torso)?;
        let table = with_thresholds(&results.iter().map(|r| r.r).collect::<Vec<_>>(), &pck_table(&results));
        std::fs::write(out.join("pck.csv"), &table).map_err(|e| Error::Io { path: out.join("pck.csv"), source: e })?;
        print!("{table}");
    }
    Ok(())
}

/// Prefixes each row of a PCK table with its threshold.
fn with_thresholds(grid: &[f64], table: &str) -> String {
    let mut lines = table.lines();
    let mut s = format!("r,{}\n", lines.next().unwrap_or_default());
    for (r, line) in grid.iter().zip(lines) {
        s.push_str(&format!("{r:.2},{line}\n"));
    }
    s
}

fn load_generator(path: &Path) -> std::result::Result<HourglassNet64, Failure> {
    if !path.exists() {
        return Err(config_failure(Error::Config(format!("checkpoint {} does not exist", path.display()))));
    }
    let net = load_checkpoint::<f64>(path)?;
    if net.role() != Role::Generator {
        return Err(config_failure(Error::Config(format!("{} holds a discriminator", path.display()))));
    }
    Ok(net)
}

fn eval(checkpoint: &Path, data: &Path, metric: Metric, r: Vec<f64>, split: Option<SplitArg>) -> CmdResult {
    let mut net = load_generator(checkpoint)?;
    if !data.exists() {
        return Err(config_failure(Error::Config(format!("data directory {} does not exist", data.display()))));
    }
    let grid = if r.is_empty() { default_grid() } else { r };
    if grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(config_failure(Error::Config("thresholds must lie in (0, 1]".into())));
    }
    let mut samples = load_dataset::<f64>(data)?;
    if let Some(s) = split {
        samples = split_of(&samples, if matches!(s, SplitArg::Train) { Split::Train } else { Split::Test });
    }
    let settings = InferSettings::new(net.config().input_res, schema_for(net.config().num_joints)?.flip_pairs());
    let reference = match metric {
        Metric::Pck => Reference::Torso,
        Metric::Pckh => Reference::Head,
    };
    let results = evaluate(&mut net, &samples, &settings, &grid, reference)?;
    print!("{}", with_thresholds(&grid, &pck_table(&results)));
    Ok(())
}

fn infer_cmd(checkpoint: &Path, image: &Path, center: &[f64], scale: f64, json: bool, no_flip: bool) -> CmdResult {
    if center.len() != 2 {
        return Err(config_failure(Error::Config(format!("--center takes x,y; got {} values", center.len()))));
    }
    let mut net = load_generator(checkpoint)?;
    let person = PersonDescriptor::new([center[0], center[1]], scale).map_err(config_failure)?;
    if !image.exists() {
        return Err(config_failure(Error::Config(format!("image {} does not exist", image.display()))));
    }
    let img = load_image::<f64>(image)?;
    let schema = schema_for(net.config().num_joints)?;
    let mut settings = InferSettings::new(net.config().input_res, schema.flip_pairs());
    settings.flip_average = !no_flip;
    let det = infer(&mut net, &img, &person, &settings)?;
    let rows = schema.names().iter().zip(det.keypoints.joints()).zip(&det.scores);
    if json {
        let joints: Vec<_> = rows
            .map(|((name, k), s)| serde_json::json!({ "joint": name, "x": k.x, "y": k.y, "score": s }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "keypoints": joints })).expect("serializable"));
    } else {
        println!("joint,x,y,score");
        for ((name, k), s) in rows {
            println!("{name},{:.3},{:.3},{s:.6}", k.x, k.y);
        }
    }
    Ok(())
}

fn grad_check(config: Option<&Path>, tol: f64) -> CmdResult {
    let cfg: GradSuiteConfig = match config {
        None => GradSuiteConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_failure(Error::Config(format!("{}: {e}", p.display()))))?;
            serde_json::from_str(&text).map_err(|e| config_failure(Error::Config(e.to_string())))?
        }
    };
    let outcomes = GradSuite::standard(&cfg).map_err(config_failure)?.run()?;
    for o in &outcomes {
        println!("{:<36} {:.3e}  {}", o.name, o.error, if o.passes(tol) { "ok" } else { "FAIL" });
    }
    let worst = outcomes.iter().map(|o| o.error).fold(0.0, f64::max);
    println!("max relative error {worst:.3e} (tolerance {tol:.1e})");
    if all_pass(&outcomes, tol) {
        Ok(())
    } else {
        Err(Failure { code: 1, error: Error::Contract("gradient check exceeded tolerance".into()) })
    }
}
