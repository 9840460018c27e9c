mod data;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use camforge::cnn::{accuracy, export_capture, generate_shapes, load_params, save_params, train, TrainConfig};
use camforge::pgm::Pgm;
use camforge::seg::{
    accumulate_confusion, compute_miou, compute_prf, delta_sweep, evaluate, parse_delta_range, segment_image,
    ConfusionMatrix, SweepResult,
};
use camforge::{compute_saliency, CaptureFile, Method, Result, SaliencyRequest};
use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};

/// Class activation maps, layer fusion and gradient truncation on a micro CNN.
#[derive(Parser, Debug)]
#[command(name = "camforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled shapes dataset as PGM images and masks.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train the micro CNN on a shapes dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        lr: f32,
        #[arg(long, default_value_t = TrainConfig::default().batch_size)]
        batch: usize,
        #[arg(long, default_value_t = TrainConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        classes: usize,
    },
    /// Export one capture per image for its labelled class, plus its mask.
    Capture {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a saliency map from one capture as a PGM heatmap.
    Cam {
        #[arg(long)]
        capture: PathBuf,
        #[command(flatten)]
        saliency: SaliencyArgs,
        #[arg(long, default_value_t = 0.0, value_parser = parse_delta)]
        delta: f64,
        /// Output size as HxW; defaults to the capture's input size.
        #[arg(long, value_parser = parse_size)]
        size: Option<(usize, usize)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predicted masks for every image in a capture directory.
    Segment {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        saliency: SaliencyArgs,
        #[arg(long, default_value_t = 0.0, value_parser = parse_delta)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted masks against ground truth, or a whole capture directory.
    Eval(EvalArgs),
    /// Evaluate a capture directory over a list of deltas.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        saliency: SaliencyArgs,
        /// `start:stop:step` with stop included, or a comma-separated list.
        #[arg(long, value_parser = parse_deltas)]
        deltas: DeltaList,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SaliencyArgs {
    /// grad_cam, layer_cam, fullgrad, or the lt_ variant of any of them.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Comma-separated layer names.
    #[arg(long, value_delimiter = ',', required = true)]
    layers: Vec<String>,
}

#[derive(Clone, Debug)]
struct DeltaList(Vec<f64>);

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).args(["dataset", "pred"])))]
struct EvalArgs {
    /// Capture directory to segment and score in one go.
    #[arg(long, requires_all = ["method", "layers"])]
    dataset: Option<PathBuf>,
    /// Directory of predicted `<id>_mask.pgm` files.
    #[arg(long, requires = "gt", conflicts_with = "dataset")]
    pred: Option<PathBuf>,
    /// Directory of ground-truth `<id>_mask.pgm` files.
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, value_delimiter = ',')]
    layers: Vec<String>,
    #[arg(long, default_value_t = 0.0, value_parser = parse_delta)]
    delta: f64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_delta(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(d) if (0.0..=100.0).contains(&d) => Ok(d),
        _ => Err(format!("delta must be a number in [0, 100], got {s:?}")),
    }
}

fn parse_deltas(s: &str) -> std::result::Result<DeltaList, String> {
    let deltas = parse_delta_range(s).map_err(|e| e.to_string())?;
    if deltas.iter().any(|d| !(0.0..100.0).contains(d)) {
        return Err("sweep deltas must lie in [0, 100)".into());
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err("sweep deltas must be strictly increasing".into());
    }
    Ok(DeltaList(deltas))
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let bad = || format!("size must look like 32x32, got {s:?}");
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    match (h.parse(), w.parse()) {
        (Ok(h), Ok(w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(bad()),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn synth(out: &Path, n: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut labels = Vec::with_capacity(n);
    for (i, s) in generate_shapes(n, seed).into_iter().enumerate() {
        let id = format!("shape{i:05}");
        Pgm::from_unit_map(&s.image.channel_map(0)).save(out.join(format!("{id}.pgm")))?;
        Pgm::from_mask(&s.gt_mask).save(data::mask_path(out, &id))?;
        labels.push((id, s.label));
    }
    data::write_labels(out, &labels)?;
    eprintln!("wrote {n} images to {}", out.display());
    Ok(())
}

fn train_cmd(data_dir: &Path, out: &Path, cfg: &TrainConfig) -> Result<()> {
    let samples: Vec<_> = data::load_samples(data_dir)?.into_iter().map(|(_, s)| s).collect();
    let report = train(&samples, cfg)?;
    create_parent(out)?;
    save_params(&report.params, out)?;
    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    eprintln!("final loss {last:.4}, train accuracy {:.3}", report.train_accuracy);
    Ok(())
}

fn capture_cmd(model: &Path, data_dir: &Path, out: &Path) -> Result<()> {
    let params = load_params(model)?;
    let samples = data::load_samples(data_dir)?;
    fs::create_dir_all(out)?;
    for (id, s) in &samples {
        let cf = export_capture(&params, &s.image, s.label, id)?;
        cf.save(out.join(format!("{id}_c{}.camcap", s.label)))?;
        Pgm::from_mask(&s.gt_mask).save(data::mask_path(out, id))?;
    }
    let plain: Vec<_> = samples.into_iter().map(|(_, s)| s).collect();
    eprintln!("wrote {} captures; model accuracy on these images {:.3}", plain.len(), accuracy(&params, &plain)?);
    Ok(())
}

fn cam_cmd(path: &Path, args: &SaliencyArgs, delta: f64, size: Option<(usize, usize)>, out: &Path) -> Result<()> {
    let cf = CaptureFile::load(path)?;
    let output_size = size.unwrap_or((cf.input.height(), cf.input.width()));
    let req = SaliencyRequest { method: args.method, layer_names: args.layers.clone(), delta, output_size };
    let map = compute_saliency(&cf, &req)?;
    create_parent(out)?;
    Pgm::from_unit_map(&map).save(out)?;
    Ok(())
}

fn segment_cmd(dataset: &Path, args: &SaliencyArgs, delta: f64, out: &Path) -> Result<()> {
    let images = data::load_eval_set(dataset)?;
    fs::create_dir_all(out)?;
    for img in &images {
        let (mask, _) = segment_image(img, args.method, &args.layers, delta)?;
        Pgm::from_mask(&mask).save(data::mask_path(out, &img.image_id))?;
    }
    eprintln!("wrote {} masks to {}", images.len(), out.display());
    Ok(())
}

fn write_csv(out: &Path, text: &str) -> Result<()> {
    create_parent(out)?;
    fs::write(out, text)?;
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    if let Some(dataset) = &args.dataset {
        let method = args.method.expect("clap enforces --method with --dataset");
        let images = data::load_eval_set(dataset)?;
        let row = evaluate(&images, method, &args.layers, args.delta, args.classes)?;
        let result = SweepResult { method, layers: args.layers.clone(), rows: vec![row] };
        return write_csv(&args.out, &result.to_csv());
    }
    let (Some(pred_dir), Some(gt_dir)) = (args.pred.as_deref(), args.gt.as_deref()) else {
        unreachable!("clap requires --dataset or both --pred and --gt");
    };
    let names = data::mask_files(gt_dir)?;
    if names.is_empty() {
        return Err(camforge::Error::Format(format!("no mask files in {}", gt_dir.display())));
    }
    let mut cm = ConfusionMatrix::new(args.classes);
    for name in &names {
        let gt = data::load_mask(&gt_dir.join(name))?;
        let pred = data::load_mask(&pred_dir.join(name))?;
        cm += &accumulate_confusion(&pred, &gt, args.classes)?;
    }
    let prf = compute_prf(&cm)?;
    let text = format!(
        "images,miou,precision,recall,micro_f1\n{},{:.6},{:.6},{:.6},{:.6}\n",
        names.len(),
        compute_miou(&cm)?,
        prf.precision,
        prf.recall,
        prf.micro_f1
    );
    write_csv(&args.out, &text)
}

fn sweep_cmd(dataset: &Path, args: &SaliencyArgs, deltas: &[f64], classes: usize, out: &Path) -> Result<()> {
    let images = data::load_eval_set(dataset)?;
    let result = delta_sweep(&images, args.method, &args.layers, deltas, classes)?;
    write_csv(out, &result.to_csv())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, n, seed } => synth(&out, n, seed),
        Command::Train { data, out, epochs, lr, batch, seed, classes } => {
            let cfg = TrainConfig { epochs, learning_rate: lr, batch_size: batch, seed, classes };
            train_cmd(&data, &out, &cfg)
        }
        Command::Capture { model, data, out } => capture_cmd(&model, &data, &out),
        Command::Cam { capture, saliency, delta, size, out } => cam_cmd(&capture, &saliency, delta, size, &out),
        Command::Segment { dataset, saliency, delta, out } => segment_cmd(&dataset, &saliency, delta, &out),
        Command::Eval(args) => eval_cmd(&args),
        Command::Sweep { dataset, saliency, deltas, classes, out } => {
            sweep_cmd(&dataset, &saliency, &deltas.0, classes, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
