//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde_json::{json, Value};
use stereokit::io::{self, scalar_map_to_pfm, write_pfm};
use stereokit::metrics::{self, LossPyramid, PYRAMID_LEVELS};
use stereokit::stats::{self, Mergeable};
use stereokit::synth::{self, RandomPlanes};
use stereokit::{
    d2n_transform, export_ply, reconstruct, render_stereo, D2NConfig, DepthMap, DisparityMap,
    PlyFormat, SceneSpec, StereoRig,
};

use crate::dataset::{list_samples, pair_samples};
use crate::{
    Cli, Command, D2nArgs, EvalArgs, EvalCommand, LossArgs, PcdArgs, PlyEncoding, StatsCommand,
    SynthArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Data(String),
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const DATA: u8 = 4;

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => Self::USAGE,
            CliError::Io(_) => Self::IO,
            CliError::Data(_) => Self::DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<stereokit::Error> for CliError {
    fn from(e: stereokit::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be >= 1".into())),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::D2n(args) => cmd_d2n(args),
        Command::Stats(cmd) => cmd_stats(cmd),
        Command::Eval(cmd) => cmd_eval(cmd),
        Command::Pcd(args) => cmd_pcd(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Loss(args) => cmd_loss(args),
    })
}

fn load_rig(path: &Path) -> CliResult<StereoRig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("rig {}: {e}", path.display())))?;
    StereoRig::from_json(&text).map_err(|e| CliError::Data(format!("rig {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    io::write_file(path, bytes).map_err(CliError::from)
}

fn mkdir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Rounds to 9 significant digits so metric output is stable text.
fn sig9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn emit_json(value: &Value, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    match out {
        Some(p) => write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn is_dir(path: &Path) -> CliResult<bool> {
    fs::metadata(path)
        .map(|m| m.is_dir())
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_d2n(args: D2nArgs) -> CliResult<()> {
    let rig = load_rig(&args.rig)?;
    let cfg = D2NConfig::default();
    let ext = if args.png16 { "png" } else { "pfm" };
    let jobs: Vec<(PathBuf, PathBuf)> = if is_dir(&args.disp)? {
        mkdir(&args.out)?;
        list_samples(&args.disp, &["pfm"])?
            .into_iter()
            .map(|(stem, p)| (p, args.out.join(format!("{stem}.{ext}"))))
            .collect()
    } else {
        vec![(args.disp.clone(), args.out.clone())]
    };
    let valid: Vec<usize> = jobs
        .par_iter()
        .map(|(input, output)| -> CliResult<usize> {
            let dm: DisparityMap = io::load_scalar_map(input)?;
            let nm = d2n_transform(&dm, &rig, &cfg)?;
            let bytes = if args.png16 {
                io::write_normal_png16(&nm)?
            } else {
                write_pfm(&io::normal_map_to_pfm(&nm))
            };
            write(output, &bytes)?;
            Ok(nm.valid_count())
        })
        .collect::<CliResult<_>>()?;
    eprintln!(
        "d2n: {} map(s), {} valid normals",
        jobs.len(),
        valid.iter().sum::<usize>()
    );
    Ok(())
}

fn write_hist_outputs(
    json_text: String,
    csv_text: Option<String>,
    out: &crate::HistOut,
) -> CliResult<()> {
    write(&out.out, (json_text + "\n").as_bytes())?;
    if let (Some(path), Some(csv)) = (&out.csv, csv_text) {
        write(path, csv.as_bytes())?;
    }
    Ok(())
}

fn cmd_stats(cmd: StatsCommand) -> CliResult<()> {
    match cmd {
        StatsCommand::Disparity { disp, bins, out } => {
            let samples = list_samples(&disp, &["pfm"])?;
            let per_sample = samples
                .par_iter()
                .map(|(_, p)| -> CliResult<stats::Histogram1D> {
                    let dm: DisparityMap = io::load_scalar_map(p)?;
                    Ok(stats::disparity_histogram(&dm, bins)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let mut acc = stats::empty_disparity_histogram(bins)?;
            for h in &per_sample {
                acc = acc.merge(h)?;
            }
            if acc.total() == 0 {
                return Err(stereokit::Error::EmptyHistogram.into());
            }
            eprintln!(
                "stats disparity: {} sample(s), {} pixels, {} above range",
                acc.sample_count,
                acc.total(),
                acc.overflow
            );
            let csv = out.csv.as_ref().map(|_| acc.to_csv());
            write_hist_outputs(acc.to_json(), csv, &out)
        }
        StatsCommand::Normal {
            normal,
            bin_deg,
            out,
        } => {
            let samples = list_samples(&normal, &["pfm", "png"])?;
            let per_sample = samples
                .par_iter()
                .map(|(_, p)| -> CliResult<Option<stats::Histogram2D>> {
                    let nm = io::load_normal_map(p)?;
                    Ok(stats::normal_histogram(&nm, bin_deg)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let mut acc = stats::empty_normal_histogram(bin_deg)?;
            for h in per_sample.iter().flatten() {
                acc = acc.merge(h)?;
            }
            if acc.sample_count == 0 {
                return Err(stereokit::Error::EmptyHistogram.into());
            }
            eprintln!(
                "stats normal: {} of {} sample(s) contributed",
                acc.sample_count,
                samples.len()
            );
            let csv = out.csv.as_ref().map(|_| acc.to_csv());
            write_hist_outputs(acc.to_json(), csv, &out)
        }
        StatsCommand::Brightness {
            left,
            right,
            disp,
            overexposure,
            out,
        } => {
            let pairs = pair_samples(&[
                ("left", list_samples(&left, &["png"])?),
                ("right", list_samples(&right, &["png"])?),
                ("disp", list_samples(&disp, &["pfm"])?),
            ])?;
            let per_sample = pairs
                .par_iter()
                .map(|(_, paths)| -> CliResult<stats::Histogram2D> {
                    let l = io::load_rgb(&paths[0])?;
                    let r = io::load_rgb(&paths[1])?;
                    let d: DisparityMap = io::load_scalar_map(&paths[2])?;
                    Ok(stats::brightness_joint_histogram(&l, &r, &d)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let mut acc = stats::empty_brightness_histogram();
            for h in &per_sample {
                acc = acc.merge(h)?;
            }
            eprintln!(
                "stats brightness: {} pair(s), {} matched pixels",
                acc.sample_count,
                acc.total()
            );
            if let Some(path) = overexposure {
                let s = stats::overexposure_stats(&acc)?;
                let doc = json!({
                    "fraction_both_255": sig9(s.fraction_both_255),
                    "fraction_either_255": sig9(s.fraction_either_255),
                });
                emit_json(&doc, Some(&path))?;
            }
            let csv = out.csv.as_ref().map(|_| acc.to_csv());
            write_hist_outputs(acc.to_json(), csv, &out)
        }
    }
}

/// Two files are compared directly; directories are paired by stem.
fn eval_pairs(args: &EvalArgs, exts: &[&str]) -> CliResult<Vec<(String, Vec<PathBuf>)>> {
    if !is_dir(&args.pred)? && !is_dir(&args.gt)? {
        return Ok(vec![(
            String::new(),
            vec![args.pred.clone(), args.gt.clone()],
        )]);
    }
    pair_samples(&[
        ("pred", list_samples(&args.pred, exts)?),
        ("gt", list_samples(&args.gt, exts)?),
    ])
}

fn cmd_eval(cmd: EvalCommand) -> CliResult<()> {
    match cmd {
        EvalCommand::Disparity(args) => {
            let pairs = eval_pairs(&args, &["pfm"])?;
            if args.error_map.is_some() && pairs.len() != 1 {
                return Err(CliError::Usage(
                    "--error-map needs a single prediction file".into(),
                ));
            }
            let parts = pairs
                .par_iter()
                .map(|(_, p)| -> CliResult<_> {
                    let pred: DisparityMap = io::load_scalar_map(&p[0])?;
                    let gt: DisparityMap = io::load_scalar_map(&p[1])?;
                    if let Some(path) = &args.error_map {
                        let map = metrics::epe_map(&pred, &gt)?;
                        write(path, &write_pfm(&scalar_map_to_pfm(&map)))?;
                    }
                    Ok(metrics::epe_parts(&pred, &gt)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let mut sum = stereokit::numeric::CompensatedSum::new();
            let mut n = 0usize;
            for (s, k) in &parts {
                sum.merge(s);
                n += k;
            }
            if n == 0 {
                return Err(stereokit::Error::NoValidPixels.into());
            }
            let epe = sum.value() / n as f64;
            eprintln!(
                "eval disparity: {} sample(s), {n} pixels, EPE {epe:.4} px",
                pairs.len()
            );
            emit_json(&json!({ "epe": sig9(epe) }), args.out.as_deref())
        }
        EvalCommand::Normal(args) => {
            let pairs = eval_pairs(&args, &["pfm", "png"])?;
            if args.error_map.is_some() && pairs.len() != 1 {
                return Err(CliError::Usage(
                    "--error-map needs a single prediction file".into(),
                ));
            }
            let lists = pairs
                .par_iter()
                .map(|(_, p)| -> CliResult<Vec<f64>> {
                    let pred = io::load_normal_map(&p[0])?;
                    let gt = io::load_normal_map(&p[1])?;
                    if let Some(path) = &args.error_map {
                        let map = metrics::normal_angle_map(&pred, &gt)?;
                        write(path, &write_pfm(&scalar_map_to_pfm(&map)))?;
                    }
                    Ok(metrics::normal_angle_list(&pred, &gt)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let s = metrics::normal_error_stats(lists.concat())?;
            eprintln!(
                "eval normal: mean {:.3} deg, median {:.3} deg, <11.25: {:.1}%",
                s.mean_deg,
                s.median_deg,
                100.0 * s.frac_11_25
            );
            let doc = json!({
                "mean_deg": sig9(s.mean_deg),
                "median_deg": sig9(s.median_deg),
                "frac_11_25": sig9(s.frac_11_25),
                "frac_22_5": sig9(s.frac_22_5),
                "frac_30": sig9(s.frac_30),
            });
            emit_json(&doc, args.out.as_deref())
        }
    }
}

fn cmd_pcd(args: PcdArgs) -> CliResult<()> {
    let rig = load_rig(&args.rig)?;
    let dm: DisparityMap = io::load_scalar_map(&args.disp)?;
    let rgb = args.left.as_deref().map(io::load_rgb).transpose()?;
    let nm = args
        .normal
        .as_deref()
        .map(io::load_normal_map)
        .transpose()?;
    let cloud = reconstruct(&dm, rgb.as_ref(), nm.as_ref(), &rig)?;
    let format = match args.format {
        PlyEncoding::Ascii => PlyFormat::Ascii,
        PlyEncoding::Binary => PlyFormat::BinaryLittleEndian,
    };
    write(&args.out, &export_ply(&cloud, format)?)?;
    eprintln!("pcd: {} points", cloud.len());
    Ok(())
}

fn write_sample(out: &synth::RenderOutput, paths: [PathBuf; 5]) -> CliResult<()> {
    let [left, right, disp, normal, depth] = paths;
    write(&left, &io::write_png_rgb8(&out.left_rgb)?)?;
    write(&right, &io::write_png_rgb8(&out.right_rgb)?)?;
    write(&disp, &write_pfm(&scalar_map_to_pfm(&out.gt_disparity)))?;
    write(&normal, &write_pfm(&io::normal_map_to_pfm(&out.gt_normal)))?;
    let depth_map: &DepthMap = &out.gt_depth;
    write(&depth, &write_pfm(&scalar_map_to_pfm(depth_map)))
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let rig = load_rig(&args.rig)?;
    if args.width == 0 || args.height == 0 {
        return Err(CliError::Usage("--width and --height must be >= 1".into()));
    }
    mkdir(&args.out)?;
    if let Some(scene_path) = &args.scene {
        let text = fs::read_to_string(scene_path)
            .map_err(|e| CliError::Io(format!("scene {}: {e}", scene_path.display())))?;
        let scene = SceneSpec::from_json(&text)?;
        let out = render_stereo(&scene, &rig, args.width, args.height)?;
        let o = &args.out;
        write_sample(
            &out,
            [
                "left.png",
                "right.png",
                "disp.pfm",
                "normal.pfm",
                "depth.pfm",
            ]
            .map(|f| o.join(f)),
        )?;
        eprintln!("synth: {} valid pixels", out.gt_disparity.valid_count());
        return Ok(());
    }

    let count = args.random.unwrap_or(0);
    let mut rng = StdRng::seed_from_u64(args.seed);
    let scenes: Vec<SceneSpec> = (0..count)
        .map(|_| synth::random_plane_scene(&mut rng, &RandomPlanes::default()))
        .collect();
    scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| -> CliResult<()> {
            let stem = format!("{i:05}");
            let out = render_stereo(scene, &rig, args.width, args.height)?;
            let o = &args.out;
            write_sample(
                &out,
                [
                    o.join("left").join(format!("{stem}.png")),
                    o.join("right").join(format!("{stem}.png")),
                    o.join("disp").join(format!("{stem}.pfm")),
                    o.join("normal").join(format!("{stem}.pfm")),
                    o.join("depth").join(format!("{stem}.pfm")),
                ],
            )?;
            write(
                &o.join("scene").join(format!("{stem}.json")),
                (scene.to_json() + "\n").as_bytes(),
            )
        })
        .collect::<CliResult<Vec<()>>>()?;
    eprintln!("synth: {count} random sample(s) in {}", args.out.display());
    Ok(())
}

fn cmd_loss(args: LossArgs) -> CliResult<()> {
    let weights: [f64; PYRAMID_LEVELS] = match &args.weights {
        None => metrics::DEFAULT_SCALE_WEIGHTS,
        Some(w) => w.as_slice().try_into().map_err(|_| {
            CliError::Usage(format!(
                "--weights needs {PYRAMID_LEVELS} values, got {}",
                w.len()
            ))
        })?,
    };
    let gt: DisparityMap = io::load_scalar_map(&args.gt)?;
    let levels: Vec<DisparityMap> = match args.pred.len() {
        1 => metrics::build_gt_pyramid(&io::load_scalar_map(&args.pred[0])?),
        PYRAMID_LEVELS => args
            .pred
            .par_iter()
            .map(|p| io::load_scalar_map(p).map_err(CliError::from))
            .collect::<CliResult<_>>()?,
        n => {
            return Err(CliError::Usage(format!(
                "--pred takes 1 or {PYRAMID_LEVELS} files, got {n}"
            )))
        }
    };
    let pyramid = LossPyramid::new(levels, weights)?;
    let loss = metrics::multiscale_disparity_loss(&pyramid, &gt)?;
    eprintln!("loss: {:.6}", loss.total);
    let per_scale: Vec<Value> = loss
        .per_scale
        .iter()
        .map(|l| l.map_or(Value::Null, |v| json!(sig9(v))))
        .collect();
    let doc = json!({
        "loss": sig9(loss.total),
        "weights": weights,
        "per_scale": per_scale,
    });
    emit_json(&doc, args.out.as_deref())
}
