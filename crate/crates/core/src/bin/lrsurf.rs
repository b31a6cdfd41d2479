use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use lrsurf::analysis::{
    clip_to_mask, contour, extremal_points, level_range, slope_raster, write_extrema_csv, ContourOptions,
};
use lrsurf::fitting::{
    adaptive_fit, compute_accuracy, limit_surfaces, weighted_mid_surface, AccuracyReport, FitConfig,
    IterationRecord, Threshold, BANDS,
};
use lrsurf::io::{
    raster_bilinear_eval, raster_from_surface, read_asc, read_lrsurf, read_xyz, split_to_tp, write_asc,
    write_lrsurf,
};
use lrsurf::{Error, LRSurface, OccupancyMask, PointCloud};

const EXIT_IO: u8 = 2;
const EXIT_COMPUTE: u8 = 3;

#[derive(Parser)]
#[command(name = "lrsurf", version, about = "Fit, analyse and export LR B-spline surfaces")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LRSURF_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a surface to a point cloud.
    Fit(FitArgs),
    /// Write a surface in another form.
    #[command(subcommand)]
    Export(ExportCommand),
    /// Derive contours, extremal points, slope or limit surfaces.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Compare a surface or raster with a point cloud.
    Accuracy(AccuracyArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Points that must be met more closely than the rest.
    #[arg(long)]
    significant: Option<PathBuf>,
    /// Tolerance for significant points.
    #[arg(long)]
    tol_sig: Option<f64>,
}

#[derive(Subcommand)]
enum ExportCommand {
    /// ESRI ASCII grid sampled at cell centres.
    Raster {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        cellsize: f64,
        /// Leave cells in elements without points of this cloud empty.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tensor-product patches, one file each, plus `adjacency.txt`.
    SplitTp {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_segmented: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct LevelArgs {
    /// `a:b:step` or a comma separated list.
    #[arg(long, allow_hyphen_values = true)]
    levels: String,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    Contour {
        #[arg(long)]
        surface: PathBuf,
        #[command(flatten)]
        levels: LevelArgs,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Extrema {
        #[arg(long)]
        surface: PathBuf,
        #[command(flatten)]
        levels: LevelArgs,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Drop extrema closer than this to their trigger level.
        #[arg(long, default_value_t = 0.0)]
        prominence: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slope in degrees.
    Slope {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        cellsize: f64,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// `lower.lrsurf` and `upper.lrsurf` enclosing the cloud.
    Limits {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        passes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blend towards the upper limit surface in shallow water.
    Mid {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
        d1: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        d2: f64,
        #[arg(long, default_value_t = 5)]
        passes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AccuracyArgs {
    /// `.lrsurf` or `.asc` file.
    #[arg(long)]
    surface: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tol: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

/// Input, parse and argument errors exit with 2, numerical failures with 3.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidInput(_) => EXIT_IO,
            _ => EXIT_COMPUTE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn compute(e: Error) -> Failure {
    Failure {
        code: EXIT_COMPUTE,
        message: e.to_string(),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Export(cmd) => cmd_export(cmd),
        Command::Analyze(cmd) => cmd_analyze(cmd),
        Command::Accuracy(args) => cmd_accuracy(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_mask(surf: &LRSurface, path: Option<&PathBuf>) -> Result<Option<OccupancyMask>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let cloud = read_xyz(path)?;
    Ok(Some(OccupancyMask::from_points(surf, cloud.points.iter().map(|p| (p.x, p.y)))))
}

fn check_cellsize(cellsize: f64) -> CmdResult {
    if cellsize.is_finite() && cellsize > 0.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("cellsize must be positive, got {cellsize}")))
    }
}

fn parse_levels(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |s: &str| Failure::usage(format!("bad level '{s}' in '{spec}'"));
    let levels = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Failure::usage(format!("expected a:b:step, got '{spec}'")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.trim().parse().map_err(|_| bad(p))?;
        }
        level_range(v[0], v[1], v[2])?
    } else {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| bad(s)))
            .collect::<Result<Vec<_>, _>>()?
    };
    if levels.is_empty() {
        return Err(Failure::usage(format!("no levels in '{spec}'")));
    }
    Ok(levels)
}

struct Manifest {
    text: String,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Manifest {
            text: format!("command = {command}\n"),
            outputs: Vec::new(),
        }
    }

    fn entry(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    fn output(&mut self, path: &Path) {
        self.entry("output", path.display());
        self.outputs.push(path.to_path_buf());
    }

    fn timing(&mut self, stage: &str, t: Instant) {
        self.entry(&format!("seconds.{stage}"), format!("{:.3}", t.elapsed().as_secs_f64()));
    }

    fn write(&self, dir: &Path) -> CmdResult {
        debug_assert!(self.outputs.iter().all(|p| p.exists()));
        write_text(&dir.join("manifest.txt"), &self.text)
    }
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let t_total = Instant::now();
    let mut manifest = Manifest::new("fit");
    manifest.entry("input", args.input.display());

    let t = Instant::now();
    let mut config = match (&args.preset, &args.config) {
        (Some(name), _) => {
            manifest.entry("preset", name);
            FitConfig::preset(name)?
        }
        (None, Some(path)) => {
            manifest.entry("config", path.display());
            FitConfig::from_file(path)?
        }
        (None, None) => return Err(Failure::usage("either --preset or --config is required")),
    };
    if let Some(tol) = args.tol_sig {
        config.significant_tol = Some(tol);
    }
    config.validate()?;
    let mut cloud = read_xyz(&args.input)?;
    if let Some(path) = &args.significant {
        manifest.entry("significant", path.display());
        let sig = read_xyz(path)?;
        cloud.merge_significant(&sig, config.significant_tol);
    }
    manifest.timing("read", t);

    let t = Instant::now();
    let fit = adaptive_fit(&cloud, &config).map_err(compute)?;
    manifest.timing("fit", t);

    create_dir(&args.out)?;
    let surface_path = args.out.join("surface.lrsurf");
    write_lrsurf(&fit.surface, &surface_path)?;
    manifest.output(&surface_path);

    let report_path = args.out.join("report.txt");
    let report = format!(
        "{}\n{}\n\n{}",
        AccuracyReport::table_header(),
        fit.report.table_row(),
        fit.report
    );
    write_text(&report_path, &report)?;
    manifest.output(&report_path);

    let history_path = args.out.join("history.csv");
    let mut history = String::from(IterationRecord::CSV_HEADER);
    history.push('\n');
    for rec in &fit.history {
        history.push_str(&rec.csv_row());
        history.push('\n');
    }
    write_text(&history_path, &history)?;
    manifest.output(&history_path);
    for rec in &fit.history {
        manifest.entry(&format!("seconds.iteration{}", rec.iteration), format!("{:.3}", rec.seconds));
    }

    if config.weighted_mid {
        let t = Instant::now();
        let limits = limit_surfaces(&fit.surface, &cloud, config.limit_passes);
        let mid = weighted_mid_surface(&fit.surface, &limits.upper, config.mid_d1, config.mid_d2)
            .map_err(compute)?;
        for (name, s) in [("lower", &limits.lower), ("upper", &limits.upper), ("mid", &mid)] {
            let path = args.out.join(format!("{name}.lrsurf"));
            write_lrsurf(s, &path)?;
            manifest.output(&path);
        }
        manifest.timing("limits", t);
    }
    manifest.timing("total", t_total);
    manifest.write(&args.out)?;
    println!("{}", AccuracyReport::table_header());
    println!("{}", fit.report.table_row());
    Ok(())
}

fn cmd_export(cmd: ExportCommand) -> CmdResult {
    match cmd {
        ExportCommand::Raster {
            surface,
            cellsize,
            mask,
            out,
        } => {
            check_cellsize(cellsize)?;
            let surf = read_lrsurf(&surface)?;
            let mask = load_mask(&surf, mask.as_ref())?;
            let raster = raster_from_surface(&surf, cellsize, mask.as_ref())?;
            write_asc(&raster, &out)?;
            log::info!("{} x {} raster written to {}", raster.ncols, raster.nrows, out.display());
        }
        ExportCommand::SplitTp {
            surface,
            max_segmented,
            out,
        } => {
            let surf = read_lrsurf(&surface)?;
            let set = split_to_tp(&surf, max_segmented).map_err(compute)?;
            create_dir(&out)?;
            for (i, patch) in set.patches.iter().enumerate() {
                let lr = LRSurface::from_tensor_product(&patch.surface);
                write_lrsurf(&lr, &out.join(format!("patch_{i:04}.lrsurf")))?;
            }
            let mut adj = String::from("# patch neighbour\n");
            for &(i, j) in &set.adjacency {
                let _ = writeln!(adj, "{i} {j}");
            }
            write_text(&out.join("adjacency.txt"), &adj)?;
            println!("{} patches", set.len());
        }
    }
    Ok(())
}

fn cmd_analyze(cmd: AnalyzeCommand) -> CmdResult {
    match cmd {
        AnalyzeCommand::Contour {
            surface,
            levels,
            mask,
            out,
        } => {
            let levels = parse_levels(&levels.levels)?;
            let surf = read_lrsurf(&surface)?;
            let mask = load_mask(&surf, mask.as_ref())?;
            let mut set = contour(&surf, &levels, &ContourOptions::default()).map_err(compute)?;
            if let Some(m) = &mask {
                set = clip_to_mask(&set, &surf, m);
            }
            set.write_csv(&out)?;
            println!("{} branches", set.branches.len());
        }
        AnalyzeCommand::Extrema {
            surface,
            levels,
            mask,
            prominence,
            out,
        } => {
            let levels = parse_levels(&levels.levels)?;
            let surf = read_lrsurf(&surface)?;
            let mask = load_mask(&surf, mask.as_ref())?;
            let set = contour(&surf, &levels, &ContourOptions::default()).map_err(compute)?;
            let points = extremal_points(&surf, &set, mask.as_ref(), prominence).map_err(compute)?;
            write_extrema_csv(&points, &out)?;
            println!("{} extremal points", points.len());
        }
        AnalyzeCommand::Slope {
            surface,
            cellsize,
            mask,
            out,
        } => {
            check_cellsize(cellsize)?;
            let surf = read_lrsurf(&surface)?;
            let mask = load_mask(&surf, mask.as_ref())?;
            write_asc(&slope_raster(&surf, cellsize, mask.as_ref())?, &out)?;
        }
        AnalyzeCommand::Limits {
            surface,
            input,
            passes,
            out,
        } => {
            let surf = read_lrsurf(&surface)?;
            let cloud = read_xyz(&input)?;
            let limits = limit_surfaces(&surf, &cloud, passes);
            create_dir(&out)?;
            write_lrsurf(&limits.lower, &out.join("lower.lrsurf"))?;
            write_lrsurf(&limits.upper, &out.join("upper.lrsurf"))?;
        }
        AnalyzeCommand::Mid {
            surface,
            input,
            d1,
            d2,
            passes,
            out,
        } => {
            if !(d1 < d2) {
                return Err(Failure::usage(format!("need d1 < d2, got {d1} and {d2}")));
            }
            let surf = read_lrsurf(&surface)?;
            let cloud = read_xyz(&input)?;
            let limits = limit_surfaces(&surf, &cloud, passes);
            let mid = weighted_mid_surface(&surf, &limits.upper, d1, d2).map_err(compute)?;
            write_lrsurf(&mid, &out)?;
        }
    }
    Ok(())
}

fn cmd_accuracy(args: AccuracyArgs) -> CmdResult {
    let cloud = read_xyz(&args.input)?;
    let is_asc = args
        .surface
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("asc"));
    if is_asc {
        let raster = read_asc(&args.surface)?;
        print!("{}", raster_accuracy(&cloud, |x, y| raster_bilinear_eval(&raster, x, y)));
    } else {
        let surf = read_lrsurf(&args.surface)?;
        let (report, _) = compute_accuracy(&surf, &cloud, &Threshold::Fixed(args.tol));
        print!("{report}");
    }
    Ok(())
}

/// Distance statistics for a surface that may be undefined at some points.
fn raster_accuracy(cloud: &PointCloud, eval: impl Fn(f64, f64) -> Option<f64>) -> String {
    let mut bands = [0usize; 3];
    let (mut n, mut outside) = (0usize, 0usize);
    let (mut max, mut sum, mut sum2) = (0.0f64, 0.0, 0.0);
    for p in &cloud.points {
        let Some(z) = eval(p.x, p.y) else {
            outside += 1;
            continue;
        };
        let d = (p.z - z).abs();
        n += 1;
        max = max.max(d);
        sum += d;
        sum2 += d * d;
        bands[BANDS.iter().position(|&b| d < b).unwrap_or(2)] += 1;
    }
    if outside > 0 {
        log::warn!("{outside} points lie outside the raster or on empty cells");
    }
    let mean = |s: f64| if n > 0 { s / n as f64 } else { 0.0 };
    let mut s = String::new();
    let _ = writeln!(s, "points:          {n}");
    let _ = writeln!(s, "max distance:    {max:.6}");
    let _ = writeln!(s, "avg distance:    {:.6}", mean(sum));
    let _ = writeln!(s, "rmse:            {:.6}", mean(sum2).sqrt());
    let _ = writeln!(s, "< 0.2:           {}", bands[0]);
    let _ = writeln!(s, "0.2 - 0.5:       {}", bands[1]);
    let _ = writeln!(s, ">= 0.5:          {}", bands[2]);
    if outside > 0 {
        let _ = writeln!(s, "outside:         {outside}");
    }
    s
}
