//! `capm` command line: region queries, single plans, and the Monte Carlo
//! experiment with its CSV outputs.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use capm_core::planner::FeasibilityMap;
use capm_core::reach::classify_problem_type;
use capm_core::sim::{self, ExperimentConfig};
use capm_core::{Annulus, BodyPose, Mpoi, Plan, PlannerKind, TrialScene, Troi};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use nalgebra::Point2;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Config(m) | Self::Runtime(m) => m,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "capm",
    version,
    about = "Coupled perception and manipulation planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print R_o of a TROI and R_m of its center as `name,x,y,r_inner,r_outer`.
    Regions {
        #[arg(long)]
        config: Option<PathBuf>,
        /// TROI as `x,y,r`.
        #[arg(long, allow_hyphen_values = true)]
        troi: String,
    },
    /// Print the problem type of a TROI and an MPOI.
    Classify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// TROI as `x,y,r`.
        #[arg(long, allow_hyphen_values = true)]
        troi: String,
        /// MPOI as `x,y`.
        #[arg(long, allow_hyphen_values = true)]
        mpoi: String,
    },
    /// Plan one scene and print its key states as `k, kind, x, y, yaw[, ee_x, ee_y, ee_z]`.
    Plan {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = ["a", "b", "c"])]
        planner: String,
        /// `start_x,start_y,end_x,end_y,troi_x,troi_y,r_w`.
        #[arg(long, allow_hyphen_values = true)]
        scene: String,
        /// Hidden MPOI `x,y`; when given, the plan is executed against it.
        #[arg(long, allow_hyphen_values = true)]
        mpoi: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the experiment and write trials.csv and metrics.csv into DIR.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the summary table stored in DIR/metrics.csv.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T, O, E>(argv: I, out: &mut O, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    O: Write,
    E: Write,
{
    let cmd = Cli::command().after_help(config::key_help());
    let cli = match cmd
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "capm: {}", e.message());
            e.code()
        }
    }
}

fn dispatch<O: Write>(cmd: Command, out: &mut O) -> Result<(), CliError> {
    match cmd {
        Command::Regions { config, troi } => {
            let cfg = load_config(config.as_deref())?;
            let troi = parse_troi(&troi)?;
            let planner = cfg.planner().map_err(|e| CliError::Config(e.to_string()))?;
            let regions = planner.regions(&troi).map_err(runtime)?;
            write_annulus(out, "ro", &regions.ro.annulus())?;
            write_annulus(out, "rm", &regions.rm.annulus())?;
        }
        Command::Classify { config, troi, mpoi } => {
            let cfg = load_config(config.as_deref())?;
            let troi = parse_troi(&troi)?;
            let [mx, my] = parse_floats::<2>(&mpoi, "--mpoi x,y")?;
            let mpoi = Point2::new(mx, my);
            let planner = cfg.planner().map_err(|e| CliError::Config(e.to_string()))?;
            let regions = planner.regions(&troi).map_err(runtime)?;
            let rm = planner.rm_at(mpoi).annulus();
            let ty = classify_problem_type(&regions.ro.annulus(), &rm, troi.contains(&mpoi))
                .map_err(runtime)?;
            writeln!(out, "{ty}").map_err(runtime)?;
        }
        Command::Plan {
            config,
            planner: letter,
            scene,
            mpoi,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let kind = PlannerKind::from_letter(&letter)
                .ok_or_else(|| CliError::Usage(format!("unknown planner `{letter}`")))?;
            let [sx, sy, ex, ey, tx, ty, r] =
                parse_floats::<7>(&scene, "--scene sx,sy,ex,ey,tx,ty,r")?;
            let troi =
                Troi::new(Point2::new(tx, ty), r).map_err(|e| CliError::Usage(e.to_string()))?;
            let mpoi = match mpoi {
                Some(m) => {
                    let [mx, my] = parse_floats::<2>(&m, "--mpoi x,y")?;
                    Some(Mpoi::new(Point2::new(mx, my)))
                }
                None => None,
            };
            let h = cfg.robot.body_height;
            let start = BodyPose::new(Point2::new(sx, sy), 0.0, h);
            let end = BodyPose::new(Point2::new(ex, ey), 0.0, h);
            let plan = plan_one(&cfg, kind, &start, &end, &troi, mpoi)?;
            write_plan(out, &plan)?;
        }
        Command::Simulate {
            config,
            out: dir,
            seed,
            threads,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let result = sim::run_experiment(&cfg).map_err(runtime)?;
            fs::create_dir_all(&dir).map_err(runtime)?;
            let trials = fs::File::create(dir.join(output::TRIALS_FILE)).map_err(runtime)?;
            output::write_trials(std::io::BufWriter::new(trials), &result.records)
                .map_err(runtime)?;
            let metrics = fs::File::create(dir.join(output::METRICS_FILE)).map_err(runtime)?;
            output::write_metrics(metrics, &result.metrics).map_err(runtime)?;
            let table = output::report_of(&result.metrics);
            write!(out, "{}", output::format_report(&table)).map_err(runtime)?;
            let failed = result.failures().count();
            if failed > 0 {
                return Err(CliError::Runtime(format!(
                    "{failed} planner runs failed; see the empty cost fields in trials.csv"
                )));
            }
        }
        Command::Report { input } => {
            let f = fs::File::open(input.join(output::METRICS_FILE)).map_err(runtime)?;
            let table = output::read_report(f).map_err(runtime)?;
            write!(out, "{}", output::format_report(&table)).map_err(runtime)?;
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let text = match path {
        Some(p) => {
            fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => String::new(),
    };
    config::parse_config(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn parse_floats<const N: usize>(s: &str, shape: &str) -> Result<[f64; N], CliError> {
    let bad = || CliError::Usage(format!("expected {shape}, got `{s}`"));
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(bad)?;
    v.try_into().map_err(|_| bad())
}

fn parse_troi(s: &str) -> Result<Troi, CliError> {
    let [x, y, r] = parse_floats::<3>(s, "--troi x,y,r")?;
    Troi::new(Point2::new(x, y), r).map_err(|e| CliError::Usage(e.to_string()))
}

fn plan_one(
    cfg: &ExperimentConfig,
    kind: PlannerKind,
    start: &BodyPose,
    end: &BodyPose,
    troi: &Troi,
    mpoi: Option<Mpoi>,
) -> Result<Plan, CliError> {
    let planner = cfg.planner().map_err(|e| CliError::Config(e.to_string()))?;
    let regions = planner.regions(troi).map_err(runtime)?;
    let plan = match kind {
        PlannerKind::Deterministic => planner.plan_deterministic(start, end, troi),
        PlannerKind::Decoupled => planner.plan_decoupled(start, end, &regions),
        PlannerKind::Capm => {
            let samples = cfg.draw_samples(0, troi).map_err(runtime)?;
            let feas = FeasibilityMap::new(&planner, &regions, samples);
            planner.plan_capm(start, end, &regions, &feas)
        }
    }
    .map_err(runtime)?;
    match mpoi {
        None => Ok(plan),
        Some(mpoi) => {
            let scene = TrialScene {
                start: *start,
                end: *end,
                troi: *troi,
                mpoi,
            };
            planner.execute(&plan, &scene, &regions).map_err(runtime)
        }
    }
}

fn write_annulus<O: Write>(out: &mut O, name: &str, a: &Annulus) -> Result<(), CliError> {
    if a.empty {
        writeln!(
            out,
            "{name},{},{},,",
            output::fmt6(a.center.x),
            output::fmt6(a.center.y)
        )
    } else {
        writeln!(
            out,
            "{name},{},{},{},{}",
            output::fmt6(a.center.x),
            output::fmt6(a.center.y),
            output::fmt6(a.r_inner),
            output::fmt6(a.r_outer)
        )
    }
    .map_err(runtime)
}

fn kind_name(k: capm_core::planner::KeyStateKind) -> &'static str {
    use capm_core::planner::KeyStateKind::*;
    match k {
        BodyMove => "body_move",
        ArmPerceive => "arm_perceive",
        ArmManipulate => "arm_manipulate",
        ArmHold => "arm_hold",
    }
}

fn write_plan<O: Write>(out: &mut O, plan: &Plan) -> Result<(), CliError> {
    let f = output::fmt6;
    let mut head = format!(
        "# planner={} branch={} expected_cost={}",
        plan.planner.letter(),
        plan.branch.name(),
        f(plan.expected_cost)
    );
    if let Some(p) = plan.p_upper {
        head.push_str(&format!(" p_upper={}", f(p)));
    }
    if let (Some(c), Some(s)) = (plan.realized_cost, plan.success) {
        head.push_str(&format!(" realized_cost={} success={}", f(c), u8::from(s)));
    }
    writeln!(out, "{head}").map_err(runtime)?;
    for s in &plan.states {
        let mut line = format!(
            "{}, {}, {}, {}, {}",
            s.time_index,
            kind_name(s.kind),
            f(s.body.position.x),
            f(s.body.position.y),
            f(s.body.yaw)
        );
        if let Some(ee) = s.ee {
            line.push_str(&format!(
                ", {}, {}, {}",
                f(ee.position.x),
                f(ee.position.y),
                f(ee.position.z)
            ));
        }
        writeln!(out, "{line}").map_err(runtime)?;
    }
    Ok(())
}
