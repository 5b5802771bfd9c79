//! Command-line harness: demonstration generation, DMP training, paired
//! closed-loop simulation, and the verification suites.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use cotrans::config::ExperimentConfig;
use cotrans::dmp::{self, DmpError};
use cotrans::sim::{run_episode, write_log_csv, EpisodeError, EpisodeSummary, Mode};
use cotrans::trajio::{self, TrajectoryFile};
use cotrans::verify;

#[derive(Parser)]
#[command(name = "cotrans", version, about = "Collaborative object-transfer simulation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum ModeArg {
    DmpEkf,
    Admittance,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Quat,
    Jacobian,
    Boundedness,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic minimum-jerk demonstration CSV.
    Demo {
        /// Output CSV path.
        #[arg(long, default_value = "demo.csv")]
        out: PathBuf,
        /// Demonstration duration in seconds.
        #[arg(long, default_value_t = 4.7)]
        duration: f64,
        /// Sample period in seconds.
        #[arg(long, default_value_t = 0.002)]
        dt: f64,
    },
    /// Train position and orientation DMPs from a demonstration CSV.
    Train {
        /// Demonstration trajectory (t,px,py,pz,qw,qx,qy,qz[,twist]).
        #[arg(long)]
        demo: PathBuf,
        /// Directory receiving position.json and orientation.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Number of Gaussian kernels.
        #[arg(long, default_value_t = 30)]
        kernels: usize,
        #[arg(long, default_value_t = 40.0)]
        alpha_z: f64,
        #[arg(long, default_value_t = 10.0)]
        beta_z: f64,
    },
    /// Write a default experiment config with randomized scenarios.
    Config {
        #[arg(long, default_value = "experiment.toml")]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the configured scenarios and write logs plus the aggregate report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the config's scenario seed (regenerates the scenario list).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the control period in seconds.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run the self-check suites and exit non-zero on any failure.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Demo { out, duration, dt } => {
            let demo = trajio::synthetic_demo(
                Vector3::new(0.0, -0.3, 0.15),
                Vector3::new(0.4, 0.25, 0.6),
                Vector3::new(0.1, 0.2, std::f64::consts::FRAC_PI_3),
                duration,
                dt,
            );
            let mut w = BufWriter::new(fs::File::create(&out)?);
            demo.write(&mut w)?;
            w.flush()?;
            println!("wrote {} samples to {}", demo.rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { demo, out_dir, kernels, alpha_z, beta_z } => {
            cmd_train(&demo, &out_dir, kernels, alpha_z, beta_z)
        }
        Command::Config { out, scenarios, seed } => {
            let cfg = ExperimentConfig::with_random_scenarios(seed, scenarios);
            fs::write(&out, cfg.to_toml())?;
            println!("wrote {} scenarios to {}", scenarios, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, mode, out, seed, dt } => {
            cmd_simulate(&config, mode, &out, seed, dt)
        }
        Command::Verify { suite, seed } => cmd_verify(suite, seed),
    }
}

fn cmd_train(
    demo_path: &Path,
    out_dir: &Path,
    kernels: usize,
    alpha_z: f64,
    beta_z: f64,
) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let file = match fs::File::open(demo_path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot open {}: {e}", demo_path.display());
            return Ok(ExitCode::from(2));
        }
    };
    let traj = match TrajectoryFile::read(BufReader::new(file)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    let demo = traj.to_demonstration();
    let models = match dmp::train_lwr(&demo, kernels, alpha_z, beta_z) {
        Ok(m) => m,
        Err(e @ DmpError::DegenerateDemo { .. }) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(3));
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
    };

    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("position.json"), models.position.to_json())?;
    fs::write(out_dir.join("orientation.json"), models.orientation.to_json())?;

    // reproduction check: roll the trained models out over the demo task
    let q0 = demo.orientations[0];
    let qg = demo.orientations[demo.orientations.len() - 1];
    let tau = demo.duration();
    let dt = demo.t[1] - demo.t[0];
    let traj_out = dmp::rollout(
        &models.position,
        &models.orientation,
        demo.positions[0],
        q0,
        demo.positions[demo.positions.len() - 1],
        qg,
        tau,
        tau,
        dt,
        tau,
    )?;
    let mut sq_pos = Vector3::zeros();
    let mut sq_ori = 0.0;
    let n = demo.t.len().min(traj_out.len());
    for (pt, (p_demo, q_demo)) in
        traj_out.iter().zip(demo.positions.iter().zip(&demo.orientations)).take(n)
    {
        let dp = pt.p - p_demo;
        sq_pos += dp.component_mul(&dp);
        sq_ori += pt.q.angle_to(q_demo).powi(2);
    }
    let rmse_pos = (sq_pos / n as f64).map(f64::sqrt);
    let rmse_ori = (sq_ori / n as f64).sqrt();
    println!(
        "trained {kernels} kernels (alpha_z = {alpha_z}, beta_z = {beta_z}) from {} samples",
        demo.t.len()
    );
    println!(
        "reproduction RMSE: position ({:.2e}, {:.2e}, {:.2e}) m, orientation {:.2e} rad",
        rmse_pos.x, rmse_pos.y, rmse_pos.z, rmse_ori
    );
    println!("wrote {}/position.json and orientation.json", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(
    config_path: &Path,
    mode: ModeArg,
    out_dir: &Path,
    seed: Option<u64>,
    dt: Option<f64>,
) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(config_path)?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
        cfg.scenarios = cotrans::sim::random_scenarios(seed, cfg.scenarios.len().max(1));
    }
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let models = cfg.load_models(base)?;
    let setup = cfg.episode_setup(models)?;

    fs::create_dir_all(out_dir)?;
    // echo the effective configuration next to the results
    fs::write(out_dir.join("effective_config.toml"), cfg.to_toml())?;

    let modes: &[Mode] = match mode {
        ModeArg::DmpEkf => &[Mode::DmpEkf],
        ModeArg::Admittance => &[Mode::Admittance],
        ModeArg::Both => &[Mode::DmpEkf, Mode::Admittance],
    };

    let mut summaries: Vec<EpisodeSummary> = Vec::new();
    let mut timed_out = false;
    for sc in &cfg.scenarios {
        for &m in modes {
            let result = match run_episode(&setup, m, sc) {
                Ok(r) => r,
                Err(EpisodeError::Timeout(partial)) => {
                    eprintln!("warning: {} [{m}] timed out before settling", sc.id);
                    timed_out = true;
                    *partial
                }
                Err(e) => return Err(e.into()),
            };
            let mut w = BufWriter::new(fs::File::create(
                out_dir.join(format!("{}_{m}.csv", sc.id)),
            )?);
            write_log_csv(&result, &mut w)?;
            w.flush()?;
            summaries.push(EpisodeSummary::from(&result));
        }
    }
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&summaries)?)?;

    if mode == ModeArg::Both {
        println!(
            "{:<14} {:>10} {:>10} {:>12} {:>12} {:>8}",
            "scenario", "work[J]", "force[N]", "torque[N·m]", "est err[m]", "ratio"
        );
        for pair in summaries.chunks(2) {
            if let [e, a] = pair {
                println!(
                    "{:<14} {:>10.3} {:>10.2} {:>12.3} {:>12.4} {:>8.3}",
                    e.scenario_id,
                    e.work_j,
                    e.mean_force_n,
                    e.mean_torque_nm,
                    e.est_err_pos_m.unwrap_or(f64::NAN),
                    e.work_j / a.work_j
                );
                println!(
                    "{:<14} {:>10.3} {:>10.2} {:>12.3} {:>12} {:>8}",
                    "  (admittance)", a.work_j, a.mean_force_n, a.mean_torque_nm, "-", "-"
                );
            }
        }
    }
    println!("wrote {} episode logs and report.json to {}", summaries.len(), out_dir.display());
    Ok(if timed_out { ExitCode::from(4) } else { ExitCode::SUCCESS })
}

fn cmd_verify(suite: Suite, seed: u64) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let mut all = true;
    if matches!(suite, Suite::Quat | Suite::All) {
        println!("== quaternion suite ==");
        all &= verify::print_checks(&verify::quat_suite(seed));
    }
    if matches!(suite, Suite::Jacobian | Suite::All) {
        println!("== observer Jacobian suite ==");
        let models = verify::standard_models();
        all &= verify::print_checks(&verify::jacobian_suite(&models, seed));
    }
    if matches!(suite, Suite::Boundedness | Suite::All) {
        println!("== boundedness suite ==");
        let models = verify::standard_models();
        all &= verify::print_checks(&verify::boundedness_checks(&models, seed));
    }
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
