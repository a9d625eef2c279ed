use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advsurprise::bmdp::{check_cover_assumption, load_bmdp};
use advsurprise::experiment::{
    ablate_horizon, ablation_csv, best_horizon, heatmap_svg, replay, switch_csv, switch_press_experiment,
    train_campaign, verify_theory, Algorithm, ExperimentConfig, Mode,
};
use advsurprise::{Error, Result};

#[derive(Parser)]
#[command(name = "advsurprise", version, about = "Surprise game experiments on gridworlds and tabular Block MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply to missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed` (and `SA_SEED`).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides `n_episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Overrides `algorithm`.
    #[arg(long)]
    algorithm: Option<Algorithm>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact theory checks on random and hand-built Block MDPs.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Overrides `n_fixtures`.
        #[arg(long)]
        n_fixtures: Option<usize>,
    },
    /// Train one algorithm and write metrics, heatmap and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Horizon sweep, or the switch-press comparison with `--switch-presses`.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated horizons; overrides `horizons`.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[arg(long)]
        switch_presses: bool,
    },
    /// Evaluate saved checkpoints without learning.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Overrides `replay_from`.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Render a `row,col,count` visit file as an SVG heatmap.
    Heatmap {
        /// Visit file, as written by `train`.
        visits: PathBuf,
        /// Output SVG path.
        #[arg(short, long)]
        out: PathBuf,
        /// Grid width in cells; defaults to the last visited column + 1.
        #[arg(long)]
        width: Option<usize>,
        /// Grid height in cells; defaults to the last visited row + 1.
        #[arg(long)]
        height: Option<usize>,
    },
}

fn load_config(common: &Common, mode: Mode) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_toml("", "<defaults>")?,
    };
    cfg.mode = mode;
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir.clone_from(o);
    }
    if let Some(n) = common.episodes {
        cfg.n_episodes = n;
    }
    if let Some(a) = common.algorithm {
        cfg.algorithm = a;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn read_visits(path: &Path, width: Option<usize>, height: Option<usize>) -> Result<(Vec<u64>, usize, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let bad = |line: usize| Error::Parse { location: format!("{}:{}", path.display(), line + 1), detail: "expected row,col,count".into() };
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<u64> = line.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad(i))?;
        let [r, c, n] = f[..] else { return Err(bad(i)) };
        cells.push((r as usize, c as usize, n));
    }
    let min_height = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let min_width = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let (width, height) = (width.unwrap_or(min_width), height.unwrap_or(min_height));
    if width < min_width || height < min_height {
        return Err(Error::Config(format!("visits reach {min_height}x{min_width} cells, grid is {height}x{width}")));
    }
    let mut counts = vec![0; width * height];
    for (r, c, n) in cells {
        counts[r * width + c] += n;
    }
    Ok((counts, width, height))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify { common, n_fixtures } => {
            let cfg = load_config(&common, Mode::Verify)?;
            let report = verify_theory(cfg.master_seed, n_fixtures.unwrap_or(cfg.n_fixtures))?;
            let mut text = report.to_string();
            let mut ok = report.all_pass();
            if let Some(p) = &cfg.fixture {
                let bmdp = load_bmdp(p)?;
                for t in 1..=3 {
                    let cover = check_cover_assumption(&bmdp, t);
                    ok &= cover.holds;
                    text.push_str(&format!("\n{} {} cover_assumption T={t} {:?}", if cover.holds { "PASS" } else { "FAIL" }, p.display(), cover.violations));
                }
            }
            println!("{text}");
            write(&cfg.output_dir.join("verify_report.txt"), &format!("{text}\n"))?;
            Ok(ok)
        }
        Command::Train { common } => {
            let cfg = load_config(&common, Mode::Train)?;
            let records = train_campaign(&cfg)?;
            if let Some(last) = records.last() {
                println!(
                    "{} episodes: rooms/episode {:.3}, cumulative rooms {}, presses {:.3}",
                    records.len(),
                    last.rooms_episode,
                    last.rooms_cumulative,
                    last.switch_presses
                );
            }
            Ok(true)
        }
        Command::Ablate { common, horizons, switch_presses } => {
            let cfg = load_config(&common, Mode::Ablate)?;
            if switch_presses {
                let rows = switch_press_experiment(&cfg, cfg.ablate_seeds)?;
                let csv = switch_csv(&rows);
                print!("{csv}");
                write(&cfg.output_dir.join("switch_presses.csv"), &csv)?;
            } else {
                let rows = ablate_horizon(&cfg, &horizons.unwrap_or_else(|| cfg.horizons.clone()))?;
                let csv = ablation_csv(&rows);
                print!("{csv}");
                if let Some(h) = best_horizon(&rows) {
                    println!("best horizon: {h}");
                }
                write(&cfg.output_dir.join("ablation.csv"), &csv)?;
            }
            Ok(true)
        }
        Command::Replay { common, from } => {
            let mut cfg = load_config(&common, Mode::Replay)?;
            if from.is_some() {
                cfg.replay_from = from;
                cfg.validate()?;
            }
            let records = replay(&cfg)?;
            println!("replayed {} episodes into {}", records.len(), cfg.output_dir.display());
            Ok(true)
        }
        Command::Heatmap { visits, out, width, height } => {
            let (counts, w, h) = read_visits(&visits, width, height)?;
            write(&out, &heatmap_svg(&counts, w, h)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
