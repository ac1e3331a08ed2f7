//! `persreg` command line: training runs, weight sweeps, rank statistics,
//! critical-difference data, and the self-verification suites.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use persreg::io::{write_results, ExperimentConfig};
use persreg::stats::{cd_diagram_data, friedman, nemenyi, rank_table, AccuracyTable, RankTable};
use persreg::trainer::{select_best_weight, sweep, train, RunRecord};
use persreg::verify;
use persreg::Error;

#[derive(Parser)]
#[command(
    name = "persreg",
    version,
    about = "Train MLPs under persistence-based decorrelation terms and compare procedures statistically"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training per configured seed at the configured omega.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the omega grid (plus baseline) for every configured seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rank an accuracy table and run the Friedman test (both variants)
    /// with the Nemenyi post-hoc.
    Stats {
        /// Accuracy CSV: header row of network ids, one row per method.
        #[arg(long)]
        input: PathBuf,
        /// Directory receiving average_ranks.csv, nemenyi_pvalues.csv, and
        /// friedman.txt.
        #[arg(long)]
        output: PathBuf,
    },
    /// Emit critical-difference diagram data (positions and groups).
    CdDiagram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Optional file for the structured text (stdout otherwise).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the oracle, gradient, and fixture suites and report pass/fail.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_class(&e))
        }
    }
}

/// Exit 2 for configuration/input problems the user can fix, 1 for runtime
/// failures.
fn exit_class(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidSpec(_)
        | Error::Io { .. }
        | Error::IdxBadMagic { .. }
        | Error::IdxTruncated { .. }
        | Error::IdxCountMismatch { .. }
        | Error::MalformedTable { .. }
        | Error::EmptyDataset => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Train { config } => cmd_train(&config),
        Command::Sweep { config } => cmd_sweep(&config),
        Command::Stats { input, output } => cmd_stats(&input, &output),
        Command::CdDiagram {
            input,
            alpha,
            output,
        } => cmd_cd_diagram(&input, alpha, output.as_deref()),
        Command::Verify => Ok(cmd_verify()),
    }
}

fn print_run(record: &RunRecord) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!(
        "  {} {} omega={} seed={} [{}] epochs={} best_val={} test={}",
        record.network_id,
        record.regularizer.as_str(),
        record.omega,
        record.seed,
        match record.status {
            persreg::trainer::RunStatus::Completed => "completed",
            persreg::trainer::RunStatus::Diverged => "diverged",
        },
        record.epochs_trained,
        fmt(record.best_val_acc),
        fmt(record.test_acc),
    );
}

fn cmd_train(config_path: &Path) -> Result<ExitCode, Error> {
    let config = ExperimentConfig::load(config_path)?;
    let dataset = config.load_dataset()?;
    println!(
        "training {} on {} (omega = {}, {} seed(s))",
        config.network_id,
        dataset.name,
        config.omega,
        config.seeds.len()
    );
    let mut records = Vec::new();
    for &seed in &config.seeds {
        let tc = config.train_config(&dataset, config.omega, seed);
        let record = train(&tc, &dataset)?;
        print_run(&record);
        records.push(record);
    }
    let out_dir = PathBuf::from(&config.output_dir);
    write_results(&records, &out_dir, &config.digest())?;
    println!("results written to {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(config_path: &Path) -> Result<ExitCode, Error> {
    let config = ExperimentConfig::load(config_path)?;
    let dataset = config.load_dataset()?;
    let grid = config.sweep_grid();
    let workers = config.effective_workers();
    println!(
        "sweeping {} over {} weight(s) x {} seed(s), workers = {}",
        config.network_id,
        grid.len(),
        config.seeds.len(),
        if workers == 0 {
            "auto".to_string()
        } else {
            workers.to_string()
        }
    );
    let workers = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    let mut records = Vec::new();
    for &seed in &config.seeds {
        let base = config.train_config(&dataset, 0.0, seed);
        let seed_records = sweep(&base, &dataset, &grid, workers)?;
        for record in &seed_records {
            print_run(record);
        }
        match select_best_weight(&seed_records) {
            Ok((omega, test_acc)) => println!(
                "  seed {seed}: best weight {omega} with test accuracy {test_acc:.4}"
            ),
            Err(_) => println!("  seed {seed}: every run failed"),
        }
        records.extend(seed_records);
    }
    let out_dir = PathBuf::from(&config.output_dir);
    write_results(&records, &out_dir, &config.digest())?;
    println!("results written to {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn load_ranks(input: &Path) -> Result<RankTable, Error> {
    let table = AccuracyTable::from_csv_path(input)?;
    rank_table(&table)
}

fn cmd_stats(input: &Path, output: &Path) -> Result<ExitCode, Error> {
    let ranks = load_ranks(input)?;
    std::fs::create_dir_all(output).map_err(|source| Error::Io {
        path: output.display().to_string(),
        source,
    })?;

    println!("average ranks:");
    let mut order: Vec<usize> = (0..ranks.methods.len()).collect();
    order.sort_by(|&a, &b| ranks.average[a].partial_cmp(&ranks.average[b]).unwrap());
    let mut ranks_csv = String::from("method,average_rank\n");
    for &i in &order {
        println!("  {:<8} {:.6}", ranks.methods[i], ranks.average[i]);
        ranks_csv.push_str(&format!(
            "{},{:.16e}\n",
            ranks.methods[i], ranks.average[i]
        ));
    }
    let mut rank_table_csv = format!("method,{}\n", ranks.networks.join(","));
    for (i, method) in ranks.methods.iter().enumerate() {
        rank_table_csv.push_str(method);
        for j in 0..ranks.networks.len() {
            rank_table_csv.push_str(&format!(",{}", ranks.ranks[(i, j)]));
        }
        rank_table_csv.push('\n');
    }

    let fr = friedman(&ranks);
    println!(
        "friedman chi-squared form: statistic {:.6}, p = {:.6e}",
        fr.chi2, fr.p_chi2
    );
    println!(
        "friedman f form:           statistic {:.6}, p = {:.6e}",
        fr.f_stat, fr.p_f
    );

    let p = nemenyi(&ranks);
    let mut nemenyi_csv = format!("method,{}\n", ranks.methods.join(","));
    for i in 0..ranks.methods.len() {
        let mut row = vec![ranks.methods[i].clone()];
        for j in 0..ranks.methods.len() {
            row.push(if i == j {
                String::new()
            } else {
                format!("{:.6}", p[(i, j)])
            });
        }
        nemenyi_csv.push_str(&row.join(","));
        nemenyi_csv.push('\n');
    }

    let write = |name: &str, text: &str| -> Result<(), Error> {
        let path = output.join(name);
        std::fs::write(&path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write("rank_table.csv", &rank_table_csv)?;
    write("average_ranks.csv", &ranks_csv)?;
    write("nemenyi_pvalues.csv", &nemenyi_csv)?;
    write(
        "friedman.txt",
        &format!(
            "chi_squared_form statistic {:.16e} p {:.16e}\nf_form statistic {:.16e} p {:.16e}\n",
            fr.chi2, fr.p_chi2, fr.f_stat, fr.p_f
        ),
    )?;
    println!(
        "wrote rank_table.csv, average_ranks.csv, nemenyi_pvalues.csv, friedman.txt to {}",
        output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_cd_diagram(input: &Path, alpha: f64, output: Option<&Path>) -> Result<ExitCode, Error> {
    let ranks = load_ranks(input)?;
    let cd = cd_diagram_data(&ranks, alpha);
    let mut text = format!("# critical difference data (alpha = {alpha})\n");
    for entry in &cd.entries {
        text.push_str(&format!(
            "method {} rank {}\n",
            entry.method, entry.average_rank
        ));
    }
    for group in &cd.groups {
        let members: Vec<&str> = group
            .iter()
            .map(|&i| cd.entries[i].method.as_str())
            .collect();
        text.push_str(&format!("group {}\n", members.join(" ")));
    }
    match output {
        Some(path) => {
            std::fs::write(path, &text).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            println!("critical difference data written to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify() -> ExitCode {
    let reports = verify::run_all();
    let mut all_green = true;
    for report in &reports {
        println!(
            "{} {} - {}",
            if report.passed { "PASS" } else { "FAIL" },
            report.name,
            report.detail
        );
        all_green &= report.passed;
    }
    if all_green {
        println!("all {} suites passed", reports.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
