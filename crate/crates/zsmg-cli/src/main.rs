use clap::{Parser, Subcommand};
use zsmg_cli::commands::{
    cmd_bench, cmd_eval, cmd_gen, cmd_train, BenchArgs, EvalArgs, GenArgs, TrainArgs,
};
use zsmg_cli::{init_thread_pool, CliResult};

#[derive(Parser)]
#[command(
    name = "zsmg",
    version,
    about = "Two-player zero-sum Markov game experiments: generate games, train learners, evaluate certified policies, run the acceptance suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a game file from a builtin spec or the seeded generator
    Gen(GenArgs),
    /// Train learners over an experiment config, one directory per seed
    Train(TrainArgs),
    /// Score a finished run: gap bounds, certified exploitability, convergence curve
    Eval(EvalArgs),
    /// Run the acceptance criteria suite
    Bench(BenchArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    init_thread_pool()?;
    match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Bench(args) => cmd_bench(&args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
