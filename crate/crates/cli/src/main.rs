fn main() {
    eprintln!("subcommands not wired up yet");
    std::process::exit(2);
}
