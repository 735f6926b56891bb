fn main() {
    std::process::exit(smc_mdp::cli::main_entry());
}
