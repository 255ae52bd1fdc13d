fn main() {
    std::process::exit(dmfg::run(std::env::args_os()));
}
