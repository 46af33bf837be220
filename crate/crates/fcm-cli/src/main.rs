fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut stdout = std::io::stdout();
    if let Err(e) = fcm_cli::run(&args, &mut stdout) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
