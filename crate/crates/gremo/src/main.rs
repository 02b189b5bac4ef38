fn main() {
    let code = match std::panic::catch_unwind(gremo::cli::run) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        // the panic hook has already printed the message
        Err(_) => 1,
    };
    std::process::exit(code);
}
