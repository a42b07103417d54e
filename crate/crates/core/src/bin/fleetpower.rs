use fleetpower::cli::{main_with_args, Console};

fn main() {
    std::panic::set_hook(Box::new(|info| eprintln!("{info}")));
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    let code = main_with_args(std::env::args_os(), &mut Console { out: &mut out, err: &mut err });
    std::process::exit(code);
}
