//! Writes a synthetic dataset root: `make_synthetic DIR [TRAIN VALID TEST SEED]`.

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first() else {
        eprintln!("usage: make_synthetic DIR [TRAIN VALID TEST SEED]");
        std::process::exit(2);
    };
    let num = |i: usize, default: u64| args.get(i).map_or(default, |s| s.parse().expect("number"));
    let (train, valid, test, seed) = (num(1, 500), num(2, 100), num(3, 100), num(4, 1));
    if let Err(e) = sfid::synthetic::write_dataset(dir, train as usize, valid as usize, test as usize, seed) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
