mod common;

use common::{gradient_check, small_config, small_dataset};
use drivesim::training::Trainer;

#[test]
fn reverse_mode_matches_central_differences() {
    let data = small_dataset(3, 5);
    let mut t = Trainer::new(small_config(), &data).unwrap();
    // A few steps move the fields away from their symmetric initialization.
    for _ in 0..3 {
        t.step().unwrap();
    }
    for g in gradient_check(&mut t, 32, 1e-5, 11) {
        eprintln!("{g:?}");
        assert!(g.checked >= 5, "{g:?}");
        assert!(g.worst < 1e-3, "{g:?}");
    }
}
