//! Acceptance suite. The checks live in `tests/acceptance.rs`; run them with
//! `cargo test -p clusterhte-acceptance -- --nocapture` to see one line per criterion.
