//! End-to-end acceptance suite. The checks live in `tests/acceptance.rs`.
