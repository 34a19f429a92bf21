//! Criterion benches for the solvers, the codec and the slot loop live in `benches/`.
