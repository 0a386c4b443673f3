//! Numerical tolerances shared across the crate.

/// Algebraic identities evaluated in f64 (norms, inner products, Gram entries).
pub const ALGEBRAIC: f64 = 1e-12;

/// Anything that goes through an eigen-decomposition or a long chain of
/// projections: fidelities, entropies, orthonormality checks.
pub const NUMERIC: f64 = 1e-10;

/// Below this probability a projection is treated as impossible and the
/// residual is left unnormalized.
pub const PROB_FLOOR: f64 = 1e-14;

/// Completion vectors added to a partial basis must never fire above this.
pub const COMPLETION_PROB: f64 = 1e-12;
