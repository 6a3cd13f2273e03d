//! Per-thread operation counters for complexity accounting.
//!
//! The evaluation harness compares prediction cost across methods by counting
//! operations instead of timing wall clocks. Two counters are kept:
//!
//! - **kernel evaluations**: invocations of a kernel function against a stored
//!   training input. A query's single self-evaluation `k(a, a)` is constant
//!   cost (independent of the training-set size) and is not counted here.
//! - **flops**: an approximate floating-point operation count covering kernel
//!   arithmetic and the dominant linear-algebra work (triangular solves,
//!   projections, dot products).
//!
//! Counters are thread-local so concurrent evaluations do not interfere.

use std::cell::Cell;

thread_local! {
    static KERNEL_EVALS: Cell<u64> = const { Cell::new(0) };
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

/// Resets both counters on the calling thread.
pub fn reset() {
    KERNEL_EVALS.with(|c| c.set(0));
    FLOPS.with(|c| c.set(0));
}

/// Kernel evaluations against training inputs since the last [`reset`].
pub fn kernel_evals() -> u64 {
    KERNEL_EVALS.with(Cell::get)
}

/// Approximate floating-point operations since the last [`reset`].
pub fn flops() -> u64 {
    FLOPS.with(Cell::get)
}

pub(crate) fn add_kernel_evals(n: u64) {
    KERNEL_EVALS.with(|c| c.set(c.get() + n));
}

pub(crate) fn add_flops(n: u64) {
    FLOPS.with(|c| c.set(c.get() + n));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_accumulate_and_reset() {
        reset();
        add_kernel_evals(3);
        add_flops(100);
        assert_eq!(kernel_evals(), 3);
        assert_eq!(flops(), 100);
        reset();
        assert_eq!(kernel_evals(), 0);
        assert_eq!(flops(), 0);
    }
}
