// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// stencil loops read clearer with explicit indices
#![allow(clippy::needless_range_loop)]

pub mod branch;
pub mod diagnostics;
pub mod green;
pub mod grid2d;
pub mod hamiltonian;
pub mod harness;
pub mod solver1d;
pub mod solver2d;
pub mod sparse;
pub mod vexpr;
