pub mod cell_problems;
pub mod expr;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod ionics;
pub mod macro_solver;
pub mod micro_solver;
pub mod problem;

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
