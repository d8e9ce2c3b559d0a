//! Lipschitz functions, the built-in corpus and the expression language.

mod expr;
mod function;
mod registry;

pub use expr::{parse_expr, parse_function, parse_function_near, BinOp, Expr, Func, ParsedFunction};
pub use function::{
    estimate_lipschitz, max_difference_quotient, validate_lipschitz, EvalFn, GradFn, GradStatus, LipschitzConstant,
    LipschitzFunction, LipschitzViolation, LIPSCHITZ_PAIRS, LIPSCHITZ_SAFETY,
};
pub use registry::{corpus_lookup, corpus_names, HessianOracle, OracleAnnotation, SubdiffOracle, CORPUS_NAMES};
