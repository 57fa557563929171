//! Numerical laboratory for 2×2 linear cocycles over subshifts of finite type.

pub mod cocycle;
pub mod coupling;
pub mod exponents;
pub mod projective;
pub mod sweep;
pub mod symbolic;
pub mod thermo;
pub mod ustate;
pub mod window;
