//! Reference Plebanski functions shared by tests, benches and the
//! acceptance runner.

/// `1/2 sum_ij F_ij(z1, z2) theta_i theta_j` with `F` the Hessian of
/// `exp(z1 z2)`: an exact solution for `d = 2`, good along
/// `z3 = z4 = const`, with non-constant forms.
pub const HESSIAN_SOLUTION: &str =
    "z2^2*exp(z1*z2)*t1^2/2 + (1 + z1*z2)*exp(z1*z2)*t1*t2 + z1^2*exp(z1*z2)*t2^2/2";

/// Homogeneous of degree -1, odd, and exact for `d = 1`.
pub const ODD_HOMOGENEOUS: &str = "#! odd homogeneous\nt1^3/z1";

/// Odd, homogeneous of degree -1 and 2 pi i periodic in theta.
pub const PERIODIC_ODD: &str = "#! periodic homogeneous odd\n(exp(t1) - exp(-t1))/(2*z1)";
