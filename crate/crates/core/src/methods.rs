//! Classical base methods, all embedded as two-step methods.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::densemat::DenseMatrix;
use crate::tableau::TsrkCoefficients;

fn embedded(a: &[&[f64]], b: Vec<f64>) -> TsrkCoefficients {
    let a = DenseMatrix::from_rows(a).expect("finite coefficients");
    TsrkCoefficients::runge_kutta(a, b)
        .and_then(|m| m.embed_two_step())
        .expect("valid built-in method")
}

/// Forward Euler, `C = 1`, order 1.
pub fn forward_euler() -> TsrkCoefficients {
    embedded(&[&[0.0]], vec![1.0])
}

/// Three-stage third-order Shu–Osher method, `C = 1`, abscissas `(0, 1, 1/2)`.
pub fn essprk33() -> TsrkCoefficients {
    embedded(
        &[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.25, 0.25, 0.0]],
        vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    )
}

/// Three-stage third-order method with non-decreasing abscissas
/// `(0, 2/3, 2/3)`, `C = 3/4`.
pub fn essprk_plus33() -> TsrkCoefficients {
    embedded(
        &[
            &[0.0, 0.0, 0.0],
            &[2.0 / 3.0, 0.0, 0.0],
            &[2.0 / 9.0, 4.0 / 9.0, 0.0],
        ],
        vec![0.25, 3.0 / 16.0, 9.0 / 16.0],
    )
}

/// Four-stage third-order method, `C = 2`, abscissas `(0, 1/2, 1, 1/2)`.
pub fn essprk43() -> TsrkCoefficients {
    embedded(
        &[
            &[0.0, 0.0, 0.0, 0.0],
            &[0.5, 0.0, 0.0, 0.0],
            &[0.5, 0.5, 0.0, 0.0],
            &[1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.0],
        ],
        vec![1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.5],
    )
}

/// Built-in methods with their registry names.
pub fn builtin() -> Vec<(String, TsrkCoefficients)> {
    vec![
        ("forward-euler".into(), forward_euler()),
        ("essprk33".into(), essprk33()),
        ("essprk-plus33".into(), essprk_plus33()),
        ("essprk43".into(), essprk43()),
    ]
}
