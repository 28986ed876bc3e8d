//! Scalar abstraction: all numerical code is generic over the real field
//! (`f32` or `f64`); complex quantities are `num_complex::Complex<T>`.

use nalgebra::RealField;
use num_complex::Complex;

/// Real scalar type the toolkit is generic over.
pub trait Scalar: RealField + Copy {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Convert a working scalar back to `f64` (lossless for f32/f64).
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    nalgebra::try_convert(x).unwrap_or(f64::NAN)
}

/// Complex constant from `f64` parts.
#[inline]
pub fn cplx<T: Scalar>(re: f64, im: f64) -> Complex<T> {
    Complex::new(real(re), real(im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(real::<f64>(0.25), 0.25);
        assert_eq!(real::<f32>(0.25), 0.25f32);
        assert_eq!(to_f64(0.25f32), 0.25);
        assert!(to_f64(f64::INFINITY).is_infinite());
        let c: Complex<f32> = cplx(1.0, -2.0);
        assert_eq!(c, Complex::new(1.0f32, -2.0));
    }
}
