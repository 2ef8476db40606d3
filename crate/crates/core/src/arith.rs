//! Modular exponentiation, generic over the integer scalar.
//!
//! The protocol layers run on [`crate::Nat`]; tests exercise the same code
//! with machine integers, where exhaustive comparison against a naive
//! oracle is cheap. For a primitive type the caller must pick one wide
//! enough that `(modulus - 1)^2` does not overflow.

use num_integer::Integer;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("modulus must be greater than 1")]
    InvalidModulus,
    #[error("base must lie in [0, modulus)")]
    BaseOutOfRange,
    #[error("exponent must be non-negative")]
    NegativeExponent,
}

/// Computes `base^exponent mod modulus` by square-and-multiply.
pub fn mod_exp<T>(base: &T, exponent: &T, modulus: &T) -> Result<T, ArithError>
where
    T: Integer + Clone,
{
    if *modulus <= T::one() {
        return Err(ArithError::InvalidModulus);
    }
    if base < &T::zero() || base >= modulus {
        return Err(ArithError::BaseOutOfRange);
    }
    if *exponent < T::zero() {
        return Err(ArithError::NegativeExponent);
    }

    let two = T::one() + T::one();
    let mut result = T::one();
    let mut square = base.clone();
    let mut remaining = exponent.clone();
    while remaining > T::zero() {
        if remaining.is_odd() {
            result = (result * square.clone()) % modulus.clone();
        }
        remaining = remaining / two.clone();
        if remaining > T::zero() {
            square = (square.clone() * square) % modulus.clone();
        }
    }
    Ok(result)
}
