//! Celsius/Kelvin conversion. Everything is Kelvin internally.

pub const ZERO_CELSIUS_K: f64 = 273.15;

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + ZERO_CELSIUS_K
}

pub fn kelvin_to_celsius(k: f64) -> f64 {
    k - ZERO_CELSIUS_K
}
