//! Künzel transport coefficients and storage terms for porous building materials.
//!
//! Temperatures are in °C unless a function says otherwise. The moisture
//! potential `phi` is relative humidity in (0, 1).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Offset between °C and K.
pub const KELVIN_OFFSET: f64 = 273.15;

/// `phi` must stay at least this far below the approximation factor `b`.
pub const SINGULARITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MaterialError {
    #[error("degenerate material parameters: {0}")]
    Degenerate(&'static str),
    #[error("relative humidity {phi} reaches the storage pole b = {b}")]
    Singularity { phi: f64, b: f64 },
    #[error("non-physical parameter {name} = {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// The eight scalar material properties at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// free water saturation [kg m^-3]
    pub w_f: f64,
    /// water content at 0.8 relative humidity [kg m^-3]
    pub w_80: f64,
    /// dry thermal conductivity [W m^-1 K^-1]
    pub lambda_0: f64,
    /// thermal conductivity supplement [-]
    pub b_tcs: f64,
    /// vapour diffusion resistance factor [-]
    pub mu: f64,
    /// water absorption coefficient [kg m^-2 s^-0.5]
    pub a: f64,
    /// specific heat capacity [J kg^-1 K^-1]
    pub c_s: f64,
    /// bulk density [kg m^-3]
    pub rho_s: f64,
}

/// Index of each material property; the order is the canonical layout used
/// for latent vectors, prior tables and CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    WF,
    W80,
    Lambda0,
    BTcs,
    Mu,
    A,
    CS,
    RhoS,
}

impl Parameter {
    pub const COUNT: usize = 8;

    pub const ALL: [Parameter; Self::COUNT] = [
        Parameter::WF,
        Parameter::W80,
        Parameter::Lambda0,
        Parameter::BTcs,
        Parameter::Mu,
        Parameter::A,
        Parameter::CS,
        Parameter::RhoS,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Parameter::WF => "w_f",
            Parameter::W80 => "w_80",
            Parameter::Lambda0 => "lambda_0",
            Parameter::BTcs => "b_tcs",
            Parameter::Mu => "mu",
            Parameter::A => "a",
            Parameter::CS => "c_s",
            Parameter::RhoS => "rho_s",
        }
    }
}

impl MaterialParams {
    /// Prior means of the masonry material.
    pub const MASONRY_MEAN: MaterialParams = MaterialParams {
        w_f: 200.0,
        w_80: 100.0,
        lambda_0: 0.3,
        b_tcs: 10.0,
        mu: 12.0,
        a: 0.6,
        c_s: 900.0,
        rho_s: 1650.0,
    };

    /// Prior standard deviations of the masonry material.
    pub const MASONRY_STD: MaterialParams = MaterialParams {
        w_f: 40.0,
        w_80: 10.0,
        lambda_0: 0.1,
        b_tcs: 2.0,
        mu: 5.0,
        a: 0.2,
        c_s: 100.0,
        rho_s: 50.0,
    };

    pub fn from_array(v: [f64; Parameter::COUNT]) -> Self {
        MaterialParams {
            w_f: v[0],
            w_80: v[1],
            lambda_0: v[2],
            b_tcs: v[3],
            mu: v[4],
            a: v[5],
            c_s: v[6],
            rho_s: v[7],
        }
    }

    pub fn to_array(&self) -> [f64; Parameter::COUNT] {
        [
            self.w_f,
            self.w_80,
            self.lambda_0,
            self.b_tcs,
            self.mu,
            self.a,
            self.c_s,
            self.rho_s,
        ]
    }

    pub fn get(&self, p: Parameter) -> f64 {
        self.to_array()[p.index()]
    }

    /// Checks positivity of every field and `w_80 < w_f`.
    pub fn validate(&self) -> Result<(), MaterialError> {
        for p in Parameter::ALL {
            let value = self.get(p);
            if !(value > 0.0 && value.is_finite()) {
                return Err(MaterialError::NonPositive {
                    name: p.name(),
                    value,
                });
            }
        }
        if self.w_80 >= self.w_f {
            return Err(MaterialError::Degenerate("w_80 must be below w_f"));
        }
        Ok(())
    }
}

/// Temperature and relative humidity at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalState {
    pub theta: f64,
    pub phi: f64,
}

impl LocalState {
    pub fn new(theta: f64, phi: f64) -> Self {
        LocalState { theta, phi }
    }
}

/// Approximation factor `b` of the sorption isotherm.
///
/// Only `b > 1` describes a physical isotherm; anything else (including a
/// vanishing denominator) is reported as degenerate.
pub fn approx_factor_b(p: &MaterialParams) -> Result<f64, MaterialError> {
    let denom = p.w_80 - 0.8 * p.w_f;
    if denom.abs() <= 1e-12 * p.w_f.abs().max(1.0) {
        return Err(MaterialError::Degenerate("w_80 - 0.8 w_f vanishes"));
    }
    let b = 0.8 * (p.w_80 - p.w_f) / denom;
    if !(b > 1.0) || !b.is_finite() {
        return Err(MaterialError::Degenerate("approximation factor b <= 1"));
    }
    Ok(b)
}

fn check_pole(phi: f64, b: f64) -> Result<(), MaterialError> {
    if phi >= b - SINGULARITY_MARGIN || !phi.is_finite() {
        Err(MaterialError::Singularity { phi, b })
    } else {
        Ok(())
    }
}

/// Moisture dependent thermal conductivity λ [W m^-1 K^-1].
pub fn thermal_conductivity(p: &MaterialParams, s: LocalState) -> Result<f64, MaterialError> {
    let b = approx_factor_b(p)?;
    check_pole(s.phi, b)?;
    Ok(p.lambda_0 * (1.0 + p.b_tcs * p.w_f * (b - 1.0) * s.phi / (p.rho_s * (b - s.phi))))
}

/// Evaporation enthalpy of water h_v [J kg^-1]; the empirical law is written
/// in absolute temperature, so `theta` in °C is shifted to kelvin first.
pub fn evaporation_enthalpy(s: LocalState) -> f64 {
    let t = s.theta + KELVIN_OFFSET;
    2.5008e6 * (KELVIN_OFFSET / t).powf(0.167 + 3.67e-4 * t)
}

/// Water vapour permeability δ_p [kg m^-1 s^-1 Pa^-1].
pub fn vapour_permeability(p: &MaterialParams, s: LocalState) -> f64 {
    1.9446e-12 / p.mu * (s.theta + KELVIN_OFFSET).powf(0.81)
}

/// Water vapour saturation pressure p_sat [Pa].
pub fn saturation_pressure(s: LocalState) -> f64 {
    611.0 * (17.08 * s.theta / (234.18 + s.theta)).exp()
}

/// Temperature derivative of [`saturation_pressure`] [Pa K^-1].
pub fn saturation_pressure_slope(s: LocalState) -> f64 {
    let d = 234.18 + s.theta;
    saturation_pressure(s) * 17.08 * 234.18 / (d * d)
}

/// Liquid conduction coefficient D_φ [kg m^-1 s^-1].
pub fn liquid_conduction(p: &MaterialParams, s: LocalState) -> Result<f64, MaterialError> {
    let b = approx_factor_b(p)?;
    check_pole(s.phi, b)?;
    if (p.w_f - 1.0).abs() < 1e-12 {
        return Err(MaterialError::Degenerate("w_f = 1 in liquid conduction exponent"));
    }
    let exponent = 3.0 * p.w_f * (b - 1.0) * s.phi / ((b - s.phi) * (p.w_f - 1.0));
    let shape = b * (b - 1.0) / ((b - s.phi) * (b - s.phi));
    Ok(3.8 * p.a * p.a / p.w_f * 10f64.powf(exponent) * shape)
}

/// dH/dθ = ρ_s c_s [J m^-3 K^-1].
pub fn enthalpy_capacity(p: &MaterialParams) -> f64 {
    p.rho_s * p.c_s
}

/// Sorption isotherm w(φ) = w_f (b-1) φ / (b-φ) [kg m^-3].
pub fn moisture_content(p: &MaterialParams, phi: f64) -> Result<f64, MaterialError> {
    let b = approx_factor_b(p)?;
    check_pole(phi, b)?;
    Ok(p.w_f * (b - 1.0) * phi / (b - phi))
}

/// dw/dφ of the isotherm [kg m^-3].
pub fn moisture_capacity(p: &MaterialParams, s: LocalState) -> Result<f64, MaterialError> {
    let b = approx_factor_b(p)?;
    check_pole(s.phi, b)?;
    Ok(p.w_f * (b - 1.0) * b / ((b - s.phi) * (b - s.phi)))
}

/// All coefficients the transport equations need at one point, evaluated together
/// so `b` is computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub heat_capacity: f64,
    pub moisture_capacity: f64,
    pub conductivity: f64,
    pub liquid_conduction: f64,
    pub vapour_permeability: f64,
    pub evaporation_enthalpy: f64,
    pub saturation_pressure: f64,
    pub saturation_pressure_slope: f64,
}

impl Coefficients {
    pub fn evaluate(p: &MaterialParams, s: LocalState) -> Result<Self, MaterialError> {
        let b = approx_factor_b(p)?;
        check_pole(s.phi, b)?;
        if (p.w_f - 1.0).abs() < 1e-12 {
            return Err(MaterialError::Degenerate("w_f = 1 in liquid conduction exponent"));
        }
        let bp = b - s.phi;
        let exponent = 3.0 * p.w_f * (b - 1.0) * s.phi / (bp * (p.w_f - 1.0));
        Ok(Coefficients {
            heat_capacity: enthalpy_capacity(p),
            moisture_capacity: p.w_f * (b - 1.0) * b / (bp * bp),
            conductivity: p.lambda_0 * (1.0 + p.b_tcs * p.w_f * (b - 1.0) * s.phi / (p.rho_s * bp)),
            liquid_conduction: 3.8 * p.a * p.a / p.w_f * 10f64.powf(exponent) * b * (b - 1.0)
                / (bp * bp),
            vapour_permeability: vapour_permeability(p, s),
            evaporation_enthalpy: evaporation_enthalpy(s),
            saturation_pressure: saturation_pressure(s),
            saturation_pressure_slope: saturation_pressure_slope(s),
        })
    }
}
