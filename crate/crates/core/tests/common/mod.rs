#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use htf_mmc::admittance::Model;
use htf_mmc::opoint::OperatingPoint;
use htf_mmc::params::{CircuitParams, ControlMode, ControlParams, ConverterKind, ModelSpec};
use htf_mmc::sim::{steady_opoint, Dynamics, SimOptions, SteadyState};

/// Reference circuit and control for a case; grid-forming cases get the
/// 5 Ω grid resistor they need to settle.
pub fn case(mode: ControlMode) -> (CircuitParams, ControlParams) {
    let mut circuit = CircuitParams::reference();
    if mode.is_grid_forming() {
        circuit.r_g = 5.0;
    }
    (circuit, ControlParams::reference())
}

pub struct Case {
    pub circuit: CircuitParams,
    pub control: ControlParams,
    pub dynamics: Dynamics,
    pub steady: SteadyState,
    pub op: OperatingPoint,
}

impl Case {
    pub fn model(&self, h: usize) -> Model {
        let spec = ModelSpec::new(self.dynamics.converter, self.dynamics.mode).with_h(h);
        Model::new(self.circuit.clone(), self.control.clone(), spec).unwrap()
    }
}

pub fn solve_case(circuit: CircuitParams, control: ControlParams, converter: ConverterKind, mode: ControlMode) -> Case {
    let dynamics = Dynamics::new(&circuit, &control, converter, mode).unwrap();
    let (steady, op) = steady_opoint(&dynamics, &SimOptions::default()).unwrap();
    Case {
        circuit,
        control,
        dynamics,
        steady,
        op,
    }
}

/// Steady state of a reference case, computed once per test binary.
pub fn reference(converter: ConverterKind, mode: ControlMode) -> Arc<Case> {
    static CACHE: OnceLock<Mutex<HashMap<(ConverterKind, ControlMode), Arc<OnceLock<Arc<Case>>>>>> = OnceLock::new();
    let slot = {
        let mut map = CACHE.get_or_init(Default::default).lock().unwrap();
        map.entry((converter, mode)).or_default().clone()
    };
    slot.get_or_init(|| {
        let (circuit, control) = case(mode);
        Arc::new(solve_case(circuit, control, converter, mode))
    })
    .clone()
}

/// Frequencies in `[lo, hi]` at integer Hz, skipping ±2 Hz around multiples of 50 Hz.
pub fn off_guard(lo: u32, hi: u32, step: u32) -> Vec<f64> {
    (lo..=hi)
        .step_by(step as usize)
        .filter(|f| {
            let r = f % 50;
            r > 2 && r < 48
        })
        .map(f64::from)
        .collect()
}

pub fn db(z: num_complex::Complex64) -> f64 {
    20.0 * z.norm().log10()
}

/// Phase difference in degrees wrapped to [-180, 180].
pub fn deg_diff(a: num_complex::Complex64, b: num_complex::Complex64) -> f64 {
    (a / b).arg().to_degrees()
}
