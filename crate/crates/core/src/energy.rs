//! Exhaust-pump controller driven by material category and smoke detection,
//! with rectangle-rule energy accounting over a sampled cut trace.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaterialCategory {
    A,
    B,
    C,
}

impl MaterialCategory {
    /// Commanded fraction of rated pump power while cutting.
    pub fn tier(self) -> f64 {
        match self {
            MaterialCategory::A => 1.0,
            MaterialCategory::B => 0.75,
            MaterialCategory::C => 0.5,
        }
    }
}

const CATEGORY_TABLE: &[(&str, MaterialCategory)] = &[
    ("wood", MaterialCategory::A),
    ("plywood", MaterialCategory::A),
    ("mdf", MaterialCategory::A),
    ("hardwood", MaterialCategory::A),
    ("hardwoods", MaterialCategory::A),
    ("bamboo", MaterialCategory::A),
    ("cork", MaterialCategory::A),
    ("leather", MaterialCategory::A),
    ("suede", MaterialCategory::A),
    ("metal", MaterialCategory::A),
    ("metals", MaterialCategory::A),
    ("acrylic", MaterialCategory::B),
    ("tpu", MaterialCategory::B),
    ("petg", MaterialCategory::B),
    ("delrin", MaterialCategory::B),
    ("styrene", MaterialCategory::B),
    ("abs", MaterialCategory::B),
    ("lexan", MaterialCategory::B),
    ("pvc", MaterialCategory::B),
    ("silicone", MaterialCategory::B),
    ("foamboard", MaterialCategory::B),
    ("felt", MaterialCategory::C),
    ("textile", MaterialCategory::C),
    ("textiles", MaterialCategory::C),
    ("fabric", MaterialCategory::C),
    ("fabrics", MaterialCategory::C),
    ("cardstock", MaterialCategory::C),
    ("cardboard", MaterialCategory::C),
    ("matboard", MaterialCategory::C),
    ("paper", MaterialCategory::C),
];

/// Case-insensitive table lookup. Unknown materials get full extraction.
pub fn classify_category(material: &str) -> MaterialCategory {
    let key = material.trim().to_ascii_lowercase();
    CATEGORY_TABLE
        .iter()
        .find(|(name, _)| *name == key)
        .map_or(MaterialCategory::A, |&(_, c)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSample {
    pub t: f64,
    pub laser_on: bool,
    pub material: Option<String>,
    pub smoke: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutTrace {
    pub pump_watts: f64,
    pub dt: f64,
    pub laser_power_mw: Option<f64>,
    pub samples: Vec<CutSample>,
}

fn parse_flag(field: &str, line: usize) -> Result<bool> {
    match field.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::InvalidTrace(format!("line {line}: bad flag {other:?}"))),
    }
}

fn parse_number(field: &str, what: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidTrace(format!("line {line}: bad {what} {field:?}")))
}

impl CutTrace {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pump_watts > 0.0 && self.pump_watts.is_finite()) {
            return Err(Error::InvalidTrace("pump_watts must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidTrace("dt must be positive".into()));
        }
        if self.samples.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let tol = 1e-6 * self.dt;
        for (i, pair) in self.samples.windows(2).enumerate() {
            if ((pair[1].t - pair[0].t) - self.dt).abs() > tol {
                return Err(Error::InvalidTrace(format!(
                    "sample {}: timestamps must advance by dt={}",
                    i + 1,
                    self.dt
                )));
            }
        }
        if let Some(i) = self
            .samples
            .iter()
            .position(|s| s.laser_on && s.material.as_deref().is_none_or(str::is_empty))
        {
            return Err(Error::InvalidTrace(format!("sample {i}: laser on without a material")));
        }
        Ok(())
    }

    /// `# key=value` header comments, then `t,laser_on,material,smoke`.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let (mut pump, mut dt, mut laser) = (None, None, None);
        let mut samples = Vec::new();
        let mut seen_header = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = n + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    let slot = match k.trim() {
                        "pump_watts" => &mut pump,
                        "dt" => &mut dt,
                        "laser_power_mw" => &mut laser,
                        _ => continue,
                    };
                    *slot = Some(parse_number(v, k.trim(), lineno)?);
                }
                continue;
            }
            if !seen_header {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["t", "laser_on", "material", "smoke"] {
                    return Err(Error::InvalidTrace(format!("line {lineno}: unexpected header {line:?}")));
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::InvalidTrace(format!("line {lineno}: expected 4 fields")));
            }
            let material = fields[2].trim();
            samples.push(CutSample {
                t: parse_number(fields[0], "time", lineno)?,
                laser_on: parse_flag(fields[1], lineno)?,
                material: (!material.is_empty()).then(|| material.to_string()),
                smoke: parse_flag(fields[3], lineno)?,
            });
        }
        let trace = CutTrace {
            pump_watts: pump.ok_or_else(|| Error::InvalidTrace("missing # pump_watts=".into()))?,
            dt: dt.ok_or_else(|| Error::InvalidTrace("missing # dt=".into()))?,
            laser_power_mw: laser,
            samples,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# pump_watts={}\n# dt={}\n", self.pump_watts, self.dt);
        if let Some(p) = self.laser_power_mw {
            let _ = writeln!(out, "# laser_power_mw={p}");
        }
        out.push_str("t,laser_on,material,smoke\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.t,
                u8::from(s.laser_on),
                s.material.as_deref().unwrap_or(""),
                u8::from(s.smoke)
            );
        }
        out
    }
}

/// `samples` records at spacing `dt`, of which `round(duty * samples)` have
/// the laser on, spread evenly through the run. No smoke.
pub fn duty_cycle_trace(material: &str, duty: f64, samples: usize, dt: f64, pump_watts: f64) -> CutTrace {
    let on = (duty.clamp(0.0, 1.0) * samples as f64).round() as usize;
    let samples = (0..samples)
        .map(|i| {
            let laser_on = (i + 1) * on / samples > i * on / samples;
            CutSample {
                t: i as f64 * dt,
                laser_on,
                material: laser_on.then(|| material.to_string()),
                smoke: false,
            }
        })
        .collect();
    CutTrace {
        pump_watts,
        dt,
        laser_power_mw: None,
        samples,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Cutting(MaterialCategory),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: Mode,
    pub pump_fraction: f64,
    pub purge_remaining_s: f64,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            mode: Mode::Idle,
            pump_fraction: 0.0,
            purge_remaining_s: 0.0,
        }
    }
}

/// Advances the controller by one sample of length `dt`.
pub fn step_controller(state: &ControllerState, sample: &CutSample, purge_s: f64, dt: f64) -> ControllerState {
    if sample.laser_on {
        let cat = classify_category(sample.material.as_deref().unwrap_or(""));
        return ControllerState {
            mode: Mode::Cutting(cat),
            pump_fraction: if sample.smoke { 1.0 } else { cat.tier() },
            purge_remaining_s: purge_s,
        };
    }
    if sample.smoke {
        let cat = match state.mode {
            Mode::Cutting(c) => c,
            Mode::Idle => MaterialCategory::A,
        };
        return ControllerState {
            mode: Mode::Cutting(cat),
            pump_fraction: 1.0,
            purge_remaining_s: purge_s,
        };
    }
    // Hold the previous fraction while purge time remains.
    if state.mode != Mode::Idle && state.purge_remaining_s > 1e-9 * dt {
        return ControllerState {
            purge_remaining_s: (state.purge_remaining_s - dt).max(0.0),
            ..*state
        };
    }
    ControllerState::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PumpPolicy {
    Adaptive { purge_s: f64 },
    AlwaysOn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub pump_watts: f64,
    pub duration_s: f64,
    pub e_baseline_ws: f64,
    pub e_adaptive_ws: f64,
    pub e_baseline_kwh: f64,
    pub e_adaptive_kwh: f64,
    pub savings_percent: f64,
    pub avg_power_saved_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub report: EnergyReport,
    /// Commanded fraction per sample.
    pub fractions: Vec<f64>,
}

impl Simulation {
    /// `t,pump_fraction,power_w` per sample.
    pub fn power_csv(&self, trace: &CutTrace) -> String {
        let mut out = String::from("t,pump_fraction,power_w\n");
        for (s, &f) in trace.samples.iter().zip(&self.fractions) {
            let _ = writeln!(out, "{},{},{}", s.t, f, f * trace.pump_watts);
        }
        out
    }
}

pub fn savings_percent(e_baseline: f64, e_adaptive: f64) -> Result<f64> {
    if !(e_baseline > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    if e_adaptive < 0.0 {
        return Err(Error::InvalidTrace("adaptive energy is negative".into()));
    }
    Ok(100.0 * (e_baseline - e_adaptive) / e_baseline)
}

const WS_PER_KWH: f64 = 3.6e6;

pub fn simulate_with(trace: &CutTrace, policy: PumpPolicy) -> Result<Simulation> {
    trace.validate()?;
    let fractions: Vec<f64> = match policy {
        PumpPolicy::AlwaysOn => vec![1.0; trace.samples.len()],
        PumpPolicy::Adaptive { purge_s } => {
            if !(purge_s >= 0.0 && purge_s.is_finite()) {
                return Err(Error::InvalidConfig("purge time must be non-negative".into()));
            }
            let mut state = ControllerState::default();
            trace
                .samples
                .iter()
                .map(|s| {
                    state = step_controller(&state, s, purge_s, trace.dt);
                    state.pump_fraction
                })
                .collect()
        }
    };
    let duration = trace.duration_s();
    let e_b = trace.pump_watts * duration;
    let e_a = trace.pump_watts * trace.dt * fractions.iter().sum::<f64>();
    let report = EnergyReport {
        pump_watts: trace.pump_watts,
        duration_s: duration,
        e_baseline_ws: e_b,
        e_adaptive_ws: e_a,
        e_baseline_kwh: e_b / WS_PER_KWH,
        e_adaptive_kwh: e_a / WS_PER_KWH,
        savings_percent: savings_percent(e_b, e_a)?,
        avg_power_saved_w: (e_b - e_a) / duration,
    };
    Ok(Simulation { report, fractions })
}

pub fn simulate(trace: &CutTrace, purge_s: f64) -> Result<EnergyReport> {
    simulate_with(trace, PumpPolicy::Adaptive { purge_s }).map(|s| s.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(laser_on: bool, material: Option<&str>, smoke: bool) -> CutSample {
        CutSample {
            t: 0.0,
            laser_on,
            material: material.map(str::to_string),
            smoke,
        }
    }

    #[test]
    fn category_lookup() {
        assert_eq!(classify_category("MDF"), MaterialCategory::A);
        assert_eq!(classify_category("Acrylic"), MaterialCategory::B);
        assert_eq!(classify_category("Felt"), MaterialCategory::C);
        assert_eq!(classify_category("  paper "), MaterialCategory::C);
        assert_eq!(classify_category("unobtainium"), MaterialCategory::A);
        assert_eq!(
            [MaterialCategory::A, MaterialCategory::B, MaterialCategory::C].map(MaterialCategory::tier),
            [1.0, 0.75, 0.5]
        );
    }

    #[test]
    fn controller_examples() {
        let idle = ControllerState::default();
        let s = step_controller(&idle, &sample(false, None, false), 0.0, 1.0);
        assert_eq!((s.mode, s.pump_fraction), (Mode::Idle, 0.0));
        let s = step_controller(&idle, &sample(true, Some("Acrylic"), false), 0.0, 1.0);
        assert_eq!((s.mode, s.pump_fraction), (Mode::Cutting(MaterialCategory::B), 0.75));
        let s = step_controller(&idle, &sample(true, Some("Felt"), true), 0.0, 1.0);
        assert_eq!(s.pump_fraction, 1.0);
    }

    #[test]
    fn purge_holds_then_releases() {
        let mut s = ControllerState::default();
        let mut seen = Vec::new();
        for smp in [
            sample(true, Some("felt"), false),
            sample(false, None, false),
            sample(false, None, false),
            sample(false, None, false),
        ] {
            s = step_controller(&s, &smp, 2.0, 1.0);
            seen.push(s.pump_fraction);
        }
        assert_eq!(seen, vec![0.5, 0.5, 0.5, 0.0]);
        assert_eq!(s.mode, Mode::Idle);
    }

    #[test]
    fn smoke_with_laser_off_runs_full() {
        let s = step_controller(&ControllerState::default(), &sample(false, None, true), 0.0, 1.0);
        assert_eq!((s.mode, s.pump_fraction), (Mode::Cutting(MaterialCategory::A), 1.0));
        let after = step_controller(&s, &sample(false, None, false), 0.0, 1.0);
        assert_eq!(after, ControllerState::default());
    }

    #[test]
    fn baseline_identity() {
        let trace = duty_cycle_trace("wood", 0.0, 30_000, 0.1, 750.0);
        let r = simulate(&trace, 0.0).unwrap();
        assert_eq!(r.e_baseline_ws, 2_250_000.0);
        assert_eq!(r.e_baseline_kwh, 0.625);
        assert_eq!(r.e_adaptive_ws, 0.0);
        assert_eq!(r.savings_percent, 100.0);
        let on = simulate_with(&trace, PumpPolicy::AlwaysOn).unwrap().report;
        assert_eq!(on.savings_percent, 0.0);
        assert_eq!(on.e_adaptive_ws, on.e_baseline_ws);
    }

    #[test]
    fn duty_cycle_fixtures() {
        for (material, duty, target) in [("wood", 0.4334, 56.66), ("acrylic", 0.38518, 71.11), ("felt", 0.40460, 79.77)] {
            let trace = duty_cycle_trace(material, duty, 30_000, 0.1, 750.0);
            let r = simulate(&trace, 0.0).unwrap();
            assert!((r.savings_percent - target).abs() <= 0.01, "{material}: {}", r.savings_percent);
        }
    }

    #[test]
    fn savings_formula() {
        assert_eq!(savings_percent(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(savings_percent(100.0, 0.0).unwrap(), 100.0);
        assert!(matches!(savings_percent(0.0, 0.0), Err(Error::ZeroBaseline)));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut trace = duty_cycle_trace("acrylic", 0.3, 10, 0.5, 750.0);
        trace.samples[4].smoke = true;
        trace.laser_power_mw = Some(5.0);
        let back = CutTrace::parse_csv(&trace.to_csv()).unwrap();
        assert_eq!(back, trace);

        let hdr = "# pump_watts=750\n# dt=1\nt,laser_on,material,smoke\n";
        assert!(matches!(CutTrace::parse_csv(hdr), Err(Error::EmptyTrace)));
        assert!(matches!(
            CutTrace::parse_csv(&format!("{hdr}0,1,,0\n")),
            Err(Error::InvalidTrace(_))
        ));
        assert!(matches!(
            CutTrace::parse_csv(&format!("{hdr}0,0,,0\n2,0,,0\n")),
            Err(Error::InvalidTrace(_))
        ));
        assert!(CutTrace::parse_csv("# dt=1\nt,laser_on,material,smoke\n0,0,,0\n").is_err());
    }

    #[test]
    fn power_csv_columns() {
        let trace = duty_cycle_trace("felt", 0.5, 2, 1.0, 100.0);
        let sim = simulate_with(&trace, PumpPolicy::Adaptive { purge_s: 0.0 }).unwrap();
        assert_eq!(sim.power_csv(&trace), "t,pump_fraction,power_w\n0,0,0\n1,0.5,50\n");
    }

    fn trace_strategy() -> impl Strategy<Value = CutTrace> {
        prop::collection::vec((any::<bool>(), 0usize..4, prop::bool::weighted(0.1)), 1..200).prop_map(|rows| {
            let names = ["mdf", "acrylic", "felt", "glass"];
            CutTrace {
                pump_watts: 750.0,
                dt: 0.5,
                laser_power_mw: None,
                samples: rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (on, m, smoke))| CutSample {
                        t: i as f64 * 0.5,
                        laser_on: on,
                        material: on.then(|| names[m].to_string()),
                        smoke,
                    })
                    .collect(),
            }
        })
    }

    proptest! {
        #[test]
        fn single_material_identity(on in 0usize..=400, tier in 0usize..3) {
            let material = ["wood", "acrylic", "felt"][tier];
            let trace = duty_cycle_trace(material, on as f64 / 400.0, 400, 0.25, 750.0);
            let r = simulate(&trace, 0.0).unwrap();
            let expected = 100.0 * (1.0 - classify_category(material).tier() * on as f64 / 400.0);
            prop_assert!((r.savings_percent - expected).abs() < 1e-9);
        }

        #[test]
        fn report_bounds_and_replay(trace in trace_strategy(), purge in 0.0f64..3.0) {
            let a = simulate(&trace, purge).unwrap();
            prop_assert!(a.e_adaptive_ws <= a.e_baseline_ws);
            prop_assert!((0.0..=100.0).contains(&a.savings_percent));
            prop_assert_eq!(a, simulate(&trace, purge).unwrap());
        }

        #[test]
        fn smoke_never_increases_savings(trace in trace_strategy(), at in any::<prop::sample::Index>(), purge in 0.0f64..3.0) {
            let mut smoky = trace.clone();
            let i = at.index(smoky.samples.len());
            smoky.samples[i].smoke = true;
            let base = simulate(&trace, purge).unwrap();
            prop_assert!(simulate(&smoky, purge).unwrap().savings_percent <= base.savings_percent + 1e-9);
        }

        #[test]
        fn higher_tier_never_increases_savings(trace in trace_strategy()) {
            let swap = |from: &str, to: &str| {
                let mut t = trace.clone();
                for s in &mut t.samples {
                    if s.material.as_deref() == Some(from) {
                        s.material = Some(to.to_string());
                    }
                }
                simulate(&t, 0.0).unwrap().savings_percent
            };
            prop_assert!(swap("felt", "acrylic") <= simulate(&trace, 0.0).unwrap().savings_percent + 1e-9);
            prop_assert!(swap("acrylic", "mdf") <= simulate(&trace, 0.0).unwrap().savings_percent + 1e-9);
        }

        #[test]
        fn fraction_zero_iff_idle(trace in trace_strategy(), purge in 0.0f64..3.0) {
            let mut s = ControllerState::default();
            for smp in &trace.samples {
                s = step_controller(&s, smp, purge, trace.dt);
                prop_assert_eq!(s.pump_fraction == 0.0, s.mode == Mode::Idle);
                prop_assert!([0.0, 0.5, 0.75, 1.0].contains(&s.pump_fraction));
            }
        }
    }
}
