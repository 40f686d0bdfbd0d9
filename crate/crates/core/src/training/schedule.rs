use serde::{Deserialize, Serialize};

/// Piecewise-constant learning-rate schedules, indexed by 0-based epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// `base × factor^(number of breakpoints ≤ epoch)`.
    Step {
        base: f64,
        breakpoints: Vec<usize>,
        factor: f64,
    },
    /// One decay every `every` epochs, never below `floor`.
    Periodic {
        base: f64,
        every: usize,
        rule: DecayRule,
        floor: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRule {
    Multiply(f64),
    Subtract(f64),
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self::Step {
            base,
            breakpoints: Vec::new(),
            factor: 1.0,
        }
    }

    pub fn step(base: f64, breakpoints: &[usize], factor: f64) -> Self {
        Self::Step {
            base,
            breakpoints: breakpoints.to_vec(),
            factor,
        }
    }

    /// Hyperbolic pre-training default: ×0.1 every 100 epochs from 0.01, floored at 1e-4.
    pub fn hyperbolic_default() -> Self {
        Self::Periodic {
            base: 0.01,
            every: 100,
            rule: DecayRule::Multiply(0.1),
            floor: 1e-4,
        }
    }

    /// The literal reading: subtract 0.01 every 100 epochs, floored at 1e-4.
    pub fn hyperbolic_subtractive() -> Self {
        Self::Periodic {
            base: 0.01,
            every: 100,
            rule: DecayRule::Subtract(0.01),
            floor: 1e-4,
        }
    }

    pub fn base(&self) -> f64 {
        match self {
            Self::Step { base, .. } | Self::Periodic { base, .. } => *base,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self {
            Self::Step {
                base,
                breakpoints,
                factor,
            } => {
                let passed = breakpoints.iter().filter(|&&b| epoch >= b).count();
                base * factor.powi(passed as i32)
            }
            Self::Periodic {
                base,
                every,
                rule,
                floor,
            } => {
                let steps = if *every == 0 { 0 } else { epoch / every };
                let lr = match rule {
                    DecayRule::Multiply(f) => base * f.powi(steps as i32),
                    DecayRule::Subtract(d) => base - d * steps as f64,
                };
                lr.max(*floor)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule_breakpoints() {
        let s = LrSchedule::step(0.01, &[100, 500], 0.1);
        assert_eq!(s.lr_at(0), 0.01);
        assert_eq!(s.lr_at(99), 0.01);
        assert!((s.lr_at(100) - 0.001).abs() < 1e-18);
        assert!((s.lr_at(499) - 0.001).abs() < 1e-18);
        assert!((s.lr_at(500) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn empty_schedule_is_constant() {
        let s = LrSchedule::constant(0.03);
        assert!((0..1000).step_by(37).all(|e| s.lr_at(e) == 0.03));
    }

    #[test]
    fn hyperbolic_rules() {
        let mult = LrSchedule::hyperbolic_default();
        let sub = LrSchedule::hyperbolic_subtractive();
        assert_eq!(mult.lr_at(99), 0.01);
        assert!((mult.lr_at(150) - 1e-3).abs() < 1e-18);
        assert!((mult.lr_at(250) - 1e-4).abs() < 1e-18);
        assert!((mult.lr_at(499) - 1e-4).abs() < 1e-18);
        assert_eq!(sub.lr_at(99), 0.01);
        // 0.01 - 0.01 hits zero at epoch 100; the floor takes over.
        assert_eq!(sub.lr_at(100), 1e-4);
        assert_eq!(sub.lr_at(250), 1e-4);
    }

    #[test]
    fn serde_shape() {
        let s = LrSchedule::step(0.01, &[20, 35, 100], 0.1);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"step","base":0.01,"breakpoints":[20,35,100],"factor":0.1}"#);
        let back: LrSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let p: LrSchedule =
            serde_json::from_str(r#"{"kind":"periodic","base":0.01,"every":100,"rule":{"subtract":0.01},"floor":0.0001}"#)
                .unwrap();
        assert_eq!(p, LrSchedule::hyperbolic_subtractive());
    }
}
