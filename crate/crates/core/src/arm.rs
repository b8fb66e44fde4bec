//! Treatment arms and pairwise contrasts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// Number of treatment arms (sport-frequency levels).
pub const N_ARMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Never = 0,
    Rarely = 1,
    Monthly = 2,
    Weekly = 3,
}

impl Arm {
    pub const ALL: [Arm; N_ARMS] = [Arm::Never, Arm::Rarely, Arm::Monthly, Arm::Weekly];

    pub fn from_code(code: usize) -> Result<Self> {
        Arm::ALL
            .get(code)
            .copied()
            .ok_or_else(|| invalid_arg!("arm code {code} out of range 0..{}", N_ARMS - 1))
    }

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Never => "never",
            Arm::Rarely => "rarely",
            Arm::Monthly => "monthly",
            Arm::Weekly => "weekly",
        }
    }

    /// Capitalized label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Arm::Never => "Never",
            Arm::Rarely => "Rarely",
            Arm::Monthly => "Monthly",
            Arm::Weekly => "Weekly",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Effect of arm `treated` relative to arm `control`: E[Y^treated - Y^control].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Contrast {
    pub treated: usize,
    pub control: usize,
}

impl Contrast {
    pub fn new(treated: usize, control: usize) -> Result<Self> {
        if treated >= N_ARMS || control >= N_ARMS {
            return Err(invalid_arg!(
                "contrast ({treated},{control}) has an arm outside 0..{}",
                N_ARMS - 1
            ));
        }
        if treated == control {
            return Err(invalid_arg!("contrast of arm {treated} with itself"));
        }
        Ok(Contrast { treated, control })
    }

    /// The lower-triangle contrasts (m > l) in row-major table order.
    pub fn lower_triangle() -> Vec<Contrast> {
        let mut out = Vec::with_capacity(N_ARMS * (N_ARMS - 1) / 2);
        for m in 1..N_ARMS {
            for l in 0..m {
                out.push(Contrast { treated: m, control: l });
            }
        }
        out
    }

    pub fn weekly_vs_never() -> Contrast {
        Contrast {
            treated: Arm::Weekly.code(),
            control: Arm::Never.code(),
        }
    }

    pub fn reversed(self) -> Contrast {
        Contrast {
            treated: self.control,
            control: self.treated,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{} vs {}",
            Arm::ALL[self.treated].name(),
            Arm::ALL[self.control].name()
        )
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_triangle_order() {
        let c = Contrast::lower_triangle();
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], Contrast { treated: 1, control: 0 });
        assert_eq!(c[5], Contrast { treated: 3, control: 2 });
    }

    #[test]
    fn self_contrast_rejected() {
        assert!(Contrast::new(2, 2).is_err());
        assert!(Contrast::new(4, 0).is_err());
    }
}
