//! The sixteen two-input gate primitives.
//!
//! A gate id is the 4-bit number formed by its truth table read over the
//! input pairs `AB = 00, 01, 10, 11` (first entry is the most significant
//! bit). So `AND` is `0001 = 1` and `NAND` is `1110 = 14`. Ids are the
//! on-disk and command-line contract.

use std::fmt;

use crate::error::{Error, Result};

/// One of the 16 two-input boolean functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateType(u8);

/// Input port of a gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Port {
    A,
    B,
}

impl Port {
    pub fn other(self) -> Port {
        match self {
            Port::A => Port::B,
            Port::B => Port::A,
        }
    }
}

/// How a gate's output probability responds to one input port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dependence {
    /// The formula does not contain the port at all.
    Ignored,
    /// Non-decreasing in the port probability.
    Positive,
    /// Non-increasing in the port probability.
    Negative,
    /// Slope depends on the partner port (XOR, XNOR).
    Nonmonotone,
}

/// Sign an edge contributes to a traversal path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }

    pub fn times(self, other: Sign) -> Sign {
        if self == other {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Result of [`GateType::port_sign`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortSign {
    Ignored,
    Signed(Sign),
}

const NAMES: [&str; 16] = [
    "FALSE",
    "AND",
    "A_AND_NOT_B",
    "A",
    "NOT_A_AND_B",
    "B",
    "XOR",
    "OR",
    "NOR",
    "XNOR",
    "NOT_B",
    "A_OR_NOT_B",
    "NOT_A",
    "NOT_A_OR_B",
    "NAND",
    "TRUE",
];

impl GateType {
    pub const FALSE: GateType = GateType(0);
    pub const AND: GateType = GateType(1);
    pub const A_AND_NOT_B: GateType = GateType(2);
    pub const A: GateType = GateType(3);
    pub const NOT_A_AND_B: GateType = GateType(4);
    pub const B: GateType = GateType(5);
    pub const XOR: GateType = GateType(6);
    pub const OR: GateType = GateType(7);
    pub const NOR: GateType = GateType(8);
    pub const XNOR: GateType = GateType(9);
    pub const NOT_B: GateType = GateType(10);
    pub const A_OR_NOT_B: GateType = GateType(11);
    pub const NOT_A: GateType = GateType(12);
    pub const NOT_A_OR_B: GateType = GateType(13);
    pub const NAND: GateType = GateType(14);
    pub const TRUE: GateType = GateType(15);

    pub const COUNT: usize = 16;

    pub const ALL: [GateType; 16] = {
        let mut all = [GateType(0); 16];
        let mut i = 0;
        while i < 16 {
            all[i] = GateType(i as u8);
            i += 1;
        }
        all
    };

    pub fn from_id(id: u8) -> Result<GateType> {
        if id < 16 {
            Ok(GateType(id))
        } else {
            Err(Error::InvalidGate(id as u64))
        }
    }

    /// Builds a gate from its truth table indexed by `2a + b`.
    pub fn from_truth_table(table: [bool; 4]) -> GateType {
        let id = table
            .iter()
            .fold(0u8, |acc, &bit| (acc << 1) | u8::from(bit));
        GateType(id)
    }

    #[inline]
    pub fn id(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        NAMES[self.0 as usize]
    }

    /// Truth table indexed by `2a + b`.
    pub fn truth_table(self) -> [bool; 4] {
        [0, 1, 2, 3].map(|row| (self.0 >> (3 - row)) & 1 == 1)
    }

    #[inline]
    pub fn eval_hard(self, a: bool, b: bool) -> bool {
        let row = 2 * u8::from(a) + u8::from(b);
        (self.0 >> (3 - row)) & 1 == 1
    }

    /// Evaluates the gate on 64 independent input lanes at once.
    #[inline]
    pub fn eval_word(self, a: u64, b: u64) -> u64 {
        match self.0 {
            0 => 0,
            1 => a & b,
            2 => a & !b,
            3 => a,
            4 => !a & b,
            5 => b,
            6 => a ^ b,
            7 => a | b,
            8 => !(a | b),
            9 => !(a ^ b),
            10 => !b,
            11 => a | !b,
            12 => !a,
            13 => !a | b,
            14 => !(a & b),
            _ => u64::MAX,
        }
    }

    /// Output probability for independent inputs with `P(A) = pa`, `P(B) = pb`.
    pub fn eval_soft(self, pa: f64, pb: f64) -> Result<f64> {
        check_probability(pa)?;
        check_probability(pb)?;
        Ok(self.eval_soft_unchecked(pa, pb))
    }

    /// [`eval_soft`](Self::eval_soft) without the domain check. Inputs outside
    /// `[0, 1]` give the bilinear extension of the formula.
    #[inline]
    pub fn eval_soft_unchecked(self, pa: f64, pb: f64) -> f64 {
        let ab = pa * pb;
        match self.0 {
            0 => 0.0,
            1 => ab,
            2 => pa - ab,
            3 => pa,
            4 => pb - ab,
            5 => pb,
            6 => pa + pb - 2.0 * ab,
            7 => pa + pb - ab,
            8 => 1.0 - (pa + pb - ab),
            9 => 1.0 - (pa + pb - 2.0 * ab),
            10 => 1.0 - pb,
            11 => 1.0 - pb + ab,
            12 => 1.0 - pa,
            13 => 1.0 - pa + ab,
            14 => 1.0 - ab,
            _ => 1.0,
        }
    }

    /// Coefficients `[c0, ca, cb, cab]` with `P(Z) = c0 + ca·pa + cb·pb + cab·pa·pb`.
    pub fn coefficients(self) -> [f64; 4] {
        let [t00, t01, t10, t11] = self.truth_table().map(|bit| f64::from(u8::from(bit)));
        [t00, t10 - t00, t01 - t00, t11 - t10 - t01 + t00]
    }

    /// Partial derivatives `(∂P(Z)/∂pa, ∂P(Z)/∂pb)`.
    #[inline]
    pub fn soft_gradient(self, pa: f64, pb: f64) -> (f64, f64) {
        match self.0 {
            0 | 15 => (0.0, 0.0),
            1 => (pb, pa),
            2 => (1.0 - pb, -pa),
            3 => (1.0, 0.0),
            4 => (-pb, 1.0 - pa),
            5 => (0.0, 1.0),
            6 => (1.0 - 2.0 * pb, 1.0 - 2.0 * pa),
            7 => (1.0 - pb, 1.0 - pa),
            8 => (pb - 1.0, pa - 1.0),
            9 => (2.0 * pb - 1.0, 2.0 * pa - 1.0),
            10 => (0.0, -1.0),
            11 => (pb, pa - 1.0),
            12 => (-1.0, 0.0),
            13 => (pb - 1.0, pa),
            _ => (-pb, -pa),
        }
    }

    /// Monotonicity of the output probability in one port over the unit square.
    pub fn dependence(self, port: Port) -> Dependence {
        let [_, ca, cb, cab] = self.coefficients();
        let (linear, cross) = match port {
            Port::A => (ca, cab),
            Port::B => (cb, cab),
        };
        // Slope in this port ranges over [linear, linear + cross] as the partner moves.
        let lo = linear.min(linear + cross);
        let hi = linear.max(linear + cross);
        if lo == 0.0 && hi == 0.0 {
            Dependence::Ignored
        } else if lo >= 0.0 {
            Dependence::Positive
        } else if hi <= 0.0 {
            Dependence::Negative
        } else {
            Dependence::Nonmonotone
        }
    }

    /// Sign an edge into `port` contributes to a traversal.
    ///
    /// Non-monotone ports take the sign of the local partial evaluated at the
    /// partner's saliency factor; an exact zero slope counts as positive.
    pub fn port_sign(self, port: Port, partner_sf: f64) -> PortSign {
        match self.dependence(port) {
            Dependence::Ignored => PortSign::Ignored,
            Dependence::Positive => PortSign::Signed(Sign::Positive),
            Dependence::Negative => PortSign::Signed(Sign::Negative),
            Dependence::Nonmonotone => {
                let (ga, gb) = match port {
                    Port::A => self.soft_gradient(0.0, partner_sf),
                    Port::B => self.soft_gradient(partner_sf, 0.0),
                };
                let slope = if port == Port::A { ga } else { gb };
                if slope >= 0.0 {
                    PortSign::Signed(Sign::Positive)
                } else {
                    PortSign::Signed(Sign::Negative)
                }
            }
        }
    }

    /// True when the output does not depend on either input.
    pub fn is_constant(self) -> bool {
        self.0 == 0 || self.0 == 15
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u8> for GateType {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        GateType::from_id(id)
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InputDomain(p))
    }
}
