//! Number formatting shared by every file format the crate writes.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::Result;

/// Seventeen significant digits: enough to reproduce any `f64` exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct SigDigits<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for SigDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// Pretty JSON with every float written to 17 significant digits.
/// Non-finite floats serialize as `null`, so callers check finiteness first.
pub(crate) fn to_json(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip_exactly() {
        let xs = vec![0.1, -1.0 / 3.0, 6.02e23, 5e-324, f64::MAX, 0.0, -0.0];
        let text = to_json(&xs).unwrap();
        assert!(String::from_utf8_lossy(&text).contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_slice(&text).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
