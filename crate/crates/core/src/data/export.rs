//! CSV dumps of `C×T×V` tensors: one row per `(channel, frame)`, one
//! column per joint.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::io::{format_sig9, write_atomic};
use crate::tensor::Tensor;

/// Header `channel,t,v0,...`, then a row per channel and frame.
pub fn feature_csv(x: &Tensor) -> Result<String> {
    let (c, t, v) = x.dims3()?;
    let mut s = String::from("channel,t");
    for j in 0..v {
        write!(s, ",v{j}").expect("writing to a String");
    }
    s.push('\n');
    for ch in 0..c {
        for tt in 0..t {
            write!(s, "{ch},{tt}").expect("writing to a String");
            for j in 0..v {
                write!(s, ",{}", format_sig9(x.at3(ch, tt, j))).expect("writing to a String");
            }
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn write_feature_csv(path: impl AsRef<Path>, x: &Tensor) -> Result<()> {
    write_atomic(path.as_ref(), feature_csv(x)?.as_bytes())
}
