use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FlowTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// K independent sigmoids trained with the 1-vs-rest loss.
    Sigmoid1vr,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Input rows (packets); the convolution slides along this axis.
    pub rows: usize,
    /// Input columns (bytes per packet); all columns feed every filter.
    pub cols: usize,
    pub kernel: usize,
    pub channels: usize,
    pub hidden: usize,
    /// K, the number of known classes.
    pub classes: usize,
    pub head: HeadKind,
}

impl Architecture {
    pub fn standard(classes: usize, head: HeadKind) -> Self {
        Architecture {
            rows: FlowTensor::ROWS,
            cols: FlowTensor::COLS,
            kernel: 20,
            channels: 10,
            hidden: 500,
            classes,
            head,
        }
    }

    pub fn positions(&self) -> usize {
        self.rows + 1 - self.kernel
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.channels == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(Error::Config(format!("degenerate architecture {self:?}")));
        }
        if self.kernel == 0 || self.kernel > self.rows {
            return Err(Error::Config(format!(
                "kernel width {} must be in 1..={}",
                self.kernel, self.rows
            )));
        }
        Ok(())
    }

    pub fn conv_len(&self) -> usize {
        self.kernel * self.cols * self.channels
    }

    pub fn num_params(&self) -> usize {
        self.conv_len()
            + self.channels
            + self.hidden * self.channels
            + self.hidden
            + self.classes * self.hidden
            + self.classes
    }
}
