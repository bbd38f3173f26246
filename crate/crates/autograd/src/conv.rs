/// How a convolution reads outside the input plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PaddingMode {
    /// Periodic wrap; makes stride-1 convolutions commute with circular shifts.
    Circular,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub mode: PaddingMode,
}

impl Conv2dSpec {
    /// "Same" padding for an odd kernel with circular wrap.
    pub fn same(kernel: usize) -> Self {
        Self {
            stride: 1,
            padding: kernel / 2,
            mode: PaddingMode::Circular,
        }
    }

    pub fn with_mode(mut self, mode: PaddingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Output extent along one spatial axis, `None` if the kernel does not fit.
    pub fn output_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        if self.stride == 0 || padded < kernel {
            return None;
        }
        Some((padded - kernel) / self.stride + 1)
    }
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self::same(3)
    }
}
