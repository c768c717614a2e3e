use super::gemm::gemm;
use super::Tensor;
use crate::error::{Error, Result};

impl Tensor {
    /// `[M×K] · [K×N] → [M×N]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.dim(1) != other.dim(0) {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let (m, k, n) = (self.dim(0), self.dim(1), other.dim(1));
        let mut out = vec![0.0; m * n];
        gemm(m, n, k, self.data(), false, other.data(), false, &mut out, false);
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op("matmul", out, vec![m, n], vec![self.clone(), other.clone()], move |g, needs| {
            let ga = needs[0].then(|| {
                let mut ga = vec![0.0; m * k];
                gemm(m, k, n, g, false, b.data(), true, &mut ga, false);
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0; k * n];
                gemm(k, n, m, a.data(), true, g, false, &mut gb, false);
                gb
            });
            vec![ga, gb]
        }))
    }

    /// Batched product `[B,M,K] · [B,K,N] → [B,M,N]`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 3 || other.rank() != 3 || self.dim(0) != other.dim(0) || self.dim(2) != other.dim(1) {
            return Err(Error::shape("bmm", self.shape(), other.shape()));
        }
        let (bs, m, k, n) = (self.dim(0), self.dim(1), self.dim(2), other.dim(2));
        let mut out = vec![0.0; bs * m * n];
        for b in 0..bs {
            gemm(
                m,
                n,
                k,
                &self.data()[b * m * k..(b + 1) * m * k],
                false,
                &other.data()[b * k * n..(b + 1) * k * n],
                false,
                &mut out[b * m * n..(b + 1) * m * n],
                false,
            );
        }
        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op("bmm", out, vec![bs, m, n], vec![self.clone(), other.clone()], move |g, needs| {
            let ga = needs[0].then(|| {
                let mut ga = vec![0.0; bs * m * k];
                for b in 0..bs {
                    gemm(
                        m,
                        k,
                        n,
                        &g[b * m * n..(b + 1) * m * n],
                        false,
                        &rhs.data()[b * k * n..(b + 1) * k * n],
                        true,
                        &mut ga[b * m * k..(b + 1) * m * k],
                        false,
                    );
                }
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0; bs * k * n];
                for b in 0..bs {
                    gemm(
                        k,
                        n,
                        m,
                        &lhs.data()[b * m * k..(b + 1) * m * k],
                        true,
                        &g[b * m * n..(b + 1) * m * n],
                        false,
                        &mut gb[b * k * n..(b + 1) * k * n],
                        false,
                    );
                }
                gb
            });
            vec![ga, gb]
        }))
    }
}
