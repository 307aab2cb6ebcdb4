use super::ForecastError;
use crate::sparse::{spmm, transpose_spmm, DenseMatrix, SparseCoo};
use crate::wavelet::WaveletBasis;

/// The wavelet basis as the transforms see it. Both variants accumulate in the
/// same order, so they produce identical results; the dense one exists as a
/// timing control.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisOperator {
    Sparse(SparseCoo),
    Dense(DenseMatrix),
}

impl BasisOperator {
    pub fn sparse(w: &WaveletBasis) -> Self {
        BasisOperator::Sparse(w.basis().clone())
    }

    pub fn dense(w: &WaveletBasis) -> Self {
        BasisOperator::Dense(w.to_dense())
    }

    pub fn dim(&self) -> usize {
        match self {
            BasisOperator::Sparse(s) => s.rows(),
            BasisOperator::Dense(d) => d.rows(),
        }
    }

    /// `Wᵀ x`.
    pub fn analyze(&self, x: &DenseMatrix) -> Result<DenseMatrix, ForecastError> {
        Ok(match self {
            BasisOperator::Sparse(s) => transpose_spmm(s, x)?,
            BasisOperator::Dense(d) => d.transpose_matmul(x)?,
        })
    }

    /// `W c`.
    pub fn synthesize(&self, c: &DenseMatrix) -> Result<DenseMatrix, ForecastError> {
        Ok(match self {
            BasisOperator::Sparse(s) => spmm(s, c)?,
            BasisOperator::Dense(d) => d.matmul(c)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Nonlinearity {
    #[default]
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Sigmoid => sigmoid(x),
            Nonlinearity::Tanh => x.tanh(),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Diagonal spectral filters `g_ij` for every (input, output) channel pair.
/// Stored node-major: `diag[(m·F_in + i)·F_out + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFilter {
    n: usize,
    in_channels: usize,
    out_channels: usize,
    pub(crate) diag: Vec<f64>,
}

impl SpectralFilter {
    pub fn zeros(n: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            n,
            in_channels,
            out_channels,
            diag: vec![0.0; n * in_channels * out_channels],
        }
    }

    pub fn from_fn(
        n: usize,
        in_channels: usize,
        out_channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut g = Self::zeros(n, in_channels, out_channels);
        for m in 0..n {
            for i in 0..in_channels {
                for j in 0..out_channels {
                    g.diag[(m * in_channels + i) * out_channels + j] = f(m, i, j);
                }
            }
        }
        g
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Entry `m` of the diagonal of `g_ij`.
    pub fn get(&self, m: usize, i: usize, j: usize) -> f64 {
        self.diag[(m * self.in_channels + i) * self.out_channels + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.diag
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n, self.in_channels, self.out_channels]
    }
}

fn check_shapes(w: &BasisOperator, input: &DenseMatrix, g: &SpectralFilter) -> Result<(), ForecastError> {
    if input.rows() != w.dim() || g.n != w.dim() || input.cols() != g.in_channels {
        return Err(ForecastError::Shape(format!(
            "wavelet conv: basis {}, input {:?}, filter {:?}",
            w.dim(),
            input.shape(),
            g.shape()
        )));
    }
    Ok(())
}

/// Mixes coefficient channels node by node: `Z[m, j] = Σ_i g_ij[m] C[m, i]`.
pub(crate) fn mix(g: &SpectralFilter, coeffs: &DenseMatrix) -> DenseMatrix {
    let (fin, fout) = (g.in_channels, g.out_channels);
    let mut z = DenseMatrix::zeros(g.n, fout);
    for m in 0..g.n {
        let c = coeffs.row(m);
        let zrow = z.row_mut(m);
        for (i, &ci) in c.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let gi = &g.diag[(m * fin + i) * fout..(m * fin + i + 1) * fout];
            zrow.iter_mut().zip(gi).for_each(|(zj, gij)| *zj += gij * ci);
        }
    }
    z
}

/// Linear part `W Σ_i g_ij ⊙ Wᵀ x_i`, returning the coefficients `Wᵀx` for
/// the backward pass.
pub(crate) fn conv_forward(
    w: &BasisOperator,
    input: &DenseMatrix,
    g: &SpectralFilter,
) -> Result<(DenseMatrix, DenseMatrix), ForecastError> {
    check_shapes(w, input, g)?;
    let coeffs = w.analyze(input)?;
    let out = w.synthesize(&mix(g, &coeffs))?;
    Ok((out, coeffs))
}

/// Gradient of the linear part with respect to the wavelet-domain mixing,
/// given the output gradient already mapped into coefficients (`Wᵀ dOut`).
/// Accumulates `dg` and returns the coefficient-domain input gradient.
pub(crate) fn conv_backward_coeffs(
    g: &SpectralFilter,
    coeffs: &DenseMatrix,
    dz: &DenseMatrix,
    dg: &mut [f64],
) -> DenseMatrix {
    let (fin, fout) = (g.in_channels, g.out_channels);
    let mut dc = DenseMatrix::zeros(g.n, fin);
    for m in 0..g.n {
        let dzrow = dz.row(m);
        let crow = coeffs.row(m);
        let dcrow = dc.row_mut(m);
        for i in 0..fin {
            let base = (m * fin + i) * fout;
            let gi = &g.diag[base..base + fout];
            let dgi = &mut dg[base..base + fout];
            let ci = crow[i];
            let mut acc = 0.0;
            for j in 0..fout {
                dgi[j] += dzrow[j] * ci;
                acc += gi[j] * dzrow[j];
            }
            dcrow[i] = acc;
        }
    }
    dc
}

/// `out[:, j] = σ(W Σ_i g_ij ⊙ Wᵀ input[:, i])`.
pub fn wavelet_conv(
    w: &BasisOperator,
    input: &DenseMatrix,
    filter: &SpectralFilter,
    sigma: Nonlinearity,
) -> Result<DenseMatrix, ForecastError> {
    let (mut out, _) = conv_forward(w, input, filter)?;
    out.as_mut_slice().iter_mut().for_each(|v| *v = sigma.apply(*v));
    Ok(out)
}

/// Diffusion filter: `theta[k][i][j]` weighs `Ã^k x_i` in output channel j.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionFilter {
    steps: usize,
    in_channels: usize,
    out_channels: usize,
    theta: Vec<f64>,
}

impl DiffusionFilter {
    pub fn new(steps: usize, in_channels: usize, out_channels: usize, theta: Vec<f64>) -> Result<Self, ForecastError> {
        if steps == 0 {
            return Err(ForecastError::Config("diffusion filter needs K >= 1".into()));
        }
        if theta.len() != steps * in_channels * out_channels {
            return Err(ForecastError::Shape(format!(
                "{} coefficients for K = {steps}, {in_channels} -> {out_channels} channels",
                theta.len()
            )));
        }
        Ok(Self {
            steps,
            in_channels,
            out_channels,
            theta,
        })
    }

    /// The same K coefficients applied to every channel separately.
    pub fn channelwise(theta: &[f64], channels: usize) -> Result<Self, ForecastError> {
        let k = theta.len();
        let mut full = vec![0.0; k * channels * channels];
        for (s, &t) in theta.iter().enumerate() {
            for c in 0..channels {
                full[(s * channels + c) * channels + c] = t;
            }
        }
        Self::new(k, channels, channels, full)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// `out[:, j] = Σ_i Σ_{k<K} θ_kij Ã^k x_i`, powers applied by repeated
/// multiplication.
pub fn diffusion_conv(
    a_tilde: &DenseMatrix,
    input: &DenseMatrix,
    filter: &DiffusionFilter,
) -> Result<DenseMatrix, ForecastError> {
    let n = input.rows();
    if a_tilde.shape() != (n, n) || input.cols() != filter.in_channels {
        return Err(ForecastError::Shape(format!(
            "diffusion conv: operator {:?}, input {:?}, filter {} -> {}",
            a_tilde.shape(),
            input.shape(),
            filter.in_channels,
            filter.out_channels
        )));
    }
    let (fin, fout) = (filter.in_channels, filter.out_channels);
    let mut out = DenseMatrix::zeros(n, fout);
    let mut power = input.clone();
    for k in 0..filter.steps {
        if k > 0 {
            power = a_tilde.matmul(&power)?;
        }
        for m in 0..n {
            for i in 0..fin {
                let x = power.get(m, i);
                for j in 0..fout {
                    let v = out.get(m, j) + filter.theta[(k * fin + i) * fout + j] * x;
                    out.set(m, j, v);
                }
            }
        }
    }
    Ok(out)
}
