use super::conv::{conv_backward_coeffs, conv_forward, mix, sigmoid, BasisOperator, SpectralFilter};
use super::ForecastError;
use crate::sparse::DenseMatrix;
use rand::Rng;

/// Parameters of one wavelet-convolutional GRU cell. Each gate has its own
/// spectral filter over the concatenated `[input, state]` channels and a bias
/// per hidden channel.
#[derive(Clone, Debug, PartialEq)]
pub struct WcGruParams {
    pub(crate) input_dim: usize,
    pub(crate) hidden: usize,
    pub(crate) reset: SpectralFilter,
    pub(crate) update: SpectralFilter,
    pub(crate) candidate: SpectralFilter,
    pub(crate) b_reset: Vec<f64>,
    pub(crate) b_update: Vec<f64>,
    pub(crate) b_candidate: Vec<f64>,
}

impl WcGruParams {
    pub fn zeros(n: usize, input_dim: usize, hidden: usize) -> Self {
        let f = input_dim + hidden;
        Self {
            input_dim,
            hidden,
            reset: SpectralFilter::zeros(n, f, hidden),
            update: SpectralFilter::zeros(n, f, hidden),
            candidate: SpectralFilter::zeros(n, f, hidden),
            b_reset: vec![0.0; hidden],
            b_update: vec![0.0; hidden],
            b_candidate: vec![0.0; hidden],
        }
    }

    /// Uniform in `±1/√fan_in` with `fan_in = input_dim + hidden`.
    pub fn random<R: Rng>(n: usize, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n, input_dim, hidden);
        let bound = 1.0 / ((input_dim + hidden) as f64).sqrt();
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dim(&self) -> usize {
        self.reset.dim()
    }

    pub fn filters(&self) -> [&SpectralFilter; 3] {
        [&self.reset, &self.update, &self.candidate]
    }

    pub fn biases(&self) -> [&[f64]; 3] {
        [&self.b_reset, &self.b_update, &self.b_candidate]
    }

    pub fn set_biases(&mut self, reset: f64, update: f64, candidate: f64) {
        self.b_reset.fill(reset);
        self.b_update.fill(update);
        self.b_candidate.fill(candidate);
    }

    /// Named tensors with their shapes, in a fixed order.
    pub(crate) fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let fs = |g: &SpectralFilter| g.shape().to_vec();
        vec![
            ("reset.filter", fs(&self.reset), &self.reset.diag[..]),
            ("update.filter", fs(&self.update), &self.update.diag[..]),
            ("candidate.filter", fs(&self.candidate), &self.candidate.diag[..]),
            ("reset.bias", vec![self.hidden], &self.b_reset[..]),
            ("update.bias", vec![self.hidden], &self.b_update[..]),
            ("candidate.bias", vec![self.hidden], &self.b_candidate[..]),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.reset.diag,
            &mut self.update.diag,
            &mut self.candidate.diag,
            &mut self.b_reset,
            &mut self.b_update,
            &mut self.b_candidate,
        ]
    }
}

pub(crate) struct CellCache {
    h_prev: DenseMatrix,
    coeffs_xh: DenseMatrix,
    coeffs_xrh: DenseMatrix,
    reset: DenseMatrix,
    update: DenseMatrix,
    candidate: DenseMatrix,
}

fn hcat(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ca, cb) = (a.cols(), b.cols());
    let mut out = DenseMatrix::zeros(a.rows(), ca + cb);
    for m in 0..a.rows() {
        let row = out.row_mut(m);
        row[..ca].copy_from_slice(a.row(m));
        row[ca..].copy_from_slice(b.row(m));
    }
    out
}

fn add_bias_apply(z: &mut DenseMatrix, bias: &[f64], f: fn(f64) -> f64) {
    for m in 0..z.rows() {
        z.row_mut(m).iter_mut().zip(bias).for_each(|(v, b)| *v = f(*v + b));
    }
}

fn check(params: &WcGruParams, basis: &BasisOperator, x: &DenseMatrix, h: &DenseMatrix) -> Result<(), ForecastError> {
    let n = basis.dim();
    if params.dim() != n
        || x.shape() != (n, params.input_dim)
        || h.shape() != (n, params.hidden)
    {
        return Err(ForecastError::Shape(format!(
            "wcgru step: basis {n}, cell {}x({} + {}), input {:?}, state {:?}",
            params.dim(),
            params.input_dim,
            params.hidden,
            x.shape(),
            h.shape()
        )));
    }
    Ok(())
}

pub(crate) fn step_cached(
    params: &WcGruParams,
    basis: &BasisOperator,
    x: &DenseMatrix,
    h_prev: &DenseMatrix,
) -> Result<(DenseMatrix, CellCache), ForecastError> {
    check(params, basis, x, h_prev)?;
    let xh = hcat(x, h_prev);
    let coeffs_xh = basis.analyze(&xh)?;
    let mut reset = basis.synthesize(&mix(&params.reset, &coeffs_xh))?;
    add_bias_apply(&mut reset, &params.b_reset, sigmoid);
    let mut update = basis.synthesize(&mix(&params.update, &coeffs_xh))?;
    add_bias_apply(&mut update, &params.b_update, sigmoid);

    let mut rh = h_prev.clone();
    rh.as_mut_slice()
        .iter_mut()
        .zip(reset.as_slice())
        .for_each(|(v, r)| *v *= r);
    let (mut candidate, coeffs_xrh) = conv_forward(basis, &hcat(x, &rh), &params.candidate)?;
    add_bias_apply(&mut candidate, &params.b_candidate, f64::tanh);

    let mut h = DenseMatrix::zeros(h_prev.rows(), h_prev.cols());
    for (((o, &hp), &u), &c) in h
        .as_mut_slice()
        .iter_mut()
        .zip(h_prev.as_slice())
        .zip(update.as_slice())
        .zip(candidate.as_slice())
    {
        *o = u * hp + (1.0 - u) * c;
    }
    let cache = CellCache {
        h_prev: h_prev.clone(),
        coeffs_xh,
        coeffs_xrh,
        reset,
        update,
        candidate,
    };
    Ok((h, cache))
}

/// One recurrent step: returns the new state `h_t`.
pub fn wcgru_step(
    params: &WcGruParams,
    basis: &BasisOperator,
    x: &DenseMatrix,
    h_prev: &DenseMatrix,
) -> Result<DenseMatrix, ForecastError> {
    step_cached(params, basis, x, h_prev).map(|(h, _)| h)
}

fn column_sums_into(m: &DenseMatrix, acc: &mut [f64]) {
    for r in 0..m.rows() {
        acc.iter_mut().zip(m.row(r)).for_each(|(a, v)| *a += v);
    }
}

/// Reverse pass of one step. Accumulates parameter gradients into `grads`
/// and returns `(d input, d h_prev)`.
pub(crate) fn step_backward(
    params: &WcGruParams,
    basis: &BasisOperator,
    cache: &CellCache,
    dh: &DenseMatrix,
    grads: &mut WcGruParams,
) -> Result<(DenseMatrix, DenseMatrix), ForecastError> {
    let (n, hd, d) = (dh.rows(), params.hidden, params.input_dim);
    let len = n * hd;
    let (hp, r, u, c) = (
        cache.h_prev.as_slice(),
        cache.reset.as_slice(),
        cache.update.as_slice(),
        cache.candidate.as_slice(),
    );
    let dhs = dh.as_slice();

    let mut dzu = DenseMatrix::zeros(n, hd);
    let mut dzc = DenseMatrix::zeros(n, hd);
    let mut dh_prev = DenseMatrix::zeros(n, hd);
    {
        let (dzu_s, dzc_s, dhp) = (dzu.as_mut_slice(), dzc.as_mut_slice(), dh_prev.as_mut_slice());
        for e in 0..len {
            let du = dhs[e] * (hp[e] - c[e]);
            dzu_s[e] = du * u[e] * (1.0 - u[e]);
            dzc_s[e] = dhs[e] * (1.0 - u[e]) * (1.0 - c[e] * c[e]);
            dhp[e] = dhs[e] * u[e];
        }
    }
    column_sums_into(&dzc, &mut grads.b_candidate);
    column_sums_into(&dzu, &mut grads.b_update);

    let dz_c = basis.analyze(&dzc)?;
    let dcoef_c = conv_backward_coeffs(&params.candidate, &cache.coeffs_xrh, &dz_c, &mut grads.candidate.diag);
    let dxrh = basis.synthesize(&dcoef_c)?;

    let mut dx = DenseMatrix::zeros(n, d);
    let mut dzr = DenseMatrix::zeros(n, hd);
    for m in 0..n {
        let row = dxrh.row(m);
        dx.row_mut(m).copy_from_slice(&row[..d]);
        for j in 0..hd {
            let e = m * hd + j;
            let drh = row[d + j];
            dh_prev.as_mut_slice()[e] += drh * r[e];
            dzr.as_mut_slice()[e] = drh * hp[e] * r[e] * (1.0 - r[e]);
        }
    }
    column_sums_into(&dzr, &mut grads.b_reset);

    let dz_r = basis.analyze(&dzr)?;
    let dz_u = basis.analyze(&dzu)?;
    let mut dcoef = conv_backward_coeffs(&params.reset, &cache.coeffs_xh, &dz_r, &mut grads.reset.diag);
    let dcoef_u = conv_backward_coeffs(&params.update, &cache.coeffs_xh, &dz_u, &mut grads.update.diag);
    dcoef
        .as_mut_slice()
        .iter_mut()
        .zip(dcoef_u.as_slice())
        .for_each(|(a, b)| *a += b);
    let dxh = basis.synthesize(&dcoef)?;
    for m in 0..n {
        let row = dxh.row(m);
        dx.row_mut(m).iter_mut().zip(&row[..d]).for_each(|(a, b)| *a += b);
        dh_prev.row_mut(m).iter_mut().zip(&row[d..]).for_each(|(a, b)| *a += b);
    }
    Ok((dx, dh_prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::mmf::{factorize, FactorizeConfig};
    use crate::sparse::SymmetricMatrix;
    use crate::wavelet::extract_basis;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(n: usize, seed: u64) -> (BasisOperator, DenseMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = SymmetricMatrix::symmetrized(&DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
        let w = extract_basis(&factorize(&a, &FactorizeConfig::new(n / 2, 2)).unwrap(), 0.0).unwrap();
        (BasisOperator::sparse(&w), w.to_dense())
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_cell_halves_state() {
        let (w, _) = basis(6, 1);
        let p = WcGruParams::zeros(6, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random(&mut rng, 6, 3);
        let out = wcgru_step(&p, &w, &random(&mut rng, 6, 2), &h).unwrap();
        assert_eq!(out, h.scale(0.5));
    }

    #[test]
    fn saturated_update_gate_keeps_state() {
        let (w, _) = basis(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = WcGruParams::random(6, 1, 4, &mut rng);
        p.b_update.fill(40.0);
        let h = random(&mut rng, 6, 4);
        let out = wcgru_step(&p, &w, &random(&mut rng, 6, 1), &h).unwrap();
        assert!(out.sub(&h).unwrap().max_abs() <= 1e-6);
    }

    /// Straight-line recomputation with explicit dense matrices.
    fn oracle(p: &WcGruParams, w: &DenseMatrix, x: &DenseMatrix, h: &DenseMatrix) -> DenseMatrix {
        let n = w.rows();
        let conv = |g: &SpectralFilter, input: &DenseMatrix, j: usize| -> Vec<f64> {
            let mut acc = vec![0.0; n];
            for i in 0..input.cols() {
                for a in 0..n {
                    for m in 0..n {
                        let mut coef = 0.0;
                        for b in 0..n {
                            coef += w.get(b, m) * input.get(b, i);
                        }
                        acc[a] += w.get(a, m) * g.get(m, i, j) * coef;
                    }
                }
            }
            acc
        };
        let (d, hd) = (x.cols(), h.cols());
        let xh = DenseMatrix::from_fn(n, d + hd, |m, c| if c < d { x.get(m, c) } else { h.get(m, c - d) });
        let mut r = DenseMatrix::zeros(n, hd);
        let mut u = DenseMatrix::zeros(n, hd);
        for j in 0..hd {
            let zr = conv(&p.reset, &xh, j);
            let zu = conv(&p.update, &xh, j);
            for m in 0..n {
                r.set(m, j, 1.0 / (1.0 + (-(zr[m] + p.b_reset[j])).exp()));
                u.set(m, j, 1.0 / (1.0 + (-(zu[m] + p.b_update[j])).exp()));
            }
        }
        let xrh = DenseMatrix::from_fn(n, d + hd, |m, c| {
            if c < d {
                x.get(m, c)
            } else {
                r.get(m, c - d) * h.get(m, c - d)
            }
        });
        let mut out = DenseMatrix::zeros(n, hd);
        for j in 0..hd {
            let zc = conv(&p.candidate, &xrh, j);
            for m in 0..n {
                let c = (zc[m] + p.b_candidate[j]).tanh();
                let uu = u.get(m, j);
                out.set(m, j, uu * h.get(m, j) + (1.0 - uu) * c);
            }
        }
        out
    }

    #[test]
    fn matches_dense_recomputation() {
        let (w, wd) = basis(6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = WcGruParams::random(6, 2, 4, &mut rng);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= 3.0);
        }
        let x = random(&mut rng, 6, 2);
        let h = random(&mut rng, 6, 4);
        let got = wcgru_step(&p, &w, &x, &h).unwrap();
        assert!(got.sub(&oracle(&p, &wd, &x, &h)).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        let (w, _) = basis(6, 7);
        let p = WcGruParams::zeros(6, 1, 2);
        assert!(wcgru_step(&p, &w, &DenseMatrix::zeros(6, 2), &DenseMatrix::zeros(6, 2)).is_err());
        assert!(wcgru_step(&p, &w, &DenseMatrix::zeros(6, 1), &DenseMatrix::zeros(6, 3)).is_err());
    }

    /// Scalar probe `Σ dh ⊙ h_t` for finite differences.
    fn probe(p: &WcGruParams, w: &BasisOperator, x: &DenseMatrix, h: &DenseMatrix, dh: &DenseMatrix) -> f64 {
        let out = wcgru_step(p, w, x, h).unwrap();
        out.as_slice().iter().zip(dh.as_slice()).map(|(a, b)| a * b).sum()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (w, _) = basis(6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = WcGruParams::random(6, 2, 3, &mut rng);
        let x = random(&mut rng, 6, 2);
        let h = random(&mut rng, 6, 3);
        let dh = random(&mut rng, 6, 3);
        let (_, cache) = step_cached(&p, &w, &x, &h).unwrap();
        let mut grads = WcGruParams::zeros(6, 2, 3);
        let (dx, dhp) = step_backward(&p, &w, &cache, &dh, &mut grads).unwrap();
        let eps = 1e-5;
        let mut q = p.clone();
        let analytic: Vec<Vec<f64>> = grads.tensors_mut().iter().map(|t| t.to_vec()).collect();
        for (ti, ga) in analytic.iter().enumerate() {
            for e in 0..ga.len() {
                let orig = q.tensors_mut()[ti][e];
                q.tensors_mut()[ti][e] = orig + eps;
                let up = probe(&q, &w, &x, &h, &dh);
                q.tensors_mut()[ti][e] = orig - eps;
                let down = probe(&q, &w, &x, &h, &dh);
                q.tensors_mut()[ti][e] = orig;
                let fd = (up - down) / (2.0 * eps);
                assert!(rel(ga[e], fd) <= 1e-6, "tensor {ti} entry {e}: {} vs {fd}", ga[e]);
            }
        }
        for (input, grad, is_x) in [(&x, &dx, true), (&h, &dhp, false)] {
            for e in 0..input.as_slice().len() {
                let mut plus = input.clone();
                plus.as_mut_slice()[e] += eps;
                let mut minus = input.clone();
                minus.as_mut_slice()[e] -= eps;
                let fd = if is_x {
                    (probe(&p, &w, &plus, &h, &dh) - probe(&p, &w, &minus, &h, &dh)) / (2.0 * eps)
                } else {
                    (probe(&p, &w, &x, &plus, &dh) - probe(&p, &w, &x, &minus, &dh)) / (2.0 * eps)
                };
                assert!(rel(grad.as_slice()[e], fd) <= 1e-6);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn state_stays_in_hull(seed in any::<u64>(), scale in 0.1f64..5.0) {
            let (w, _) = basis(6, 10);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = WcGruParams::random(6, 1, 3, &mut rng);
            for t in p.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= scale);
            }
            let x = random(&mut rng, 6, 1).scale(scale);
            let h = random(&mut rng, 6, 3).scale(2.0 * scale);
            let out = wcgru_step(&p, &w, &x, &h).unwrap();
            for (o, hp) in out.as_slice().iter().zip(h.as_slice()) {
                prop_assert!(o.abs() <= hp.abs().max(1.0) + 1e-12);
            }
        }
    }
}
