use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Feedforward network: affine layers with ReLU between them and an identity
/// output layer.
///
/// Parameters are stored flat, layer by layer, each layer as its row-major
/// `out x in` weight matrix followed by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Activations cached by [`MlpNet::forward_tape`]: the input followed by the
/// output of every layer (post-ReLU for hidden layers).
#[derive(Debug, Clone)]
pub struct Tape {
    pub activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape always holds the input")
    }
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        acc += w[0] * w[1] + w[1];
        offsets.push(acc);
    }
    offsets
}

impl MlpNet {
    /// All-zero network with the given layer dimensions (input first).
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "layer dims need at least two positive entries, got {dims:?}"
            )));
        }
        let offsets = layer_offsets(dims);
        let params = vec![0.0; *offsets.last().unwrap()];
        Ok(Self { dims: dims.to_vec(), offsets, params })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(Error::LengthMismatch { what: "mlp parameters", left: net.params.len(), right: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("mlp parameters".into()));
        }
        net.params = params;
        Ok(net)
    }

    /// Orthogonal initialization with gain `hidden_gain` on hidden layers and
    /// `output_gain` on the last layer. Biases start at zero.
    pub fn orthogonal<R: Rng + ?Sized>(
        dims: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(n_out, n_in, rng);
            let start = net.offsets[l];
            for (dst, src) in net.params[start..start + n_out * n_in].iter_mut().zip(w) {
                *dst = gain * src;
            }
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix (row-major `out x in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        let start = self.offsets[l];
        let (w, rest) = self.params[start..self.offsets[l + 1]].split_at(n_in * n_out);
        (w, rest)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        let start = self.offsets[l];
        let end = self.offsets[l + 1];
        self.params[start..end].split_at_mut(n_in * n_out)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { what: "mlp input", expected: self.input_dim(), got: input.len() });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            x = self.apply_layer(l, &x);
        }
        Ok(x)
    }

    pub fn forward_tape(&self, input: &[f64]) -> Result<Tape> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.dims.len());
        activations.push(input.to_vec());
        for l in 0..self.num_layers() {
            let next = self.apply_layer(l, activations.last().unwrap());
            activations.push(next);
        }
        Ok(Tape { activations })
    }

    fn apply_layer(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let n_in = x.len();
        let hidden = l + 1 < self.num_layers();
        b.iter()
            .zip(w.chunks_exact(n_in))
            .map(|(bias, row)| {
                let z = bias + dot(row, x);
                if hidden {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }

    /// Reverse-mode pass. Accumulates parameter gradients into `grads`
    /// (same layout as [`MlpNet::params`]) and returns the gradient with
    /// respect to the input, or an empty vector when `want_input` is false.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64], grads: &mut [f64], want_input: bool) -> Result<Vec<f64>> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "mlp output gradient",
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                what: "mlp gradient buffer",
                left: self.params.len(),
                right: grads.len(),
            });
        }
        if tape.activations.len() != self.dims.len()
            || tape.activations.iter().zip(&self.dims).any(|(a, &d)| a.len() != d)
        {
            return Err(Error::InvalidParameter("tape does not match network shape".into()));
        }
        let mut delta = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let x = &tape.activations[l];
            let start = self.offsets[l];
            let (gw, gb) = grads[start..self.offsets[l + 1]].split_at_mut(n_in * n_out);
            for ((d, grow), gbias) in delta.iter().zip(gw.chunks_exact_mut(n_in)).zip(gb) {
                if *d == 0.0 {
                    continue;
                }
                *gbias += d;
                for (g, xi) in grow.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l == 0 && !want_input {
                return Ok(Vec::new());
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; n_in];
            for (d, row) in delta.iter().zip(w.chunks_exact(n_in)) {
                if *d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            if l > 0 {
                for (p, a) in prev.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random `rows x cols` matrix (row-major) with orthonormal columns when
/// `rows >= cols`, otherwise orthonormal rows.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, m) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // m vectors of length n, orthonormalized by modified Gram-Schmidt.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    while basis.len() < m {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-10 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(dims: &[usize], seed: u64) -> MlpNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = MlpNet::zeros(dims).unwrap();
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        net
    }

    // Literal matrix-multiply forward over nested vectors.
    fn oracle_forward(net: &MlpNet, input: &[f64]) -> Vec<f64> {
        let dims = net.dims().to_vec();
        let mut x = input.to_vec();
        for l in 0..dims.len() - 1 {
            let (w, b) = net.layer(l);
            let mut y = vec![0.0; dims[l + 1]];
            for o in 0..dims[l + 1] {
                let mut z = b[o];
                for i in 0..dims[l] {
                    z += w[o * dims[l] + i] * x[i];
                }
                y[o] = if l + 2 < dims.len() {
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                } else {
                    z
                };
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = MlpNet::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut net = MlpNet::zeros(&[3, 3]).unwrap();
        {
            let (w, _) = net.layer_mut(0);
            for i in 0..3 {
                w[i * 3 + i] = 1.0;
            }
        }
        let x = [0.5, -1.5, 2.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_oracle() {
        for seed in 0..10 {
            let net = random_net(&[4, 7, 3], seed);
            let x = [0.3, -0.7, 1.1, 0.05];
            let a = net.forward(&x).unwrap();
            let b = oracle_forward(&net, &x);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn input_dimension_checked() {
        let net = MlpNet::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(MlpNet::zeros(&[3]).is_err());
        assert!(MlpNet::zeros(&[3, 0, 1]).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = random_net(&[3, 4, 2], 3);
        let tape = net.forward_tape(&[0.1, 0.2, 0.3]).unwrap();
        let mut g = vec![0.0; net.num_params()];
        let gi = net.backward(&tape, &[0.0, 0.0], &mut g, true).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        assert!(gi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_net_weight_gradient_is_outer_product() {
        let net = random_net(&[3, 2], 5);
        let x = [0.4, -1.0, 2.0];
        let og = [0.7, -0.3];
        let tape = net.forward_tape(&x).unwrap();
        let mut g = vec![0.0; net.num_params()];
        net.backward(&tape, &og, &mut g, false).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g[o * 3 + i] - og[o] * x[i]).abs() < 1e-15);
            }
            assert!((g[6 + o] - og[o]).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        for seed in 0..100 {
            let dims = [3, 1 + (seed % 5) as usize, 1 + (seed % 3) as usize, 2];
            let net = random_net(&dims, seed);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let og: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |n: &MlpNet, x: &[f64]| dot(&n.forward(x).unwrap(), &og);
            let tape = net.forward_tape(&x).unwrap();
            let mut g = vec![0.0; net.num_params()];
            let gi = net.backward(&tape, &og, &mut g, true).unwrap();
            for (k, &gk) in g.iter().enumerate() {
                let mut plus = net.clone();
                plus.params_mut()[k] += h;
                let mut minus = net.clone();
                minus.params_mut()[k] -= h;
                let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
                assert!(rel_close(gk, fd, 1e-4), "param {k}: {gk} vs {fd}");
                checked += 1;
            }
            for i in 0..3 {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                assert!(rel_close(gi[i], fd, 1e-4));
            }
        }
        assert!(checked > 1000);
    }

    pub(crate) fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn orthogonal_init_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpNet::orthogonal(&[3, 8, 2], 1.0, 1.0, &mut rng).unwrap();
        let (w, b) = net.layer(0);
        assert!(b.iter().all(|&x| x == 0.0));
        for c1 in 0..3 {
            for c2 in 0..3 {
                let d: f64 = (0..8).map(|r| w[r * 3 + c1] * w[r * 3 + c2]).sum();
                let expect = if c1 == c2 { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-9);
            }
        }
        let (w, _) = net.layer(1);
        for r1 in 0..2 {
            for r2 in 0..2 {
                let d: f64 = (0..8).map(|c| w[r1 * 8 + c] * w[r2 * 8 + c]).sum();
                let expect = if r1 == r2 { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-9);
            }
        }
    }
}
