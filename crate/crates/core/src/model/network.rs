use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{contract, Result};
use crate::lightstage::ViewSpec;
use crate::netcore::{
    normalize_rows, normalize_rows_backward, DenseLayer, LeakyRelu, Matrix, Parameterized, Real, RowNormalization,
    TensorMut, TensorRef,
};

use super::config::{BranchConfig, Mode, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Which {
    Sensitive,
    Insensitive,
}

impl Which {
    pub fn as_str(self) -> &'static str {
        match self {
            Which::Sensitive => "sensitive",
            Which::Insensitive => "insensitive",
        }
    }
}

/// Parameters of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    /// `M × L` lighting patterns; absent in point-light mode.
    pub pattern: Option<Matrix<T>>,
    pub layers: Vec<DenseLayer<T>>,
}

/// What a branch consumes.
#[derive(Debug)]
pub enum BranchInput<'a, T> {
    /// Full lumitexels (or point-light vectors), projected by the pattern layer.
    Lumitexels(&'a Matrix<T>),
    /// Measurements already taken with the branch's patterns.
    Measurements(&'a Matrix<T>),
}

/// What the network consumes.
#[derive(Debug)]
pub enum NetInput<'a, T> {
    Lumitexels(&'a Matrix<T>),
    Measurements {
        sensitive: &'a Matrix<T>,
        insensitive: &'a Matrix<T>,
    },
}

impl<T> Clone for BranchInput<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for BranchInput<'_, T> {}

impl<T> Clone for NetInput<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for NetInput<'_, T> {}

impl<'a, T> NetInput<'a, T> {
    fn for_branch(&self, which: Which) -> BranchInput<'a, T> {
        match (*self, which) {
            (NetInput::Lumitexels(x), _) => BranchInput::Lumitexels(x),
            (NetInput::Measurements { sensitive, .. }, Which::Sensitive) => BranchInput::Measurements(sensitive),
            (NetInput::Measurements { insensitive, .. }, Which::Insensitive) => BranchInput::Measurements(insensitive),
        }
    }
}

/// Multiplicative measurement noise factors, one matrix per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise<T> {
    pub sensitive: Matrix<T>,
    pub insensitive: Matrix<T>,
}

impl<T> Noise<T> {
    fn for_branch(&self, which: Which) -> &Matrix<T> {
        match which {
            Which::Sensitive => &self.sensitive,
            Which::Insensitive => &self.insensitive,
        }
    }
}

/// Intermediate values of a branch forward pass.
#[derive(Debug, Clone)]
pub struct BranchTrace<T> {
    /// Noise-free measurements.
    pub measurements: Matrix<T>,
    noise: Option<Matrix<T>>,
    input_norm: Option<RowNormalization<T>>,
    layer_inputs: Vec<Matrix<T>>,
    pre_activations: Vec<Matrix<T>>,
    output: RowNormalization<T>,
}

impl<T: Real> BranchTrace<T> {
    /// Unit-length branch features, one row per sample.
    pub fn features(&self) -> &Matrix<T> {
        &self.output.output
    }

    /// Per-sample validity: false where either normalization fell back.
    pub fn valid(&self) -> Vec<bool> {
        (0..self.output.valid.len())
            .map(|i| self.output.valid[i] && self.input_norm.as_ref().is_none_or(|n| n.valid[i]))
            .collect()
    }

    /// Smallest |pre-activation| over all rectified units, useful to keep
    /// finite-difference probes away from kinks.
    pub fn activation_margin(&self) -> f64 {
        let n = self.pre_activations.len();
        self.pre_activations[..n.saturating_sub(1)]
            .iter()
            .flat_map(|z| z.as_slice().iter())
            .map(|v| v.abs().to_f64_lossy())
            .fold(f64::INFINITY, f64::min)
    }
}

impl<T: Real> Branch<T> {
    fn forward(
        &self,
        cfg: &BranchConfig,
        act: LeakyRelu,
        input: BranchInput<'_, T>,
        views: &Matrix<T>,
        noise: Option<&Matrix<T>>,
    ) -> Result<BranchTrace<T>> {
        let measurements = match input {
            BranchInput::Lumitexels(x) => match &self.pattern {
                Some(p) => {
                    if x.cols() != p.cols() {
                        return Err(contract(format!(
                            "pattern layer expects length-{} lumitexels, got {}",
                            p.cols(),
                            x.cols()
                        )));
                    }
                    // Signed patterns cancel over long lumitexels; accumulating
                    // in f32 would cost the insensitive branch its scale invariance.
                    x.cast::<f64>().matmul_nt(&p.cast::<f64>())?.cast::<T>()
                }
                None => x.clone(),
            },
            BranchInput::Measurements(m) => m.clone(),
        };
        if measurements.cols() != cfg.measurements {
            return Err(contract(format!(
                "branch expects {} measurements, got {}",
                cfg.measurements,
                measurements.cols()
            )));
        }
        if views.rows() != measurements.rows() || views.cols() != 2 {
            return Err(contract(format!(
                "view encoding must be {}×2, got {:?}",
                measurements.rows(),
                views.shape()
            )));
        }
        let noisy = match noise {
            Some(n) => {
                if n.shape() != measurements.shape() {
                    return Err(contract("noise shape differs from measurements"));
                }
                let mut m = measurements.clone();
                for (v, f) in m.as_mut_slice().iter_mut().zip(n.as_slice()) {
                    *v = *v * *f;
                }
                m
            }
            None => measurements.clone(),
        };
        let (mut h, input_norm) = if cfg.normalize_measurements {
            let n = normalize_rows(&noisy);
            (n.output.clone(), Some(n))
        } else {
            (noisy, None)
        };

        let count = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(count);
        let mut pre_activations = Vec::with_capacity(count);
        for (j, layer) in self.layers.iter().enumerate() {
            let inp = if j == cfg.view_injection { h.hconcat(views)? } else { h };
            let z = layer.forward(&inp)?;
            h = if j + 1 < count { act.forward(&z) } else { z.clone() };
            layer_inputs.push(inp);
            pre_activations.push(z);
        }
        let output = normalize_rows(&h);
        Ok(BranchTrace {
            measurements,
            noise: noise.cloned(),
            input_norm,
            layer_inputs,
            pre_activations,
            output,
        })
    }

    fn backward(
        &self,
        cfg: &BranchConfig,
        act: LeakyRelu,
        trace: &BranchTrace<T>,
        dfeat: &Matrix<T>,
        input: BranchInput<'_, T>,
    ) -> Result<Branch<T>> {
        let count = self.layers.len();
        let mut dh = normalize_rows_backward(&trace.output, dfeat);
        let mut grads = Vec::with_capacity(count);
        for j in (0..count).rev() {
            let dz = if j + 1 < count {
                act.backward(&trace.pre_activations[j], &dh)
            } else {
                dh
            };
            let (dx, g) = self.layers[j].backward(&trace.layer_inputs[j], &dz)?;
            grads.push(g);
            dh = if j == cfg.view_injection {
                dx.hsplit(dx.cols() - 2).0
            } else {
                dx
            };
        }
        grads.reverse();

        let pattern = match (&self.pattern, input) {
            (Some(_), BranchInput::Lumitexels(x)) => {
                let mut dm = match &trace.input_norm {
                    Some(n) => normalize_rows_backward(n, &dh),
                    None => dh,
                };
                if let Some(noise) = &trace.noise {
                    for (g, f) in dm.as_mut_slice().iter_mut().zip(noise.as_slice()) {
                        *g = *g * *f;
                    }
                }
                Some(dm.matmul_tn(x)?)
            }
            (Some(p), BranchInput::Measurements(_)) => Some(Matrix::zeros(p.rows(), p.cols())),
            (None, _) => None,
        };
        Ok(Branch { pattern, layers: grads })
    }

    fn zeros_like(&self) -> Self {
        Self {
            pattern: self.pattern.as_ref().map(|p| Matrix::zeros(p.rows(), p.cols())),
            layers: self.layers.iter().map(DenseLayer::zeros_like).collect(),
        }
    }

    fn cast<U: Real>(&self) -> Branch<U> {
        Branch {
            pattern: self.pattern.as_ref().map(Matrix::cast),
            layers: self.layers.iter().map(DenseLayer::cast).collect(),
        }
    }
}

/// Intermediate values of a full forward pass.
#[derive(Debug, Clone)]
pub struct NetworkTrace<T> {
    pub sensitive: BranchTrace<T>,
    pub insensitive: BranchTrace<T>,
    combine_input: Matrix<T>,
    /// Combined features, one row per sample; not normalized.
    pub output: Matrix<T>,
}

impl<T: Real> NetworkTrace<T> {
    pub fn valid(&self) -> Vec<bool> {
        self.sensitive
            .valid()
            .into_iter()
            .zip(self.insensitive.valid())
            .map(|(a, b)| a && b)
            .collect()
    }
}

/// All learnable parameters of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub config: NetworkConfig,
    pub sensitive: Branch<T>,
    pub insensitive: Branch<T>,
    /// Linear mixing layer over `[sensitive | insensitive]` branch features.
    pub combine: DenseLayer<T>,
}

/// Encodes turntable angles as the `N × 2` view input.
pub fn encode_views<T: Real>(views: &[ViewSpec]) -> Matrix<T> {
    let data = views.iter().flat_map(|v| v.encode().map(T::of)).collect();
    Matrix::from_vec(views.len(), 2, data).expect("sized")
}

fn random_pattern<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::of(v)
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Divides `row` by its largest magnitude. Returns false for near-zero rows.
fn normalize_pattern_row<T: Real>(row: &mut [T]) -> bool {
    let max = row.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if !(max.to_f64_lossy() >= 1e-8) {
        return false;
    }
    for v in row.iter_mut() {
        *v = *v / max;
    }
    true
}

impl<T: Real> NetworkParams<T> {
    /// Random initialization: He-normal dense layers with zero bias and
    /// standard-normal pattern rows rescaled to unit max-magnitude.
    pub fn init<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let make = |bc: &BranchConfig, rng: &mut R| Branch {
            pattern: (config.mode == Mode::Lightstage).then(|| random_pattern(bc.measurements, config.input_len, rng)),
            layers: bc
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| DenseLayer::he_init(i, o, rng))
                .collect(),
        };
        let sensitive = make(&config.sensitive, rng);
        let insensitive = make(&config.insensitive, rng);
        let combine = DenseLayer::he_init(
            config.sensitive.feature_len + config.insensitive.feature_len,
            config.feature_len,
            rng,
        );
        let mut params = Self {
            config,
            sensitive,
            insensitive,
            combine,
        };
        params.renormalize_patterns(rng);
        Ok(params)
    }

    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let make = |bc: &BranchConfig| Branch {
            pattern: (config.mode == Mode::Lightstage).then(|| Matrix::zeros(bc.measurements, config.input_len)),
            layers: bc
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| DenseLayer::zeros(i, o))
                .collect(),
        };
        let sensitive = make(&config.sensitive);
        let insensitive = make(&config.insensitive);
        let combine = DenseLayer::zeros(
            config.sensitive.feature_len + config.insensitive.feature_len,
            config.feature_len,
        );
        Ok(Self {
            config,
            sensitive,
            insensitive,
            combine,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            sensitive: self.sensitive.zeros_like(),
            insensitive: self.insensitive.zeros_like(),
            combine: self.combine.zeros_like(),
        }
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            config: self.config.clone(),
            sensitive: self.sensitive.cast(),
            insensitive: self.insensitive.cast(),
            combine: self.combine.cast(),
        }
    }

    pub fn branch(&self, which: Which) -> &Branch<T> {
        match which {
            Which::Sensitive => &self.sensitive,
            Which::Insensitive => &self.insensitive,
        }
    }

    pub fn branch_mut(&mut self, which: Which) -> &mut Branch<T> {
        match which {
            Which::Sensitive => &mut self.sensitive,
            Which::Insensitive => &mut self.insensitive,
        }
    }

    pub fn branch_config(&self, which: Which) -> &BranchConfig {
        match which {
            Which::Sensitive => &self.config.sensitive,
            Which::Insensitive => &self.config.insensitive,
        }
    }

    fn activation(&self) -> LeakyRelu {
        LeakyRelu {
            slope: self.config.activation_slope,
        }
    }

    fn check_input(&self, input: &NetInput<'_, T>) -> Result<()> {
        if let NetInput::Lumitexels(x) = input {
            if x.cols() != self.config.input_len {
                return Err(contract(format!(
                    "{} network expects inputs of length {}, got {}",
                    self.config.mode.as_str(),
                    self.config.input_len,
                    x.cols()
                )));
            }
        }
        Ok(())
    }

    pub fn forward_branch(
        &self,
        which: Which,
        input: NetInput<'_, T>,
        views: &Matrix<T>,
        noise: Option<&Noise<T>>,
    ) -> Result<BranchTrace<T>> {
        self.check_input(&input)?;
        self.branch(which).forward(
            self.branch_config(which),
            self.activation(),
            input.for_branch(which),
            views,
            noise.map(|n| n.for_branch(which)),
        )
    }

    /// Gradients of a branch-only objective; all other tensors are zero.
    pub fn backward_branch(
        &self,
        which: Which,
        trace: &BranchTrace<T>,
        dfeat: &Matrix<T>,
        input: NetInput<'_, T>,
    ) -> Result<Self> {
        let mut grads = self.zeros_like();
        *grads.branch_mut(which) = self.branch(which).backward(
            self.branch_config(which),
            self.activation(),
            trace,
            dfeat,
            input.for_branch(which),
        )?;
        Ok(grads)
    }

    pub fn forward(
        &self,
        input: NetInput<'_, T>,
        views: &Matrix<T>,
        noise: Option<&Noise<T>>,
    ) -> Result<NetworkTrace<T>> {
        let sensitive = self.forward_branch(Which::Sensitive, input, views, noise)?;
        let insensitive = self.forward_branch(Which::Insensitive, input, views, noise)?;
        let combine_input = sensitive.features().hconcat(insensitive.features())?;
        let output = self.combine.forward(&combine_input)?;
        Ok(NetworkTrace {
            sensitive,
            insensitive,
            combine_input,
            output,
        })
    }

    /// Gradients of an objective on the combined features.
    pub fn backward(&self, trace: &NetworkTrace<T>, dout: &Matrix<T>, input: NetInput<'_, T>) -> Result<Self> {
        let (dcat, combine) = self.combine.backward(&trace.combine_input, dout)?;
        let (ds, di) = dcat.hsplit(self.config.sensitive.feature_len);
        let act = self.activation();
        let sensitive = self.sensitive.backward(
            &self.config.sensitive,
            act,
            &trace.sensitive,
            &ds,
            input.for_branch(Which::Sensitive),
        )?;
        let insensitive = self.insensitive.backward(
            &self.config.insensitive,
            act,
            &trace.insensitive,
            &di,
            input.for_branch(Which::Insensitive),
        )?;
        Ok(Self {
            config: self.config.clone(),
            sensitive,
            insensitive,
            combine,
        })
    }

    /// Unit features of the intensity-sensitive branch and their validity.
    pub fn forward_sensitive(&self, input: NetInput<'_, T>, views: &Matrix<T>) -> Result<(Matrix<T>, Vec<bool>)> {
        let t = self.forward_branch(Which::Sensitive, input, views, None)?;
        Ok((t.features().clone(), t.valid()))
    }

    /// Unit features of the intensity-insensitive branch and their validity.
    pub fn forward_insensitive(&self, input: NetInput<'_, T>, views: &Matrix<T>) -> Result<(Matrix<T>, Vec<bool>)> {
        let t = self.forward_branch(Which::Insensitive, input, views, None)?;
        Ok((t.features().clone(), t.valid()))
    }

    /// Final features and their validity.
    pub fn forward_combined(&self, input: NetInput<'_, T>, views: &Matrix<T>) -> Result<(Matrix<T>, Vec<bool>)> {
        let t = self.forward(input, views, None)?;
        let valid = t.valid();
        Ok((t.output, valid))
    }

    /// Rescales each pattern row to unit max-magnitude. Rows that have
    /// collapsed below 1e-8 are redrawn; their `(branch, row)` are returned.
    pub fn renormalize_patterns<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<(Which, usize)> {
        let mut redrawn = self.renormalize_branch_patterns(Which::Sensitive, rng);
        redrawn.extend(self.renormalize_branch_patterns(Which::Insensitive, rng));
        redrawn
    }

    /// [`Self::renormalize_patterns`] restricted to one branch.
    pub fn renormalize_branch_patterns<R: Rng + ?Sized>(&mut self, which: Which, rng: &mut R) -> Vec<(Which, usize)> {
        let mut redrawn = Vec::new();
        if let Some(p) = self.branch_mut(which).pattern.as_mut() {
            for r in 0..p.rows() {
                if normalize_pattern_row(p.row_mut(r)) {
                    continue;
                }
                loop {
                    for v in p.row_mut(r) {
                        let x: f64 = StandardNormal.sample(rng);
                        *v = T::of(x);
                    }
                    if normalize_pattern_row(p.row_mut(r)) {
                        break;
                    }
                }
                redrawn.push((which, r));
            }
        }
        redrawn
    }

    /// All learned pattern rows, sensitive branch first.
    pub fn pattern_rows(&self) -> Vec<(Which, &[T])> {
        let mut rows = Vec::new();
        for which in [Which::Sensitive, Which::Insensitive] {
            if let Some(p) = &self.branch(which).pattern {
                rows.extend((0..p.rows()).map(|r| (which, p.row(r))));
            }
        }
        rows
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Element-wise `self += other` over all tensors.
    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x = *x + *y;
            }
        }
    }
}

fn branch_refs<'a, T>(prefix: &str, b: &'a Branch<T>, out: &mut Vec<TensorRef<'a, T>>)
where
    T: Real,
{
    if let Some(p) = &b.pattern {
        out.push(TensorRef {
            name: format!("{prefix}.pattern"),
            dims: vec![p.rows(), p.cols()],
            data: p.as_slice(),
        });
    }
    for (j, l) in b.layers.iter().enumerate() {
        out.push(TensorRef {
            name: format!("{prefix}.fc{j}.weight"),
            dims: vec![l.outputs(), l.inputs()],
            data: l.weights.as_slice(),
        });
        out.push(TensorRef {
            name: format!("{prefix}.fc{j}.bias"),
            dims: vec![l.outputs()],
            data: &l.bias,
        });
    }
}

fn branch_muts<'a, T>(prefix: &str, b: &'a mut Branch<T>, out: &mut Vec<TensorMut<'a, T>>)
where
    T: Real,
{
    if let Some(p) = &mut b.pattern {
        out.push(TensorMut {
            name: format!("{prefix}.pattern"),
            data: p.as_mut_slice(),
        });
    }
    for (j, l) in b.layers.iter_mut().enumerate() {
        let DenseLayer { weights, bias } = l;
        out.push(TensorMut {
            name: format!("{prefix}.fc{j}.weight"),
            data: weights.as_mut_slice(),
        });
        out.push(TensorMut {
            name: format!("{prefix}.fc{j}.bias"),
            data: bias,
        });
    }
}

impl<T: Real> Parameterized<T> for NetworkParams<T> {
    fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = Vec::new();
        branch_refs("sensitive", &self.sensitive, &mut out);
        branch_refs("insensitive", &self.insensitive, &mut out);
        out.push(TensorRef {
            name: "combine.weight".into(),
            dims: vec![self.combine.outputs(), self.combine.inputs()],
            data: self.combine.weights.as_slice(),
        });
        out.push(TensorRef {
            name: "combine.bias".into(),
            dims: vec![self.combine.outputs()],
            data: &self.combine.bias,
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        branch_muts("sensitive", &mut self.sensitive, &mut out);
        branch_muts("insensitive", &mut self.insensitive, &mut out);
        let DenseLayer { weights, bias } = &mut self.combine;
        out.push(TensorMut {
            name: "combine.weight".into(),
            data: weights.as_mut_slice(),
        });
        out.push(TensorMut {
            name: "combine.bias".into(),
            data: bias,
        });
        out
    }
}
