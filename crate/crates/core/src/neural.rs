//! Small dense networks with explicit backpropagation, Adam, soft target
//! updates and a ring replay buffer.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative in terms of the activation output. The rectifier uses
    /// subgradient 0 at the kink.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

/// Fully connected feed-forward network. Parameters live in one flat vector:
/// for each layer the row-major `out x in` weight matrix followed by the
/// `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<T>,
    generation: u64,
}

/// Layer outputs recorded by a forward pass, consumed by `backward`.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
    values: Vec<Vec<T>>,
    generation: u64,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.values.last().expect("cache holds at least the input")
    }
}

impl<T: Scalar> Mlp<T> {
    /// Layer widths `sizes = [input, hidden.., output]`, one activation per
    /// layer. Weights and biases are drawn uniformly from `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        let mut off = 0;
        for l in 0..activations.len() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            for p in &mut net.params[off..off + n_out * (n_in + 1)] {
                *p = T::lit(rng.random_range(-bound..=bound));
            }
            off += n_out * (n_in + 1);
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::Input(format!(
                "{} layer sizes need {} activations, got {}",
                sizes.len(),
                sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Input("layer widths must be positive".into()));
        }
        let count = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![T::zero(); count],
            generation: 0,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.generation += 1;
        &mut self.params
    }

    pub fn same_architecture(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.activations == other.activations
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Input(format!(
                "network expects {} inputs, got {}",
                self.input_size(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut off = 0;
        for (l, act) in self.activations.iter().enumerate() {
            x = self.layer(l, off, &x, *act);
            off += self.sizes[l + 1] * (self.sizes[l] + 1);
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[T]) -> Result<ForwardCache<T>> {
        self.check_input(input)?;
        let mut values = Vec::with_capacity(self.sizes.len());
        values.push(input.to_vec());
        let mut off = 0;
        for (l, act) in self.activations.iter().enumerate() {
            let y = self.layer(l, off, &values[l], *act);
            values.push(y);
            off += self.sizes[l + 1] * (self.sizes[l] + 1);
        }
        Ok(ForwardCache {
            values,
            generation: self.generation,
        })
    }

    fn layer(&self, l: usize, off: usize, x: &[T], act: Activation) -> Vec<T> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_out * (n_in + 1)];
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = row.iter().zip(x).fold(b[o], |acc, (&wi, &xi)| acc + wi * xi);
                act.apply(z)
            })
            .collect()
    }

    /// Reverse-mode pass for the scalar `output_gradient . output`.
    /// Parameter gradients are added into `param_grads`; the input gradient
    /// is returned.
    pub fn backward_into(
        &self,
        cache: &ForwardCache<T>,
        output_gradient: &[T],
        param_grads: &mut [T],
    ) -> Result<Vec<T>> {
        self.reverse(cache, output_gradient, Some(param_grads))
    }

    /// Gradient with respect to the input only.
    pub fn input_gradient(&self, cache: &ForwardCache<T>, output_gradient: &[T]) -> Result<Vec<T>> {
        self.reverse(cache, output_gradient, None)
    }

    fn reverse(
        &self,
        cache: &ForwardCache<T>,
        output_gradient: &[T],
        mut param_grads: Option<&mut [T]>,
    ) -> Result<Vec<T>> {
        if cache.generation != self.generation || cache.values.len() != self.sizes.len() {
            return Err(Error::State("forward cache is stale for this network".into()));
        }
        if output_gradient.len() != self.output_size() {
            return Err(Error::Input(format!(
                "output gradient has length {}, expected {}",
                output_gradient.len(),
                self.output_size()
            )));
        }
        if param_grads.as_ref().is_some_and(|g| g.len() != self.params.len()) {
            return Err(Error::Input("gradient buffer does not match parameter count".into()));
        }
        let mut offsets = Vec::with_capacity(self.activations.len());
        let mut off = 0;
        for l in 0..self.activations.len() {
            offsets.push(off);
            off += self.sizes[l + 1] * (self.sizes[l] + 1);
        }
        let mut delta_out = output_gradient.to_vec();
        for l in (0..self.activations.len()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let y = &cache.values[l + 1];
            let x = &cache.values[l];
            let act = self.activations[l];
            let delta: Vec<T> = delta_out
                .iter()
                .zip(y)
                .map(|(&g, &yo)| g * act.derivative_from_output(yo))
                .collect();
            let off = offsets[l];
            let w = &self.params[off..off + n_in * n_out];
            let mut dx = vec![T::zero(); n_in];
            if let Some(grads) = param_grads.as_deref_mut() {
                let (gw, gb) = grads[off..off + n_out * (n_in + 1)].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    gb[o] = gb[o] + d;
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, &xi) in grow.iter_mut().zip(x) {
                        *g = *g + d * xi;
                    }
                }
            }
            for o in 0..n_out {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (acc, &wi) in dx.iter_mut().zip(row) {
                    *acc = *acc + d * wi;
                }
            }
            delta_out = dx;
        }
        Ok(delta_out)
    }

    /// Convenience wrapper returning fresh `(parameter gradient, input gradient)`.
    pub fn backward(&self, cache: &ForwardCache<T>, output_gradient: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let mut grads = vec![T::zero(); self.params.len()];
        let dx = self.backward_into(cache, output_gradient, &mut grads)?;
        Ok((grads, dx))
    }

    /// Text checkpoint. Parameters are stored as the hex bit pattern of their
    /// `f64` value so a round trip is exact.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "mlp v1")?;
        writeln!(w, "scalar {}", T::TAG)?;
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        writeln!(w, "sizes {}", sizes.join(" "))?;
        let acts: Vec<&str> = self.activations.iter().map(|a| a.name()).collect();
        writeln!(w, "activations {}", acts.join(" "))?;
        writeln!(w, "params {}", self.params.len())?;
        for p in &self.params {
            writeln!(w, "{:016x}", p.as_f64().to_bits())?;
        }
        writeln!(w, "end")
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut line = String::new();
        let mut next = |line: &mut String| -> Result<String> {
            line.clear();
            let n = r.read_line(line).map_err(|e| Error::Parse(e.to_string()))?;
            if n == 0 {
                return Err(Error::Parse("unexpected end of checkpoint".into()));
            }
            Ok(line.trim_end().to_string())
        };
        let expect = |got: String, key: &str| -> Result<String> {
            got.strip_prefix(key)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("expected `{key}`, found `{got}`")))
        };
        if next(&mut line)? != "mlp v1" {
            return Err(Error::Parse("not an mlp v1 checkpoint".into()));
        }
        let tag = expect(next(&mut line)?, "scalar")?;
        if tag != T::TAG {
            return Err(Error::Parse(format!("checkpoint holds {tag}, expected {}", T::TAG)));
        }
        let sizes = expect(next(&mut line)?, "sizes")?
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let acts = expect(next(&mut line)?, "activations")?
            .split_whitespace()
            .map(Activation::parse)
            .collect::<Result<Vec<_>>>()?;
        let mut net = Mlp::zeros(&sizes, &acts)?;
        let count: usize = expect(next(&mut line)?, "params")?
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))?;
        if count != net.params.len() {
            return Err(Error::Parse(format!(
                "parameter count {count} does not match architecture ({})",
                net.params.len()
            )));
        }
        for p in net.params.iter_mut() {
            let hex = next(&mut line)?;
            let bits = u64::from_str_radix(&hex, 16).map_err(|e| Error::Parse(e.to_string()))?;
            *p = T::lit(f64::from_bits(bits));
        }
        if next(&mut line)? != "end" {
            return Err(Error::Parse("missing checkpoint terminator".into()));
        }
        Ok(net)
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    first_moment: Vec<T>,
    second_moment: Vec<T>,
    steps: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(param_count: usize, learning_rate: T) -> Self {
        AdamState {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            first_moment: vec![T::zero(); param_count],
            second_moment: vec![T::zero(); param_count],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.first_moment, &self.second_moment)
    }

    /// One bias-corrected Adam step, descending along `grads`.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Input(format!(
                "adam state holds {} parameters, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (one - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (one - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut Mlp<T>, grads: &[T]) -> Result<()> {
        self.step(net.params_mut(), grads)
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update<T: Scalar>(target: &mut Mlp<T>, online: &Mlp<T>, tau: T) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::Input("soft update between different architectures".into()));
    }
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(Error::Input(format!("tau {tau} outside [0, 1]")));
    }
    let keep = T::one() - tau;
    for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = tau * o + keep * *t;
    }
    Ok(())
}

/// One environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten when full.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<I> {
    items: Vec<I>,
    capacity: usize,
    cursor: usize,
}

impl<I> ReplayBuffer<I> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, item: I) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &I> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&I>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::State(format!(
                "replay buffer holds {} transitions, batch needs {batch}",
                self.items.len()
            )));
        }
        Ok((0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}
