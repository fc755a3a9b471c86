//! Linear Q-value approximator `Q(s, ·) = W·s + b`, trained online with Adam
//! on the squared TD error.
//!
//! States are two-hot, so a forward pass touches only two columns of `W` and
//! a gradient step touches only three entries of the selected action's row
//! (two weights and the bias). Adam itself is dense: every parameter's
//! moments decay on every step.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::encoding::State;
use crate::error::{Error, Result};

const MAGIC: &str = "fairprice-qnet";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    inputs: usize,
    actions: usize,
    /// Row-major `actions × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl QNet {
    pub fn zeros(inputs: usize, actions: usize) -> Self {
        Self {
            inputs,
            actions,
            weights: vec![0.0; inputs * actions],
            bias: vec![0.0; actions],
        }
    }

    /// Weights uniform in `[-scale, scale]`, zero bias.
    pub fn random<R: Rng + ?Sized>(inputs: usize, actions: usize, scale: f64, rng: &mut R) -> Self {
        let weights = (0..inputs * actions)
            .map(|_| if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 })
            .collect();
        Self {
            inputs,
            actions,
            weights,
            bias: vec![0.0; actions],
        }
    }

    pub fn from_parts(inputs: usize, actions: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * actions || bias.len() != actions {
            return Err(Error::config(
                "qnet",
                format!(
                    "expected {}x{} weights and {} biases, got {} and {}",
                    actions,
                    inputs,
                    actions,
                    weights.len(),
                    bias.len()
                ),
            ));
        }
        Ok(Self {
            inputs,
            actions,
            weights,
            bias,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, action: usize, input: usize) -> f64 {
        self.weights[action * self.inputs + input]
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.weights[action * self.inputs..(action + 1) * self.inputs]
    }

    fn check_state(&self, s: &State) -> Result<()> {
        if s.dim() != self.inputs {
            return Err(Error::config(
                "state",
                format!("state dimension {} does not match network input {}", s.dim(), self.inputs),
            ));
        }
        Ok(())
    }

    /// Q-value of one action.
    pub fn q_value(&self, s: &State, action: usize) -> f64 {
        let [i, j] = s.active();
        let row = self.row(action);
        row[i] + row[j] + self.bias[action]
    }

    /// Q-values of every action, written into `out`.
    pub fn forward_into(&self, s: &State, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.actions);
        let [i, j] = s.active();
        for (a, q) in out.iter_mut().enumerate() {
            let base = a * self.inputs;
            *q = self.weights[base + i] + self.weights[base + j] + self.bias[a];
        }
    }

    pub fn forward(&self, s: &State) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let mut out = vec![0.0; self.actions];
        self.forward_into(s, &mut out);
        Ok(out)
    }

    /// Dense `W·x + b` for arbitrary input vectors.
    pub fn forward_dense(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs);
        (0..self.actions)
            .map(|a| self.row(a).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[a])
            .collect()
    }

    pub fn max_q(&self, s: &State) -> f64 {
        let [i, j] = s.active();
        (0..self.actions)
            .map(|a| {
                let base = a * self.inputs;
                self.weights[base + i] + self.weights[base + j] + self.bias[a]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, s: &State) -> usize {
        let [i, j] = s.active();
        let mut best = 0;
        let mut best_q = f64::NEG_INFINITY;
        for a in 0..self.actions {
            let base = a * self.inputs;
            let q = self.weights[base + i] + self.weights[base + j] + self.bias[a];
            if q > best_q {
                best_q = q;
                best = a;
            }
        }
        best
    }

    /// Gradient of `(y − Q(s, a))²` with respect to every parameter.
    pub fn loss_gradient(&self, s: &State, action: usize, target: f64) -> Gradient {
        let residual = target - self.q_value(s, action);
        Gradient {
            action,
            active: s.active(),
            d_q: -2.0 * residual,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }

    pub fn save(&self, adam: &Adam, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_checkpoint(&mut w, self, adam).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(QNet, Adam)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(BufReader::new(file)).map_err(|reason| match reason {
            ReadError::Io(e) => Error::io(path, e),
            ReadError::Format(reason) => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
        })
    }
}

/// Index of the largest Q-value; the first one wins ties.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = a;
        }
    }
    best
}

/// Regression target for one transition. A rejected bid is pinned to the
/// penalty; otherwise the reward is bootstrapped from the best next action
/// under `net`, which must be the network before this step's update.
pub fn td_target(reward: f64, next: &State, net: &QNet, gamma: f64, rejected: bool, penalty: f64) -> f64 {
    if rejected {
        penalty
    } else if gamma == 0.0 {
        reward
    } else {
        reward + gamma * net.max_q(next)
    }
}

/// Sparse gradient of the squared TD loss: `d_q` on the two active weights
/// of row `action` and on `bias[action]`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    pub action: usize,
    pub active: [usize; 2],
    pub d_q: f64,
}

impl Gradient {
    pub fn to_dense(&self, inputs: usize, actions: usize) -> (Vec<f64>, Vec<f64>) {
        let mut w = vec![0.0; inputs * actions];
        let mut b = vec![0.0; actions];
        for j in self.active {
            w[self.action * inputs + j] += self.d_q;
        }
        b[self.action] = self.d_q;
        (w, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a [`QNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub params: AdamParams,
    step: u64,
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

impl Adam {
    pub fn new(params: AdamParams, net: &QNet) -> Self {
        Self {
            params,
            step: 0,
            m_w: vec![0.0; net.weights.len()],
            v_w: vec![0.0; net.weights.len()],
            m_b: vec![0.0; net.bias.len()],
            v_b: vec![0.0; net.bias.len()],
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Applies one Adam update with a sparse gradient.
    pub fn apply(&mut self, net: &mut QNet, grad: &Gradient) {
        let AdamParams { lr, beta1, beta2, eps } = self.params;
        self.step += 1;
        let t = self.step as i32;
        let lr_t = lr / (1.0 - beta1.powi(t));
        let v_scale = 1.0 / (1.0 - beta2.powi(t));
        let g = grad.d_q;
        debug_assert_ne!(grad.active[0], grad.active[1]);

        decay(&mut self.m_w, &mut self.v_w, beta1, beta2);
        decay(&mut self.m_b, &mut self.v_b, beta1, beta2);
        let row = grad.action * net.inputs;
        for j in grad.active {
            self.m_w[row + j] += (1.0 - beta1) * g;
            self.v_w[row + j] += (1.0 - beta2) * g * g;
        }
        self.m_b[grad.action] += (1.0 - beta1) * g;
        self.v_b[grad.action] += (1.0 - beta2) * g * g;
        descend(&mut net.weights, &self.m_w, &self.v_w, lr_t, v_scale, eps);
        descend(&mut net.bias, &self.m_b, &self.v_b, lr_t, v_scale, eps);
    }
}

/// Moments below this are flushed to zero. The step they would still produce
/// is far below the resolution of any parameter, and letting them decay into
/// subnormals slows every update by two orders of magnitude.
const MOMENT_FLOOR: f64 = 1e-60;

fn decay(m: &mut [f64], v: &mut [f64], beta1: f64, beta2: f64) {
    for x in m.iter_mut() {
        *x *= beta1;
        if x.abs() < MOMENT_FLOOR {
            *x = 0.0;
        }
    }
    for x in v.iter_mut() {
        *x *= beta2;
        if *x < MOMENT_FLOOR {
            *x = 0.0;
        }
    }
}

fn descend(theta: &mut [f64], m: &[f64], v: &[f64], lr_t: f64, v_scale: f64, eps: f64) {
    for ((th, &mi), &vi) in theta.iter_mut().zip(m).zip(v) {
        // m == 0 gives a zero step; skipping it leaves theta bit-identical.
        if mi != 0.0 {
            *th -= lr_t * mi / ((vi * v_scale).sqrt() + eps);
        }
    }
}

/// Outcome of a single optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub q_before: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("non-finite {what} after update")]
pub struct NonFinite {
    pub what: &'static str,
}

/// One online regression step towards `target` on `(s, action)`.
pub fn train_step(net: &mut QNet, adam: &mut Adam, s: &State, action: usize, target: f64) -> Result<StepReport, NonFinite> {
    if !target.is_finite() {
        return Err(NonFinite { what: "target" });
    }
    let q_before = net.q_value(s, action);
    let loss = (target - q_before).powi(2);
    if !loss.is_finite() {
        return Err(NonFinite { what: "loss" });
    }
    let grad = net.loss_gradient(s, action, target);
    adam.apply(net, &grad);
    let row = net.row(action);
    let [i, j] = s.active();
    if !(row[i].is_finite() && row[j].is_finite() && net.bias[action].is_finite()) {
        return Err(NonFinite { what: "parameter" });
    }
    Ok(StepReport { loss, q_before })
}

fn write_floats<W: Write>(w: &mut W, label: &str, values: &[f64], per_line: usize) -> std::io::Result<()> {
    writeln!(w, "{label} {}", values.len())?;
    for chunk in values.chunks(per_line.max(1)) {
        let line: Vec<String> = chunk.iter().map(|x| format!("{x:?}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

fn write_checkpoint<W: Write>(w: &mut W, net: &QNet, adam: &Adam) -> std::io::Result<()> {
    writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "inputs {} actions {}", net.inputs, net.actions)?;
    write_floats(w, "weights", &net.weights, net.inputs)?;
    write_floats(w, "bias", &net.bias, net.actions)?;
    let p = adam.params;
    writeln!(
        w,
        "adam step {} lr {:?} beta1 {:?} beta2 {:?} eps {:?}",
        adam.step, p.lr, p.beta1, p.beta2, p.eps
    )?;
    write_floats(w, "m_weights", &adam.m_w, net.inputs)?;
    write_floats(w, "v_weights", &adam.v_w, net.inputs)?;
    write_floats(w, "m_bias", &adam.m_b, net.actions)?;
    write_floats(w, "v_bias", &adam.v_b, net.actions)?;
    Ok(())
}

enum ReadError {
    Io(std::io::Error),
    Format(String),
}

struct Tokens {
    tokens: std::vec::IntoIter<String>,
}

impl Tokens {
    fn next(&mut self, what: &str) -> Result<String, ReadError> {
        self.tokens
            .next()
            .ok_or_else(|| ReadError::Format(format!("unexpected end of file, expected {what}")))
    }

    fn expect(&mut self, label: &str) -> Result<(), ReadError> {
        let t = self.next(label)?;
        if t != label {
            return Err(ReadError::Format(format!("expected `{label}`, found `{t}`")));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, ReadError> {
        let t = self.next(what)?;
        t.parse()
            .map_err(|_| ReadError::Format(format!("cannot parse `{t}` as {what}")))
    }

    fn labelled<T: std::str::FromStr>(&mut self, label: &str) -> Result<T, ReadError> {
        self.expect(label)?;
        self.parse(label)
    }

    fn floats(&mut self, label: &str, len: usize) -> Result<Vec<f64>, ReadError> {
        let n: usize = self.labelled(label)?;
        if n != len {
            return Err(ReadError::Format(format!("{label}: expected {len} values, header says {n}")));
        }
        (0..n).map(|_| self.parse::<f64>(label)).collect()
    }
}

fn read_checkpoint<R: BufRead>(r: R) -> Result<(QNet, Adam), ReadError> {
    let mut tokens = Vec::new();
    for line in r.lines() {
        let line = line.map_err(ReadError::Io)?;
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut t = Tokens {
        tokens: tokens.into_iter(),
    };
    t.expect(MAGIC)?;
    let version: u32 = t.parse("format version")?;
    if version != FORMAT_VERSION {
        return Err(ReadError::Format(format!("unsupported format version {version}")));
    }
    let inputs: usize = t.labelled("inputs")?;
    let actions: usize = t.labelled("actions")?;
    let weights = t.floats("weights", inputs * actions)?;
    let bias = t.floats("bias", actions)?;
    t.expect("adam")?;
    let step: u64 = t.labelled("step")?;
    let params = AdamParams {
        lr: t.labelled("lr")?,
        beta1: t.labelled("beta1")?,
        beta2: t.labelled("beta2")?,
        eps: t.labelled("eps")?,
    };
    let m_w = t.floats("m_weights", inputs * actions)?;
    let v_w = t.floats("v_weights", inputs * actions)?;
    let m_b = t.floats("m_bias", actions)?;
    let v_b = t.floats("v_bias", actions)?;
    let net = QNet {
        inputs,
        actions,
        weights,
        bias,
    };
    let adam = Adam {
        params,
        step,
        m_w,
        v_w,
        m_b,
        v_b,
    };
    Ok((net, adam))
}
