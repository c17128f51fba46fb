use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{node_linear, xavier, GanError};
use crate::autodiff::{dropout_mask, AutodiffError, Scalar, Tape, Tensor, Var};
use crate::molgraph::{DEFAULT_N_MAX, NUM_ATOM_TYPES, NUM_BOND_TYPES};

/// Critic layout, written `[conv...],reduce,[head,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub conv_dims: Vec<usize>,
    pub reduce_dim: usize,
    /// Width of the two parallel gated layers.
    pub head_dim: usize,
    pub n_max: usize,
    /// Dropout after each convolution and each parallel head layer.
    pub dropout: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            conv_dims: vec![32, 64],
            reduce_dim: 32,
            head_dim: 64,
            n_max: DEFAULT_N_MAX,
            dropout: 0.0,
        }
    }
}

impl DiscriminatorConfig {
    /// The `[a,b],c,[d,1]` layout string.
    pub fn layout(&self) -> String {
        let conv: Vec<String> = self.conv_dims.iter().map(|d| d.to_string()).collect();
        format!("[{}],{},[{},1]", conv.join(","), self.reduce_dim, self.head_dim)
    }

    pub fn validate(&self) -> Result<(), GanError> {
        if self.conv_dims.is_empty()
            || self.conv_dims.contains(&0)
            || self.reduce_dim == 0
            || self.head_dim == 0
            || self.n_max == 0
        {
            return Err(GanError::BadDimensions(self.layout()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GanError::InvalidOption(format!(
                "discriminator dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let b = NUM_ATOM_TYPES;
        let mut out = Vec::new();
        let mut fan_in = b;
        for (l, &d) in self.conv_dims.iter().enumerate() {
            out.push((format!("disc.conv.{l}.self.weight"), vec![fan_in + b, d]));
            out.push((format!("disc.conv.{l}.self.bias"), vec![d]));
            for k in 1..NUM_BOND_TYPES {
                out.push((format!("disc.conv.{l}.bond.{k}.weight"), vec![fan_in + b, d]));
                out.push((format!("disc.conv.{l}.bond.{k}.bias"), vec![d]));
            }
            fan_in = d;
        }
        let (c, h) = (self.reduce_dim, self.head_dim);
        out.push(("disc.reduce.weight".into(), vec![fan_in + b, c]));
        out.push(("disc.reduce.bias".into(), vec![c]));
        out.push(("disc.gate.weight".into(), vec![c + b, h]));
        out.push(("disc.gate.bias".into(), vec![h]));
        out.push(("disc.value.weight".into(), vec![c + b, h]));
        out.push(("disc.value.bias".into(), vec![h]));
        out.push(("disc.out.weight".into(), vec![h, 1]));
        out.push(("disc.out.bias".into(), vec![1]));
        out
    }
}

impl fmt::Display for DiscriminatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.layout())
    }
}

impl FromStr for DiscriminatorConfig {
    type Err = GanError;

    /// Parses `[a,b],c,[d,1]`; `n_max` and dropout take their defaults.
    fn from_str(s: &str) -> Result<Self, GanError> {
        let bad = || GanError::BadDimensions(s.to_string());
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let rest = compact.strip_prefix('[').ok_or_else(bad)?;
        let (conv, rest) = rest.split_once(']').ok_or_else(bad)?;
        let rest = rest.strip_prefix(',').ok_or_else(bad)?;
        let (reduce, rest) = rest.split_once(',').ok_or_else(bad)?;
        let head = rest
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(bad)?;
        let nums =
            |t: &str| -> Result<Vec<usize>, GanError> { t.split(',').map(|x| x.parse().map_err(|_| bad())).collect() };
        let conv_dims = nums(conv)?;
        let reduce_dim = reduce.parse().map_err(|_| bad())?;
        let head = nums(head)?;
        if head.len() != 2 || head[1] != 1 {
            return Err(bad());
        }
        let cfg = Self {
            conv_dims,
            reduce_dim,
            head_dim: head[0],
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Inverted-dropout masks for one critic forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorMasks {
    /// One `[batch, n, width]` mask per convolution layer.
    pub conv: Vec<Tensor>,
    pub gate: Tensor,
    pub value: Tensor,
}

/// One relational graph-convolution layer.
///
/// `h` is `[batch, n, d]`, `nodes` `[batch, n, 10]`, `edges` `[batch, n, n, 5]`
/// and `layer` holds the skip weight and bias followed by a weight and bias
/// per non-zero bond type. Each neighbour message depends on the neighbour's
/// features and the receiving atom's type, scaled by the inverse neighbour
/// count; nodes without neighbours receive only the skip term.
pub fn rgcn_layer<'t, F: Scalar>(
    h: Var<'t, F>,
    nodes: Var<'t, F>,
    edges: Var<'t, F>,
    layer: &[Var<'t, F>],
) -> Result<Var<'t, F>, AutodiffError> {
    let hs = h.shape();
    let es = edges.shape();
    let vs = nodes.shape();
    if hs.len() != 3
        || vs.len() != 3
        || es.len() != 4
        || vs[..2] != hs[..2]
        || es[..3] != [hs[0], hs[1], hs[1]]
        || es[3] != NUM_BOND_TYPES
        || layer.len() != 2 * NUM_BOND_TYPES
    {
        return Err(AutodiffError::ShapeMismatch {
            op: "rgcn_layer",
            lhs: hs,
            rhs: es,
        });
    }
    let (bs, n) = (hs[0], hs[1]);
    let width = layer[0].shape()[1];
    let out_shape = [bs, n, width];

    let mut pre = node_linear(h.concat_last(nodes)?, layer[0], layer[1])?;
    let degree = edges.slice_last(1, NUM_BOND_TYPES)?.sum_trailing(2)?;
    let inv = degree.clamp_min(F::one()).recip().expand_prefix(&[bs, n, n])?;
    for k in 1..NUM_BOND_TYPES {
        let adj = edges.slice_last(k, k + 1)?.reshape(&[bs, n, n])?.mul(inv)?;
        let rows = adj.sum_trailing(2)?;
        let typed = nodes.mul(rows.expand_prefix(&vs)?)?;
        let msg_in = adj.bmm(h)?.concat_last(typed)?;
        let w = layer[2 * k];
        let b = layer[2 * k + 1];
        let msg = msg_in
            .reshape(&[bs * n, msg_in.last_dim()])?
            .matmul(w)?
            .reshape(&out_shape)?
            .add(rows.expand_prefix(&out_shape)?.mul(b.expand_suffix(&out_shape)?)?)?;
        pre = pre.add(msg)?;
    }
    Ok(pre.tanh())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub params: Vec<Tensor>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self, GanError> {
        config.validate()?;
        let params = config
            .shapes()
            .into_iter()
            .map(|(_, s)| {
                if s.len() == 2 {
                    xavier(s[0], s[1], rng)
                } else {
                    Tensor::zeros(&s)
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn from_params(config: DiscriminatorConfig, params: Vec<Tensor>) -> Result<Self, GanError> {
        config.validate()?;
        let shapes = config.shapes();
        if shapes.len() != params.len() {
            return Err(GanError::ArchitectureMismatch(format!(
                "discriminator expects {} tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, s), p) in shapes.iter().zip(&params) {
            if p.shape() != s.as_slice() {
                return Err(GanError::ArchitectureMismatch(format!(
                    "{name}: expected {s:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn names(&self) -> Vec<String> {
        self.config.shapes().into_iter().map(|(n, _)| n).collect()
    }

    /// Index of a named parameter.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }

    /// Fresh dropout masks, or `None` when dropout is off.
    pub fn draw_masks<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<DiscriminatorMasks> {
        let c = &self.config;
        if c.dropout <= 0.0 {
            return None;
        }
        let n = c.n_max;
        let conv = c
            .conv_dims
            .iter()
            .map(|&d| dropout_mask(&[batch, n, d], c.dropout, rng))
            .collect();
        Some(DiscriminatorMasks {
            conv,
            gate: dropout_mask(&[batch, n, c.head_dim], c.dropout, rng),
            value: dropout_mask(&[batch, n, c.head_dim], c.dropout, rng),
        })
    }

    /// Scores a batch: returns `[batch]` values in `(-1, 1)`.
    pub fn forward<'t, F: Scalar>(
        &self,
        params: &[Var<'t, F>],
        nodes: Var<'t, F>,
        edges: Var<'t, F>,
        masks: Option<&DiscriminatorMasks>,
    ) -> Result<Var<'t, F>, GanError> {
        let tape = params[0].tape();
        let s = nodes.shape();
        if s.len() != 3 || s[2] != NUM_ATOM_TYPES {
            return Err(AutodiffError::ShapeMismatch {
                op: "discriminate",
                lhs: s,
                rhs: vec![NUM_ATOM_TYPES],
            }
            .into());
        }
        let (bs, n) = (s[0], s[1]);
        let per_layer = 2 * NUM_BOND_TYPES;
        let depth = self.config.conv_dims.len();

        let mut h = nodes;
        for l in 0..depth {
            h = rgcn_layer(h, nodes, edges, &params[l * per_layer..(l + 1) * per_layer])?;
            if let Some(m) = masks {
                h = h.mask(m.conv[l].cast())?;
            }
        }
        let p = &params[depth * per_layer..];
        let reduced = node_linear(h.concat_last(nodes)?, p[0], p[1])?.tanh();
        let head_in = reduced.concat_last(nodes)?;
        let mut gate = node_linear(head_in, p[2], p[3])?.sigmoid();
        let mut value = node_linear(head_in, p[4], p[5])?.tanh();
        if let Some(m) = masks {
            gate = gate.mask(m.gate.cast())?;
            value = value.mask(m.value.cast())?;
        }
        let ones = tape.constant(Tensor::ones(&[bs, 1, n]));
        let graph = ones.bmm(gate.mul(value)?)?.reshape(&[bs, self.config.head_dim])?;
        let out = graph.matmul(p[6])?.add_bias(p[7])?.tanh().reshape(&[bs])?;
        Ok(out)
    }

    /// Evaluation-mode scores for dense batches.
    pub fn score(&self, nodes: &Tensor, edges: &Tensor) -> Result<Tensor, GanError> {
        let tape = Tape::<f32>::new();
        let params: Vec<_> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let d = self.forward(
            &params,
            tape.constant(nodes.clone()),
            tape.constant(edges.clone()),
            None,
        )?;
        let out = (*d.value()).clone();
        Ok(out)
    }
}
