//! Computation graph: forward op recording and reverse-mode backward.

use rand::{Rng, RngExt};

use super::{lit, Scalar, Tensor, TensorError};

/// Nonlinearity applied by conv and dense ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Identity => v,
            Activation::Relu => {
                if v > T::zero() {
                    v
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Derivative recovered from the op output (valid for monotone
    /// activations where the output determines the active region).
    fn grad_from_out<T: Scalar>(self, out: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if out > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

enum Node<T: Scalar> {
    Lookup {
        table: Tensor<T>,
        ids: Vec<u32>,
        out: Tensor<T>,
    },
    LookupSum {
        table: Tensor<T>,
        ids: Vec<u32>,
        row_len: usize,
        skip_id: Option<u32>,
        out: Tensor<T>,
    },
    Conv1d {
        x: Tensor<T>,
        w: Tensor<T>,
        b: Tensor<T>,
        act: Activation,
        out: Tensor<T>,
    },
    MaxPool {
        x: Tensor<T>,
        argmax: Vec<usize>,
        out: Tensor<T>,
    },
    Dense {
        x: Tensor<T>,
        w: Tensor<T>,
        b: Tensor<T>,
        act: Activation,
        out: Tensor<T>,
    },
    Dropout {
        x: Tensor<T>,
        mask: Vec<T>,
        out: Tensor<T>,
    },
    Add {
        a: Tensor<T>,
        b: Tensor<T>,
        out: Tensor<T>,
    },
    Mul {
        a: Tensor<T>,
        b: Tensor<T>,
        out: Tensor<T>,
    },
    Concat {
        parts: Vec<Tensor<T>>,
        out: Tensor<T>,
    },
    BceWithLogits {
        logits: Tensor<T>,
        targets: Vec<T>,
        weights: Option<Vec<T>>,
        out: Tensor<T>,
    },
}

/// Append-only op tape. Ops are recorded in construction order;
/// [`Graph::backward`] replays them in exact reverse order. A graph is
/// confined to one thread; independent graphs may run concurrently.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    backward_run: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            backward_run: false,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, node: Node<T>) {
        self.nodes.push(node);
    }

    /// Row gather: `out[i] = table[ids[i]]`. Gradient scatters additively
    /// back into the gathered rows.
    pub fn embedding_lookup(
        &mut self,
        table: &Tensor<T>,
        ids: &[u32],
    ) -> Result<Tensor<T>, TensorError> {
        let shape = table.shape();
        if shape.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "embedding_lookup",
                detail: format!("table must be 2-d, got {shape:?}"),
            });
        }
        let (rows, k) = (shape[0], shape[1]);
        for (position, &id) in ids.iter().enumerate() {
            if id as usize >= rows {
                return Err(TensorError::IdOutOfRange {
                    op: "embedding_lookup",
                    id: id as usize,
                    position,
                    rows,
                });
            }
        }
        let td = table.data();
        let mut data = Vec::with_capacity(ids.len() * k);
        for &id in ids {
            let r = id as usize * k;
            data.extend_from_slice(&td[r..r + k]);
        }
        drop(td);
        let out = Tensor::new(vec![ids.len(), k], data, table.requires_grad())?;
        out.assert_finite("embedding_lookup")?;
        self.push(Node::Lookup {
            table: table.clone(),
            ids: ids.to_vec(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Bag-of-rows gather: `ids` is a flattened grid of `rows × row_len`
    /// indices and `out[i] = Σ_j table[ids[i][j]]`, skipping entries equal
    /// to `skip_id`. A row of all-skipped ids sums to the zero vector, and
    /// no gradient ever reaches the skipped table row.
    pub fn embedding_sum(
        &mut self,
        table: &Tensor<T>,
        ids: &[u32],
        rows: usize,
        skip_id: Option<u32>,
    ) -> Result<Tensor<T>, TensorError> {
        let shape = table.shape();
        if shape.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "embedding_sum",
                detail: format!("table must be 2-d, got {shape:?}"),
            });
        }
        if rows == 0 || ids.len() % rows != 0 {
            return Err(TensorError::ShapeMismatch {
                op: "embedding_sum",
                detail: format!("{} ids do not form {rows} equal rows", ids.len()),
            });
        }
        let (table_rows, k) = (shape[0], shape[1]);
        let row_len = ids.len() / rows;
        for (position, &id) in ids.iter().enumerate() {
            if Some(id) != skip_id && id as usize >= table_rows {
                return Err(TensorError::IdOutOfRange {
                    op: "embedding_sum",
                    id: id as usize,
                    position,
                    rows: table_rows,
                });
            }
        }
        let td = table.data();
        let mut data = vec![T::zero(); rows * k];
        for (i, row) in ids.chunks_exact(row_len).enumerate() {
            let acc = &mut data[i * k..(i + 1) * k];
            for &id in row {
                if Some(id) == skip_id {
                    continue;
                }
                let r = id as usize * k;
                for (a, v) in acc.iter_mut().zip(&td[r..r + k]) {
                    *a = *a + *v;
                }
            }
        }
        drop(td);
        let out = Tensor::new(vec![rows, k], data, table.requires_grad())?;
        out.assert_finite("embedding_sum")?;
        self.push(Node::LookupSum {
            table: table.clone(),
            ids: ids.to_vec(),
            row_len,
            skip_id,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Valid 1-D convolution with stride 1 over `x: [L, k]` by a filter bank
    /// `w: [F, h, k]` with bias `b: [F]`, producing `[(L - h + 1), F]`.
    pub fn conv1d(
        &mut self,
        x: &Tensor<T>,
        w: &Tensor<T>,
        b: &Tensor<T>,
        act: Activation,
    ) -> Result<Tensor<T>, TensorError> {
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 2 || ws.len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                detail: format!("need x: [L, k] and w: [F, h, k], got {xs:?} and {ws:?}"),
            });
        }
        let (len, k) = (xs[0], xs[1]);
        let (filters, width, wk) = (ws[0], ws[1], ws[2]);
        if wk != k {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                detail: format!("embedding dim mismatch: x has {k}, w has {wk}"),
            });
        }
        if b.shape() != [filters] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                detail: format!("bias shape {:?} != [{filters}]", b.shape()),
            });
        }
        if width > len {
            return Err(TensorError::WindowTooLong { width, len });
        }
        let steps = len - width + 1;
        let (xd, wd, bd) = (x.data(), w.data(), b.data());
        let mut data = vec![T::zero(); steps * filters];
        let window = width * k;
        for t in 0..steps {
            let xw = &xd[t * k..t * k + window];
            let row = &mut data[t * filters..(t + 1) * filters];
            for (f, slot) in row.iter_mut().enumerate() {
                let wf = &wd[f * window..(f + 1) * window];
                let mut acc = bd[f];
                for (xv, wv) in xw.iter().zip(wf) {
                    acc = acc + *xv * *wv;
                }
                *slot = act.apply(acc);
            }
        }
        drop((xd, wd, bd));
        let req = x.requires_grad() || w.requires_grad() || b.requires_grad();
        let out = Tensor::new(vec![steps, filters], data, req)?;
        out.assert_finite("conv1d")?;
        self.push(Node::Conv1d {
            x: x.clone(),
            w: w.clone(),
            b: b.clone(),
            act,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Column-wise max over the temporal axis: `[T, F] -> [F]`. Gradient
    /// routes to the first maximal position of each column.
    pub fn global_max_pool(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let xs = x.shape();
        if xs.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "global_max_pool",
                detail: format!("need [T, F], got {xs:?}"),
            });
        }
        let (steps, filters) = (xs[0], xs[1]);
        if steps == 0 {
            return Err(TensorError::EmptyTemporalAxis);
        }
        let xd = x.data();
        let mut data = vec![T::zero(); filters];
        let mut argmax = vec![0usize; filters];
        for f in 0..filters {
            let mut best = xd[f];
            let mut best_t = 0usize;
            for t in 1..steps {
                let v = xd[t * filters + f];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            data[f] = best;
            argmax[f] = best_t;
        }
        drop(xd);
        let out = Tensor::new(vec![filters], data, x.requires_grad())?;
        out.assert_finite("global_max_pool")?;
        self.push(Node::MaxPool {
            x: x.clone(),
            argmax,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Fully connected layer: `act(W x + b)` with `x: [n]`, `w: [m, n]`,
    /// `b: [m]`.
    pub fn dense(
        &mut self,
        x: &Tensor<T>,
        w: &Tensor<T>,
        b: &Tensor<T>,
        act: Activation,
    ) -> Result<Tensor<T>, TensorError> {
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 1 || ws.len() != 2 || ws[1] != xs[0] || b.shape() != [ws[0]] {
            return Err(TensorError::ShapeMismatch {
                op: "dense",
                detail: format!(
                    "need x: [n], w: [m, n], b: [m]; got x {xs:?}, w {ws:?}, b {:?}",
                    b.shape()
                ),
            });
        }
        let (m, n) = (ws[0], ws[1]);
        let (xd, wd, bd) = (x.data(), w.data(), b.data());
        let mut data = vec![T::zero(); m];
        for (i, slot) in data.iter_mut().enumerate() {
            let wrow = &wd[i * n..(i + 1) * n];
            let mut acc = bd[i];
            for (xv, wv) in xd.iter().zip(wrow) {
                acc = acc + *xv * *wv;
            }
            *slot = act.apply(acc);
        }
        drop((xd, wd, bd));
        let req = x.requires_grad() || w.requires_grad() || b.requires_grad();
        let out = Tensor::new(vec![m], data, req)?;
        out.assert_finite("dense")?;
        self.push(Node::Dense {
            x: x.clone(),
            w: w.clone(),
            b: b.clone(),
            act,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Inverted dropout: in train mode each entry is zeroed independently
    /// with probability `rate` and survivors are scaled by `1 / (1 - rate)`;
    /// in eval mode the input passes through unchanged.
    pub fn dropout(
        &mut self,
        x: &Tensor<T>,
        rate: f64,
        train_mode: bool,
        rng: &mut impl Rng,
    ) -> Result<Tensor<T>, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidDropoutRate(rate));
        }
        if !train_mode || rate == 0.0 {
            return Ok(x.clone());
        }
        let scale = lit::<T>(1.0 / (1.0 - rate));
        let xd = x.data();
        let mut mask = Vec::with_capacity(xd.len());
        let mut data = Vec::with_capacity(xd.len());
        for &v in xd.iter() {
            if rng.random_bool(rate) {
                mask.push(T::zero());
                data.push(T::zero());
            } else {
                mask.push(scale);
                data.push(v * scale);
            }
        }
        drop(xd);
        let out = Tensor::new(x.shape().to_vec(), data, x.requires_grad())?;
        out.assert_finite("dropout")?;
        self.push(Node::Dropout {
            x: x.clone(),
            mask,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
            });
        }
        let (ad, bd) = (a.data(), b.data());
        let data: Vec<T> = ad.iter().zip(bd.iter()).map(|(x, y)| *x + *y).collect();
        drop((ad, bd));
        let req = a.requires_grad() || b.requires_grad();
        let out = Tensor::new(a.shape().to_vec(), data, req)?;
        out.assert_finite("add")?;
        self.push(Node::Add {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
            });
        }
        let (ad, bd) = (a.data(), b.data());
        let data: Vec<T> = ad.iter().zip(bd.iter()).map(|(x, y)| *x * *y).collect();
        drop((ad, bd));
        let req = a.requires_grad() || b.requires_grad();
        let out = Tensor::new(a.shape().to_vec(), data, req)?;
        out.assert_finite("mul")?;
        self.push(Node::Mul {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Concatenation of rank-1 tensors into one vector.
    pub fn concat(&mut self, parts: &[Tensor<T>]) -> Result<Tensor<T>, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                detail: "no parts".into(),
            });
        }
        let mut data = Vec::new();
        for p in parts {
            if p.shape().len() != 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    detail: format!("parts must be rank-1, got {:?}", p.shape()),
                });
            }
            data.extend_from_slice(&p.data());
        }
        let req = parts.iter().any(Tensor::requires_grad);
        let out = Tensor::new(vec![data.len()], data, req)?;
        out.assert_finite("concat")?;
        self.push(Node::Concat {
            parts: parts.to_vec(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Mean sigmoid cross-entropy over a logit vector against `{0, 1}`
    /// targets, computed in the overflow-safe form
    /// `max(z, 0) - z·y + ln(1 + exp(-|z|))`.
    pub fn bce_with_logits(
        &mut self,
        logits: &Tensor<T>,
        targets: &[T],
    ) -> Result<Tensor<T>, TensorError> {
        self.bce_impl(logits, targets, None)
    }

    /// [`Graph::bce_with_logits`] with a per-example loss weight.
    pub fn bce_with_logits_weighted(
        &mut self,
        logits: &Tensor<T>,
        targets: &[T],
        weights: &[T],
    ) -> Result<Tensor<T>, TensorError> {
        if weights.len() != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                detail: format!("{} weights for {} targets", weights.len(), targets.len()),
            });
        }
        self.bce_impl(logits, targets, Some(weights.to_vec()))
    }

    fn bce_impl(
        &mut self,
        logits: &Tensor<T>,
        targets: &[T],
        weights: Option<Vec<T>>,
    ) -> Result<Tensor<T>, TensorError> {
        if logits.shape().len() != 1 || logits.numel() != targets.len() || targets.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                detail: format!(
                    "logits {:?} vs {} targets",
                    logits.shape(),
                    targets.len()
                ),
            });
        }
        for &y in targets {
            if y != T::zero() && y != T::one() {
                return Err(TensorError::NonBinaryLabel(y.into_f64()));
            }
        }
        let ld = logits.data();
        let mut total = T::zero();
        for (i, (&z, &y)) in ld.iter().zip(targets).enumerate() {
            let pointwise = z.max(T::zero()) - z * y + (T::one() + (-z.abs()).exp()).ln();
            let w = weights.as_ref().map_or(T::one(), |ws| ws[i]);
            total = total + w * pointwise;
        }
        let mean = total / lit::<T>(targets.len() as f64);
        drop(ld);
        let out = Tensor::new(vec![1], vec![mean], logits.requires_grad())?;
        out.assert_finite("bce_with_logits")?;
        self.push(Node::BceWithLogits {
            logits: logits.clone(),
            targets: targets.to_vec(),
            weights,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Reverse pass from a scalar loss: populates `grad` on every tensor the
    /// loss depends on. A second call without rebuilding the graph is an
    /// error.
    pub fn backward(&mut self, loss: &Tensor<T>) -> Result<(), TensorError> {
        if self.backward_run {
            return Err(TensorError::BackwardAlreadyRun);
        }
        if loss.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                numel: loss.numel(),
            });
        }
        self.backward_run = true;
        loss.seed_grad_ones();
        for node in self.nodes.iter().rev() {
            backward_node(node)?;
        }
        Ok(())
    }
}

fn take_gout<T: Scalar>(out: &Tensor<T>, op: &'static str) -> Result<Option<Vec<T>>, TensorError> {
    match out.grad_snapshot() {
        None => Ok(None),
        Some(g) => {
            if g.iter().all(|v| v.is_finite()) {
                Ok(Some(g))
            } else {
                Err(TensorError::NonFinite { op })
            }
        }
    }
}

fn backward_node<T: Scalar>(node: &Node<T>) -> Result<(), TensorError> {
    match node {
        Node::Lookup { table, ids, out } => {
            let Some(gout) = take_gout(out, "embedding_lookup")? else {
                return Ok(());
            };
            if table.requires_grad() {
                let k = table.shape()[1];
                table.with_grad(|g| {
                    for (i, &id) in ids.iter().enumerate() {
                        let r = id as usize * k;
                        for (gv, dv) in g[r..r + k].iter_mut().zip(&gout[i * k..(i + 1) * k]) {
                            *gv = *gv + *dv;
                        }
                    }
                });
            }
        }
        Node::LookupSum {
            table,
            ids,
            row_len,
            skip_id,
            out,
        } => {
            let Some(gout) = take_gout(out, "embedding_sum")? else {
                return Ok(());
            };
            if table.requires_grad() {
                let k = table.shape()[1];
                table.with_grad(|g| {
                    for (i, row) in ids.chunks_exact(*row_len).enumerate() {
                        let grow = &gout[i * k..(i + 1) * k];
                        for &id in row {
                            if Some(id) == *skip_id {
                                continue;
                            }
                            let r = id as usize * k;
                            for (gv, dv) in g[r..r + k].iter_mut().zip(grow) {
                                *gv = *gv + *dv;
                            }
                        }
                    }
                });
            }
        }
        Node::Conv1d { x, w, b, act, out } => {
            let Some(gout) = take_gout(out, "conv1d")? else {
                return Ok(());
            };
            let (steps, filters) = (out.shape()[0], out.shape()[1]);
            let k = x.shape()[1];
            let width = w.shape()[1];
            let window = width * k;
            let od = out.data();
            let mut dpre = gout;
            for (d, o) in dpre.iter_mut().zip(od.iter()) {
                *d = *d * act.grad_from_out(*o);
            }
            drop(od);
            if b.requires_grad() {
                b.with_grad(|gb| {
                    for t in 0..steps {
                        for (f, gv) in gb.iter_mut().enumerate() {
                            *gv = *gv + dpre[t * filters + f];
                        }
                    }
                });
            }
            if w.requires_grad() {
                let xd = x.data();
                w.with_grad(|gw| {
                    for t in 0..steps {
                        let xwin = &xd[t * k..t * k + window];
                        for f in 0..filters {
                            let d = dpre[t * filters + f];
                            if d == T::zero() {
                                continue;
                            }
                            let gslice = &mut gw[f * window..(f + 1) * window];
                            for (gv, xv) in gslice.iter_mut().zip(xwin) {
                                *gv = *gv + d * *xv;
                            }
                        }
                    }
                });
            }
            if x.requires_grad() {
                let wd = w.data();
                x.with_grad(|gx| {
                    for t in 0..steps {
                        let gwin = &mut gx[t * k..t * k + window];
                        for f in 0..filters {
                            let d = dpre[t * filters + f];
                            if d == T::zero() {
                                continue;
                            }
                            let wf = &wd[f * window..(f + 1) * window];
                            for (gv, wv) in gwin.iter_mut().zip(wf) {
                                *gv = *gv + d * *wv;
                            }
                        }
                    }
                });
            }
        }
        Node::MaxPool { x, argmax, out } => {
            let Some(gout) = take_gout(out, "global_max_pool")? else {
                return Ok(());
            };
            if x.requires_grad() {
                let filters = out.shape()[0];
                x.with_grad(|gx| {
                    for (f, &t) in argmax.iter().enumerate() {
                        gx[t * filters + f] = gx[t * filters + f] + gout[f];
                    }
                });
            }
        }
        Node::Dense { x, w, b, act, out } => {
            let Some(gout) = take_gout(out, "dense")? else {
                return Ok(());
            };
            let (m, n) = (w.shape()[0], w.shape()[1]);
            let od = out.data();
            let mut dpre = gout;
            for (d, o) in dpre.iter_mut().zip(od.iter()) {
                *d = *d * act.grad_from_out(*o);
            }
            drop(od);
            if b.requires_grad() {
                b.accumulate_grad(&dpre);
            }
            if w.requires_grad() {
                let xd = x.data();
                w.with_grad(|gw| {
                    for i in 0..m {
                        let d = dpre[i];
                        if d == T::zero() {
                            continue;
                        }
                        let grow = &mut gw[i * n..(i + 1) * n];
                        for (gv, xv) in grow.iter_mut().zip(xd.iter()) {
                            *gv = *gv + d * *xv;
                        }
                    }
                });
            }
            if x.requires_grad() {
                let wd = w.data();
                x.with_grad(|gx| {
                    for i in 0..m {
                        let d = dpre[i];
                        if d == T::zero() {
                            continue;
                        }
                        let wrow = &wd[i * n..(i + 1) * n];
                        for (gv, wv) in gx.iter_mut().zip(wrow) {
                            *gv = *gv + d * *wv;
                        }
                    }
                });
            }
        }
        Node::Dropout { x, mask, out } => {
            let Some(gout) = take_gout(out, "dropout")? else {
                return Ok(());
            };
            if x.requires_grad() {
                x.with_grad(|gx| {
                    for ((gv, dv), mv) in gx.iter_mut().zip(&gout).zip(mask) {
                        *gv = *gv + *dv * *mv;
                    }
                });
            }
        }
        Node::Add { a, b, out } => {
            let Some(gout) = take_gout(out, "add")? else {
                return Ok(());
            };
            if a.requires_grad() {
                a.accumulate_grad(&gout);
            }
            if b.requires_grad() {
                b.accumulate_grad(&gout);
            }
        }
        Node::Mul { a, b, out } => {
            let Some(gout) = take_gout(out, "mul")? else {
                return Ok(());
            };
            if a.requires_grad() {
                let bd = b.to_vec();
                let delta: Vec<T> = gout.iter().zip(&bd).map(|(g, v)| *g * *v).collect();
                a.accumulate_grad(&delta);
            }
            if b.requires_grad() {
                let ad = a.to_vec();
                let delta: Vec<T> = gout.iter().zip(&ad).map(|(g, v)| *g * *v).collect();
                b.accumulate_grad(&delta);
            }
        }
        Node::Concat { parts, out } => {
            let Some(gout) = take_gout(out, "concat")? else {
                return Ok(());
            };
            let mut offset = 0usize;
            for p in parts {
                let n = p.numel();
                if p.requires_grad() {
                    p.accumulate_grad(&gout[offset..offset + n]);
                }
                offset += n;
            }
        }
        Node::BceWithLogits {
            logits,
            targets,
            weights,
            out,
        } => {
            let Some(gout) = take_gout(out, "bce_with_logits")? else {
                return Ok(());
            };
            if logits.requires_grad() {
                let g = gout[0];
                let inv_n = T::one() / lit::<T>(targets.len() as f64);
                let ld = logits.data();
                let mut delta = vec![T::zero(); targets.len()];
                for (i, (&z, &y)) in ld.iter().zip(targets).enumerate() {
                    let sig = stable_sigmoid(z);
                    let w = weights.as_ref().map_or(T::one(), |ws| ws[i]);
                    delta[i] = g * w * (sig - y) * inv_n;
                }
                drop(ld);
                logits.accumulate_grad(&delta);
            }
        }
    }
    Ok(())
}

fn stable_sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
