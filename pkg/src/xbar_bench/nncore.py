"""Dense/convolutional network primitives: forward inference, im2col
unrolling, SGD training with backpropagation, gradient checking, and MAC
accounting.

Everything runs in float64 numpy. A network is one or two layer branches
plus an optional dense fusion head over the concatenated branch outputs;
the only nonlinearities are ReLU, non-overlapping max pooling, and a
single softmax at the output. Convolutions are stride 1 with no padding,
evaluated as vector-matrix products over im2col patch rows so the same
arithmetic can later be mapped onto crossbar tiles.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericFault, ShapeMismatch

Tensor = np.ndarray

DENSE = "dense"
CONV2D = "conv2d"
MAXPOOL = "maxpool"
RELU = "relu"
SOFTMAX = "softmax"

WEIGHTED_KINDS = (DENSE, CONV2D)
LAYER_KINDS = (DENSE, CONV2D, MAXPOOL, RELU, SOFTMAX)


@dataclass
class LayerSpec:
    """One layer: kind plus whatever parameters that kind needs.

    weights: dense (out, in); conv2d (c_out, c_in, k, k). bias: (out,)
    respectively (c_out,). pool is the max-pooling window and stride.
    """

    kind: str
    weights: Tensor | None = None
    bias: Tensor | None = None
    pool: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeMismatch(f"unknown layer kind {self.kind!r}")
        if self.kind == DENSE:
            if self.weights is None or self.weights.ndim != 2:
                raise ShapeMismatch("dense layer needs a 2-d weight matrix")
            self._check_bias(self.weights.shape[0])
        elif self.kind == CONV2D:
            if self.weights is None or self.weights.ndim != 4:
                raise ShapeMismatch("conv2d layer needs a 4-d weight tensor")
            if self.weights.shape[2] != self.weights.shape[3]:
                raise ShapeMismatch("conv2d kernels must be square")
            if self.weights.shape[2] < 1:
                raise ShapeMismatch("conv2d kernel size must be >= 1")
            self._check_bias(self.weights.shape[0])
        elif self.kind == MAXPOOL:
            if self.pool < 1:
                raise ShapeMismatch("maxpool window must be >= 1")

    def _check_bias(self, fan_out: int):
        if self.bias is None:
            self.bias = np.zeros(fan_out)
        if self.bias.shape != (fan_out,):
            raise ShapeMismatch(
                f"bias shape {self.bias.shape} does not match fan-out {fan_out}"
            )


def dense(weights: Tensor, bias: Tensor | None = None) -> LayerSpec:
    return LayerSpec(DENSE, np.asarray(weights, dtype=float),
                     None if bias is None else np.asarray(bias, dtype=float))


def conv2d(weights: Tensor, bias: Tensor | None = None) -> LayerSpec:
    return LayerSpec(CONV2D, np.asarray(weights, dtype=float),
                     None if bias is None else np.asarray(bias, dtype=float))


def maxpool(p: int) -> LayerSpec:
    return LayerSpec(MAXPOOL, pool=int(p))


def relu() -> LayerSpec:
    return LayerSpec(RELU)


def softmax_layer() -> LayerSpec:
    return LayerSpec(SOFTMAX)


@dataclass
class NetworkSpec:
    """Declarative layer graph: 1 or 2 branches, optional fusion head.

    A single-branch network ends with its softmax inside the branch. A
    two-branch network keeps branches softmax-free and fuses them with a
    dense head (over concatenated branch outputs) followed by softmax.
    """

    branches: list[list[LayerSpec]]
    input_shapes: list[tuple[int, ...]]
    fusion_head: list[LayerSpec] | None = None

    def __post_init__(self):
        if len(self.branches) not in (1, 2):
            raise ShapeMismatch("a network has 1 or 2 branches")
        if len(self.input_shapes) != len(self.branches):
            raise ShapeMismatch("one input shape per branch required")
        self.input_shapes = [tuple(s) for s in self.input_shapes]
        if len(self.branches) == 2 and self.fusion_head is None:
            raise ShapeMismatch("two-branch networks need a fusion head")

    def n_classes(self) -> int:
        out_layers = self.fusion_head if self.fusion_head else self.branches[0]
        for layer in reversed(out_layers):
            if layer.kind in WEIGHTED_KINDS:
                return layer.weights.shape[0]
        raise ShapeMismatch("network has no weighted output layer")


@dataclass
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int
    dropout: float = 0.0  # Bernoulli drop rate after each ReLU; 0 disables

    def __post_init__(self):
        # zero is allowed as an explicit no-op probe
        if self.learning_rate < 0:
            raise ShapeMismatch("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ShapeMismatch("epochs and batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ShapeMismatch("dropout must lie in [0, 1)")


# ---------------------------------------------------------------------------
# shape bookkeeping


def layer_output_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Output shape of one layer given its input shape (no batch axis)."""
    if layer.kind == DENSE:
        fan_out, fan_in = layer.weights.shape
        if int(np.prod(in_shape)) != fan_in:
            raise ShapeMismatch(
                f"dense layer expects {fan_in} inputs, got shape {in_shape}"
            )
        return (fan_out,)
    if layer.kind == CONV2D:
        c_out, c_in, k, _ = layer.weights.shape
        if len(in_shape) != 3 or in_shape[0] != c_in:
            raise ShapeMismatch(
                f"conv2d expects ({c_in}, h, w) input, got shape {in_shape}"
            )
        c, h, w = in_shape
        if h < k or w < k:
            raise ShapeMismatch(f"kernel {k} larger than input {h}x{w}")
        return (c_out, h - k + 1, w - k + 1)
    if layer.kind == MAXPOOL:
        if len(in_shape) != 3:
            raise ShapeMismatch("maxpool expects (c, h, w) input")
        c, h, w = in_shape
        p = layer.pool
        if h < p or w < p:
            raise ShapeMismatch(f"pool window {p} larger than input {h}x{w}")
        # non-overlapping windows; odd remainders are dropped (13 -> 6)
        return (c, h // p, w // p)
    # relu / softmax preserve shape
    return tuple(in_shape)


def branch_output_shape(layers: list[LayerSpec], in_shape: tuple[int, ...]) -> tuple[int, ...]:
    shape = tuple(in_shape)
    for layer in layers:
        shape = layer_output_shape(layer, shape)
    return shape


def validate_network(net: NetworkSpec) -> None:
    """Walk all shapes once and check softmax placement and fusion width."""
    softmax_count = sum(
        1 for layers in (net.branches + ([net.fusion_head] if net.fusion_head else []))
        for layer in layers if layer.kind == SOFTMAX
    )
    if softmax_count != 1:
        raise ShapeMismatch(f"expected exactly one softmax, found {softmax_count}")
    widths = []
    for layers, in_shape in zip(net.branches, net.input_shapes):
        out = branch_output_shape(layers, in_shape)
        widths.append(int(np.prod(out)))
    if net.fusion_head:
        if net.branches[0][-1].kind == SOFTMAX or net.branches[-1][-1].kind == SOFTMAX:
            raise ShapeMismatch("softmax must sit at the fusion output, not in a branch")
        if net.fusion_head[-1].kind != SOFTMAX:
            raise ShapeMismatch("fusion head must end with softmax")
        head_dense = net.fusion_head[0]
        if head_dense.kind != DENSE:
            raise ShapeMismatch("fusion head must start with a dense layer")
        if head_dense.weights.shape[1] != sum(widths):
            raise ShapeMismatch(
                f"fusion head expects {head_dense.weights.shape[1]} inputs, "
                f"branches provide {sum(widths)}"
            )
    else:
        if net.branches[0][-1].kind != SOFTMAX:
            raise ShapeMismatch("single-branch network must end with softmax")


# ---------------------------------------------------------------------------
# layer arithmetic (batch-first internal representation)


def im2col(x: Tensor, k: int) -> Tensor:
    """Unroll a (c, h, w) input into patch rows for stride-1 convolution.

    Returns a ((h-k+1)*(w-k+1), c*k*k) matrix. Row p is the receptive
    field of output position p (row-major over output positions),
    flattened channel-major: all k*k taps of channel 0, then channel 1,
    and so on. Kernels flattened the same way turn convolution into one
    matrix product per output channel.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ShapeMismatch(f"im2col expects (c, h, w), got shape {x.shape}")
    if k < 1:
        raise ShapeMismatch("kernel size must be >= 1")
    return _im2col4(x[None], k)[0]


def _im2col4(x: Tensor, k: int) -> Tensor:
    """Batched im2col: (b, c, h, w) -> (b, positions, c*k*k)."""
    b, c, h, w = x.shape
    if h < k or w < k:
        raise ShapeMismatch(f"kernel {k} larger than input {h}x{w}")
    oh, ow = h - k + 1, w - k + 1
    # gather k*k shifted views, then order axes as (b, oh, ow, c, ki, kj)
    cols = np.empty((b, oh, ow, c, k, k), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, :, :, :, ki, kj] = x[:, :, ki:ki + oh, kj:kj + ow].transpose(0, 2, 3, 1)
    return cols.reshape(b, oh * ow, c * k * k)


def conv2d_via_vmm(x: Tensor, layer: LayerSpec) -> Tensor:
    """Convolution evaluated as patch-rows times flattened kernels.

    Accepts (c, h, w) or a (b, c, h, w) batch; returns the matching rank
    with output shape (c_out, h-k+1, w-k+1).
    """
    if layer.kind != CONV2D:
        raise ShapeMismatch("conv2d_via_vmm needs a conv2d layer")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != layer.weights.shape[1]:
        raise ShapeMismatch(
            f"conv input shape {x.shape[1:]} does not match kernel "
            f"{layer.weights.shape}"
        )
    out = _conv_forward(x, layer)
    return out[0] if single else out


def _conv_forward(x: Tensor, layer: LayerSpec) -> Tensor:
    c_out, c_in, k, _ = layer.weights.shape
    b, _, h, w = x.shape
    cols = _im2col4(x, k)                       # (b, P, c_in*k*k)
    wf = layer.weights.reshape(c_out, c_in * k * k)
    out = cols @ wf.T + layer.bias              # (b, P, c_out)
    oh, ow = h - k + 1, w - k + 1
    return out.transpose(0, 2, 1).reshape(b, c_out, oh, ow)


def _maxpool_forward(x: Tensor, p: int) -> Tensor:
    b, c, h, w = x.shape
    oh, ow = h // p, w // p
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"pool window {p} larger than input {h}x{w}")
    x = x[:, :, :oh * p, :ow * p]
    return x.reshape(b, c, oh, p, ow, p).max(axis=(3, 5))


def softmax(z: Tensor) -> Tensor:
    """Row-wise stable softmax; last axis is the class axis."""
    z = np.asarray(z, dtype=float)
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=-1, keepdims=True)


def _apply_layer(layer: LayerSpec, x: Tensor) -> Tensor:
    """One batched layer application; x carries a leading batch axis."""
    if layer.kind == DENSE:
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != layer.weights.shape[1]:
            raise ShapeMismatch(
                f"dense layer expects {layer.weights.shape[1]} inputs, got {flat.shape[1]}"
            )
        return flat @ layer.weights.T + layer.bias
    if layer.kind == CONV2D:
        return _conv_forward(x, layer)
    if layer.kind == MAXPOOL:
        return _maxpool_forward(x, layer.pool)
    if layer.kind == RELU:
        return np.maximum(x, 0.0)
    if layer.kind == SOFTMAX:
        return softmax(x)
    raise ShapeMismatch(f"unknown layer kind {layer.kind!r}")


def _as_branch_batches(net: NetworkSpec, xs) -> tuple[list[Tensor], bool]:
    """Normalize forward inputs to per-branch batches.

    Accepts a single array for single-branch networks or a list with one
    array per branch; each array may be a single sample or a batch.
    """
    if isinstance(xs, np.ndarray):
        xs = [xs]
    xs = [np.asarray(x, dtype=float) for x in xs]
    if len(xs) != len(net.branches):
        raise ShapeMismatch(
            f"expected {len(net.branches)} input tensors, got {len(xs)}"
        )
    batched = []
    single_flags = []
    for x, shape in zip(xs, net.input_shapes):
        if x.shape == shape:
            batched.append(x[None])
            single_flags.append(True)
        elif x.shape[1:] == shape:
            batched.append(x)
            single_flags.append(False)
        else:
            raise ShapeMismatch(
                f"input shape {x.shape} does not match branch shape {shape}"
            )
    if len(set(single_flags)) > 1:
        raise ShapeMismatch("mix of single-sample and batched branch inputs")
    sizes = {x.shape[0] for x in batched}
    if len(sizes) > 1:
        raise ShapeMismatch(f"branch batches differ in size: {sorted(sizes)}")
    return batched, single_flags[0]


def forward(net: NetworkSpec, xs) -> Tensor:
    """Run the network; returns class probabilities.

    xs is one array (single branch) or a list of per-branch arrays.
    Single samples give a (classes,) vector, batches a (batch, classes)
    matrix. Probabilities are nonnegative and sum to 1 per sample.
    """
    validate_network(net)
    batched, single = _as_branch_batches(net, xs)
    outs = []
    for layers, x in zip(net.branches, batched):
        for layer in layers:
            x = _apply_layer(layer, x)
        outs.append(x.reshape(x.shape[0], -1))
    y = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
    if net.fusion_head:
        for layer in net.fusion_head:
            y = _apply_layer(layer, y)
    if not np.all(np.isfinite(y)):
        raise NumericFault("non-finite activation in forward pass")
    return y[0] if single else y


def count_macs(net: NetworkSpec, input_shapes=None) -> int:
    """Multiply-accumulate count for one inference.

    Dense layers contribute fan_in*fan_out, convolutions contribute
    c_in*k*k*c_out*positions; pooling and activations are free.
    """
    shapes = [tuple(s) for s in (input_shapes or net.input_shapes)]
    total = 0
    widths = []
    for layers, shape in zip(net.branches, shapes):
        for layer in layers:
            out_shape = layer_output_shape(layer, shape)
            if layer.kind == DENSE:
                total += layer.weights.shape[0] * layer.weights.shape[1]
            elif layer.kind == CONV2D:
                c_out, c_in, k, _ = layer.weights.shape
                total += c_in * k * k * c_out * int(np.prod(out_shape[1:]))
            shape = out_shape
        widths.append(int(np.prod(shape)))
    if net.fusion_head:
        shape = (sum(widths),)
        for layer in net.fusion_head:
            out_shape = layer_output_shape(layer, shape)
            if layer.kind == DENSE:
                total += layer.weights.shape[0] * layer.weights.shape[1]
            shape = out_shape
    return total


# ---------------------------------------------------------------------------
# training


def copy_network(net: NetworkSpec) -> NetworkSpec:
    return copy.deepcopy(net)


def _forward_train(net, batched, rng, dropout):
    """Forward pass keeping caches; returns (logits, caches).

    caches mirror the network structure: one list per branch plus one for
    the fusion head; entries are (layer, saved) with whatever backward
    needs. The output softmax is not applied here, the loss works on
    logits.
    """
    caches = []
    outs = []
    for layers, x in zip(net.branches, batched):
        branch_cache = []
        for layer in layers:
            x, saved = _layer_forward_train(layer, x, rng, dropout)
            branch_cache.append(saved)
        caches.append(branch_cache)
        outs.append(x.reshape(x.shape[0], -1))
    y = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
    head_cache = []
    if net.fusion_head:
        for layer in net.fusion_head:
            y, saved = _layer_forward_train(layer, y, rng, dropout)
            head_cache.append(saved)
    caches.append(head_cache)
    return y, caches


def _layer_forward_train(layer, x, rng, dropout):
    if layer.kind == DENSE:
        in_shape = x.shape
        flat = x.reshape(x.shape[0], -1)
        out = flat @ layer.weights.T + layer.bias
        return out, ("dense", flat, in_shape)
    if layer.kind == CONV2D:
        c_out, c_in, k, _ = layer.weights.shape
        cols = _im2col4(x, k)
        wf = layer.weights.reshape(c_out, -1)
        out = cols @ wf.T
        b, _, h, w = x.shape
        oh, ow = h - k + 1, w - k + 1
        out = (out + layer.bias).transpose(0, 2, 1).reshape(b, c_out, oh, ow)
        return out, ("conv", cols, x.shape)
    if layer.kind == MAXPOOL:
        p = layer.pool
        b, c, h, w = x.shape
        oh, ow = h // p, w // p
        cropped = x[:, :, :oh * p, :ow * p]
        windows = cropped.reshape(b, c, oh, p, ow, p).transpose(0, 1, 2, 4, 3, 5)
        flat_win = windows.reshape(b, c, oh, ow, p * p)
        arg = flat_win.argmax(axis=-1)
        out = np.take_along_axis(flat_win, arg[..., None], axis=-1)[..., 0]
        return out, ("maxpool", arg, x.shape)
    if layer.kind == RELU:
        mask = x > 0
        out = x * mask
        if dropout > 0.0:
            keep = rng.random(out.shape) >= dropout
            out = out * keep / (1.0 - dropout)  # inverted scaling
            return out, ("relu", mask, keep, dropout)
        return out, ("relu", mask, None, 0.0)
    if layer.kind == SOFTMAX:
        return x, ("softmax",)  # fused with the loss
    raise ShapeMismatch(f"unknown layer kind {layer.kind!r}")


def _layer_backward(layer, saved, grad):
    """Returns (grad_wrt_input, dW, db); dW/db are None for free layers."""
    tag = saved[0]
    if tag == "dense":
        _, flat, in_shape = saved
        dw = grad.T @ flat
        db = grad.sum(axis=0)
        dx = (grad @ layer.weights).reshape(in_shape)
        return dx, dw, db
    if tag == "conv":
        _, cols, in_shape = saved
        c_out, c_in, k, _ = layer.weights.shape
        b, _, h, w = in_shape
        oh, ow = h - k + 1, w - k + 1
        g = grad.reshape(b, c_out, oh * ow).transpose(0, 2, 1)  # (b, P, c_out)
        wf = layer.weights.reshape(c_out, -1)
        dwf = np.einsum("bpo,bpc->oc", g, cols)
        db = g.sum(axis=(0, 1))
        dcols = g @ wf                                          # (b, P, c*k*k)
        dx = np.zeros(in_shape)
        dc = dcols.reshape(b, oh, ow, c_in, k, k)
        for ki in range(k):
            for kj in range(k):
                dx[:, :, ki:ki + oh, kj:kj + ow] += dc[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        return dx, dwf.reshape(layer.weights.shape), db
    if tag == "maxpool":
        _, arg, in_shape = saved
        p = layer.pool
        b, c, h, w = in_shape
        oh, ow = h // p, w // p
        flat = np.zeros((b, c, oh, ow, p * p))
        np.put_along_axis(flat, arg[..., None], grad[..., None], axis=-1)
        windows = flat.reshape(b, c, oh, ow, p, p).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros(in_shape)
        dx[:, :, :oh * p, :ow * p] = windows.reshape(b, c, oh * p, ow * p)
        return dx, None, None
    if tag == "relu":
        _, mask, keep, rate = saved
        dx = grad * mask
        if keep is not None:
            dx = dx * keep / (1.0 - rate)
        return dx, None, None
    if tag == "softmax":
        return grad, None, None
    raise ShapeMismatch(f"unknown cache tag {tag!r}")


def _backward(net, caches, dlogits):
    """Backprop dlogits through the cached forward pass.

    Returns gradients with the same structure as the network: a list per
    branch plus one for the fusion head, entries (dW, db) or None.
    """
    grads_head = []
    g = dlogits
    head_cache = caches[-1]
    if net.fusion_head:
        for layer, saved in zip(reversed(net.fusion_head), reversed(head_cache)):
            g, dw, db = _layer_backward(layer, saved, g)
            grads_head.append(None if dw is None else (dw, db))
        grads_head.reverse()
    widths = []
    for layers, cache, in_shape in zip(net.branches, caches[:-1], net.input_shapes):
        out_shape = branch_output_shape(layers, in_shape)
        widths.append(int(np.prod(out_shape)))
    branch_grads = []
    offset = 0
    for bi, (layers, cache) in enumerate(zip(net.branches, caches[:-1])):
        if net.fusion_head:
            gb = g[:, offset:offset + widths[bi]]
            offset += widths[bi]
        else:
            gb = g
        # branch output was flattened before concat; restore its shape
        out_shape = branch_output_shape(layers, net.input_shapes[bi])
        gb = gb.reshape((gb.shape[0],) + out_shape)
        grads = []
        for layer, saved in zip(reversed(layers), reversed(cache)):
            gb, dw, db = _layer_backward(layer, saved, gb)
            grads.append(None if dw is None else (dw, db))
        grads.reverse()
        branch_grads.append(grads)
    return branch_grads, grads_head


def _ce_loss_and_grad(logits, labels):
    """Mean categorical cross-entropy on softmax(logits) and its gradient."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = (np.exp(logp) - np.eye(logits.shape[1])[labels]) / n
    return loss, grad


def train_sgd(net: NetworkSpec, data, cfg: TrainConfig, history: list | None = None) -> NetworkSpec:
    """Plain SGD on categorical cross-entropy; returns a trained copy.

    data is (inputs, labels) with inputs a list of per-branch arrays (a
    bare array is accepted for single-branch networks). Fixed seeds give
    bit-identical weights. Appends per-epoch mean loss to history if a
    list is passed.
    """
    validate_network(net)
    xs, labels = data
    if isinstance(xs, np.ndarray):
        xs = [xs]
    xs = [np.asarray(x, dtype=float) for x in xs]
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n == 0:
        raise ShapeMismatch("empty training set")
    n_classes = net.n_classes()
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ShapeMismatch(f"labels must lie in [0, {n_classes})")

    net = copy_network(net)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = [x[idx] for x in xs]
            logits, caches = _forward_train(net, batch, rng, cfg.dropout)
            loss, dlogits = _ce_loss_and_grad(logits, labels[idx])
            if not np.isfinite(loss):
                raise NumericFault(
                    f"training loss became non-finite at epoch {epoch}, "
                    f"batch {start // cfg.batch_size}"
                )
            branch_grads, head_grads = _backward(net, caches, dlogits)
            _sgd_step(net, branch_grads, head_grads, cfg.learning_rate)
            epoch_loss += loss
            n_batches += 1
        if history is not None:
            history.append(epoch_loss / n_batches)
    return net


def _sgd_step(net, branch_grads, head_grads, lr):
    for layers, grads in zip(net.branches, branch_grads):
        for layer, g in zip(layers, grads):
            if g is not None:
                layer.weights -= lr * g[0]
                layer.bias -= lr * g[1]
    if net.fusion_head:
        for layer, g in zip(net.fusion_head, head_grads):
            if g is not None:
                layer.weights -= lr * g[0]
                layer.bias -= lr * g[1]


def _loss_on(net, batched, labels):
    outs = []
    for layers, x in zip(net.branches, batched):
        for layer in layers:
            if layer.kind == SOFTMAX:
                continue
            x = _apply_layer(layer, x)
        outs.append(x.reshape(x.shape[0], -1))
    y = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
    if net.fusion_head:
        for layer in net.fusion_head:
            if layer.kind == SOFTMAX:
                continue
            y = _apply_layer(layer, y)
    loss, _ = _ce_loss_and_grad(y, labels)
    return loss


def grad_check(net: NetworkSpec, x, y, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Checks every weight and bias element, so keep the network small. eps
    must lie in [1e-7, 1e-3].
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ShapeMismatch("eps must lie in [1e-7, 1e-3]")
    validate_network(net)
    net = copy_network(net)
    batched, _ = _as_branch_batches(net, x)
    labels = np.atleast_1d(np.asarray(y))
    rng = np.random.default_rng(0)
    logits, caches = _forward_train(net, batched, rng, 0.0)
    _, dlogits = _ce_loss_and_grad(logits, labels)
    branch_grads, head_grads = _backward(net, caches, dlogits)

    layer_grad_pairs = []
    for layers, grads in zip(net.branches, branch_grads):
        layer_grad_pairs.extend(
            (l, g) for l, g in zip(layers, grads) if g is not None)
    if net.fusion_head:
        layer_grad_pairs.extend(
            (l, g) for l, g in zip(net.fusion_head, head_grads) if g is not None)

    worst = 0.0
    for layer, (dw, db) in layer_grad_pairs:
        for param, grad in ((layer.weights, dw), (layer.bias, db)):
            flat = param.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = _loss_on(net, batched, labels)
                flat[i] = orig - eps
                lm = _loss_on(net, batched, labels)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                denom = max(abs(fd), abs(gflat[i]), 1e-8)
                worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst
