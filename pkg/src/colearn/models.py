"""The two sequence architectures, built entirely from the autograd ops.

* A bidirectional early-fusion LSTM classifier: forward and backward LSTM
  cells over the fused per-timestep features, final hidden states
  concatenated and pushed through a two-layer head.
* A memory-fusion regressor: one LSTM per modality advancing in lockstep,
  softmax attention over the concatenated cell memories of consecutive
  steps, and a gated recurrent memory that decides how much of each
  attended proposal to absorb.

Weight matrices are stored (out x in) and transposed on the tape where a
batch-row product is needed, so checkpoints keep the conventional
orientation while gradients still reach the stored tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import checkpoint as _checkpoint
from .autograd import (
    DimensionError,
    Tensor,
    add,
    as_tensor,
    concat,
    cross_entropy_loss,
    l1_loss,
    matmul,
    mul_elementwise,
    sigmoid,
    slice_along,
    softmax,
    tanh_act,
    transpose,
)
from .data import MultimodalBatch, fuse_batch


def _uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


# ---------------------------------------------------------------------------
# LSTM cell


@dataclass
class LstmParams:
    """Parameters of one LSTM cell.

    Input-to-gate matrices are (hidden x input), hidden-to-gate matrices
    are (hidden x hidden), biases are (hidden,).
    """

    W_ii: Tensor
    W_if: Tensor
    W_ig: Tensor
    W_io: Tensor
    W_hi: Tensor
    W_hf: Tensor
    W_hg: Tensor
    W_ho: Tensor
    b_ii: Tensor
    b_if: Tensor
    b_ig: Tensor
    b_io: Tensor
    b_hi: Tensor
    b_hf: Tensor
    b_hg: Tensor
    b_ho: Tensor

    @property
    def input_dim(self) -> int:
        return self.W_ii.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_ii.shape[0]

    @classmethod
    def initialized(cls, rng: np.random.Generator, input_dim: int, hidden_dim: int) -> "LstmParams":
        bound = 1.0 / math.sqrt(hidden_dim)
        kwargs = {}
        for f in fields(cls):
            if f.name.startswith("W_i"):
                kwargs[f.name] = _uniform(rng, (hidden_dim, input_dim), bound)
            elif f.name.startswith("W_h"):
                kwargs[f.name] = _uniform(rng, (hidden_dim, hidden_dim), bound)
            else:
                kwargs[f.name] = _uniform(rng, (hidden_dim,), bound)
        return cls(**kwargs)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        kwargs = {}
        for f in fields(cls):
            if f.name.startswith("W_i"):
                shape: tuple[int, ...] = (hidden_dim, input_dim)
            elif f.name.startswith("W_h"):
                shape = (hidden_dim, hidden_dim)
            else:
                shape = (hidden_dim,)
            kwargs[f.name] = Tensor(np.zeros(shape), requires_grad=True)
        return cls(**kwargs)

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}


class _SteppedLstm:
    """One cell prepared for repeated steps: the four gate matrices are
    concatenated and transposed once, so each step costs two matrix
    products instead of eight."""

    def __init__(self, p: LstmParams):
        self.input_weights_t = transpose(concat([p.W_ii, p.W_if, p.W_ig, p.W_io], axis=0))
        self.hidden_weights_t = transpose(concat([p.W_hi, p.W_hf, p.W_hg, p.W_ho], axis=0))
        self.bias = add(
            concat([p.b_ii, p.b_if, p.b_ig, p.b_io], axis=0),
            concat([p.b_hi, p.b_hf, p.b_hg, p.b_ho], axis=0),
        )
        self.hidden = p.hidden_dim

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        d = self.hidden
        pre = add(add(matmul(x, self.input_weights_t), matmul(h, self.hidden_weights_t)), self.bias)
        in_gate = sigmoid(slice_along(pre, 1, 0, d))
        forget_gate = sigmoid(slice_along(pre, 1, d, 2 * d))
        cell_input = tanh_act(slice_along(pre, 1, 2 * d, 3 * d))
        out_gate = sigmoid(slice_along(pre, 1, 3 * d, 4 * d))
        c_next = add(mul_elementwise(forget_gate, c), mul_elementwise(in_gate, cell_input))
        h_next = mul_elementwise(out_gate, tanh_act(c_next))
        return h_next, c_next


def lstm_cell_step(x, h, c, params: LstmParams) -> tuple[Tensor, Tensor]:
    """One step of the gated cell update: i, f, o gates squash with sigmoid,
    the candidate with tanh, then c' = f*c + i*g and h' = o*tanh(c')."""
    return _SteppedLstm(params).step(as_tensor(x), as_tensor(h), as_tensor(c))


# ---------------------------------------------------------------------------
# feedforward building block


@dataclass
class Feedforward:
    """Single-hidden-layer net: out = W2 tanh(W1 x + b1) + b2."""

    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.W2.shape[0]

    @classmethod
    def initialized(
        cls, rng: np.random.Generator, input_dim: int, output_dim: int, hidden_dim: int | None = None
    ) -> "Feedforward":
        hidden = input_dim if hidden_dim is None else hidden_dim
        return cls(
            W1=_uniform(rng, (hidden, input_dim), 1.0 / math.sqrt(input_dim)),
            b1=_uniform(rng, (hidden,), 1.0 / math.sqrt(input_dim)),
            W2=_uniform(rng, (output_dim, hidden), 1.0 / math.sqrt(hidden)),
            b2=_uniform(rng, (output_dim,), 1.0 / math.sqrt(hidden)),
        )

    @classmethod
    def zeros(cls, input_dim: int, output_dim: int, hidden_dim: int | None = None) -> "Feedforward":
        hidden = input_dim if hidden_dim is None else hidden_dim
        return cls(
            W1=Tensor(np.zeros((hidden, input_dim)), requires_grad=True),
            b1=Tensor(np.zeros(hidden), requires_grad=True),
            W2=Tensor(np.zeros((output_dim, hidden)), requires_grad=True),
            b2=Tensor(np.zeros(output_dim), requires_grad=True),
        )

    def apply(self, x: Tensor) -> Tensor:
        z = tanh_act(add(matmul(x, transpose(self.W1)), self.b1))
        return add(matmul(z, transpose(self.W2)), self.b2)

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}


# ---------------------------------------------------------------------------
# bidirectional early-fusion LSTM


@dataclass
class BiEflstmParams:
    forward_cell: LstmParams
    backward_cell: LstmParams
    linear1_W: Tensor  # (hidden, 2*hidden)
    linear1_b: Tensor
    linear2_W: Tensor  # (num_classes, hidden)
    linear2_b: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.forward_cell.hidden_dim

    @property
    def num_classes(self) -> int:
        return self.linear2_W.shape[0]

    @classmethod
    def initialized(
        cls, rng: np.random.Generator, input_dim: int, hidden_dim: int, num_classes: int
    ) -> "BiEflstmParams":
        bound = 1.0 / math.sqrt(hidden_dim)
        return cls(
            forward_cell=LstmParams.initialized(rng, input_dim, hidden_dim),
            backward_cell=LstmParams.initialized(rng, input_dim, hidden_dim),
            linear1_W=_uniform(rng, (hidden_dim, 2 * hidden_dim), bound),
            linear1_b=_uniform(rng, (hidden_dim,), bound),
            linear2_W=_uniform(rng, (num_classes, hidden_dim), bound),
            linear2_b=_uniform(rng, (num_classes,), bound),
        )

    def named(self) -> dict[str, Tensor]:
        out = self.forward_cell.named("forward_cell.")
        out.update(self.backward_cell.named("backward_cell."))
        out.update(
            linear1_W=self.linear1_W,
            linear1_b=self.linear1_b,
            linear2_W=self.linear2_W,
            linear2_b=self.linear2_b,
        )
        return out


def bi_eflstm_hidden_states(fused: np.ndarray, params: BiEflstmParams) -> tuple[Tensor, Tensor]:
    """Final hidden states of the forward-time and backward-time cells.

    ``fused`` is a [batch, T, features] array of already-fused inputs.
    """
    if fused.ndim != 3:
        raise DimensionError(f"expected [batch, T, features] input, got shape {fused.shape}")
    batch, steps, _ = fused.shape
    if steps < 1:
        raise DimensionError("empty sequence")

    hidden = params.hidden_dim
    fwd = _SteppedLstm(params.forward_cell)
    bwd = _SteppedLstm(params.backward_cell)
    h_f = c_f = Tensor(np.zeros((batch, hidden)))
    h_b = c_b = Tensor(np.zeros((batch, hidden)))
    for t in range(steps):
        h_f, c_f = fwd.step(Tensor(fused[:, t, :]), h_f, c_f)
        h_b, c_b = bwd.step(Tensor(fused[:, steps - 1 - t, :]), h_b, c_b)
    return h_f, h_b


def bi_eflstm_forward(fused: np.ndarray, params: BiEflstmParams) -> Tensor:
    """Class logits for a [batch, T, features] fused input."""
    h_f, h_b = bi_eflstm_hidden_states(fused, params)
    joined = concat([h_f, h_b], axis=1)
    z = tanh_act(add(matmul(joined, transpose(params.linear1_W)), params.linear1_b))
    return add(matmul(z, transpose(params.linear2_W)), params.linear2_b)


# ---------------------------------------------------------------------------
# memory fusion network


def dman_attention(memory_window: Tensor, attention_net: Feedforward) -> Tensor:
    """Softmax attention over the concatenated two-step memories.

    Scores come from the attention net, are normalized along the feature
    axis of each batch row, and reweight the window elementwise.
    """
    memory_window = as_tensor(memory_window)
    scores = attention_net.apply(memory_window)
    if scores.shape != memory_window.shape:
        raise DimensionError(
            f"attention scores {scores.shape} must match the memory window {memory_window.shape}"
        )
    weights = softmax(scores, axis=1)
    return mul_elementwise(memory_window, weights)


def gated_memory_update(
    memory_window: Tensor,
    memory_prev: Tensor,
    proposal_net: Feedforward,
    retain_gate: Feedforward,
    update_gate: Feedforward,
) -> Tensor:
    """Blend the previous memory with a squashed proposal.

    Both gates are squashed with a sigmoid so the mixture stays bounded:
    u_t = retain * u_prev + update * tanh(proposal).
    """
    memory_window = as_tensor(memory_window)
    memory_prev = as_tensor(memory_prev)
    proposal = proposal_net.apply(memory_window)
    keep = sigmoid(retain_gate.apply(memory_window))
    write = sigmoid(update_gate.apply(memory_window))
    if proposal.shape != memory_prev.shape or keep.shape != memory_prev.shape:
        raise DimensionError(
            f"gate/proposal outputs {proposal.shape} must match the memory {memory_prev.shape}"
        )
    return add(mul_elementwise(keep, memory_prev), mul_elementwise(write, tanh_act(proposal)))


@dataclass
class MfnParams:
    language_cell: LstmParams
    audio_cell: LstmParams
    visual_cell: LstmParams
    attention_net: Feedforward  # 2M -> 2M, M = sum of per-modality memory dims
    proposal_net: Feedforward   # 2M -> memory_dim
    retain_gate: Feedforward    # 2M -> memory_dim
    update_gate: Feedforward    # 2M -> memory_dim
    output_head: Feedforward    # (sum of hiddens + memory_dim) -> 1

    @property
    def memory_dim(self) -> int:
        return self.proposal_net.output_dim

    @classmethod
    def initialized(
        cls,
        rng: np.random.Generator,
        dims: tuple[int, int, int],
        hidden_dim: int = 32,
        memory_dim: int = 32,
        net_hidden_dim: int | None = None,
    ) -> "MfnParams":
        window = 2 * 3 * hidden_dim
        return cls(
            language_cell=LstmParams.initialized(rng, dims[0], hidden_dim),
            audio_cell=LstmParams.initialized(rng, dims[1], hidden_dim),
            visual_cell=LstmParams.initialized(rng, dims[2], hidden_dim),
            attention_net=Feedforward.initialized(rng, window, window, net_hidden_dim),
            proposal_net=Feedforward.initialized(rng, window, memory_dim, net_hidden_dim),
            retain_gate=Feedforward.initialized(rng, window, memory_dim, net_hidden_dim),
            update_gate=Feedforward.initialized(rng, window, memory_dim, net_hidden_dim),
            output_head=Feedforward.initialized(rng, 3 * hidden_dim + memory_dim, 1, net_hidden_dim),
        )

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update(self.language_cell.named("language_cell."))
        out.update(self.audio_cell.named("audio_cell."))
        out.update(self.visual_cell.named("visual_cell."))
        out.update(self.attention_net.named("attention_net."))
        out.update(self.proposal_net.named("proposal_net."))
        out.update(self.retain_gate.named("retain_gate."))
        out.update(self.update_gate.named("update_gate."))
        out.update(self.output_head.named("output_head."))
        return out


def mfn_forward(language: np.ndarray, audio: np.ndarray, visual: np.ndarray, params: MfnParams) -> Tensor:
    """Scalar prediction per sample from three [batch, T, dim] blocks.

    The per-modality cells advance together; from the second step on, the
    concatenated memories of steps t-1 and t (ordered language, audio,
    visual at t-1, then the same at t) are attended and folded into the
    gated memory. The head reads the final hidden states plus the memory.
    """
    shapes = {a.shape[:2] for a in (language, audio, visual)}
    if len(shapes) != 1 or language.ndim != 3:
        raise DimensionError(
            f"modalities must share [batch, T]: {language.shape}, {audio.shape}, {visual.shape}"
        )
    batch, steps = language.shape[:2]
    if steps < 1:
        raise DimensionError("empty sequence")

    cells = [
        _SteppedLstm(params.language_cell),
        _SteppedLstm(params.audio_cell),
        _SteppedLstm(params.visual_cell),
    ]
    blocks = (language, audio, visual)
    hidden_dims = [params.language_cell.hidden_dim, params.audio_cell.hidden_dim, params.visual_cell.hidden_dim]
    hs = [Tensor(np.zeros((batch, d))) for d in hidden_dims]
    cs = [Tensor(np.zeros((batch, d))) for d in hidden_dims]
    memory = Tensor(np.zeros((batch, params.memory_dim)))

    prev_cs: list[Tensor] | None = None
    for t in range(steps):
        prev_cs = cs
        next_states = [cell.step(Tensor(block[:, t, :]), h, c) for cell, block, h, c in zip(cells, blocks, hs, cs)]
        hs = [s[0] for s in next_states]
        cs = [s[1] for s in next_states]
        if t >= 1:
            window = concat(prev_cs + cs, axis=1)
            attended = dman_attention(window, params.attention_net)
            memory = gated_memory_update(
                attended, memory, params.proposal_net, params.retain_gate, params.update_gate
            )
    return params.output_head.apply(concat(hs + [memory], axis=1))


# ---------------------------------------------------------------------------
# task-facing wrappers used by the training loop and CLI


class BiEflstmClassifier:
    """Early-fusion classifier: fuses the three modality blocks and trains
    with cross-entropy."""

    kind = "bi_eflstm"
    task_kind = "classification"

    def __init__(self, dims: tuple[int, int, int], hidden_dim: int, num_classes: int, rng: np.random.Generator):
        self.dims = tuple(int(d) for d in dims)
        self.hidden_dim = int(hidden_dim)
        self.num_classes = int(num_classes)
        self.params = BiEflstmParams.initialized(rng, sum(self.dims), self.hidden_dim, self.num_classes)

    def parameters(self) -> dict[str, Tensor]:
        return self.params.named()

    def logits(self, batch: MultimodalBatch) -> Tensor:
        return bi_eflstm_forward(fuse_batch(batch), self.params)

    def loss(self, batch: MultimodalBatch) -> Tensor:
        return cross_entropy_loss(self.logits(batch), batch.targets.astype(np.int64))

    def predict(self, batch: MultimodalBatch) -> np.ndarray:
        return np.argmax(self.logits(batch).data, axis=1)

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "dims": list(self.dims),
            "hidden_dim": self.hidden_dim,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "BiEflstmClassifier":
        return cls(tuple(cfg["dims"]), cfg["hidden_dim"], cfg["num_classes"], np.random.default_rng(0))


class MfnRegressor:
    """Per-modality memory-fusion regressor trained with mean absolute error."""

    kind = "mfn"
    task_kind = "regression"

    def __init__(
        self,
        dims: tuple[int, int, int],
        hidden_dim: int = 32,
        memory_dim: int | None = None,
        net_hidden_dim: int | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.dims = tuple(int(d) for d in dims)
        self.hidden_dim = int(hidden_dim)
        self.memory_dim = int(memory_dim if memory_dim is not None else hidden_dim)
        self.net_hidden_dim = net_hidden_dim
        rng = np.random.default_rng(0) if rng is None else rng
        self.params = MfnParams.initialized(rng, self.dims, self.hidden_dim, self.memory_dim, net_hidden_dim)

    def parameters(self) -> dict[str, Tensor]:
        return self.params.named()

    def outputs(self, batch: MultimodalBatch) -> Tensor:
        return mfn_forward(batch.language, batch.audio, batch.visual, self.params)

    def loss(self, batch: MultimodalBatch) -> Tensor:
        return l1_loss(self.outputs(batch), batch.targets.reshape(-1, 1))

    def predict(self, batch: MultimodalBatch) -> np.ndarray:
        return self.outputs(batch).data.reshape(-1)

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "dims": list(self.dims),
            "hidden_dim": self.hidden_dim,
            "memory_dim": self.memory_dim,
            "net_hidden_dim": self.net_hidden_dim,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "MfnRegressor":
        return cls(
            tuple(cfg["dims"]),
            cfg["hidden_dim"],
            cfg["memory_dim"],
            cfg.get("net_hidden_dim"),
            np.random.default_rng(0),
        )


_MODEL_KINDS = {BiEflstmClassifier.kind: BiEflstmClassifier, MfnRegressor.kind: MfnRegressor}

Model = BiEflstmClassifier | MfnRegressor


def set_parameters(model: Model, arrays: dict[str, np.ndarray]) -> None:
    """Load named arrays into the model's tensors (shapes must match)."""
    params = model.parameters()
    missing = set(params) - set(arrays)
    extra = set(arrays) - set(params)
    if missing or extra:
        raise KeyError(f"parameter names do not match (missing={sorted(missing)}, extra={sorted(extra)})")
    for name, tensor in params.items():
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != tensor.shape:
            raise DimensionError(f"parameter {name}: stored shape {arr.shape} != model shape {tensor.shape}")
        tensor.data = np.ascontiguousarray(arr)


def snapshot_parameters(model: Model) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.parameters().items()}


def save_model(model: Model, path) -> None:
    _checkpoint.save_checkpoint(path, model.config(), snapshot_parameters(model))


def load_model(path) -> Model:
    cfg, arrays = _checkpoint.load_checkpoint(path)
    kind = cfg.get("kind")
    if kind not in _MODEL_KINDS:
        raise _checkpoint.CorruptHeaderError(f"checkpoint names unknown model kind {kind!r}")
    model = _MODEL_KINDS[kind].from_config(cfg)
    set_parameters(model, arrays)
    return model
