"""Word-level LSTM language model, implemented from scratch on numpy.

Everything the model needs is explicit here: parameter initialization, the
stacked-LSTM forward pass, softmax cross-entropy, full backpropagation
through time, SGD-with-momentum training, and a little-endian checkpoint
format. Parameters are float32; losses and probability rows are computed
through float64 so scalar contracts (uniform loss = ln V) hold tightly, and
a float64 parameter mode exists for finite-difference verification.

Gate packing order within each layer's 4*units blocks: input, forget,
candidate, output. The forget-gate bias is initialized to 1.0.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import BOS_ID, TokenSequence

INIT_SCALE = 0.05
FORGET_BIAS = 1.0
CHECKPOINT_VERSION = 1
WEIGHTS_FILE = "weights.bin"
MANIFEST_FILE = "manifest.json"
VOCAB_FILE = "vocab.json"


class LMError(Exception):
    pass


class NonFiniteLossError(LMError):
    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step index {step}")
        self.step = step


class TrainingDivergedError(LMError):
    pass


class CheckpointError(LMError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


@dataclass
class LMConfig:
    vocab_size: int
    embed_dim: int = 128
    layers: int = 2
    units: int = 128
    seq_len: int = 50
    batch_size: int = 32
    learning_rate: float = 0.5
    momentum: float = 0.9
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 5:
            raise LMError("vocab_size must cover the four specials plus one word")
        if self.layers < 1 or self.units < 1 or self.embed_dim < 1:
            raise LMError("layers, units and embed_dim must be >= 1")
        if self.seq_len < 2:
            raise LMError("seq_len must be >= 2")
        if self.grad_clip <= 0:
            raise LMError("grad_clip must be > 0")


def param_specs(config: LMConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Tensor registry: fixed name/shape order used everywhere (checkpoints
    included)."""
    v, e, u = config.vocab_size, config.embed_dim, config.units
    specs: list[tuple[str, tuple[int, ...]]] = [("embedding", (v, e))]
    in_dim = e
    for layer in range(config.layers):
        specs.append((f"lstm{layer}.w_x", (in_dim, 4 * u)))
        specs.append((f"lstm{layer}.w_h", (u, 4 * u)))
        specs.append((f"lstm{layer}.bias", (4 * u,)))
        in_dim = u
    specs.append(("out.w", (u, v)))
    specs.append(("out.b", (v,)))
    return specs


@dataclass
class LMState:
    h: np.ndarray  # (layers, batch, units)
    c: np.ndarray

    @classmethod
    def zeros(cls, config: LMConfig, batch: int = 1, dtype=np.float32) -> "LMState":
        shape = (config.layers, batch, config.units)
        return cls(h=np.zeros(shape, dtype), c=np.zeros(shape, dtype))

    def copy(self) -> "LMState":
        return LMState(h=self.h.copy(), c=self.c.copy())


class LanguageModel:
    def __init__(self, config: LMConfig, params: dict[str, np.ndarray], step_count: int = 0):
        self.config = config
        self.params = params
        self.step_count = step_count

    @classmethod
    def init(cls, config: LMConfig) -> "LanguageModel":
        rng = np.random.default_rng(config.seed)
        params: dict[str, np.ndarray] = {}
        for name, shape in param_specs(config):
            params[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(np.float32)
        u = config.units
        for layer in range(config.layers):
            params[f"lstm{layer}.bias"][u : 2 * u] = FORGET_BIAS
        return cls(config, params)

    @property
    def dtype(self):
        return self.params["embedding"].dtype

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def to_dtype(self, dtype) -> "LanguageModel":
        return LanguageModel(
            self.config,
            {k: v.astype(dtype) for k, v in self.params.items()},
            self.step_count,
        )

    def copy(self) -> "LanguageModel":
        return LanguageModel(
            self.config, {k: v.copy() for k, v in self.params.items()}, self.step_count
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_ids(ids: np.ndarray, vocab_size: int) -> None:
    if ids.size == 0:
        raise LMError("token sequence must be non-empty")
    if ids.min() < 0 or ids.max() >= vocab_size:
        bad = int(ids.max() if ids.max() >= vocab_size else ids.min())
        raise LMError(f"token id {bad} out of range for vocab_size {vocab_size}")


def _as_id_array(ids) -> np.ndarray:
    if isinstance(ids, TokenSequence):
        ids = ids.ids
    return np.asarray(ids, dtype=np.int64)


_StepCache = tuple  # (x, h_prev, c_prev, i, f, g, o, c, tanh_c)


def _forward_batch(
    model: LanguageModel, ids: np.ndarray, state: LMState | None, keep_cache: bool
):
    """Run the stack over ids (batch, T). Returns logits (batch, T, vocab),
    the final state, per-step caches (when keep_cache) and the top-layer h
    sequence."""
    cfg = model.config
    p = model.params
    batch, steps = ids.shape
    u = cfg.units
    if state is None:
        state = LMState.zeros(cfg, batch=batch, dtype=model.dtype)
    if state.h.shape != (cfg.layers, batch, u) or state.c.shape != (cfg.layers, batch, u):
        raise LMError(
            f"state shape {state.h.shape} does not match "
            f"(layers={cfg.layers}, batch={batch}, units={u})"
        )
    h = [state.h[l].copy() for l in range(cfg.layers)]
    c = [state.c[l].copy() for l in range(cfg.layers)]

    # The output projection runs per step so single-sequence results are
    # bitwise independent of how many steps are fed per call.
    h_top = np.empty((batch, steps, u), dtype=model.dtype)
    logits = np.empty((batch, steps, cfg.vocab_size), dtype=model.dtype)
    caches: list[list[_StepCache]] = []
    for t in range(steps):
        x = p["embedding"][ids[:, t]]
        step_cache: list[_StepCache] = []
        for l in range(cfg.layers):
            z = x @ p[f"lstm{l}.w_x"] + h[l] @ p[f"lstm{l}.w_h"] + p[f"lstm{l}.bias"]
            zi, zf, zg, zo = z[:, :u], z[:, u : 2 * u], z[:, 2 * u : 3 * u], z[:, 3 * u :]
            gi = _sigmoid(zi)
            gf = _sigmoid(zf)
            gg = np.tanh(zg)
            go = _sigmoid(zo)
            c_new = gf * c[l] + gi * gg
            tc = np.tanh(c_new)
            h_new = go * tc
            if keep_cache:
                step_cache.append((x, h[l], c[l], gi, gf, gg, go, c_new, tc))
            h[l], c[l] = h_new, c_new
            x = h_new
        if keep_cache:
            caches.append(step_cache)
        h_top[:, t] = h[cfg.layers - 1]
        logits[:, t] = h[cfg.layers - 1] @ p["out.w"] + p["out.b"]

    final = LMState(h=np.stack(h), c=np.stack(c))
    return logits, final, caches, h_top


def softmax64(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z -= z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def forward(model: LanguageModel, ids, state: LMState | None = None):
    """Probability rows for each step of one sequence.

    Returns (probs, new_state) where probs[t] is the next-token distribution
    after consuming ids[..t]. Feeding a sequence in two halves with the
    carried state follows the exact same arithmetic as one full pass.
    Rows are float64 so downstream log-likelihoods carry full precision.
    """
    arr = _as_id_array(ids)
    _check_ids(arr, model.config.vocab_size)
    logits, final, _, _ = _forward_batch(model, arr[None, :], state, keep_cache=False)
    return softmax64(logits[0]), final


def forward_logits(model: LanguageModel, ids, state: LMState | None = None):
    """Like forward() but returns raw pre-softmax logits (T, vocab)."""
    arr = _as_id_array(ids)
    _check_ids(arr, model.config.vocab_size)
    logits, final, _, _ = _forward_batch(model, arr[None, :], state, keep_cache=False)
    return logits[0], final


def sequence_logprob(model: LanguageModel, ids) -> float:
    """ln of the chain-rule sequence probability, conditioning from BOS."""
    arr = _as_id_array(ids)
    _check_ids(arr, model.config.vocab_size)
    inputs = np.concatenate(([BOS_ID], arr[:-1]))
    probs, _ = forward(model, inputs)
    steps = np.arange(arr.size)
    return math.fsum(np.log(probs[steps, arr].astype(np.float64)))


def perplexity(model: LanguageModel, ids) -> float:
    arr = _as_id_array(ids)
    return float(math.exp(-sequence_logprob(model, arr) / arr.size))


def loss_and_grads(
    model: LanguageModel, batch: np.ndarray, state: LMState | None = None
):
    """Mean next-token cross-entropy and full-BPTT gradients.

    batch is (batch_size, window+1) token ids: inputs are batch[:, :-1],
    targets batch[:, 1:]. Returns (loss, grads keyed like params, final
    state). The final state is detached: gradients never flow across calls.
    """
    cfg = model.config
    p = model.params
    batch = np.asarray(batch, dtype=np.int64)
    if batch.ndim != 2 or batch.shape[1] < 2:
        raise LMError("batch must be (batch_size, window+1) with window >= 1")
    _check_ids(batch, cfg.vocab_size)
    inputs, targets = batch[:, :-1], batch[:, 1:]
    bsz, steps = inputs.shape
    u = cfg.units

    logits, final, caches, h_top = _forward_batch(model, inputs, state, keep_cache=True)

    probs = softmax64(logits)
    rows = np.arange(bsz)[:, None], np.arange(steps)[None, :]
    with np.errstate(divide="ignore"):
        logp = np.log(probs[rows[0], rows[1], targets])
    if not np.all(np.isfinite(logp)):
        bad_step = int(np.argwhere(~np.isfinite(logp))[0][1])
        raise NonFiniteLossError(bad_step)
    loss = float(-logp.mean())

    grads = {name: np.zeros_like(p[name]) for name, _ in param_specs(cfg)}

    dlogits = probs
    dlogits[rows[0], rows[1], targets] -= 1.0
    dlogits /= bsz * steps
    dlogits = dlogits.astype(model.dtype)

    flat_h = h_top.reshape(bsz * steps, u)
    flat_dl = dlogits.reshape(bsz * steps, cfg.vocab_size)
    grads["out.w"] += flat_h.T @ flat_dl
    grads["out.b"] += flat_dl.sum(axis=0)
    dh_out = dlogits @ p["out.w"].T  # (batch, T, units)

    dh_next = [np.zeros((bsz, u), dtype=model.dtype) for _ in range(cfg.layers)]
    dc_next = [np.zeros((bsz, u), dtype=model.dtype) for _ in range(cfg.layers)]
    for t in range(steps - 1, -1, -1):
        dx_above: np.ndarray | None = None
        for l in range(cfg.layers - 1, -1, -1):
            x, h_prev, c_prev, gi, gf, gg, go, c_new, tc = caches[t][l]
            dh = dh_next[l] + (dh_out[:, t] if l == cfg.layers - 1 else dx_above)
            dc = dc_next[l] + dh * go * (1.0 - tc * tc)
            dzo = dh * tc * go * (1.0 - go)
            dzf = dc * c_prev * gf * (1.0 - gf)
            dzi = dc * gg * gi * (1.0 - gi)
            dzg = dc * gi * (1.0 - gg * gg)
            dz = np.concatenate((dzi, dzf, dzg, dzo), axis=1)
            grads[f"lstm{l}.w_x"] += x.T @ dz
            grads[f"lstm{l}.w_h"] += h_prev.T @ dz
            grads[f"lstm{l}.bias"] += dz.sum(axis=0)
            dx_above = dz @ p[f"lstm{l}.w_x"].T
            dh_next[l] = dz @ p[f"lstm{l}.w_h"].T
            dc_next[l] = dc * gf
        np.add.at(grads["embedding"], inputs[:, t], dx_above)

    return loss, grads, final


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))


def clip_by_global_norm(grads: dict[str, np.ndarray], cap: float) -> float:
    norm = global_norm(grads)
    if norm > cap:
        scale = np.asarray(cap / norm, dtype=next(iter(grads.values())).dtype)
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainRecord:
    step: int
    loss: float
    tokens_per_sec: float


def train(
    model: LanguageModel,
    corpus,
    steps: int,
    callbacks: Iterable[Callable[[int, float, LanguageModel], None]] = (),
    log_path: str | Path | None = None,
) -> list[TrainRecord]:
    """SGD-with-momentum training over a token stream.

    The stream is cut into batch_size contiguous shards; consecutive windows
    carry LSTM state within a shard and reset on wraparound. Deterministic
    for a fixed config seed: no randomness enters after initialization.
    """
    cfg = model.config
    ids = _as_id_array(corpus)
    if ids.size <= cfg.seq_len * cfg.batch_size:
        raise LMError(
            f"corpus has {ids.size} tokens; need more than "
            f"seq_len*batch_size = {cfg.seq_len * cfg.batch_size}"
        )
    _check_ids(ids, cfg.vocab_size)
    shard_len = ids.size // cfg.batch_size
    shards = ids[: cfg.batch_size * shard_len].reshape(cfg.batch_size, shard_len)

    divergence_cap = 1e3 * math.log(cfg.vocab_size)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    mu = np.asarray(cfg.momentum, dtype=model.dtype)
    lr = np.asarray(cfg.learning_rate, dtype=model.dtype)

    log: list[TrainRecord] = []
    state: LMState | None = None
    pos = 0
    for step in range(steps):
        if pos + cfg.seq_len + 1 > shard_len:
            pos = 0
            state = None
        t0 = time.perf_counter()
        window = shards[:, pos : pos + cfg.seq_len + 1]
        loss, grads, state = loss_and_grads(model, window, state)
        if not math.isfinite(loss) or loss > divergence_cap:
            raise TrainingDivergedError(
                f"loss {loss:.3g} exceeded divergence cap {divergence_cap:.3g} at step {step}"
            )
        clip_by_global_norm(grads, cfg.grad_clip)
        for name, g in grads.items():
            v = velocity[name]
            v *= mu
            v -= lr * g
            model.params[name] += v
        pos += cfg.seq_len
        model.step_count += 1
        elapsed = time.perf_counter() - t0
        tps = cfg.batch_size * cfg.seq_len / elapsed if elapsed > 0 else 0.0
        log.append(TrainRecord(step=step, loss=loss, tokens_per_sec=tps))
        for cb in callbacks:
            cb(step, loss, model)

    if log_path is not None:
        write_training_log(log_path, log)
    return log


def write_training_log(path: str | Path, log: Sequence[TrainRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("step,loss,tokens_per_sec\n")
        for rec in log:
            fh.write(f"{rec.step},{rec.loss:.9g},{rec.tokens_per_sec:.1f}\n")


def save_checkpoint(model: LanguageModel, directory: str | Path, vocab=None) -> Path:
    """Write manifest.json + weights.bin (+ vocab.json) to directory.

    Weights are little-endian float32 in registry order regardless of host
    byte order; float64 verification models are downcast on save.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = []
    offset = 0
    blobs = []
    for name, shape in param_specs(model.config):
        arr = model.params[name]
        if tuple(arr.shape) != shape:
            raise CheckpointShapeError(f"tensor {name}: expected shape {shape}, got {arr.shape}")
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(shape), "offset": offset, "size": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "step_count": model.step_count,
        "dtype": "<f4",
        "tensors": tensors,
    }
    (directory / WEIGHTS_FILE).write_bytes(b"".join(blobs))
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    if vocab is not None:
        vocab.save(directory / VOCAB_FILE)
    return directory


def load_checkpoint(directory: str | Path) -> LanguageModel:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise CheckpointError(f"no {MANIFEST_FILE} in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format {manifest.get('format_version')!r}; "
            f"this build reads version {CHECKPOINT_VERSION}"
        )
    config = LMConfig(**manifest["config"])
    expected = param_specs(config)
    listed = {t["name"]: t for t in manifest["tensors"]}
    blob = (directory / WEIGHTS_FILE).read_bytes()
    params: dict[str, np.ndarray] = {}
    for name, shape in expected:
        entry = listed.get(name)
        if entry is None:
            raise CheckpointShapeError(f"tensor {name} missing from manifest")
        if tuple(entry["shape"]) != shape:
            raise CheckpointShapeError(
                f"tensor {name}: manifest shape {entry['shape']} does not match "
                f"config-derived shape {list(shape)}"
            )
        end = entry["offset"] + entry["size"]
        if end > len(blob):
            raise CheckpointTruncatedError(
                f"weights file holds {len(blob)} bytes; tensor {name} needs {end}"
            )
        flat = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)), offset=entry["offset"])
        params[name] = flat.reshape(shape).astype(np.float32)
    return LanguageModel(config, params, step_count=manifest.get("step_count", 0))


def checkpoint_vocab_path(directory: str | Path) -> Path:
    return Path(directory) / VOCAB_FILE


def grad_check(
    model: LanguageModel, batch: np.ndarray, eps: float = 1e-4
) -> tuple[float, dict[str, float]]:
    """Max relative error between BPTT and central finite differences.

    Runs on a float64 copy of the model; intended for small models only.
    """
    m64 = model.to_dtype(np.float64)
    _, analytic, _ = loss_and_grads(m64, batch)
    worst = 0.0
    per_param: dict[str, float] = {}
    for name in m64.params:
        arr = m64.params[name]
        num = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            lo_hi, _, _ = loss_and_grads(m64, batch)
            arr[idx] = orig - eps
            lo_lo, _, _ = loss_and_grads(m64, batch)
            arr[idx] = orig
            num[idx] = (lo_hi - lo_lo) / (2 * eps)
            it.iternext()
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(num)), 1e-8)
        rel = float((np.abs(analytic[name] - num) / denom).max())
        per_param[name] = rel
        worst = max(worst, rel)
    return worst, per_param
