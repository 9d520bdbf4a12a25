"""Stance scorers: constant baselines, a trainable clipped linear regressor
with a from-scratch Adam optimizer and slanted triangular schedule, and
adapters for external scoring processes."""

from __future__ import annotations

import base64
import json
import logging
import math
import queue
import subprocess
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import PaperRecord
from .features import DEFAULT_MAX_LEN, FeatureVector, Vocabulary, featurize_paper

logger = logging.getLogger(__name__)

MODEL_FORMAT = "stance-linear-model"
MODEL_VERSION = 1

KIND_POS = "pos"
KIND_ZERO = "zero"
KIND_NEG = "neg"
KIND_AVG = "avg"
KIND_LINEAR = "linear"
KIND_EXTERNAL = "external"
BASELINE_KINDS = (KIND_POS, KIND_ZERO, KIND_NEG, KIND_AVG)

# Raw external scores beyond this magnitude are reported as suspect.
SUSPECT_MAGNITUDE = 10.0


class ScorerUnavailableError(Exception):
    pass


class NonFiniteGradientError(Exception):
    def __init__(self, step: int, coordinate: int) -> None:
        super().__init__(f"non-finite gradient at step {step}, coordinate {coordinate}")
        self.step = step
        self.coordinate = coordinate


class TrainingFailedError(Exception):
    pass


def clip_stance(value: float) -> float:
    return max(-1.0, min(1.0, value))


class Scorer(Protocol):
    kind: str

    def score(self, title: str, abstract: str) -> float: ...


@dataclass(frozen=True)
class ConstantScorer:
    kind: str
    value: float

    def score(self, title: str, abstract: str) -> float:
        return self.value


def pos_scorer() -> ConstantScorer:
    return ConstantScorer(KIND_POS, 1.0)


def zero_scorer() -> ConstantScorer:
    return ConstantScorer(KIND_ZERO, 0.0)


def neg_scorer() -> ConstantScorer:
    return ConstantScorer(KIND_NEG, -1.0)


def avg_scorer(train_mean: float) -> ConstantScorer:
    """Constant predictor at the training-label mean."""
    return ConstantScorer(KIND_AVG, train_mean)


@dataclass
class LinearModel:
    """Dense weight vector over a vocabulary plus trailing bias slot."""

    weights: np.ndarray
    vocab_fingerprint: str = ""
    trained_on: str = ""

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")


@dataclass
class LinearScorer:
    model: LinearModel
    vocab: Vocabulary
    max_len: int = DEFAULT_MAX_LEN
    kind: str = KIND_LINEAR

    def __post_init__(self) -> None:
        if self.model.weights.shape[0] != self.vocab.dim:
            raise ValueError(
                f"model dim {self.model.weights.shape[0]} != vocab dim {self.vocab.dim}"
            )
        if self.model.vocab_fingerprint and (
            self.model.vocab_fingerprint != self.vocab.fingerprint()
        ):
            raise ValueError("model was trained against a different vocabulary")

    def score(self, title: str, abstract: str) -> float:
        fv = featurize_paper(title, abstract, self.vocab, max_len=self.max_len)
        w = self.model.weights
        return float(sum(w[i] * x for i, x in zip(fv.indices, fv.weights)))


@dataclass
class ExternalScorer:
    adapter: "ScorerAdapter"
    max_len: int = DEFAULT_MAX_LEN
    kind: str = KIND_EXTERNAL

    def score(self, title: str, abstract: str) -> float:
        return external_score(self.adapter, title, abstract, max_len=self.max_len)


def predict(scorer: Scorer, paper: PaperRecord) -> float:
    """Clipped stance prediction for one paper, regardless of scorer kind."""
    try:
        raw = scorer.score(paper.title, paper.abstract)
    except ScorerUnavailableError as exc:
        raise ScorerUnavailableError(f"paper {paper.id!r}: {exc}") from exc
    return clip_stance(raw)


# --- Training configuration and schedule ---


@dataclass
class TrainingConfig:
    """Training recipe for the linear regressor.

    The reference max_lr of 5e-5 suits transformer-style external scorers;
    the sparse linear model needs a far larger step, hence the 0.1 default.
    """

    batch_size: int = 16
    max_lr: float = 0.1
    warmup_ratio: float = 0.06
    epochs: int = 3
    adam_eps: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    n_restarts: int = 10
    n_repeats: int = 3
    rng_seed: int = 0
    l2_penalty: float = 1e-3

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must be in (0, 1)")
        for beta in (self.adam_beta1, self.adam_beta2):
            if not 0.0 < beta < 1.0:
                raise ValueError("adam betas must be in (0, 1)")
        if self.l2_penalty < 0.0:
            raise ValueError("l2_penalty must be >= 0")
        if self.n_restarts < 1 or self.n_repeats < 1:
            raise ValueError("n_restarts and n_repeats must be >= 1")


REFERENCE_EXTERNAL_MAX_LR = 5e-5


def stlr(step: int, total_steps: int, cfg: TrainingConfig) -> float:
    """Slanted triangular schedule: linear rise to max_lr over the warmup
    fraction of total_steps, then linear decay to zero at total_steps."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = cfg.warmup_ratio * total_steps
    if step <= warmup:
        return cfg.max_lr * step / warmup
    return cfg.max_lr * (total_steps - step) / (total_steps - warmup)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), step=0)


def adam_step(
    weights: np.ndarray,
    gradient: np.ndarray,
    state: AdamState,
    lr: float,
    cfg: TrainingConfig,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; pure in weights and state.

    m_t = b1*m + (1-b1)*g,  v_t = b2*v + (1-b2)*g^2,
    w  -= lr * (m_t / (1-b1^t)) / (sqrt(v_t / (1-b2^t)) + eps)
    """
    if gradient.shape != weights.shape:
        raise ValueError("gradient and weights dimensions differ")
    if not np.all(np.isfinite(gradient)):
        bad = int(np.flatnonzero(~np.isfinite(gradient))[0])
        raise NonFiniteGradientError(state.step + 1, bad)
    t = state.step + 1
    m = cfg.adam_beta1 * state.m + (1 - cfg.adam_beta1) * gradient
    v = cfg.adam_beta2 * state.v + (1 - cfg.adam_beta2) * gradient**2
    m_hat = m / (1 - cfg.adam_beta1**t)
    v_hat = v / (1 - cfg.adam_beta2**t)
    new_weights = weights - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new_weights, AdamState(m=m, v=v, step=t)


# --- Loss and training ---


def stack_features(vectors: Sequence[FeatureVector]) -> sp.csr_matrix:
    """Stack sparse vectors into a CSR design matrix."""
    if not vectors:
        raise ValueError("no feature vectors to stack")
    dim = vectors[0].dim
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for fv in vectors:
        if fv.dim != dim:
            raise ValueError("feature vectors disagree on dimension")
        indices.extend(fv.indices)
        data.extend(fv.weights)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data), np.array(indices), np.array(indptr)), shape=(len(vectors), dim)
    )


def mse_l2_loss(weights: np.ndarray, x, y: np.ndarray, l2_penalty: float) -> float:
    """Mean squared error of the unclipped output plus an L2 penalty on all
    weights except the trailing bias slot."""
    residual = np.asarray(x @ weights) - y
    penalty = l2_penalty * float(weights[:-1] @ weights[:-1])
    return float(residual @ residual) / len(y) + penalty


def mse_l2_grad(weights: np.ndarray, x, y: np.ndarray, l2_penalty: float) -> np.ndarray:
    residual = np.asarray(x @ weights) - y
    grad = np.asarray(x.T @ residual) * (2.0 / len(y))
    grad[:-1] += 2.0 * l2_penalty * weights[:-1]
    return grad


@dataclass
class RestartOutcome:
    restart: int
    dev_mse: float | None
    failed: bool = False
    failure: str | None = None


@dataclass
class RepeatOutcome:
    repeat: int
    restarts: list[RestartOutcome]
    chosen_restart: int
    chosen_dev_mse: float


@dataclass
class SelectionReport:
    """Per-repeat restart selection: the chosen index minimizes dev MSE."""

    repeats: list[RepeatOutcome]

    @property
    def best_repeat(self) -> int:
        return min(self.repeats, key=lambda r: r.chosen_dev_mse).repeat


@dataclass
class TrainResult:
    model: LinearModel
    report: SelectionReport
    repeat_models: list[LinearModel]


def dev_mse(weights: np.ndarray, x_dev, y_dev: np.ndarray) -> float:
    preds = np.clip(np.asarray(x_dev @ weights), -1.0, 1.0)
    return float(np.mean((preds - y_dev) ** 2))


def _run_one_restart(
    x_train, y_train, x_dev, y_dev, cfg: TrainingConfig, seed_parts: tuple[int, ...]
) -> tuple[np.ndarray | None, float | None, str | None]:
    rng = np.random.default_rng(list(seed_parts))
    n, dim = x_train.shape
    weights = rng.standard_normal(dim) * 0.01
    state = AdamState.zeros(dim)
    n_batches = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    step = 0
    try:
        # Overflow here means a diverged restart; it is reported, not raised.
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(cfg.epochs):
                order = rng.permutation(n)
                for b in range(n_batches):
                    batch = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
                    grad = mse_l2_grad(
                        weights, x_train[batch], y_train[batch], cfg.l2_penalty
                    )
                    lr = stlr(step, total_steps, cfg)
                    weights, state = adam_step(weights, grad, state, lr, cfg)
                    step += 1
    except NonFiniteGradientError as exc:
        return None, None, str(exc)
    if not np.all(np.isfinite(weights)):
        return None, None, "non-finite weights after training"
    mse = dev_mse(weights, x_dev, y_dev)
    if not math.isfinite(mse):
        return None, None, f"non-finite dev MSE {mse}"
    return weights, mse, None


def train_linear(
    x_train,
    y_train: np.ndarray,
    x_dev,
    y_dev: np.ndarray,
    cfg: TrainingConfig,
    vocab_fingerprint: str = "",
    trained_on: str = "",
) -> TrainResult:
    """Mini-batch Adam training with restart selection.

    Each repeat trains ``n_restarts`` independently seeded models and keeps
    the one with the lowest dev MSE (clipped predictions). The returned
    model is the best across repeats; per-repeat winners stay available for
    variance reporting. Diverged restarts are excluded from selection.
    """
    if x_train.shape[0] == 0 or x_dev.shape[0] == 0:
        raise ValueError("train and dev sets must be non-empty")
    y_train = np.asarray(y_train, dtype=np.float64)
    y_dev = np.asarray(y_dev, dtype=np.float64)

    repeats: list[RepeatOutcome] = []
    repeat_models: list[LinearModel] = []
    for repeat in range(cfg.n_repeats):
        outcomes: list[RestartOutcome] = []
        candidates: list[tuple[float, int, np.ndarray]] = []
        for restart in range(cfg.n_restarts):
            weights, mse, failure = _run_one_restart(
                x_train, y_train, x_dev, y_dev, cfg, (cfg.rng_seed, repeat, restart)
            )
            if failure is not None:
                outcomes.append(
                    RestartOutcome(restart, None, failed=True, failure=failure)
                )
                continue
            outcomes.append(RestartOutcome(restart, mse))
            candidates.append((mse, restart, weights))
        if not candidates:
            raise TrainingFailedError(
                f"repeat {repeat}: all {cfg.n_restarts} restarts diverged"
            )
        best_mse, best_restart, best_weights = min(candidates, key=lambda c: (c[0], c[1]))
        repeats.append(
            RepeatOutcome(
                repeat=repeat,
                restarts=outcomes,
                chosen_restart=best_restart,
                chosen_dev_mse=best_mse,
            )
        )
        repeat_models.append(
            LinearModel(
                weights=best_weights,
                vocab_fingerprint=vocab_fingerprint,
                trained_on=trained_on,
            )
        )
    report = SelectionReport(repeats=repeats)
    return TrainResult(
        model=repeat_models[report.best_repeat], report=report, repeat_models=repeat_models
    )


# --- Model persistence ---


def save_model(model: LinearModel, path: str | Path) -> None:
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "vocab_fingerprint": model.vocab_fingerprint,
        "trained_on": model.trained_on,
        "dim": int(model.weights.shape[0]),
    }
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        for w in model.weights:
            handle.write(repr(float(w)) + "\n")


def load_model(path: str | Path) -> LinearModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty model file")
    header = json.loads(lines[0])
    if header.get("format") != MODEL_FORMAT or header.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} v{MODEL_VERSION} file")
    weights = np.array([float(line) for line in lines[1:] if line.strip()])
    if weights.shape[0] != header["dim"]:
        raise ValueError(
            f"{path}: header says dim={header['dim']} but found {weights.shape[0]} weights"
        )
    return LinearModel(
        weights=weights,
        vocab_fingerprint=header.get("vocab_fingerprint", ""),
        trained_on=header.get("trained_on", ""),
    )


# --- External scorer adapters ---


class ScorerAdapter(Protocol):
    def request(self, request_id: str, title: str, abstract: str, max_len: int) -> float:
        """Raw (unclipped) stance from the external scorer."""
        ...


class LineProtocolAdapter:
    """Scores via a line-oriented subprocess.

    Request: ``request_id<TAB>max_len<TAB>base64(title)<TAB>base64(abstract)``.
    Response: ``request_id<TAB>stance``. Requests are serialized; a reader
    thread enforces the timeout.
    """

    def __init__(self, command: Sequence[str], timeout: float = 30.0) -> None:
        self._command = list(command)
        self._timeout = timeout
        self._lock = threading.Lock()
        self._proc: subprocess.Popen[str] | None = None
        self._responses: queue.Queue[str] = queue.Queue()

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self._command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        thread = threading.Thread(target=self._pump, args=(self._proc,), daemon=True)
        thread.start()

    def _pump(self, proc: subprocess.Popen[str]) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._responses.put(line)

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                self._proc.terminate()
                self._proc.wait(timeout=5)
            self._proc = None

    def request(self, request_id: str, title: str, abstract: str, max_len: int) -> float:
        encoded = "\t".join(
            (
                request_id,
                str(max_len),
                base64.b64encode(title.encode("utf-8")).decode("ascii"),
                base64.b64encode(abstract.encode("utf-8")).decode("ascii"),
            )
        )
        with self._lock:
            self._ensure_started()
            assert self._proc is not None and self._proc.stdin is not None
            try:
                self._proc.stdin.write(encoded + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ScorerUnavailableError(f"scorer process gone: {exc}") from exc
            try:
                line = self._responses.get(timeout=self._timeout)
            except queue.Empty:
                raise ScorerUnavailableError(
                    f"no response within {self._timeout}s"
                ) from None
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2 or parts[0] != request_id:
            raise ScorerUnavailableError(f"malformed response {line!r}")
        try:
            return float(parts[1])
        except ValueError as exc:
            raise ScorerUnavailableError(f"non-numeric stance {parts[1]!r}") from exc


class HttpScorerAdapter:
    """POST /score carrying the same fields as the line protocol."""

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        import httpx

        self._endpoint = endpoint
        self._client = httpx.Client(timeout=timeout)

    def request(self, request_id: str, title: str, abstract: str, max_len: int) -> float:
        import httpx

        try:
            response = self._client.post(
                self._endpoint,
                json={
                    "request_id": request_id,
                    "max_len": max_len,
                    "title": title,
                    "abstract": abstract,
                },
            )
            response.raise_for_status()
            payload = response.json()
        except (httpx.HTTPError, json.JSONDecodeError) as exc:
            raise ScorerUnavailableError(str(exc)) from exc
        if "stance" not in payload:
            raise ScorerUnavailableError(f"response lacks 'stance': {payload!r}")
        try:
            return float(payload["stance"])
        except (TypeError, ValueError) as exc:
            raise ScorerUnavailableError(f"non-numeric stance {payload['stance']!r}") from exc


def external_score(
    adapter: ScorerAdapter, title: str, abstract: str, max_len: int = DEFAULT_MAX_LEN
) -> float:
    """One adapter round-trip; clips the response and flags wild values."""
    request_id = uuid.uuid4().hex[:12]
    raw = adapter.request(request_id, title, abstract, max_len)
    if not math.isfinite(raw):
        raise ScorerUnavailableError(f"non-finite stance {raw!r}")
    if abs(raw) > SUSPECT_MAGNITUDE:
        logger.warning("suspect external stance %s for request %s", raw, request_id)
    return clip_stance(raw)
