"""The learned estimator: attention-based column interaction over schema
embeddings, feature assembly, an MLP on log-NDV, Adam training with
validation-selected checkpoints, and the semantic ablation variants.

Two forward implementations coexist on purpose:

* a fast matmul path used for training, gradients and validation scoring
  (deterministic run-to-run for a fixed seed on one machine);
* an exact path used by `predict`, whose reductions over the column axis
  are correctly rounded (math.fsum) and whose projections are per-row.
  BLAS matmuls round differently depending on row position, so only this
  path makes prediction *bit-exactly* permutation-equivariant.

Embeddings are frozen inputs; training touches only interaction and MLP
parameters. Tables are never split across an attention computation, even
though gradient batches are counted in columns.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import TableRecord, stable_seed
from .errors import DataError, EmbeddingLookupError, MissingDependencyError
from .profiles import FrequencyProfile, frequency_profile, profile_cutoff, random_sample, sequential_sample
from .semantics import embed_table, serialize_column

VARIANTS = ("full", "wo_col", "wo_tab", "wo_tab_and_col", "permute_col", "permute_tab")
_ATTENTION_VARIANTS = ("full", "wo_col", "permute_col", "permute_tab")


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 768              # embedding size l
    heads: int = 8
    layers: int = 1
    cutoff: int = 100           # profile feature length K
    use_stats: bool = True      # False = no-data mode (distinct input shape)
    hidden: tuple[int, ...] = (384, 128, 64)
    variant: str = "full"
    log1p_profile: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.variant not in VARIANTS:
            raise DataError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.uses_attention and self.dim % self.heads != 0:
            raise DataError(f"embedding dim {self.dim} not divisible by {self.heads} heads")
        if self.layers < 1 or self.heads < 1 or self.cutoff < 1:
            raise DataError("layers, heads and cutoff must all be >= 1")
        if not self.use_stats and self.variant == "wo_tab_and_col":
            raise DataError("the statistics-only variant needs use_stats=True")

    @property
    def uses_attention(self) -> bool:
        return self.variant in _ATTENTION_VARIANTS

    @property
    def semantic_dim(self) -> int:
        return 0 if self.variant == "wo_tab_and_col" else self.dim

    @property
    def feature_dim(self) -> int:
        return self.semantic_dim + 1 + (self.cutoff if self.use_stats else 0)

    def to_json(self) -> dict:
        return {
            "dim": self.dim, "heads": self.heads, "layers": self.layers,
            "cutoff": self.cutoff, "use_stats": self.use_stats,
            "hidden": list(self.hidden), "variant": self.variant,
            "log1p_profile": self.log1p_profile,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(
            dim=int(obj["dim"]), heads=int(obj["heads"]), layers=int(obj["layers"]),
            cutoff=int(obj["cutoff"]), use_stats=bool(obj["use_stats"]),
            hidden=tuple(obj["hidden"]), variant=obj["variant"],
            log1p_profile=bool(obj.get("log1p_profile", False)),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_columns: int = 256
    max_epochs: int = 200
    seed: int = 0
    sample_n: int = 100
    access: str = "sequential"  # how training profiles are drawn

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_columns < 1 or self.max_epochs < 1:
            raise DataError("learning rate, batch size and epochs must be positive")


_ATTN_KEYS = ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo")


@dataclass
class ModelParams:
    attn: list[dict[str, np.ndarray]]
    mlp: list[list[np.ndarray]]  # [W, b] per layer, output head last

    def named(self):
        for i, layer in enumerate(self.attn):
            for key in _ATTN_KEYS:
                yield f"attn.{i}.{key}", layer[key]
        for i, (w, b) in enumerate(self.mlp):
            yield f"mlp.{i}.W", w
            yield f"mlp.{i}.b", b

    def copy(self) -> "ModelParams":
        return ModelParams(
            attn=[{k: v.copy() for k, v in layer.items()} for layer in self.attn],
            mlp=[[w.copy(), b.copy()] for w, b in self.mlp],
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            attn=[{k: np.zeros_like(v) for k, v in layer.items()} for layer in self.attn],
            mlp=[[np.zeros_like(w), np.zeros_like(b)] for w, b in self.mlp],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for _, arr in self.named())

    def validate_shapes(self, config: ModelConfig) -> None:
        """Reject parameter sets inconsistent with the configuration (wrong
        layer count, truncated matrices, foreign feature width)."""
        expect_layers = config.layers if config.uses_attention else 0
        if len(self.attn) != expect_layers:
            raise DataError(
                f"checkpoint has {len(self.attn)} attention layer(s), config wants {expect_layers}"
            )
        for layer in self.attn:
            for stem in ("q", "k", "v", "o"):
                if layer[f"W{stem}"].shape != (config.dim, config.dim) or layer[
                    f"b{stem}"
                ].shape != (config.dim,):
                    raise DataError("attention parameter shapes do not match config")
        widths = (config.feature_dim, *config.hidden, 1)
        if len(self.mlp) != len(widths) - 1:
            raise DataError(
                f"checkpoint has {len(self.mlp)} MLP layer(s), config wants {len(widths) - 1}"
            )
        for (w, b), n_in, n_out in zip(self.mlp, widths[:-1], widths[1:]):
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise DataError(
                    f"MLP layer shape {w.shape} does not match config ({n_in}, {n_out})"
                )


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Uniform init scaled by 1/sqrt(fan-in), seeded and reproducible."""
    rng = np.random.default_rng(seed)

    def linear(n_in: int, n_out: int) -> list[np.ndarray]:
        s = 1.0 / math.sqrt(n_in)
        return [rng.uniform(-s, s, (n_in, n_out)), rng.uniform(-s, s, n_out)]

    attn = []
    if config.uses_attention:
        for _ in range(config.layers):
            layer = {}
            for stem in ("q", "k", "v", "o"):
                w, b = linear(config.dim, config.dim)
                layer[f"W{stem}"] = w
                layer[f"b{stem}"] = b
            attn.append(layer)
    mlp = []
    widths = (config.feature_dim, *config.hidden, 1)
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        mlp.append(linear(n_in, n_out))
    return ModelParams(attn=attn, mlp=mlp)


# --------------------------- fast (training) path ---------------------------

def column_interaction(X: np.ndarray, params: ModelParams, config: ModelConfig,
                       with_cache: bool = False):
    """Multi-head self-attention over a table's column embeddings.

    Output dimension equals the input dimension so the residual x + x' is
    well-typed; no positional encoding, no internal residual or norm.
    """
    t, l = X.shape
    if l != config.dim:
        raise DataError(f"embedding dim {l} != configured {config.dim}")
    dh = config.dim // config.heads
    scale = 1.0 / math.sqrt(dh)
    caches = []
    Xi = X
    for lp in params.attn:
        Q = Xi @ lp["Wq"] + lp["bq"]
        K = Xi @ lp["Wk"] + lp["bk"]
        V = Xi @ lp["Wv"] + lp["bv"]
        O = np.empty((t, config.dim))
        heads = []
        for h in range(config.heads):
            sl = slice(h * dh, (h + 1) * dh)
            S = (Q[:, sl] @ K[:, sl].T) * scale
            S -= S.max(axis=1, keepdims=True)
            E = np.exp(S)
            A = E / E.sum(axis=1, keepdims=True)
            heads.append(A)
            O[:, sl] = A @ V[:, sl]
        caches.append({"X": Xi, "Q": Q, "K": K, "V": V, "A": heads, "O": O})
        Xi = O @ lp["Wo"] + lp["bo"]
    return (Xi, caches) if with_cache else Xi


def _interaction_backward(G_out: np.ndarray, caches: list[dict], params: ModelParams,
                          config: ModelConfig, grads: ModelParams) -> np.ndarray:
    dh = config.dim // config.heads
    scale = 1.0 / math.sqrt(dh)
    G = G_out
    for li in reversed(range(len(params.attn))):
        lp, c, gl = params.attn[li], caches[li], grads.attn[li]
        gl["Wo"] += c["O"].T @ G
        gl["bo"] += G.sum(axis=0)
        G_O = G @ lp["Wo"].T
        G_Q = np.empty_like(c["Q"])
        G_K = np.empty_like(c["K"])
        G_V = np.empty_like(c["V"])
        for h in range(config.heads):
            sl = slice(h * dh, (h + 1) * dh)
            A = c["A"][h]
            G_Oh = G_O[:, sl]
            G_A = G_Oh @ c["V"][:, sl].T
            G_V[:, sl] = A.T @ G_Oh
            G_S = A * (G_A - (G_A * A).sum(axis=1, keepdims=True))
            G_Q[:, sl] = (G_S @ c["K"][:, sl]) * scale
            G_K[:, sl] = (G_S.T @ c["Q"][:, sl]) * scale
        X_in = c["X"]
        gl["Wq"] += X_in.T @ G_Q
        gl["bq"] += G_Q.sum(axis=0)
        gl["Wk"] += X_in.T @ G_K
        gl["bk"] += G_K.sum(axis=0)
        gl["Wv"] += X_in.T @ G_V
        gl["bv"] += G_V.sum(axis=0)
        G = G_Q @ lp["Wq"].T + G_K @ lp["Wk"].T + G_V @ lp["Wv"].T
    return G


def assemble_features(x: np.ndarray | None, x_prime: np.ndarray | None, N: int,
                      profile_vec: np.ndarray | None, config: ModelConfig) -> np.ndarray:
    """[semantic block, log N, profile]: the semantic block is x + x' for the
    full model, one of the two for the single-sided ablations, absent for
    the statistics-only variant; the profile block exists iff use_stats."""
    if N < 1:
        raise DataError(f"column size must be >= 1, got {N}")
    parts = []
    sem = _semantic_block(x, x_prime, config)
    if sem is not None:
        parts.append(sem)
    parts.append(np.array([math.log(N)]))
    if config.use_stats:
        if profile_vec is None:
            raise DataError("use_stats model needs a profile vector")
        pv = np.asarray(profile_vec, dtype=float)
        if pv.shape != (config.cutoff,):
            raise DataError(f"profile vector shape {pv.shape} != ({config.cutoff},)")
        parts.append(np.log1p(pv) if config.log1p_profile else pv)
    out = np.concatenate(parts)
    if out.shape != (config.feature_dim,):
        raise DataError(f"feature vector shape {out.shape} != ({config.feature_dim},)")
    return out


def _semantic_block(x, x_prime, config: ModelConfig) -> np.ndarray | None:
    v = config.variant
    if v == "wo_tab_and_col":
        return None
    if v == "wo_col":
        return np.asarray(x_prime)
    if v == "wo_tab":
        return np.asarray(x)
    return np.asarray(x) + np.asarray(x_prime)


def forward(features: np.ndarray, params: ModelParams, config: ModelConfig) -> float:
    """Single feature vector -> log D-hat (exact per-row path)."""
    f = np.asarray(features, dtype=float)
    if f.shape != (config.feature_dim,):
        raise DataError(f"feature length {f.shape} != ({config.feature_dim},)")
    a = f
    for w, b in params.mlp[:-1]:
        a = np.maximum(np.dot(a, w) + b, 0.0)
    w, b = params.mlp[-1]
    out = float((np.dot(a, w) + b)[0])
    if not math.isfinite(out):
        raise DataError("non-finite model output")
    return out


def _mlp_forward_batch(F: np.ndarray, params: ModelParams):
    acts = [F]
    a = F
    for w, b in params.mlp[:-1]:
        a = np.maximum(a @ w + b, 0.0)
        acts.append(a)
    w, b = params.mlp[-1]
    return (a @ w + b)[:, 0], acts


def _mlp_backward_batch(G_out: np.ndarray, acts: list[np.ndarray], params: ModelParams,
                        grads: ModelParams) -> np.ndarray:
    G = G_out[:, None]
    w, _ = params.mlp[-1]
    grads.mlp[-1][0] += acts[-1].T @ G
    grads.mlp[-1][1] += G.sum(axis=0)
    G = G @ w.T
    for k in reversed(range(len(params.mlp) - 1)):
        G = G * (acts[k + 1] > 0.0)
        w, _ = params.mlp[k]
        grads.mlp[k][0] += acts[k].T @ G
        grads.mlp[k][1] += G.sum(axis=0)
        G = G @ w.T
    return G


def loss(predictions: Sequence[float], ground_truths: Sequence[float]) -> float:
    """Mean squared error in log space: mean((log Dhat - log D)^2)."""
    if len(predictions) != len(ground_truths):
        raise DataError("prediction/truth length mismatch")
    if len(predictions) == 0:
        raise DataError("empty batch")
    total = 0.0
    for p, d in zip(predictions, ground_truths):
        if d < 1:
            raise DataError(f"ground-truth NDV must be >= 1, got {d}")
        total += (p - math.log(d)) ** 2
    return total / len(predictions)


# ------------------------------ batch plumbing ------------------------------

@dataclass
class TableExample:
    """One table's training inputs: frozen embeddings, per-column scalars,
    optional profile features, and log-NDV targets."""

    table_id: str
    X: np.ndarray | None          # (t, l) or None for the stats-only variant
    log_n: np.ndarray             # (t,)
    profiles: np.ndarray | None   # (t, K) cutoff vectors when use_stats
    log_d: np.ndarray             # (t,)

    @property
    def t(self) -> int:
        return len(self.log_n)


def ablation_texts(texts: Sequence[str], variant: str, table_id: str, seed: int) -> list[str]:
    """Text-level semantic distortions: permute_col shuffles the characters
    of each serialized schema (seeded per text, so caches stay coherent);
    permute_tab reassigns texts to columns within the table (seeded per
    table, so it deliberately breaks column/data pairing)."""
    if variant == "permute_col":
        out = []
        for text in texts:
            rng = random.Random(stable_seed(seed, "permute_col", text))
            chars = list(text)
            rng.shuffle(chars)
            out.append("".join(chars))
        return out
    if variant == "permute_tab":
        rng = random.Random(stable_seed(seed, "permute_tab", table_id))
        out = list(texts)
        rng.shuffle(out)
        return out
    return list(texts)


def table_texts(table: TableRecord, config: ModelConfig, seed: int) -> list[str]:
    texts = [serialize_column(s).text for s in table.schemas]
    return ablation_texts(texts, config.variant, table.table_id, seed)


def build_examples(
    tables: Sequence[TableRecord],
    ground_truth: dict,
    provider,
    config: ModelConfig,
    train_cfg: TrainConfig,
) -> list[TableExample]:
    """Assemble per-table training inputs; fails fast if any embedding or
    ground-truth record is missing."""
    examples = []
    missing: list[str] = []
    for table in tables:
        X = None
        if config.semantic_dim:
            try:
                X = embed_table(table, provider, texts=table_texts(table, config, train_cfg.seed))
            except EmbeddingLookupError as exc:
                missing.append(str(exc))
                continue
        log_n, log_d, prof_rows = [], [], []
        for i, col in enumerate(table.columns):
            gt = ground_truth.get((table.table_id, i))
            if gt is None:
                raise MissingDependencyError(
                    f"no ground truth for {table.table_id} column {i}"
                )
            log_n.append(math.log(col.N))
            log_d.append(math.log(gt.D))
            if config.use_stats:
                n_eff = min(train_cfg.sample_n, col.N)
                if train_cfg.access == "random":
                    sample = random_sample(col, n_eff, stable_seed(train_cfg.seed, table.table_id, i))
                else:
                    sample = sequential_sample(col, n_eff)
                prof_rows.append(profile_cutoff(frequency_profile(sample), config.cutoff))
        examples.append(
            TableExample(
                table_id=table.table_id,
                X=X,
                log_n=np.array(log_n),
                profiles=np.array(prof_rows) if config.use_stats else None,
                log_d=np.array(log_d),
            )
        )
    if missing:
        raise MissingDependencyError(
            "missing embeddings for {} table(s); first: {}".format(len(missing), missing[0])
        )
    return examples


def _batch_forward(batch: Sequence[TableExample], params: ModelParams, config: ModelConfig,
                   with_cache: bool = False):
    feats, caches = [], []
    for ex in batch:
        x_prime, cache = None, None
        if config.uses_attention:
            x_prime, cache = column_interaction(ex.X, params, config, with_cache=True)
        caches.append(cache)
        for i in range(ex.t):
            sem = _semantic_block(
                ex.X[i] if ex.X is not None else None,
                x_prime[i] if x_prime is not None else None,
                config,
            )
            parts = [] if sem is None else [sem]
            parts.append(ex.log_n[i : i + 1])
            if config.use_stats:
                row = ex.profiles[i]
                parts.append(np.log1p(row) if config.log1p_profile else row)
            feats.append(np.concatenate(parts))
    F = np.vstack(feats)
    preds, acts = _mlp_forward_batch(F, params)
    if not with_cache:
        return preds
    return preds, (F, acts, caches)


def gradients(batch: Sequence[TableExample], params: ModelParams, config: ModelConfig):
    """Analytic gradients of the log-space MSE through MLP, residual and all
    attention layers. Returns (loss, grads)."""
    preds, (F, acts, caches) = _batch_forward(batch, params, config, with_cache=True)
    targets = np.concatenate([ex.log_d for ex in batch])
    B = len(targets)
    diffs = preds - targets
    batch_loss = float(np.mean(diffs**2))
    grads = params.zeros_like()
    G_pred = 2.0 * diffs / B
    G_F = _mlp_backward_batch(G_pred, acts, params, grads)
    if config.uses_attention:
        row = 0
        for ex, cache in zip(batch, caches):
            G_xp = G_F[row : row + ex.t, : config.semantic_dim]
            _interaction_backward(G_xp, cache, params, config, grads)
            row += ex.t
    return batch_loss, grads


class Adam:
    """Standard first/second-moment optimizer with bias correction."""

    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self.m = {name: np.zeros_like(a) for name, a in params.named()}
        self.v = {name: np.zeros_like(a) for name, a in params.named()}

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        c = self.cfg
        self.step_count += 1
        t = self.step_count
        for (name, p), (_, g) in zip(params.named(), grads.named()):
            m = self.m[name] = c.beta1 * self.m[name] + (1 - c.beta1) * g
            v = self.v[name] = c.beta2 * self.v[name] + (1 - c.beta2) * g * g
            m_hat = m / (1 - c.beta1**t)
            v_hat = v / (1 - c.beta2**t)
            p -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)


# --------------------------------- training ---------------------------------

@dataclass
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    seed: int
    provider_tag: str
    provider_dim: int
    selected_epoch: int = -1
    val_q90: float = math.inf

    def to_json(self) -> dict:
        return {
            "format": "ndv-model-v1",
            "config": self.config.to_json(),
            "seed": self.seed,
            "provider": {"tag": self.provider_tag, "dim": self.provider_dim},
            "selected": {"epoch": self.selected_epoch, "val_q90": _json_num(self.val_q90)},
            "params": {
                "attn": [{k: v.tolist() for k, v in layer.items()} for layer in self.params.attn],
                "mlp": [[w.tolist(), b.tolist()] for w, b in self.params.mlp],
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Checkpoint":
        if obj.get("format") != "ndv-model-v1":
            raise DataError(f"not a model checkpoint (format={obj.get('format')!r})")
        params = ModelParams(
            attn=[{k: np.asarray(v, dtype=float) for k, v in layer.items()}
                  for layer in obj["params"]["attn"]],
            mlp=[[np.asarray(w, dtype=float), np.asarray(b, dtype=float)]
                 for w, b in obj["params"]["mlp"]],
        )
        sel = obj.get("selected", {})
        raw_q90 = sel.get("val_q90", math.inf)
        config = ModelConfig.from_json(obj["config"])
        params.validate_shapes(config)
        return cls(
            config=config,
            params=params,
            seed=int(obj["seed"]),
            provider_tag=obj["provider"]["tag"],
            provider_dim=int(obj["provider"]["dim"]),
            selected_epoch=int(sel.get("epoch", -1)),
            val_q90=math.inf if raw_q90 == "inf" else float(raw_q90),
        )


def _json_num(v: float):
    if math.isinf(v):
        return "inf"
    return v


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(ckpt.to_json(), fp)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, encoding="utf-8") as fp:
        return Checkpoint.from_json(json.load(fp))


def _val_q90(examples: Sequence[TableExample], params: ModelParams, config: ModelConfig) -> float:
    from .evaluation import percentile, q_error

    preds = _batch_forward(examples, params, config)
    targets = np.concatenate([ex.log_d for ex in examples])
    with np.errstate(over="ignore"):
        d_hat = np.exp(preds)
    qs = [q_error(float(dh), int(round(math.exp(t)))).value for dh, t in zip(d_hat, targets)]
    return percentile(qs, 90)


def train(
    train_tables: Sequence[TableRecord],
    val_tables: Sequence[TableRecord],
    ground_truth: dict,
    provider,
    config: ModelConfig,
    train_cfg: TrainConfig,
):
    """Adam training over whole-table batches of ~batch_columns columns;
    the checkpoint with the best validation 90th-percentile q-error wins.
    Returns (checkpoint, log entries)."""
    if not train_tables or not val_tables:
        raise DataError("training needs non-empty train and validation splits")
    train_ex = build_examples(train_tables, ground_truth, provider, config, train_cfg)
    val_ex = build_examples(val_tables, ground_truth, provider, config, train_cfg)

    params = init_params(config, train_cfg.seed)
    opt = Adam(params, train_cfg)
    shuffler = random.Random(stable_seed(train_cfg.seed, "epoch-shuffle"))
    best = Checkpoint(
        config=config, params=params.copy(), seed=train_cfg.seed,
        provider_tag=getattr(provider, "provider_id", "unknown"),
        provider_dim=provider.dim,
    )
    log: list[dict] = []
    for epoch in range(train_cfg.max_epochs):
        order = list(range(len(train_ex)))
        shuffler.shuffle(order)
        epoch_loss, batches = 0.0, 0
        batch: list[TableExample] = []
        cols = 0
        for idx in order + [None]:
            if idx is not None:
                batch.append(train_ex[idx])
                cols += train_ex[idx].t
                if cols < train_cfg.batch_columns:
                    continue
            if not batch:
                continue
            batch_loss, grads = gradients(batch, params, config)
            opt.step(params, grads)
            if not params.all_finite():
                raise DataError(f"non-finite parameters after update (epoch {epoch})")
            epoch_loss += batch_loss * sum(ex.t for ex in batch)
            batches += 1
            batch, cols = [], 0
        total_cols = sum(ex.t for ex in train_ex)
        q90 = _val_q90(val_ex, params, config)
        selected = q90 < best.val_q90
        if selected:
            best = Checkpoint(
                config=config, params=params.copy(), seed=train_cfg.seed,
                provider_tag=getattr(provider, "provider_id", "unknown"),
                provider_dim=provider.dim, selected_epoch=epoch, val_q90=q90,
            )
        log.append(
            {"epoch": epoch, "train_loss": epoch_loss / total_cols,
             "val_q90": _json_num(q90), "selected": selected}
        )
    return best, log


# -------------------------------- prediction --------------------------------

def _rowwise_affine(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # per-row matvec: bitwise identical output rows for identical input rows,
    # wherever they sit in the table
    return np.vstack([np.dot(X[i], W) for i in range(X.shape[0])]) + b


def _interaction_exact(X: np.ndarray, params: ModelParams, config: ModelConfig) -> np.ndarray:
    t = X.shape[0]
    dh = config.dim // config.heads
    scale = 1.0 / math.sqrt(dh)
    Xi = X
    for lp in params.attn:
        Q = _rowwise_affine(Xi, lp["Wq"], lp["bq"])
        K = _rowwise_affine(Xi, lp["Wk"], lp["bk"])
        V = _rowwise_affine(Xi, lp["Wv"], lp["bv"])
        O = np.empty((t, config.dim))
        for h in range(config.heads):
            sl = slice(h * dh, (h + 1) * dh)
            Qh, Kh, Vh = Q[:, sl], K[:, sl], V[:, sl]
            for i in range(t):
                s_row = np.array([math.fsum(Qh[i] * Kh[k]) for k in range(t)]) * scale
                e_row = np.exp(s_row - s_row.max())
                a_row = e_row / math.fsum(e_row)
                weighted = a_row[:, None] * Vh
                O[i, sl] = [math.fsum(weighted[:, m]) for m in range(dh)]
        Xi = _rowwise_affine(O, lp["Wo"], lp["bo"])
    return Xi


def predict(
    table: TableRecord,
    provider,
    checkpoint: Checkpoint,
    profiles: Sequence[FrequencyProfile] | None = None,
) -> np.ndarray:
    """Per-column NDV estimates exp(model output); bit-exactly equivariant
    to column order for the non-permuting variants. The no-data model
    (use_stats=False) requires no sample and reads no cell data."""
    config = checkpoint.config
    if provider.dim != checkpoint.provider_dim:
        raise DataError(
            f"provider dim {provider.dim} != checkpoint dim {checkpoint.provider_dim}"
        )
    if config.use_stats:
        if profiles is None:
            raise DataError("use_stats checkpoint needs per-column profiles")
        if len(profiles) != table.t:
            raise DataError(f"{len(profiles)} profiles for {table.t} columns")
    x_mat, xp_mat = None, None
    if config.semantic_dim:
        x_mat = embed_table(table, provider, texts=table_texts(table, config, checkpoint.seed))
        if config.uses_attention:
            xp_mat = _interaction_exact(x_mat, checkpoint.params, config)
    out = np.empty(table.t)
    for i, col in enumerate(table.columns):
        pv = None
        if config.use_stats:
            pv = np.asarray(profile_cutoff(profiles[i], config.cutoff))
        feats = assemble_features(
            x_mat[i] if x_mat is not None else None,
            xp_mat[i] if xp_mat is not None else None,
            col.N,
            pv,
            config,
        )
        out[i] = math.exp(min(forward(feats, checkpoint.params, config), 700.0))
    return out


def ablation_config(base: ModelConfig, kind: str) -> ModelConfig:
    """Derive the configuration for one of the semantic ablation variants."""
    if kind not in VARIANTS:
        raise DataError(f"unknown ablation {kind!r}")
    return replace(base, variant=kind)
