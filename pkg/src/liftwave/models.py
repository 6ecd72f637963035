"""Model assembly, training loops, evaluation, and ablation variants.

The node model stacks two filter layers (ReLU between, class scores out);
the graph model runs three filter layers, concatenates their outputs,
mean-pools per graph, and finishes with a fully-connected layer. Training
uses Adam with early stopping on validation loss and restores the
best-validation parameters before the single test evaluation.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import GraphDataset, NodeDataset, fold_triple
from .filtering import FilterContext, FilterLayer
from .optim import Adam
from .preprocess import PreprocessedGraph

VARIANTS = ("full", "fixed_lifting", "no_lifting", "gwnn_diag", "t_gwnn")


class TrainingError(RuntimeError):
    pass


class VariantError(ValueError):
    pass


def _variant_modes(variant: str):
    if variant not in VARIANTS:
        raise VariantError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    lifting = {"full": "learned", "fixed_lifting": "fixed"}.get(variant, "none")
    spectral = "diag" if variant == "gwnn_diag" else "soft_threshold"
    return lifting, spectral


@dataclass
class NodeModelConfig:
    hidden: int = 16
    scale_t: float = 0.7
    basis_threshold: float = 1e-6
    theta: float = 0.001
    blocks: int = 1
    attention_dim: Optional[int] = None
    lr: float = 0.02
    weight_decay: float = 1e-3
    dropout: float = 0.8
    max_epochs: int = 1000
    patience: int = 100
    split_seed: int = 0
    variant: str = "full"


@dataclass
class GraphModelConfig:
    hidden: int = 32
    conv_layers: int = 3
    scale_t: float = 0.7
    basis_threshold: float = 0.01
    theta: float = 0.01
    blocks: int = 1
    attention_dim: Optional[int] = None
    lr: float = 0.001
    weight_decay: float = 0.0
    dropout: float = 0.5
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 50
    split_seed: int = 0
    variant: str = "full"


@dataclass
class RunMetrics:
    """Per-epoch curves plus the final test evaluation."""

    seed: int
    parameter_count: int
    epochs: List[dict] = field(default_factory=list)
    best_epoch: int = -1
    test_accuracy: float = float("nan")
    total_time: float = 0.0

    def summary(self) -> dict:
        return {
            "type": "summary",
            "seed": self.seed,
            "parameter_count": self.parameter_count,
            "best_epoch": self.best_epoch,
            "n_epochs": len(self.epochs),
            "test_accuracy": self.test_accuracy,
            "total_time": self.total_time,
        }

    def write_jsonl(self, path: str):
        with open(path, "w") as fh:
            for rec in self.epochs:
                fh.write(json.dumps({"type": "epoch", **rec}) + "\n")
            fh.write(json.dumps(self.summary()) + "\n")


class NodeModel:
    """Two filter layers over one preprocessed graph."""

    def __init__(
        self,
        cfg: NodeModelConfig,
        pg: PreprocessedGraph,
        num_classes: int,
        init_seed: int = 0,
    ):
        lifting, spectral = _variant_modes(cfg.variant)
        rng = np.random.default_rng(init_seed)
        d_in = pg.graph.node_features.shape[1]
        n = pg.graph.num_nodes
        self.cfg = cfg
        self.ctx = FilterContext.from_basis(pg.basis, pg.split)
        self.features = ad.constant(pg.graph.node_features)
        common = dict(
            blocks=cfg.blocks,
            attention_dim=cfg.attention_dim,
            lifting=lifting,
            spectral_filter=spectral,
            diag_size=n if spectral == "diag" else None,
        )
        self.layer1 = FilterLayer(
            d_in, cfg.hidden, cfg.theta, activation="relu", rng=rng, **common
        )
        self.layer2 = FilterLayer(
            cfg.hidden, num_classes, cfg.theta, activation="none", rng=rng, **common
        )

    def parameters(self) -> List[Tensor]:
        return self.layer1.parameters() + self.layer2.parameters()

    def parameter_count(self) -> int:
        return sum(p.values.size for p in self.parameters())

    def logits(
        self,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        probe: Optional[list] = None,
    ) -> Tensor:
        h = self.layer1.forward(
            self.features,
            self.ctx,
            training=training,
            dropout_rate=self.cfg.dropout,
            rng=rng,
            probe=probe,
        )
        return self.layer2.forward(
            h, self.ctx, training=training, dropout_rate=self.cfg.dropout, rng=rng, probe=probe
        )

    def predict_proba(self) -> np.ndarray:
        return ad.row_softmax(self.logits(training=False)).values

    def state_arrays(self) -> List[np.ndarray]:
        return [p.values for p in self.parameters()]

    def first_layer_sparsity(self, threshold: Optional[float] = None):
        """Fraction of first-layer wavelet coefficients below the threshold,
        before and after the lifting step (the compaction the lift buys)."""
        import scipy.sparse as sp

        from .filtering import sparsity_ratio
        from .lifting import LiftOperators, multi_block_lift

        thr = self.cfg.theta if threshold is None else threshold
        layer = self.layer1
        split = self.ctx.split
        with ad.no_grad():
            xhat = ad.matmul(self.features, layer.W)
            coeffs = ad.const_matmul(self.ctx.basis_forward_t, xhat).values
            before = sparsity_ratio(coeffs, thr)
            if layer.lifting == "none" or split is None or layer.n_blocks == 0:
                return before, before
            blocks = []
            for u_vals, p_vals in layer._block_operators(xhat, self.ctx):
                update = sp.csr_matrix(
                    (u_vals.values, split.cross_even_odd.indices, split.cross_even_odd.indptr),
                    shape=split.cross_even_odd.shape,
                )
                predict = sp.csr_matrix(
                    (p_vals.values, split.cross_odd_even.indices, split.cross_odd_even.indptr),
                    shape=split.cross_odd_even.shape,
                )
                blocks.append(LiftOperators(update=update, predict=predict))
            coarse, detail = multi_block_lift(
                coeffs[split.odd_nodes], coeffs[split.even_nodes], blocks
            )
            after = sparsity_ratio(np.concatenate([detail, coarse]), thr)
        return before, after


class GraphModel:
    """Shared filter stack applied per graph, pooled, and classified."""

    def __init__(
        self,
        cfg: GraphModelConfig,
        pgs: Sequence[PreprocessedGraph],
        num_classes: int,
        init_seed: int = 0,
    ):
        lifting, spectral = _variant_modes(cfg.variant)
        sizes = {pg.graph.num_nodes for pg in pgs}
        if spectral == "diag" and len(sizes) > 1:
            raise VariantError(
                "the diagonal spectral filter allocates one weight per node and "
                "cannot be shared across graphs of different sizes"
            )
        rng = np.random.default_rng(init_seed)
        d_in = pgs[0].graph.node_features.shape[1]
        self.cfg = cfg
        self.contexts = [FilterContext.from_basis(pg.basis, pg.split) for pg in pgs]
        self.features = [ad.constant(pg.graph.node_features) for pg in pgs]
        common = dict(
            blocks=cfg.blocks,
            attention_dim=cfg.attention_dim,
            lifting=lifting,
            spectral_filter=spectral,
            diag_size=next(iter(sizes)) if spectral == "diag" else None,
        )
        dims = [d_in] + [cfg.hidden] * cfg.conv_layers
        self.layers = [
            FilterLayer(dims[i], dims[i + 1], cfg.theta, activation="relu", rng=rng, **common)
            for i in range(cfg.conv_layers)
        ]
        pooled_dim = cfg.hidden * cfg.conv_layers
        limit = np.sqrt(6.0 / (pooled_dim + num_classes))
        self.fc_w = ad.parameter(rng.uniform(-limit, limit, size=(pooled_dim, num_classes)))
        self.fc_b = ad.parameter(np.zeros(num_classes))

    def parameters(self) -> List[Tensor]:
        params: List[Tensor] = []
        for layer in self.layers:
            params.extend(layer.parameters())
        params.extend([self.fc_w, self.fc_b])
        return params

    def parameter_count(self) -> int:
        return sum(p.values.size for p in self.parameters())

    def logits(
        self,
        graph_indices: Sequence[int],
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        pooled = []
        for gi in graph_indices:
            x = self.features[gi]
            ctx = self.contexts[gi]
            outs = []
            for layer in self.layers:
                x = layer.forward(x, ctx, training=training, dropout_rate=self.cfg.dropout, rng=rng)
                outs.append(x)
            pooled.append(ad.mean_rows(ad.concat_cols(outs)))
        stacked = ad.concat_rows(pooled)
        return ad.add(ad.matmul(stacked, self.fc_w), self.fc_b)


def build_node_model(cfg: NodeModelConfig, pg: PreprocessedGraph, num_classes: int, seed: int = 0) -> NodeModel:
    return NodeModel(cfg, pg, num_classes, init_seed=seed)


def build_graph_model(
    cfg: GraphModelConfig, pgs: Sequence[PreprocessedGraph], num_classes: int, seed: int = 0
) -> GraphModel:
    return GraphModel(cfg, pgs, num_classes, init_seed=seed)


def _accuracy(logits: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    pred = logits[idx].argmax(axis=1)
    return float(np.mean(pred == labels[idx]))


def train_node_model(
    model: NodeModel,
    data: NodeDataset,
    seed: int = 0,
    metrics_path: Optional[str] = None,
    record_sparsity: bool = True,
) -> RunMetrics:
    """Full-batch training with validation-loss early stopping.

    Per-epoch records include the first layer's coefficient sparsity before
    and after lifting unless ``record_sparsity`` is off.
    """
    cfg = model.cfg
    labels = data.graph.node_labels
    rng = np.random.default_rng(seed + 1)
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    metrics = RunMetrics(seed=seed, parameter_count=model.parameter_count())
    best_val = np.inf
    best_state = opt.state_snapshot()
    start = time.perf_counter()

    for epoch in range(cfg.max_epochs):
        tick = time.perf_counter()
        opt.zero_grad()
        out = model.logits(training=True, rng=rng)
        loss = ad.softmax_cross_entropy(out, labels, data.train_idx)
        if not np.isfinite(loss.values):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        ad.backward(loss)
        opt.step()

        with ad.no_grad():
            eval_logits = model.logits(training=False)
            train_loss = ad.softmax_cross_entropy(eval_logits, labels, data.train_idx).values
            val_loss = ad.softmax_cross_entropy(eval_logits, labels, data.val_idx).values
        rec = {
            "epoch": epoch,
            "train_loss": float(train_loss),
            "val_loss": float(val_loss),
            "train_acc": _accuracy(eval_logits.values, labels, data.train_idx),
            "val_acc": _accuracy(eval_logits.values, labels, data.val_idx),
            "epoch_time": time.perf_counter() - tick,
        }
        if record_sparsity:
            before, after = model.first_layer_sparsity()
            rec["sparsity_before_lift"] = before
            rec["sparsity_after_lift"] = after
        metrics.epochs.append(rec)
        if val_loss < best_val:
            best_val = float(val_loss)
            metrics.best_epoch = epoch
            best_state = opt.state_snapshot()
        elif epoch - metrics.best_epoch >= cfg.patience:
            break

    opt.load_snapshot(best_state)
    with ad.no_grad():
        final = model.logits(training=False).values
    metrics.test_accuracy = _accuracy(final, labels, data.test_idx)
    metrics.total_time = time.perf_counter() - start
    if metrics_path:
        metrics.write_jsonl(metrics_path)
    return metrics


def evaluate_node_model(model: NodeModel, data: NodeDataset, idx: np.ndarray) -> float:
    return _accuracy(model.logits(training=False).values, data.graph.node_labels, idx)


def train_graph_model(
    model: GraphModel,
    labels: np.ndarray,
    train_graphs: np.ndarray,
    val_graphs: np.ndarray,
    test_graphs: np.ndarray,
    seed: int = 0,
    metrics_path: Optional[str] = None,
) -> RunMetrics:
    """Mini-batch training over graphs with early stopping on validation loss."""
    cfg = model.cfg
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed + 1)
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    metrics = RunMetrics(seed=seed, parameter_count=model.parameter_count())
    best_val = np.inf
    best_state = opt.state_snapshot()
    start = time.perf_counter()

    def split_loss_acc(indices):
        with ad.no_grad():
            logits = model.logits(indices, training=False).values
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        lab = labels[indices]
        loss = float(-logp[np.arange(len(indices)), lab].mean())
        acc = float(np.mean(logits.argmax(axis=1) == lab))
        return loss, acc

    for epoch in range(cfg.max_epochs):
        tick = time.perf_counter()
        order = rng.permutation(len(train_graphs))
        batch_losses = []
        batch_accs = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = train_graphs[order[lo : lo + cfg.batch_size]]
            opt.zero_grad()
            out = model.logits(batch, training=True, rng=rng)
            loss = ad.softmax_cross_entropy(out, labels[batch], np.arange(len(batch)))
            if not np.isfinite(loss.values):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            ad.backward(loss)
            opt.step()
            batch_losses.append(float(loss.values) * len(batch))
            batch_accs.append(np.sum(out.values.argmax(axis=1) == labels[batch]))

        # train metrics come from the minibatch passes; only the validation
        # split needs an extra forward for early stopping
        train_loss = float(np.sum(batch_losses) / len(train_graphs))
        train_acc = float(np.sum(batch_accs) / len(train_graphs))
        val_loss, val_acc = split_loss_acc(val_graphs)
        rec = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "train_acc": train_acc,
            "val_acc": val_acc,
            "epoch_time": time.perf_counter() - tick,
        }
        metrics.epochs.append(rec)
        if val_loss < best_val:
            best_val = val_loss
            metrics.best_epoch = epoch
            best_state = opt.state_snapshot()
        elif epoch - metrics.best_epoch >= cfg.patience:
            break

    opt.load_snapshot(best_state)
    with ad.no_grad():
        logits = model.logits(test_graphs, training=False).values
    metrics.test_accuracy = float(np.mean(logits.argmax(axis=1) == labels[test_graphs]))
    metrics.total_time = time.perf_counter() - start
    if metrics_path:
        metrics.write_jsonl(metrics_path)
    return metrics


def grid_search(base_cfg, grid: dict, score_fn, n_seeds: int = 3):
    """Exhaustive hyperparameter search over a {field: values} grid.

    ``score_fn(cfg, seed)`` returns a validation score; configurations are
    ranked by the mean over ``n_seeds`` seeds. Returns (best_cfg, table)
    where the table has one row per configuration. Defaults already pin the
    reference settings, so this is opt-in.
    """
    import dataclasses
    import itertools

    names = list(grid)
    best_cfg = None
    best_score = -np.inf
    table = []
    for combo in itertools.product(*(grid[k] for k in names)):
        cfg = dataclasses.replace(base_cfg, **dict(zip(names, combo)))
        scores = [score_fn(cfg, seed) for seed in range(n_seeds)]
        mean = float(np.mean(scores))
        table.append({**dict(zip(names, combo)), "mean_score": mean, "scores": scores})
        if mean > best_score:
            best_score = mean
            best_cfg = cfg
    return best_cfg, table


def save_checkpoint(model, path: str):
    """Write model parameters and the config fingerprint to a container file."""
    import dataclasses

    from .cache import pack_meta, write_container

    params = model.parameters()
    meta = {
        "model": type(model).__name__,
        "config": dataclasses.asdict(model.cfg),
        "n_params": len(params),
    }
    sections = {"meta": pack_meta(meta)}
    for i, p in enumerate(params):
        sections[f"param_{i:04d}"] = p.values
    write_container(path, sections)


def load_checkpoint(model, path: str):
    """Load parameters saved by ``save_checkpoint`` into a compatible model."""
    import dataclasses

    from .cache import read_container, unpack_meta

    sections = read_container(path)
    meta = unpack_meta(sections["meta"])
    expected = {
        "model": type(model).__name__,
        "config": dataclasses.asdict(model.cfg),
        "n_params": len(model.parameters()),
    }
    if meta != expected:
        raise TrainingError(f"{path}: checkpoint fingerprint does not match the model")
    for i, p in enumerate(model.parameters()):
        stored = sections[f"param_{i:04d}"]
        if stored.shape != p.values.shape:
            raise TrainingError(f"{path}: parameter {i} shape mismatch")
        p.values[...] = stored


def run_kfold(
    cfg: GraphModelConfig,
    pgs: Sequence[PreprocessedGraph],
    dataset: GraphDataset,
    folds: np.ndarray,
    seed: int = 0,
    rotations: Optional[Sequence[int]] = None,
    metrics_dir: Optional[str] = None,
) -> List[RunMetrics]:
    """Train one model per fold rotation and collect the metrics."""
    import os

    results = []
    for r in rotations if rotations is not None else range(10):
        train_g, val_g, test_g = fold_triple(folds, r)
        model = build_graph_model(cfg, pgs, dataset.num_classes, seed=seed + r)
        path = os.path.join(metrics_dir, f"fold{r}.jsonl") if metrics_dir else None
        results.append(
            train_graph_model(
                model, dataset.labels, train_g, val_g, test_g, seed=seed + r, metrics_path=path
            )
        )
    return results
