"""Training, evaluation, reconstruction, and comparison runs.

The CLI verbs are thin wrappers over these functions so every path is
exercisable directly from tests. All runs are deterministic given the
config seed: model init, batch order, and any sampled states derive from
it.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from . import bcdim as bc
from . import core, graph, ngc
from .archive import ModelArchive
from .backprop import MLP, mlp_backprop, mlp_forward, mlp_loss, sgd_step
from .config import RunConfig
from .data import Dataset, CorruptionSpec, batch_iter, corrupt, load_idx, synth_patterns
from .numerics import make_rng


class RunError(Exception):
    """A run-level failure with a stable machine-readable code."""

    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


METRIC_HEADER = ["epoch", "train_metric", "eval_metric", "wall_time_s"]
COMPARE_HEADER = ["model", "epoch", "train_metric", "test_accuracy", "accuracy_gap"]
RECON_HEADER = ["item", "n_unknown", "agreement", "mse"]


def _shuffle_seed(seed: int, epoch: int) -> int:
    return seed * 100003 + epoch


def load_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Train/test datasets from IDX files or a synthetic generator."""
    d = cfg.data
    try:
        if d["source"] == "idx":
            if not d["train_images"]:
                raise RunError("config_invalid", "[data] train_images is required for source=idx")
            train = load_idx(d["train_images"], d["train_labels"] or None)
            if d["test_images"]:
                test = load_idx(d["test_images"], d["test_labels"] or None)
            else:
                test = train
            if d["train_limit"]:
                train = Dataset(
                    train.inputs[: d["train_limit"]],
                    None if train.labels is None else train.labels[: d["train_limit"]],
                )
            if d["test_limit"]:
                test = Dataset(
                    test.inputs[: d["test_limit"]],
                    None if test.labels is None else test.labels[: d["test_limit"]],
                )
        else:
            dims = d["pattern_dims"] or (cfg.dims[0] if cfg.dims else 0)
            n = d["n"] or 16
            train = synth_patterns(d["kind"], n, dims, d["data_seed"])
            n_test = d["n_test"]
            test = synth_patterns(d["kind"], n_test, dims, d["data_seed"] + 1) if n_test else train
    except OSError as exc:
        raise RunError("dataset_unreadable", str(exc)) from exc
    except ValueError as exc:
        raise RunError("dataset_invalid", str(exc)) from exc
    if cfg.task == "classify" and train.labels is None:
        raise RunError("dataset_invalid", "classification task needs labels")
    if cfg.framework == "bcdim" and float(train.inputs.min()) < 0.0:
        raise RunError(
            "incompatible_data", "bcdim requires non-negative inputs; dataset has negative values"
        )
    return train, test


def _inference_config(cfg: RunConfig) -> core.InferenceConfig:
    i = cfg.inference
    return core.InferenceConfig(
        gamma=i["gamma"],
        iterations=i["iterations"],
        tol=i["tol"],
        backtracking=i["backtracking"],
        alpha=i["alpha"],
        schedule=i["schedule"],
    )


# ---------------------------------------------------------------------------
# Model construction and archive round trips
# ---------------------------------------------------------------------------

def build_model(cfg: RunConfig, rng: np.random.Generator):
    if cfg.framework == "pc":
        dims = list(reversed(cfg.dims)) if cfg.task == "classify" else list(cfg.dims)
        return core.PCNetwork.random(dims, cfg.activation, rng)
    if cfg.framework == "backprop":
        return MLP.random(cfg.dims, cfg.activation, rng, head=cfg.inference["head"])
    if cfg.framework == "ngc":
        i = cfg.inference
        return ngc.NGCCircuit.random(
            cfg.dims, rng, g_kind="identity", phi_kind=cfg.activation,
            dampening=i["dampening"], leak=i["leak"], beta=i["beta"],
            gamma_e=i["gamma_e"], scaling=i["scaling"],
        )
    if cfg.framework == "bcdim":
        i = cfg.inference
        return bc.BCDIMNetwork.random(
            cfg.dims, rng, eps1=i["eps1"], eps2=i["eps2"], beta=i["beta"]
        )
    # pc_graph: dims holds the neuron count; weights start at zero.
    n = cfg.dims[0]
    return graph.PCGraph(n, np.zeros((n, n)), graph.dense_mask(n), cfg.activation)


def model_to_archive(cfg: RunConfig, model, extra_meta: Optional[dict] = None) -> ModelArchive:
    meta = {"task": cfg.task, "seed": str(cfg.seed), "epochs": str(cfg.epochs)}
    if extra_meta:
        meta.update({k: str(v) for k, v in extra_meta.items()})
    if cfg.framework == "pc":
        mats = {f"W{l}": w for l, w in enumerate(model.weights)}
        meta["schedule"] = cfg.inference["schedule"]
        return ModelArchive("pc", model.layer_dims, model.activation, mats, meta)
    if cfg.framework == "backprop":
        mats = {f"W{k}": w for k, w in enumerate(model.weights)}
        meta["head"] = model.head
        return ModelArchive("backprop", model.layer_dims, model.activation, mats, meta)
    if cfg.framework == "ngc":
        mats = {}
        for l, w in enumerate(model.W):
            mats[f"W{l}"] = w
        for l, e in enumerate(model.E):
            mats[f"E{l}"] = e
        for l, s in enumerate(model.sigma):
            mats[f"sigma{l}"] = s
        meta.update(
            g_kind=model.g_kind, dampening=model.dampening, leak=repr(model.leak),
            beta=repr(model.beta), gamma_e=repr(model.gamma_e), scaling=str(model.scaling),
        )
        return ModelArchive("ngc", model.layer_dims, model.phi_kind, mats, meta)
    if cfg.framework == "bcdim":
        mats = {f"W{l}": w for l, w in enumerate(model.W)}
        meta.update(eps1=repr(model.eps1), eps2=repr(model.eps2), beta=repr(model.beta))
        return ModelArchive("bcdim", model.layer_dims, "identity", mats, meta)
    mats = {"weights": model.weights, "mask": model.mask}
    return ModelArchive("pc_graph", [model.n], model.activation, mats, meta)


def model_from_archive(arch: ModelArchive):
    if arch.framework == "pc":
        L = len(arch.dims) - 1
        weights = [arch.matrices[f"W{l}"] for l in range(L)]
        return core.PCNetwork(arch.dims, weights, arch.activation)
    if arch.framework == "backprop":
        L = len(arch.dims) - 1
        weights = [arch.matrices[f"W{k}"] for k in range(L)]
        return MLP(arch.dims, weights, arch.activation, arch.meta.get("head", "squared_error"))
    if arch.framework == "ngc":
        L = len(arch.dims) - 1
        return ngc.NGCCircuit(
            arch.dims,
            [arch.matrices[f"W{l}"] for l in range(L)],
            [arch.matrices[f"E{l}"] for l in range(L)],
            sigma=[arch.matrices[f"sigma{l}"] for l in range(L)],
            g_kind=arch.meta.get("g_kind", "identity"),
            phi_kind=arch.activation,
            dampening=arch.meta.get("dampening", "ones"),
            leak=float(arch.meta.get("leak", "0.0")),
            beta=float(arch.meta.get("beta", "0.1")),
            gamma_e=float(arch.meta.get("gamma_e", "0.9")),
            scaling=arch.meta.get("scaling", "False") == "True",
        )
    if arch.framework == "bcdim":
        L = len(arch.dims) - 1
        return bc.BCDIMNetwork(
            arch.dims,
            [arch.matrices[f"W{l}"] for l in range(L)],
            eps1=float(arch.meta.get("eps1", "1e-6")),
            eps2=float(arch.meta.get("eps2", "1e-6")),
            beta=float(arch.meta.get("beta", "0.1")),
        )
    if arch.framework == "pc_graph":
        return graph.PCGraph(arch.dims[0], arch.matrices["weights"], arch.matrices["mask"], arch.activation)
    raise RunError("archive_invalid", f"unknown framework tag {arch.framework!r}")


# ---------------------------------------------------------------------------
# Evaluation passes
# ---------------------------------------------------------------------------

def pc_classify_accuracy(net: core.PCNetwork, ds: Dataset) -> float:
    scores = core.feedforward(net, ds.inputs.T)
    return float(np.mean(np.argmax(scores, axis=0) == np.argmax(ds.labels.T, axis=0)))


def mlp_accuracy(m: MLP, ds: Dataset) -> float:
    _, _, out = mlp_forward(m, ds.inputs.T)
    return float(np.mean(np.argmax(out, axis=0) == np.argmax(ds.labels.T, axis=0)))


def pc_generate_mse(net: core.PCNetwork, ds: Dataset, icfg: core.InferenceConfig, seed: int) -> float:
    codes = core.infer_code(net, ds.inputs.T, icfg, make_rng(seed))
    recon = core.feedforward(net, codes)
    return float(np.mean((recon - ds.inputs.T) ** 2))


def ngc_reconstruction_mse(c: ngc.NGCCircuit, ds: Dataset, T: int) -> float:
    states = ngc.ngc_settle(c, ds.inputs.T, T)
    return float(np.mean((states.x[0] - states.xbar[0]) ** 2))


def bcdim_reconstruction_mse(net: bc.BCDIMNetwork, ds: Dataset, T: int) -> float:
    states = bc.bcdim_settle(net, ds.inputs.T, T)
    recon = net.W[0] @ states.x[1]
    return float(np.mean((recon - states.x[0]) ** 2))


def graph_storage_energy(g: graph.PCGraph, ds: Dataset) -> float:
    return float(np.mean([graph.graph_energy(g, p) for p in ds.inputs]))


def evaluate(arch: ModelArchive, ds: Dataset, icfg: core.InferenceConfig, seed: int = 0) -> tuple[str, float]:
    """Framework-appropriate test metric: ('accuracy', v) or ('mse', v)."""
    model = model_from_archive(arch)
    task = arch.meta.get("task", "generate")
    if arch.framework == "pc" and task == "classify":
        if ds.labels is None:
            raise RunError("dataset_invalid", "classification eval needs labels")
        if ds.inputs.shape[1] != model.layer_dims[-1]:
            raise RunError("incompatible_data", "dataset dims do not match the archive")
        return "accuracy", pc_classify_accuracy(model, ds)
    if arch.framework == "backprop":
        if ds.labels is None:
            raise RunError("dataset_invalid", "classification eval needs labels")
        if ds.inputs.shape[1] != model.layer_dims[0]:
            raise RunError("incompatible_data", "dataset dims do not match the archive")
        return "accuracy", mlp_accuracy(model, ds)
    if arch.framework == "pc":
        if ds.inputs.shape[1] != model.layer_dims[0]:
            raise RunError("incompatible_data", "dataset dims do not match the archive")
        return "mse", pc_generate_mse(model, ds, icfg, seed)
    if arch.framework == "ngc":
        return "mse", ngc_reconstruction_mse(model, ds, icfg.iterations)
    if arch.framework == "bcdim":
        return "mse", bcdim_reconstruction_mse(model, ds, icfg.iterations)
    return "storage_energy", graph_storage_energy(model, ds)


# ---------------------------------------------------------------------------
# Training loops (one row of metrics per epoch)
# ---------------------------------------------------------------------------

def train_run(cfg: RunConfig, train: Dataset, test: Dataset) -> tuple[ModelArchive, list[list]]:
    rng = make_rng(cfg.seed)
    icfg = _inference_config(cfg)
    model = build_model(cfg, rng)
    rows: list[list] = []
    final_metric = ""

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        if cfg.framework == "pc":
            model, train_metric = _pc_epoch(cfg, model, train, icfg, rng, epoch)
            if cfg.task == "classify":
                eval_metric = pc_classify_accuracy(model, test)
            else:
                eval_metric = pc_generate_mse(model, test, icfg, cfg.seed)
        elif cfg.framework == "backprop":
            model, train_metric = _mlp_epoch(cfg, model, train, epoch)
            eval_metric = mlp_accuracy(model, test)
        elif cfg.framework == "ngc":
            model, train_metric = _ngc_epoch(cfg, model, train, epoch)
            eval_metric = ngc_reconstruction_mse(model, test, icfg.iterations)
        elif cfg.framework == "bcdim":
            model, train_metric = _bcdim_epoch(cfg, model, train, epoch)
            eval_metric = bcdim_reconstruction_mse(model, test, icfg.iterations)
        else:  # pc_graph
            model = graph.memory_store(model, list(train.inputs), icfg, epochs=1)
            train_metric = graph_storage_energy(model, train)
            eval_metric = train_metric
        wall = time.perf_counter() - t0
        rows.append([epoch, train_metric, eval_metric, wall])
        final_metric = repr(eval_metric)

    arch = model_to_archive(cfg, model, {"final_metric": final_metric})
    return arch, rows


def _pc_epoch(cfg, net, train, icfg, rng, epoch):
    total = 0.0
    count = 0
    for X, Y in batch_iter(train, cfg.batch_size, _shuffle_seed(cfg.seed, epoch)):
        if cfg.task == "classify":
            clamp = core.ClampSpec(bottom=Y.T, top=X.T)
        else:
            clamp = core.ClampSpec(bottom=X.T)
        net, m = core.train_step(net, clamp, icfg, rng)
        total += m["energy"]
        count += X.shape[0]
    return net, total / max(count, 1)


def _mlp_epoch(cfg, m, train, epoch):
    eta = cfg.inference["alpha"]
    total = 0.0
    batches = 0
    for X, Y in batch_iter(train, cfg.batch_size, _shuffle_seed(cfg.seed, epoch)):
        inter = mlp_forward(m, X.T)
        total += mlp_loss(m, inter[2], Y.T)
        grads = mlp_backprop(m, inter, Y.T)
        m = sgd_step(m, grads, eta)
        batches += 1
    return m, total / max(batches, 1)


def _ngc_epoch(cfg, c, train, epoch):
    lr = cfg.inference["alpha"]
    T = cfg.inference["iterations"]
    total = 0.0
    batches = 0
    for X, _ in batch_iter(train, cfg.batch_size, _shuffle_seed(cfg.seed, epoch)):
        states = ngc.ngc_settle(c, X.T, T)
        total += float(np.mean((states.x[0] - states.xbar[0]) ** 2))
        dW, dE = ngc.ngc_hebbian_update(c, states)
        c = ngc.ngc_apply(c, dW, dE, lr)
        c = ngc.ngc_normalize(c)
        batches += 1
    return c, total / max(batches, 1)


def _bcdim_epoch(cfg, net, train, epoch):
    T = cfg.inference["iterations"]
    total = 0.0
    batches = 0
    for X, _ in batch_iter(train, cfg.batch_size, _shuffle_seed(cfg.seed, epoch)):
        states = bc.bcdim_settle(net, X.T, T)
        recon = net.W[0] @ states.x[1]
        total += bc.generalized_kl(states.x[0], recon) / X.shape[0]
        deltas = bc.bcdim_weight_update(net, states, net.beta)
        net = bc.bcdim_apply(net, deltas)
        batches += 1
    return net, total / max(batches, 1)


# ---------------------------------------------------------------------------
# Reconstruction and side-by-side comparison
# ---------------------------------------------------------------------------

def reconstruct_run(
    arch: ModelArchive, ds: Dataset, spec: CorruptionSpec, icfg: core.InferenceConfig
) -> list[list]:
    """Corrupt, retrieve, and score every item of the dataset.

    Agreement counts an unknown coordinate as recovered when it rounds to
    the true value for +-1 patterns, or lands within 0.1 for graded data.
    """
    if arch.framework != "pc_graph":
        raise RunError("archive_invalid", f"reconstruct needs a pc_graph archive, got {arch.framework!r}")
    g = model_from_archive(arch)
    rows = []
    sign_data = bool(np.all(np.isin(ds.inputs, (-1.0, 1.0))))
    for i, v in enumerate(ds.inputs):
        cue, known = corrupt(v, CorruptionSpec(spec.kind, spec.fraction, spec.seed + i))
        retrieved = graph.memory_retrieve(g, cue, known, icfg)
        unknown = ~known
        n_unknown = int(unknown.sum())
        if n_unknown == 0:
            agreement = 1.0
            mse = 0.0
        else:
            diff = retrieved[unknown] - v[unknown]
            if sign_data:
                agreement = float(np.mean(np.where(retrieved[unknown] >= 0, 1.0, -1.0) == v[unknown]))
            else:
                agreement = float(np.mean(np.abs(diff) <= 0.1))
            mse = float(np.mean(diff**2))
        rows.append([i, n_unknown, agreement, mse])
    return rows


def compare_run(cfg: RunConfig, train: Dataset, test: Dataset) -> tuple[list[list], float]:
    """Settling-based and backprop classifiers, same dims, data, and
    initial weights; returns long-format rows plus the final accuracy gap."""
    if cfg.task != "classify":
        raise RunError("config_invalid", "compare requires task=classify")
    icfg = _inference_config(cfg)
    rng = make_rng(cfg.seed)
    pc_net = core.PCNetwork.random(list(reversed(cfg.dims)), cfg.activation, rng)
    # Matched initialization: the backprop net reuses the same matrices,
    # top-down order reversed.
    mlp = MLP(
        cfg.dims,
        [pc_net.weights[len(pc_net.weights) - 1 - k].copy() for k in range(len(pc_net.weights))],
        cfg.activation,
        cfg.inference["head"],
    )
    rows: list[list] = []
    gap = 0.0
    pc_acc = bp_acc = 0.0
    for epoch in range(cfg.epochs):
        pc_net, pc_train = _pc_epoch(cfg, pc_net, train, icfg, rng, epoch)
        mlp, bp_train = _mlp_epoch(cfg, mlp, train, epoch)
        pc_acc = pc_classify_accuracy(pc_net, test)
        bp_acc = mlp_accuracy(mlp, test)
        gap = abs(pc_acc - bp_acc)
        rows.append(["pc", epoch, pc_train, pc_acc, gap])
        rows.append(["backprop", epoch, bp_train, bp_acc, gap])
    return rows, gap
