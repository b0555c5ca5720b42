"""Desk-scale data-parallel training loop.

Runs W workers in lockstep over a transport for the decoupled-momentum
optimizer, or a sequential fully-synchronized loop for the baselines (the
baselines consume the exact mean gradient, i.e. a perfect all-reduce).
Metrics are aggregated from per-worker loss reports plus rank 0's ledger and
written as CSV; identical config and seed give byte-identical CSVs on the
in-memory transport.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from demopt import data as datamod
from demopt import models as modelmod
from demopt.chunking import clamp_chunk_shape
from demopt.config import RunConfig, validate_config
from demopt.errors import ConfigError
from demopt.dct import BasisCache
from demopt.errors import TransportTimeoutError
from demopt.optim import AdamW, DemoConfig, DemoOptimizer, SgdMomentum, Signum
from demopt.transport import (
    CommLedger,
    InMemoryHub,
    TcpCollective,
    bind_listeners,
)

METRICS_COLUMNS = ("step", "train_loss", "grad_norm", "q_norm",
                   "payload_bytes", "eval_loss", "eval_acc")

# Seed streams derived from run.seed: the dataset uses run.seed directly,
# model init uses run.seed + 1 (all workers share it, so initial parameters
# are identical across ranks).
MODEL_SEED_OFFSET = 1


@dataclass
class StepRow:
    step: int
    train_loss: float | None = None
    grad_norm: float | None = None
    q_norm: float | None = None
    payload_bytes: int | None = None
    eval_loss: float | None = None
    eval_acc: float | None = None


@dataclass
class RunMetrics:
    rows: list[StepRow]
    final_eval: dict
    bytes_per_step: int
    total_payload_bytes: int
    wall_time_s: float
    worker_params: list[list[np.ndarray]] = field(default_factory=list)
    worker_momenta: list[list[np.ndarray]] | None = None
    ledgers: list[CommLedger] | None = None

    @property
    def final_train_loss(self) -> float | None:
        for row in reversed(self.rows):
            if row.train_loss is not None:
                return row.train_loss
        return None


def build_model(cfg: RunConfig, seed: int) -> modelmod.Model:
    m = cfg.model
    dtype = np.float32 if m.dtype == "float32" else np.float64
    if m.kind == "quadratic":
        return modelmod.QuadraticBowl(m.dim, seed=seed, dtype=dtype,
                                      identity=m.identity)
    if m.kind == "linreg":
        return modelmod.LinearRegression(m.input_dim, m.output_dim,
                                         bias=m.bias, seed=seed, dtype=dtype)
    if m.kind == "logreg":
        return modelmod.LogisticRegression(m.input_dim, m.num_classes,
                                           bias=m.bias, seed=seed, dtype=dtype)
    return modelmod.Mlp(m.input_dim, m.hidden_dim, m.num_classes,
                        hidden_layers=m.hidden_layers, activation=m.activation,
                        bias=m.bias, seed=seed, dtype=dtype)


def build_dataset(cfg: RunConfig):
    """Full dataset in model dtype, or None for data-free models."""
    d, m = cfg.data, cfg.model
    if d.kind == "none":
        return None
    dtype = np.float32 if m.dtype == "float32" else np.float64
    if d.kind == "blobs":
        x, y = datamod.make_blobs(d.num_samples, m.input_dim, m.num_classes,
                                  spread=d.spread, noise=d.noise,
                                  seed=cfg.run.seed)
        return x.astype(dtype), y
    x, y = datamod.make_linear_teacher(d.num_samples, m.input_dim,
                                       m.output_dim, noise=d.noise,
                                       seed=cfg.run.seed)
    return x.astype(dtype), y.astype(dtype)


def _global_norm(arrays) -> float:
    total = 0.0
    for a in arrays:
        a64 = np.asarray(a, dtype=np.float64)
        total += float(np.dot(a64.reshape(-1), a64.reshape(-1)))
    return float(np.sqrt(total))


def _make_shards(cfg: RunConfig, dataset):
    workers = cfg.run.workers
    if dataset is None:
        return [datamod.NullShard() for _ in range(workers)], None
    x, y = dataset
    (x_tr, y_tr), (x_ho, y_ho) = datamod.train_holdout_split(
        x, y, cfg.data.holdout_fraction)
    pieces = datamod.split_shards(x_tr, y_tr, workers)
    shards = [datamod.DataShard(px, py, cfg.run.batch_size)
              for px, py in pieces]
    holdout = (x_ho, y_ho) if len(x_ho) else (x_tr, y_tr)
    return shards, holdout


def _demo_worker(rank, cfg: RunConfig, demo_cfg: DemoConfig, make_collective,
                 shard, cache: BasisCache, reports, abort_cb):
    collective = None
    try:
        collective = make_collective(rank)
        model = build_model(cfg, cfg.run.seed + MODEL_SEED_OFFSET)
        opt = DemoOptimizer(model.param_arrays(), demo_cfg, collective, cache)
        rows = []
        for _ in range(cfg.run.steps):
            batch = shard.next_batch()
            loss, grads = model.loss_and_grad(batch)
            stats = opt.step(grads)
            rows.append((loss, _global_norm(grads), stats.update_norm,
                         stats.payload_bytes))
        reports[rank] = {"rows": rows, "model": model, "optimizer": opt,
                         "ledger": collective.ledger}
    except BaseException as exc:  # noqa: BLE001 - reported to the spawner
        reports[rank] = {"error": exc}
        if abort_cb is not None:
            abort_cb()
    finally:
        if collective is not None:
            collective.close()


def _collective_factory(cfg: RunConfig):
    """Returns (make_collective(rank), abort_cb)."""
    t, workers = cfg.transport, cfg.run.workers
    if t.kind == "memory":
        hub = InMemoryHub(workers, timeout_s=t.timeout_s)
        return (lambda rank: hub.collective(rank)), hub.abort
    addresses, socks = bind_listeners(workers, host=t.host,
                                      base_port=t.base_port)

    def make(rank):
        return TcpCollective(rank, workers, addresses,
                             timeout_s=t.timeout_s, listen_sock=socks[rank])

    return make, None


def _run_demo(cfg: RunConfig, shards):
    o = cfg.optimizer
    demo_cfg = DemoConfig(
        lr=o.lr,
        momentum_decay=o.resolved_momentum(),
        chunk_request=o.s,
        topk=o.k,
        signum=o.signum,
        merge_rule=o.merge_rule,
        weight_decay=o.weight_decay,
    )
    workers = cfg.run.workers
    cache = BasisCache()
    make_collective, abort_cb = _collective_factory(cfg)
    reports: list[dict | None] = [None] * workers
    threads = [
        threading.Thread(
            target=_demo_worker,
            args=(rank, cfg, demo_cfg, make_collective, shards[rank], cache,
                  reports, abort_cb),
            name=f"demo-worker-{rank}",
        )
        for rank in range(workers)
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()

    errors = [rep["error"] for rep in reports
              if rep is not None and "error" in rep]
    if errors:
        # a peer's timeout is usually collateral damage; surface the root cause
        primary = [e for e in errors if not isinstance(e, TransportTimeoutError)]
        raise (primary[0] if primary else errors[0])

    rows = []
    for i in range(cfg.run.steps):
        losses = [rep["rows"][i][0] for rep in reports]
        norms = [rep["rows"][i][1] for rep in reports]
        rows.append(StepRow(
            step=i + 1,
            train_loss=sum(losses) / workers,
            grad_norm=sum(norms) / workers,
            q_norm=reports[0]["rows"][i][2],
            payload_bytes=reports[0]["rows"][i][3],
        ))
    info = {
        "rows": rows,
        "bytes_per_step": reports[0]["optimizer"].payload_bytes_per_step(),
        "final_model": reports[0]["model"],
        "worker_params": [rep["model"].param_arrays() for rep in reports],
        "worker_momenta": [rep["optimizer"].momenta for rep in reports],
        "ledgers": [rep["ledger"] for rep in reports],
    }
    return info


def _run_baseline(cfg: RunConfig, shards):
    o = cfg.optimizer
    model = build_model(cfg, cfg.run.seed + MODEL_SEED_OFFSET)
    params = model.param_arrays()
    if o.kind == "sgd":
        opt = SgdMomentum(params, o.lr, momentum=o.resolved_momentum(),
                          weight_decay=o.weight_decay)
    elif o.kind == "signum":
        opt = Signum(params, o.lr, momentum=o.resolved_momentum(),
                     weight_decay=o.weight_decay)
    else:
        opt = AdamW(params, o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps,
                    weight_decay=o.weight_decay)
    workers = cfg.run.workers
    # what a fully synchronized worker would transmit: one float32 gradient image
    sync_bytes = 4 * sum(p.size for p in params)
    prev = [p.copy() for p in params]
    rows = []
    for step in range(1, cfg.run.steps + 1):
        losses = []
        norms = []
        acc = [np.zeros(p.shape, dtype=np.float64) for p in params]
        for shard in shards:
            batch = shard.next_batch()
            loss, grads = model.loss_and_grad(batch)
            losses.append(loss)
            norms.append(_global_norm(grads))
            for a, g in zip(acc, grads):
                a += g
        mean_grads = [
            (a / workers).astype(p.dtype) for a, p in zip(acc, params)
        ]
        for buf, p in zip(prev, params):
            buf[...] = p
        opt.step(mean_grads)
        direction = [
            (p.astype(np.float64) - buf.astype(np.float64)) / o.lr
            for p, buf in zip(params, prev)
        ]
        rows.append(StepRow(
            step=step,
            train_loss=sum(losses) / workers,
            grad_norm=sum(norms) / workers,
            q_norm=_global_norm(direction),
            payload_bytes=sync_bytes,
        ))
    return {
        "rows": rows,
        "bytes_per_step": sync_bytes,
        "final_model": model,
        "worker_params": [params],
        "worker_momenta": None,
        "ledgers": None,
    }


def run_experiment(cfg: RunConfig) -> RunMetrics:
    """Execute one configured run and return aggregated metrics.

    The returned RunMetrics keeps references to final per-worker parameter
    and momentum tensors so callers can assert cross-worker invariants.
    """
    validate_config(cfg)
    start = time.perf_counter()
    dataset = build_dataset(cfg)
    shards, holdout = _make_shards(cfg, dataset)

    eval_model = build_model(cfg, cfg.run.seed + MODEL_SEED_OFFSET)
    if cfg.optimizer.kind == "demo":
        # catch an oversized k here, before worker threads exist
        for p in eval_model.param_arrays():
            geom = clamp_chunk_shape(p.shape, cfg.optimizer.s)
            if cfg.optimizer.k > geom.chunk_volume:
                raise ConfigError(
                    f"optimizer.k={cfg.optimizer.k} exceeds the chunk volume "
                    f"{geom.chunk_volume} of tensor shape {tuple(p.shape)} "
                    f"(chunk {geom.chunk_shape})")
    first = eval_model.eval_metrics(holdout)
    row0 = StepRow(step=0, eval_loss=first["loss"],
                   eval_acc=first.get("accuracy"))

    if cfg.optimizer.kind == "demo":
        info = _run_demo(cfg, shards)
    else:
        info = _run_baseline(cfg, shards)

    rows = [row0] + info["rows"]
    final = info["final_model"].eval_metrics(holdout)
    if cfg.run.steps > 0:
        rows[-1].eval_loss = final["loss"]
        rows[-1].eval_acc = final.get("accuracy")
    final_eval = {"loss": final["loss"],
                  "accuracy": final.get("accuracy")}
    total_payload = sum(r.payload_bytes for r in rows if r.payload_bytes)
    return RunMetrics(
        rows=rows,
        final_eval=final_eval,
        bytes_per_step=info["bytes_per_step"],
        total_payload_bytes=total_payload,
        wall_time_s=time.perf_counter() - start,
        worker_params=info["worker_params"],
        worker_momenta=info["worker_momenta"],
        ledgers=info["ledgers"],
    )


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_metrics_csv(metrics: RunMetrics, path) -> None:
    lines = [",".join(METRICS_COLUMNS)]
    for r in metrics.rows:
        lines.append(",".join([
            str(r.step),
            _fmt_cell(r.train_loss),
            _fmt_cell(r.grad_norm),
            _fmt_cell(r.q_norm),
            _fmt_cell(r.payload_bytes),
            _fmt_cell(r.eval_loss),
            _fmt_cell(r.eval_acc),
        ]))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


@dataclass
class SweepResult:
    keys: list[str]
    rows: list[dict]
    metrics: list[RunMetrics]


def sweep(base_cfg: RunConfig, grid: list[tuple[str, list]]) -> SweepResult:
    """Cartesian sweep over dotted config keys; one run per grid point."""
    if not grid:
        raise ValueError("sweep grid must be non-empty")
    keys = [key for key, _ in grid]
    value_lists = [values for _, values in grid]
    for key, values in grid:
        if not values:
            raise ValueError(f"empty value list for sweep key {key}")
    combos: list[tuple] = [()]
    for values in value_lists:
        combos = [c + (v,) for c in combos for v in values]
    rows = []
    all_metrics = []
    for combo in combos:
        cfg = base_cfg.copy()
        for key, value in zip(keys, combo):
            section, _, attr = key.partition(".")
            setattr(getattr(cfg, section), attr, value)
        metrics = run_experiment(cfg)
        row = dict(zip(keys, combo))
        row["final_train_loss"] = metrics.final_train_loss
        row["eval_loss"] = metrics.final_eval["loss"]
        row["eval_acc"] = metrics.final_eval["accuracy"]
        row["bytes_per_step"] = metrics.bytes_per_step
        rows.append(row)
        all_metrics.append(metrics)
    return SweepResult(keys=keys, rows=rows, metrics=all_metrics)


def write_sweep_csv(result: SweepResult, path) -> None:
    columns = result.keys + ["final_train_loss", "eval_loss", "eval_acc",
                             "bytes_per_step"]
    lines = [",".join(columns)]
    for row in result.rows:
        lines.append(",".join(_fmt_cell(row[c]) if not isinstance(row[c], str)
                              else row[c] for c in columns))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
