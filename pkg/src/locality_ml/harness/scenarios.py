"""Desk-scale versions of the three locality experiments plus the trace report."""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import data, instance, linear, mlp, optim, trace
from ..data import Dataset
from .timing import TimingResult, phase_table, timing

log = logging.getLogger(__name__)

SCENARIOS = ("swsgd", "fused-ibl", "fused-linear", "trace-report")

# starting learning-rate grids for the preliminary sweep (one fold, no window);
# the sweep steps past either end while the held-out loss keeps improving
LR_GRID = {
    "sgd": (0.1, 0.3, 1.0),
    "momentum": (0.01, 0.03, 0.1),
    "adam": (3e-4, 1e-3, 3e-3),
    "adagrad": (0.01, 0.03, 0.1),
}

DEFAULT_MNIST = Path(__file__).resolve().parents[3] / "data" / "mnist-subset"


class ConfigError(ValueError):
    """Invalid scenario configuration (CLI exit code 2)."""


class EquivalenceError(AssertionError):
    """Fused/joint output differs from the separate runs (CLI exit code 1)."""


@dataclass
class ScenarioConfig:
    scenario: str
    data: str | None = None
    synth: tuple[int, int, int, float] | None = None
    seed: int = 0
    epochs: int | None = None
    batch: int | None = None
    lr: float | None = None
    optimizers: tuple[str, ...] = optim.RULES
    window_mults: tuple[int, ...] = (0, 1, 2)
    k: int = 5
    bandwidth: float = 1.0
    kernel: str = "gaussian"
    reps: int = 5
    out: str | None = None
    folds: int = 5
    queries: int | None = None
    block_size: int = 8
    hidden: tuple[int, ...] = (100, 100)
    weight_decay: float = 1e-4
    tags: tuple[str, ...] = trace.ALGORITHMS
    eval_points: int | None = None
    print_csv: bool = False
    svg: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.data is not None and not os.path.exists(self.data):
            raise ConfigError(f"data path {self.data!r} does not exist")
        for rule in self.optimizers:
            if rule not in optim.RULES:
                raise ConfigError(f"unknown optimizer {rule!r}")
        if any(m < 0 for m in self.window_mults):
            raise ConfigError("window multipliers must be >= 0")
        for tag in self.tags:
            if tag not in trace.ALGORITHMS:
                raise ConfigError(f"unknown trace tag {tag!r}")
        if self.kernel not in instance.KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")
        for name in ("epochs", "batch", "queries", "eval_points"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr is not None and not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.k < 1 or self.block_size < 1 or self.folds < 2:
            raise ConfigError("k and block size must be >= 1 and folds >= 2")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden layer sizes must be >= 1")


def load_dataset(path: str) -> Dataset:
    """Directory -> MNIST IDX training pair; *.csv -> CSV; anything else -> libsvm."""
    if os.path.isdir(path):
        return load_mnist_dir(path, "train")
    if path.endswith(".csv"):
        return data.load_csv(path)
    return data.load_libsvm(path)


def load_mnist_dir(path, part: str = "train") -> Dataset:
    for suffix in (".gz", ""):
        images = os.path.join(path, f"{part}-images-idx3-ubyte{suffix}")
        labels = os.path.join(path, f"{part}-labels-idx1-ubyte{suffix}")
        if os.path.exists(images) and os.path.exists(labels):
            return data.load_mnist_idx(images, labels)
    raise ConfigError(f"no {part} IDX pair in {path}")


def _optional_test_split(path) -> Dataset | None:
    try:
        return load_mnist_dir(path, "t10k")
    except ConfigError:
        return None


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _out_dir(cfg: ScenarioConfig) -> Path | None:
    if cfg.out is None:
        return None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# sliding-window SGD


@dataclass
class SwsgdResult:
    lrs: dict[str, float]
    batches: dict[str, int]
    sweep: list[tuple[str, int, float, float]]
    points: dict[tuple[str, int], np.ndarray]
    fold_curves: dict[tuple[str, int], list[np.ndarray]]
    records: dict[tuple[str, int, int], list[optim.TrainRecord]]
    diverged: list[tuple[str, int, int, str]]
    degenerate_ok: dict[str, bool]

    def mean_curve(self, rule: str, m: int) -> np.ndarray:
        return np.mean(self.fold_curves[(rule, m)], axis=0)

    def final_loss(self, rule: str, m: int) -> float:
        return float(self.mean_curve(rule, m)[-1])

    def touches_to_reach(self, rule: str, m: int, target: float) -> float:
        """New points consumed before the mean curve first drops to ``target``."""
        return first_reach(self.points[(rule, m)], self.mean_curve(rule, m), target)

    def summary_rows(self):
        rows = []
        for (rule, m) in sorted(self.fold_curves):
            base = self.final_loss(rule, 0) if (rule, 0) in self.fold_curves else math.nan
            rows.append((rule, self.batches[rule], self.lrs[rule], m, self.final_loss(rule, m),
                         self.touches_to_reach(rule, m, base)))
        return rows


SUMMARY_HEADER = ["optimizer", "batch", "lr", "window_mult", "final_mean_test_loss",
                  "points_to_reach_m0_final"]

# batch sizes tried by the preliminary sweep when --batch is not given
SWSGD_BATCHES = (32, 64, 128)


def first_reach(points: np.ndarray, curve: np.ndarray, target: float) -> float:
    hits = np.flatnonzero(curve <= target)
    return float(points[hits[0]]) if hits.size else math.inf


def _swsgd_cell(train_ds, test_ds, arch, rule, lr, m, batch, epochs, seed, eval_points, n_checkpoints):
    """Train one (optimizer, window, fold) cell; held-out loss at the start,
    every ``eval_points`` new points (at most ``n_checkpoints`` times) and at the end."""
    model = mlp.MlpModel.init(arch, seed=seed)
    provider = mlp.MlpProvider(model)
    points = [0]
    losses = [mlp.mean_loss(model, test_ds)]

    def checkpoint(rec, params):
        if len(points) <= n_checkpoints and rec.points_touched >= len(points) * eval_points:
            points.append(rec.points_touched)
            losses.append(mlp.mean_loss(model, test_ds, params))

    window = optim.SlidingWindow(m)
    report = optim.train(provider, train_ds, model.params, batch, epochs,
                         optim.OptimizerState(rule, lr), window, seed=seed, callback=checkpoint)
    points.append(report.records[-1].points_touched)
    losses.append(mlp.mean_loss(model, test_ds, report.params))
    return np.array(points), np.array(losses), report


def run_swsgd(cfg: ScenarioConfig) -> SwsgdResult:
    """Sliding-window SGD on an MLP with k-fold cross-validation.

    A preliminary sweep without a window picks the batch size and learning
    rate per optimizer (unless given).  It trains on the whole training set
    and scores on the separate test split when the data directory has one,
    otherwise it uses fold 0.  Every window multiplier then reuses those
    settings and the same per-fold seeds.
    """
    tune = None
    if cfg.data is not None:
        ds = load_dataset(cfg.data)
        if os.path.isdir(cfg.data):
            tune = _optional_test_split(cfg.data)
    elif cfg.synth is not None:
        ds = data.synth_blobs(cfg.seed, *cfg.synth)
    else:
        if not DEFAULT_MNIST.is_dir():
            raise ConfigError("no --data given and the bundled MNIST subset is missing")
        ds = load_mnist_dir(DEFAULT_MNIST, "train")
        tune = _optional_test_split(DEFAULT_MNIST)
    batch_grid = SWSGD_BATCHES if cfg.batch is None else (cfg.batch,)
    epochs = 5 if cfg.epochs is None else cfg.epochs
    arch = (ds.n_features, *cfg.hidden, ds.class_count)
    if cfg.folds > ds.n_points:
        raise ConfigError(f"{cfg.folds} folds need at least {cfg.folds} points")
    plan = data.kfold_split(ds, cfg.folds, cfg.seed)
    folds = [(ds.subset(plan.train_indices(f)), ds.subset(plan.fold_indices(f))) for f in range(cfg.folds)]
    smallest = min(tr.n_points for tr, _ in folds)
    if not 1 <= max(batch_grid) <= smallest:
        raise ConfigError(f"batch size {max(batch_grid)} does not fit the training folds")
    eval_points = cfg.eval_points or max(max(batch_grid), folds[0][0].n_points // 5)
    n_checkpoints = (smallest * epochs - 1) // eval_points
    # tune on data the cross-validation never scores when a separate test split exists
    tune_pair = (ds, tune) if tune is not None else folds[0]

    sweep = []
    lrs, batches = {}, {}
    for rule in cfg.optimizers:
        if cfg.lr is not None and len(batch_grid) == 1:
            lrs[rule], batches[rule] = cfg.lr, batch_grid[0]
            continue
        best = None
        for batch in batch_grid:
            def final_loss(lr, rule=rule, batch=batch):
                try:
                    _, losses, _ = _swsgd_cell(*tune_pair, arch, rule, lr, 0, batch, epochs, cfg.seed,
                                               eval_points, 0)
                    final = float(losses[-1])
                except optim.DivergenceError:
                    final = math.inf
                sweep.append((rule, batch, lr, final))
                log.info("sweep %s B=%d lr=%g final held-out loss %.4f", rule, batch, lr, final)
                return final

            if cfg.lr is not None:
                lr = cfg.lr
                score = final_loss(lr)
            else:
                lr = sweep_lr(LR_GRID[rule], final_loss)
                score = min(f for r, b, x, f in sweep if r == rule and b == batch and x == lr)
            if best is None or score < best[0]:
                best = (score, batch, lr)
        _, batches[rule], lrs[rule] = best

    points, curves, records, diverged, degenerate = {}, {}, {}, [], {}
    for rule in cfg.optimizers:
        for m in cfg.window_mults:
            cell = []
            for f, (tr, te) in enumerate(folds):
                seed = cfg.seed + f
                try:
                    pts, losses, report = _swsgd_cell(tr, te, arch, rule, lrs[rule], m, batches[rule],
                                                      epochs, seed, eval_points, n_checkpoints)
                except optim.DivergenceError as exc:
                    diverged.append((rule, m, f, str(exc)))
                    log.warning("%s m=%d fold %d diverged: %s", rule, m, f, exc)
                    continue
                points[(rule, m)] = pts
                cell.append(losses)
                records[(rule, m, f)] = report.records
                if m == 0 and f == 0:
                    degenerate[rule] = _matches_plain_minibatch(tr, arch, rule, lrs[rule], batches[rule],
                                                                epochs, seed, report.params)
            if cell:
                curves[(rule, m)] = cell
            log.info("%s m=%d done", rule, m)
    result = SwsgdResult(lrs, batches, sweep, points, curves, records, diverged, degenerate)
    out = _out_dir(cfg)
    if out is not None:
        _write_swsgd(result, out, cfg)
    if not all(degenerate.values()):
        raise EquivalenceError(f"window m=0 differs from plain mini-batch training: {degenerate}")
    return result


def sweep_lr(grid, score, max_extend: int = 3) -> float:
    """Lowest-scoring learning rate on ``grid``, stepping past the ends by the
    grid ratio while the best value sits on an edge (at most ``max_extend`` steps)."""
    grid = sorted(grid)
    ratio = grid[-1] / grid[-2] if len(grid) > 1 else 3.0
    scores = {lr: score(lr) for lr in grid}
    for _ in range(max_extend):
        best = min(scores, key=scores.get)
        if not math.isfinite(scores[best]):
            break
        if best == max(scores):
            nxt = float(f"{best * ratio:.2g}")
        elif best == min(scores):
            nxt = float(f"{best / ratio:.2g}")
        else:
            break
        scores[nxt] = score(nxt)
        if not scores[nxt] < scores[best]:
            break
    return min(scores, key=scores.get)


def _matches_plain_minibatch(tr, arch, rule, lr, batch, epochs, seed, params) -> bool:
    model = mlp.MlpModel.init(arch, seed=seed)
    plain = optim.train(mlp.MlpProvider(model), tr, model.params, batch, epochs,
                        optim.OptimizerState(rule, lr), None, seed=seed)
    return bool(np.array_equal(plain.params, params))


def _write_swsgd(res: SwsgdResult, out: Path, cfg: ScenarioConfig):
    _write_rows(out / "swsgd_sweep.csv", ["optimizer", "batch", "lr", "final_heldout_loss"], res.sweep)
    rows = []
    for (rule, m), cell in sorted(res.fold_curves.items()):
        mean = res.mean_curve(rule, m)
        for f, curve in enumerate(cell):
            rows += [(rule, res.batches[rule], res.lrs[rule], m, f, int(p), repr(float(v)))
                     for p, v in zip(res.points[(rule, m)], curve)]
        rows += [(rule, res.batches[rule], res.lrs[rule], m, "mean", int(p), repr(float(v)))
                 for p, v in zip(res.points[(rule, m)], mean)]
    _write_rows(out / "swsgd_curves.csv",
                ["optimizer", "batch", "lr", "window_mult", "fold", "points_touched", "test_loss"], rows)
    rec_rows = [(rule, m, f, r.epoch, r.points_touched, r.batch_index, repr(r.loss), r.wall_ns)
                for (rule, m, f), recs in sorted(res.records.items()) for r in recs]
    _write_rows(out / "swsgd_records.csv",
                ["optimizer", "window_mult", "fold", "epoch", "points_touched", "batch_index", "loss",
                 "wall_ns"], rec_rows)
    _write_rows(out / "swsgd_summary.csv", SUMMARY_HEADER, res.summary_rows())
    _write_rows(out / "swsgd_divergence.csv", ["optimizer", "window_mult", "fold", "message"], res.diverged)
    if cfg.svg:
        from .plot import swsgd_svg
        swsgd_svg(res, out / "swsgd.svg")


# --------------------------------------------------------------------------
# fused k-NN + Parzen window


@dataclass
class FusedIblResult:
    separate: dict[str, TimingResult]
    fused: dict[str, TimingResult]
    separate_distances: int
    fused_distances: int
    outputs_equal: bool
    n_rt: int
    n_p: int
    n_features: int

    @property
    def test_ratio(self) -> float:
        return self.fused["test"].median_ns / self.separate["test"].median_ns

    def rows(self):
        return [("PRW+k-NN separately", *phase_table(self.separate).values(), self.separate_distances,
                 int(self.outputs_equal)),
                ("PRW+k-NN jointly", *phase_table(self.fused).values(), self.fused_distances,
                 int(self.outputs_equal))]


def _ibl_loader(cfg: ScenarioConfig):
    if cfg.data is not None:
        def load():
            ds = load_dataset(cfg.data)
            n_p = cfg.queries or max(1, ds.n_points // 10)
            order = data.shuffle_indices(ds.n_points, cfg.seed, 0)
            return ds.subset(order[n_p:]), ds.subset(order[:n_p])
    else:
        n, d, c, spread = cfg.synth or (20000, 128, 10, 1.0)
        n_p = cfg.queries or 2000

        def load():
            ds = data.synth_blobs(cfg.seed, n + n_p, d, c, spread)
            return ds.subset(np.arange(n)), ds.subset(np.arange(n, n + n_p))
    return load


def run_fused_ibl(cfg: ScenarioConfig) -> FusedIblResult:
    load = _ibl_loader(cfg)
    RT, P = load()
    if RT.class_count < 2:
        raise ConfigError("fused-ibl needs at least two classes")
    if not 1 <= cfg.k <= RT.n_points:
        raise ConfigError(f"k={cfg.k} outside [1, {RT.n_points}]")
    kernel = instance.KernelSpec(cfg.kernel, cfg.bandwidth)

    def separate():
        return instance.knn_predict(RT, P, cfg.k), instance.prw_predict(RT, P, kernel)

    def fused():
        r = instance.fused_predict(RT, P, cfg.k, kernel)
        return r.knn_labels, r.prw_labels

    # each learner loads its own copy when run on its own
    sep_load = timing(lambda: (load(), load()), cfg.reps)
    fus_load = timing(load, cfg.reps)
    instance.counter.reset()
    sep_labels = separate()
    sep_count = instance.counter.distances
    instance.counter.reset()
    fus_labels = fused()
    fus_count = instance.counter.distances
    equal = all(np.array_equal(a, b) for a, b in zip(sep_labels, fus_labels))
    sep_test = timing(separate, cfg.reps)
    fus_test = timing(fused, cfg.reps)
    equal = equal and all(np.array_equal(a, b) for a, b in zip(sep_test.last_value, fus_test.last_value))
    result = FusedIblResult({"load": sep_load, "test": sep_test}, {"load": fus_load, "test": fus_test},
                            sep_count, fus_count, equal, RT.n_points, P.n_points, RT.n_features)
    out = _out_dir(cfg)
    if out is not None:
        _write_rows(out / "fused_ibl.csv",
                    ["scenario", "load_median_s", "load_min_s", "test_median_s", "test_min_s",
                     "distance_evaluations", "outputs_equal"], result.rows())
    if not equal:
        raise EquivalenceError("fused k-NN/PRW labels differ from the separate runs")
    return result


# --------------------------------------------------------------------------
# joint LR + SVM


@dataclass
class FusedLinearResult:
    separate: dict[str, TimingResult]
    joint: dict[str, TimingResult]
    separate_row_visits: int
    joint_row_visits: int
    weights_equal: bool
    predictions_equal: bool
    feature_bytes: int
    accuracies: dict[str, float] = field(default_factory=dict)

    @property
    def train_ratio(self) -> float:
        return self.joint["train"].median_ns / self.separate["train"].median_ns

    @property
    def test_ratio(self) -> float:
        return self.joint["test"].median_ns / self.separate["test"].median_ns

    def rows(self):
        return [("SVM + LR separately", *phase_table(self.separate).values(), self.separate_row_visits,
                 int(self.weights_equal and self.predictions_equal)),
                ("SVM + LR jointly", *phase_table(self.joint).values(), self.joint_row_visits,
                 int(self.weights_equal and self.predictions_equal))]


def run_fused_linear(cfg: ScenarioConfig) -> FusedLinearResult:
    if cfg.data is not None:
        ds = load_dataset(cfg.data)
        n_test = cfg.queries or max(1, ds.n_points // 5)
        order = data.shuffle_indices(ds.n_points, cfg.seed, 0)
        train_ds, test_ds = ds.subset(order[n_test:]), ds.subset(order[:n_test])
    else:
        n, d, c, spread = cfg.synth or (100000, 128, 2, 2.0)
        n_test = cfg.queries or n // 2
        ds = data.synth_blobs(cfg.seed, n + n_test, d, c, spread)
        train_ds, test_ds = ds.subset(np.arange(n)), ds.subset(np.arange(n, n + n_test))
        del ds
    if train_ds.class_count != 2:
        raise ConfigError("fused-linear needs a binary-labelled dataset")
    batch = cfg.batch or 128
    epochs = cfg.epochs or 1
    if not 1 <= batch <= train_ds.n_points:
        raise ConfigError(f"batch size {batch} outside [1, {train_ds.n_points}]")
    rule = cfg.optimizers[0] if len(cfg.optimizers) == 1 else "sgd"
    opt = optim.OptimizerState(rule, cfg.lr if cfg.lr is not None else 0.01)
    cfg_joint = linear.JointTrainConfig(
        [linear.LinearModel.zeros(train_ds.n_features, kind, cfg.weight_decay) for kind in ("logistic", "svm")],
        opt, cfg.seed)

    sep_train = timing(lambda: linear.train_separately(cfg_joint, train_ds, batch, epochs), cfg.reps)
    joint_train = timing(lambda: linear.joint_train(cfg_joint, train_ds, batch, epochs), cfg.reps)
    sep_run, joint_run = sep_train.last_value, joint_train.last_value
    weights_equal = all(np.array_equal(a.weights, b.weights) and a.bias == b.bias
                        for a, b in zip(sep_run.models, joint_run.models))
    models = joint_run.models
    sep_test = timing(lambda: [linear.predict_linear(m, test_ds) for m in models], cfg.reps)
    joint_test = timing(lambda: linear.predict_joint(models, test_ds), cfg.reps)
    preds_equal = all(np.array_equal(a, b) for a, b in zip(sep_test.last_value, joint_test.last_value))
    acc = {m.kind: float((p == test_ds.labels).mean()) for m, p in zip(models, joint_test.last_value)}
    result = FusedLinearResult({"train": sep_train, "test": sep_test}, {"train": joint_train, "test": joint_test},
                               sep_run.row_visits, joint_run.row_visits, weights_equal, preds_equal,
                               train_ds.features.nbytes, acc)
    out = _out_dir(cfg)
    if out is not None:
        _write_rows(out / "fused_linear.csv",
                    ["scenario", "train_median_s", "train_min_s", "test_median_s", "test_min_s",
                     "row_visits", "outputs_equal"], result.rows())
        for m in models:
            m.save(out / f"model_{m.kind}.json")
    if not (weights_equal and preds_equal):
        raise EquivalenceError("joint LR/SVM differs from separate training")
    return result


# --------------------------------------------------------------------------
# reuse-distance report


@dataclass
class TraceReportResult:
    reports: dict[str, trace.ClaimReport]
    histograms: dict[str, trace.ReuseHistogram]
    outputs_unchanged: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values()) and all(self.outputs_unchanged.values())


def _trace_sgd(cfg, n, d):
    ds = data.synth_blobs(cfg.seed, n, d, 2, 0.5)
    provider = linear.LinearProvider("logistic", d)
    init = np.zeros(d + 1)
    out = {}
    for fixed in (True, False):
        tr = trace.Trace()
        opt = optim.OptimizerState("sgd", 0.05)
        rep = optim.train(provider, ds, init, 1, 2, opt, seed=cfg.seed, shuffle=not fixed, trace=tr)
        plain = optim.train(provider, ds, init, 1, 2, optim.OptimizerState("sgd", 0.05), seed=cfg.seed,
                            shuffle=not fixed)
        out[fixed] = (tr, np.array_equal(rep.params, plain.params))
    return out


def run_trace_report(cfg: ScenarioConfig) -> TraceReportResult:
    n, d, c, spread = cfg.synth or (100, 8, 2, 0.5)
    reports, hists, unchanged = {}, {}, {}
    for tag in cfg.tags:
        if tag == "sgd":
            runs = _trace_sgd(cfg, n, d)
            for fixed, (tr, same) in runs.items():
                name = "sgd" if fixed else "sgd-reshuffled"
                hists[name] = trace.reuse_histogram(tr)
                reports[name] = trace.verify_claims("sgd", hists[name], n_train=n, fixed_order=fixed)
                unchanged[name] = same
        elif tag == "minibatch-linear":
            ds = data.synth_blobs(cfg.seed, n, d, 2, spread)
            batch = cfg.batch or 10
            traced = plain = linear.LinearModel.zeros(d, "logistic", cfg.weight_decay)
            tr = trace.Trace()
            o1, o2 = optim.OptimizerState("sgd", 0.05), optim.OptimizerState("sgd", 0.05)
            for b in optim.batches(n, batch, cfg.seed, 0, shuffle=False):
                traced = linear.minibatch_update(traced, b, ds, o1, trace=tr)
                plain = linear.minibatch_update(plain, b, ds, o2)
            hists[tag] = trace.reuse_histogram(tr)
            reports[tag] = trace.verify_claims(tag, hists[tag], n_weights=d)
            unchanged[tag] = bool(np.array_equal(traced.weights, plain.weights) and traced.bias == plain.bias)
        else:
            n_p = cfg.queries or 20
            ds = data.synth_blobs(cfg.seed, n + n_p, d, c, spread)
            RT, P = ds.subset(np.arange(n)), ds.subset(np.arange(n, n + n_p))
            k = min(cfg.k, n)
            tr = trace.Trace()
            if tag == "knn":
                labels = instance.knn_predict(RT, P, k, trace=tr)
                reports[tag] = trace.verify_claims(tag, trace.reuse_histogram(tr), n_rt=n)
            else:
                labels = instance.blocked_predict(RT, P, k, cfg.block_size, trace=tr)
                reports[tag] = trace.verify_claims(tag, trace.reuse_histogram(tr), n_rt=n, n_pred=n_p,
                                                   block_size=cfg.block_size)
            hists[tag] = trace.reuse_histogram(tr)
            unchanged[tag] = bool(np.array_equal(labels, instance.knn_predict(RT, P, k)))
    result = TraceReportResult(reports, hists, unchanged)
    out = _out_dir(cfg)
    if out is not None:
        for name, h in hists.items():
            h.to_csv(out / f"reuse_{name}.csv")
        rows = [(name, c.name, c.expected, c.observed, int(c.passed))
                for name, r in reports.items() for c in r.claims]
        rows += [(name, "tracing leaves outputs unchanged", "True", str(v), int(v))
                 for name, v in unchanged.items()]
        _write_rows(out / "claims.csv", ["algorithm", "claim", "expected", "observed", "passed"], rows)
    return result
