"""Study orchestration: minima zoo, correlations, init and batch-size studies, polyfit."""

from __future__ import annotations

import configparser
import dataclasses
import io as _io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import stats

from .convex import Kernel, fit_krr, hessian_constancy, poly_features
from .data import AttackSpec, LabeledDataset, MnistBundle, build_attack_set, cubic, gen_poly, mnist_bundle
from .errors import BasinProbeError, InsufficientDataError, InvalidSpecError, SolverError
from .hessian import HvpOperator, spectral_report
from .net import Activation, LossKind, Network, backward, forward
from .train import InitStrategy, TrainConfig, init_params, train

log = logging.getLogger(__name__)

DEFAULT_DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "data", "mnist5k")


def data_dir_from_env(explicit=None):
    if explicit:
        return explicit
    env = os.environ.get("BASINPROBE_DATA_DIR")
    if env:
        return env
    return os.path.normpath(DEFAULT_DATA_DIR)


def _opt(section, default, doc=""):
    return field(default=default, metadata={"section": section, "doc": doc})


@dataclass
class StudyConfig:
    """Everything a zoo or sweep needs; round-trips through an INI-style file."""

    data_dir: str = _opt("data", "", "dataset root; empty means $BASINPROBE_DATA_DIR or the bundled subset")
    n_train: int = _opt("data", 512, "first n training images form S_train, the rest the attack pool")
    pool: int = _opt("data", 4, "average-pooling factor applied to 28x28 images")
    normalize: bool = _opt("data", True, "channel-wise standardization")

    hidden: str = _opt("model", "64", "comma-separated hidden widths")
    activation: str = _opt("model", "relu", "relu, tanh or sigmoid")

    optimizer: str = _opt("train", "sgd", "sgd or gd")
    batch_size: int = _opt("train", 128, "mini-batch size (ignored by gd)")
    learning_rate: float = _opt("train", 0.1)
    max_epochs: int = _opt("train", 4000, "hard epoch cap; runs missing the target are logged and excluded")
    target_train_accuracy: float = _opt("train", 1.0)
    lr_decay_every: int = _opt("train", 0, "step decay period in epochs; 0 keeps lr constant")
    lr_decay_factor: float = _opt("train", 0.5)

    inits: str = _opt("study", "he_fan_in", "comma-separated init strategies, e.g. he_fan_in, uniform(0,1)")
    gammas: str = _opt("study", "0,0.5,1,2,4", "attack weights; 0 gives plain training")
    attack_sizes: str = _opt("study", "512,1024,2048", "attack-set sizes (ignored for gamma = 0)")
    seeds_per_cell: int = _opt("study", 3)
    seed: int = _opt("study", 0, "study seed; every run seed derives from it")

    k: int = _opt("probe", 50, "number of top eigenvalues in V(k)")
    probes: int = _opt("probe", 100, "Gaussian probes for the Frobenius estimate")
    fd_epsilon: float = _opt("probe", 1e-5, "finite-difference step for Hessian-vector products")
    assembly_fd_epsilon: float = _opt("probe", 1e-4, "finite-difference step for dense assembly")
    dense_cap: int = _opt("probe", 4096, "largest parameter count assembled densely")

    def __post_init__(self):
        self.validate()

    # grids
    @property
    def hidden_dims(self):
        return tuple(int(v) for v in _split(self.hidden))

    @property
    def init_grid(self):
        return _split_inits(self.inits)

    @property
    def gamma_grid(self):
        return [float(v) for v in _split(self.gammas)]

    @property
    def attack_size_grid(self):
        return [int(v) for v in _split(self.attack_sizes)]

    def validate(self):
        if not self.init_grid or not self.gamma_grid:
            raise InvalidSpecError("init and gamma grids must be nonempty")
        if any(g < 0 for g in self.gamma_grid):
            raise InvalidSpecError("gammas must be nonnegative")
        if any(g > 0 for g in self.gamma_grid) and not self.attack_size_grid:
            raise InvalidSpecError("positive gammas need a nonempty attack-size grid")
        if self.seeds_per_cell < 1:
            raise InvalidSpecError("seeds_per_cell must be >= 1")
        for text in self.init_grid:
            InitStrategy.parse(text)
        Activation(self.activation)
        self.hidden_dims

    def cells(self):
        """Grid cells in their fixed global order: init, then gamma, then attack size."""
        out = []
        for init in self.init_grid:
            for g in self.gamma_grid:
                sizes = [0] if g == 0 else self.attack_size_grid
                for a in sizes:
                    out.append({"init": init, "gamma": g, "attack_size": a})
        return out

    def train_config(self, gamma=0.0, shuffle_seed=0):
        return TrainConfig(self.optimizer, self.batch_size, self.learning_rate, self.max_epochs,
                           self.target_train_accuracy, LossKind.SOFTMAX_CROSS_ENTROPY, gamma, shuffle_seed,
                           lr_decay_every=self.lr_decay_every, lr_decay_factor=self.lr_decay_factor)

    def probe_settings(self):
        return {"k": self.k, "probes": self.probes, "fd_epsilon": self.fd_epsilon,
                "assembly_fd_epsilon": self.assembly_fd_epsilon, "dense_cap": self.dense_cap}

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for f in fields(self):
            sec = f.metadata["section"]
            if not parser.has_section(sec):
                parser.add_section(sec)
            value = getattr(self, f.name)
            parser.set(sec, f.name, str(value).lower() if isinstance(value, bool) else str(value))
        buf = _io.StringIO()
        buf.write("# basinprobe study configuration\n")
        for f in fields(self):
            if f.metadata.get("doc"):
                buf.write(f"# [{f.metadata['section']}] {f.name}: {f.metadata['doc']}\n")
        buf.write("\n")
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, source="<config>") -> "StudyConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise InvalidSpecError(f"{source}: {exc}") from exc
        known = {f.name: f for f in fields(cls)}
        values = {}
        for sec in parser.sections():
            for key, raw in parser.items(sec):
                if key not in known or known[key].metadata["section"] != sec:
                    raise InvalidSpecError(f"{source}: unknown key [{sec}] {key}")
                values[key] = _coerce(known[key], raw, parser, sec, source)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise InvalidSpecError(f"{path}: cannot read config: {exc.strerror}") from exc
        return cls.from_ini(text, source=str(path))


def _coerce(f, raw, parser, sec, source):
    kind = type(f.default)
    try:
        if kind is bool:
            return parser.getboolean(sec, f.name)
        return kind(raw)
    except ValueError as exc:
        raise InvalidSpecError(f"{source}: [{sec}] {f.name}: cannot parse {raw!r} as {kind.__name__}") from exc


def _split(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _split_inits(text):
    # commas also appear inside "uniform(0,1)", so split only at depth zero
    out, depth, cur = [], 0, ""
    for ch in str(text):
        depth += ch == "("
        depth -= ch == ")"
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


def run_seed(study_seed, cell_index, rep):
    """Per-run seed derived from the study seed; independent of execution order."""
    return int(np.random.SeedSequence([study_seed, cell_index, rep]).generate_state(1)[0])


def load_bundle(cfg: StudyConfig) -> MnistBundle:
    return mnist_bundle(data_dir_from_env(cfg.data_dir), cfg.n_train, cfg.pool, cfg.normalize)


RECORD_FIELDS = (
    "solution_id", "cell", "seed_index", "seed", "init", "optimizer", "learning_rate", "batch_size",
    "gamma", "attack_size", "num_params", "epochs", "train_accuracy", "test_accuracy", "attack_accuracy",
    "R_train", "v_of_k", "k", "k_used", "frob_sq_estimate", "frob_sq_se", "num_negative_eigs",
    "fd_epsilon", "assembly_fd_epsilon", "probes", "spectrum",
)


@dataclass
class ExperimentRecord:
    """One probed solution; only runs that met the train-accuracy target become records."""

    solution_id: str
    cell: int
    seed_index: int
    seed: int
    init: str
    optimizer: str
    learning_rate: float
    batch_size: int
    gamma: float
    attack_size: int
    num_params: int
    epochs: int
    train_accuracy: float
    test_accuracy: float
    attack_accuracy: Optional[float]
    R_train: float
    v_of_k: Optional[float]
    k: int
    k_used: int
    frob_sq_estimate: float
    frob_sq_se: float
    num_negative_eigs: Optional[int]
    fd_epsilon: float
    assembly_fd_epsilon: Optional[float]
    probes: int
    spectrum: str
    eigenvalues: np.ndarray = field(default=None, repr=False)
    solution: object = field(default=None, repr=False)

    def row(self):
        return {f: getattr(self, f) for f in RECORD_FIELDS}


@dataclass
class RunStatus:
    solution_id: str
    cell: int
    seed_index: int
    status: str  # "ok", "target_missed" or "error"
    detail: str = ""
    epochs: int = 0
    train_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None


_WORKER = {}


def _worker_init(cfg, bundle):
    _WORKER["cfg"] = cfg
    _WORKER["bundle"] = bundle


def _zoo_task(task):
    return zoo_run(_WORKER["cfg"], _WORKER["bundle"], *task)


def zoo_run(cfg: StudyConfig, bundle: MnistBundle, cell_index, cell, rep, keep_solution=False):
    """Train and probe one (cell, seed); returns ``(RunStatus, record_or_None)``."""
    sid = f"c{cell_index:03d}-s{rep:02d}"
    seed = run_seed(cfg.seed, cell_index, rep)
    try:
        net = Network((bundle.train.dim,) + cfg.hidden_dims + (bundle.train.num_classes,), cfg.activation)
        init = InitStrategy.parse(cell["init"], seed=seed)
        gamma, asize = cell["gamma"], cell["attack_size"]
        attack = None
        if gamma > 0:
            if asize > len(bundle.attack_pool):
                raise InvalidSpecError(f"attack size {asize} exceeds the pool of {len(bundle.attack_pool)}")
            src = bundle.attack_pool.subset(slice(0, asize))
            attack = build_attack_set(AttackSpec(src, seed, bundle.train.num_classes))
        tcfg = cfg.train_config(gamma, seed)
        sol = train(net.with_params(init_params(net, init)), bundle.train, tcfg, attack, bundle.test, init)
    except BasinProbeError as exc:
        log.warning("%s failed: %s", sid, exc)
        return RunStatus(sid, cell_index, rep, "error", f"{type(exc).__name__}: {exc}"), None
    status = RunStatus(sid, cell_index, rep, "ok", "", sol.epochs_used, sol.train_accuracy, sol.test_accuracy)
    if not sol.reached_target:
        status.status = "target_missed"
        status.detail = f"train accuracy {sol.train_accuracy:.4f} after {sol.epochs_used} epochs"
        log.info("%s excluded: %s", sid, status.detail)
        return status, None
    try:
        op = HvpOperator.for_network(net, bundle.train.inputs, bundle.train.labels,
                                     LossKind.SOFTMAX_CROSS_ENTROPY, sol.params, cfg.fd_epsilon)
        rep_ = spectral_report(op, cfg.k, cfg.probes, seed, "auto", cfg.dense_cap, cfg.assembly_fd_epsilon)
    except BasinProbeError as exc:
        status.status = "error"
        status.detail = f"probe failed: {type(exc).__name__}: {exc}"
        return status, None
    record = ExperimentRecord(
        sid, cell_index, rep, seed, init.label(), tcfg.optimizer.value, tcfg.learning_rate, tcfg.batch_size,
        gamma, asize if gamma > 0 else 0, net.num_params, sol.epochs_used, sol.train_accuracy,
        sol.test_accuracy, sol.attack_accuracy if gamma > 0 else None, sol.final_losses[0],
        rep_.v_of_k, cfg.k, rep_.k_used, rep_.frob_sq_estimate, rep_.frob_sq_se, rep_.num_negative,
        cfg.fd_epsilon, rep_.assembly_fd_epsilon, cfg.probes, rep_.spectrum,
        eigenvalues=np.asarray(rep_.eigenvalues),
        solution=sol if keep_solution else None,
    )
    return status, record


def run_minima_zoo(cfg: StudyConfig, bundle: Optional[MnistBundle] = None, threads=1, keep_solutions=False,
                   progress=None):
    """Train, verify and probe every grid cell x seed.

    Returns ``(records, statuses)`` in the global order (cell index, then
    seed). Runs that miss the train target or fail are kept in ``statuses``
    and never become records.
    """
    bundle = bundle if bundle is not None else load_bundle(cfg)
    tasks = [(ci, cell, rep, keep_solutions) for ci, cell in enumerate(cfg.cells())
             for rep in range(cfg.seeds_per_cell)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(threads, initializer=_worker_init, initargs=(cfg, bundle)) as pool:
            results = list(pool.map(_zoo_task, tasks))
    else:
        results = []
        for t in tasks:
            results.append(zoo_run(cfg, bundle, *t))
            if progress:
                progress(results[-1][0])
    statuses = [s for s, _ in results]
    records = [r for _, r in results if r is not None]
    return records, statuses


def classify(test_accuracy, good_threshold, num_classes=10):
    """``bad`` below twice the random-guess rate, ``good`` above ``good_threshold``."""
    if test_accuracy < 2.0 / num_classes:
        return "bad"
    if test_accuracy > good_threshold:
        return "good"
    return "unclassified"


def good_threshold(gamma0_test_accuracies):
    if len(gamma0_test_accuracies) == 0:
        raise InsufficientDataError("no gamma = 0 solutions to set the good threshold")
    return float(np.median(gamma0_test_accuracies)) - 0.10


@dataclass
class CorrelationSummary:
    metric: str
    n: int
    rho: Optional[float]
    p_value: Optional[float]
    permutations: int
    defined: bool
    note: str = ""

    def to_dict(self):
        return dataclasses.asdict(self)


def _rank_corr_batch(rx, ry_perms):
    # Pearson correlation of ranks against many permuted rank vectors at once
    rx = rx - rx.mean()
    ry = ry_perms - ry_perms.mean(axis=1, keepdims=True)
    return (ry @ rx) / (np.linalg.norm(rx) * np.linalg.norm(ry, axis=1))


def spearman_permutation(x, y, permutations=10_000, seed=0):
    """Spearman rho with a two-sided permutation p-value ``(hits + 1) / (perms + 1)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None, None
    rho = float(stats.spearmanr(x, y).statistic)
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    rng = np.random.default_rng(seed)
    perms = np.stack([rng.permutation(ry) for _ in range(permutations)])
    null = _rank_corr_batch(rx, perms)
    hits = int(np.sum(np.abs(null) >= abs(rho) - 1e-12))
    return rho, (hits + 1) / (permutations + 1)


def correlate(records, metrics=("v_of_k", "frob_sq_estimate"), permutations=10_000, seed=0):
    """Rank correlation of test accuracy against each geometry metric."""
    out = {}
    for metric in metrics:
        rows = [r for r in records if _get(r, metric) is not None and _get(r, "test_accuracy") is not None]
        if len(rows) < 5:
            raise InsufficientDataError(f"{metric}: need >= 5 records with the metric, have {len(rows)}")
        x = [float(_get(r, "test_accuracy")) for r in rows]
        y = [float(_get(r, metric)) for r in rows]
        rho, p = spearman_permutation(x, y, permutations, seed)
        if rho is None:
            out[metric] = CorrelationSummary(metric, len(rows), None, None, permutations, False,
                                             "zero variance; rank correlation undefined")
        else:
            out[metric] = CorrelationSummary(metric, len(rows), rho, p, permutations, True)
    return out


def _get(r, key):
    v = r.get(key) if isinstance(r, dict) else getattr(r, key)
    if v == "" or v is None:
        return None
    return v


def _mean_sd(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return None, None
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


BASIN_FIELDS = ("strategy", "learning_rate", "runs", "reached", "good", "unclassified", "bad",
                "good_fraction", "train_mean", "train_sd", "test_mean", "test_sd", "good_threshold")


def basin_fraction_study(bundle: MnistBundle, hidden=(64,), strategies=None, seeds=6, base=None,
                         lr_overrides=None, study_seed=0, activation="relu"):
    """Plain training (gamma = 0) from each init strategy; classify every run that reaches the target.

    The good threshold is the median test accuracy of all reaching runs
    minus 0.10, the bad one twice the random-guess rate.
    Returns ``(table_rows, run_rows)``.
    """
    from .train import INIT_STRATEGIES

    strategies = list(strategies or INIT_STRATEGIES)
    # the all-positive uniform(0,1) start needs ~7000 epochs at lr 0.1
    base = base or TrainConfig(max_epochs=12000)
    if base.gamma != 0:
        raise InvalidSpecError("the basin-fraction study runs without the attack term")
    lr_overrides = lr_overrides or {}
    net = Network((bundle.train.dim,) + tuple(hidden) + (bundle.train.num_classes,), activation)
    runs = []
    for si, text in enumerate(strategies):
        lr = lr_overrides.get(text, base.learning_rate)
        for rep in range(seeds):
            seed = run_seed(study_seed, si, rep)
            init = InitStrategy.parse(text, seed=seed)
            cfg = dataclasses.replace(base, learning_rate=lr, shuffle_seed=seed)
            row = {"strategy": text, "seed": seed, "learning_rate": lr}
            try:
                sol = train(net.with_params(init_params(net, init)), bundle.train, cfg, None, bundle.test, init)
                row.update(reached=sol.reached_target, train_accuracy=sol.train_accuracy,
                           test_accuracy=sol.test_accuracy, epochs=sol.epochs_used, status="ok")
            except BasinProbeError as exc:
                row.update(reached=False, status=f"{type(exc).__name__}: {exc}")
            runs.append(row)
    reached = [r for r in runs if r["reached"]]
    thr = good_threshold([r["test_accuracy"] for r in reached]) if reached else None
    table = []
    for text in strategies:
        mine = [r for r in runs if r["strategy"] == text]
        ok = [r for r in mine if r["reached"]]
        for r in ok:
            r["class"] = classify(r["test_accuracy"], thr, bundle.train.num_classes)
        tr = _mean_sd([r["train_accuracy"] for r in ok])
        te = _mean_sd([r["test_accuracy"] for r in ok])
        counts = {c: sum(r["class"] == c for r in ok) for c in ("good", "unclassified", "bad")}
        table.append({
            "strategy": text, "learning_rate": mine[0]["learning_rate"], "runs": len(mine), "reached": len(ok),
            **counts, "good_fraction": counts["good"] / len(ok) if ok else None,
            "train_mean": tr[0], "train_sd": tr[1], "test_mean": te[0], "test_sd": te[1], "good_threshold": thr,
        })
    return table, runs


COMPARE_FIELDS = ("mode", "batch_size", "learning_rate", "runs", "reached", "train_mean", "train_sd",
                  "test_mean", "test_sd")


def first_step_gradient(net, params, ds, loss=LossKind.SOFTMAX_CROSS_ENTROPY):
    """Full-batch gradient at ``params``; the first GD step direction."""
    return backward(net, ds.inputs, ds.labels, loss, params=params).grad_params


def sgd_vs_fullbatch_study(train_ds: LabeledDataset, test_ds: LabeledDataset, hidden=(64,), seeds=6,
                           full_cfg=None, mini_cfg=None, study_seed=0, activation="relu"):
    """Identical inits trained with batch N (full batch) and batch 128; mean +- sd over seeds.

    Returns ``(table_rows, run_rows)``.
    """
    n = len(train_ds)
    full_cfg = full_cfg or TrainConfig("gd", n, 0.5, 20000)
    mini_cfg = mini_cfg or TrainConfig("sgd", 128, 0.1, 4000)
    net = Network((train_ds.dim,) + tuple(hidden) + (train_ds.num_classes,), activation)
    runs = []
    for rep in range(seeds):
        seed = run_seed(study_seed, 0, rep)
        init = InitStrategy.parse("he_fan_in", seed=seed)
        theta0 = init_params(net, init)
        for mode, cfg in (("full_batch", full_cfg), ("mini_batch", mini_cfg)):
            cfg = dataclasses.replace(cfg, shuffle_seed=seed)
            sol = train(net.with_params(theta0), train_ds, cfg, None, test_ds, init)
            runs.append({"mode": mode, "seed": seed, "batch_size": n if cfg.optimizer.value == "gd" else cfg.batch_size,
                         "learning_rate": cfg.learning_rate, "reached": sol.reached_target,
                         "train_accuracy": sol.train_accuracy, "test_accuracy": sol.test_accuracy,
                         "epochs": sol.epochs_used})
    table = []
    for mode in ("full_batch", "mini_batch"):
        mine = [r for r in runs if r["mode"] == mode]
        tr = _mean_sd([r["train_accuracy"] for r in mine])
        te = _mean_sd([r["test_accuracy"] for r in mine])
        table.append({"mode": mode, "batch_size": mine[0]["batch_size"], "learning_rate": mine[0]["learning_rate"],
                      "runs": len(mine), "reached": sum(r["reached"] for r in mine),
                      "train_mean": tr[0], "train_sd": tr[1], "test_mean": te[0], "test_sd": te[1]})
    return table, runs


# cubic regression with few samples

POLY_DEPTHS = (1, 2, 4, 12)
POLY_KRR = ((3, 0.01), (5, 0.0), (8, 0.0), (10, 0.0))
POLY_INTERVAL = (-1.5, 3.5)


@dataclass
class PolyfitResult:
    grid: np.ndarray
    truth: np.ndarray
    mlp_curves: dict  # depth -> predictions on grid
    krr_curves: dict  # (degree, lambda) -> predictions on grid
    mlp_info: list
    krr_info: list

    def max_deviation(self, pred):
        return float(np.max(np.abs(pred - self.truth)))

    def table(self):
        rows = []
        for info in self.mlp_info:
            rows.append({"model": f"mlp_depth{info['depth']}", **info,
                         "max_deviation": self.max_deviation(self.mlp_curves[info["depth"]])})
        for info in self.krr_info:
            key = (info["degree"], info["lambda"])
            dev = self.max_deviation(self.krr_curves[key]) if key in self.krr_curves else None
            rows.append({"model": f"krr_deg{info['degree']}_lam{info['lambda']:g}", **info, "max_deviation": dev})
        return rows


POLY_FIELDS = ("model", "depth", "degree", "lambda", "num_params", "width", "learning_rate", "epochs",
               "final_loss", "reached", "status", "max_deviation")


def polyfit_study(n=5, noise_sd=0.1, seed=0, depths=POLY_DEPTHS, width=40, krr=POLY_KRR,
                  loss_tolerance=1e-3, max_epochs=200_000, grid_points=501):
    """Unregularized MLPs of several depths and polynomial KRR fits on a few noisy cubic samples."""
    ds = gen_poly(n, noise_sd, seed, POLY_INTERVAL)
    grid = np.linspace(*POLY_INTERVAL, grid_points)
    truth = cubic(grid)
    mlp_curves, mlp_info = {}, []
    for depth in depths:
        net = Network((1,) + (width,) * depth + (1,), "relu")
        # deep stacks need a smaller step to stay stable
        lr = 0.01 if depth <= 4 else 0.002
        cfg = TrainConfig("gd", n, lr, max_epochs, 1.0, LossKind.LEAST_SQUARES, loss_tolerance=loss_tolerance)
        init = InitStrategy.parse("he_fan_in", seed=seed + depth)
        sol = train(net.with_params(init_params(net, init)), ds, cfg, init=init)
        mlp_curves[depth] = forward(net, grid[:, None], sol.params)[:, 0]
        mlp_info.append({"depth": depth, "width": width, "num_params": net.num_params, "learning_rate": lr,
                         "epochs": sol.epochs_used, "final_loss": sol.final_losses[0],
                         "reached": sol.reached_target, "status": "ok"})
    krr_curves, krr_info = {}, []
    for degree, lam in krr:
        info = {"degree": degree, "lambda": lam, "num_params": degree + 1, "status": "ok"}
        try:
            model = fit_krr(ds, Kernel("polynomial", degree), lam)
            krr_curves[(degree, lam)] = model.predict(grid[:, None])
        except SolverError as exc:
            info["status"] = f"SolverError: {exc}"
        krr_info.append(info)
    return PolyfitResult(grid, truth, mlp_curves, krr_curves, mlp_info, krr_info), ds


def convex_demo(n=5, degree=10, num_minima=20, seed=0, noise_sd=0.1, n_test=200):
    """Global minima of an over-parameterized polynomial least-squares fit."""
    train_ds = gen_poly(n, noise_sd, seed, POLY_INTERVAL)
    test_ds = gen_poly(n_test, noise_sd, seed + 1, POLY_INTERVAL)
    phi = poly_features(train_ds.inputs, degree)
    phi_test = poly_features(test_ds.inputs, degree)
    return hessian_constancy(phi, train_ds.labels, num_minima, phi_test, test_ds.labels, seed)


# the all-positive uniform(0,1) init starts with huge logits; the default step still reaches the
# target, only slower, so no per-strategy override is needed at lr 0.1
BASIN_LR_OVERRIDES = {}


TWO_LAYER_FIELDS = ("dataset", "activation", "K", "d", "seed", "epochs", "r_emp", "lhs", "hessian_c_frob_sq",
                    "b_norm_4", "fisher_frob_sq", "residual_term", "c_sigma", "d_const", "mc_error",
                    "corollary1_slack", "holds")


def _teacher_set(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w = rng.standard_normal(d) / np.sqrt(d)
    return LabeledDataset(X, np.sin(2.0 * X @ w))


def two_layer_zoo(widths=(8, 16, 32), activations=("relu", "tanh"), seeds=1, seed=0, tolerance=1e-5,
                  max_epochs=200_000):
    """Scalar-output two-layer nets trained by full-batch GD to interpolation, each with its bound report."""
    from .twolayer import TwoLayerNet, check_corollary1

    # the cubic targets reach ~10 in magnitude, hence the smaller step there
    sets = {"cubic5": (gen_poly(5, 0.1, seed, POLY_INTERVAL), 0.005), "teacher20": (_teacher_set(20, 4, seed), 0.05)}
    out = []
    for name, (ds, lr) in sets.items():
        for act in activations:
            for K in widths:
                for rep in range(seeds):
                    s = run_seed(seed, K, rep)
                    net = Network((ds.dim, K, 1), act)
                    init = InitStrategy.parse("he_fan_in", seed=s)
                    cfg = TrainConfig("gd", len(ds), lr, max_epochs, 1.0, LossKind.LEAST_SQUARES,
                                      loss_tolerance=tolerance)
                    sol = train(net.with_params(init_params(net, init)), ds, cfg, init=init)
                    two = TwoLayerNet.from_network(net.with_params(sol.params))
                    report = check_corollary1(two, ds.inputs, ds.labels)
                    out.append({"info": {"dataset": name, "activation": act, "K": K, "d": ds.dim, "seed": s,
                                         "epochs": sol.epochs_used, "reached": sol.reached_target},
                                "report": report, "solution": sol})
    return out
