"""Brute-force transfer experiment: every path, every degree, one record each.

A transfer path is an ordered tuple of distinct branch labels; the model
starts on the first branch and is fully retrained on each subsequent one.
The sweep walks each root's path tree depth-first so a trained prefix
(say A+B) is computed once and shared by all its extensions (A+B+C,
A+B+D, ...).  Each node's retraining shuffle seed is derived by hashing
(global seed, path), which makes the cache semantics-preserving and the
whole sweep reproducible under any worker count.

Transferability delta_m compares the transferred model's test MAPE on
the final branch against that branch's own from-scratch base model:
positive means the transfer beat training locally.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from . import model as model_mod
from . import rng
from .errors import ContractError, StorageError, TransferLabError

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("path", "degree", "target", "mape_base", "mape_transferred",
                 "delta_m_relative", "delta_m_raw", "rmse_transferred", "status")


@dataclass(frozen=True)
class TransferRecord:
    path: tuple
    degree: int
    target: str
    mape_base: float
    mape_transferred: float
    delta_m_relative: float
    delta_m_raw: float
    rmse_transferred: float
    status: str = "ok"

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def source(self):
        """Immediate source branch: the hop the model arrived from."""
        return self.path[-2]


@dataclass(frozen=True)
class SweepResult:
    records: tuple
    base_mape: dict      # branch -> MAPE of its own base model
    base_rmse: dict
    base_status: dict    # branch -> "ok" or failure reason


def path_key(path):
    return "+".join(path)


def _default_labels(n):
    return [f"b{i}" for i in range(1, n + 1)]


def enumerate_paths(branches, max_degree):
    """All ordered sequences of 2..max_degree+1 distinct branches.

    ``branches`` is a label sequence or a branch count.  At degree d
    there are n·(n−1)·…·(n−d) paths.
    """
    labels = (_default_labels(branches) if isinstance(branches, int)
              else list(branches))
    n = len(labels)
    if len(set(labels)) != n:
        raise ContractError("branch labels must be distinct")
    if not 1 <= max_degree <= n - 1:
        raise ContractError(
            f"max_degree must be in [1, {n - 1}] for {n} branches, "
            f"got {max_degree}")
    paths = []
    for degree in range(1, max_degree + 1):
        paths.extend(itertools.permutations(labels, degree + 1))
    return paths


def count_paths(n_branches, max_degree):
    """Closed-form per-degree path counts [degree 1, ..., max_degree]."""
    counts = []
    for degree in range(1, max_degree + 1):
        counts.append(math.perm(n_branches, degree + 1))
    return counts


def transferability(mape_base, mape_transferred):
    """Relative MAPE improvement of the transferred model (positive = better)."""
    if not mape_base > 0.0:
        raise ContractError(f"base MAPE must be positive, got {mape_base}")
    return (mape_base - mape_transferred) / mape_base


def path_seed(global_seed, path):
    """Stable per-path 64-bit training seed."""
    return rng.derive_key(global_seed, "sweep-path/" + path_key(path))


def transfer_retrain(source_model, target_dataset, config=None, shuffle_seed=0):
    """Retrain a copy of the source net on the target branch's train split.

    All parameters stay trainable (no layer freezing); runs for
    config.retrain_epochs and extends provenance.  The source model is
    left untouched.
    """
    config = config or source_model.config
    if not source_model.provenance:
        raise ContractError("transfer source must be a trained model")
    if target_dataset.branch_id in source_model.provenance:
        raise ContractError(
            f"invalid path: branch {target_dataset.branch_id} already in "
            f"provenance {'+'.join(source_model.provenance)}")
    if config.param_shapes() != source_model.config.param_shapes():
        raise ContractError("retrain config changes the architecture")
    retrained = source_model.copy()
    return model_mod.train(retrained, target_dataset, config.retrain_epochs,
                           shuffle_seed)


def _failure_text(exc):
    text = f"failed: {type(exc).__name__}: {exc}"
    return text.replace(";", ",").replace("\n", " ")


def _failed_record(path, reason, base_mape):
    nan = float("nan")
    return TransferRecord(
        path=tuple(path), degree=len(path) - 1, target=path[-1],
        mape_base=base_mape if base_mape is not None else nan,
        mape_transferred=nan, delta_m_relative=nan, delta_m_raw=nan,
        rmse_transferred=nan, status=reason)


class _Sweeper:
    """One sweep invocation: datasets, seeds, checkpointing, bookkeeping."""

    def __init__(self, datasets, config, global_seed, max_degree,
                 checkpoint_dir=None, resume=False):
        self.datasets = {}
        for ds in datasets:
            if ds.branch_id in self.datasets:
                raise ContractError(f"duplicate branch {ds.branch_id}")
            self.datasets[ds.branch_id] = ds
        if len(self.datasets) < 2:
            raise ContractError("sweep needs at least 2 branches")
        self.labels = sorted(self.datasets)
        if not 1 <= max_degree <= len(self.labels) - 1:
            raise ContractError(
                f"max_degree must be in [1, {len(self.labels) - 1}], "
                f"got {max_degree}")
        self.config = config
        self.global_seed = global_seed
        self.max_degree = max_degree
        self.checkpoint_dir = checkpoint_dir
        self.resume = resume
        self.base_models = {}
        self.base_mape = {}
        self.base_rmse = {}
        self.base_status = {}

    # ----------------------------------------------------- checkpoints

    def _checkpoint_path(self, path):
        if self.checkpoint_dir is None:
            return None
        return self.checkpoint_dir / f"model_{path_key(path)}.ckpt"

    def _load_checkpoint(self, path):
        file = self._checkpoint_path(path)
        if self.resume and file is not None and file.exists():
            loaded = model_mod.load_model(file)
            if list(loaded.provenance) != list(path):
                raise StorageError(
                    f"checkpoint {file} provenance {loaded.provenance} "
                    f"does not match path {path_key(path)}")
            return loaded
        return None

    def _store_checkpoint(self, path, model):
        # only prefixes (paths that still have extensions) need caching
        file = self._checkpoint_path(path)
        if file is not None and len(path) <= self.max_degree:
            model_mod.save_model(model, file)

    # ------------------------------------------------------ base stage

    def _train_base(self, label):
        dataset = self.datasets[label]
        path = (label,)
        try:
            trained = self._load_checkpoint(path)
            if trained is None:
                cfg = replace(self.config,
                              seed=rng.derive_key(self.global_seed,
                                                  f"init/{label}"))
                trained = model_mod.init_model(cfg)
                model_mod.train(trained, dataset, self.config.base_epochs,
                                path_seed(self.global_seed, path))
                self._store_checkpoint(path, trained)
        except TransferLabError as exc:
            log.warning("base training failed for %s: %s", label, exc)
            self.base_status[label] = _failure_text(exc)
            return
        self.base_models[label] = trained
        try:
            result = model_mod.evaluate(trained, dataset.test, dataset.scaler)
        except TransferLabError as exc:
            log.warning("base evaluation failed for %s: %s", label, exc)
            self.base_status[label] = _failure_text(exc)
            return
        self.base_mape[label] = result.mape
        self.base_rmse[label] = result.rmse
        self.base_status[label] = "ok"

    # ------------------------------------------------------ path stage

    def _descendant_paths(self, path):
        """All enumerated paths extending ``path`` (inclusive)."""
        rest = [lb for lb in self.labels if lb not in path]
        out = []
        for extra in range(0, self.max_degree + 2 - len(path)):
            for tail in itertools.permutations(rest, extra):
                full = tuple(path) + tail
                if len(full) >= 2:
                    out.append(full)
        return out

    def _record(self, path, trained):
        target = path[-1]
        base = self.base_mape.get(target)
        if base is None:
            return _failed_record(
                path, f"failed: base model for target {target} unavailable "
                      f"({self.base_status[target]})", None)
        dataset = self.datasets[target]
        try:
            result = model_mod.evaluate(trained, dataset.test, dataset.scaler)
        except TransferLabError as exc:
            return _failed_record(path, _failure_text(exc), base)
        return TransferRecord(
            path=tuple(path), degree=len(path) - 1, target=target,
            mape_base=base, mape_transferred=result.mape,
            delta_m_relative=transferability(base, result.mape),
            delta_m_raw=result.mape - base,
            rmse_transferred=result.rmse, status="ok")

    def _walk(self, path, trained, records):
        """Depth-first over extensions of ``path`` (model already trained)."""
        if len(path) >= 2:
            records.append(self._record(path, trained))
        if len(path) > self.max_degree:
            return
        for label in self.labels:
            if label in path:
                continue
            child = tuple(path) + (label,)
            try:
                child_model = self._load_checkpoint(child)
                if child_model is None:
                    child_model = transfer_retrain(
                        trained, self.datasets[label], self.config,
                        path_seed(self.global_seed, child))
                    self._store_checkpoint(child, child_model)
            except TransferLabError as exc:
                log.warning("path %s failed: %s", path_key(child), exc)
                reason = _failure_text(exc)
                for lost in self._descendant_paths(child):
                    records.append(_failed_record(
                        lost, reason, self.base_mape.get(lost[-1])))
                continue
            self._walk(child, child_model, records)

    def _root_records(self, label):
        records = []
        if label not in self.base_models:
            reason = (f"failed: source subtree root {label} unavailable "
                      f"({self.base_status[label]})")
            for lost in self._descendant_paths((label,)):
                records.append(_failed_record(
                    lost, reason, self.base_mape.get(lost[-1])))
            return records
        self._walk((label,), self.base_models[label], records)
        return records

    def run(self, parallelism=1):
        if parallelism < 1:
            raise ContractError(f"parallelism must be >= 1, got {parallelism}")
        if parallelism == 1:
            for label in self.labels:
                self._train_base(label)
            records = []
            for label in self.labels:
                records.extend(self._root_records(label))
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                list(pool.map(self._train_base, self.labels))
                records = []
                for chunk in pool.map(self._root_records, self.labels):
                    records.extend(chunk)
        records.sort(key=lambda r: path_key(r.path))
        return SweepResult(records=tuple(records),
                           base_mape=dict(self.base_mape),
                           base_rmse=dict(self.base_rmse),
                           base_status=dict(self.base_status))


def sweep(datasets, config, global_seed, max_degree, parallelism=1,
          checkpoint_dir=None, resume=False):
    """Train base models and execute every transfer path.

    Returns a SweepResult whose records are sorted lexicographically by
    `+`-joined path.  Failed paths are recorded with a reason rather than
    dropped.  With ``checkpoint_dir`` set, prefix models are saved there;
    ``resume`` reuses any that exist (bit-identical to retraining).
    """
    runner = _Sweeper(datasets, config, global_seed, max_degree,
                      checkpoint_dir=checkpoint_dir, resume=resume)
    return runner.run(parallelism)


# ------------------------------------------------------------- file I/O

def write_sweep(path, records):
    """Sweep records as a `;`-separated CSV, one row per transfer path."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(";".join(SWEEP_COLUMNS) + "\n")
            for rec in records:
                fh.write(";".join([
                    path_key(rec.path), str(rec.degree), rec.target,
                    repr(rec.mape_base), repr(rec.mape_transferred),
                    repr(rec.delta_m_relative), repr(rec.delta_m_raw),
                    repr(rec.rmse_transferred), rec.status,
                ]) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write sweep records {path}: {exc}") from exc


def read_sweep(path):
    """Inverse of write_sweep; floats round-trip exactly."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read sweep records {path}: {exc}") from exc
    if not lines or lines[0] != ";".join(SWEEP_COLUMNS):
        raise StorageError(f"{path} is not a sweep record file")
    records = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(";")
        if len(parts) != len(SWEEP_COLUMNS):
            raise StorageError(f"{path}:{ln}: expected "
                               f"{len(SWEEP_COLUMNS)} fields, got {len(parts)}")
        try:
            records.append(TransferRecord(
                path=tuple(parts[0].split("+")), degree=int(parts[1]),
                target=parts[2], mape_base=float(parts[3]),
                mape_transferred=float(parts[4]),
                delta_m_relative=float(parts[5]), delta_m_raw=float(parts[6]),
                rmse_transferred=float(parts[7]), status=parts[8]))
        except ValueError as exc:
            raise StorageError(f"{path}:{ln}: {exc}") from exc
    return records
