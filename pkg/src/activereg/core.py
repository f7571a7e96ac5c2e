"""Shared plumbing: the loss catalog, weighted M-norms, weight vectors, the
counting target oracle, seeded random streams and matrix IO."""

from __future__ import annotations

import csv
import json
import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Loss",
    "loss_catalog",
    "compose_losses",
    "mnorm",
    "WeightVector",
    "TargetOracle",
    "OracleView",
    "RngStream",
    "rng_stream",
    "check_matrix",
    "read_matrix",
    "write_matrix",
    "write_report",
    "MatrixFormatError",
]


# ---------------------------------------------------------------- randomness


@dataclass(frozen=True)
class RngStream:
    """A replayable random source identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    return RngStream(seed, stream_id).generator()


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


# ---------------------------------------------------------------- matrices


def check_matrix(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        i, j = np.argwhere(~np.isfinite(A))[0]
        raise ValueError(f"{name} has a non-finite entry at row {i}, column {j}")
    return A


# ---------------------------------------------------------------- losses


@dataclass(frozen=True)
class Loss:
    """A coordinate-wise loss ``M`` together with its declared growth constants.

    ``fn`` and ``dfn`` act on nonnegative arrays (``|x|``). Growth bounds read
    ``c_L (y/x)^q_M <= M(y)/M(x) <= c_U (y/x)^p_M`` for ``y > x > 0``.
    """

    name: str
    params: tuple
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    dfn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    p_M: float
    c_U: float = 1.0
    q_M: float | None = None
    c_L: float | None = None
    root_subadditive: bool = False
    scale_invariant: bool = False
    convex: bool = False
    bounded: bool = False
    # M(sqrt(u)) concave in u: iteratively reweighted least squares is then a
    # majorize-minimize scheme and never increases the objective.
    mm_reweightable: bool = False

    def __call__(self, x) -> np.ndarray:
        return self.fn(np.abs(np.asarray(x, dtype=np.float64)))

    def eval(self, x):
        out = self(x)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, s) -> np.ndarray:
        return self.dfn(np.abs(np.asarray(s, dtype=np.float64)))

    def irls_weight(self, r: np.ndarray, mu: float = 0.0) -> np.ndarray:
        """``M'(s)/s`` at ``s = sqrt(r^2 + mu)``, the reweighting factor."""
        s = np.sqrt(np.asarray(r, dtype=np.float64) ** 2 + mu)
        s = np.maximum(s, 1e-300)
        return self.dfn(s) / s

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": list(self.params),
            "p_M": self.p_M,
            "c_U": self.c_U,
            "q_M": self.q_M,
            "c_L": self.c_L,
            "root_subadditive": self.root_subadditive,
            "scale_invariant": self.scale_invariant,
        }


def _lp(p: float) -> Loss:
    if not p > 0:
        raise ValueError(f"lp needs p > 0, got {p}")
    return Loss(
        name="lp",
        params=(p,),
        fn=lambda s: s**p,
        dfn=lambda s: p * s ** (p - 1) if p >= 1 else p * np.maximum(s, 1e-300) ** (p - 1),
        p_M=p,
        q_M=p,
        c_L=1.0,
        root_subadditive=True,
        scale_invariant=True,
        convex=p >= 1,
        mm_reweightable=p <= 2,
    )


def _huber(tau: float) -> Loss:
    if not tau > 0:
        raise ValueError(f"huber needs tau > 0, got {tau}")
    return Loss(
        name="huber",
        params=(tau,),
        fn=lambda s: np.where(s <= tau, s * s / (2 * tau), s - tau / 2),
        dfn=lambda s: np.where(s <= tau, s / tau, 1.0),
        p_M=2.0,
        q_M=1.0,
        c_L=1.0,
        root_subadditive=True,
        convex=True,
        mm_reweightable=True,
    )


def _tukey_lp(tau: float, p: float) -> Loss:
    if not (tau > 0 and p > 0):
        raise ValueError(f"tukey_lp needs tau > 0 and p > 0, got {(tau, p)}")
    cap = tau**p
    return Loss(
        name="tukey_lp",
        params=(tau, p),
        fn=lambda s: np.where(s <= tau, s**p, cap),
        dfn=lambda s: np.where(s <= tau, p * np.maximum(s, 1e-300) ** (p - 1), 0.0),
        p_M=p,
        root_subadditive=True,
        bounded=True,
        mm_reweightable=p <= 2,
    )


def _tukey_smooth(tau: float) -> Loss:
    if not tau > 0:
        raise ValueError(f"tukey_smooth needs tau > 0, got {tau}")
    top = tau * tau / 6

    def fn(s):
        u = np.minimum(s / tau, 1.0)
        return top * (1 - (1 - u * u) ** 3)

    def dfn(s):
        u = np.minimum(s / tau, 1.0)
        return s * (1 - u * u) ** 2

    return Loss(
        name="tukey_smooth",
        params=(tau,),
        fn=fn,
        dfn=dfn,
        p_M=2.0,
        bounded=True,
        mm_reweightable=True,
    )


def _l2lq(q: float) -> Loss:
    if not 0 < q < 2:
        raise ValueError(f"l2lq needs q in (0, 2), got {q}")
    return Loss(
        name="l2lq",
        params=(q,),
        fn=lambda s: np.where(s <= 1, s * s, s**q),
        dfn=lambda s: np.where(s <= 1, 2 * s, q * np.maximum(s, 1.0) ** (q - 1)),
        p_M=2.0,
        q_M=q,
        c_L=1.0,
        root_subadditive=True,
        mm_reweightable=True,
    )


def _gamma_p(t: float, p: float) -> Loss:
    if not (t >= 1 and p > 0):
        raise ValueError(f"gamma_p needs t >= 1 and p > 0, got {(t, p)}")
    shift = (p / 2 - 1) * t**p
    quad = (p / 2) * t ** (p - 2)
    return Loss(
        name="gamma_p",
        params=(t, p),
        fn=lambda s: np.where(s <= t, quad * s * s, s**p + shift),
        dfn=lambda s: np.where(s <= t, 2 * quad * s, p * np.maximum(s, t) ** (p - 1)),
        p_M=max(2.0, p),
        q_M=min(2.0, p),
        c_L=1.0,
        root_subadditive=p <= 2,
        convex=p >= 1,
        mm_reweightable=p <= 2,
    )


_CATALOG: dict[str, tuple[int, Callable[..., Loss]]] = {
    "lp": (1, _lp),
    "huber": (1, _huber),
    "tukey_lp": (2, _tukey_lp),
    "tukey_smooth": (1, _tukey_smooth),
    "l2lq": (1, _l2lq),
    "gamma_p": (2, _gamma_p),
}


def loss_catalog(name: str, *params: float) -> Loss:
    """Build a catalog loss, e.g. ``loss_catalog("huber", 1.0)``.

    Parameter order: ``lp(p)``, ``huber(tau)``, ``tukey_lp(tau, p)``,
    ``tukey_smooth(tau)``, ``l2lq(q)``, ``gamma_p(t, p)``.
    """
    if len(params) == 1 and isinstance(params[0], (list, tuple)):
        params = tuple(params[0])
    if name not in _CATALOG:
        raise ValueError(f"unknown loss {name!r}; known: {sorted(_CATALOG)}")
    arity, build = _CATALOG[name]
    if len(params) != arity:
        raise ValueError(f"loss {name!r} takes {arity} parameter(s), got {len(params)}")
    return build(*(float(v) for v in params))


def parse_loss(spec: str) -> Loss:
    """Parse ``"huber(1)"`` or ``"tukey_lp(1,2)"`` into a catalog loss."""
    spec = spec.strip()
    if "(" not in spec:
        raise ValueError(f"loss spec must look like name(params), got {spec!r}")
    name, rest = spec.split("(", 1)
    args = [float(v) for v in rest.rstrip(")").split(",") if v.strip()]
    return loss_catalog(name.strip(), *args)


def compose_losses(first: Loss, second: Loss) -> Loss:
    """The pointwise sum of two monotone losses."""
    return Loss(
        name=f"{first.name}+{second.name}",
        params=first.params + second.params,
        fn=lambda s: first.fn(s) + second.fn(s),
        dfn=lambda s: first.dfn(s) + second.dfn(s),
        p_M=max(first.p_M, second.p_M),
        c_U=max(first.c_U, second.c_U),
        convex=first.convex and second.convex,
        mm_reweightable=first.mm_reweightable and second.mm_reweightable,
    )


# ---------------------------------------------------------------- weights


@dataclass(frozen=True)
class WeightVector:
    """Sparse positive per-row weights; absent rows have weight zero."""

    n: int
    idx: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.idx, dtype=np.int64)
        val = np.asarray(self.val, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("idx and val must be 1-d arrays of equal length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError("weight index out of range")
        if not np.all(np.isfinite(val)) or np.any(val <= 0):
            raise ValueError("stored weights must be finite and strictly positive")
        order = np.argsort(idx, kind="stable")
        idx, val = idx[order], val[order]
        if idx.size > 1 and np.any(np.diff(idx) == 0):
            raise ValueError("duplicate weight indices")
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "val", val)

    @classmethod
    def ones(cls, n: int) -> "WeightVector":
        return cls(n, np.arange(n), np.ones(n))

    @classmethod
    def from_dense(cls, w) -> "WeightVector":
        w = np.asarray(w, dtype=np.float64)
        keep = np.flatnonzero(w > 0)
        return cls(w.size, keep, w[keep])

    @property
    def nnz(self) -> int:
        return int(self.idx.size)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.idx] = self.val
        return out

    def max(self) -> float:
        return float(self.val.max()) if self.val.size else 0.0

    def __len__(self) -> int:
        return self.n


def _dense_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    if isinstance(w, WeightVector):
        if w.n != n:
            raise ValueError(f"weight length {w.n} does not match vector length {n}")
        return w.dense()
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"weight length {w.shape} does not match vector length {n}")
    return w


def mnorm(y, M: Loss, w=None) -> float:
    """``(sum_i w_i M(|y_i|))^(1/p_M)``; ``w`` defaults to all ones."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("mnorm received non-finite entries")
    wd = _dense_weights(w, y.size)
    total = float(np.dot(wd, M(y)))
    return total ** (1.0 / M.p_M)


def mcost(y, M: Loss, w=None) -> float:
    """``sum_i w_i M(|y_i|)``, i.e. ``mnorm(...) ** p_M`` without the root."""
    y = np.asarray(y, dtype=np.float64).ravel()
    return float(np.dot(_dense_weights(w, y.size), M(y)))


# ---------------------------------------------------------------- oracle


class TargetOracle:
    """Entry access to ``b`` that counts distinct indices read.

    ``source`` is either a 1-d array or a callable mapping an index array to
    values (``n`` must then be given). Re-reading an index is free; the counter
    update is guarded by a lock so concurrent readers see a consistent count.
    """

    _SET_THRESHOLD = 1 << 27

    def __init__(self, source, n: int | None = None):
        if callable(source):
            if n is None:
                raise ValueError("a callable source needs an explicit length n")
            self._fn = source
            self._data = None
            self.n = int(n)
        else:
            data = np.asarray(source, dtype=np.float64).ravel()
            if not np.all(np.isfinite(data)):
                raise ValueError("target vector has non-finite entries")
            self._data = data
            self._fn = None
            self.n = data.size
        self._lock = threading.Lock()
        if self.n <= self._SET_THRESHOLD:
            self._mask = np.zeros(self.n, dtype=bool)
            self._set = None
        else:
            self._mask = None
            self._set: set[int] | None = set()
        self._count = 0

    def __len__(self) -> int:
        return self.n

    def _fetch(self, idx: np.ndarray) -> np.ndarray:
        if self._data is not None:
            return self._data[idx]
        vals = np.asarray(self._fn(idx), dtype=np.float64).reshape(idx.shape)
        return vals

    def query(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        flat = idx.ravel()
        if flat.size and (flat.min() < 0 or flat.max() >= self.n):
            raise IndexError("oracle index out of range")
        with self._lock:
            if self._mask is not None:
                fresh = np.unique(flat[~self._mask[flat]])
                self._mask[fresh] = True
                self._count += int(fresh.size)
            else:
                before = len(self._set)
                self._set.update(flat.tolist())
                self._count += len(self._set) - before
        return self._fetch(flat).reshape(idx.shape)

    def __getitem__(self, i):
        return self.query(i)

    def peek_count(self, idx) -> int:
        """How many of ``idx`` would be new reads, without reading."""
        flat = np.unique(np.asarray(idx, dtype=np.int64).ravel())
        with self._lock:
            if self._mask is not None:
                return int((~self._mask[flat]).sum())
            return sum(1 for i in flat.tolist() if i not in self._set)

    @property
    def count(self) -> int:
        return self._count

    @property
    def queried(self) -> np.ndarray:
        with self._lock:
            if self._mask is not None:
                return np.flatnonzero(self._mask)
            return np.array(sorted(self._set), dtype=np.int64)


class OracleView:
    """A re-indexed, optionally shifted view of a :class:`TargetOracle`.

    Row ``j`` of the view reads ``base[rows[j]] - shift(rows[j])``; every read
    is charged to the base oracle, so already-read entries stay free.
    """

    def __init__(self, base, rows=None, shift: Callable[[np.ndarray], np.ndarray] | None = None):
        self.base = base
        self.rows = None if rows is None else np.asarray(rows, dtype=np.int64)
        self.shift = shift
        self.n = len(base) if self.rows is None else self.rows.size

    def __len__(self) -> int:
        return self.n

    def original(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        return idx if self.rows is None else self.rows[idx]

    def query(self, idx) -> np.ndarray:
        orig = self.original(idx)
        vals = self.base.query(orig)
        if self.shift is not None:
            vals = vals - self.shift(orig)
        return vals

    def __getitem__(self, i):
        return self.query(i)

    @property
    def count(self) -> int:
        return self.base.count

    @property
    def queried(self) -> np.ndarray:
        return self.base.queried


def as_oracle(b) -> TargetOracle | OracleView:
    if isinstance(b, (TargetOracle, OracleView)):
        return b
    return TargetOracle(b)


# ---------------------------------------------------------------- IO

MAGIC = b"ALSM"
VERSION = 1
_HEADER = struct.Struct("<4sBQQ")


class MatrixFormatError(ValueError):
    pass


def write_matrix(path, A, fmt: str | None = None) -> None:
    A = check_matrix(A)
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "binary")
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, A.shape[0], A.shape[1]))
            fh.write(np.ascontiguousarray(A, dtype="<f8").tobytes())
    elif fmt == "csv":
        np.savetxt(path, A, delimiter=",", fmt="%.17g")
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    path = Path(path)
    if fmt is None:
        with open(path, "rb") as fh:
            head = fh.read(4)
        fmt = "binary" if head == MAGIC else "csv"
    if fmt == "binary":
        return _read_binary(path)
    if fmt == "csv":
        return _read_csv(path)
    raise ValueError(f"unknown matrix format {fmt!r}")


def _read_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise MatrixFormatError(f"{path}: file too short for a matrix header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise MatrixFormatError(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size :]
    if n < 1 or d < 1 or len(body) != 8 * n * d:
        raise MatrixFormatError(f"{path}: header says {n}x{d} but payload has {len(body)} bytes")
    A = np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)
    bad = np.argwhere(~np.isfinite(A))
    if bad.size:
        i, j = bad[0]
        raise MatrixFormatError(f"{path}: non-finite value at row {i}, column {j}")
    return A


def _read_csv(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or all(not c.strip() for c in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise MatrixFormatError(f"{path}: row {i} has {len(rec)} columns, expected {width}")
            vals = []
            for j, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise MatrixFormatError(f"{path}: cannot parse {cell!r} at row {i}, column {j}") from None
                if not math.isfinite(v):
                    raise MatrixFormatError(f"{path}: non-finite value {cell!r} at row {i}, column {j}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise MatrixFormatError(f"{path}: empty matrix")
    return np.array(rows, dtype=np.float64)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def to_json(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True)
