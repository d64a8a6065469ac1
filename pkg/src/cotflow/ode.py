"""Integrate a batched vector field ``v(t, x, c)`` from t=0 to t=1.

NFE counts one per batched field call. Fixed-step schemes cost ``steps``
(euler) or ``2*steps`` (midpoint). dopri5 costs ``1 + 6 * attempted_steps``:
one initial evaluation, then six fresh stages per attempt, with the last
stage reused as the next step's first (FSAL).
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

SOLVERS = ("euler", "midpoint", "dopri5")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "euler"
    steps: int = 1
    rtol: float = 1e-5
    atol: float = 1e-5
    max_nfe: int = 10000

    def __post_init__(self):
        if self.kind not in SOLVERS:
            raise ValueError(f"unknown solver {self.kind!r}; choose from {SOLVERS}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_nfe < 1:
            raise ValueError("max_nfe must be >= 1")

    def label(self):
        return self.kind if self.kind == "dopri5" else f"{self.kind}{self.steps}"


@dataclass
class SolverReport:
    samples: np.ndarray
    nfe: int
    path: Optional[List] = None  # list of (t, x) with x of shape (N, d)
    accepted: int = 0
    rejected: int = 0
    times: List[float] = field(default_factory=list)

    def path_array(self):
        """``(T, N, d)`` stack of recorded states."""
        if not self.path:
            raise ValueError("no path recorded")
        return np.stack([x for _, x in self.path])


class _Counted:
    def __init__(self, field_fn, c, max_nfe):
        self.f = field_fn
        self.c = c
        self.nfe = 0
        self.max_nfe = max_nfe

    def __call__(self, t, x):
        if self.nfe >= self.max_nfe:
            raise SolverError(f"max_nfe={self.max_nfe} exceeded")
        self.nfe += 1
        v = np.asarray(self.f(t, x, self.c), dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise SolverError(f"non-finite field value at t={t:.6g}")
        return v


# Dormand & Prince (1980) 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def integrate(field_fn, x0, c=None, cfg: SolverConfig = SolverConfig(), record_path=False):
    x = np.array(x0, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite initial state")
    f = _Counted(field_fn, c, cfg.max_nfe)
    if cfg.kind == "dopri5":
        return _dopri5(f, x, cfg, record_path)

    h = 1.0 / cfg.steps
    path = [(0.0, x.copy())] if record_path else None
    for k in range(cfg.steps):
        t = k * h
        if cfg.kind == "euler":
            x = x + h * f(t, x)
        else:
            mid = x + 0.5 * h * f(t, x)
            x = x + h * f(t + 0.5 * h, mid)
        if not np.all(np.isfinite(x)):
            raise SolverError(f"non-finite state at t={(k + 1) * h:.6g}")
        if record_path:
            path.append(((k + 1) * h, x.copy()))
    return SolverReport(x, f.nfe, path, accepted=cfg.steps,
                        times=[k * h for k in range(cfg.steps + 1)])


def _err_norm(err, y, y_new, cfg):
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _dopri5(f, y, cfg, record_path, safety=0.9, min_factor=0.2, max_factor=10.0):
    # PI step-size control (Hairer, Norsett & Wanner II.4), beta = 0.04
    beta = 0.04
    expo = 0.2 - 0.75 * beta
    t = 0.0
    k1 = f(t, y)
    scale = cfg.atol + cfg.rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-3
    h = min(max(h, 1e-6), 1.0)
    err_prev = 1e-4
    accepted = rejected = 0
    path = [(0.0, y.copy())] if record_path else None
    times = [0.0]
    while t < 1.0:
        h = min(h, 1.0 - t)
        ks = [k1]
        for s in range(1, 7):
            ys = y + h * sum(a * ks[j] for j, a in enumerate(_A[s]) if a != 0.0)
            ks.append(f(t + _C[s] * h, ys))
        # stage 7 is evaluated at the 5th-order solution (FSAL)
        y_new = y + h * sum(b * ks[j] for j, b in enumerate(_B5) if b != 0.0)
        err = h * sum(e * ks[j] for j, e in enumerate(_E) if e != 0.0)
        en = _err_norm(err, y, y_new, cfg)
        if en <= 1.0:
            accepted += 1
            t = 1.0 if 1.0 - (t + h) < 1e-12 else t + h
            y = y_new
            k1 = ks[6]
            if not np.all(np.isfinite(y)):
                raise SolverError(f"non-finite state at t={t:.6g}")
            if record_path:
                path.append((t, y.copy()))
            times.append(t)
            en = max(en, 1e-10)
            fac = safety * en ** (-expo) * err_prev ** beta
            h *= min(max_factor, max(min_factor, fac))
            err_prev = en
        else:
            rejected += 1
            h *= max(min_factor, safety * en ** (-expo))
    return SolverReport(y, f.nfe, path, accepted, rejected, times)


def straightness(report_or_path):
    """Mean over samples of the largest distance from a path point to the
    chord x(0)->x(1), divided by the chord length (unnormalised if the chord
    is degenerate). Zero for straight paths."""
    if isinstance(report_or_path, SolverReport):
        paths = report_or_path.path_array()
    else:
        paths = np.asarray(report_or_path, dtype=np.float64)
    if paths.ndim == 2:
        paths = paths[:, :, None]
    if paths.shape[0] < 3:
        raise ValueError("straightness needs at least 3 path points")
    start, end = paths[0], paths[-1]
    chord = end - start
    length = np.linalg.norm(chord, axis=1)
    safe = np.where(length > 0, length, 1.0)
    unit = chord / safe[:, None]
    rel = paths - start[None]
    along = np.einsum("tnd,nd->tn", rel, unit)
    perp = rel - along[:, :, None] * unit[None]
    dev = np.linalg.norm(perp, axis=2).max(axis=0)
    dev = np.where(length > 0, dev / safe, dev)
    return float(dev.mean())
