"""Seeded simulation designs with known loadings, factors and noise.

Examples 1-3: ``y_t = b k_t + a w_t + e_t`` with U(0,1) loadings, AR(0.8) ``k``
and a weakly dependent second factor ``w``. Example 4: one normalised
loading plus a random intercept. Examples 5-6: a serially dependent block of
``round(d P)`` rows stacked on an independent, noisier block.

Normal scales are standard deviations throughout. AR(1) paths start from
their stationary distribution. Each random component draws from its own
PCG64 stream spawned from one SeedSequence, so adding a component never
shifts the others.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ValidationError
from .panel import Panel

# (k coefficient, w coefficient or None for iid, w sd, noise sd)
_DESIGNS = {
    1: dict(phi_k=0.8, phi_w=None, sd_w=1.0, sd_e=0.2),
    2: dict(phi_k=0.8, phi_w=0.05, sd_w=1.0, sd_e=0.2),
    3: dict(phi_k=0.8, phi_w=0.2, sd_w=1.0, sd_e=0.2),
    4: dict(phi_k=0.7, phi_w=None, sd_w=0.0, sd_e=1.0),
    5: dict(phi_k=0.8, phi_w=None, sd_w=1.5, sd_e=0.2),
    6: dict(phi_k=0.7, phi_w=None, sd_w=3.0, sd_e=0.5),
}
_DEFAULT_D = {5: 0.5, 6: 0.4}
_STREAMS = ("b", "a", "k", "w", "noise", "mean")


@dataclass(frozen=True)
class DgpSpec:
    example_id: int
    P: int
    T: int
    seed: int = 0
    d: float | None = None
    noise_scale: float | None = None  # overrides the design's noise sd

    def __post_init__(self):
        if self.example_id not in _DESIGNS:
            raise ValidationError(f"unknown example id {self.example_id!r}; expected 1..6")
        if self.P < 2 or self.T < 10:
            raise ValidationError(f"need P >= 2 and T >= 10, got P={self.P}, T={self.T}")
        if self.example_id in _DEFAULT_D:
            d = _DEFAULT_D[self.example_id] if self.d is None else float(self.d)
            if not 0 < d < 1:
                raise ValidationError(f"dependent fraction d must lie in (0, 1), got {d}")
            n_dep = int(round(d * self.P))
            if n_dep < 1 or n_dep > self.P - 1:
                raise ValidationError(f"d={d} leaves an empty block for P={self.P}")
            object.__setattr__(self, "d", d)
        elif self.d is not None:
            raise ValidationError("d applies to examples 5 and 6 only")
        if self.noise_scale is not None and self.noise_scale < 0:
            raise ValidationError("noise_scale must be nonnegative")

    @property
    def n_dependent(self) -> int:
        return int(round(self.d * self.P)) if self.d is not None else self.P

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id, "P": self.P, "T": self.T, "seed": self.seed,
            "d": self.d, "noise_scale": self.noise_scale,
        }


@dataclass(frozen=True)
class SimOutput:
    """``panel = true_mean + true_loadings @ true_factors + true_errors``."""

    spec: DgpSpec
    panel: Panel
    true_loadings: np.ndarray
    true_factors: np.ndarray
    true_errors: np.ndarray
    true_mean: np.ndarray
    dependent_rows: tuple = ()
    independent_rows: tuple = ()

    def ground_truth(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "true_mean": self.true_mean.tolist(),
            "true_loadings": self.true_loadings.tolist(),
            "true_factors": self.true_factors.tolist(),
            "true_errors": self.true_errors.tolist(),
            "dependent_rows": list(self.dependent_rows),
            "independent_rows": list(self.independent_rows),
        }

    def export(self, csv_path, json_path=None) -> None:
        csv_path = Path(csv_path)
        self.panel.to_csv(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".truth.json")
        json_path.write_text(json.dumps(self.ground_truth()), encoding="utf-8")


def ar1_path(rng: np.random.Generator, phi: float, T: int, sd: float = 1.0) -> np.ndarray:
    """Stationary AR(1) with innovation sd ``sd``; the first value is drawn from the stationary law."""
    if not -1 < phi < 1:
        raise ValidationError("AR(1) coefficient must lie in (-1, 1)")
    e = rng.standard_normal(T) * sd
    x0 = e[0] / np.sqrt(1.0 - phi * phi)
    if T == 1:
        return np.array([x0])
    rest = lfilter([1.0], [1.0, -phi], e[1:], zi=[phi * x0])[0]
    return np.concatenate([[x0], rest])


def generate(spec: DgpSpec) -> SimOutput:
    design = _DESIGNS[spec.example_id]
    streams = dict(zip(_STREAMS, np.random.SeedSequence(spec.seed).spawn(len(_STREAMS))))
    rng = {k: np.random.Generator(np.random.PCG64(s)) for k, s in streams.items()}
    P, T = spec.P, spec.T
    sd_e = design["sd_e"] if spec.noise_scale is None else spec.noise_scale
    ex = spec.example_id
    mean = np.zeros(P)
    dep, ind = tuple(range(P)), ()

    k = ar1_path(rng["k"], design["phi_k"], T)
    if ex in (1, 2, 3):
        b = rng["b"].uniform(0.0, 1.0, P)
        a = rng["a"].uniform(0.0, 1.0, P)
        if design["phi_w"] is None:
            w = rng["w"].standard_normal(T) * design["sd_w"]
        else:
            w = ar1_path(rng["w"], design["phi_w"], T, design["sd_w"])
        loadings = np.column_stack([b, a])
        factors = np.vstack([k, w])
    elif ex == 4:
        q, _ = np.linalg.qr(rng["b"].standard_normal((P, P)))
        loadings = q[:, :1].copy()
        mean = rng["mean"].standard_normal(P)
        factors = k[None, :]
    else:
        n_dep = spec.n_dependent
        b = np.zeros(P)
        a = np.zeros(P)
        b[:n_dep] = rng["b"].uniform(0.0, 1.0, n_dep)
        a[n_dep:] = rng["a"].uniform(0.0, 1.0, P - n_dep)
        w = rng["w"].standard_normal(T) * design["sd_w"]
        loadings = np.column_stack([b, a])
        factors = np.vstack([k, w])
        dep, ind = tuple(range(n_dep)), tuple(range(n_dep, P))

    errors = rng["noise"].standard_normal((P, T)) * sd_e
    y = mean[:, None] + loadings @ factors + errors
    return SimOutput(spec, Panel(y), loadings, factors, errors, mean, dep, ind)
