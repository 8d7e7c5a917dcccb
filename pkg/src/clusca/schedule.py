"""Noise schedule and the forward/backward diffusion steps.

Timesteps are 1-based: t runs from T_steps down to 1 during sampling, and
``alphas[t - 1]`` is the per-step retention coefficient, monotone
non-increasing in t and confined to (0, 1].

The backward step divides by sqrt(alpha_t) and uses sqrt(1 - alpha_t) as the
noise coefficient, exactly as stated for the per-step form. The optional
"cumulative" form replaces sqrt(1 - alpha_t) in the denominator with
sqrt(1 - alphabar_t), where alphabar is the running product; it exists as a
flag and is off by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

BACKWARD_FORMS = ("per-step", "cumulative")


@dataclass(frozen=True)
class NoiseSchedule:
    alphas: np.ndarray               # shape (T_steps,), alphas[i] is alpha at t = i + 1
    shape: str = "linear"
    backward: str = "per-step"
    alpha_bars: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        if alphas.ndim != 1 or alphas.size < 1:
            raise ConfigError("schedule needs at least one step", field="steps")
        if np.any(alphas <= 0.0) or np.any(alphas > 1.0):
            raise ConfigError("alpha values must lie in (0, 1]", field="alpha")
        if np.any(np.diff(alphas) > 1e-15):
            raise ConfigError("alpha must be non-increasing in t", field="alpha")
        if self.backward not in BACKWARD_FORMS:
            raise ConfigError(
                f"backward form must be one of {BACKWARD_FORMS}, got {self.backward!r}",
                field="backward",
            )
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", np.cumprod(alphas))

    @property
    def steps(self) -> int:
        return int(self.alphas.size)

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def _check_t(self, t: int):
        if not 1 <= t <= self.steps:
            raise ShapeError(f"timestep {t} outside [1, {self.steps}]")


def make_schedule(
    steps: int,
    alpha_start: float,
    alpha_end: float,
    shape: str = "linear",
    backward: str = "per-step",
) -> NoiseSchedule:
    """Build a monotone schedule from alpha_start (t=1) down to alpha_end (t=steps)."""
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}", field="steps")
    for label, v in (("alpha_start", alpha_start), ("alpha_end", alpha_end)):
        if not 0.0 < v <= 1.0:
            raise ConfigError(f"{label} must lie in (0, 1], got {v}", field=label)
    if alpha_end > alpha_start:
        raise ConfigError("alpha_end must not exceed alpha_start", field="alpha_end")
    if steps == 1:
        alphas = np.array([alpha_start], dtype=np.float64)
    elif shape == "linear":
        alphas = np.linspace(alpha_start, alpha_end, steps)
    elif shape == "cosine":
        # Half-cosine ramp between the endpoints; strictly monotone inside.
        u = np.linspace(0.0, 1.0, steps)
        alphas = alpha_end + (alpha_start - alpha_end) * 0.5 * (1.0 + np.cos(np.pi * u))
    else:
        raise ConfigError(f"unknown schedule shape {shape!r}", field="shape")
    return NoiseSchedule(alphas=alphas, shape=shape, backward=backward)


def forward_diffuse(schedule: NoiseSchedule, x0, t: int, noise) -> np.ndarray:
    """x_t = sqrt(alpha_t) * x0 + sqrt(1 - alpha_t) * noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ShapeError(f"x0 shape {x0.shape} does not match noise shape {noise.shape}")
    a = schedule.alpha(t)
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * noise


def ddim_step(schedule: NoiseSchedule, x, eps_hat, t: int) -> np.ndarray:
    """Deterministic backward step from t to t - 1 (sigma_t = 0).

    x_{t-1} = (x_t - coef * eps_hat) / sqrt(alpha_t), where coef is
    sqrt(1 - alpha_t) in the per-step form and
    (1 - alpha_t) / sqrt(1 - alphabar_t) in the cumulative form.
    """
    x = np.asarray(x, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x.shape != eps_hat.shape:
        raise ShapeError(f"x shape {x.shape} does not match eps_hat shape {eps_hat.shape}")
    a = schedule.alpha(t)
    if schedule.backward == "per-step":
        # (1 - a) / sqrt(1 - a) simplified; exact zero when a == 1.
        coef = np.sqrt(1.0 - a)
    else:
        abar = schedule.alpha_bar(t)
        coef = 0.0 if abar >= 1.0 else (1.0 - a) / np.sqrt(1.0 - abar)
    return (x - coef * eps_hat) / np.sqrt(a)
