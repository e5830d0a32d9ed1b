"""Linear noise schedule, closed-form forward noising and deterministic DDIM steps."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError
from ..tensor import as_tensor, check_same_shape


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray       # beta_1 .. beta_T, stored at index t-1
    alpha_bars: np.ndarray  # alpha_bar_0 .. alpha_bar_T with alpha_bar_0 = 1

    @property
    def T(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        self.check_t(t)
        return float(self.alpha_bars[t])

    def check_t(self, t: int) -> None:
        if not 0 <= t <= self.T:
            raise ValidationError(f"timestep {t} outside [0, {self.T}]")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,beta,alpha_bar\n")
        for t in range(1, self.T + 1):
            buf.write(f"{t},{self.beta(t)!r},{float(self.alpha_bars[t])!r}\n")
        return buf.getvalue()


def schedule_from_betas(betas) -> NoiseSchedule:
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size == 0:
        raise ValidationError("betas must be a non-empty 1-D sequence")
    if np.any(betas <= 0) or np.any(betas >= 1):
        raise ValidationError("every beta must lie in (0, 1)")
    alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(betas, alpha_bars)


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValidationError("T must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValidationError("need 0 < beta_start <= beta_end < 1")
    return schedule_from_betas(np.linspace(beta_start, beta_end, T))


def forward_noising(z0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """Sample of q(z_t | z_0) for a given noise draw ``eps``."""
    z0, eps = as_tensor(z0), as_tensor(eps)
    check_same_shape(z0, eps, "z0 and eps")
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def predict_z0(z_t, eps_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    ab = sched.alpha_bar(t)
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def ddim_step(z_t, eps_hat, t: int, t_prev: int, sched: NoiseSchedule, eta: float = 0.0) -> np.ndarray:
    """Deterministic DDIM update from ``t`` to an earlier ``t_prev``.

    ``t_prev == t`` is allowed and returns ``z_t`` unchanged.
    """
    if eta != 0.0:
        raise ValidationError("only deterministic DDIM (eta = 0) is supported")
    z_t, eps_hat = as_tensor(z_t), as_tensor(eps_hat)
    check_same_shape(z_t, eps_hat, "z_t and eps_hat")
    sched.check_t(t)
    sched.check_t(t_prev)
    if t_prev > t:
        raise ValidationError(f"t_prev={t_prev} must not exceed t={t}")
    if t_prev == t:
        return z_t.copy()
    z0_hat = predict_z0(z_t, eps_hat, t, sched)
    ab_prev = sched.alpha_bar(t_prev)
    return np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * eps_hat


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """Descending, evenly spaced timesteps from T to 0 inclusive (``steps`` jumps)."""
    if not 1 <= steps <= T:
        raise ValidationError(f"steps must lie in [1, {T}]")
    ts = np.round(np.linspace(T, 0, steps + 1)).astype(int)
    return [int(t) for t in ts]


def ddim_sample(z_T, denoiser, sched: NoiseSchedule, steps: int, **denoiser_kwargs) -> np.ndarray:
    """Run a DDIM chain from ``z_T`` down to t = 0."""
    z = as_tensor(z_T)
    ts = ddim_timesteps(sched.T, steps)
    for t, t_prev in zip(ts[:-1], ts[1:]):
        z = ddim_step(z, denoiser(z, t, **denoiser_kwargs), t, t_prev, sched)
    return z
