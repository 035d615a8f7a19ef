"""Model parameters, per-wave-number constants and configuration loading."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

PARAM_KEYS = ("gamma", "sigma_c", "sigma_x", "sigma_theta", "lambda", "chi", "tau")


class ValidationError(ValueError):
    """Invalid user input (bad parameters, unsupported wave number, ...)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed or left its trusted regime."""


@dataclass(frozen=True)
class ModelParams:
    """Nondimensional parameters of the kinetic chemotaxis model.

    ``lam`` is the self-propulsion speed (``lambda`` in configuration files).
    """

    gamma: float = 1.0
    sigma_c: float = 1.0
    sigma_x: float = 0.01
    sigma_theta: float = 1e-3
    lam: float = 1.0
    chi: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "sigma_c", "sigma_x", "lam"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{_external(name)} must be positive, got {v}")
        for name in ("sigma_theta", "tau"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"{_external(name)} must be non-negative, got {v}")
        if not np.isfinite(self.chi):
            raise ValidationError("chi must be finite")

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {_external(k): v for k, v in asdict(self).items()}

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "ModelParams":
        kw = {}
        for key, value in data.items():
            name = _internal(key)
            if name not in {f.name for f in fields(cls)}:
                raise ValidationError(f"unknown parameter '{key}'")
            try:
                kw[name] = float(value)
            except (TypeError, ValueError):
                raise ValidationError(f"parameter '{key}' is not a number: {value!r}") from None
        return cls(**kw)


def _external(name: str) -> str:
    return "lambda" if name == "lam" else name


def _internal(key: str) -> str:
    key = key.strip().replace("-", "_")
    return "lam" if key == "lambda" else key


@dataclass(frozen=True)
class RescaledConstants:
    """Per-wave-number constants used by every closed form."""

    k: int
    lambda_k: float
    sigma_k: float
    tau_k: float
    e_elliptic: float
    z_in: float
    z_out: float
    e_k: float
    f_k: float

    @property
    def z(self) -> float:
        """``|z_in|``, the modulus that appears in all residue formulas."""
        return -self.z_in


def rescale(params: ModelParams, k: int) -> RescaledConstants:
    if int(k) != k or k < 1:
        raise ValidationError(f"wave number must be a positive integer, got {k}")
    k = int(k)
    lambda_k = 2 * math.pi * params.lam * k
    sigma_k = 2 * math.pi * params.sigma_x * k / params.lam
    tau_k = 2 * math.pi * params.tau * k
    z_in, e_k = inner_root(sigma_k)
    z = -z_in
    return RescaledConstants(
        k=k,
        lambda_k=lambda_k,
        sigma_k=sigma_k,
        tau_k=tau_k,
        e_elliptic=elliptic_multiplier(params, (k, 0)),
        z_in=z_in,
        z_out=1.0 / z_in,
        e_k=e_k,
        f_k=2 * (1 + z * z) / (1 - z * z),
    )


def inner_root(sigma):
    """Root of ``z^2 + 2(2 sigma^2 + 1) z + 1`` inside the unit disk and ``e = 2/(z_in - z_out)``.

    Works for real or complex ``sigma``; the cancellation-free form is used so
    that small ``sigma`` keeps full precision.
    """
    q = 2 * sigma * sigma + 1
    # q^2 - 1 = 4 sigma^2 (sigma^2 + 1), written so that it does not cancel
    if np.iscomplexobj(sigma) or isinstance(sigma, complex):
        r = np.sqrt(complex(4 * sigma * sigma * (sigma * sigma + 1)))
        z1, z2 = -q + r, -q - r
        # pick the branch with the smaller modulus, evaluated without cancellation
        big = z2 if abs(z2) >= abs(z1) else z1
        small = 1.0 / big
        return small, 2.0 / (small - big)
    r = 2 * sigma * math.sqrt(sigma * sigma + 1)
    if r == 0:
        raise ValidationError("sigma_k must be positive")
    return -1.0 / (q + r), 1.0 / r


def elliptic_multiplier(params: ModelParams, kvec) -> float:
    k1, k2 = kvec
    return params.gamma + 4 * math.pi**2 * (k1 * k1 + k2 * k2) * params.sigma_c


def check_smallness(params: ModelParams, k: int, sigma_k_max: float = 0.2) -> list[str]:
    """Return the list of failed smallness checks (empty when the asymptotic regime is trusted).

    Besides the configurable bound on ``sigma_k``, the ordering of the three
    threshold roots is verified numerically.
    """
    from .coefficients import tau_roots  # local import: coefficients depends on this module

    rc = rescale(params, k)
    problems = []
    if rc.sigma_k > sigma_k_max:
        problems.append(f"sigma_k = {rc.sigma_k:.4g} exceeds sigma_k_max = {sigma_k_max:.4g}")
    try:
        t_bpc, t_b, t_bmc = tau_roots(rc)
        if not (0 < t_bpc < t_b < t_bmc):
            problems.append("threshold roots are not ordered")
    except NumericalError as exc:
        problems.append(str(exc))
    return problems


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` / ``key: value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = line.split(sep, 1)
                break
        else:
            raise ValidationError(f"config line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        if not key:
            raise ValidationError(f"config line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config(path: str | Path | None, overrides: Iterable[str] = ()) -> dict[str, str]:
    """Read a flat config file (optional) and apply ``key=value`` overrides."""
    data: dict[str, str] = {}
    if path is not None:
        try:
            data.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        data[key.strip()] = value.strip()
    return data
