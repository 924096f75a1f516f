"""Reaction-diffusion model families and their corrected limits.

A model supplies pointwise callbacks for the drift pieces of

    F_eps(u) = 1 + f(u) + eps * g(u) d_xx u + eps * h(u) (d_x u  ⊗ d_x u),

evaluated pseudospectrally: transform to a padded grid, apply the callbacks
pointwise, transform back, and dealias.  The additive constant enters as the
field identically equal to one in every component.

The corrected reaction term replacing f in the limit equation is

    fbar_i(u) = f_i(u) + c * sum_j (h_ijj(u) - d_j g_ij(u)),

with c = 1/(2 sqrt(nu)) for white forcing (a finite-truncation value of c can
be substituted).  A gradient-flow path-sampling problem with potential V,
temperature T and mass m maps onto this family via

    eps = m / sqrt(2 T),    nu = 1 / (2 T),
    f_i = -(1/2T) sum_j d2V_ij dV_j,
    g_ij = -2 d2V_ij / sqrt(2 T),
    h_ijl = -d3V_ijl / sqrt(2 T),

for which fbar_i = -(1/2T) sum_j d2V_ij dV_j + (1/2) sum_j d3V_ijj exactly.

Callbacks are vectorized: they receive arrays of shape (n, ...) and return
(n, ...), (n, n, ...) or (n, n, n, ...) acting pointwise over the trailing
axes.  They must be total on the box the simulation guard confines states to.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .constants import white_noise_constant
from .spectral import GridField, SpectralField, dealias, derivative, from_grid, to_grid

Callback = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """Model callbacks; any of f, g, h may be None (identically zero).

    dg must be supplied whenever g is: dg(u)[i, j, k] is the partial
    derivative of g_ij with respect to component k.  validate_model checks it
    against central finite differences.
    """

    n: int
    nu: float
    f: Optional[Callback] = None
    g: Optional[Callback] = None
    dg: Optional[Callback] = None
    h: Optional[Callback] = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("component count must be >= 1")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if (self.g is None) != (self.dg is None):
            raise ValueError("g and dg must be supplied together")


@dataclass(frozen=True)
class PotentialSpec:
    """Potential-driven problem: scalar potential with derivative callbacks.

    v maps (n, ...) -> (...); dv, d2v, d3v return one, two and three extra
    leading component axes.  temperature > 0 and mass >= 0.
    """

    n: int
    temperature: float
    mass: float
    v: Callback
    dv: Callback
    d2v: Callback
    d3v: Callback

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("component count must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.mass < 0:
            raise ValueError("mass must be nonnegative")


class CallbackError(RuntimeError):
    """A model callback failed or returned a malformed array."""


def _call(cb: Callback, u: np.ndarray, name: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        out = np.asarray(cb(u), dtype=np.float64)
    except Exception as exc:
        raise CallbackError(
            f"callback '{name}' failed at probe with leading values "
            f"{np.ravel(u)[:4]}: {exc}") from exc
    if out.shape != shape + u.shape[1:]:
        raise CallbackError(
            f"callback '{name}' returned shape {out.shape}, expected "
            f"{shape + u.shape[1:]}")
    return out


def validate_model(spec: ModelSpec, n_probes: int = 16, delta: float = 1e-5,
                   box: float = 2.0, seed: int = 0) -> float:
    """Max deviation of dg from central finite differences of g at probes.

    Raises if the deviation exceeds 1e-4; returns the deviation.  No-op for
    models without a g channel.
    """
    if spec.g is None:
        return 0.0
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    probes = rng.uniform(-box, box, size=(spec.n, n_probes))
    dg_val = _call(spec.dg, probes, "dg", (spec.n, spec.n, spec.n))
    worst = 0.0
    for k in range(spec.n):
        shift = np.zeros((spec.n, 1))
        shift[k, 0] = delta
        diff = (_call(spec.g, probes + shift, "g", (spec.n, spec.n))
                - _call(spec.g, probes - shift, "g", (spec.n, spec.n)))
        worst = max(worst, float(np.max(np.abs(diff / (2 * delta)
                                               - dg_val[:, :, k, :]))))
    if worst > 1e-4:
        raise ValueError(
            f"dg disagrees with finite differences of g (max dev {worst:.3e})")
    return worst


def _product_grid(u: SpectralField, oversample: int, orders: tuple[int, ...]):
    """Grid values of the field and requested derivatives on one shared grid."""
    grids = {}
    for order in orders:
        grids[order] = to_grid(derivative(u, order), oversample).values
    return grids


def eval_F_eps(spec: ModelSpec, eps: float, u: SpectralField, *,
               oversample: int = 2,
               dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    """Full perturbed drift 1 + f(u) + eps g(u) u_xx + eps h(u) (u_x ⊗ u_x).

    Evaluated pointwise on an oversampled grid and projected back to the
    modes of u, then dealiased.  eps = 0 reduces exactly to 1 + f(u): the
    derivative channels are skipped entirely.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if spec.n != u.n_components:
        raise ValueError("field component count does not match the model")
    vals = to_grid(u, oversample).values
    out = np.ones_like(vals)
    if spec.f is not None:
        out += _call(spec.f, vals, "f", (spec.n,))
    if eps != 0.0 and spec.g is not None:
        uxx = to_grid(derivative(u, 2), oversample).values
        gv = _call(spec.g, vals, "g", (spec.n, spec.n))
        out += eps * np.einsum("ij...,j...->i...", gv, uxx)
    if eps != 0.0 and spec.h is not None:
        ux = to_grid(derivative(u, 1), oversample).values
        hv = _call(spec.h, vals, "h", (spec.n, spec.n, spec.n))
        out += eps * np.einsum("ijl...,j...,l...->i...", hv, ux, ux)
    grid = GridField(spec.n, out.shape[1], out)
    return dealias(from_grid(grid, u.max_mode), dealias_fraction)


def effective_drift(spec: ModelSpec,
                    constant: float | None = None) -> Callback:
    """Pointwise corrected reaction fbar = f + c (trace h - trace dg).

    c defaults to the white-noise constant 1/(2 sqrt(nu)); pass a
    finite-truncation value to match a mode-truncated simulation.
    """
    c = white_noise_constant(spec.nu) if constant is None else float(constant)

    def fbar(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        out = np.zeros_like(u)
        if spec.f is not None:
            out += _call(spec.f, u, "f", (spec.n,))
        if spec.h is not None:
            hv = _call(spec.h, u, "h", (spec.n, spec.n, spec.n))
            out += c * np.einsum("ijj...->i...", hv)
        if spec.dg is not None:
            dgv = _call(spec.dg, u, "dg", (spec.n, spec.n, spec.n))
            out -= c * np.einsum("ijj...->i...", dgv)
        return out

    return fbar


def eval_F_bar(spec: ModelSpec, u: SpectralField, *,
               constant: float | None = None, oversample: int = 2,
               dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    """Corrected limit drift 1 + fbar(u), evaluated pseudospectrally."""
    if spec.n != u.n_components:
        raise ValueError("field component count does not match the model")
    vals = to_grid(u, oversample).values
    out = np.ones_like(vals) + effective_drift(spec, constant)(vals)
    grid = GridField(spec.n, out.shape[1], out)
    return dealias(from_grid(grid, u.max_mode), dealias_fraction)


def _eval_gradient_family(spec: ModelSpec, u: SpectralField,
                          constant: float | None, oversample: int,
                          dealias_fraction: float) -> SpectralField:
    """Common core of eval_G / eval_G_bar: f(u) + h(u)(u_x ⊗ u_x) [+ c tr h]."""
    if spec.g is not None:
        raise ValueError("gradient-noise variants require g identically zero "
                         "(pass g=None)")
    if spec.n != u.n_components:
        raise ValueError("field component count does not match the model")
    vals = to_grid(u, oversample).values
    out = np.zeros_like(vals)
    if spec.f is not None:
        out += _call(spec.f, vals, "f", (spec.n,))
    if spec.h is not None:
        hv = _call(spec.h, vals, "h", (spec.n, spec.n, spec.n))
        ux = to_grid(derivative(u, 1), oversample).values
        out += np.einsum("ijl...,j...,l...->i...", hv, ux, ux)
        if constant is not None:
            out += constant * np.einsum("ijj...->i...", hv)
    grid = GridField(spec.n, out.shape[1], out)
    return dealias(from_grid(grid, u.max_mode), dealias_fraction)


def eval_G(spec: ModelSpec, u: SpectralField, *, oversample: int = 2,
           dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    """Unshifted drift f(u) + h(u)(u_x ⊗ u_x); no additive constant.

    Used by the small-noise variants; requires g identically zero.
    """
    return _eval_gradient_family(spec, u, None, oversample, dealias_fraction)


def eval_G_bar(spec: ModelSpec, u: SpectralField, *,
               constant: float | None = None, oversample: int = 2,
               dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    """Corrected unshifted drift: eval_G with f replaced by f + c tr h."""
    c = white_noise_constant(spec.nu) if constant is None else float(constant)
    return _eval_gradient_family(spec, u, c, oversample, dealias_fraction)


def from_potential(p: PotentialSpec) -> tuple[ModelSpec, float]:
    """Map a potential problem onto the model family; returns (model, eps)."""
    two_t = 2.0 * p.temperature
    scale = math.sqrt(two_t)
    eps = p.mass / scale
    nu = 1.0 / two_t

    def f(u: np.ndarray) -> np.ndarray:
        return -np.einsum("ij...,j...->i...", p.d2v(u), p.dv(u)) / two_t

    def g(u: np.ndarray) -> np.ndarray:
        return -2.0 * np.asarray(p.d2v(u), dtype=np.float64) / scale

    def dg(u: np.ndarray) -> np.ndarray:
        return -2.0 * np.asarray(p.d3v(u), dtype=np.float64) / scale

    def h(u: np.ndarray) -> np.ndarray:
        return -np.asarray(p.d3v(u), dtype=np.float64) / scale

    return ModelSpec(n=p.n, nu=nu, f=f, g=g, dg=dg, h=h), eps


def check_effective_drift_identity(p: PotentialSpec,
                                   probes: np.ndarray) -> float:
    """Max discrepancy of the corrected drift against its closed form.

    For potential-driven models the corrected reaction must satisfy
    fbar_i = -(1/2T) sum_j d2V_ij dV_j + (1/2) sum_j d3V_ijj; returns the
    max absolute deviation over the probe points (columns of `probes`).
    """
    probes = np.asarray(probes, dtype=np.float64)
    if probes.ndim == 1:
        probes = probes[:, None]
    if probes.shape[0] != p.n:
        raise ValueError("probe array must have one row per component")
    model, _ = from_potential(p)
    lhs = effective_drift(model)(probes)
    rhs = (-np.einsum("ij...,j...->i...", p.d2v(probes), p.dv(probes))
           / (2.0 * p.temperature)
           + 0.5 * np.einsum("ijj...->i...", p.d3v(probes)))
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# Built-in model library


def _polyval(coeffs, x: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(x, np.asarray(coeffs, dtype=np.float64))


def _polyder(coeffs) -> np.ndarray:
    return np.polynomial.polynomial.polyder(np.asarray(coeffs, dtype=np.float64))


def polynomial_model(nu: float, f_coeffs=None, g_coeffs=None,
                     h_coeffs=None) -> ModelSpec:
    """Scalar (n = 1) model with polynomial channels.

    Each channel takes ascending coefficients; omit (None) for a zero
    channel.  The g derivative is attached analytically.
    """
    f = g = dg = h = None
    if f_coeffs is not None:
        f = lambda u: _polyval(f_coeffs, u[0])[None]
    if g_coeffs is not None:
        dcoeffs = _polyder(g_coeffs)
        g = lambda u: _polyval(g_coeffs, u[0])[None, None]
        dg = lambda u: _polyval(dcoeffs, u[0])[None, None, None]
    if h_coeffs is not None:
        h = lambda u: _polyval(h_coeffs, u[0])[None, None, None]
    return ModelSpec(n=1, nu=nu, f=f, g=g, dg=dg, h=h)


def sin_g_model(nu: float, amplitude: float = 1.0, f_coeffs=None) -> ModelSpec:
    """Scalar model with trigonometric transport channel g(u) = A sin(u)."""
    f = None
    if f_coeffs is not None:
        f = lambda u: _polyval(f_coeffs, u[0])[None]
    return ModelSpec(
        n=1, nu=nu, f=f,
        g=lambda u: amplitude * np.sin(u[0])[None, None],
        dg=lambda u: amplitude * np.cos(u[0])[None, None, None])


class PolynomialPotential:
    """Multivariate polynomial with exact derivatives up to third order.

    Stored as monomials (coefficient, exponent tuple); differentiation
    manipulates exponents, so every derivative is exact.
    """

    def __init__(self, n: int, monomials):
        self.n = int(n)
        terms = []
        for coeff, exps in monomials:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.n or any(e < 0 for e in exps):
                raise ValueError("bad monomial exponents")
            terms.append((float(coeff), exps))
        self.terms = terms

    @classmethod
    def from_univariate(cls, coeffs) -> "PolynomialPotential":
        return cls(1, [(c, (j,)) for j, c in enumerate(coeffs)])

    def _eval_derivative(self, q: np.ndarray, dvars: tuple[int, ...]) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        out = np.zeros(q.shape[1:])
        for coeff, exps in self.terms:
            e = list(exps)
            c = coeff
            dead = False
            for var in dvars:
                if e[var] == 0:
                    dead = True
                    break
                c *= e[var]
                e[var] -= 1
            if dead or c == 0.0:
                continue
            term = c
            for i, ei in enumerate(e):
                if ei:
                    term = term * q[i] ** ei
            out = out + term
        return out

    def v(self, q: np.ndarray) -> np.ndarray:
        return self._eval_derivative(q, ())

    def dv(self, q: np.ndarray) -> np.ndarray:
        return np.stack([self._eval_derivative(q, (i,)) for i in range(self.n)])

    def d2v(self, q: np.ndarray) -> np.ndarray:
        return np.stack([
            np.stack([self._eval_derivative(q, (i, j)) for j in range(self.n)])
            for i in range(self.n)])

    def d3v(self, q: np.ndarray) -> np.ndarray:
        return np.stack([
            np.stack([
                np.stack([self._eval_derivative(q, (i, j, k))
                          for k in range(self.n)])
                for j in range(self.n)])
            for i in range(self.n)])


def potential_spec(potential: PolynomialPotential, temperature: float,
                   mass: float) -> PotentialSpec:
    """Wrap a polynomial potential as a PotentialSpec."""
    return PotentialSpec(n=potential.n, temperature=temperature, mass=mass,
                         v=potential.v, dv=potential.dv, d2v=potential.d2v,
                         d3v=potential.d3v)


def random_polynomial_potential(n: int, max_degree: int,
                                rng: np.random.Generator,
                                n_terms: int = 10) -> PolynomialPotential:
    """Random polynomial potential with total degree <= max_degree."""
    candidates = [exps for exps in itertools.product(range(max_degree + 1),
                                                     repeat=n)
                  if 0 < sum(exps) <= max_degree]
    take = min(n_terms, len(candidates))
    chosen = rng.choice(len(candidates), size=take, replace=False)
    monomials = [(rng.normal(), candidates[i]) for i in chosen]
    return PolynomialPotential(n, monomials)


def model_from_config(cfg: dict) -> tuple[ModelSpec, float | None]:
    """Build a library model from a plain config mapping.

    Shapes:
      {"name": "polynomial", "nu": 1.0, "f": [...], "g": [...], "h": [...]}
      {"name": "sin-g", "nu": 1.0, "amplitude": 1.0, "f": [...]}
      {"name": "potential", "coeffs": [...], "temperature": 1.0, "mass": 0.1}

    The potential form returns the implied eps as the second element; the
    other forms return None there.
    """
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    if name == "polynomial":
        return polynomial_model(cfg["nu"], f_coeffs=cfg.get("f"),
                                g_coeffs=cfg.get("g"),
                                h_coeffs=cfg.get("h")), None
    if name == "sin-g":
        return sin_g_model(cfg["nu"], amplitude=cfg.get("amplitude", 1.0),
                           f_coeffs=cfg.get("f")), None
    if name == "potential":
        pot = PolynomialPotential.from_univariate(cfg["coeffs"])
        p = potential_spec(pot, cfg["temperature"], cfg.get("mass", 0.0))
        model, eps = from_potential(p)
        return model, eps
    raise ValueError(f"unknown model name: {name!r}")
