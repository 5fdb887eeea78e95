"""Second-order benchmark plants of the form xdd = f(x, xd, t) + g(x) u.

Four plants are shipped, selectable by name in scenario files:

* ``pendulum``   inverted pendulum,      xdd = a sin(x) - c v + b u
* ``vdp``        Van der Pol oscillator, xdd = mu (1 - x^2) v - x + b u
* ``duffing``    Duffing oscillator,     xdd = lin x + cub x^3 - delta v + b u
* ``network5``   ring of diffusively coupled pendulums, one input per node

State vectors are flat and interleaved, ``[x_1, v_1, ..., x_N, v_N]``.
Dynamics evaluators are pure functions.  The input gain of every shipped
plant is the constant ``b``, but the :class:`PlantModel` interface accepts
state-dependent gains; ``|g| >= 1e-9`` is enforced at evaluation time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidInputError, SingularGainError

G_MIN = 1e-9
PLANT_NAMES = ("pendulum", "vdp", "duffing", "network5")
TOPOLOGIES = ("ring", "chain")


def _finite(value) -> bool:
    return bool(np.all(np.isfinite(value)))


def _check_state(state, n_nodes: int) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (2 * n_nodes,):
        raise InvalidInputError(
            f"state must have shape ({2 * n_nodes},), got {state.shape}"
        )
    if not _finite(state):
        raise InvalidInputError("state contains non-finite entries")
    return state


@dataclass(frozen=True)
class PendulumParams:
    a: float = 1.0      # gravity torque coefficient
    c: float = 0.1      # viscous damping
    b: float = 1.0      # input gain

    def __post_init__(self):
        if not _finite((self.a, self.c, self.b)):
            raise ConfigError("pendulum parameters must be finite")
        if self.a < 0:
            raise ConfigError("pendulum a must be >= 0")
        if self.c < 0:
            raise ConfigError("pendulum c must be >= 0")
        if self.b == 0:
            raise ConfigError("pendulum b must be nonzero")


@dataclass(frozen=True)
class VanDerPolParams:
    mu: float = 1.0     # nonlinear damping strength
    b: float = 1.0

    def __post_init__(self):
        if not _finite((self.mu, self.b)):
            raise ConfigError("vdp parameters must be finite")
        if self.mu < 0:
            raise ConfigError("vdp mu must be >= 0")
        if self.b == 0:
            raise ConfigError("vdp b must be nonzero")


@dataclass(frozen=True)
class DuffingParams:
    lin: float = 1.0    # linear stiffness term
    cub: float = -1.0   # cubic stiffness term
    delta: float = 0.2  # viscous damping
    b: float = 1.0

    def __post_init__(self):
        if not _finite((self.lin, self.cub, self.delta, self.b)):
            raise ConfigError("duffing parameters must be finite")
        if self.delta < 0:
            raise ConfigError("duffing delta must be >= 0")
        if self.b == 0:
            raise ConfigError("duffing b must be nonzero")


@dataclass(frozen=True)
class NetworkParams:
    n: int = 5
    kappa: float = 0.5          # coupling strength
    topology: str = "ring"
    node: PendulumParams = PendulumParams()

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise ConfigError("network n must be an integer >= 2")
        if not _finite(self.kappa) or self.kappa < 0:
            raise ConfigError("network kappa must be >= 0")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"network topology must be one of {TOPOLOGIES}")


def _pendulum_drift(x, v, p: PendulumParams):
    return p.a * np.sin(x) - p.c * v


def _vdp_drift(x, v, p: VanDerPolParams):
    return p.mu * (1.0 - x * x) * v - x


def _duffing_drift(x, v, p: DuffingParams):
    return p.lin * x + p.cub * x ** 3 - p.delta * v


def _coupling(x: np.ndarray, p: NetworkParams) -> np.ndarray:
    """Diffusive position coupling kappa * sum_j (x_j - x_i) over neighbors."""
    if p.topology == "ring":
        return p.kappa * ((np.roll(x, 1) - x) + (np.roll(x, -1) - x))
    acc = np.zeros_like(x)
    acc[1:] += p.kappa * (x[:-1] - x[1:])
    acc[:-1] += p.kappa * (x[1:] - x[:-1])
    return acc


def _network_drift(x, v, p: NetworkParams):
    return _pendulum_drift(x, v, p.node) + _coupling(x, p)


def _assemble(state: np.ndarray, acc: np.ndarray) -> np.ndarray:
    out = np.empty_like(state)
    out[0::2] = state[1::2]
    out[1::2] = acc
    return out


def _check_u_scalar(u) -> float:
    u = float(u)
    if not np.isfinite(u):
        raise InvalidInputError("control input must be finite")
    return u


def pendulum_dynamics(state, u, p: PendulumParams = PendulumParams()) -> np.ndarray:
    """Full state derivative [v, a sin(x) - c v + b u]."""
    state = _check_state(state, 1)
    u = _check_u_scalar(u)
    acc = _pendulum_drift(state[0], state[1], p) + p.b * u
    return np.array([state[1], acc])


def vdp_dynamics(state, u, p: VanDerPolParams = VanDerPolParams()) -> np.ndarray:
    """Full state derivative [v, mu (1 - x^2) v - x + b u]."""
    state = _check_state(state, 1)
    u = _check_u_scalar(u)
    acc = _vdp_drift(state[0], state[1], p) + p.b * u
    return np.array([state[1], acc])


def duffing_dynamics(state, u, p: DuffingParams = DuffingParams()) -> np.ndarray:
    """Full state derivative [v, lin x + cub x^3 - delta v + b u]."""
    state = _check_state(state, 1)
    u = _check_u_scalar(u)
    acc = _duffing_drift(state[0], state[1], p) + p.b * u
    return np.array([state[1], acc])


def network_dynamics(state, u, p: NetworkParams = NetworkParams()) -> np.ndarray:
    """Per-node pendulum dynamics plus diffusive position coupling.

    ``u`` must supply one control value per node.
    """
    state = _check_state(state, p.n)
    u = np.asarray(u, dtype=float)
    if u.shape != (p.n,):
        raise InvalidInputError(f"u must have shape ({p.n},), got {u.shape}")
    if not _finite(u):
        raise InvalidInputError("control input contains non-finite entries")
    x = state[0::2]
    v = state[1::2]
    acc = _network_drift(x, v, p) + p.node.b * u
    return _assemble(state, acc)


@dataclass(frozen=True)
class PlantModel:
    """Uniform plant interface used by the simulator.

    ``f(state, t)`` returns the per-node drift acceleration (length N) and
    ``g(state)`` the per-node input gain (length N).  ``constant_gain``
    marks gains already validated at construction, letting the integrator
    skip the singularity re-check on every stage evaluation.
    """

    name: str
    n_nodes: int
    params: object
    f: Callable[[np.ndarray, float], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    constant_gain: bool = False

    def gain(self, state) -> np.ndarray:
        gv = np.asarray(self.g(state), dtype=float)
        if not self.constant_gain and np.any(np.abs(gv) < G_MIN):
            raise SingularGainError(
                f"plant '{self.name}': |g| fell below {G_MIN:g}"
            )
        return gv

    def derivative(self, state, t, u, d=0.0) -> np.ndarray:
        """Closed-loop derivative for held control u and disturbance d."""
        state = np.asarray(state, dtype=float)
        g = self.g(state) if self.constant_gain else self.gain(state)
        acc = self.f(state, t) + g * u + d
        return _assemble(state, acc)


_PARAM_TYPES = {
    "pendulum": PendulumParams,
    "vdp": VanDerPolParams,
    "duffing": DuffingParams,
    "network5": NetworkParams,
}


def param_type(name: str):
    if name not in _PARAM_TYPES:
        raise ConfigError(f"unknown plant '{name}', expected one of {PLANT_NAMES}")
    return _PARAM_TYPES[name]


def make_plant(name: str, params=None) -> PlantModel:
    """Build a PlantModel by selector name, with optional parameter override."""
    cls = param_type(name)
    if params is None:
        params = cls()
    if not isinstance(params, cls):
        raise ConfigError(f"plant '{name}' expects {cls.__name__} parameters")

    if name == "pendulum":
        n, drift, b = 1, lambda s, t: _pendulum_drift(s[0::2], s[1::2], params), params.b
    elif name == "vdp":
        n, drift, b = 1, lambda s, t: _vdp_drift(s[0::2], s[1::2], params), params.b
    elif name == "duffing":
        n, drift, b = 1, lambda s, t: _duffing_drift(s[0::2], s[1::2], params), params.b
    else:
        n, drift, b = params.n, lambda s, t: _network_drift(s[0::2], s[1::2], params), params.node.b

    if abs(float(b)) < G_MIN:
        raise SingularGainError(f"plant '{name}': |b| must be >= {G_MIN:g}")
    g_const = np.full(n, float(b))
    return PlantModel(
        name=name, n_nodes=n, params=params, f=drift,
        g=lambda s: g_const, constant_gain=True,
    )
