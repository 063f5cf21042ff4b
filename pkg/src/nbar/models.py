"""Model specification and simulation of bifurcating autoregressive trees.

A model is an autoregressive pair (f0, f1), a bivariate noise law and a
root law.  Each node ``u`` carries a real trait; its children get

    X_u0 = f0(X_u) + s0(X_u) * e_u0,    X_u1 = f1(X_u) + s1(X_u) * e_u1,

where (e_u0, e_u1) is a unit-variance correlated Gaussian pair and the
scale functions ``s`` are the constant standard deviations in the default
homoscedastic mode.  All randomness is counter-based: the noise pair of
node ``u`` is a pure function of the seed and the heap index of ``u``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtri

from .errors import ConfigError
from .rng import ROOT_COUNTER, derive_key, stream_uniforms
from .trees import BinaryTreeData, full_tree_size, index_to_path

_CLASS_CHECK_GRID = np.linspace(-100.0, 100.0, 2001)

#: dense simulation above this depth would allocate > ~64 MB per tree
_SIM_DEPTH_LIMIT = 22


@dataclass(frozen=True)
class AutoregressivePair:
    """The two autoregressive functions with their contraction class bounds.

    ``gamma`` and ``ell`` assert membership of both functions in the class
    ``|f(x)| <= gamma*|x| + ell``; membership is verified on a sampled grid
    at construction.
    """

    f0: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    f1: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    gamma: float = 0.5
    ell: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0,1), got {self.gamma}")
        if self.ell <= 0.0:
            raise ConfigError(f"ell must be > 0, got {self.ell}")
        for name, f in (("f0", self.f0), ("f1", self.f1)):
            vals = np.asarray(f(_CLASS_CHECK_GRID), dtype=np.float64)
            bound = self.gamma * np.abs(_CLASS_CHECK_GRID) + self.ell
            if not np.all(np.abs(vals) <= bound):
                worst = _CLASS_CHECK_GRID[np.argmax(np.abs(vals) - bound)]
                raise ConfigError(
                    f"{name} leaves the class (gamma={self.gamma}, ell={self.ell}) "
                    f"near x={worst:.3g}"
                )


@dataclass(frozen=True)
class NoiseModel:
    """Centered bivariate Gaussian noise with marginal sds and correlation.

    ``sigma0 = sigma1 = 0`` is allowed as a degenerate deterministic model
    (useful for exact tests); negative sds and ``|rho| >= 1`` are rejected.
    ``tail_r``/``tail_lambda`` optionally record a polynomial tail envelope
    ``g(x) <= r / (1+|x|^lambda)`` used only by the ergodicity diagnostics.
    """

    sigma0: float = 1.0
    sigma1: float = 1.0
    rho: float = 0.0
    family: str = "gaussian"
    tail_r: float | None = None
    tail_lambda: float | None = None

    def __post_init__(self):
        if self.family != "gaussian":
            raise ConfigError(f"unsupported noise family {self.family!r}")
        if self.sigma0 < 0.0 or self.sigma1 < 0.0:
            raise ConfigError("standard deviations must be >= 0")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError(f"correlation must be in (-1,1), got {self.rho}")

    @property
    def covariance(self) -> np.ndarray:
        c = self.rho * self.sigma0 * self.sigma1
        return np.array([[self.sigma0 ** 2, c], [c, self.sigma1 ** 2]])

    def marginal_sd(self, iota: int) -> float:
        return (self.sigma0, self.sigma1)[iota]

    def marginal_density(self, iota: int, x) -> np.ndarray:
        """Density of the type-``iota`` noise marginal."""
        sd = self.marginal_sd(iota)
        if sd == 0.0:
            raise ConfigError("degenerate marginal has no density")
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-0.5 * (x / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))

    def mean_abs_mixture(self) -> float:
        """E|e'| for e' drawn from the equal-weight mixture of the marginals."""
        return 0.5 * (self.sigma0 + self.sigma1) * math.sqrt(2.0 / math.pi)

    def unit_pair(self, z0: np.ndarray, z1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map iid standard normals to a unit-variance pair with correlation rho."""
        return z0, self.rho * z0 + math.sqrt(1.0 - self.rho ** 2) * z1


@dataclass(frozen=True)
class RootLaw:
    """Law of the root trait: a point mass or a Gaussian."""

    kind: str = "point"
    x0: float = 0.0
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("point", "gaussian"):
            raise ConfigError(f"unknown root law {self.kind!r}")
        if self.kind == "gaussian" and self.sd <= 0.0:
            raise ConfigError("gaussian root law needs sd > 0")

    def sample(self, key: int, size: int | None = None):
        if self.kind == "point":
            return self.x0 if size is None else np.full(size, float(self.x0))
        counters = ROOT_COUNTER if size is None else ROOT_COUNTER + np.arange(size, dtype=np.uint64)
        z = ndtri(stream_uniforms(key, counters))
        return self.mean + self.sd * z


_VARIANCE_CHECK_GRID = np.linspace(-50.0, 50.0, 1001)


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to simulate: functions, noise, root law.

    ``variance_fns``, when given, switches on the heteroscedastic mode
    ``X_{u iota} = f_iota(X_u) + sigma_iota(X_u) * e_{u iota}`` with
    unit-variance correlated noise; both functions must stay within
    positive finite bounds (checked on a sampled grid).
    """

    pair: AutoregressivePair
    noise: NoiseModel = NoiseModel()
    root: RootLaw = RootLaw()
    variance_fns: tuple[Callable, Callable] | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.variance_fns is not None:
            for i, fn in enumerate(self.variance_fns):
                vals = np.asarray(fn(_VARIANCE_CHECK_GRID), dtype=np.float64)
                if not np.all(np.isfinite(vals)) or np.min(vals) <= 0.0:
                    raise ConfigError(
                        f"variance function {i} must be positive and finite on the sampled grid"
                    )

    def scale(self, iota: int, x: np.ndarray):
        if self.variance_fns is not None:
            return self.variance_fns[iota](x)
        return self.noise.marginal_sd(iota)

    def autoregression(self, iota: int) -> Callable:
        return (self.pair.f0, self.pair.f1)[iota]


def draw_noise(noise: NoiseModel, count: int, seed: int = 0) -> np.ndarray:
    """Draw ``count`` centered pairs with covariance ``noise.covariance``.

    Pair ``j`` is a pure function of ``(seed, j)``; the layout matches the
    per-node draws used by :func:`simulate_nbar`.
    """
    j = np.arange(count, dtype=np.uint64)
    z0 = ndtri(stream_uniforms(seed, 2 * j))
    z1 = ndtri(stream_uniforms(seed, 2 * j + np.uint64(1)))
    u0, u1 = noise.unit_pair(z0, z1)
    return np.column_stack([noise.sigma0 * u0, noise.sigma1 * u1])


def _children_from(spec: ModelSpec, parents: np.ndarray, key,
                   parent_indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-perturbed child values for an array of parent values.

    ``parent_indices`` are heap indices (uint64); ``key`` may be a scalar or
    an array broadcasting against them.
    """
    two_i = np.uint64(2) * parent_indices
    z0 = ndtri(stream_uniforms(key, two_i))
    z1 = ndtri(stream_uniforms(key, two_i + np.uint64(1)))
    u0, u1 = spec.noise.unit_pair(z0, z1)
    # overflow surfaces as the explicit non-finite check in the caller
    with np.errstate(over="ignore", invalid="ignore"):
        c0 = spec.pair.f0(parents) + spec.scale(0, parents) * u0
        c1 = spec.pair.f1(parents) + spec.scale(1, parents) * u1
    return c0, c1


def simulate_nbar(spec: ModelSpec, depth: int, seed: int) -> BinaryTreeData:
    """Simulate a full tree down to generation ``depth``.

    Deterministic given ``(spec, depth, seed)``.  Raises if any node value
    turns non-finite, naming the node.
    """
    if depth < 0:
        raise ConfigError(f"depth must be >= 0, got {depth}")
    if depth > _SIM_DEPTH_LIMIT:
        raise ConfigError(f"simulation depth {depth} exceeds the limit {_SIM_DEPTH_LIMIT}")
    values = np.empty(full_tree_size(depth))
    values[0] = spec.root.sample(seed)
    for m in range(depth):
        lo, hi = 2 ** m - 1, 2 ** (m + 1) - 1
        parents = values[lo:hi]
        idx = np.arange(lo, hi, dtype=np.uint64)
        c0, c1 = _children_from(spec, parents, seed, idx)
        block = values[hi:2 ** (m + 2) - 1]
        block[0::2] = c0
        block[1::2] = c1
        if not np.all(np.isfinite(block)):
            bad = hi + int(np.nonzero(~np.isfinite(block))[0][0])
            raise ConfigError(f"non-finite trait at node {index_to_path(bad)!r}")
    return BinaryTreeData.from_dense(values, depth)


def simulate_generation_batch(spec: ModelSpec, m: int, seeds: np.ndarray) -> np.ndarray:
    """Generation-``m`` values for many replicates at once, shape (R, 2^m).

    Replicate ``r`` reproduces exactly the generation-``m`` slice of
    ``simulate_nbar(spec, m, seeds[r])``.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    keys = seeds[:, None]
    if spec.root.kind == "point":
        current = np.full((seeds.size, 1), float(spec.root.x0))
    else:
        z = ndtri(stream_uniforms(keys, ROOT_COUNTER))
        current = (spec.root.mean + spec.root.sd * z).reshape(seeds.size, 1)
    for g in range(m):
        lo, hi = 2 ** g - 1, 2 ** (g + 1) - 1
        idx = np.arange(lo, hi, dtype=np.uint64)[None, :]
        c0, c1 = _children_from(spec, current, keys, idx)
        nxt = np.empty((seeds.size, 2 ** (g + 1)))
        nxt[:, 0::2] = c0
        nxt[:, 1::2] = c1
        current = nxt
    return current


def simulate_tagged_branch(spec: ModelSpec, m: int, seed: int) -> np.ndarray:
    """One tagged-branch chain Y_0..Y_m (length m+1).

    At each step an unbiased coin picks the child type and the increment is
    drawn from that type's noise marginal.
    """
    return simulate_tagged_branch_batch(spec, m, np.array([seed], dtype=np.uint64))[0]


def simulate_tagged_branch_batch(spec: ModelSpec, m: int, seeds: np.ndarray) -> np.ndarray:
    """Tagged-branch chains for many replicates, shape (R, m+1)."""
    if m < 0:
        raise ConfigError(f"chain length must be >= 0, got {m}")
    seeds = np.asarray(seeds, dtype=np.uint64)
    keys = seeds[:, None]
    out = np.empty((seeds.size, m + 1))
    if spec.root.kind == "point":
        out[:, 0] = spec.root.x0
    else:
        z = ndtri(stream_uniforms(keys, ROOT_COUNTER))[:, 0]
        out[:, 0] = spec.root.mean + spec.root.sd * z
    for k in range(1, m + 1):
        u_type = stream_uniforms(keys, np.uint64(2 * k))[:, 0]
        z = ndtri(stream_uniforms(keys, np.uint64(2 * k + 1)))[:, 0]
        iota = (u_type >= 0.5).astype(np.int64)
        prev = out[:, k - 1]
        f_vals = np.where(iota == 0, spec.pair.f0(prev), spec.pair.f1(prev))
        s0 = np.broadcast_to(np.asarray(spec.scale(0, prev), dtype=np.float64), prev.shape)
        s1 = np.broadcast_to(np.asarray(spec.scale(1, prev), dtype=np.float64), prev.shape)
        out[:, k] = f_vals + np.where(iota == 0, s0, s1) * z
        if not np.all(np.isfinite(out[:, k])):
            raise ConfigError(f"non-finite chain value at step {k}")
    return out


# -- built-in models ---------------------------------------------------------

def _trial_fn(slope: float) -> Callable[[np.ndarray], np.ndarray]:
    def f(x):
        x = np.asarray(x, dtype=np.float64)
        return x * (slope + 0.5 * np.exp(-x * x))
    return f


TRIAL_F0 = _trial_fn(0.25)
TRIAL_F1 = _trial_fn(0.125)

#: sampled class bounds satisfied by every trial function (tau in [1/8, 1/4]):
#: |x*(tau + exp(-x^2)/2)| <= |x|/4 + sup|x exp(-x^2)|/2 = |x|/4 + 0.2144
_TRIAL_GAMMA = 0.25
_TRIAL_ELL = 0.215

TAU_RANGE = (0.125, 0.25)

_TAU_PATTERN = re.compile(r"^paper-tau[(:]([^)]*)\)?$")


def trial_tau_fn(tau: float) -> Callable[[np.ndarray], np.ndarray]:
    """The type-1 trial function x*(tau + exp(-x^2)/2) for the power study."""
    if not TAU_RANGE[0] <= tau <= TAU_RANGE[1]:
        raise ConfigError(
            f"tau={tau} outside the studied range [{TAU_RANGE[0]}, {TAU_RANGE[1]}]"
        )
    return _trial_fn(tau)


def builtin_models(name: str) -> ModelSpec:
    """Named trial models: ``paper-neq``, ``paper-eq``, ``paper-tau(t)``.

    All use unit Gaussian noise with correlation 0.3 and a point-mass root
    at 1.
    """
    noise = NoiseModel(sigma0=1.0, sigma1=1.0, rho=0.3)
    root = RootLaw(kind="point", x0=1.0)
    if name == "paper-neq":
        pair = AutoregressivePair(TRIAL_F0, TRIAL_F1, _TRIAL_GAMMA, _TRIAL_ELL)
    elif name == "paper-eq":
        pair = AutoregressivePair(TRIAL_F0, TRIAL_F0, _TRIAL_GAMMA, _TRIAL_ELL)
    else:
        match = _TAU_PATTERN.match(name)
        if not match:
            raise ConfigError(f"unknown builtin model {name!r}")
        try:
            tau = float(match.group(1))
        except ValueError:
            raise ConfigError(f"cannot parse tau in {name!r}") from None
        pair = AutoregressivePair(TRIAL_F0, trial_tau_fn(tau), _TRIAL_GAMMA, _TRIAL_ELL)
    return ModelSpec(pair=pair, noise=noise, root=root, name=name)


# -- model spec JSON ----------------------------------------------------------

_FN_NAMES = {
    "zero": lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
    "paper-f0": TRIAL_F0,
    "paper-f1": TRIAL_F1,
}


def _parse_fn(obj, label: str) -> Callable:
    if isinstance(obj, str):
        match = _TAU_PATTERN.match(obj)
        if match:
            return trial_tau_fn(float(match.group(1)))
        if obj in _FN_NAMES:
            return _FN_NAMES[obj]
        raise ConfigError(f"{label}: unknown function name {obj!r}")
    if isinstance(obj, dict) and "poly" in obj:
        coeffs = [float(c) for c in obj["poly"]]
        return lambda x: np.polynomial.polynomial.polyval(
            np.asarray(x, dtype=np.float64), coeffs)
    if isinstance(obj, dict) and "points" in obj:
        xs = np.asarray(obj["points"]["x"], dtype=np.float64)
        ys = np.asarray(obj["points"]["y"], dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ConfigError(f"{label}: points table needs matching x/y arrays")
        if np.any(np.diff(xs) <= 0):
            raise ConfigError(f"{label}: points table x values must increase")
        return lambda x: np.interp(np.asarray(x, dtype=np.float64), xs, ys)
    raise ConfigError(f"{label}: expected a name, a poly table or a points table")


def model_from_json(obj: dict) -> ModelSpec:
    """Build a model from its JSON description.

    Schema: ``{"f0": <fn>, "f1": <fn>, "sigma0": s0, "sigma1": s1,
    "rho": r, "root": {"point": x0} | {"gaussian": {"mean": m, "sd": s}},
    "gamma": g, "ell": l}`` where each ``<fn>`` is a builtin name, a
    ``{"poly": [c0, c1, ...]}`` coefficient table, or a
    ``{"points": {"x": [...], "y": [...]}}`` interpolation table.
    """
    if not isinstance(obj, dict):
        raise ConfigError("model spec must be a JSON object")
    try:
        f0 = _parse_fn(obj["f0"], "f0")
        f1 = _parse_fn(obj["f1"], "f1")
        noise = NoiseModel(
            sigma0=float(obj.get("sigma0", 1.0)),
            sigma1=float(obj.get("sigma1", 1.0)),
            rho=float(obj.get("rho", 0.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"model spec missing field {exc}") from None
    root_obj = obj.get("root", {"point": 0.0})
    if "point" in root_obj:
        root = RootLaw(kind="point", x0=float(root_obj["point"]))
    elif "gaussian" in root_obj:
        g = root_obj["gaussian"]
        root = RootLaw(kind="gaussian", mean=float(g.get("mean", 0.0)),
                       sd=float(g.get("sd", 1.0)))
    else:
        raise ConfigError(f"unknown root law {root_obj!r}")
    gamma = float(obj.get("gamma", 0.5))
    if "ell" in obj:
        ell = float(obj["ell"])
    else:
        # fit the smallest sampled offset for the declared slope bound
        slack = max(
            float(np.max(np.abs(f(_CLASS_CHECK_GRID)) - gamma * np.abs(_CLASS_CHECK_GRID)))
            for f in (f0, f1)
        )
        ell = max(slack * 1.001, 1e-6)
    pair = AutoregressivePair(f0, f1, gamma, ell)
    return ModelSpec(pair=pair, noise=noise, root=root, name=str(obj.get("name", "custom")))


def resolve_model(spec: str | dict) -> ModelSpec:
    """Accept a builtin name or a parsed JSON object."""
    if isinstance(spec, str):
        return builtin_models(spec)
    return model_from_json(spec)


def marginal_integral(noise: NoiseModel, iota: int) -> float:
    """Quadrature check that a noise marginal integrates to one."""
    sd = noise.marginal_sd(iota)
    val, _ = quad(lambda t: float(noise.marginal_density(iota, t)),
                  -12.0 * sd, 12.0 * sd, limit=200)
    return val


def replicate_seeds(base_seed: int, count: int) -> np.ndarray:
    """Independent substream keys for ``count`` replicates."""
    return np.array([derive_key(base_seed, r) for r in range(count)], dtype=np.uint64)
