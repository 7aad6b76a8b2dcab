"""Deterministic, seedable generators of time-varying bilevel round streams.

Three families:

* ``quadratic`` — a fully closed-form family (fixed SPD inner Hessian,
  drifting linear terms) used as the verification workhorse;
* ``hyper_rep`` — online linear hyper-representation learning: the outer
  variable is a representation matrix (flattened row-major), the inner a
  ridge-regularized least-squares head fit on per-round minibatches;
* ``hyperopt`` — online hyperparameter optimization: per-feature
  exp-reparameterized ridge weights tuned against the validation loss of a
  multiclass logistic model, with an optional label-corruption schedule.

All randomness flows through ``numpy.random.Generator(PCG64(seed))``, a
named, portable 64-bit generator, so identical configs give bitwise
identical streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Array, RegularityConstants
from .errors import ConfigError, OracleCapabilityError

_FAMILIES = ("quadratic", "hyper_rep", "hyperopt")


@dataclass(frozen=True)
class Drift:
    """How the environment moves between rounds.

    ``static`` keeps it fixed; ``staged`` redraws it every ``period`` rounds
    (scaled by ``magnitude``); ``smooth`` applies per-round random-walk
    increments with standard deviation ``rate / sqrt(t)`` so the cumulative
    squared drift grows only logarithmically in the horizon.
    """

    kind: str = "static"
    period: int = 1000
    magnitude: float = 1.0
    rate: float = 0.1

    def __post_init__(self):
        if self.kind not in ("static", "staged", "smooth"):
            raise ConfigError(f"unknown drift kind {self.kind!r}")
        if self.period < 1:
            raise ConfigError("drift period must be >= 1")
        if self.magnitude < 0 or self.rate < 0:
            raise ConfigError("drift magnitude/rate must be >= 0")

    @staticmethod
    def static() -> "Drift":
        return Drift(kind="static")

    @staticmethod
    def staged(period: int, magnitude: float = 1.0) -> "Drift":
        return Drift(kind="staged", period=period, magnitude=magnitude)

    @staticmethod
    def smooth(rate: float) -> "Drift":
        return Drift(kind="smooth", rate=rate)


@dataclass(frozen=True)
class QuadraticParams:
    d1: int = 5
    d2: int = 5
    mu: float = 1.0
    l: float = 2.0
    ridge: float = 1.0
    offset_scale: float = 1.0


@dataclass(frozen=True)
class HyperRepParams:
    p: int = 20
    d: int = 5
    batch_f: int = 4
    batch_g: int = 4
    gamma: float = 1.0


@dataclass(frozen=True)
class HyperOptParams:
    classes: int = 5
    features: int = 50
    batch_train: int = 16
    batch_val: int = 16
    lam_lo: float = -2.0
    lam_hi: float = 2.0
    # (start_round, label_noise_fraction) pairs; the latest entry with
    # start_round <= t governs round t.
    corruption: tuple = ()


@dataclass(frozen=True)
class StreamConfig:
    family: str
    horizon: int
    seed: int
    drift: Drift = field(default_factory=Drift.static)
    noise_std: float = 0.0
    quadratic: QuadraticParams = field(default_factory=QuadraticParams)
    hyper_rep: HyperRepParams = field(default_factory=HyperRepParams)
    hyperopt: HyperOptParams = field(default_factory=HyperOptParams)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {_FAMILIES}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")

    @property
    def d1(self) -> int:
        if self.family == "quadratic":
            return self.quadratic.d1
        if self.family == "hyper_rep":
            return self.hyper_rep.p * self.hyper_rep.d
        return self.hyperopt.features

    @property
    def d2(self) -> int:
        if self.family == "quadratic":
            return self.quadratic.d2
        if self.family == "hyper_rep":
            return self.hyper_rep.d
        return self.hyperopt.features * self.hyperopt.classes


@dataclass
class Stream:
    """A realized round sequence plus the constants it reports about itself."""

    config: StreamConfig
    oracles: list
    constants: RegularityConstants

    def __len__(self):
        return len(self.oracles)

    def __getitem__(self, i):
        return self.oracles[i]

    def __iter__(self):
        return iter(self.oracles)


def make_stream(cfg: StreamConfig) -> Stream:
    """Dispatch to the family-specific generator."""
    if cfg.family == "quadratic":
        return make_quadratic_stream(cfg)
    if cfg.family == "hyper_rep":
        return make_hr_stream(cfg)
    return make_ho_stream(cfg)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _drift_path(rng, drift: Drift, shapes, scale: float, horizon: int):
    """Per-round environment parameters under the drift descriptor."""
    current = [scale * rng.standard_normal(s) for s in shapes]
    path = []
    for t in range(1, horizon + 1):
        if t > 1:
            if drift.kind == "staged" and (t - 1) % drift.period == 0:
                current = [drift.magnitude * scale * rng.standard_normal(s) for s in shapes]
            elif drift.kind == "smooth":
                step = drift.rate / math.sqrt(t)
                current = [c + step * rng.standard_normal(s) for c, s in zip(current, shapes)]
        path.append([c.copy() for c in current])
    return path


# --------------------------------------------------------------------------
# Quadratic family
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadraticOracle:
    """Round with g = 0.5 y'Ay - y'(Bx + c) and
    f = 0.5||y - y_target||^2 + 0.5 ridge ||x - x_target||^2."""

    round_index: int
    A: Array
    B: Array  # (d2, d1)
    c: Array
    y_target: Array
    x_target: Array
    ridge: float
    constants: RegularityConstants

    has_exact_inner = True

    @property
    def d1(self) -> int:
        return self.B.shape[1]

    @property
    def d2(self) -> int:
        return self.B.shape[0]

    def f_value(self, x, y):
        ry = y - self.y_target
        rx = x - self.x_target
        return 0.5 * float(ry @ ry) + 0.5 * self.ridge * float(rx @ rx)

    def g_value(self, x, y):
        return 0.5 * float(y @ (self.A @ y)) - float(y @ (self.B @ x + self.c))

    def grad_f_x(self, x, y):
        return self.ridge * (x - self.x_target)

    def grad_f_y(self, x, y):
        return y - self.y_target

    def grad_g_y(self, x, y):
        return self.A @ y - (self.B @ x + self.c)

    def hess_g_yy_vec(self, x, y, v):
        return self.A @ v

    def cross_g_xy_vec(self, x, y, v):
        return -(self.B.T @ v)

    def y_star(self, x):
        return np.linalg.solve(self.A, self.B @ x + self.c)

    def closed_form_hypergrad(self, x):
        """Chain-rule gradient of x -> f(x, y_star(x)), for verification."""
        inner = np.linalg.solve(self.A, self.B @ x + self.c) - self.y_target
        return self.B.T @ np.linalg.solve(self.A, inner) + self.ridge * (x - self.x_target)


def make_quadratic_stream(cfg: StreamConfig) -> Stream:
    """Fixed SPD inner curvature with drifting linear terms; all regularity
    constants are exact (from eigenvalues of the assembled Hessians)."""
    if cfg.family != "quadratic":
        raise ConfigError(f"expected family 'quadratic', got {cfg.family!r}")
    p = cfg.quadratic
    if not (0 < p.mu <= p.l):
        raise ConfigError(f"need 0 < mu <= l, got mu={p.mu}, l={p.l}")
    if p.d1 < 1 or p.d2 < 1:
        raise ConfigError("dimensions must be positive")
    if p.ridge <= 0:
        raise ConfigError("ridge must be positive")

    rng = _rng(cfg.seed)
    q_mat, _ = np.linalg.qr(rng.standard_normal((p.d2, p.d2)))
    eigs = np.linspace(p.mu, p.l, p.d2)
    a_mat = (q_mat * eigs) @ q_mat.T
    a_mat = 0.5 * (a_mat + a_mat.T)
    b_mat = rng.standard_normal((p.d2, p.d1))
    b_mat = b_mat / np.linalg.norm(b_mat, 2)

    # Exact Lipschitz bound of the full gradients from the largest block
    # Hessian eigenvalue magnitudes.
    h_g = np.zeros((p.d1 + p.d2, p.d1 + p.d2))
    h_g[p.d1 :, p.d1 :] = a_mat
    h_g[: p.d1, p.d1 :] = -b_mat.T
    h_g[p.d1 :, : p.d1] = -b_mat
    l1_g = float(np.max(np.abs(np.linalg.eigvalsh(h_g))))
    l1 = max(l1_g, p.ridge, 1.0)
    constants = RegularityConstants(mu_g=p.mu, l1=l1)

    shapes = [(p.d2,), (p.d2,), (p.d1,)]
    path = _drift_path(rng, cfg.drift, shapes, p.offset_scale, cfg.horizon)
    oracles = []
    for t, (c_t, ytgt_t, xtgt_t) in enumerate(path, start=1):
        if cfg.noise_std > 0:
            c_t = c_t + cfg.noise_std * rng.standard_normal(p.d2)
            ytgt_t = ytgt_t + cfg.noise_std * rng.standard_normal(p.d2)
            xtgt_t = xtgt_t + cfg.noise_std * rng.standard_normal(p.d1)
        oracles.append(
            QuadraticOracle(
                round_index=t,
                A=a_mat,
                B=b_mat,
                c=c_t,
                y_target=ytgt_t,
                x_target=xtgt_t,
                ridge=p.ridge,
                constants=constants,
            )
        )
    return Stream(config=cfg, oracles=oracles, constants=constants)


# --------------------------------------------------------------------------
# Online hyper-representation family
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HyperRepOracle:
    """Round with g = ||Xg L w - Yg||^2 + (gamma/2)||w||^2 and
    f = ||Xf L w - Yf||^2, where L is x reshaped to (p, d) row-major."""

    round_index: int
    x_f: Array  # (batch_f, p)
    y_f: Array
    x_g: Array  # (batch_g, p)
    y_g: Array
    gamma: float
    p: int
    d: int
    gram_g: Array  # Xg' Xg, precomputed (p, p)
    xg_t_yg: Array  # Xg' Yg, precomputed (p,)
    constants: RegularityConstants
    # Generator state behind this round, kept for diagnostics.
    lam_true: Array
    w_true: Array

    has_exact_inner = True

    @property
    def d1(self) -> int:
        return self.p * self.d

    @property
    def d2(self) -> int:
        return self.d

    def _mat(self, x):
        return x.reshape(self.p, self.d)

    def f_value(self, x, y):
        res = self.x_f @ (self._mat(x) @ y) - self.y_f
        return float(res @ res)

    def g_value(self, x, y):
        res = self.x_g @ (self._mat(x) @ y) - self.y_g
        return float(res @ res) + 0.5 * self.gamma * float(y @ y)

    def grad_f_x(self, x, y):
        res = self.x_f @ (self._mat(x) @ y) - self.y_f
        return (2.0 * np.outer(self.x_f.T @ res, y)).reshape(-1)

    def grad_f_y(self, x, y):
        lam = self._mat(x)
        res = self.x_f @ (lam @ y) - self.y_f
        return 2.0 * (lam.T @ (self.x_f.T @ res))

    def grad_g_y(self, x, y):
        lam = self._mat(x)
        res = self.x_g @ (lam @ y) - self.y_g
        return 2.0 * (lam.T @ (self.x_g.T @ res)) + self.gamma * y

    def hess_g_yy_vec(self, x, y, v):
        lam = self._mat(x)
        return 2.0 * (lam.T @ (self.gram_g @ (lam @ v))) + self.gamma * v

    def cross_g_xy_vec(self, x, y, v):
        lam = self._mat(x)
        rho = self.x_g @ (lam @ y) - self.y_g
        term = np.outer(self.x_g.T @ rho, v) + np.outer(self.gram_g @ (lam @ v), y)
        return (2.0 * term).reshape(-1)

    def y_star(self, x):
        lam = self._mat(x)
        h = 2.0 * (lam.T @ self.gram_g @ lam) + self.gamma * np.eye(self.d)
        return np.linalg.solve(h, 2.0 * (lam.T @ self.xg_t_yg))

    def inner_hessian_bound(self, x) -> float:
        """Largest eigenvalue of the inner Hessian at this representation."""
        lam = self._mat(x)
        h = 2.0 * (lam.T @ self.gram_g @ lam) + self.gamma * np.eye(self.d)
        return float(np.max(np.linalg.eigvalsh(h)))


def make_hr_stream(cfg: StreamConfig) -> Stream:
    """Minibatch rounds drawn from a (possibly drifting) linear ground truth
    Y = X @ (L* w*) + noise; the inner problem stays gamma-strongly convex."""
    if cfg.family != "hyper_rep":
        raise ConfigError(f"expected family 'hyper_rep', got {cfg.family!r}")
    p = cfg.hyper_rep
    if p.gamma <= 0:
        raise ConfigError("gamma must be positive")
    if min(p.p, p.d, p.batch_f, p.batch_g) < 1:
        raise ConfigError("dimensions and batch sizes must be positive")

    rng = _rng(cfg.seed)
    truth_path = _drift_path(rng, cfg.drift, [(p.p, p.d), (p.d,)], 1.0, cfg.horizon)

    oracles = []
    worst_l1 = p.gamma
    for t, (lam_true, w_true) in enumerate(truth_path, start=1):
        x_g = rng.standard_normal((p.batch_g, p.p))
        y_g = x_g @ (lam_true @ w_true)
        x_f = rng.standard_normal((p.batch_f, p.p))
        y_f = x_f @ (lam_true @ w_true)
        if cfg.noise_std > 0:
            y_g = y_g + cfg.noise_std * rng.standard_normal(p.batch_g)
            y_f = y_f + cfg.noise_std * rng.standard_normal(p.batch_f)
        gram_g = x_g.T @ x_g
        # Inner curvature evaluated at the generator's representation; the
        # inner Hessian depends on the decision, so this is a reference
        # scale, not a global bound.
        h_ref = 2.0 * (lam_true.T @ gram_g @ lam_true) + p.gamma * np.eye(p.d)
        l1_t = float(np.max(np.linalg.eigvalsh(h_ref)))
        worst_l1 = max(worst_l1, l1_t)
        oracles.append(
            HyperRepOracle(
                round_index=t,
                x_f=x_f,
                y_f=y_f,
                x_g=x_g,
                y_g=y_g,
                gamma=p.gamma,
                p=p.p,
                d=p.d,
                gram_g=gram_g,
                xg_t_yg=x_g.T @ y_g,
                constants=RegularityConstants(mu_g=p.gamma, l1=max(l1_t, p.gamma)),
                lam_true=lam_true,
                w_true=w_true,
            )
        )
    constants = RegularityConstants(mu_g=p.gamma, l1=worst_l1)
    return Stream(config=cfg, oracles=oracles, constants=constants)


# --------------------------------------------------------------------------
# Online hyperparameter-optimization family
# --------------------------------------------------------------------------


def _softmax(logits: Array) -> Array:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits: Array, labels: Array) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(labels.shape[0]), labels]
    return float(np.mean(log_norm - picked))


@dataclass(frozen=True, eq=False)
class HyperOptOracle:
    """Round with inner objective = train cross-entropy + per-feature
    exp-reparameterized ridge, outer objective = validation cross-entropy.

    The outer variable holds log-scale regularization weights (one per
    feature); the inner variable is the classifier matrix flattened
    row-major.  The outer objective does not depend on the outer variable
    directly, so its partial outer gradient is identically zero."""

    round_index: int
    x_tr: Array  # (n_tr, m)
    y_tr: Array  # int labels
    x_val: Array
    y_val: Array
    classes: int
    features: int
    constants: RegularityConstants

    has_exact_inner = False

    @property
    def d1(self) -> int:
        return self.features

    @property
    def d2(self) -> int:
        return self.features * self.classes

    def _w(self, y):
        return y.reshape(self.features, self.classes)

    def f_value(self, x, y):
        return _cross_entropy(self.x_val @ self._w(y), self.y_val)

    def g_value(self, x, y):
        w = self._w(y)
        ce = _cross_entropy(self.x_tr @ w, self.y_tr)
        reg = 0.5 * float(np.exp(x) @ (w * w).sum(axis=1))
        return ce + reg

    def grad_f_x(self, x, y):
        return np.zeros(self.features)

    def grad_f_y(self, x, y):
        w = self._w(y)
        probs = _softmax(self.x_val @ w)
        probs[np.arange(self.y_val.shape[0]), self.y_val] -= 1.0
        return (self.x_val.T @ probs / self.y_val.shape[0]).reshape(-1)

    def grad_g_y(self, x, y):
        w = self._w(y)
        probs = _softmax(self.x_tr @ w)
        probs[np.arange(self.y_tr.shape[0]), self.y_tr] -= 1.0
        grad = self.x_tr.T @ probs / self.y_tr.shape[0]
        grad = grad + np.exp(x)[:, None] * w
        return grad.reshape(-1)

    def hess_g_yy_vec(self, x, y, v):
        w = self._w(y)
        vm = self._w(v)
        probs = _softmax(self.x_tr @ w)
        s = self.x_tr @ vm
        q = probs * s - probs * (probs * s).sum(axis=1, keepdims=True)
        h = self.x_tr.T @ q / self.y_tr.shape[0]
        h = h + np.exp(x)[:, None] * vm
        return h.reshape(-1)

    def cross_g_xy_vec(self, x, y, v):
        w = self._w(y)
        vm = self._w(v)
        return np.exp(x) * (w * vm).sum(axis=1)

    def y_star(self, x):
        raise OracleCapabilityError("hyperopt rounds have no closed-form inner solution")

    def inner_hessian_bound(self, x) -> float:
        """Local inner-curvature bound: softmax curvature plus the largest
        reg weight actually applied at these log-weights."""
        row_sq = float(np.max((self.x_tr * self.x_tr).sum(axis=1)))
        return 0.5 * row_sq + float(np.exp(np.max(x)))


def _corruption_fraction(schedule, t: int) -> float:
    frac = 0.0
    for start, level in schedule:
        if start <= t:
            frac = level
    return frac


def make_ho_stream(cfg: StreamConfig) -> Stream:
    """Synthetic multiclass stream with train/validation splits per round.

    Labels come from a (possibly drifting) ground-truth linear scorer with
    logit noise ``noise_std``; the corruption schedule flips the configured
    fraction of *training* labels from its start round onward, while
    validation labels stay clean."""
    if cfg.family != "hyperopt":
        raise ConfigError(f"expected family 'hyperopt', got {cfg.family!r}")
    p = cfg.hyperopt
    if min(p.classes, p.features, p.batch_train, p.batch_val) < 1:
        raise ConfigError("classes/features/batch sizes must be positive")
    if p.classes < 2:
        raise ConfigError("need at least 2 classes")
    if p.lam_lo > p.lam_hi:
        raise ConfigError("lam_lo must not exceed lam_hi")
    schedule = tuple((int(s), float(f)) for s, f in p.corruption)
    for i, (start, frac) in enumerate(schedule):
        if start < 1:
            raise ConfigError("corruption start rounds must be >= 1")
        if not (0.0 <= frac < 1.0):
            raise ConfigError("corruption fractions must lie in [0, 1)")
        if i > 0 and start <= schedule[i - 1][0]:
            raise ConfigError("corruption start rounds must increase")

    # Separate generators for data and corruption so a corrupted stream
    # shares every data draw with its clean counterpart bitwise.
    data_seq, corrupt_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.Generator(np.random.PCG64(data_seq))
    rng_corrupt = np.random.Generator(np.random.PCG64(corrupt_seq))
    truth_path = _drift_path(rng, cfg.drift, [(p.features, p.classes)], 1.0, cfg.horizon)

    def draw_split(w_true, n):
        xs = rng.standard_normal((n, p.features))
        logits = xs @ w_true
        if cfg.noise_std > 0:
            logits = logits + cfg.noise_std * rng.standard_normal(logits.shape)
        return xs, np.argmax(logits, axis=1)

    oracles = []
    max_row_sq = 0.0
    for t, (w_true,) in enumerate(truth_path, start=1):
        x_tr, y_tr = draw_split(w_true, p.batch_train)
        x_val, y_val = draw_split(w_true, p.batch_val)
        frac = _corruption_fraction(schedule, t)
        n_flip = int(round(frac * p.batch_train))
        if n_flip > 0:
            idx = rng_corrupt.choice(p.batch_train, size=n_flip, replace=False)
            y_tr = y_tr.copy()
            y_tr[idx] = (y_tr[idx] + rng_corrupt.integers(1, p.classes, size=n_flip)) % p.classes
        max_row_sq = max(
            max_row_sq,
            float(np.max((x_tr * x_tr).sum(axis=1))),
            float(np.max((x_val * x_val).sum(axis=1))),
        )
        oracles.append((t, x_tr, y_tr, x_val, y_val))

    # mu_g from the lower edge of the log-weight box; l1 from the softmax
    # curvature bound 0.5 * max ||row||^2 plus the upper reg weight.
    constants = RegularityConstants(
        mu_g=math.exp(p.lam_lo),
        l1=0.5 * max_row_sq + math.exp(p.lam_hi),
    )
    wrapped = [
        HyperOptOracle(
            round_index=t,
            x_tr=x_tr,
            y_tr=y_tr,
            x_val=x_val,
            y_val=y_val,
            classes=p.classes,
            features=p.features,
            constants=constants,
        )
        for t, x_tr, y_tr, x_val, y_val in oracles
    ]
    return Stream(config=cfg, oracles=wrapped, constants=constants)
