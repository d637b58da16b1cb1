"""Targeted universal adversarial perturbation generation.

The core pieces are the one-step targeted gradient attack
(``tfgsm_step``), projection onto Lp balls (``project``), the iterative
generator (``generate_targeted_uap``) and a random-sphere baseline
(``random_uap``). ``TargetedUAP`` wraps the generator as a scikit-learn
transformer: ``fit`` learns the perturbation, ``transform`` applies it.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DegenerateGradientError, FormatError
from .fileio import atomic_write_bytes
from .tensor import lp_norm
from .validation import check_image_batch, check_norm_type, check_tensor, norm_type_str

PERTURBATION_MAGIC = b"UAPP"
PERTURBATION_VERSION = 1

GENERATOR_TARGETED = "targeted-uap"
GENERATOR_RANDOM = "random-sphere"

BUDGET_SLACK = 1e-6


@dataclass
class AttackConfig:
    """Hyperparameters of the iterative targeted-UAP generator."""

    target_class: int
    epsilon: float
    xi: float
    p: object = 2
    max_epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        self.p = check_norm_type(self.p)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.target_class < 0:
            raise ValueError("target_class must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class Perturbation:
    """An image-shaped perturbation with its norm budget metadata."""

    rho: np.ndarray
    p: object
    xi: float
    generator: str
    seed: int = 0

    def __post_init__(self):
        self.p = check_norm_type(self.p)
        if lp_norm(self.rho, self.p) > self.xi * (1 + BUDGET_SLACK):
            raise ValueError("perturbation violates its norm budget")

    def save(self, path):
        save_perturbation(self, path)


@dataclass
class UapRunReport:
    """Per-epoch trajectory of a targeted-UAP generation run."""

    epochs: list = field(default_factory=list)  # (epoch index, r_ts) pairs
    termination: str = "max-iterations"
    images_visited: int = 0
    degenerate_skips: int = 0
    updates: int = 0


def tfgsm_step(network, x, target_class, epsilon, p):
    """One-step targeted perturbation moving against the loss gradient.

    For p=inf the step is -epsilon * sign(g); for p in {1, 2} it is the
    gradient normalized to Lp length epsilon. g is the gradient of the
    cross-entropy toward ``target_class`` with respect to the pixels.
    """
    p = check_norm_type(p)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    g = network.loss_and_input_grad(x, target_class).grad_input
    if p == np.inf:
        return -epsilon * np.sign(g)
    norm = lp_norm(g, p)
    if norm == 0.0:
        raise DegenerateGradientError(
            f"gradient has zero L{norm_type_str(p)} norm; no step direction"
        )
    return -epsilon * g / norm


def _project_l1(v, xi):
    """Euclidean projection onto the L1 ball via simplex soft-thresholding."""
    u = np.abs(v).ravel()
    if u.sum() <= xi:
        return v.copy()
    s = np.sort(u)[::-1]
    css = np.cumsum(s)
    k = np.nonzero(s * np.arange(1, u.size + 1) > (css - xi))[0][-1]
    theta = (css[k] - xi) / (k + 1.0)
    w = np.clip(u - theta, 0.0, None)
    return (np.sign(v.ravel()) * w).reshape(v.shape)


def project(v, p, xi):
    """Nearest point to v (in L2) whose Lp norm is at most xi."""
    p = check_norm_type(p)
    if xi <= 0:
        raise ValueError("xi must be positive")
    v = check_tensor(v, "v", allow_empty=True)
    if p == np.inf:
        return np.clip(v, -xi, xi)
    if p == 2:
        n = lp_norm(v, 2)
        return v if n <= xi else v * (xi / n)
    return _project_l1(v, xi)


def random_uap(shape, p, xi, seed):
    """Random perturbation on the boundary of the Lp sphere of radius xi.

    For p=2 the direction is an isotropic Gaussian, so the result is
    uniform on the sphere. For p=1 and p=inf the vector is drawn from the
    uniform-on-sphere family of that norm and rescaled to the boundary.
    """
    p = check_norm_type(p)
    if xi <= 0:
        raise ValueError("xi must be positive")
    rng = np.random.default_rng(seed)
    if p == 2:
        v = rng.standard_normal(shape)
    elif p == np.inf:
        v = rng.uniform(-1.0, 1.0, size=shape)
    else:
        v = rng.standard_exponential(size=shape) * rng.choice([-1.0, 1.0], size=shape)
    norm = lp_norm(v, p)
    if norm == 0.0:  # astronomically unlikely; retry deterministically
        return random_uap(shape, p, xi, (int(seed) + 1) % 2**63)
    rho = v * (xi / norm)
    return Perturbation(rho=rho, p=p, xi=float(xi), generator=GENERATOR_RANDOM,
                        seed=int(seed))


def generate_targeted_uap(network, X, config, on_update=None):
    """Iteratively fit a targeted UAP on the image set X.

    Starting from zero, each epoch visits X in a fresh seeded random
    order; for every image still not classified into the target, one
    tfgsm step is tried from the perturbed image, and the accumulated
    perturbation is re-projected onto the Lp ball only if that single
    step lands in the target class. Stops when the success rate over X
    reaches 1 or after ``config.max_epochs`` sweeps.

    ``on_update`` (if given) is called with rho after every accepted
    update; used for instrumentation.
    """
    X = check_image_batch(X, network.input_shape)
    if not 0 <= config.target_class < network.n_classes:
        raise ValueError(
            f"target class {config.target_class} out of range [0, {network.n_classes})"
        )
    y, eps, xi, p = config.target_class, config.epsilon, config.xi, config.p
    n = X.shape[0]
    rho = np.zeros(network.input_shape, dtype=np.float64)
    report = UapRunReport()
    r_ts = 0.0
    for epoch in range(config.max_epochs):
        rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), epoch]))
        for i in rng.permutation(n):
            report.images_visited += 1
            x = X[i]
            if network.classify(x + rho) == y:
                continue
            try:
                psi = tfgsm_step(network, x + rho, y, eps, p)
            except DegenerateGradientError:
                report.degenerate_skips += 1
                continue
            x_adv = x + rho + psi
            if network.classify(x_adv) == y:
                rho = project(x_adv - x, p, xi)
                report.updates += 1
                if on_update is not None:
                    on_update(rho)
        r_ts = float(np.mean(network.predict_batch(X + rho) == y))
        report.epochs.append((epoch, r_ts))
        if r_ts >= 1.0:
            report.termination = "success-rate-reached-one"
            break
    else:
        report.termination = "max-iterations"
    perturbation = Perturbation(rho=rho, p=p, xi=float(xi),
                                generator=GENERATOR_TARGETED, seed=int(config.seed))
    return perturbation, report


# -- perturbation file format (UAPP) ----------------------------------------

_P_CODES = {1: 1, 2: 2, np.inf: 255}
_P_FROM_CODE = {1: 1, 2: 2, 255: np.inf}
_GEN_CODES = {GENERATOR_TARGETED: 0, GENERATOR_RANDOM: 1}
_GEN_FROM_CODE = {0: GENERATOR_TARGETED, 1: GENERATOR_RANDOM}


def save_perturbation(perturbation, path, epsilon=0.0):
    """Write the UAPP binary format (atomically)."""
    rho = np.asarray(perturbation.rho)
    blob = bytearray()
    blob += PERTURBATION_MAGIC
    blob += struct.pack("<I", PERTURBATION_VERSION)
    blob += struct.pack("<I", rho.ndim)
    blob += struct.pack(f"<{rho.ndim}I", *rho.shape)
    blob += struct.pack("<B", _P_CODES[perturbation.p])
    blob += struct.pack("<d", float(perturbation.xi))
    blob += struct.pack("<d", float(epsilon))
    blob += struct.pack("<B", _GEN_CODES[perturbation.generator])
    blob += struct.pack("<Q", int(perturbation.seed))
    blob += np.ascontiguousarray(rho, dtype="<f4").tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_perturbation(path):
    """Read a UAPP file; returns (Perturbation, epsilon)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != PERTURBATION_MAGIC:
        raise FormatError(f"not a UAPP file (offset 0): magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != PERTURBATION_VERSION:
        raise FormatError(f"unsupported perturbation format version {version}")
    (ndim,) = struct.unpack_from("<I", raw, 8)
    off = 12
    try:
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        (p_code,) = struct.unpack_from("<B", raw, off)
        off += 1
        xi, epsilon = struct.unpack_from("<dd", raw, off)
        off += 16
        (gen_code,) = struct.unpack_from("<B", raw, off)
        off += 1
        (seed,) = struct.unpack_from("<Q", raw, off)
        off += 8
    except struct.error as exc:
        raise FormatError(f"perturbation file truncated at offset {len(raw)}: {exc}") from exc
    if p_code not in _P_FROM_CODE:
        raise FormatError(f"bad norm-type code {p_code} at offset {12 + 4 * ndim}")
    if gen_code not in _GEN_FROM_CODE:
        raise FormatError(f"bad generator code {gen_code}")
    count = int(np.prod(shape)) if ndim else 1
    if len(raw) != off + 4 * count:
        raise FormatError(
            f"perturbation file has {len(raw)} bytes, expected {off + 4 * count}"
        )
    rho = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
    rho = rho.reshape(shape).astype(np.float64)
    pert = Perturbation(rho=rho, p=_P_FROM_CODE[p_code], xi=float(xi),
                        generator=_GEN_FROM_CODE[gen_code], seed=int(seed))
    return pert, float(epsilon)


# -- sklearn transformer -----------------------------------------------------


class TargetedUAP(TransformerMixin, BaseEstimator):
    """Universal targeted perturbation as a fit/transform estimator.

    ``fit(X)`` runs the iterative generator against ``classifier`` and
    stores the perturbation as ``rho_``; ``transform(X)`` returns the
    perturbed images X + rho. No pixel-range clipping is applied.

    Parameters
    ----------
    classifier : Network
        Trained classifier under attack (immutable during fit).
    target_class : int
    epsilon : float
        Per-step attack strength.
    xi : float
        Lp-norm budget of the perturbation.
    p : 1, 2 or 'inf'
    max_epochs : int
        Cap on sweeps over X.
    random_state : int
        Seeds the per-epoch visiting order.
    """

    def __init__(self, classifier=None, target_class=0, epsilon=0.02,
                 xi=1.0, p=2, max_epochs=10, random_state=0):
        self.classifier = classifier
        self.target_class = target_class
        self.epsilon = epsilon
        self.xi = xi
        self.p = p
        self.max_epochs = max_epochs
        self.random_state = random_state

    def _config(self):
        return AttackConfig(
            target_class=self.target_class, epsilon=self.epsilon, xi=self.xi,
            p=self.p, max_epochs=self.max_epochs, seed=self.random_state,
        )

    def fit(self, X, y=None):
        if self.classifier is None:
            raise ValueError("TargetedUAP requires a trained classifier")
        self.perturbation_, self.report_ = generate_targeted_uap(
            self.classifier, X, self._config()
        )
        self.rho_ = self.perturbation_.rho
        return self

    def transform(self, X):
        X = check_image_batch(X, self.classifier.input_shape)
        return X + self.rho_
