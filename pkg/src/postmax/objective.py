"""Training objective, noise-bias terms, corrections, and exact oracles.

The objective for a batch of network outputs T (one row per sample, one
column per class) and labels y is

    mean_n [ T[n, y_n] - sum_i f*(T[n, i]) ]

and is maximized.  At the population optimum, (f*)'(T) equals the class
posterior.  Under uniform off-diagonal label noise the noisy-data value
of this objective decomposes into a scaled clean value plus a bias that
depends only on the flip rates; subtracting an estimate of that bias
during training makes the noisy maximizer coincide with the clean one.

The per-sample gradients here are derived analytically and validated
against centered finite differences in the test suite rather than
trusted.  DiscreteJoint supports exact (closed-sum) expectations on
finite domains, which is what the identity oracles are built on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from postmax.divergence import (
    DivergenceSpec,
    _as_spec,
    _check_in_domain,
    conj_prime,
    conj_second,
    optimal_T_from_posterior,
)
from postmax.noise import NoiseParams, TransitionMatrix

POSTERIOR_FLOOR = 1e-12  # degenerate posteriors are floored here by oracles

_CORRECTIONS = ("none", "objective", "posterior")
_HEADS = ("raw_t", "simplex")


@dataclass(frozen=True)
class ObjectiveConfig:
    """What to train: divergence, correction mode, and output head."""

    divergence: str
    correction: str = "none"
    noise: Optional[NoiseParams] = None
    head: str = "simplex"

    def __post_init__(self):
        _as_spec(self.divergence)
        if self.correction not in _CORRECTIONS:
            raise ValueError(f"correction must be one of {_CORRECTIONS}")
        if self.head not in _HEADS:
            raise ValueError(f"head must be one of {_HEADS}")
        if self.correction != "none":
            if self.noise is None:
                raise ValueError("a correction mode requires noise parameters")
            if self.noise.kind not in ("symmetric", "uniform_offdiag"):
                raise ValueError(
                    "corrections are defined only for symmetric or "
                    "uniform off-diagonal noise"
                )


@dataclass(frozen=True)
class DiscreteJoint:
    """Joint distribution on M abstract points and K classes.

    pmf[m, j] is the probability of pair (x_m, y=j).  Expectations over
    such a joint are finite sums, so objective identities can be checked
    without sampling error.
    """

    pmf: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pmf, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 2:
            raise ValueError("pmf must be an M x K matrix with K >= 2")
        if np.any(arr < 0.0):
            raise ValueError("pmf entries must be nonnegative")
        if abs(arr.sum() - 1.0) > 1e-12:
            raise ValueError("pmf must sum to 1 within 1e-12")
        if np.any(arr.sum(axis=1) <= 0.0):
            raise ValueError("every point must carry positive probability")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pmf", arr)

    @property
    def m(self) -> int:
        return self.pmf.shape[0]

    @property
    def k(self) -> int:
        return self.pmf.shape[1]

    @property
    def p_x(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def posterior(self) -> np.ndarray:
        return self.pmf / self.p_x[:, None]


def _check_T(spec: DivergenceSpec, T: np.ndarray, expect_rows: bool = True) -> np.ndarray:
    arr = np.asarray(T, dtype=float)
    if expect_rows and arr.ndim != 2:
        raise ValueError("network outputs must form an N x K matrix")
    _check_in_domain(spec, arr)
    return arr


def _check_labels(labels, n: int, k: int) -> np.ndarray:
    labs = np.asarray(labels)
    if labs.ndim != 1 or labs.shape[0] != n:
        raise ValueError("labels must be one integer per sample")
    labs = labs.astype(np.int64)
    if np.any(labs < 0) or np.any(labs >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    return labs


def _check_rates(e, k: int) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or e.shape[0] != k:
        raise ValueError(f"flip rates must be a length-{k} vector")
    if np.any(e < 0.0) or e.sum() >= 1.0:
        raise ValueError("flip rates must be nonnegative and sum to less than 1")
    return e


def jf_batch(spec, T, labels) -> float:
    """Sample mean of T at the label minus the summed conjugate of T."""
    spec = _as_spec(spec)
    T = _check_T(spec, T)
    labels = _check_labels(labels, T.shape[0], T.shape[1])
    n = np.arange(T.shape[0])
    return float(np.mean(T[n, labels] - spec.conj(T).sum(axis=1)))


def jf_grad_sample(spec, T_row, label) -> np.ndarray:
    """Ascent gradient of one sample's objective term in T."""
    spec = _as_spec(spec)
    T_row = np.asarray(T_row, dtype=float)
    _check_in_domain(spec, T_row)
    label = int(label)
    if label < 0 or label >= T_row.shape[0]:
        raise ValueError("label out of range")
    grad = -spec.conj_prime(T_row)
    grad[label] += 1.0
    return grad


def jf_grad_batch(spec, T, labels) -> np.ndarray:
    """Per-sample ascent gradients, one row per sample."""
    spec = _as_spec(spec)
    T = _check_T(spec, T)
    labels = _check_labels(labels, T.shape[0], T.shape[1])
    grad = -spec.conj_prime(T)
    grad[np.arange(T.shape[0]), labels] += 1.0
    return grad


def bias_binary(spec, T, e0: float, e1: float) -> float:
    """Noise-induced bias of the two-class objective for flip rates e0, e1."""
    e = _check_rates([e0, e1], 2)
    spec = _as_spec(spec)
    T = _check_T(spec, T)
    if T.shape[1] != 2:
        raise ValueError("binary bias needs two output columns")
    per_sample = T @ e - e.sum() * spec.conj(T).sum(axis=1)
    return float(np.mean(per_sample))


def bias_multiclass(spec, T, e) -> float:
    """Noise-induced bias of the objective under per-class flip-in rates e."""
    spec = _as_spec(spec)
    T = _check_T(spec, T)
    e = _check_rates(e, T.shape[1])
    per_sample = T @ e - e.sum() * spec.conj(T).sum(axis=1)
    return float(np.mean(per_sample))


def corrected_jf_batch(spec, T, labels, e) -> float:
    """Objective on noisy labels minus the estimated bias, same batch."""
    return jf_batch(spec, T, labels) - bias_multiclass(spec, T, e)


def corrected_grad_sample(spec, T_row, label, e) -> np.ndarray:
    """Ascent gradient of one sample's bias-corrected objective term."""
    spec = _as_spec(spec)
    T_row = np.asarray(T_row, dtype=float)
    e = _check_rates(e, T_row.shape[0])
    cp = conj_prime(spec, T_row)
    grad = jf_grad_sample(spec, T_row, label)
    return grad - (e - e.sum() * cp)


def corrected_grad_batch(spec, T, labels, e) -> np.ndarray:
    """Per-sample gradients of the bias-corrected objective."""
    spec = _as_spec(spec)
    T = _check_T(spec, T)
    e = _check_rates(e, T.shape[1])
    grad = jf_grad_batch(spec, T, labels)
    return grad - (e[None, :] - e.sum() * spec.conj_prime(T))


def active_passive_split(spec, T_row, label) -> tuple[float, float]:
    """Split one sample's objective term into label-only and rest-only parts.

    The first component depends only on the output at the label, the
    second only on the outputs at the other classes, and they sum to the
    sample's objective term exactly.
    """
    spec = _as_spec(spec)
    T_row = np.asarray(T_row, dtype=float)
    _check_in_domain(spec, T_row)
    label = int(label)
    if label < 0 or label >= T_row.shape[0]:
        raise ValueError("label out of range")
    conj_vals = spec.conj(T_row)
    active = float(T_row[label] - conj_vals[label])
    others = np.delete(conj_vals, label)  # never touches the label output
    passive = float(-others.sum())
    return active, passive


def _check_simplex_row(D_row, require_simplex: bool) -> np.ndarray:
    D = np.asarray(D_row, dtype=float)
    if D.ndim != 1 or D.shape[0] < 2:
        raise ValueError("expected one simplex row of length K >= 2")
    if np.any(D < 0.0):
        raise ValueError("simplex components must be nonnegative")
    if require_simplex and abs(D.sum() - 1.0) > 1e-9:
        raise ValueError("row must sum to 1 within 1e-9")
    return D


def jf_simplex_kl(D_row, label) -> float:
    """KL objective of one sample under a simplex-valued head.

    Equals log of the label's probability minus one, i.e. the negative
    cross-entropy minus one; the raw substitution T = log(D)+1 gives a
    value one unit higher, a constant that never affects maximization.
    """
    D = _check_simplex_row(D_row, require_simplex=True)
    label = int(label)
    return float(np.log(D[label]) - 1.0)


def jf_simplex_gan(D_row, label) -> float:
    """GAN objective of one sample expressed in the simplex variable."""
    D = _check_simplex_row(D_row, require_simplex=False)
    if np.any(D <= 0.0):
        raise ValueError("components must be strictly positive")
    label = int(label)
    return float(np.log(D[label] / (D[label] + 1.0)) - np.log1p(D).sum())


def jf_simplex_sl(D_row, label) -> float:
    """SL objective of one sample expressed in the simplex variable."""
    D = _check_simplex_row(D_row, require_simplex=False)
    if np.any(D <= 0.0):
        raise ValueError("components must be strictly positive")
    label = int(label)
    inv = 1.0 / (D + 1.0)
    return float(-inv[label] + np.sum(-inv - np.log1p(D)))


def cross_entropy(D_row, label) -> float:
    """Reference cross-entropy of one simplex row, for equivalence checks."""
    D = _check_simplex_row(D_row, require_simplex=True)
    return float(-np.log(D[int(label)]))


def cross_entropy_logit_grad(D_row, label) -> np.ndarray:
    """Gradient of the cross-entropy w.r.t. pre-softmax logits."""
    D = _check_simplex_row(D_row, require_simplex=True)
    grad = D.copy()
    grad[int(label)] -= 1.0
    return grad


def jf_simplex_kl_logit_grad(D_row, label) -> np.ndarray:
    """Gradient of jf_simplex_kl w.r.t. pre-softmax logits.

    Derived through the generic chain dJ/dD -> softmax, independently of
    the cross-entropy shortcut, so the two can be compared.
    """
    D = _check_simplex_row(D_row, require_simplex=True)
    label = int(label)
    g = np.zeros_like(D)
    g[label] = 1.0 / D[label]  # dJ/dD
    return D * (g - np.dot(g, D))


def jf_simplex_grad_D(div_id, D_row, label) -> np.ndarray:
    """Gradient of the per-sample simplex objective w.r.t. D itself."""
    D = _check_simplex_row(D_row, require_simplex=False)
    if np.any(D <= 0.0):
        raise ValueError("components must be strictly positive")
    label = int(label)
    if div_id == "kl":
        grad = np.zeros_like(D)
        grad[label] = 1.0 / D[label]
        return grad
    if div_id == "gan":
        grad = -1.0 / (D + 1.0)
        grad[label] += 1.0 / D[label] - 1.0 / (D[label] + 1.0)
        return grad
    if div_id == "sl":
        inv = 1.0 / (D + 1.0)
        grad = inv * inv - inv
        grad[label] += inv[label] * inv[label]
        return grad
    raise ValueError(f"unknown divergence id {div_id!r}")


def generator_curvature(spec, u):
    """Second derivative of the generator at u, via the conjugate.

    The conjugate's curvature at the matching slope is the reciprocal of
    the generator's, so no separate formula is needed per divergence.
    """
    spec = _as_spec(spec)
    t = optimal_T_from_posterior(spec, u)
    return 1.0 / conj_second(spec, t)


def _check_D_batch(div_id: str, D, simplex_rows: bool = True) -> np.ndarray:
    arr = np.asarray(D, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError("expected an N x K matrix of simplex rows")
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("components must be strictly positive and finite")
    # dropping the constant in the kl form relies on rows summing to 1
    if simplex_rows and div_id == "kl":
        if np.max(np.abs(arr.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("rows must sum to 1 within 1e-9")
    return arr


def jf_simplex_batch(div_id: str, D, labels) -> float:
    """Mean change-of-variable objective over a batch of simplex rows."""
    D = _check_D_batch(div_id, D)
    labels = _check_labels(labels, D.shape[0], D.shape[1])
    n = np.arange(D.shape[0])
    Dy = D[n, labels]
    if div_id == "kl":
        vals = np.log(Dy) - 1.0
    elif div_id == "gan":
        vals = np.log(Dy / (Dy + 1.0)) - np.log1p(D).sum(axis=1)
    elif div_id == "sl":
        inv = 1.0 / (D + 1.0)
        vals = -inv[n, labels] + (-inv - np.log1p(D)).sum(axis=1)
    else:
        raise ValueError(f"unknown divergence id {div_id!r}")
    return float(vals.mean())


def jf_simplex_grad_batch(div_id: str, D, labels) -> np.ndarray:
    """Per-sample gradients of the simplex objective w.r.t. D, stacked."""
    D = _check_D_batch(div_id, D)
    labels = _check_labels(labels, D.shape[0], D.shape[1])
    n = np.arange(D.shape[0])
    if div_id == "kl":
        grad = np.zeros_like(D)
        grad[n, labels] = 1.0 / D[n, labels]
    elif div_id == "gan":
        grad = -1.0 / (D + 1.0)
        Dy = D[n, labels]
        grad[n, labels] += 1.0 / Dy - 1.0 / (Dy + 1.0)
    elif div_id == "sl":
        inv = 1.0 / (D + 1.0)
        grad = inv * inv - inv
        grad[n, labels] += inv[n, labels] ** 2
    else:
        raise ValueError(f"unknown divergence id {div_id!r}")
    return grad


def bias_simplex_batch(div_id: str, D, e) -> float:
    """Mean noise bias over a batch, expressed in the simplex variable."""
    D = _check_D_batch(div_id, D, simplex_rows=False)
    e = _check_rates(e, D.shape[1])
    spec = _as_spec(div_id)
    T = optimal_T_from_posterior(spec, D)
    per_sample = T @ e - e.sum() * spec.conj(T).sum(axis=1)
    return float(per_sample.mean())


def bias_simplex_grad_batch(div_id: str, D, e) -> np.ndarray:
    """Per-sample gradients of the simplex-variable bias w.r.t. D."""
    D = _check_D_batch(div_id, D, simplex_rows=False)
    e = _check_rates(e, D.shape[1])
    return generator_curvature(div_id, D) * (e[None, :] - e.sum() * D)


def jf_simplex_logit_grad_batch(div_id: str, D, labels, e=None) -> np.ndarray:
    """Per-sample ascent gradients w.r.t. pre-softmax logits.

    Folding the softmax jacobian into the gradient cancels every 1/D
    factor, so rows where a class probability has underflowed to exact
    zero still get finite gradients.  Agrees with the factored route
    (gradient in D, then jacobian) on interior rows; subtracts the bias
    gradient when flip-in rates are given.
    """
    spec = _as_spec(div_id)
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[1] < 2:
        raise ValueError("expected an N x K matrix of simplex rows")
    if np.any(D < 0.0) or not np.all(np.isfinite(D)):
        raise ValueError("components must be nonnegative and finite")
    if np.max(np.abs(D.sum(axis=1) - 1.0)) > 1e-6:
        raise ValueError("rows must lie on the simplex")
    labels = _check_labels(labels, D.shape[0], D.shape[1])
    onehot = np.zeros_like(D)
    onehot[np.arange(D.shape[0]), labels] = 1.0
    # s = D * dJ/dD, written so the D factors cancel analytically.
    if spec.id == "kl":
        s = onehot.copy()
    elif spec.id == "gan":
        s = (onehot - D) / (1.0 + D)
    elif spec.id == "sl":
        s = D * (onehot - D) / (1.0 + D) ** 2
    else:
        raise ValueError(f"unknown divergence id {spec.id!r}")
    if e is not None:
        e = _check_rates(e, D.shape[1])
        drift = e[None, :] - e.sum() * D
        # D * f''(D) per divergence, finite on the simplex boundary.
        if spec.id == "kl":
            s -= drift
        elif spec.id == "gan":
            s -= drift / (1.0 + D)
        else:
            s -= D * drift / (1.0 + D) ** 2
    return s - D * s.sum(axis=1, keepdims=True)


def noisy_joint(joint: DiscreteJoint, tm: TransitionMatrix) -> DiscreteJoint:
    """Joint over (x, noisy label) obtained by pushing labels through tm."""
    if joint.k != tm.k:
        raise ValueError("class counts differ")
    return DiscreteJoint(joint.pmf @ tm.entries)


def exact_jf(spec, joint: DiscreteJoint, T_table) -> float:
    """Closed-sum objective value on a finite domain; no sampling."""
    spec = _as_spec(spec)
    T = _check_T(spec, T_table)
    if T.shape != joint.pmf.shape:
        raise ValueError("T table must match the joint's shape")
    return float(np.sum(joint.pmf * T) - np.dot(joint.p_x, spec.conj(T).sum(axis=1)))


def exact_jf_noisy(spec, joint: DiscreteJoint, tm: TransitionMatrix, T_table) -> float:
    """Closed-sum objective value with labels pushed through tm."""
    return exact_jf(spec, noisy_joint(joint, tm), T_table)


def exact_bias(spec, joint: DiscreteJoint, T_table, e) -> float:
    """Closed-sum noise bias on a finite domain, for identity oracles."""
    spec = _as_spec(spec)
    T = _check_T(spec, T_table)
    if T.shape != joint.pmf.shape:
        raise ValueError("T table must match the joint's shape")
    e = _check_rates(e, joint.k)
    per_point = T @ e - e.sum() * spec.conj(T).sum(axis=1)
    return float(np.dot(joint.p_x, per_point))
