"""Loss family for matching under noisy correspondence.

All losses report their value together with the exact gradient with respect
to every entry of the batch similarity matrix. The robust complementary loss
supervises through negative pairs (tan of off-diagonal matching
probabilities, normalized by a tan-sum raised to a regulatory exponent q);
the active loss is a weighted positive log-likelihood; the combined loss
couples them with q recast from the soft correspondence label. Triplet
baselines with hard negatives are included for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matching import EncoderParams, SimilarityContext, encode, encode_backward, similarity_matrix


@dataclass
class LossEvaluation:
    """Scalar loss and its gradient with respect to the similarity matrix."""

    value: float
    grad_s: np.ndarray


@dataclass(frozen=True)
class LossConfig:
    """Knobs of the combined active/complementary objective."""

    temperature: float = 0.05
    comp_weight: float = 5.0  # scale on the complementary term

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.comp_weight < 0:
            raise ValueError(f"comp_weight must be >= 0, got {self.comp_weight}")


def complementary_term(p: np.ndarray, positive: int, q: float) -> float:
    """Sum of tan(p_j) over j != positive, divided by (sum_j tan(p_j))**q.

    ``p`` is a probability vector; this is the one-direction building block
    of the complementary loss and of the risk computations.
    """
    t = np.tan(p)
    total = t.sum()
    return float((total - t[positive]) / total**q)


def _comp_value_grad_p(p: np.ndarray, positive: int, q: float):
    """Value of :func:`complementary_term` and its gradient w.r.t. ``p``."""
    t = np.tan(p)
    total = t.sum()
    num = total - t[positive]
    value = num / total**q
    # d/dt_j: every coordinate feeds the normalizer; j != positive also feeds
    # the numerator. sec^2 = 1 + tan^2 converts to d/dp_j.
    g = np.full_like(p, total**-q)
    g[positive] = 0.0
    g -= q * num * total ** (-q - 1.0)
    g *= 1.0 + t**2
    return float(value), g


def _softmax_backward(p: np.ndarray, grad_p: np.ndarray, tau: float) -> np.ndarray:
    """Gradient w.r.t. the logits row s/tau given grad w.r.t. p = softmax."""
    return p * (grad_p - grad_p @ p) / tau


def complementary_loss(ctx: SimilarityContext, i: int, q: float) -> LossEvaluation:
    """Robust complementary loss of pair i, both retrieval directions.

    q in [0, 1] regulates the tan-sum normalizer: q=0 is the plain
    complementary contrastive loss, q=1 the fully noise-tolerant form.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    k = ctx.k
    grad = np.zeros((k, k))

    row = ctx.p_row[i, :]
    v_row, g_row = _comp_value_grad_p(row, i, q)
    grad[i, :] += _softmax_backward(row, g_row, ctx.tau)

    col = ctx.p_col[:, i]
    v_col, g_col = _comp_value_grad_p(col, i, q)
    grad[:, i] += _softmax_backward(col, g_col, ctx.tau)

    return LossEvaluation(value=v_row + v_col, grad_s=grad)


def active_loss(ctx: SimilarityContext, i: int, y_hat: float) -> LossEvaluation:
    """Weighted positive-pair log-likelihood, -y_hat (log p_row_ii + log p_col_ii)."""
    if not 0.0 <= y_hat <= 1.0:
        raise ValueError(f"y_hat must be in [0, 1], got {y_hat}")
    k = ctx.k
    if y_hat == 0.0:
        return LossEvaluation(value=0.0, grad_s=np.zeros((k, k)))
    p_ii = ctx.p_row[i, i]
    p_cc = ctx.p_col[i, i]
    value = -y_hat * (np.log(p_ii) + np.log(p_cc))
    grad = np.zeros((k, k))
    grad[i, :] += y_hat * ctx.p_row[i, :] / ctx.tau
    grad[i, i] -= y_hat / ctx.tau
    grad[:, i] += y_hat * ctx.p_col[:, i] / ctx.tau
    grad[i, i] -= y_hat / ctx.tau
    return LossEvaluation(value=float(value), grad_s=grad)


def active_complementary_loss(
    ctx: SimilarityContext, i: int, y_hat: float, cfg: LossConfig
) -> LossEvaluation:
    """Combined loss for pair i: active term plus weighted complementary term.

    The complementary exponent is recast from the soft label, q = 1 - y_hat,
    so unconvincing pairs lean on the noise-tolerant indirect loss while
    convincing pairs get direct supervision.
    """
    cfg.validate()
    act = active_loss(ctx, i, y_hat)
    comp = complementary_loss(ctx, i, 1.0 - y_hat)
    return LossEvaluation(
        value=act.value + cfg.comp_weight * comp.value,
        grad_s=act.grad_s + cfg.comp_weight * comp.grad_s,
    )


def _as_label_vector(values, k: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(k, float(arr))
    if arr.shape != (k,):
        raise ValueError(f"expected {k} {name} values, got shape {arr.shape}")
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def batch_complementary(ctx: SimilarityContext, q) -> LossEvaluation:
    """Mean complementary loss over the K diagonal pairs, vectorized.

    ``q`` may be a scalar or one exponent per pair.
    """
    k = ctx.k
    q = _as_label_vector(q, k, "q")
    p_r = ctx.p_row
    p_c = ctx.p_col
    t_r = np.tan(p_r)
    t_c = np.tan(p_c)
    diag = np.arange(k)

    # Image-to-text: row i with positive i.
    tot_r = t_r.sum(axis=1)  # (k,)
    num_r = tot_r - t_r[diag, diag]
    pow_r = tot_r**-q
    v_row = num_r * pow_r
    g_row = np.broadcast_to(pow_r[:, None], (k, k)).copy()
    g_row[diag, diag] = 0.0
    g_row -= (q * num_r * pow_r / tot_r)[:, None]
    g_row *= 1.0 + t_r**2
    grad = p_r * (g_row - np.sum(g_row * p_r, axis=1, keepdims=True)) / ctx.tau

    # Text-to-image: column i with positive i.
    tot_c = t_c.sum(axis=0)  # (k,)
    num_c = tot_c - t_c[diag, diag]
    pow_c = tot_c**-q
    v_col = num_c * pow_c
    g_col = np.broadcast_to(pow_c[None, :], (k, k)).copy()
    g_col[diag, diag] = 0.0
    g_col -= (q * num_c * pow_c / tot_c)[None, :]
    g_col *= 1.0 + t_c**2
    grad += p_c * (g_col - np.sum(g_col * p_c, axis=0, keepdims=True)) / ctx.tau

    return LossEvaluation(
        value=float(np.mean(v_row + v_col)), grad_s=grad / k
    )


def batch_active(ctx: SimilarityContext, y_hat) -> LossEvaluation:
    """Mean active loss over the K diagonal pairs, vectorized."""
    k = ctx.k
    y_hat = _as_label_vector(y_hat, k, "y_hat")
    diag = np.arange(k)
    p_r = ctx.p_row
    p_c = ctx.p_col
    values = -y_hat * (np.log(p_r[diag, diag]) + np.log(p_c[diag, diag]))
    grad = y_hat[:, None] * p_r / ctx.tau
    grad += y_hat[None, :] * p_c / ctx.tau
    grad[diag, diag] -= 2.0 * y_hat / ctx.tau
    return LossEvaluation(value=float(np.mean(values)), grad_s=grad / k)


def batch_loss(ctx: SimilarityContext, y_hat: np.ndarray, cfg: LossConfig) -> LossEvaluation:
    """Mean combined loss over the K diagonal pairs of the batch.

    Vectorized over pairs; matches the per-pair sum-then-divide reference to
    floating-point roundoff.
    """
    cfg.validate()
    y_hat = _as_label_vector(y_hat, ctx.k, "y_hat")
    act = batch_active(ctx, y_hat)
    comp = batch_complementary(ctx, 1.0 - y_hat)
    return LossEvaluation(
        value=act.value + cfg.comp_weight * comp.value,
        grad_s=act.grad_s + cfg.comp_weight * comp.grad_s,
    )


def _hinge_pair(s: np.ndarray, i: int, margin: float) -> LossEvaluation:
    """Two hinges for pair i against its hardest in-batch negatives."""
    k = s.shape[0]
    grad = np.zeros((k, k))
    value = 0.0
    off = np.arange(k) != i

    j_row = int(np.flatnonzero(off)[np.argmax(s[i, off])])  # argmax picks lowest index on ties
    h_row = margin - s[i, i] + s[i, j_row]
    if h_row > 0.0:
        value += h_row
        grad[i, i] -= 1.0
        grad[i, j_row] += 1.0

    j_col = int(np.flatnonzero(off)[np.argmax(s[off, i])])
    h_col = margin - s[i, i] + s[j_col, i]
    if h_col > 0.0:
        value += h_col
        grad[i, i] -= 1.0
        grad[j_col, i] += 1.0

    return LossEvaluation(value=float(value), grad_s=grad)


def triplet_hard_negative(s: np.ndarray, i: int, margin: float = 0.2) -> LossEvaluation:
    """Triplet ranking loss with the hardest in-batch negatives.

    Subgradient convention: an exactly satisfied hinge contributes zero
    gradient; argmax ties go to the lowest index.
    """
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    if s.shape[0] < 2:
        raise ValueError("need at least 2 pairs for a negative")
    return _hinge_pair(np.asarray(s, dtype=np.float64), i, margin)


def soft_margin_triplet(
    s: np.ndarray, i: int, y_hat: float, margin: float = 0.2, curve: float = 10.0
) -> LossEvaluation:
    """Hard-negative triplet loss with margin rescaled by the soft label.

    The effective margin is (curve**y_hat - 1) / (curve - 1) * margin, so a
    pair believed clean keeps the full margin and a pair believed noisy gets
    margin zero.
    """
    if curve <= 1:
        raise ValueError(f"curve must be > 1, got {curve}")
    if not 0.0 <= y_hat <= 1.0:
        raise ValueError(f"y_hat must be in [0, 1], got {y_hat}")
    if s.shape[0] < 2:
        raise ValueError("need at least 2 pairs for a negative")
    soft = (curve**y_hat - 1.0) / (curve - 1.0) * margin
    return _hinge_pair(np.asarray(s, dtype=np.float64), i, soft)


def soft_margins(y_hat: np.ndarray, margin: float = 0.2, curve: float = 10.0) -> np.ndarray:
    """Per-pair effective margins (curve**y - 1) / (curve - 1) * margin."""
    if curve <= 1:
        raise ValueError(f"curve must be > 1, got {curve}")
    y_hat = np.asarray(y_hat, dtype=np.float64)
    return (curve**y_hat - 1.0) / (curve - 1.0) * margin


def batch_triplet(s: np.ndarray, margins) -> LossEvaluation:
    """Mean hard-negative triplet loss over all batch pairs, vectorized.

    ``margins`` may be a scalar or one margin per pair; matches the per-pair
    :func:`triplet_hard_negative` / :func:`soft_margin_triplet` convention.
    """
    s = np.asarray(s, dtype=np.float64)
    k = s.shape[0]
    if k < 2:
        raise ValueError("need at least 2 pairs for a negative")
    margins = np.broadcast_to(np.asarray(margins, dtype=np.float64), (k,))
    diag = np.arange(k)
    masked = s.copy()
    masked[diag, diag] = -np.inf

    j_row = np.argmax(masked, axis=1)
    h_row = margins - s[diag, diag] + masked[diag, j_row]
    j_col = np.argmax(masked, axis=0)
    h_col = margins - s[diag, diag] + masked[j_col, diag]

    grad = np.zeros((k, k))
    act_r = h_row > 0.0
    grad[diag[act_r], j_row[act_r]] += 1.0
    np.add.at(grad, (diag[act_r], diag[act_r]), -1.0)
    act_c = h_col > 0.0
    grad[j_col[act_c], diag[act_c]] += 1.0
    np.add.at(grad, (diag[act_c], diag[act_c]), -1.0)

    value = float(np.mean(np.maximum(h_row, 0.0) + np.maximum(h_col, 0.0)))
    return LossEvaluation(value=value, grad_s=grad / k)


@dataclass
class GradcheckReport:
    """Outcome of comparing an analytic gradient to central differences."""

    max_rel_err: float
    worst_entry: tuple
    passed: bool


def finite_difference_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.ravel()
    xp = x.astype(np.float64).copy()
    for idx in range(xp.size):
        orig = xp.flat[idx]
        xp.flat[idx] = orig + h
        f_plus = fn(xp)
        xp.flat[idx] = orig - h
        f_minus = fn(xp)
        xp.flat[idx] = orig
        flat[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def gradcheck(loss_fn, s: np.ndarray, h: float = 1e-6, tol: float = 1e-6) -> GradcheckReport:
    """Compare a loss's analytic grad_s against central finite differences.

    ``loss_fn`` maps a similarity matrix to a :class:`LossEvaluation`.
    Relative error uses max(|analytic|, |numeric|, 1) as denominator so that
    flat regions (hinge slack) compare absolutely.
    """
    analytic = loss_fn(s).grad_s
    numeric = finite_difference_grad(lambda m: loss_fn(m).value, s, h)
    errs = np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), 1.0
    )
    worst = np.unravel_index(int(np.argmax(errs)), errs.shape)
    worst_err = float(errs[worst])
    return GradcheckReport(
        max_rel_err=worst_err,
        worst_entry=tuple(int(w) for w in worst),
        passed=worst_err <= tol,
    )


def gradcheck_encoder(
    loss_fn, params, images: np.ndarray, texts: np.ndarray, h: float = 1e-6, tol: float = 1e-5
) -> GradcheckReport:
    """Check the full gradient chain through both encoder weight matrices.

    ``loss_fn`` maps a similarity matrix to a :class:`LossEvaluation`; the
    analytic side chains its grad_s through the cosine similarity and the
    normalized linear towers, the numeric side perturbs every weight entry.
    """

    def forward(w_v, w_t):
        img, txt = encode(EncoderParams(w_v, w_t), images, texts)
        return loss_fn(similarity_matrix(img, txt))

    analytic_v, analytic_t = encode_backward(
        params, images, texts, forward(params.w_v, params.w_t).grad_s
    )
    numeric_v = finite_difference_grad(lambda w: forward(w, params.w_t).value, params.w_v, h)
    numeric_t = finite_difference_grad(lambda w: forward(params.w_v, w).value, params.w_t, h)

    worst_err = 0.0
    worst_entry = ("w_v", 0, 0)
    for name, analytic, numeric in (("w_v", analytic_v, numeric_v), ("w_t", analytic_t, numeric_t)):
        errs = np.abs(analytic - numeric) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(numeric)), 1.0
        )
        idx = np.unravel_index(int(np.argmax(errs)), errs.shape)
        if float(errs[idx]) > worst_err:
            worst_err = float(errs[idx])
            worst_entry = (name,) + tuple(int(w) for w in idx)
    return GradcheckReport(max_rel_err=worst_err, worst_entry=worst_entry, passed=worst_err <= tol)
