"""Two-tower linear encoders, cosine similarity, and matching probabilities.

Both modalities are projected by a single linear map and L2-normalized, so
similarities are plain dot products. Matching probabilities are softmax
distributions over a batch: row-wise for the image-to-text direction and
column-wise for text-to-image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_FLOOR = 1e-12  # added to every norm so zero vectors stay finite

DEFAULT_TEMPERATURE = 0.05


@dataclass
class EncoderParams:
    """Linear projection weights for the two towers."""

    w_v: np.ndarray  # (d_v, d)
    w_t: np.ndarray  # (d_t, d)

    @property
    def dim(self) -> int:
        return self.w_v.shape[1]

    def validate(self) -> None:
        if self.w_v.ndim != 2 or self.w_t.ndim != 2:
            raise ValueError("encoder weights must be 2-D")
        if self.w_v.shape[1] != self.w_t.shape[1]:
            raise ValueError(
                f"towers disagree on embedding dim: {self.w_v.shape[1]} vs {self.w_t.shape[1]}"
            )
        if self.w_v.shape[1] < 1:
            raise ValueError("embedding dim must be >= 1")
        if not (np.all(np.isfinite(self.w_v)) and np.all(np.isfinite(self.w_t))):
            raise ValueError("encoder weights contain non-finite entries")

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.w_v.copy(), self.w_t.copy())


@dataclass
class SimilarityContext:
    """A batch similarity matrix with its two matching-probability views.

    ``p_row[i, j]`` is the probability that image i matches text j (softmax
    over row i of S / tau); ``p_col[i, j]`` is the probability that text j
    matches image i (softmax over column j).
    """

    s: np.ndarray  # (k, k) cosine similarities in [-1, 1]
    tau: float
    p_row: np.ndarray  # row-stochastic
    p_col: np.ndarray  # column-stochastic

    @property
    def k(self) -> int:
        return self.s.shape[0]


def normalize_rows(z: np.ndarray) -> np.ndarray:
    """L2-normalize each row with a small floor on the norm."""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / (norms + NORM_FLOOR)


def encode(params: EncoderParams, images: np.ndarray, texts: np.ndarray):
    """Project a batch through both towers and unit-normalize.

    Returns (image embeddings, text embeddings), each with unit rows.
    """
    params.validate()
    if not (np.all(np.isfinite(images)) and np.all(np.isfinite(texts))):
        raise ValueError("encoder inputs contain non-finite entries")
    if images.shape[1] != params.w_v.shape[0] or texts.shape[1] != params.w_t.shape[0]:
        raise ValueError("input dims do not match encoder weights")
    return normalize_rows(images @ params.w_v), normalize_rows(texts @ params.w_t)


def similarity_matrix(img_emb: np.ndarray, txt_emb: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of unit-norm embeddings, clamped to [-1, 1]."""
    return np.clip(img_emb @ txt_emb.T, -1.0, 1.0)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def matching_probs(s: np.ndarray, tau: float):
    """Bidirectional matching probabilities of a similarity matrix.

    Returns (p_row, p_col): softmax of s / tau over rows and over columns.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    logits = s / tau
    return _softmax_rows(logits), _softmax_rows(logits.T).T


def build_context(s: np.ndarray, tau: float) -> SimilarityContext:
    """Validated constructor for :class:`SimilarityContext`."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity matrix contains non-finite entries")
    p_row, p_col = matching_probs(s, tau)
    k = s.shape[0]
    if k >= 2 and (p_row.min() <= 0.0 or p_row.max() >= 1.0 or p_col.min() <= 0.0 or p_col.max() >= 1.0):
        raise ValueError("matching probabilities left (0, 1); similarity matrix is degenerate")
    return SimilarityContext(s=s, tau=tau, p_row=p_row, p_col=p_col)


def context_from_embeddings(
    params: EncoderParams,
    images: np.ndarray,
    texts: np.ndarray,
    tau: float = DEFAULT_TEMPERATURE,
) -> SimilarityContext:
    """Encode a batch and build its similarity context in one step."""
    img_emb, txt_emb = encode(params, images, texts)
    return build_context(similarity_matrix(img_emb, txt_emb), tau)


def init_encoder_params(
    d_v: int, d_t: int, dim: int, seed_seq: np.random.SeedSequence
) -> EncoderParams:
    """Scaled-uniform initialization of both towers from one seed sequence."""
    rng = np.random.default_rng(seed_seq)
    a_v = 1.0 / np.sqrt(d_v)
    a_t = 1.0 / np.sqrt(d_t)
    return EncoderParams(
        w_v=rng.uniform(-a_v, a_v, size=(d_v, dim)),
        w_t=rng.uniform(-a_t, a_t, size=(d_t, dim)),
    )


def _normalize_backward(z: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
    """Backward of row-wise u = z / (||z|| + floor)."""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    denom = norms + NORM_FLOOR
    dot = np.sum(z * grad_u, axis=1, keepdims=True)
    return grad_u / denom - z * dot / (np.maximum(norms, NORM_FLOOR) * denom**2)


def encode_backward(
    params: EncoderParams, images: np.ndarray, texts: np.ndarray, grad_s: np.ndarray
):
    """Chain a similarity-matrix gradient back to the tower weights.

    Recomputes the forward pass (cheap for linear towers) and propagates
    through the dot products and the row normalization. The [-1, 1] clamp on
    similarities is treated as the identity, which is exact whenever no
    entry sits at the boundary.
    """
    z_v = images @ params.w_v
    z_t = texts @ params.w_t
    u = z_v / (np.linalg.norm(z_v, axis=1, keepdims=True) + NORM_FLOOR)
    v = z_t / (np.linalg.norm(z_t, axis=1, keepdims=True) + NORM_FLOOR)
    grad_u = grad_s @ v
    grad_v = grad_s.T @ u
    grad_zv = _normalize_backward(z_v, grad_u)
    grad_zt = _normalize_backward(z_t, grad_v)
    return images.T @ grad_zv, texts.T @ grad_zt
