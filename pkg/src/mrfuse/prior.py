"""Edge-aware image prior and its proximal smoothing step.

The raw image enters the fusion objective through an edge-weighted
quadratic penalty on the fused mask: 4-neighbor pixel pairs are weighted
by a Gaussian affinity of their intensity difference, so smoothing is
strong inside homogeneous regions and vanishes across image edges.  The
proximal step

    argmin_Y  (beta/2) ||target - Y||^2 + eta * sum_pq w_pq ||Y_p - Y_q||^2

is solved approximately with a fixed number of Jacobi sweeps of the
closed-form per-pixel update, followed by a renormalization onto the
probability simplex.  For this diagonally dominant system each Jacobi
sweep provably does not increase the quadratic objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PriorConfig:
    """Weight and scale of the edge-aware smoothing prior.

    Defaults were tuned on the synthetic benchmark suite.
    """

    eta: float = 2.0
    sigma_edge: float = 0.08
    smoothing_iters: int = 20

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if self.smoothing_iters < 1:
            raise ValueError(f"smoothing_iters must be >= 1, got {self.smoothing_iters}")


def edge_weights(image: np.ndarray, sigma_edge: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian affinities for all 4-neighbor pixel pairs.

    Returns ``(horizontal, vertical)`` weight fields of shapes (H, W-1)
    and (H-1, W): ``exp(-(I_p - I_q)^2 / sigma_edge^2)``, in (0, 1].
    The pair relation is symmetric by construction.
    """
    image = np.asarray(image, dtype=np.float64)
    inv = 1.0 / (sigma_edge * sigma_edge)
    horizontal = np.exp(-((image[:, 1:] - image[:, :-1]) ** 2) * inv)
    vertical = np.exp(-((image[1:, :] - image[:-1, :]) ** 2) * inv)
    return horizontal, vertical


def prior_energy(soft_map: np.ndarray, image: np.ndarray, config: PriorConfig) -> float:
    """Edge-weighted quadratic energy: sum over pairs of w * ||Y_p - Y_q||^2."""
    arr = np.asarray(soft_map, dtype=np.float64)
    wh, wv = edge_weights(image, config.sigma_edge)
    dh = ((arr[:, 1:] - arr[:, :-1]) ** 2).sum(axis=-1)
    dv = ((arr[1:, :] - arr[:-1, :]) ** 2).sum(axis=-1)
    return float((wh * dh).sum() + (wv * dv).sum())


def _weighted_neighbor_sums(
    arr: np.ndarray, wh: np.ndarray, wv: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel weighted sum of neighbor vectors and total neighbor weight."""
    acc = np.zeros_like(arr)
    acc[:, :-1] += wh[..., None] * arr[:, 1:]
    acc[:, 1:] += wh[..., None] * arr[:, :-1]
    acc[:-1, :] += wv[..., None] * arr[1:, :]
    acc[1:, :] += wv[..., None] * arr[:-1, :]
    deg = np.zeros(arr.shape[:2], dtype=np.float64)
    deg[:, :-1] += wh
    deg[:, 1:] += wh
    deg[:-1, :] += wv
    deg[1:, :] += wv
    return acc, deg


def prox_step(
    target: np.ndarray,
    image: np.ndarray,
    beta: float,
    config: PriorConfig,
) -> np.ndarray:
    """Pull ``target`` toward the image's edge structure.

    Runs ``config.smoothing_iters`` Jacobi sweeps of

        Y_p <- (beta * target_p + 2 eta * sum_q w_pq Y_q)
               / (beta + 2 eta * sum_q w_pq)

    then renormalizes each pixel onto the simplex (clip to >= 0, divide
    by the sum).  With eta = 0 the output equals the target exactly.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    arr = np.asarray(target, dtype=np.float64)
    if arr.shape[:2] != np.asarray(image).shape:
        raise ValueError(
            f"shape mismatch: target {arr.shape[:2]} vs image {np.asarray(image).shape}"
        )
    if config.eta == 0.0:
        return arr.copy()
    out = _jacobi(arr, image, beta, config)
    out = np.clip(out, 0.0, None)
    return out / out.sum(axis=-1, keepdims=True)


def _jacobi(
    target: np.ndarray,
    image: np.ndarray,
    beta: float,
    config: PriorConfig,
    energies: list[float] | None = None,
) -> np.ndarray:
    wh, wv = edge_weights(image, config.sigma_edge)
    eta = config.eta
    current = target.copy()
    for _ in range(config.smoothing_iters):
        acc, deg = _weighted_neighbor_sums(current, wh, wv)
        current = (beta * target + 2.0 * eta * acc) / (beta + 2.0 * eta * deg)[..., None]
        if energies is not None:
            energies.append(
                0.5 * beta * float(((target - current) ** 2).sum())
                + eta * prior_energy(current, image, config)
            )
    return current


def prox_sweep_energies(
    target: np.ndarray,
    image: np.ndarray,
    beta: float,
    config: PriorConfig,
) -> list[float]:
    """Quadratic objective after each Jacobi sweep (pre-renormalization).

    Diagnostic used to verify the per-sweep monotonicity guarantee; the
    first entry is the objective at the target itself.
    """
    arr = np.asarray(target, dtype=np.float64)
    energies: list[float] = [config.eta * prior_energy(arr, image, config)]
    _jacobi(arr, image, beta, config, energies=energies)
    return energies
