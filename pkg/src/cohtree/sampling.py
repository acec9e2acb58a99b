"""Sample-density advisor for well-resolved transition estimates.

For a grid of boxes with side ``q``, a flow with Lipschitz estimate ``M``
and a time epoch ``T``, initial points spaced closer than

    epsilon = q * exp(-M * T)

cannot straddle more than adjacent image boxes, so each box needs at least
``(q / epsilon)^2`` points (per-axis spacing read in two dimensions).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import AdviceError, FlowSpecError
from .dynamics import velocity

_MAX_EXACT_INT = float(2**53)


@dataclass
class SamplingAdvice:
    """Prescribed sample spacing and per-box point counts."""

    q: float
    M: float
    epoch: float
    epsilon: float
    points_per_box: int
    total_points: int


def estimate_lipschitz(spec, rect, n_samples, seed=0):
    """Sampled maximum spectral norm of the velocity Jacobian.

    Central finite differences with step ``1e-6`` of the domain scale, over
    ``n_samples`` space-time points drawn uniformly from ``rect`` and the
    spec's epoch.  This is a lower bound of the true maximum; callers that
    need a guarantee should apply a safety factor.
    """
    if not spec.is_continuous:
        raise FlowSpecError(f"Lipschitz estimate undefined for kind {spec.kind!r}")
    n_samples = int(n_samples)
    if n_samples < 1:
        raise FlowSpecError(f"need n_samples >= 1, got {n_samples}")

    rng = np.random.default_rng(seed)
    h = 1e-6 * max(rect.width, rect.height)
    # batch the samples over a modest set of time draws so each velocity
    # evaluation is vectorized over many points
    n_times = max(1, min(64, int(math.isqrt(n_samples))))
    n_pts = -(-n_samples // n_times)
    times = spec.t0 + abs(spec.tau) * rng.random(n_times)

    best = 0.0
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    for t in times:
        q = rng.random((n_pts, 2))
        q[:, 0] = (rect.xmin + h) + (rect.width - 2 * h) * q[:, 0]
        q[:, 1] = (rect.ymin + h) + (rect.height - 2 * h) * q[:, 1]
        jxx_jyx = (velocity(spec, q + ex, t) - velocity(spec, q - ex, t)) / (2 * h)
        jxy_jyy = (velocity(spec, q + ey, t) - velocity(spec, q - ey, t)) / (2 * h)
        a = jxx_jyx[:, 0] ** 2 + jxx_jyx[:, 1] ** 2
        c = jxy_jyy[:, 0] ** 2 + jxy_jyy[:, 1] ** 2
        b = jxx_jyx[:, 0] * jxy_jyy[:, 0] + jxx_jyx[:, 1] * jxy_jyy[:, 1]
        smax2 = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
        if not np.all(np.isfinite(smax2)):
            raise FlowSpecError("non-finite velocity Jacobian sample")
        best = max(best, float(np.sqrt(smax2.max())))
    return best


def advise(q, M, epoch, box_count):
    """Fill a :class:`SamplingAdvice` from the exponential spacing bound."""
    if q <= 0 or epoch <= 0 or box_count < 1:
        raise AdviceError(
            f"q, epoch must be positive and box_count >= 1; got "
            f"q={q}, epoch={epoch}, box_count={box_count}"
        )
    if M < 0:
        raise AdviceError(f"Lipschitz estimate must be nonnegative, got M={M}")
    epsilon = q * math.exp(-M * epoch)
    ratio = q / epsilon
    if not math.isfinite(ratio):
        raise AdviceError(
            "sample spacing underflows; use a coarser grid or shorter epoch"
        )
    per_box = ratio * ratio
    if per_box > _MAX_EXACT_INT or per_box * box_count > _MAX_EXACT_INT:
        raise AdviceError(
            f"{per_box:.3e} points per box over {box_count} boxes overflows a "
            "usable budget; use a coarser grid or shorter epoch"
        )
    # ceiling with a relative nudge so that exp/division round-off a few ulps
    # above an integer does not inflate the count
    points_per_box = math.ceil(per_box * (1.0 - 1e-12))
    return SamplingAdvice(
        q=float(q),
        M=float(M),
        epoch=float(epoch),
        epsilon=epsilon,
        points_per_box=points_per_box,
        total_points=points_per_box * int(box_count),
    )
