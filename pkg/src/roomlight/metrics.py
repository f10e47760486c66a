"""Error metrics for paired renders: RMSE, scale-invariant RMSE, PSNR, and
mean RGB angular error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["rmse", "si_rmse", "psnr", "rgb_angular", "MetricReport", "compare"]

PSNR_CAP_DB = 99.0


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def si_rmse(a, b) -> float:
    """RMSE after the best global non-negative rescale of *a* onto *b*.

    The optimal scale has the closed form <a,b>/<a,a>, clamped at zero.
    """
    a, b = _pair(a, b)
    denom = float(np.sum(a * a))
    alpha = max(0.0, float(np.sum(a * b)) / denom) if denom > 0.0 else 0.0
    return float(np.sqrt(np.mean((alpha * a - b) ** 2)))


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB, capped at 99 dB for identical images."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse <= peak * peak * 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return float(10.0 * np.log10(peak * peak / mse))


def rgb_angular(a, b) -> float:
    """Mean angle (degrees) between per-pixel RGB vectors.

    Pixels where either vector is zero are skipped; if nothing remains the
    error is 0 by convention.
    """
    a, b = _pair(a, b)
    a = a.reshape(-1, a.shape[-1])
    b = b.reshape(-1, b.shape[-1])
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 0) & (nb > 0)
    if not np.any(ok):
        return 0.0
    cos = np.einsum("ij,ij->i", a[ok], b[ok]) / (na[ok] * nb[ok])
    ang = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(ang.mean())


@dataclass(frozen=True)
class MetricReport:
    """Aggregate metric values, with optional per-image rows and percentiles."""

    rmse: float
    si_rmse: float
    psnr_db: float
    rgb_angular_deg: float
    per_image: tuple = field(default_factory=tuple)
    percentiles: dict | None = None

    def __post_init__(self) -> None:
        for name in ("rmse", "si_rmse", "psnr_db", "rgb_angular_deg"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")
        if self.si_rmse > self.rmse + 1e-12:
            raise ValueError("si_rmse exceeds rmse")


def compare(a, b) -> MetricReport:
    """All four metrics for one image pair (a = estimate, b = reference)."""
    return MetricReport(
        rmse=rmse(a, b),
        si_rmse=si_rmse(a, b),
        psnr_db=psnr(a, b),
        rgb_angular_deg=rgb_angular(a, b),
    )


def summarize(reports: list[MetricReport], names: list[str] | None = None) -> MetricReport:
    """Mean metrics over image pairs plus 25/50/75th percentile rows."""
    if not reports:
        raise ValueError("no reports to summarize")
    names = names or [str(i) for i in range(len(reports))]
    table = tuple((n, r) for n, r in zip(names, reports))
    fields = ("rmse", "si_rmse", "psnr_db", "rgb_angular_deg")
    vals = {f: np.array([getattr(r, f) for r in reports]) for f in fields}
    pct = {f: {p: float(np.percentile(vals[f], p)) for p in (25, 50, 75)} for f in fields}
    return MetricReport(
        rmse=float(vals["rmse"].mean()),
        si_rmse=float(vals["si_rmse"].mean()),
        psnr_db=float(vals["psnr_db"].mean()),
        rgb_angular_deg=float(vals["rgb_angular_deg"].mean()),
        per_image=table,
        percentiles=pct,
    )
