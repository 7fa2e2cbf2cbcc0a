"""Forecast evaluation: RMSE overall and per lead time, in normalized units.

rmse_overall is the pooled form: squared residuals from every pixel of every
predicted frame of every sample are averaged before the root. The mean of
per-sample RMSEs is reported alongside because the two differ in general.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError
from .model import ModelParams, _arch_to_dict, predict


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Root of the mean squared residual over all elements."""
    if pred.shape != truth.shape:
        raise ShapeMismatchError(f"rmse: pred shape {pred.shape} != truth shape {truth.shape}")
    diff = pred.astype(np.float64) - truth.astype(np.float64)
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class EvalReport:
    rmse_overall: float
    rmse_per_leadtime: list[float]
    rmse_mean_per_sample: float
    n_samples: int
    config_fingerprint: str
    per_sample: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rmse_overall": self.rmse_overall,
                "rmse_per_leadtime": self.rmse_per_leadtime,
                "rmse_mean_per_sample": self.rmse_mean_per_sample,
                "n_samples": self.n_samples,
                "config_fingerprint": self.config_fingerprint,
            },
            indent=2,
            sort_keys=True,
        )

    def table(self) -> str:
        lines = [
            f"samples:            {self.n_samples}",
            f"rmse (pooled):      {self.rmse_overall:.6f}",
            f"rmse (mean/sample): {self.rmse_mean_per_sample:.6f}",
            "lead  rmse",
        ]
        for k, v in enumerate(self.rmse_per_leadtime):
            lines.append(f"{k + 1:>4}  {v:.6f}")
        return "\n".join(lines)


def config_fingerprint(params: ModelParams) -> str:
    blob = json.dumps(_arch_to_dict(params.arch), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def evaluate(params: ModelParams, samples, predictor=None) -> EvalReport:
    """Pooled RMSE across a dataset plus one RMSE per lead-time position."""
    if not samples:
        raise ValueError("evaluate: dataset is empty")
    predictor = predictor or (lambda x: predict(params, x))
    n_lead = params.arch.output_frames
    sq_sum = 0.0
    count = 0
    lead_sq = np.zeros(n_lead)
    per_sample = []
    for idx, sample in enumerate(samples):
        x = sample.x_array()[None]
        truth = sample.y_array()[None].astype(np.float64)
        pred = np.asarray(predictor(x), dtype=np.float64)
        if pred.shape != truth.shape:
            raise ShapeMismatchError(
                f"evaluate: sample {idx} ({sample.provenance}): prediction shape "
                f"{pred.shape} != truth shape {truth.shape}"
            )
        sq = (pred - truth) ** 2
        sq_sum += sq.sum()
        count += sq.size
        lead_sq += sq.sum(axis=(0, 2, 3, 4))
        per_sample.append(float(np.sqrt(sq.mean())))
    pixels_per_frame = count // (len(samples) * n_lead)
    per_lead = np.sqrt(lead_sq / (len(samples) * pixels_per_frame))
    return EvalReport(
        rmse_overall=float(np.sqrt(sq_sum / count)),
        rmse_per_leadtime=[float(v) for v in per_lead],
        rmse_mean_per_sample=float(np.mean(per_sample)),
        n_samples=len(samples),
        config_fingerprint=config_fingerprint(params),
        per_sample=per_sample,
    )
