"""JSON round-trip for fitted models.

The file stores the training arrays, kernel hyperparameters, noise model,
basis choice, and fitted coefficients under an explicit schema version.
Loading refactorizes, so a loaded model reproduces the original's predictions
exactly.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path
from typing import IO, Union

import numpy as np

from . import gp as gp_mod
from .gp import FittedGP
from .kernels import ConstantNoise, DeltaMethodNoise, KernelFamily, KernelHyperparams
from .means import MeanBasis

SCHEMA_VERSION = 1


def _noise_to_json(noise) -> dict:
    if isinstance(noise, ConstantNoise):
        return {"kind": "constant", "sigma_sq": noise.sigma_sq}
    if isinstance(noise, DeltaMethodNoise):
        return {"kind": "delta_method", "overdispersion": noise.overdispersion}
    raise TypeError(f"unknown noise model {noise!r}")


def _noise_from_json(obj: dict):
    if obj["kind"] == "constant":
        return ConstantNoise(obj["sigma_sq"])
    if obj["kind"] == "delta_method":
        return DeltaMethodNoise(obj["overdispersion"])
    raise ValueError(f"unknown noise kind {obj['kind']!r}")


def model_to_dict(gp: FittedGP) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "family": gp.family.value,
        "hyperparams": {
            "theta_ag": gp.hp.theta_ag,
            "theta_yr": gp.hp.theta_yr,
            "eta_sq": gp.hp.eta_sq,
            "sigma_sq": gp.hp.sigma_sq,
        },
        "noise": _noise_to_json(gp.noise),
        "basis": gp.basis.value if gp.basis is not None else None,
        "beta": gp.beta.tolist(),
        "inputs": gp.x.tolist(),
        "y": gp.y.tolist(),
        "noise_diag": gp.noise_diag.tolist(),
        "log_likelihood": gp.log_likelihood,
    }


def model_from_dict(obj: dict) -> FittedGP:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {version!r}")
    hp = KernelHyperparams(**obj["hyperparams"])
    family = KernelFamily(obj["family"])
    basis = MeanBasis(obj["basis"]) if obj["basis"] is not None else None
    noise = _noise_from_json(obj["noise"])
    gp = gp_mod.fit_gls_xy(
        np.asarray(obj["inputs"], dtype=float),
        np.asarray(obj["y"], dtype=float),
        family,
        hp,
        basis=basis,
        noise=noise,
        noise_diag=np.asarray(obj["noise_diag"], dtype=float),
    )
    stored_beta = np.asarray(obj["beta"], dtype=float)
    if stored_beta.size and not np.allclose(stored_beta, gp.beta, rtol=1e-6, atol=1e-10):
        warnings.warn("stored coefficients disagree with the refit; using recomputed values", stacklevel=2)
    return gp


def save_model(gp: FittedGP, target: Union[str, Path, IO[str]]) -> None:
    payload = json.dumps(model_to_dict(gp), indent=2, sort_keys=True)
    if isinstance(target, (str, Path)):
        Path(target).write_text(payload + "\n")
    else:
        target.write(payload + "\n")


def load_model(source: Union[str, Path, IO[str]]) -> FittedGP:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    return model_from_dict(json.loads(text))
