import io
import json

import numpy as np
import pytest

from mortgp import (
    ConstantNoise,
    DeltaMethodNoise,
    KernelFamily,
    KernelHyperparams,
    MeanBasis,
    fit_gls,
    load_model,
    predict,
    save_model,
)
from mortgp.serialize import model_from_dict, model_to_dict

from conftest import table_from_surface

SQEXP = KernelFamily.SQUARED_EXPONENTIAL


def fitted_model(noise=None, basis=MeanBasis.LINEAR):
    table = table_from_surface(range(55, 70), range(2000, 2011), lambda a, y: -5.0 + 0.04 * a - 0.01 * (y - 2000))
    hp = KernelHyperparams(theta_ag=7.0, theta_yr=7.0, eta_sq=0.3, sigma_sq=2e-4)
    return fit_gls(table, SQEXP, hp, noise=noise, basis=basis)


class TestRoundTrip:
    def test_predictions_identical_after_reload(self, tmp_path):
        gp = fitted_model()
        path = tmp_path / "model.json"
        save_model(gp, path)
        loaded = load_model(path)
        probes = np.array([[57.5, 2005.0], [66.0, 2013.0]])
        a = predict(gp, probes, want_covariance=True)
        b = predict(loaded, probes, want_covariance=True)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.covariance, b.covariance)

    def test_stream_round_trip(self):
        gp = fitted_model(basis=None)
        buf = io.StringIO()
        save_model(gp, buf)
        loaded = load_model(io.StringIO(buf.getvalue()))
        assert loaded.basis is None
        np.testing.assert_array_equal(loaded.y, gp.y)

    def test_delta_noise_round_trip(self):
        gp = fitted_model(noise=DeltaMethodNoise(overdispersion=2.0))
        loaded = model_from_dict(model_to_dict(gp))
        assert isinstance(loaded.noise, DeltaMethodNoise)
        assert loaded.noise.overdispersion == 2.0
        np.testing.assert_array_equal(loaded.noise_diag, gp.noise_diag)

    def test_constant_noise_round_trip(self):
        gp = fitted_model(noise=ConstantNoise(5e-4))
        loaded = model_from_dict(model_to_dict(gp))
        assert loaded.noise == ConstantNoise(5e-4)

    def test_schema_fields_present(self):
        payload = model_to_dict(fitted_model())
        for key in ("schema_version", "family", "hyperparams", "noise", "basis", "beta", "inputs", "y", "noise_diag"):
            assert key in payload
        json.dumps(payload)  # JSON-serializable

    def test_unknown_schema_version_rejected(self):
        payload = model_to_dict(fitted_model())
        payload["schema_version"] = 99
        with pytest.raises(ValueError, match="schema version"):
            model_from_dict(payload)

    def test_tampered_beta_warns(self):
        payload = model_to_dict(fitted_model())
        payload["beta"] = [0.0, 0.0, 0.0]
        with pytest.warns(UserWarning, match="stored coefficients"):
            model_from_dict(payload)
