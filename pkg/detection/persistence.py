"""
Monitor model files
Deterministic JSON documents carrying a format version
"""
import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings

from idd_monitor.exceptions import ConfigError
from mfpca.services import EigenBasis
from transport.measures import EmpiricalMeasure, TangentField
from .serializers import MonitorModelFileSerializer
from .services import MonitorModel

logger = logging.getLogger(__name__)


def model_to_dict(model: MonitorModel) -> dict:
    h_t2, h_spe = model.thresholds
    alpha_t2, alpha_spe = model.alphas
    return {
        'format_version': getattr(settings, 'IDD_MODEL_FORMAT_VERSION', 1),
        'n0': model.n0,
        'alphas': {'t2': alpha_t2, 'spe': alpha_spe},
        'thresholds': {'t2': h_t2, 'spe': h_spe},
        'threshold_method': model.threshold_method,
        'solver': dict(model.solver),
        'barycenter': {
            'support': model.barycenter.support.tolist(),
            'weights': model.barycenter.weights.tolist(),
        },
        'basis': {
            'mean_field': model.basis.mean_field.vectors.tolist(),
            'eigenvalues': model.basis.eigenvalues.tolist(),
            'components': model.basis.components.tolist(),
            'K': model.basis.K,
        },
        'calibration': {
            't2': np.asarray(model.calibration_t2).tolist(),
            'spe': np.asarray(model.calibration_spe).tolist(),
        },
    }


def dumps_model(model: MonitorModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1) + '\n'


def model_from_dict(payload: dict) -> MonitorModel:
    serializer = MonitorModelFileSerializer(data=payload)
    if not serializer.is_valid():
        raise ConfigError(f"Invalid model file: {serializer.errors}")
    data = serializer.validated_data

    supported = getattr(settings, 'IDD_MODEL_FORMAT_VERSION', 1)
    if data['format_version'] > supported:
        raise ConfigError(f"Model format {data['format_version']} is newer than supported version {supported}")

    barycenter = EmpiricalMeasure(data['barycenter']['support'], data['barycenter']['weights'])
    if barycenter.size != data['barycenter']['support'].shape[0]:
        raise ConfigError("Model barycenter contains duplicate or zero-weight atoms")
    basis_data = data['basis']
    basis = EigenBasis(
        mean_field=TangentField(basis_data['mean_field'], barycenter.weights),
        eigenvalues=basis_data['eigenvalues'],
        components=basis_data['components'],
        K=basis_data['K'],
        n0=data['n0'],
    )
    return MonitorModel(
        barycenter=barycenter,
        basis=basis,
        thresholds=(data['thresholds']['t2'], data['thresholds']['spe']),
        alphas=(data['alphas']['t2'], data['alphas']['spe']),
        n0=data['n0'],
        solver=dict(data['solver']),
        threshold_method=data['threshold_method'],
        calibration_t2=data['calibration']['t2'],
        calibration_spe=data['calibration']['spe'],
    )


def save_model(model: MonitorModel, path) -> Path:
    path = Path(path)
    path.write_text(dumps_model(model), encoding='utf-8')
    logger.info(f"Saved monitor model to {path}")
    return path


def load_model(path) -> MonitorModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise ConfigError(f"Cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(payload)
