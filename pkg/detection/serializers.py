"""
Detection serializers for IDD Monitor
Validate monitor model files before they are turned back into numpy objects
"""
import numpy as np
from rest_framework import serializers

from transport.services import SOLVERS
from .services import THRESHOLD_METHODS


class NumericArrayField(serializers.Field):
    """Nested lists of finite numbers with a fixed number of dimensions"""

    default_error_messages = {
        'invalid': 'Expected a numeric array.',
        'ndim': 'Expected a {ndim}-dimensional array, got {actual}.',
        'finite': 'Array entries must be finite.',
    }

    def __init__(self, ndim=1, **kwargs):
        self.ndim = ndim
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        try:
            array = np.asarray(data, dtype=float)
        except (TypeError, ValueError):
            self.fail('invalid')
        if array.ndim != self.ndim:
            self.fail('ndim', ndim=self.ndim, actual=array.ndim)
        if not np.all(np.isfinite(array)):
            self.fail('finite')
        return array

    def to_representation(self, value):
        return np.asarray(value, dtype=float).tolist()


class StrictSerializer(serializers.Serializer):
    """Rejects keys that are not declared fields"""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


class ChartPairSerializer(StrictSerializer):
    t2 = serializers.FloatField()
    spe = serializers.FloatField()


class PositivePairSerializer(ChartPairSerializer):
    def validate(self, data):
        for key, value in data.items():
            if not value > 0:
                raise serializers.ValidationError({key: 'Must be greater than 0.'})
        return data


class SolverSerializer(StrictSerializer):
    solver = serializers.ChoiceField(choices=SOLVERS)
    eps_factor = serializers.FloatField(min_value=0, default=5e-3)
    marginal_tol = serializers.FloatField(min_value=0, default=1e-7)
    max_iter = serializers.IntegerField(min_value=1, default=10000)


class BarycenterFileSerializer(StrictSerializer):
    support = NumericArrayField(ndim=2)
    weights = NumericArrayField(ndim=1)


class BasisFileSerializer(StrictSerializer):
    mean_field = NumericArrayField(ndim=2)
    eigenvalues = NumericArrayField(ndim=1)
    components = NumericArrayField(ndim=3)
    K = serializers.IntegerField(min_value=1)

    def validate(self, data):
        r = data['eigenvalues'].shape[0]
        if data['components'].shape[0] != r:
            raise serializers.ValidationError('One component is needed per eigenvalue.')
        if data['components'].shape[1:] != data['mean_field'].shape:
            raise serializers.ValidationError('Components and mean field live on different grids.')
        if data['K'] > r:
            raise serializers.ValidationError({'K': f'K cannot exceed the rank {r}.'})
        if np.any(data['eigenvalues'] <= 0) or np.any(np.diff(data['eigenvalues']) > 0):
            raise serializers.ValidationError({'eigenvalues': 'Eigenvalues must be positive and non-increasing.'})
        return data


class CalibrationFileSerializer(StrictSerializer):
    t2 = NumericArrayField(ndim=1)
    spe = NumericArrayField(ndim=1)


class MonitorModelFileSerializer(StrictSerializer):
    format_version = serializers.IntegerField(min_value=1)
    n0 = serializers.IntegerField(min_value=3)
    alphas = ChartPairSerializer()
    thresholds = PositivePairSerializer()
    threshold_method = serializers.ChoiceField(choices=THRESHOLD_METHODS)
    solver = SolverSerializer()
    barycenter = BarycenterFileSerializer()
    basis = BasisFileSerializer()
    calibration = CalibrationFileSerializer()

    def validate_alphas(self, value):
        for key, alpha in value.items():
            if not 0 < alpha < 1:
                raise serializers.ValidationError({key: 'Must lie in (0, 1).'})
        return value

    def validate(self, data):
        weights = data['barycenter']['weights']
        if data['barycenter']['support'].shape[0] != weights.shape[0]:
            raise serializers.ValidationError('Barycenter support and weights differ in length.')
        if data['basis']['mean_field'].shape != data['barycenter']['support'].shape:
            raise serializers.ValidationError('Basis grid does not match the barycenter support.')
        return data
