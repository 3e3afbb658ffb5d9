"""
Benchmark serializers for IDD Monitor
Strict validation of calibration and benchmark configs, plus the printable schema
"""
from rest_framework import serializers

from baselines.services import BASELINES
from detection.serializers import StrictSerializer
from detection.services import THRESHOLD_METHODS
from idd_monitor.exceptions import ConfigError
from synthgen.serializers import StreamSpecSerializer
from transport.services import SOLVERS
from .models import BenchmarkRun

DETECTOR_NAMES = ('idd',) + tuple(BASELINES)


class IDDParamsSerializer(StrictSerializer):
    alpha_t2 = serializers.FloatField(min_value=0, max_value=1, required=False)
    alpha_spe = serializers.FloatField(min_value=0, max_value=1, required=False)
    n_components = serializers.IntegerField(min_value=1, required=False, help_text='Override K')
    variance_fraction = serializers.FloatField(min_value=0, max_value=1, required=False)
    threshold_method = serializers.ChoiceField(choices=THRESHOLD_METHODS, required=False)
    m_atoms = serializers.IntegerField(min_value=2, required=False, help_text='Barycenter atoms')
    barycenter_tol = serializers.FloatField(min_value=0, required=False)
    barycenter_max_iter = serializers.IntegerField(min_value=1, required=False)
    solver = serializers.ChoiceField(choices=SOLVERS, required=False)
    eps_factor = serializers.FloatField(min_value=0, required=False)
    marginal_tol = serializers.FloatField(min_value=0, required=False)
    max_iter = serializers.IntegerField(min_value=1, required=False)


class HotellingParamsSerializer(StrictSerializer):
    alpha = serializers.FloatField(min_value=0, max_value=1, required=False)


class CChartParamsSerializer(StrictSerializer):
    width = serializers.FloatField(min_value=0, default=3.0, help_text='Band half-width in sigma units')


class MultinomialParamsSerializer(StrictSerializer):
    alpha = serializers.FloatField(min_value=0, max_value=1, required=False)
    p0 = serializers.ListField(child=serializers.FloatField(min_value=0), required=False)


DETECTOR_PARAMS = {
    'idd': IDDParamsSerializer,
    'hotelling': HotellingParamsSerializer,
    'c_chart': CChartParamsSerializer,
    'multinomial': MultinomialParamsSerializer,
}


class DetectorEntrySerializer(StrictSerializer):
    name = serializers.ChoiceField(choices=DETECTOR_NAMES)
    label = serializers.CharField(required=False, help_text='Name used in reports; defaults to name')
    params = serializers.DictField(default=dict)

    def validate(self, data):
        params = DETECTOR_PARAMS[data['name']](data=data['params'])
        if not params.is_valid():
            raise serializers.ValidationError({'params': params.errors})
        data['params'] = dict(params.validated_data)
        data.setdefault('label', data['name'])
        return data


class OutputSerializer(StrictSerializer):
    report = serializers.CharField(required=False, help_text='JSON report path')
    csv = serializers.CharField(required=False, help_text='Per-cell CSV path')
    tradeoff_csv = serializers.CharField(required=False, help_text='Trade-off curve CSV path')


class BenchmarkConfigSerializer(StrictSerializer):
    name = serializers.CharField(default='benchmark')
    streams = StreamSpecSerializer(many=True)
    detectors = DetectorEntrySerializer(many=True)
    target_arl0 = serializers.ListField(child=serializers.FloatField(min_value=1), default=[100.0])
    replications = serializers.IntegerField(min_value=1, default=10, help_text='Changed-stream replications R')
    null_replications = serializers.IntegerField(min_value=1, required=False,
                                                 help_text='Null replications for ARL0 matching; defaults to R')
    calibration_batches = serializers.IntegerField(min_value=3, default=100, help_text='n0')
    holdout_batches = serializers.IntegerField(min_value=0, default=0,
                                               help_text='Held-out pre-change batches for thresholds')
    horizon = serializers.IntegerField(min_value=1, required=False, help_text='Null censoring horizon H')
    horizon_factor = serializers.FloatField(min_value=1, default=10.0, help_text='H = factor x target ARL0')
    match_arl0 = serializers.BooleanField(default=True)
    arl_tolerance = serializers.FloatField(min_value=0, required=False)
    scale_grid = serializers.ListField(child=serializers.FloatField(min_value=0), required=False,
                                       help_text='Threshold multipliers for trade-off curves')
    seed = serializers.IntegerField(min_value=0, default=0)
    threads = serializers.IntegerField(min_value=1, default=1)
    output = OutputSerializer(required=False)

    def validate_streams(self, value):
        if not value:
            raise serializers.ValidationError('At least one stream spec is required.')
        return value

    def validate_detectors(self, value):
        if not value:
            raise serializers.ValidationError('At least one detector is required.')
        labels = [entry['label'] for entry in value]
        if len(set(labels)) != len(labels):
            raise serializers.ValidationError('Detector labels must be unique.')
        return value

    def validate(self, data):
        n0 = data['calibration_batches']
        for target in data['target_arl0']:
            if target <= 1:
                raise serializers.ValidationError({'target_arl0': 'Targets must exceed 1.'})
        if data.get('horizon') is not None and data['horizon'] < max(data['target_arl0']):
            raise serializers.ValidationError({'horizon': 'Horizon must be at least the largest target ARL0.'})
        if n0 < 3:
            raise serializers.ValidationError({'calibration_batches': 'Need at least 3 batches.'})
        return data


class CalibrationConfigSerializer(StrictSerializer):
    """Config of the calibrate command: a spec or a stream file plus IDD parameters"""
    stream = StreamSpecSerializer(required=False)
    stream_file = serializers.CharField(required=False)
    calibration_batches = serializers.IntegerField(min_value=3, default=100)
    holdout_batches = serializers.IntegerField(min_value=0, default=0)
    detector = IDDParamsSerializer(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate(self, data):
        if ('stream' in data) == ('stream_file' in data):
            raise serializers.ValidationError('Give exactly one of stream and stream_file.')
        return data


class BenchmarkRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = BenchmarkRun
        fields = [
            'id', 'name', 'status', 'master_seed', 'config', 'report',
            'failed_points', 'error_message', 'created_at', 'completed_at',
        ]
        read_only_fields = ['id', 'created_at', 'completed_at']


def validated(serializer_class, payload: dict, label: str) -> dict:
    serializer = serializer_class(data=payload)
    if not serializer.is_valid():
        raise ConfigError(f"Invalid {label}: {serializer.errors}")
    return serializer.validated_data


def describe_schema(serializer) -> dict:
    """Field tree of a serializer: type, required flag, default and help text"""
    schema = {}
    for name, field in serializer.fields.items():
        entry = {'type': type(field).__name__, 'required': field.required}
        if field.default is not serializers.empty:
            entry['default'] = field.default() if callable(field.default) else field.default
        if field.help_text:
            entry['help'] = str(field.help_text)
        if isinstance(field, serializers.ChoiceField):
            entry['choices'] = list(field.choices)
        if isinstance(field, serializers.ListSerializer):
            entry['items'] = describe_schema(field.child)
        elif isinstance(field, serializers.Serializer):
            entry['fields'] = describe_schema(field)
        if name == 'params' and isinstance(serializer, DetectorEntrySerializer):
            entry['by_detector'] = {key: describe_schema(cls()) for key, cls in DETECTOR_PARAMS.items()}
        schema[name] = entry
    return schema
