"""
Synthetic stream serializers for IDD Monitor
"""
from rest_framework import serializers

from detection.serializers import StrictSerializer
from idd_monitor.exceptions import ConfigError
from .services import DEFAULT_ORDINAL_P0, SCENARIOS, StreamSpec


class StreamSpecSerializer(StrictSerializer):
    """Stream spec as written in simulation and benchmark configs"""
    scenario = serializers.ChoiceField(choices=SCENARIOS, help_text='Stream family')
    dim = serializers.IntegerField(min_value=1, default=2)
    batch_size = serializers.IntegerField(min_value=2, default=100, help_text='Points per batch N')
    length = serializers.IntegerField(min_value=1, default=200, help_text='Batches T')
    change_point = serializers.IntegerField(min_value=1, default=100, help_text='Last pre-change batch')
    seed = serializers.IntegerField(min_value=0, default=0)

    n_components = serializers.IntegerField(min_value=1, default=4)
    concentration = serializers.FloatField(min_value=0, default=20.0)
    mixture_weights = serializers.ListField(child=serializers.FloatField(min_value=0), required=False)
    beta_alpha = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), required=False)
    beta_beta = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), required=False)
    epsilon = serializers.FloatField(min_value=0, default=0.3)
    smoothness = serializers.FloatField(default=5.0)
    n_terms = serializers.IntegerField(min_value=1, default=3)
    delta_loc = serializers.FloatField(default=0.15)
    delta_mm = serializers.FloatField(default=2.0)
    rho = serializers.FloatField(default=0.6)

    sigma = serializers.FloatField(default=0.5)
    delta = serializers.FloatField(default=0.5)

    lambda0 = serializers.FloatField(default=5.0)
    alpha_mix = serializers.FloatField(default=0.05)
    k_star = serializers.IntegerField(default=25)
    heavy_tail = serializers.BooleanField(default=False)
    lambda_tail = serializers.FloatField(default=20.0)
    mean_matched = serializers.BooleanField(default=True)

    p0 = serializers.ListField(child=serializers.FloatField(min_value=0), default=list(DEFAULT_ORDINAL_P0))
    ramp_length = serializers.IntegerField(min_value=1, default=10)

    def validate(self, data):
        values = {
            key: tuple(map(tuple, value)) if key in ('beta_alpha', 'beta_beta')
            else tuple(value) if isinstance(value, list) else value
            for key, value in data.items()
        }
        try:
            data['spec'] = StreamSpec(**values)
        except ConfigError as exc:
            raise serializers.ValidationError(str(exc))
        return data


def stream_spec_from_dict(payload: dict) -> StreamSpec:
    serializer = StreamSpecSerializer(data=payload)
    if not serializer.is_valid():
        raise ConfigError(f"Invalid stream spec: {serializer.errors}")
    return serializer.validated_data['spec']
