from benchmarks.serializers import CalibrationConfigSerializer, validated
from benchmarks.services import cmd_calibrate
from ._base import IDDCommand, load_json


class Command(IDDCommand):
    help = 'Calibrate an IDD model from a stream file or a synthetic stream spec'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Calibration config (JSON)')
        parser.add_argument('--stream', help='Stream file of pre-change batches')
        parser.add_argument('--seed', type=int, help='Seed of the synthetic stream')
        parser.add_argument('--out', required=True, help='Model file to write')
        parser.add_argument('--threads', type=int, default=1)

    def execute_command(self, *args, **options):
        payload = load_json(options['config']) if options['config'] else {}
        if options['stream']:
            payload.pop('stream', None)
            payload['stream_file'] = options['stream']
        config = validated(CalibrationConfigSerializer, payload, 'calibration config')

        model = cmd_calibrate(config, options['out'], seed=options['seed'], workers=options['threads'])
        h_t2, h_spe = model.thresholds
        self.stdout.write(self.style.SUCCESS(
            f"Calibrated on n0={model.n0} batches: K={model.basis.K}, "
            f"h_t2={h_t2:.6g}, h_spe={h_spe:.6g} -> {options['out']}"
        ))
